//! 1-D convolution over `(position, channel)` activations.
//!
//! Weights are stored out-channel-major (`[out][kernel][in]`) so both the
//! forward dot products and the weight-gradient accumulation walk contiguous
//! memory. Parallelism never splits a single reduction: the forward and
//! input-gradient passes split across samples, the weight-gradient pass
//! across output channels, so results do not depend on the thread count.

use rayon::prelude::*;

use super::batch::{Batch, Scalar};
use super::spec::Padding;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Conv1d<F> {
    pub(crate) kernel: usize,
    pub(crate) in_ch: usize,
    pub(crate) out_ch: usize,
    padding: Padding,
    pub(crate) w: Vec<F>,
    pub(crate) b: Vec<F>,
    pub(crate) dw: Vec<F>,
    pub(crate) db: Vec<F>,
    cache: Option<Batch<F>>,
}

impl<F: Scalar> Conv1d<F> {
    pub fn new(kernel: usize, in_ch: usize, out_ch: usize, padding: Padding) -> Self {
        Conv1d {
            kernel,
            in_ch,
            out_ch,
            padding,
            w: vec![F::zero(); out_ch * kernel * in_ch],
            b: vec![F::zero(); out_ch],
            dw: vec![F::zero(); out_ch * kernel * in_ch],
            db: vec![F::zero(); out_ch],
            cache: None,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.kernel * self.in_ch
    }

    fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => (self.kernel - 1) / 2,
            Padding::Valid => 0,
        }
    }

    fn out_len(&self, in_len: usize) -> Result<usize> {
        match self.padding {
            Padding::Same => Ok(in_len),
            Padding::Valid => {
                if in_len < self.kernel {
                    return Err(Error::ShapeMismatch(format!(
                        "convolution input length {in_len} is shorter than the kernel ({})",
                        self.kernel
                    )));
                }
                Ok(in_len - self.kernel + 1)
            }
        }
    }

    fn compute(&self, x: &Batch<F>) -> Result<Batch<F>> {
        if x.ch() != self.in_ch {
            return Err(Error::ShapeMismatch(format!(
                "convolution expects {} input channels, got {}",
                self.in_ch,
                x.ch()
            )));
        }
        let in_len = x.len();
        let out_len = self.out_len(in_len)?;
        let (m, ci, co) = (self.kernel, self.in_ch, self.out_ch);
        let pad = self.pad() as isize;
        let w = &self.w;
        let b = &self.b;
        let mut out = Batch::zeroed(x.n(), out_len, co);
        out.data_mut()
            .par_chunks_mut(out_len * co)
            .zip(x.data().par_chunks(in_len * ci))
            .for_each(|(ys, xs)| {
                for xo in 0..out_len {
                    let base = xo as isize - pad;
                    let yrow = &mut ys[xo * co..][..co];
                    for (oc, y) in yrow.iter_mut().enumerate() {
                        let wrow = &w[oc * m * ci..][..m * ci];
                        let mut acc = b[oc];
                        for s in 0..m {
                            let ix = base + s as isize;
                            if ix < 0 || ix >= in_len as isize {
                                continue;
                            }
                            let xr = &xs[ix as usize * ci..][..ci];
                            let wr = &wrow[s * ci..][..ci];
                            for c in 0..ci {
                                acc += wr[c] * xr[c];
                            }
                        }
                        *y = acc;
                    }
                }
            });
        Ok(out)
    }

    pub fn forward_train(&mut self, x: Batch<F>) -> Result<Batch<F>> {
        let y = self.compute(&x)?;
        self.cache = Some(x);
        Ok(y)
    }

    pub fn infer(&self, x: Batch<F>) -> Result<Batch<F>> {
        self.compute(&x)
    }

    pub fn backward(&mut self, dy: Batch<F>) -> Result<Batch<F>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::ShapeMismatch("convolution backward without forward".into()))?;
        let in_len = x.len();
        let out_len = dy.len();
        let (m, ci, co) = (self.kernel, self.in_ch, self.out_ch);
        let pad = self.pad() as isize;
        let n = x.n();

        let w = &self.w;
        let mut dx = Batch::zeroed(n, in_len, ci);
        dx.data_mut()
            .par_chunks_mut(in_len * ci)
            .zip(dy.data().par_chunks(out_len * co))
            .for_each(|(dxs, dys)| {
                for xo in 0..out_len {
                    let base = xo as isize - pad;
                    let drow = &dys[xo * co..][..co];
                    for (oc, &g) in drow.iter().enumerate() {
                        if g == F::zero() {
                            continue;
                        }
                        let wrow = &w[oc * m * ci..][..m * ci];
                        for s in 0..m {
                            let ix = base + s as isize;
                            if ix < 0 || ix >= in_len as isize {
                                continue;
                            }
                            let dxr = &mut dxs[ix as usize * ci..][..ci];
                            let wr = &wrow[s * ci..][..ci];
                            for c in 0..ci {
                                dxr[c] += g * wr[c];
                            }
                        }
                    }
                }
            });

        let x_ref = &x;
        let dy_ref = &dy;
        self.dw
            .par_chunks_mut(m * ci)
            .zip(self.db.par_iter_mut())
            .enumerate()
            .for_each(|(oc, (dwo, dbo))| {
                for v in dwo.iter_mut() {
                    *v = F::zero();
                }
                *dbo = F::zero();
                for i in 0..n {
                    let xs = x_ref.sample(i);
                    let dys = dy_ref.sample(i);
                    for xo in 0..out_len {
                        let g = dys[xo * co + oc];
                        if g == F::zero() {
                            continue;
                        }
                        *dbo += g;
                        let base = xo as isize - pad;
                        for s in 0..m {
                            let ix = base + s as isize;
                            if ix < 0 || ix >= in_len as isize {
                                continue;
                            }
                            let xr = &xs[ix as usize * ci..][..ci];
                            let dr = &mut dwo[s * ci..][..ci];
                            for c in 0..ci {
                                dr[c] += g * xr[c];
                            }
                        }
                    }
                }
            });

        Ok(dx)
    }
}
