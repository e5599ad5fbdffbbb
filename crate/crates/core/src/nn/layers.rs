//! The non-convolution layers.

use rand::{Rng, RngCore};
use rayon::prelude::*;

use super::batch::{Batch, Scalar};
use crate::{Error, Result};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.9;

/// Batch normalization over the channel axis. Training batches use their own
/// statistics and refresh the moving ones; inference uses the moving
/// statistics alone. Moving mean/variance are tracked state, not trainable.
#[derive(Clone, Debug)]
pub struct BatchNorm<F> {
    ch: usize,
    pub(crate) gamma: Vec<F>,
    pub(crate) beta: Vec<F>,
    pub(crate) moving_mean: Vec<F>,
    pub(crate) moving_var: Vec<F>,
    pub(crate) dgamma: Vec<F>,
    pub(crate) dbeta: Vec<F>,
    cache: Option<BnCache<F>>,
}

#[derive(Clone, Debug)]
struct BnCache<F> {
    xhat: Vec<F>,
    inv_std: Vec<F>,
}

impl<F: Scalar> BatchNorm<F> {
    pub fn new(ch: usize) -> Self {
        BatchNorm {
            ch,
            gamma: vec![F::one(); ch],
            beta: vec![F::zero(); ch],
            moving_mean: vec![F::zero(); ch],
            moving_var: vec![F::one(); ch],
            dgamma: vec![F::zero(); ch],
            dbeta: vec![F::zero(); ch],
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.ch
    }

    fn check(&self, x: &Batch<F>) -> Result<()> {
        if x.ch() != self.ch {
            return Err(Error::ShapeMismatch(format!(
                "batch norm over {} channels fed {} channels",
                self.ch,
                x.ch()
            )));
        }
        Ok(())
    }

    pub fn forward_train(&mut self, mut x: Batch<F>) -> Result<Batch<F>> {
        self.check(&x)?;
        if x.n() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "batch normalization needs at least 2 samples in training mode, got {}",
                x.n()
            )));
        }
        let ch = self.ch;
        let count = F::of((x.n() * x.len()) as f64);

        let mut mean = vec![F::zero(); ch];
        for row in x.data().chunks_exact(ch) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m = *m / count;
        }

        let mut var = vec![F::zero(); ch];
        for row in x.data().chunks_exact(ch) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        for s in var.iter_mut() {
            *s = *s / count;
        }

        let eps = F::of(BN_EPS);
        let inv_std: Vec<F> = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();

        let momentum = F::of(BN_MOMENTUM);
        let blend = F::one() - momentum;
        for c in 0..ch {
            self.moving_mean[c] = momentum * self.moving_mean[c] + blend * mean[c];
            self.moving_var[c] = momentum * self.moving_var[c] + blend * var[c];
        }

        let mut xhat = Vec::with_capacity(x.data().len());
        for row in x.data_mut().chunks_exact_mut(ch) {
            for c in 0..ch {
                let h = (row[c] - mean[c]) * inv_std[c];
                xhat.push(h);
                row[c] = self.gamma[c] * h + self.beta[c];
            }
        }
        self.cache = Some(BnCache { xhat, inv_std });
        Ok(x)
    }

    pub fn infer(&self, mut x: Batch<F>) -> Result<Batch<F>> {
        self.check(&x)?;
        let eps = F::of(BN_EPS);
        let scale: Vec<F> = (0..self.ch)
            .map(|c| self.gamma[c] * (self.moving_var[c] + eps).sqrt().recip())
            .collect();
        let shift: Vec<F> = (0..self.ch)
            .map(|c| self.beta[c] - self.moving_mean[c] * scale[c])
            .collect();
        for row in x.data_mut().chunks_exact_mut(self.ch) {
            for c in 0..self.ch {
                row[c] = row[c] * scale[c] + shift[c];
            }
        }
        Ok(x)
    }

    pub fn backward(&mut self, mut dy: Batch<F>) -> Result<Batch<F>> {
        let BnCache { xhat, inv_std } = self
            .cache
            .take()
            .ok_or_else(|| Error::ShapeMismatch("batch norm backward without forward".into()))?;
        let ch = self.ch;
        let count = F::of((dy.n() * dy.len()) as f64);

        let mut dbeta = vec![F::zero(); ch];
        let mut dgamma = vec![F::zero(); ch];
        for (row, hrow) in dy.data().chunks_exact(ch).zip(xhat.chunks_exact(ch)) {
            for c in 0..ch {
                dbeta[c] += row[c];
                dgamma[c] += row[c] * hrow[c];
            }
        }

        for (row, hrow) in dy.data_mut().chunks_exact_mut(ch).zip(xhat.chunks_exact(ch)) {
            for c in 0..ch {
                let scale = self.gamma[c] * inv_std[c] / count;
                row[c] = scale * (count * row[c] - dbeta[c] - hrow[c] * dgamma[c]);
            }
        }
        self.dgamma = dgamma;
        self.dbeta = dbeta;
        Ok(dy)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn forward_train<F: Scalar>(&mut self, mut x: Batch<F>) -> Batch<F> {
        self.mask.clear();
        self.mask.reserve(x.data().len());
        for v in x.data_mut() {
            self.mask.push(*v > F::zero());
            if *v < F::zero() {
                *v = F::zero();
            }
        }
        x
    }

    pub fn infer<F: Scalar>(&self, mut x: Batch<F>) -> Batch<F> {
        for v in x.data_mut() {
            if *v < F::zero() {
                *v = F::zero();
            }
        }
        x
    }

    pub fn backward<F: Scalar>(&mut self, mut dy: Batch<F>) -> Batch<F> {
        for (v, &keep) in dy.data_mut().iter_mut().zip(&self.mask) {
            if !keep {
                *v = F::zero();
            }
        }
        dy
    }
}

/// Window-2, stride-2 max pooling; an odd trailing element is dropped.
/// Gradient flows to the argmax, first occurrence on ties.
#[derive(Clone, Debug, Default)]
pub struct MaxPool {
    // Per output element: winning flat index within its sample.
    argmax: Vec<u32>,
    in_len: usize,
}

impl MaxPool {
    fn pool<F: Scalar>(
        x: &Batch<F>,
        mut record: Option<&mut Vec<u32>>,
    ) -> Result<Batch<F>> {
        if x.len() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "max pooling needs length >= 2, got {}",
                x.len()
            )));
        }
        let out_len = x.len() / 2;
        let ch = x.ch();
        let mut out = Batch::zeroed(x.n(), out_len, ch);
        for i in 0..x.n() {
            let xs = x.sample(i);
            for xo in 0..out_len {
                let a = 2 * xo * ch;
                let b = a + ch;
                for c in 0..ch {
                    let (va, vb) = (xs[a + c], xs[b + c]);
                    let (win, idx) = if va >= vb { (va, a + c) } else { (vb, b + c) };
                    out.sample_mut(i)[xo * ch + c] = win;
                    if let Some(rec) = record.as_deref_mut() {
                        rec.push(idx as u32);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn forward_train<F: Scalar>(&mut self, x: Batch<F>) -> Result<Batch<F>> {
        self.argmax.clear();
        self.in_len = x.len();
        Self::pool(&x, Some(&mut self.argmax))
    }

    pub fn infer<F: Scalar>(&self, x: Batch<F>) -> Result<Batch<F>> {
        Self::pool(&x, None)
    }

    pub fn backward<F: Scalar>(&mut self, dy: Batch<F>) -> Batch<F> {
        let mut dx = Batch::zeroed(dy.n(), self.in_len, dy.ch());
        let stride_out = dy.feature_size();
        for i in 0..dy.n() {
            let dys = dy.sample(i);
            let dxs = dx.sample_mut(i);
            let wins = &self.argmax[i * stride_out..(i + 1) * stride_out];
            for (g, &idx) in dys.iter().zip(wins) {
                dxs[idx as usize] += *g;
            }
        }
        dx
    }
}

/// Inverted dropout: surviving units are scaled by `1/(1-rate)` during
/// training so inference is the identity.
#[derive(Clone, Debug)]
pub struct Dropout<F> {
    rate: f64,
    mask: Option<Vec<F>>,
}

impl<F: Scalar> Dropout<F> {
    pub fn new(rate: f64) -> Self {
        debug_assert!((0.0..1.0).contains(&rate));
        Dropout { rate, mask: None }
    }

    pub fn forward_train(&mut self, mut x: Batch<F>, rng: &mut dyn RngCore) -> Batch<F> {
        if self.rate == 0.0 {
            self.mask = None;
            return x;
        }
        let keep = F::of(1.0 / (1.0 - self.rate));
        let mut mask = Vec::with_capacity(x.data().len());
        for v in x.data_mut() {
            let m = if rng.gen::<f64>() < self.rate { F::zero() } else { keep };
            mask.push(m);
            *v = *v * m;
        }
        self.mask = Some(mask);
        x
    }

    pub fn infer(&self, x: Batch<F>) -> Batch<F> {
        x
    }

    pub fn backward(&mut self, mut dy: Batch<F>) -> Batch<F> {
        if let Some(mask) = &self.mask {
            for (v, &m) in dy.data_mut().iter_mut().zip(mask) {
                *v = *v * m;
            }
        }
        dy
    }
}

/// Reshapes `(len, ch)` activations to `(1, len*ch)`; the buffer layout is
/// already flat, so only the bookkeeping changes.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    shape: (usize, usize),
}

impl Flatten {
    pub fn forward_train<F: Scalar>(&mut self, x: Batch<F>) -> Batch<F> {
        self.shape = (x.len(), x.ch());
        let flat = x.feature_size();
        x.reshaped(1, flat)
    }

    pub fn infer<F: Scalar>(&self, x: Batch<F>) -> Batch<F> {
        let flat = x.feature_size();
        x.reshaped(1, flat)
    }

    pub fn backward<F: Scalar>(&self, dy: Batch<F>) -> Batch<F> {
        dy.reshaped(self.shape.0, self.shape.1)
    }
}

#[derive(Clone, Debug)]
pub struct Dense<F> {
    pub(crate) in_dim: usize,
    pub(crate) units: usize,
    pub(crate) w: Vec<F>, // [units][in_dim]
    pub(crate) b: Vec<F>,
    pub(crate) dw: Vec<F>,
    pub(crate) db: Vec<F>,
    cache: Option<Batch<F>>,
}

impl<F: Scalar> Dense<F> {
    pub fn new(in_dim: usize, units: usize) -> Self {
        Dense {
            in_dim,
            units,
            w: vec![F::zero(); units * in_dim],
            b: vec![F::zero(); units],
            dw: vec![F::zero(); units * in_dim],
            db: vec![F::zero(); units],
            cache: None,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_dim
    }

    fn compute(&self, x: &Batch<F>) -> Result<Batch<F>> {
        if x.feature_size() != self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "dense layer expects {} inputs, got {}",
                self.in_dim,
                x.feature_size()
            )));
        }
        let (d, u) = (self.in_dim, self.units);
        let w = &self.w;
        let b = &self.b;
        let mut out = Batch::zeroed(x.n(), 1, u);
        out.data_mut()
            .par_chunks_mut(u)
            .zip(x.data().par_chunks(d))
            .for_each(|(ys, xs)| {
                for (k, y) in ys.iter_mut().enumerate() {
                    let wrow = &w[k * d..][..d];
                    let mut acc = b[k];
                    for c in 0..d {
                        acc += wrow[c] * xs[c];
                    }
                    *y = acc;
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
            .ok_or_else(|| Error::ShapeMismatch("dense backward without forward".into()))?;
        let (d, u) = (self.in_dim, self.units);
        let n = x.n();

        let w = &self.w;
        let mut dx = Batch::zeroed(n, x.len(), x.ch());
        dx.data_mut()
            .par_chunks_mut(d)
            .zip(dy.data().par_chunks(u))
            .for_each(|(dxs, dys)| {
                for (k, &g) in dys.iter().enumerate() {
                    if g == F::zero() {
                        continue;
                    }
                    let wrow = &w[k * d..][..d];
                    for c in 0..d {
                        dxs[c] += g * wrow[c];
                    }
                }
            });

        let x_ref = &x;
        let dy_ref = &dy;
        self.dw
            .par_chunks_mut(d)
            .zip(self.db.par_iter_mut())
            .enumerate()
            .for_each(|(k, (dwk, dbk))| {
                for v in dwk.iter_mut() {
                    *v = F::zero();
                }
                *dbk = F::zero();
                for i in 0..n {
                    let g = dy_ref.sample(i)[k];
                    if g == F::zero() {
                        continue;
                    }
                    *dbk += g;
                    let xs = x_ref.sample(i);
                    for c in 0..d {
                        dwk[c] += g * xs[c];
                    }
                }
            });

        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    fn randn_batch(rng: &mut ChaCha20Rng, n: usize, len: usize, ch: usize, scale: f64) -> Batch<f64> {
        let data = (0..n * len * ch)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) * scale)
            .collect();
        Batch::from_vec(n, len, ch, data)
    }

    #[test]
    fn relu_clamps_and_gates_gradient() {
        let mut relu = Relu::default();
        let y = relu.forward_train(Batch::from_vec(1, 4, 1, vec![-2.0, 3.0, 0.0, 5.0]));
        assert_eq!(y.sample(0), &[0.0, 3.0, 0.0, 5.0]);
        let dx = relu.backward(Batch::from_vec(1, 4, 1, vec![1.0, 1.0, 1.0, 1.0]));
        assert_eq!(dx.sample(0), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn maxpool_floor_semantics_and_ties() {
        let mut pool = MaxPool::default();
        let y = pool
            .forward_train(Batch::from_vec(1, 5, 1, vec![3.0, 1.0, 4.0, 1.0, 5.0]))
            .unwrap();
        assert_eq!(y.sample(0), &[3.0, 4.0]);

        // Tie: gradient must go to the first element of the window.
        let mut pool = MaxPool::default();
        pool.forward_train(Batch::from_vec(1, 2, 1, vec![2.0, 2.0])).unwrap();
        let dx = pool.backward(Batch::from_vec(1, 1, 1, vec![7.0]));
        assert_eq!(dx.sample(0), &[7.0, 0.0]);

        assert!(pool.infer(Batch::from_vec(1, 1, 1, vec![1.0f64])).is_err());
    }

    #[test]
    fn maxpool_gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let x = randn_batch(&mut rng, 2, 6, 3, 1.0);
        let coeffs: Vec<f64> = (0..2 * 3 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |x: &Batch<f64>| -> f64 {
            let y = MaxPool::default().forward_train(x.clone()).unwrap();
            y.data().iter().zip(&coeffs).map(|(a, c)| a * c).sum()
        };
        let mut pool = MaxPool::default();
        let y = pool.forward_train(x.clone()).unwrap();
        let dy = Batch::from_vec(y.n(), y.len(), y.ch(), coeffs.clone());
        let dx = pool.backward(dy);
        let h = 1e-6;
        for j in 0..x.data().len() {
            let mut probe = x.clone();
            probe.data_mut()[j] += h;
            let up = loss(&probe);
            probe.data_mut()[j] -= 2.0 * h;
            let down = loss(&probe);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - dx.data()[j]).abs() < 1e-6, "dx[{j}]: {fd} vs {}", dx.data()[j]);
        }
    }

    #[test]
    fn batchnorm_normalizes_per_channel() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        // Spread-out inputs keep the epsilon term negligible next to the
        // batch variance.
        let x = randn_batch(&mut rng, 8, 50, 3, 10.0);
        let mut bn = BatchNorm::<f64>::new(3);
        let y = bn.forward_train(x).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = y.data().iter().skip(c).step_by(3).copied().collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-6, "channel {c} mean {m}");
            assert!((v - 1.0).abs() < 1e-6, "channel {c} variance {v}");
        }
    }

    #[test]
    fn batchnorm_applies_affine_parameters() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let x = randn_batch(&mut rng, 4, 10, 2, 10.0);
        let mut plain = BatchNorm::<f64>::new(2);
        let base = plain.forward_train(x.clone()).unwrap();
        let mut scaled = BatchNorm::<f64>::new(2);
        scaled.gamma = vec![2.0; 2];
        scaled.beta = vec![3.0; 2];
        let out = scaled.forward_train(x).unwrap();
        for (a, b) in out.data().iter().zip(base.data()) {
            assert!((a - (2.0 * b + 3.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn batchnorm_rejects_single_sample_training_batches() {
        let mut bn = BatchNorm::<f64>::new(1);
        let err = bn.forward_train(Batch::from_vec(1, 4, 1, vec![1.0, 2.0, 3.0, 4.0]));
        assert!(matches!(err, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn batchnorm_inference_uses_moving_statistics() {
        let mut bn = BatchNorm::<f64>::new(1);
        bn.moving_mean = vec![5.0];
        bn.moving_var = vec![4.0];
        bn.gamma = vec![3.0];
        bn.beta = vec![1.0];
        let y = bn.infer(Batch::from_vec(1, 1, 1, vec![7.0])).unwrap();
        // 3 * (7-5)/sqrt(4+1e-5) + 1
        let want = 3.0 * 2.0 / (4.0f64 + 1e-5).sqrt() + 1.0;
        assert!((y.sample(0)[0] - want).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let x = randn_batch(&mut rng, 4, 5, 2, 2.0);
        let mut bn = BatchNorm::<f64>::new(2);
        bn.gamma = vec![1.3, 0.7];
        bn.beta = vec![0.2, -0.4];
        let coeffs: Vec<f64> = (0..x.data().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |bn: &BatchNorm<f64>, x: &Batch<f64>| -> f64 {
            let mut probe = bn.clone();
            let y = probe.forward_train(x.clone()).unwrap();
            y.data().iter().zip(&coeffs).map(|(a, c)| a * c).sum()
        };

        let y = bn.forward_train(x.clone()).unwrap();
        let dy = Batch::from_vec(y.n(), y.len(), y.ch(), coeffs.clone());
        let dx = bn.backward(dy).unwrap();

        let h = 1e-5;
        for j in 0..x.data().len() {
            let mut probe = x.clone();
            probe.data_mut()[j] += h;
            let up = loss(&bn, &probe);
            probe.data_mut()[j] -= 2.0 * h;
            let down = loss(&bn, &probe);
            let fd = (up - down) / (2.0 * h);
            let got = dx.data()[j];
            let denom = fd.abs().max(got.abs()).max(1e-4);
            assert!((fd - got).abs() / denom < 1e-5, "dx[{j}]: {fd} vs {got}");
        }
        for (j, want) in [(0usize, &bn.dgamma), (1, &bn.dbeta)].map(|(k, g)| (k, g.clone())) {
            for c in 0..2 {
                let mut probe = bn.clone();
                if j == 0 {
                    probe.gamma[c] += h;
                } else {
                    probe.beta[c] += h;
                }
                let up = loss(&probe, &x);
                if j == 0 {
                    probe.gamma[c] -= 2.0 * h;
                } else {
                    probe.beta[c] -= 2.0 * h;
                }
                let down = loss(&probe, &x);
                let fd = (up - down) / (2.0 * h);
                assert!((fd - want[c]).abs() < 1e-5, "param {j} channel {c}");
            }
        }
    }

    #[test]
    fn dropout_zero_rate_and_inference_are_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = Batch::from_vec(1, 4, 1, vec![1.0f32, 2.0, 3.0, 4.0]);
        let mut drop = Dropout::new(0.0);
        assert_eq!(drop.forward_train(x.clone(), &mut rng), x);
        let drop = Dropout::new(0.9);
        assert_eq!(drop.infer(x.clone()), x);
    }

    #[test]
    fn dropout_zero_fraction_is_statistically_correct() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let n = 1_000_000;
        let x = Batch::from_vec(1, n, 1, vec![1.0f32; n]);
        let mut drop = Dropout::new(0.1);
        let y = drop.forward_train(x, &mut rng);
        let zeros = y.data().iter().filter(|v| **v == 0.0).count();
        let frac = zeros as f64 / n as f64;
        assert!((frac - 0.1).abs() < 0.002, "zero fraction {frac}");
        // Survivors carry the inverse keep probability.
        let survivor = *y.data().iter().find(|v| **v != 0.0).unwrap();
        assert!((f64::from(survivor) - 1.0 / 0.9).abs() < 1e-6);
    }

    #[test]
    fn dense_identity_passthrough() {
        let mut dense = Dense::<f64>::new(3, 3);
        for i in 0..3 {
            dense.w[i * 3 + i] = 1.0;
        }
        let x = Batch::from_vec(2, 1, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = dense.infer(x.clone()).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let mut dense = Dense::<f64>::new(4, 3);
        for v in dense.w.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in dense.b.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        let x = randn_batch(&mut rng, 3, 1, 4, 1.0);
        let coeffs: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |dense: &Dense<f64>, x: &Batch<f64>| -> f64 {
            let y = dense.infer(x.clone()).unwrap();
            y.data().iter().zip(&coeffs).map(|(a, c)| a * c).sum()
        };
        let y = dense.forward_train(x.clone()).unwrap();
        let dy = Batch::from_vec(y.n(), 1, 3, coeffs.clone());
        let dx = dense.backward(dy).unwrap();
        let h = 1e-6;
        for j in 0..dense.w.len() {
            let mut probe = dense.clone();
            probe.w[j] += h;
            let up = loss(&probe, &x);
            probe.w[j] -= 2.0 * h;
            let down = loss(&probe, &x);
            assert!(((up - down) / (2.0 * h) - dense.dw[j]).abs() < 1e-6, "dw[{j}]");
        }
        for j in 0..x.data().len() {
            let mut probe = x.clone();
            probe.data_mut()[j] += h;
            let up = loss(&dense, &probe);
            probe.data_mut()[j] -= 2.0 * h;
            let down = loss(&dense, &probe);
            assert!(((up - down) / (2.0 * h) - dx.data()[j]).abs() < 1e-6, "dx[{j}]");
        }
    }

    #[test]
    fn flatten_round_trips_shapes() {
        let mut flat = Flatten::default();
        let x = Batch::from_vec(2, 3, 2, (0..12).map(f64::from).collect());
        let y = flat.forward_train(x.clone());
        assert_eq!((y.len(), y.ch()), (1, 6));
        let back = flat.backward(y);
        assert_eq!(back, x);
    }
}
