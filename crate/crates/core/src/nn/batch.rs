//! Dense activation storage shared by every layer.
//!
//! Activations live in a `(sample, position, channel)` row-major layout.
//! Fully connected stages view the same buffer as `(sample, 1, features)`,
//! so flattening is a metadata change and batch normalization always
//! normalizes over the channel axis regardless of stage.

use num_traits::{Float, NumAssignOps};

/// Scalar the engine runs on: `f32` in production, `f64` where tests need
/// headroom for finite-difference comparisons.
pub trait Scalar: Float + NumAssignOps + Send + Sync + std::fmt::Debug + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch<F> {
    n: usize,
    len: usize,
    ch: usize,
    data: Vec<F>,
}

impl<F: Scalar> Batch<F> {
    pub fn zeroed(n: usize, len: usize, ch: usize) -> Self {
        Batch { n, len, ch, data: vec![F::zero(); n * len * ch] }
    }

    pub fn from_vec(n: usize, len: usize, ch: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), n * len * ch, "batch buffer does not match its shape");
        Batch { n, len, ch, data }
    }

    /// Stacks feature rows into a `(n, d, 1)` batch, the input layout of the
    /// first convolution.
    pub fn from_rows(rows: &[&[f32]]) -> Self {
        assert!(!rows.is_empty(), "cannot build an empty batch");
        let d = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            assert_eq!(row.len(), d, "ragged feature rows");
            data.extend(row.iter().map(|&v| F::of(f64::from(v))));
        }
        Batch { n: rows.len(), len: d, ch: 1, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn ch(&self) -> usize {
        self.ch
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Elements per sample.
    pub fn feature_size(&self) -> usize {
        self.len * self.ch
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn sample(&self, i: usize) -> &[F] {
        let stride = self.feature_size();
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [F] {
        let stride = self.feature_size();
        &mut self.data[i * stride..(i + 1) * stride]
    }

    /// Reinterprets the per-sample shape without touching the buffer.
    pub fn reshaped(self, len: usize, ch: usize) -> Self {
        assert_eq!(self.len * self.ch, len * ch, "reshape must preserve element count");
        Batch { n: self.n, len, ch, data: self.data }
    }
}

/// Index of the largest element, first occurrence on ties.
pub fn argmax<F: Scalar>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
