//! Runtime model: a layer chain instantiated from a `ModelSpec`.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::batch::{argmax, Batch, Scalar};
use super::conv::Conv1d;
use super::layers::{BatchNorm, Dense, Dropout, Flatten, MaxPool, Relu};
use super::spec::{LayerSpec, ModelSpec};
use crate::Result;

#[derive(Clone, Debug)]
enum Layer<F> {
    Conv(Conv1d<F>),
    Norm(BatchNorm<F>),
    Relu(Relu),
    Pool(MaxPool),
    Drop(Dropout<F>),
    Flatten(Flatten),
    Dense(Dense<F>),
}

impl<F: Scalar> Layer<F> {
    fn forward_train(&mut self, x: Batch<F>, rng: &mut dyn RngCore) -> Result<Batch<F>> {
        match self {
            Layer::Conv(l) => l.forward_train(x),
            Layer::Norm(l) => l.forward_train(x),
            Layer::Relu(l) => Ok(l.forward_train(x)),
            Layer::Pool(l) => l.forward_train(x),
            Layer::Drop(l) => Ok(l.forward_train(x, rng)),
            Layer::Flatten(l) => Ok(l.forward_train(x)),
            Layer::Dense(l) => l.forward_train(x),
        }
    }

    fn infer(&self, x: Batch<F>) -> Result<Batch<F>> {
        match self {
            Layer::Conv(l) => l.infer(x),
            Layer::Norm(l) => l.infer(x),
            Layer::Relu(l) => Ok(l.infer(x)),
            Layer::Pool(l) => l.infer(x),
            Layer::Drop(l) => Ok(l.infer(x)),
            Layer::Flatten(l) => Ok(l.infer(x)),
            Layer::Dense(l) => l.infer(x),
        }
    }

    fn backward(&mut self, dy: Batch<F>) -> Result<Batch<F>> {
        match self {
            Layer::Conv(l) => l.backward(dy),
            Layer::Norm(l) => l.backward(dy),
            Layer::Relu(l) => Ok(l.backward(dy)),
            Layer::Pool(l) => Ok(l.backward(dy)),
            Layer::Drop(l) => Ok(l.backward(dy)),
            Layer::Flatten(l) => Ok(l.backward(dy)),
            Layer::Dense(l) => l.backward(dy),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model<F> {
    spec: ModelSpec,
    layers: Vec<Layer<F>>,
}

impl<F: Scalar> Model<F> {
    /// Instantiates zero-weighted layers after checking the spec's shape
    /// chain. Call `init_weights` before training.
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let shapes = spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (layer, input) in spec.layers.iter().zip(&shapes) {
            layers.push(match layer {
                LayerSpec::Conv1d { filters, kernel, padding } => {
                    Layer::Conv(Conv1d::new(*kernel, input.channels(), *filters, *padding))
                }
                LayerSpec::BatchNorm => Layer::Norm(BatchNorm::new(input.channels())),
                LayerSpec::Relu => Layer::Relu(Relu::default()),
                LayerSpec::MaxPool1d { .. } => Layer::Pool(MaxPool::default()),
                LayerSpec::Dropout { rate } => Layer::Drop(Dropout::new(*rate)),
                LayerSpec::Flatten => Layer::Flatten(Flatten::default()),
                LayerSpec::Dense { units } => Layer::Dense(Dense::new(input.flat_dim(), *units)),
                LayerSpec::Softmax { classes } => {
                    Layer::Dense(Dense::new(input.flat_dim(), *classes))
                }
            });
        }
        Ok(Model { spec: spec.clone(), layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases; batch norm
    /// keeps its fresh scale-1/shift-0 state.
    pub fn init_weights(&mut self, rng: &mut dyn RngCore) {
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    let fan_in = c.fan_in();
                    he_normal(&mut c.w, fan_in, rng);
                }
                Layer::Dense(d) => {
                    let fan_in = d.fan_in();
                    he_normal(&mut d.w, fan_in, rng);
                }
                _ => {}
            }
        }
    }

    /// Forward pass with batch statistics, dropout, and caches for a
    /// following `backward`. Returns logits.
    pub fn forward_train(&mut self, mut x: Batch<F>, rng: &mut dyn RngCore) -> Result<Batch<F>> {
        for layer in &mut self.layers {
            x = layer.forward_train(x, rng)?;
        }
        Ok(x)
    }

    /// Inference pass: moving statistics, no dropout, no caches. Pure
    /// per-sample computation, so a sample's output does not depend on the
    /// rest of the batch.
    pub fn infer(&self, mut x: Batch<F>) -> Result<Batch<F>> {
        for layer in &self.layers {
            x = layer.infer(x)?;
        }
        Ok(x)
    }

    /// Backpropagates logit gradients, filling every layer's parameter
    /// gradients. Requires a preceding `forward_train` on the same batch.
    pub fn backward(&mut self, mut grad: Batch<F>) -> Result<()> {
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(grad)?;
        }
        Ok(())
    }

    /// Visits `(parameter, gradient)` tensor pairs in a fixed order.
    pub fn for_each_param(&mut self, f: &mut dyn FnMut(&mut [F], &[F])) {
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    f(&mut c.w, &c.dw);
                    f(&mut c.b, &c.db);
                }
                Layer::Norm(b) => {
                    f(&mut b.gamma, &b.dgamma);
                    f(&mut b.beta, &b.dbeta);
                }
                Layer::Dense(d) => {
                    f(&mut d.w, &d.dw);
                    f(&mut d.b, &d.db);
                }
                _ => {}
            }
        }
    }

    /// Visits every persistent tensor (weights plus batch-norm moving
    /// statistics) with a stable name and shape — the serialization order.
    pub fn for_each_tensor(&self, f: &mut dyn FnMut(&str, &[usize], &[F])) {
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv(c) => {
                    f(&format!("layer{i}.weight"), &[c.out_ch, c.kernel, c.in_ch], &c.w);
                    f(&format!("layer{i}.bias"), &[c.out_ch], &c.b);
                }
                Layer::Norm(b) => {
                    let ch = b.channels();
                    f(&format!("layer{i}.gamma"), &[ch], &b.gamma);
                    f(&format!("layer{i}.beta"), &[ch], &b.beta);
                    f(&format!("layer{i}.moving_mean"), &[ch], &b.moving_mean);
                    f(&format!("layer{i}.moving_var"), &[ch], &b.moving_var);
                }
                Layer::Dense(d) => {
                    f(&format!("layer{i}.weight"), &[d.units, d.in_dim], &d.w);
                    f(&format!("layer{i}.bias"), &[d.units], &d.b);
                }
                _ => {}
            }
        }
    }

    /// Mutable counterpart of `for_each_tensor`, same order.
    pub fn for_each_tensor_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [F])) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Conv(c) => {
                    f(&format!("layer{i}.weight"), &[c.out_ch, c.kernel, c.in_ch], &mut c.w);
                    f(&format!("layer{i}.bias"), &[c.out_ch], &mut c.b);
                }
                Layer::Norm(b) => {
                    let ch = b.channels();
                    f(&format!("layer{i}.gamma"), &[ch], &mut b.gamma);
                    f(&format!("layer{i}.beta"), &[ch], &mut b.beta);
                    f(&format!("layer{i}.moving_mean"), &[ch], &mut b.moving_mean);
                    f(&format!("layer{i}.moving_var"), &[ch], &mut b.moving_var);
                }
                Layer::Dense(d) => {
                    f(&format!("layer{i}.weight"), &[d.units, d.in_dim], &mut d.w);
                    f(&format!("layer{i}.bias"), &[d.units], &mut d.b);
                }
                _ => {}
            }
        }
    }

    /// Copy of the model with fresh layers and identical tensors — caches and
    /// gradients are not carried over.
    pub fn snapshot(&self) -> Model<F> {
        let mut fresh = Model::from_spec(&self.spec).expect("spec was validated at construction");
        let mut tensors: Vec<Vec<F>> = Vec::new();
        self.for_each_tensor(&mut |_, _, data| tensors.push(data.to_vec()));
        let mut it = tensors.into_iter();
        fresh.for_each_tensor_mut(&mut |_, _, dst| {
            dst.copy_from_slice(&it.next().expect("tensor lists of equal specs match"));
        });
        fresh
    }
}

pub fn he_normal<F: Scalar>(dst: &mut [F], fan_in: usize, rng: &mut dyn RngCore) {
    let std = (2.0 / fan_in as f64).sqrt();
    for v in dst {
        *v = F::of(rng.sample::<f64, _>(StandardNormal) * std);
    }
}

pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().cloned().fold(F::neg_infinity(), F::max);
    let mut out: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = out.iter().fold(F::zero(), |a, &b| a + b);
    for v in out.iter_mut() {
        *v = *v / sum;
    }
    out
}

/// Loss and logit gradient for one sample. The gradient is the classic
/// `p - one_hot(label)`.
pub fn softmax_cross_entropy<F: Scalar>(logits: &[F], label: usize) -> (F, Vec<F>) {
    assert!(label < logits.len(), "label {label} out of range");
    let max = logits.iter().cloned().fold(F::neg_infinity(), F::max);
    let sum = logits.iter().map(|&z| (z - max).exp()).fold(F::zero(), |a, b| a + b);
    let loss = sum.ln() + max - logits[label];
    let mut grad = softmax(logits);
    grad[label] = grad[label] - F::one();
    (loss, grad)
}

/// Mean cross-entropy over a batch of logits, the matching logit gradients
/// (already scaled by `1/n`), and the number of correct argmax predictions.
pub fn batch_softmax_loss<F: Scalar>(
    logits: &Batch<F>,
    labels: &[usize],
) -> (f64, Batch<F>, usize) {
    assert_eq!(logits.n(), labels.len(), "one label per sample");
    let n = logits.n();
    let k = logits.feature_size();
    let scale = F::of(1.0 / n as f64);
    let mut grad = Batch::zeroed(n, 1, k);
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for i in 0..n {
        let z = logits.sample(i);
        let (loss, g) = softmax_cross_entropy(z, labels[i]);
        loss_sum += loss.as_f64();
        for (dst, gv) in grad.sample_mut(i).iter_mut().zip(g) {
            *dst = gv * scale;
        }
        if argmax(z) == labels[i] {
            correct += 1;
        }
    }
    (loss_sum / n as f64, grad, correct)
}

#[cfg(test)]
mod tests {
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    use super::super::spec::CnnVariant;
    use super::*;

    #[test]
    fn softmax_is_a_probability_simplex_point() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..100 {
            let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let p = softmax(&logits);
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_logits_cost_ln_n() {
        let (loss, _) = softmax_cross_entropy(&[0.5f64; 4], 2);
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let logits: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (_, grad) = softmax_cross_entropy(&logits, 3);
        let h = 1e-6;
        for j in 0..5 {
            let mut up = logits.clone();
            up[j] += h;
            let mut down = logits.clone();
            down[j] -= h;
            let fd = (softmax_cross_entropy(&up, 3).0 - softmax_cross_entropy(&down, 3).0)
                / (2.0 * h);
            assert!((fd - grad[j]).abs() < 1e-6, "grad[{j}]: {fd} vs {}", grad[j]);
        }
    }

    #[test]
    fn he_init_statistics_and_determinism() {
        let mut buf = vec![0.0f64; 1_000_000];
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        he_normal(&mut buf, 2, &mut rng);
        let mean = buf.iter().sum::<f64>() / buf.len() as f64;
        let std =
            (buf.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / buf.len() as f64).sqrt();
        assert!((std - 1.0).abs() < 0.01, "std {std}");
        assert!(mean.abs() < 0.01);

        let mut again = vec![0.0f64; 16];
        let mut first = vec![0.0f64; 16];
        he_normal(&mut first, 4, &mut ChaCha20Rng::seed_from_u64(1));
        he_normal(&mut again, 4, &mut ChaCha20Rng::seed_from_u64(1));
        assert_eq!(first, again);
    }

    #[test]
    fn fresh_model_has_zero_biases_after_init() {
        let spec = ModelSpec::cnn(2, 4, 8, 0.1, 32, 2);
        let mut model = Model::<f32>::from_spec(&spec).unwrap();
        model.init_weights(&mut ChaCha20Rng::seed_from_u64(2));
        model.for_each_tensor(&mut |name, _, data| {
            if name.ends_with(".bias") {
                assert!(data.iter().all(|&v| v == 0.0), "{name} not zero");
            }
        });
    }

    #[test]
    fn forward_shapes_follow_the_spec() {
        let spec = super::super::spec::build_model(CnnVariant::Cnn2, 2230, 4);
        let model = Model::<f32>::from_spec(&spec).unwrap();
        let x = Batch::zeroed(2, 2230, 1);
        let logits = model.infer(x).unwrap();
        assert_eq!((logits.n(), logits.len(), logits.ch()), (2, 1, 4));
    }

    #[test]
    fn inference_is_batch_composition_invariant() {
        let spec = ModelSpec::cnn(2, 6, 10, 0.1, 40, 3);
        let mut model = Model::<f32>::from_spec(&spec).unwrap();
        model.init_weights(&mut ChaCha20Rng::seed_from_u64(21));
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let rows: Vec<Vec<f32>> =
            (0..5).map(|_| (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let views: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
        let together = model.infer(Batch::from_rows(&views)).unwrap();
        for (i, row) in views.iter().enumerate() {
            let alone = model.infer(Batch::from_rows(&[row])).unwrap();
            assert_eq!(alone.sample(0), together.sample(i), "sample {i}");
        }
    }

    #[test]
    fn snapshot_preserves_tensors_and_drops_caches() {
        let spec = ModelSpec::cnn(2, 4, 8, 0.1, 32, 2);
        let mut model = Model::<f64>::from_spec(&spec).unwrap();
        model.init_weights(&mut ChaCha20Rng::seed_from_u64(30));
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let x = Batch::from_vec(4, 32, 1, (0..128).map(|i| (i % 13) as f64 / 7.0).collect());
        model.forward_train(x, &mut rng).unwrap();

        let snap = model.snapshot();
        let mut original = Vec::new();
        model.for_each_tensor(&mut |_, _, d| original.push(d.to_vec()));
        let mut copied = Vec::new();
        snap.for_each_tensor(&mut |_, _, d| copied.push(d.to_vec()));
        assert_eq!(original, copied);
    }
}
