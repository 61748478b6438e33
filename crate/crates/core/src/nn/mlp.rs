use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Activation;
use crate::error::{ensure_finite, shape_err, Error, Result};
use crate::tensor::Tensor;

/// Width and activation of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerShape {
    fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

#[derive(Debug, Clone)]
struct Cache {
    batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

/// Gradients from [`MlpModel::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Flat, in the same order as [`MlpModel::params`].
    pub params: Vec<f64>,
    pub input: Tensor,
}

/// Multilayer perceptron with all parameters in one flat buffer.
///
/// Layer `l` owns a weight matrix of shape `(out_dim, in_dim)` stored
/// row-major, immediately followed by its bias vector. Layers are laid out in
/// declaration order; checkpoints and optimizers rely on this order.
#[derive(Debug, Clone)]
pub struct MlpModel {
    layers: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    skip: bool,
    cache: Option<Cache>,
}

impl PartialEq for MlpModel {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.params == other.params && self.skip == other.skip
    }
}

fn layout(layers: &[LayerShape]) -> Result<(Vec<usize>, usize)> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("model needs at least one layer".into()));
    }
    let mut offsets = Vec::with_capacity(layers.len());
    let mut total = 0;
    for (i, l) in layers.iter().enumerate() {
        if l.in_dim == 0 || l.out_dim == 0 {
            return Err(Error::InvalidArgument(format!("layer {i} has a zero dimension")));
        }
        if i > 0 && layers[i - 1].out_dim != l.in_dim {
            return Err(shape_err(format!(
                "layer {} outputs {} but layer {} expects {}",
                i - 1,
                layers[i - 1].out_dim,
                i,
                l.in_dim
            )));
        }
        offsets.push(total);
        total += l.param_count();
    }
    Ok((offsets, total))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl MlpModel {
    /// Xavier-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} widths need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers: Vec<LayerShape> = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| LayerShape {
                in_dim: w[0],
                out_dim: w[1],
                activation,
            })
            .collect();
        let (offsets, total) = layout(&layers)?;
        let mut params = vec![0.0; total];
        for (l, &off) in layers.iter().zip(&offsets) {
            let limit = (6.0 / (l.in_dim + l.out_dim) as f64).sqrt();
            for w in &mut params[off..off + l.in_dim * l.out_dim] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(Self {
            layers,
            offsets,
            params,
            skip: false,
            cache: None,
        })
    }

    /// Build from explicit `(weights, bias, activation)` triples, weights
    /// given row-major as `(out_dim, in_dim)`.
    pub fn from_layers(layers: Vec<(Vec<Vec<f64>>, Vec<f64>, Activation)>) -> Result<Self> {
        let mut shapes = Vec::with_capacity(layers.len());
        let mut params = Vec::new();
        for (i, (w, b, activation)) in layers.into_iter().enumerate() {
            let out_dim = w.len();
            let in_dim = w.first().map(|r| r.len()).unwrap_or(0);
            if b.len() != out_dim || w.iter().any(|r| r.len() != in_dim) {
                return Err(shape_err(format!("layer {i}: ragged weights or bias")));
            }
            for row in &w {
                params.extend_from_slice(row);
            }
            params.extend_from_slice(&b);
            shapes.push(LayerShape {
                in_dim,
                out_dim,
                activation,
            });
        }
        Self::from_parts(shapes, params, false)
    }

    pub fn from_parts(layers: Vec<LayerShape>, params: Vec<f64>, skip: bool) -> Result<Self> {
        let (offsets, total) = layout(&layers)?;
        if params.len() != total {
            return Err(shape_err(format!(
                "layers need {total} parameters, got {}",
                params.len()
            )));
        }
        ensure_finite(&params, "model parameters")?;
        let model = Self {
            layers,
            offsets,
            params,
            skip: false,
            cache: None,
        };
        model.with_skip(skip)
    }

    /// Add the input to the output. Requires equal input and output widths.
    pub fn with_skip(mut self, skip: bool) -> Result<Self> {
        if skip && self.in_dim() != self.out_dim() {
            return Err(shape_err(format!(
                "skip connection needs equal widths, got {} -> {}",
                self.in_dim(),
                self.out_dim()
            )));
        }
        self.skip = skip;
        Ok(self)
    }

    pub fn skip(&self) -> bool {
        self.skip
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameters. Invalidates any cached forward pass.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.cache = None;
        &mut self.params
    }

    /// Weights of layer `l`, row-major `(out_dim, in_dim)`.
    pub fn weights(&self, l: usize) -> &[f64] {
        let s = &self.layers[l];
        let off = self.offsets[l];
        &self.params[off..off + s.in_dim * s.out_dim]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let s = &self.layers[l];
        let off = self.offsets[l] + s.in_dim * s.out_dim;
        &self.params[off..off + s.out_dim]
    }

    pub fn fill_params(&mut self, value: f64) {
        self.params_mut().iter_mut().for_each(|p| *p = value);
    }

    fn run(&self, input: &Tensor, keep: bool) -> Result<(Tensor, Option<Cache>)> {
        let in_dim = self.in_dim();
        if input.width() != in_dim || input.is_empty() {
            return Err(shape_err(format!(
                "model expects input width {in_dim}, got shape {:?}",
                input.shape()
            )));
        }
        let batch = input.batch();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut pres: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut x = input.data().to_vec();
        for (l, s) in self.layers.iter().enumerate() {
            let w = self.weights(l);
            let b = self.bias(l);
            let mut z = vec![0.0; batch * s.out_dim];
            for (xr, zr) in x.chunks_exact(s.in_dim).zip(z.chunks_exact_mut(s.out_dim)) {
                for (o, zo) in zr.iter_mut().enumerate() {
                    *zo = b[o] + dot(&w[o * s.in_dim..(o + 1) * s.in_dim], xr);
                }
            }
            let y: Vec<f64> = z.iter().map(|&v| s.activation.apply(v)).collect();
            if keep {
                acts.push(x);
                pres.push(z);
            }
            x = y;
        }
        let mut out = x.clone();
        if self.skip {
            for (o, i) in out.iter_mut().zip(input.data()) {
                *o += i;
            }
        }
        ensure_finite(&out, "model output")?;
        let mut shape = input.shape().to_vec();
        *shape.last_mut().unwrap() = self.out_dim();
        let out = Tensor::new(shape, out)?;
        let cache = keep.then(|| {
            acts.push(x);
            Cache {
                batch,
                acts,
                pre: pres,
            }
        });
        Ok((out, cache))
    }

    /// Forward pass that caches activations for [`MlpModel::backward`].
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (out, cache) = self.run(input, true)?;
        self.cache = cache;
        Ok(out)
    }

    /// Forward pass without touching the cache.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.run(input, false)?.0)
    }

    /// Gradients of a scalar loss given `output_grad = dL/d(output)` for the
    /// most recent [`MlpModel::forward`] call.
    pub fn backward(&self, output_grad: &Tensor) -> Result<Gradients> {
        let cache = self.cache.as_ref().ok_or(Error::MissingForward)?;
        if output_grad.width() != self.out_dim() || output_grad.batch() != cache.batch {
            return Err(shape_err(format!(
                "output gradient {:?} does not match cached batch {} x {}",
                output_grad.shape(),
                cache.batch,
                self.out_dim()
            )));
        }
        let batch = cache.batch;
        let mut grads = vec![0.0; self.params.len()];
        let mut g = output_grad.data().to_vec();
        for l in (0..self.layers.len()).rev() {
            let s = self.layers[l];
            let x = &cache.acts[l];
            let z = &cache.pre[l];
            let y = &cache.acts[l + 1];
            for ((gi, &zi), &yi) in g.iter_mut().zip(z).zip(y) {
                *gi *= s.activation.derivative(zi, yi);
            }
            let off = self.offsets[l];
            let (gw, gb) = grads[off..off + s.param_count()].split_at_mut(s.in_dim * s.out_dim);
            let w = self.weights(l);
            let mut gx = vec![0.0; batch * s.in_dim];
            for ((dz, xr), gxr) in g
                .chunks_exact(s.out_dim)
                .zip(x.chunks_exact(s.in_dim))
                .zip(gx.chunks_exact_mut(s.in_dim))
            {
                for (o, &d) in dz.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    axpy(d, xr, &mut gw[o * s.in_dim..(o + 1) * s.in_dim]);
                    axpy(d, &w[o * s.in_dim..(o + 1) * s.in_dim], gxr);
                }
            }
            g = gx;
        }
        if self.skip {
            for (gi, o) in g.iter_mut().zip(output_grad.data()) {
                *gi += o;
            }
        }
        let mut in_shape = output_grad.shape().to_vec();
        *in_shape.last_mut().unwrap() = self.in_dim();
        Ok(Gradients {
            params: grads,
            input: Tensor::new(in_shape, g)?,
        })
    }
}

/// Euclidean norm over several gradient buffers taken together.
pub fn global_norm(grads: &[&[f64]]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_check, GradCheck};
    use crate::rng::RngStream;

    fn single(w: f64, b: f64, act: Activation) -> MlpModel {
        MlpModel::from_layers(vec![(vec![vec![w]], vec![b], act)]).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut m = MlpModel::from_layers(vec![(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            Activation::Identity,
        )])
        .unwrap();
        let x = Tensor::row(vec![0.3, -1.7]);
        let y = m.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn affine_arithmetic() {
        let mut m = single(2.0, 1.0, Activation::Identity);
        let y = m.forward(&Tensor::row(vec![3.0])).unwrap();
        assert_eq!(y.data(), &[7.0]);
    }

    #[test]
    fn relu_clamps_negative_preactivation() {
        let mut m = MlpModel::from_layers(vec![(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            Activation::Relu,
        )])
        .unwrap();
        let y = m.forward(&Tensor::row(vec![-1.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
    }

    #[test]
    fn linear_map_derivative() {
        let mut m = single(1.0, 0.0, Activation::Identity);
        m.forward(&Tensor::row(vec![5.0])).unwrap();
        let g = m.backward(&Tensor::row(vec![1.0])).unwrap();
        // [dW, db]
        assert_eq!(g.params, vec![5.0, 1.0]);
        assert_eq!(g.input.data(), &[1.0]);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = RngStream::from_seed(3);
        let mut m = MlpModel::new(&[3, 5, 2], &[Activation::Tanh, Activation::Identity], &mut rng)
            .unwrap();
        m.forward(&Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]).unwrap())
            .unwrap();
        let g = m.backward(&Tensor::zeros(vec![2, 2])).unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
        assert!(g.input.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_requires_forward() {
        let m = single(1.0, 0.0, Activation::Identity);
        assert!(matches!(
            m.backward(&Tensor::row(vec![1.0])),
            Err(Error::MissingForward)
        ));
    }

    #[test]
    fn input_width_checked() {
        let mut m = single(1.0, 0.0, Activation::Identity);
        assert!(matches!(
            m.forward(&Tensor::row(vec![1.0, 2.0])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn chain_compatibility_checked() {
        let layers = vec![
            LayerShape {
                in_dim: 2,
                out_dim: 3,
                activation: Activation::Tanh,
            },
            LayerShape {
                in_dim: 4,
                out_dim: 1,
                activation: Activation::Identity,
            },
        ];
        assert!(MlpModel::from_parts(layers, vec![0.0; 9 + 5], false).is_err());
    }

    #[test]
    fn forward_is_bit_identical() {
        let mut rng = RngStream::from_seed(11);
        let m = MlpModel::new(&[4, 8, 3], &[Activation::LeakyRelu, Activation::Tanh], &mut rng)
            .unwrap();
        let x = Tensor::matrix(2, 4, (0..8).map(|i| i as f64 * 0.37 - 1.0).collect()).unwrap();
        let a = m.infer(&x).unwrap();
        let b = m.clone().forward(&x).unwrap();
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn skip_adds_input() {
        let m = MlpModel::from_layers(vec![(vec![vec![2.0]], vec![0.0], Activation::Identity)])
            .unwrap()
            .with_skip(true)
            .unwrap();
        assert_eq!(m.infer(&Tensor::row(vec![3.0])).unwrap().data(), &[9.0]);
    }

    /// Squared-output loss `0.5 * sum(y^2)` wired as a [`GradCheck`] target.
    struct HalfSquare {
        model: MlpModel,
        input: Tensor,
    }

    impl GradCheck for HalfSquare {
        fn params_mut(&mut self) -> &mut [f64] {
            self.model.params_mut()
        }
        fn loss(&mut self) -> Result<f64> {
            let y = self.model.infer(&self.input)?;
            Ok(0.5 * y.data().iter().map(|v| v * v).sum::<f64>())
        }
        fn gradient(&mut self) -> Result<Vec<f64>> {
            let y = self.model.forward(&self.input)?;
            Ok(self.model.backward(&y)?.params)
        }
    }

    #[test]
    fn two_layer_tanh_matches_finite_differences() {
        let mut rng = RngStream::from_seed(0);
        let model =
            MlpModel::new(&[3, 6, 2], &[Activation::Tanh, Activation::Tanh], &mut rng).unwrap();
        let input = Tensor::matrix(
            2,
            3,
            (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut target = HalfSquare { model, input };
        let err = crate::nn::check_gradients(&mut target, 1e-6).unwrap();
        assert!(err < 1e-5, "max relative error {err}");
    }

    #[test]
    fn every_activation_and_batch_size_matches_finite_differences() {
        let acts = [
            Activation::Relu,
            Activation::LeakyRelu,
            Activation::Tanh,
            Activation::Identity,
        ];
        for (k, &act) in acts.iter().enumerate() {
            for batch in [1usize, 7] {
                let mut rng = RngStream::from_seed(100 + k as u64);
                let mut model =
                    MlpModel::new(&[4, 5, 3], &[act, Activation::Identity], &mut rng).unwrap();
                // Keep ReLU pre-activations away from the kink.
                for p in model.params_mut().iter_mut() {
                    *p += 0.05;
                }
                let input = Tensor::matrix(
                    batch,
                    4,
                    (0..batch * 4).map(|_| rng.random_range(0.2..1.0)).collect(),
                )
                .unwrap();
                let err = finite_diff_check(
                    &mut model,
                    |y: &Tensor| {
                        let l = y.data().iter().map(|v| v * v).sum::<f64>() * 0.5;
                        (l, y.clone())
                    },
                    &input,
                    1e-6,
                )
                .unwrap();
                assert!(err < 1e-4, "{act:?} batch {batch}: {err}");
            }
        }
    }

    #[test]
    fn skip_gradients_match_finite_differences() {
        let mut rng = RngStream::from_seed(5);
        let mut model = MlpModel::new(&[3, 4, 3], &[Activation::Tanh, Activation::Identity], &mut rng)
            .unwrap()
            .with_skip(true)
            .unwrap();
        let input = Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.5, 0.4, -0.6]).unwrap();
        let err = finite_diff_check(
            &mut model,
            |y: &Tensor| (0.5 * y.data().iter().map(|v| v * v).sum::<f64>(), y.clone()),
            &input,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }
}
