//! Fixed-topology fully-connected networks.
//!
//! Every trainable model in the crate (GAN generators and discriminators, the
//! auto-encoder's encoder, decoder and latent discriminator) is an [`Mlp`]:
//! a stack of affine layers with one hidden activation shared by all hidden
//! layers and a distinct activation on the output layer.
//!
//! Batches are row-major: one sample per row. Layer `l` computes
//!
//! - `z = a W^T + b`
//! - `a' = act(z)`
//!
//! with `W` of shape `(dims[l+1], dims[l])`.

mod gradcheck;
mod loss;
mod optim;

pub use gradcheck::{analytic_gradients, gradient_check, verification_suite, Batch, LossKind, SuiteCase};
pub use loss::{bce_loss, generator_loss, squared_error, LossGrad, PROB_CLAMP};
pub use optim::{Adam, AdamConfig};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{invalid, shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Linear,
    Sigmoid,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            other => Err(Error::Checkpoint(format!("unknown hidden activation {other}"))),
        }
    }
}

impl OutputActivation {
    pub(crate) fn code(self) -> u8 {
        match self {
            OutputActivation::Linear => 0,
            OutputActivation::Sigmoid => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(OutputActivation::Linear),
            1 => Ok(OutputActivation::Sigmoid),
            other => Err(Error::Checkpoint(format!("unknown output activation {other}"))),
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A dense feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    hidden: Activation,
    output: OutputActivation,
}

/// Everything `forward` computed, kept for `backward`.
///
/// `activations[0]` is the input batch and `activations[L]` the network
/// output; `pre[l]` is the pre-activation of layer `l`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub activations: Vec<Array2<f64>>,
    pub pre: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("trace always holds the input")
    }
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// Index of the first layer holding a NaN or infinite entry.
    pub fn first_non_finite_layer(&self) -> Option<usize> {
        self.weights
            .iter()
            .zip(&self.biases)
            .position(|(w, b)| w.iter().chain(b.iter()).any(|v| !v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// Result of a backward pass: parameter gradients plus the gradient with
/// respect to the network input (needed to push a discriminator's signal
/// into the generator that fed it).
#[derive(Debug, Clone)]
pub struct Backprop {
    pub grads: Gradients,
    pub input_grad: Array2<f64>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(dims, hidden, output)?;
        for w in &mut net.weights {
            let (fan_out, fan_in) = w.dim();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            w.mapv_inplace(|_| dist.sample(rng));
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize], hidden: Activation, output: OutputActivation) -> Result<Self> {
        if dims.len() < 2 {
            return invalid("a network needs at least an input and an output width");
        }
        if dims.iter().any(|&d| d == 0) {
            return invalid(format!("layer widths must be positive, got {dims:?}"));
        }
        let weights = dims.windows(2).map(|p| Array2::zeros((p[1], p[0]))).collect();
        let biases = dims[1..].iter().map(|&d| Array1::zeros(d)).collect();
        Ok(Self { dims: dims.to_vec(), weights, biases, hidden, output })
    }

    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        hidden: Activation,
        output: OutputActivation,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return shape_err(format!(
                "{} weight matrices but {} bias vectors",
                weights.len(),
                biases.len()
            ));
        }
        let mut dims = vec![weights[0].ncols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *dims.last().unwrap() {
                return shape_err(format!(
                    "layer {l}: weight has {} columns, previous width is {}",
                    w.ncols(),
                    dims.last().unwrap()
                ));
            }
            if b.len() != w.nrows() {
                return shape_err(format!("layer {l}: bias length {} != {} rows", b.len(), w.nrows()));
            }
            dims.push(w.nrows());
        }
        if dims.iter().any(|&d| d == 0) {
            return invalid(format!("layer widths must be positive, got {dims:?}"));
        }
        Ok(Self { dims, weights, biases, hidden, output })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return shape_err(format!(
                "batch has {} columns, network expects input width {}",
                x.ncols(),
                self.input_dim()
            ));
        }
        Ok(())
    }

    fn activate(&self, layer: usize, z: &Array2<f64>) -> Array2<f64> {
        if layer + 1 == self.num_layers() {
            match self.output {
                OutputActivation::Linear => z.clone(),
                OutputActivation::Sigmoid => z.mapv(sigmoid),
            }
        } else {
            match self.hidden {
                Activation::Relu => z.mapv(|v| v.max(0.0)),
                Activation::Tanh => z.mapv(f64::tanh),
            }
        }
    }

    fn affine(&self, layer: usize, a: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = a.dot(&self.weights[layer].t());
        z += &self.biases[layer];
        z
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Trace> {
        self.check_input(&x)?;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        let mut pre = Vec::with_capacity(self.num_layers());
        activations.push(x.to_owned());
        for l in 0..self.num_layers() {
            let z = self.affine(l, &activations[l].view());
            activations.push(self.activate(l, &z));
            pre.push(z);
        }
        Ok(Trace { activations, pre })
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = self.activate(0, &self.affine(0, &x));
        for l in 1..self.num_layers() {
            a = self.activate(l, &self.affine(l, &a.view()));
        }
        Ok(a)
    }

    /// Reverse-mode pass. `output_grad` is dLoss/dOutput for every row of the
    /// batch; per-row gradients are summed, so losses that average over rows
    /// must fold the `1/n` into `output_grad`.
    pub fn backward(&self, trace: &Trace, output_grad: ArrayView2<f64>) -> Result<Backprop> {
        let layers = self.num_layers();
        if trace.pre.len() != layers || trace.activations.len() != layers + 1 {
            return shape_err(format!(
                "trace has {} layers, network has {layers}",
                trace.pre.len()
            ));
        }
        for (l, z) in trace.pre.iter().enumerate() {
            if z.ncols() != self.dims[l + 1] || trace.activations[l].ncols() != self.dims[l] {
                return shape_err(format!("trace layer {l} widths do not match the network"));
            }
        }
        let out = trace.output();
        if output_grad.dim() != out.dim() {
            return shape_err(format!(
                "output gradient is {:?}, network output is {:?}",
                output_grad.dim(),
                out.dim()
            ));
        }

        let mut grads = Gradients::zeros_like(self);
        let mut delta = output_grad.to_owned();
        for l in (0..layers).rev() {
            // delta: dLoss/d(post-activation of layer l) -> dLoss/d(pre-activation)
            if l + 1 == layers {
                if self.output == OutputActivation::Sigmoid {
                    Zip::from(&mut delta).and(&trace.activations[l + 1]).for_each(|d, &s| *d *= s * (1.0 - s));
                }
            } else {
                match self.hidden {
                    Activation::Relu => Zip::from(&mut delta).and(&trace.pre[l]).for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    }),
                    Activation::Tanh => Zip::from(&mut delta)
                        .and(&trace.activations[l + 1])
                        .for_each(|d, &t| *d *= 1.0 - t * t),
                }
            }
            grads.weights[l] = delta.t().dot(&trace.activations[l]);
            grads.biases[l] = delta.sum_axis(Axis(0));
            delta = delta.dot(&self.weights[l]);
        }
        Ok(Backprop { grads, input_grad: delta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Mlp::from_parts(
            vec![Array2::eye(2)],
            vec![Array1::zeros(2)],
            Activation::Relu,
            OutputActivation::Linear,
        )
        .unwrap();
        let out = net.predict(array![[1.0, 2.0]].view()).unwrap();
        assert_eq!(out, array![[1.0, 2.0]]);
    }

    #[test]
    fn zero_sigmoid_net_outputs_half() {
        let net = Mlp::zeros(&[3, 5, 1], Activation::Tanh, OutputActivation::Sigmoid).unwrap();
        let out = net.predict(array![[1.0, -4.0, 9.0], [0.0, 0.0, 0.0]].view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_matches_straight_line_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::new(&[3, 5, 4, 2], Activation::Relu, OutputActivation::Sigmoid, &mut rng).unwrap();
        let x = array![[0.1, -0.2, 0.3], [1.0, 0.5, -0.5], [0.0, 0.0, 0.0], [-2.0, 1.5, 0.25]];
        let out = net.predict(x.view()).unwrap();
        let trace = net.forward(x.view()).unwrap();
        assert_eq!(&out, trace.output());

        // scalar loops, no matrix products
        for (r, row) in x.rows().into_iter().enumerate() {
            let mut a: Vec<f64> = row.to_vec();
            for l in 0..net.num_layers() {
                let w = &net.weights()[l];
                let b = &net.biases()[l];
                let mut next = vec![0.0; w.nrows()];
                for i in 0..w.nrows() {
                    let mut s = b[i];
                    for j in 0..w.ncols() {
                        s += w[[i, j]] * a[j];
                    }
                    next[i] = if l + 1 == net.num_layers() { 1.0 / (1.0 + (-s).exp()) } else { s.max(0.0) };
                }
                a = next;
            }
            for (c, v) in a.iter().enumerate() {
                assert!((out[[r, c]] - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Mlp::zeros(&[3, 1], Activation::Relu, OutputActivation::Linear).unwrap();
        let err = net.forward(array![[1.0, 2.0]].view()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[4, 6, 3], Activation::Tanh, OutputActivation::Linear, &mut rng).unwrap();
        let x = array![[0.5, -1.0, 2.0, 0.1], [0.3, 0.3, 0.3, 0.3]];
        let trace = net.forward(x.view()).unwrap();
        let bp = net.backward(&trace, Array2::zeros((2, 3)).view()).unwrap();
        assert_eq!(bp.grads.max_abs(), 0.0);
        assert!(bp.input_grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_squared_error_gradient_is_closed_form() {
        let w = array![[0.5, -1.0], [2.0, 0.25], [0.0, 1.0]];
        let b = array![0.1, -0.2, 0.3];
        let net = Mlp::from_parts(vec![w.clone()], vec![b.clone()], Activation::Relu, OutputActivation::Linear).unwrap();
        let x = array![[1.5, -0.5]];
        let t = array![[1.0, 0.0, -1.0]];
        let trace = net.forward(x.view()).unwrap();
        let (_, grad) = squared_error(trace.output().view(), t.view()).unwrap();
        let bp = net.backward(&trace, grad.view()).unwrap();

        let residual = w.dot(&x.row(0)) + &b - &t.row(0);
        for i in 0..3 {
            for j in 0..2 {
                let expected = 2.0 * residual[i] * x[[0, j]];
                assert!((bp.grads.weights[0][[i, j]] - expected).abs() < 1e-14);
            }
            assert!((bp.grads.biases[0][i] - 2.0 * residual[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Mlp::new(&[2, 3, 1], Activation::Relu, OutputActivation::Linear, &mut rng).unwrap();
        let b = Mlp::new(&[2, 4, 4, 1], Activation::Relu, OutputActivation::Linear, &mut rng).unwrap();
        let trace = b.forward(array![[1.0, 1.0]].view()).unwrap();
        assert!(a.backward(&trace, array![[1.0]].view()).is_err());
    }

    #[test]
    fn glorot_bounds_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[10, 30, 2], Activation::Relu, OutputActivation::Linear, &mut rng).unwrap();
        let lim0 = (6.0 / 40.0_f64).sqrt();
        assert!(net.weights()[0].iter().all(|v| v.abs() <= lim0));
        assert!(net.biases().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }
}
