use ndarray::{Array2, ArrayView2};

use rand::Rng;

use super::{bce_loss, generator_loss, squared_error, Activation, Gradients, Mlp, OutputActivation};
use crate::error::{invalid, shape_err, Error, Result};
use crate::rng::seeded;

/// A batch of network inputs with optional targets (one row per sample).
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub targets: Option<Array2<f64>>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, targets: Option<Array2<f64>>) -> Result<Self> {
        if let Some(t) = &targets {
            if t.nrows() != inputs.nrows() {
                return shape_err(format!("{} input rows but {} target rows", inputs.nrows(), t.nrows()));
            }
        }
        Ok(Self { inputs, targets })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Binary cross-entropy against the first target column.
    Bce,
    /// `-ln D` on every output; targets ignored.
    Generator,
    SquaredError,
}

impl LossKind {
    fn targets<'a>(&self, batch: &'a Batch) -> Result<&'a Array2<f64>> {
        batch
            .targets
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("{self:?} loss needs targets")))
    }

    /// Loss and dLoss/dOutput for a network output matrix.
    pub fn evaluate(&self, output: ArrayView2<f64>, batch: &Batch) -> Result<(f64, Array2<f64>)> {
        match self {
            LossKind::Bce => {
                let t = self.targets(batch)?;
                if output.ncols() != 1 || t.ncols() < 1 {
                    return shape_err("bce gradient check needs a single-output network and a target column");
                }
                let p: Vec<f64> = output.column(0).to_vec();
                let y: Vec<f64> = t.column(0).to_vec();
                let l = bce_loss(&p, &y)?;
                Ok((l.loss, l.grad_column()))
            }
            LossKind::Generator => {
                if output.ncols() != 1 {
                    return shape_err("generator loss needs a single-output network");
                }
                let p: Vec<f64> = output.column(0).to_vec();
                let l = generator_loss(&p)?;
                Ok((l.loss, l.grad_column()))
            }
            LossKind::SquaredError => squared_error(output, self.targets(batch)?.view()),
        }
    }
}

fn loss_at(net: &Mlp, batch: &Batch, kind: LossKind) -> Result<f64> {
    let out = net.predict(batch.inputs.view())?;
    Ok(kind.evaluate(out.view(), batch)?.0)
}

/// Analytic gradients of `kind` over `batch`.
pub fn analytic_gradients(net: &Mlp, batch: &Batch, kind: LossKind) -> Result<Gradients> {
    let trace = net.forward(batch.inputs.view())?;
    let (_, grad) = kind.evaluate(trace.output().view(), batch)?;
    Ok(net.backward(&trace, grad.view())?.grads)
}

/// Compares backprop gradients with central finite differences over every
/// parameter and returns the largest `|a - n| / max(1, |a| + |n|)`.
pub fn gradient_check(net: &Mlp, batch: &Batch, kind: LossKind, eps: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&eps) {
        return invalid(format!("finite-difference step {eps} outside [1e-7, 1e-3]"));
    }
    let analytic = analytic_gradients(net, batch, kind)?;
    let mut probe = net.clone();
    let mut worst = 0.0_f64;
    let rel = |a: f64, n: f64| (a - n).abs() / 1.0_f64.max(a.abs() + n.abs());

    for l in 0..net.num_layers() {
        let (rows, cols) = net.weights()[l].dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = probe.weights()[l][[i, j]];
                probe.weights_mut()[l][[i, j]] = orig + eps;
                let up = loss_at(&probe, batch, kind)?;
                probe.weights_mut()[l][[i, j]] = orig - eps;
                let down = loss_at(&probe, batch, kind)?;
                probe.weights_mut()[l][[i, j]] = orig;
                worst = worst.max(rel(analytic.weights[l][[i, j]], (up - down) / (2.0 * eps)));
            }
        }
        for i in 0..net.biases()[l].len() {
            let orig = probe.biases()[l][i];
            probe.biases_mut()[l][i] = orig + eps;
            let up = loss_at(&probe, batch, kind)?;
            probe.biases_mut()[l][i] = orig - eps;
            let down = loss_at(&probe, batch, kind)?;
            probe.biases_mut()[l][i] = orig;
            worst = worst.max(rel(analytic.biases[l][i], (up - down) / (2.0 * eps)));
        }
    }
    Ok(worst)
}

/// One randomly drawn network of [`verification_suite`] and its worst error.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCase {
    pub dims: Vec<usize>,
    pub hidden: Activation,
    pub loss: LossKind,
    pub batch_size: usize,
    pub max_rel_error: f64,
}

/// Gradient-checks `cases` random networks (1 to 4 layers, widths 1 to 64),
/// cycling through the BCE, generator and squared-error losses.
pub fn verification_suite(cases: usize, seed: u64, eps: f64) -> Result<Vec<SuiteCase>> {
    let mut rng = seeded(seed);
    let kinds = [LossKind::Bce, LossKind::Generator, LossKind::SquaredError];
    let mut out = Vec::with_capacity(cases);
    for case in 0..cases {
        let loss = kinds[case % kinds.len()];
        let layers = rng.random_range(1..=4);
        let mut dims: Vec<usize> = (0..layers).map(|_| rng.random_range(1..=64)).collect();
        let (output, out_dim) = match loss {
            LossKind::SquaredError => (OutputActivation::Linear, rng.random_range(1..=8)),
            _ => (OutputActivation::Sigmoid, 1),
        };
        dims.push(out_dim);
        let hidden = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Relu };
        let net = Mlp::new(&dims, hidden, output, &mut rng)?;
        let batch_size = rng.random_range(1..=8);
        let x = Array2::from_shape_fn((batch_size, dims[0]), |_| rng.random_range(-1.5..1.5));
        let targets = match loss {
            LossKind::Bce => Some(Array2::from_shape_fn((batch_size, 1), |_| f64::from(u8::from(rng.random_bool(0.5))))),
            LossKind::Generator => None,
            LossKind::SquaredError => Some(Array2::from_shape_fn((batch_size, out_dim), |_| rng.random_range(-2.0..2.0))),
        };
        let batch = Batch::new(x, targets)?;
        let max_rel_error = gradient_check(&net, &batch, loss, eps)?;
        out.push(SuiteCase { dims, hidden, loss, batch_size, max_rel_error });
    }
    Ok(out)
}
