//! RBF-kernel soft-margin SVM trained by sequential minimal optimization,
//! combined one-vs-one for multi-class problems.
//!
//! Each binary machine solves
//!
//! ```text
//! min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! picking at every iteration the pair that violates the KKT conditions the
//! most, until the violation gap drops below `tol`.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::checkpoint::{read_file, write_file, Reader, Writer, TAG_SVM};
use crate::corpus::Normalizer;
use crate::error::{invalid, shape_err, Error, Result};

const TAU: f64 = 1e-12;

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return shape_err(format!("kernel arguments have {} and {} coordinates", a.len(), b.len()));
    }
    if !(gamma > 0.0) {
        return invalid("gamma must be positive");
    }
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((-gamma * d2).exp())
}

/// `K[i, j] = exp(-gamma |a_i - b_j|^2)` for all row pairs.
pub fn rbf_gram(a: ArrayView2<f64>, b: ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    let na: Array1<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
    let nb: Array1<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut k = a.dot(&b.t());
    for ((i, j), v) in k.indexed_iter_mut() {
        let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
        *v = (-gamma * d2).exp();
    }
    k
}

/// Gram matrix of `x` with itself: exactly symmetric, with unit diagonal.
pub fn rbf_gram_self(x: ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    let mut k = rbf_gram(x, x, gamma);
    for i in 0..k.nrows() {
        k[[i, i]] = 1.0;
        for j in 0..i {
            k[[i, j]] = k[[j, i]];
        }
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    /// `None` selects `1 / (feature_dim * mean feature variance)` on the
    /// normalized training data.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, gamma: None, tol: 1e-3, max_iter: 1_000_000 }
    }
}

/// One binary machine separating class `pos` (+1) from class `neg` (-1).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMachine {
    pub pos: usize,
    pub neg: usize,
    pub support: Array2<f64>,
    /// `alpha_i * y_i` for each support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final maximal KKT violation `m(a) - M(a)`.
    pub kkt_gap: f64,
    /// Dual objective `sum a - 1/2 a'Qa` at the solution.
    pub dual_objective: f64,
}

impl BinaryMachine {
    pub fn decision(&self, x: ArrayView1<f64>, gamma: f64) -> f64 {
        let mut s = self.bias;
        for (sv, &c) in self.support.rows().into_iter().zip(&self.coef) {
            let d2: f64 = sv.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            s += c * (-gamma * d2).exp();
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    classes: Vec<String>,
    gamma: f64,
    c: f64,
    normalizer: Normalizer,
    machines: Vec<BinaryMachine>,
}

/// Output of a plain SMO solve on a precomputed Gram matrix.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Decision function is `sum_i alpha_i y_i K(x_i, x) - rho`.
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_gap: f64,
    pub dual_objective: f64,
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// SMO with maximal-violating-pair working set selection.
pub fn smo_solve(gram: &Array2<f64>, y: &[f64], c: f64, tol: f64, max_iter: usize) -> SmoSolution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    // gradient of 1/2 a'Qa - e'a
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * gram[[i, j]];

    let mut iterations = 0;
    let mut gap;
    loop {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(y[t], alpha[t], c) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(y[t], alpha[t], c) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || gap < tol || iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (gram[[i, i]] + gram[[j, j]] + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (gram[[i, i]] + gram[[j, j]] - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (k, g) in grad.iter_mut().enumerate() {
            *g += q(i, k) * di + q(j, k) * dj;
        }
    }

    // rho from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
    let dual_objective = -0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();

    SmoSolution { alpha, rho, iterations, converged: gap < tol, kkt_gap: gap, dual_objective }
}

impl SvmModel {
    /// Trains one machine per pair of classes present in `labels`.
    pub fn train(x: ArrayView2<f64>, labels: &[usize], classes: &[String], config: &SvmConfig) -> Result<Self> {
        if x.nrows() != labels.len() {
            return shape_err(format!("{} rows but {} labels", x.nrows(), labels.len()));
        }
        if !(config.c > 0.0) || !(config.tol > 0.0) {
            return invalid("C and tol must be positive");
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return invalid(format!("label {bad} outside the {} classes", classes.len()));
        }
        let present: Vec<usize> = (0..classes.len()).filter(|k| labels.contains(k)).collect();
        if present.len() < 2 {
            return invalid("SVM training needs at least two classes with samples");
        }

        let normalizer = Normalizer::fit(x)?;
        let z = normalizer.apply(x)?;
        let gamma = match config.gamma {
            Some(g) if g > 0.0 => g,
            Some(g) => return invalid(format!("gamma must be positive, got {g}")),
            None => {
                let mean_var = z.var_axis(Axis(0), 0.0).mean().unwrap_or(1.0);
                1.0 / (z.ncols() as f64 * mean_var.max(1e-12))
            }
        };

        let mut machines = Vec::new();
        for (a, &pos) in present.iter().enumerate() {
            for &neg in &present[a + 1..] {
                let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == pos || labels[i] == neg).collect();
                let xs = z.select(Axis(0), &idx);
                let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == pos { 1.0 } else { -1.0 }).collect();
                let gram = rbf_gram_self(xs.view(), gamma);
                let sol = smo_solve(&gram, &y, config.c, config.tol, config.max_iter);
                if !sol.converged {
                    log::warn!(
                        "SMO for classes {pos}/{neg} stopped after {} iterations with KKT gap {:.3e} > tol {:.1e}",
                        sol.iterations,
                        sol.kkt_gap,
                        config.tol
                    );
                }
                let sv: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
                let coef = sv.iter().map(|&i| sol.alpha[i] * y[i]).collect();
                machines.push(BinaryMachine {
                    pos,
                    neg,
                    support: xs.select(Axis(0), &sv),
                    coef,
                    bias: -sol.rho,
                    iterations: sol.iterations,
                    converged: sol.converged,
                    kkt_gap: sol.kkt_gap,
                    dual_objective: sol.dual_objective,
                });
            }
        }
        Ok(Self { classes: classes.to_vec(), gamma, c: config.c, normalizer, machines })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn machines(&self) -> &[BinaryMachine] {
        &self.machines
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn feature_dim(&self) -> usize {
        self.normalizer.dim()
    }

    /// Decision values of every machine on raw (un-normalized) inputs.
    pub fn decision_values(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let z = self.normalizer.apply(x)?;
        let mut out = Array2::zeros((z.nrows(), self.machines.len()));
        for (m, machine) in self.machines.iter().enumerate() {
            if machine.support.nrows() == 0 {
                out.column_mut(m).fill(machine.bias);
                continue;
            }
            let k = rbf_gram(z.view(), machine.support.view(), self.gamma);
            let coef = Array1::from(machine.coef.clone());
            let mut col = k.dot(&coef);
            col += machine.bias;
            out.column_mut(m).assign(&col);
        }
        Ok(out)
    }

    /// Majority vote over pairwise machines; ties go to the lower class index.
    /// Returns labels and the per-class vote counts for every row.
    pub fn predict_with_votes(&self, x: ArrayView2<f64>) -> Result<(Vec<usize>, Array2<u32>)> {
        if x.ncols() != self.feature_dim() {
            return shape_err(format!("inputs have {} columns, model expects {}", x.ncols(), self.feature_dim()));
        }
        let k = self.classes.len();
        if x.nrows() == 0 {
            return Ok((Vec::new(), Array2::zeros((0, k))));
        }
        let dec = self.decision_values(x)?;
        let mut votes = Array2::zeros((x.nrows(), k));
        for (r, row) in dec.rows().into_iter().enumerate() {
            for (m, &d) in row.iter().enumerate() {
                let winner = if d > 0.0 { self.machines[m].pos } else { self.machines[m].neg };
                votes[[r, winner]] += 1;
            }
        }
        let labels = votes
            .rows()
            .into_iter()
            .map(|v| {
                let mut best = 0;
                for (c, &n) in v.iter().enumerate() {
                    if n > v[best] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        Ok((labels, votes))
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(self.predict_with_votes(x)?.0)
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.header().bytes(TAG_SVM);
        w.f64(self.gamma).f64(self.c);
        w.len_u32(self.classes.len());
        for c in &self.classes {
            w.str(c);
        }
        w.f64s(self.normalizer.mean().as_slice().unwrap());
        w.f64s(self.normalizer.std().as_slice().unwrap());
        w.len_u32(self.machines.len());
        for m in &self.machines {
            w.len_u32(m.pos).len_u32(m.neg).f64(m.bias);
            w.f64s(&m.coef);
            w.len_u32(m.support.nrows()).len_u32(m.support.ncols());
            for &v in m.support.iter() {
                w.f64(v);
            }
        }
        w.finish()
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.header()?;
        r.expect_tag(TAG_SVM)?;
        let gamma = r.f64()?;
        let c = r.f64()?;
        let nc = r.u32()? as usize;
        let classes = (0..nc).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let normalizer = Normalizer::from_parts(r.f64s()?, r.f64s()?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let nm = r.u32()? as usize;
        let mut machines = Vec::with_capacity(nm.min(1024));
        for _ in 0..nm {
            let pos = r.u32()? as usize;
            let neg = r.u32()? as usize;
            let bias = r.f64()?;
            let coef = r.f64s()?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            if rows != coef.len() || cols != normalizer.dim() || pos >= nc || neg >= nc {
                return Err(Error::Checkpoint("inconsistent SVM machine block".into()));
            }
            let vals = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            machines.push(BinaryMachine {
                pos,
                neg,
                support: Array2::from_shape_vec((rows, cols), vals).expect("sized"),
                coef,
                bias,
                iterations: 0,
                converged: true,
                kkt_gap: 0.0,
                dual_objective: f64::NAN,
            });
        }
        r.finish()?;
        Ok(Self { classes, gamma, c, normalizer, machines })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, &self.to_checkpoint_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_bytes(&read_file(path)?)
    }
}
