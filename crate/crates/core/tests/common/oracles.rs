//! Independent numerical oracles for the SVM: exact dual optima by
//! enumeration, Jacobi eigenvalues, and a KKT audit.

#![allow(dead_code)]

use ganser::svm::{SvmConfig, SvmModel};
use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Solves `a x = b` by Gaussian elimination with partial pivoting; `None`
/// when the system is numerically singular.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

pub fn dual(q: &Array2<f64>, alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * q[[i, j]];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Exact maximum of the SVM dual by enumerating which variables sit at 0, at
/// C, or strictly between; free variables solve the stationarity system with
/// the equality constraint's multiplier.
pub fn brute_force_dual(gram: &Array2<f64>, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let q = Array2::from_shape_fn((n, n), |(i, j)| y[i] * y[j] * gram[[i, j]]);
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut k = code;
        for s in state.iter_mut() {
            *s = (k % 3) as u8;
            k /= 3;
        }
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let fixed_sum: f64 = (0..n).filter(|&i| state[i] != 2).map(|i| y[i] * alpha[i]).sum();
        if free.is_empty() {
            if fixed_sum.abs() > 1e-12 {
                continue;
            }
        } else {
            let m = free.len();
            let mut a = vec![vec![0.0; m + 1]; m + 1];
            let mut b = vec![0.0; m + 1];
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[r][s] = q[[i, j]];
                }
                a[r][m] = y[i];
                a[m][r] = y[i];
                b[r] = 1.0 - (0..n).filter(|&j| state[j] == 1).map(|j| q[[i, j]] * c).sum::<f64>();
            }
            b[m] = -fixed_sum;
            let Some(sol) = solve(a, b) else { continue };
            if sol[..m].iter().any(|&v| v < -1e-12 || v > c + 1e-12) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r].clamp(0.0, c);
            }
        }
        best = best.max(dual(&q, &alpha));
    }
    best
}

pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Array2<f64>, Vec<f64>) {
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
    let mut y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    (x, y)
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
pub fn min_eigenvalue(mut a: Array2<f64>) -> f64 {
    let n = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[[i, j]].powi(2)).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).fold(f64::INFINITY, f64::min)
}

pub fn blobs(rng: &mut ChaCha8Rng, per_class: usize, classes: usize, spread: f64) -> (Array2<f64>, Vec<usize>) {
    let centers: Vec<[f64; 2]> = (0..classes)
        .map(|c| {
            let a = c as f64 * std::f64::consts::TAU / classes as f64;
            [3.0 * a.cos(), 3.0 * a.sin()]
        })
        .collect();
    let n = per_class * classes;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let x = Array2::from_shape_fn((n, 2), |(i, j)| centers[labels[i]][j] + spread * rng.random_range(-1.0..1.0));
    (x, labels)
}

pub fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

/// Rows of any pairwise machine whose margin contradicts its dual variable
/// by more than `cfg.tol`, plus any violated equality constraint.
pub fn kkt_violations(model: &SvmModel, x: &Array2<f64>, labels: &[usize], cfg: &SvmConfig) -> Vec<String> {
    let z = model.normalizer().apply(x.view()).unwrap();
    let mut out = Vec::new();
    for m in model.machines() {
        if !(m.converged && m.kkt_gap < cfg.tol) {
            out.push(format!("machine {}/{} gap {}", m.pos, m.neg, m.kkt_gap));
        }
        let coef_sum: f64 = m.coef.iter().sum();
        if coef_sum.abs() > 1e-9 {
            out.push(format!("machine {}/{}: equality constraint off by {coef_sum}", m.pos, m.neg));
        }
        for (i, &l) in labels.iter().enumerate() {
            if l != m.pos && l != m.neg {
                continue;
            }
            let yi = if l == m.pos { 1.0 } else { -1.0 };
            let row = z.row(i);
            // alpha of this row: its coefficient if it is a support vector
            let alpha = m
                .support
                .axis_iter(Axis(0))
                .zip(&m.coef)
                .find(|(s, _)| s == &row)
                .map_or(0.0, |(_, c)| c.abs());
            let margin = yi * m.decision(row, model.gamma());
            let ok = if alpha > cfg.c + 1e-12 {
                false
            } else if alpha == 0.0 {
                margin >= 1.0 - cfg.tol
            } else if alpha >= cfg.c {
                margin <= 1.0 + cfg.tol
            } else {
                (margin - 1.0).abs() <= cfg.tol
            };
            if !ok {
                out.push(format!("machine {}/{} row {i}: alpha {alpha} margin {margin}", m.pos, m.neg));
            }
        }
    }
    out
}
