//! Diagonal-covariance Gaussian mixture priors over a latent space.
//!
//! Each component stands for one class, so a point's class is the component
//! with the highest posterior membership. Densities are evaluated in log space.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, shape_err, Error, Result};
use crate::rng::seeded;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    /// Diagonal of the covariance matrix.
    pub variance: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    dim: usize,
    components: Vec<GaussianComponent>,
    class_names: Vec<String>,
}

impl GmmPrior {
    /// Builds a prior whose weights already sum to one (within 1e-9).
    pub fn new(components: Vec<GaussianComponent>, class_names: Vec<String>) -> Result<Self> {
        if components.is_empty() {
            return invalid("a mixture needs at least one component");
        }
        if components.len() != class_names.len() {
            return invalid(format!(
                "{} components but {} class names",
                components.len(),
                class_names.len()
            ));
        }
        for (i, name) in class_names.iter().enumerate() {
            if class_names[..i].contains(name) {
                return invalid(format!("duplicate class name {name:?}"));
            }
        }
        let dim = components[0].mean.len();
        if dim == 0 {
            return invalid("latent dimension must be positive");
        }
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dim || c.variance.len() != dim {
                return shape_err(format!("component {k} is not {dim}-dimensional"));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return invalid(format!("component {k} has a non-finite mean"));
            }
            if c.variance.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return invalid(format!("component {k} has a non-positive variance"));
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return invalid(format!("component {k} has non-positive weight"));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("mixture weights sum to {total}, not 1"));
        }
        Ok(Self { dim, components, class_names })
    }

    /// Like [`GmmPrior::new`] but rescales positive weights to sum to one.
    pub fn with_unnormalized_weights(mut components: Vec<GaussianComponent>, class_names: Vec<String>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0 && total.is_finite()) {
            return invalid("mixture weights must be positive");
        }
        for c in &mut components {
            c.weight /= total;
        }
        Self::new(components, class_names)
    }

    /// Equal-weight isotropic components with means evenly spaced on a circle.
    pub fn circle(class_names: &[String], radius: f64, sigma: f64) -> Result<Self> {
        let k = class_names.len();
        let components = (0..k)
            .map(|i| {
                let angle = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                GaussianComponent {
                    mean: vec![radius * angle.cos(), radius * angle.sin()],
                    variance: vec![sigma * sigma; 2],
                    weight: 1.0 / k as f64,
                }
            })
            .collect();
        Self::with_unnormalized_weights(components, class_names.to_vec())
    }

    /// The default 2-D latent prior: radius 4, sigma 0.5.
    pub fn default_2d(class_names: &[String]) -> Result<Self> {
        Self::circle(class_names, 4.0, 0.5)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Draws `n` points. With `component` set every point comes from that
    /// component; otherwise components are picked by weight.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
        component: Option<usize>,
    ) -> Result<(Array2<f64>, Vec<usize>)> {
        if n == 0 {
            return invalid("sample count must be at least 1");
        }
        if let Some(k) = component {
            if k >= self.len() {
                return invalid(format!("component {k} out of range for {} components", self.len()));
            }
        }
        let mut points = Array2::zeros((n, self.dim));
        let mut idx = Vec::with_capacity(n);
        for mut row in points.rows_mut() {
            let k = match component {
                Some(k) => k,
                None => self.pick_component(rng.random::<f64>()),
            };
            let c = &self.components[k];
            for (j, v) in row.iter_mut().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                *v = c.mean[j] + c.variance[j].sqrt() * e;
            }
            idx.push(k);
        }
        Ok((points, idx))
    }

    pub fn sample_seeded(&self, n: usize, seed: u64, component: Option<usize>) -> Result<(Array2<f64>, Vec<usize>)> {
        self.sample(n, &mut seeded(seed), component)
    }

    /// Draws one point from each listed component, in order.
    pub fn sample_components<R: Rng + ?Sized>(&self, components: &[usize], rng: &mut R) -> Result<Array2<f64>> {
        let mut points = Array2::zeros((components.len(), self.dim));
        for (mut row, &k) in points.rows_mut().into_iter().zip(components) {
            let c = self
                .components
                .get(k)
                .ok_or_else(|| Error::InvalidArgument(format!("component {k} out of range")))?;
            for (j, v) in row.iter_mut().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                *v = c.mean[j] + c.variance[j].sqrt() * e;
            }
        }
        Ok(points)
    }

    fn pick_component(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                return k;
            }
        }
        self.len() - 1
    }

    /// `ln w_k + ln N(point; mean_k, diag var_k)` for every component.
    pub fn log_joint(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.dim {
            return shape_err(format!("point has {} coordinates, prior is {}-dimensional", point.len(), self.dim));
        }
        Ok(self
            .components
            .iter()
            .map(|c| {
                let mut lp = c.weight.ln();
                for ((x, m), v) in point.iter().zip(&c.mean).zip(&c.variance) {
                    let d = x - m;
                    lp -= 0.5 * (LN_2PI + v.ln() + d * d / v);
                }
                lp
            })
            .collect())
    }

    pub fn log_density(&self, point: &[f64]) -> Result<f64> {
        let lj = self.log_joint(point)?;
        let max = lj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(max + lj.iter().map(|l| (l - max).exp()).sum::<f64>().ln())
    }

    /// Posterior membership of `point` in each component.
    pub fn responsibilities(&self, point: &[f64]) -> Result<Vec<f64>> {
        let lj = self.log_joint(point)?;
        let max = lj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lj.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / total).collect())
    }

    /// Component index of highest membership for each row; ties go to the
    /// lowest index.
    pub fn assign(&self, points: ArrayView2<f64>) -> Result<Vec<usize>> {
        if points.ncols() != self.dim {
            return shape_err(format!("points have {} columns, prior is {}-dimensional", points.ncols(), self.dim));
        }
        points
            .rows()
            .into_iter()
            .map(|row| {
                let lj = self.log_joint(&row.to_vec())?;
                let mut best = 0;
                for (k, &l) in lj.iter().enumerate() {
                    if l > lj[best] {
                        best = k;
                    }
                }
                Ok(best)
            })
            .collect()
    }

    /// Class name of highest membership for each row.
    pub fn assign_class(&self, points: ArrayView2<f64>) -> Result<Vec<&str>> {
        Ok(self.assign(points)?.into_iter().map(|k| self.class_names[k].as_str()).collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
        writeln!(s, "dim = {}", self.dim).unwrap();
        writeln!(s, "components = {}", self.len()).unwrap();
        for (k, c) in self.components.iter().enumerate() {
            writeln!(s, "component.{k}.class = {}", self.class_names[k]).unwrap();
            writeln!(s, "component.{k}.weight = {:.16e}", c.weight).unwrap();
            writeln!(s, "component.{k}.mean = {}", fmt(&c.mean)).unwrap();
            writeln!(s, "component.{k}.variance = {}", fmt(&c.variance)).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut count = None;
        let mut classes: Vec<Option<String>> = Vec::new();
        let mut comps: Vec<(Option<f64>, Option<Vec<f64>>, Option<Vec<f64>>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| perr("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|e| perr(format!("{v:?}: {e}")));
            let nums = |v: &str| v.split_whitespace().map(num).collect::<Result<Vec<f64>>>();
            match key {
                "dim" => dim = Some(value.parse::<usize>().map_err(|e| perr(e.to_string()))?),
                "components" => {
                    let n = value.parse::<usize>().map_err(|e| perr(e.to_string()))?;
                    if n > 4096 {
                        return Err(perr(format!("implausible component count {n}")));
                    }
                    count = Some(n);
                    classes = vec![None; n];
                    comps = vec![(None, None, None); n];
                }
                _ => {
                    let mut parts = key.splitn(3, '.');
                    let (Some("component"), Some(k), Some(field)) = (parts.next(), parts.next(), parts.next()) else {
                        return Err(perr(format!("unknown key {key:?}")));
                    };
                    let k: usize = k.parse().map_err(|_| perr(format!("bad component index in {key:?}")))?;
                    if k >= comps.len() {
                        return Err(perr(format!("component {k} before/beyond declared count")));
                    }
                    match field {
                        "class" => classes[k] = Some(value.to_string()),
                        "weight" => comps[k].0 = Some(num(value)?),
                        "mean" => comps[k].1 = Some(nums(value)?),
                        "variance" => comps[k].2 = Some(nums(value)?),
                        _ => return Err(perr(format!("unknown key {key:?}"))),
                    }
                }
            }
        }
        let missing = |what: &str| Error::Parse { line: 0, msg: format!("missing {what}") };
        let dim = dim.ok_or_else(|| missing("dim"))?;
        count.ok_or_else(|| missing("components"))?;
        let mut components = Vec::with_capacity(comps.len());
        let mut names = Vec::with_capacity(comps.len());
        for (k, ((w, m, v), c)) in comps.into_iter().zip(classes).enumerate() {
            let field = |f: &str| missing(&format!("component.{k}.{f}"));
            names.push(c.ok_or_else(|| field("class"))?);
            components.push(GaussianComponent {
                weight: w.ok_or_else(|| field("weight"))?,
                mean: m.ok_or_else(|| field("mean"))?,
                variance: v.ok_or_else(|| field("variance"))?,
            });
        }
        let prior = Self::new(components, names)?;
        if prior.dim != dim {
            return shape_err(format!("declared dim {dim} but components are {}-dimensional", prior.dim));
        }
        Ok(prior)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
