//! Desk-scale stand-in corpora.
//!
//! Each class is a low-rank Gaussian: `x = A_c l + mu_c + s_k + d + noise`,
//! with `l ~ N(0, I_r)`, a per-class mixing matrix `A_c` and mean `mu_c`, a
//! per-session shift `s_k`, an optional corpus-wide offset `d`, and isotropic
//! noise. The class recipe (`A_c`, `mu_c`) depends only on `recipe_seed`, so
//! two corpora sharing it describe the same classes; the sampling seed
//! controls sessions, latents and noise.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::FeatureCorpus;
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, seeded, standard_normal};

/// Emotion-style class names in their canonical order.
pub fn default_class_names() -> Vec<String> {
    ["neutral", "angry", "sad", "happy"].iter().map(|s| s.to_string()).collect()
}

/// Per-class counts with the 1708 / 1103 / 1084 / 1636 proportions, scaled to
/// `total` by largest remainder.
pub fn paper_class_counts(total: usize) -> Vec<usize> {
    const REF: [usize; 4] = [1708, 1103, 1084, 1636];
    let ref_total: usize = REF.iter().sum();
    let exact: Vec<f64> = REF.iter().map(|&r| r as f64 * total as f64 / ref_total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = total - counts.iter().sum::<usize>();
    for &k in order.iter().take(short) {
        counts[k] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpusSpec {
    pub feature_dim: usize,
    /// `(class name, row count)` in class order.
    pub classes: Vec<(String, usize)>,
    pub sessions: u32,
    pub latent_dim: usize,
    pub noise_scale: f64,
    pub class_mean_scale: f64,
    pub session_shift_scale: f64,
    /// Scale of a corpus-wide offset drawn from `domain_seed`; 0 disables it.
    pub domain_shift_scale: f64,
    pub domain_seed: u64,
    pub recipe_seed: u64,
}

impl Default for SynthCorpusSpec {
    /// 4 balanced classes x 200 rows, 5 sessions, 64 features.
    fn default() -> Self {
        Self {
            feature_dim: 64,
            classes: default_class_names().into_iter().map(|c| (c, 200)).collect(),
            sessions: 5,
            latent_dim: 4,
            noise_scale: 1.5,
            class_mean_scale: 0.35,
            session_shift_scale: 0.25,
            domain_shift_scale: 0.0,
            domain_seed: 0,
            recipe_seed: 2018,
        }
    }
}

impl SynthCorpusSpec {
    /// Full-width (1582) variant for dimensionality-stress runs.
    pub fn paper_scale() -> Self {
        Self { feature_dim: 1582, ..Self::default() }
    }

    /// Same recipe with class counts in the reference proportions.
    pub fn with_paper_proportions(mut self, total: usize) -> Self {
        let counts = paper_class_counts(total);
        for ((_, c), n) in self.classes.iter_mut().zip(counts) {
            *c = n;
        }
        self
    }

    /// A second corpus describing the same classes under a distribution
    /// shift: new corpus-wide offset and different session effects.
    pub fn shifted(&self, domain_shift_scale: f64, domain_seed: u64) -> Self {
        Self { domain_shift_scale, domain_seed, ..self.clone() }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|(c, _)| c.clone()).collect()
    }

    pub fn total_rows(&self) -> usize {
        self.classes.iter().map(|(_, n)| n).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.latent_dim == 0 {
            return invalid("feature_dim and latent_dim must be positive");
        }
        if self.classes.len() < 2 {
            return invalid("a corpus needs at least two classes");
        }
        if self.classes.iter().any(|(_, n)| *n == 0) {
            return invalid("every class needs at least one row");
        }
        for (i, (c, _)) in self.classes.iter().enumerate() {
            if c.is_empty() || c.contains(',') || self.classes[..i].iter().any(|(o, _)| o == c) {
                return invalid(format!("bad or duplicate class name {c:?}"));
            }
        }
        if self.sessions == 0 {
            return invalid("sessions must be at least 1");
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return invalid("noise_scale must be positive");
        }
        for (name, v) in [
            ("class_mean_scale", self.class_mean_scale),
            ("session_shift_scale", self.session_shift_scale),
            ("domain_shift_scale", self.domain_shift_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "feature_dim = {}", self.feature_dim).unwrap();
        let classes: Vec<String> = self.classes.iter().map(|(c, n)| format!("{c}:{n}")).collect();
        writeln!(s, "classes = {}", classes.join(",")).unwrap();
        writeln!(s, "sessions = {}", self.sessions).unwrap();
        writeln!(s, "latent_dim = {}", self.latent_dim).unwrap();
        writeln!(s, "noise_scale = {:?}", self.noise_scale).unwrap();
        writeln!(s, "class_mean_scale = {:?}", self.class_mean_scale).unwrap();
        writeln!(s, "session_shift_scale = {:?}", self.session_shift_scale).unwrap();
        writeln!(s, "domain_shift_scale = {:?}", self.domain_shift_scale).unwrap();
        writeln!(s, "domain_seed = {}", self.domain_seed).unwrap();
        writeln!(s, "recipe_seed = {}", self.recipe_seed).unwrap();
        s
    }

    /// Parses `key = value` lines; absent keys keep their default.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| perr("expected key = value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            fn num<T: std::str::FromStr>(v: &str, perr: impl Fn(String) -> Error) -> Result<T> {
                v.parse().map_err(|_| perr(format!("cannot parse {v:?}")))
            }
            match k {
                "feature_dim" => spec.feature_dim = num(v, perr)?,
                "sessions" => spec.sessions = num(v, perr)?,
                "latent_dim" => spec.latent_dim = num(v, perr)?,
                "noise_scale" => spec.noise_scale = num(v, perr)?,
                "class_mean_scale" => spec.class_mean_scale = num(v, perr)?,
                "session_shift_scale" => spec.session_shift_scale = num(v, perr)?,
                "domain_shift_scale" => spec.domain_shift_scale = num(v, perr)?,
                "domain_seed" => spec.domain_seed = num(v, perr)?,
                "recipe_seed" => spec.recipe_seed = num(v, perr)?,
                "classes" => {
                    spec.classes = v
                        .split(',')
                        .map(|entry| {
                            let (name, n) =
                                entry.split_once(':').ok_or_else(|| perr(format!("class entry {entry:?} needs name:count")))?;
                            Ok((name.trim().to_string(), num(n.trim(), perr)?))
                        })
                        .collect::<Result<_>>()?
                }
                other => return Err(perr(format!("unknown key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Pure function of `(spec, seed)`. Each class's rows are spread over the
/// sessions as evenly as possible (earlier sessions take any remainder).
/// Rows are ordered session by session, classes in class order within each.
pub fn generate_synth_corpus(spec: &SynthCorpusSpec, seed: u64) -> Result<FeatureCorpus> {
    spec.validate()?;
    let d = spec.feature_dim;
    let r = spec.latent_dim;
    let k = spec.classes.len();

    let mut recipe = seeded(spec.recipe_seed);
    let mixing: Vec<Array2<f64>> = (0..k).map(|_| standard_normal(&mut recipe, d, r) / (r as f64).sqrt()).collect();
    let means: Vec<Array1<f64>> = (0..k)
        .map(|_| standard_normal(&mut recipe, 1, d).row(0).to_owned() * spec.class_mean_scale)
        .collect();

    let domain: Array1<f64> = if spec.domain_shift_scale > 0.0 {
        standard_normal(&mut seeded(derive_seed(spec.domain_seed, 0xD0)), 1, d).row(0).to_owned()
            * spec.domain_shift_scale
    } else {
        Array1::zeros(d)
    };

    let mut rng = seeded(seed);
    let shifts: Vec<Array1<f64>> = (0..spec.sessions)
        .map(|_| standard_normal(&mut rng, 1, d).row(0).to_owned() * spec.session_shift_scale)
        .collect();

    let per_session = |count: usize, s: usize| {
        let base = count / spec.sessions as usize;
        base + usize::from(s < count % spec.sessions as usize)
    };

    let total = spec.total_rows();
    let mut features = Array2::zeros((total, d));
    let mut ids = Vec::with_capacity(total);
    let mut sessions = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for s in 0..spec.sessions as usize {
        for (c, (name, count)) in spec.classes.iter().enumerate() {
            let n = per_session(*count, s);
            if n == 0 {
                continue;
            }
            let latent = standard_normal(&mut rng, n, r);
            let noise = standard_normal(&mut rng, n, d) * spec.noise_scale;
            let mut block = latent.dot(&mixing[c].t()) + noise;
            block += &means[c];
            block += &shifts[s];
            block += &domain;
            features.slice_mut(ndarray::s![row..row + n, ..]).assign(&block);
            for i in 0..n {
                ids.push(format!("s{}_{}_{:04}", s + 1, name, i));
                sessions.push(s as u32 + 1);
                labels.push(c);
            }
            row += n;
        }
    }
    FeatureCorpus::new(spec.class_names(), ids, sessions, labels, features)
}
