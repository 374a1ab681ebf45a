//! Labeled, session-tagged feature corpora.
//!
//! On disk a corpus is comma-separated text with header
//! `id,session,label,f0,...,f{d-1}`. Floats are written in shortest
//! round-trip decimal form, so save followed by load is bit-exact. The class
//! list of a loaded corpus is the order in which labels first appear.

mod normalize;
mod synth;

pub use normalize::Normalizer;
pub use synth::{default_class_names, generate_synth_corpus, paper_class_counts, SynthCorpusSpec};

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};

use crate::error::{invalid, shape_err, Error, Result};

/// The bundled 800-row sample: the default spec generated with seed 7.
pub fn sample_corpus_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample_corpus.csv")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCorpus {
    classes: Vec<String>,
    ids: Vec<String>,
    sessions: Vec<u32>,
    labels: Vec<usize>,
    features: Array2<f64>,
}

impl FeatureCorpus {
    pub fn new(
        classes: Vec<String>,
        ids: Vec<String>,
        sessions: Vec<u32>,
        labels: Vec<usize>,
        features: Array2<f64>,
    ) -> Result<Self> {
        let n = features.nrows();
        if ids.len() != n || sessions.len() != n || labels.len() != n {
            return shape_err(format!(
                "{n} feature rows but {} ids, {} sessions, {} labels",
                ids.len(),
                sessions.len(),
                labels.len()
            ));
        }
        if features.ncols() == 0 {
            return invalid("feature dimension must be positive");
        }
        if classes.is_empty() {
            return invalid("class list is empty");
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return invalid(format!("duplicate row id {id:?}"));
            }
        }
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].contains(c) {
                return invalid(format!("duplicate class {c:?}"));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return invalid(format!("label index {bad} outside the {} classes", classes.len()));
        }
        if let Some(r) = features.rows().into_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return invalid(format!("row {} ({}) has non-finite features", r, ids[r]));
        }
        if sessions.contains(&0) {
            return invalid("session numbers start at 1");
        }
        Ok(Self { classes, ids, sessions, labels, features })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn sessions(&self) -> &[u32] {
        &self.sessions
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Distinct session numbers, ascending.
    pub fn session_ids(&self) -> Vec<u32> {
        self.sessions.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Rows per class, in class order.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes.len()];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Rows at `indices`, in that order, keeping the class list.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            classes: self.classes.clone(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            sessions: indices.iter().map(|&i| self.sessions[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            features: self.features.select(Axis(0), indices),
        }
    }

    /// Leave-one-session-out split: `(every other session, held_out)`, each
    /// preserving the original row order.
    pub fn split_by_session(&self, held_out: u32) -> Result<(Self, Self)> {
        if !self.sessions.contains(&held_out) {
            return invalid(format!("session {held_out} not present in corpus"));
        }
        let (test, train): (Vec<usize>, Vec<usize>) = (0..self.len()).partition(|&i| self.sessions[i] == held_out);
        Ok((self.subset(&train), self.subset(&test)))
    }

    /// Reorders the class list to `order`, which must contain exactly this
    /// corpus's classes.
    pub fn with_class_order(&self, order: &[String]) -> Result<Self> {
        let mine: BTreeSet<&String> = self.classes.iter().collect();
        let theirs: BTreeSet<&String> = order.iter().collect();
        if mine != theirs || order.len() != self.classes.len() {
            return Err(Error::ClassMismatch(format!("{:?} vs {:?}", self.classes, order)));
        }
        let map: Vec<usize> = self.classes.iter().map(|c| order.iter().position(|o| o == c).unwrap()).collect();
        Ok(Self {
            classes: order.to_vec(),
            labels: self.labels.iter().map(|&l| map[l]).collect(),
            ..self.clone()
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.len() * (self.feature_dim() * 20 + 32));
        s.push_str("id,session,label");
        for j in 0..self.feature_dim() {
            write!(s, ",f{j}").unwrap();
        }
        s.push('\n');
        for (i, row) in self.features.rows().into_iter().enumerate() {
            write!(s, "{},{},{}", self.ids[i], self.sessions[i], self.classes[self.labels[i]]).unwrap();
            for v in row {
                write!(s, ",{v:?}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Empty("corpus file"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 4 || cols[..3] != ["id", "session", "label"] {
            return Err(Error::Parse { line: 1, msg: "header must start with id,session,label,f0".into() });
        }
        let dim = cols.len() - 3;
        for (j, c) in cols[3..].iter().enumerate() {
            if *c != format!("f{j}") {
                return Err(Error::Parse { line: 1, msg: format!("expected column f{j}, found {c:?}") });
            }
        }

        let mut classes: Vec<String> = Vec::new();
        let mut ids = Vec::new();
        let mut sessions = Vec::new();
        let mut labels = Vec::new();
        let mut values = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 3 {
                return Err(perr(format!("expected {} fields ({} features), found {}", dim + 3, dim, fields.len())));
            }
            let id = fields[0].trim();
            if id.is_empty() || !seen.insert(id.to_string()) {
                return Err(perr(format!("empty or duplicate id {id:?}")));
            }
            let session: u32 = fields[1]
                .trim()
                .parse()
                .ok()
                .filter(|&s| s > 0)
                .ok_or_else(|| perr(format!("bad session {:?}", fields[1])))?;
            let label = fields[2].trim();
            if label.is_empty() {
                return Err(perr("empty label".into()));
            }
            let li = match classes.iter().position(|c| c == label) {
                Some(k) => k,
                None => {
                    classes.push(label.to_string());
                    classes.len() - 1
                }
            };
            for f in &fields[3..] {
                let v: f64 = f.trim().parse().map_err(|_| perr(format!("bad feature value {f:?}")))?;
                if !v.is_finite() {
                    return Err(perr(format!("non-finite feature value {f:?}")));
                }
                values.push(v);
            }
            ids.push(id.to_string());
            sessions.push(session);
            labels.push(li);
        }
        if ids.is_empty() {
            return Err(Error::Empty("corpus file has no rows"));
        }
        let features = Array2::from_shape_vec((ids.len(), dim), values).expect("row widths checked");
        Self::new(classes, ids, sessions, labels, features)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    /// Stacks rows of `other` under this corpus. Class lists must match.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.classes != other.classes {
            return Err(Error::ClassMismatch(format!("{:?} vs {:?}", self.classes, other.classes)));
        }
        if self.feature_dim() != other.feature_dim() {
            return shape_err(format!("feature dims {} vs {}", self.feature_dim(), other.feature_dim()));
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()]).expect("same width");
        Self::new(
            self.classes.clone(),
            self.ids.iter().chain(&other.ids).cloned().collect(),
            self.sessions.iter().chain(&other.sessions).copied().collect(),
            self.labels.iter().chain(&other.labels).copied().collect(),
            features,
        )
    }
}
