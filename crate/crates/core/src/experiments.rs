//! Unweighted average recall and the three evaluation harnesses: synthetic
//! rows in training (leave-one-session-out), synthetic rows as the test set,
//! and cross-corpus evaluation.
//!
//! Every fold trains its models once and shares them between all requested
//! scenarios, so a full table costs one auto-encoder and at most three GANs
//! per fold.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::aae::{train_aae, AaeConfig, AaeModel};
use crate::corpus::FeatureCorpus;
use crate::error::{invalid, Error, Result};
use crate::gan::{
    train_conditional_gan_from_aae, train_vanilla_gan, GanArchitecture, GanModel, InitKind, LossHistory, TrainSchedule,
};
use crate::gmm::GmmPrior;
use crate::rng::derive_seed;
use crate::svm::{SvmConfig, SvmModel};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        Self { classes, counts: Array2::zeros((k, k)) }
    }

    pub fn from_counts(classes: Vec<String>, counts: Array2<u64>) -> Result<Self> {
        let k = classes.len();
        if counts.dim() != (k, k) {
            return Err(Error::Shape(format!("{k} classes need a {k}x{k} matrix, got {:?}", counts.dim())));
        }
        Ok(Self { classes, counts })
    }

    pub fn from_predictions(classes: Vec<String>, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!("{} true labels vs {} predictions", truth.len(), predicted.len())));
        }
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.classes.len();
        if truth >= k || predicted >= k {
            return invalid(format!("label pair ({truth}, {predicted}) out of range for {k} classes"));
        }
        self.counts[[truth, predicted]] += 1;
        Ok(())
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    /// Per-class recall; undefined (an error) for a class with no rows.
    pub fn recalls(&self) -> Result<Vec<f64>> {
        if self.classes.is_empty() {
            return Err(Error::Empty("confusion matrix has no classes"));
        }
        self.row_sums()
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                if n == 0 {
                    invalid(format!("class {} has no test rows, recall is undefined", self.classes[i]))
                } else {
                    Ok(self.counts[[i, i]] as f64 / n as f64)
                }
            })
            .collect()
    }

    pub fn uar(&self) -> Result<f64> {
        let r = self.recalls()?;
        Ok(100.0 * r.iter().sum::<f64>() / r.len() as f64)
    }

    /// UAR over the classes that have rows, for test sets whose composition
    /// is not under control (generated rows labeled after the fact).
    pub fn uar_present_classes(&self) -> Result<f64> {
        let sums = self.row_sums();
        let recalls: Vec<f64> = (0..sums.len()).filter(|&i| sums[i] > 0).map(|i| self.counts[[i, i]] as f64 / sums[i] as f64).collect();
        if recalls.is_empty() {
            return Err(Error::Empty("confusion matrix has no rows"));
        }
        if recalls.len() < sums.len() {
            log::warn!("UAR over {} of {} classes: some classes have no test rows", recalls.len(), sums.len());
        }
        Ok(100.0 * recalls.iter().sum::<f64>() / recalls.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for c in &self.classes {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
        for (i, c) in self.classes.iter().enumerate() {
            s.push_str(c);
            for j in 0..self.classes.len() {
                write!(s, ",{}", self.counts[[i, j]]).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Unweighted average recall in percent.
pub fn uar(cm: &ConfusionMatrix) -> Result<f64> {
    cm.uar()
}

/// UAR of a predictor that ignores its input: 100 / K.
pub fn chance_uar(class_count: usize) -> f64 {
    100.0 / class_count as f64
}

/// Training-set compositions compared in the augmentation experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    Synthetic2dOnly,
    Real2dOnly,
    Real2dPlusSynthetic,
    SyntheticCondOnly,
    RealOnly,
    RealPlusCondBaseline,
    RealPlusCondImproved,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Synthetic2dOnly,
        Scenario::Real2dOnly,
        Scenario::Real2dPlusSynthetic,
        Scenario::SyntheticCondOnly,
        Scenario::RealOnly,
        Scenario::RealPlusCondBaseline,
        Scenario::RealPlusCondImproved,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Synthetic2dOnly => "synthetic-2d-only",
            Scenario::Real2dOnly => "real-2d-only",
            Scenario::Real2dPlusSynthetic => "real-2d+synthetic",
            Scenario::SyntheticCondOnly => "synthetic-cond-only",
            Scenario::RealOnly => "real-only",
            Scenario::RealPlusCondBaseline => "real+cond-baseline",
            Scenario::RealPlusCondImproved => "real+cond-improved",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::Synthetic2dOnly => "Only synthetic 2D code vectors",
            Scenario::Real2dOnly => "Only 2D code vectors",
            Scenario::Real2dPlusSynthetic => "2D code vectors + synthetic",
            Scenario::SyntheticCondOnly => "Only improved-conditional",
            Scenario::RealOnly => "Only real features",
            Scenario::RealPlusCondBaseline => "Real features + baseline-conditional",
            Scenario::RealPlusCondImproved => "Real features + improved-conditional",
        }
    }

    /// Works in the auto-encoder's 2-D code space.
    pub fn uses_codes(self) -> bool {
        matches!(self, Scenario::Synthetic2dOnly | Scenario::Real2dOnly | Scenario::Real2dPlusSynthetic)
    }

    fn needs(self) -> Needs {
        let mut n = Needs::default();
        match self {
            Scenario::Synthetic2dOnly | Scenario::Real2dPlusSynthetic => n.vanilla = true,
            Scenario::SyntheticCondOnly | Scenario::RealPlusCondImproved => n.improved = true,
            Scenario::RealPlusCondBaseline => n.baseline = true,
            Scenario::Real2dOnly | Scenario::RealOnly => {}
        }
        n.aae = self.uses_codes() || n.improved;
        n
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario {s:?}")))
    }
}

/// Generators whose output is used as the test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SynthTestKind {
    Vanilla2d,
    CondImproved,
}

impl SynthTestKind {
    pub const ALL: [SynthTestKind; 2] = [SynthTestKind::Vanilla2d, SynthTestKind::CondImproved];

    pub fn name(self) -> &'static str {
        match self {
            SynthTestKind::Vanilla2d => "vanilla-2d",
            SynthTestKind::CondImproved => "cond-improved",
        }
    }

    fn needs(self) -> Needs {
        match self {
            SynthTestKind::Vanilla2d => Needs { aae: true, vanilla: true, ..Needs::default() },
            SynthTestKind::CondImproved => Needs { aae: true, improved: true, ..Needs::default() },
        }
    }
}

impl fmt::Display for SynthTestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthTestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown synthetic-test generator {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Needs {
    aae: bool,
    vanilla: bool,
    baseline: bool,
    improved: bool,
}

impl Needs {
    fn union(self, o: Needs) -> Needs {
        Needs {
            aae: self.aae || o.aae,
            vanilla: self.vanilla || o.vanilla,
            baseline: self.baseline || o.baseline,
            improved: self.improved || o.improved,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// `None` disables every scenario that needs the auto-encoder.
    pub aae: Option<AaeConfig>,
    pub vanilla: TrainSchedule,
    pub vanilla_arch: GanArchitecture,
    pub cond_baseline: TrainSchedule,
    pub cond_improved: TrainSchedule,
    pub cond_arch: GanArchitecture,
    pub svm: SvmConfig,
    /// Synthetic rows per fold; defaults to the fold's training-set size.
    pub n_synth: Option<usize>,
    pub prior_radius: f64,
    pub prior_sigma: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            aae: Some(AaeConfig::default()),
            vanilla: TrainSchedule::baseline(),
            vanilla_arch: GanArchitecture::vanilla(),
            cond_baseline: TrainSchedule::baseline().with_epochs(150),
            cond_improved: TrainSchedule::improved().with_epochs(150),
            cond_arch: GanArchitecture::conditional(),
            svm: SvmConfig::default(),
            n_synth: None,
            prior_radius: 4.0,
            prior_sigma: 0.5,
        }
    }
}

impl ExperimentConfig {
    /// Flat `key = value` pairs describing the run. Per-model seeds are
    /// omitted because every fold derives its own from `master_seed`.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, val: String| v.push((k.to_string(), val));
        put("master_seed", self.master_seed.to_string());
        match &self.aae {
            Some(a) => {
                put("aae.encoder_hidden", join(&a.encoder_hidden));
                put("aae.decoder_hidden", join(&a.decoder_hidden));
                put("aae.discriminator_hidden", join(&a.discriminator_hidden));
                put("aae.learning_rate", format!("{:?}", a.learning_rate));
                put("aae.epochs", a.epochs.to_string());
                put("aae.batch_size", a.batch_size.to_string());
            }
            None => put("aae", "none".into()),
        }
        for (name, s) in [("vanilla", &self.vanilla), ("cond_baseline", &self.cond_baseline), ("cond_improved", &self.cond_improved)] {
            put(&format!("{name}.gen_lr"), format!("{:?}", s.gen_lr));
            put(&format!("{name}.disc_lr"), format!("{:?}", s.disc_lr));
            put(&format!("{name}.gen_steps_per_disc_step"), s.gen_steps_per_disc_step.to_string());
            put(&format!("{name}.epochs"), s.epochs.to_string());
            put(&format!("{name}.batch_size"), s.batch_size.to_string());
            put(&format!("{name}.init"), format!("{:?}", s.init).to_lowercase());
        }
        for (name, a) in [("vanilla_arch", &self.vanilla_arch), ("cond_arch", &self.cond_arch)] {
            put(&format!("{name}.generator_hidden"), join(&a.generator_hidden));
            put(&format!("{name}.discriminator_hidden"), join(&a.discriminator_hidden));
        }
        put("svm.c", format!("{:?}", self.svm.c));
        put("svm.gamma", self.svm.gamma.map_or("auto".into(), |g| format!("{g:?}")));
        put("svm.tol", format!("{:?}", self.svm.tol));
        put("svm.max_iter", self.svm.max_iter.to_string());
        put("n_synth", self.n_synth.map_or("train_size".into(), |n| n.to_string()));
        put("prior_radius", format!("{:?}", self.prior_radius));
        put("prior_sigma", format!("{:?}", self.prior_sigma));
        v
    }

    /// Sets one key of the [`ExperimentConfig::echo`] vocabulary. `aae`
    /// accepts `on` or `none`; `svm.gamma` accepts `auto`; `n_synth` accepts
    /// `train_size`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if key == "aae" {
            match value {
                "none" => self.aae = None,
                "on" => {
                    self.aae.get_or_insert_with(AaeConfig::default);
                }
                other => return invalid(format!("aae must be on or none, got {other:?}")),
            }
            return Ok(());
        }
        if let Some(field) = key.strip_prefix("aae.") {
            let Some(a) = self.aae.as_mut() else {
                return invalid(format!("{key} given but the auto-encoder is disabled"));
            };
            match field {
                "encoder_hidden" => a.encoder_hidden = parse_widths(key, value)?,
                "decoder_hidden" => a.decoder_hidden = parse_widths(key, value)?,
                "discriminator_hidden" => a.discriminator_hidden = parse_widths(key, value)?,
                "learning_rate" => a.learning_rate = parse_value(key, value)?,
                "epochs" => a.epochs = parse_value(key, value)?,
                "batch_size" => a.batch_size = parse_value(key, value)?,
                _ => return invalid(format!("unknown key {key}")),
            }
            return Ok(());
        }
        if let Some((prefix, field)) = key.split_once('.') {
            let schedule = match prefix {
                "vanilla" => Some(&mut self.vanilla),
                "cond_baseline" => Some(&mut self.cond_baseline),
                "cond_improved" => Some(&mut self.cond_improved),
                _ => None,
            };
            if let Some(s) = schedule {
                return set_schedule_field(s, key, field, value);
            }
            let arch = match prefix {
                "vanilla_arch" => Some(&mut self.vanilla_arch),
                "cond_arch" => Some(&mut self.cond_arch),
                _ => None,
            };
            if let Some(a) = arch {
                match field {
                    "generator_hidden" => a.generator_hidden = parse_widths(key, value)?,
                    "discriminator_hidden" => a.discriminator_hidden = parse_widths(key, value)?,
                    _ => return invalid(format!("unknown key {key}")),
                }
                return Ok(());
            }
        }
        match key {
            "master_seed" => self.master_seed = parse_value(key, value)?,
            "svm.c" => self.svm.c = parse_value(key, value)?,
            "svm.gamma" => self.svm.gamma = if value == "auto" { None } else { Some(parse_value(key, value)?) },
            "svm.tol" => self.svm.tol = parse_value(key, value)?,
            "svm.max_iter" => self.svm.max_iter = parse_value(key, value)?,
            "n_synth" => self.n_synth = if value == "train_size" { None } else { Some(parse_value(key, value)?) },
            "prior_radius" => self.prior_radius = parse_value(key, value)?,
            "prior_sigma" => self.prior_sigma = parse_value(key, value)?,
            _ => return invalid(format!("unknown key {key}")),
        }
        Ok(())
    }

    fn check(&self, needs: Needs) -> Result<()> {
        if needs.aae && self.aae.is_none() {
            return invalid("requested scenarios need the auto-encoder but no auto-encoder config was given");
        }
        if self.n_synth == Some(0) {
            return invalid("n_synth must be positive");
        }
        for s in [&self.vanilla, &self.cond_baseline, &self.cond_improved] {
            s.validate()?;
        }
        if let Some(a) = &self.aae {
            a.validate()?;
        }
        Ok(())
    }
}

/// Sets one field of a schedule from its echoed text form.
pub fn set_schedule_field(s: &mut TrainSchedule, key: &str, field: &str, value: &str) -> Result<()> {
    match field {
        "gen_lr" => s.gen_lr = parse_value(key, value)?,
        "disc_lr" => s.disc_lr = parse_value(key, value)?,
        "gen_steps_per_disc_step" => s.gen_steps_per_disc_step = parse_value(key, value)?,
        "epochs" => s.epochs = parse_value(key, value)?,
        "batch_size" => s.batch_size = parse_value(key, value)?,
        "seed" => s.seed = parse_value(key, value)?,
        "init" => {
            s.init = match value {
                "random" => InitKind::Random,
                "fromdecoder" | "from_decoder" | "from-decoder" => InitKind::FromDecoder,
                other => return invalid(format!("{key}: init must be random or fromdecoder, got {other:?}")),
            }
        }
        _ => return invalid(format!("unknown key {key}")),
    }
    Ok(())
}

/// Parses a comma-separated list of layer widths.
pub fn parse_widths(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|w| parse_value(key, w)).collect()
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {value:?}")))
}

fn join(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    /// Held-out session, or `None` for a cross-corpus fold.
    pub held_out: Option<u32>,
    pub confusion: ConfusionMatrix,
    pub uar: f64,
    /// Rows actually used to fit the classifier (real plus synthetic).
    pub train_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub scenario: String,
    pub folds: Vec<FoldResult>,
    pub mean_uar: f64,
    pub config: Vec<(String, String)>,
}

impl ExperimentReport {
    pub fn new(scenario: impl Into<String>, folds: Vec<FoldResult>, config: Vec<(String, String)>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::Empty("report has no folds"));
        }
        let mean_uar = folds.iter().map(|f| f.uar).sum::<f64>() / folds.len() as f64;
        Ok(Self { scenario: scenario.into(), folds, mean_uar, config })
    }

    /// `scenario,fold,held_out,uar` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario,fold,held_out,uar\n");
        for f in &self.folds {
            let held = f.held_out.map_or("cross-corpus".to_string(), |h| h.to_string());
            writeln!(s, "{},{},{},{:?}", self.scenario, f.fold, held, f.uar).unwrap();
        }
        s
    }

    pub fn confusion_text(&self) -> String {
        let mut s = String::new();
        for f in &self.folds {
            writeln!(s, "# fold {} held_out {}", f.fold, f.held_out.map_or("cross-corpus".into(), |h| h.to_string())).unwrap();
            s.push_str(&f.confusion.to_csv());
        }
        s
    }

    pub fn config_text(&self) -> String {
        self.config.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Scenario / mean UAR table with the analytic chance row first.
pub fn summary_table(reports: &[ExperimentReport], class_count: usize) -> String {
    let mut s = String::from("scenario,mean_uar\n");
    writeln!(s, "chance,{:?}", chance_uar(class_count)).unwrap();
    for r in reports {
        writeln!(s, "{},{:?}", r.scenario, r.mean_uar).unwrap();
    }
    s
}

/// What each fitting stage of one fold saw: the session of every real row it
/// was given, plus how many synthetic rows were mixed in.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub stage: String,
    pub sessions: Vec<u32>,
    pub synthetic_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldAudit {
    pub fold: usize,
    pub test_sessions: Vec<u32>,
    pub entries: Vec<AuditEntry>,
}

impl FoldAudit {
    fn record(&mut self, stage: impl Into<String>, sessions: &[u32], synthetic_rows: usize) {
        self.entries.push(AuditEntry { stage: stage.into(), sessions: sessions.to_vec(), synthetic_rows });
    }

    /// Real rows from a test session that reached any fitting stage.
    pub fn leaked_rows(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.sessions.iter().filter(|s| self.test_sessions.contains(s)).count())
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeakageAudit {
    pub folds: Vec<FoldAudit>,
}

impl LeakageAudit {
    pub fn leaked_rows(&self) -> usize {
        self.folds.iter().map(FoldAudit::leaked_rows).sum()
    }
}

/// GAN loss curves produced during a run, keyed by fold and model.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub fold: usize,
    pub model: String,
    pub history: LossHistory,
}

/// Everything a harness run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub scenario_reports: Vec<ExperimentReport>,
    pub synth_test_reports: Vec<ExperimentReport>,
    pub audit: LeakageAudit,
    pub histories: Vec<HistoryEntry>,
}

/// Models and derived data of one fold.
struct FoldModels {
    aae: Option<AaeModel>,
    codes_train: Option<Array2<f64>>,
    codes_test: Option<Array2<f64>>,
    /// 2-D synthetic codes with their mixture assignments.
    vanilla_synth: Option<(Array2<f64>, Vec<usize>)>,
    baseline_synth: Option<(Array2<f64>, Vec<usize>)>,
    improved_synth: Option<(Array2<f64>, Vec<usize>)>,
}

/// Per-class quotas summing to `n`, remainder to the lowest class indices.
fn balanced_quota(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|c| n / k + usize::from(c < n % k)).collect()
}

/// Conditional samples with exact per-class quotas.
fn generate_balanced_conditional(model: &GanModel, n: usize, seed: u64) -> Result<(Array2<f64>, Vec<usize>)> {
    let k = model.class_count();
    let mut blocks = Vec::new();
    let mut labels = Vec::new();
    for (c, q) in balanced_quota(n, k).into_iter().enumerate() {
        if q == 0 {
            continue;
        }
        let g = model.generate(q, derive_seed(seed, c as u64), Some(c))?;
        blocks.push(g.samples);
        labels.extend(std::iter::repeat_n(c, q));
    }
    let views: Vec<ArrayView2<f64>> = blocks.iter().map(|b| b.view()).collect();
    let x = ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((x, labels))
}

/// Unconditional 2-D samples labeled by highest mixture membership, filled
/// per class up to the balanced quota by drawing more batches. A class the
/// generator never reaches is left short.
fn generate_balanced_vanilla(model: &GanModel, prior: &GmmPrior, n: usize, seed: u64) -> Result<(Array2<f64>, Vec<usize>)> {
    const MAX_ROUNDS: u64 = 20;
    let k = prior.len();
    let quota = balanced_quota(n, k);
    let mut taken = vec![0usize; k];
    let mut rows: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    for round in 0..MAX_ROUNDS {
        let g = model.generate(n, derive_seed(seed, round), None)?;
        for (i, c) in prior.assign(g.samples.view())?.into_iter().enumerate() {
            if taken[c] < quota[c] {
                taken[c] += 1;
                rows.extend(g.samples.row(i).iter());
                labels.push(c);
            }
        }
        if taken == quota {
            break;
        }
    }
    if taken != quota {
        log::warn!("vanilla generator filled class quotas {taken:?} of {quota:?}");
    }
    let dim = model.data_dim();
    let x = Array2::from_shape_vec((labels.len(), dim), rows).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((x, labels))
}

fn stack(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(0), &[a, b]).expect("equal widths")
}

const STREAM_AAE: u64 = 1;
const STREAM_VANILLA: u64 = 2;
const STREAM_BASELINE: u64 = 3;
const STREAM_IMPROVED: u64 = 4;
const STREAM_GENERATE: u64 = 5;

/// Trains every model one fold needs. `val` is only used to record GAN
/// validation curves.
fn fit_fold(
    train: &FeatureCorpus,
    test: &FeatureCorpus,
    val: Option<&FeatureCorpus>,
    needs: Needs,
    cfg: &ExperimentConfig,
    fold: usize,
    fold_seed: u64,
    audit: &mut FoldAudit,
    histories: &mut Vec<HistoryEntry>,
) -> Result<FoldModels> {
    let prior = GmmPrior::circle(train.classes(), cfg.prior_radius, cfg.prior_sigma)?;
    let n_synth = cfg.n_synth.unwrap_or(train.len());
    let empty = train.subset(&[]);
    let val = val.unwrap_or(&empty);
    let mut m = FoldModels {
        aae: None,
        codes_train: None,
        codes_test: None,
        vanilla_synth: None,
        baseline_synth: None,
        improved_synth: None,
    };

    if needs.aae {
        let aae_cfg = AaeConfig { seed: derive_seed(fold_seed, STREAM_AAE), ..cfg.aae.clone().expect("checked") };
        audit.record("aae", train.sessions(), 0);
        let (aae, _) = train_aae(train, &prior, &aae_cfg)?;
        m.codes_train = Some(aae.encode(train.features().view())?);
        m.codes_test = Some(aae.encode(test.features().view())?);
        m.aae = Some(aae);
    }

    if needs.vanilla {
        let codes = m.codes_train.as_ref().expect("vanilla GAN needs codes");
        let val_codes = match (&m.aae, val.is_empty()) {
            (Some(aae), false) => aae.encode(val.features().view())?,
            _ => Array2::zeros((0, codes.ncols())),
        };
        let schedule = cfg.vanilla.clone().with_seed(derive_seed(fold_seed, STREAM_VANILLA));
        audit.record("gan-vanilla", train.sessions(), 0);
        let (gan, h) = train_vanilla_gan(codes.view(), val_codes.view(), &schedule, &cfg.vanilla_arch)?;
        histories.push(HistoryEntry { fold, model: "gan-vanilla".into(), history: h });
        m.vanilla_synth = Some(generate_balanced_vanilla(&gan, &prior, n_synth, derive_seed(fold_seed, STREAM_GENERATE))?);
    }

    for (wanted, name, schedule, stream) in [
        (needs.baseline, "gan-cond-baseline", &cfg.cond_baseline, STREAM_BASELINE),
        (needs.improved, "gan-cond-improved", &cfg.cond_improved, STREAM_IMPROVED),
    ] {
        if !wanted {
            continue;
        }
        let schedule = schedule.clone().with_seed(derive_seed(fold_seed, stream));
        audit.record(name, train.sessions(), 0);
        let (gan, h) = train_conditional_gan_from_aae(train, val, m.aae.as_ref(), &prior, &schedule, &cfg.cond_arch)?;
        histories.push(HistoryEntry { fold, model: name.into(), history: h });
        let synth = generate_balanced_conditional(&gan, n_synth, derive_seed(derive_seed(fold_seed, STREAM_GENERATE), stream))?;
        if stream == STREAM_BASELINE {
            m.baseline_synth = Some(synth);
        } else {
            m.improved_synth = Some(synth);
        }
    }
    Ok(m)
}

fn take(o: &Option<(Array2<f64>, Vec<usize>)>) -> (ArrayView2<'_, f64>, &[usize]) {
    o.as_ref().map(|(x, y)| (x.view(), y.as_slice())).expect("fitted for this scenario")
}

struct FoldScores {
    scenarios: Vec<(Scenario, ConfusionMatrix, usize)>,
    synth_tests: Vec<(SynthTestKind, ConfusionMatrix, usize)>,
}

/// Fits one SVM per distinct training set and scores it.
fn score_fold(
    train: &FeatureCorpus,
    test: &FeatureCorpus,
    m: &FoldModels,
    scenarios: &[Scenario],
    synth_tests: &[SynthTestKind],
    cfg: &ExperimentConfig,
    audit: &mut FoldAudit,
) -> Result<FoldScores> {
    let classes = train.classes().to_vec();
    let real_x = train.features().view();
    let real_y = train.labels();
    let no_sessions: &[u32] = &[];
    let mut svm_cache: BTreeMap<&'static str, SvmModel> = BTreeMap::new();

    let mut fit = |key: &'static str, x: ArrayView2<f64>, y: &[usize], sessions: &[u32], synthetic: usize| -> Result<SvmModel> {
        if let Some(model) = svm_cache.get(key) {
            return Ok(model.clone());
        }
        audit.record(format!("svm:{key}"), sessions, synthetic);
        let model = SvmModel::train(x, y, &classes, &cfg.svm)?;
        svm_cache.insert(key, model.clone());
        Ok(model)
    };
    let eval = |model: &SvmModel, x: ArrayView2<f64>, y: &[usize]| -> Result<ConfusionMatrix> {
        ConfusionMatrix::from_predictions(classes.clone(), y, &model.predict(x)?)
    };

    let mut out = FoldScores { scenarios: Vec::new(), synth_tests: Vec::new() };
    for &sc in scenarios {
        let (model, test_x, rows) = match sc {
            Scenario::Synthetic2dOnly => {
                let (sx, sy) = take(&m.vanilla_synth);
                (fit("synthetic-2d", sx, sy, no_sessions, sy.len())?, m.codes_test.as_ref().expect("codes"), sy.len())
            }
            Scenario::Real2dOnly => {
                let codes = m.codes_train.as_ref().expect("codes");
                (fit("real-2d", codes.view(), real_y, train.sessions(), 0)?, m.codes_test.as_ref().expect("codes"), train.len())
            }
            Scenario::Real2dPlusSynthetic => {
                let codes = m.codes_train.as_ref().expect("codes");
                let (sx, sy) = take(&m.vanilla_synth);
                let y: Vec<usize> = real_y.iter().chain(sy).copied().collect();
                let x = stack(codes.view(), sx);
                (fit("real-2d+synthetic", x.view(), &y, train.sessions(), sy.len())?, m.codes_test.as_ref().expect("codes"), y.len())
            }
            Scenario::SyntheticCondOnly => {
                let (sx, sy) = take(&m.improved_synth);
                (fit("synthetic-cond", sx, sy, no_sessions, sy.len())?, test.features(), sy.len())
            }
            Scenario::RealOnly => (fit("real", real_x, real_y, train.sessions(), 0)?, test.features(), train.len()),
            Scenario::RealPlusCondBaseline | Scenario::RealPlusCondImproved => {
                let (key, synth) = if sc == Scenario::RealPlusCondBaseline {
                    ("real+cond-baseline", &m.baseline_synth)
                } else {
                    ("real+cond-improved", &m.improved_synth)
                };
                let (sx, sy) = take(synth);
                let y: Vec<usize> = real_y.iter().chain(sy).copied().collect();
                let x = stack(real_x, sx);
                (fit(key, x.view(), &y, train.sessions(), sy.len())?, test.features(), y.len())
            }
        };
        out.scenarios.push((sc, eval(&model, test_x.view(), test.labels())?, rows));
    }

    for &kind in synth_tests {
        let (model, (sx, sy), rows) = match kind {
            SynthTestKind::Vanilla2d => {
                let codes = m.codes_train.as_ref().expect("codes");
                (fit("real-2d", codes.view(), real_y, train.sessions(), 0)?, take(&m.vanilla_synth), train.len())
            }
            SynthTestKind::CondImproved => (fit("real", real_x, real_y, train.sessions(), 0)?, take(&m.improved_synth), train.len()),
        };
        out.synth_tests.push((kind, eval(&model, sx, sy)?, rows));
    }
    Ok(out)
}

fn needs_of(scenarios: &[Scenario], synth_tests: &[SynthTestKind]) -> Needs {
    let mut n = Needs::default();
    for s in scenarios {
        n = n.union(s.needs());
    }
    for k in synth_tests {
        n = n.union(k.needs());
    }
    n
}

fn assemble(
    scenarios: &[Scenario],
    synth_tests: &[SynthTestKind],
    per_fold: Vec<(usize, Option<u32>, FoldScores)>,
    cfg: &ExperimentConfig,
    audit: LeakageAudit,
    histories: Vec<HistoryEntry>,
) -> Result<RunOutput> {
    let config = cfg.echo();
    let mut scenario_reports = Vec::new();
    for (i, sc) in scenarios.iter().enumerate() {
        let folds = per_fold
            .iter()
            .map(|(fold, held, s)| {
                let (_, cm, rows) = &s.scenarios[i];
                Ok(FoldResult { fold: *fold, held_out: *held, confusion: cm.clone(), uar: cm.uar()?, train_rows: *rows })
            })
            .collect::<Result<Vec<_>>>()?;
        scenario_reports.push(ExperimentReport::new(sc.name(), folds, config.clone())?);
    }
    let mut synth_test_reports = Vec::new();
    for (i, kind) in synth_tests.iter().enumerate() {
        let folds = per_fold
            .iter()
            .map(|(fold, held, s)| {
                let (_, cm, rows) = &s.synth_tests[i];
                Ok(FoldResult { fold: *fold, held_out: *held, confusion: cm.clone(), uar: cm.uar_present_classes()?, train_rows: *rows })
            })
            .collect::<Result<Vec<_>>>()?;
        synth_test_reports.push(ExperimentReport::new(kind.name(), folds, config.clone())?);
    }
    Ok(RunOutput { scenario_reports, synth_test_reports, audit, histories })
}

/// Leave-one-session-out run over any mix of training scenarios and
/// synthetic-test generators, sharing models within each fold.
pub fn run_cross_validation(
    corpus: &FeatureCorpus,
    scenarios: &[Scenario],
    synth_tests: &[SynthTestKind],
    cfg: &ExperimentConfig,
) -> Result<RunOutput> {
    let sessions = corpus.session_ids();
    if sessions.len() < 2 {
        return invalid(format!("cross-validation needs at least 2 sessions, corpus has {}", sessions.len()));
    }
    let needs = needs_of(scenarios, synth_tests);
    cfg.check(needs)?;
    let mut audit = LeakageAudit::default();
    let mut histories = Vec::new();
    let mut per_fold = Vec::new();
    for (fold, &held) in sessions.iter().enumerate() {
        let fold_seed = derive_seed(cfg.master_seed, fold as u64);
        let (train, test) = corpus.split_by_session(held)?;
        log::info!("fold {fold}: holding out session {held} ({} train rows, {} test rows)", train.len(), test.len());
        let mut fa = FoldAudit { fold, test_sessions: vec![held], entries: Vec::new() };
        let models = fit_fold(&train, &test, None, needs, cfg, fold, fold_seed, &mut fa, &mut histories)?;
        let scores = score_fold(&train, &test, &models, scenarios, synth_tests, cfg, &mut fa)?;
        audit.folds.push(fa);
        per_fold.push((fold, Some(held), scores));
    }
    assemble(scenarios, synth_tests, per_fold, cfg, audit, histories)
}

pub fn run_training_augmentation_cv(corpus: &FeatureCorpus, scenario: Scenario, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut out = run_cross_validation(corpus, &[scenario], &[], cfg)?;
    Ok(out.scenario_reports.remove(0))
}

/// Trains the classifier on real training rows and tests it on generated
/// rows labeled by how they were generated. `n_test` overrides the number of
/// generated rows per fold.
pub fn run_synthetic_test_eval(
    corpus: &FeatureCorpus,
    kind: SynthTestKind,
    n_test: Option<usize>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    if n_test == Some(0) {
        return invalid("synthetic test set must have at least one row");
    }
    let cfg = ExperimentConfig { n_synth: n_test.or(cfg.n_synth), ..cfg.clone() };
    let mut out = run_cross_validation(corpus, &[], &[kind], &cfg)?;
    Ok(out.synth_test_reports.remove(0))
}

/// Single fold: every session of `train` fits the models, all of `test` is
/// evaluated. GAN validation curves are tracked against `test`.
pub fn run_cross_corpus(
    train: &FeatureCorpus,
    test: &FeatureCorpus,
    scenarios: &[Scenario],
    cfg: &ExperimentConfig,
) -> Result<RunOutput> {
    if train.classes() != test.classes() {
        return Err(Error::ClassMismatch(format!("train classes {:?} vs test classes {:?}", train.classes(), test.classes())));
    }
    if train.feature_dim() != test.feature_dim() {
        return Err(Error::Shape(format!("train width {} vs test width {}", train.feature_dim(), test.feature_dim())));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("cross-corpus evaluation needs non-empty corpora"));
    }
    let needs = needs_of(scenarios, &[]);
    cfg.check(needs)?;
    let mut histories = Vec::new();
    // the test corpus is a different population, so session numbers do not
    // identify leaked rows; fitting stages are still recorded for inspection
    let mut fa = FoldAudit { fold: 0, test_sessions: Vec::new(), entries: Vec::new() };
    let models = fit_fold(train, test, Some(test), needs, cfg, 0, derive_seed(cfg.master_seed, 0), &mut fa, &mut histories)?;
    let scores = score_fold(train, test, &models, scenarios, &[], cfg, &mut fa)?;
    assemble(scenarios, &[], vec![(0, None, scores)], cfg, LeakageAudit { folds: vec![fa] }, histories)
}

pub fn run_table1(corpus: &FeatureCorpus, cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_cross_validation(corpus, &Scenario::ALL, &[], cfg)
}

pub fn run_table2(corpus: &FeatureCorpus, cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_cross_validation(corpus, &[], &SynthTestKind::ALL, cfg)
}

pub fn run_table3(train: &FeatureCorpus, test: &FeatureCorpus, cfg: &ExperimentConfig) -> Result<RunOutput> {
    let test = test.with_class_order(train.classes())?;
    run_cross_corpus(train, &test, &Scenario::ALL, cfg)
}
