//! Vanilla and conditional GANs with configurable update schedules.
//!
//! Losses per batch:
//!
//! - discriminator: `-ln D(x) - ln(1 - D(G(z)))` (mean over real plus mean
//!   over fake rows)
//! - generator: `-ln D(G(z))`
//!
//! Every discriminator update is followed by `gen_steps_per_disc_step`
//! generator updates on fresh latent draws. After each epoch both losses are
//! evaluated on the full training split and the validation split.
//!
//! A conditional GAN draws `z` from the class's mixture component and feeds
//! `z ++ onehot(class)` to the generator and `x ++ onehot(class)` to the
//! discriminator.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::aae::AaeModel;
use crate::checkpoint::{read_file, write_file, Reader, Writer, TAG_GAN};
use crate::corpus::{FeatureCorpus, Normalizer};
use crate::error::{invalid, shape_err, Error, Result};
use crate::gmm::GmmPrior;
use crate::nn::{bce_loss, generator_loss, Activation, Adam, AdamConfig, Mlp, OutputActivation};
use crate::rng::{derive_seed, permutation, seeded, standard_normal, DetRng};
use crate::util::{batches, hstack, one_hot, tail_mean};

/// Share of the final epochs averaged by [`LossHistory::final_window_mean`].
pub const FINAL_WINDOW_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Random,
    FromDecoder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub gen_steps_per_disc_step: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub init: InitKind,
    pub seed: u64,
}

impl TrainSchedule {
    /// Equal rates, one generator step per discriminator step, random init.
    pub fn baseline() -> Self {
        Self {
            gen_lr: 2e-4,
            disc_lr: 2e-4,
            gen_steps_per_disc_step: 1,
            epochs: 300,
            batch_size: 64,
            init: InitKind::Random,
            seed: 0,
        }
    }

    /// Generator rate 1e-3 against discriminator 1e-4, five generator steps
    /// per discriminator step, generator seeded from auto-encoder decoder.
    pub fn improved() -> Self {
        Self {
            gen_lr: 1e-3,
            disc_lr: 1e-4,
            gen_steps_per_disc_step: 5,
            init: InitKind::FromDecoder,
            ..Self::baseline()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_epochs(self, epochs: usize) -> Self {
        Self { epochs, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gen_lr > 0.0 && self.disc_lr > 0.0) {
            return invalid("learning rates must be positive");
        }
        if self.gen_steps_per_disc_step == 0 || self.epochs == 0 || self.batch_size == 0 {
            return invalid("step ratio, epochs and batch size must be positive");
        }
        Ok(())
    }
}

/// Hidden widths of both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct GanArchitecture {
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
}

impl GanArchitecture {
    /// 2 -> 32 -> 32 -> 2 generator, 2 -> 64 -> 64 -> 1 discriminator.
    pub fn vanilla() -> Self {
        Self { generator_hidden: vec![32, 32], discriminator_hidden: vec![64, 64] }
    }

    /// Generator hidden widths mirror the auto-encoder decoder.
    pub fn conditional() -> Self {
        Self { generator_hidden: vec![128, 512], discriminator_hidden: vec![512, 128] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMetric {
    Disc,
    Gen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub split: Split,
    pub disc_loss: f64,
    pub gen_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub records: Vec<LossRecord>,
    pub disc_updates: usize,
    pub gen_updates: usize,
}

impl LossHistory {
    pub fn series(&self, split: Split, metric: LossMetric) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| match metric {
                LossMetric::Disc => r.disc_loss,
                LossMetric::Gen => r.gen_loss,
            })
            .collect()
    }

    /// Mean over the last 10% of recorded epochs of one split.
    pub fn final_window_mean(&self, split: Split, metric: LossMetric) -> Option<f64> {
        tail_mean(&self.series(split, metric), FINAL_WINDOW_FRACTION)
    }

    pub fn last(&self, split: Split) -> Option<&LossRecord> {
        self.records.iter().rev().find(|r| r.split == split)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,split,disc_loss,gen_loss\n");
        for r in &self.records {
            writeln!(s, "{},{},{:?},{:?}", r.step, r.split.as_str(), r.disc_loss, r.gen_loss).unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "step,split,disc_loss,gen_loss" => {}
            _ => return Err(Error::Parse { line: 1, msg: "expected header step,split,disc_loss,gen_loss".into() }),
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let perr = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(perr("expected 4 fields"));
            }
            let split = match f[1] {
                "train" => Split::Train,
                "validation" => Split::Validation,
                _ => return Err(perr("unknown split")),
            };
            records.push(LossRecord {
                step: f[0].parse().map_err(|_| perr("bad step"))?,
                split,
                disc_loss: f[2].parse().map_err(|_| perr("bad disc_loss"))?,
                gen_loss: f[3].parse().map_err(|_| perr("bad gen_loss"))?,
            });
        }
        Ok(Self { records, disc_updates: 0, gen_updates: 0 })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LatentPrior {
    StandardNormal { dim: usize },
    Mixture(GmmPrior),
}

impl LatentPrior {
    pub fn dim(&self) -> usize {
        match self {
            LatentPrior::StandardNormal { dim } => *dim,
            LatentPrior::Mixture(p) => p.dim(),
        }
    }

    /// One latent draw per row; `labels` picks mixture components.
    fn draw(&self, n: usize, labels: Option<&[usize]>, rng: &mut DetRng) -> Result<Array2<f64>> {
        match (self, labels) {
            (LatentPrior::Mixture(p), Some(y)) => p.sample_components(y, rng),
            (LatentPrior::Mixture(p), None) => Ok(p.sample(n, rng, None)?.0),
            (LatentPrior::StandardNormal { dim }, _) => Ok(standard_normal(rng, n, *dim)),
        }
    }
}

/// Synthetic rows plus the class each was generated for (conditional only).
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub samples: Array2<f64>,
    pub labels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    generator: Mlp,
    discriminator: Mlp,
    latent: LatentPrior,
    /// Empty for unconditional models.
    classes: Vec<String>,
    normalizer: Normalizer,
}

impl GanModel {
    pub fn generator(&self) -> &Mlp {
        &self.generator
    }

    pub fn discriminator(&self) -> &Mlp {
        &self.discriminator
    }

    pub fn latent(&self) -> &LatentPrior {
        &self.latent
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn is_conditional(&self) -> bool {
        !self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn data_dim(&self) -> usize {
        self.generator.output_dim()
    }

    /// Draws `n` rows in the original data scale. `class` forces the
    /// conditioning class and is only valid for conditional models.
    pub fn generate(&self, n: usize, seed: u64, class: Option<usize>) -> Result<Generated> {
        if class.is_some() && !self.is_conditional() {
            return invalid("a class can only be requested from a conditional model");
        }
        if let Some(c) = class {
            if c >= self.class_count() {
                return invalid(format!("class {c} out of range for {} classes", self.class_count()));
            }
        }
        if n == 0 {
            return Ok(Generated {
                samples: Array2::zeros((0, self.data_dim())),
                labels: self.is_conditional().then(Vec::new),
            });
        }
        let mut rng = seeded(seed);
        let (input, labels) = match &self.latent {
            LatentPrior::Mixture(prior) if self.is_conditional() => {
                let (z, idx) = prior.sample(n, &mut rng, class)?;
                (hstack(z.view(), one_hot(&idx, self.class_count()).view()), Some(idx))
            }
            latent => (latent.draw(n, None, &mut rng)?, None),
        };
        let out = self.generator.predict(input.view())?;
        Ok(Generated { samples: self.normalizer.invert(out.view())?, labels })
    }

    /// Discriminator probability that each raw row is real.
    pub fn discriminate(&self, x: ArrayView2<f64>, labels: Option<&[usize]>) -> Result<Vec<f64>> {
        let z = self.normalizer.apply(x)?;
        let input = match (self.is_conditional(), labels) {
            (true, Some(y)) => hstack(z.view(), one_hot(y, self.class_count()).view()),
            (false, None) => z,
            _ => return invalid("labels are required exactly for conditional models"),
        };
        Ok(self.discriminator.predict(input.view())?.column(0).to_vec())
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.header().bytes(TAG_GAN);
        w.u8(u8::from(self.is_conditional()));
        w.len_u32(self.classes.len());
        for c in &self.classes {
            w.str(c);
        }
        match &self.latent {
            LatentPrior::StandardNormal { dim } => {
                w.u8(0).len_u32(*dim);
            }
            LatentPrior::Mixture(p) => {
                w.u8(1).str(&p.to_text());
            }
        }
        w.f64s(self.normalizer.mean().as_slice().unwrap());
        w.f64s(self.normalizer.std().as_slice().unwrap());
        w.network(&self.generator).network(&self.discriminator);
        w.finish()
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let ck = |e: Error| Error::Checkpoint(e.to_string());
        let mut r = Reader::new(bytes);
        r.header()?;
        r.expect_tag(TAG_GAN)?;
        let conditional = r.u8()? != 0;
        let nc = r.u32()? as usize;
        let classes = (0..nc).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let latent = match r.u8()? {
            0 => LatentPrior::StandardNormal { dim: r.u32()? as usize },
            1 => LatentPrior::Mixture(GmmPrior::from_text(&r.str()?).map_err(ck)?),
            other => return Err(Error::Checkpoint(format!("unknown latent prior kind {other}"))),
        };
        let normalizer = Normalizer::from_parts(r.f64s()?, r.f64s()?).map_err(ck)?;
        let generator = r.network()?;
        let discriminator = r.network()?;
        r.finish()?;
        let k = classes.len();
        if conditional != (k > 0)
            || generator.input_dim() != latent.dim() + k
            || discriminator.input_dim() != generator.output_dim() + k
            || normalizer.dim() != generator.output_dim()
        {
            return Err(Error::Checkpoint("GAN blocks have inconsistent widths".into()));
        }
        Ok(Self { generator, discriminator, latent, classes, normalizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, &self.to_checkpoint_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_bytes(&read_file(path)?)
    }
}

/// Normalized rows with optional class labels.
struct SplitData {
    x: Array2<f64>,
    labels: Option<Vec<usize>>,
}

fn net_dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

struct Trainer<'a> {
    generator: Mlp,
    discriminator: Mlp,
    latent: &'a LatentPrior,
    classes: usize,
    schedule: &'a TrainSchedule,
}

impl Trainer<'_> {
    fn gen_input(&self, z: Array2<f64>, labels: Option<&[usize]>) -> Array2<f64> {
        match labels {
            Some(y) if self.classes > 0 => hstack(z.view(), one_hot(y, self.classes).view()),
            _ => z,
        }
    }

    fn disc_input(&self, x: ArrayView2<f64>, labels: Option<&[usize]>) -> Array2<f64> {
        match labels {
            Some(y) if self.classes > 0 => hstack(x, one_hot(y, self.classes).view()),
            _ => x.to_owned(),
        }
    }

    /// (disc_loss, gen_loss) on a whole split against an equal number of
    /// fakes carrying the same labels.
    fn evaluate(&self, data: &SplitData, rng: &mut DetRng) -> Result<(f64, f64)> {
        let n = data.x.nrows();
        let y = data.labels.as_deref();
        let z = self.latent.draw(n, y, rng)?;
        let fake = self.generator.predict(self.gen_input(z, y).view())?;
        let d_real = self.discriminator.predict(self.disc_input(data.x.view(), y).view())?;
        let d_fake = self.discriminator.predict(self.disc_input(fake.view(), y).view())?;
        let real = bce_loss(d_real.as_slice().unwrap(), &vec![1.0; n])?;
        let fake_l = bce_loss(d_fake.as_slice().unwrap(), &vec![0.0; n])?;
        let gen = generator_loss(d_fake.as_slice().unwrap())?;
        Ok((real.loss + fake_l.loss, gen.loss))
    }

    fn run(&mut self, train: &SplitData, val: Option<&SplitData>) -> Result<LossHistory> {
        let schedule = self.schedule;
        let mut rng = seeded(schedule.seed);
        // evaluation draws use their own stream so they never perturb training
        let mut eval_rng = seeded(derive_seed(schedule.seed, 0xE7A1));
        let mut opt_g = Adam::new(&self.generator, AdamConfig::with_lr(schedule.gen_lr))?;
        let mut opt_d = Adam::new(&self.discriminator, AdamConfig::with_lr(schedule.disc_lr))?;
        let data_dim = train.x.ncols();
        let mut history = LossHistory::default();
        let mut step = 0usize;

        for epoch in 1..=schedule.epochs {
            let order = permutation(&mut rng, train.x.nrows());
            for idx in batches(&order, schedule.batch_size) {
                let n = idx.len();
                let x = train.x.select(Axis(0), idx);
                let y: Option<Vec<usize>> = train.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
                let y = y.as_deref();

                // discriminator update
                step += 1;
                let z = self.latent.draw(n, y, &mut rng)?;
                let fake = self.generator.predict(self.gen_input(z, y).view())?;
                let tr = self.discriminator.forward(self.disc_input(x.view(), y).view())?;
                let tf = self.discriminator.forward(self.disc_input(fake.view(), y).view())?;
                let lr = bce_loss(tr.output().as_slice().unwrap(), &vec![1.0; n])?;
                let lf = bce_loss(tf.output().as_slice().unwrap(), &vec![0.0; n])?;
                if !(lr.loss + lf.loss).is_finite() {
                    return Err(Error::NonFiniteLoss { step });
                }
                let mut grads = self.discriminator.backward(&tr, lr.grad_column().view())?.grads;
                let gf = self.discriminator.backward(&tf, lf.grad_column().view())?.grads;
                for (a, b) in grads.weights.iter_mut().zip(&gf.weights) {
                    *a += b;
                }
                for (a, b) in grads.biases.iter_mut().zip(&gf.biases) {
                    *a += b;
                }
                opt_d.step(&mut self.discriminator, &grads)?;
                history.disc_updates += 1;

                // generator updates
                for _ in 0..schedule.gen_steps_per_disc_step {
                    step += 1;
                    let z = self.latent.draw(n, y, &mut rng)?;
                    let tg = self.generator.forward(self.gen_input(z, y).view())?;
                    let td = self.discriminator.forward(self.disc_input(tg.output().view(), y).view())?;
                    let lg = generator_loss(td.output().as_slice().unwrap())?;
                    if !lg.loss.is_finite() {
                        return Err(Error::NonFiniteLoss { step });
                    }
                    let back = self.discriminator.backward(&td, lg.grad_column().view())?;
                    let dx = back.input_grad.slice(s![.., ..data_dim]).to_owned();
                    let bg = self.generator.backward(&tg, dx.view())?;
                    opt_g.step(&mut self.generator, &bg.grads)?;
                    history.gen_updates += 1;
                }
            }

            for (split, data) in [(Split::Train, Some(train)), (Split::Validation, val)] {
                let Some(data) = data else { continue };
                let (disc_loss, gen_loss) = self.evaluate(data, &mut eval_rng)?;
                if !(disc_loss.is_finite() && gen_loss.is_finite()) {
                    return Err(Error::NonFiniteLoss { step });
                }
                history.records.push(LossRecord { step: epoch, split, disc_loss, gen_loss });
            }
        }
        Ok(history)
    }
}

fn split_data(normalizer: &Normalizer, x: ArrayView2<f64>, labels: Option<&[usize]>) -> Result<Option<SplitData>> {
    if x.nrows() == 0 {
        return Ok(None);
    }
    Ok(Some(SplitData { x: normalizer.apply(x)?, labels: labels.map(<[usize]>::to_vec) }))
}

/// Unconditional GAN on 2-D codes with a standard-normal 2-D latent.
pub fn train_vanilla_gan(
    codes: ArrayView2<f64>,
    val_codes: ArrayView2<f64>,
    schedule: &TrainSchedule,
    arch: &GanArchitecture,
) -> Result<(GanModel, LossHistory)> {
    schedule.validate()?;
    if schedule.init != InitKind::Random {
        return invalid("a vanilla GAN has no decoder to initialize from");
    }
    if codes.ncols() != 2 || val_codes.ncols() != 2 {
        return shape_err(format!("vanilla GAN expects 2-D codes, got {} and {} columns", codes.ncols(), val_codes.ncols()));
    }
    train_unconditional(codes, val_codes, 2, schedule, arch)
}

fn train_unconditional(
    x: ArrayView2<f64>,
    val: ArrayView2<f64>,
    latent_dim: usize,
    schedule: &TrainSchedule,
    arch: &GanArchitecture,
) -> Result<(GanModel, LossHistory)> {
    if x.nrows() == 0 {
        return Err(Error::Empty("GAN training data"));
    }
    let d = x.ncols();
    let normalizer = Normalizer::fit(x)?;
    let train = split_data(&normalizer, x, None)?.expect("non-empty");
    let val = split_data(&normalizer, val, None)?;

    let mut init_rng = seeded(derive_seed(schedule.seed, 0x1417));
    let generator = Mlp::new(&net_dims(latent_dim, &arch.generator_hidden, d), Activation::Relu, OutputActivation::Linear, &mut init_rng)?;
    let discriminator = Mlp::new(&net_dims(d, &arch.discriminator_hidden, 1), Activation::Relu, OutputActivation::Sigmoid, &mut init_rng)?;
    let latent = LatentPrior::StandardNormal { dim: latent_dim };
    let mut trainer = Trainer { generator, discriminator, latent: &latent, classes: 0, schedule };
    let history = trainer.run(&train, val.as_ref())?;
    let model = GanModel {
        generator: trainer.generator,
        discriminator: trainer.discriminator,
        latent,
        classes: Vec::new(),
        normalizer,
    };
    Ok((model, history))
}

/// Generator weights for a conditional GAN copied from a decoder: the
/// one-hot input columns start at zero.
pub fn generator_from_decoder(decoder: &Mlp, class_count: usize) -> Mlp {
    let mut weights = decoder.weights().to_vec();
    let biases = decoder.biases().to_vec();
    let first = &weights[0];
    let mut widened = Array2::zeros((first.nrows(), first.ncols() + class_count));
    widened.slice_mut(s![.., ..first.ncols()]).assign(first);
    weights[0] = widened;
    Mlp::from_parts(weights, biases, decoder.hidden_activation(), decoder.output_activation())
        .expect("widening the first layer keeps the network consistent")
}

/// Conditional GAN over full feature vectors.
pub fn train_conditional_gan(
    corpus: &FeatureCorpus,
    val_corpus: &FeatureCorpus,
    prior: &GmmPrior,
    schedule: &TrainSchedule,
    arch: &GanArchitecture,
    decoder_init: Option<&Mlp>,
) -> Result<(GanModel, LossHistory)> {
    schedule.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("GAN training corpus"));
    }
    if corpus.classes() != prior.class_names() {
        return Err(Error::ClassMismatch(format!("corpus {:?} vs prior {:?}", corpus.classes(), prior.class_names())));
    }
    if !val_corpus.is_empty() && val_corpus.classes() != corpus.classes() {
        return Err(Error::ClassMismatch(format!("validation {:?} vs training {:?}", val_corpus.classes(), corpus.classes())));
    }
    if val_corpus.feature_dim() != corpus.feature_dim() {
        return shape_err("validation and training feature widths differ");
    }
    let d = corpus.feature_dim();
    let k = prior.len();
    let mut init_rng = seeded(derive_seed(schedule.seed, 0x1417));

    let generator = match (schedule.init, decoder_init) {
        (InitKind::FromDecoder, Some(dec)) => {
            if dec.input_dim() != prior.dim() || dec.output_dim() != d {
                return shape_err(format!(
                    "decoder maps {} -> {}, generator needs {} -> {}",
                    dec.input_dim(),
                    dec.output_dim(),
                    prior.dim(),
                    d
                ));
            }
            if dec.layer_dims()[1..dec.layer_dims().len() - 1] != arch.generator_hidden[..] {
                return shape_err(format!(
                    "decoder hidden widths {:?} differ from generator hidden widths {:?}",
                    &dec.layer_dims()[1..dec.layer_dims().len() - 1],
                    arch.generator_hidden
                ));
            }
            generator_from_decoder(dec, k)
        }
        (InitKind::FromDecoder, None) => return invalid("schedule asks for decoder initialization but no decoder was given"),
        (InitKind::Random, Some(_)) => return invalid("decoder weights given but the schedule uses random initialization"),
        (InitKind::Random, None) => Mlp::new(
            &net_dims(prior.dim() + k, &arch.generator_hidden, d),
            Activation::Relu,
            OutputActivation::Linear,
            &mut init_rng,
        )?,
    };
    let discriminator = Mlp::new(&net_dims(d + k, &arch.discriminator_hidden, 1), Activation::Relu, OutputActivation::Sigmoid, &mut init_rng)?;

    let normalizer = Normalizer::fit(corpus.features().view())?;
    let train = split_data(&normalizer, corpus.features().view(), Some(corpus.labels()))?.expect("non-empty");
    let val = split_data(&normalizer, val_corpus.features().view(), Some(val_corpus.labels()))?;
    let latent = LatentPrior::Mixture(prior.clone());
    let mut trainer = Trainer { generator, discriminator, latent: &latent, classes: k, schedule };
    let history = trainer.run(&train, val.as_ref())?;
    let model = GanModel {
        generator: trainer.generator,
        discriminator: trainer.discriminator,
        latent,
        classes: corpus.classes().to_vec(),
        normalizer,
    };
    Ok((model, history))
}

/// Convenience wrapper taking the decoder from a trained auto-encoder when
/// the schedule asks for it.
pub fn train_conditional_gan_from_aae(
    corpus: &FeatureCorpus,
    val_corpus: &FeatureCorpus,
    aae: Option<&AaeModel>,
    prior: &GmmPrior,
    schedule: &TrainSchedule,
    arch: &GanArchitecture,
) -> Result<(GanModel, LossHistory)> {
    let decoder = match schedule.init {
        InitKind::FromDecoder => Some(
            aae.ok_or_else(|| Error::InvalidArgument("decoder initialization needs a trained auto-encoder".into()))?
                .decoder_weights(),
        ),
        InitKind::Random => None,
    };
    train_conditional_gan(corpus, val_corpus, prior, schedule, arch, decoder.as_ref())
}

/// Unconditional GAN straight on full-width features from a 2-D
/// standard-normal latent. No convergence is promised; the history is
/// returned for inspection.
pub fn demonstrate_highdim_failure(
    corpus: &FeatureCorpus,
    val_corpus: &FeatureCorpus,
    schedule: &TrainSchedule,
    arch: &GanArchitecture,
) -> Result<LossHistory> {
    schedule.validate()?;
    if schedule.init != InitKind::Random {
        return invalid("the unconditional full-width GAN has no decoder to initialize from");
    }
    if val_corpus.feature_dim() != corpus.feature_dim() {
        return shape_err("validation and training feature widths differ");
    }
    let (_, history) = train_unconditional(corpus.features().view(), val_corpus.features().view(), 2, schedule, arch)?;
    Ok(history)
}

/// Per-class mean of generated rows, handy for sanity checks.
pub fn class_means(samples: ArrayView2<f64>, labels: &[usize], classes: usize) -> Vec<Option<Array1<f64>>> {
    (0..classes)
        .map(|c| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            (!idx.is_empty()).then(|| samples.select(Axis(0), &idx).mean_axis(Axis(0)).expect("non-empty"))
        })
        .collect()
}
