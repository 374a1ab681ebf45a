//! Adversarial auto-encoder with a class-indexed Gaussian-mixture prior.
//!
//! The encoder compresses z-normalized features to 2-D codes, the decoder
//! reconstructs them, and a latent discriminator pushes the codes toward the
//! prior. The discriminator sees the code together with the one-hot class,
//! and its "real" samples for a row of class `c` come from component `c`, so
//! every class settles on its own component.

use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::checkpoint::{read_file, write_file, Reader, Writer, TAG_AAE};
use crate::corpus::{FeatureCorpus, Normalizer};
use crate::error::{invalid, shape_err, Error, Result};
use crate::gmm::GmmPrior;
use crate::nn::{bce_loss, generator_loss, squared_error, Activation, Adam, AdamConfig, Gradients, Mlp, OutputActivation};
use crate::rng::{permutation, seeded};
use crate::util::{batches, hstack, one_hot};

pub const CODE_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct AaeConfig {
    pub encoder_hidden: Vec<usize>,
    /// Decoder hidden widths, from the code side outward.
    pub decoder_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AaeConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![512, 128],
            decoder_hidden: vec![128, 512],
            discriminator_hidden: vec![64, 64],
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl AaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return invalid("epochs and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return invalid("learning rate must be positive");
        }
        Ok(())
    }
}

/// Per-epoch means over the epoch's batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AaeEpochLoss {
    pub epoch: usize,
    pub reconstruction: f64,
    pub disc_loss: f64,
    pub gen_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AaeModel {
    encoder: Mlp,
    decoder: Mlp,
    latent_discriminator: Mlp,
    prior: GmmPrior,
    normalizer: Normalizer,
}

impl AaeModel {
    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn latent_discriminator(&self) -> &Mlp {
        &self.latent_discriminator
    }

    pub fn prior(&self) -> &GmmPrior {
        &self.prior
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn classes(&self) -> &[String] {
        self.prior.class_names()
    }

    /// Codes for raw (un-normalized) feature rows.
    pub fn encode(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.feature_dim() {
            return shape_err(format!(
                "features have {} columns, encoder expects {}",
                features.ncols(),
                self.feature_dim()
            ));
        }
        self.encoder.predict(self.normalizer.apply(features)?.view())
    }

    /// Reconstructions in raw feature scale.
    pub fn decode(&self, codes: ArrayView2<f64>) -> Result<Array2<f64>> {
        let out = self.decoder.predict(codes)?;
        self.normalizer.invert(out.view())
    }

    /// Mean squared reconstruction error per row, measured in normalized
    /// feature space (the space training minimizes).
    pub fn reconstruction_error(&self, features: ArrayView2<f64>) -> Result<f64> {
        let z = self.normalizer.apply(features)?;
        let rec = self.decoder.predict(self.encoder.predict(z.view())?.view())?;
        Ok(squared_error(rec.view(), z.view())?.0)
    }

    /// An independent copy of the decoder, for seeding a generator.
    pub fn decoder_weights(&self) -> Mlp {
        self.decoder.clone()
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.header().bytes(TAG_AAE);
        w.network(&self.encoder).network(&self.decoder).network(&self.latent_discriminator);
        w.f64s(self.normalizer.mean().as_slice().unwrap());
        w.f64s(self.normalizer.std().as_slice().unwrap());
        w.str(&self.prior.to_text());
        w.finish()
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.header()?;
        r.expect_tag(TAG_AAE)?;
        let encoder = r.network()?;
        let decoder = r.network()?;
        let latent_discriminator = r.network()?;
        let normalizer = Normalizer::from_parts(r.f64s()?, r.f64s()?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let prior = GmmPrior::from_text(&r.str()?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        r.finish()?;
        if encoder.output_dim() != decoder.input_dim()
            || decoder.output_dim() != encoder.input_dim()
            || normalizer.dim() != encoder.input_dim()
            || prior.dim() != encoder.output_dim()
        {
            return Err(Error::Checkpoint("auto-encoder blocks have inconsistent widths".into()));
        }
        Ok(Self { encoder, decoder, latent_discriminator, prior, normalizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, &self.to_checkpoint_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_bytes(&read_file(path)?)
    }
}

fn add_grads(acc: &mut Gradients, other: &Gradients) {
    for (a, b) in acc.weights.iter_mut().zip(&other.weights) {
        *a += b;
    }
    for (a, b) in acc.biases.iter_mut().zip(&other.biases) {
        *a += b;
    }
}

/// Trains the auto-encoder. Each batch runs one reconstruction step (encoder
/// and decoder), one latent-discriminator step, and one adversarial encoder
/// step.
pub fn train_aae(corpus: &FeatureCorpus, prior: &GmmPrior, config: &AaeConfig) -> Result<(AaeModel, Vec<AaeEpochLoss>)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("auto-encoder training corpus"));
    }
    if corpus.classes() != prior.class_names() {
        return Err(Error::ClassMismatch(format!(
            "corpus classes {:?} vs prior classes {:?}",
            corpus.classes(),
            prior.class_names()
        )));
    }
    if prior.dim() != CODE_DIM {
        return invalid(format!("auto-encoder prior must be {CODE_DIM}-dimensional"));
    }

    let k = prior.len();
    let d = corpus.feature_dim();
    let mut rng = seeded(config.seed);
    let dims = |input: usize, hidden: &[usize], output: usize| {
        let mut v = vec![input];
        v.extend_from_slice(hidden);
        v.push(output);
        v
    };
    let mut encoder = Mlp::new(&dims(d, &config.encoder_hidden, CODE_DIM), Activation::Relu, OutputActivation::Linear, &mut rng)?;
    let mut decoder = Mlp::new(&dims(CODE_DIM, &config.decoder_hidden, d), Activation::Relu, OutputActivation::Linear, &mut rng)?;
    let mut disc = Mlp::new(
        &dims(CODE_DIM + k, &config.discriminator_hidden, 1),
        Activation::Relu,
        OutputActivation::Sigmoid,
        &mut rng,
    )?;

    let adam = AdamConfig::with_lr(config.learning_rate);
    let mut opt_enc_rec = Adam::new(&encoder, adam)?;
    let mut opt_dec = Adam::new(&decoder, adam)?;
    let mut opt_disc = Adam::new(&disc, adam)?;
    let mut opt_enc_adv = Adam::new(&encoder, adam)?;

    let normalizer = Normalizer::fit(corpus.features().view())?;
    let data = normalizer.apply(corpus.features().view())?;
    let labels = corpus.labels();

    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let order = permutation(&mut rng, corpus.len());
        let (mut rec_sum, mut disc_sum, mut gen_sum, mut nb) = (0.0, 0.0, 0.0, 0usize);
        for idx in batches(&order, config.batch_size) {
            step += 1;
            let x = data.select(Axis(0), idx);
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let hot = one_hot(&y, k);

            // reconstruction
            let te = encoder.forward(x.view())?;
            let td = decoder.forward(te.output().view())?;
            let (rec, g) = squared_error(td.output().view(), x.view())?;
            let bd = decoder.backward(&td, g.view())?;
            let be = encoder.backward(&te, bd.input_grad.view())?;
            opt_dec.step(&mut decoder, &bd.grads)?;
            opt_enc_rec.step(&mut encoder, &be.grads)?;

            // latent discriminator: prior draws of the row's class vs codes
            let codes = encoder.predict(x.view())?;
            let real = prior.sample_components(&y, &mut rng)?;
            let tr = disc.forward(hstack(real.view(), hot.view()).view())?;
            let tf = disc.forward(hstack(codes.view(), hot.view()).view())?;
            let lr_ = bce_loss(tr.output().as_slice().unwrap(), &vec![1.0; y.len()])?;
            let lf = bce_loss(tf.output().as_slice().unwrap(), &vec![0.0; y.len()])?;
            let mut dg = disc.backward(&tr, lr_.grad_column().view())?.grads;
            add_grads(&mut dg, &disc.backward(&tf, lf.grad_column().view())?.grads);
            opt_disc.step(&mut disc, &dg)?;

            // encoder tries to pass its codes off as prior draws
            let te = encoder.forward(x.view())?;
            let tg = disc.forward(hstack(te.output().view(), hot.view()).view())?;
            let lg = generator_loss(tg.output().as_slice().unwrap())?;
            let back = disc.backward(&tg, lg.grad_column().view())?;
            let code_grad = back.input_grad.slice(s![.., ..CODE_DIM]).to_owned();
            let be = encoder.backward(&te, code_grad.view())?;
            opt_enc_adv.step(&mut encoder, &be.grads)?;

            let disc_loss = lr_.loss + lf.loss;
            if !(rec.is_finite() && disc_loss.is_finite() && lg.loss.is_finite()) {
                return Err(Error::NonFiniteLoss { step });
            }
            rec_sum += rec;
            disc_sum += disc_loss;
            gen_sum += lg.loss;
            nb += 1;
        }
        let nb = nb as f64;
        history.push(AaeEpochLoss { epoch, reconstruction: rec_sum / nb, disc_loss: disc_sum / nb, gen_loss: gen_sum / nb });
    }

    Ok((AaeModel { encoder, decoder, latent_discriminator: disc, prior: prior.clone(), normalizer }, history))
}
