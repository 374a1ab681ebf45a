use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ganser::aae::{train_aae, AaeConfig, AaeModel};
use ganser::corpus::{generate_synth_corpus, FeatureCorpus, SynthCorpusSpec};
use ganser::experiments::{
    parse_widths, run_table1, run_table2, run_table3, set_schedule_field, summary_table, ExperimentConfig, RunOutput,
};
use ganser::gan::{
    train_conditional_gan_from_aae, train_vanilla_gan, GanArchitecture, GanModel, InitKind, LossHistory,
    TrainSchedule,
};
use ganser::gmm::GmmPrior;
use ganser::nn::verification_suite;

use crate::config::{val, Def, RunConfig};
use crate::{ModelKind, Table, UsageError};

/// Largest relative gradient error `gradcheck` accepts.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn key(k: &str, d: Def) -> (String, Def) {
    (k.to_string(), d)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(cfg.req("out")?);
    fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_corpus(path: &str) -> Result<FeatureCorpus> {
    FeatureCorpus::load(path).with_context(|| format!("loading corpus {path}"))
}

fn load_aae(path: &str) -> Result<AaeModel> {
    if !Path::new(path).exists() {
        bail!("auto-encoder checkpoint {path} not found; create it with `ganser train aae`");
    }
    AaeModel::load(path).with_context(|| format!("loading auto-encoder checkpoint {path}"))
}

fn widths(cfg: &RunConfig, k: &str) -> Result<Vec<usize>> {
    Ok(parse_widths(k, cfg.req(k)?).map_err(|e| UsageError(e.to_string()))?)
}

fn join(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

pub fn synth_corpus(file: Option<&Path>, overrides: &[(String, String)]) -> Result<()> {
    let schema = vec![
        key("spec", Def::Optional),
        key("preset", val("default")),
        key("domain_shift_scale", Def::Optional),
        key("domain_seed", Def::Optional),
        key("seed", val(7)),
        key("out", Def::Required),
    ];
    let cfg = RunConfig::resolve(&schema, file, overrides)?;
    let mut spec = match cfg.get("spec") {
        Some(path) => SynthCorpusSpec::load(path).with_context(|| format!("reading corpus spec {path}"))?,
        None => match cfg.req("preset")? {
            "default" => SynthCorpusSpec::default(),
            "paper-scale" => SynthCorpusSpec::paper_scale(),
            other => return Err(UsageError(format!("preset must be default or paper-scale, got {other:?}")).into()),
        },
    };
    if let Some(scale) = cfg.parse_opt::<f64>("domain_shift_scale")? {
        spec.domain_shift_scale = scale;
    }
    if let Some(seed) = cfg.parse_opt::<u64>("domain_seed")? {
        spec.domain_seed = seed;
    }
    let corpus = generate_synth_corpus(&spec, cfg.parse("seed")?)?;

    let dir = out_dir(&cfg)?;
    write(&dir.join("config.txt"), &cfg.echo("synth-corpus"))?;
    write(&dir.join("spec.txt"), &spec.to_text())?;
    corpus.save(dir.join("corpus.csv"))?;
    write(&dir.join("manifest.txt"), &manifest(&corpus))?;
    println!("wrote {} rows to {}", corpus.len(), dir.join("corpus.csv").display());
    Ok(())
}

fn manifest(corpus: &FeatureCorpus) -> String {
    let mut s = String::new();
    writeln!(s, "rows = {}", corpus.len()).unwrap();
    writeln!(s, "feature_dim = {}", corpus.feature_dim()).unwrap();
    for (name, count) in corpus.classes().iter().zip(corpus.class_histogram()) {
        writeln!(s, "class.{name} = {count}").unwrap();
    }
    for session in corpus.session_ids() {
        let n = corpus.sessions().iter().filter(|&&x| x == session).count();
        writeln!(s, "session.{session} = {n}").unwrap();
    }
    s
}

fn train_schema(kind: ModelKind) -> Vec<(String, Def)> {
    let mut schema = vec![
        key("corpus", Def::Required),
        key("out", Def::Required),
        key("seed", val(0)),
        key("validation_session", Def::Optional),
        key("aae_checkpoint", Def::Optional),
    ];
    match kind {
        ModelKind::Aae => {
            let a = AaeConfig::default();
            schema.extend([
                key("epochs", val(a.epochs)),
                key("batch_size", val(a.batch_size)),
                key("learning_rate", val(format!("{:?}", a.learning_rate))),
                key("encoder_hidden", val(join(&a.encoder_hidden))),
                key("decoder_hidden", val(join(&a.decoder_hidden))),
                key("discriminator_hidden", val(join(&a.discriminator_hidden))),
            ]);
        }
        _ => {
            let (s, arch) = match kind {
                ModelKind::GanVanilla => (TrainSchedule::baseline(), GanArchitecture::vanilla()),
                ModelKind::GanCondBaseline => (TrainSchedule::baseline(), GanArchitecture::conditional()),
                _ => (TrainSchedule::improved(), GanArchitecture::conditional()),
            };
            let init = match s.init {
                InitKind::Random => "random",
                InitKind::FromDecoder => "fromdecoder",
            };
            schema.extend([
                key("epochs", val(s.epochs)),
                key("batch_size", val(s.batch_size)),
                key("gen_lr", val(format!("{:?}", s.gen_lr))),
                key("disc_lr", val(format!("{:?}", s.disc_lr))),
                key("gen_steps_per_disc_step", val(s.gen_steps_per_disc_step)),
                key("init", val(init)),
                key("generator_hidden", val(join(&arch.generator_hidden))),
                key("discriminator_hidden", val(join(&arch.discriminator_hidden))),
            ]);
        }
    }
    if kind != ModelKind::GanVanilla {
        let d = ExperimentConfig::default();
        schema.extend([key("prior_radius", val(format!("{:?}", d.prior_radius))), key("prior_sigma", val(format!("{:?}", d.prior_sigma)))]);
    }
    schema
}

fn schedule_from(cfg: &RunConfig) -> Result<TrainSchedule> {
    let mut s = TrainSchedule::baseline();
    for field in ["gen_lr", "disc_lr", "gen_steps_per_disc_step", "epochs", "batch_size", "seed", "init"] {
        set_schedule_field(&mut s, field, field, cfg.req(field)?).map_err(|e| UsageError(e.to_string()))?;
    }
    s.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(s)
}

pub fn train(kind: ModelKind, file: Option<&Path>, overrides: &[(String, String)]) -> Result<()> {
    let name = kind_name(kind);
    let cfg = RunConfig::resolve(&train_schema(kind), file, overrides)?;
    let schedule = match kind {
        ModelKind::Aae => None,
        _ => Some(schedule_from(&cfg)?),
    };
    let needs_aae = kind == ModelKind::GanVanilla || schedule.as_ref().is_some_and(|s| s.init == InitKind::FromDecoder);
    if needs_aae && cfg.get("aae_checkpoint").is_none() {
        return Err(UsageError(format!(
            "train {name} requires --aae-checkpoint (create one with `ganser train aae`)"
        ))
        .into());
    }

    let corpus = load_corpus(cfg.req("corpus")?)?;
    let (train, val) = match cfg.parse_opt::<u32>("validation_session")? {
        Some(s) => corpus.split_by_session(s)?,
        None => (corpus.clone(), corpus.subset(&[])),
    };
    let aae = cfg.get("aae_checkpoint").map(load_aae).transpose()?;
    let dir = out_dir(&cfg)?;
    write(&dir.join("config.txt"), &cfg.echo(&format!("train {name}")))?;

    let prior = || -> Result<GmmPrior> {
        Ok(match &aae {
            Some(a) => a.prior().clone(),
            None => GmmPrior::circle(train.classes(), cfg.parse("prior_radius")?, cfg.parse("prior_sigma")?)?,
        })
    };

    match kind {
        ModelKind::Aae => {
            let config = AaeConfig {
                encoder_hidden: widths(&cfg, "encoder_hidden")?,
                decoder_hidden: widths(&cfg, "decoder_hidden")?,
                discriminator_hidden: widths(&cfg, "discriminator_hidden")?,
                learning_rate: cfg.parse("learning_rate")?,
                epochs: cfg.parse("epochs")?,
                batch_size: cfg.parse("batch_size")?,
                seed: cfg.parse("seed")?,
            };
            let prior = prior()?;
            let (model, losses) = train_aae(&train, &prior, &config)?;
            model.save(dir.join("aae.ckpt"))?;
            prior.save(dir.join("prior.txt"))?;
            let mut csv = String::from("epoch,reconstruction,disc_loss,gen_loss\n");
            for l in &losses {
                writeln!(csv, "{},{:?},{:?},{:?}", l.epoch, l.reconstruction, l.disc_loss, l.gen_loss).unwrap();
            }
            write(&dir.join("losses.csv"), &csv)?;
            if !val.is_empty() {
                println!("validation reconstruction error {:.6}", model.reconstruction_error(val.features().view())?);
            }
        }
        ModelKind::GanVanilla => {
            let aae = aae.as_ref().expect("checked above");
            let arch = GanArchitecture {
                generator_hidden: widths(&cfg, "generator_hidden")?,
                discriminator_hidden: widths(&cfg, "discriminator_hidden")?,
            };
            let codes = aae.encode(train.features().view())?;
            let val_codes = aae.encode(val.features().view())?;
            let (model, history) = train_vanilla_gan(codes.view(), val_codes.view(), schedule.as_ref().expect("GAN schedule"), &arch)?;
            model.save(dir.join("gan.ckpt"))?;
            aae.prior().save(dir.join("prior.txt"))?;
            finish_gan(&dir, &history)?;
        }
        ModelKind::GanCondBaseline | ModelKind::GanCondImproved => {
            let arch = GanArchitecture {
                generator_hidden: widths(&cfg, "generator_hidden")?,
                discriminator_hidden: widths(&cfg, "discriminator_hidden")?,
            };
            let (model, history) =
                train_conditional_gan_from_aae(&train, &val, aae.as_ref(), &prior()?, schedule.as_ref().expect("GAN schedule"), &arch)?;
            model.save(dir.join("gan.ckpt"))?;
            finish_gan(&dir, &history)?;
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn finish_gan(dir: &Path, history: &LossHistory) -> Result<()> {
    history.save_csv(dir.join("losses.csv"))?;
    if let Some(last) = history.records.last() {
        println!("epoch {} {} disc_loss {:.4} gen_loss {:.4}", last.step, last.split.as_str(), last.disc_loss, last.gen_loss);
    }
    Ok(())
}

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Aae => "aae",
        ModelKind::GanVanilla => "gan-vanilla",
        ModelKind::GanCondBaseline => "gan-cond-baseline",
        ModelKind::GanCondImproved => "gan-cond-improved",
    }
}

/// Label written for rows of an unconditional GAN when no prior is given.
const UNLABELED: &str = "unlabeled";

pub fn generate(file: Option<&Path>, overrides: &[(String, String)]) -> Result<()> {
    let schema = vec![
        key("checkpoint", Def::Required),
        key("n", Def::Required),
        key("class", Def::Optional),
        key("seed", val(0)),
        key("prior", Def::Optional),
        key("out", Def::Required),
    ];
    let cfg = RunConfig::resolve(&schema, file, overrides)?;
    let path = cfg.req("checkpoint")?;
    let model = GanModel::load(path).with_context(|| format!("loading GAN checkpoint {path}"))?;
    let n: usize = cfg.parse("n")?;
    let class = match cfg.get("class") {
        None => None,
        Some(_) if !model.is_conditional() => {
            return Err(UsageError("--class needs a conditional checkpoint; this one is unconditional".into()).into())
        }
        Some(name) => Some(model.classes().iter().position(|c| c == name).ok_or_else(|| {
            UsageError(format!("unknown class {name:?}; checkpoint classes are {:?}", model.classes()))
        })?),
    };
    let generated = model.generate(n, cfg.parse("seed")?, class)?;

    let (classes, labels) = match generated.labels {
        Some(labels) => (model.classes().to_vec(), labels),
        None => match cfg.get("prior") {
            Some(p) => {
                let prior = GmmPrior::load(p).with_context(|| format!("loading prior {p}"))?;
                let labels = prior.assign(generated.samples.view())?;
                (prior.class_names().to_vec(), labels)
            }
            None => (vec![UNLABELED.to_string()], vec![0; n]),
        },
    };
    let ids = (0..n).map(|i| format!("gen-{i}")).collect();
    let corpus = FeatureCorpus::new(classes, ids, vec![1; n], labels, generated.samples)?;

    let dir = out_dir(&cfg)?;
    write(&dir.join("config.txt"), &cfg.echo("generate"))?;
    corpus.save(dir.join("generated.csv"))?;
    println!("wrote {n} rows to {}", dir.join("generated.csv").display());
    Ok(())
}

fn experiment_schema() -> Vec<(String, Def)> {
    let mut schema = vec![key("corpus", Def::Required), key("test_corpus", Def::Optional), key("out", Def::Required), key("aae", val("on"))];
    schema.extend(ExperimentConfig::default().echo().into_iter().map(|(k, v)| (k, Def::Value(v))));
    schema
}

pub fn experiment(table: Table, file: Option<&Path>, overrides: &[(String, String)]) -> Result<()> {
    let name = match table {
        Table::Table1 => "table1",
        Table::Table2 => "table2",
        Table::Table3 => "table3",
    };
    let cfg = RunConfig::resolve(&experiment_schema(), file, overrides)?;
    let mut exp = ExperimentConfig::default();
    for (k, v) in cfg.entries() {
        if matches!(k, "corpus" | "test_corpus" | "out") {
            continue;
        }
        let v = v.ok_or_else(|| UsageError(format!("{k} must not be empty")))?;
        // With the auto-encoder disabled its keys keep their echoed defaults and are ignored.
        if exp.aae.is_none() && k.starts_with("aae.") {
            continue;
        }
        exp.set(k, v).map_err(|e| UsageError(e.to_string()))?;
    }
    if table == Table::Table3 && cfg.get("test_corpus").is_none() {
        return Err(UsageError("table3 needs a second corpus: pass --test-corpus".into()).into());
    }

    let corpus = load_corpus(cfg.req("corpus")?)?;
    let dir = out_dir(&cfg)?;
    write(&dir.join("config.txt"), &cfg.echo(&format!("experiment {name}")))?;
    let output = match table {
        Table::Table1 => run_table1(&corpus, &exp)?,
        Table::Table2 => run_table2(&corpus, &exp)?,
        Table::Table3 => run_table3(&corpus, &load_corpus(cfg.req("test_corpus")?)?, &exp)?,
    };
    write_run_output(&dir, &output, corpus.class_count())?;
    let leaked = output.audit.leaked_rows();
    if leaked > 0 {
        bail!("leakage audit found {leaked} test-session rows in fitting stages");
    }
    Ok(())
}

fn write_run_output(dir: &Path, output: &RunOutput, class_count: usize) -> Result<()> {
    let reports_dir = dir.join("reports");
    let losses_dir = dir.join("losses");
    fs::create_dir_all(&reports_dir)?;
    fs::create_dir_all(&losses_dir)?;

    let reports: Vec<_> = output.scenario_reports.iter().chain(&output.synth_test_reports).cloned().collect();
    for r in &reports {
        write(&reports_dir.join(format!("{}.csv", r.scenario)), &r.to_csv())?;
        write(&reports_dir.join(format!("{}.confusion.csv", r.scenario)), &r.confusion_text())?;
    }
    if let Some(r) = reports.first() {
        write(&dir.join("experiment_config.txt"), &r.config_text())?;
    }
    for h in &output.histories {
        h.history.save_csv(losses_dir.join(format!("fold{}_{}.csv", h.fold, h.model)))?;
    }

    let mut audit = String::from("fold,stage,sessions,synthetic_rows,leaked_rows\n");
    for f in &output.audit.folds {
        for e in &f.entries {
            let sessions = e.sessions.iter().filter(|s| f.test_sessions.contains(s)).count();
            let mut seen: Vec<u32> = e.sessions.clone();
            seen.sort_unstable();
            seen.dedup();
            let seen: Vec<String> = seen.iter().map(ToString::to_string).collect();
            writeln!(audit, "{},{},{},{},{}", f.fold, e.stage, seen.join(" "), e.synthetic_rows, sessions).unwrap();
        }
    }
    write(&dir.join("audit.csv"), &audit)?;

    let summary = summary_table(&reports, class_count);
    write(&dir.join("summary.csv"), &summary)?;
    print!("{summary}");
    println!("leaked test rows: {}", output.audit.leaked_rows());
    Ok(())
}

pub fn gradcheck(file: Option<&Path>, overrides: &[(String, String)]) -> Result<()> {
    let schema = vec![key("cases", val(20)), key("seed", val(0)), key("eps", val("1e-5")), key("out", Def::Optional)];
    let cfg = RunConfig::resolve(&schema, file, overrides)?;
    let eps: f64 = cfg.parse("eps")?;
    let cases = verification_suite(cfg.parse("cases")?, cfg.parse("seed")?, eps)
        .map_err(|e| UsageError(e.to_string()))?;
    let mut csv = String::from("case,dims,hidden,loss,batch_size,max_rel_error\n");
    for (i, c) in cases.iter().enumerate() {
        writeln!(csv, "{i},{},{:?},{:?},{},{:?}", join(&c.dims).replace(',', "-"), c.hidden, c.loss, c.batch_size, c.max_rel_error)
            .unwrap();
    }
    let worst = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    if cfg.get("out").is_some() {
        let dir = out_dir(&cfg)?;
        write(&dir.join("config.txt"), &cfg.echo("gradcheck"))?;
        write(&dir.join("gradcheck.csv"), &csv)?;
    }
    println!("cases {} max relative error {worst:e}", cases.len());
    if !(worst < GRADCHECK_TOLERANCE) {
        bail!("max relative error {worst:e} exceeds {GRADCHECK_TOLERANCE:e}");
    }
    Ok(())
}
