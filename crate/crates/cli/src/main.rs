mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::parse_override;

/// Bad invocation: unknown keys, missing settings, invalid values.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser)]
#[command(name = "ganser", version, about = "Synthetic feature generation with auto-encoders, GANs and SVM evaluation")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override any config key.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    set: Vec<(String, String)>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus.
    SynthCorpus {
        /// Corpus spec file; the built-in default spec when omitted.
        #[arg(long)]
        spec: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        out: Option<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train a model and write its checkpoint and loss history.
    Train {
        kind: ModelKind,
        #[arg(long)]
        corpus: Option<String>,
        #[arg(long)]
        out: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        epochs: Option<String>,
        /// Auto-encoder checkpoint (required by gan-vanilla and gan-cond-improved).
        #[arg(long)]
        aae_checkpoint: Option<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Sample rows from a trained GAN checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long)]
        n: Option<String>,
        /// Class name to force (conditional checkpoints only).
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        out: Option<String>,
        /// Mixture prior used to label samples of an unconditional 2-D GAN.
        #[arg(long)]
        prior: Option<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run one of the evaluation tables end to end.
    Experiment {
        table: Table,
        #[arg(long)]
        corpus: Option<String>,
        /// Second corpus, required by table3.
        #[arg(long)]
        test_corpus: Option<String>,
        #[arg(long)]
        out: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Finite-difference check of back-propagation on random networks.
    Gradcheck {
        #[arg(long)]
        cases: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        out: Option<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Aae,
    GanVanilla,
    GanCondBaseline,
    GanCondImproved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Table {
    Table1,
    Table2,
    Table3,
}

/// Flag values first converted to config overrides, then `--set` pairs.
fn overrides(flags: &[(&str, &Option<String>)], cfg: &ConfigArgs) -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> =
        flags.iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))).collect();
    v.extend(cfg.set.iter().cloned());
    v
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::SynthCorpus { spec, seed, out, cfg } => {
            let o = overrides(&[("spec", &spec), ("seed", &seed), ("out", &out)], &cfg);
            commands::synth_corpus(cfg.config.as_deref(), &o)
        }
        Command::Train { kind, corpus, out, seed, epochs, aae_checkpoint, cfg } => {
            let o = overrides(
                &[
                    ("corpus", &corpus),
                    ("out", &out),
                    ("seed", &seed),
                    ("epochs", &epochs),
                    ("aae_checkpoint", &aae_checkpoint),
                ],
                &cfg,
            );
            commands::train(kind, cfg.config.as_deref(), &o)
        }
        Command::Generate { checkpoint, n, class, seed, out, prior, cfg } => {
            let o = overrides(
                &[
                    ("checkpoint", &checkpoint),
                    ("n", &n),
                    ("class", &class),
                    ("seed", &seed),
                    ("out", &out),
                    ("prior", &prior),
                ],
                &cfg,
            );
            commands::generate(cfg.config.as_deref(), &o)
        }
        Command::Experiment { table, corpus, test_corpus, out, seed, cfg } => {
            let o = overrides(
                &[("corpus", &corpus), ("test_corpus", &test_corpus), ("out", &out), ("master_seed", &seed)],
                &cfg,
            );
            commands::experiment(table, cfg.config.as_deref(), &o)
        }
        Command::Gradcheck { cases, seed, eps, out, cfg } => {
            let o = overrides(&[("cases", &cases), ("seed", &seed), ("eps", &eps), ("out", &out)], &cfg);
            commands::gradcheck(cfg.config.as_deref(), &o)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("usage error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
