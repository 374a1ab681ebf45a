use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ganser::corpus::{sample_corpus_path, FeatureCorpus};
use tempfile::TempDir;

fn ganser(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ganser")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ganser(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = ganser(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn sample() -> PathBuf {
    sample_corpus_path()
}

/// Tiny AAE on the sample corpus, with session 5 held out.
fn train_aae(dir: &Path) -> PathBuf {
    let out = dir.join("aae");
    ok(&["train", "aae", "--corpus", p(&sample()), "--out", p(&out), "--epochs", "2", "--set", "validation_session=5"]);
    out.join("aae.ckpt")
}

#[test]
fn synth_corpus_default_matches_bundled_sample() {
    let t = TempDir::new().unwrap();
    let a = t.path().join("a");
    let b = t.path().join("b");
    ok(&["synth-corpus", "--out", p(&a)]);
    ok(&["synth-corpus", "--out", p(&b), "--seed", "7"]);
    let corpus = FeatureCorpus::load(a.join("corpus.csv")).unwrap();
    assert_eq!(corpus.len(), 800);
    let bytes = fs::read(a.join("corpus.csv")).unwrap();
    assert_eq!(bytes, fs::read(b.join("corpus.csv")).unwrap());
    assert_eq!(bytes, fs::read(sample()).unwrap());
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("rows = 800") && manifest.contains("class.angry = 200"));
}

#[test]
fn synth_corpus_missing_spec_names_the_path() {
    let t = TempDir::new().unwrap();
    let missing = t.path().join("no-such-spec.txt");
    let (status, err) = code(&["synth-corpus", "--spec", p(&missing), "--out", p(&t.path().join("o"))]);
    assert_eq!(status, 2);
    assert!(err.contains("no-such-spec.txt"), "{err}");
}

#[test]
fn spec_file_from_one_run_reproduces_the_corpus() {
    let t = TempDir::new().unwrap();
    let a = t.path().join("a");
    ok(&["synth-corpus", "--out", p(&a), "--set", "domain_shift_scale=0.3", "--set", "domain_seed=11", "--seed", "8"]);
    let b = t.path().join("b");
    ok(&["synth-corpus", "--spec", p(&a.join("spec.txt")), "--seed", "8", "--out", p(&b)]);
    assert_eq!(fs::read(a.join("corpus.csv")).unwrap(), fs::read(b.join("corpus.csv")).unwrap());
}

#[test]
fn usage_errors_exit_with_one() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("o");
    let c = sample();
    let (status, err) = code(&["train", "gan-cond-improved", "--corpus", p(&c), "--out", p(&out)]);
    assert_eq!(status, 1);
    assert!(err.contains("--aae-checkpoint") && err.contains("ganser train aae"), "{err}");
    assert_eq!(code(&["train", "aae", "--corpus", p(&c), "--out", p(&out), "--set", "bogus=1"]).0, 1);
    assert_eq!(code(&["train", "aae", "--corpus", p(&c), "--out", p(&out), "--epochs", "many"]).0, 1);
    assert_eq!(code(&["train", "aae", "--out", p(&out)]).0, 1);
    assert_eq!(code(&["experiment", "table3", "--corpus", p(&c), "--out", p(&out)]).0, 1);
    assert_eq!(code(&["no-such-command"]).0, 1);
    assert_eq!(code(&["--help"]).0, 0);
}

#[test]
fn missing_prerequisite_checkpoint_cites_the_command() {
    let t = TempDir::new().unwrap();
    let (status, err) = code(&[
        "train",
        "gan-vanilla",
        "--corpus",
        p(&sample()),
        "--out",
        p(&t.path().join("v")),
        "--aae-checkpoint",
        p(&t.path().join("missing.ckpt")),
    ]);
    assert_eq!(status, 2);
    assert!(err.contains("ganser train aae"), "{err}");
}

#[test]
fn training_is_deterministic_and_leaves_inputs_untouched() {
    let t = TempDir::new().unwrap();
    let before = fs::read(sample()).unwrap();
    let aae = train_aae(t.path());
    let again = t.path().join("aae2");
    ok(&["train", "aae", "--corpus", p(&sample()), "--out", p(&again), "--epochs", "2", "--set", "validation_session=5"]);
    for f in ["aae.ckpt", "losses.csv", "prior.txt"] {
        assert_eq!(fs::read(aae.with_file_name(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }

    let run = |name: &str| {
        let out = t.path().join(name);
        ok(&[
            "train",
            "gan-cond-improved",
            "--corpus",
            p(&sample()),
            "--out",
            p(&out),
            "--epochs",
            "2",
            "--aae-checkpoint",
            p(&aae),
            "--set",
            "validation_session=5",
        ]);
        out
    };
    let (a, b) = (run("g1"), run("g2"));
    for f in ["gan.ckpt", "losses.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let losses = fs::read_to_string(a.join("losses.csv")).unwrap();
    assert!(losses.starts_with("step,split,disc_loss,gen_loss\n"));
    assert!(losses.contains(",validation,"));
    assert_eq!(fs::read(sample()).unwrap(), before);
}

#[test]
fn config_echo_reproduces_a_run() {
    let t = TempDir::new().unwrap();
    let first = t.path().join("first");
    ok(&["train", "gan-cond-baseline", "--corpus", p(&sample()), "--out", p(&first), "--epochs", "2", "--seed", "3"]);
    let second = t.path().join("second");
    ok(&["train", "gan-cond-baseline", "--config", p(&first.join("config.txt")), "--out", p(&second)]);
    assert_eq!(fs::read(first.join("gan.ckpt")).unwrap(), fs::read(second.join("gan.ckpt")).unwrap());
    let echo = fs::read_to_string(second.join("config.txt")).unwrap();
    assert!(echo.contains("seed = 3") && echo.contains("epochs = 2"));
}

#[test]
fn generate_conditional_and_vanilla() {
    let t = TempDir::new().unwrap();
    let aae = train_aae(t.path());
    let cond = t.path().join("cond");
    ok(&["train", "gan-cond-improved", "--corpus", p(&sample()), "--out", p(&cond), "--epochs", "1", "--aae-checkpoint", p(&aae)]);
    let gen = t.path().join("gen");
    ok(&["generate", "--checkpoint", p(&cond.join("gan.ckpt")), "--n", "100", "--class", "angry", "--out", p(&gen)]);
    let rows = FeatureCorpus::load(gen.join("generated.csv")).unwrap();
    assert_eq!(rows.len(), 100);
    assert_eq!(rows.feature_dim(), 64);
    assert!(rows.labels().iter().all(|&l| rows.classes()[l] == "angry"));

    let van = t.path().join("van");
    ok(&["train", "gan-vanilla", "--corpus", p(&sample()), "--out", p(&van), "--epochs", "1", "--aae-checkpoint", p(&aae)]);
    let ckpt = van.join("gan.ckpt");
    let vgen = t.path().join("vgen");
    ok(&["generate", "--checkpoint", p(&ckpt), "--n", "50", "--prior", p(&van.join("prior.txt")), "--out", p(&vgen)]);
    let rows = FeatureCorpus::load(vgen.join("generated.csv")).unwrap();
    assert_eq!((rows.len(), rows.feature_dim()), (50, 2));
    assert!(rows.classes().iter().all(|c| ["neutral", "angry", "sad", "happy"].contains(&c.as_str())));

    let (status, _) = code(&["generate", "--checkpoint", p(&ckpt), "--n", "5", "--class", "angry", "--out", p(&vgen)]);
    assert_ne!(status, 0);
    let (status, _) = code(&["generate", "--checkpoint", p(&cond.join("gan.ckpt")), "--n", "5", "--class", "bored", "--out", p(&gen)]);
    assert_ne!(status, 0);
}

fn tiny_table(out: &Path, table: &str, extra: &[&str]) -> String {
    let corpus = sample();
    let mut args = vec!["experiment", table, "--corpus", p(&corpus), "--out", p(out)];
    for k in ["aae.epochs=2", "vanilla.epochs=2", "cond_baseline.epochs=2", "cond_improved.epochs=2"] {
        args.extend(["--set", k]);
    }
    args.extend(extra);
    ok(&args)
}

#[test]
fn table1_lists_every_scenario_and_summary_matches_reports() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("t1");
    let stdout = tiny_table(&out, "table1", &[]);
    assert!(stdout.contains("leaked test rows: 0"));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<(String, f64)> = summary
        .lines()
        .skip(1)
        .map(|l| {
            let (s, v) = l.split_once(',').unwrap();
            (s.to_string(), v.parse().unwrap())
        })
        .collect();
    let names: Vec<&str> = rows.iter().map(|(s, _)| s.as_str()).collect();
    assert_eq!(
        names,
        [
            "chance",
            "synthetic-2d-only",
            "real-2d-only",
            "real-2d+synthetic",
            "synthetic-cond-only",
            "real-only",
            "real+cond-baseline",
            "real+cond-improved"
        ]
    );
    assert_eq!(rows[0].1, 25.0);
    for (name, mean) in &rows[1..] {
        let report = fs::read_to_string(out.join("reports").join(format!("{name}.csv"))).unwrap();
        let uars: Vec<f64> = report.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(uars.len(), 5);
        let m = uars.iter().sum::<f64>() / uars.len() as f64;
        assert!((m - mean).abs() < 1e-9, "{name}: {m} vs {mean}");
    }
    let audit = fs::read_to_string(out.join("audit.csv")).unwrap();
    assert!(audit.lines().skip(1).all(|l| l.ends_with(",0")));

    let again = t.path().join("t1b");
    tiny_table(&again, "table1", &[]);
    assert_eq!(summary, fs::read_to_string(again.join("summary.csv")).unwrap());
}

#[test]
fn table3_uses_the_second_corpus() {
    let t = TempDir::new().unwrap();
    let shifted = t.path().join("shifted");
    ok(&["synth-corpus", "--out", p(&shifted), "--set", "domain_shift_scale=0.3", "--set", "domain_seed=11", "--seed", "8"]);
    let out = t.path().join("t3");
    let test_corpus = shifted.join("corpus.csv");
    tiny_table(&out, "table3", &["--test-corpus", p(&test_corpus)]);
    let report = fs::read_to_string(out.join("reports/real-only.csv")).unwrap();
    assert!(report.contains(",cross-corpus,"));
}

#[test]
fn gradcheck_reports_the_worst_error() {
    let t = TempDir::new().unwrap();
    let stdout = ok(&["gradcheck", "--out", p(&t.path().join("g"))]);
    let worst: f64 = stdout.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(worst < 1e-4);
    let csv = fs::read_to_string(t.path().join("g/gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}
