//! Command-level contracts, driven through the real binary: exit codes,
//! reproducibility, config echo, loss CSVs, frozen-weight reporting, resume
//! determinism, and the oracle evaluation path. Everything runs on a tiny
//! corpus so the whole file stays in the seconds range per command.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use once_cell::sync::Lazy;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vdq"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn vdq")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn work_root() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Tiny corpus + extractor + feature cache shared by the command tests.
static FIXTURE: Lazy<Fixture> = Lazy::new(Fixture::build);

struct Fixture {
    corpus: PathBuf,
    extractor: PathBuf,
    cache: PathBuf,
}

impl Fixture {
    fn build() -> Fixture {
        let root = work_root();
        let corpus = root.join("corpus");
        let vae_run = root.join("vae");
        let adapt_run = root.join("adapt");
        let cache_run = root.join("cache");
        let extractor = adapt_run.join("checkpoints/extractor.dvtm");
        let cache = cache_run.join("features");

        if !corpus.join("manifest.json").exists() {
            assert_ok(&run(&[
                "gen-corpus",
                "--out",
                corpus.to_str().unwrap(),
                "--videos",
                "10",
                "--frames",
                "4",
                "--seed",
                "3",
            ]));
        }
        if !extractor.exists() {
            assert_ok(&run(&[
                "pretrain-vae",
                "--corpus",
                corpus.to_str().unwrap(),
                "--out",
                vae_run.to_str().unwrap(),
                "--iters",
                "30",
                "--seed",
                "7",
            ]));
            assert_ok(&run(&[
                "adapt",
                "--corpus",
                corpus.to_str().unwrap(),
                "--vae",
                vae_run.join("checkpoints/vae.dvtm").to_str().unwrap(),
                "--out",
                adapt_run.to_str().unwrap(),
                "--denoiser-iters",
                "12",
                "--iters",
                "20",
                "--batch",
                "4",
                "--seed",
                "11",
            ]));
        }
        if !cache.join("cache_manifest.json").exists() {
            assert_ok(&run(&[
                "cache-features",
                "--corpus",
                corpus.to_str().unwrap(),
                "--extractor",
                extractor.to_str().unwrap(),
                "--out",
                cache_run.to_str().unwrap(),
                "--crops",
                "3",
                "--seed",
                "33",
            ]));
        }
        Fixture {
            corpus,
            extractor,
            cache,
        }
    }
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_corpus_writes_requested_count_and_is_reproducible() {
    let root = work_root();
    let a = root.join("repro-a");
    let b = root.join("repro-b");
    for dir in [&a, &b] {
        assert_ok(&run(&[
            "gen-corpus",
            "--out",
            dir.to_str().unwrap(),
            "--videos",
            "10",
            "--frames",
            "2",
            "--seed",
            "5",
        ]));
    }
    let manifest = read_json(&a.join("manifest.json"));
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 10);
    // byte-identical corpora from the same seed
    assert_eq!(
        std::fs::read(a.join("manifest.json")).unwrap(),
        std::fs::read(b.join("manifest.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("videos/0007.dvt")).unwrap(),
        std::fs::read(b.join("videos/0007.dvt")).unwrap()
    );
}

#[test]
fn gen_corpus_rejects_zero_videos_with_usage_exit() {
    let out = run(&["gen-corpus", "--out", "/tmp/never-created", "--videos", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let root = work_root();
    let cfg = root.join("bad_config.json");
    std::fs::write(&cfg, r#"{"videos": 3, "bogus_key": 1}"#).unwrap();
    let out = run(&[
        "gen-corpus",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        root.join("never").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}

#[test]
fn adapt_reports_match_contract() {
    let f: &Fixture = Lazy::force(&FIXTURE);
    let adapt_run = work_root().join("adapt");
    // loss CSV has exactly one row per iteration (plus header)
    let csv = std::fs::read_to_string(adapt_run.join("reports/adapt_loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 20);
    // denoiser untouched by adaptation, bit for bit
    let summary = read_json(&adapt_run.join("reports/adapt_summary.json"));
    assert_eq!(
        summary["denoiser_hash_before"],
        summary["denoiser_hash_after"]
    );
    // resolved config echoes the inputs
    let cfg = read_json(&adapt_run.join("config.json"));
    assert_eq!(cfg["iters"], 20);
    assert_eq!(cfg["denoiser_iters"], 12);
    assert_eq!(cfg["seed"], 11);
    assert!(f.extractor.exists());
}

#[test]
fn adapt_resume_reproduces_identical_continuation() {
    let f: &Fixture = Lazy::force(&FIXTURE);
    let root = work_root();
    let full = root.join("adapt-full");
    let part = root.join("adapt-part");
    let resumed = root.join("adapt-resumed");
    let vae = root.join("vae/checkpoints/vae.dvtm");
    let base = |out: &Path, iters: &str| {
        vec![
            "adapt".to_string(),
            "--corpus".into(),
            f.corpus.to_str().unwrap().into(),
            "--vae".into(),
            vae.to_str().unwrap().into(),
            "--out".into(),
            out.to_str().unwrap().into(),
            "--denoiser-iters".into(),
            "6".into(),
            "--iters".into(),
            iters.into(),
            "--batch".into(),
            "2".into(),
            "--seed".into(),
            "21".into(),
        ]
    };
    let argv: Vec<String> = base(&full, "16");
    assert_ok(&bin().args(&argv).output().unwrap());
    let argv: Vec<String> = base(&part, "8");
    assert_ok(&bin().args(&argv).output().unwrap());
    // resume the partial run for the remaining 8 iterations
    let out = bin()
        .args([
            "adapt",
            "--corpus",
            f.corpus.to_str().unwrap(),
            "--out",
            resumed.to_str().unwrap(),
            "--resume",
            part.join("checkpoints/extractor.dvtm").to_str().unwrap(),
            "--iters",
            "8",
            "--batch",
            "2",
            "--seed",
            "21",
        ])
        .output()
        .unwrap();
    assert_ok(&out);

    // the resumed checkpoint equals the uninterrupted one byte for byte
    let a = std::fs::read(full.join("checkpoints/extractor.dvtm")).unwrap();
    let b = std::fs::read(resumed.join("checkpoints/extractor.dvtm")).unwrap();
    assert_eq!(a, b, "resumed continuation diverged from the full run");
}

#[test]
fn train_single_epoch_writes_loss_row_and_config_echo() {
    let f: &Fixture = Lazy::force(&FIXTURE);
    let out_dir = work_root().join("train-1ep");
    assert_ok(&run(&[
        "train",
        "--corpus",
        f.corpus.to_str().unwrap(),
        "--cache",
        f.cache.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--epochs",
        "1",
        "--overfit",
        "4",
        "--seed",
        "5",
    ]));
    let csv = std::fs::read_to_string(out_dir.join("reports/train_loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1);
    let cfg = read_json(&out_dir.join("config.json"));
    assert_eq!(cfg["epochs"], 1);
    assert_eq!(cfg["overfit"], 4);
    assert_eq!(cfg["seed"], 5);
    assert!(out_dir.join("checkpoints/model.dvtm").exists());
}

#[test]
fn eval_oracle_is_perfect_and_writes_reports() {
    let f: &Fixture = Lazy::force(&FIXTURE);
    let out_dir = work_root().join("eval-oracle");
    assert_ok(&run(&[
        "eval",
        "--corpus",
        f.corpus.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--oracle",
        "--splits",
        "10",
        "--ratio",
        "0.8",
    ]));
    let report = read_json(&out_dir.join("reports/eval.json"));
    assert!((report["srcc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((report["plcc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(report["per_split"].as_array().unwrap().len(), 10);
    let csv = std::fs::read_to_string(out_dir.join("reports/eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10);
}

#[test]
fn eval_requires_model_unless_oracle() {
    let f: &Fixture = Lazy::force(&FIXTURE);
    let out = run(&[
        "eval",
        "--corpus",
        f.corpus.to_str().unwrap(),
        "--out",
        work_root().join("eval-missing").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));

    // pointing at a nonexistent model run is rejected too
    let out = run(&[
        "eval",
        "--corpus",
        f.corpus.to_str().unwrap(),
        "--cache",
        f.cache.to_str().unwrap(),
        "--model",
        "/tmp/no-such-run",
        "--out",
        work_root().join("eval-missing2").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn selftest_passes_and_fault_injection_names_the_failure() {
    let out = run(&["selftest"]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[ok]   scan_equivalence"));

    let out = run(&["selftest", "--inject-fault", "metric_oracles"]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[FAIL] metric_oracles"));
}
