//! Drives the binary end to end on a tiny sequence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ssnnpu::config::RunConfig;
use ssnnpu::io;

fn ssnnpu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssnnpu"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ssnnpu(args);
    assert!(
        out.status.success(),
        "ssnnpu {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) -> PathBuf {
    let seq = dir.join("seq");
    ok(&["synth", "--frames", "6", "--size", "32", "--seed", "5", "--out", p(&seq)]);
    seq
}

const FAST: &[&str] = &[
    "--phase1-epochs",
    "2",
    "--max-epochs",
    "4",
    "--phase3-epochs",
    "1",
    "--superpixels",
    "64",
];

fn pipeline(seq: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["pipeline", "--input", p(seq), "--out", p(out)];
    args.extend_from_slice(FAST);
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn synth_writes_a_loadable_sequence() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = io::load_sequence(&synth(tmp.path())).unwrap();
    assert_eq!((seq.len(), seq.width(), seq.height()), (6, 32, 32));
    assert!(seq.has_ground_truth());
    assert_eq!(seq.annotations().count(), 6);
}

#[test]
fn pipeline_writes_every_artifact_and_eval_rescores_it() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = synth(tmp.path());
    let out = tmp.path().join("run");
    let stdout = pipeline(&seq, &out, &[]);
    assert!(stdout.contains("ssnnpu+ksptrack"), "{stdout}");

    for f in [
        "manifest.txt",
        "metrics.csv",
        "frame_metrics.csv",
        "epochs.csv",
        "priors.csv",
        "convergence.csv",
        "final_priors.csv",
        "graph.csv",
        "paths.csv",
        "model.ckpt",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    for d in ["masks", "threshold_masks", "probabilities"] {
        assert_eq!(io::list_indexed_pgms(&out.join(d)).unwrap().len(), 6, "{d}");
    }
    ssnnpu::checkpoint::load(&out.join("model.ckpt")).unwrap();

    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let header = metrics.lines().next().unwrap();
    assert_eq!(header, "sequence_id,method,eta,f1,precision,recall,prior_mae,stop_epoch");
    let tracked = metrics.lines().find(|l| l.contains("ssnnpu+ksptrack")).unwrap();
    let f1: f64 = tracked.split(',').nth(3).unwrap().parse().unwrap();

    let eval = tmp.path().join("eval.csv");
    let printed = ok(&["eval", "--pred", p(&out), "--gt", p(&seq), "--out", p(&eval)]);
    let eval_f1: f64 = printed
        .split_whitespace()
        .find_map(|t| t.strip_prefix("f1="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((eval_f1 - f1).abs() < 1e-12, "{eval_f1} vs {f1}");
    assert_eq!(fs::read_to_string(&eval).unwrap().lines().count(), 1 + 6 + 1);
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = synth(tmp.path());
    let gt = seq.join(io::GT_DIR);
    let printed = ok(&["eval", "--pred", p(&gt), "--gt", p(&seq)]);
    assert!(printed.starts_with("f1=1 precision=1 recall=1"), "{printed}");
}

#[test]
fn eval_rejects_an_empty_prediction_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = synth(tmp.path());
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = ssnnpu(&["eval", "--pred", p(&empty), "--gt", p(&seq)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn pipeline_without_ground_truth_needs_an_explicit_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = synth(tmp.path());
    fs::remove_dir_all(seq.join(io::GT_DIR)).unwrap();
    let out = tmp.path().join("run");
    let args = ["pipeline", "--input", p(&seq), "--out", p(&out), "--no-tracker"];
    let failed = ssnnpu(&args);
    assert!(!failed.status.success());
    assert!(String::from_utf8_lossy(&failed.stderr).contains("--pi0"));

    let mut with_bound = args.to_vec();
    with_bound.extend_from_slice(&["--pi0", "0.1"]);
    with_bound.extend_from_slice(FAST);
    ok(&with_bound);
    assert_eq!(io::load_masks(&out.join("masks")).unwrap().len(), 6);
    assert!(!out.join("metrics.csv").exists());
}

#[test]
fn eta_sweep_writes_one_directory_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = synth(tmp.path());
    let out = tmp.path().join("sweep");
    pipeline(&seq, &out, &["--eta", "1.2,1.8", "--no-tracker", "--threads", "2"]);
    for d in ["eta_1.2", "eta_1.8"] {
        assert!(out.join(d).join("masks").is_dir(), "{d}");
    }
    // header plus one untracked row per value
    assert_eq!(fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count(), 3);
}

#[test]
fn manifest_reproduces_a_run_bit_for_bit() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = synth(tmp.path());
    let first = tmp.path().join("first");
    pipeline(&seq, &first, &["--seed", "11"]);
    let second = tmp.path().join("second");
    ok(&[
        "pipeline",
        "--config",
        p(&first.join("manifest.txt")),
        "--out",
        p(&second),
    ]);

    let a = fs::read_to_string(first.join("manifest.txt")).unwrap();
    assert_eq!(a, fs::read_to_string(second.join("manifest.txt")).unwrap());
    let cfg = RunConfig::from_manifest(&a).unwrap();
    assert_eq!(cfg.pipeline.model_seed, 11);
    assert_eq!(cfg.pipeline.max_epochs, 4);
    for f in ["metrics.csv", "priors.csv", "graph.csv", "model.ckpt"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    assert_eq!(
        io::load_masks(&first.join("masks")).unwrap(),
        io::load_masks(&second.join("masks")).unwrap()
    );
}

#[test]
fn bad_arguments_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = synth(tmp.path());
    let out = tmp.path().join("x");
    for extra in [&["--mode", "bogus"][..], &["--eta", "0"], &["--eta", "1.2,1.4", "--pi0", "0.1"]] {
        let mut args = vec!["pipeline", "--input", p(&seq), "--out", p(&out)];
        args.extend_from_slice(extra);
        assert!(!ssnnpu(&args).status.success(), "{extra:?}");
    }
}
