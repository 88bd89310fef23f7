//! Subcommand implementations shared by the binary and the tests.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use ssnnpu_core::eval::{per_frame_metrics, prior_mae, seg_metrics, SegMetrics};
use ssnnpu_core::ssnnpu::{run_full_pipeline, AblationMode, PipelineResult};
use ssnnpu_core::synth::{generate, true_priors, SynthConfig};
use ssnnpu_core::Sequence;

use crate::config::{mode_name, RunConfig};
use crate::error::{Error, Result};
use crate::report::{self, FrameMetricsRow, MetricsRow};
use crate::{checkpoint, io};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> Result<Sequence> {
    let seq = generate(cfg)?;
    io::save_sequence(&seq, out)?;
    Ok(seq)
}

/// One run of a sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub eta: f64,
    pub result: PipelineResult,
}

/// Runs every entry of the sweep, in parallel when the pool allows.
pub fn run_sweep(seq: &Sequence, cfg: &RunConfig, threads: Option<usize>) -> Result<Vec<SweepEntry>> {
    cfg.validate()?;
    let needs_gt = cfg.pipeline.mode != AblationMode::SsnnPu || cfg.pipeline.pi0.is_none();
    if needs_gt && !seq.has_ground_truth() {
        return Err(Error::Config(format!(
            "mode {} needs ground-truth masks{}",
            mode_name(cfg.pipeline.mode),
            if cfg.pipeline.mode == AblationMode::SsnnPu { " or an explicit --pi0" } else { "" }
        )));
    }
    let job = || {
        cfg.etas
            .par_iter()
            .map(|&eta| {
                Ok(SweepEntry {
                    eta,
                    result: run_full_pipeline(seq, &cfg.for_eta(eta))?,
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

pub fn method_tag(mode: AblationMode, tracked: bool) -> String {
    let base = mode_name(mode);
    if tracked {
        format!("{base}+ksptrack")
    } else {
        base.to_string()
    }
}

/// Metrics of the final masks and, when the tracker ran, of the thresholded
/// scores alone.
pub fn entry_metrics(seq: &Sequence, cfg: &RunConfig, entry: &SweepEntry) -> Result<Vec<(String, SegMetrics)>> {
    let gt = seq.ground_truth()?;
    let res = &entry.result;
    let mut out = Vec::new();
    if res.tracking.is_some() {
        out.push((method_tag(cfg.pipeline.mode, true), seg_metrics(res.masks(), &gt)?));
    }
    out.push((method_tag(cfg.pipeline.mode, false), seg_metrics(&res.threshold_masks, &gt)?));
    Ok(out)
}

fn sweep_dir(out: &Path, eta: f64, sweep: bool) -> PathBuf {
    if sweep {
        out.join(format!("eta_{eta}"))
    } else {
        out.to_path_buf()
    }
}

#[derive(serde::Serialize)]
struct FinalPriorRow {
    frame: usize,
    prior: f64,
    true_prior: Option<f64>,
}

/// Writes every artifact of one run into `dir` and returns its metric rows.
pub fn write_entry(seq: &Sequence, cfg: &RunConfig, entry: &SweepEntry, dir: &Path) -> Result<Vec<MetricsRow>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let res = &entry.result;
    let truth = if seq.has_ground_truth() { Some(true_priors(seq)?) } else { None };
    let truth = truth.as_deref();

    io::save_probability_maps(&res.maps, &dir.join("probabilities"))?;
    io::save_masks(seq, res.masks(), &dir.join("masks"))?;
    if let Some(tracking) = &res.tracking {
        io::save_masks(seq, &res.threshold_masks, &dir.join("threshold_masks"))?;
        report::write_graph_dump(tracking, dir)?;
    }
    checkpoint::save(&res.model, &dir.join("model.ckpt"))?;
    report::write_rows(&dir.join("epochs.csv"), report::epoch_rows(res))?;
    report::write_rows(&dir.join("priors.csv"), report::prior_rows(&res.estimation, truth))?;
    report::write_rows(&dir.join("convergence.csv"), report::convergence_rows(res, truth))?;
    report::write_rows(
        &dir.join("final_priors.csv"),
        res.priors.iter().enumerate().map(|(i, &p)| FinalPriorRow {
            frame: i,
            prior: p,
            true_prior: truth.map(|t| t[i]),
        }),
    )?;

    let Some(truth) = truth else {
        return Ok(Vec::new());
    };
    let mae = prior_mae(&res.priors, truth)?;
    let gt = seq.ground_truth()?;
    let mut rows = Vec::new();
    let mut frame_rows = Vec::new();
    for (method, m) in entry_metrics(seq, cfg, entry)? {
        let pred = if method.ends_with("+ksptrack") { res.masks() } else { &res.threshold_masks[..] };
        for (i, fm) in per_frame_metrics(pred, &gt)?.iter().enumerate() {
            frame_rows.push(FrameMetricsRow::new(&method, i.to_string(), fm));
        }
        frame_rows.push(FrameMetricsRow::new(&method, "all".into(), &m));
        rows.push(MetricsRow {
            sequence_id: cfg.sequence_id.clone(),
            method,
            eta: entry.eta,
            f1: m.f1,
            precision: m.precision,
            recall: m.recall,
            prior_mae: Some(mae),
            stop_epoch: res.stop_epoch,
        });
    }
    report::write_rows(&dir.join("frame_metrics.csv"), frame_rows)?;
    report::write_rows(&dir.join(METRICS_FILE), rows.iter().cloned())?;
    Ok(rows)
}

/// Loads the sequence, runs the sweep and writes all artifacts under `out`.
/// A single run writes directly into `out`; a sweep uses one `eta_<value>`
/// directory per entry plus a combined `metrics.csv`.
pub fn cmd_pipeline(cfg: &RunConfig, out: &Path, threads: Option<usize>) -> Result<Vec<MetricsRow>> {
    let seq = io::load_sequence(&cfg.input)?;
    let entries = run_sweep(&seq, cfg, threads)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest = out.join(MANIFEST_FILE);
    fs::write(&manifest, cfg.to_manifest()).map_err(|e| Error::io(&manifest, e))?;
    let sweep = entries.len() > 1;
    let mut rows = Vec::new();
    for entry in &entries {
        rows.extend(write_entry(&seq, cfg, entry, &sweep_dir(out, entry.eta, sweep))?);
    }
    if sweep && !rows.is_empty() {
        report::write_rows(&out.join(METRICS_FILE), rows.iter().cloned())?;
    }
    Ok(rows)
}

/// Accepts either a mask directory or a directory containing `sub`.
fn mask_dir(dir: &Path, sub: &str) -> PathBuf {
    let nested = dir.join(sub);
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

/// Scores predicted masks against ground truth; writes pooled and per-frame
/// rows to `out` when given.
pub fn cmd_eval(pred: &Path, gt: &Path, out: Option<&Path>) -> Result<SegMetrics> {
    let pred_masks = io::load_masks(&mask_dir(pred, "masks"))?;
    let gt_masks = io::load_masks(&mask_dir(gt, io::GT_DIR))?;
    let pooled = seg_metrics(&pred_masks, &gt_masks)?;
    if let Some(out) = out {
        let mut rows: Vec<FrameMetricsRow> = per_frame_metrics(&pred_masks, &gt_masks)?
            .iter()
            .enumerate()
            .map(|(i, m)| FrameMetricsRow::new("eval", i.to_string(), m))
            .collect();
        rows.push(FrameMetricsRow::new("eval", "all".into(), &pooled));
        report::write_rows(out, rows)?;
    }
    Ok(pooled)
}
