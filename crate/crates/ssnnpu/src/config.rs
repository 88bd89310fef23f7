//! Run configuration and its `key=value` manifest form.
//!
//! The manifest lists every value that influences results, so running the
//! pipeline on a manifest reproduces the run bit for bit. Output location and
//! thread count are left out: neither changes any artifact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ssnnpu_core::ksptrack::{Overlap, TrackerConfig};
use ssnnpu_core::priorfilter::UpdateMode;
use ssnnpu_core::seqdata::UnlabeledSet;
use ssnnpu_core::ssnnpu::{AblationMode, PipelineConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub sequence_id: String,
    /// Prior-bound multipliers; for `nnpu_const` the constant-prior scales.
    pub etas: Vec<f64>,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn new(input: PathBuf) -> Self {
        let sequence_id = input
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("sequence")
            .to_string();
        let pipeline = PipelineConfig::default();
        RunConfig {
            input,
            sequence_id,
            etas: vec![pipeline.eta],
            pipeline,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.etas.is_empty() {
            return Err(Error::Config("at least one eta is required".into()));
        }
        if let Some(e) = self.etas.iter().find(|e| e.is_nan() || **e <= 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {e}")));
        }
        if self.pipeline.pi0.is_some() && self.etas.len() > 1 && self.pipeline.mode != AblationMode::NnPuConst {
            return Err(Error::Config("an explicit pi0 makes an eta sweep meaningless".into()));
        }
        Ok(())
    }

    /// Pipeline configuration for one entry of the sweep.
    pub fn for_eta(&self, eta: f64) -> PipelineConfig {
        let mut p = self.pipeline;
        match p.mode {
            AblationMode::NnPuConst => p.const_scale = eta,
            _ => p.eta = eta,
        }
        p
    }

    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for (k, v) in entries(self) {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::new(PathBuf::new());
        let mut seen_input = false;
        // applied last so tracker parameters cannot re-enable a disabled tracker
        let mut tracker_on = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("manifest line {}: expected key=value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            seen_input |= k == "input";
            let res = if k == "tracker" {
                v.parse::<bool>().map(|b| tracker_on = Some(b)).map_err(|_| format!("cannot parse {v:?}"))
            } else {
                set(&mut cfg, k, v)
            };
            res.map_err(|e| Error::Config(format!("manifest line {}: {e}", n + 1)))?;
        }
        if tracker_on == Some(false) {
            cfg.pipeline.tracker = None;
        }
        if !seen_input {
            return Err(Error::Config("manifest has no input".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_manifest(&text)
    }
}

pub fn mode_name(mode: AblationMode) -> &'static str {
    match mode {
        AblationMode::SsnnPu => "ssnnpu",
        AblationMode::NnPuTrue => "nnpu_true",
        AblationMode::NnPuConst => "nnpu_const",
    }
}

pub fn parse_mode(s: &str) -> Result<AblationMode, String> {
    match s {
        "ssnnpu" => Ok(AblationMode::SsnnPu),
        "nnpu_true" => Ok(AblationMode::NnPuTrue),
        "nnpu_const" => Ok(AblationMode::NnPuConst),
        _ => Err(format!("unknown mode {s:?} (ssnnpu, nnpu_true, nnpu_const)")),
    }
}

pub fn update_name(mode: UpdateMode) -> &'static str {
    match mode {
        UpdateMode::Linear => "linear",
        UpdateMode::ClippedRedraw => "clipped_redraw",
    }
}

pub fn parse_update(s: &str) -> Result<UpdateMode, String> {
    match s {
        "linear" => Ok(UpdateMode::Linear),
        "clipped_redraw" => Ok(UpdateMode::ClippedRedraw),
        _ => Err(format!("unknown filter update {s:?} (linear, clipped_redraw)")),
    }
}

/// Comma-separated list of positive reals.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?}")))
        .collect()
}

/// Shortest decimal that parses back to the same bits.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn entries(c: &RunConfig) -> Vec<(&'static str, String)> {
    let p = &c.pipeline;
    let t = &p.train;
    let tr = p.tracker.unwrap_or_default();
    let etas: Vec<String> = c.etas.iter().map(|&e| num(e)).collect();
    vec![
        ("input", c.input.display().to_string()),
        ("sequence_id", c.sequence_id.clone()),
        ("mode", mode_name(p.mode).into()),
        ("eta", etas.join(",")),
        ("pi0", p.pi0.map_or("auto".into(), num)),
        ("model_seed", p.model_seed.to_string()),
        ("shuffle_seed", t.shuffle_seed.to_string()),
        ("pi_init", num(p.pi_init)),
        ("radius_frac", num(p.split.radius_frac)),
        (
            "unlabeled",
            match p.split.unlabeled {
                UnlabeledSet::ExcludePositives => "exclude_positives",
                UnlabeledSet::AllPixels => "all_pixels",
            }
            .into(),
        ),
        ("phase1_epochs", t.phase1_epochs.to_string()),
        ("phase3_epochs", t.phase3_epochs.to_string()),
        ("phase1_lr", num(t.phase1_lr)),
        ("late_lr", num(t.late_lr)),
        ("weight_decay", num(t.weight_decay)),
        ("batch_frames", t.batch_frames.to_string()),
        ("adam_beta1", num(t.adam.beta1)),
        ("adam_beta2", num(t.adam.beta2)),
        ("adam_eps", num(t.adam.eps)),
        ("augment_noise_std", num(t.augment_noise_std)),
        ("tau", num(p.tau)),
        ("ts", p.persistence.to_string()),
        ("max_epochs", p.max_epochs.to_string()),
        ("sigma_q", num(p.noise.sigma_q)),
        ("sigma_r", num(p.noise.sigma_r)),
        ("sigma_s", num(p.noise.sigma_s)),
        ("ut_alpha", num(p.unscented.alpha)),
        ("ut_beta", num(p.unscented.beta)),
        ("ut_kappa", num(p.unscented.kappa)),
        ("u0_frac", num(p.u0_frac)),
        ("ut_frac", num(p.ut_frac)),
        ("window_frac", num(p.window_frac)),
        ("filter_update", update_name(p.filter_update).into()),
        ("gamma", num(p.gamma)),
        ("const_scale", num(p.const_scale)),
        ("run_to_max", p.run_to_max.to_string()),
        ("tracker", p.tracker.is_some().to_string()),
        ("superpixels", tr.superpixels.to_string()),
        ("tracker_radius_frac", num(tr.radius_frac)),
        ("prune", num(tr.prune)),
        (
            "overlap",
            match tr.overlap {
                Overlap::Identity => "identity",
                Overlap::Neighbors4 => "neighbors4",
            }
            .into(),
        ),
        ("bidirectional", tr.bidirectional.to_string()),
    ]
}

fn set(c: &mut RunConfig, key: &str, v: &str) -> Result<(), String> {
    fn parse<T: std::str::FromStr>(v: &str) -> Result<T, String> {
        v.parse().map_err(|_| format!("cannot parse {v:?}"))
    }
    let p = &mut c.pipeline;
    fn tracker(p: &mut PipelineConfig) -> &mut TrackerConfig {
        p.tracker.get_or_insert_with(Default::default)
    }
    match key {
        "input" => c.input = PathBuf::from(v),
        "sequence_id" => c.sequence_id = v.to_string(),
        "mode" => p.mode = parse_mode(v)?,
        "eta" => c.etas = parse_list(v)?,
        "pi0" => p.pi0 = if v == "auto" { None } else { Some(parse(v)?) },
        "model_seed" => p.model_seed = parse(v)?,
        "shuffle_seed" => p.train.shuffle_seed = parse(v)?,
        "pi_init" => p.pi_init = parse(v)?,
        "radius_frac" => p.split.radius_frac = parse(v)?,
        "unlabeled" => {
            p.split.unlabeled = match v {
                "exclude_positives" => UnlabeledSet::ExcludePositives,
                "all_pixels" => UnlabeledSet::AllPixels,
                _ => return Err(format!("unknown unlabeled set {v:?}")),
            }
        }
        "phase1_epochs" => p.train.phase1_epochs = parse(v)?,
        "phase3_epochs" => p.train.phase3_epochs = parse(v)?,
        "phase1_lr" => p.train.phase1_lr = parse(v)?,
        "late_lr" => p.train.late_lr = parse(v)?,
        "weight_decay" => p.train.weight_decay = parse(v)?,
        "batch_frames" => p.train.batch_frames = parse(v)?,
        "adam_beta1" => p.train.adam.beta1 = parse(v)?,
        "adam_beta2" => p.train.adam.beta2 = parse(v)?,
        "adam_eps" => p.train.adam.eps = parse(v)?,
        "augment_noise_std" => p.train.augment_noise_std = parse(v)?,
        "tau" => p.tau = parse(v)?,
        "ts" => p.persistence = parse(v)?,
        "max_epochs" => p.max_epochs = parse(v)?,
        "sigma_q" => p.noise.sigma_q = parse(v)?,
        "sigma_r" => p.noise.sigma_r = parse(v)?,
        "sigma_s" => p.noise.sigma_s = parse(v)?,
        "ut_alpha" => p.unscented.alpha = parse(v)?,
        "ut_beta" => p.unscented.beta = parse(v)?,
        "ut_kappa" => p.unscented.kappa = parse(v)?,
        "u0_frac" => p.u0_frac = parse(v)?,
        "ut_frac" => p.ut_frac = parse(v)?,
        "window_frac" => p.window_frac = parse(v)?,
        "filter_update" => p.filter_update = parse_update(v)?,
        "gamma" => p.gamma = parse(v)?,
        "const_scale" => p.const_scale = parse(v)?,
        "run_to_max" => p.run_to_max = parse(v)?,
        "tracker" => {
            if parse::<bool>(v)? {
                tracker(p);
            } else {
                p.tracker = None;
            }
        }
        "superpixels" => tracker(p).superpixels = parse(v)?,
        "tracker_radius_frac" => tracker(p).radius_frac = parse(v)?,
        "prune" => tracker(p).prune = parse(v)?,
        "overlap" => {
            tracker(p).overlap = match v {
                "identity" => Overlap::Identity,
                "neighbors4" => Overlap::Neighbors4,
                _ => return Err(format!("unknown overlap {v:?}")),
            }
        }
        "bidirectional" => tracker(p).bidirectional = parse(v)?,
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}
