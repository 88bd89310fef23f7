//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ssnnpu_core::synth::{Motion, Shape, SynthConfig};

use crate::config::{parse_mode, parse_update, RunConfig};
use crate::error::Result;
use crate::run;

#[derive(Debug, Parser)]
#[command(name = "ssnnpu", version, about = "Point-supervised sequence segmentation with self-supervised PU priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Segment a sequence and write masks, maps, logs and metrics.
    Pipeline(Box<PipelineArgs>),
    /// Score predicted masks against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeArg {
    Disc,
    Ring,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "disc")]
    pub shape: ShapeArg,
    #[arg(long, default_value_t = 40)]
    pub frames: usize,
    /// Width and height in pixels; object geometry scales with it.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub fg: Option<f64>,
    #[arg(long)]
    pub bg: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

impl SynthArgs {
    pub fn config(&self) -> SynthConfig {
        let d = SynthConfig::default();
        let scale = self.size as f64 / d.width as f64;
        let motion = match d.motion {
            Motion::Circular { radius, period } => Motion::Circular {
                radius: radius * scale,
                period,
            },
            Motion::Linear { vx, vy } => Motion::Linear {
                vx: vx * scale,
                vy: vy * scale,
            },
        };
        SynthConfig {
            shape: match self.shape {
                ShapeArg::Disc => Shape::Disc,
                ShapeArg::Ring => Shape::Ring,
            },
            frames: self.frames,
            width: self.size,
            height: self.size,
            center: (0.5 * self.size as f64, 0.5 * self.size as f64),
            base_radius: d.base_radius * scale,
            radius_amplitude: d.radius_amplitude * scale,
            motion,
            fg_mean: self.fg.unwrap_or(d.fg_mean),
            bg_mean: self.bg.unwrap_or(d.bg_mean),
            noise_std: self.noise.unwrap_or(d.noise_std),
            seed: self.seed,
            ..d
        }
    }
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Manifest of a previous run; other flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sequence directory (frames/, annotations.csv, optional gt/).
    #[arg(long, required_unless_present = "config")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sequence_id: Option<String>,
    /// ssnnpu, nnpu_true or nnpu_const.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ssnnpu_core::ssnnpu::AblationMode>,
    /// Comma-separated prior-bound multipliers; one run each. For
    /// nnpu_const they scale the constant prior instead.
    #[arg(long, value_delimiter = ',')]
    pub eta: Option<Vec<f64>>,
    /// Explicit prior upper bound, required without ground truth.
    #[arg(long)]
    pub pi0: Option<f64>,
    #[arg(long)]
    pub no_tracker: bool,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub ts: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub sigma_q: Option<f64>,
    #[arg(long)]
    pub sigma_r: Option<f64>,
    #[arg(long)]
    pub sigma_s: Option<f64>,
    /// Prior filter measurement update: linear or clipped_redraw.
    #[arg(long, value_parser = parse_update)]
    pub filter_update: Option<ssnnpu_core::priorfilter::UpdateMode>,
    #[arg(long)]
    pub u0_frac: Option<f64>,
    #[arg(long)]
    pub ut_frac: Option<f64>,
    #[arg(long)]
    pub prune: Option<f64>,
    #[arg(long)]
    pub superpixels: Option<usize>,
    /// Annotation disc radius as a fraction of max(width, height), used for
    /// training positives and tracker entries.
    #[arg(long)]
    pub radius_frac: Option<f64>,
    #[arg(long)]
    pub phase1_epochs: Option<usize>,
    #[arg(long)]
    pub phase3_epochs: Option<usize>,
    /// Seeds model initialization and frame shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl PipelineArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::new(self.input.clone().expect("clap enforces --input")),
        };
        if let Some(input) = &self.input {
            if self.config.is_some() {
                cfg.input = input.clone();
            }
        }
        if let Some(id) = &self.sequence_id {
            cfg.sequence_id = id.clone();
        }
        if let Some(e) = &self.eta {
            cfg.etas = e.clone();
        }
        let p = &mut cfg.pipeline;
        if let Some(m) = self.mode {
            p.mode = m;
        }
        macro_rules! over {
            ($($flag:ident => $($field:ident).+;)*) => {
                $(if let Some(v) = self.$flag { p.$($field).+ = v; })*
            };
        }
        over! {
            tau => tau;
            ts => persistence;
            max_epochs => max_epochs;
            gamma => gamma;
            sigma_q => noise.sigma_q;
            sigma_r => noise.sigma_r;
            sigma_s => noise.sigma_s;
            u0_frac => u0_frac;
            ut_frac => ut_frac;
            phase1_epochs => train.phase1_epochs;
            phase3_epochs => train.phase3_epochs;
        }
        if let Some(v) = self.filter_update {
            p.filter_update = v;
        }
        if let Some(v) = self.pi0 {
            p.pi0 = Some(v);
        }
        if let Some(seed) = self.seed {
            p.model_seed = seed;
            p.train.shuffle_seed = seed;
        }
        if let Some(r) = self.radius_frac {
            p.split.radius_frac = r;
        }
        if self.no_tracker {
            p.tracker = None;
        }
        if let Some(t) = p.tracker.as_mut() {
            if let Some(v) = self.prune {
                t.prune = v;
            }
            if let Some(v) = self.superpixels {
                t.superpixels = v;
            }
            if let Some(r) = self.radius_frac {
                t.radius_frac = r;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted masks, or a pipeline output directory.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth masks, or a sequence directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Per-frame and pooled metrics CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            run::cmd_synth(&args.config(), &args.out)?;
        }
        Command::Pipeline(args) => {
            let cfg = args.run_config()?;
            for row in run::cmd_pipeline(&cfg, &args.out, args.threads)? {
                println!(
                    "{} {} eta={} f1={:.4} precision={:.4} recall={:.4} stop={}",
                    row.sequence_id,
                    row.method,
                    row.eta,
                    row.f1,
                    row.precision,
                    row.recall,
                    row.stop_epoch.map_or("-".into(), |e| e.to_string()),
                );
            }
        }
        Command::Eval(args) => {
            let m = run::cmd_eval(&args.pred, &args.gt, args.out.as_deref())?;
            println!("f1={} precision={} recall={} tp={} fp={} fn={}", m.f1, m.precision, m.recall, m.tp, m.fp, m.fn_);
        }
    }
    Ok(())
}
