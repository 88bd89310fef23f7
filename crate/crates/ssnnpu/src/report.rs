//! CSV logs: training statistics, prior trajectories, metrics and flow graphs.

use std::path::Path;

use serde::Serialize;
use ssnnpu_core::eval::SegMetrics;
use ssnnpu_core::ksptrack::{Direction, EdgeKind, TrackGraph, TrackingResult, SINK, SOURCE};
use ssnnpu_core::ssnnpu::{EpochRecord, PipelineResult};
use ssnnpu_core::trainer::EpochStats;

use crate::error::{Error, Result};

pub fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
pub struct EpochRow {
    pub phase: &'static str,
    pub epoch: usize,
    pub pos_risk: f64,
    pub neg_risk: f64,
    pub total_pu: f64,
    pub ascent_fraction: f64,
    pub batches: usize,
}

fn epoch_row(phase: &'static str, epoch: usize, s: &EpochStats) -> EpochRow {
    EpochRow {
        phase,
        epoch,
        pos_risk: s.mean_pos_risk,
        neg_risk: s.mean_neg_risk,
        total_pu: s.mean_total_pu,
        ascent_fraction: s.ascent_fraction,
        batches: s.batches,
    }
}

/// Training statistics of all three phases in order.
pub fn epoch_rows(res: &PipelineResult) -> Vec<EpochRow> {
    let p1 = res.phase1.iter().enumerate().map(|(e, s)| epoch_row("phase1", e, s));
    let p2 = res.estimation.iter().map(|r| epoch_row("estimation", r.epoch, &r.train));
    let p3 = res.phase3.iter().enumerate().map(|(e, s)| epoch_row("phase3", e, s));
    p1.chain(p2).chain(p3).collect()
}

#[derive(Debug, Serialize)]
pub struct PriorRow {
    pub epoch: usize,
    pub frame: usize,
    pub prior_in: f64,
    pub rho: f64,
    pub prior: f64,
    pub pseudo_positive_fraction: f64,
    pub true_prior: Option<f64>,
}

pub fn prior_rows(log: &[EpochRecord], truth: Option<&[f64]>) -> Vec<PriorRow> {
    log.iter()
        .flat_map(|r| {
            (0..r.priors.len()).map(move |i| PriorRow {
                epoch: r.epoch,
                frame: i,
                prior_in: r.priors_in[i],
                rho: r.rho[i],
                prior: r.priors[i],
                pseudo_positive_fraction: r.pseudo.positive_fraction[i],
                true_prior: truth.map(|t| t[i]),
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct ConvergenceRow {
    pub epoch: usize,
    pub negative_variance: f64,
    pub max_pseudo_positive_fraction: f64,
    pub mean_prior: f64,
    pub prior_mae: Option<f64>,
    pub stop: bool,
}

/// Per-epoch stopping statistics with the ground-truth MAE when known.
pub fn convergence_rows(res: &PipelineResult, truth: Option<&[f64]>) -> Vec<ConvergenceRow> {
    res.estimation
        .iter()
        .map(|r| ConvergenceRow {
            epoch: r.epoch,
            negative_variance: r.pseudo.negative_variance,
            max_pseudo_positive_fraction: r.pseudo.positive_fraction.iter().copied().fold(0.0, f64::max),
            mean_prior: r.priors.iter().sum::<f64>() / r.priors.len() as f64,
            prior_mae: truth.and_then(|t| ssnnpu_core::eval::prior_mae(&r.priors, t).ok()),
            stop: res.stop_epoch == Some(r.epoch),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub sequence_id: String,
    pub method: String,
    pub eta: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub prior_mae: Option<f64>,
    pub stop_epoch: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct FrameMetricsRow {
    pub method: String,
    pub frame: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl FrameMetricsRow {
    pub fn new(method: &str, frame: String, m: &SegMetrics) -> Self {
        FrameMetricsRow {
            method: method.to_string(),
            frame,
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }
}

#[derive(Debug, Serialize)]
struct EdgeRow {
    direction: &'static str,
    kind: &'static str,
    tail: usize,
    head: usize,
    cost: f64,
    selected: bool,
}

#[derive(Debug, Serialize)]
struct PathRow {
    direction: &'static str,
    path: usize,
    step: usize,
    superpixel: usize,
    frame: usize,
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Forward => "forward",
        Direction::Backward => "backward",
    }
}

/// Edge list of every flow graph (`graph.csv`) and the selected paths
/// (`paths.csv`). Node 0 is the source, 1 the sink, and superpixel `s`
/// owns nodes `2 + 2s` (in) and `3 + 2s` (out).
pub fn write_graph_dump(tracking: &TrackingResult, dir: &Path) -> Result<()> {
    let mut edges = Vec::new();
    let mut paths = Vec::new();
    for pass in &tracking.passes {
        let dir_name = direction_name(pass.direction);
        let mut used = std::collections::BTreeSet::new();
        for (p, path) in pass.solution.paths.iter().enumerate() {
            for (step, &sp) in path.iter().enumerate() {
                paths.push(PathRow {
                    direction: dir_name,
                    path: p,
                    step,
                    superpixel: sp,
                    frame: pass.graph.frame_of(sp),
                });
            }
            let mut nodes = vec![SOURCE];
            for &sp in path {
                nodes.extend([TrackGraph::in_node(sp), TrackGraph::out_node(sp)]);
            }
            nodes.push(SINK);
            used.extend(nodes.windows(2).map(|w| (w[0], w[1])));
        }
        for e in pass.graph.edges() {
            edges.push(EdgeRow {
                direction: dir_name,
                kind: match e.kind {
                    EdgeKind::Input => "input",
                    EdgeKind::Visiting => "visiting",
                    EdgeKind::Transition => "transition",
                    EdgeKind::Output => "output",
                },
                tail: e.tail,
                head: e.head,
                cost: e.cost,
                selected: used.contains(&(e.tail, e.head)),
            });
        }
    }
    write_rows(&dir.join("graph.csv"), edges)?;
    write_rows(&dir.join("paths.csv"), paths)
}
