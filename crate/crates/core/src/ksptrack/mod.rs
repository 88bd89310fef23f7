//! Spatio-temporal regularization with K node-disjoint shortest paths over a
//! superpixel flow graph.

mod graph;
mod solver;
mod superpixel;

pub use graph::{
    build_directed_graph, build_graph, foreground_cost, Direction, EdgeKind, GraphEdge, Overlap,
    TrackGraph, TrackerConfig, SINK, SOURCE,
};
pub use solver::{certify, solution_to_masks, solve_ksp, Certificate, PathSolution};
pub use superpixel::{assign_mean_probabilities, make_superpixels, GridLayout, Superpixel};

use alloc::vec::Vec;

use crate::grid::{Mask, ProbabilityMap};
use crate::seqdata::Sequence;
use crate::Result;

/// Graph and solution of one direction.
#[derive(Debug, Clone)]
pub struct TrackPass {
    pub direction: Direction,
    pub graph: TrackGraph,
    pub solution: PathSolution,
}

/// Superpixels, flow graphs and solutions of one tracking run.
#[derive(Debug, Clone)]
pub struct TrackingResult {
    pub layout: GridLayout,
    pub superpixels: Vec<Superpixel>,
    pub passes: Vec<TrackPass>,
    /// Union of the selections of all passes.
    pub masks: Vec<Mask>,
}

/// Runs the whole tracker on per-frame probability maps.
pub fn track(seq: &Sequence, maps: &[ProbabilityMap], cfg: &TrackerConfig) -> Result<TrackingResult> {
    let (layout, mut superpixels) = make_superpixels(seq, cfg.superpixels)?;
    assign_mean_probabilities(&mut superpixels, maps)?;
    let directions: &[Direction] = if cfg.bidirectional {
        &[Direction::Forward, Direction::Backward]
    } else {
        &[Direction::Forward]
    };
    let mut passes = Vec::new();
    let mut masks: Option<Vec<Mask>> = None;
    for &direction in directions {
        let graph = build_directed_graph(seq, &layout, &superpixels, cfg, direction)?;
        let solution = solve_ksp(&graph);
        let selected = solution_to_masks(&solution, &superpixels, seq.width(), seq.height(), seq.len());
        masks = Some(match masks {
            None => selected,
            Some(mut acc) => {
                for (a, s) in acc.iter_mut().zip(&selected) {
                    for (x, &y) in a.as_mut_slice().iter_mut().zip(s.as_slice()) {
                        *x |= y;
                    }
                }
                acc
            }
        });
        passes.push(TrackPass {
            direction,
            graph,
            solution,
        });
    }
    Ok(TrackingResult {
        layout,
        superpixels,
        passes,
        masks: masks.unwrap_or_default(),
    })
}
