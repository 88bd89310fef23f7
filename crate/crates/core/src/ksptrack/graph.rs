use alloc::vec::Vec;

use super::superpixel::{GridLayout, Superpixel};
use crate::seqdata::{Sequence, DEFAULT_RADIUS_FRAC};
use crate::{math, Error, Result};

pub const SOURCE: usize = 0;
pub const SINK: usize = 1;

/// Which cells of the next frame a superpixel may transition to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Overlap {
    /// Same cell only.
    Identity,
    /// Same cell and its 4-neighbors.
    #[default]
    Neighbors4,
}

/// Time direction of the transition edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Target superpixel count per frame.
    pub superpixels: usize,
    pub radius_frac: f64,
    /// Visiting edges exist only for mean probabilities above this.
    pub prune: f64,
    pub overlap: Overlap,
    /// Also solve the time-reversed graph and take the union of both
    /// selections, so early frames are not limited to paths entering there.
    pub bidirectional: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            superpixels: 1024,
            radius_frac: DEFAULT_RADIUS_FRAC,
            prune: 0.4,
            overlap: Overlap::Neighbors4,
            bidirectional: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Input,
    Visiting,
    Transition,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub tail: usize,
    pub head: usize,
    pub cost: f64,
    pub kind: EdgeKind,
}

/// Node-split flow graph: each superpixel has an in-node and an out-node
/// joined by its visiting edge. Absent edges stand for infinite cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackGraph {
    frame_of: Vec<usize>,
    edges: Vec<GraphEdge>,
}

impl TrackGraph {
    /// Empty graph over superpixels whose frames are given by `frame_of`.
    pub fn new(frame_of: Vec<usize>) -> Self {
        TrackGraph {
            frame_of,
            edges: Vec::new(),
        }
    }

    #[inline]
    pub fn in_node(sp: usize) -> usize {
        2 + 2 * sp
    }

    #[inline]
    pub fn out_node(sp: usize) -> usize {
        3 + 2 * sp
    }

    /// Superpixel owning a split node, `None` for source and sink.
    pub fn superpixel_of(node: usize) -> Option<usize> {
        (node >= 2).then(|| (node - 2) / 2)
    }

    pub fn superpixels(&self) -> usize {
        self.frame_of.len()
    }

    pub fn frame_of(&self, sp: usize) -> usize {
        self.frame_of[sp]
    }

    pub fn frames(&self) -> &[usize] {
        &self.frame_of
    }

    pub fn node_count(&self) -> usize {
        2 + 2 * self.frame_of.len()
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    pub fn add_input(&mut self, sp: usize, cost: f64) {
        self.push(SOURCE, Self::in_node(sp), cost, EdgeKind::Input);
    }

    pub fn add_visiting(&mut self, sp: usize, cost: f64) {
        self.push(Self::in_node(sp), Self::out_node(sp), cost, EdgeKind::Visiting);
    }

    /// Edge from `from` to `to`; `to` must lie in an adjacent frame.
    pub fn add_transition(&mut self, from: usize, to: usize, cost: f64) {
        debug_assert_eq!(self.frame_of[from].abs_diff(self.frame_of[to]), 1);
        self.push(Self::out_node(from), Self::in_node(to), cost, EdgeKind::Transition);
    }

    pub fn add_output(&mut self, sp: usize, cost: f64) {
        self.push(Self::out_node(sp), SINK, cost, EdgeKind::Output);
    }

    fn push(&mut self, tail: usize, head: usize, cost: f64, kind: EdgeKind) {
        assert!(tail < self.node_count() && head < self.node_count());
        self.edges.push(GraphEdge {
            tail,
            head,
            cost,
            kind,
        });
    }

    pub fn has_input(&self) -> bool {
        self.edges.iter().any(|e| e.kind == EdgeKind::Input)
    }
}

/// Negative log-odds of the mean probability, clamped to `[1e-6, 1 - 1e-6]`.
pub fn foreground_cost(fbar: f64) -> f64 {
    let f = fbar.clamp(1e-6, 1.0 - 1e-6);
    -math::ln(f / (1.0 - f))
}

/// Builds the tracking graph: input edges for superpixels whose centroid lies
/// in an annotation disc of their frame, visiting edges above the prune
/// threshold, zero-cost transitions between overlapping cells of consecutive
/// frames, and zero-cost output edges everywhere.
pub fn build_graph(
    seq: &Sequence,
    layout: &GridLayout,
    superpixels: &[Superpixel],
    cfg: &TrackerConfig,
) -> Result<TrackGraph> {
    build_directed_graph(seq, layout, superpixels, cfg, Direction::Forward)
}

/// As [`build_graph`], with transitions running in `direction`.
pub fn build_directed_graph(
    seq: &Sequence,
    layout: &GridLayout,
    superpixels: &[Superpixel],
    cfg: &TrackerConfig,
    direction: Direction,
) -> Result<TrackGraph> {
    let cells = layout.cells();
    if superpixels.len() != cells * seq.len() {
        return Err(Error::CountMismatch {
            what: "superpixels",
            expected: cells * seq.len(),
            found: superpixels.len(),
        });
    }
    let radius = seq.annotation_radius(cfg.radius_frac);
    let r2 = radius * radius;
    let mut graph = TrackGraph::new(superpixels.iter().map(|s| s.frame).collect());
    for (i, sp) in superpixels.iter().enumerate() {
        debug_assert_eq!(sp.id, i);
        let (cx, cy) = sp.centroid;
        let annotated = seq.frame(sp.frame).annotations.iter().any(|a| {
            let (dx, dy) = (cx - a.x as f64, cy - a.y as f64);
            dx * dx + dy * dy <= r2
        });
        if annotated {
            graph.add_input(sp.id, 0.0);
        }
        if sp.mean_prob > cfg.prune {
            graph.add_visiting(sp.id, foreground_cost(sp.mean_prob));
        }
        let next = match direction {
            Direction::Forward => Some(sp.frame + 1).filter(|&f| f < seq.len()),
            Direction::Backward => sp.frame.checked_sub(1),
        };
        if let Some(next) = next {
            let mut link = |col: usize, row: usize| {
                graph.add_transition(sp.id, layout.superpixel_id(next, col, row), 0.0)
            };
            link(sp.col, sp.row);
            if cfg.overlap == Overlap::Neighbors4 {
                if sp.col > 0 {
                    link(sp.col - 1, sp.row);
                }
                if sp.col + 1 < layout.cols {
                    link(sp.col + 1, sp.row);
                }
                if sp.row > 0 {
                    link(sp.col, sp.row - 1);
                }
                if sp.row + 1 < layout.rows {
                    link(sp.col, sp.row + 1);
                }
            }
        }
        graph.add_output(sp.id, 0.0);
    }
    Ok(graph)
}
