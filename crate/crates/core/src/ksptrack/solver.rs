use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::graph::{TrackGraph, SINK, SOURCE};
use super::superpixel::Superpixel;
use crate::grid::{Grid, Mask};

/// Augmenting paths must be cheaper than this to be accepted.
const ACCEPT_BELOW: f64 = -1e-12;

/// Node-disjoint source-to-sink paths, each given as its superpixel ids in
/// frame order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathSolution {
    pub paths: Vec<Vec<usize>>,
    pub total_cost: f64,
    /// Cost of each accepted augmenting path, in acceptance order.
    pub augment_costs: Vec<f64>,
}

impl PathSolution {
    /// Selected superpixel ids, sorted.
    pub fn selected(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.paths.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn k(&self) -> usize {
        self.paths.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct Arc {
    to: usize,
    rev: usize,
    cap: u8,
    cost: f64,
}

struct Residual {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
    /// Forward arc of each graph edge.
    forward: Vec<usize>,
}

impl Residual {
    fn new(graph: &TrackGraph) -> Self {
        let mut r = Residual {
            arcs: Vec::with_capacity(2 * graph.edges().len()),
            adj: vec![Vec::new(); graph.node_count()],
            forward: Vec::with_capacity(graph.edges().len()),
        };
        for e in graph.edges() {
            let a = r.arcs.len();
            r.arcs.push(Arc {
                to: e.head,
                rev: a + 1,
                cap: 1,
                cost: e.cost,
            });
            r.arcs.push(Arc {
                to: e.tail,
                rev: a,
                cap: 0,
                cost: -e.cost,
            });
            r.adj[e.tail].push(a);
            r.adj[e.head].push(a + 1);
            r.forward.push(a);
        }
        r
    }

    fn push_unit(&mut self, arc: usize) {
        self.arcs[arc].cap -= 1;
        let rev = self.arcs[arc].rev;
        self.arcs[rev].cap += 1;
    }
}

/// Shortest distances from the source on the original DAG, relaxing nodes in
/// topological order.
fn dag_distances(graph: &TrackGraph) -> Vec<f64> {
    let n = graph.node_count();
    let mut indegree = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in graph.edges().iter().enumerate() {
        indegree[e.head] += 1;
        out[e.tail].push(i);
    }
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    while let Some(v) = stack.pop() {
        order.push(v);
        for &i in &out[v] {
            let h = graph.edges()[i].head;
            indegree[h] -= 1;
            if indegree[h] == 0 {
                stack.push(h);
            }
        }
    }
    assert_eq!(order.len(), n, "tracking graph must be acyclic");
    let mut dist = vec![f64::INFINITY; n];
    dist[SOURCE] = 0.0;
    for v in order {
        if dist[v].is_infinite() {
            continue;
        }
        for &i in &out[v] {
            let e = &graph.edges()[i];
            let d = dist[v] + e.cost;
            if d < dist[e.head] {
                dist[e.head] = d;
            }
        }
    }
    dist
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra on reduced costs. Returns distances and the arc used to reach
/// each node.
fn dijkstra(res: &Residual, potential: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = res.adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut via = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[SOURCE] = 0.0;
    heap.push(Entry(0.0, SOURCE));
    while let Some(Entry(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &a in &res.adj[v] {
            let arc = &res.arcs[a];
            if arc.cap == 0 || potential[arc.to].is_infinite() {
                continue;
            }
            let reduced = (arc.cost + potential[v] - potential[arc.to]).max(0.0);
            let nd = d + reduced;
            if nd < dist[arc.to] {
                dist[arc.to] = nd;
                via[arc.to] = a;
                heap.push(Entry(nd, arc.to));
            }
        }
    }
    (dist, via)
}

/// Successive shortest augmenting paths of unit flow until no augmenting
/// path has negative cost. The number of paths is not fixed in advance.
pub fn solve_ksp(graph: &TrackGraph) -> PathSolution {
    let mut res = Residual::new(graph);
    let mut potential = dag_distances(graph);
    let mut augment_costs = Vec::new();
    if potential[SINK].is_finite() {
        loop {
            let (dist, via) = dijkstra(&res, &potential);
            if dist[SINK].is_infinite() {
                break;
            }
            let cost = dist[SINK] + potential[SINK] - potential[SOURCE];
            if cost >= ACCEPT_BELOW {
                break;
            }
            let mut v = SINK;
            while v != SOURCE {
                let a = via[v];
                res.push_unit(a);
                v = res.arcs[res.arcs[a].rev].to;
            }
            for (p, d) in potential.iter_mut().zip(&dist) {
                if d.is_finite() {
                    *p += d;
                }
            }
            augment_costs.push(cost);
        }
    }
    decompose(graph, &res, augment_costs)
}

fn decompose(graph: &TrackGraph, res: &Residual, augment_costs: Vec<f64>) -> PathSolution {
    // graph edge carrying flow out of each node
    let mut next: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &a) in res.forward.iter().enumerate() {
        if res.arcs[a].cap == 0 {
            next.entry(graph.edges()[i].tail).or_default().push(i);
        }
    }
    let mut paths = Vec::new();
    let mut total = 0.0;
    let starts = next.remove(&SOURCE).unwrap_or_default();
    for first in starts {
        let mut path = Vec::new();
        let mut edge = first;
        loop {
            let e = &graph.edges()[edge];
            total += e.cost;
            if e.head == SINK {
                break;
            }
            if let Some(sp) = TrackGraph::superpixel_of(e.head) {
                if e.head == TrackGraph::in_node(sp) {
                    path.push(sp);
                }
            }
            edge = next
                .get_mut(&e.head)
                .and_then(|v| v.pop())
                .expect("flow is conserved at inner nodes");
        }
        paths.push(path);
    }
    PathSolution {
        paths,
        total_cost: total,
        augment_costs,
    }
}

/// Optimality evidence for a solution, from a Bellman-Ford pass over its
/// residual graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    /// Cheapest remaining augmenting path, if the sink is reachable.
    pub min_augmenting_cost: Option<f64>,
    pub negative_cycle: bool,
}

pub fn certify(graph: &TrackGraph, solution: &PathSolution) -> Certificate {
    let mut res = Residual::new(graph);
    let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (i, e) in graph.edges().iter().enumerate() {
        index.insert((e.tail, e.head), i);
    }
    for path in &solution.paths {
        let mut nodes = vec![SOURCE];
        for &sp in path {
            nodes.push(TrackGraph::in_node(sp));
            nodes.push(TrackGraph::out_node(sp));
        }
        nodes.push(SINK);
        for w in nodes.windows(2) {
            let edge = index[&(w[0], w[1])];
            res.push_unit(res.forward[edge]);
        }
    }
    let n = res.adj.len();
    let mut dist = vec![f64::INFINITY; n];
    dist[SOURCE] = 0.0;
    let mut negative_cycle = false;
    for round in 0..=n {
        let mut changed = false;
        for v in 0..n {
            if dist[v].is_infinite() {
                continue;
            }
            for &a in &res.adj[v] {
                let arc = &res.arcs[a];
                if arc.cap > 0 && dist[v] + arc.cost < dist[arc.to] - 1e-12 {
                    dist[arc.to] = dist[v] + arc.cost;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
        if round == n {
            negative_cycle = true;
        }
    }
    Certificate {
        min_augmenting_cost: dist[SINK].is_finite().then_some(dist[SINK]),
        negative_cycle,
    }
}

/// Binary masks: a pixel is foreground iff its superpixel lies on a path.
pub fn solution_to_masks(
    solution: &PathSolution,
    superpixels: &[Superpixel],
    width: usize,
    height: usize,
    frames: usize,
) -> Vec<Mask> {
    let mut masks = vec![Grid::filled(width, height, false); frames];
    for id in solution.selected() {
        let sp = &superpixels[id];
        for &p in &sp.pixels {
            masks[sp.frame][p] = true;
        }
    }
    masks
}
