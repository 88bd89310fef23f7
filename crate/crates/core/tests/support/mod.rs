//! Independent reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssnnpu_core::ksptrack::{EdgeKind, TrackGraph, SINK, SOURCE};

/// Minimum total cost over all sets of node-disjoint source-to-sink paths,
/// by enumerating every path and searching subsets with memoization.
/// Only meant for graphs with at most 63 superpixels.
pub fn brute_force_ksp(graph: &TrackGraph) -> f64 {
    assert!(graph.superpixels() < 64);
    let mut out: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for e in graph.edges() {
        out.entry(e.tail).or_default().push((e.head, e.cost));
    }
    let mut paths: Vec<(u64, f64)> = Vec::new();
    fn walk(
        node: usize,
        used: u64,
        cost: f64,
        out: &HashMap<usize, Vec<(usize, f64)>>,
        paths: &mut Vec<(u64, f64)>,
    ) {
        if node == SINK {
            paths.push((used, cost));
            return;
        }
        for &(head, c) in out.get(&node).map(|v| v.as_slice()).unwrap_or(&[]) {
            let mut next = used;
            if head != SINK {
                let sp = (head - 2) / 2;
                // the in-node and out-node of one superpixel share a bit
                if head % 2 == 0 {
                    if used & (1 << sp) != 0 {
                        continue;
                    }
                    next |= 1 << sp;
                }
            }
            walk(head, next, cost + c, out, paths);
        }
    }
    walk(SOURCE, 0, 0.0, &out, &mut paths);

    fn best(used: u64, paths: &[(u64, f64)], memo: &mut HashMap<u64, f64>) -> f64 {
        if let Some(&v) = memo.get(&used) {
            return v;
        }
        let mut b = 0.0;
        for &(mask, cost) in paths {
            if mask & used == 0 && cost < 0.0 {
                b = f64::min(b, cost + best(used | mask, paths, memo));
            }
        }
        memo.insert(used, b);
        b
    }
    best(0, &paths, &mut HashMap::new())
}

/// Random tracking graph with `frames` frames of 1..=`per_frame`
/// superpixels and costs in `[-2, 2]`. Transitions run forward or backward.
pub fn random_graph(seed: u64, max_frames: usize, per_frame: usize) -> TrackGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = rng.random_range(1..=max_frames);
    let counts: Vec<usize> = (0..frames).map(|_| rng.random_range(1..=per_frame)).collect();
    let mut frame_of = Vec::new();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); frames];
    for (f, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            members[f].push(frame_of.len());
            frame_of.push(f);
        }
    }
    let backward = rng.random_bool(0.3);
    let mut g = TrackGraph::new(frame_of.clone());
    let cost = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random_range(-2.0..=2.0)
        }
    };
    for sp in 0..frame_of.len() {
        if rng.random_bool(0.5) {
            let c = cost(&mut rng);
            g.add_input(sp, c);
        }
        if rng.random_bool(0.85) {
            let c = rng.random_range(-2.0..=2.0);
            g.add_visiting(sp, c);
        }
        let f = frame_of[sp];
        let next = if backward { f.checked_sub(1) } else { Some(f + 1).filter(|&n| n < frames) };
        if let Some(n) = next {
            for &to in &members[n] {
                if rng.random_bool(0.6) {
                    let c = cost(&mut rng);
                    g.add_transition(sp, to, c);
                }
            }
        }
        if rng.random_bool(0.8) {
            let c = cost(&mut rng);
            g.add_output(sp, c);
        }
    }
    debug_assert!(g.count(EdgeKind::Visiting) <= frame_of.len());
    g
}

type Mat = Vec<Vec<f64>>;

fn identity(n: usize) -> Mat {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn mul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..p).map(|j| (0..m).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

fn sub(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect()).collect()
}

fn mat_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a.iter().zip(identity(n)).map(|(r, e)| [r.clone(), e].concat()).collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let row = m[c].clone();
                m[r].iter_mut().zip(&row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Matrix of the Hann moving average with mirrored ends, built from the
/// textbook window definition.
pub fn smoothing_matrix(n: usize, window: usize) -> Mat {
    let len = if window.is_multiple_of(2) { window + 1 } else { window.max(1) };
    if len == 1 {
        return identity(n);
    }
    let raw: Vec<f64> = (0..len).map(|m| 0.5 - 0.5 * (2.0 * PI * m as f64 / (len - 1) as f64).cos()).collect();
    let total: f64 = raw.iter().sum();
    let half = (len / 2) as isize;
    let mut s = vec![vec![0.0; n]; n];
    for (i, row) in s.iter_mut().enumerate() {
        for (m, w) in raw.iter().enumerate() {
            let mut j = i as isize + m as isize - half;
            // half-sample symmetric reflection
            while j < 0 || j >= n as isize {
                j = if j < 0 { -j - 1 } else { 2 * n as isize - j - 1 };
            }
            row[j as usize] += w / total;
        }
    }
    s
}

/// Linear Kalman filter with state transition `x -> S x - u_k`, identity
/// observation and diagonal noise.
pub struct LinearKalman {
    pub mean: Vec<f64>,
    pub cov: Mat,
    transition: Mat,
    q: f64,
    r: f64,
}

impl LinearKalman {
    pub fn new(mean: Vec<f64>, sigma_s: f64, window: usize, q: f64, r: f64) -> Self {
        let n = mean.len();
        let cov = identity(n).into_iter().map(|row| row.into_iter().map(|v| v * sigma_s).collect()).collect();
        LinearKalman {
            transition: smoothing_matrix(n, window),
            mean,
            cov,
            q,
            r,
        }
    }

    pub fn step(&mut self, rho: &[f64], u: f64) {
        let n = self.mean.len();
        let f = &self.transition;
        let pred: Vec<f64> = mat_vec(f, &self.mean).into_iter().map(|v| v - u).collect();
        let mut pcov = mul(&mul(f, &self.cov), &transpose(f));
        for (i, row) in pcov.iter_mut().enumerate() {
            row[i] += self.q;
        }
        let mut s = pcov.clone();
        for (i, row) in s.iter_mut().enumerate() {
            row[i] += self.r;
        }
        let gain = mul(&pcov, &inverse(&s));
        let innov: Vec<f64> = rho.iter().zip(&pred).map(|(a, b)| a - b).collect();
        self.mean = pred.iter().zip(mat_vec(&gain, &innov)).map(|(a, b)| a + b).collect();
        self.cov = mul(&sub(&identity(n), &gain), &pcov);
        let t = transpose(&self.cov);
        self.cov = add(&self.cov, &t).into_iter().map(|r| r.into_iter().map(|v| 0.5 * v).collect()).collect();
    }
}
