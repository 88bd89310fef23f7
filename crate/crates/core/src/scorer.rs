//! Per-pixel foreground scorer: hand-built features feeding a small
//! fully-connected network with exact reverse-mode gradients.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::grid::Grid;
use crate::math::{self, reflect_index};
use crate::seqdata::{Frame, Sequence};
use crate::{Error, Result};

pub const FEATURE_DIM: usize = 8;
pub const HIDDEN: usize = 32;

/// `[intensity, mean3, std3, mean9, std9, gradient magnitude, x/W, y/H]`.
pub type FeatureVector = [f64; FEATURE_DIM];
pub type FeatureGrid = Grid<FeatureVector>;

const W1: usize = 0;
const B1: usize = W1 + HIDDEN * FEATURE_DIM;
const W2: usize = B1 + HIDDEN;
const B2: usize = W2 + HIDDEN * HIDDEN;
const W3: usize = B2 + HIDDEN;
const B3: usize = W3 + HIDDEN;

/// Number of scalar parameters of the `8 -> 32 -> 32 -> 1` network.
pub const PARAM_COUNT: usize = B3 + 1;

/// Window mean and population standard deviation with reflected borders.
fn window_stats(img: &Grid<f64>, x: usize, y: usize, radius: isize) -> (f64, f64) {
    let (w, h) = img.dims();
    let window = || {
        (-radius..=radius).flat_map(move |dy| {
            let yy = reflect_index(y as isize + dy, h);
            (-radius..=radius).map(move |dx| *img.get(reflect_index(x as isize + dx, w), yy))
        })
    };
    let count = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    let mean = window().sum::<f64>() / count;
    let var = window().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
    (mean, math::sqrt(var))
}

pub fn extract_features(frame: &Frame) -> FeatureGrid {
    let img = &frame.intensities;
    let (w, h) = img.dims();
    Grid::from_fn(w, h, |x, y| {
        let at = |dx: isize, dy: isize| {
            *img.get(
                reflect_index(x as isize + dx, w),
                reflect_index(y as isize + dy, h),
            )
        };
        let (mean3, std3) = window_stats(img, x, y, 1);
        let (mean9, std9) = window_stats(img, x, y, 4);
        let gx = 0.5 * (at(1, 0) - at(-1, 0));
        let gy = 0.5 * (at(0, 1) - at(0, -1));
        [
            *img.get(x, y),
            mean3,
            std3,
            mean9,
            std9,
            math::sqrt(gx * gx + gy * gy),
            x as f64 / w as f64,
            y as f64 / h as f64,
        ]
    })
}

/// Features of every frame, standardized per channel over the whole sequence.
pub fn extract_sequence_features(seq: &Sequence) -> Vec<FeatureGrid> {
    let mut features: Vec<FeatureGrid> = seq.frames().iter().map(extract_features).collect();
    standardize(&mut features);
    features
}

/// Shifts and scales each channel to zero mean and unit variance over all
/// pixels of all grids; constant channels are only centered. Returns the
/// per-channel `(mean, std)` used.
pub fn standardize(features: &mut [FeatureGrid]) -> [(f64, f64); FEATURE_DIM] {
    let mut out = [(0.0, 1.0); FEATURE_DIM];
    for (c, slot) in out.iter_mut().enumerate() {
        let column: Vec<f64> = features
            .iter()
            .flat_map(|g| g.as_slice().iter().map(move |v| v[c]))
            .collect();
        if column.is_empty() {
            continue;
        }
        let mean = math::mean(&column);
        let dev: Vec<f64> = column.iter().map(|v| (v - mean) * (v - mean)).collect();
        let std = math::sqrt(math::mean(&dev));
        *slot = (mean, if std > 1e-12 { std } else { 1.0 });
    }
    for g in features.iter_mut() {
        for v in g.as_mut_slice() {
            for (x, &(mean, std)) in v.iter_mut().zip(&out) {
                *x = (*x - mean) / std;
            }
        }
    }
    out
}

/// Parameters of the scorer network, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    params: Vec<f64>,
}

/// Gradient of a scalar loss with respect to every model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    pub grads: Vec<f64>,
}

impl GradientBuffer {
    pub fn zeros() -> Self {
        GradientBuffer {
            grads: vec![0.0; PARAM_COUNT],
        }
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, s: f64) {
        self.grads.iter_mut().for_each(|g| *g *= s);
    }

    pub fn add(&mut self, other: &GradientBuffer) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            *a += b;
        }
    }
}

struct Activations {
    pre1: [f64; HIDDEN],
    h1: [f64; HIDDEN],
    pre2: [f64; HIDDEN],
    h2: [f64; HIDDEN],
    logit: f64,
}

impl ScorerModel {
    pub fn from_params(params: Vec<f64>) -> Result<Self> {
        if params.len() != PARAM_COUNT {
            return Err(Error::CountMismatch {
                what: "scorer parameters",
                expected: PARAM_COUNT,
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::param("scorer parameters", "non-finite value"));
        }
        Ok(ScorerModel { params })
    }

    pub fn zeros() -> Self {
        ScorerModel {
            params: vec![0.0; PARAM_COUNT],
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn output_bias(&self) -> f64 {
        self.params[B3]
    }

    pub fn set_output_bias(&mut self, b: f64) {
        self.params[B3] = b;
    }

    #[inline]
    fn activations(&self, x: &FeatureVector) -> Activations {
        let p = &self.params;
        let mut act = Activations {
            pre1: [0.0; HIDDEN],
            h1: [0.0; HIDDEN],
            pre2: [0.0; HIDDEN],
            h2: [0.0; HIDDEN],
            logit: 0.0,
        };
        for j in 0..HIDDEN {
            let row = &p[W1 + j * FEATURE_DIM..W1 + (j + 1) * FEATURE_DIM];
            let mut a = p[B1 + j];
            for (w, v) in row.iter().zip(x) {
                a += w * v;
            }
            act.pre1[j] = a;
            act.h1[j] = a.max(0.0);
        }
        for j in 0..HIDDEN {
            let row = &p[W2 + j * HIDDEN..W2 + (j + 1) * HIDDEN];
            let mut a = p[B2 + j];
            for (w, h) in row.iter().zip(&act.h1) {
                a += w * h;
            }
            act.pre2[j] = a;
            act.h2[j] = a.max(0.0);
        }
        let mut z = p[B3];
        for k in 0..HIDDEN {
            z += p[W3 + k] * act.h2[k];
        }
        act.logit = z;
        act
    }

    /// Logit and probability for one feature vector. The probability uses
    /// the logit clamped to `[-40, 40]`.
    pub fn forward(&self, x: &FeatureVector) -> (f64, f64) {
        let z = self.activations(x).logit;
        (z, math::sigmoid(z))
    }

    pub fn logits(&self, batch: &[FeatureVector]) -> Vec<f64> {
        batch.iter().map(|x| self.activations(x).logit).collect()
    }

    pub fn logits_at(&self, features: &FeatureGrid, pixels: &[usize]) -> Vec<f64> {
        pixels
            .iter()
            .map(|&i| self.activations(&features[i]).logit)
            .collect()
    }

    pub fn probability_map(&self, features: &FeatureGrid) -> Grid<f64> {
        features.map(|x| math::sigmoid(self.activations(x).logit))
    }

    /// Accumulates `sum_s upstream[s] * d logit(x_s) / d params` into `grad`,
    /// visiting samples in order.
    pub fn accumulate_gradient<'a>(
        &self,
        samples: impl IntoIterator<Item = (&'a FeatureVector, f64)>,
        grad: &mut GradientBuffer,
    ) {
        let p = &self.params;
        let g = &mut grad.grads;
        let mut d2 = [0.0; HIDDEN];
        let mut d1 = [0.0; HIDDEN];
        for (x, u) in samples {
            if u == 0.0 {
                continue;
            }
            let act = self.activations(x);
            g[B3] += u;
            for k in 0..HIDDEN {
                g[W3 + k] += u * act.h2[k];
                d2[k] = if act.pre2[k] > 0.0 { u * p[W3 + k] } else { 0.0 };
            }
            d1.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..HIDDEN {
                let dj = d2[j];
                if dj == 0.0 {
                    continue;
                }
                g[B2 + j] += dj;
                let base = W2 + j * HIDDEN;
                for k in 0..HIDDEN {
                    g[base + k] += dj * act.h1[k];
                    d1[k] += p[base + k] * dj;
                }
            }
            for j in 0..HIDDEN {
                if act.pre1[j] <= 0.0 {
                    continue;
                }
                let dj = d1[j];
                g[B1 + j] += dj;
                let base = W1 + j * FEATURE_DIM;
                for k in 0..FEATURE_DIM {
                    g[base + k] += dj * x[k];
                }
            }
        }
    }

    /// Exact gradient of `sum_s upstream[s] * logit(batch[s])`.
    pub fn backward(&self, batch: &[FeatureVector], upstream: &[f64]) -> GradientBuffer {
        assert_eq!(batch.len(), upstream.len(), "one upstream value per sample");
        let mut grad = GradientBuffer::zeros();
        self.accumulate_gradient(batch.iter().zip(upstream.iter().copied()), &mut grad);
        grad
    }
}

/// He-initialized network whose output bias makes every initial prediction
/// close to `pi_init`.
pub fn init_model(seed: u64, pi_init: f64) -> Result<ScorerModel> {
    if !(pi_init > 0.0 && pi_init < 1.0) {
        return Err(Error::param("pi_init", "must lie in (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; PARAM_COUNT];
    let mut he = |range: core::ops::Range<usize>, fan_in: usize| {
        let normal = Normal::new(0.0, math::sqrt(2.0 / fan_in as f64)).expect("finite std");
        for p in &mut params[range] {
            *p = normal.sample(&mut rng);
        }
    };
    he(W1..B1, FEATURE_DIM);
    he(W2..B2, HIDDEN);
    he(W3..B3, HIDDEN);
    params[B3] = math::logit(pi_init);
    Ok(ScorerModel { params })
}
