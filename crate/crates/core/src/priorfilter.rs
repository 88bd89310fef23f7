//! Recursive estimation of per-frame class priors.
//!
//! The state is the vector of frame priors. Each epoch it is smoothed across
//! frames with a Hann moving average and pushed down by a linearly growing
//! control input; the observation is the mean of `f^gamma` over each frame.
//! An unscented Kalman filter tracks the state, with every sigma point
//! clipped into `[lower, upper]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::grid::Grid;
use crate::math;
use crate::purisk::PRIOR_EPS;
use crate::scorer::{FeatureGrid, ScorerModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Process variance (diagonal of Q).
    pub sigma_q: f64,
    /// Observation variance (diagonal of R).
    pub sigma_r: f64,
    /// Initial state variance (diagonal of S).
    pub sigma_s: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_q: 10.0,
            sigma_r: 0.05,
            sigma_s: 0.03,
        }
    }
}

/// Scaled unscented transform constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnscentedParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UnscentedParams {
    fn default() -> Self {
        UnscentedParams {
            alpha: 1.0,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

/// `u_k = u_0 + (u_T - u_0) k / T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSchedule {
    pub u0: f64,
    pub ut: f64,
    pub horizon: usize,
}

impl ControlSchedule {
    pub const DEFAULT_U0_FRAC: f64 = 0.02;
    pub const DEFAULT_UT_FRAC: f64 = 0.4;

    /// Ramp whose endpoints are fractions of the prior upper bound.
    pub fn proportional(pi0: f64, u0_frac: f64, ut_frac: f64, horizon: usize) -> Self {
        ControlSchedule {
            u0: u0_frac * pi0,
            ut: ut_frac * pi0,
            horizon,
        }
    }

    /// Control input at epoch `k`; epochs past the horizon hold `u_T`.
    pub fn at(&self, k: usize) -> f64 {
        if self.horizon == 0 {
            return self.ut;
        }
        let k = k.min(self.horizon) as f64;
        self.u0 + (self.ut - self.u0) * k / self.horizon as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u0 >= 0.0 && self.ut >= self.u0) {
            return Err(Error::param("control", "need 0 <= u0 <= uT"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBounds {
    pub lower: f64,
    pub upper: f64,
}

impl StateBounds {
    pub fn new(upper: f64) -> Self {
        StateBounds {
            lower: PRIOR_EPS,
            upper,
        }
    }

    #[inline]
    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

/// How the measurement update uses the predicted belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Redraw sigma points around the prediction and clip them like the
    /// prediction step does. With a process variance much wider than the
    /// bounds the clipped spread, and with it the gain, collapses.
    ClippedRedraw,
    /// Kalman update from the predicted mean and covariance. The identity
    /// observation makes the unscented update exactly this linear one.
    #[default]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub noise: NoiseConfig,
    pub unscented: UnscentedParams,
    pub control: ControlSchedule,
    pub bounds: StateBounds,
    /// Hann window length across frames.
    pub window: usize,
    pub update: UpdateMode,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        if !(n.sigma_q > 0.0 && n.sigma_r > 0.0 && n.sigma_s > 0.0) {
            return Err(Error::param("noise", "variances must be positive"));
        }
        if !(self.bounds.lower < self.bounds.upper) {
            return Err(Error::param("bounds", "lower must be below upper"));
        }
        self.control.validate()
    }
}

/// Window length proportional to the number of frames, at least 1.
pub fn smoothing_window(frames: usize, frac: f64) -> usize {
    (math::round(frac * frames as f64) as usize).max(1)
}

/// Normalized Hann weights for an odd window (even lengths grow by one).
pub fn hann_weights(window: usize) -> Vec<f64> {
    let mut len = window.max(1);
    if len.is_multiple_of(2) {
        len += 1;
    }
    if len == 1 {
        return vec![1.0];
    }
    let raw: Vec<f64> = (0..len)
        .map(|m| {
            1.0 - math::cos(2.0 * core::f64::consts::PI * m as f64 / (len - 1) as f64)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Hann-weighted moving average with mirrored ends.
pub fn hann_smooth(values: &[f64], window: usize) -> Vec<f64> {
    let weights = hann_weights(window);
    if weights.len() == 1 {
        return values.to_vec();
    }
    let half = (weights.len() / 2) as isize;
    let n = values.len();
    (0..n)
        .map(|i| {
            weights
                .iter()
                .enumerate()
                .map(|(m, w)| w * values[math::reflect_index(i as isize + m as isize - half, n)])
                .sum()
        })
        .collect()
}

/// Deterministic part of the state model: smooth, then subtract `u_k`.
pub fn transition(mean: &[f64], k: usize, sched: &ControlSchedule, window: usize) -> Vec<f64> {
    let u = sched.at(k);
    let mut out = hann_smooth(mean, window);
    out.iter_mut().for_each(|v| *v -= u);
    out
}

/// Gaussian belief over the per-frame priors.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl PriorState {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean_vec(&self) -> Vec<f64> {
        self.mean.iter().copied().collect()
    }
}

/// `pi0` on every frame with covariance `sigma_s * I`.
pub fn init_state(pi0: f64, frames: usize, noise: &NoiseConfig) -> Result<PriorState> {
    if !(pi0 > 0.0 && pi0 < 1.0) {
        return Err(Error::param("pi0", "must lie in (0, 1)"));
    }
    if frames == 0 {
        return Err(Error::EmptySequence);
    }
    Ok(PriorState {
        mean: DVector::from_element(frames, pi0),
        cov: DMatrix::identity(frames, frames) * noise.sigma_s,
    })
}

struct SigmaWeights {
    mean0: f64,
    cov0: f64,
    rest: f64,
    scale: f64,
}

impl SigmaWeights {
    fn new(n: usize, p: &UnscentedParams) -> Self {
        let n = n as f64;
        let lambda = p.alpha * p.alpha * (n + p.kappa) - n;
        let scale = n + lambda;
        SigmaWeights {
            mean0: lambda / scale,
            cov0: lambda / scale + (1.0 - p.alpha * p.alpha + p.beta),
            rest: 0.5 / scale,
            scale,
        }
    }

    fn mean_weight(&self, j: usize) -> f64 {
        if j == 0 {
            self.mean0
        } else {
            self.rest
        }
    }

    fn cov_weight(&self, j: usize) -> f64 {
        if j == 0 {
            self.cov0
        } else {
            self.rest
        }
    }
}

/// Lower Cholesky factor, retrying with growing diagonal jitter.
fn cholesky_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let n = m.nrows();
    let mut jitter = 1e-9;
    for _ in 0..4 {
        let repaired = m + DMatrix::identity(n, n) * jitter;
        if let Some(c) = repaired.cholesky() {
            return Ok(c.l());
        }
        jitter *= 10.0;
    }
    Err(Error::FilterDivergence(format!(
        "covariance is not positive definite (n = {n})"
    )))
}

/// `2n + 1` sigma points of `(mean, cov)`, clipped into the bounds.
fn sigma_points(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    w: &SigmaWeights,
    bounds: &StateBounds,
) -> Result<Vec<DVector<f64>>> {
    let n = mean.len();
    let root = cholesky_factor(&(cov * w.scale))?;
    let mut pts = Vec::with_capacity(2 * n + 1);
    pts.push(mean.clone());
    for i in 0..n {
        pts.push(mean + root.column(i));
    }
    for i in 0..n {
        pts.push(mean - root.column(i));
    }
    for p in &mut pts {
        p.iter_mut().for_each(|v| *v = bounds.clip(*v));
    }
    Ok(pts)
}

fn weighted_stats(pts: &[DVector<f64>], w: &SigmaWeights) -> (DVector<f64>, DMatrix<f64>) {
    let n = pts[0].len();
    let mut mean = DVector::zeros(n);
    for (j, p) in pts.iter().enumerate() {
        mean.axpy(w.mean_weight(j), p, 1.0);
    }
    let mut cov = DMatrix::zeros(n, n);
    for (j, p) in pts.iter().enumerate() {
        let d = p - &mean;
        cov.ger(w.cov_weight(j), &d, &d, 1.0);
    }
    (mean, cov)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// One predict/update cycle of the constrained unscented filter.
///
/// Sigma points are clipped when drawn and again after the transition; the
/// update follows `cfg.update` and the posterior mean is clipped. In the
/// interior either mode reduces to the linear Kalman filter exactly.
pub fn ukf_step(
    state: &PriorState,
    rho: &[f64],
    k: usize,
    cfg: &FilterConfig,
) -> Result<PriorState> {
    let n = state.len();
    if rho.len() != n {
        return Err(Error::CountMismatch {
            what: "observations",
            expected: n,
            found: rho.len(),
        });
    }
    let w = SigmaWeights::new(n, &cfg.unscented);
    let bounds = &cfg.bounds;

    // predict
    let drawn = sigma_points(&state.mean, &state.cov, &w, bounds)?;
    let propagated: Vec<DVector<f64>> = drawn
        .iter()
        .map(|p| {
            let next = transition(p.as_slice(), k, &cfg.control, cfg.window);
            DVector::from_iterator(n, next.into_iter().map(|v| bounds.clip(v)))
        })
        .collect();
    let (pred_mean, mut pred_cov) = weighted_stats(&propagated, &w);
    for i in 0..n {
        pred_cov[(i, i)] += cfg.noise.sigma_q;
    }
    symmetrize(&mut pred_cov);

    // update (identity observation model)
    let (prior_mean, prior_cov) = match cfg.update {
        UpdateMode::ClippedRedraw => {
            let redrawn = sigma_points(&pred_mean, &pred_cov, &w, bounds)?;
            weighted_stats(&redrawn, &w)
        }
        UpdateMode::Linear => (pred_mean, pred_cov),
    };
    let mut innovation_cov = prior_cov.clone();
    for i in 0..n {
        innovation_cov[(i, i)] += cfg.noise.sigma_r;
    }
    let chol = innovation_cov.clone().cholesky().ok_or_else(|| {
        Error::FilterDivergence("innovation covariance is not positive definite".into())
    })?;
    // K = Pxz S^-1 with Pxz = prior_cov; S and Pxz are symmetric.
    let gain = chol.solve(&prior_cov).transpose();
    let rho = DVector::from_column_slice(rho);
    let mut mean = &prior_mean + &gain * (rho - &prior_mean);
    let mut cov = &prior_cov - &gain * &innovation_cov * gain.transpose();
    symmetrize(&mut cov);
    mean.iter_mut().for_each(|v| *v = bounds.clip(*v));

    if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
        return Err(Error::FilterDivergence(format!(
            "non-finite state after epoch {k}"
        )));
    }
    Ok(PriorState { mean, cov })
}

/// `rho^i = mean over frame i of p^gamma`.
pub fn observations_from_maps(maps: &[Grid<f64>], gamma: f64) -> Vec<f64> {
    maps.iter()
        .map(|m| {
            let powered: Vec<f64> = m.as_slice().iter().map(|&p| math::powf(p, gamma)).collect();
            math::mean(&powered)
        })
        .collect()
}

pub fn clip_observations(rho: &mut [f64], upper: f64) {
    rho.iter_mut().for_each(|v| *v = v.clamp(0.0, upper));
}

/// Observed priors of the current model, clipped to `[0, upper]`.
pub fn observe_priors(
    model: &ScorerModel,
    features: &[FeatureGrid],
    gamma: f64,
    upper: f64,
) -> Result<Vec<f64>> {
    if !(gamma >= 1.0) {
        return Err(Error::param("gamma", "must be at least 1"));
    }
    let maps: Vec<Grid<f64>> = features.iter().map(|f| model.probability_map(f)).collect();
    let mut rho = observations_from_maps(&maps, gamma);
    clip_observations(&mut rho, upper);
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(n: usize, pi0: f64) -> FilterConfig {
        FilterConfig {
            noise: NoiseConfig::default(),
            unscented: UnscentedParams::default(),
            control: ControlSchedule::proportional(pi0, 0.02, 0.4, 100),
            bounds: StateBounds::new(pi0),
            window: smoothing_window(n, 0.05),
            update: UpdateMode::default(),
        }
    }

    #[test]
    fn unit_window_is_identity() {
        let v = [0.3, 0.1, 0.7, 0.2];
        assert_eq!(hann_smooth(&v, 1), v.to_vec());
        // length 2 grows to 3, whose Hann window is (0, 1, 0)
        assert_eq!(hann_smooth(&v, 2), v.to_vec());
    }

    #[test]
    fn hann_preserves_constants() {
        for window in [3, 5, 7, 9] {
            let out = hann_smooth(&[0.42; 6], window);
            for v in out {
                assert_relative_eq!(v, 0.42, epsilon = 1e-15);
            }
            assert!((hann_weights(window).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn hann_impulse_matches_direct_convolution() {
        // window 5: raw weights (0, 1, 2, 1, 0) / 4
        let w = [0.0, 0.25, 0.5, 0.25, 0.0];
        let v = [0.0, 0.0, 1.0, 0.0, 0.0];
        let mut expected = [0.0; 5];
        for i in 0..5isize {
            for m in 0..5isize {
                let j = i + m - 2;
                let j = if j < 0 { -j - 1 } else if j >= 5 { 9 - j } else { j };
                expected[i as usize] += w[m as usize] * v[j as usize];
            }
        }
        let got = hann_smooth(&v, 5);
        for (g, e) in got.iter().zip(&expected) {
            assert_relative_eq!(g, e, epsilon = 1e-15);
        }
        assert_relative_eq!(got[1], 0.25);
        assert_relative_eq!(got[2], 0.5);
    }

    #[test]
    fn transition_examples() {
        let zero = ControlSchedule {
            u0: 0.0,
            ut: 0.0,
            horizon: 10,
        };
        let v = [0.2, 0.5, 0.3];
        assert_eq!(transition(&v, 4, &zero, 1), v.to_vec());
        let ramp = ControlSchedule {
            u0: 0.01,
            ut: 0.05,
            horizon: 10,
        };
        assert_relative_eq!(transition(&[0.3], 0, &ramp, 1)[0], 0.29, epsilon = 1e-15);
        assert_relative_eq!(transition(&[0.3], 10, &ramp, 1)[0], 0.25, epsilon = 1e-15);
        let flat = ControlSchedule {
            u0: 0.01,
            ut: 0.01,
            horizon: 5,
        };
        for v in transition(&[0.3; 4], 3, &flat, 1) {
            assert_relative_eq!(v, 0.29, epsilon = 1e-15);
        }
    }

    #[test]
    fn init_state_examples() {
        let s = init_state(0.3, 4, &NoiseConfig::default()).unwrap();
        assert_eq!(s.mean_vec(), vec![0.3; 4]);
        assert_eq!(s.cov, DMatrix::identity(4, 4) * 0.03);
        assert_eq!(init_state(0.3, 1, &NoiseConfig::default()).unwrap().len(), 1);
        assert!(init_state(1.0, 3, &NoiseConfig::default()).is_err());
    }

    #[test]
    fn perfect_observations_are_adopted() {
        let pi0 = 0.2;
        let mut cfg = config(6, pi0);
        cfg.noise.sigma_r = 1e-8;
        let mut s = init_state(pi0, 6, &cfg.noise).unwrap();
        let rho = [0.05, 0.07, 0.1, 0.12, 0.08, 0.06];
        for k in 0..5 {
            s = ukf_step(&s, &rho, k, &cfg).unwrap();
            for (m, r) in s.mean.iter().zip(&rho) {
                assert!((m - r).abs() <= 1e-4, "epoch {k}: {m} vs {r}");
            }
        }
    }

    #[test]
    fn state_never_exceeds_upper_bound() {
        let pi0 = 0.1;
        let cfg = config(5, pi0);
        let mut s = init_state(pi0, 5, &cfg.noise).unwrap();
        for k in 0..30 {
            s = ukf_step(&s, &[0.9; 5], k, &cfg).unwrap();
            assert!(s.mean.iter().all(|&m| m <= pi0 && m >= PRIOR_EPS));
        }
    }

    #[test]
    fn random_steps_respect_bounds_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let n = rng.random_range(1..12);
            let pi0 = rng.random_range(0.02..0.6);
            let mut cfg = config(n, pi0);
            cfg.window = rng.random_range(1..6);
            let mut s = init_state(pi0, n, &cfg.noise).unwrap();
            for k in 0..50 {
                let rho: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..1.0)).collect();
                let mut rho = rho;
                clip_observations(&mut rho, pi0);
                s = ukf_step(&s, &rho, k, &cfg).unwrap();
                for &m in s.mean.iter() {
                    assert!(m >= PRIOR_EPS && m <= pi0, "trial {trial}");
                }
                let asym = (&s.cov - s.cov.transpose()).amax();
                assert!(asym <= 1e-10);
            }
        }
    }

    #[test]
    fn rejects_observation_count_mismatch() {
        let cfg = config(3, 0.2);
        let s = init_state(0.2, 3, &cfg.noise).unwrap();
        assert!(ukf_step(&s, &[0.1, 0.1], 0, &cfg).is_err());
    }

    #[test]
    fn control_ramp_endpoints() {
        let c = ControlSchedule::proportional(0.5, 0.02, 0.4, 100);
        assert_relative_eq!(c.at(0), 0.01);
        assert_relative_eq!(c.at(100), 0.2);
        assert_relative_eq!(c.at(250), 0.2);
        assert_relative_eq!(c.at(50), 0.105);
    }

    #[test]
    fn observations_of_constant_and_indicator_maps() {
        let half = Grid::filled(4, 4, 0.5);
        assert_eq!(observations_from_maps(&[half.clone(), half], 2.0), vec![0.25, 0.25]);
        let indicator = Grid::from_fn(4, 4, |x, _| if x == 0 { 1.0 } else { 0.0 });
        assert_eq!(observations_from_maps(&[indicator], 1.0), vec![0.25]);
        let soft = Grid::from_fn(5, 3, |x, y| (x * 3 + y) as f64 / 15.0);
        let g1 = observations_from_maps(std::slice::from_ref(&soft), 1.0)[0];
        let g2 = observations_from_maps(&[soft], 2.0)[0];
        assert!(g2 <= g1);
    }

    #[test]
    fn smoothing_window_rounds() {
        assert_eq!(smoothing_window(40, 0.05), 2);
        assert_eq!(smoothing_window(10, 0.05), 1);
        assert_eq!(smoothing_window(100, 0.05), 5);
    }
}
