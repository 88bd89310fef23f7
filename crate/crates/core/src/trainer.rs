//! Non-negative PU training: one frame per mini-batch, gradient descent on
//! the PU risk, or ascent on the negative risk when it drops below zero.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::grid::Grid;
use crate::purisk::{pu_risk, pu_risk_grad, FramePrior, RiskMode};
use crate::scorer::{FeatureGrid, FeatureVector, GradientBuffer, ScorerModel};
use crate::seqdata::SampleSplit;
use crate::{math, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub phase1_epochs: usize,
    pub phase3_epochs: usize,
    pub phase1_lr: f64,
    /// Learning rate of the prior-estimation and final phases.
    pub late_lr: f64,
    pub weight_decay: f64,
    pub shuffle_seed: u64,
    pub batch_frames: usize,
    pub adam: AdamConfig,
    /// Std of Gaussian noise added to batch features; 0 disables it.
    pub augment_noise_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            phase1_epochs: 50,
            phase3_epochs: 100,
            phase1_lr: 1e-4,
            late_lr: 1e-5,
            weight_decay: 0.01,
            shuffle_seed: 0,
            batch_frames: 1,
            adam: AdamConfig::default(),
            augment_noise_std: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, "must be finite and non-negative"))
            }
        };
        nonneg("phase1_lr", self.phase1_lr)?;
        nonneg("late_lr", self.late_lr)?;
        nonneg("weight_decay", self.weight_decay)?;
        nonneg("augment_noise_std", self.augment_noise_std)?;
        if self.batch_frames == 0 {
            return Err(Error::param("batch_frames", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::param("adam betas", "must lie in [0, 1)"));
        }
        if !(self.adam.eps > 0.0) {
            return Err(Error::param("adam eps", "must be positive"));
        }
        Ok(())
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: usize) -> Self {
        OptimizerState {
            m: vec![0.0; params],
            v: vec![0.0; params],
            step: 0,
        }
    }
}

/// One Adam update with decoupled weight decay: parameters are first shrunk
/// by `1 - lr * weight_decay`, then moved by the bias-corrected Adam step.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    opt: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
    adam: &AdamConfig,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), opt.m.len());
    opt.step += 1;
    let t = opt.step as f64;
    let bc1 = 1.0 - math::powf(adam.beta1, t);
    let bc2 = 1.0 - math::powf(adam.beta2, t);
    let decay = 1.0 - lr * weight_decay;
    for i in 0..params.len() {
        let g = grads[i];
        opt.m[i] = adam.beta1 * opt.m[i] + (1.0 - adam.beta1) * g;
        opt.v[i] = adam.beta2 * opt.v[i] + (1.0 - adam.beta2) * g * g;
        let m_hat = opt.m[i] / bc1;
        let v_hat = opt.v[i] / bc2;
        params[i] = params[i] * decay - lr * m_hat / (math::sqrt(v_hat) + adam.eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochStats {
    pub mean_pos_risk: f64,
    pub mean_neg_risk: f64,
    pub mean_total_pu: f64,
    /// Fraction of batches trained in ascent mode.
    pub ascent_fraction: f64,
    pub batches: usize,
}

/// Frame visiting order of one epoch; depends only on the seed, the epoch
/// number and the frame count.
pub fn epoch_order(seed: u64, epoch: usize, frames: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..frames).collect();
    order.shuffle(&mut rng);
    order
}

struct FrameBatch {
    features: Vec<FeatureVector>,
    n_pos: usize,
}

fn gather(
    features: &FeatureGrid,
    split: &SampleSplit,
    frame: usize,
    noise: Option<(&Normal<f64>, &mut ChaCha8Rng)>,
) -> FrameBatch {
    let pos = &split.positives[frame];
    let unl = &split.unlabeled[frame];
    let mut out: Vec<FeatureVector> = pos.iter().chain(unl).map(|&i| features[i]).collect();
    if let Some((normal, rng)) = noise {
        for f in &mut out {
            for v in f.iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }
    FrameBatch {
        features: out,
        n_pos: pos.len(),
    }
}

/// Evaluates the PU risk of one frame under `model`.
pub fn frame_risk(
    model: &ScorerModel,
    features: &FeatureGrid,
    split: &SampleSplit,
    frame: usize,
    prior: f64,
) -> Result<crate::purisk::RiskComponents> {
    let batch = gather(features, split, frame, None);
    let logits = model.logits(&batch.features);
    let (p, u) = logits.split_at(batch.n_pos);
    pu_risk(p, u, FramePrior::new(prior))
}

/// One pass of non-negative PU learning over all frames in a seed-determined
/// order. Frames without labeled positives are skipped.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    model: &mut ScorerModel,
    opt: &mut OptimizerState,
    features: &[FeatureGrid],
    split: &SampleSplit,
    priors: &[f64],
    lr: f64,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    let n = features.len();
    if priors.len() != n || split.frames() != n {
        return Err(Error::CountMismatch {
            what: "per-frame priors",
            expected: n,
            found: priors.len().min(split.frames()),
        });
    }
    let order = epoch_order(cfg.shuffle_seed, epoch, n);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed ^ 0x6e6f_6973_6521);
    noise_rng.set_stream(epoch as u64);
    let normal = (cfg.augment_noise_std > 0.0)
        .then(|| Normal::new(0.0, cfg.augment_noise_std).expect("validated std"));

    let mut stats = EpochStats::default();
    let mut grad = GradientBuffer::zeros();
    for chunk in order.chunks(cfg.batch_frames.max(1)) {
        let mut frames = Vec::with_capacity(chunk.len());
        for &f in chunk {
            if split.positives[f].is_empty() || split.unlabeled[f].is_empty() {
                continue;
            }
            let batch = gather(
                &features[f],
                split,
                f,
                normal.as_ref().map(|d| (d, &mut noise_rng)),
            );
            let logits = model.logits(&batch.features);
            let prior = FramePrior::new(priors[f]);
            let (p, u) = logits.split_at(batch.n_pos);
            let risk = pu_risk(p, u, prior)?;
            frames.push((batch, logits, prior, risk));
        }
        if frames.is_empty() {
            continue;
        }
        let k = frames.len() as f64;
        let pos = frames.iter().map(|f| f.3.pos_risk).sum::<f64>() / k;
        let neg = frames.iter().map(|f| f.3.neg_risk).sum::<f64>() / k;
        let mode = if neg < 0.0 {
            RiskMode::Ascent
        } else {
            RiskMode::Descent
        };
        grad.zero();
        for (batch, logits, prior, _) in &frames {
            let (p, u) = logits.split_at(batch.n_pos);
            let (gp, gu) = pu_risk_grad(p, u, *prior, mode);
            let upstream = gp.iter().chain(&gu).map(|g| g / k);
            model.accumulate_gradient(batch.features.iter().zip(upstream), &mut grad);
        }
        adam_step(
            model.params_mut(),
            &grad.grads,
            opt,
            lr,
            cfg.weight_decay,
            &cfg.adam,
        );
        stats.batches += 1;
        stats.mean_pos_risk += pos;
        stats.mean_neg_risk += neg;
        stats.mean_total_pu += pos + neg;
        if mode == RiskMode::Ascent {
            stats.ascent_fraction += 1.0;
        }
    }
    if stats.batches > 0 {
        let b = stats.batches as f64;
        stats.mean_pos_risk /= b;
        stats.mean_neg_risk /= b;
        stats.mean_total_pu /= b;
        stats.ascent_fraction /= b;
    }
    Ok(stats)
}

/// Scorer, optimizer and training data bundled together, with a running
/// epoch counter that drives the shuffle.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    pub model: ScorerModel,
    pub optimizer: OptimizerState,
    pub config: TrainConfig,
    features: &'a [FeatureGrid],
    split: &'a SampleSplit,
    epochs_done: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: ScorerModel,
        features: &'a [FeatureGrid],
        split: &'a SampleSplit,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if split.frames() != features.len() {
            return Err(Error::CountMismatch {
                what: "split frames",
                expected: features.len(),
                found: split.frames(),
            });
        }
        let optimizer = OptimizerState::new(model.params().len());
        Ok(Trainer {
            model,
            optimizer,
            config,
            features,
            split,
            epochs_done: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn features(&self) -> &'a [FeatureGrid] {
        self.features
    }

    pub fn frames(&self) -> usize {
        self.features.len()
    }

    pub fn train_epoch(&mut self, priors: &[f64], lr: f64) -> Result<EpochStats> {
        let stats = train_epoch(
            &mut self.model,
            &mut self.optimizer,
            self.features,
            self.split,
            priors,
            lr,
            &self.config,
            self.epochs_done,
        )?;
        self.epochs_done += 1;
        Ok(stats)
    }

    fn run_constant(&mut self, priors: &[f64], epochs: usize, lr: f64) -> Result<Vec<EpochStats>> {
        (0..epochs).map(|_| self.train_epoch(priors, lr)).collect()
    }

    /// Warm-up with the same prior `pi0` on every frame.
    pub fn run_phase1(&mut self, pi0: f64) -> Result<Vec<EpochStats>> {
        if !(pi0 > 0.0 && pi0 < 1.0) {
            return Err(Error::param("pi0", "must lie in (0, 1)"));
        }
        let priors = vec![pi0; self.frames()];
        self.run_constant(&priors, self.config.phase1_epochs, self.config.phase1_lr)
    }

    /// Final training with frozen per-frame priors.
    pub fn run_phase3(&mut self, priors: &[f64]) -> Result<Vec<EpochStats>> {
        self.run_constant(priors, self.config.phase3_epochs, self.config.late_lr)
    }

    /// Trains `epochs` epochs at `lr` with fixed priors.
    pub fn run_fixed(&mut self, priors: &[f64], epochs: usize, lr: f64) -> Result<Vec<EpochStats>> {
        self.run_constant(priors, epochs, lr)
    }

    pub fn probability_maps(&self) -> Vec<Grid<f64>> {
        self.features
            .iter()
            .map(|f| self.model.probability_map(f))
            .collect()
    }
}
