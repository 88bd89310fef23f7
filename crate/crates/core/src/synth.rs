//! Deterministic synthetic sequences with exact ground truth: a disc or ring
//! drifting over a noisy background, one point annotation per frame.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::grid::{Grid, Mask};
use crate::math;
use crate::seqdata::{Frame, PointAnnotation, Sequence};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Disc,
    /// Annulus of `ring_thickness` pixels.
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    /// Constant velocity in pixels per frame, starting at `center`.
    Linear { vx: f64, vy: f64 },
    /// Orbit around `center`, one revolution every `period` frames.
    Circular { radius: f64, period: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub shape: Shape,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub center: (f64, f64),
    pub base_radius: f64,
    /// Amplitude of the sinusoidal radius variation.
    pub radius_amplitude: f64,
    pub radius_period: f64,
    pub motion: Motion,
    pub fg_mean: f64,
    pub bg_mean: f64,
    pub noise_std: f64,
    pub jitter_std: f64,
    pub ring_thickness: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            shape: Shape::Disc,
            frames: 40,
            width: 64,
            height: 64,
            center: (32.0, 32.0),
            base_radius: 7.0,
            radius_amplitude: 1.7,
            radius_period: 40.0,
            motion: Motion::Circular {
                radius: 10.0,
                period: 40.0,
            },
            fg_mean: 0.6,
            bg_mean: 0.4,
            noise_std: 0.13,
            jitter_std: 1.0,
            ring_thickness: 3.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Object center and radius at frame `t`.
    pub fn object_at(&self, t: usize) -> ((f64, f64), f64) {
        let tf = t as f64;
        let radius = if self.radius_period > 0.0 {
            self.base_radius + self.radius_amplitude * math::sin(2.0 * PI * tf / self.radius_period)
        } else {
            self.base_radius
        };
        let (cx, cy) = self.center;
        let center = match self.motion {
            Motion::Linear { vx, vy } => (cx + vx * tf, cy + vy * tf),
            Motion::Circular { radius: r, period } => {
                let a = if period > 0.0 { 2.0 * PI * tf / period } else { 0.0 };
                (cx + r * math::cos(a), cy + r * math::sin(a))
            }
        };
        (center, radius)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::param("synth size", "frames, width and height must be positive"));
        }
        for v in [self.fg_mean, self.bg_mean] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param("intensity mean", "must lie in [0, 1]"));
            }
        }
        let gap = (self.fg_mean - self.bg_mean).abs();
        if gap == 0.0 || self.noise_std < 0.3 * gap {
            return Err(Error::param(
                "noise_std",
                "need distinct means and noise_std >= 0.3 * |fg_mean - bg_mean|",
            ));
        }
        if !(self.jitter_std >= 0.0) {
            return Err(Error::param("jitter_std", "must be non-negative"));
        }
        for t in 0..self.frames {
            let ((cx, cy), r) = self.object_at(t);
            if !(r >= 1.0) {
                return Err(Error::param("radius", "object radius must stay at least 1 pixel"));
            }
            if self.shape == Shape::Ring && !(r > self.ring_thickness) {
                return Err(Error::param("ring_thickness", "must be below the radius"));
            }
            if cx - r < 0.0
                || cy - r < 0.0
                || cx + r > (self.width - 1) as f64
                || cy + r > (self.height - 1) as f64
            {
                return Err(Error::param("motion", "object leaves the frame"));
            }
        }
        Ok(())
    }

    fn inside(&self, x: usize, y: usize, (cx, cy): (f64, f64), r: f64) -> bool {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let d2 = dx * dx + dy * dy;
        match self.shape {
            Shape::Disc => d2 <= r * r,
            Shape::Ring => {
                let inner = r - self.ring_thickness;
                d2 <= r * r && d2 > inner * inner
            }
        }
    }
}

/// Mask pixel closest to `(tx, ty)`; ties go to the lowest index.
fn nearest_in_mask(mask: &Mask, tx: f64, ty: f64) -> Option<(usize, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, _) in mask.as_slice().iter().enumerate().filter(|(_, &m)| m) {
        let (x, y) = mask.coords_of(i);
        let d = (x as f64 - tx) * (x as f64 - tx) + (y as f64 - ty) * (y as f64 - ty);
        if best.is_none_or(|(b, _)| d < b) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| mask.coords_of(i))
}

pub fn generate(cfg: &SynthConfig) -> Result<Sequence> {
    cfg.validate()?;
    let noise = Normal::new(0.0, cfg.noise_std).expect("validated std");
    let jitter = Normal::new(0.0, cfg.jitter_std).expect("validated std");
    let mut frames = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let (center, r) = cfg.object_at(t);
        let mask: Mask = Grid::from_fn(cfg.width, cfg.height, |x, y| cfg.inside(x, y, center, r));

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2 * t as u64);
        // quantized to 8 bits so the sequence survives a PGM round trip
        let intensities = mask.map(|&fg| {
            let mean = if fg { cfg.fg_mean } else { cfg.bg_mean };
            let v = (mean + noise.sample(&mut rng)).clamp(0.0, 1.0);
            math::round(v * 255.0) / 255.0
        });

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2 * t as u64 + 1);
        let (mut tx, mut ty) = center;
        if cfg.shape == Shape::Ring {
            let angle = rng.random_range(0.0..2.0 * PI);
            let mid = r - 0.5 * cfg.ring_thickness;
            tx += mid * math::cos(angle);
            ty += mid * math::sin(angle);
        }
        tx += jitter.sample(&mut rng);
        ty += jitter.sample(&mut rng);
        let (ax, ay) = nearest_in_mask(&mask, tx, ty)
            .ok_or_else(|| Error::param("radius", "object covers no pixel"))?;

        let mut frame = Frame::new(t, intensities);
        frame.annotations.push(PointAnnotation {
            frame: t,
            x: ax,
            y: ay,
        });
        frame.gt_mask = Some(mask);
        frames.push(frame);
    }
    Sequence::new(frames)
}

/// Fraction of ground-truth positive pixels per frame.
pub fn true_priors(seq: &Sequence) -> Result<Vec<f64>> {
    seq.ground_truth().map(|masks| {
        masks
            .iter()
            .map(|m| m.as_slice().iter().filter(|&&b| b).count() as f64 / m.len() as f64)
            .collect()
    })
}

/// `eta * max_i pi^i`, the calibrated prior upper bound.
pub fn calibrated_pi0(priors: &[f64], eta: f64) -> f64 {
    eta * priors.iter().copied().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn disc_prior_matches_area() {
        let cfg = SynthConfig {
            base_radius: 6.0,
            radius_amplitude: 0.0,
            ..SynthConfig::default()
        };
        let seq = generate(&cfg).unwrap();
        let priors = true_priors(&seq).unwrap();
        let area = PI * 36.0 / 4096.0;
        for p in priors {
            // rasterization error stays within one perimeter of pixels
            assert!((p - area).abs() <= 2.0 * PI * 6.0 / 4096.0, "{p} vs {area}");
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn ring_has_a_hole_and_annotation_on_annulus() {
        let cfg = SynthConfig {
            shape: Shape::Ring,
            ..SynthConfig::default()
        };
        let seq = generate(&cfg).unwrap();
        for (t, f) in seq.frames().iter().enumerate() {
            let ((cx, cy), _) = cfg.object_at(t);
            let gt = f.gt_mask.as_ref().unwrap();
            assert!(!gt.get(math::round(cx) as usize, math::round(cy) as usize));
            let a = f.annotations[0];
            assert!(gt.get(a.x, a.y));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            frames: 5,
            seed: 7,
            ..SynthConfig::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 8, ..cfg };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn annotations_lie_inside_objects() {
        let cfg = SynthConfig {
            jitter_std: 6.0,
            ..SynthConfig::default()
        };
        let seq = generate(&cfg).unwrap();
        for f in seq.frames() {
            assert_eq!(f.annotations.len(), 1);
            let a = f.annotations[0];
            assert!(f.gt_mask.as_ref().unwrap().get(a.x, a.y));
        }
    }

    #[test]
    fn rejects_out_of_bounds_motion() {
        let cfg = SynthConfig {
            motion: Motion::Linear { vx: 2.0, vy: 0.0 },
            ..SynthConfig::default()
        };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn rejects_separable_intensities() {
        let cfg = SynthConfig {
            noise_std: 0.01,
            ..SynthConfig::default()
        };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn reference_priors_span_expected_range() {
        let priors = true_priors(&generate(&SynthConfig::default()).unwrap()).unwrap();
        let lo = priors.iter().copied().fold(1.0, f64::min);
        let hi = priors.iter().copied().fold(0.0, f64::max);
        assert!(lo >= 0.02 && hi <= 0.06, "{lo} {hi}");
    }

    #[test]
    fn true_priors_of_simple_masks() {
        let mut empty = Frame::new(0, Grid::filled(4, 4, 0.0));
        empty.gt_mask = Some(Grid::filled(4, 4, false));
        let mut half = Frame::new(1, Grid::filled(4, 4, 0.0));
        half.gt_mask = Some(Grid::from_fn(4, 4, |x, _| x < 2));
        let seq = Sequence::new(vec![empty, half]).unwrap();
        assert_eq!(true_priors(&seq).unwrap(), vec![0.0, 0.5]);
        let bare = Sequence::new(vec![Frame::new(0, Grid::filled(2, 2, 0.0))]).unwrap();
        assert_eq!(true_priors(&bare), Err(Error::MissingGroundTruth(0)));
    }

    #[test]
    fn calibration_scales_the_maximum() {
        assert!((calibrated_pi0(&[0.02, 0.05, 0.03], 1.4) - 0.07).abs() < 1e-15);
    }
}
