//! Segmentation and prior-estimation metrics.

use alloc::vec::Vec;
use core::borrow::Borrow;

use crate::grid::{Grid, Mask};
use crate::ksptrack::Superpixel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SegMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        SegMetrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

fn counts(pred: &Mask, gt: &Mask) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

fn check_pairs<P: Borrow<Mask>, G: Borrow<Mask>>(pred: &[P], gt: &[G]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::CountMismatch {
            what: "predicted masks",
            expected: gt.len(),
            found: pred.len(),
        });
    }
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        let (p, g) = (p.borrow(), g.borrow());
        if p.dims() != g.dims() {
            return Err(Error::DimensionMismatch {
                frame: i,
                width: p.width(),
                height: p.height(),
                expected_width: g.width(),
                expected_height: g.height(),
            });
        }
    }
    Ok(())
}

/// Pixel counts pooled over all frames.
pub fn seg_metrics<P: Borrow<Mask>, G: Borrow<Mask>>(pred: &[P], gt: &[G]) -> Result<SegMetrics> {
    check_pairs(pred, gt)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gt) {
        let c = counts(p.borrow(), g.borrow());
        tp += c.0;
        fp += c.1;
        fn_ += c.2;
    }
    Ok(SegMetrics::from_counts(tp, fp, fn_))
}

pub fn per_frame_metrics<P: Borrow<Mask>, G: Borrow<Mask>>(pred: &[P], gt: &[G]) -> Result<Vec<SegMetrics>> {
    check_pairs(pred, gt)?;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let (tp, fp, fn_) = counts(p.borrow(), g.borrow());
            SegMetrics::from_counts(tp, fp, fn_)
        })
        .collect())
}

/// Mean absolute error between estimated and true per-frame priors.
pub fn prior_mae(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::CountMismatch {
            what: "prior estimates",
            expected: truth.len(),
            found: est.len(),
        });
    }
    if est.is_empty() {
        return Ok(0.0);
    }
    Ok(est.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / est.len() as f64)
}

/// Masks obtained by labeling a superpixel positive when more than half of
/// its pixels are ground-truth positive.
pub fn majority_masks<G: Borrow<Mask>>(superpixels: &[Superpixel], gt: &[G]) -> Vec<Mask> {
    let mut masks: Vec<Mask> = gt
        .iter()
        .map(|g| Grid::filled(g.borrow().width(), g.borrow().height(), false))
        .collect();
    for sp in superpixels {
        let g = gt[sp.frame].borrow();
        let inside = sp.pixels.iter().filter(|&&p| g[p]).count();
        if 2 * inside > sp.pixels.len() {
            for &p in &sp.pixels {
                masks[sp.frame][p] = true;
            }
        }
    }
    masks
}

/// Best F1 reachable by labeling whole superpixels by majority coverage.
pub fn max_sp_bound<G: Borrow<Mask>>(superpixels: &[Superpixel], gt: &[G]) -> Result<SegMetrics> {
    if let Some(sp) = superpixels.iter().find(|s| s.frame >= gt.len()) {
        return Err(Error::CountMismatch {
            what: "ground-truth masks",
            expected: sp.frame + 1,
            found: gt.len(),
        });
    }
    seg_metrics(&majority_masks(superpixels, gt), gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ksptrack::make_superpixels;
    use crate::seqdata::{Frame, Sequence};
    use alloc::vec;
    use approx::assert_relative_eq;

    fn mask(w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> Mask {
        Grid::from_fn(w, h, f)
    }

    #[test]
    fn identical_masks_score_one() {
        let gt = vec![mask(5, 5, |x, y| x < y), mask(5, 5, |x, _| x == 2)];
        let m = seg_metrics(&gt, &gt).unwrap();
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn one_of_each_is_half() {
        let gt = [mask(3, 1, |x, _| x <= 1)];
        let pred = [mask(3, 1, |x, _| x >= 1)];
        let m = seg_metrics(&pred, &gt).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 1));
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let gt = [mask(4, 4, |x, _| x == 0)];
        let pred = [mask(4, 4, |_, _| false)];
        assert_eq!(seg_metrics(&pred, &gt).unwrap().f1, 0.0);
    }

    #[test]
    fn rejects_mismatches() {
        let a = [mask(4, 4, |_, _| false)];
        let b = [mask(4, 5, |_, _| false)];
        assert!(seg_metrics(&a, &b).is_err());
        assert!(seg_metrics(&a, &[] as &[Mask]).is_err());
    }

    #[test]
    fn f1_ignores_frame_order() {
        let gt = vec![mask(6, 6, |x, y| x + y < 5), mask(6, 6, |x, _| x > 3), mask(6, 6, |_, y| y == 1)];
        let pred = vec![mask(6, 6, |x, y| x + y < 4), mask(6, 6, |x, _| x > 2), mask(6, 6, |x, y| x == y)];
        let a = seg_metrics(&pred, &gt).unwrap();
        let order = [2, 0, 1];
        let p2: Vec<&Mask> = order.iter().map(|&i| &pred[i]).collect();
        let g2: Vec<&Mask> = order.iter().map(|&i| &gt[i]).collect();
        assert_eq!(a, seg_metrics(&p2, &g2).unwrap());
    }

    #[test]
    fn mae_examples() {
        assert_eq!(prior_mae(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 0.0);
        let truth = [0.01, 0.03, 0.02];
        let est: Vec<f64> = truth.iter().map(|t| t + 0.05).collect();
        assert_relative_eq!(prior_mae(&est, &truth).unwrap(), 0.05, epsilon = 1e-15);
        let a = [0.12, 0.5, 0.33, 0.08, 0.9];
        let b = [0.1, 0.45, 0.4, 0.0, 1.0];
        // |0.02| + |0.05| + |-0.07| + |0.08| + |-0.1| = 0.32
        assert_relative_eq!(prior_mae(&a, &b).unwrap(), 0.064, epsilon = 1e-12);
        assert!(prior_mae(&a, &b[..4]).is_err());
    }

    fn seq(w: usize, h: usize) -> Sequence {
        Sequence::new(vec![Frame::new(0, Grid::filled(w, h, 0.0))]).unwrap()
    }

    #[test]
    fn aligned_ground_truth_is_reachable() {
        let (_, sps) = make_superpixels(&seq(8, 8), 16).unwrap();
        let gt = [mask(8, 8, |x, y| x < 4 && (2..6).contains(&y))];
        assert_eq!(max_sp_bound(&sps, &gt).unwrap().f1, 1.0);
    }

    #[test]
    fn minority_coverage_is_negative() {
        // one 5x2 cell with 4 of 10 pixels covered
        let (_, sps) = make_superpixels(&seq(5, 2), 1).unwrap();
        let gt = [mask(5, 2, |x, _| x < 2)];
        let m = majority_masks(&sps, &gt);
        assert!(m[0].as_slice().iter().all(|&b| !b));
    }
}
