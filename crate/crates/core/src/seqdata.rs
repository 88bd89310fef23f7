//! Sequences of grayscale frames with point annotations.

use alloc::vec::Vec;

use crate::grid::{Grid, Mask};
use crate::{Error, Result};

/// Radius of the annotation disc as a fraction of `max(width, height)`.
pub const DEFAULT_RADIUS_FRAC: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PointAnnotation {
    pub frame: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    /// Intensities in `[0, 1]`.
    pub intensities: Grid<f64>,
    pub annotations: Vec<PointAnnotation>,
    pub gt_mask: Option<Mask>,
}

impl Frame {
    pub fn new(index: usize, intensities: Grid<f64>) -> Self {
        Frame {
            index,
            intensities,
            annotations: Vec::new(),
            gt_mask: None,
        }
    }
}

/// A validated, immutable frame sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    frames: Vec<Frame>,
    width: usize,
    height: usize,
}

impl Sequence {
    /// Sorts frames by index and checks dimensions, contiguity and
    /// annotation bounds.
    pub fn new(mut frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptySequence);
        }
        frames.sort_by_key(|f| f.index);
        let (width, height) = frames[0].intensities.dims();
        if width == 0 || height == 0 {
            return Err(Error::param("frame size", "frames must be non-empty"));
        }
        let n = frames.len();
        for (expected, frame) in frames.iter().enumerate() {
            if frame.index != expected {
                return Err(Error::MissingFrame {
                    expected,
                    found: frame.index,
                });
            }
            let mismatch = |(w, h): (usize, usize)| Error::DimensionMismatch {
                frame: frame.index,
                width: w,
                height: h,
                expected_width: width,
                expected_height: height,
            };
            if frame.intensities.dims() != (width, height) {
                return Err(mismatch(frame.intensities.dims()));
            }
            if let Some(gt) = &frame.gt_mask {
                if gt.dims() != (width, height) {
                    return Err(mismatch(gt.dims()));
                }
            }
            for a in &frame.annotations {
                if a.frame >= n {
                    return Err(Error::AnnotationFrameOutOfRange {
                        frame: a.frame,
                        frames: n,
                    });
                }
                if a.frame != frame.index || a.x >= width || a.y >= height {
                    return Err(Error::AnnotationOutOfBounds {
                        frame: a.frame,
                        x: a.x,
                        y: a.y,
                        width,
                        height,
                    });
                }
            }
        }
        Ok(Sequence {
            frames,
            width,
            height,
        })
    }

    /// Builds a sequence from frames and a flat annotation list, routing each
    /// annotation to its frame.
    pub fn with_annotations(
        mut frames: Vec<Frame>,
        annotations: &[PointAnnotation],
    ) -> Result<Self> {
        frames.sort_by_key(|f| f.index);
        for a in annotations {
            match frames.iter_mut().find(|f| f.index == a.frame) {
                Some(frame) => frame.annotations.push(*a),
                None => {
                    return Err(Error::AnnotationFrameOutOfRange {
                        frame: a.frame,
                        frames: frames.len(),
                    })
                }
            }
        }
        Sequence::new(frames)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> &Frame {
        &self.frames[index]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels_per_frame(&self) -> usize {
        self.width * self.height
    }

    pub fn annotations(&self) -> impl Iterator<Item = &PointAnnotation> {
        self.frames.iter().flat_map(|f| f.annotations.iter())
    }

    pub fn has_ground_truth(&self) -> bool {
        self.frames.iter().all(|f| f.gt_mask.is_some())
    }

    pub fn ground_truth(&self) -> Result<Vec<&Mask>> {
        self.frames
            .iter()
            .map(|f| f.gt_mask.as_ref().ok_or(Error::MissingGroundTruth(f.index)))
            .collect()
    }

    /// Annotation disc radius in pixels.
    pub fn annotation_radius(&self, radius_frac: f64) -> f64 {
        radius_frac * self.width.max(self.height) as f64
    }
}

/// What the unlabeled set of a frame contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnlabeledSet {
    /// Every pixel outside the annotation discs.
    #[default]
    ExcludePositives,
    /// Every pixel of the frame, positives included.
    AllPixels,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub radius_frac: f64,
    pub unlabeled: UnlabeledSet,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            radius_frac: DEFAULT_RADIUS_FRAC,
            unlabeled: UnlabeledSet::ExcludePositives,
        }
    }
}

/// Per-frame labeled positives and unlabeled pixels, as sorted pixel indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSplit {
    pub positives: Vec<Vec<usize>>,
    pub unlabeled: Vec<Vec<usize>>,
}

impl SampleSplit {
    pub fn from_annotations(seq: &Sequence, cfg: &SplitConfig) -> Result<Self> {
        if !(cfg.radius_frac > 0.0) {
            return Err(Error::param("radius_frac", "must be positive"));
        }
        let radius = seq.annotation_radius(cfg.radius_frac);
        let r2 = radius * radius;
        let mut positives = Vec::with_capacity(seq.len());
        let mut unlabeled = Vec::with_capacity(seq.len());
        for frame in seq.frames() {
            let mut pos = Vec::new();
            let mut unl = Vec::new();
            for y in 0..seq.height() {
                for x in 0..seq.width() {
                    let idx = y * seq.width() + x;
                    let inside = frame.annotations.iter().any(|a| {
                        let dx = x as f64 - a.x as f64;
                        let dy = y as f64 - a.y as f64;
                        dx * dx + dy * dy <= r2
                    });
                    if inside {
                        pos.push(idx);
                    }
                    if !inside || cfg.unlabeled == UnlabeledSet::AllPixels {
                        unl.push(idx);
                    }
                }
            }
            positives.push(pos);
            unlabeled.push(unl);
        }
        Ok(SampleSplit {
            positives,
            unlabeled,
        })
    }

    pub fn frames(&self) -> usize {
        self.positives.len()
    }

    /// Positive mask of one frame.
    pub fn positive_mask(&self, frame: usize, width: usize, height: usize) -> Mask {
        let mut mask = Grid::filled(width, height, false);
        for &i in &self.positives[frame] {
            mask[i] = true;
        }
        mask
    }
}

/// Training positives are the pixels within `radius_frac * max(W, H)` of any
/// annotation of their frame; everything else is unlabeled.
pub fn positives_from_annotations(seq: &Sequence, radius_frac: f64) -> Result<SampleSplit> {
    SampleSplit::from_annotations(
        seq,
        &SplitConfig {
            radius_frac,
            ..SplitConfig::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn blank(index: usize, w: usize, h: usize) -> Frame {
        Frame::new(index, Grid::filled(w, h, 0.0))
    }

    fn ann(frame: usize, x: usize, y: usize) -> PointAnnotation {
        PointAnnotation { frame, x, y }
    }

    #[test]
    fn rejects_out_of_bounds_annotation() {
        let err = Sequence::with_annotations(vec![blank(0, 8, 8)], &[ann(0, 8, 3)]).unwrap_err();
        assert!(matches!(err, Error::AnnotationOutOfBounds { x: 8, .. }));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let err = Sequence::new(vec![blank(0, 8, 8), blank(1, 16, 16)]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { frame: 1, .. }));
    }

    #[test]
    fn rejects_gap_in_indices() {
        let err = Sequence::new(vec![blank(0, 4, 4), blank(2, 4, 4)]).unwrap_err();
        assert_eq!(
            err,
            Error::MissingFrame {
                expected: 1,
                found: 2
            }
        );
    }

    #[test]
    fn frames_are_sorted_by_index() {
        let seq = Sequence::new(vec![blank(2, 4, 4), blank(0, 4, 4), blank(1, 4, 4)]).unwrap();
        let idx: Vec<_> = seq.frames().iter().map(|f| f.index).collect();
        assert_eq!(idx, [0, 1, 2]);
    }

    #[test]
    fn unit_disc_has_five_pixels() {
        let seq = Sequence::with_annotations(vec![blank(0, 20, 20)], &[ann(0, 10, 10)]).unwrap();
        let split = positives_from_annotations(&seq, 0.05).unwrap();
        let expected: Vec<usize> = [(10, 9), (9, 10), (10, 10), (11, 10), (10, 11)]
            .iter()
            .map(|&(x, y)| y * 20 + x)
            .collect();
        assert_eq!(split.positives[0], expected);
        assert_eq!(split.unlabeled[0].len(), 400 - 5);
    }

    #[test]
    fn unannotated_frame_is_all_unlabeled() {
        let seq = Sequence::with_annotations(vec![blank(0, 6, 6), blank(1, 6, 6)], &[ann(0, 1, 1)])
            .unwrap();
        let split = positives_from_annotations(&seq, 0.2).unwrap();
        assert!(split.positives[1].is_empty());
        assert_eq!(split.unlabeled[1].len(), 36);
    }

    #[test]
    fn overlapping_discs_are_unioned() {
        let seq = Sequence::with_annotations(
            vec![blank(0, 30, 30)],
            &[ann(0, 10, 10), ann(0, 12, 11)],
        )
        .unwrap();
        let split = positives_from_annotations(&seq, 0.1).unwrap();
        // brute-force scan
        let mut expected = Vec::new();
        for y in 0..30usize {
            for x in 0..30usize {
                let near = |ax: f64, ay: f64| {
                    let (dx, dy) = (x as f64 - ax, y as f64 - ay);
                    (dx * dx + dy * dy).sqrt() <= 3.0
                };
                if near(10.0, 10.0) || near(12.0, 11.0) {
                    expected.push(y * 30 + x);
                }
            }
        }
        assert_eq!(split.positives[0], expected);
        assert_eq!(split.positives[0].len() + split.unlabeled[0].len(), 900);
    }

    #[test]
    fn all_pixels_mode_keeps_positives_unlabeled() {
        let seq = Sequence::with_annotations(vec![blank(0, 20, 20)], &[ann(0, 10, 10)]).unwrap();
        let cfg = SplitConfig {
            radius_frac: 0.05,
            unlabeled: UnlabeledSet::AllPixels,
        };
        let split = SampleSplit::from_annotations(&seq, &cfg).unwrap();
        assert_eq!(split.positives[0].len(), 5);
        assert_eq!(split.unlabeled[0].len(), 400);
    }

    #[test]
    fn rejects_non_positive_radius() {
        let seq = Sequence::new(vec![blank(0, 4, 4)]).unwrap();
        assert!(positives_from_annotations(&seq, 0.0).is_err());
    }
}
