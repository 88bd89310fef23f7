//! Point-supervised segmentation of frame sequences.
//!
//! A per-pixel scorer is trained with a non-negative positive/unlabeled risk
//! while per-frame class priors are estimated by an interval-constrained
//! unscented Kalman filter. The resulting probability maps are regularized by
//! a K-shortest-paths tracker over grid superpixels.
//!
//! The crate is `no_std` and only needs an allocator. File formats and the
//! command line live in the companion `ssnnpu` crate.
#![no_std]
// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod eval;
pub mod grid;
pub mod ksptrack;
pub mod math;
pub mod priorfilter;
pub mod purisk;
pub mod scorer;
pub mod seqdata;
pub mod ssnnpu;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use grid::Grid;
pub use seqdata::{Frame, PointAnnotation, SampleSplit, Sequence};
