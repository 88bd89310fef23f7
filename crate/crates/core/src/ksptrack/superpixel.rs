use alloc::vec::Vec;
use core::ops::Range;

use crate::grid::ProbabilityMap;
use crate::seqdata::Sequence;
use crate::{math, Error, Result};

/// Regular grid partition shared by every frame. The last row and column
/// absorb the remainder pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    pub cols: usize,
    pub rows: usize,
}

fn span(len: usize, cells: usize, i: usize) -> Range<usize> {
    let base = len / cells;
    let start = i * base;
    let end = if i + 1 == cells { len } else { start + base };
    start..end
}

impl GridLayout {
    /// Grid whose cell count is closest to `target`; ties go to the shape
    /// closest to the frame aspect ratio.
    pub fn for_target(width: usize, height: usize, target: usize) -> Result<Self> {
        if target == 0 {
            return Err(Error::param("superpixels", "target count must be at least 1"));
        }
        if width == 0 || height == 0 {
            return Err(Error::param("superpixels", "empty frame"));
        }
        let aspect = math::ln(width as f64 / height as f64);
        let mut best: Option<(usize, f64, usize, usize)> = None;
        for cols in 1..=width {
            let rows = (crate::math::round(target as f64 / cols as f64) as usize).clamp(1, height);
            let miss = (cols * rows).abs_diff(target);
            let skew = (math::ln(cols as f64 / rows as f64) - aspect).abs();
            let better = match best {
                None => true,
                Some((m, s, _, _)) => miss < m || (miss == m && skew < s - 1e-12),
            };
            if better {
                best = Some((miss, skew, cols, rows));
            }
        }
        let (_, _, cols, rows) = best.expect("width >= 1");
        Ok(GridLayout {
            width,
            height,
            cols,
            rows,
        })
    }

    pub fn cells(&self) -> usize {
        self.cols * self.rows
    }

    pub fn col_span(&self, col: usize) -> Range<usize> {
        span(self.width, self.cols, col)
    }

    pub fn row_span(&self, row: usize) -> Range<usize> {
        span(self.height, self.rows, row)
    }

    pub fn cell_index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    /// Superpixel id of a cell in a frame.
    pub fn superpixel_id(&self, frame: usize, col: usize, row: usize) -> usize {
        frame * self.cells() + self.cell_index(col, row)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Superpixel {
    pub id: usize,
    pub frame: usize,
    pub col: usize,
    pub row: usize,
    /// Row-major pixel indices within the frame.
    pub pixels: Vec<usize>,
    pub centroid: (f64, f64),
    /// Mean foreground probability over `pixels`.
    pub mean_prob: f64,
}

/// Grid superpixels for every frame, ids ordered by frame then row then column.
pub fn make_superpixels(seq: &Sequence, target: usize) -> Result<(GridLayout, Vec<Superpixel>)> {
    let layout = GridLayout::for_target(seq.width(), seq.height(), target)?;
    let mut out = Vec::with_capacity(layout.cells() * seq.len());
    for frame in 0..seq.len() {
        for row in 0..layout.rows {
            for col in 0..layout.cols {
                let xs = layout.col_span(col);
                let ys = layout.row_span(row);
                let mut pixels = Vec::with_capacity(xs.len() * ys.len());
                for y in ys.clone() {
                    for x in xs.clone() {
                        pixels.push(y * seq.width() + x);
                    }
                }
                let centroid = (
                    (xs.start + xs.end - 1) as f64 / 2.0,
                    (ys.start + ys.end - 1) as f64 / 2.0,
                );
                out.push(Superpixel {
                    id: layout.superpixel_id(frame, col, row),
                    frame,
                    col,
                    row,
                    pixels,
                    centroid,
                    mean_prob: 0.0,
                });
            }
        }
    }
    Ok((layout, out))
}

pub fn assign_mean_probabilities(superpixels: &mut [Superpixel], maps: &[ProbabilityMap]) -> Result<()> {
    for sp in superpixels {
        let map = maps.get(sp.frame).ok_or(Error::CountMismatch {
            what: "probability maps",
            expected: sp.frame + 1,
            found: maps.len(),
        })?;
        let sum: f64 = sp.pixels.iter().map(|&i| map[i]).sum();
        sp.mean_prob = sum / sp.pixels.len() as f64;
    }
    Ok(())
}
