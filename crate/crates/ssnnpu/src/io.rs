//! On-disk formats: binary PGM frames and masks, annotation CSV, sequence
//! directories and probability maps.
//!
//! A sequence directory holds `frames/NNNN.pgm`, `annotations.csv` with
//! header `frame,x,y`, and optionally `gt/NNNN.pgm` masks.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssnnpu_core::grid::{Grid, Mask};
use ssnnpu_core::{Frame, PointAnnotation, Sequence};

use crate::error::{Error, Result};

pub const FRAMES_DIR: &str = "frames";
pub const GT_DIR: &str = "gt";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";

/// Gray image as read from a PGM file.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub maxval: u16,
    pub pixels: Grid<u16>,
}

impl Pgm {
    /// Values scaled to `[0, 1]`.
    pub fn normalized(&self) -> Grid<f64> {
        let m = f64::from(self.maxval);
        self.pixels.map(|&v| f64::from(v) / m)
    }
}

fn header_token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &data[start..*pos])
}

pub fn parse_pgm(data: &[u8], path: &Path) -> Result<Pgm> {
    let bad = |reason: &str| Error::format(path, reason);
    let mut pos = 0;
    if header_token(data, &mut pos) != Some(b"P5") {
        return Err(bad("not a binary PGM (P5)"));
    }
    let mut number = |what: &str| -> Result<usize> {
        header_token(data, &mut pos)
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(&format!("bad {what} in header")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad("invalid PGM dimensions or maxval"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bytes = if maxval < 256 { 1 } else { 2 };
    let raster = data.get(pos..).unwrap_or(&[]);
    if raster.len() < width * height * bytes {
        return Err(bad("truncated raster"));
    }
    let values: Vec<u16> = if bytes == 1 {
        raster[..width * height].iter().map(|&b| u16::from(b)).collect()
    } else {
        raster[..2 * width * height]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(Pgm {
        maxval: maxval as u16,
        pixels: Grid::from_vec(width, height, values).expect("sized raster"),
    })
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&data, path)
}

pub fn encode_pgm(pixels: &Grid<u16>, maxval: u16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", pixels.width(), pixels.height(), maxval).into_bytes();
    if maxval < 256 {
        out.extend(pixels.as_slice().iter().map(|&v| v.min(maxval) as u8));
    } else {
        for &v in pixels.as_slice() {
            out.extend_from_slice(&v.min(maxval).to_be_bytes());
        }
    }
    out
}

pub fn write_pgm(path: &Path, pixels: &Grid<u16>, maxval: u16) -> Result<()> {
    fs::write(path, encode_pgm(pixels, maxval)).map_err(|e| Error::io(path, e))
}

/// Intensities in `[0, 1]` quantized to 8 bits.
pub fn write_intensity_pgm(path: &Path, img: &Grid<f64>) -> Result<()> {
    let q = img.map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u16);
    write_pgm(path, &q, 255)
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    write_pgm(path, &mask.map(|&b| if b { 255 } else { 0 }), 255)
}

/// Pixels above half the maximum value are foreground.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let pgm = read_pgm(path)?;
    let half = pgm.maxval / 2;
    Ok(pgm.pixels.map(|&v| v > half))
}

/// Probability map as a 16-bit PGM scaled by 65535.
pub fn write_probability_map(path: &Path, map: &Grid<f64>) -> Result<()> {
    let q = map.map(|&p| (p.clamp(0.0, 1.0) * 65535.0).round() as u16);
    write_pgm(path, &q, 65535)
}

pub fn read_probability_map(path: &Path) -> Result<Grid<f64>> {
    Ok(read_pgm(path)?.normalized())
}

pub fn frame_file_name(index: usize) -> String {
    format!("{index:04}.pgm")
}

/// PGM files of `dir` in order of their numeric stem.
pub fn list_indexed_pgms(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let index = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::format(&path, "file name is not a frame number"))?;
        files.push((index, path));
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRow {
    frame: usize,
    x: usize,
    y: usize,
}

pub fn read_annotations(path: &Path) -> Result<Vec<PointAnnotation>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?;
    if headers != vec!["frame", "x", "y"] {
        return Err(Error::format(path, "expected header frame,x,y"));
    }
    reader
        .deserialize::<AnnotationRow>()
        .map(|row| {
            row.map(|r| PointAnnotation {
                frame: r.frame,
                x: r.x,
                y: r.y,
            })
            .map_err(|e| Error::csv(path, e))
        })
        .collect()
}

pub fn write_annotations(path: &Path, annotations: impl IntoIterator<Item = PointAnnotation>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for a in annotations {
        w.serialize(AnnotationRow {
            frame: a.frame,
            x: a.x,
            y: a.y,
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Renumbers indexed files to `0..n`, failing on gaps.
fn contiguous(files: Vec<(usize, PathBuf)>, dir: &Path) -> Result<Vec<PathBuf>> {
    if files.is_empty() {
        return Err(Error::format(dir, "no PGM frames found"));
    }
    let first = files[0].0;
    for (k, (index, path)) in files.iter().enumerate() {
        if *index != first + k {
            return Err(Error::format(path, format!("missing frame {}", first + k)));
        }
    }
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

pub fn load_sequence(root: &Path) -> Result<Sequence> {
    let frame_dir = root.join(FRAMES_DIR);
    let frame_files = contiguous(list_indexed_pgms(&frame_dir)?, &frame_dir)?;
    let mut frames = Vec::with_capacity(frame_files.len());
    for (i, path) in frame_files.iter().enumerate() {
        frames.push(Frame::new(i, read_pgm(path)?.normalized()));
    }

    let gt_dir = root.join(GT_DIR);
    if gt_dir.is_dir() {
        let gt_files = contiguous(list_indexed_pgms(&gt_dir)?, &gt_dir)?;
        if gt_files.len() != frames.len() {
            return Err(Error::format(
                &gt_dir,
                format!("{} masks for {} frames", gt_files.len(), frames.len()),
            ));
        }
        for (frame, path) in frames.iter_mut().zip(&gt_files) {
            frame.gt_mask = Some(read_mask(path)?);
        }
    }

    let ann_path = root.join(ANNOTATIONS_FILE);
    let annotations = if ann_path.exists() {
        read_annotations(&ann_path)?
    } else {
        Vec::new()
    };
    Ok(Sequence::with_annotations(frames, &annotations)?)
}

pub fn save_sequence(seq: &Sequence, root: &Path) -> Result<()> {
    let frame_dir = root.join(FRAMES_DIR);
    fs::create_dir_all(&frame_dir).map_err(|e| Error::io(&frame_dir, e))?;
    for f in seq.frames() {
        write_intensity_pgm(&frame_dir.join(frame_file_name(f.index)), &f.intensities)?;
    }
    if seq.has_ground_truth() {
        let masks = seq.ground_truth()?;
        save_masks(seq, &masks, &root.join(GT_DIR))?;
    }
    write_annotations(&root.join(ANNOTATIONS_FILE), seq.annotations().copied())
}

fn check_masks<M: std::borrow::Borrow<Mask>>(seq: &Sequence, masks: &[M]) -> Result<()> {
    if masks.len() != seq.len() {
        return Err(ssnnpu_core::Error::CountMismatch {
            what: "masks",
            expected: seq.len(),
            found: masks.len(),
        }
        .into());
    }
    for (i, m) in masks.iter().enumerate() {
        let (w, h) = m.borrow().dims();
        if (w, h) != (seq.width(), seq.height()) {
            return Err(ssnnpu_core::Error::DimensionMismatch {
                frame: i,
                width: w,
                height: h,
                expected_width: seq.width(),
                expected_height: seq.height(),
            }
            .into());
        }
    }
    Ok(())
}

pub fn save_masks<M: std::borrow::Borrow<Mask>>(seq: &Sequence, masks: &[M], dir: &Path) -> Result<()> {
    check_masks(seq, masks)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, m) in masks.iter().enumerate() {
        write_mask(&dir.join(frame_file_name(i)), m.borrow())?;
    }
    Ok(())
}

pub fn load_masks(dir: &Path) -> Result<Vec<Mask>> {
    let files = contiguous(list_indexed_pgms(dir)?, dir)?;
    let masks: Vec<Mask> = files.iter().map(|p| read_mask(p)).collect::<Result<_>>()?;
    if let Some(first) = masks.first() {
        for (p, m) in files.iter().zip(&masks) {
            if m.dims() != first.dims() {
                return Err(Error::format(p, "mask size differs from the first mask"));
            }
        }
    }
    Ok(masks)
}

pub fn save_probability_maps(maps: &[Grid<f64>], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, m) in maps.iter().enumerate() {
        write_probability_map(&dir.join(frame_file_name(i)), m)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_8_and_16_bit() {
        let img = Grid::from_fn(5, 3, |x, y| (x * 40 + y * 7) as u16);
        let p = Path::new("mem.pgm");
        let back = parse_pgm(&encode_pgm(&img, 255), p).unwrap();
        assert_eq!((back.maxval, &back.pixels), (255, &img));
        let wide = Grid::from_fn(4, 4, |x, y| (x * 16000 + y) as u16);
        let back = parse_pgm(&encode_pgm(&wide, 65535), p).unwrap();
        assert_eq!(back.pixels, wide);
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let mut data = b"P5\n# made by hand\n2 1\n# depth\n255\n".to_vec();
        data.extend([0u8, 255]);
        let pgm = parse_pgm(&data, Path::new("c.pgm")).unwrap();
        assert_eq!(pgm.normalized().as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn malformed_pgms_are_rejected() {
        let p = Path::new("bad.pgm");
        assert!(parse_pgm(b"P2\n1 1\n255\n0", p).is_err());
        assert!(parse_pgm(b"P5\n4 4\n255\n\x00\x01", p).is_err());
        assert!(parse_pgm(b"P5\n0 4\n255\n", p).is_err());
    }

    #[test]
    fn probability_quantization_error_is_bounded() {
        let dir = tempfile::tempdir().unwrap();
        let map = Grid::from_fn(7, 5, |x, y| ((x * 13 + y * 29) % 100) as f64 / 99.0);
        let path = dir.path().join("p.pgm");
        write_probability_map(&path, &map).unwrap();
        let back = read_probability_map(&path).unwrap();
        for (a, b) in map.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-15);
        }
    }
}
