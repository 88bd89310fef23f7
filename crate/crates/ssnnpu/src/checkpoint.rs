//! Plain-text scorer checkpoints: an architecture header followed by one
//! parameter per line in shortest round-trip decimal form.
//!
//! The scorer consumes features standardized over the sequence it was
//! trained on, so a checkpoint is only meaningful for that sequence.

use std::fs;
use std::path::Path;

use ssnnpu_core::scorer::{ScorerModel, FEATURE_DIM, HIDDEN, PARAM_COUNT};

use crate::error::{Error, Result};

const MAGIC: &str = "ssnnpu-scorer 1";

fn architecture() -> String {
    format!("layers {FEATURE_DIM} {HIDDEN} {HIDDEN} 1")
}

pub fn encode(model: &ScorerModel) -> String {
    let mut out = format!("{MAGIC}\n{}\nparams {PARAM_COUNT}\n", architecture());
    for p in model.params() {
        out.push_str(&format!("{p:?}\n"));
    }
    out
}

pub fn decode(text: &str, path: &Path) -> Result<ScorerModel> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::format(path, "not a scorer checkpoint"));
    }
    if lines.next() != Some(architecture().as_str()) {
        return Err(Error::format(path, format!("architecture differs from {}", architecture())));
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("params "))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::format(path, "missing parameter count"))?;
    let params = lines
        .map(|l| l.trim().parse::<f64>().map_err(|_| Error::format(path, format!("bad parameter {l:?}"))))
        .collect::<Result<Vec<f64>>>()?;
    if params.len() != count {
        return Err(Error::format(path, format!("header says {count} parameters, found {}", params.len())));
    }
    Ok(ScorerModel::from_params(params)?)
}

pub fn save(model: &ScorerModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ScorerModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode(&text, path)
}
