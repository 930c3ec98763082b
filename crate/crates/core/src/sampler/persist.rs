//! Chain persistence: one JSON parameter draw per line, plus a manifest
//! with the configuration and per-chain diagnostics.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChainConfig, ChainSummary};
use crate::error::{Error, Result};
use crate::model::MixtureParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    /// Iteration number, counted from the first post-burn-in draw (1-based).
    pub iteration: usize,
    pub theta: MixtureParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ChainConfig,
    pub best_chain: usize,
    pub loglik: f64,
    pub chains: Vec<ChainSummary>,
    pub wall_time_secs: f64,
}

pub fn write_draws(path: &Path, draws: &[MixtureParams]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, theta) in draws.iter().enumerate() {
        let rec = DrawRecord {
            iteration: i + 1,
            theta: theta.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_draws(path: &Path) -> Result<Vec<DrawRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
