//! Geometry of reasoning steps in embedding space.

mod cluster;
mod fold;
mod meb;
mod phase;
mod tsne;

pub use cluster::{adaptive_alpha, cluster, cluster_with_beta, AdaptiveAlpha, ClusterSet, ALPHA_FRACTION};
pub use fold::{folding_metrics, summarize, EdgeFold, FoldOptions, FoldSummary};
pub use meb::{circumball, meb, volume, Ball};
pub use phase::{
    phase_trajectory, PhaseState, PhaseTrajectory, EXPLORATION_GAIN, EXPLORATION_SLOPE, SLOPE_GUARD,
    VALIDATION_BAND,
};
pub use tsne::{cosine_distance, max_perplexity, tsne_reduce, TsneConfig, TsneResult};

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// One vector per step of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSequence {
    pub trace_id: String,
    pub vectors: Vec<Vec<f64>>,
}

impl EmbeddingSequence {
    pub fn new(trace_id: impl Into<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let seq = EmbeddingSequence {
            trace_id: trace_id.into(),
            vectors,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.vectors.is_empty() {
            return Err(Error::shape(format!("embedding for {} is empty", self.trace_id)));
        }
        if d < 2 {
            return Err(Error::shape(format!("embedding for {} has dimension {d} < 2", self.trace_id)));
        }
        if self.vectors.iter().any(|v| v.len() != d) {
            return Err(Error::shape(format!("embedding for {} mixes dimensions", self.trace_id)));
        }
        if self.vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::shape(format!("embedding for {} has non-finite values", self.trace_id)));
        }
        Ok(())
    }
}

const CMEB_MAGIC: &[u8; 4] = b"CMEB";

/// Reads JSONL records, or a single binary sequence when the file starts
/// with the `CMEB` magic. Binary sequences take the file stem as trace id.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<EmbeddingSequence>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(CMEB_MAGIC) {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(vec![decode_cmeb(&bytes, id)?]);
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(bytes.as_slice()).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: EmbeddingSequence = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        seq.validate()?;
        out.push(seq);
    }
    Ok(out)
}

pub fn decode_cmeb(bytes: &[u8], trace_id: String) -> Result<EmbeddingSequence> {
    let mut r = bytes;
    let mut head = [0u8; 12];
    r.read_exact(&mut head)
        .map_err(|_| Error::shape("binary embedding header truncated"))?;
    if &head[..4] != CMEB_MAGIC {
        return Err(Error::shape("binary embedding has wrong magic"));
    }
    let count = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
    let need = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::shape("binary embedding size overflows"))?;
    if r.len() != need {
        return Err(Error::shape(format!(
            "binary embedding payload is {} bytes, expected {need}",
            r.len()
        )));
    }
    let vals: Vec<f64> = r
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    EmbeddingSequence::new(trace_id, vals.chunks(dim.max(1)).map(<[f64]>::to_vec).collect())
}

pub fn encode_cmeb(seq: &EmbeddingSequence) -> Vec<u8> {
    let mut out = CMEB_MAGIC.to_vec();
    out.extend((seq.vectors.len() as u32).to_le_bytes());
    out.extend((seq.dim() as u32).to_le_bytes());
    for x in seq.vectors.iter().flatten() {
        out.extend((*x as f32).to_le_bytes());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeChange {
    Reduction,
    Expansion,
}

/// Percentage change of a volume relative to a baseline.
pub fn volume_delta(v_base: f64, v_mode: f64, direction: VolumeChange) -> Result<f64> {
    if !(v_base > 0.0 && v_base.is_finite()) {
        return Err(Error::bad_config(format!("baseline volume must be positive, got {v_base}")));
    }
    Ok(match direction {
        VolumeChange::Reduction => (v_base - v_mode) / v_base * 100.0,
        VolumeChange::Expansion => (v_mode - v_base) / v_base * 100.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_delta_examples() {
        let r = volume_delta(35.2, 31.2, VolumeChange::Reduction).unwrap();
        assert!((r - 11.3636).abs() < 1e-3);
        let e = volume_delta(23.95, 29.22, VolumeChange::Expansion).unwrap();
        assert!((e - 22.004).abs() < 1e-3);
        assert_eq!(volume_delta(5.0, 5.0, VolumeChange::Expansion).unwrap(), 0.0);
        assert!(volume_delta(0.0, 1.0, VolumeChange::Reduction).is_err());
    }

    #[test]
    fn cmeb_roundtrip() {
        let seq = EmbeddingSequence::new("x", vec![vec![1.0, 2.0], vec![0.5, -3.0]]).unwrap();
        let back = decode_cmeb(&encode_cmeb(&seq), "x".into()).unwrap();
        assert_eq!(back, seq);
        assert!(decode_cmeb(b"CMEB\x01\0\0\0\x02\0\0\0", "x".into()).is_err());
    }
}
