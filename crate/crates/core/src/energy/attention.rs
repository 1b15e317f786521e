//! Attention logits, step spans and per-bond energies.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::euclidean;
use crate::trace::{BehaviorLabel, LabeledTrace};

const CATT_MAGIC: &[u8; 4] = b"CATT";

/// Final-layer attention logits `s[h][i][j]`: query token `i`, key token `j`.
#[derive(Debug, Clone, PartialEq)]
pub enum AttentionRecord {
    Dense {
        heads: usize,
        tokens: usize,
        logits: Vec<f32>,
    },
    Sparse {
        heads: usize,
        logits: HashMap<(usize, usize, usize), f64>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SparseEntry {
    h: usize,
    i: usize,
    j: usize,
    s: f64,
}

impl AttentionRecord {
    pub fn dense(heads: usize, tokens: usize, logits: Vec<f32>) -> Result<Self> {
        if heads == 0 || tokens == 0 {
            return Err(Error::shape("attention needs at least one head and token"));
        }
        if logits.len() != heads * tokens * tokens {
            return Err(Error::shape(format!(
                "{} logits for {heads} heads x {tokens}^2 tokens",
                logits.len()
            )));
        }
        Ok(AttentionRecord::Dense { heads, tokens, logits })
    }

    pub fn heads(&self) -> usize {
        match self {
            AttentionRecord::Dense { heads, .. } | AttentionRecord::Sparse { heads, .. } => *heads,
        }
    }

    pub fn logit(&self, h: usize, i: usize, j: usize) -> Option<f64> {
        let v = match self {
            AttentionRecord::Dense { heads, tokens, logits } => {
                if h >= *heads || i >= *tokens || j >= *tokens {
                    return None;
                }
                logits[(h * tokens + i) * tokens + j] as f64
            }
            AttentionRecord::Sparse { logits, .. } => *logits.get(&(h, i, j))?,
        };
        v.is_finite().then_some(v)
    }

    /// Head-averaged logit of query `i` on key `j`.
    pub fn mean_logit(&self, i: usize, j: usize) -> Result<f64> {
        let mut sum = 0.0;
        for h in 0..self.heads() {
            sum += self
                .logit(h, i, j)
                .ok_or_else(|| Error::MissingAttention(format!("no logit for head {h}, query {i}, key {j}")))?;
        }
        Ok(sum / self.heads() as f64)
    }

    /// Converts post-softmax weights to logits. Each row is only recovered
    /// up to an additive constant, which cancels in energy gaps.
    pub fn from_weights(self) -> Result<Self> {
        let log = |w: f64| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
        Ok(match self {
            AttentionRecord::Dense { heads, tokens, logits } => AttentionRecord::Dense {
                heads,
                tokens,
                logits: logits.into_iter().map(|w| log(w as f64) as f32).collect(),
            },
            AttentionRecord::Sparse { heads, logits } => AttentionRecord::Sparse {
                heads,
                logits: logits.into_iter().map(|(k, w)| (k, log(w))).collect(),
            },
        })
    }

    pub fn encode_dense(&self) -> Option<Vec<u8>> {
        let AttentionRecord::Dense { heads, tokens, logits } = self else {
            return None;
        };
        let mut out = CATT_MAGIC.to_vec();
        out.extend((*heads as u32).to_le_bytes());
        out.extend((*tokens as u32).to_le_bytes());
        for x in logits {
            out.extend(x.to_le_bytes());
        }
        Some(out)
    }
}

/// Reads a binary `CATT` file or sparse JSONL `{h, i, j, s}` records.
pub fn read_attention(path: impl AsRef<Path>) -> Result<AttentionRecord> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(CATT_MAGIC) {
        if bytes.len() < 12 {
            return Err(Error::shape("attention header truncated"));
        }
        let heads = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let tokens = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let payload = &bytes[12..];
        let expected = heads
            .checked_mul(tokens)
            .and_then(|x| x.checked_mul(tokens))
            .and_then(|x| x.checked_mul(4))
            .ok_or_else(|| Error::shape("attention size overflows"))?;
        if payload.len() != expected {
            return Err(Error::shape(format!(
                "attention payload is {} bytes, expected {expected}",
                payload.len()
            )));
        }
        let logits = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        return AttentionRecord::dense(heads, tokens, logits);
    }
    let mut logits = HashMap::new();
    let mut heads = 0;
    for (n, line) in BufReader::new(bytes.as_slice()).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: SparseEntry = serde_json::from_str(&line).map_err(|err| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: err.to_string(),
        })?;
        heads = heads.max(e.h + 1);
        logits.insert((e.h, e.i, e.j), e.s);
    }
    if logits.is_empty() {
        return Err(Error::MissingAttention("attention file has no entries".into()));
    }
    Ok(AttentionRecord::Sparse { heads, logits })
}

/// Half-open token ranges, one per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepSpans(pub Vec<[usize; 2]>);

impl StepSpans {
    pub fn validate(&self, steps: usize, tokens: Option<usize>) -> Result<()> {
        if self.0.len() != steps {
            return Err(Error::shape(format!("{} spans for {steps} steps", self.0.len())));
        }
        let mut prev_end = 0;
        for (k, &[start, end]) in self.0.iter().enumerate() {
            if start >= end {
                return Err(Error::shape(format!("span {k} [{start}, {end}) is empty")));
            }
            if start < prev_end {
                return Err(Error::shape(format!("span {k} overlaps or precedes span {}", k - 1)));
            }
            if tokens.is_some_and(|t| end > t) {
                return Err(Error::shape(format!("span {k} ends past the token count")));
            }
            prev_end = end;
        }
        Ok(())
    }

    pub fn final_token(&self, step: usize) -> usize {
        self.0[step][1] - 1
    }
}

pub fn read_spans(path: impl AsRef<Path>) -> Result<StepSpans> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Which way exploration bonds are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExploreOrientation {
    /// The previous step queries the exploration step.
    #[default]
    Forward,
    /// The exploration step queries the previous step, like deep bonds.
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BondOptions {
    pub explore: ExploreOrientation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BondEnergySample {
    pub bond: BehaviorLabel,
    pub energy: f64,
    pub trace_id: String,
    pub edge_index: usize,
    pub query_token: usize,
    pub key_token: usize,
}

/// One energy per edge: minus the head-averaged logit between the final
/// tokens of the two steps involved. Reflection edges look back to the
/// prior step closest in embedding space, which needs `embeddings`.
pub fn bond_energies(
    labeled: &LabeledTrace,
    attn: &AttentionRecord,
    spans: &StepSpans,
    embeddings: Option<&[Vec<f64>]>,
    opts: BondOptions,
) -> Result<Vec<BondEnergySample>> {
    let steps = labeled.trace().len();
    let tokens = match attn {
        AttentionRecord::Dense { tokens, .. } => Some(*tokens),
        AttentionRecord::Sparse { .. } => None,
    };
    spans.validate(steps, tokens)?;
    if let Some(e) = embeddings {
        if e.len() != steps {
            return Err(Error::shape(format!("{} embeddings for {steps} steps", e.len())));
        }
    }
    let mut out = Vec::with_capacity(steps.saturating_sub(1));
    for (t, &bond) in labeled.labels().iter().enumerate() {
        let (query_step, key_step) = match bond {
            BehaviorLabel::Normal | BehaviorLabel::Deep => (t + 1, t),
            BehaviorLabel::Explore => match opts.explore {
                ExploreOrientation::Forward => (t, t + 1),
                ExploreOrientation::Backward => (t + 1, t),
            },
            BehaviorLabel::Reflect => {
                let emb = embeddings.ok_or_else(|| {
                    Error::bad_config("reflection bonds need step embeddings to find the nearest prior step")
                })?;
                let cur = &emb[t + 1];
                let nearest = (0..=t)
                    .min_by(|&a, &b| euclidean(cur, &emb[a]).total_cmp(&euclidean(cur, &emb[b])))
                    .expect("at least one prior step");
                (t + 1, nearest)
            }
        };
        let q = spans.final_token(query_step);
        let k = spans.final_token(key_step);
        let logit = attn.mean_logit(q, k)?;
        out.push(BondEnergySample {
            bond,
            energy: -logit,
            trace_id: labeled.trace().id().to_string(),
            edge_index: t,
            query_token: q,
            key_token: k,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use BehaviorLabel::*;

    fn dense_with(heads: usize, tokens: usize, set: &[(usize, usize, usize, f32)]) -> AttentionRecord {
        let mut logits = vec![0.0f32; heads * tokens * tokens];
        for &(h, i, j, s) in set {
            logits[(h * tokens + i) * tokens + j] = s;
        }
        AttentionRecord::dense(heads, tokens, logits).unwrap()
    }

    #[test]
    fn single_head_passthrough() {
        let lt = LabeledTrace::from_labels("t", &[Deep]).unwrap();
        let spans = StepSpans(vec![[0, 2], [2, 4]]);
        let attn = dense_with(1, 4, &[(0, 3, 1, 0.4)]);
        let e = bond_energies(&lt, &attn, &spans, None, BondOptions::default()).unwrap();
        assert!((e[0].energy + 0.4).abs() < 1e-6);
    }

    #[test]
    fn head_mean() {
        let lt = LabeledTrace::from_labels("t", &[Deep]).unwrap();
        let spans = StepSpans(vec![[0, 2], [2, 4]]);
        let attn = dense_with(2, 4, &[(0, 3, 1, 0.2), (1, 3, 1, 0.6)]);
        let e = bond_energies(&lt, &attn, &spans, None, BondOptions::default()).unwrap();
        assert!((e[0].energy + 0.4).abs() < 1e-6);
    }

    #[test]
    fn span_gap_is_shape_error() {
        let lt = LabeledTrace::from_labels("t", &[Deep, Deep]).unwrap();
        let spans = StepSpans(vec![[0, 2], [2, 2], [2, 4]]);
        let attn = dense_with(1, 4, &[]);
        assert!(matches!(
            bond_energies(&lt, &attn, &spans, None, BondOptions::default()),
            Err(Error::Shape(_))
        ));
        let short = StepSpans(vec![[0, 2], [2, 4]]);
        assert!(matches!(
            bond_energies(&lt, &attn, &short, None, BondOptions::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn orientation_and_reflection() {
        let lt = LabeledTrace::from_labels("t", &[Deep, Explore, Reflect]).unwrap();
        let spans = StepSpans(vec![[0, 1], [1, 2], [2, 3], [3, 4]]);
        let attn = dense_with(1, 4, &[(0, 1, 2, 0.5), (0, 2, 1, 0.9), (0, 3, 0, 1.5)]);
        let emb = vec![vec![0.0, 0.0], vec![5.0, 0.0], vec![9.0, 0.0], vec![0.1, 0.0]];
        let fwd = bond_energies(&lt, &attn, &spans, Some(&emb), BondOptions::default()).unwrap();
        assert!((fwd[1].energy + 0.5).abs() < 1e-6);
        assert_eq!(fwd[2].key_token, 0);
        assert!((fwd[2].energy + 1.5).abs() < 1e-6);
        let back = bond_energies(
            &lt,
            &attn,
            &spans,
            Some(&emb),
            BondOptions {
                explore: ExploreOrientation::Backward,
            },
        )
        .unwrap();
        assert!((back[1].energy + 0.9).abs() < 1e-6);
        assert!(bond_energies(&lt, &attn, &spans, None, BondOptions::default()).is_err());
    }

    #[test]
    fn sparse_missing_entry() {
        let lt = LabeledTrace::from_labels("t", &[Deep]).unwrap();
        let spans = StepSpans(vec![[0, 1], [1, 2]]);
        let attn = AttentionRecord::Sparse {
            heads: 2,
            logits: HashMap::from([((0, 1, 0), 1.0)]),
        };
        assert!(matches!(
            bond_energies(&lt, &attn, &spans, None, BondOptions::default()),
            Err(Error::MissingAttention(_))
        ));
    }

    #[test]
    fn weights_become_logs() {
        let attn = AttentionRecord::dense(1, 1, vec![0.5]).unwrap().from_weights().unwrap();
        assert!((attn.logit(0, 0, 0).unwrap() - 0.5f64.ln()).abs() < 1e-6);
    }
}
