//! Reconstruction-quality metrics over token sequences.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases and splits on every character that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Ordered, lowercased tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        TokenSeq(tokens.into_iter().map(|t| t.into().to_lowercase()).collect())
    }

    pub fn from_text(text: &str) -> Self {
        TokenSeq(tokenize(text))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// `|A n B| / |A u B|` over token sets; two empty texts score 1.
pub fn jaccard(a: &TokenSeq, b: &TokenSeq) -> f64 {
    let sa: HashSet<&str> = a.0.iter().map(String::as_str).collect();
    let sb: HashSet<&str> = b.0.iter().map(String::as_str).collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `LCS(A, B) / max(|A|, |B|)`; two empty texts score 1.
pub fn rouge_l(a: &TokenSeq, b: &TokenSeq) -> f64 {
    let m = a.len().max(b.len());
    if m == 0 {
        return 1.0;
    }
    lcs_len(&a.0, &b.0) as f64 / m as f64
}

/// Exact-match METEOR: `10PR / (R + 9P) * (1 - 0.5 (chunks/matches)^3)`.
///
/// Each candidate token, left to right, is aligned to the first unused
/// occurrence of the same token in the reference. A chunk is a maximal run of
/// candidate matches that are also adjacent, in order, in the reference.
pub fn meteor_lite(candidate: &TokenSeq, reference: &TokenSeq) -> f64 {
    let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, t) in reference.0.iter().enumerate().rev() {
        positions.entry(t.as_str()).or_default().push(i);
    }
    let mut aligned = Vec::new();
    for t in &candidate.0 {
        if let Some(p) = positions.get_mut(t.as_str()).and_then(Vec::pop) {
            aligned.push(p);
        }
    }
    let matches = aligned.len();
    if matches == 0 {
        return 0.0;
    }
    let chunks = 1 + aligned.windows(2).filter(|w| w[1] != w[0] + 1).count();
    let p = matches as f64 / candidate.len() as f64;
    let r = matches as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let frag = chunks as f64 / matches as f64;
    fmean * (1.0 - 0.5 * frag.powi(3))
}

/// Token embeddings, mean-pooled into sentence vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: Vectors,
}

#[derive(Debug, Clone, PartialEq)]
enum Vectors {
    Dense(HashMap<String, Vec<f64>>),
    /// Token -> index of its indicator vector.
    OneHot(HashMap<String, usize>),
}

impl EmbeddingTable {
    pub fn new(vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        let dim = vectors
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::EmptyInput("embedding table has no tokens".into()))?;
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension is 0".into()));
        }
        for (t, v) in &vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if v.iter().all(|x| *x == 0.0) || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "embedding for `{t}` must be finite and nonzero"
                )));
            }
        }
        Ok(Self {
            dim,
            vectors: Vectors::Dense(vectors),
        })
    }

    /// Indicator vectors over `vocab`: pooled cosine becomes cosine between
    /// bag-of-words count vectors.
    pub fn one_hot<S: AsRef<str>>(vocab: &[S]) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::EmptyInput("embedding table has no tokens".into()));
        }
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_ref().to_lowercase(), i))
            .collect();
        Ok(Self {
            dim: vocab.len(),
            vectors: Vectors::OneHot(index),
        })
    }

    /// Reads `token v1 v2 ... vD` lines; blank lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = HashMap::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let parse_err = |message: String| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message,
            };
            let v = fields
                .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("`{f}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if v.is_empty() {
                return Err(parse_err(format!("token `{token}` has no vector")));
            }
            vectors.insert(token.to_lowercase(), v);
        }
        Self::new(vectors)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, token: &str) -> Option<Vec<f64>> {
        match &self.vectors {
            Vectors::Dense(m) => m.get(token).cloned(),
            Vectors::OneHot(m) => m.get(token).map(|&i| {
                let mut v = vec![0.0; self.dim];
                v[i] = 1.0;
                v
            }),
        }
    }

    /// Mean of the in-vocabulary token vectors, `None` if none are known.
    pub fn pool(&self, seq: &TokenSeq) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        for t in &seq.0 {
            match &self.vectors {
                Vectors::Dense(m) => {
                    let Some(v) = m.get(t) else { continue };
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += x;
                    }
                }
                Vectors::OneHot(m) => {
                    let Some(&i) = m.get(t) else { continue };
                    acc[i] += 1.0;
                }
            }
            n += 1;
        }
        (n > 0).then(|| acc.into_iter().map(|a| a / n as f64).collect())
    }
}

/// Cosine between mean-pooled embeddings.
pub fn cosine_similarity(a: &TokenSeq, b: &TokenSeq, emb: &EmbeddingTable) -> Result<f64> {
    let va = emb.pool(a).ok_or(Error::OutOfVocabulary("first"))?;
    let vb = emb.pool(b).ok_or(Error::OutOfVocabulary("second"))?;
    let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput("pooled embedding has zero norm".into()));
    }
    let d: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
    Ok((d / (na * nb)).clamp(-1.0, 1.0))
}

/// All four scores for one (reconstruction, reference) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionScores {
    pub jaccard: f64,
    pub cosine: f64,
    pub meteor: f64,
    pub rouge_l: f64,
}

impl ReconstructionScores {
    pub fn compute(candidate: &TokenSeq, reference: &TokenSeq, emb: &EmbeddingTable) -> Result<Self> {
        Ok(Self {
            jaccard: jaccard(candidate, reference),
            cosine: cosine_similarity(candidate, reference, emb)?,
            meteor: meteor_lite(candidate, reference),
            rouge_l: rouge_l(candidate, reference),
        })
    }
}
