//! Labelled text corpora, vocabulary and bag-of-words features.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::textmetrics::tokenize;

/// Sparse feature vector as sorted `(index, value)` pairs.
pub type SparseVec = Vec<(u32, f64)>;

/// A labelled raw text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledText {
    pub label: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseVec,
    pub label: usize,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Token <-> feature index map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// The `max_size` most frequent tokens, ties broken alphabetically.
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a [String]>, max_size: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            for t in doc {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(max_size);
        ranked
            .into_iter()
            .map(|(t, _)| t.to_string())
            .collect::<Vec<_>>()
            .into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Count features; out-of-vocabulary tokens are dropped.
    pub fn featurize(&self, tokens: &[String]) -> SparseVec {
        let mut counts: HashMap<u32, f64> = HashMap::new();
        for t in tokens {
            if let Some(i) = self.index_of(t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = counts.into_iter().collect();
        v.sort_by_key(|&(i, _)| i);
        v
    }
}

/// Featurized train/validation/test splits over a shared vocabulary.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub num_classes: usize,
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

impl Dataset {
    /// Builds the vocabulary from the training texts and featurizes every split.
    pub fn from_splits(
        train: &[LabeledText],
        validation: &[LabeledText],
        test: &[LabeledText],
        max_vocab: usize,
    ) -> Result<Self> {
        let tokens: Vec<Vec<String>> = train.iter().map(|x| tokenize(&x.text)).collect();
        let vocab = Vocabulary::build(tokens.iter().map(Vec::as_slice), max_vocab);
        Self::with_vocabulary(vocab, train, validation, test)
    }

    /// Featurizes every split against an existing vocabulary.
    pub fn with_vocabulary(
        vocab: Vocabulary,
        train: &[LabeledText],
        validation: &[LabeledText],
        test: &[LabeledText],
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput("training split is empty".into()));
        }
        if vocab.is_empty() {
            return Err(Error::EmptyInput("vocabulary is empty".into()));
        }
        let num_classes = train
            .iter()
            .chain(validation)
            .chain(test)
            .map(|x| x.label + 1)
            .max()
            .unwrap_or(0)
            .max(2);
        let feat = |xs: &[LabeledText]| -> Vec<Example> {
            xs.iter()
                .map(|x| {
                    let tokens = tokenize(&x.text);
                    Example {
                        features: vocab.featurize(&tokens),
                        label: x.label,
                        tokens,
                    }
                })
                .collect()
        };
        Ok(Self {
            num_classes,
            train: feat(train),
            validation: feat(validation),
            test: feat(test),
            vocab,
        })
    }

    /// Shuffles with `seed` and cuts into train/validation/test by fractions
    /// (test takes the remainder).
    pub fn from_single(
        all: &[LabeledText],
        train_frac: f64,
        validation_frac: f64,
        seed: u64,
        max_vocab: usize,
    ) -> Result<Self> {
        let (train, validation, test) = split_texts(all, train_frac, validation_frac, seed)?;
        Self::from_splits(&train, &validation, &test, max_vocab)
    }

    pub fn split(&self, s: Split) -> &[Example] {
        match s {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn num_features(&self) -> usize {
        self.vocab.len()
    }

    /// Same vocabulary and class count, different examples.
    pub fn with_splits(&self, train: Vec<Example>, validation: Vec<Example>, test: Vec<Example>) -> Self {
        Self {
            vocab: self.vocab.clone(),
            num_classes: self.num_classes,
            train,
            validation,
            test,
        }
    }
}

const SPLIT_TAG: u64 = 0x5111;

type Splits = (Vec<LabeledText>, Vec<LabeledText>, Vec<LabeledText>);

/// Seeded shuffle of `all`, cut into train/validation/test by fractions.
pub fn split_texts(all: &[LabeledText], train_frac: f64, validation_frac: f64, seed: u64) -> Result<Splits> {
    if !(train_frac > 0.0 && validation_frac >= 0.0 && train_frac + validation_frac <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "bad split fractions {train_frac}/{validation_frac}"
        )));
    }
    let mut idx: Vec<usize> = (0..all.len()).collect();
    idx.shuffle(&mut rng::substream(seed, &[SPLIT_TAG]));
    let n_train = ((all.len() as f64) * train_frac).round() as usize;
    let n_val = (((all.len() as f64) * validation_frac).round() as usize).min(all.len() - n_train);
    let pick = |r: &[usize]| r.iter().map(|&i| all[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&idx[..n_train]),
        pick(&idx[n_train..n_train + n_val]),
        pick(&idx[n_train + n_val..]),
    ))
}

/// Reads `label<TAB>text` lines. Labels are non-negative integers; blank
/// lines are skipped.
pub fn load_tsv(path: impl AsRef<Path>) -> Result<Vec<LabeledText>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `label<TAB>text`".into()))?;
        let label = label
            .trim()
            .parse::<usize>()
            .map_err(|e| err(format!("bad label `{label}`: {e}")))?;
        out.push(LabeledText {
            label,
            text: text.to_string(),
        });
    }
    Ok(out)
}

/// Writes `label<TAB>text` lines.
pub fn write_tsv(path: impl AsRef<Path>, rows: &[LabeledText]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    for r in rows {
        s.push_str(&format!("{}\t{}\n", r.label, r.text.replace(['\t', '\n'], " ")));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Generator for a two-class bag-of-words corpus with tunable difficulty.
///
/// Clean labels alternate, so classes are balanced. Each sentence mixes
/// class-indicative words (`pos*`/`neg*`) with filler drawn from a Zipf-like
/// background vocabulary; labels can be flipped to add irreducible noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticCorpus {
    pub examples: usize,
    /// Indicative words per class.
    pub cue_words: usize,
    /// Background vocabulary size.
    pub filler_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a token is an indicative word of the label's class.
    pub cue_rate: f64,
    /// Probability that the label is flipped after generation.
    pub label_noise: f64,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        Self {
            examples: 2000,
            cue_words: 20,
            filler_words: 400,
            min_len: 6,
            max_len: 14,
            cue_rate: 0.15,
            label_noise: 0.1,
        }
    }
}

impl SyntheticCorpus {
    pub fn generate(&self, seed: u64) -> Vec<LabeledText> {
        let mut r = rng::substream(seed, &[0x5e7]);
        // Zipf-like weights 1/(k+1) for the background words.
        let weights: Vec<f64> = (0..self.filler_words).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        let total: f64 = weights.iter().sum();
        let cdf: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w / total;
                Some(*acc)
            })
            .collect();
        (0..self.examples)
            .map(|i| {
                let label = i % 2;
                let len = r.random_range(self.min_len..=self.max_len.max(self.min_len));
                let words: Vec<String> = (0..len)
                    .map(|_| {
                        if r.random::<f64>() < self.cue_rate {
                            let prefix = if label == 1 { "pos" } else { "neg" };
                            format!("{prefix}{}", r.random_range(0..self.cue_words.max(1)))
                        } else {
                            let u: f64 = r.random();
                            let k = cdf.partition_point(|&c| c < u).min(self.filler_words - 1);
                            format!("w{k}")
                        }
                    })
                    .collect();
                let label = if r.random::<f64>() < self.label_noise {
                    1 - label
                } else {
                    label
                };
                LabeledText {
                    label,
                    text: words.join(" "),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lt(label: usize, text: &str) -> LabeledText {
        LabeledText {
            label,
            text: text.into(),
        }
    }

    #[test]
    fn vocabulary_ranks_by_frequency_then_alphabet() {
        let docs = [
            vec!["b".to_string(), "a".into(), "c".into()],
            vec!["c".to_string(), "b".into()],
        ];
        let v = Vocabulary::build(docs.iter().map(Vec::as_slice), 2);
        assert_eq!(v.tokens(), &["b".to_string(), "c".to_string()]);
        assert_eq!(v.featurize(&["c".into(), "c".into(), "zzz".into()]), vec![(1, 2.0)]);
    }

    #[test]
    fn dataset_from_splits() {
        let d = Dataset::from_splits(
            &[lt(0, "Good movie"), lt(1, "bad, BAD movie")],
            &[],
            &[lt(2, "movie")],
            10,
        )
        .unwrap();
        assert_eq!(d.num_classes, 3);
        assert_eq!(d.num_features(), 3);
        let bad = d.vocab.index_of("bad").unwrap();
        assert!(d.train[1].features.contains(&(bad, 2.0)));
        assert_eq!(d.train[1].tokens, vec!["bad", "bad", "movie"]);
        assert!(d
            .train
            .iter()
            .chain(&d.test)
            .all(|e| e.features.iter().all(|&(i, _)| (i as usize) < d.num_features())));
    }

    #[test]
    fn single_file_split_is_seeded_and_disjoint() {
        let all: Vec<_> = (0..100).map(|i| lt(i % 2, &format!("tok{i} common"))).collect();
        let a = Dataset::from_single(&all, 0.8, 0.1, 3, 1000).unwrap();
        let b = Dataset::from_single(&all, 0.8, 0.1, 3, 1000).unwrap();
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (80, 10, 10));
        assert_eq!(a.test[0].tokens, b.test[0].tokens);
        let seen: std::collections::HashSet<_> = a.train.iter().map(|e| e.tokens.clone()).collect();
        assert!(a.test.iter().all(|e| !seen.contains(&e.tokens)));
    }

    #[test]
    fn tsv_parsing_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.tsv");
        std::fs::write(&p, "0\thello world\n\n1\tbye\n").unwrap();
        let rows = load_tsv(&p).unwrap();
        assert_eq!(rows, vec![lt(0, "hello world"), lt(1, "bye")]);
        std::fs::write(&p, "0\tok\nnot a row\n").unwrap();
        match load_tsv(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "x\tok\n").unwrap();
        assert!(matches!(load_tsv(&p), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            load_tsv(dir.path().join("missing.tsv")),
            Err(Error::Io { .. })
        ));
        write_tsv(&p, &[lt(1, "a\tb")]).unwrap();
        assert_eq!(load_tsv(&p).unwrap(), vec![lt(1, "a b")]);
    }

    #[test]
    fn synthetic_corpus_is_seeded() {
        let g = SyntheticCorpus {
            examples: 50,
            ..Default::default()
        };
        assert_eq!(g.generate(1), g.generate(1));
        assert_ne!(g.generate(1), g.generate(2));
        assert!(g.generate(1).iter().all(|x| x.label < 2 && !x.text.is_empty()));
    }
}
