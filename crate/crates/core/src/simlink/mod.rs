//! Embedding-similarity responsivity backend.
//!
//! Each turn links to every turn in its window whose embedding has cosine
//! similarity at or above the configured threshold.

mod provider;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::{window, Conversation, WindowConfig};
use crate::error::{Error, Result};
use crate::linkspace::{AnnotationRun, Link, LinkKind, LinkTable};
use crate::scalar::Real;

pub use provider::{
    fetch_embeddings, text_hash, EmbeddingCache, EmbeddingFetcher, EmbeddingProvider,
    FileEmbeddingProvider, HttpEmbeddingProvider, MAX_BATCH,
};

pub const METHOD_ID: &str = "similarity";

/// A finite, fixed-length embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: Real> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("embedding has zero dimension".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("embedding contains non-finite values".into()));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn from_f64s(values: &[f64]) -> Result<Self> {
        let converted = values
            .iter()
            .map(|&v| T::from_f64(v).ok_or_else(|| Error::Numeric(format!("{v} not representable"))))
            .collect::<Result<Vec<T>>>()?;
        Self::new(converted)
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn norm(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    /// Scales to unit L2 norm.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == T::zero() {
            return Err(Error::Numeric("cannot normalize a zero vector".into()));
        }
        Ok(EmbeddingVector {
            values: self.values.iter().map(|&v| v / n).collect(),
        })
    }
}

/// Cosine similarity `u·v / (‖u‖‖v‖)`, clamped to [-1, 1].
pub fn cosine_similarity<T: Real>(u: &EmbeddingVector<T>, v: &EmbeddingVector<T>) -> Result<T> {
    if u.dimension() != v.dimension() {
        return Err(Error::Argument(format!(
            "dimension mismatch: {} vs {}",
            u.dimension(),
            v.dimension()
        )));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::Numeric("cosine of a zero vector".into()));
    }
    let dot = u
        .values
        .iter()
        .zip(&v.values)
        .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
    Ok((dot / (nu * nv)).max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimilarityConfig<T> {
    pub threshold: T,
    pub window: WindowConfig,
    pub normalize: bool,
}

impl<T: Real> SimilarityConfig<T> {
    pub fn new(threshold: T, window: WindowConfig, normalize: bool) -> Result<Self> {
        if !(threshold > -T::one() && threshold <= T::one()) {
            return Err(Error::Argument(format!(
                "threshold {threshold:?} outside (-1, 1]"
            )));
        }
        Ok(SimilarityConfig {
            threshold,
            window,
            normalize,
        })
    }
}

impl<T: Real> Default for SimilarityConfig<T> {
    fn default() -> Self {
        SimilarityConfig {
            threshold: T::lit(0.5),
            window: WindowConfig::default(),
            normalize: true,
        }
    }
}

/// Links every turn to the window turns it is similar enough to.
pub fn link_by_similarity<T: Real>(
    conv: &Conversation,
    embeddings: &BTreeMap<usize, EmbeddingVector<T>>,
    cfg: &SimilarityConfig<T>,
) -> Result<AnnotationRun> {
    let mut vectors = Vec::with_capacity(conv.len());
    for turn in conv.turns() {
        let v = embeddings.get(&turn.turn_id).ok_or_else(|| {
            Error::Lookup(format!("no embedding for turn {}", turn.turn_id))
        })?;
        if let Some(first) = vectors.first() {
            let first: &EmbeddingVector<T> = first;
            if first.dimension() != v.dimension() {
                return Err(Error::Protocol(format!(
                    "turn {} embedding has dimension {}, expected {}",
                    turn.turn_id,
                    v.dimension(),
                    first.dimension()
                )));
            }
        }
        vectors.push(if cfg.normalize { v.normalized()? } else { v.clone() });
    }

    let mut table = LinkTable::for_conversation(conv, cfg.window);
    for turn in conv.turns() {
        for target in window(conv, turn.turn_id, cfg.window)? {
            let sim = cosine_similarity(&vectors[turn.turn_id], &vectors[target.turn_id])?;
            if sim >= cfg.threshold {
                table.insert(Link::new(turn.turn_id, target.turn_id, LinkKind::Unclassified))?;
            }
        }
    }
    Ok(AnnotationRun::new(METHOD_ID, 0, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SpeakerRole, Turn};

    fn ev(v: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let u = ev(&[0.6, 0.8]);
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&ev(&[1.0, 0.0]), &ev(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_similarity(&ev(&[1.0, 1.0]), &ev(&[1.0, 0.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&ev(&[0.0, 0.0]), &ev(&[1.0, 0.0])),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(
            cosine_similarity(&ev(&[1.0]), &ev(&[1.0, 0.0])),
            Err(Error::Argument(_))
        ));
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn cosine_in_f32() {
        let u = EmbeddingVector::<f32>::new(vec![1.0, 1.0]).unwrap();
        let v = EmbeddingVector::<f32>::new(vec![1.0, 0.0]).unwrap();
        assert!((cosine_similarity(&u, &v).unwrap() - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    fn conv_of(n: usize) -> Conversation {
        let turns = (0..n)
            .map(|i| Turn {
                turn_id: i,
                speaker_id: format!("S{}", i % 3),
                role: SpeakerRole::Participant,
                words: format!("turn {i}"),
                start_time: None,
                end_time: None,
                extra: Default::default(),
            })
            .collect();
        Conversation::from_utterances("c", Default::default(), turns).unwrap()
    }

    #[test]
    fn threshold_selects_window_links() {
        // turn 3 against turns 0..3 with similarities 0.3, 0.55, 0.7
        let conv = conv_of(4);
        let angle = |c: f64| ev(&[c, (1.0 - c * c).sqrt()]);
        let mut emb = BTreeMap::new();
        emb.insert(3, ev(&[1.0, 0.0]));
        emb.insert(0, angle(0.3));
        emb.insert(1, angle(0.55));
        emb.insert(2, angle(0.7));
        let cfg = SimilarityConfig::default();
        let run = link_by_similarity(&conv, &emb, &cfg).unwrap();
        assert_eq!(run.table.targets(3).into_iter().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn unit_threshold_links_only_duplicates() {
        let conv = conv_of(4);
        let mut emb = BTreeMap::new();
        emb.insert(0, ev(&[1.0, 2.0, 3.0]));
        emb.insert(1, ev(&[3.0, 1.0, 0.0]));
        emb.insert(2, ev(&[0.0, 1.0, 5.0]));
        emb.insert(3, ev(&[1.0, 2.0, 3.0]));
        let cfg = SimilarityConfig::new(1.0, WindowConfig::default(), true).unwrap();
        let run = link_by_similarity(&conv, &emb, &cfg).unwrap();
        assert_eq!(run.table.link_count(), 1);
        assert!(run.table.get(3, 0).is_some());
    }

    #[test]
    fn single_turn_and_missing_embedding() {
        let conv = conv_of(1);
        let mut emb = BTreeMap::new();
        emb.insert(0, ev(&[1.0]));
        let run = link_by_similarity(&conv, &emb, &SimilarityConfig::default()).unwrap();
        assert_eq!(run.table.link_count(), 0);
        let conv = conv_of(2);
        assert!(matches!(
            link_by_similarity(&conv, &emb, &SimilarityConfig::default()),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn threshold_range_enforced() {
        assert!(SimilarityConfig::new(-1.0, WindowConfig::default(), true).is_err());
        assert!(SimilarityConfig::new(1.01, WindowConfig::default(), true).is_err());
        assert!(SimilarityConfig::new(-0.99, WindowConfig::default(), true).is_ok());
    }
}
