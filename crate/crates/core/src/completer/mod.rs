//! Hard-constraint completion: the model distribution is restricted to words
//! whose typing form starts with the typed characters and renormalized.

mod prefix_index;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

pub use prefix_index::PrefixIndex;

use crate::benchmark::ContextType;
use crate::corpus::{Sentence, Vocabulary};
use crate::wpm::{ModelError, WpmModel};

#[derive(Debug, Error)]
pub enum CompleteError {
    #[error("no vocabulary word starts with {0:?}")]
    EmptyCandidate(String),
    #[error("typed characters must not be empty")]
    EmptyTyped,
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("no model for {0} context")]
    MissingModel(ContextType),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Suggestion {
    #[serde(skip)]
    pub id: u32,
    pub word: String,
    pub score: f64,
}

/// Keeps the candidates for `typed`, divides by their total mass and sorts
/// by score (descending), then id (ascending).
pub fn filter_and_renormalize(
    dist: &[f64],
    typed: &str,
    index: &PrefixIndex,
    vocab: &Vocabulary,
) -> Result<Vec<Suggestion>, CompleteError> {
    if typed.is_empty() {
        return Err(CompleteError::EmptyTyped);
    }
    let ids = index.lookup(typed);
    if ids.is_empty() {
        return Err(CompleteError::EmptyCandidate(typed.to_owned()));
    }
    let z: f64 = ids.iter().map(|&id| dist[id as usize]).sum();
    let mut out: Vec<Suggestion> = ids
        .iter()
        .map(|&id| Suggestion {
            id,
            word: vocab.surface(id).expect("indexed id").to_owned(),
            score: if z > 0.0 {
                dist[id as usize] / z
            } else {
                1.0 / ids.len() as f64
            },
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    Ok(out)
}

/// One model for every context type, or one per type.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSet {
    Joint(WpmModel),
    Separate(BTreeMap<ContextType, WpmModel>),
}

impl ModelSet {
    pub fn model_for(&self, ctype: ContextType) -> Result<&WpmModel, CompleteError> {
        match self {
            ModelSet::Joint(m) => Ok(m),
            ModelSet::Separate(map) => map.get(&ctype).ok_or(CompleteError::MissingModel(ctype)),
        }
    }
}

/// Everything needed to answer completion queries. Immutable once built.
#[derive(Clone, Debug)]
pub struct Completer {
    pub models: ModelSet,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub index: PrefixIndex,
}

impl Completer {
    pub fn new(models: ModelSet, src_vocab: Vocabulary, tgt_vocab: Vocabulary, index: PrefixIndex) -> Self {
        Self {
            models,
            src_vocab,
            tgt_vocab,
            index,
        }
    }

    /// Model distribution over the target vocabulary; the model is chosen
    /// by the shape of the context.
    pub fn distribution(&self, src: &Sentence, left: &Sentence, right: &Sentence) -> Result<Vec<f64>, CompleteError> {
        let model = self.models.model_for(ContextType::of(left, right))?;
        let dist = model.predict_distribution(
            &self.src_vocab.encode(src),
            &self.tgt_vocab.encode(left),
            &self.tgt_vocab.encode(right),
        )?;
        Ok(dist)
    }

    /// Ranked suggestions; the first one is the constrained argmax.
    pub fn complete(
        &self,
        src: &Sentence,
        left: &Sentence,
        right: &Sentence,
        typed: &str,
        top_k: usize,
    ) -> Result<Vec<Suggestion>, CompleteError> {
        if top_k == 0 {
            return Err(CompleteError::ZeroTopK);
        }
        if typed.is_empty() {
            return Err(CompleteError::EmptyTyped);
        }
        let dist = self.distribution(src, left, right)?;
        let mut out = filter_and_renormalize(&dist, typed, &self.index, &self.tgt_vocab)?;
        out.truncate(top_k);
        Ok(out)
    }

    /// Top-1 word, `None` when nothing matches.
    pub fn predict(&self, src: &Sentence, left: &Sentence, right: &Sentence, typed: &str) -> Result<Option<String>, CompleteError> {
        match self.complete(src, left, right, typed, 1) {
            Ok(mut s) => Ok(s.pop().map(|s| s.word)),
            Err(CompleteError::EmptyCandidate(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::Romanizer;
    use crate::rng::{below, stream_rng, unit};
    use proptest::prelude::*;

    fn small() -> (Vocabulary, PrefixIndex) {
        let v = Vocabulary::from_surfaces(["the", "this", "cat"]);
        let idx = PrefixIndex::build(&v, &Romanizer::Identity, false);
        (v, idx)
    }

    fn dist_for(v: &Vocabulary, probs: &[(&str, f64)]) -> Vec<f64> {
        let mut d = vec![0.0; v.len()];
        for &(w, p) in probs {
            d[v.id(w).unwrap() as usize] = p;
        }
        d
    }

    #[test]
    fn lookup_by_prefix() {
        let (v, idx) = small();
        let got: Vec<&str> = idx.lookup("th").iter().map(|&i| v.surface(i).unwrap()).collect();
        assert_eq!(got, vec!["the", "this"]);
        assert!(idx.lookup("z").is_empty());
        assert_eq!(idx.lookup("").len(), 3);
    }

    #[test]
    fn renormalizes_candidates() {
        let (v, idx) = small();
        let d = dist_for(&v, &[("the", 0.5), ("this", 0.3), ("cat", 0.2)]);
        let s = filter_and_renormalize(&d, "th", &idx, &v).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].word, "the");
        assert!((s[0].score - 0.625).abs() < 1e-12);
        assert_eq!(s[1].word, "this");
        assert!((s[1].score - 0.375).abs() < 1e-12);

        let s = filter_and_renormalize(&d, "ca", &idx, &v).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].word.as_str(), s[0].score), ("cat", 1.0));
    }

    #[test]
    fn no_candidate() {
        let (v, idx) = small();
        let d = dist_for(&v, &[("the", 1.0)]);
        assert!(matches!(
            filter_and_renormalize(&d, "q", &idx, &v),
            Err(CompleteError::EmptyCandidate(_))
        ));
        assert!(matches!(filter_and_renormalize(&d, "", &idx, &v), Err(CompleteError::EmptyTyped)));
    }

    #[test]
    fn ties_break_by_id() {
        let (v, idx) = small();
        let d = dist_for(&v, &[("the", 0.4), ("this", 0.4), ("cat", 0.2)]);
        let s = filter_and_renormalize(&d, "t", &idx, &v).unwrap();
        assert_eq!(s[0].id, v.id("the").unwrap());
    }

    #[test]
    fn case_folding_is_opt_in() {
        let v = Vocabulary::from_surfaces(["Paris", "parade"]);
        let exact = PrefixIndex::build(&v, &Romanizer::Identity, false);
        assert_eq!(exact.lookup("pa").len(), 1);
        let folded = PrefixIndex::build(&v, &Romanizer::Identity, true);
        assert_eq!(folded.lookup("pa").len(), 2);
        assert_eq!(folded.lookup("PA").len(), 2);
    }

    #[test]
    fn logographic_words_match_on_pinyin() {
        let v = Vocabulary::from_surfaces(["专家", "专业", "意见", "猫"]);
        let idx = PrefixIndex::build(&v, &Romanizer::demo_pinyin(), false);
        let got: Vec<&str> = idx.lookup("zhuan").iter().map(|&i| v.surface(i).unwrap()).collect();
        assert_eq!(got, vec!["专家", "专业"]);
        // uncovered word falls back to its surface
        assert_eq!(idx.lookup("猫").len(), 1);
    }

    fn random_word(r: &mut crate::rng::StreamRng) -> String {
        let len = 1 + below(r, 7);
        (0..len).map(|_| (b'a' + below(r, 5) as u8) as char).collect()
    }

    #[test]
    fn lookup_matches_linear_scan() {
        let mut r = stream_rng(77, 0);
        let words: Vec<String> = (0..5000).map(|_| random_word(&mut r)).collect();
        let v = Vocabulary::from_surfaces(words);
        let idx = PrefixIndex::build(&v, &Romanizer::Identity, false);
        for _ in 0..1000 {
            let prefix: String = random_word(&mut r).chars().take(1 + below(&mut r, 3)).collect();
            let scan: Vec<u32> = v
                .word_ids()
                .filter(|&id| v.surface(id).unwrap().starts_with(&prefix))
                .collect();
            assert_eq!(idx.lookup(&prefix), scan.as_slice());
        }
    }

    /// Constrained scores computed over the whole vocabulary.
    fn brute_force(dist: &[f64], typed: &str, v: &Vocabulary) -> Vec<(u32, f64)> {
        let z: f64 = v
            .word_ids()
            .filter(|&id| v.surface(id).unwrap().starts_with(typed))
            .map(|id| dist[id as usize])
            .sum();
        let mut out: Vec<(u32, f64)> = v
            .word_ids()
            .map(|id| {
                let p = if v.surface(id).unwrap().starts_with(typed) { dist[id as usize] / z } else { 0.0 };
                (id, p)
            })
            .filter(|&(_, p)| p > 0.0)
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    #[test]
    fn renormalization_matches_brute_force() {
        let mut r = stream_rng(5, 0);
        let words: Vec<String> = (0..300).map(|_| random_word(&mut r)).collect();
        let v = Vocabulary::from_surfaces(words);
        let idx = PrefixIndex::build(&v, &Romanizer::Identity, false);
        let mut checked = 0;
        while checked < 1000 {
            let mut d: Vec<f64> = (0..v.len()).map(|_| unit(&mut r) + 1e-3).collect();
            let z: f64 = d.iter().sum();
            d.iter_mut().for_each(|p| *p /= z);
            let typed: String = random_word(&mut r).chars().take(1 + below(&mut r, 2)).collect();
            let expected = brute_force(&d, &typed, &v);
            match filter_and_renormalize(&d, &typed, &idx, &v) {
                Ok(got) => {
                    let got: Vec<(u32, f64)> = got.iter().map(|s| (s.id, s.score)).collect();
                    assert_eq!(got, expected);
                    let total: f64 = got.iter().map(|g| g.1).sum();
                    assert!((total - 1.0).abs() < 1e-6);
                }
                Err(CompleteError::EmptyCandidate(_)) => assert!(expected.is_empty()),
                Err(e) => panic!("{e}"),
            }
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn common_scale_keeps_ranking(probs in prop::collection::vec(0.001f64..1.0, 3), scale in 0.01f64..100.0) {
            let (v, idx) = small();
            let d = dist_for(&v, &[("the", probs[0]), ("this", probs[1]), ("cat", probs[2])]);
            let scaled: Vec<f64> = d.iter().map(|p| p * scale).collect();
            let a = filter_and_renormalize(&d, "t", &idx, &v).unwrap();
            let b = filter_and_renormalize(&scaled, "t", &idx, &v).unwrap();
            prop_assert_eq!(a.iter().map(|s| s.id).collect::<Vec<_>>(), b.iter().map(|s| s.id).collect::<Vec<_>>());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.score - y.score).abs() < 1e-12);
            }
        }

        #[test]
        fn every_suggestion_starts_with_typed(seed in any::<u64>()) {
            let mut r = stream_rng(seed, 0);
            let words: Vec<String> = (0..50).map(|_| random_word(&mut r)).collect();
            let v = Vocabulary::from_surfaces(words);
            let idx = PrefixIndex::build(&v, &Romanizer::Identity, false);
            let d = vec![1.0 / v.len() as f64; v.len()];
            let typed: String = random_word(&mut r).chars().take(1).collect();
            if let Ok(s) = filter_and_renormalize(&d, &typed, &idx, &v) {
                for sug in s {
                    prop_assert!(sug.word.starts_with(&typed));
                }
            }
        }
    }
}
