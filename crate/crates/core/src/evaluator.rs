//! Accuracy scoring and the noisy-context robustness protocol.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{ContextType, GwlanExample, Romanizer};
use crate::completer::Completer;
use crate::corpus::{Sentence, Vocabulary};
use crate::rng::{below, derive_seed, stream_rng, unit, StreamRng};
use crate::transtable::{noise_alternatives, predict_baseline, TranslationTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("{predictions} predictions for {golds} gold words")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("noise ratio {0} outside [0, 1]")]
    Ratio(String),
    #[error("ratios must be sorted ascending")]
    Unsorted,
}

/// Fraction of exact surface matches.
pub fn accuracy<P: AsRef<str>, G: AsRef<str>>(predictions: &[P], golds: &[G]) -> Result<f64, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if golds.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = predictions.iter().zip(golds).filter(|(p, g)| p.as_ref() == g.as_ref()).count();
    Ok(hits as f64 / golds.len() as f64)
}

/// Anything that proposes one word for an example. `None` means no
/// candidate, which scores as wrong.
pub trait Predictor {
    fn predict_word(&self, ex: &GwlanExample) -> Option<String>;
}

impl Predictor for Completer {
    fn predict_word(&self, ex: &GwlanExample) -> Option<String> {
        match self.predict(&ex.src, &ex.left, &ex.right, &ex.typed) {
            Ok(w) => w,
            Err(e) => {
                log::debug!("prediction failed: {e}");
                None
            }
        }
    }
}

/// The alignment-table baseline as a predictor. Ignores the context.
pub struct TableBaseline<'a> {
    pub table: &'a TranslationTable,
    pub romanizer: &'a Romanizer,
}

impl Predictor for TableBaseline<'_> {
    fn predict_word(&self, ex: &GwlanExample) -> Option<String> {
        predict_baseline(&ex.src, &ex.typed, self.table, self.romanizer).ok()
    }
}

impl<F: Fn(&GwlanExample) -> Option<String>> Predictor for F {
    fn predict_word(&self, ex: &GwlanExample) -> Option<String> {
        self(ex)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub n_all: usize,
    pub n_match: usize,
    pub accuracy: f64,
}

/// Scores per context type plus their unweighted mean over the types that
/// occur in the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub per_type: BTreeMap<ContextType, TypeScore>,
    pub average: f64,
}

impl EvalReport {
    pub fn accuracy(&self, ctype: ContextType) -> Option<f64> {
        self.per_type.get(&ctype).map(|s| s.accuracy)
    }

    /// Population variance of the per-type accuracies.
    pub fn variance(&self) -> f64 {
        let n = self.per_type.len() as f64;
        self.per_type.values().map(|s| (s.accuracy - self.average).powi(2)).sum::<f64>() / n
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Top-1 exact-match accuracy grouped by context type.
pub fn evaluate<P: Predictor + ?Sized>(predictor: &P, dataset: &[GwlanExample]) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts: BTreeMap<ContextType, (usize, usize)> = BTreeMap::new();
    for ex in dataset {
        let slot = counts.entry(ex.ctype).or_default();
        slot.0 += 1;
        if predictor.predict_word(ex).as_deref() == Some(ex.target.as_str()) {
            slot.1 += 1;
        }
    }
    let per_type: BTreeMap<ContextType, TypeScore> = counts
        .into_iter()
        .map(|(t, (n_all, n_match))| {
            let s = TypeScore {
                n_all,
                n_match,
                accuracy: n_match as f64 / n_all as f64,
            };
            (t, s)
        })
        .collect();
    let average = per_type.values().map(|s| s.accuracy).sum::<f64>() / per_type.len() as f64;
    Ok(EvalReport { per_type, average })
}

fn corrupt_piece(piece: &Sentence, ratio: f64, table: &TranslationTable, vocab: &Vocabulary, rng: &mut StreamRng) -> Sentence {
    if piece.is_empty() {
        return piece.clone();
    }
    let tokens: Vec<String> = piece
        .iter()
        .map(|tok| {
            if unit(rng) >= ratio {
                return tok.to_owned();
            }
            let alts = noise_alternatives(tok, table);
            if !alts.is_empty() {
                return alts[below(rng, alts.len())].clone();
            }
            let pool: Vec<u32> = vocab.word_ids().filter(|&id| vocab.surface(id) != Some(tok)).collect();
            if pool.is_empty() {
                tok.to_owned()
            } else {
                vocab.surface(pool[below(rng, pool.len())]).expect("id").to_owned()
            }
        })
        .collect();
    Sentence::new(tokens).expect("tokens come from valid sentences")
}

/// Replaces each context token with probability `ratio` by a word sharing a
/// source word with it, or by another vocabulary word when the table has
/// none. Only the context changes.
pub fn corrupt_context(
    ex: &GwlanExample,
    ratio: f64,
    table: &TranslationTable,
    vocab: &Vocabulary,
    rng: &mut StreamRng,
) -> GwlanExample {
    let left = corrupt_piece(&ex.left, ratio, table, vocab, rng);
    let right = corrupt_piece(&ex.right, ratio, table, vocab, rng);
    GwlanExample {
        left,
        right,
        ..ex.clone()
    }
}

pub fn ratio_key(ratio: f64) -> String {
    format!("{ratio:.2}")
}

/// Evaluates the fixed predictor on corrupted copies of the dataset at each
/// ratio. Example `i` at ratio `r` draws from its own stream, so a ratio's
/// report does not depend on which other ratios are requested.
pub fn robustness_curve<P: Predictor + ?Sized>(
    predictor: &P,
    dataset: &[GwlanExample],
    ratios: &[f64],
    table: &TranslationTable,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<BTreeMap<String, EvalReport>, EvalError> {
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(EvalError::Ratio(r.to_string()));
    }
    if ratios.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvalError::Unsorted);
    }
    let mut out = BTreeMap::new();
    for &ratio in ratios {
        let rseed = derive_seed(seed, ratio.to_bits());
        let noisy: Vec<GwlanExample> = dataset
            .iter()
            .enumerate()
            .map(|(i, ex)| corrupt_context(ex, ratio, table, vocab, &mut stream_rng(rseed, i as u64)))
            .collect();
        out.insert(ratio_key(ratio), evaluate(predictor, &noisy)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(ctype: ContextType, left: &str, right: &str, target: &str) -> GwlanExample {
        GwlanExample {
            src: Sentence::parse("a b c"),
            left: Sentence::parse(left),
            right: Sentence::parse(right),
            typed: target[..1].to_owned(),
            target: target.to_owned(),
            ctype,
        }
    }

    fn dataset() -> Vec<GwlanExample> {
        vec![
            ex(ContextType::Zero, "", "", "cat"),
            ex(ContextType::Prefix, "the", "", "cat"),
            ex(ContextType::Suffix, "", "sat on", "dog"),
            ex(ContextType::Bi, "the", "sat", "mat"),
            ex(ContextType::Bi, "a", "ran", "dog"),
        ]
    }

    #[test]
    fn accuracy_counts_exact_matches() {
        assert_eq!(accuracy(&["a", "b", "c", "d"], &["a", "b", "x", "y"]), Ok(0.5));
        assert_eq!(accuracy(&["a"], &["a"]), Ok(1.0));
        assert_eq!(accuracy(&["A"], &["a"]), Ok(0.0));
        assert_eq!(accuracy::<&str, &str>(&[], &[]), Err(EvalError::Empty));
        assert!(matches!(accuracy(&["a"], &["a", "b"]), Err(EvalError::LengthMismatch { .. })));
    }

    proptest! {
        #[test]
        fn accuracy_matches_scan(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..60)) {
            let p: Vec<String> = pairs.iter().map(|x| x.0.to_string()).collect();
            let g: Vec<String> = pairs.iter().map(|x| x.1.to_string()).collect();
            let mut hits = 0usize;
            for i in 0..p.len() {
                if p[i] == g[i] {
                    hits += 1;
                }
            }
            let acc = accuracy(&p, &g).unwrap();
            prop_assert_eq!(acc, hits as f64 / p.len() as f64);
            prop_assert!((acc * p.len() as f64 - hits as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_and_wrong_predictors() {
        let ds = dataset();
        let oracle = |e: &GwlanExample| Some(e.target.clone());
        let r = evaluate(&oracle, &ds).unwrap();
        assert!(r.per_type.values().all(|s| s.accuracy == 1.0));
        assert_eq!(r.average, 1.0);
        assert_eq!(r.per_type[&ContextType::Bi].n_all, 2);
        let wrong = |_: &GwlanExample| Some("zzz".to_owned());
        let r = evaluate(&wrong, &ds).unwrap();
        assert_eq!(r.average, 0.0);
        let none = |_: &GwlanExample| None;
        assert_eq!(evaluate(&none, &ds).unwrap().average, 0.0);
        assert_eq!(evaluate(&none, &[]), Err(EvalError::Empty));
    }

    #[test]
    fn report_average_is_macro() {
        let ds = dataset();
        let half = |e: &GwlanExample| (e.target != "mat").then(|| e.target.clone());
        let r = evaluate(&half, &ds).unwrap();
        assert_eq!(r.accuracy(ContextType::Bi), Some(0.5));
        assert!((r.average - 3.5 / 4.0).abs() < 1e-15);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["bi"]["n_match"], 1);
        assert_eq!(json["average"], 0.875);
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    fn noise_fixture() -> (TranslationTable, Vocabulary) {
        let table = TranslationTable::from_entries([
            ("le".to_owned(), vec![("the".to_owned(), 5), ("a".to_owned(), 2)]),
            ("chat".to_owned(), vec![("cat".to_owned(), 3), ("kitty".to_owned(), 1)]),
            ("tapis".to_owned(), vec![("mat".to_owned(), 3), ("rug".to_owned(), 1)]),
            ("assis".to_owned(), vec![("sat".to_owned(), 3), ("seated".to_owned(), 1)]),
        ]);
        let vocab = Vocabulary::from_surfaces(["the", "a", "cat", "kitty", "mat", "rug", "sat", "seated", "on", "dog", "ran"]);
        (table, vocab)
    }

    #[test]
    fn zero_ratio_is_identity_and_full_ratio_changes_everything() {
        let (table, vocab) = noise_fixture();
        let mut r = stream_rng(1, 0);
        for e in dataset() {
            assert_eq!(corrupt_context(&e, 0.0, &table, &vocab, &mut r), e);
            let c = corrupt_context(&e, 1.0, &table, &vocab, &mut r);
            assert_eq!((&c.src, &c.typed, &c.target, c.ctype), (&e.src, &e.typed, &e.target, e.ctype));
            assert_eq!(c.left.len(), e.left.len());
            for (a, b) in c.left.iter().chain(c.right.iter()).zip(e.left.iter().chain(e.right.iter())) {
                assert_ne!(a, b);
            }
        }
        let e = ex(ContextType::Bi, "the", "sat", "mat");
        let c = corrupt_context(&e, 1.0, &table, &vocab, &mut r);
        assert_eq!(c.left.tokens(), ["a"]);
        assert_eq!(c.right.tokens(), ["seated"]);
    }

    #[test]
    fn replacement_rate_follows_ratio() {
        let (table, vocab) = noise_fixture();
        let e = ex(ContextType::Bi, "the cat sat on", "the mat ran dog", "x");
        let mut r = stream_rng(2, 0);
        let (mut changed, mut total) = (0usize, 0usize);
        while total < 100_000 {
            let c = corrupt_context(&e, 0.3, &table, &vocab, &mut r);
            for (a, b) in c.left.iter().chain(c.right.iter()).zip(e.left.iter().chain(e.right.iter())) {
                total += 1;
                changed += usize::from(a != b);
            }
        }
        let rate = changed as f64 / total as f64;
        assert!((rate - 0.3).abs() < 0.01, "{rate}");
    }

    #[test]
    fn robustness_at_zero_matches_plain_evaluation() {
        let (table, vocab) = noise_fixture();
        let ds = dataset();
        let sees_context = |e: &GwlanExample| (e.left.get(0) == Some("the")).then(|| e.target.clone());
        let curve = robustness_curve(&sees_context, &ds, &[0.0, 0.5, 1.0], &table, &vocab, 3).unwrap();
        assert_eq!(curve["0.00"], evaluate(&sees_context, &ds).unwrap());
        assert_eq!(curve["1.00"].accuracy(ContextType::Prefix), Some(0.0));
        assert_eq!(curve, robustness_curve(&sees_context, &ds, &[0.0, 0.5, 1.0], &table, &vocab, 3).unwrap());
        let only_half = robustness_curve(&sees_context, &ds, &[0.5], &table, &vocab, 3).unwrap();
        assert_eq!(only_half["0.50"], curve["0.50"]);
        assert_eq!(
            robustness_curve(&sees_context, &ds, &[0.5, 0.2], &table, &vocab, 3),
            Err(EvalError::Unsorted)
        );
        assert!(robustness_curve(&sees_context, &ds, &[1.5], &table, &vocab, 3).is_err());
    }

    #[test]
    fn table_baseline_ignores_context() {
        let (table, _) = noise_fixture();
        let rom = Romanizer::Identity;
        let p = TableBaseline { table: &table, romanizer: &rom };
        let mut e = ex(ContextType::Zero, "", "", "cat");
        e.src = Sentence::parse("le chat");
        let zero = p.predict_word(&e);
        e.left = Sentence::parse("the");
        e.ctype = ContextType::Prefix;
        assert_eq!(p.predict_word(&e), zero);
        assert_eq!(zero.as_deref(), Some("cat"));
    }
}
