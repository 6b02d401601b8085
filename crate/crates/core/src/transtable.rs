//! Alignment-table baseline.
//!
//! Lexical translation probabilities `t(target | source)` are estimated with
//! IBM Model 1 EM. Each target token is then linked to its most probable
//! source token and the links are counted into a word translation table.
//! Prediction takes the translations of every source word, keeps those whose
//! typing form starts with the typed characters and returns the most
//! frequent one. The same table supplies plausible wrong words for the
//! noisy-context experiments.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::Romanizer;
use crate::corpus::{build_vocab, ParallelCorpus, Sentence, Vocabulary};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot train an alignment model on an empty corpus")]
    EmptyCorpus,
    #[error("em_iters must be at least 1")]
    NoIterations,
    #[error("threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("no translation candidate starts with {0:?}")]
    NoCandidate(String),
    #[error("unknown frequency mode {0:?}")]
    FreqMode(String),
    #[error("malformed table line {line}")]
    Format { line: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// IBM Model 1 lexical probabilities over co-occurring word pairs.
#[derive(Clone, Debug)]
pub struct AlignmentModel {
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    /// (source id, target id) -> t(target | source)
    probs: HashMap<(u32, u32), f64>,
    /// Corpus log-likelihood before each EM update.
    history: Vec<f64>,
}

impl AlignmentModel {
    pub fn prob(&self, source: &str, target: &str) -> f64 {
        match (self.src_vocab.id(source), self.tgt_vocab.id(target)) {
            (Some(s), Some(t)) => self.probs.get(&(s, t)).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Log-likelihood of the corpus before each iteration's update.
    pub fn likelihood_history(&self) -> &[f64] {
        &self.history
    }

    /// `Σ_pairs Σ_j ln( (1/l) Σ_i t(y_j | x_i) )`, the Model 1 likelihood up
    /// to a length term that does not depend on `t`.
    pub fn log_likelihood(&self, corpus: &ParallelCorpus) -> f64 {
        let mut ll = 0.0;
        for (src, tgt) in corpus.pairs() {
            let s = self.src_vocab.encode(src);
            for t in self.tgt_vocab.encode(tgt) {
                let mass: f64 = s.iter().map(|&e| self.probs.get(&(e, t)).copied().unwrap_or(0.0)).sum();
                ll += (mass / s.len() as f64).ln();
            }
        }
        ll
    }

    /// Sum of `t(· | source)` over all targets; 1 for every seen source.
    pub fn source_mass(&self, source: &str) -> f64 {
        let Some(s) = self.src_vocab.id(source) else {
            return 0.0;
        };
        self.probs.iter().filter(|((e, _), _)| *e == s).map(|(_, p)| p).sum()
    }

    pub fn source_words(&self) -> impl Iterator<Item = &str> {
        self.src_vocab.word_ids().map(|id| self.src_vocab.surface(id).expect("id"))
    }
}

/// Runs `em_iters` EM iterations from uniform probabilities. Deterministic.
pub fn train_alignment(corpus: &ParallelCorpus, em_iters: usize) -> Result<AlignmentModel, TableError> {
    if corpus.is_empty() {
        return Err(TableError::EmptyCorpus);
    }
    if em_iters == 0 {
        return Err(TableError::NoIterations);
    }
    let src_vocab = build_vocab(corpus.sources(), 1, usize::MAX);
    let tgt_vocab = build_vocab(corpus.targets(), 1, usize::MAX);
    let encoded: Vec<(Vec<u32>, Vec<u32>)> = corpus
        .pairs()
        .iter()
        .map(|(s, t)| (src_vocab.encode(s), tgt_vocab.encode(t)))
        .collect();

    let uniform = 1.0 / tgt_vocab.word_ids().count() as f64;
    let mut probs: HashMap<(u32, u32), f64> = HashMap::new();
    for (s, t) in &encoded {
        for &e in s {
            for &f in t {
                probs.insert((e, f), uniform);
            }
        }
    }

    let mut model = AlignmentModel {
        src_vocab,
        tgt_vocab,
        probs,
        history: Vec::with_capacity(em_iters),
    };
    for _ in 0..em_iters {
        model.history.push(model.log_likelihood(corpus));
        let mut counts: HashMap<(u32, u32), f64> = HashMap::with_capacity(model.probs.len());
        let mut totals: HashMap<u32, f64> = HashMap::new();
        for (s, t) in &encoded {
            for &f in t {
                let denom: f64 = s.iter().map(|&e| model.probs[&(e, f)]).sum();
                for &e in s {
                    let delta = model.probs[&(e, f)] / denom;
                    *counts.entry((e, f)).or_default() += delta;
                    *totals.entry(e).or_default() += delta;
                }
            }
        }
        for (key, p) in model.probs.iter_mut() {
            *p = counts.get(key).copied().unwrap_or(0.0) / totals[&key.0];
        }
    }
    Ok(model)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreqMode {
    /// Number of Viterbi links between the two words.
    #[default]
    Links,
    /// Corpus frequency of the target word.
    Unigram,
}

impl FromStr for FreqMode {
    type Err = TableError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "links" => Ok(FreqMode::Links),
            "unigram" => Ok(FreqMode::Unigram),
            other => Err(TableError::FreqMode(other.to_owned())),
        }
    }
}

/// Source word -> target words with counts, sorted by count (descending)
/// then target surface.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TranslationTable {
    entries: BTreeMap<String, Vec<(String, u64)>>,
    sources_of: HashMap<String, Vec<String>>,
}

impl TranslationTable {
    pub fn from_entries<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (String, Vec<(String, u64)>)>,
    {
        let mut map: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for (src, list) in entries {
            let slot = map.entry(src).or_default();
            for (tgt, c) in list {
                if c > 0 {
                    *slot.entry(tgt).or_default() += c;
                }
            }
        }
        let mut entries = BTreeMap::new();
        let mut sources_of: HashMap<String, Vec<String>> = HashMap::new();
        for (src, targets) in map {
            if targets.is_empty() {
                continue;
            }
            let mut list: Vec<(String, u64)> = targets.into_iter().collect();
            list.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            for (t, _) in &list {
                sources_of.entry(t.clone()).or_default().push(src.clone());
            }
            entries.insert(src, list);
        }
        Self { entries, sources_of }
    }

    pub fn get(&self, source: &str) -> Option<&[(String, u64)]> {
        self.entries.get(source).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(String, u64)])> {
        self.entries.iter().map(|(s, l)| (s.as_str(), l.as_slice()))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (src, list) in &self.entries {
            for (tgt, c) in list {
                writeln!(w, "{src}\t{tgt}\t{c}")?;
            }
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        self.write_to(io::BufWriter::new(fs::File::create(path)?))
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, TableError> {
        let mut entries: Vec<(String, Vec<(String, u64)>)> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(s), Some(t), Some(c), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(TableError::Format { line: i + 1 });
            };
            let c: u64 = c.parse().map_err(|_| TableError::Format { line: i + 1 })?;
            entries.push((s.to_owned(), vec![(t.to_owned(), c)]));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn load(path: &Path) -> Result<Self, TableError> {
        Self::read_from(BufReader::new(fs::File::open(path)?))
    }
}

/// Links each target token to its most probable source token (first one on
/// ties) and counts links whose probability reaches `threshold`.
pub fn build_table(
    corpus: &ParallelCorpus,
    model: &AlignmentModel,
    threshold: f64,
    freq_mode: FreqMode,
) -> Result<TranslationTable, TableError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(TableError::Threshold(threshold));
    }
    let mut links: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    let mut unigram: HashMap<&str, u64> = HashMap::new();
    for (src, tgt) in corpus.pairs() {
        for f in tgt.iter() {
            *unigram.entry(f).or_default() += 1;
            let mut best: Option<(&str, f64)> = None;
            for e in src.iter() {
                let p = model.prob(e, f);
                if best.map_or(true, |(_, bp)| p > bp) {
                    best = Some((e, p));
                }
            }
            if let Some((e, p)) = best {
                if p >= threshold {
                    *links.entry((e, f)).or_default() += 1;
                }
            }
        }
    }
    let entries = links.into_iter().map(|((e, f), c)| {
        let count = match freq_mode {
            FreqMode::Links => c,
            FreqMode::Unigram => unigram[f],
        };
        (e.to_owned(), vec![(f.to_owned(), count)])
    });
    Ok(TranslationTable::from_entries(entries))
}

fn typing_form<'a>(rom: &'a Romanizer, word: &'a str) -> std::borrow::Cow<'a, str> {
    rom.typing_form(word).unwrap_or(std::borrow::Cow::Borrowed(word))
}

/// Most frequent translation of any source word whose typing form starts
/// with `typed`. Ignores the translation context entirely.
pub fn predict_baseline(
    src: &Sentence,
    typed: &str,
    table: &TranslationTable,
    rom: &Romanizer,
) -> Result<String, TableError> {
    let mut candidates: BTreeMap<&str, u64> = BTreeMap::new();
    for word in src.iter() {
        for (t, c) in table.get(word).unwrap_or(&[]) {
            let slot = candidates.entry(t.as_str()).or_default();
            *slot = (*slot).max(*c);
        }
    }
    candidates
        .into_iter()
        .filter(|(t, _)| typing_form(rom, t).starts_with(typed))
        // BTreeMap order makes the first maximum the lexicographically smallest
        .fold(None::<(&str, u64)>, |best, (t, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((t, c)),
        })
        .map(|(t, _)| t.to_owned())
        .ok_or_else(|| TableError::NoCandidate(typed.to_owned()))
}

/// Other translations of the source words that translate to `word`.
pub fn noise_alternatives(word: &str, table: &TranslationTable) -> Vec<String> {
    let mut out = BTreeSet::new();
    for src in table.sources_of.get(word).map(Vec::as_slice).unwrap_or(&[]) {
        for (t, _) in table.get(src).unwrap_or(&[]) {
            if t != word {
                out.insert(t.clone());
            }
        }
    }
    out.into_iter().collect()
}
