//! Benchmark construction: turns a parallel corpus into word-level
//! autocompletion examples for each of the four context types.
//!
//! For a reference translation `y` one target word `y[k]` is drawn, then
//! context pieces are cut from `y` to the left and/or right of `k` (not
//! necessarily adjacent to it), and a typed prefix of the word's typing form
//! simulates what the translator has entered so far.

mod romanizer;

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use romanizer::Romanizer;

use crate::corpus::{ParallelCorpus, Sentence};
use crate::rng;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("no eligible target word in sentence")]
    NoTarget,
    #[error("{ctype} context cannot be cut around position {k} of a {len}-token sentence")]
    ContextInfeasible {
        ctype: ContextType,
        k: usize,
        len: usize,
    },
    #[error("unknown context type {0:?}")]
    UnknownContextType(String),
    #[error("malformed romanizer table at line {line}")]
    RomanizerFormat { line: usize },
    #[error("dataset line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("dataset line {line}: {reason}")]
    InvalidExample { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextType {
    Zero,
    Prefix,
    Suffix,
    Bi,
}

impl ContextType {
    pub const ALL: [ContextType; 4] = [
        ContextType::Zero,
        ContextType::Prefix,
        ContextType::Suffix,
        ContextType::Bi,
    ];

    pub fn of(left: &Sentence, right: &Sentence) -> Self {
        match (left.is_empty(), right.is_empty()) {
            (true, true) => ContextType::Zero,
            (false, true) => ContextType::Prefix,
            (true, false) => ContextType::Suffix,
            (false, false) => ContextType::Bi,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContextType::Zero => "zero",
            ContextType::Prefix => "prefix",
            ContextType::Suffix => "suffix",
            ContextType::Bi => "bi",
        }
    }

    pub fn index(self) -> u64 {
        self as u64
    }

    fn needs_left(self) -> bool {
        matches!(self, ContextType::Prefix | ContextType::Bi)
    }

    fn needs_right(self) -> bool {
        matches!(self, ContextType::Suffix | ContextType::Bi)
    }
}

impl fmt::Display for ContextType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContextType {
    type Err = BenchmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ContextType::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| BenchmarkError::UnknownContextType(s.to_owned()))
    }
}

/// One task instance: source sentence, left/right translation context, typed
/// characters and the gold word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GwlanExample {
    pub src: Sentence,
    pub left: Sentence,
    pub right: Sentence,
    pub typed: String,
    pub target: String,
    pub ctype: ContextType,
}

#[derive(Serialize, Deserialize)]
struct Record<'a> {
    src: std::borrow::Cow<'a, str>,
    cl: std::borrow::Cow<'a, str>,
    cr: std::borrow::Cow<'a, str>,
    typed: std::borrow::Cow<'a, str>,
    target: std::borrow::Cow<'a, str>,
    ctype: ContextType,
}

impl GwlanExample {
    /// Structural checks that do not need the reference sentence.
    pub fn check(&self, rom: &Romanizer) -> Result<(), String> {
        if ContextType::of(&self.left, &self.right) != self.ctype {
            return Err(format!("context shape does not match ctype {}", self.ctype));
        }
        if self.typed.is_empty() {
            return Err("typed prefix is empty".into());
        }
        let form = rom
            .typing_form(&self.target)
            .ok_or_else(|| format!("target {:?} has no typing form", self.target))?;
        if !(form.starts_with(&self.typed) && form.len() > self.typed.len()) {
            return Err(format!("{:?} is not a strict prefix of {form:?}", self.typed));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let src = self.src.to_string();
        let cl = self.left.to_string();
        let cr = self.right.to_string();
        serde_json::to_string(&Record {
            src: src.into(),
            cl: cl.into(),
            cr: cr.into(),
            typed: self.typed.as_str().into(),
            target: self.target.as_str().into(),
            ctype: self.ctype,
        })
        .expect("record serializes")
    }

    pub fn from_json(line: &str) -> Result<Self, serde_json::Error> {
        let r: Record = serde_json::from_str(line)?;
        Ok(Self {
            src: Sentence::parse(&r.src),
            left: Sentence::parse(&r.cl),
            right: Sentence::parse(&r.cr),
            typed: r.typed.into_owned(),
            target: r.target.into_owned(),
            ctype: r.ctype,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub seed: u64,
    pub max_context_len: usize,
    pub min_sentence_len: usize,
    pub long_word_boost: f64,
    /// Words whose surface has more characters than this get the boost.
    pub long_word_chars: usize,
    /// Admit single-token context pieces.
    pub allow_unit_context: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::alphabetic(0)
    }
}

impl SamplerConfig {
    pub fn alphabetic(seed: u64) -> Self {
        Self {
            seed,
            max_context_len: 5,
            min_sentence_len: 5,
            long_word_boost: 4.0,
            long_word_chars: 4,
            allow_unit_context: false,
        }
    }

    pub fn logographic(seed: u64) -> Self {
        Self {
            long_word_chars: 2,
            ..Self::alphabetic(seed)
        }
    }

    /// Picks the word-length threshold that matches the romanizer's script.
    pub fn for_romanizer(seed: u64, rom: &Romanizer) -> Self {
        if rom.is_identity() {
            Self::alphabetic(seed)
        } else {
            Self::logographic(seed)
        }
    }

    fn word_weight(&self, word: &str) -> f64 {
        if word.chars().count() > self.long_word_chars {
            self.long_word_boost
        } else {
            1.0
        }
    }
}

/// Draws the (0-based) position of the target word. Only words whose typing
/// form has at least two characters are eligible; long words are boosted.
pub fn sample_target<R: Rng + ?Sized>(
    y: &Sentence,
    cfg: &SamplerConfig,
    rng: &mut R,
    rom: &Romanizer,
) -> Result<usize, BenchmarkError> {
    if y.len() < cfg.min_sentence_len {
        return Err(BenchmarkError::NoTarget);
    }
    let weights: Vec<f64> = y
        .iter()
        .map(|w| {
            if rom.typing_len(w) >= 2 {
                cfg.word_weight(w)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(BenchmarkError::NoTarget);
    }
    let mut u = rng::unit(rng) * total;
    let mut last = 0;
    for (k, &wt) in weights.iter().enumerate() {
        if wt == 0.0 {
            continue;
        }
        last = k;
        if u < wt {
            return Ok(k);
        }
        u -= wt;
    }
    Ok(last)
}

/// All (start, end) inclusive 0-based spans with `lo <= start < end <= hi`
/// (or `start <= end` with unit pieces allowed), in lexicographic order.
fn span_pairs(lo: usize, hi: usize, allow_unit: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in lo..=hi {
        let first_end = if allow_unit { a } else { a + 1 };
        for b in first_end..=hi {
            out.push((a, b));
        }
    }
    out
}

/// Inclusive span of the left piece, or `None` when no valid span exists.
fn draw_left<R: Rng + ?Sized>(k: usize, cfg: &SamplerConfig, rng: &mut R) -> Option<(usize, usize)> {
    if k == 0 {
        return None;
    }
    let pairs = span_pairs(0, k - 1, cfg.allow_unit_context);
    if pairs.is_empty() {
        return None;
    }
    let (mut a, b) = pairs[rng::below(rng, pairs.len())];
    if b + 1 - a > cfg.max_context_len {
        a = b + 1 - cfg.max_context_len;
    }
    Some((a, b))
}

fn draw_right<R: Rng + ?Sized>(
    k: usize,
    len: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Option<(usize, usize)> {
    if k + 1 >= len {
        return None;
    }
    let pairs = span_pairs(k + 1, len - 1, cfg.allow_unit_context);
    if pairs.is_empty() {
        return None;
    }
    let (a, mut b) = pairs[rng::below(rng, pairs.len())];
    if b + 1 - a > cfg.max_context_len {
        b = a + cfg.max_context_len - 1;
    }
    Some((a, b))
}

/// Cuts the translation context around position `k` (0-based).
pub fn extract_context<R: Rng + ?Sized>(
    y: &Sentence,
    k: usize,
    ctype: ContextType,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(Sentence, Sentence), BenchmarkError> {
    let infeasible = || BenchmarkError::ContextInfeasible {
        ctype,
        k,
        len: y.len(),
    };
    let left = if ctype.needs_left() {
        let (a, b) = draw_left(k, cfg, rng).ok_or_else(infeasible)?;
        y.slice(a, b + 1)
    } else {
        Sentence::empty()
    };
    let right = if ctype.needs_right() {
        let (a, b) = draw_right(k, y.len(), cfg, rng).ok_or_else(infeasible)?;
        y.slice(a, b + 1)
    } else {
        Sentence::empty()
    };
    Ok((left, right))
}

/// Simulates the characters typed so far: a uniformly long strict prefix of
/// the word's typing form.
pub fn simulate_typed<R: Rng + ?Sized>(
    word: &str,
    rng: &mut R,
    rom: &Romanizer,
) -> Result<String, BenchmarkError> {
    let form = rom.typing_form(word).ok_or(BenchmarkError::NoTarget)?;
    let chars: Vec<char> = form.chars().collect();
    if chars.len() < 2 {
        return Err(BenchmarkError::NoTarget);
    }
    let p = 1 + rng::below(rng, chars.len() - 1);
    Ok(chars[..p].iter().collect())
}

fn example_for_pair<R: Rng + ?Sized>(
    src: &Sentence,
    y: &Sentence,
    ctype: ContextType,
    cfg: &SamplerConfig,
    rom: &Romanizer,
    rng: &mut R,
) -> Result<GwlanExample, BenchmarkError> {
    let k = sample_target(y, cfg, rng, rom)?;
    let (left, right) = extract_context(y, k, ctype, cfg, rng)?;
    let target = y.get(k).expect("k in range").to_owned();
    let typed = simulate_typed(&target, rng, rom)?;
    Ok(GwlanExample {
        src: src.clone(),
        left,
        right,
        typed,
        target,
        ctype,
    })
}

/// Builds one dataset for `ctype`: at most one example per pair, in corpus
/// order. Pair `i` draws only from the stream `(seed, ctype, i)`, so the
/// output is a pure function of the inputs and can be sharded by pair.
pub fn build_dataset(
    corpus: &ParallelCorpus,
    ctype: ContextType,
    cfg: &SamplerConfig,
    rom: &Romanizer,
) -> Vec<GwlanExample> {
    let seed = rng::derive_seed(cfg.seed, ctype.index());
    let mut skipped = 0usize;
    let out: Vec<GwlanExample> = corpus
        .pairs()
        .iter()
        .enumerate()
        .filter_map(|(i, (src, y))| {
            let mut r = rng::stream_rng(seed, i as u64);
            match example_for_pair(src, y, ctype, cfg, rom, &mut r) {
                Ok(ex) => Some(ex),
                Err(_) => {
                    skipped += 1;
                    None
                }
            }
        })
        .collect();
    log::debug!("{ctype}: {} examples, {skipped} pairs skipped", out.len());
    out
}

/// Checks an example against the reference it was drawn from: `target`
/// occurs strictly between a placement of the left piece and a placement of
/// the right piece, and the context caps hold.
pub fn verify_against_reference(
    ex: &GwlanExample,
    reference: &Sentence,
    cfg: &SamplerConfig,
    rom: &Romanizer,
) -> Result<(), String> {
    ex.check(rom)?;
    let min_piece = if cfg.allow_unit_context { 1 } else { 2 };
    for (name, piece) in [("left", &ex.left), ("right", &ex.right)] {
        if piece.len() > cfg.max_context_len {
            return Err(format!("{name} context longer than {}", cfg.max_context_len));
        }
        if !piece.is_empty() && piece.len() < min_piece {
            return Err(format!("{name} context shorter than {min_piece}"));
        }
    }
    let toks = reference.tokens();
    let occurrences = |piece: &Sentence| -> Vec<usize> {
        if piece.is_empty() {
            return Vec::new();
        }
        (0..=toks.len().saturating_sub(piece.len()))
            .filter(|&a| toks.len() >= piece.len() && toks[a..a + piece.len()] == *piece.tokens())
            .collect()
    };
    let lefts = occurrences(&ex.left);
    let rights = occurrences(&ex.right);
    let ok = toks.iter().enumerate().any(|(k, t)| {
        *t == ex.target
            && (ex.left.is_empty() || lefts.iter().any(|&a| a + ex.left.len() <= k))
            && (ex.right.is_empty() || rights.iter().any(|&a| a > k))
    });
    if ok {
        Ok(())
    } else {
        Err(format!("target {:?} not placed between the context pieces", ex.target))
    }
}

pub fn write_jsonl<W: Write>(examples: &[GwlanExample], mut w: W) -> io::Result<()> {
    for ex in examples {
        writeln!(w, "{}", ex.to_json())?;
    }
    w.flush()
}

pub fn save_jsonl(examples: &[GwlanExample], path: &Path) -> io::Result<()> {
    write_jsonl(examples, io::BufWriter::new(fs::File::create(path)?))
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<GwlanExample>, BenchmarkError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = GwlanExample::from_json(&line).map_err(|source| BenchmarkError::Json {
            line: i + 1,
            source,
        })?;
        if ContextType::of(&ex.left, &ex.right) != ex.ctype || ex.typed.is_empty() {
            return Err(BenchmarkError::InvalidExample {
                line: i + 1,
                reason: "context shape or typed prefix inconsistent".into(),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn load_jsonl(path: &Path) -> Result<Vec<GwlanExample>, BenchmarkError> {
    read_jsonl(BufReader::new(fs::File::open(path)?))
}
