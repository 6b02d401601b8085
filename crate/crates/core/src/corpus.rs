//! Parallel corpora, vocabularies and id encoding.
//!
//! Input text is expected to be tokenized already: one sentence per line,
//! tokens separated by ASCII whitespace.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const MASK: &str = "<mask>";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const MASK_ID: u32 = 2;
pub const NUM_SPECIALS: usize = 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("source has {source_lines} lines but target has {target_lines}")]
    Pairing {
        source_lines: usize,
        target_lines: usize,
    },
    #[error("empty sentence at line {line} of {path}")]
    EmptySentence { path: String, line: usize },
    #[error("invalid token {0:?}")]
    InvalidToken(String),
    #[error("malformed vocabulary line {line}: {reason}")]
    VocabFormat { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A whitespace-tokenized sentence. Never empty in corpora, but context
/// pieces built from it may be.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new<I, S>(tokens: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(CorpusError::InvalidToken(bad.clone()));
        }
        Ok(Self { tokens })
    }

    /// Splits on whitespace; an empty or blank line gives an empty sentence.
    pub fn parse(line: &str) -> Self {
        Self {
            tokens: line.split_whitespace().map(str::to_owned).collect(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(String::as_str)
    }

    /// Tokens in `start..end` (0-based, half-open) as a new sentence.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            tokens: self.tokens[start..end].to_vec(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pairs: Vec<(Sentence, Sentence)>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<(Sentence, Sentence)>) -> Self {
        Self { pairs }
    }

    pub fn pairs(&self) -> &[(Sentence, Sentence)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|(s, _)| s)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|(_, t)| t)
    }

    /// Splits off the pairs in `range` into a new corpus, keeping order.
    pub fn subset(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            pairs: self.pairs[range].to_vec(),
        }
    }

    pub fn write(&self, source_path: &Path, target_path: &Path) -> io::Result<()> {
        let mut src = io::BufWriter::new(fs::File::create(source_path)?);
        let mut tgt = io::BufWriter::new(fs::File::create(target_path)?);
        for (s, t) in &self.pairs {
            writeln!(src, "{s}")?;
            writeln!(tgt, "{t}")?;
        }
        src.flush()?;
        tgt.flush()
    }
}

fn read_sentences(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let sentence = Sentence::parse(&line?);
        if sentence.is_empty() {
            return Err(CorpusError::EmptySentence {
                path: path.display().to_string(),
                line: i + 1,
            });
        }
        out.push(sentence);
    }
    Ok(out)
}

/// Reads a line-aligned pair of corpus files.
pub fn load_parallel(source_path: &Path, target_path: &Path) -> Result<ParallelCorpus, CorpusError> {
    let sources = read_sentences(source_path)?;
    let targets = read_sentences(target_path)?;
    if sources.len() != targets.len() {
        return Err(CorpusError::Pairing {
            source_lines: sources.len(),
            target_lines: targets.len(),
        });
    }
    Ok(ParallelCorpus::new(sources.into_iter().zip(targets).collect()))
}

/// Bidirectional token/id map. Ids 0..3 are reserved for the special tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    id_of: HashMap<String, u32>,
    surface_of: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::specials_only()
    }
}

impl Vocabulary {
    fn specials_only() -> Self {
        let mut vocab = Self {
            id_of: HashMap::new(),
            surface_of: Vec::new(),
        };
        for s in [PAD, UNK, MASK] {
            vocab.push(s.to_owned());
        }
        vocab
    }

    fn push(&mut self, surface: String) {
        let id = self.surface_of.len() as u32;
        self.id_of.insert(surface.clone(), id);
        self.surface_of.push(surface);
    }

    /// Builds a vocabulary from explicit surfaces in id order (after the specials).
    pub fn from_surfaces<I, S>(surfaces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::specials_only();
        for s in surfaces {
            let s = s.into();
            if !vocab.id_of.contains_key(&s) {
                vocab.push(s);
            }
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.surface_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surface_of.len() == NUM_SPECIALS
    }

    pub fn id(&self, surface: &str) -> Option<u32> {
        self.id_of.get(surface).copied()
    }

    pub fn id_or_unk(&self, surface: &str) -> u32 {
        self.id(surface).unwrap_or(UNK_ID)
    }

    pub fn surface(&self, id: u32) -> Option<&str> {
        self.surface_of.get(id as usize).map(String::as_str)
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < NUM_SPECIALS
    }

    /// Non-special ids in ascending order.
    pub fn word_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (NUM_SPECIALS as u32)..(self.surface_of.len() as u32)
    }

    pub fn encode(&self, sentence: &Sentence) -> Vec<u32> {
        sentence.iter().map(|t| self.id_or_unk(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Sentence {
        Sentence {
            tokens: ids
                .iter()
                .map(|&id| self.surface(id).unwrap_or(UNK).to_owned())
                .collect(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (id, s) in self.surface_of.iter().enumerate() {
            writeln!(w, "{s}\t{id}")?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        self.write_to(io::BufWriter::new(fs::File::create(path)?))
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, CorpusError> {
        let mut surface_of = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let bad = |reason: &str| CorpusError::VocabFormat {
                line: i + 1,
                reason: reason.to_owned(),
            };
            let (surface, id) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let id: usize = id.parse().map_err(|_| bad("id is not an integer"))?;
            if id != i {
                return Err(bad("ids must be dense and sorted"));
            }
            surface_of.push(surface.to_owned());
        }
        if surface_of.len() < NUM_SPECIALS || surface_of[..NUM_SPECIALS] != [PAD, UNK, MASK] {
            return Err(CorpusError::VocabFormat {
                line: 1,
                reason: "special tokens must come first".into(),
            });
        }
        let id_of = surface_of
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect::<HashMap<_, _>>();
        if id_of.len() != surface_of.len() {
            return Err(CorpusError::VocabFormat {
                line: 0,
                reason: "duplicate surface".into(),
            });
        }
        Ok(Self { id_of, surface_of })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::read_from(BufReader::new(fs::File::open(path)?))
    }
}

/// Counts tokens, keeps those seen at least `min_count` times, ranks them by
/// count (descending) then surface, and keeps the top `max_size - 3`.
pub fn build_vocab<'a, I>(sentences: I, min_count: usize, max_size: usize) -> Vocabulary
where
    I: IntoIterator<Item = &'a Sentence>,
{
    assert!(max_size > NUM_SPECIALS, "max_size must leave room for specials");
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for sentence in sentences {
        for t in sentence.iter() {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(s, c)| c >= min_count.max(1) && ![PAD, UNK, MASK].contains(&s))
        .collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size - NUM_SPECIALS);
    Vocabulary::from_surfaces(ranked.into_iter().map(|(s, _)| s))
}
