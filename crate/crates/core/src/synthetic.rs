//! Generated dictionary-translation corpora for tests and demos.
//!
//! Source words translate word-by-word, in order. Regular words have one
//! translation and belong to one of two topics (even or odd concept index);
//! a sentence draws its regular words from a single topic. Homograph source
//! words occur in both topics and have two translations, a singular stem and
//! its plural. The form is selected by the neighbouring target word to the
//! left: the stem after a word of class 0, the plural after class 1, where
//! a regular word's class is its topic and a homograph's class is its
//! number. Sentences start with a regular word, so every homograph has a
//! left neighbour and all words of a sentence share the topic's class.
//!
//! The clustered lexicon groups regular stems in threes sharing their first
//! two letters, so a short typed prefix does not identify the word. The
//! distinct lexicon gives every regular stem its own first letter.

use crate::corpus::{ParallelCorpus, Sentence};
use crate::rng::{below, stream_rng};

const SOURCE: [&str; 24] = [
    "ba", "de", "fi", "go", "ku", "la", "me", "ni", "po", "ru", "sa", "te", "vi", "wo", "zu", "ka", "le", "mi", "no",
    "pu", "ra", "se", "ti", "vo",
];

const HOMOGRAPH_SOURCE: [&str; 8] = ["xa", "xe", "xi", "xo", "xu", "ya", "ye", "yi"];

const HOMOGRAPH_STEMS: [&str; 8] = [
    "ember", "fossil", "goblet", "hammock", "igloo", "jasmine", "kernel", "nectar",
];

const CLUSTERED: [&str; 24] = [
    "candle", "canyon", "carpet", "maple", "marble", "market", "paper", "parrot", "pastry", "banner", "barrel",
    "basket", "saddle", "salmon", "sandal", "tablet", "tailor", "target", "rabbit", "radish", "raven", "ladder",
    "lagoon", "lantern",
];

const DISTINCT: [&str; 24] = [
    "apple", "bread", "candle", "dragon", "eagle", "forest", "garden", "harbor", "island", "jungle", "kettle",
    "lantern", "meadow", "needle", "orange", "pepper", "quartz", "river", "silver", "tiger", "umbrella", "valley",
    "window", "yellow",
];

pub const NUM_REGULAR: usize = SOURCE.len();
pub const MAX_HOMOGRAPHS: usize = HOMOGRAPH_SOURCE.len();

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Lexicon {
    #[default]
    Clustered,
    Distinct,
}

impl Lexicon {
    fn stems(self) -> &'static [&'static str; NUM_REGULAR] {
        match self {
            Lexicon::Clustered => &CLUSTERED,
            Lexicon::Distinct => &DISTINCT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub pairs: usize,
    pub seed: u64,
    /// How many homograph source words (at most 8) may occur.
    pub homographs: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub lexicon: Lexicon,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            pairs: 2000,
            seed: 1,
            homographs: MAX_HOMOGRAPHS,
            min_len: 6,
            max_len: 12,
            lexicon: Lexicon::Clustered,
        }
    }
}

impl SyntheticConfig {
    /// One-to-one dictionary with distinct first letters.
    pub fn bijective(pairs: usize, seed: u64) -> Self {
        Self {
            pairs,
            seed,
            homographs: 0,
            lexicon: Lexicon::Distinct,
            ..Self::default()
        }
    }
}

/// A source-side word: regular concept `0..24` or homograph `0..8`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Word {
    Regular(usize),
    Homograph(usize),
}

impl Word {
    pub fn source(self) -> &'static str {
        match self {
            Word::Regular(c) => SOURCE[c],
            Word::Homograph(h) => HOMOGRAPH_SOURCE[h],
        }
    }
}

/// Target surface of `word` after a left neighbour of class `left_class`
/// (0 or 1). Regular words ignore the neighbour.
pub fn translate(lexicon: Lexicon, word: Word, left_class: usize) -> String {
    match word {
        Word::Regular(c) => lexicon.stems()[c].to_owned(),
        Word::Homograph(h) if left_class == 0 => HOMOGRAPH_STEMS[h].to_owned(),
        Word::Homograph(h) => format!("{}s", HOMOGRAPH_STEMS[h]),
    }
}

/// Deterministic in the config. No word repeats within a sentence.
pub fn generate(cfg: &SyntheticConfig) -> ParallelCorpus {
    let per_topic = NUM_REGULAR / 2;
    assert!(cfg.homographs <= MAX_HOMOGRAPHS);
    assert!(cfg.min_len >= 1 && cfg.min_len <= cfg.max_len && cfg.max_len <= per_topic + cfg.homographs);
    let mut rng = stream_rng(cfg.seed, 0);
    let pairs = (0..cfg.pairs)
        .map(|_| {
            let topic = below(&mut rng, 2);
            let len = cfg.min_len + below(&mut rng, cfg.max_len - cfg.min_len + 1);
            let mut regular: Vec<Word> = (0..per_topic).map(|i| Word::Regular(2 * i + topic)).collect();
            let mut words = vec![regular.swap_remove(below(&mut rng, regular.len()))];
            let mut pool = regular;
            pool.extend((0..cfg.homographs).map(Word::Homograph));
            while words.len() < len {
                words.push(pool.swap_remove(below(&mut rng, pool.len())));
            }
            // every word's class equals the topic, so each left neighbour has it
            let src = words.iter().map(|w| w.source());
            let tgt = words.iter().map(|&w| translate(cfg.lexicon, w, topic));
            (
                Sentence::new(src).expect("valid tokens"),
                Sentence::new(tgt).expect("valid tokens"),
            )
        })
        .collect();
    ParallelCorpus::new(pairs)
}

/// Train / valid / test split by pair index, in that order.
pub fn split(corpus: &ParallelCorpus, valid: usize, test: usize) -> (ParallelCorpus, ParallelCorpus, ParallelCorpus) {
    let n = corpus.len();
    assert!(valid + test <= n);
    let train_end = n - valid - test;
    (
        corpus.subset(0..train_end),
        corpus.subset(train_end..train_end + valid),
        corpus.subset(train_end + valid..n),
    )
}
