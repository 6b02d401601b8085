//! Word-level autocompletion for computer-aided translation.
//!
//! The crate covers the whole pipeline: building autocompletion examples
//! from parallel corpora ([`benchmark`]), the word prediction model
//! ([`wpm`]), hard-constraint completion over typed characters
//! ([`completer`]), training ([`trainer`]), the alignment-table baseline
//! ([`transtable`]) and evaluation ([`evaluator`]).

pub mod benchmark;
pub mod bundle;
pub mod completer;
pub mod corpus;
pub mod evaluator;
pub mod rng;
pub mod synthetic;
pub mod trainer;
pub mod transtable;
pub mod wpm;
