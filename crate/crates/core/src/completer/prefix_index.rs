use std::collections::BTreeMap;

use crate::benchmark::Romanizer;
use crate::corpus::Vocabulary;

#[derive(Clone, Debug, Default)]
struct Node {
    children: BTreeMap<char, usize>,
    /// Ids of every word whose typing form passes through this node, ascending.
    ids: Vec<u32>,
}

/// Character trie over the typing forms of the target vocabulary.
#[derive(Clone, Debug)]
pub struct PrefixIndex {
    nodes: Vec<Node>,
    forms: Vec<String>,
    case_fold: bool,
}

impl PrefixIndex {
    /// Inserts every non-special word under its typing form. Words the
    /// romanizer does not cover are indexed under their surface.
    pub fn build(vocab: &Vocabulary, rom: &Romanizer, case_fold: bool) -> Self {
        let mut index = Self {
            nodes: vec![Node::default()],
            forms: vec![String::new(); vocab.len()],
            case_fold,
        };
        let mut fallbacks = 0usize;
        for id in vocab.word_ids() {
            let surface = vocab.surface(id).expect("id in range");
            let form = match rom.typing_form(surface) {
                Some(f) => f.into_owned(),
                None => {
                    fallbacks += 1;
                    surface.to_owned()
                }
            };
            index.insert(id, index.normalize(&form));
        }
        if fallbacks > 0 {
            log::warn!("{fallbacks} vocabulary words have no typing form; indexed by surface");
        }
        index
    }

    fn normalize(&self, s: &str) -> String {
        if self.case_fold {
            s.to_lowercase()
        } else {
            s.to_owned()
        }
    }

    fn insert(&mut self, id: u32, form: String) {
        let mut node = 0;
        self.nodes[0].ids.push(id);
        for ch in form.chars() {
            node = match self.nodes[node].children.get(&ch) {
                Some(&next) => next,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[node].children.insert(ch, next);
                    next
                }
            };
            self.nodes[node].ids.push(id);
        }
        self.forms[id as usize] = form;
    }

    /// Ids whose typing form starts with `typed`, ascending. Walks `|typed|`
    /// nodes.
    pub fn lookup(&self, typed: &str) -> &[u32] {
        let typed = self.normalize(typed);
        let mut node = 0;
        for ch in typed.chars() {
            match self.nodes[node].children.get(&ch) {
                Some(&next) => node = next,
                None => return &[],
            }
        }
        &self.nodes[node].ids
    }

    /// Typing form the word was indexed under (normalized when case folding).
    pub fn typing_form(&self, id: u32) -> Option<&str> {
        self.forms.get(id as usize).map(String::as_str).filter(|f| !f.is_empty())
    }

    /// The matching predicate `lookup` implements, evaluated directly.
    pub fn matches(&self, id: u32, typed: &str) -> bool {
        self.typing_form(id)
            .is_some_and(|f| f.starts_with(&self.normalize(typed)))
    }

    pub fn case_fold(&self) -> bool {
        self.case_fold
    }

    pub fn vocab_len(&self) -> usize {
        self.forms.len()
    }
}
