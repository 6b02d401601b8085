use std::borrow::Cow;
use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use super::BenchmarkError;

/// Maps a word surface to the characters a translator actually types for it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Romanizer {
    /// Alphabetic scripts: the surface is typed as-is.
    Identity,
    /// Logographic scripts: phonetic transcription looked up in a table.
    Table(HashMap<String, String>),
}

/// A few Mandarin words with their toneless pinyin, enough for demos and tests.
const DEMO_PINYIN: &[(&str, &str)] = &[
    ("我们", "women"),
    ("询问", "xunwen"),
    ("两", "liang"),
    ("位", "wei"),
    ("专家", "zhuanjia"),
    ("的", "de"),
    ("意见", "yijian"),
    ("他们", "tamen"),
    ("翻译", "fanyi"),
    ("中国", "zhongguo"),
    ("经济", "jingji"),
    ("发展", "fazhan"),
    ("政府", "zhengfu"),
    ("问题", "wenti"),
    ("世界", "shijie"),
    ("合作", "hezuo"),
    ("专业", "zhuanye"),
    ("专门", "zhuanmen"),
    ("。", "."),
];

impl Romanizer {
    pub fn demo_pinyin() -> Self {
        Romanizer::Table(
            DEMO_PINYIN
                .iter()
                .map(|&(s, t)| (s.to_owned(), t.to_owned()))
                .collect(),
        )
    }

    /// Reads `surface<TAB>typing_form` lines.
    pub fn load_table(path: &Path) -> Result<Self, BenchmarkError> {
        Self::read_table(BufReader::new(fs::File::open(path)?))
    }

    pub fn read_table<R: BufRead>(r: R) -> Result<Self, BenchmarkError> {
        let mut map = HashMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (surface, form) = line
                .split_once('\t')
                .filter(|(s, f)| !s.is_empty() && !f.is_empty())
                .ok_or(BenchmarkError::RomanizerFormat { line: i + 1 })?;
            map.insert(surface.to_owned(), form.to_owned());
        }
        Ok(Romanizer::Table(map))
    }

    pub fn write_table<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        if let Romanizer::Table(map) = self {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort();
            for (s, f) in entries {
                writeln!(w, "{s}\t{f}")?;
            }
        }
        w.flush()
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Romanizer::Identity)
    }

    /// `None` when the word is not covered (never for `Identity` on a
    /// nonempty word).
    pub fn typing_form<'a>(&'a self, word: &'a str) -> Option<Cow<'a, str>> {
        if word.is_empty() {
            return None;
        }
        match self {
            Romanizer::Identity => Some(Cow::Borrowed(word)),
            Romanizer::Table(map) => map.get(word).map(|f| Cow::Borrowed(f.as_str())),
        }
    }

    /// Typing-form length in characters, or 0 when uncovered.
    pub fn typing_len(&self, word: &str) -> usize {
        self.typing_form(word).map_or(0, |f| f.chars().count())
    }
}
