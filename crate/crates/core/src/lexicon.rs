//! Frequency-ranked dictionary with T9 textonym and letter-prefix lookup.
//!
//! A query returns the words whose key (T9 digits or letters) starts with
//! the typed prefix, ranked by count descending, then alphabetically. On the
//! keypad, whole-word textonyms of the digits come before longer
//! completions, so "4663" offers good, home, gone and hood before anything
//! that merely starts with those keys.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::{Error, Result};

/// Default suggestion list length.
pub const SUGGESTION_LIMIT: usize = 5;

/// Corpus counts below this are dropped at load.
pub const DEFAULT_MIN_COUNT: u64 = 200;

const BUNDLED: &str = include_str!("../data/words.tsv");

/// Letters on keys 2 through 9 of a phone keypad.
pub const T9_KEYS: [(char, &str); 8] = [
    ('2', "abc"),
    ('3', "def"),
    ('4', "ghi"),
    ('5', "jkl"),
    ('6', "mno"),
    ('7', "pqrs"),
    ('8', "tuv"),
    ('9', "wxyz"),
];

pub fn t9_digit(letter: char) -> Option<char> {
    let l = letter.to_ascii_lowercase();
    T9_KEYS
        .iter()
        .find(|(_, letters)| letters.contains(l))
        .map(|(d, _)| *d)
}

/// Keypad digits for `word`, case-insensitive.
pub fn encode_t9(word: &str) -> Result<String> {
    word.chars()
        .map(|c| {
            if c.is_ascii_alphabetic() {
                t9_digit(c).ok_or_else(|| Error::NonAlphabetic(word.to_string()))
            } else {
                Err(Error::NonAlphabetic(word.to_string()))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub word: String,
    pub count: u64,
}

#[derive(Debug, Default, Clone)]
struct TrieNode {
    children: BTreeMap<u8, usize>,
    /// Every word in this subtree, best-ranked first.
    ranked: Vec<u32>,
}

/// Prefix tree over ASCII keys whose nodes list their subtree's words in
/// rank order.
#[derive(Debug, Clone)]
struct KeyIndex {
    nodes: Vec<TrieNode>,
}

impl KeyIndex {
    /// `keys[id]` is the key of word `id`; `order` lists ids best first.
    fn build(keys: &[String], order: &[u32]) -> Self {
        let mut nodes = vec![TrieNode::default()];
        for &id in order {
            let mut at = 0;
            nodes[0].ranked.push(id);
            for &b in keys[id as usize].as_bytes() {
                let next = match nodes[at].children.get(&b) {
                    Some(&n) => n,
                    None => {
                        nodes.push(TrieNode::default());
                        let n = nodes.len() - 1;
                        nodes[at].children.insert(b, n);
                        n
                    }
                };
                nodes[next].ranked.push(id);
                at = next;
            }
        }
        KeyIndex { nodes }
    }

    fn lookup(&self, prefix: &str) -> &[u32] {
        let mut at = 0;
        for b in prefix.bytes() {
            match self.nodes[at].children.get(&b) {
                Some(&n) => at = n,
                None => return &[],
            }
        }
        &self.nodes[at].ranked
    }
}

/// Outcome of reading a `word<TAB>count` file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub lines: usize,
    pub skipped_non_alphabetic: usize,
    pub dropped_below_min: usize,
}

/// Immutable after construction; share it behind an `Arc`.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<Entry>,
    digit_keys: Vec<String>,
    t9: KeyIndex,
    prefix: KeyIndex,
}

impl Lexicon {
    /// Builds from (word, count) pairs. Words are lowercased, duplicate
    /// words have their counts summed, and non-alphabetic words are
    /// rejected.
    pub fn from_counts<I, S>(counts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: AsRef<str>,
    {
        let mut merged: HashMap<String, u64> = HashMap::new();
        for (w, c) in counts {
            let w = w.as_ref().to_lowercase();
            if w.is_empty() || !w.bytes().all(|b| b.is_ascii_lowercase()) {
                return Err(Error::NonAlphabetic(w));
            }
            *merged.entry(w).or_default() += c;
        }
        let mut entries: Vec<Entry> = merged.into_iter().map(|(word, count)| Entry { word, count }).collect();
        entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.word.cmp(&b.word)));

        let digit_keys: Vec<String> = entries
            .iter()
            .map(|e| encode_t9(&e.word).expect("words are alphabetic"))
            .collect();
        let letter_keys: Vec<String> = entries.iter().map(|e| e.word.clone()).collect();
        let order: Vec<u32> = (0..entries.len() as u32).collect();
        Ok(Lexicon {
            t9: KeyIndex::build(&digit_keys, &order),
            prefix: KeyIndex::build(&letter_keys, &order),
            entries,
            digit_keys,
        })
    }

    /// The word-frequency table shipped with the crate.
    pub fn bundled() -> Self {
        let (lex, _) = parse_counts(BUNDLED, DEFAULT_MIN_COUNT).expect("bundled lexicon is well formed");
        lex
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries ranked by count, best first.
    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        let w = word.to_lowercase();
        self.entries.iter().find(|e| e.word == w).map(|e| e.count)
    }

    /// Words whose T9 digits start with `digits`. Whole-word textonyms come
    /// first, then longer completions, each by count. Non-keypad digits
    /// match nothing.
    pub fn suggest_t9(&self, digits: &str, limit: usize) -> Vec<String> {
        if !digits.bytes().all(|b| (b'2'..=b'9').contains(&b)) {
            return Vec::new();
        }
        let ranked = self.t9.lookup(digits);
        let whole = |id: &&u32| self.digit_keys[**id as usize].len() == digits.len();
        ranked
            .iter()
            .filter(whole)
            .chain(ranked.iter().filter(|id| !whole(id)))
            .take(limit)
            .map(|&id| self.entries[id as usize].word.clone())
            .collect()
    }

    /// Words starting with `letters`, case-insensitive, by count. At equal
    /// counts the typed word itself sorts first, as it is alphabetically
    /// smallest among its extensions.
    pub fn suggest_prefix(&self, letters: &str, limit: usize) -> Vec<String> {
        let letters = letters.to_lowercase();
        self.prefix
            .lookup(&letters)
            .iter()
            .take(limit)
            .map(|&id| self.entries[id as usize].word.clone())
            .collect()
    }
}

fn parse_counts(text: &str, min_count: u64) -> Result<(Lexicon, LoadStats)> {
    let mut stats = LoadStats::default();
    let mut pairs: Vec<(String, u64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let fail = |reason: String| Error::Format { line: i + 1, reason };
        let (word, count) = line
            .split_once('\t')
            .ok_or_else(|| fail("expected word<TAB>count".into()))?;
        let count: u64 = count
            .trim()
            .parse()
            .map_err(|_| fail(format!("count {:?} is not a nonnegative integer", count.trim())))?;
        let word = word.trim().to_lowercase();
        if word.is_empty() || !word.bytes().all(|b| b.is_ascii_lowercase()) {
            stats.skipped_non_alphabetic += 1;
            continue;
        }
        pairs.push((word, count));
    }
    // thresholding applies to summed counts
    let mut summed: HashMap<String, u64> = HashMap::new();
    for (w, c) in pairs {
        *summed.entry(w).or_default() += c;
    }
    let before = summed.len();
    summed.retain(|_, c| *c >= min_count);
    stats.dropped_below_min = before - summed.len();
    Ok((Lexicon::from_counts(summed)?, stats))
}

/// Reads a UTF-8 `word<TAB>count` file, dropping words below `min_count`.
pub fn load_lexicon(path: impl AsRef<Path>, min_count: u64) -> Result<(Lexicon, LoadStats)> {
    parse_counts(&std::fs::read_to_string(path)?, min_count)
}

/// Same as [`load_lexicon`] on in-memory text.
pub fn parse_lexicon(text: &str, min_count: u64) -> Result<(Lexicon, LoadStats)> {
    parse_counts(text, min_count)
}
