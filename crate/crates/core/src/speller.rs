//! Dwell-driven predictive keyboards.
//!
//! The screen has four regions visited in a fixed cycle: keypad,
//! suggestions, backspace and phrase. A highlight rests on one key for
//! `dwell_ms` and then moves on; after the last key of a region it enters the
//! next region (the suggestion region is skipped while empty). A double blink
//! selects whatever is highlighted. A double jaw clench speaks the phrase from
//! anywhere. After any selection the dwell restarts at the first keypad key.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::lexicon::{Lexicon, SUGGESTION_LIMIT, T9_KEYS};
use crate::online::{ArtifactEvent, EventKind};
use crate::{Error, Result};

pub const DEFAULT_DWELL_MS: u64 = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayoutKind {
    T9,
    #[serde(rename = "ABC")]
    Abc,
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayoutKind::T9 => "T9",
            LayoutKind::Abc => "ABC",
        })
    }
}

impl FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t9" => Ok(LayoutKind::T9),
            "abc" => Ok(LayoutKind::Abc),
            _ => Err(Error::Arg(format!("unknown layout {s:?} (expected T9 or ABC)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Key {
    /// What selection appends: a digit on T9, a letter on ABC.
    pub label: String,
    /// Letters printed on the key.
    pub letters: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub kind: LayoutKind,
    /// Keypad keys in highlight order: 2..9 on T9, a..z on ABC.
    pub keys: Vec<Key>,
    /// The single control key, alone in the backspace region.
    pub backspace: Key,
}

impl Layout {
    pub fn new(kind: LayoutKind) -> Self {
        let keys = match kind {
            LayoutKind::T9 => T9_KEYS
                .iter()
                .map(|(d, letters)| Key { label: d.to_string(), letters: letters.to_string() })
                .collect(),
            LayoutKind::Abc => ('a'..='z')
                .map(|c| Key { label: c.to_string(), letters: c.to_string() })
                .collect(),
        };
        Layout {
            kind,
            keys,
            backspace: Key { label: "Backspace".into(), letters: String::new() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Keypad,
    Suggestions,
    Backspace,
    Phrase,
}

impl Region {
    fn next(self) -> Region {
        match self {
            Region::Keypad => Region::Suggestions,
            Region::Suggestions => Region::Backspace,
            Region::Backspace => Region::Phrase,
            Region::Phrase => Region::Keypad,
        }
    }
}

/// Complete render model of the keyboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub layout: LayoutKind,
    pub keys: Vec<Key>,
    pub region: Region,
    pub highlight_index: usize,
    /// Label of the highlighted key, suggestion or control.
    pub highlighted: String,
    pub current_word: String,
    pub suggestions: Vec<String>,
    pub phrase: Vec<String>,
    pub dwell_ms: u64,
    pub dwell_remaining_ms: u64,
    pub clock_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum SpellerOutput {
    SpeakPhrase { words: Vec<String> },
    StateChanged { snapshot: Snapshot },
    WordCommitted { word: String },
    CharAppended { ch: String },
    BackspaceApplied { removed: Option<String> },
}

#[derive(Debug, Clone)]
pub struct SpellerState {
    layout: Layout,
    lexicon: Arc<Lexicon>,
    region: Region,
    highlight_index: usize,
    current_word: String,
    suggestions: Vec<String>,
    phrase: Vec<String>,
    dwell_ms: u64,
    /// Time spent on the current highlight.
    elapsed_ms: u64,
    clock_ms: u64,
}

impl SpellerState {
    pub fn new(kind: LayoutKind, lexicon: Arc<Lexicon>) -> Self {
        SpellerState::with_dwell(kind, lexicon, DEFAULT_DWELL_MS).expect("default dwell is positive")
    }

    pub fn with_dwell(kind: LayoutKind, lexicon: Arc<Lexicon>, dwell_ms: u64) -> Result<Self> {
        if dwell_ms == 0 {
            return Err(Error::Arg("dwell must be positive".into()));
        }
        Ok(SpellerState {
            layout: Layout::new(kind),
            lexicon,
            region: Region::Keypad,
            highlight_index: 0,
            current_word: String::new(),
            suggestions: Vec::new(),
            phrase: Vec::new(),
            dwell_ms,
            elapsed_ms: 0,
            clock_ms: 0,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn highlight_index(&self) -> usize {
        self.highlight_index
    }

    pub fn current_word(&self) -> &str {
        &self.current_word
    }

    pub fn suggestions(&self) -> &[String] {
        &self.suggestions
    }

    pub fn phrase(&self) -> &[String] {
        &self.phrase
    }

    pub fn region_size(&self, region: Region) -> usize {
        match region {
            Region::Keypad => self.layout.keys.len(),
            Region::Suggestions => self.suggestions.len(),
            Region::Backspace | Region::Phrase => 1,
        }
    }

    /// Clears word, suggestions and phrase and restarts the highlight,
    /// optionally on a different layout. The clock keeps running.
    pub fn reset(&mut self, kind: Option<LayoutKind>) {
        if let Some(k) = kind {
            self.layout = Layout::new(k);
        }
        self.current_word.clear();
        self.suggestions.clear();
        self.phrase.clear();
        self.restart_highlight();
    }

    fn restart_highlight(&mut self) {
        self.region = Region::Keypad;
        self.highlight_index = 0;
        self.elapsed_ms = 0;
    }

    fn refresh_suggestions(&mut self) {
        self.suggestions = if self.current_word.is_empty() {
            Vec::new()
        } else {
            match self.layout.kind {
                LayoutKind::T9 => self.lexicon.suggest_t9(&self.current_word, SUGGESTION_LIMIT),
                LayoutKind::Abc => self.lexicon.suggest_prefix(&self.current_word, SUGGESTION_LIMIT),
            }
        };
    }

    fn step(&mut self) {
        if self.highlight_index + 1 < self.region_size(self.region) {
            self.highlight_index += 1;
            return;
        }
        let mut next = self.region.next();
        while self.region_size(next) == 0 {
            next = next.next();
        }
        self.region = next;
        self.highlight_index = 0;
    }

    pub fn highlighted(&self) -> &str {
        match self.region {
            Region::Keypad => &self.layout.keys[self.highlight_index].label,
            Region::Suggestions => &self.suggestions[self.highlight_index],
            Region::Backspace => &self.layout.backspace.label,
            Region::Phrase => "Phrase",
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            layout: self.layout.kind,
            keys: self.layout.keys.clone(),
            region: self.region,
            highlight_index: self.highlight_index,
            highlighted: self.highlighted().to_string(),
            current_word: self.current_word.clone(),
            suggestions: self.suggestions.clone(),
            phrase: self.phrase.clone(),
            dwell_ms: self.dwell_ms,
            dwell_remaining_ms: self.dwell_ms - self.elapsed_ms,
            clock_ms: self.clock_ms,
        }
    }

    /// Advances the dwell clock, moving the highlight once per elapsed dwell.
    pub fn tick(&mut self, elapsed_ms: u64) -> Vec<SpellerOutput> {
        self.clock_ms += elapsed_ms;
        self.elapsed_ms += elapsed_ms;
        let mut moved = false;
        while self.elapsed_ms >= self.dwell_ms {
            self.elapsed_ms -= self.dwell_ms;
            self.step();
            moved = true;
        }
        if moved {
            vec![SpellerOutput::StateChanged { snapshot: self.snapshot() }]
        } else {
            Vec::new()
        }
    }

    fn speak(&mut self, out: &mut Vec<SpellerOutput>) {
        if !self.phrase.is_empty() {
            out.push(SpellerOutput::SpeakPhrase { words: std::mem::take(&mut self.phrase) });
            self.restart_highlight();
        }
    }

    fn select(&mut self, out: &mut Vec<SpellerOutput>) {
        match self.region {
            Region::Keypad => {
                let ch = self.layout.keys[self.highlight_index].label.clone();
                self.current_word.push_str(&ch);
                self.refresh_suggestions();
                out.push(SpellerOutput::CharAppended { ch });
            }
            Region::Suggestions => {
                let word = self.suggestions[self.highlight_index].clone();
                self.phrase.push(word.clone());
                self.current_word.clear();
                self.suggestions.clear();
                out.push(SpellerOutput::WordCommitted { word });
            }
            Region::Backspace => {
                let removed = self.current_word.pop().map(String::from);
                self.refresh_suggestions();
                out.push(SpellerOutput::BackspaceApplied { removed });
            }
            Region::Phrase => return self.speak(out),
        }
        self.restart_highlight();
    }

    /// Applies one classified gesture. Every call ends with a snapshot.
    pub fn on_event(&mut self, event: &ArtifactEvent) -> Vec<SpellerOutput> {
        let mut out = Vec::new();
        match event.kind {
            EventKind::Blink { count: 2 } => self.select(&mut out),
            EventKind::JawClench { count: 2 } => self.speak(&mut out),
            _ => {}
        }
        out.push(SpellerOutput::StateChanged { snapshot: self.snapshot() });
        out
    }
}

/// One line of a speller script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptStep {
    Tick { tick_ms: u64 },
    Event { event: ArtifactEvent },
}

/// Parses JSON lines; blank lines are skipped.
pub fn parse_script(text: &str) -> Result<Vec<ScriptStep>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format { line: i + 1, reason: e.to_string() })
        })
        .collect()
}

pub fn run_script(state: &mut SpellerState, steps: &[ScriptStep]) -> Vec<SpellerOutput> {
    steps
        .iter()
        .flat_map(|s| match s {
            ScriptStep::Tick { tick_ms } => state.tick(*tick_ms),
            ScriptStep::Event { event } => state.on_event(event),
        })
        .collect()
}

/// One JSON object per line.
pub fn outputs_to_jsonl(outputs: &[SpellerOutput]) -> String {
    outputs
        .iter()
        .map(|o| serde_json::to_string(o).expect("outputs serialize") + "\n")
        .collect()
}
