use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{EmrError, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

pub const PERSONS: [&str; 4] = ["mary", "john", "sandra", "daniel"];
pub const LOCATIONS: [&str; 6] = ["bathroom", "bedroom", "garden", "hallway", "kitchen", "office"];
pub const OBJECTS: [&str; 3] = ["football", "apple", "milk"];

const FUNCTION_WORDS: [&str; 19] = [
    "moved", "went", "journeyed", "travelled", "to", "the", "picked", "up", "got", "grabbed",
    "took", "dropped", "discarded", "left", "put", "down", "where", "is", "back",
];

/// Vocabulary used only by distractor sentences; disjoint from every task entity.
pub const NOISE_WORDS: [&str; 15] = [
    "bill", "fred", "julie", "likes", "cinema", "park", "ate", "an", "orange", "a", "sandwich",
    "hungry", "cold", "weather", "sunny",
];

/// Bijective token/id map; id 0 is padding and id 1 is unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(EmrError::Parse {
                    line: i + 1,
                    message: format!("duplicate token `{t}`"),
                });
            }
        }
        Ok(Self { tokens, ids })
    }

    /// The fixed vocabulary of the two-supporting-facts task plus its noise words.
    pub fn babi() -> Self {
        let tokens = ["<pad>", "<unk>"]
            .into_iter()
            .chain(PERSONS)
            .chain(LOCATIONS)
            .chain(OBJECTS)
            .chain(FUNCTION_WORDS)
            .chain(NOISE_WORDS)
            .map(String::from)
            .collect();
        Self::from_tokens(tokens).expect("built-in vocabulary has unique tokens")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or("<unk>")
    }

    /// Whitespace-split sentence to ids, padded with [`PAD`] to `width`.
    pub fn encode(&self, sentence: &str, width: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = sentence.split_whitespace().map(|w| self.id(w)).collect();
        assert!(ids.len() <= width, "sentence longer than {width} tokens: {sentence}");
        ids.resize(width, PAD);
        ids
    }

    /// Ids back to text, skipping padding.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i != PAD)
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn location_ids(&self) -> Vec<usize> {
        LOCATIONS.iter().map(|l| self.id(l)).collect()
    }

    /// One token per line; the line number (from 0) is the id.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(String::from).collect())
    }
}
