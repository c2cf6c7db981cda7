//! Synthetic streaming-QA episodes in the style of the bAbI
//! two-supporting-facts task, with optional distractor sentences.

mod generator;
mod io;
mod vocab;

use serde::{Deserialize, Serialize};

pub use generator::{
    generate_episode, generate_original, generate_split, noise_bucket, noise_count, split_counts,
    EPISODE_LEN, FACTS_PER_EPISODE, FACTS_PER_QUESTION, MAX_SENTENCE_LEN, NOISE_LEVELS,
    QUESTIONS_PER_EPISODE,
};
pub use io::{read_episodes, write_episodes};
pub use vocab::{Vocabulary, LOCATIONS, NOISE_WORDS, OBJECTS, PAD, PERSONS, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Fact,
    Question,
}

impl ItemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::Fact => "fact",
            ItemKind::Question => "question",
        }
    }
}

/// One sentence of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamItem {
    pub kind: ItemKind,
    /// 1-based position in the episode.
    pub timestep: usize,
    /// Padded to [`MAX_SENTENCE_LEN`].
    pub tokens: Vec<usize>,
    /// Gold answer token (questions only).
    pub answer: Option<usize>,
    /// Timesteps of the facts needed to answer (questions only).
    pub supports: Vec<usize>,
    pub is_noise: bool,
}

impl StreamItem {
    pub fn is_fact(&self) -> bool {
        self.kind == ItemKind::Fact
    }

    pub fn is_question(&self) -> bool {
        self.kind == ItemKind::Question
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub items: Vec<StreamItem>,
    pub vocabulary_size: usize,
}

impl Episode {
    pub fn facts(&self) -> impl Iterator<Item = &StreamItem> {
        self.items.iter().filter(|i| i.is_fact())
    }

    pub fn questions(&self) -> impl Iterator<Item = &StreamItem> {
        self.items.iter().filter(|i| i.is_question())
    }

    pub fn noise_facts(&self) -> usize {
        self.items.iter().filter(|i| i.is_noise).count()
    }

    /// The noise bucket this episode was generated at.
    pub fn noise_level(&self) -> f64 {
        noise_bucket(self.noise_facts())
    }

    /// Item at a 1-based timestep.
    pub fn at(&self, timestep: usize) -> &StreamItem {
        &self.items[timestep - 1]
    }
}
