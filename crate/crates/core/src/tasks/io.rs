use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Episode, ItemKind, StreamItem, Vocabulary, MAX_SENTENCE_LEN};
use crate::error::{EmrError, Result};

/// One line of an episode file.
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    episode: usize,
    kind: ItemKind,
    tokens: Vec<usize>,
    answer: Option<usize>,
    supports: Vec<usize>,
    noise: bool,
}

/// One JSON object per stream item; `episode` groups consecutive lines.
pub fn write_episodes(path: &Path, episodes: &[Episode]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (e, ep) in episodes.iter().enumerate() {
        for item in &ep.items {
            let rec = Record {
                episode: e,
                kind: item.kind,
                tokens: item.tokens.clone(),
                answer: item.answer,
                supports: item.supports.clone(),
                noise: item.is_noise,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_episodes(path: &Path) -> Result<Vec<Episode>> {
    let vocabulary_size = Vocabulary::babi().len();
    let reader = BufReader::new(File::open(path)?);
    let mut episodes: Vec<Episode> = Vec::new();
    let mut current: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| EmrError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let bad = |message: String| EmrError::Parse {
            line: line_no,
            message,
        };
        if rec.tokens.len() != MAX_SENTENCE_LEN {
            return Err(bad(format!("expected {MAX_SENTENCE_LEN} tokens, got {}", rec.tokens.len())));
        }
        if let Some(&t) = rec.tokens.iter().find(|&&t| t >= vocabulary_size) {
            return Err(bad(format!("token {t} outside vocabulary")));
        }
        if rec.kind == ItemKind::Question && rec.answer.is_none() {
            return Err(bad("question without answer".into()));
        }
        if current != Some(rec.episode) {
            current = Some(rec.episode);
            episodes.push(Episode {
                items: Vec::new(),
                vocabulary_size,
            });
        }
        let ep = episodes.last_mut().expect("just pushed");
        ep.items.push(StreamItem {
            kind: rec.kind,
            timestep: ep.items.len() + 1,
            tokens: rec.tokens,
            answer: rec.answer,
            supports: rec.supports,
            is_noise: rec.noise,
        });
    }
    Ok(episodes)
}
