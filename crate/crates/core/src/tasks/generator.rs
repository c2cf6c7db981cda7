use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vocab::{Vocabulary, LOCATIONS, OBJECTS, PERSONS};
use super::{Episode, ItemKind, StreamItem};

pub const FACTS_PER_EPISODE: usize = 40;
pub const QUESTIONS_PER_EPISODE: usize = 5;
pub const FACTS_PER_QUESTION: usize = 8;
pub const EPISODE_LEN: usize = FACTS_PER_EPISODE + QUESTIONS_PER_EPISODE;
pub const MAX_SENTENCE_LEN: usize = 8;

/// Noise fractions of the Noisy split buckets.
pub const NOISE_LEVELS: [f64; 4] = [0.0, 0.30, 0.45, 0.60];

/// Each block of 8 facts keeps at least this many real facts so a
/// qualifying question can always be forced.
const MIN_REAL_PER_BLOCK: usize = 2;

const MOVE_VERBS: [&str; 4] = ["moved", "went", "journeyed", "travelled"];
const PICK_TEMPLATES: [&str; 4] = ["{p} picked up the {o}", "{p} got the {o}", "{p} grabbed the {o}", "{p} took the {o}"];
const DROP_TEMPLATES: [&str; 4] = ["{p} dropped the {o}", "{p} discarded the {o}", "{p} left the {o}", "{p} put down the {o}"];
const NOISE_TEMPLATES: [&str; 8] = [
    "bill likes the cinema",
    "fred likes the park",
    "julie ate an orange",
    "bill ate a sandwich",
    "fred is hungry",
    "julie is cold",
    "the weather is cold",
    "the weather is sunny",
];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action {
    Move { person: usize, location: usize },
    Pick { person: usize, object: usize },
    Drop { person: usize, object: usize },
}

/// World state of the two-supporting-facts story.
#[derive(Debug, Clone, Default)]
struct World {
    location: [Option<usize>; PERSONS.len()],
    holder: [Option<usize>; OBJECTS.len()],
    last_move: [Option<usize>; PERSONS.len()],
    picked_at: [Option<usize>; OBJECTS.len()],
}

impl World {
    fn apply(&mut self, action: Action, timestep: usize) {
        match action {
            Action::Move { person, location } => {
                self.location[person] = Some(location);
                self.last_move[person] = Some(timestep);
            }
            Action::Pick { person, object } => {
                self.holder[object] = Some(person);
                self.picked_at[object] = Some(timestep);
            }
            Action::Drop { object, .. } => {
                self.holder[object] = None;
                self.picked_at[object] = None;
            }
        }
    }

    fn has_carrier(&self) -> bool {
        self.holder.iter().any(Option::is_some)
    }

    /// Objects whose carrier moved after picking them up, with their two supports.
    fn answerable(&self) -> Vec<(usize, [usize; 2], usize)> {
        (0..OBJECTS.len())
            .filter_map(|o| {
                let p = self.holder[o]?;
                let picked = self.picked_at[o]?;
                let moved = self.last_move[p]?;
                (moved > picked).then(|| (o, [picked, moved], self.location[p].expect("moved")))
            })
            .collect()
    }

    fn random_move<R: Rng>(&self, rng: &mut R, person: usize) -> Action {
        let choices: Vec<usize> = (0..LOCATIONS.len())
            .filter(|&l| Some(l) != self.location[person])
            .collect();
        Action::Move {
            person,
            location: *choices.choose(rng).expect("six locations"),
        }
    }

    fn random_pick<R: Rng>(&self, rng: &mut R) -> Option<Action> {
        let free: Vec<usize> = (0..OBJECTS.len()).filter(|&o| self.holder[o].is_none()).collect();
        let object = *free.choose(rng)?;
        Some(Action::Pick {
            person: rng.gen_range(0..PERSONS.len()),
            object,
        })
    }

    fn random_action<R: Rng>(&self, rng: &mut R) -> Action {
        let roll: f64 = rng.gen();
        if roll < 0.25 {
            if let Some(a) = self.random_pick(rng) {
                return a;
            }
        } else if roll < 0.40 {
            let held: Vec<usize> = (0..OBJECTS.len()).filter(|&o| self.holder[o].is_some()).collect();
            if let Some(&object) = held.choose(rng) {
                let person = self.holder[object].expect("held");
                return Action::Drop { person, object };
            }
        }
        let person = rng.gen_range(0..PERSONS.len());
        self.random_move(rng, person)
    }

    /// Whether a question can still be posed after `remaining` more real facts.
    fn feasible(&self, remaining: usize) -> bool {
        match remaining {
            0 => !self.answerable().is_empty(),
            1 => self.has_carrier(),
            _ => true,
        }
    }
}

fn render<R: Rng>(action: Action, rng: &mut R) -> String {
    match action {
        Action::Move { person, location } => {
            let verb = MOVE_VERBS.choose(rng).expect("verbs");
            if rng.gen_bool(0.15) {
                format!("{} went back to the {}", PERSONS[person], LOCATIONS[location])
            } else {
                format!("{} {verb} to the {}", PERSONS[person], LOCATIONS[location])
            }
        }
        Action::Pick { person, object } => PICK_TEMPLATES
            .choose(rng)
            .expect("templates")
            .replace("{p}", PERSONS[person])
            .replace("{o}", OBJECTS[object]),
        Action::Drop { person, object } => DROP_TEMPLATES
            .choose(rng)
            .expect("templates")
            .replace("{p}", PERSONS[person])
            .replace("{o}", OBJECTS[object]),
    }
}

fn noise_sentence<R: Rng>(rng: &mut R) -> String {
    NOISE_TEMPLATES.choose(rng).expect("templates").to_string()
}

/// Number of noise facts for a requested fraction of the 40 facts.
pub fn noise_count(noise_level: f64) -> usize {
    (noise_level * FACTS_PER_EPISODE as f64).round() as usize
}

/// Nearest documented bucket for an observed noise-fact count.
pub fn noise_bucket(count: usize) -> f64 {
    let frac = count as f64 / FACTS_PER_EPISODE as f64;
    NOISE_LEVELS
        .iter()
        .copied()
        .min_by(|a, b| (a - frac).abs().total_cmp(&(b - frac).abs()))
        .expect("non-empty")
}

fn noise_mask<R: Rng>(rng: &mut R, count: usize) -> Vec<bool> {
    let blocks = QUESTIONS_PER_EPISODE;
    let cap = FACTS_PER_QUESTION - MIN_REAL_PER_BLOCK;
    assert!(count <= blocks * cap, "too much noise for the episode layout");
    // spread noise over blocks uniformly at random, respecting the per-block cap
    let mut per_block = [0usize; QUESTIONS_PER_EPISODE];
    for _ in 0..count {
        let open: Vec<usize> = (0..blocks).filter(|&b| per_block[b] < cap).collect();
        let weights: Vec<usize> = open.iter().map(|&b| cap - per_block[b]).collect();
        let total: usize = weights.iter().sum();
        let mut pick = rng.gen_range(0..total);
        for (&b, &w) in open.iter().zip(&weights) {
            if pick < w {
                per_block[b] += 1;
                break;
            }
            pick -= w;
        }
    }
    let mut mask = Vec::with_capacity(FACTS_PER_EPISODE);
    for &n in &per_block {
        let mut block = vec![false; FACTS_PER_QUESTION];
        for slot in rand::seq::index::sample(rng, FACTS_PER_QUESTION, n) {
            block[slot] = true;
        }
        mask.extend(block);
    }
    mask
}

/// One episode of 40 facts and 5 questions; a question follows every 8 facts.
///
/// Every question asks where a carried object is and is answerable from
/// exactly two facts: the pickup and the carrier's latest later move.
pub fn generate_episode(seed: u64, noise_level: f64) -> Episode {
    let vocab = Vocabulary::babi();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = noise_mask(&mut rng, noise_count(noise_level));
    let mut world = World::default();
    let mut items = Vec::with_capacity(EPISODE_LEN);

    for block in 0..QUESTIONS_PER_EPISODE {
        let block_mask = &mask[block * FACTS_PER_QUESTION..(block + 1) * FACTS_PER_QUESTION];
        let mut real_left = block_mask.iter().filter(|&&n| !n).count();
        for &is_noise in block_mask {
            let timestep = items.len() + 1;
            let sentence = if is_noise {
                noise_sentence(&mut rng)
            } else {
                real_left -= 1;
                let mut action = world.random_action(&mut rng);
                let mut next = world.clone();
                next.apply(action, timestep);
                if !next.feasible(real_left) {
                    action = if real_left == 0 {
                        let carriers: Vec<usize> = world.holder.iter().flatten().copied().collect();
                        let p = *carriers.choose(&mut rng).expect("feasibility kept a carrier");
                        world.random_move(&mut rng, p)
                    } else {
                        world.random_pick(&mut rng).expect("no carrier implies a free object")
                    };
                }
                world.apply(action, timestep);
                render(action, &mut rng)
            };
            items.push(StreamItem {
                kind: ItemKind::Fact,
                timestep,
                tokens: vocab.encode(&sentence, MAX_SENTENCE_LEN),
                answer: None,
                supports: Vec::new(),
                is_noise,
            });
        }
        let candidates = world.answerable();
        let &(object, supports, location) = candidates.choose(&mut rng).expect("forced answerable");
        items.push(StreamItem {
            kind: ItemKind::Question,
            timestep: items.len() + 1,
            tokens: vocab.encode(&format!("where is the {}", OBJECTS[object]), MAX_SENTENCE_LEN),
            answer: Some(vocab.id(LOCATIONS[location])),
            supports: supports.to_vec(),
            is_noise: false,
        });
    }

    Episode {
        items,
        vocabulary_size: vocab.len(),
    }
}

/// Bucket counts of a split: 60/10/10/10 percent over the four noise levels,
/// with the unassigned remainder at level 0.
pub fn split_counts(episode_count: usize) -> [usize; 4] {
    let tenth = episode_count / 10;
    [episode_count - 3 * tenth, tenth, tenth, tenth]
}

fn episode_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.gen()).collect()
}

/// The Noisy split: noise buckets per [`split_counts`], in shuffled order.
pub fn generate_split(seed: u64, episode_count: usize) -> Vec<Episode> {
    let counts = split_counts(episode_count);
    let mut levels: Vec<f64> = counts
        .iter()
        .zip(NOISE_LEVELS)
        .flat_map(|(&n, level)| std::iter::repeat(level).take(n))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_1e7e15);
    levels.shuffle(&mut rng);
    episode_seeds(seed, episode_count)
        .into_iter()
        .zip(levels)
        .map(|(s, level)| generate_episode(s, level))
        .collect()
}

/// The Original split: no noise facts at all.
pub fn generate_original(seed: u64, episode_count: usize) -> Vec<Episode> {
    episode_seeds(seed, episode_count)
        .into_iter()
        .map(|s| generate_episode(s, 0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_bucket_counts() {
        assert_eq!(split_counts(100), [70, 10, 10, 10]);
        assert_eq!(split_counts(10), [7, 1, 1, 1]);
    }

    #[test]
    fn noise_bucket_inverts_noise_count() {
        for level in NOISE_LEVELS {
            assert_eq!(noise_bucket(noise_count(level)), level);
        }
    }

    #[test]
    fn noise_mask_respects_block_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = noise_mask(&mut rng, 24);
            assert_eq!(m.iter().filter(|&&b| b).count(), 24);
            for block in m.chunks(FACTS_PER_QUESTION) {
                assert!(block.iter().filter(|&&b| !b).count() >= MIN_REAL_PER_BLOCK);
            }
        }
    }
}
