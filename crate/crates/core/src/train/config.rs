use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::encoder::EncoderKind;
use crate::error::{EmrError, Result};
use crate::policy::PolicyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Advantage actor-critic on the terminal (next question) reward.
    A2c,
    /// Policy-only REINFORCE on the per-step accuracy difference.
    ReinforceDiff,
}

impl FromStr for Algorithm {
    type Err = EmrError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a2c" => Ok(Self::A2c),
            "reinforce_diff" => Ok(Self::ReinforceDiff),
            _ => Err(EmrError::Config(format!("unknown algorithm `{s}`"))),
        }
    }
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::A2c => "a2c",
            Self::ReinforceDiff => "reinforce_diff",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Noisy,
    Original,
}

impl FromStr for Split {
    type Err = EmrError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noisy" => Ok(Self::Noisy),
            "original" => Ok(Self::Original),
            _ => Err(EmrError::Config(format!("unknown split `{s}`"))),
        }
    }
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Noisy => "noisy",
            Self::Original => "original",
        }
    }
}

/// Everything needed to rebuild a model and rerun its training.
///
/// Serialised as flat `key = value` lines; `#` starts a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub policy: PolicyKind,
    pub memory_slots: usize,
    pub embed_dim: usize,
    pub encoder: EncoderKind,
    pub hops: usize,
    pub temporal: bool,
    pub heads: usize,
    pub hidden_dim: usize,
    pub position_encoding: bool,

    pub algorithm: Algorithm,
    pub discount: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub solver_coef: f64,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub workers: usize,
    /// Stream items consumed across all workers.
    pub total_steps: usize,
    pub seed: u64,

    pub split: Split,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub eval_interval: usize,
    /// Oracle-memory solver updates before joint training.
    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
    /// Leading pretraining updates without the attention softmax.
    pub linear_start_steps: usize,
    pub output_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::EmrBiGru,
            memory_slots: 20,
            embed_dim: 20,
            encoder: EncoderKind::Memn2nValueSum,
            hops: 3,
            temporal: true,
            heads: 4,
            hidden_dim: 20,
            position_encoding: true,
            algorithm: Algorithm::A2c,
            discount: 0.1,
            entropy_coef: 0.01,
            value_coef: 0.5,
            solver_coef: 1.0,
            learning_rate: 0.0005,
            grad_clip: 40.0,
            workers: 1,
            total_steps: 400_000,
            seed: 0,
            split: Split::Noisy,
            train_episodes: 10_000,
            eval_episodes: 200,
            eval_interval: 20_000,
            pretrain_steps: 45_000,
            pretrain_lr: 0.003,
            linear_start_steps: 10_000,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| EmrError::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_switch(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(EmrError::Config(format!("bad value `{value}` for `{key}`"))),
    }
}

fn switch(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "policy" => self.policy = value.parse()?,
            "memory_slots" => self.memory_slots = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "encoder" => self.encoder = value.parse()?,
            "hops" => self.hops = parse(key, value)?,
            "tying" if value == "adjacent" => {}
            "temporal" => self.temporal = parse_switch(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "position_encoding" => self.position_encoding = parse_switch(key, value)?,
            "algorithm" => self.algorithm = value.parse()?,
            "discount" => self.discount = parse(key, value)?,
            "entropy_coef" => self.entropy_coef = parse(key, value)?,
            "value_coef" => self.value_coef = parse(key, value)?,
            "solver_coef" => self.solver_coef = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "total_steps" => self.total_steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "split" => self.split = value.parse()?,
            "train_episodes" => self.train_episodes = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "eval_interval" => self.eval_interval = parse(key, value)?,
            "pretrain_steps" => self.pretrain_steps = parse(key, value)?,
            "pretrain_lr" => self.pretrain_lr = parse(key, value)?,
            "linear_start_steps" => self.linear_start_steps = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(EmrError::Config(format!("unknown key `{key}` = `{value}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(EmrError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.discount) {
            return fail("discount must lie in [0, 1]");
        }
        if self.memory_slots == 0 {
            return fail("memory_slots must be positive");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.hops == 0 {
            return fail("embed_dim, hidden_dim and hops must be positive");
        }
        if self.workers == 0 {
            return fail("workers must be positive");
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(EmrError::HeadsDoNotDivide {
                dim: self.embed_dim,
                heads: self.heads,
            });
        }
        if self.eval_interval == 0 {
            return fail("eval_interval must be positive");
        }
        if self.train_episodes == 0 {
            return fail("train_episodes must be positive");
        }
        for (name, v) in [
            ("entropy_coef", self.entropy_coef),
            ("value_coef", self.value_coef),
            ("solver_coef", self.solver_coef),
            ("learning_rate", self.learning_rate),
            ("grad_clip", self.grad_clip),
            ("pretrain_lr", self.pretrain_lr),
        ] {
            if !v.is_finite() || v < 0.0 {
                return fail(&format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| EmrError::Parse {
                line: i + 1,
                message: format!("expected key = value, got `{line}`"),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| EmrError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_str(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("policy", self.policy.to_string());
        kv("memory_slots", self.memory_slots.to_string());
        kv("embed_dim", self.embed_dim.to_string());
        kv("encoder", self.encoder.to_string());
        kv("hops", self.hops.to_string());
        kv("tying", "adjacent".into());
        kv("temporal", switch(self.temporal).into());
        kv("heads", self.heads.to_string());
        kv("hidden_dim", self.hidden_dim.to_string());
        kv("position_encoding", switch(self.position_encoding).into());
        kv("algorithm", self.algorithm.as_str().into());
        kv("discount", self.discount.to_string());
        kv("entropy_coef", self.entropy_coef.to_string());
        kv("value_coef", self.value_coef.to_string());
        kv("solver_coef", self.solver_coef.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("grad_clip", self.grad_clip.to_string());
        kv("workers", self.workers.to_string());
        kv("total_steps", self.total_steps.to_string());
        kv("seed", self.seed.to_string());
        kv("split", self.split.as_str().into());
        kv("train_episodes", self.train_episodes.to_string());
        kv("eval_episodes", self.eval_episodes.to_string());
        kv("eval_interval", self.eval_interval.to_string());
        kv("pretrain_steps", self.pretrain_steps.to_string());
        kv("pretrain_lr", self.pretrain_lr.to_string());
        kv("linear_start_steps", self.linear_start_steps.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// FNV-1a hash of every key except `output_dir`, so a run moved or
    /// repeated elsewhere keeps its identity.
    pub fn digest(&self) -> String {
        let text = self.to_text();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.lines().filter(|l| !l.starts_with("output_dir")).flat_map(|l| l.bytes().chain([b'\n'])) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}
