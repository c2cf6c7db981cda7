//! Python bindings: episode generation, training, evaluation and inspection.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use emr::autodiff::ParameterStore;
use emr::eval;
use emr::tasks::{self, ItemKind, Vocabulary};
use emr::train::{self, Agent, Split, TrainConfig};
use emr::EmrError;

fn to_py(err: EmrError) -> PyErr {
    match err {
        EmrError::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_split(split: &str) -> PyResult<Split> {
    split.parse().map_err(to_py)
}

/// One stream item.
#[pyclass(name = "StreamItem", get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyStreamItem {
    kind: String,
    timestep: usize,
    tokens: Vec<usize>,
    text: String,
    answer: Option<usize>,
    supports: Vec<usize>,
    is_noise: bool,
}

#[pyclass(name = "Episode", frozen, from_py_object)]
#[derive(Clone)]
struct PyEpisode {
    inner: tasks::Episode,
}

#[pymethods]
impl PyEpisode {
    #[getter]
    fn items(&self) -> Vec<PyStreamItem> {
        let vocab = Vocabulary::babi();
        self.inner
            .items
            .iter()
            .map(|it| PyStreamItem {
                kind: it.kind.as_str().to_string(),
                timestep: it.timestep,
                tokens: it.tokens.clone(),
                text: vocab.decode(&it.tokens),
                answer: it.answer,
                supports: it.supports.clone(),
                is_noise: it.is_noise,
            })
            .collect()
    }

    #[getter]
    fn noise_level(&self) -> f64 {
        self.inner.noise_level()
    }

    #[getter]
    fn noise_facts(&self) -> usize {
        self.inner.noise_facts()
    }

    fn questions(&self) -> Vec<usize> {
        self.inner
            .items
            .iter()
            .filter(|it| it.kind == ItemKind::Question)
            .map(|it| it.timestep)
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.items.len()
    }
}

#[pyfunction]
fn generate_episode(seed: u64, noise_level: f64) -> PyEpisode {
    PyEpisode {
        inner: tasks::generate_episode(seed, noise_level),
    }
}

#[pyfunction]
#[pyo3(signature = (seed, episodes, split = "noisy"))]
fn generate_split(seed: u64, episodes: usize, split: &str) -> PyResult<Vec<PyEpisode>> {
    Ok(train::split_episodes(parse_split(split)?, seed, episodes)
        .into_iter()
        .map(|inner| PyEpisode { inner })
        .collect())
}

#[pyfunction]
fn vocabulary() -> Vec<String> {
    let v = Vocabulary::babi();
    (0..v.len()).map(|i| v.token(i).to_string()).collect()
}

#[pyfunction]
#[pyo3(signature = (rewards, gamma))]
fn discounted_returns(rewards: Vec<f64>, gamma: f64) -> Vec<f64> {
    train::discounted_returns(&rewards, gamma)
}

/// Key = value training configuration.
#[pyclass(name = "TrainConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyTrainConfig {
    inner: TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: TrainConfig::parse_str(text).map_err(to_py)?,
        })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(to_py)?;
        self.inner.validate().map_err(to_py)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    fn __repr__(&self) -> String {
        format!("TrainConfig(policy={}, memory_slots={})", self.inner.policy, self.inner.memory_slots)
    }
}

/// Trains and returns the learning curve as a list of dicts.
#[pyfunction]
fn run_training(py: Python<'_>, config: &PyTrainConfig) -> PyResult<Vec<std::collections::HashMap<String, f64>>> {
    let cfg = config.inner.clone();
    let outcome = py.detach(move || train::train(&cfg)).map_err(to_py)?;
    Ok(outcome
        .curves
        .iter()
        .map(|r| {
            [
                ("step", r.step as f64),
                ("train_accuracy", r.train_accuracy),
                ("eval_accuracy", r.eval_accuracy),
                ("eval_solvable", r.eval_solvable),
                ("policy_loss", r.policy_loss),
                ("value_loss", r.value_loss),
                ("entropy", r.entropy),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
        })
        .collect())
}

/// A trained (or freshly initialised) scheduler plus solver.
#[pyclass(name = "Model")]
struct PyModel {
    config: TrainConfig,
    store: ParameterStore,
    agent: Agent,
}

#[pymethods]
impl PyModel {
    /// Builds untrained parameters from a config.
    #[new]
    fn new(config: &PyTrainConfig) -> PyResult<Self> {
        let mut store = ParameterStore::new();
        let agent = Agent::new(&mut store, &config.inner).map_err(to_py)?;
        Ok(Self {
            config: config.inner.clone(),
            store,
            agent,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (config, store, agent) = train::load_checkpoint(&path).map_err(to_py)?;
        Ok(Self { config, store, agent })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        train::save_checkpoint(&path, &self.config, &self.store).map_err(to_py)
    }

    #[getter]
    fn policy(&self) -> String {
        self.agent.scheduler.kind().to_string()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.store.ids().map(|id| self.store.value(id).len()).sum()
    }

    /// Evaluation report as a JSON string.
    #[pyo3(signature = (episodes, memory_slots, seed = 0))]
    fn evaluate(&self, episodes: Vec<PyEpisode>, memory_slots: usize, seed: u64) -> PyResult<String> {
        let eps: Vec<tasks::Episode> = episodes.into_iter().map(|e| e.inner).collect();
        let rep = eval::evaluate(&self.agent, &self.store, &eps, memory_slots, seed, &self.config.digest())
            .map_err(to_py)?;
        rep.to_json().map_err(to_py)
    }

    /// Memory trace of one episode, as text or JSON.
    #[pyo3(signature = (episode, memory_slots = None, json = false))]
    fn inspect(&self, episode: &PyEpisode, memory_slots: Option<usize>, json: bool) -> PyResult<String> {
        let slots = memory_slots.unwrap_or(self.config.memory_slots);
        let dump = eval::inspect(&self.agent, &self.store, &episode.inner, slots, 0).map_err(to_py)?;
        if json {
            dump.to_json().map_err(to_py)
        } else {
            Ok(dump.render())
        }
    }
}

#[pymodule]
fn emr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStreamItem>()?;
    m.add_class::<PyEpisode>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_episode, m)?)?;
    m.add_function(wrap_pyfunction!(generate_split, m)?)?;
    m.add_function(wrap_pyfunction!(vocabulary, m)?)?;
    m.add_function(wrap_pyfunction!(discounted_returns, m)?)?;
    m.add_function(wrap_pyfunction!(run_training, m)?)?;
    Ok(())
}
