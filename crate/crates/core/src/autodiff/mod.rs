//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Graph`] is built fresh for every rollout (define-by-run) and
//! parameters enter it through a shared [`ParameterStore`].

mod array;
mod checkpoint;
mod graph;
mod params;

pub use array::Array;
pub use checkpoint::{load_parameters, save_parameters, ManifestEntry, BLOB_FILE, MANIFEST_FILE};
pub use graph::{log_sum_exp, sigmoid, softmax_slice, Graph, Var};
pub use params::{AdamConfig, Gradients, ParamId, ParameterStore};
