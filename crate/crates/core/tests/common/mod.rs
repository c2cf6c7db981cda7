//! Helpers shared by the integration tests and the acceptance target:
//! a central-difference gradient checker and scalar re-implementations of
//! the policy formulas that do not touch the graph code.
#![allow(dead_code)]

use emr::autodiff::{Array, Graph, ParameterStore, Var};
use emr::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Overwrites every parameter (biases included) with Gaussian noise.
pub fn randomize(store: &mut ParameterStore, std: f64, rng: &mut impl Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.value_mut(id).data_mut() {
            *v = std * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
    }
}

/// `||a - b|| / (||a|| + ||b||)`, zero when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Reduces a node of any shape to a scalar with fixed random weights, so
/// that every output element contributes a distinct amount.
fn project(g: &mut Graph, out: Var, weights: &Array) -> Result<Var> {
    let w = g.mul_const(out, weights.clone())?;
    g.sum(w)
}

fn weights_for(shape: &[usize], seed: u64) -> Array {
    Array::randn(shape, 1.0, &mut rng(seed ^ 0x5eed))
}

/// Gradient check with respect to constant inputs.
pub fn check_inputs<F>(inputs: &[Array], seed: u64, f: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let run = |xs: &[Array], w: Option<&Array>| -> (Graph, Vec<Var>, Var, Array) {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone()).unwrap()).collect();
        let out = f(&mut g, &vars).unwrap();
        let w = w.cloned().unwrap_or_else(|| weights_for(g.value(out).shape(), seed));
        let root = project(&mut g, out, &w).unwrap();
        (g, vars, root, w)
    };
    let (mut g, vars, root, w) = run(inputs, None);
    g.backward(root).unwrap();
    let mut analytic = Vec::new();
    for (v, x) in vars.iter().zip(inputs) {
        match g.grad(*v) {
            Some(gr) => analytic.extend_from_slice(gr.data()),
            None => analytic.extend(std::iter::repeat(0.0).take(x.len())),
        }
    }
    let mut numeric = Vec::new();
    let mut xs = inputs.to_vec();
    for i in 0..xs.len() {
        for j in 0..xs[i].len() {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + FD_STEP;
            let (g1, _, r1, _) = run(&xs, Some(&w));
            xs[i].data_mut()[j] = orig - FD_STEP;
            let (g2, _, r2, _) = run(&xs, Some(&w));
            xs[i].data_mut()[j] = orig;
            numeric.push((g1.scalar_value(r1) - g2.scalar_value(r2)) / (2.0 * FD_STEP));
        }
    }
    rel_error(&analytic, &numeric)
}

/// Gradient check with respect to every parameter in `store`.
pub fn check_params<F>(store: &mut ParameterStore, seed: u64, f: F) -> f64
where
    F: Fn(&mut Graph, &ParameterStore) -> Result<Var>,
{
    let run = |store: &ParameterStore, w: Option<&Array>| -> (Graph, Var, Array) {
        let mut g = Graph::new();
        let out = f(&mut g, store).unwrap();
        let w = w.cloned().unwrap_or_else(|| weights_for(g.value(out).shape(), seed));
        let root = project(&mut g, out, &w).unwrap();
        (g, root, w)
    };
    let (mut g, root, w) = run(store, None);
    g.backward(root).unwrap();
    let ids: Vec<_> = store.ids().collect();
    let mut analytic = Vec::new();
    for &id in &ids {
        let len = store.value(id).len();
        match g.param_grads().find(|(pid, _)| *pid == id) {
            Some((_, gr)) => analytic.extend_from_slice(gr.data()),
            None => analytic.extend(std::iter::repeat(0.0).take(len)),
        }
    }
    let mut numeric = Vec::new();
    for &id in &ids {
        for j in 0..store.value(id).len() {
            let orig = store.value(id).data()[j];
            store.value_mut(id).data_mut()[j] = orig + FD_STEP;
            let (g1, r1, _) = run(store, Some(&w));
            store.value_mut(id).data_mut()[j] = orig - FD_STEP;
            let (g2, r2, _) = run(store, Some(&w));
            store.value_mut(id).data_mut()[j] = orig;
            numeric.push((g1.scalar_value(r1) - g2.scalar_value(r2)) / (2.0 * FD_STEP));
        }
    }
    rel_error(&analytic, &numeric)
}

// ---------------------------------------------------------------------------
// scalar oracles

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    let mut z = 0.0;
    let mut out = Vec::new();
    for &x in xs {
        let e = (x - m).exp();
        out.push(e);
        z += e;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    out
}

/// Independent policy, one slot at a time. Returns `(g, pi, new usage)`.
pub fn independent_oracle(
    memory: &[Vec<f64>],
    entry: &[f64],
    usage: &[f64],
    gate_w: &[f64],
    gate_b: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = memory.len();
    let mut raw = vec![0.0; n];
    for i in 0..n {
        raw[i] = dot(&memory[i], entry);
    }
    let a = softmax(&raw);
    let mut g = vec![0.0; n];
    let mut v = vec![0.0; n];
    for i in 0..n {
        let gamma = 1.0 / (1.0 + (-(dot(gate_w, &memory[i]) + gate_b)).exp());
        g[i] = a[i] - gamma * usage[i];
        v[i] = 0.1 * usage[i] + 0.9 * a[i];
    }
    let pi = softmax(&g);
    (g, pi, v)
}

/// Row-major `rows x cols` matrix as nested vectors.
pub fn nested(a: &Array) -> Vec<Vec<f64>> {
    (0..a.rows()).map(|r| a.row_slice(r).to_vec()).collect()
}

/// `x` is a row vector, `w` is `in x out`.
pub fn affine(x: &[f64], w: &[Vec<f64>], b: Option<&[f64]>) -> Vec<f64> {
    let out = w[0].len();
    let mut y = vec![0.0; out];
    for j in 0..out {
        let mut s = 0.0;
        for i in 0..x.len() {
            s += x[i] * w[i][j];
        }
        if let Some(b) = b {
            s += b[j];
        }
        y[j] = s;
    }
    y
}

pub struct TransformerWeights {
    pub wq: Vec<Vec<f64>>,
    pub wk: Vec<Vec<f64>>,
    pub wv: Vec<Vec<f64>>,
    pub wo: Vec<Vec<f64>>,
    /// Three `(weight, bias)` pairs with ReLU between them.
    pub mlp: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
    pub heads: usize,
    pub position_encoding: bool,
}

/// Multi-head attention policy scores, one scalar at a time. Returns the
/// `N+1` logits.
pub fn transformer_oracle(tokens: &[Vec<f64>], w: &TransformerWeights) -> Vec<f64> {
    let rows = tokens.len();
    let k = tokens[0].len();
    let mut x = tokens.to_vec();
    if w.position_encoding {
        for (p, row) in x.iter_mut().enumerate() {
            let pos = (p + 1) as f64;
            for (i, v) in row.iter_mut().enumerate() {
                let pair = (i - i % 2) as f64;
                let angle = pos / 10000f64.powf(pair / k as f64);
                *v += if i % 2 == 0 { angle.sin() } else { angle.cos() };
            }
        }
    }
    let q: Vec<Vec<f64>> = x.iter().map(|r| affine(r, &w.wq, None)).collect();
    let kk: Vec<Vec<f64>> = x.iter().map(|r| affine(r, &w.wk, None)).collect();
    let v: Vec<Vec<f64>> = x.iter().map(|r| affine(r, &w.wv, None)).collect();
    let d = k / w.heads;
    let mut concat = vec![vec![0.0; k]; rows];
    for h in 0..w.heads {
        let cols = h * d..(h + 1) * d;
        for i in 0..rows {
            let mut scores = vec![0.0; rows];
            for j in 0..rows {
                let mut s = 0.0;
                for c in cols.clone() {
                    s += q[i][c] * kk[j][c];
                }
                scores[j] = s / (d as f64).sqrt();
            }
            let a = softmax(&scores);
            for c in cols.clone() {
                let mut s = 0.0;
                for j in 0..rows {
                    s += a[j] * v[j][c];
                }
                concat[i][c] = s;
            }
        }
    }
    let mut logits = Vec::with_capacity(rows);
    for row in &concat {
        let mut h = affine(row, &w.wo, None);
        for (li, (wl, bl)) in w.mlp.iter().enumerate() {
            h = affine(&h, wl, Some(bl));
            if li + 1 < w.mlp.len() {
                for z in h.iter_mut() {
                    if *z < 0.0 {
                        *z = 0.0;
                    }
                }
            }
        }
        logits.push(h[0]);
    }
    logits
}

/// `G_t = sum_j gamma^j R_{t+j}` by brute force.
pub fn returns_oracle(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    for t in 0..rewards.len() {
        let mut acc = 0.0;
        for j in t..rewards.len() {
            acc += gamma.powi((j - t) as i32) * rewards[j];
        }
        out[t] = acc;
    }
    out
}

/// Largest elementwise `|a - b| / max(1, |b|)`.
pub fn max_scaled_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

pub mod gradients;
pub mod oracles;
pub mod policies;
