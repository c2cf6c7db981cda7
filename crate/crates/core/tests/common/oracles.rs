use emr::autodiff::{Array, Graph, ParameterStore};
use emr::policy::{IndependentPolicy, TransformerPolicy};
use emr::train::discounted_returns;
use rand::Rng;

use super::*;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub instances: usize,
    /// Largest `|lib - oracle| / max(1, |oracle|)` seen.
    pub worst: f64,
    pub bitwise_equal: usize,
}

impl OracleResult {
    fn new() -> Self {
        Self { instances: 0, worst: 0.0, bitwise_equal: 0 }
    }

    fn record(&mut self, lib: &[f64], oracle: &[f64]) {
        self.instances += 1;
        self.worst = self.worst.max(max_scaled_diff(lib, oracle));
        if lib.iter().zip(oracle).all(|(a, b)| a.to_bits() == b.to_bits()) {
            self.bitwise_equal += 1;
        }
    }
}

pub fn independent(instances: usize, seed: u64) -> OracleResult {
    let mut rng = rng(seed);
    let mut res = OracleResult::new();
    for _ in 0..instances {
        let n = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=4);
        let mut store = ParameterStore::new();
        let p = IndependentPolicy::new(&mut store, "p", k, &mut rng).unwrap();
        randomize(&mut store, 1.0, &mut rng);
        let mem = Array::randn(&[n, k], 1.0, &mut rng);
        let entry = Array::randn(&[1, k], 1.0, &mut rng);
        let usage: Vec<f64> = (0..n).map(|_| rng.gen()).collect();

        let mut g = Graph::new();
        let m = g.constant(mem.clone()).unwrap();
        let e = g.constant(entry.clone()).unwrap();
        let u = g.constant(Array::row(usage.clone())).unwrap();
        let out = p.forward(&mut g, &store, m, e, u).unwrap();
        let logits = g.value(out.logits).data().to_vec();
        let probs = emr::autodiff::softmax_slice(&logits);

        let (og, opi, ov) = independent_oracle(
            &nested(&mem),
            entry.data(),
            &usage,
            store.value(p.gate_weight).data(),
            store.value(p.gate_bias).data()[0],
        );
        let lib: Vec<f64> = [logits, probs, out.usage].concat();
        let oracle: Vec<f64> = [og, opi, ov].concat();
        res.record(&lib, &oracle);
    }
    res
}

pub fn transformer(instances: usize, seed: u64) -> OracleResult {
    let mut rng = rng(seed);
    let mut res = OracleResult::new();
    for case in 0..instances {
        let n = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=4);
        let divisors: Vec<usize> = (1..=k).filter(|d| k % d == 0).collect();
        let heads = divisors[rng.gen_range(0..divisors.len())];
        let pe = case % 2 == 0;
        let mut store = ParameterStore::new();
        let p = TransformerPolicy::new(&mut store, "p", k, heads, pe, &mut rng).unwrap();
        randomize(&mut store, 0.8, &mut rng);
        let tokens = Array::randn(&[n + 1, k], 1.0, &mut rng);

        let mut g = Graph::new();
        let t = g.constant(tokens.clone()).unwrap();
        let out = p.forward(&mut g, &store, t).unwrap();
        let logits = g.value(out.logits).data().to_vec();

        let w = |id| nested(store.value(id));
        let weights = TransformerWeights {
            wq: w(p.query.weight()),
            wk: w(p.key.weight()),
            wv: w(p.value.weight()),
            wo: w(p.output.weight()),
            mlp: p
                .head
                .layers()
                .iter()
                .map(|l| (w(l.weight()), store.value(l.bias().unwrap()).data().to_vec()))
                .collect(),
            heads,
            position_encoding: pe,
        };
        let oracle = transformer_oracle(&nested(&tokens), &weights);
        let lib = [logits.clone(), emr::autodiff::softmax_slice(&logits)].concat();
        let oracle = [oracle.clone(), softmax(&oracle)].concat();
        res.record(&lib, &oracle);
    }
    res
}

pub fn returns(instances: usize, seed: u64) -> OracleResult {
    let mut rng = rng(seed);
    let mut res = OracleResult::new();
    for case in 0..instances {
        let len = rng.gen_range(1..=40);
        let gamma = match case % 4 {
            0 => 0.1,
            1 => 0.0,
            2 => 1.0,
            _ => rng.gen(),
        };
        let rewards: Vec<f64> = (0..len).map(|_| [-1.0, 0.0, 1.0][rng.gen_range(0..3)]).collect();
        res.record(&discounted_returns(&rewards, gamma), &returns_oracle(&rewards, gamma));
    }
    res
}
