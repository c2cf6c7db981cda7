use emr::autodiff::{Array, Graph, ParameterStore, Var};
use emr::nn::{GruCell, Mlp};
use emr::policy::{BiGruPolicy, IndependentPolicy, TransformerPolicy, ValueNet};
use emr::Result;
use rand::Rng;

use super::{check_inputs, check_params, randomize, rng};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub error: f64,
}

type Op = fn(&mut Graph, &[Var], &[usize]) -> Result<Var>;

struct Primitive {
    name: &'static str,
    op: Op,
    shapes: fn(usize, usize) -> Vec<[usize; 2]>,
}

fn same2(r: usize, c: usize) -> Vec<[usize; 2]> {
    vec![[r, c], [r, c]]
}
fn one(r: usize, c: usize) -> Vec<[usize; 2]> {
    vec![[r, c]]
}

fn primitives() -> Vec<Primitive> {
    vec![
        Primitive { name: "add", op: |g, v, _| g.add(v[0], v[1]), shapes: same2 },
        Primitive { name: "sub", op: |g, v, _| g.sub(v[0], v[1]), shapes: same2 },
        Primitive { name: "mul", op: |g, v, _| g.mul(v[0], v[1]), shapes: same2 },
        Primitive {
            name: "add_bias",
            op: |g, v, _| g.add_bias(v[0], v[1]),
            shapes: |r, c| vec![[r, c], [1, c]],
        },
        Primitive { name: "scale", op: |g, v, _| g.scale(v[0], -1.7), shapes: one },
        Primitive { name: "add_scalar", op: |g, v, _| g.add_scalar(v[0], 0.3), shapes: one },
        Primitive {
            name: "mul_const",
            op: |g, v, _| {
                let shape = g.value(v[0]).shape().to_vec();
                let c = Array::new(shape.clone(), (0..shape.iter().product::<usize>()).map(|i| 0.5 - i as f64 * 0.1).collect());
                g.mul_const(v[0], c)
            },
            shapes: one,
        },
        Primitive {
            name: "matmul",
            op: |g, v, _| g.matmul(v[0], v[1]),
            shapes: |r, c| vec![[r, c], [c, r + 1]],
        },
        Primitive { name: "transpose", op: |g, v, _| g.transpose(v[0]), shapes: one },
        Primitive { name: "sigmoid", op: |g, v, _| g.sigmoid(v[0]), shapes: one },
        Primitive { name: "tanh", op: |g, v, _| g.tanh(v[0]), shapes: one },
        Primitive { name: "relu", op: |g, v, _| g.relu(v[0]), shapes: one },
        Primitive { name: "softmax", op: |g, v, _| g.softmax(v[0]), shapes: one },
        Primitive { name: "log_softmax", op: |g, v, _| g.log_softmax(v[0]), shapes: one },
        Primitive {
            name: "concat_cols",
            op: |g, v, _| g.concat_cols(&[v[0], v[1], v[0]]),
            shapes: |r, c| vec![[r, c], [r, c + 1]],
        },
        Primitive {
            name: "concat_rows",
            op: |g, v, _| g.concat_rows(&[v[1], v[0]]),
            shapes: |r, c| vec![[r, c], [r + 2, c]],
        },
        Primitive {
            name: "slice_cols",
            op: |g, v, a| g.slice_cols(v[0], a[0] % g.value(v[0]).cols(), 1),
            shapes: one,
        },
        Primitive {
            name: "slice_rows",
            op: |g, v, a| {
                let r = g.value(v[0]).rows();
                let start = a[0] % r;
                g.slice_rows(v[0], start, r - start)
            },
            shapes: one,
        },
        Primitive {
            name: "row",
            op: |g, v, a| g.row(v[0], a[0] % g.value(v[0]).rows()),
            shapes: one,
        },
        Primitive { name: "sum", op: |g, v, _| g.sum(v[0]), shapes: one },
        Primitive { name: "sum_rows", op: |g, v, _| g.sum_rows(v[0]), shapes: one },
        Primitive {
            name: "sum_groups",
            op: |g, v, _| g.sum_groups(v[0], 2),
            shapes: |r, c| vec![[2 * r, c]],
        },
        Primitive {
            name: "gather_rows",
            op: |g, v, a| {
                let n = g.value(v[0]).rows();
                let ids: Vec<usize> = a.iter().map(|x| x % n).collect();
                g.gather_rows(v[0], &ids)
            },
            shapes: one,
        },
        Primitive {
            name: "pick",
            op: |g, v, a| {
                let (r, c) = (g.value(v[0]).rows(), g.value(v[0]).cols());
                g.pick(v[0], a[0] % r, a[1] % c)
            },
            shapes: one,
        },
    ]
}

/// Every primitive on `per_op` random shapes and values.
pub fn primitive_checks(per_op: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for p in primitives() {
        for case in 0..per_op {
            let (r, c) = (rng.gen_range(1..=4), rng.gen_range(1..=5));
            let inputs: Vec<Array> = (p.shapes)(r, c)
                .iter()
                .map(|s| Array::randn(s, 1.0, &mut rng))
                .collect();
            let args: Vec<usize> = (0..5).map(|_| rng.gen_range(0..16)).collect();
            let op = p.op;
            let error = check_inputs(&inputs, seed + case as u64, |g, v| op(g, v, &args));
            out.push(Check {
                name: format!("{}#{case} ({r}x{c})", p.name),
                error,
            });
        }
    }
    out
}

fn rows(n: usize, k: usize, rng: &mut impl Rng) -> Array {
    Array::randn(&[n, k], 1.0, rng)
}

/// Full networks: parameters and inputs checked separately.
pub fn network_checks(per_net: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    let mut push = |name: String, error: f64| out.push(Check { name, error });

    for case in 0..per_net {
        let n = rng.gen_range(1..=4);
        let k = rng.gen_range(2..=5);

        // independent
        let mut store = ParameterStore::new();
        let p = IndependentPolicy::new(&mut store, "p", k, &mut rng).unwrap();
        randomize(&mut store, 0.7, &mut rng);
        let mem = rows(n, k, &mut rng);
        let entry = rows(1, k, &mut rng);
        let usage = Array::row((0..n).map(|_| rng.gen::<f64>()).collect());
        let e1 = check_params(&mut store, seed + case as u64, |g, s| {
            let m = g.constant(mem.clone())?;
            let e = g.constant(entry.clone())?;
            let u = g.constant(usage.clone())?;
            let logits = p.forward(g, s, m, e, u)?.logits;
            g.log_softmax(logits)
        });
        let e2 = check_inputs(&[mem.clone(), entry.clone(), usage.clone()], seed + case as u64, |g, v| {
            let out = p.forward(g, &store, v[0], v[1], v[2])?;
            let lp = g.log_softmax(out.logits)?;
            g.concat_cols(&[lp, out.usage_node])
        });
        push(format!("independent#{case} params (N={n}, k={k})"), e1);
        push(format!("independent#{case} inputs (N={n}, k={k})"), e2);

        // bigru
        let h = rng.gen_range(2..=4);
        let mut store = ParameterStore::new();
        let p = BiGruPolicy::new(&mut store, "p", k, h, &mut rng).unwrap();
        randomize(&mut store, 0.5, &mut rng);
        let tokens = rows(n + 1, k, &mut rng);
        let e1 = check_params(&mut store, seed + case as u64, |g, s| {
            let t = g.constant(tokens.clone())?;
            p.forward(g, s, t).map(|(l, _)| l)
        });
        let e2 = check_inputs(&[tokens.clone()], seed + case as u64, |g, v| {
            let (logits, hidden) = p.forward(g, &store, v[0])?;
            let hs = g.sum(hidden)?;
            let hs = g.scale(hs, 0.1)?;
            let lp = g.log_softmax(logits)?;
            let first = g.pick(lp, 0, 0)?;
            g.add(first, hs)
        });
        push(format!("bigru#{case} params (N={n}, k={k}, h={h})"), e1);
        push(format!("bigru#{case} inputs (N={n}, k={k}, h={h})"), e2);

        // transformer, alternating position encoding and head counts
        let heads: Vec<usize> = (1..=k).filter(|d| k % d == 0).collect();
        let heads = heads[case % heads.len()];
        let pe = case % 2 == 0;
        let mut store = ParameterStore::new();
        let p = TransformerPolicy::new(&mut store, "p", k, heads, pe, &mut rng).unwrap();
        randomize(&mut store, 0.6, &mut rng);
        let e1 = check_params(&mut store, seed + case as u64, |g, s| {
            let t = g.constant(tokens.clone())?;
            Ok(p.forward(g, s, t)?.logits)
        });
        let e2 = check_inputs(&[tokens.clone()], seed + case as u64, |g, v| {
            let f = p.forward(g, &store, v[0])?;
            let hs = g.sum(f.hidden)?;
            let hs = g.scale(hs, 0.1)?;
            let lp = g.log_softmax(f.logits)?;
            let last = g.pick(lp, 0, n)?;
            g.add(last, hs)
        });
        push(format!("transformer#{case} params (N={n}, k={k}, H={heads}, pe={pe})"), e1);
        push(format!("transformer#{case} inputs (N={n}, k={k}, H={heads}, pe={pe})"), e2);

        // value net, two chained steps so the recurrent path is exercised
        let d = rng.gen_range(2..=5);
        let mut store = ParameterStore::new();
        let net = ValueNet::new(&mut store, "v", d, k, &mut rng).unwrap();
        randomize(&mut store, 0.5, &mut rng);
        let h1 = rows(n + 1, d, &mut rng);
        let h2 = rows(n + 1, d, &mut rng);
        let e1 = check_params(&mut store, seed + case as u64, |g, s| {
            let s0 = net.initial_state(g)?;
            let a = g.constant(h1.clone())?;
            let b = g.constant(h2.clone())?;
            let (v1, s1) = net.forward(g, s, a, s0)?;
            let (v2, _) = net.forward(g, s, b, s1)?;
            g.concat_cols(&[v1, v2])
        });
        let e2 = check_inputs(&[h1.clone(), h2.clone(), rows(1, k, &mut rng)], seed + case as u64, |g, v| {
            let (v1, s1) = net.forward(g, &store, v[0], v[2])?;
            let (v2, _) = net.forward(g, &store, v[1], s1)?;
            g.concat_cols(&[v1, v2])
        });
        push(format!("value#{case} params (N={n}, k={k}, in={d})"), e1);
        push(format!("value#{case} inputs (N={n}, k={k}, in={d})"), e2);

        // building blocks on their own
        let mut store = ParameterStore::new();
        let cell = GruCell::new(&mut store, "gru", k, h, &mut rng).unwrap();
        let mlp = Mlp::new(&mut store, "mlp", &[h, k, 3], &mut rng).unwrap();
        randomize(&mut store, 0.5, &mut rng);
        let xs = rows(n + 1, k, &mut rng);
        let e1 = check_params(&mut store, seed + case as u64, |g, s| {
            let x = g.constant(xs.clone())?;
            let h0 = cell.zero_state(g)?;
            let hs = cell.run(g, s, x, h0, case % 2 == 1)?;
            let hs = g.concat_rows(&hs)?;
            mlp.forward(g, s, hs)
        });
        push(format!("gru+mlp#{case} params (T={}, k={k}, h={h})", n + 1), e1);
    }
    out
}
