//! Layers shared by the solver, the policies and the value network.

use rand::Rng;

use crate::autodiff::{Array, Graph, ParamId, ParameterStore, Var};
use crate::error::Result;

/// Standard deviation of the Gaussian used for weight matrices unless a
/// layer asks for something else.
pub const INIT_STD: f64 = 0.1;

/// Glorot-normal standard deviation for an `in_dim x out_dim` matrix.
pub fn glorot_std(in_dim: usize, out_dim: usize) -> f64 {
    (2.0 / (in_dim + out_dim) as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct Linear {
    weight: ParamId,
    bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        Self::with_std(store, name, in_dim, out_dim, bias, INIT_STD, rng)
    }

    pub fn with_std<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.register(
            format!("{name}.weight"),
            Array::randn(&[in_dim, out_dim], std, rng),
        )?;
        let bias = if bias {
            Some(store.register(format!("{name}.bias"), Array::zeros(&[1, out_dim]))?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    /// `x W + b` for an `n x in_dim` input.
    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(store, b);
                g.add_bias(y, b)
            }
            None => Ok(y),
        }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.bias
    }
}

/// Feed-forward stack with ReLU between layers (none after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// `widths = [in, hidden.., out]`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        widths: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, store, h)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }
}

/// Gated recurrent unit.
///
/// ```text
/// r  = sigmoid(x W_ir + h W_hr + b_r)
/// z  = sigmoid(x W_iz + h W_hz + b_z)
/// n  = tanh(x W_in + b_in + r * (h W_hn + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone)]
pub struct GruCell {
    input_r: Linear,
    input_z: Linear,
    input_n: Linear,
    hidden_r: Linear,
    hidden_z: Linear,
    hidden_n: Linear,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        in_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            input_r: Linear::new(store, &format!("{name}.input_r"), in_dim, hidden_dim, true, rng)?,
            input_z: Linear::new(store, &format!("{name}.input_z"), in_dim, hidden_dim, true, rng)?,
            input_n: Linear::new(store, &format!("{name}.input_n"), in_dim, hidden_dim, true, rng)?,
            hidden_r: Linear::new(store, &format!("{name}.hidden_r"), hidden_dim, hidden_dim, false, rng)?,
            hidden_z: Linear::new(store, &format!("{name}.hidden_z"), hidden_dim, hidden_dim, false, rng)?,
            hidden_n: Linear::new(store, &format!("{name}.hidden_n"), hidden_dim, hidden_dim, true, rng)?,
            hidden_dim,
        })
    }

    pub fn zero_state(&self, g: &mut Graph) -> Result<Var> {
        g.constant(Array::zeros(&[1, self.hidden_dim]))
    }

    fn gates(&self, g: &mut Graph, store: &ParameterStore, xs: Var) -> Result<[Var; 3]> {
        Ok([
            self.input_r.forward(g, store, xs)?,
            self.input_z.forward(g, store, xs)?,
            self.input_n.forward(g, store, xs)?,
        ])
    }

    fn advance(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        [xr, xz, xn]: [Var; 3],
        h: Var,
    ) -> Result<Var> {
        let hr = self.hidden_r.forward(g, store, h)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r)?;
        let hz = self.hidden_z.forward(g, store, h)?;
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z)?;
        let hn = self.hidden_n.forward(g, store, h)?;
        let gated = g.mul(r, hn)?;
        let n = g.add(xn, gated)?;
        let n = g.tanh(n)?;
        // n + z * (h - n)
        let diff = g.sub(h, n)?;
        let carry = g.mul(z, diff)?;
        g.add(n, carry)
    }

    /// One step for a `1 x in_dim` input.
    pub fn step(&self, g: &mut Graph, store: &ParameterStore, x: Var, h: Var) -> Result<Var> {
        let gates = self.gates(g, store, x)?;
        self.advance(g, store, gates, h)
    }

    /// Runs over the rows of `xs` (forward or reversed order) and returns the
    /// hidden state after each row, indexed by row position.
    pub fn run(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        xs: Var,
        h0: Var,
        reverse: bool,
    ) -> Result<Vec<Var>> {
        let n = g.value(xs).rows();
        let [ar, az, an] = self.gates(g, store, xs)?;
        let mut out = vec![h0; n];
        let mut h = h0;
        let order: Vec<usize> = if reverse {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        };
        for i in order {
            let gates = [g.row(ar, i)?, g.row(az, i)?, g.row(an, i)?];
            h = self.advance(g, store, gates, h)?;
            out[i] = h;
        }
        Ok(out)
    }
}
