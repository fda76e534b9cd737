//! Parameterized building blocks recorded onto a [`Tape`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Group, NnError, ParamId, ParamStore, Result, Tape, Tensor, Var};

/// `y = x W + b` with `W: [in, out]`, `b: [1, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        group: Group,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = store.add_glorot(format!("{name}.w"), group, in_dim, out_dim, rng)?;
        let b = store.add_zeros(format!("{name}.b"), group, &[1, out_dim])?;
        Ok(Self {
            w,
            b,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, tape.param(store, self.w))?;
        tape.add_row(xw, tape.param(store, self.b))
    }
}

/// Per-row layer normalization with learned gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, group: Group, dim: usize) -> Result<Self> {
        let gain = store.add(
            format!("{name}.gain"),
            group,
            Tensor::filled(&[1, dim], 1.0),
        )?;
        let bias = store.add_zeros(format!("{name}.bias"), group, &[1, dim])?;
        Ok(Self {
            gain,
            bias,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let n = tape.layer_norm(x, self.eps)?;
        let scaled = tape.mul_row(n, tape.param(store, self.gain))?;
        tape.add_row(scaled, tape.param(store, self.bias))
    }
}

/// Stack of `Linear -> LayerNorm -> ReLU` hidden layers followed by a plain
/// linear output layer (or a final hidden-style layer when
/// `activate_last` is set).
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<(Linear, Option<LayerNorm>)>,
    activate_last: bool,
}

impl Mlp {
    /// `dims = [in, hidden..., out]`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        group: Group,
        dims: &[usize],
        layer_norm: bool,
        activate_last: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(NnError::Invalid(format!(
                "mlp {name} needs at least two dims"
            )));
        }
        let mut layers = Vec::new();
        for (i, pair) in dims.windows(2).enumerate() {
            let last = i == dims.len() - 2;
            let lin = Linear::new(store, &format!("{name}.{i}"), group, pair[0], pair[1], rng)?;
            let ln = if layer_norm && (!last || activate_last) {
                Some(LayerNorm::new(
                    store,
                    &format!("{name}.{i}.ln"),
                    group,
                    pair[1],
                )?)
            } else {
                None
            };
            layers.push((lin, ln));
        }
        Ok(Self {
            layers,
            activate_last,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |(l, _)| l.out_dim)
    }

    pub fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.layers.iter().map(|(l, _)| l)
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        let n = self.layers.len();
        for (i, (lin, ln)) in self.layers.iter().enumerate() {
            h = lin.forward(tape, store, h)?;
            if i + 1 < n || self.activate_last {
                if let Some(ln) = ln {
                    h = ln.forward(tape, store, h)?;
                }
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

/// Gated recurrent unit with update gate `z` weighting the candidate:
/// `h' = (1 - z) * h + z * n`, so `z = 0` keeps the previous state.
///
/// Gates are packed `[reset | update | candidate]` along the output axis.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bx: ParamId,
    pub bh: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        group: Group,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let h3 = 3 * hidden_dim;
        Ok(Self {
            wx: store.add_glorot(format!("{name}.wx"), group, input_dim, h3, rng)?,
            wh: store.add_glorot(format!("{name}.wh"), group, hidden_dim, h3, rng)?,
            bx: store.add_zeros(format!("{name}.bx"), group, &[1, h3])?,
            bh: store.add_zeros(format!("{name}.bh"), group, &[1, h3])?,
            input_dim,
            hidden_dim,
        })
    }

    /// Batched update: `message: [m, input_dim]`, `h_prev: [m, hidden_dim]`.
    pub fn forward(
        &self,
        tape: &Tape,
        store: &ParamStore,
        message: Var,
        h_prev: Var,
    ) -> Result<Var> {
        let (ms, hs) = (tape.shape(message), tape.shape(h_prev));
        if ms.len() != 2
            || hs.len() != 2
            || ms[1] != self.input_dim
            || hs[1] != self.hidden_dim
            || ms[0] != hs[0]
        {
            return Err(NnError::ShapeMismatch {
                op: "gru_cell",
                left: ms,
                right: hs,
            });
        }
        let hd = self.hidden_dim;
        let gx = tape.add_row(
            tape.matmul(message, tape.param(store, self.wx))?,
            tape.param(store, self.bx),
        )?;
        let gh = tape.add_row(
            tape.matmul(h_prev, tape.param(store, self.wh))?,
            tape.param(store, self.bh),
        )?;
        let reset =
            tape.sigmoid(tape.add(tape.slice_cols(gx, 0, hd)?, tape.slice_cols(gh, 0, hd)?)?);
        let update =
            tape.sigmoid(tape.add(tape.slice_cols(gx, hd, hd)?, tape.slice_cols(gh, hd, hd)?)?);
        let cand_h = tape.mul(reset, tape.slice_cols(gh, 2 * hd, hd)?)?;
        let cand = tape.tanh(tape.add(tape.slice_cols(gx, 2 * hd, hd)?, cand_h)?);
        let delta = tape.mul(update, tape.sub(cand, h_prev)?)?;
        tape.add(h_prev, delta)
    }
}

/// Inverted dropout driven by its own seeded stream.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub p: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(p: f64, seed: u64) -> Self {
        Self {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn keep_mask(&mut self, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let keep = 1.0 - self.p;
        let data = (0..n)
            .map(|_| {
                if self.rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        Tensor::raw(shape.to_vec(), data)
    }
}

/// Scaled dot-product attention with `heads` heads over a shared model
/// width, followed by an output projection.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        group: Group,
        query_dim: usize,
        kv_dim: usize,
        model_dim: usize,
        out_dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || model_dim % heads != 0 {
            return Err(NnError::Invalid(format!(
                "{heads} heads do not divide model dim {model_dim}"
            )));
        }
        Ok(Self {
            query: Linear::new(
                store,
                &format!("{name}.q"),
                group,
                query_dim,
                model_dim,
                rng,
            )?,
            key: Linear::new(store, &format!("{name}.k"), group, kv_dim, model_dim, rng)?,
            value: Linear::new(store, &format!("{name}.v"), group, kv_dim, model_dim, rng)?,
            out: Linear::new(store, &format!("{name}.o"), group, model_dim, out_dim, rng)?,
            heads,
        })
    }

    /// `query: [m, dq]`, `keys`/`values`: `[k, dkv]` with `k >= 1`.
    /// Attention weights pass through `dropout` when given.
    pub fn forward(
        &self,
        tape: &Tape,
        store: &ParamStore,
        query: Var,
        keys: Var,
        values: Var,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Var> {
        let (ks, vs) = (tape.shape(keys), tape.shape(values));
        if ks.len() != 2 || vs.len() != 2 || ks[0] != vs[0] {
            return Err(NnError::ShapeMismatch {
                op: "multi_head_attention",
                left: ks,
                right: vs,
            });
        }
        if ks[0] == 0 {
            return Err(NnError::Invalid("attention over zero keys".into()));
        }
        let q = self.query.forward(tape, store, query)?;
        let k = self.key.forward(tape, store, keys)?;
        let v = self.value.forward(tape, store, values)?;
        let model = self.query.out_dim;
        let hd = model / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * hd, hd)?;
            let kh = tape.slice_cols(k, h * hd, hd)?;
            let vh = tape.slice_cols(v, h * hd, hd)?;
            let scores = tape.scale(tape.matmul(qh, tape.transpose(kh)?)?, scale);
            let mut weights = tape.softmax(scores)?;
            if let Some(d) = dropout.as_deref_mut() {
                if d.p > 0.0 {
                    let mask = d.keep_mask(&tape.shape(weights));
                    weights = tape.mul_const(weights, &mask)?;
                }
            }
            heads.push(tape.matmul(weights, vh)?);
        }
        let joined = tape.concat_cols(&heads)?;
        self.out.forward(tape, store, joined)
    }
}
