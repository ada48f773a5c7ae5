//! GRU cell plus unidirectional and bi-directional sequence runners.
//!
//! Gate convention (fixed, and recorded in checkpoints as `update-candidate`):
//!
//! ```text
//! u = σ(W_z x + U_z h + b_z)
//! r = σ(W_r x + U_r h + b_r)
//! c = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = (1 − u) ⊙ h + u ⊙ c
//! ```
//!
//! All runners work on batches: inputs are `[batch, width]` tensors.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, ParamStore, Tape, Tensor, Var};

/// Identifier written into checkpoints for the gate convention above.
pub const GATE_CONVENTION: &str = "update-candidate";

const NAMES: [&str; 9] = [
    "W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h",
];

/// Weights of one GRU cell. `W_*` are `[H, I]`, `U_*` are `[H, H]`, `b_*`
/// are length `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[hidden, input]);
        let u = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[hidden]);
        Self {
            w_z: w(),
            u_z: u(),
            b_z: b(),
            w_r: w(),
            u_r: u(),
            b_r: b(),
            w_h: w(),
            u_h: u(),
            b_h: b(),
        }
    }

    /// Glorot-uniform matrices, zero biases.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let mut p = Self::zeros(input, hidden);
        p.w_z = glorot_uniform(rng, hidden, input);
        p.u_z = glorot_uniform(rng, hidden, hidden);
        p.w_r = glorot_uniform(rng, hidden, input);
        p.u_r = glorot_uniform(rng, hidden, hidden);
        p.w_h = glorot_uniform(rng, hidden, input);
        p.u_h = glorot_uniform(rng, hidden, hidden);
        p
    }

    pub fn input(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w_z.rows()
    }

    fn tensors(&self) -> [&Tensor; 9] {
        [
            &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h, &self.u_h,
            &self.b_h,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (i, h) = (self.input(), self.hidden());
        for (name, t) in NAMES.iter().zip(self.tensors()) {
            let expected: &[usize] = match name.as_bytes()[0] {
                b'W' => &[h, i],
                b'U' => &[h, h],
                _ => &[h],
            };
            if t.shape() != expected {
                return Err(Error::shape("gru_params", expected, t.shape()));
            }
        }
        Ok(())
    }

    /// Inserts the nine tensors as `{prefix}.W_z` and so on.
    pub fn register(&self, store: &mut ParamStore, prefix: &str) -> Result<()> {
        self.validate()?;
        for (name, t) in NAMES.iter().zip(self.tensors()) {
            store.insert(format!("{prefix}.{name}"), t.clone())?;
        }
        Ok(())
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |n: &str| store.get(&format!("{prefix}.{n}")).cloned();
        let p = Self {
            w_z: get("W_z")?,
            u_z: get("U_z")?,
            b_z: get("b_z")?,
            w_r: get("W_r")?,
            u_r: get("U_r")?,
            b_r: get("b_r")?,
            w_h: get("W_h")?,
            u_h: get("U_h")?,
            b_h: get("b_h")?,
        };
        p.validate()?;
        Ok(p)
    }
}

/// A GRU cell whose weights live on a tape.
#[derive(Clone, Debug)]
pub struct GruCell<'t> {
    w_z: Var<'t>,
    u_z: Var<'t>,
    b_z: Var<'t>,
    w_r: Var<'t>,
    u_r: Var<'t>,
    b_r: Var<'t>,
    w_h: Var<'t>,
    u_h: Var<'t>,
    b_h: Var<'t>,
    input: usize,
    hidden: usize,
}

impl<'t> GruCell<'t> {
    /// Binds `{prefix}.*` entries of `store` as differentiable parameters.
    pub fn bind(tape: &'t Tape, store: &ParamStore, prefix: &str) -> Result<Self> {
        let p = |n: &str| tape.param(store, &format!("{prefix}.{n}"));
        let w_z = p("W_z")?;
        let u_z = p("U_z")?;
        let (hidden, input) = (w_z.value().rows(), w_z.value().cols());
        Ok(Self {
            w_z,
            u_z,
            b_z: p("b_z")?,
            w_r: p("W_r")?,
            u_r: p("U_r")?,
            b_r: p("b_r")?,
            w_h: p("W_h")?,
            u_h: p("U_h")?,
            b_h: p("b_h")?,
            input,
            hidden,
        })
    }

    /// Uses `params` as constants.
    pub fn constant(tape: &'t Tape, params: &GruParams) -> Result<Self> {
        params.validate()?;
        let c = |t: &Tensor| tape.constant(t.clone());
        Ok(Self {
            w_z: c(&params.w_z)?,
            u_z: c(&params.u_z)?,
            b_z: c(&params.b_z)?,
            w_r: c(&params.w_r)?,
            u_r: c(&params.u_r)?,
            b_r: c(&params.b_r)?,
            w_h: c(&params.w_h)?,
            u_h: c(&params.u_h)?,
            b_h: c(&params.b_h)?,
            input: params.input(),
            hidden: params.hidden(),
        })
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// One step: `x` is `[B, I]`, `h_prev` is `[B, H]`.
    pub fn step(&self, x: &Var<'t>, h_prev: &Var<'t>) -> Result<Var<'t>> {
        if x.value().cols() != self.input || x.shape().len() != 2 {
            return Err(Error::shape("gru_cell input", x.shape(), &[self.input]));
        }
        if h_prev.shape() != [x.value().rows(), self.hidden] {
            return Err(Error::shape(
                "gru_cell hidden",
                h_prev.shape(),
                &[x.value().rows(), self.hidden],
            ));
        }
        let gate = |w: &Var<'t>, u: &Var<'t>, b: &Var<'t>, h: &Var<'t>| -> Result<Var<'t>> {
            x.matmul_nt(w)?.add(&h.matmul_nt(u)?)?.add_row(b)
        };
        let u = gate(&self.w_z, &self.u_z, &self.b_z, h_prev)?.sigmoid()?;
        let r = gate(&self.w_r, &self.u_r, &self.b_r, h_prev)?.sigmoid()?;
        let rh = r.mul(h_prev)?;
        let c = gate(&self.w_h, &self.u_h, &self.b_h, &rh)?.tanh()?;
        u.one_minus()?.mul(h_prev)?.add(&u.mul(&c)?)
    }
}

/// Runs `cell` over `seq` from `h0`; returns every hidden state and the last.
pub fn run_gru<'t>(
    cell: &GruCell<'t>,
    seq: &[Var<'t>],
    h0: &Var<'t>,
) -> Result<(Vec<Var<'t>>, Var<'t>)> {
    if seq.is_empty() {
        return Err(Error::Precondition("run_gru on an empty sequence".into()));
    }
    let mut hiddens = Vec::with_capacity(seq.len());
    let mut h = h0.clone();
    for x in seq {
        h = cell.step(x, &h)?;
        hiddens.push(h.clone());
    }
    Ok((hiddens, h))
}

/// `[forward final ; backward final]`, both directions starting from zeros.
/// The result is `[B, 2H]`.
pub fn run_bigru<'t>(seq: &[Var<'t>], fwd: &GruCell<'t>, bwd: &GruCell<'t>) -> Result<Var<'t>> {
    let first = seq
        .first()
        .ok_or_else(|| Error::Precondition("run_bigru on an empty sequence".into()))?;
    if fwd.input != bwd.input || fwd.hidden != bwd.hidden {
        return Err(Error::shape(
            "run_bigru",
            &[fwd.input, fwd.hidden],
            &[bwd.input, bwd.hidden],
        ));
    }
    let tape = first.tape();
    let batch = first.value().rows();
    let h0 = tape.constant(Tensor::zeros(&[batch, fwd.hidden]))?;
    let (_, h_fwd) = run_gru(fwd, seq, &h0)?;
    let reversed: Vec<Var<'t>> = seq.iter().rev().cloned().collect();
    let (_, h_bwd) = run_gru(bwd, &reversed, &h0)?;
    Var::concat(&[h_fwd, h_bwd])
}

fn as_row(t: &Tensor) -> Tensor {
    if t.shape().len() == 1 {
        Tensor::new(vec![1, t.len()], t.data().to_vec()).expect("same length")
    } else {
        t.clone()
    }
}

/// Plain-tensor form of one cell step. Rank-1 inputs give a rank-1 result.
pub fn gru_cell(x: &Tensor, h_prev: &Tensor, p: &GruParams) -> Result<Tensor> {
    let tape = Tape::no_grad();
    let cell = GruCell::constant(&tape, p)?;
    let xv = tape.constant(as_row(x))?;
    let hv = tape.constant(as_row(h_prev))?;
    let out = cell.step(&xv, &hv)?.value().clone();
    if x.shape().len() == 1 && h_prev.shape().len() == 1 {
        return Ok(Tensor::vector(out.into_data()));
    }
    Ok(out)
}

/// Plain-tensor form of [`run_gru`] for a single (unbatched) sequence.
pub fn run_gru_plain(seq: &[Tensor], h0: &Tensor, p: &GruParams) -> Result<(Vec<Tensor>, Tensor)> {
    let tape = Tape::no_grad();
    let cell = GruCell::constant(&tape, p)?;
    let xs = seq
        .iter()
        .map(|x| tape.constant(as_row(x)))
        .collect::<Result<Vec<_>>>()?;
    let (hs, last) = run_gru(&cell, &xs, &tape.constant(as_row(h0))?)?;
    let flat = |v: &Var<'_>| Tensor::vector(v.value().data().to_vec());
    Ok((hs.iter().map(flat).collect(), flat(&last)))
}

/// Plain-tensor form of [`run_bigru`] for a single sequence; length `2H`.
pub fn run_bigru_plain(seq: &[Tensor], p_fwd: &GruParams, p_bwd: &GruParams) -> Result<Tensor> {
    let tape = Tape::no_grad();
    let fwd = GruCell::constant(&tape, p_fwd)?;
    let bwd = GruCell::constant(&tape, p_bwd)?;
    let xs = seq
        .iter()
        .map(|x| tape.constant(as_row(x)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::vector(
        run_bigru(&xs, &fwd, &bwd)?.value().data().to_vec(),
    ))
}
