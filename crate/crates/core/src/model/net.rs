//! Forward passes of both architectures over a [`Tape`].

use super::{ModelConfig, Variant};
use crate::data::Encounter;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tape, Tensor, Var};
use crate::recurrent::{run_bigru, run_gru, GruCell};

/// Per-step tensors for a batch of equal-length encounters.
pub(crate) struct Batch {
    pub rows: usize,
    pub len: usize,
    /// `[B, 4]` rows `[x1, y1, x2, y2]` per step.
    pub joint: Vec<Tensor>,
    /// `[B, 2]` per vehicle per step.
    pub vehicle: [Vec<Tensor>; 2],
    /// `[B, 2T]` flattened targets per vehicle.
    pub target: [Tensor; 2],
}

impl Batch {
    pub fn new(encs: &[&Encounter]) -> Result<Self> {
        let first = encs
            .first()
            .ok_or_else(|| Error::Precondition("empty batch".into()))?;
        let len = first.len();
        if len == 0 {
            return Err(Error::Precondition(
                "encounters must have at least one step".into(),
            ));
        }
        for e in encs {
            if e.len() != len || e.s2.len() != len {
                return Err(Error::Precondition(format!(
                    "encounter `{}` has length {}, batch expects {len}",
                    e.id,
                    e.len()
                )));
            }
            let m = e.max_abs_coord();
            if !(m <= 1.0) {
                return Err(Error::Precondition(format!(
                    "encounter `{}` is not normalized (max |coord| = {m})",
                    e.id
                )));
            }
        }
        let rows = encs.len();
        let joint = (0..len)
            .map(|t| Tensor::from_rows(&encs.iter().map(|e| e.step(t)).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        let per = |pick: fn(&Encounter) -> &Vec<[f64; 2]>| -> Result<Vec<Tensor>> {
            (0..len)
                .map(|t| Tensor::from_rows(&encs.iter().map(|e| pick(e)[t]).collect::<Vec<_>>()))
                .collect()
        };
        let flat = |pick: fn(&Encounter) -> &Vec<[f64; 2]>| -> Result<Tensor> {
            let data = encs
                .iter()
                .flat_map(|e| pick(e).iter().flat_map(|p| p.iter().copied()))
                .collect();
            Tensor::new(vec![rows, 2 * len], data)
        };
        Ok(Self {
            rows,
            len,
            joint,
            vehicle: [per(|e| &e.s1)?, per(|e| &e.s2)?],
            target: [flat(|e| &e.s1)?, flat(|e| &e.s2)?],
        })
    }
}

struct Branch<'t> {
    init_w: Var<'t>,
    init_b: Var<'t>,
    cell: GruCell<'t>,
    out_w: Var<'t>,
    out_b: Var<'t>,
    start: Var<'t>,
}

impl<'t> Branch<'t> {
    fn bind(tape: &'t Tape, store: &ParamStore, prefix: &str) -> Result<Self> {
        let p = |n: &str| tape.param(store, &format!("{prefix}.{n}"));
        Ok(Self {
            init_w: p("init.W")?,
            init_b: p("init.b")?,
            cell: GruCell::bind(tape, store, &format!("{prefix}.gru"))?,
            out_w: p("out.W")?,
            out_b: p("out.b")?,
            start: p("P_start")?,
        })
    }

    fn initial_state(&self, z: &Var<'t>) -> Result<Var<'t>> {
        z.matmul_nt(&self.init_w)?.add_row(&self.init_b)?.tanh()
    }

    fn emit(&self, h: &Var<'t>) -> Result<Var<'t>> {
        h.matmul_nt(&self.out_w)?.add_row(&self.out_b)?.tanh()
    }

    /// `P_start` broadcast over the batch.
    fn start_input(&self, tape: &'t Tape, rows: usize) -> Result<Var<'t>> {
        tape.constant(Tensor::zeros(&[rows, self.start.value().len()]))?
            .add_row(&self.start)
    }
}

/// Encoder and decoder weights bound to one tape.
pub(crate) struct Net<'t> {
    tape: &'t Tape,
    variant: Variant,
    enc_fwd: GruCell<'t>,
    enc_bwd: Option<GruCell<'t>>,
    w_mu: Var<'t>,
    b_mu: Var<'t>,
    w_sigma: Var<'t>,
    b_sigma: Var<'t>,
    branches: Vec<Branch<'t>>,
}

/// Decoder output per step, one list per vehicle, each entry `[B, 2]`.
pub(crate) type Decoded<'t> = [Vec<Var<'t>>; 2];

impl<'t> Net<'t> {
    pub fn bind(tape: &'t Tape, config: &ModelConfig, store: &ParamStore) -> Result<Self> {
        let p = |n: &str| tape.param(store, n);
        let (enc_bwd, branches) = match config.variant {
            Variant::Mtg => (
                Some(GruCell::bind(tape, store, "enc.bwd")?),
                vec![
                    Branch::bind(tape, store, "dec1")?,
                    Branch::bind(tape, store, "dec2")?,
                ],
            ),
            Variant::Baseline1 => (None, vec![Branch::bind(tape, store, "dec")?]),
        };
        Ok(Self {
            tape,
            variant: config.variant,
            enc_fwd: GruCell::bind(tape, store, "enc.fwd")?,
            enc_bwd,
            w_mu: p("head.W_mu")?,
            b_mu: p("head.b_mu")?,
            w_sigma: p("head.W_sigma")?,
            b_sigma: p("head.b_sigma")?,
            branches,
        })
    }

    /// Returns `(mu, sigma)`, each `[B, K]`.
    pub fn encode(&self, batch: &Batch) -> Result<(Var<'t>, Var<'t>)> {
        let xs = batch
            .joint
            .iter()
            .map(|t| self.tape.constant(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let h_enc = match &self.enc_bwd {
            Some(bwd) => run_bigru(&xs, &self.enc_fwd, bwd)?,
            None => {
                let h0 = self
                    .tape
                    .constant(Tensor::zeros(&[batch.rows, self.enc_fwd.hidden()]))?;
                run_gru(&self.enc_fwd, &xs, &h0)?.1
            }
        };
        let mu = h_enc.matmul_nt(&self.w_mu)?.add_row(&self.b_mu)?;
        let sigma = h_enc
            .matmul_nt(&self.w_sigma)?
            .add_row(&self.b_sigma)?
            .scale(0.5)?
            .exp()?;
        Ok((mu, sigma))
    }

    /// Decodes `len` steps from `z` (`[B, K]`). With `teacher`, step `t`
    /// consumes the ground-truth point at `t - 1`; otherwise the decoder's
    /// own previous output.
    pub fn decode(&self, z: &Var<'t>, len: usize, teacher: Option<&Batch>) -> Result<Decoded<'t>> {
        if len == 0 {
            return Err(Error::Precondition(
                "decode length must be at least 1".into(),
            ));
        }
        if let Some(b) = teacher {
            if b.len != len {
                return Err(Error::Precondition(format!(
                    "teacher batch has length {}, decode asked for {len}",
                    b.len
                )));
            }
        }
        let rows = z.value().rows();
        match self.variant {
            Variant::Mtg => self.decode_mtg(z, rows, len, teacher),
            Variant::Baseline1 => self.decode_baseline(z, rows, len, teacher),
        }
    }

    fn decode_mtg(
        &self,
        z: &Var<'t>,
        rows: usize,
        len: usize,
        teacher: Option<&Batch>,
    ) -> Result<Decoded<'t>> {
        let [b1, b2] = &self.branches[..] else {
            unreachable!("mtg has two decoder branches")
        };
        let mut h = [b1.initial_state(z)?, b2.initial_state(z)?];
        let mut prev = [
            b1.start_input(self.tape, rows)?,
            b2.start_input(self.tape, rows)?,
        ];
        let mut out: Decoded<'t> = [Vec::with_capacity(len), Vec::with_capacity(len)];
        for t in 0..len {
            if t > 0 {
                if let Some(b) = teacher {
                    prev = [
                        self.tape.constant(b.vehicle[0][t - 1].clone())?,
                        self.tape.constant(b.vehicle[1][t - 1].clone())?,
                    ];
                }
            }
            // each branch reads its own last point and the other branch's state
            let h1 = b1.cell.step(&prev[0], &h[1])?;
            let h2 = b2.cell.step(&prev[1], &h[0])?;
            let p1 = b1.emit(&h1)?;
            let p2 = b2.emit(&h2)?;
            out[0].push(p1.clone());
            out[1].push(p2.clone());
            prev = [p1, p2];
            h = [h1, h2];
        }
        Ok(out)
    }

    fn decode_baseline(
        &self,
        z: &Var<'t>,
        rows: usize,
        len: usize,
        teacher: Option<&Batch>,
    ) -> Result<Decoded<'t>> {
        let b = &self.branches[0];
        let mut h = b.initial_state(z)?;
        let mut prev = b.start_input(self.tape, rows)?;
        let mut out: Decoded<'t> = [Vec::with_capacity(len), Vec::with_capacity(len)];
        for t in 0..len {
            if t > 0 {
                if let Some(tb) = teacher {
                    prev = self.tape.constant(tb.joint[t - 1].clone())?;
                }
            }
            h = b.cell.step(&prev, &h)?;
            let p = b.emit(&h)?;
            out[0].push(p.slice_cols(0, 2)?);
            out[1].push(p.slice_cols(2, 2)?);
            prev = p;
        }
        Ok(out)
    }
}

/// Scalar loss terms on the tape.
pub(crate) struct LossVars<'t> {
    pub total: Var<'t>,
    pub recon: Var<'t>,
    pub kl: Var<'t>,
}

/// `mse(S1, S̄1) + mse(S2, S̄2) + beta * KL`, with `z = mu + sigma * noise`.
pub(crate) fn forward_loss<'t>(
    net: &Net<'t>,
    batch: &Batch,
    noise: &Tensor,
    beta: f64,
    teacher_forcing: bool,
) -> Result<LossVars<'t>> {
    let tape = net.tape;
    let (mu, sigma) = net.encode(batch)?;
    let eps = tape.constant(noise.clone())?;
    if eps.shape() != mu.shape() {
        return Err(Error::shape("noise", eps.shape(), mu.shape()));
    }
    let z = mu.add(&sigma.mul(&eps)?)?;
    let decoded = net.decode(&z, batch.len, teacher_forcing.then_some(batch))?;
    let mut recon: Option<Var<'t>> = None;
    for (steps, target) in decoded.iter().zip(&batch.target) {
        let pred = Var::concat(steps)?;
        let err = pred.mse(&tape.constant(target.clone())?)?;
        recon = Some(match recon {
            Some(r) => r.add(&err)?,
            None => err,
        });
    }
    let recon = recon.expect("two vehicles");
    let kl = Var::gaussian_kl(&mu, &sigma)?;
    let total = recon.add(&kl.scale(beta)?)?;
    Ok(LossVars { total, recon, kl })
}
