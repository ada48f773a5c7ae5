//! The two-branch trajectory generator (`mtg`) and the single-GRU baseline
//! (`baseline1`): parameters, encode/decode, loss, training, latent sweeps,
//! and checkpoints.
//!
//! Architecture (`H` hidden, `K` latent, `T` steps):
//!
//! * encoder: GRU over the per-step 4-vector `[x1, y1, x2, y2]`. `mtg` runs a
//!   forward and a backward GRU and concatenates their final states (`2H`);
//!   `baseline1` uses the forward final state (`H`).
//! * heads: `mu = W_mu h + b_mu`, `sigma = exp((W_sigma h + b_sigma) / 2)`.
//! * `mtg` decoder: two branches. Each starts from `tanh(A_i z + c_i)`; at
//!   every step branch 1 reads its own previous point and branch 2's previous
//!   hidden state (and vice versa), then emits a point through a linear+tanh
//!   head. The first input is a learned start point per branch.
//! * `baseline1` decoder: one GRU starting from `tanh(A z + c)` that reads
//!   the previous 4-vector and emits both points jointly.

mod checkpoint;
pub(crate) mod net;
mod sweep;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Encounter, Point};
use crate::error::{Error, Result};
use crate::numerics::{gaussian_kl_value, glorot_uniform, mse_value, ParamStore, Tape, Tensor};
use crate::recurrent::GruParams;
use net::{Batch, Net};

pub use checkpoint::{load_checkpoint, load_checkpoint_as, save_checkpoint, CHECKPOINT_VERSION};
pub use sweep::{latent_sweep, sweep_values, SweepRange};
pub use train::{train, train_from, EpochStats, History, TrainConfig};

/// Per-step input width: two 2-D points.
pub const INPUT_WIDTH: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Mtg,
    Baseline1,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mtg => "mtg",
            Variant::Baseline1 => "baseline1",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mtg" => Ok(Variant::Mtg),
            "baseline1" => Ok(Variant::Baseline1),
            _ => Err(Error::Config(format!(
                "unknown variant `{s}` (expected mtg or baseline1)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden: usize,
    pub latent: usize,
    /// Sequence length the decoder generates.
    pub length: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden < 1 || self.latent < 1 || self.length < 1 {
            return Err(Error::Config(format!(
                "hidden, latent and length must be >= 1 (got H={}, K={}, T={})",
                self.hidden, self.latent, self.length
            )));
        }
        Ok(())
    }

    fn encoder_width(&self) -> usize {
        match self.variant {
            Variant::Mtg => 2 * self.hidden,
            Variant::Baseline1 => self.hidden,
        }
    }

    /// Freshly initialized parameters: Glorot-uniform matrices, zero biases
    /// and zero start points.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamStore> {
        self.validate()?;
        let (h, k) = (self.hidden, self.latent);
        let mut store = ParamStore::new();
        GruParams::init(rng, INPUT_WIDTH, h).register(&mut store, "enc.fwd")?;
        if self.variant == Variant::Mtg {
            GruParams::init(rng, INPUT_WIDTH, h).register(&mut store, "enc.bwd")?;
        }
        let e = self.encoder_width();
        store.insert("head.W_mu", glorot_uniform(rng, k, e))?;
        store.insert("head.b_mu", Tensor::zeros(&[k]))?;
        store.insert("head.W_sigma", glorot_uniform(rng, k, e))?;
        store.insert("head.b_sigma", Tensor::zeros(&[k]))?;
        let (prefixes, point): (&[&str], usize) = match self.variant {
            Variant::Mtg => (&["dec1", "dec2"], 2),
            Variant::Baseline1 => (&["dec"], INPUT_WIDTH),
        };
        for prefix in prefixes {
            store.insert(format!("{prefix}.init.W"), glorot_uniform(rng, h, k))?;
            store.insert(format!("{prefix}.init.b"), Tensor::zeros(&[h]))?;
            GruParams::init(rng, point, h).register(&mut store, &format!("{prefix}.gru"))?;
            store.insert(format!("{prefix}.out.W"), glorot_uniform(rng, point, h))?;
            store.insert(format!("{prefix}.out.b"), Tensor::zeros(&[point]))?;
            store.insert(format!("{prefix}.P_start"), Tensor::zeros(&[point]))?;
        }
        Ok(store)
    }
}

/// Latent code with the posterior it was drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub z: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// `mu + sigma ⊙ noise`.
pub fn reparameterize(mu: &Tensor, sigma: &Tensor, noise: &Tensor) -> Result<Tensor> {
    if mu.shape() != sigma.shape() || mu.shape() != noise.shape() {
        return Err(Error::shape("reparameterize", mu.shape(), sigma.shape()));
    }
    if let Some(s) = sigma.data().iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::Domain(format!("sigma must be positive, got {s}")));
    }
    let tape = Tape::no_grad();
    let (m, s, e) = (
        tape.constant(mu.clone())?,
        tape.constant(sigma.clone())?,
        tape.constant(noise.clone())?,
    );
    Ok(m.add(&s.mul(&e)?)?.value().clone())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

fn flat(points: &[Point]) -> Tensor {
    Tensor::vector(points.iter().flat_map(|p| p.iter().copied()).collect())
}

/// `mse(S1, S̄1) + mse(S2, S̄2) + beta * KL(N(mu, sigma²) || N(0, I))`.
pub fn loss(
    enc: &Encounter,
    recon: &Encounter,
    mu: &[f64],
    sigma: &[f64],
    beta: f64,
) -> Result<LossTerms> {
    if enc.len() != recon.len() {
        return Err(Error::shape("loss", &[enc.len()], &[recon.len()]));
    }
    let r =
        mse_value(&flat(&enc.s1), &flat(&recon.s1))? + mse_value(&flat(&enc.s2), &flat(&recon.s2))?;
    let kl = gaussian_kl_value(
        &Tensor::vector(mu.to_vec()),
        &Tensor::vector(sigma.to_vec()),
    )?;
    Ok(LossTerms {
        total: r + beta * kl,
        recon: r,
        kl,
    })
}

/// A configured architecture with its parameters. Read-only use is safe from
/// many threads.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = config.init_params(&mut rng)?;
        Ok(Self { config, params })
    }

    /// Wraps an existing store after checking every expected parameter is
    /// present with the right shape.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let skeleton = config.init_params(&mut ChaCha8Rng::seed_from_u64(0))?;
        for (name, t) in skeleton.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(Error::shape("from_params", t.shape(), got.shape()));
            }
        }
        if params.len() != skeleton.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                skeleton.len(),
                params.len()
            )));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn latent(&self) -> usize {
        self.config.latent
    }

    pub fn length(&self) -> usize {
        self.config.length
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Posterior of each encounter. `z` equals `mu` (no sampling).
    pub fn encode_batch(&self, encs: &[&Encounter]) -> Result<Vec<LatentCode>> {
        let batch = Batch::new(encs)?;
        let tape = Tape::no_grad();
        let net = Net::bind(&tape, &self.config, &self.params)?;
        let (mu, sigma) = net.encode(&batch)?;
        Ok((0..batch.rows)
            .map(|r| LatentCode {
                z: mu.value().row(r).to_vec(),
                mu: mu.value().row(r).to_vec(),
                sigma: sigma.value().row(r).to_vec(),
            })
            .collect())
    }

    pub fn encode(&self, enc: &Encounter) -> Result<LatentCode> {
        Ok(self.encode_batch(&[enc])?.remove(0))
    }

    /// Posterior plus one reparameterized draw `z = mu + sigma * eps`.
    pub fn encode_sampled<R: Rng + ?Sized>(
        &self,
        enc: &Encounter,
        rng: &mut R,
    ) -> Result<LatentCode> {
        let mut code = self.encode(enc)?;
        let noise: Vec<f64> = (0..code.mu.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let z = reparameterize(
            &Tensor::vector(code.mu.clone()),
            &Tensor::vector(code.sigma.clone()),
            &Tensor::vector(noise),
        )?;
        code.z = z.into_data();
        Ok(code)
    }

    /// Free-running decode of each latent vector into `len` steps.
    pub fn decode_batch(&self, zs: &[Vec<f64>], len: usize) -> Result<Vec<Encounter>> {
        for z in zs {
            if z.len() != self.config.latent {
                return Err(Error::shape("decode", &[z.len()], &[self.config.latent]));
            }
        }
        if zs.is_empty() {
            return Ok(Vec::new());
        }
        let tape = Tape::no_grad();
        let net = Net::bind(&tape, &self.config, &self.params)?;
        let z = tape.constant(Tensor::from_rows(zs)?)?;
        let [s1, s2] = net.decode(&z, len, None)?;
        let point = |steps: &[crate::numerics::Var<'_>], r: usize| -> Vec<Point> {
            steps
                .iter()
                .map(|v| {
                    let row = v.value().row(r);
                    [row[0], row[1]]
                })
                .collect()
        };
        (0..zs.len())
            .map(|r| Encounter::generated(format!("decoded-{r}"), point(&s1, r), point(&s2, r)))
            .collect()
    }

    pub fn decode(&self, z: &[f64], len: usize) -> Result<Encounter> {
        Ok(self.decode_batch(&[z.to_vec()], len)?.remove(0))
    }

    /// Decode then re-encode; returns the recovered means.
    pub fn decode_encode(&self, zs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let decoded = self.decode_batch(zs, self.config.length)?;
        let refs: Vec<&Encounter> = decoded.iter().collect();
        Ok(self
            .encode_batch(&refs)?
            .into_iter()
            .map(|c| c.mu)
            .collect())
    }

    /// Loss terms for `encs` at fixed `noise` (`[B, K]`), without gradients.
    pub fn evaluate(
        &self,
        encs: &[&Encounter],
        noise: &Tensor,
        beta: f64,
        teacher_forcing: bool,
    ) -> Result<LossTerms> {
        let batch = Batch::new(encs)?;
        let tape = Tape::no_grad();
        let net = Net::bind(&tape, &self.config, &self.params)?;
        let l = net::forward_loss(&net, &batch, noise, beta, teacher_forcing)?;
        let v = |x: &crate::numerics::Var<'_>| x.value().data()[0];
        Ok(LossTerms {
            total: v(&l.total),
            recon: v(&l.recon),
            kl: v(&l.kl),
        })
    }
}

/// Loss closure over a parameter store, for gradient checks: encodes `encs`,
/// reparameterizes with the fixed `noise`, decodes with teacher forcing as
/// configured, and returns the total loss.
pub fn loss_on_tape<'t>(
    tape: &'t Tape,
    config: &ModelConfig,
    params: &ParamStore,
    encs: &[&Encounter],
    noise: &Tensor,
    beta: f64,
    teacher_forcing: bool,
) -> Result<crate::numerics::Var<'t>> {
    let batch = Batch::new(encs)?;
    let net = Net::bind(tape, config, params)?;
    Ok(net::forward_loss(&net, &batch, noise, beta, teacher_forcing)?.total)
}


#[cfg(test)]
mod gradient_tests {
    use super::*;
    use crate::data::{prepare, synth_generate, Family, SynthSpec};
    use crate::numerics::grad_check;

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let raw: Vec<Encounter> = [Family::Crossing, Family::Merging]
            .into_iter()
            .flat_map(|family| {
                synth_generate(&SynthSpec {
                    family,
                    count: 1,
                    noise: 0.1,
                    seed: 21,
                    ..SynthSpec::default()
                })
                .unwrap()
            })
            .collect();
        let encs = prepare(&raw, 10, crate::data::NormMode::Shared).unwrap();
        let refs: Vec<&Encounter> = encs.iter().collect();
        for variant in [Variant::Mtg, Variant::Baseline1] {
            let config = ModelConfig {
                variant,
                hidden: 8,
                latent: 4,
                length: 10,
            };
            let model = Model::new(config, 17).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let noise: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
            let noise = Tensor::new(vec![2, 4], noise).unwrap();
            for teacher in [true, false] {
                let report = grad_check(
                    |tape, params| loss_on_tape(tape, &config, params, &refs, &noise, 1.0, teacher),
                    model.params(),
                    1e-5,
                    1e-4,
                )
                .unwrap();
                assert!(report.passed, "{variant} teacher={teacher}: {report:?}");
                assert_eq!(report.checked, model.params().num_elements());
            }
        }
    }
}
