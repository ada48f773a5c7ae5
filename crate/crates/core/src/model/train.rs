use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::net::{forward_loss, Batch, Net};
use super::{Model, ModelConfig, Variant};
use crate::data::Encounter;
use crate::error::{Error, Result};
use crate::numerics::{optimizer_step, AdamConfig, OptState, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub variant: Variant,
    /// Weight on the KL term.
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub hidden: usize,
    pub latent: usize,
    /// Feed ground-truth previous points to the decoder while training.
    pub teacher_forcing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Mtg,
            beta: 1.0,
            epochs: 200,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
            hidden: 64,
            latent: 10,
            teacher_forcing: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.hidden < 1 || self.latent < 1 {
            return Err(Error::Config(format!(
                "hidden and latent must be >= 1 (got H={}, K={})",
                self.hidden, self.latent
            )));
        }
        Ok(())
    }

    pub fn model_config(&self, length: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            hidden: self.hidden,
            latent: self.latent,
            length,
        }
    }
}

/// Example-weighted means over one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

pub type History = Vec<EpochStats>;

fn check_dataset(dataset: &[Encounter]) -> Result<usize> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::Precondition("training dataset is empty".into()))?;
    let len = first.len();
    for e in dataset {
        if e.len() != len || e.s2.len() != len {
            return Err(Error::Precondition(format!(
                "encounter `{}` has length {}, expected {len}",
                e.id,
                e.len()
            )));
        }
        if !e.normalized && e.max_abs_coord() > 1.0 {
            return Err(Error::Precondition(format!(
                "encounter `{}` is not normalized",
                e.id
            )));
        }
    }
    Ok(len)
}

/// Trains a freshly initialized model. Same data and config give
/// bit-identical parameters and history.
pub fn train(dataset: &[Encounter], cfg: &TrainConfig) -> Result<(Model, History)> {
    cfg.validate()?;
    let len = check_dataset(dataset)?;
    let model = Model::new(cfg.model_config(len), cfg.seed)?;
    train_from(model, dataset, cfg, |_| {})
}

/// Continues training `model`, calling `on_epoch` after every epoch.
pub fn train_from(
    mut model: Model,
    dataset: &[Encounter],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Model, History)> {
    cfg.validate()?;
    let len = check_dataset(dataset)?;
    if model.variant() != cfg.variant {
        return Err(Error::Config(format!(
            "model is {}, config asks for {}",
            model.variant(),
            cfg.variant
        )));
    }
    let config = *model.config();
    if config.length != len {
        return Err(Error::Precondition(format!(
            "model generates {} steps, data has {len}",
            config.length
        )));
    }

    // shuffling and noise use their own stream so they never alias the
    // initialization draws
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut opt = OptState::new(model.params(), AdamConfig::default());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 3];
        for chunk in order.chunks(cfg.batch_size) {
            let encs: Vec<&Encounter> = chunk.iter().map(|&i| &dataset[i]).collect();
            let batch = Batch::new(&encs)?;
            let noise: Vec<f64> = (0..encs.len() * config.latent)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let noise = Tensor::new(vec![encs.len(), config.latent], noise)?;

            let tape = Tape::new();
            let net = Net::bind(&tape, &config, model.params())?;
            let l = forward_loss(&net, &batch, &noise, cfg.beta, cfg.teacher_forcing)?;
            let w = encs.len() as f64;
            sums[0] += w * l.total.value().data()[0];
            sums[1] += w * l.recon.value().data()[0];
            sums[2] += w * l.kl.value().data()[0];
            let grads = tape.backward(&l.total)?;
            drop(net);
            grads.accumulate_into(model.params_mut())?;
            optimizer_step(model.params_mut(), cfg.lr, &mut opt)?;
        }
        let n = dataset.len() as f64;
        let stats = EpochStats {
            epoch,
            total: sums[0] / n,
            recon: sums[1] / n,
            kl: sums[2] / n,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{prepare, synth_generate, NormMode, SynthSpec};

    fn data(n: usize) -> Vec<Encounter> {
        let raw = synth_generate(&SynthSpec {
            count: n,
            seed: 3,
            ..SynthSpec::default()
        })
        .unwrap();
        prepare(&raw, 10, NormMode::Shared).unwrap()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 3,
            hidden: 6,
            latent: 3,
            lr: 1e-2,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn history_has_one_row_per_epoch() {
        let (_, h) = train(&data(5), &cfg(7)).unwrap();
        assert_eq!(h.len(), 7);
        assert!(h
            .iter()
            .all(|s| s.total.is_finite() && s.recon >= 0.0 && s.kl >= 0.0));
        assert_eq!(h[6].epoch, 7);
    }

    #[test]
    fn same_seed_same_parameters() {
        for variant in [Variant::Mtg, Variant::Baseline1] {
            let c = TrainConfig { variant, ..cfg(5) };
            let (a, ha) = train(&data(5), &c).unwrap();
            let (b, hb) = train(&data(5), &c).unwrap();
            assert!(a.params().values_bit_eq(b.params()));
            assert_eq!(ha, hb);
        }
    }

    #[test]
    fn different_seed_differs() {
        let (a, _) = train(&data(5), &cfg(2)).unwrap();
        let (b, _) = train(&data(5), &TrainConfig { seed: 12, ..cfg(2) }).unwrap();
        assert!(!a.params().values_bit_eq(b.params()));
    }

    #[test]
    fn loss_goes_down() {
        let (_, h) = train(&data(6), &cfg(150)).unwrap();
        assert!(
            h.last().unwrap().total < h[0].total,
            "{:?} {:?}",
            h[0],
            h.last()
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(train(&[], &cfg(1)), Err(Error::Precondition(_))));
        let mut d = data(2);
        d[1].s1.pop();
        d[1].s2.pop();
        assert!(matches!(train(&d, &cfg(1)), Err(Error::Precondition(_))));
        let bad = TrainConfig {
            beta: -1.0,
            ..cfg(1)
        };
        assert!(matches!(train(&data(2), &bad), Err(Error::Config(_))));
    }
}
