use serde::{Deserialize, Serialize};

use super::Model;
use crate::data::Encounter;
use crate::error::{Error, Result};

/// Values visited by a latent sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for SweepRange {
    fn default() -> Self {
        Self {
            lo: -1.0,
            hi: 1.0,
            step: 0.1,
        }
    }
}

/// `lo, lo + step, ...` strictly below `hi`, then `hi` itself. Values are
/// computed as `lo + i * step` so rounding does not accumulate.
pub fn sweep_values(range: SweepRange) -> Result<Vec<f64>> {
    let SweepRange { lo, hi, step } = range;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Precondition(format!(
            "sweep step must be positive, got {step}"
        )));
    }
    if !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(Error::Precondition(format!(
            "sweep range [{lo}, {hi}] is invalid"
        )));
    }
    if hi == lo {
        return Ok(vec![lo]);
    }
    // the tolerance absorbs representation error, e.g. (1 - -1) / 0.1
    let n = ((hi - lo) / step - 1e-9).ceil().max(1.0) as usize;
    let mut out: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
    out.push(hi);
    Ok(out)
}

/// Decodes `base_z` with component `k` replaced by each sweep value.
pub fn latent_sweep(
    model: &Model,
    k: usize,
    range: SweepRange,
    base_z: Option<&[f64]>,
) -> Result<Vec<(f64, Encounter)>> {
    let latent = model.latent();
    if k >= latent {
        return Err(Error::Index {
            index: k,
            len: latent,
        });
    }
    let base = match base_z {
        Some(z) if z.len() != latent => {
            return Err(Error::shape("latent_sweep", &[z.len()], &[latent]));
        }
        Some(z) => z.to_vec(),
        None => vec![0.0; latent],
    };
    let values = sweep_values(range)?;
    let zs: Vec<Vec<f64>> = values
        .iter()
        .map(|&v| {
            let mut z = base.clone();
            z[k] = v;
            z
        })
        .collect();
    let frames = model.decode_batch(&zs, model.length())?;
    Ok(values
        .into_iter()
        .zip(frames)
        .enumerate()
        .map(|(i, (v, mut e))| {
            e.id = format!("code{k}-{i:02}");
            (v, e)
        })
        .collect())
}
