//! Model evaluation: the decode/re-encode disentanglement scan, variance
//! ratios, the classifier-free prior-metric profile, and traffic-rationality
//! profiles, with CSV and SVG export.

mod export;
mod rationality;
mod scan;

use crate::data::Encounter;
use crate::error::{Error, Result};
use crate::model::Model;

pub use export::{
    disentanglement_csv, disentanglement_svg, prior_metric_csv, profile_csv, ratio_csv,
    rationality_svg, sweep_csv, sweep_svg,
};
pub use rationality::{
    direction_profile, distance_profile, rationality_report, speed_profile, DirectionProfile,
    Overlay, ProfileSummary, RationalityReport,
};
pub use scan::{
    disentanglement_scan, prior_metric_profile, sample_variance, spearman, variance_ratio,
    DisentanglementProfile, PriorMetricProfile, RatioPoint, ScanOptions, DEFAULT_SIGMA_GRID,
};

/// A decoder/encoder pair the scans can drive.
pub trait LatentRoundTrip: Sync {
    fn latent_dim(&self) -> usize;

    /// Generates one encounter per latent vector.
    fn decode(&self, zs: &[Vec<f64>]) -> Result<Vec<Encounter>>;

    /// Recovers a latent vector (the posterior mean) per encounter.
    fn encode(&self, encs: &[Encounter]) -> Result<Vec<Vec<f64>>>;
}

impl LatentRoundTrip for Model {
    fn latent_dim(&self) -> usize {
        self.latent()
    }

    fn decode(&self, zs: &[Vec<f64>]) -> Result<Vec<Encounter>> {
        self.decode_batch(zs, self.length())
    }

    fn encode(&self, encs: &[Encounter]) -> Result<Vec<Vec<f64>>> {
        let refs: Vec<&Encounter> = encs.iter().collect();
        Ok(self
            .encode_batch(&refs)?
            .into_iter()
            .map(|c| c.mu)
            .collect())
    }
}

fn check_width(zs: &[Vec<f64>], k: usize) -> Result<()> {
    match zs.iter().find(|z| z.len() != k) {
        Some(z) => Err(Error::shape("decode", &[z.len()], &[k])),
        None => Ok(()),
    }
}

/// Stores `z` verbatim in the x coordinates of vehicle 1 and reads it back:
/// perfect code recovery.
#[derive(Clone, Copy, Debug)]
pub struct IdentityModel {
    pub latent: usize,
}

impl LatentRoundTrip for IdentityModel {
    fn latent_dim(&self) -> usize {
        self.latent
    }

    fn decode(&self, zs: &[Vec<f64>]) -> Result<Vec<Encounter>> {
        check_width(zs, self.latent)?;
        zs.iter()
            .map(|z| {
                let s1 = z.iter().map(|&v| [v, 0.0]).collect();
                Encounter::generated("identity", s1, vec![[0.0, 0.0]; z.len()])
            })
            .collect()
    }

    fn encode(&self, encs: &[Encounter]) -> Result<Vec<Vec<f64>>> {
        Ok(encs
            .iter()
            .map(|e| e.s1.iter().map(|p| p[0]).collect())
            .collect())
    }
}

/// Ignores its input: every code decodes to the same encounter.
#[derive(Clone, Copy, Debug)]
pub struct ConstantModel {
    pub latent: usize,
}

impl LatentRoundTrip for ConstantModel {
    fn latent_dim(&self) -> usize {
        self.latent
    }

    fn decode(&self, zs: &[Vec<f64>]) -> Result<Vec<Encounter>> {
        check_width(zs, self.latent)?;
        Ok(zs
            .iter()
            .map(|_| {
                Encounter::generated("constant", vec![[0.5, -0.25]; 3], vec![[0.0, 0.5]; 3])
                    .expect("equal lengths")
            })
            .collect())
    }

    fn encode(&self, encs: &[Encounter]) -> Result<Vec<Vec<f64>>> {
        Ok(encs
            .iter()
            .map(|e| {
                (0..self.latent)
                    .map(|j| e.s1[j % e.len()][0] * (j + 1) as f64)
                    .collect()
            })
            .collect())
    }
}
