use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LatentRoundTrip;
use crate::error::{Error, Result};

/// Default input standard deviations: 0.1 to 2.8 in steps of 0.3.
pub const DEFAULT_SIGMA_GRID: [f64; 10] = [0.1, 0.4, 0.7, 1.0, 1.3, 1.6, 1.9, 2.2, 2.5, 2.8];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanOptions {
    pub sigma_grid: Vec<f64>,
    /// Draws per group (`L`).
    pub samples: usize,
    pub seed: u64,
    /// Hold non-target codes at 0 instead of one draw from `N(0, sigma)`.
    pub pin_non_targets: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            sigma_grid: DEFAULT_SIGMA_GRID.to_vec(),
            samples: 100,
            seed: 0,
            pin_non_targets: false,
        }
    }
}

impl ScanOptions {
    fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::Precondition(format!(
                "the scan needs at least 2 samples per group, got {}",
                self.samples
            )));
        }
        if self.sigma_grid.is_empty() {
            return Err(Error::Precondition("sigma grid is empty".into()));
        }
        if let Some(s) = self
            .sigma_grid
            .iter()
            .find(|s| !(**s > 0.0) || !s.is_finite())
        {
            return Err(Error::Precondition(format!(
                "sigma values must be positive, got {s}"
            )));
        }
        Ok(())
    }
}

/// Output variances of the scan, indexed `[target code][sigma][output code]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisentanglementProfile {
    pub sigma_grid: Vec<f64>,
    pub samples: usize,
    pub omega: Vec<Vec<Vec<f64>>>,
    /// Realized sample variance of the drawn target code, `[code][sigma]`.
    pub input_variance: Vec<Vec<f64>>,
}

impl DisentanglementProfile {
    pub fn latent_dim(&self) -> usize {
        self.omega.len()
    }

    pub fn groups(&self) -> usize {
        self.omega.iter().map(Vec::len).sum()
    }

    /// On-target variance of code `i` across the sigma grid.
    pub fn on_target(&self, i: usize) -> Vec<f64> {
        self.omega[i].iter().map(|w| w[i]).collect()
    }
}

/// Unbiased sample variance, computed on deviations from the first element
/// so constant input gives exactly 0. `None` for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    central_moment(xs, xs.len().checked_sub(1)?)
}

fn population_variance(xs: &[f64]) -> Option<f64> {
    central_moment(xs, xs.len())
}

fn central_moment(xs: &[f64], denom: usize) -> Option<f64> {
    if xs.len() < 2 || denom == 0 {
        return None;
    }
    let x0 = xs[0];
    let (mut s, mut ss) = (0.0, 0.0);
    for &x in xs {
        let d = x - x0;
        s += d;
        ss += d * d;
    }
    let v = (ss - s * s / xs.len() as f64) / denom as f64;
    Some(v.max(0.0))
}

fn group_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

/// For every target code `i` and input deviation `sigma`: fix the other
/// codes (one draw from `N(0, sigma)`, or 0 when pinned), draw `L` values of
/// `z_i ~ N(0, sigma)`, decode, re-encode, and record the per-code sample
/// variance of the recovered means. Groups run in parallel on independent
/// streams, so the result does not depend on the thread count.
pub fn disentanglement_scan<M: LatentRoundTrip + ?Sized>(
    model: &M,
    opts: &ScanOptions,
) -> Result<DisentanglementProfile> {
    opts.validate()?;
    let k = model.latent_dim();
    let n_sigma = opts.sigma_grid.len();
    let groups: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..n_sigma).map(move |m| (i, m)))
        .collect();

    let results: Vec<(Vec<f64>, f64)> = groups
        .par_iter()
        .map(|&(i, m)| -> Result<(Vec<f64>, f64)> {
            let sigma = opts.sigma_grid[m];
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::Precondition(e.to_string()))?;
            let mut rng = group_rng(opts.seed, (i * n_sigma + m) as u64);
            let mut base: Vec<f64> = (0..k).map(|_| normal.sample(&mut rng)).collect();
            if opts.pin_non_targets {
                base.fill(0.0);
            }
            let drawn: Vec<f64> = (0..opts.samples).map(|_| normal.sample(&mut rng)).collect();
            let zs: Vec<Vec<f64>> = drawn
                .iter()
                .map(|&v| {
                    let mut z = base.clone();
                    z[i] = v;
                    z
                })
                .collect();
            let recovered = model.encode(&model.decode(&zs)?)?;
            if recovered.len() != zs.len() || recovered.iter().any(|r| r.len() != k) {
                return Err(Error::shape(
                    "disentanglement_scan",
                    &[recovered.len()],
                    &[zs.len(), k],
                ));
            }
            let omega = (0..k)
                .map(|j| sample_variance(&column(&recovered, j)).expect("samples >= 2"))
                .collect();
            Ok((omega, sample_variance(&drawn).expect("samples >= 2")))
        })
        .collect::<Result<_>>()?;

    let mut omega = vec![Vec::with_capacity(n_sigma); k];
    let mut input_variance = vec![Vec::with_capacity(n_sigma); k];
    for (&(i, _), (w, v)) in groups.iter().zip(results) {
        omega[i].push(w);
        input_variance[i].push(v);
    }
    Ok(DisentanglementProfile {
        sigma_grid: opts.sigma_grid.clone(),
        samples: opts.samples,
        omega,
        input_variance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub sigma: f64,
    pub sigma_sq: f64,
    /// `omega[i][i] / realized input variance`; `None` when the realized
    /// variance is zero.
    pub ratio: Option<f64>,
}

/// Per code, the on-target output variance over the realized input variance
/// at each grid point.
pub fn variance_ratio(profile: &DisentanglementProfile) -> Result<Vec<Vec<RatioPoint>>> {
    if let Some(s) = profile.sigma_grid.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Precondition(format!(
            "sigma values must be positive, got {s}"
        )));
    }
    Ok((0..profile.latent_dim())
        .map(|i| {
            profile
                .sigma_grid
                .iter()
                .enumerate()
                .map(|(m, &sigma)| {
                    let input = profile.input_variance[i][m];
                    RatioPoint {
                        sigma,
                        sigma_sq: sigma * sigma,
                        ratio: (input > 0.0).then(|| profile.omega[i][m][i] / input),
                    }
                })
                .collect()
        })
        .collect())
}

/// Normalized variance of every recovered code with one code held at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorMetricProfile {
    /// `[fixed code][output code]`.
    pub variance: Vec<Vec<f64>>,
    /// Population standard deviation of each recovered code on the
    /// calibration draw.
    pub calibration_std: Vec<f64>,
    /// Codes with zero calibration deviation; their entries are 0.
    pub excluded: Vec<bool>,
}

impl PriorMetricProfile {
    /// The output code with the lowest normalized variance when `fixed` is
    /// held, ignoring excluded codes.
    pub fn identified_code(&self, fixed: usize) -> Option<usize> {
        self.variance[fixed]
            .iter()
            .enumerate()
            .filter(|(j, _)| !self.excluded[*j])
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
    }
}

/// Calibration: `L` draws of `z ~ N(0, I)`, decoded and re-encoded, give the
/// per-code deviation. For each code `k` the same draws are reused with
/// `z_k = 0`, so differences between rows come from the fixed code alone.
pub fn prior_metric_profile<M: LatentRoundTrip + ?Sized>(
    model: &M,
    samples: usize,
    seed: u64,
) -> Result<PriorMetricProfile> {
    if samples < 2 {
        return Err(Error::Precondition(format!(
            "the prior metric needs at least 2 samples, got {samples}"
        )));
    }
    let k = model.latent_dim();
    let mut rng = group_rng(seed, u64::MAX);
    let draws: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..k).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let calibration = model.encode(&model.decode(&draws)?)?;
    let calibration_std: Vec<f64> = (0..k)
        .map(|j| {
            population_variance(&column(&calibration, j))
                .expect("samples >= 2")
                .sqrt()
        })
        .collect();
    let excluded: Vec<bool> = calibration_std.iter().map(|&s| !(s > 0.0)).collect();

    let variance = (0..k)
        .into_par_iter()
        .map(|fixed| -> Result<Vec<f64>> {
            let zs: Vec<Vec<f64>> = draws
                .iter()
                .map(|z| {
                    let mut z = z.clone();
                    z[fixed] = 0.0;
                    z
                })
                .collect();
            let rec = model.encode(&model.decode(&zs)?)?;
            Ok((0..k)
                .map(|j| {
                    if excluded[j] {
                        return 0.0;
                    }
                    let scaled: Vec<f64> = rec.iter().map(|r| r[j] / calibration_std[j]).collect();
                    population_variance(&scaled).expect("samples >= 2")
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(PriorMetricProfile {
        variance,
        calibration_std,
        excluded,
    })
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // ties share the mean of their 1-based positions
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            out[p] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ConstantModel, IdentityModel};

    #[test]
    fn identity_model_recovers_codes_exactly() {
        let m = IdentityModel { latent: 10 };
        let p = disentanglement_scan(&m, &ScanOptions::default()).unwrap();
        assert_eq!(p.groups(), 100);
        for i in 0..10 {
            for (s, w) in p.omega[i].iter().enumerate() {
                for (j, &v) in w.iter().enumerate() {
                    if j == i {
                        assert_eq!(v, p.input_variance[i][s]);
                    } else {
                        assert_eq!(v, 0.0);
                    }
                }
            }
        }
        for row in variance_ratio(&p).unwrap() {
            assert!(row.iter().all(|r| r.ratio == Some(1.0)));
        }
    }

    #[test]
    fn constant_model_has_zero_variance() {
        let m = ConstantModel { latent: 4 };
        let p = disentanglement_scan(&m, &ScanOptions::default()).unwrap();
        assert!(p.omega.iter().flatten().flatten().all(|&v| v == 0.0));
        for row in variance_ratio(&p).unwrap() {
            assert!(row.iter().all(|r| r.ratio == Some(0.0)));
        }
    }

    #[test]
    fn scan_is_seeded_and_pinnable() {
        let m = IdentityModel { latent: 3 };
        let opts = ScanOptions {
            samples: 2,
            seed: 4,
            ..ScanOptions::default()
        };
        let a = disentanglement_scan(&m, &opts).unwrap();
        assert_eq!(a, disentanglement_scan(&m, &opts).unwrap());
        assert!(a.omega.iter().flatten().flatten().all(|v| v.is_finite()));
        let pinned = ScanOptions {
            pin_non_targets: true,
            ..opts.clone()
        };
        assert_eq!(
            disentanglement_scan(&m, &pinned).unwrap().input_variance,
            a.input_variance
        );
        let bad = ScanOptions { samples: 1, ..opts };
        assert!(matches!(
            disentanglement_scan(&m, &bad),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn input_variance_tracks_sigma() {
        let m = IdentityModel { latent: 2 };
        let opts = ScanOptions {
            samples: 4000,
            ..ScanOptions::default()
        };
        let p = disentanglement_scan(&m, &opts).unwrap();
        for (v, s) in p.input_variance[0].iter().zip(&p.sigma_grid) {
            // standard error of a sample variance is about s^2 * sqrt(2 / L)
            assert!((v - s * s).abs() < 5.0 * s * s * (2.0f64 / 4000.0).sqrt());
        }
    }

    #[test]
    fn sample_variance_examples() {
        assert_eq!(sample_variance(&[1.0, 3.0]), Some(2.0));
        assert_eq!(sample_variance(&[7.25; 9]), Some(0.0));
        assert_eq!(sample_variance(&[1.0]), None);
        let xs = [1e9 + 1.0, 1e9 + 2.0, 1e9 + 3.0];
        assert_eq!(sample_variance(&xs), Some(1.0));
    }

    #[test]
    fn prior_metric_identity_and_constant() {
        let p = prior_metric_profile(&IdentityModel { latent: 5 }, 200, 3).unwrap();
        for k in 0..5 {
            assert_eq!(p.variance[k].len(), 5);
            for j in 0..5 {
                let expected = if j == k { 0.0 } else { 1.0 };
                assert!((p.variance[k][j] - expected).abs() < 1e-12, "{k} {j}");
            }
            assert_eq!(p.identified_code(k), Some(k));
        }
        let c = prior_metric_profile(&ConstantModel { latent: 3 }, 50, 3).unwrap();
        assert!(c.variance.iter().flatten().all(|&v| v == 0.0));
        assert!(c.excluded.iter().all(|&e| e));
        assert_eq!(c.identified_code(0), None);
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[10.0, 20.0, 30.0, 1000.0]), Some(1.0));
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&x, &[1.0; 4]), None);
        let r = spearman(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }
}
