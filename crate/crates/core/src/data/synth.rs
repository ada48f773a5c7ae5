//! Seeded synthetic two-vehicle encounters in raw (meter) coordinates.
//!
//! Each encounter covers `points` samples spaced `dt` seconds apart
//! (defaults: 100 samples at 10 Hz). A random rigid placement (rotation and
//! translation) is applied per encounter so the families are not
//! axis-aligned.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Encounter, Point};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Straight constant-speed paths whose headings differ by 60 to 120°, both
    /// reaching the crossing point at the middle sample.
    Crossing,
    /// Parallel lanes, same heading.
    SameDirection,
    /// Parallel lanes, opposite headings, passing mid-window.
    OppositeDirection,
    /// The second vehicle closes in laterally and longitudinally behind the
    /// first.
    Merging,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Crossing,
        Family::SameDirection,
        Family::OppositeDirection,
        Family::Merging,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Crossing => "crossing",
            Family::SameDirection => "same-direction",
            Family::OppositeDirection => "opposite-direction",
            Family::Merging => "merging",
        }
    }

    /// Families whose trajectories are straight lines without noise.
    pub fn is_straight(self) -> bool {
        !matches!(self, Family::Merging)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown encounter family `{s}` (expected one of crossing, same-direction, opposite-direction, merging)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub family: Family,
    pub count: usize,
    /// Standard deviation of per-coordinate Gaussian noise, meters.
    pub noise: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub seed: u64,
    pub points: usize,
    pub dt: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            family: Family::Crossing,
            count: 200,
            noise: 0.0,
            speed_min: 5.0,
            speed_max: 15.0,
            seed: 0,
            points: 100,
            dt: 0.1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise >= 0.0) {
            return Err(Error::Config(format!(
                "noise must be >= 0, got {}",
                self.noise
            )));
        }
        if self.count < 1 {
            return Err(Error::Config("count must be >= 1".into()));
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min) {
            return Err(Error::Config(format!(
                "speed range must satisfy 0 < min <= max, got [{}, {}]",
                self.speed_min, self.speed_max
            )));
        }
        if self.points < 3 {
            return Err(Error::Config("points must be >= 3".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        Ok(())
    }
}

struct Placement {
    heading: f64,
    origin: Point,
}

impl Placement {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            heading: rng.random_range(0.0..2.0 * PI),
            origin: [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)],
        }
    }

    /// Maps local (along, lateral) coordinates into the global frame.
    fn place(&self, along: f64, lateral: f64) -> Point {
        let (s, c) = self.heading.sin_cos();
        [
            self.origin[0] + along * c - lateral * s,
            self.origin[1] + along * s + lateral * c,
        ]
    }
}

fn speed(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> f64 {
    if spec.speed_max > spec.speed_min {
        rng.random_range(spec.speed_min..spec.speed_max)
    } else {
        spec.speed_min
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn one(rng: &mut ChaCha8Rng, spec: &SynthSpec, index: usize) -> Result<Encounter> {
    let n = spec.points;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * spec.dt).collect();
    let t_mid = (n / 2) as f64 * spec.dt;
    let duration = (n - 1) as f64 * spec.dt;
    let place = Placement::random(rng);
    let v1 = speed(rng, spec);
    let v2 = speed(rng, spec);
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };

    let (s1, s2): (Vec<Point>, Vec<Point>) = match spec.family {
        Family::Crossing => {
            let delta = side * rng.random_range(60.0..=120.0f64).to_radians();
            let (sd, cd) = delta.sin_cos();
            times
                .iter()
                .map(|&t| {
                    let a = v1 * (t - t_mid);
                    let b = v2 * (t - t_mid);
                    (place.place(a, 0.0), place.place(b * cd, b * sd))
                })
                .unzip()
        }
        Family::SameDirection => {
            let lane = side * rng.random_range(3.0..4.0);
            let gap = rng.random_range(-20.0..20.0);
            times
                .iter()
                .map(|&t| (place.place(v1 * t, 0.0), place.place(gap + v2 * t, lane)))
                .unzip()
        }
        Family::OppositeDirection => {
            let lane = side * rng.random_range(3.0..4.0);
            times
                .iter()
                .map(|&t| {
                    let a = v1 * (t - t_mid);
                    let b = -v2 * (t - t_mid);
                    (place.place(a, 0.0), place.place(b, lane))
                })
                .unzip()
        }
        Family::Merging => {
            let lane = side * rng.random_range(3.0..4.0);
            let gap_start = rng.random_range(-15.0..-5.0);
            let gap_end = gap_start * rng.random_range(0.3..0.6);
            let v2 = (v1 + (gap_end - gap_start) / duration).max(0.5 * spec.speed_min);
            times
                .iter()
                .map(|&t| {
                    let lat = lane * (1.0 - smoothstep(t / duration));
                    (
                        place.place(v1 * t, 0.0),
                        place.place(gap_start + v2 * t, lat),
                    )
                })
                .unzip()
        }
    };

    let (s1, s2) = if spec.noise > 0.0 {
        let normal =
            Normal::new(0.0, spec.noise).map_err(|e| Error::Config(format!("noise: {e}")))?;
        let mut jitter = |pts: Vec<Point>| -> Vec<Point> {
            pts.into_iter()
                .map(|p| [p[0] + normal.sample(rng), p[1] + normal.sample(rng)])
                .collect()
        };
        let s1 = jitter(s1);
        (s1, jitter(s2))
    } else {
        (s1, s2)
    };
    Encounter::new(format!("{}-{index:05}", spec.family), s1, s2)
}

/// Generates `spec.count` encounters; identical specs give identical output.
pub fn synth_generate(spec: &SynthSpec) -> Result<Vec<Encounter>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.count).map(|i| one(&mut rng, spec, i)).collect()
}
