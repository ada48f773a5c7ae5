//! Encounters, preprocessing, synthetic generation, and CSV ingestion.

pub(crate) mod io;
mod preprocess;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{export, ingest, read_manifest, write_manifest, Format, Manifest, ManifestEntry};
pub use preprocess::{
    denormalize, normalize, prepare, resample, resample_encounter, NormFrame, NormMode,
    DEFAULT_LENGTH,
};
pub use synth::{synth_generate, Family, SynthSpec};

pub type Point = [f64; 2];

/// Two time-aligned trajectories of equal length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encounter {
    pub id: String,
    pub s1: Vec<Point>,
    pub s2: Vec<Point>,
    /// Coordinates are in the normalized model space.
    pub normalized: bool,
    /// Present when the encounter came out of [`normalize`].
    pub frame: Option<NormFrame>,
}

impl Encounter {
    pub fn new(id: impl Into<String>, s1: Vec<Point>, s2: Vec<Point>) -> Result<Self> {
        if s1.len() != s2.len() {
            return Err(Error::Validation(format!(
                "trajectory lengths differ: {} vs {}",
                s1.len(),
                s2.len()
            )));
        }
        Ok(Self {
            id: id.into(),
            s1,
            s2,
            normalized: false,
            frame: None,
        })
    }

    /// An encounter in model space with no denormalization metadata, as
    /// produced by a decoder.
    pub fn generated(id: impl Into<String>, s1: Vec<Point>, s2: Vec<Point>) -> Result<Self> {
        let mut e = Self::new(id, s1, s2)?;
        e.normalized = true;
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.s1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s1.is_empty()
    }

    /// `[x1, y1, x2, y2]` at step `t`.
    pub fn step(&self, t: usize) -> [f64; 4] {
        let (a, b) = (self.s1[t], self.s2[t]);
        [a[0], a[1], b[0], b[1]]
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.s1.iter().chain(&self.s2)
    }

    pub fn max_abs_coord(&self) -> f64 {
        self.points()
            .flat_map(|p| p.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest coordinate difference against `other`.
    pub fn max_abs_diff(&self, other: &Encounter) -> f64 {
        self.points()
            .zip(other.points())
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, f64::max)
    }
}
