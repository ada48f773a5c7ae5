use serde::{Deserialize, Serialize};

use crate::data::{Encounter, Point};
use crate::error::{Error, Result};

/// Euclidean distance between the two vehicles at each time index.
pub fn distance_profile(enc: &Encounter) -> Result<Vec<f64>> {
    if enc.s1.len() != enc.s2.len() {
        return Err(Error::shape(
            "distance_profile",
            &[enc.s1.len()],
            &[enc.s2.len()],
        ));
    }
    Ok(enc
        .s1
        .iter()
        .zip(&enc.s2)
        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
        .collect())
}

/// Length of each step between adjacent points.
pub fn speed_profile(seq: &[Point]) -> Result<Vec<f64>> {
    if seq.len() < 2 {
        return Err(Error::Precondition(format!(
            "speed profile needs at least 2 points, got {}",
            seq.len()
        )));
    }
    Ok(seq
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionProfile {
    /// Turn angle between consecutive displacements, in `[0, 180]`.
    pub degrees: Vec<f64>,
    /// Indices where a displacement had zero length; those angles are 0.
    pub degenerate: Vec<usize>,
}

pub fn direction_profile(seq: &[Point]) -> Result<DirectionProfile> {
    if seq.len() < 3 {
        return Err(Error::Precondition(format!(
            "direction profile needs at least 3 points, got {}",
            seq.len()
        )));
    }
    let mut degenerate = Vec::new();
    let degrees = seq
        .windows(3)
        .enumerate()
        .map(|(i, w)| {
            let a = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let b = [w[2][0] - w[1][0], w[2][1] - w[1][1]];
            if a == [0.0, 0.0] || b == [0.0, 0.0] {
                degenerate.push(i);
                return 0.0;
            }
            let cross = a[0] * b[1] - a[1] * b[0];
            let dot = a[0] * b[0] + a[1] * b[1];
            cross.abs().atan2(dot).to_degrees()
        })
        .collect();
    Ok(DirectionProfile {
        degrees,
        degenerate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl ProfileSummary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len().max(1) as f64;
        Self {
            mean: xs.iter().sum::<f64>() / n,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Element-wise mean profiles over a reference set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub count: usize,
    pub distance: Vec<f64>,
    pub speed: [Vec<f64>; 2],
    pub direction: [Vec<f64>; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalityReport {
    pub distance: Vec<f64>,
    pub speed: [Vec<f64>; 2],
    pub direction: [DirectionProfile; 2],
    pub distance_summary: ProfileSummary,
    pub speed_summary: [ProfileSummary; 2],
    pub direction_summary: [ProfileSummary; 2],
    pub reference: Option<Overlay>,
}

impl RationalityReport {
    /// Some direction angle was defined by a zero-length step.
    pub fn has_degenerate_direction(&self) -> bool {
        self.direction.iter().any(|d| !d.degenerate.is_empty())
    }
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut out = vec![0.0; rows.first().map_or(0, Vec::len)];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= n);
    out
}

struct Profiles {
    distance: Vec<f64>,
    speed: [Vec<f64>; 2],
    direction: [DirectionProfile; 2],
}

fn profiles(enc: &Encounter) -> Result<Profiles> {
    Ok(Profiles {
        distance: distance_profile(enc)?,
        speed: [speed_profile(&enc.s1)?, speed_profile(&enc.s2)?],
        direction: [direction_profile(&enc.s1)?, direction_profile(&enc.s2)?],
    })
}

/// The three rationality profiles of `enc` with summaries; with a reference
/// set (same length as `enc`), also their element-wise mean.
pub fn rationality_report(
    enc: &Encounter,
    reference: Option<&[Encounter]>,
) -> Result<RationalityReport> {
    let p = profiles(enc)?;
    let reference = match reference {
        None => None,
        Some([]) => return Err(Error::Precondition("reference set is empty".into())),
        Some(refs) => {
            let mut all = Vec::with_capacity(refs.len());
            for r in refs {
                if r.len() != enc.len() {
                    return Err(Error::Precondition(format!(
                        "reference `{}` has length {}, encounter has {}",
                        r.id,
                        r.len(),
                        enc.len()
                    )));
                }
                all.push(profiles(r)?);
            }
            let pick = |f: &dyn Fn(&Profiles) -> Vec<f64>| -> Vec<f64> {
                mean_rows(&all.iter().map(f).collect::<Vec<_>>())
            };
            Some(Overlay {
                count: refs.len(),
                distance: pick(&|p| p.distance.clone()),
                speed: [pick(&|p| p.speed[0].clone()), pick(&|p| p.speed[1].clone())],
                direction: [
                    pick(&|p| p.direction[0].degrees.clone()),
                    pick(&|p| p.direction[1].degrees.clone()),
                ],
            })
        }
    };
    Ok(RationalityReport {
        distance_summary: ProfileSummary::of(&p.distance),
        speed_summary: [
            ProfileSummary::of(&p.speed[0]),
            ProfileSummary::of(&p.speed[1]),
        ],
        direction_summary: [
            ProfileSummary::of(&p.direction[0].degrees),
            ProfileSummary::of(&p.direction[1].degrees),
        ],
        distance: p.distance,
        speed: p.speed,
        direction: p.direction,
        reference,
    })
}
