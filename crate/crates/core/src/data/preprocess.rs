//! Resampling to a fixed length and normalization into `[-1, 1]`.
//!
//! Two normalization modes exist:
//!
//! * `Shared` (default): subtract the joint centroid of both trajectories and
//!   divide by the largest absolute coordinate deviation over both. The
//!   relative geometry of the two vehicles survives, so inter-vehicle distance
//!   profiles stay meaningful.
//! * `Literal`: subtract each trajectory's own mean, then divide by the same
//!   shared maximum deviation. This collapses the two vehicles onto a common
//!   origin and is kept for comparison only.

use serde::{Deserialize, Serialize};

use super::{Encounter, Point};
use crate::error::{Error, Result};

pub const DEFAULT_LENGTH: usize = 50;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    #[default]
    Shared,
    Literal,
}

impl NormMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NormMode::Shared => "shared",
            NormMode::Literal => "literal",
        }
    }
}

/// The affine map applied by [`normalize`]: `p' = (p - center) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormFrame {
    pub mode: NormMode,
    pub center1: Point,
    pub center2: Point,
    pub scale: f64,
}

/// Piecewise-linear resampling at `len` uniformly spaced index positions.
pub fn resample(traj: &[Point], len: usize) -> Result<Vec<Point>> {
    if traj.len() < 2 {
        return Err(Error::Precondition(format!(
            "resample needs at least 2 points, got {}",
            traj.len()
        )));
    }
    if len < 2 {
        return Err(Error::Precondition(format!(
            "resample target length must be at least 2, got {len}"
        )));
    }
    let last = traj.len() - 1;
    let span = last as f64;
    let denom = (len - 1) as f64;
    let mut out = Vec::with_capacity(len);
    for j in 0..len {
        if j == len - 1 {
            out.push(traj[last]);
            continue;
        }
        let u = j as f64 * span / denom;
        let i = (u.floor() as usize).min(last);
        let frac = u - i as f64;
        if frac == 0.0 || i == last {
            out.push(traj[i]);
        } else {
            let (a, b) = (traj[i], traj[i + 1]);
            out.push([a[0] + frac * (b[0] - a[0]), a[1] + frac * (b[1] - a[1])]);
        }
    }
    Ok(out)
}

pub fn resample_encounter(enc: &Encounter, len: usize) -> Result<Encounter> {
    Ok(Encounter {
        s1: resample(&enc.s1, len)?,
        s2: resample(&enc.s2, len)?,
        ..enc.clone()
    })
}

fn mean(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
    [sx / n, sy / n]
}

fn max_dev(points: &[Point], c: Point) -> f64 {
    points
        .iter()
        .flat_map(|p| [(p[0] - c[0]).abs(), (p[1] - c[1]).abs()])
        .fold(0.0, f64::max)
}

fn apply(points: &[Point], c: Point, scale: f64) -> Vec<Point> {
    points
        .iter()
        .map(|p| [(p[0] - c[0]) / scale, (p[1] - c[1]) / scale])
        .collect()
}

fn unapply(points: &[Point], c: Point, scale: f64) -> Vec<Point> {
    points
        .iter()
        .map(|p| [p[0] * scale + c[0], p[1] * scale + c[1]])
        .collect()
}

pub fn normalize(enc: &Encounter, mode: NormMode) -> Result<Encounter> {
    if enc.normalized {
        return Err(Error::Precondition(format!(
            "encounter `{}` is already normalized",
            enc.id
        )));
    }
    if enc.is_empty() {
        return Err(Error::Degenerate(format!(
            "encounter `{}` is empty",
            enc.id
        )));
    }
    let (center1, center2) = match mode {
        NormMode::Shared => {
            let all: Vec<Point> = enc.points().copied().collect();
            let c = mean(&all);
            (c, c)
        }
        NormMode::Literal => (mean(&enc.s1), mean(&enc.s2)),
    };
    let scale = max_dev(&enc.s1, center1).max(max_dev(&enc.s2, center2));
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Degenerate(format!(
            "encounter `{}` has zero spatial extent",
            enc.id
        )));
    }
    Ok(Encounter {
        id: enc.id.clone(),
        s1: apply(&enc.s1, center1, scale),
        s2: apply(&enc.s2, center2, scale),
        normalized: true,
        frame: Some(NormFrame {
            mode,
            center1,
            center2,
            scale,
        }),
    })
}

pub fn denormalize(enc: &Encounter) -> Result<Encounter> {
    let frame = enc.frame.ok_or_else(|| {
        Error::Precondition(format!(
            "encounter `{}` carries no normalization metadata",
            enc.id
        ))
    })?;
    Ok(Encounter {
        id: enc.id.clone(),
        s1: unapply(&enc.s1, frame.center1, frame.scale),
        s2: unapply(&enc.s2, frame.center2, frame.scale),
        normalized: false,
        frame: None,
    })
}

/// Resamples every encounter to `len` points and normalizes it.
pub fn prepare(encs: &[Encounter], len: usize, mode: NormMode) -> Result<Vec<Encounter>> {
    encs.iter()
        .map(|e| normalize(&resample_encounter(e, len)?, mode))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(s1: Vec<Point>, s2: Vec<Point>) -> Encounter {
        Encounter::new("t", s1, s2).unwrap()
    }

    #[test]
    fn resample_two_points_to_five() {
        let out = resample(&[[0.0, 0.0], [1.0, 1.0]], 5).unwrap();
        let expected = [0.0, 0.25, 0.5, 0.75, 1.0];
        for (p, e) in out.iter().zip(expected) {
            assert_eq!(*p, [e, e]);
        }
    }

    #[test]
    fn resample_same_length_is_identity() {
        let traj: Vec<Point> = (0..17)
            .map(|i| [(i as f64).sin(), (i as f64 * 0.3).cos()])
            .collect();
        let out = resample(&traj, 17).unwrap();
        for (a, b) in out.iter().zip(&traj) {
            assert!((a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn resample_137_to_50_keeps_endpoints() {
        let traj: Vec<Point> = (0..137)
            .map(|i| [i as f64 * 0.7, (i as f64).sqrt()])
            .collect();
        let out = resample(&traj, 50).unwrap();
        assert_eq!(out.len(), 50);
        assert_eq!(out[0], traj[0]);
        assert_eq!(out[49], traj[136]);
    }

    #[test]
    fn resample_preconditions() {
        assert!(matches!(
            resample(&[[0.0, 0.0]], 5),
            Err(Error::Precondition(_))
        ));
        assert!(resample(&[[0.0, 0.0], [1.0, 0.0]], 1).is_err());
    }

    #[test]
    fn shared_frame_example() {
        let e = enc(vec![[0.0, 0.0], [2.0, 0.0]], vec![[0.0, 2.0], [2.0, 2.0]]);
        let n = normalize(&e, NormMode::Shared).unwrap();
        assert_eq!(n.s1, vec![[-1.0, -1.0], [1.0, -1.0]]);
        assert_eq!(n.s2, vec![[-1.0, 1.0], [1.0, 1.0]]);
        let f = n.frame.unwrap();
        assert_eq!((f.center1, f.scale), ([1.0, 1.0], 1.0));
    }

    #[test]
    fn unit_box_is_unchanged() {
        let e = enc(
            vec![[-1.0, -1.0], [1.0, 1.0]],
            vec![[1.0, -1.0], [-1.0, 1.0]],
        );
        let n = normalize(&e, NormMode::Shared).unwrap();
        assert_eq!((n.s1.clone(), n.s2.clone()), (e.s1.clone(), e.s2.clone()));
    }

    #[test]
    fn round_trip_both_modes() {
        let e = enc(
            vec![[10.5, -3.0], [12.0, -2.0], [14.25, 0.5]],
            vec![[-7.0, 4.0], [-5.5, 3.0], [-4.0, 1.75]],
        );
        for mode in [NormMode::Shared, NormMode::Literal] {
            let back = denormalize(&normalize(&e, mode).unwrap()).unwrap();
            assert!(back.max_abs_diff(&e) <= 1e-12);
            assert!(!back.normalized);
        }
    }

    #[test]
    fn literal_mode_centers_each_vehicle() {
        let e = enc(vec![[0.0, 0.0], [2.0, 0.0]], vec![[10.0, 2.0], [14.0, 2.0]]);
        let n = normalize(&e, NormMode::Literal).unwrap();
        let m2 = mean(&n.s2);
        assert_eq!(m2, [0.0, 0.0]);
        assert_eq!(n.max_abs_coord(), 1.0);
    }

    #[test]
    fn degenerate_and_repeat_inputs() {
        let e = enc(vec![[3.0, 3.0]; 4], vec![[3.0, 3.0]; 4]);
        assert!(matches!(
            normalize(&e, NormMode::Shared),
            Err(Error::Degenerate(_))
        ));

        let e = enc(vec![[0.0, 0.0], [1.0, 0.0]], vec![[0.0, 1.0], [1.0, 1.0]]);
        let n = normalize(&e, NormMode::Shared).unwrap();
        assert!(matches!(
            normalize(&n, NormMode::Shared),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(denormalize(&e), Err(Error::Precondition(_))));
    }
}
