use proptest::prelude::*;

use encforge::data::{denormalize, normalize, resample, Encounter, NormMode, Point};
use encforge::error::Result;
use encforge::metrics::{direction_profile, distance_profile, speed_profile};
use encforge::numerics::{grad_check, mse_value, ParamStore, Tape, Tensor, Var};

fn store(x: &[f64], y: &[f64]) -> ParamStore {
    let mut s = ParamStore::new();
    s.insert("x", Tensor::new(vec![2, 3], x.to_vec()).unwrap())
        .unwrap();
    s.insert("y", Tensor::new(vec![2, 3], y.to_vec()).unwrap())
        .unwrap();
    s
}

fn check<F>(params: &ParamStore, f: F)
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let report = grad_check(f, params, 1e-5, 1e-4).unwrap();
    assert!(report.passed, "{report:?}");
}

fn six() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 6)
}

fn trajectory(n: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(prop::array::uniform2(-50.0..50.0f64), n)
}

fn encounter() -> impl Strategy<Value = Encounter> {
    (3usize..12)
        .prop_flat_map(|n| (trajectory(n), trajectory(n)))
        .prop_map(|(a, b)| Encounter::new("p", a, b).unwrap())
}

fn transform(seq: &[Point], angle: f64, scale: f64, shift: Point) -> Vec<Point> {
    let (s, c) = angle.sin_cos();
    seq.iter()
        .map(|p| {
            [
                scale * (c * p[0] - s * p[1]) + shift[0],
                scale * (s * p[0] + c * p[1]) + shift[1],
            ]
        })
        .collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn elementwise_gradients(x in six(), y in six()) {
        let p = store(&x, &y);
        check(&p, |t, s| t.param(s, "x")?.tanh()?.mul(&t.param(s, "y")?)?.sum());
        check(&p, |t, s| t.param(s, "x")?.sigmoid()?.add(&t.param(s, "y")?.exp()?)?.sum());
        check(&p, |t, s| t.param(s, "x")?.one_minus()?.scale(0.3)?.add_scalar(2.0)?.mul(&t.param(s, "x")?)?.sum());
        check(&p, |t, s| t.param(s, "x")?.mse(&t.param(s, "y")?));
    }

    #[test]
    fn structural_gradients(x in six(), y in six()) {
        let p = store(&x, &y);
        check(&p, |t, s| {
            let x = t.param(s, "x")?;
            x.matmul_nt(&t.param(s, "y")?)?.scale(0.25)?.tanh()?.sum()
        });
        check(&p, |t, s| {
            let x = t.param(s, "x")?;
            let both = Var::concat(&[x.clone(), t.param(s, "y")?])?;
            both.slice_cols(2, 3)?.sub(&x)?.exp()?.sum()
        });
        check(&p, |t, s| {
            let mu = t.param(s, "x")?;
            let sigma = t.param(s, "y")?.scale(0.5)?.exp()?;
            Var::gaussian_kl(&mu, &sigma)
        });
    }

    #[test]
    fn mse_is_symmetric(x in six(), y in six()) {
        let a = Tensor::new(vec![2, 3], x).unwrap();
        let b = Tensor::new(vec![2, 3], y).unwrap();
        prop_assert_eq!(mse_value(&a, &b).unwrap(), mse_value(&b, &a).unwrap());
        prop_assert_eq!(mse_value(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn normalization_invariants(enc in encounter(), shared in any::<bool>()) {
        let mode = if shared { NormMode::Shared } else { NormMode::Literal };
        let n = normalize(&enc, mode).unwrap();
        prop_assert!((n.max_abs_coord() - 1.0).abs() <= 1e-12);
        let back = denormalize(&n).unwrap();
        prop_assert!(back.max_abs_diff(&enc) <= 1e-12 * (1.0 + enc.max_abs_coord()));
    }

    #[test]
    fn profiles_are_rigid_invariant(
        enc in encounter(),
        angle in -3.2..3.2f64,
        scale in 0.1..10.0f64,
        shift in prop::array::uniform2(-100.0..100.0f64),
    ) {
        let moved = Encounter::new(
            "moved",
            transform(&enc.s1, angle, scale, shift),
            transform(&enc.s2, angle, scale, shift),
        )
        .unwrap();
        let d: Vec<f64> = distance_profile(&enc).unwrap().iter().map(|v| v * scale).collect();
        prop_assert!(close(&d, &distance_profile(&moved).unwrap(), 1e-9));
        let v: Vec<f64> = speed_profile(&enc.s1).unwrap().iter().map(|v| v * scale).collect();
        prop_assert!(close(&v, &speed_profile(&moved.s1).unwrap(), 1e-9));
        let a = direction_profile(&enc.s2).unwrap();
        let b = direction_profile(&moved.s2).unwrap();
        prop_assert!(close(&a.degrees, &b.degrees, 1e-6));
    }

    #[test]
    fn direction_angles_are_bounded(seq in (3usize..20).prop_flat_map(trajectory)) {
        let p = direction_profile(&seq).unwrap();
        prop_assert_eq!(p.degrees.len(), seq.len() - 2);
        prop_assert!(p.degrees.iter().all(|d| (0.0..=180.0).contains(d)));
    }

    #[test]
    fn resampling_is_exact_on_lines(
        n in 2usize..40,
        len in 2usize..80,
        a in prop::array::uniform2(-10.0..10.0f64),
        b in prop::array::uniform2(-3.0..3.0f64),
    ) {
        let line: Vec<Point> = (0..n).map(|i| [a[0] + b[0] * i as f64, a[1] + b[1] * i as f64]).collect();
        let out = resample(&line, len).unwrap();
        prop_assert_eq!(out.len(), len);
        for (j, p) in out.iter().enumerate() {
            let u = j as f64 * (n - 1) as f64 / (len - 1) as f64;
            prop_assert!((p[0] - (a[0] + b[0] * u)).abs() <= 1e-12 * (1.0 + a[0].abs() + (b[0] * u).abs()));
            prop_assert!((p[1] - (a[1] + b[1] * u)).abs() <= 1e-12 * (1.0 + a[1].abs() + (b[1] * u).abs()));
        }
    }
}
