use std::f64::consts::PI;

use anisomt::quad::golden_max;
use anisomt::{Domain, FinslerNorm, Grid, NormSpec};
use proptest::prelude::*;

fn p_norm() -> impl Strategy<Value = FinslerNorm> {
    (1.2f64..4.0, 0.5f64..2.0, 0.5f64..2.0).prop_map(|(p, a, b)| FinslerNorm::p_norm(p, &[a, b]).unwrap())
}

fn quadratic() -> impl Strategy<Value = FinslerNorm> {
    (0.5f64..3.0, 0.5f64..3.0, -0.8f64..0.8).prop_map(|(a, b, s)| {
        let c = s * (a * b).sqrt();
        FinslerNorm::quadratic(&[vec![a, c], vec![c, b]]).unwrap()
    })
}

fn any_norm() -> impl Strategy<Value = FinslerNorm> {
    prop_oneof![p_norm(), quadratic()]
}

fn vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 2).prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-4)
}

/// `sup_θ ⟨x(θ), ξ⟩ / F°(x(θ))` by a dense angle scan refined with golden section.
fn bidual(norm: &FinslerNorm, xi: &[f64]) -> f64 {
    let ratio = |t: f64| {
        let x = [t.cos(), t.sin()];
        (x[0] * xi[0] + x[1] * xi[1]) / norm.polar_eval(&x)
    };
    let m = 2000;
    let step = 2.0 * PI / m as f64;
    let best = (0..m).max_by(|&a, &b| ratio(a as f64 * step).total_cmp(&ratio(b as f64 * step))).unwrap();
    let t = best as f64 * step;
    golden_max(ratio, t - step, t + step, 1e-12).1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn homogeneity(norm in any_norm(), xi in vector(), t in -5.0f64..5.0) {
        let scaled: Vec<f64> = xi.iter().map(|v| t * v).collect();
        let f = norm.eval(&xi);
        prop_assert!((norm.eval(&scaled) - t.abs() * f).abs() <= 1e-12 * f * t.abs().max(1.0));
    }

    #[test]
    fn triangle_and_bounds(norm in any_norm(), x in vector(), y in vector()) {
        let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        prop_assert!(norm.eval(&s) <= norm.eval(&x) + norm.eval(&y) + 1e-12);
        let (a, b) = norm.anisotropy_bounds();
        let e = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let f = norm.eval(&x);
        prop_assert!(a * e <= f * (1.0 + 1e-9) && f <= b * e * (1.0 + 1e-9));
    }

    #[test]
    fn generalized_cauchy_schwarz(norm in any_norm(), x in vector(), xi in vector()) {
        let d = x[0] * xi[0] + x[1] * xi[1];
        prop_assert!(d <= norm.polar_eval(&x) * norm.eval(&xi) * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn bidual_recovers_norm(norm in any_norm(), xi in vector()) {
        let f = norm.eval(&xi);
        prop_assert!((bidual(&norm, &xi) - f).abs() <= 1e-6 * f);
    }

    #[test]
    fn duality_identities(norm in any_norm(), seed in any::<u64>()) {
        let report = norm.duality_check(200, seed);
        prop_assert!(report.max_violation() < 1e-6, "{report:?}");
    }

    #[test]
    fn spec_roundtrip(norm in any_norm()) {
        let text = toml::to_string(norm.spec()).unwrap();
        let spec: NormSpec = toml::from_str(&text).unwrap();
        let again = FinslerNorm::from_spec(&spec).unwrap();
        for xi in [[1.0, 0.0], [0.3, -0.7], [-2.0, 1.0]] {
            prop_assert_eq!(again.eval(&xi), norm.eval(&xi));
        }
    }
}

#[test]
fn wulff_measure_scales_like_rn() {
    let norms = [
        FinslerNorm::euclidean(2).unwrap(),
        FinslerNorm::p_norm(3.0, &[1.0, 2.0]).unwrap(),
        FinslerNorm::quadratic(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap(),
    ];
    for norm in &norms {
        let kappa = norm.kappa().unwrap();
        for r in [0.5, 1.0, 2.0] {
            let grid = Grid::new(&Domain::wulff(norm, r), r / 256.0).unwrap();
            let area = grid.area();
            assert!((area / (kappa * r * r) - 1.0).abs() < 0.02, "{:?} r={r}: {area}", norm.spec());
        }
    }
}

#[test]
fn euclidean_3d_constants() {
    let norm = FinslerNorm::euclidean(3).unwrap();
    let kappa = 4.0 * PI / 3.0;
    assert!((norm.kappa().unwrap() - kappa).abs() < 1e-10);
    assert!((norm.lambda_n().unwrap() - 3f64.powf(1.5) * kappa.sqrt()).abs() < 1e-10);
    assert!(norm.duality_check(500, 3).max_violation() < 1e-10);
}

#[test]
fn sampled_support_is_an_admissible_norm() {
    let values: Vec<f64> = (0..64)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / 64.0;
            (4.0 * t.cos().powi(2) + t.sin().powi(2)).sqrt()
        })
        .collect();
    let norm = FinslerNorm::sampled_support(&values).unwrap();
    let report = norm.duality_check(1000, 11);
    assert!(report.triangle < 1e-9);
    assert!(report.max_violation() < 1e-4, "{report:?}");
}
