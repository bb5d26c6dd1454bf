mod common;

use common::cantor;
use czo_wolff::energy::{growth_constant, wolff_dyadic, wolff_integral, WeakDensity};
use czo_wolff::measure::{generate, Family};
use czo_wolff::stats::linear_fit;
use czo_wolff::{Ambient, Cube, LatticeView, Measure, MeasureSpec};
use proptest::prelude::*;

/// `∫_0^1 ∫_a^b (|(x - r, x + r) ∩ (0, 1)| / r^s)^2 dr/r dx` by midpoints in
/// `x` and the trapezoid rule in `log r`.
fn lebesgue_oracle(s: f64, a: f64, b: f64) -> f64 {
    let nx = 2000;
    let nr = 10_000;
    let (la, lb) = (a.ln(), b.ln());
    let h = (lb - la) / nr as f64;
    let mut total = 0.0;
    for i in 0..nx {
        let x = (i as f64 + 0.5) / nx as f64;
        let f = |t: f64| {
            let r = t.exp();
            let m = (x + r).min(1.0) - (x - r).max(0.0);
            (m / r.powf(s)).powi(2)
        };
        let mut acc = 0.5 * (f(la) + f(lb));
        for j in 1..nr {
            acc += f(la + j as f64 * h);
        }
        total += acc * h / nx as f64;
    }
    total
}

fn interval(resolution: u32) -> Measure {
    generate(&MeasureSpec {
        s: 0.5,
        eps: 0.1,
        family: Family::LebesgueCube {
            d: 1,
            side: 1.0,
            resolution,
            origin: None,
        },
    })
    .unwrap()
}

#[test]
fn lebesgue_interval_matches_quadrature() {
    let mu = interval(64);
    let (a, b) = (0.25, 4.0);
    let got = wolff_integral(&mu, None, a, b).unwrap();
    let want = lebesgue_oracle(0.5, a, b);
    assert!((got - want).abs() <= 0.01 * want, "{got} vs {want}");
}

#[test]
fn single_atom_has_closed_form() {
    let mu = common::line_cloud(&[0.3], &[2.0]);
    // w^3 ∫_a^b r^(-2) dr with s = 1/2
    let got = wolff_integral(&mu, None, 0.5, 4.0).unwrap();
    assert!((got - 8.0 * (2.0 - 0.25)).abs() < 1e-12, "{got}");
}

#[test]
fn restricting_to_a_cube_ignores_outside_atoms() {
    let mu = common::line_cloud(&[0.1, 0.2, 50.0], &[1.0, 1.0, 1.0]);
    let near = common::line_cloud(&[0.1, 0.2], &[1.0, 1.0]);
    let q = Cube::q0(1);
    let a = wolff_integral(&mu, Some(&q), 0.01, 10.0).unwrap();
    let b = wolff_integral(&near, None, 0.01, 10.0).unwrap();
    assert!((a - b).abs() < 1e-12 * b);
}

#[test]
fn bad_radii_are_rejected() {
    let mu = interval(4);
    assert!(wolff_integral(&mu, None, 0.0, 1.0).is_err());
    assert!(wolff_integral(&mu, None, 2.0, 1.0).is_err());
    assert!(wolff_integral(&mu, None, f64::NAN, 1.0).is_err());
}

#[test]
fn cantor_dyadic_energy_grows_with_generation() {
    // at the critical exponent every generation adds a comparable amount
    let s = 0.5;
    let ns: Vec<f64> = (3..=8).map(f64::from).collect();
    let ws: Vec<f64> = (3..=8)
        .map(|n| {
            let mu = cantor(1, s, 0.25, n);
            let view = LatticeView::new(-2 * n as i32 - 2, 2).unwrap();
            wolff_dyadic(&mu, &view)
        })
        .collect();
    let (slope, _) = linear_fit(&ns, &ws).unwrap();
    assert!(slope > 0.0, "{ws:?}");
    assert!(ws.windows(2).all(|w| w[1] > w[0]), "{ws:?}");
}

#[test]
fn cantor_growth_constant_plateaus() {
    let gs: Vec<f64> = (3..=8)
        .map(|n| {
            let mu = cantor(1, 0.5, 0.25, n);
            growth_constant(&mu, &LatticeView::new(-2 * n as i32 - 2, 2).unwrap())
        })
        .collect();
    let (lo, hi) = gs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &g| (a.min(g), b.max(g)));
    assert!(hi <= 1.05 * lo, "{gs:?}");
}

#[test]
fn weak_density_has_a_positive_floor_on_the_support() {
    let mu = cantor(1, 0.5, 0.25, 5);
    let view = LatticeView::new(-12, 2).unwrap();
    let wd = WeakDensity::new(&mu, &view);
    for (i, v) in wd.atom_values() {
        assert!(v > 0.0, "atom {i}");
    }
    assert_eq!(wd.at(&[1000.0]), 0.0);
    assert!(!wd.in_level_set(&[3.6], 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn radius_ranges_are_additive(seed in 0u64..1000, a in 0.01f64..0.1, b in 0.1f64..1.0, c in 1.0f64..10.0) {
        let mu = common_random(seed);
        let whole = wolff_integral(&mu, None, a, c).unwrap();
        let parts = wolff_integral(&mu, None, a, b).unwrap() + wolff_integral(&mu, None, b, c).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-10 * whole);
    }

    #[test]
    fn dilation_scales_by_lambda_to_the_s(seed in 0u64..1000, lambda in 0.2f64..5.0) {
        let mu = common_random(seed);
        let s = mu.ambient().s;
        let pts: Vec<Vec<f64>> = mu.points().map(|(x, _)| x.iter().map(|c| lambda * c).collect()).collect();
        let w: Vec<f64> = mu.weights().iter().map(|w| w * lambda.powf(s)).collect();
        let nu = Measure::from_points(*mu.ambient(), &pts, w).unwrap();
        let a = wolff_integral(&mu, None, 0.05, 3.0).unwrap();
        let b = wolff_integral(&nu, None, 0.05 * lambda, 3.0 * lambda).unwrap();
        prop_assert!((b - lambda.powf(s) * a).abs() <= 1e-9 * b);
    }

    #[test]
    fn weak_density_is_linear_in_mass(seed in 0u64..1000, c in 0.1f64..10.0) {
        let mu = common_random(seed);
        let view = LatticeView::new(-6, 2).unwrap();
        let scaled = mu.scaled(c).unwrap();
        let a = WeakDensity::new(&mu, &view);
        let b = WeakDensity::new(&scaled, &view);
        for (x, _) in mu.points() {
            let (va, vb) = (a.at(x), b.at(x));
            prop_assert!((vb - c * va).abs() <= 1e-12 * vb.max(1.0));
        }
    }
}

fn common_random(seed: u64) -> Measure {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(1..=2);
    let n = rng.gen_range(2..40);
    let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
    let w = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
    Measure::from_points(Ambient::new(d, 0.5, 0.1).unwrap(), &pts, w).unwrap()
}
