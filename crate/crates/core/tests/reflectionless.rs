mod common;

use common::line_cloud;
use czo_wolff::measure::region::ClosedBox;
use czo_wolff::measure::{generate, Family};
use czo_wolff::operators::Bump;
use czo_wolff::reflectionless::{
    all_pairs, ball_difference, dimension_window_check, interior_window, plane_distances, ramp_difference,
    reflection_closure, reflectionless_defect, verify_structure, ClosureLimits, StructureHypothesis,
};
use czo_wolff::{Ambient, Measure, MeasureSpec};
use proptest::prelude::*;

/// `Σ_{|j| <= n} f(j) δ_j` with `f` cycling through `weights`.
fn integers(n: i64, weights: &[f64]) -> Measure {
    let pts: Vec<f64> = (-n..=n).map(|j| j as f64).collect();
    let w: Vec<f64> = (-n..=n).map(|j| weights[j.rem_euclid(weights.len() as i64) as usize]).collect();
    line_cloud(&pts, &w)
}

fn lattice(weights: &[f64], resolution: u32) -> Measure {
    generate(&MeasureSpec {
        s: 1.5,
        eps: 0.1,
        family: Family::PlaneLattice {
            d: 2,
            k: 1,
            spacing: 1.0,
            weights: weights.to_vec(),
            half_width: 4.0,
            resolution,
            stagger: false,
        },
    })
    .unwrap()
}

#[test]
fn integers_have_zero_defect() {
    let mu = integers(40, &[1.0]);
    for r in [0.5, 1.5, 3.0, 7.5] {
        let w = interior_window(&mu, r).unwrap();
        let d = reflectionless_defect(&mu, &Bump::standard(r).unwrap(), &w).unwrap();
        assert!(d <= 1e-13, "r={r}: {d}");
    }
}

#[test]
fn two_periodic_weights_have_zero_defect() {
    let mu = integers(40, &[1.0, 2.0]);
    let w = interior_window(&mu, 3.0).unwrap();
    assert!(reflectionless_defect(&mu, &Bump::standard(3.0).unwrap(), &w).unwrap() <= 1e-13);
}

#[test]
fn ball_differences_vanish_on_symmetric_support() {
    let mu = integers(30, &[1.0, 2.0]);
    for x in -10..=10 {
        for z in [0.5, 1.0, 2.5, 3.0] {
            for r in [0.7, 1.0, 2.2] {
                assert_eq!(ball_difference(&mu, &[x as f64], &[z], r), 0.0, "x={x} z={z} r={r}");
            }
        }
    }
    // off the support the constant is lost
    let mu = line_cloud(&[0.0, 1.0, 3.0], &[1.0, 1.0, 1.0]);
    assert_eq!(ball_difference(&mu, &[1.0], &[1.0], 0.5), -1.0);
}

#[test]
fn ramp_increases_to_the_ball_mass() {
    let mu = integers(10, &[1.0, 2.0]);
    // the mirror ball sits far from the support, so only one side counts
    let (x, z, r) = ([50.0], [-49.6], 2.0);
    let target = ball_difference(&mu, &x, &z, r);
    let mut last = f64::NEG_INFINITY;
    for steep in [1.0, 2.0, 4.0, 8.0, 100.0, 1e6] {
        let v = ramp_difference(&mu, &x, &z, r, steep);
        assert!(v >= last && v <= target + 1e-12, "steep {steep}: {v}");
        last = v;
    }
    assert!((last - target).abs() <= 1e-5, "{last} vs {target}");
}

#[test]
fn closure_is_idempotent() {
    let window = ClosedBox::new(vec![-2.0, -2.0], vec![2.0, 2.0]);
    let support = vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![0.0, 0.75]];
    let first = reflection_closure(&support, &all_pairs(3), &window, ClosureLimits::default()).unwrap();
    assert!(first.is_fixed_point());
    // regenerate from the same three generators placed first
    let mut again = support.clone();
    again.extend(first.points.iter().cloned());
    let second = reflection_closure(&again, &all_pairs(3), &window, ClosureLimits::default()).unwrap();
    assert_eq!(first.points, second.points);
    assert_eq!(first.points.len(), 9 * 5);
}

#[test]
fn closure_grows_with_the_window() {
    let support = vec![vec![0.0], vec![0.3], vec![0.7]];
    let limits = ClosureLimits {
        min_spacing: 1e-3,
        max_points: 50_000,
    };
    let mut prev: Option<Vec<Vec<f64>>> = None;
    for half in [1.0, 2.0, 4.0] {
        let window = ClosedBox::new(vec![-half], vec![half]);
        let c = reflection_closure(&support, &all_pairs(3), &window, limits).unwrap();
        assert!(c.is_fixed_point());
        if let Some(p) = &prev {
            for x in p {
                assert!(c.points.iter().any(|y| (x[0] - y[0]).abs() < 1e-9), "{x:?} lost");
            }
        }
        prev = Some(c.points);
    }
}

#[test]
fn closure_rejects_bad_input() {
    let w = ClosedBox::new(vec![-1.0], vec![1.0]);
    let support = vec![vec![0.0], vec![0.5]];
    assert!(reflection_closure(&support, &[(0, 5)], &w, ClosureLimits::default()).is_err());
    let bad = ClosureLimits {
        min_spacing: 0.0,
        max_points: 10,
    };
    assert!(reflection_closure(&support, &[(0, 1)], &w, bad).is_err());
    assert!(reflection_closure(&[vec![0.0, 0.0]], &[], &w, ClosureLimits::default()).is_err());
}

#[test]
fn lattice_passes_its_own_hypothesis() {
    for weights in [vec![1.0], vec![1.0, 2.0]] {
        let mu = lattice(&weights, 32);
        let hyp = StructureHypothesis::plane_lattice(2, 1, 1.0, &weights, 4.0).unwrap();
        let rep = verify_structure(&mu, &hyp, 1e-6).unwrap();
        assert!(rep.passed(), "{weights:?}: {:?}", rep.violations.first());
        // the planes at +-4 lie on the window edge, outside the sampled interior
        assert_eq!(rep.planes_checked, 7);
        assert!(plane_distances(&mu, &hyp).iter().all(|&(_, d)| d <= 1e-12));
    }
}

#[test]
fn injected_weight_fault_is_localized() {
    let mu = lattice(&[1.0], 32);
    let mut hyp = StructureHypothesis::plane_lattice(2, 1, 1.0, &[1.0], 4.0).unwrap();
    let bad = hyp.points.iter().position(|p| p[1] == 2.0).unwrap();
    hyp.weights[bad] = 1.5;
    let rep = verify_structure(&mu, &hyp, 1e-6).unwrap();
    let c: Vec<_> = rep.violations.iter().filter(|v| v.check == "c").collect();
    assert!(!c.is_empty());
    assert!(c.iter().all(|v| v.location == hyp.points[bad]), "{c:?}");
    // the mass on that plane no longer matches its declared weight
    assert!(rep.failed("b"));
    assert!(!rep.failed("a"));
}

#[test]
fn shifted_atom_fails_check_a() {
    let mut mu = lattice(&[1.0], 16);
    let mut coords = mu.coords().to_vec();
    coords[1] += 0.01;
    mu = Measure::new(*mu.ambient(), coords, mu.weights().to_vec()).unwrap();
    let hyp = StructureHypothesis::plane_lattice(2, 1, 1.0, &[1.0], 4.0).unwrap();
    let rep = verify_structure(&mu, &hyp, 1e-6).unwrap();
    assert!(rep.failed("a"));
}

#[test]
fn missing_plane_fails_check_c() {
    let mu = lattice(&[1.0], 16);
    let mut hyp = StructureHypothesis::plane_lattice(2, 1, 1.0, &[1.0], 4.0).unwrap();
    let gone = hyp.points.iter().position(|p| p[1] == 1.0).unwrap();
    hyp.points.remove(gone);
    hyp.weights.remove(gone);
    let rep = verify_structure(&mu, &hyp, 1e-6).unwrap();
    assert!(rep.failed("c") && rep.failed("a"));
}

#[test]
fn dimension_window_is_empty_for_integer_planes() {
    for s in [0.5, 1.5, 2.0, 2.7] {
        let amb = Ambient::new(3, s, 0.1).unwrap();
        assert!((0..3).all(|k| !dimension_window_check(k, &amb)), "s={s}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn progression_closure_matches_formula(step in 0.05f64..0.9, half in 1.0f64..3.0) {
        let window = ClosedBox::new(vec![-half], vec![half]);
        let c = reflection_closure(&[vec![0.0], vec![step]], &[(0, 1)], &window, ClosureLimits::default()).unwrap();
        let n = (half / step + 1e-9).floor() as usize;
        prop_assert_eq!(c.points.len(), 2 * n + 1);
        prop_assert!((c.min_spacing() - step).abs() <= 1e-9);
    }
}
