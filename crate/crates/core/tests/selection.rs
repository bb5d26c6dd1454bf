mod common;

use std::collections::HashSet;

use common::{brute_selection, cantor, line_cloud};
use czo_wolff::lattice::ratio;
use czo_wolff::selection::{
    bunch_candidates, dominates_above, dominates_by_density, doubling_check, find_bunch, select_downward,
    select_upward, verify_bunch, BunchOptions, BunchSearch, Certificate, SelectionResult,
};
use czo_wolff::{Cube, LatticeView, Measure};
use proptest::prelude::*;

fn both(mu: &Measure, view: &LatticeView, eps: f64) -> (SelectionResult, SelectionResult) {
    let up = select_upward(mu, view, eps).unwrap();
    let down = select_downward(&up, eps, &BunchOptions::default()).unwrap();
    (up, down)
}

fn check_certificates(mu: &Measure, up: &SelectionResult, down: &SelectionResult, eps: f64) {
    for (i, c) in up.cubes.iter().enumerate() {
        match (&up.certificates[i], up.selected[i]) {
            (None, true) => {}
            (Some(Certificate::Above(qp)), false) => {
                assert!(dominates_above(mu, qp, &c.cube, eps), "{qp} does not dominate {}", c.cube);
            }
            other => panic!("{}: inconsistent upward record {other:?}", c.cube),
        }
    }
    for (i, c) in down.cubes.iter().enumerate() {
        assert!(up.is_selected(&c.cube));
        match (&down.certificates[i], down.selected[i]) {
            (None, true) => {}
            (Some(Certificate::Below(b)), false) => {
                assert_eq!(b.target, c.cube);
                verify_bunch(up, b, eps).unwrap();
            }
            other => panic!("{}: inconsistent downward record {other:?}", c.cube),
        }
    }
}

#[test]
fn cantor_certificates_verify() {
    for (d, s) in [(1, 0.5), (2, 1.0)] {
        let n = if d == 1 { 6 } else { 3 };
        let mu = cantor(d, s, 0.25, n);
        let view = LatticeView::new(-2 * n as i32 - 2, 1).unwrap();
        let (up, down) = both(&mu, &view, 0.1);
        check_certificates(&mu, &up, &down, 0.1);
        assert!(down.cubes.len() == up.selected.iter().filter(|&&k| k).count());
        assert!(up.energy_selected <= up.energy_total && down.energy_selected <= down.energy_total);
    }
}

#[test]
fn cantor_matches_brute_force() {
    let mu = cantor(1, 0.5, 0.25, 2);
    let m_hi = 0;
    // the deepest range the subset enumeration can still afford
    let (m_lo, (want_up, want_down)) = (-6..=-2)
        .find_map(|m| brute_selection(&mu, m, m_hi, 0.1).map(|r| (m, r)))
        .expect("small instance");
    assert!(m_lo <= -3);
    let (up, down) = both(&mu, &LatticeView::new(m_lo, m_hi).unwrap(), 0.1);
    assert_eq!(up.selected_cubes().into_iter().collect::<HashSet<_>>(), want_up);
    assert_eq!(down.selected_cubes().into_iter().collect::<HashSet<_>>(), want_down);
}

#[test]
fn lone_atom_keeps_only_the_top_cubes() {
    // D(Q) grows as the cube shrinks around an atom, so every cube but the
    // smallest ones is dominated from below and nothing from above
    let mu = line_cloud(&[0.3], &[1.0]);
    let (up, down) = both(&mu, &LatticeView::new(-4, 2).unwrap(), 0.1);
    assert!(up.selected.iter().all(|&k| k));
    for c in down.selected_stats() {
        assert_eq!(c.cube.level(), -4, "{}", c.cube);
    }
}

#[test]
fn bunch_search_agrees_with_downward_pass() {
    let mu = cantor(1, 0.5, 0.25, 4);
    let eps = 0.1;
    let (up, down) = both(&mu, &LatticeView::new(-10, 0).unwrap(), eps);
    for q in up.selected_cubes() {
        let (b, how) = find_bunch(&up, &q, eps, &BunchOptions::default()).unwrap();
        assert_eq!(how, BunchSearch::Exact);
        assert_eq!(b.is_none(), down.is_selected(&q), "{q}");
        for (p, w) in bunch_candidates(&up, &q, eps).unwrap() {
            assert!(p.level() < q.level() && w > 0.0);
        }
    }
}

#[test]
fn corrupted_bunch_is_rejected() {
    let mu = cantor(1, 0.5, 0.25, 4);
    let eps = 0.1;
    let (up, down) = both(&mu, &LatticeView::new(-10, 0).unwrap(), eps);
    let b = down
        .certificates
        .iter()
        .flatten()
        .find_map(|c| match c {
            Certificate::Below(b) if b.cubes.len() >= 2 => Some(b.clone()),
            _ => None,
        })
        .expect("some bunch with two cubes");
    let mut dup = b.clone();
    dup.cubes.push(b.cubes[0].clone());
    assert!(verify_bunch(&up, &dup, eps).unwrap_err().contains("overlap"));
    let mut short = b.clone();
    short.cubes.truncate(1);
    short.cubes[0] = Cube::new(b.target.level() - 1, vec![b.target.corner()[0] * 2 + 40]);
    assert!(verify_bunch(&up, &short, eps).is_err());
}

#[test]
fn unselected_targets_are_errors() {
    let mu = line_cloud(&[0.3], &[1.0]);
    let (up, _) = both(&mu, &LatticeView::new(-4, 2).unwrap(), 0.1);
    assert!(find_bunch(&up, &Cube::new(0, vec![500]), 0.1, &BunchOptions::default()).is_err());
    assert!(select_upward(&mu, &LatticeView::new(-4, 2).unwrap(), 0.0).is_err());
    let (_, down) = both(&mu, &LatticeView::new(-4, 2).unwrap(), 0.1);
    assert!(select_downward(&down, 0.1, &BunchOptions::default()).is_err());
}

#[test]
fn doubling_check_rejects_bad_input() {
    let mu = line_cloud(&[0.3], &[1.0]);
    assert!(doubling_check(&mu, &Cube::q0(1), 0.5).is_err());
    assert!(doubling_check(&mu, &Cube::new(0, vec![100]), 3.0).is_err());
    let r = doubling_check(&mu, &Cube::q0(1), 3.0).unwrap();
    assert!((r - 3f64.powf(-0.6)).abs() < 1e-12);
}

fn small_cloud() -> impl Strategy<Value = Measure> {
    prop::collection::vec((0.0f64..1.0, 0.2f64..2.0), 2..=5).prop_map(|atoms| {
        let (p, w): (Vec<f64>, Vec<f64>) = atoms.into_iter().unzip();
        line_cloud(&p, &w)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn selection_matches_brute_force(mu in small_cloud(), m_lo in -5i32..=-3) {
        let m_hi = 0;
        let Some((want_up, want_down)) = brute_selection(&mu, m_lo, m_hi, 0.1) else {
            return Ok(());
        };
        let (up, down) = both(&mu, &LatticeView::new(m_lo, m_hi).unwrap(), 0.1);
        prop_assert_eq!(up.selected_cubes().into_iter().collect::<HashSet<_>>(), want_up);
        prop_assert_eq!(down.selected_cubes().into_iter().collect::<HashSet<_>>(), want_down);
        check_certificates(&mu, &up, &down, 0.1);
    }

    #[test]
    fn domination_is_transitive(
        m in -4i32..4, k in -10i64..10, g1 in 1i32..4, g2 in 1i32..4,
        d in 0.01f64..10.0, f1 in 1.0f64..4.0, f2 in 1.0f64..4.0, eps in 0.01f64..0.5,
    ) {
        let c = Cube::new(m, vec![k]);
        let mut b = c.clone();
        for _ in 0..g1 { b = b.grandparent(); }
        let mut a = b.clone();
        for _ in 0..g2 { a = a.grandparent(); }
        let db = 2f64.powf(eps * ratio(&b, &c) as f64) * d * f1;
        let da = 2f64.powf(eps * ratio(&a, &b) as f64) * db * f2;
        prop_assert!(dominates_by_density(&b, db, &c, d, eps));
        prop_assert!(dominates_by_density(&a, da, &b, db, eps));
        prop_assert!(dominates_by_density(&a, da, &c, d, eps));
    }

    #[test]
    fn retention_is_a_fraction(mu in small_cloud()) {
        let (up, down) = both(&mu, &LatticeView::new(-6, 1).unwrap(), 0.1);
        for r in [up.retention(), down.retention()] {
            prop_assert!((0.0..=1.0).contains(&r));
        }
        prop_assert!(down.energy_total <= up.energy_total * (1.0 + 1e-12));
    }
}
