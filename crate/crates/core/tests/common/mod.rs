//! Helpers shared by the integration tests: measure builders and
//! brute-force oracles written independently of the library's search code.
#![allow(dead_code)]

use std::collections::HashSet;

use czo_wolff::measure::{generate, Family};
use czo_wolff::{Ambient, Cube, Measure, MeasureSpec};

pub fn cantor(d: usize, s: f64, lambda: f64, n: u32) -> Measure {
    generate(&MeasureSpec {
        s,
        eps: 0.1,
        family: Family::Cantor {
            d,
            lambda,
            generation: n,
            origin: None,
            scale: 1.0,
        },
    })
    .expect("cantor spec")
}

/// Atoms at `points` (one dimension) with the given weights, `s = 0.5`, `eps = 0.1`.
pub fn line_cloud(points: &[f64], weights: &[f64]) -> Measure {
    let pts: Vec<Vec<f64>> = points.iter().map(|&x| vec![x]).collect();
    Measure::from_points(Ambient::new(1, 0.5, 0.1).unwrap(), &pts, weights.to_vec()).unwrap()
}

/// Positive-mass cubes of levels `m_lo..=m_hi`, found by scanning corners
/// around each atom, with `(mass, density)`.
pub fn brute_cubes(mu: &Measure, m_lo: i32, m_hi: i32) -> Vec<(Cube, f64, f64)> {
    let s = mu.ambient().s;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for m in m_lo..=m_hi {
        let h = 2f64.powi(m);
        for (x, _) in mu.points() {
            let k0 = (x[0] / h).floor() as i64;
            for k in k0 - 2..=k0 + 2 {
                let (lo, hi) = ((k - 1) as f64 * h, (k + 2) as f64 * h);
                if !(lo < x[0] && x[0] < hi) || !seen.insert((m, k)) {
                    continue;
                }
                let mass: f64 = mu.points().filter(|(y, _)| lo < y[0] && y[0] < hi).map(|(_, w)| w).sum();
                if mass > 0.0 {
                    out.push((Cube::new(m, vec![k]), mass, mass / (3.0 * h).powf(s)));
                }
            }
        }
    }
    out
}

fn interval(q: &Cube, factor: f64) -> (f64, f64) {
    let h = q.unit();
    let c = (q.corner()[0] as f64 + 0.5) * h;
    (c - 1.5 * factor * h, c + 1.5 * factor * h)
}

pub const MAX_CANDIDATES: usize = 12;

/// Brute-force `D_sel` and `D̂_sel` in one dimension: all pairs for the
/// upward pass and all subsets of candidates for the downward pass. `None`
/// when some cube has more than `MAX_CANDIDATES` candidates.
pub fn brute_selection(mu: &Measure, m_lo: i32, m_hi: i32, eps: f64) -> Option<(HashSet<Cube>, HashSet<Cube>)> {
    let cubes = brute_cubes(mu, m_lo, m_hi);
    let up: Vec<&(Cube, f64, f64)> = cubes
        .iter()
        .filter(|(q, _, dq)| {
            let (lo, hi) = interval(q, 1.0);
            !cubes.iter().any(|(p, _, dp)| {
                let (plo, phi) = interval(p, 1.0);
                let gap = (p.level() - q.level()) as f64;
                p != q && plo <= lo && hi <= phi && *dp >= 2f64.powf(eps * gap.abs()) * dq
            })
        })
        .collect();
    let mut down = HashSet::new();
    for (q, mq, dq) in &up {
        let (lo, hi) = interval(q, 3.0);
        let cands: Vec<((f64, f64), f64)> = up
            .iter()
            .filter(|(p, _, _)| p.level() < q.level())
            .filter_map(|(p, mp, dp)| {
                let (plo, phi) = interval(p, 3.0);
                let gap = (q.level() - p.level()) as f64;
                (lo <= plo && phi <= hi && *dp >= 2f64.powf(eps * gap) * dq)
                    .then(|| ((plo, phi), dp * dp * 2f64.powf(-2.0 * eps * gap) * mp))
            })
            .collect();
        if cands.len() > MAX_CANDIDATES {
            return None;
        }
        let target = dq * dq * mq;
        let dominated = (1u32..1 << cands.len()).any(|mask| {
            let chosen: Vec<&((f64, f64), f64)> =
                (0..cands.len()).filter(|i| mask >> i & 1 == 1).map(|i| &cands[i]).collect();
            let disjoint = chosen.iter().enumerate().all(|(i, a)| {
                chosen[i + 1..].iter().all(|b| a.0 .1 <= b.0 .0 || b.0 .1 <= a.0 .0)
            });
            disjoint && chosen.iter().map(|c| c.1).sum::<f64>() >= target
        });
        if !dominated {
            down.insert(q.clone());
        }
    }
    Some((up.into_iter().map(|c| c.0.clone()).collect(), down))
}

