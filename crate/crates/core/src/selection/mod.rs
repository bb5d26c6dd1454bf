//! Domination selection: the cubes that cannot be dominated from above
//! (`D_sel`) and, among those, the cubes that cannot be dominated from below
//! by a bunch (`D̂_sel`).

mod bunch;

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{cube_stats, ratio, Cube, CubeStat, LatticeView};
use crate::measure::Measure;
use crate::stats::pairwise_sum;

pub use bunch::{
    bunch_candidates, find_bunch, select_downward, verify_bunch, Bunch, BunchOptions, BunchSearch,
    EXACT_LIMIT,
};

/// Why a cube was rejected.
#[derive(Clone, Debug, PartialEq)]
pub enum Certificate {
    /// Dominated from above by this cube (largest side among dominators).
    Above(Cube),
    /// Dominated from below by this bunch.
    Below(Bunch),
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Certificate::Above(q) => write!(f, "above {q}"),
            Certificate::Below(b) => {
                f.write_str("below")?;
                for q in &b.cubes {
                    write!(f, " {q}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionKind {
    Upward,
    Downward,
}

/// Outcome of a selection pass over a universe of positive-mass cubes.
#[derive(Clone, Debug)]
pub struct SelectionResult {
    pub kind: SelectionKind,
    /// The universe, sorted by level then corner.
    pub cubes: Vec<CubeStat>,
    /// `selected[i]` tells whether `cubes[i]` survived.
    pub selected: Vec<bool>,
    /// Certificate for every rejected cube.
    pub certificates: Vec<Option<Certificate>>,
    /// `Σ D^2 mu` over the universe.
    pub energy_total: f64,
    /// `Σ D^2 mu` over the selected cubes.
    pub energy_selected: f64,
    /// Upward: cubes whose admissible dominator range reaches past `m_max`.
    pub incomplete: Vec<usize>,
    /// Downward: cubes kept because the heuristic search found no bunch.
    pub heuristic: Vec<usize>,
    index: HashMap<Cube, usize>,
}

impl SelectionResult {
    fn new(kind: SelectionKind, cubes: Vec<CubeStat>) -> Self {
        let n = cubes.len();
        let index = cubes.iter().enumerate().map(|(i, c)| (c.cube.clone(), i)).collect();
        SelectionResult {
            kind,
            cubes,
            selected: vec![true; n],
            certificates: vec![None; n],
            energy_total: 0.0,
            energy_selected: 0.0,
            incomplete: Vec::new(),
            heuristic: Vec::new(),
            index,
        }
    }

    fn finish(&mut self) {
        let all: Vec<f64> = self.cubes.iter().map(energy_term).collect();
        let kept: Vec<f64> = self
            .cubes
            .iter()
            .zip(&self.selected)
            .filter(|(_, &k)| k)
            .map(|(c, _)| energy_term(c))
            .collect();
        self.energy_total = pairwise_sum(&all);
        self.energy_selected = pairwise_sum(&kept);
    }

    /// `energy_selected / energy_total` (1 for an empty universe).
    pub fn retention(&self) -> f64 {
        if self.energy_total > 0.0 {
            self.energy_selected / self.energy_total
        } else {
            1.0
        }
    }

    pub fn selected_stats(&self) -> impl Iterator<Item = &CubeStat> + '_ {
        self.cubes.iter().zip(&self.selected).filter(|(_, &k)| k).map(|(c, _)| c)
    }

    pub fn selected_cubes(&self) -> Vec<Cube> {
        self.selected_stats().map(|c| c.cube.clone()).collect()
    }

    pub fn stat(&self, q: &Cube) -> Option<&CubeStat> {
        self.index.get(q).map(|&i| &self.cubes[i])
    }

    pub fn is_selected(&self, q: &Cube) -> bool {
        self.index.get(q).is_some_and(|&i| self.selected[i])
    }

    pub fn certificate(&self, q: &Cube) -> Option<&Certificate> {
        self.index.get(q).and_then(|&i| self.certificates[i].as_ref())
    }

    pub fn is_complete(&self) -> bool {
        self.incomplete.is_empty()
    }
}

fn energy_term(c: &CubeStat) -> f64 {
    c.density * c.density * c.mass
}

/// `D(Q') >= 2^(eps [Q':Q]) D(Q)` for a cube `Q' ⊋ Q`, from densities.
pub fn dominates_by_density(qp: &Cube, dqp: f64, q: &Cube, dq: f64, eps: f64) -> bool {
    qp != q && qp.contains_cube(q) && dqp >= 2f64.powf(eps * ratio(qp, q) as f64) * dq
}

/// Whether `qp` dominates `q` from above.
pub fn dominates_above(mu: &Measure, qp: &Cube, q: &Cube, eps: f64) -> bool {
    dominates_by_density(qp, qp.density(mu), q, q.density(mu), eps)
}

/// Keeps the positive-mass cubes of the view that no cube of the view
/// dominates from above; every rejected cube gets the dominator of largest
/// side (ties: smallest corner).
///
/// The ancestor walk stops at `[Q':Q] <= log2(sup D / D(Q)) / eps`, beyond
/// which no cube can dominate. Cubes that a cube above `m_max` could still
/// dominate (even carrying the total mass) are listed in `incomplete`.
pub fn select_upward(mu: &Measure, view: &LatticeView, eps: f64) -> Result<SelectionResult> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let cubes: Vec<CubeStat> = cube_stats(mu, view).into_iter().filter(|c| c.mass > 0.0).collect();
    let sup_d = cubes.iter().map(|c| c.density).fold(0.0, f64::max);
    let total = mu.total_mass();
    let s = mu.ambient().s;
    let mut res = SelectionResult::new(SelectionKind::Upward, cubes);
    let outcomes: Vec<(Option<Cube>, bool)> = res
        .cubes
        .par_iter()
        .map(|c| {
            let reach = ((sup_d / c.density).log2() / eps).floor();
            let reach = if reach.is_finite() { reach.max(0.0) as i64 } else { 0 };
            let top = c.cube.level() as i64 + reach;
            // Above the view a cube holds at most the total mass, and that
            // bound decays faster than the domination threshold grows.
            let above = view.m_max + 1;
            let best_above = total / (3.0 * 2f64.powi(above)).powf(s);
            let needed = 2f64.powf(eps * (above - c.cube.level()) as f64) * c.density;
            let incomplete = top > view.m_max as i64 && best_above >= needed;
            let top = top.min(view.m_max as i64) as i32;
            let mut best = None;
            for level in (c.cube.level() + 1..=top).rev() {
                let threshold = 2f64.powf(eps * (level - c.cube.level()) as f64) * c.density;
                for qp in c.cube.containing_at(level) {
                    let Some(&j) = res.index.get(&qp) else { continue };
                    if res.cubes[j].density >= threshold {
                        best = Some(qp);
                        break;
                    }
                }
                if best.is_some() {
                    break;
                }
            }
            (best, incomplete)
        })
        .collect();
    for (i, (best, incomplete)) in outcomes.into_iter().enumerate() {
        if incomplete {
            res.incomplete.push(i);
        }
        if let Some(qp) = best {
            res.selected[i] = false;
            res.certificates[i] = Some(Certificate::Above(qp));
        }
    }
    if !res.incomplete.is_empty() {
        log::warn!(
            "upward selection: {} cubes have admissible dominators above m_max = {}",
            res.incomplete.len(),
            view.m_max
        );
    }
    res.finish();
    Ok(res)
}

/// `mu(M Q) / (M^(s+eps) mu(Q))`.
pub fn doubling_check(mu: &Measure, q: &Cube, m: f64) -> Result<f64> {
    if !(m >= 1.0) {
        return Err(Error::param("M", "dilation factor must be at least 1"));
    }
    let base = mu.mass_cube(q);
    if !(base > 0.0) {
        return Err(Error::Domain(format!("cube {q} carries no mass")));
    }
    let big = if m == 1.0 { base } else { mu.mass_box(&q.dilated(m)) };
    let a = mu.ambient();
    Ok(big / (m.powf(a.s + a.eps) * base))
}
