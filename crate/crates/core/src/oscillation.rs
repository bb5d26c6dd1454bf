//! Lipschitz oscillation coefficients `Θ^A_{μ,φ}(Q)`, the Riesz system bound
//! and the large-oscillation test over a family of bumps.
//!
//! `Θ` is the value of a linear program whose variables are the values of a
//! test function `ψ` at the atoms of `μ` in `AQ`. Pairwise Lipschitz
//! constraints on the atoms plus the cap `|ψ(x)| <= dist(x, (AQ)^c) / ℓ(Q)`
//! are exactly what is needed for an extension vanishing off `AQ` with the
//! same Lipschitz bound, so nothing is lost by restricting to atoms.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Cube;
use crate::measure::region::{dist, OpenBox};
use crate::measure::Measure;
use crate::operators::{bump_field, Bump, TestFamily};
use crate::stats::pairwise_sum;

/// Nodes per LP; larger clouds are thinned to this many atoms.
pub const NODE_CAP: usize = 2000;

const CUT_ROUNDS: usize = 60;
const CUTS_PER_ROUND: usize = 400;

/// Which smooth operator `ψ` is paired against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// `T_{φ,ℓ(Q)}(μ)(x) = Σ ℓ^(-s) φ(3 (x - y) / ℓ) w_y`.
    #[default]
    Scaled,
    /// `T_φ(μ)(x) = Σ φ(x - y) w_y`, as used after blow-up.
    Unscaled,
}

impl Pairing {
    /// Values of the paired operator (with `f ≡ 1`) at the given atoms.
    pub fn field(self, bump: &Bump, mu: &Measure, q: &Cube, atoms: &[usize]) -> Vec<f64> {
        let (scale, coef) = match self {
            Pairing::Scaled => (q.unit(), q.side().powf(-mu.ambient().s)),
            Pairing::Unscaled => (1.0, 1.0),
        };
        bump_field(bump, mu, atoms, scale, 0).into_iter().map(|v| coef * v).collect()
    }
}

/// A Lipschitz function given by its values at finitely many nodes inside an
/// open box, certified to extend to `R^d` with the same bound and support in
/// the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipFunction {
    pub nodes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub lip_bound: f64,
    pub support: OpenBox,
}

impl LipFunction {
    /// Largest violation of the pairwise and support invariants, in units of
    /// function values.
    pub fn violation(&self) -> f64 {
        let l = self.lip_bound;
        let n = self.nodes.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let cap = l * self.support.depth(&self.nodes[i]);
            worst = worst.max(self.values[i].abs() - cap);
            for j in i + 1..n {
                let gap = (self.values[i] - self.values[j]).abs() - l * dist(&self.nodes[i], &self.nodes[j]);
                worst = worst.max(gap);
            }
        }
        worst.max(0.0)
    }

    /// `Ok` when every invariant holds to `tol`.
    pub fn verify(&self, tol: f64) -> std::result::Result<(), String> {
        if self.nodes.len() != self.values.len() {
            return Err(format!("{} nodes but {} values", self.nodes.len(), self.values.len()));
        }
        let v = self.violation();
        if v > tol {
            return Err(format!("constraint violated by {v:e}"));
        }
        Ok(())
    }

    /// The extension `max(-L δ, min(L δ, min_j (v_j + L |x - x_j|)))` with
    /// `δ = dist(x, complement)`; it agrees with the node values and vanishes
    /// off the support box.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let l = self.lip_bound;
        let cap = l * self.support.depth(x);
        if cap == 0.0 {
            return 0.0;
        }
        let mut up = f64::INFINITY;
        for (p, &v) in self.nodes.iter().zip(&self.values) {
            up = up.min(v + l * dist(x, p));
        }
        up.min(cap).max(-cap)
    }

    /// `‖ψ‖²_{L²(μ)}` using the extension.
    pub fn norm2(&self, mu: &Measure) -> f64 {
        let terms: Vec<f64> = mu
            .indices_in(&self.support)
            .into_iter()
            .map(|i| self.eval(mu.point(i)).powi(2) * mu.weight(i))
            .collect();
        pairwise_sum(&terms)
    }
}

/// Outcome of one `Θ` linear program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaResult {
    pub cube: Cube,
    pub a: f64,
    pub value: f64,
    pub witness: LipFunction,
    /// Largest constraint violation of the witness (including the mean-zero
    /// constraint, relative to the mass of the nodes).
    pub lp_residual: f64,
    pub n_nodes: usize,
    /// The atoms in `AQ` exceeded [`NODE_CAP`] and were thinned.
    pub subsampled: bool,
}

/// `Θ^A_{μ,φ}(Q) = sup |⟨T(μ), ψ⟩_μ|` over mean-zero `ψ` supported in `AQ`
/// with `‖ψ‖_Lip <= 1/ℓ(Q)`.
///
/// The feasible set is symmetric under `ψ ↦ -ψ`, so maximizing the signed
/// pairing already gives the supremum of its absolute value.
pub fn theta(mu: &Measure, q: &Cube, bump: &Bump, a: f64, pairing: Pairing) -> Result<ThetaResult> {
    if !(a > 1.0 && a.is_finite()) {
        return Err(Error::param("A", format!("must exceed 1, got {a}")));
    }
    if q.dim() != mu.dim() {
        return Err(Error::Domain(format!("cube {q} does not match dimension {}", mu.dim())));
    }
    let support = q.dilated(a);
    let mut atoms = mu.indices_in(&support);
    if atoms.is_empty() {
        return Err(Error::Domain(format!("no atoms in {a}Q for Q = {q}")));
    }
    let in_box = atoms.len();
    let subsampled = in_box > NODE_CAP;
    // Thinning keeps every k-th atom and spreads the mass of the dropped ones
    // over the survivors, so the mean-zero constraint still sees all of AQ.
    let mut boost = 1.0;
    if subsampled {
        let step = in_box.div_ceil(NODE_CAP);
        let total = pairwise_sum(&atoms.iter().map(|&i| mu.weight(i)).collect::<Vec<_>>());
        atoms = atoms.into_iter().step_by(step).collect();
        let kept = pairwise_sum(&atoms.iter().map(|&i| mu.weight(i)).collect::<Vec<_>>());
        boost = total / kept;
        log::warn!("theta on {q}: {in_box} atoms in AQ thinned to {}", atoms.len());
    }
    let t = pairing.field(bump, mu, q, &atoms);
    let w: Vec<f64> = atoms.iter().map(|&i| mu.weight(i) * boost).collect();
    let nodes: Vec<Vec<f64>> = atoms.iter().map(|&i| mu.point(i).to_vec()).collect();
    let lip = 1.0 / q.side();
    let caps: Vec<f64> = nodes.iter().map(|x| lip * support.depth(x)).collect();
    let c: Vec<f64> = t.iter().zip(&w).map(|(t, w)| t * w).collect();
    let values = solve_lp(&nodes, &w, &c, &caps, lip)?;
    let value = pairwise_sum(&c.iter().zip(&values).map(|(c, v)| c * v).collect::<Vec<_>>()).abs();
    let witness = LipFunction {
        nodes,
        values,
        lip_bound: lip,
        support,
    };
    let mass = pairwise_sum(&w);
    let mean = pairwise_sum(&w.iter().zip(&witness.values).map(|(w, v)| w * v).collect::<Vec<_>>());
    let lp_residual = witness.violation().max(mean.abs() / mass);
    Ok(ThetaResult {
        cube: q.clone(),
        a,
        value,
        n_nodes: witness.nodes.len(),
        witness,
        lp_residual,
        subsampled,
    })
}

/// Maximizes `Σ c_i v_i` subject to `|v_i| <= cap_i`, `Σ w_i v_i = 0` and
/// `|v_i - v_j| <= lip |x_i - x_j|`.
///
/// On the line only neighbouring pairs are needed. In higher dimension the
/// Lipschitz constraints start from nearest neighbours and violated pairs are
/// added until none is left.
fn solve_lp(nodes: &[Vec<f64>], w: &[f64], c: &[f64], caps: &[f64], lip: f64) -> Result<Vec<f64>> {
    let n = nodes.len();
    let c_scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if c_scale == 0.0 || n == 1 {
        return Ok(vec![0.0; n]);
    }
    let w_scale = w.iter().fold(0.0f64, |m, v| m.max(*v));
    let d = nodes[0].len();
    let mut pairs: Vec<(usize, usize)> = if d == 1 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| nodes[i][0].total_cmp(&nodes[j][0]));
        order.windows(2).map(|p| (p[0], p[1])).collect()
    } else {
        nearest_pairs(nodes, 2 * d + 2)
    };
    let mut seen: std::collections::HashSet<(usize, usize)> = pairs.iter().copied().collect();
    for _ in 0..CUT_ROUNDS {
        let v = solve_with_pairs(nodes, w, c, caps, lip, &pairs, c_scale, w_scale)?;
        if d == 1 {
            return Ok(v);
        }
        let mut violated: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let gap = (v[i] - v[j]).abs() - lip * dist(&nodes[i], &nodes[j]);
                if gap > 1e-12 * lip && !seen.contains(&(i, j)) {
                    violated.push((gap, i, j));
                }
            }
        }
        if violated.is_empty() {
            return Ok(v);
        }
        violated.sort_by(|a, b| b.0.total_cmp(&a.0));
        for &(_, i, j) in violated.iter().take(CUTS_PER_ROUND) {
            seen.insert((i, j));
            pairs.push((i, j));
        }
    }
    Err(Error::Lp(format!("Lipschitz cuts did not settle after {CUT_ROUNDS} rounds")))
}

#[allow(clippy::too_many_arguments)]
fn solve_with_pairs(
    nodes: &[Vec<f64>],
    w: &[f64],
    c: &[f64],
    caps: &[f64],
    lip: f64,
    pairs: &[(usize, usize)],
    c_scale: f64,
    w_scale: f64,
) -> Result<Vec<f64>> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = c
        .iter()
        .zip(caps)
        .map(|(&ci, &cap)| lp.add_var(ci / c_scale, (-cap, cap)))
        .collect();
    let mean: Vec<_> = vars.iter().zip(w).map(|(&v, &wi)| (v, wi / w_scale)).collect();
    lp.add_constraint(mean.as_slice(), ComparisonOp::Eq, 0.0);
    for &(i, j) in pairs {
        let r = lip * dist(&nodes[i], &nodes[j]);
        // Implied by the caps when the nodes are far apart.
        if r >= caps[i] + caps[j] {
            continue;
        }
        lp.add_constraint(&[(vars[i], 1.0), (vars[j], -1.0)], ComparisonOp::Le, r);
        lp.add_constraint(&[(vars[i], 1.0), (vars[j], -1.0)], ComparisonOp::Ge, -r);
    }
    let sol = lp
        .solve()
        .map_err(|e| Error::Lp(e.to_string()))?
        .into_solution()
        .map_err(|e| Error::Lp(format!("interrupted: {:?}", e.termination_reason())))?;
    Ok(vars.iter().map(|&v| sol.var_value(v)).collect())
}

fn nearest_pairs(nodes: &[Vec<f64>], k: usize) -> Vec<(usize, usize)> {
    let n = nodes.len();
    let mut out: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut near: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist(&nodes[i], &nodes[j]), j)).collect();
            let k = k.min(near.len());
            if k > 0 {
                near.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
            }
            near.truncate(k);
            near.into_iter().map(move |(_, j)| (i.min(j), i.max(j)))
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// `Σ_Q |⟨g, ψ_Q⟩_μ|² / μ(3AQ)` divided by `‖g‖²_{L²(μ)}`.
///
/// Each `ψ_Q` must be a certified member of the Riesz system of its cube.
pub fn riesz_system_test(mu: &Measure, psis: &[(Cube, LipFunction)], a: f64, g: &[f64]) -> Result<f64> {
    if g.len() != mu.len() {
        return Err(Error::param("g", format!("{} values for {} atoms", g.len(), mu.len())));
    }
    let g2 = crate::operators::norm2(mu, g);
    if !(g2 > 0.0) {
        return Err(Error::Domain("g has zero norm".into()));
    }
    let terms: Result<Vec<f64>> = psis
        .par_iter()
        .map(|(q, psi)| {
            let aq = q.dilated(a);
            let lip = 1.0 / q.side();
            if psi.support != aq || (psi.lip_bound - lip).abs() > 1e-12 * lip {
                return Err(Error::Domain(format!("psi for {q} is not adapted to {a}Q")));
            }
            if let Err(why) = psi.verify(1e-9 * lip * q.side()) {
                return Err(Error::Domain(format!("psi for {q}: {why}")));
            }
            let pair: Vec<f64> = mu
                .indices_in(&aq)
                .into_iter()
                .map(|i| g[i] * psi.eval(mu.point(i)) * mu.weight(i))
                .collect();
            let big = mu.mass_box(&q.dilated(3.0 * a));
            let p = pairwise_sum(&pair);
            Ok(if big > 0.0 { p * p / big } else { 0.0 })
        })
        .collect();
    Ok(pairwise_sum(&terms?) / g2)
}

/// One row of the large-oscillation test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalRow {
    pub cube: Cube,
    /// `Θ` for every member of the family, in order.
    pub thetas: Vec<ThetaResult>,
    pub best_index: usize,
    pub theta_max: f64,
    /// `max_j Θ_j / (D(Q) μ(Q))`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalReport {
    pub rows: Vec<GoalRow>,
    pub min_ratio: f64,
    pub delta: f64,
}

impl GoalReport {
    /// Whether every cube reaches `max_j Θ_j >= Δ D(Q) μ(Q)`.
    pub fn passes(&self) -> bool {
        self.rows.iter().all(|r| r.ratio >= self.delta)
    }
}

/// `max_j Θ^A_{μ,φ_j}(Q)` against `Δ D(Q) μ(Q)` on every given cube.
pub fn goal_a_test(
    mu: &Measure,
    cubes: &[Cube],
    family: &TestFamily,
    a: f64,
    delta: f64,
    pairing: Pairing,
) -> Result<GoalReport> {
    if family.is_empty() {
        return Err(Error::param("family", "is empty"));
    }
    let jobs: Vec<(usize, usize)> = (0..cubes.len()).flat_map(|i| (0..family.len()).map(move |j| (i, j))).collect();
    let results: Result<Vec<ThetaResult>> = jobs
        .par_iter()
        .map(|&(i, j)| theta(mu, &cubes[i], &family.bumps[j], a, pairing))
        .collect();
    let mut results = results?.into_iter();
    let mut rows = Vec::with_capacity(cubes.len());
    for q in cubes {
        let thetas: Vec<ThetaResult> = results.by_ref().take(family.len()).collect();
        let (best_index, theta_max) = thetas
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, t)| if t.value > bv { (i, t.value) } else { (bi, bv) });
        let scale = q.density(mu) * mu.mass_cube(q);
        let ratio = if scale > 0.0 { theta_max / scale } else { f64::INFINITY };
        rows.push(GoalRow {
            cube: q.clone(),
            thetas,
            best_index,
            theta_max,
            ratio,
        });
    }
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(GoalReport { rows, min_ratio, delta })
}
