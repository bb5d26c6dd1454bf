//! Wolff energies in integral and dyadic form, the growth functional and the
//! weak density with its level sets.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{cube_stats, Cube, CubeStat, LatticeView};
use crate::measure::region::{dist2, ClosedBox, OpenBox, Region};
use crate::measure::Measure;
use crate::stats::pairwise_sum;

/// `∫_a^b r^(-2s-1) dr`, with `b = ∞` allowed.
fn radial(a: f64, b: f64, s: f64) -> f64 {
    let two_s = 2.0 * s;
    let tail = if b.is_finite() { b.powf(-two_s) } else { 0.0 };
    (a.powf(-two_s) - tail) / two_s
}

/// `Σ_x w(x) ∫_{r_min}^{r_max} (mu(Q ∩ B(x, r)) / r^s)^2 dr/r` over atoms
/// `x` in `Q`, or over all of `R^d` when `q` is `None`.
///
/// Between consecutive atom distances the ball mass is constant, so the
/// radial integral is evaluated exactly piece by piece.
pub fn wolff_integral(mu: &Measure, q: Option<&Cube>, r_min: f64, r_max: f64) -> Result<f64> {
    if !(r_min > 0.0 && r_min < r_max) {
        return Err(Error::Domain(format!(
            "need 0 < r_min < r_max, got r_min = {r_min}, r_max = {r_max}"
        )));
    }
    let s = mu.ambient().s;
    let idx: Vec<usize> = match q {
        Some(q) => mu.indices_in(&q.region()),
        None => (0..mu.len()).collect(),
    };
    let idx: Vec<usize> = idx.into_iter().filter(|&i| mu.weight(i) > 0.0).collect();
    let per_atom: Vec<f64> = idx
        .par_iter()
        .map(|&i| {
            let x = mu.point(i);
            let mut ring: Vec<(f64, f64)> = idx
                .iter()
                .map(|&j| (dist2(x, mu.point(j)).sqrt(), mu.weight(j)))
                .collect();
            ring.sort_by(|a, b| a.0.total_cmp(&b.0));
            // mass(r) = Σ_{d_j < r} w_j, constant on (d_(k), d_(k+1)]
            let mut acc = 0.0;
            let mut mass = 0.0;
            let mut k = 0;
            let mut lo = r_min;
            while k < ring.len() && ring[k].0 <= r_min {
                mass += ring[k].1;
                k += 1;
            }
            while lo < r_max {
                let hi = if k < ring.len() { ring[k].0.min(r_max) } else { r_max };
                if hi > lo && mass > 0.0 {
                    acc += mass * mass * radial(lo, hi, s);
                }
                if k >= ring.len() {
                    break;
                }
                let d = ring[k].0;
                while k < ring.len() && ring[k].0 == d {
                    mass += ring[k].1;
                    k += 1;
                }
                lo = lo.max(d);
            }
            mu.weight(i) * acc
        })
        .collect();
    Ok(pairwise_sum(&per_atom))
}

/// `Σ_Q D(Q)^2 mu(Q)` over precomputed cube statistics.
pub fn dyadic_sum(stats: &[CubeStat]) -> f64 {
    let terms: Vec<f64> = stats.iter().map(|c| c.density * c.density * c.mass).collect();
    pairwise_sum(&terms)
}

/// `Σ_{Q ∈ view} D(Q)^2 mu(Q)`.
pub fn wolff_dyadic(mu: &Measure, view: &LatticeView) -> f64 {
    dyadic_sum(&cube_stats(mu, view))
}

/// `sup_{Q ∈ view} D(Q)`.
pub fn growth_constant(mu: &Measure, view: &LatticeView) -> f64 {
    cube_stats(mu, view).iter().map(|c| c.density).fold(0.0, f64::max)
}

/// Worst-case ratio between the integral and dyadic Wolff energies when
/// the radii are `[2^(m_min-1), 2^m_max]`: each ball `B(x, r)` with
/// `r < 2^m` sits inside the level-`m` triple around `x`'s own dyadic cube,
/// whose side is at most `6r` for `r >= 2^(m-1)`.
pub fn domination_constant(s: f64) -> f64 {
    36f64.powf(s) * (1.0 - 4f64.powf(-s)) / (2.0 * s)
}

/// Upper bound for `mu(B(x, r))` implied by `sup D <= sup_d`, valid when
/// level `ceil(log2 r)` lies in the view: the ball fits in a triple of
/// side at most `6r`.
pub fn ball_growth_bound(sup_d: f64, s: f64, r: f64) -> f64 {
    sup_d * (6.0 * r).powf(s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WolffReport {
    pub integral_value: f64,
    pub dyadic_value: f64,
    pub growth_constant: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub cubes: usize,
}

/// Both Wolff energies on `R^d` with radii matched to the view's levels.
pub fn wolff_report(mu: &Measure, view: &LatticeView) -> Result<WolffReport> {
    let (r_min, r_max) = view.radii();
    let stats = cube_stats(mu, view);
    Ok(WolffReport {
        integral_value: wolff_integral(mu, None, r_min, r_max)?,
        dyadic_value: dyadic_sum(&stats),
        growth_constant: stats.iter().map(|c| c.density).fold(0.0, f64::max),
        r_min,
        r_max,
        cubes: stats.len(),
    })
}

/// The weak density `D̄(x) = sup_{Q ∋ x} D(Q) 2^(-eps [Q : Q_0])` over the
/// cubes of a view, with the lattice densities cached.
pub struct WeakDensity<'a> {
    mu: &'a Measure,
    view: LatticeView,
    densities: HashMap<Cube, f64>,
}

impl<'a> WeakDensity<'a> {
    pub fn new(mu: &'a Measure, view: &LatticeView) -> Self {
        let densities = cube_stats(mu, view)
            .into_iter()
            .map(|c| (c.cube, c.density))
            .collect();
        WeakDensity {
            mu,
            view: view.clone(),
            densities,
        }
    }

    pub fn at(&self, x: &[f64]) -> f64 {
        let eps = self.mu.ambient().eps;
        let mut best: f64 = 0.0;
        for level in self.view.levels() {
            let h = 2f64.powi(level);
            let penalty = 2f64.powf(-eps * level.abs() as f64);
            for q in cubes_containing(x, level, h) {
                let d = match self.densities.get(&q) {
                    Some(&d) => d,
                    None => {
                        if self.view.window.is_some() {
                            continue;
                        }
                        q.density(self.mu)
                    }
                };
                best = best.max(d * penalty);
            }
        }
        best
    }

    /// Whether `x ∈ E_T`: `x ∈ 2 Q_0` and `D̄(x) > t`.
    pub fn in_level_set(&self, x: &[f64], t: f64) -> bool {
        double_q0(self.mu.dim()).contains(x) && self.at(x) > t
    }

    /// Weak densities of the atoms in `2 Q_0` as `(atom index, value)`.
    pub fn atom_values(&self) -> Vec<(usize, f64)> {
        let idx = self.mu.indices_in(&double_q0(self.mu.dim()));
        idx.into_par_iter().map(|i| (i, self.at(self.mu.point(i)))).collect()
    }

    /// `mu(E_T)` for each threshold.
    pub fn level_set_masses(&self, thresholds: &[f64]) -> Vec<f64> {
        let vals = self.atom_values();
        thresholds
            .iter()
            .map(|&t| {
                let w: Vec<f64> = vals
                    .iter()
                    .filter(|(_, v)| *v > t)
                    .map(|&(i, _)| self.mu.weight(i))
                    .collect();
                pairwise_sum(&w)
            })
            .collect()
    }
}

/// `2 Q_0 = (-2.5, 3.5)^d`.
pub fn double_q0(d: usize) -> OpenBox {
    OpenBox::new(vec![-2.5; d], vec![3.5; d])
}

fn cubes_containing(x: &[f64], level: i32, h: f64) -> Vec<Cube> {
    let mut out = vec![Vec::new()];
    for &c in x {
        let base = (c / h).floor() as i64;
        let ks: Vec<i64> = (base - 1..=base + 1)
            .filter(|&k| (k - 1) as f64 * h < c && c < (k + 2) as f64 * h)
            .collect();
        out = out
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                ks.iter().map(move |&k| {
                    let mut q = p.clone();
                    q.push(k);
                    q
                })
            })
            .collect();
    }
    out.into_iter().map(|corner| Cube::new(level, corner)).collect()
}

/// Mass of the atoms within `tol` of the affine plane `point + span(basis)`
/// that lie in the closed cube `[-1, 2]^d`.
pub fn plane_mass_test(mu: &Measure, point: &[f64], basis: &[Vec<f64>], tol: f64) -> Result<f64> {
    let d = mu.dim();
    if point.len() != d || basis.iter().any(|b| b.len() != d) {
        return Err(Error::Domain("plane dimension does not match the measure".into()));
    }
    check_orthonormal(basis)?;
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let closure = ClosedBox::new(vec![-1.0; d], vec![2.0; d]);
    let mut w = Vec::new();
    for (p, wt) in mu.points() {
        if wt > 0.0 && closure.contains(p) && dist_to_plane(p, point, basis) < tol {
            w.push(wt);
        }
    }
    Ok(pairwise_sum(&w))
}

pub(crate) fn check_orthonormal(basis: &[Vec<f64>]) -> Result<()> {
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate().skip(i) {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            if (dot - want).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "basis is not orthonormal: <b{i}, b{j}> = {dot}"
                )));
            }
        }
    }
    Ok(())
}

/// Distance from `p` to `point + span(basis)` for an orthonormal basis.
pub(crate) fn dist_to_plane(p: &[f64], point: &[f64], basis: &[Vec<f64>]) -> f64 {
    let mut v: Vec<f64> = p.iter().zip(point).map(|(a, b)| a - b).collect();
    for b in basis {
        let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        for (x, y) in v.iter_mut().zip(b) {
            *x -= c * y;
        }
    }
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Ambient;

    fn atom(d: usize, s: f64, w: f64) -> Measure {
        Measure::from_points(Ambient::new(d, s, 0.1).unwrap(), &[vec![0.3; d]], vec![w]).unwrap()
    }

    #[test]
    fn atom_closed_form() {
        for (d, s) in [(1, 0.5), (2, 1.5), (3, 2.5)] {
            let mu = atom(d, s, 1.0);
            let got = wolff_integral(&mu, None, 0.01, f64::INFINITY).unwrap();
            let want = 0.01f64.powf(-2.0 * s) / (2.0 * s);
            assert!((got - want).abs() <= 1e-13 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn weighted_atom_is_cubic_in_weight() {
        let mu = atom(1, 0.5, 0.5);
        let got = wolff_integral(&mu, None, 0.25, 1.0).unwrap();
        assert!((got - 0.125 * radial(0.25, 1.0, 0.5)).abs() < 1e-15);
    }

    #[test]
    fn empty_cube_is_zero() {
        let mu = atom(1, 0.5, 1.0);
        let q = Cube::new(0, vec![10]);
        assert_eq!(wolff_integral(&mu, Some(&q), 0.1, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn bad_radii() {
        let mu = atom(1, 0.5, 1.0);
        assert!(matches!(wolff_integral(&mu, None, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn dyadic_single_atom() {
        let mu = atom(2, 0.5, 2.0);
        let view = LatticeView::new(-3, -3).unwrap();
        let l: f64 = 3.0 * 0.125;
        let want = 9.0 * (2.0 / l.powf(0.5)).powi(2) * 2.0;
        assert!((wolff_dyadic(&mu, &view) - want).abs() < 1e-12 * want);
    }

    #[test]
    fn domination_constant_at_half() {
        assert!((domination_constant(0.5) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn plane_mass_basics() {
        let amb = Ambient::new(2, 1.5, 0.1).unwrap();
        let mu = Measure::from_points(amb, &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.7]], vec![1.0, 2.0, 4.0])
            .unwrap();
        let m = plane_mass_test(&mu, &[0.0, 0.0], &[vec![1.0, 0.0]], 1e-9).unwrap();
        assert_eq!(m, 3.0);
        assert!(plane_mass_test(&mu, &[0.0, 0.0], &[vec![1.0, 1.0]], 1e-9).is_err());
    }
}
