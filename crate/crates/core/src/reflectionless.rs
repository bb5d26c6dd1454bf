//! Tests for smoothly reflectionless measures: constancy of `φ * μ` on the
//! support, ball differences `Λ_B`, reflection closure of point sets, and
//! verification of a measure against a union-of-parallel-planes structure.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::check_orthonormal;
use crate::error::{Error, Result};
use crate::measure::region::{dist, ClosedBox, OpenBall, OpenBox, Region};
use crate::measure::{Ambient, Measure};
use crate::operators::{bump_field, Bump};
use crate::stats::{median, pairwise_sum};

/// `max_x |T_φ(μ)(x) - median T_φ(μ)|` over the atoms in `window`, with
/// `T_φ(μ)(x) = Σ φ(x - y) w_y` and `φ` odd along the first axis.
pub fn reflectionless_defect(mu: &Measure, phi: &Bump, window: &OpenBox) -> Result<f64> {
    reflectionless_defect_along(mu, phi, window, 0)
}

/// As [`reflectionless_defect`], with `φ` odd along coordinate `axis`.
pub fn reflectionless_defect_along(mu: &Measure, phi: &Bump, window: &OpenBox, axis: usize) -> Result<f64> {
    if axis >= mu.dim() || window.dim() != mu.dim() {
        return Err(Error::Domain(format!("axis {axis} or window does not fit dimension {}", mu.dim())));
    }
    let atoms = mu.indices_in(window);
    if atoms.is_empty() {
        return Err(Error::Domain("no atoms in the observation window".into()));
    }
    let t = bump_field(phi, mu, &atoms, 1.0, axis);
    let m = median(&t).expect("non-empty");
    Ok(t.iter().fold(0.0f64, |acc, v| acc.max((v - m).abs())))
}

/// The window `[lo + margin, hi - margin]` in every coordinate of the support
/// bounds, as an open box; the margin keeps `φ`'s support inside the cloud.
pub fn interior_window(mu: &Measure, margin: f64) -> Option<OpenBox> {
    let (lo, hi) = mu.support_bounds()?;
    let lo: Vec<f64> = lo.iter().map(|x| x + margin).collect();
    let hi: Vec<f64> = hi.iter().map(|x| x - margin).collect();
    // Nudge outward so atoms on the shrunken faces still count.
    let pad = 1e-12 * (1.0 + margin.abs());
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return None;
    }
    Some(OpenBox::new(lo.iter().map(|x| x - pad).collect(), hi.iter().map(|x| x + pad).collect()))
}

/// `μ(B(x + z, r)) - μ(B(x - z, r))`.
pub fn ball_difference(mu: &Measure, x: &[f64], z: &[f64], r: f64) -> f64 {
    let plus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
    let minus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
    mu.mass_ball(&plus, r) - mu.mass_ball(&minus, r)
}

/// Lipschitz stand-in for [`ball_difference`]: the indicator of `B(0, r)` is
/// replaced by a ramp falling from 1 at radius `r - 1/steepness` to 0 at `r`.
/// Increases to the ball difference of open balls as `steepness → ∞`.
pub fn ramp_difference(mu: &Measure, x: &[f64], z: &[f64], r: f64, steepness: f64) -> f64 {
    let ramp = |t: f64| ((r - t) * steepness).clamp(0.0, 1.0);
    let side = |sign: f64| {
        let c: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + sign * b).collect();
        let terms: Vec<f64> = mu
            .indices_in(&OpenBall::new(&c, r))
            .into_iter()
            .map(|j| ramp(dist(&c, mu.point(j))) * mu.weight(j))
            .collect();
        pairwise_sum(&terms)
    };
    side(1.0) - side(-1.0)
}

/// Limits for [`reflection_closure`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosureLimits {
    /// Stop as soon as two distinct points come closer than this.
    pub min_spacing: f64,
    pub max_points: usize,
}

impl Default for ClosureLimits {
    fn default() -> Self {
        ClosureLimits {
            min_spacing: 1e-6,
            max_points: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Closure {
    pub points: Vec<Vec<f64>>,
    /// Minimum spacing after each round of translations.
    pub spacing_history: Vec<f64>,
    /// Two points came closer than the spacing limit: no uniformly discrete
    /// structure is compatible with the generators.
    pub dense: bool,
    /// The point cap was hit.
    pub capped: bool,
}

impl Closure {
    pub fn is_fixed_point(&self) -> bool {
        !self.dense && !self.capped
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing_history.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Closes `support ∩ window` under `p ↦ p + k (y - x)`, `k ∈ Z`, for each
/// generating pair `(x, y)` of indices into `support`, keeping only points in
/// the closed window.
pub fn reflection_closure(
    support: &[Vec<f64>],
    pairs: &[(usize, usize)],
    window: &ClosedBox,
    limits: ClosureLimits,
) -> Result<Closure> {
    let d = window.lo.len();
    if support.iter().any(|p| p.len() != d) {
        return Err(Error::Domain("support and window dimensions differ".into()));
    }
    if !(limits.min_spacing > 0.0) {
        return Err(Error::param("min_spacing", "must be positive"));
    }
    let mut gens = Vec::new();
    for &(i, j) in pairs {
        if i >= support.len() || j >= support.len() {
            return Err(Error::param("pairs", format!("index pair ({i}, {j}) out of range")));
        }
        let z: Vec<f64> = support[j].iter().zip(&support[i]).map(|(a, b)| a - b).collect();
        if z.iter().any(|&c| c != 0.0) {
            gens.push(z);
        }
    }
    let scale = window.lo.iter().zip(&window.hi).fold(1.0f64, |m, (l, h)| m.max((h - l).abs()));
    let mut grid = SpacingGrid::new(limits.min_spacing, 1e-9 * scale);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut closest = f64::INFINITY;
    for p in support.iter().filter(|p| window.contains(p)) {
        if let Insert::New(gap) = grid.insert(p, points.len()) {
            points.push(p.clone());
            closest = closest.min(gap);
        }
    }
    let mut out = Closure {
        points: Vec::new(),
        spacing_history: vec![min_spacing(&points)],
        dense: closest < limits.min_spacing,
        capped: false,
    };
    let mut frontier: Vec<usize> = (0..points.len()).collect();
    while !frontier.is_empty() && !out.dense && !out.capped {
        let mut next = Vec::new();
        'round: for &i in &frontier {
            for z in &gens {
                for sign in [1.0, -1.0] {
                    let q: Vec<f64> = points[i].iter().zip(z).map(|(a, b)| a + sign * b).collect();
                    if !window.contains(&q) {
                        continue;
                    }
                    match grid.insert(&q, points.len()) {
                        Insert::Known => {}
                        Insert::New(gap) => {
                            closest = closest.min(gap);
                            next.push(points.len());
                            points.push(q);
                            if closest < limits.min_spacing {
                                out.dense = true;
                                break 'round;
                            }
                            if points.len() >= limits.max_points {
                                out.capped = true;
                                break 'round;
                            }
                        }
                    }
                }
            }
        }
        out.spacing_history.push(min_spacing(&points));
        frontier = next;
    }
    points.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    out.points = points;
    Ok(out)
}

/// Smallest distance between two of the points (sweep along the first axis).
pub fn min_spacing(points: &[Vec<f64>]) -> f64 {
    let mut order: Vec<&Vec<f64>> = points.iter().collect();
    order.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut best = f64::INFINITY;
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            if order[j][0] - order[i][0] >= best {
                break;
            }
            best = best.min(dist(order[i], order[j]));
        }
    }
    best
}

/// Every ordered pair of distinct indices below `n` with `i < j`.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

enum Insert {
    Known,
    New(f64),
}

/// Hash grid for "is this point new, and how close is its nearest neighbour".
struct SpacingGrid {
    cell: f64,
    same: f64,
    cells: HashMap<Vec<i64>, Vec<(usize, Vec<f64>)>>,
}

impl SpacingGrid {
    fn new(cell: f64, same: f64) -> Self {
        SpacingGrid {
            cell: cell.max(same * 4.0),
            same,
            cells: HashMap::new(),
        }
    }

    fn key(&self, p: &[f64]) -> Vec<i64> {
        p.iter().map(|x| (x / self.cell).floor() as i64).collect()
    }

    /// Keys of the `3^d` cells around `p`'s cell.
    fn neighbours(&self, p: &[f64]) -> Vec<Vec<i64>> {
        let mut keys = vec![Vec::with_capacity(p.len())];
        for c in self.key(p) {
            keys = keys
                .into_iter()
                .flat_map(|k: Vec<i64>| {
                    (-1..=1).map(move |o| {
                        let mut k = k.clone();
                        k.push(c + o);
                        k
                    })
                })
                .collect();
        }
        keys
    }

    /// Inserts `p` unless a point within `same` exists; on insertion returns
    /// the distance to the nearest stored point closer than one cell.
    fn insert(&mut self, p: &[f64], id: usize) -> Insert {
        let mut closest = f64::INFINITY;
        for k in self.neighbours(p) {
            if let Some(list) = self.cells.get(&k) {
                for (_, q) in list {
                    let g = dist(p, q);
                    if g <= self.same {
                        return Insert::Known;
                    }
                    closest = closest.min(g);
                }
            }
        }
        self.push(p, id);
        Insert::New(closest)
    }

    fn push(&mut self, p: &[f64], id: usize) {
        let key = self.key(p);
        self.cells.entry(key).or_default().push((id, p.to_vec()));
    }

    /// Nearest stored point within `r <= cell` of `p`.
    fn nearest(&self, p: &[f64], r: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for k in self.neighbours(p) {
            for (id, q) in self.cells.get(&k).into_iter().flatten() {
                let g = dist(p, q);
                if g <= r && best.map_or(true, |b| g < b.1) {
                    best = Some((*id, g));
                }
            }
        }
        best
    }
}

/// `μ = Σ_{x ∈ E} f(x) H^k|(V + x)`, observed inside a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureHypothesis {
    /// Orthonormal basis of `V` (`k` vectors; empty for points).
    pub basis: Vec<Vec<f64>>,
    /// Offsets, orthogonal to `V`.
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub window: ClosedBox,
}

impl StructureHypothesis {
    pub fn k(&self) -> usize {
        self.basis.len()
    }

    /// The structure behind a plane-lattice measure: `V` spanned by the first
    /// `k` coordinate axes, `E = spacing Z^(d-k)` within `half_width`.
    pub fn plane_lattice(d: usize, k: usize, spacing: f64, weights: &[f64], half_width: f64) -> Result<Self> {
        if k >= d || weights.is_empty() || !(spacing > 0.0) {
            return Err(Error::param("hypothesis", "needs k < d, a positive spacing and weights"));
        }
        let basis = (0..k)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect();
        let jmax = (half_width / spacing).floor() as i64;
        let codim = d - k;
        let side = (2 * jmax + 1) as usize;
        let mut points = Vec::new();
        let mut ws = Vec::new();
        for idx in 0..side.pow(codim as u32) {
            let mut rest = idx;
            let mut p = vec![0.0; d];
            let mut sum = 0i64;
            for c in p.iter_mut().skip(k) {
                let j = (rest % side) as i64 - jmax;
                rest /= side;
                *c = j as f64 * spacing;
                sum += j;
            }
            points.push(p);
            ws.push(weights[sum.rem_euclid(weights.len() as i64) as usize]);
        }
        Ok(StructureHypothesis {
            basis,
            points,
            weights: ws,
            window: ClosedBox::centered(d, half_width),
        })
    }

    /// Component of `p` orthogonal to `V`.
    fn normal_part(&self, p: &[f64]) -> Vec<f64> {
        let mut out = p.to_vec();
        for b in &self.basis {
            let c: f64 = p.iter().zip(b).map(|(x, y)| x * y).sum();
            for (o, y) in out.iter_mut().zip(b) {
                *o -= c * y;
            }
        }
        out
    }

    /// Index of the nearest plane and the distance to it.
    fn nearest_plane(&self, p: &[f64]) -> (usize, f64) {
        let n = self.normal_part(p);
        self.points
            .iter()
            .enumerate()
            .map(|(i, x)| (i, dist(&n, x)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, f64::INFINITY))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `a` (atom off the planes), `b` (non-uniform plane), `c` (asymmetry of
    /// `E` or `f`) or `delta` (`E` not uniformly discrete).
    pub check: String,
    pub location: Vec<f64>,
    pub magnitude: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub violations: Vec<Violation>,
    pub atoms_checked: usize,
    pub planes_checked: usize,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn failed(&self, check: &str) -> bool {
        self.violations.iter().any(|v| v.check == check)
    }
}

/// Missing mirror images reported before check (c) stops scanning.
const MAX_MIRROR_VIOLATIONS: usize = 10_000;

/// Atoms sampled per plane for the uniformity check.
const PLANE_SAMPLES: usize = 50;

/// Checks `μ` against `hyp` inside the hypothesis window:
/// (a) every atom lies within `tol` of a plane `V + x`;
/// (b) on each plane, `μ(B(z, r))` is the same for sampled atoms `z`
///     (relative spread at most `tol`, with `r` below half the plane spacing),
///     `μ(B(z, r)) / f` agrees across planes, and no plane of positive weight
///     whose foot point lies in the window is empty;
/// (c) `E` and `f` are symmetric about each point of `E`, up to `tol`.
pub fn verify_structure(mu: &Measure, hyp: &StructureHypothesis, tol: f64) -> Result<StructureReport> {
    let d = mu.dim();
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if hyp.window.lo.len() != d || hyp.basis.iter().chain(&hyp.points).any(|v| v.len() != d) {
        return Err(Error::Domain("hypothesis dimension does not match the measure".into()));
    }
    if hyp.points.len() != hyp.weights.len() || hyp.points.is_empty() {
        return Err(Error::Domain("hypothesis needs one weight per point of E".into()));
    }
    check_orthonormal(&hyp.basis)?;
    for x in &hyp.points {
        let off = dist(&hyp.normal_part(x), x);
        if off > 1e-9 * (1.0 + x.iter().map(|c| c.abs()).fold(0.0, f64::max)) {
            return Err(Error::Domain(format!("point {x:?} of E is not orthogonal to V")));
        }
    }
    let mut report = StructureReport::default();
    let e = &hyp.points;
    let delta = min_spacing(e);
    if delta <= tol {
        report.violations.push(Violation {
            check: "delta".into(),
            location: Vec::new(),
            magnitude: delta,
        });
    }

    // (a)
    let atoms: Vec<usize> = (0..mu.len()).filter(|&i| hyp.window.contains(mu.point(i))).collect();
    report.atoms_checked = atoms.len();
    let nearest: Vec<(usize, f64)> = atoms.par_iter().map(|&i| hyp.nearest_plane(mu.point(i))).collect();
    let mut on_plane: Vec<Vec<usize>> = vec![Vec::new(); e.len()];
    for (&i, &(p, gap)) in atoms.iter().zip(&nearest) {
        if gap > tol {
            report.violations.push(Violation {
                check: "a".into(),
                location: mu.point(i).to_vec(),
                magnitude: gap,
            });
        } else {
            on_plane[p].push(i);
        }
    }

    // (b)
    let r = if delta.is_finite() {
        0.45 * delta
    } else {
        0.25 * hyp.window.lo.iter().zip(&hyp.window.hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min)
    };
    let inner = hyp.window.shrink(r);
    // Per plane, the median of mu(B(z, r)) / f over the sampled atoms; these
    // must agree across planes for mu to be proportional to Σ f H^k.
    let mut normalized: Vec<(usize, f64)> = Vec::new();
    for (p, list) in on_plane.iter().enumerate() {
        let inside: Vec<usize> = list.iter().copied().filter(|&i| inner.contains(mu.point(i))).collect();
        if inside.is_empty() {
            if hyp.weights[p] > 0.0 && inner.contains(&e[p]) {
                report.violations.push(Violation {
                    check: "b".into(),
                    location: e[p].clone(),
                    magnitude: 1.0,
                });
            }
            continue;
        }
        report.planes_checked += 1;
        let step = inside.len().div_ceil(PLANE_SAMPLES);
        let masses: Vec<f64> = inside.iter().step_by(step).map(|&i| mu.mass_ball(mu.point(i), r)).collect();
        let hi = masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = masses.iter().copied().fold(f64::INFINITY, f64::min);
        if hi > 0.0 && (hi - lo) / hi > tol {
            report.violations.push(Violation {
                check: "b".into(),
                location: e[p].clone(),
                magnitude: (hi - lo) / hi,
            });
        }
        if hyp.weights[p] > 0.0 {
            normalized.push((p, median(&masses).expect("non-empty") / hyp.weights[p]));
        }
    }
    if let Some(reference) = median(&normalized.iter().map(|x| x.1).collect::<Vec<_>>()) {
        for &(p, v) in &normalized {
            let gap = (v - reference).abs() / v.abs().max(reference.abs()).max(f64::MIN_POSITIVE);
            if gap > tol {
                report.violations.push(Violation {
                    check: "b".into(),
                    location: e[p].clone(),
                    magnitude: gap,
                });
            }
        }
    }

    // (c)
    let mut grid = SpacingGrid::new(tol, 0.0);
    for (i, x) in e.iter().enumerate() {
        grid.push(x, i);
    }
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for w in &hyp.weights {
        *counts.entry(w.to_bits()).or_default() += 1;
    }
    let rarity = |i: usize| counts[&hyp.weights[i].to_bits()];
    let mut flagged = vec![false; e.len()];
    let mut missing = 0;
    'mirror: for y in e {
        for (xi, x) in e.iter().enumerate() {
            let r: Vec<f64> = y.iter().zip(x).map(|(a, b)| 2.0 * a - b).collect();
            if !hyp.window.contains(&r) {
                continue;
            }
            let Some((ri, _)) = grid.nearest(&r, tol) else {
                missing += 1;
                if missing > MAX_MIRROR_VIOLATIONS {
                    break 'mirror;
                }
                let gap = e.iter().map(|p| dist(p, &r)).fold(f64::INFINITY, f64::min);
                report.violations.push(Violation {
                    check: "c".into(),
                    location: r,
                    magnitude: gap,
                });
                continue;
            };
            let df = (hyp.weights[ri] - hyp.weights[xi]).abs();
            let scale = hyp.weights[ri].abs().max(hyp.weights[xi].abs()).max(f64::MIN_POSITIVE);
            if df > tol * scale {
                // blame the point carrying the rarer weight
                let culprit = if rarity(xi) <= rarity(ri) { xi } else { ri };
                if !flagged[culprit] {
                    flagged[culprit] = true;
                    report.violations.push(Violation {
                        check: "c".into(),
                        location: e[culprit].clone(),
                        magnitude: df / scale,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// `floor(s) < k < floor(s) + 1`: the only dimensions of a plane structure
/// compatible with both non-vanishing density and the growth bound. Empty
/// for integer `k`.
pub fn dimension_window_check(k: usize, ambient: &Ambient) -> bool {
    let fs = ambient.s.floor();
    let k = k as f64;
    fs < k && k < fs + 1.0
}

/// Distance from each atom in `window` to the nearest plane of `hyp`, as
/// `(atom index, distance)`.
pub fn plane_distances(mu: &Measure, hyp: &StructureHypothesis) -> Vec<(usize, f64)> {
    (0..mu.len())
        .into_par_iter()
        .filter(|&i| hyp.window.contains(mu.point(i)))
        .map(|i| (i, hyp.nearest_plane(mu.point(i)).1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_of_two_points_is_a_progression() {
        let support = vec![vec![0.0], vec![0.5]];
        let c = reflection_closure(&support, &[(0, 1)], &ClosedBox::new(vec![-1.5], vec![1.5]), ClosureLimits::default())
            .unwrap();
        let xs: Vec<f64> = c.points.iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5]);
        assert!(c.is_fixed_point());
    }

    #[test]
    fn incommensurable_generators_accumulate() {
        let support = vec![vec![0.0], vec![1.0], vec![std::f64::consts::SQRT_2]];
        let lim = ClosureLimits {
            min_spacing: 1e-3,
            max_points: 100_000,
        };
        let c = reflection_closure(&support, &[(0, 1), (0, 2)], &ClosedBox::new(vec![-3.0], vec![3.0]), lim).unwrap();
        assert!(c.dense);
        assert!(c.spacing_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn dimension_window_is_empty_for_integers() {
        for s in [0.3, 1.5, 2.7] {
            let a = Ambient::new(3, s, 0.1).unwrap();
            assert!((0..=3).all(|k| !dimension_window_check(k, &a)));
        }
    }

    #[test]
    fn single_atom_ball_difference() {
        let mu = Measure::from_points(Ambient::new(1, 0.5, 0.1).unwrap(), &[vec![1.0]], vec![2.0]).unwrap();
        assert_eq!(ball_difference(&mu, &[0.0], &[1.0], 0.5), 2.0);
        assert_eq!(ball_difference(&mu, &[0.0], &[-1.0], 0.5), -2.0);
    }
}
