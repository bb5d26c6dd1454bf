//! Finite non-negative measures represented as weighted point clouds.
//!
//! Continuous measures enter through quadrature clouds produced by
//! [`generate`]. All geometric queries use strict inequalities: atoms on the
//! boundary of a ball or cube are outside of it.

mod generate;
mod index;
mod io;
pub mod region;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Cube;
use index::KdIndex;
use region::{ClosedBox, OpenBall, OpenBox, Region};

pub use generate::{cantor_dimension, cantor_ratio, generate, Family, MeasureSpec};
pub use index::LEAF_SIZE;
pub use io::{read_cloud, read_cloud_file, write_cloud, write_cloud_file, PointCloud};

/// Ambient parameters shared by every computation on a measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ambient {
    /// Dimension of the ambient space.
    pub d: usize,
    /// Kernel dimension, `0 < s < d`.
    pub s: f64,
    /// Domination exponent.
    pub eps: f64,
}

impl Ambient {
    pub fn new(d: usize, s: f64, eps: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::param("d", "ambient dimension must be positive"));
        }
        if !(s > 0.0 && s < d as f64) {
            return Err(Error::param("s", format!("need 0 < s < d = {d}, got {s}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::param("eps", format!("must be positive, got {eps}")));
        }
        Ok(Ambient { d, s, eps })
    }

    /// True when `(s - eps, s + eps)` contains no integer.
    pub fn separated_from_integers(&self) -> bool {
        let lo = self.s - self.eps;
        let hi = self.s + self.eps;
        let first = lo.floor() + 1.0;
        !(first < hi)
    }

    pub fn floor_s(&self) -> usize {
        self.s.floor() as usize
    }
}

/// Provenance attached to generated measures.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureMeta {
    pub family: String,
    /// Similarity dimension of self-similar families.
    pub hausdorff_dim: Option<f64>,
    /// Quadrature spacing for clouds that approximate continuous measures.
    pub resolution: Option<f64>,
}

/// A finite atomic measure with a spatial index for mass queries.
///
/// Immutable after construction and safe to share across threads.
#[derive(Clone, Debug)]
pub struct Measure {
    ambient: Ambient,
    coords: Vec<f64>,
    weights: Vec<f64>,
    index: KdIndex,
    meta: MeasureMeta,
    min_sep: OnceLock<f64>,
}

impl Measure {
    /// Builds a measure from flattened coordinates (`n * d` values) and weights.
    pub fn new(ambient: Ambient, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let d = ambient.d;
        if coords.len() != weights.len() * d {
            return Err(Error::param(
                "coords",
                format!("{} coordinates for {} atoms in dimension {d}", coords.len(), weights.len()),
            ));
        }
        if let Some(bad) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::param("coords", format!("non-finite coordinate at atom {}", bad / d)));
        }
        if let Some(bad) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("weights", format!("atom {bad} has weight {}", weights[bad])));
        }
        let index = KdIndex::build(d, &coords, &weights);
        Ok(Measure {
            ambient,
            coords,
            weights,
            index,
            meta: MeasureMeta::default(),
            min_sep: OnceLock::new(),
        })
    }

    /// Convenience constructor from a list of points.
    pub fn from_points(ambient: Ambient, points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.len() != ambient.d) {
            return Err(Error::param("points", format!("point {p:?} is not {}-dimensional", ambient.d)));
        }
        let coords = points.iter().flatten().copied().collect();
        Measure::new(ambient, coords, weights)
    }

    pub fn with_meta(mut self, meta: MeasureMeta) -> Self {
        self.meta = meta;
        self
    }

    /// Same atoms under different `(s, eps)`; the dimension must match.
    pub fn with_ambient(&self, ambient: Ambient) -> Result<Self> {
        if ambient.d != self.ambient.d {
            return Err(Error::param("d", "cannot change the ambient dimension of a measure"));
        }
        let mut m = self.clone();
        m.ambient = ambient;
        Ok(m)
    }

    pub fn ambient(&self) -> &Ambient {
        &self.ambient
    }

    pub fn meta(&self) -> &MeasureMeta {
        &self.meta
    }

    pub fn dim(&self) -> usize {
        self.ambient.d
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.ambient.d;
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.coords
            .chunks_exact(self.ambient.d)
            .zip(self.weights.iter().copied())
    }

    /// Indices of atoms with positive weight.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    pub fn total_mass(&self) -> f64 {
        crate::stats::pairwise_sum(&self.weights)
    }

    /// Mass of the open ball `B(center, r)`; zero for `r <= 0`.
    pub fn mass_ball(&self, center: &[f64], r: f64) -> f64 {
        self.mass_in(&OpenBall::new(center, r))
    }

    /// Mass of the open triple region of a lattice cube.
    pub fn mass_cube(&self, q: &Cube) -> f64 {
        self.mass_in(&q.region())
    }

    pub fn mass_box(&self, b: &OpenBox) -> f64 {
        self.mass_in(b)
    }

    pub fn mass_closed_box(&self, b: &ClosedBox) -> f64 {
        self.mass_in(b)
    }

    pub fn mass_in<R: Region>(&self, region: &R) -> f64 {
        self.index.mass(region, &self.coords, &self.weights)
    }

    /// Indices of all atoms (any weight) inside `region`, in ascending order.
    pub fn indices_in<R: Region>(&self, region: &R) -> Vec<usize> {
        let mut out = Vec::new();
        self.index.for_each_in(region, &self.coords, |i| out.push(i));
        out.sort_unstable();
        out
    }

    /// Minimum positive distance between two support atoms (infinite for fewer than two).
    pub fn min_separation(&self) -> f64 {
        *self.min_sep.get_or_init(|| {
            let w = &self.weights;
            let mut best = f64::INFINITY;
            for i in 0..self.len() {
                if w[i] > 0.0 {
                    let d2 = self
                        .index
                        .nearest_positive_dist2(self.point(i), &self.coords, |j| w[j] > 0.0);
                    best = best.min(d2);
                }
            }
            best.sqrt()
        })
    }

    /// Smallest scale the atomic approximation resolves: half the minimum
    /// separation of support atoms. Single-atom measures fall back to 1.
    pub fn r_min(&self) -> f64 {
        let sep = self.min_separation();
        if sep.is_finite() {
            sep / 2.0
        } else {
            1.0
        }
    }

    /// Bounding box of the support, or `None` for the zero measure.
    pub fn support_bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let d = self.ambient.d;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut any = false;
        for (p, w) in self.points() {
            if w > 0.0 {
                any = true;
                for k in 0..d {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// Diagonal of the support bounding box, an upper bound for the diameter.
    pub fn extent(&self) -> f64 {
        match self.support_bounds() {
            Some((lo, hi)) => region::dist(&lo, &hi),
            None => 0.0,
        }
    }

    /// Multiplies every weight by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let weights = self.weights.iter().map(|w| w * c).collect();
        Ok(Measure::new(self.ambient, self.coords.clone(), weights)?.with_meta(self.meta.clone()))
    }

    /// Restriction to the atoms inside `region`.
    pub fn restrict<R: Region>(&self, region: &R) -> Result<Self> {
        let keep = self.indices_in(region);
        let d = self.ambient.d;
        let mut coords = Vec::with_capacity(keep.len() * d);
        let mut weights = Vec::with_capacity(keep.len());
        for &i in &keep {
            coords.extend_from_slice(self.point(i));
            weights.push(self.weights[i]);
        }
        Ok(Measure::new(self.ambient, coords, weights)?.with_meta(self.meta.clone()))
    }

    /// Pushes the measure forward under `L_Q^{-1}` (the affine map sending `Q`
    /// onto `Q_0 = (-1, 2)^d`) and divides by `mu(Q)`, so the result carries
    /// unit mass on `Q_0`.
    pub fn rescale_normalize(&self, q: &Cube) -> Result<Self> {
        let mass = self.mass_cube(q);
        if !(mass > 0.0) {
            return Err(Error::Domain(format!("cube {q} carries no mass")));
        }
        let h = q.unit();
        let d = self.ambient.d;
        let mut coords = Vec::with_capacity(self.coords.len());
        for p in self.coords.chunks_exact(d) {
            for k in 0..d {
                coords.push(p[k] / h - q.corner()[k] as f64);
            }
        }
        let weights = self.weights.iter().map(|w| w / mass).collect();
        let mut meta = self.meta.clone();
        meta.resolution = meta.resolution.map(|r| r / h);
        Ok(Measure::new(self.ambient, coords, weights)?.with_meta(meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amb(d: usize) -> Ambient {
        Ambient::new(d, 0.5, 0.1).unwrap()
    }

    #[test]
    fn ambient_validation() {
        assert!(Ambient::new(1, 1.0, 0.1).is_err());
        assert!(Ambient::new(2, 0.0, 0.1).is_err());
        assert!(Ambient::new(2, 1.5, 0.0).is_err());
        assert!(Ambient::new(2, 1.5, 0.2).unwrap().separated_from_integers());
        assert!(!Ambient::new(2, 1.5, 0.6).unwrap().separated_from_integers());
        assert!(!Ambient::new(2, 1.0001, 0.01).unwrap().separated_from_integers());
    }

    #[test]
    fn single_atom_ball() {
        let mu = Measure::from_points(amb(1), &[vec![0.0]], vec![1.0]).unwrap();
        assert_eq!(mu.mass_ball(&[0.0], 0.5), 1.0);
        assert_eq!(mu.mass_ball(&[0.0], 0.0), 0.0);
    }

    #[test]
    fn rejects_negative_weight() {
        let err = Measure::from_points(amb(1), &[vec![0.0]], vec![-1.0]).unwrap_err();
        assert!(matches!(err, Error::Parameter { field: "weights", .. }));
    }

    #[test]
    fn support_skips_zero_weights() {
        let mu = Measure::from_points(amb(1), &[vec![0.0], vec![1.0], vec![2.0]], vec![1.0, 0.0, 2.0])
            .unwrap();
        assert_eq!(mu.support(), vec![0, 2]);
        assert_eq!(mu.min_separation(), 2.0);
        assert_eq!(mu.r_min(), 1.0);
    }

    #[test]
    fn cube_mass_is_open() {
        let q = Cube::new(0, vec![0]);
        let mu = Measure::from_points(amb(1), &[vec![0.5], vec![-1.0], vec![2.0]], vec![0.25, 1.0, 1.0])
            .unwrap();
        assert_eq!(mu.mass_cube(&q), 0.25);
    }

    #[test]
    fn rescale_identity_on_q0() {
        let q0 = Cube::q0(1);
        let mu = Measure::from_points(amb(1), &[vec![0.25], vec![1.5]], vec![0.5, 0.5]).unwrap();
        let nu = mu.rescale_normalize(&q0).unwrap();
        assert_eq!(nu.coords(), mu.coords());
        assert_eq!(nu.weights(), mu.weights());
    }

    #[test]
    fn rescale_normalizes_mass() {
        let q = Cube::new(-3, vec![5]);
        let r = q.region();
        let pts: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![r.lo[0] + (i as f64 + 0.5) * (r.hi[0] - r.lo[0]) / 8.0])
            .collect();
        let mu = Measure::from_points(amb(1), &pts, vec![1.0; 8]).unwrap();
        let nu = mu.rescale_normalize(&q).unwrap();
        assert!(nu.weights().iter().all(|&w| w == 0.125));
        assert_eq!(nu.mass_cube(&Cube::q0(1)), 1.0);
    }

    #[test]
    fn rescale_rejects_empty_cube() {
        let mu = Measure::from_points(amb(1), &[vec![10.0]], vec![1.0]).unwrap();
        assert!(matches!(mu.rescale_normalize(&Cube::q0(1)), Err(Error::Domain(_))));
    }
}
