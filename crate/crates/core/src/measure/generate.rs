//! Generators for the canonical measure families.

use serde::{Deserialize, Serialize};

use super::{Ambient, Measure, MeasureMeta};
use crate::error::{Error, Result};

fn default_eps() -> f64 {
    0.1
}

fn default_scale() -> f64 {
    1.0
}

fn default_one() -> Vec<f64> {
    vec![1.0]
}

/// Declarative description of a measure: ambient exponents plus a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub s: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(flatten)]
    pub family: Family,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// Product self-similar Cantor measure: each generation keeps the two
    /// outer subintervals of ratio `lambda` in every coordinate. Atoms sit at
    /// the left endpoints of the generation-`n` intervals.
    Cantor {
        d: usize,
        lambda: f64,
        generation: u32,
        #[serde(default)]
        origin: Option<Vec<f64>>,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Midpoint quadrature of Lebesgue measure on `origin + [0, side]^d`.
    LebesgueCube {
        d: usize,
        side: f64,
        resolution: u32,
        #[serde(default)]
        origin: Option<Vec<f64>>,
    },
    /// Midpoint quadrature of Lebesgue measure on the open ball `B(0, radius)`,
    /// `resolution` cells per axis across the diameter.
    LebesgueBall { d: usize, radius: f64, resolution: u32 },
    /// Union of the `k`-planes `V + x` with `V = span(e_1..e_k)` and `x` on the
    /// lattice `spacing * Z^{d-k}` in the remaining coordinates, restricted to
    /// the cube `[-half_width, half_width]^d`. Each plane carries
    /// `f(x) * H^k` discretised by midpoint cells of side `half_width / resolution`.
    /// `f` cycles through `weights` by the coordinate sum of the lattice index.
    /// `stagger` shifts each plane's in-plane grid by a plane-dependent
    /// fraction of a cell, so the union is not itself a lattice.
    PlaneLattice {
        d: usize,
        k: usize,
        spacing: f64,
        #[serde(default = "default_one")]
        weights: Vec<f64>,
        half_width: f64,
        resolution: u32,
        #[serde(default)]
        stagger: bool,
    },
    CustomPoints { points: Vec<Vec<f64>>, weights: Vec<f64> },
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::Cantor { d, .. }
            | Family::LebesgueCube { d, .. }
            | Family::LebesgueBall { d, .. }
            | Family::PlaneLattice { d, .. } => *d,
            Family::CustomPoints { points, .. } => points.first().map_or(0, Vec::len),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Cantor { .. } => "cantor",
            Family::LebesgueCube { .. } => "lebesgue-cube",
            Family::LebesgueBall { .. } => "lebesgue-ball",
            Family::PlaneLattice { .. } => "plane-lattice",
            Family::CustomPoints { .. } => "custom-points",
        }
    }
}

/// Similarity dimension of the product Cantor set of ratio `lambda` in `R^d`.
pub fn cantor_dimension(d: usize, lambda: f64) -> f64 {
    d as f64 * std::f64::consts::LN_2 / (1.0 / lambda).ln()
}

/// Contraction ratio whose `d`-dimensional product Cantor set has dimension `t`.
pub fn cantor_ratio(d: usize, t: f64) -> f64 {
    2f64.powf(-(d as f64) / t)
}

fn origin_or_zero(origin: &Option<Vec<f64>>, d: usize) -> Result<Vec<f64>> {
    match origin {
        None => Ok(vec![0.0; d]),
        Some(o) if o.len() == d && o.iter().all(|x| x.is_finite()) => Ok(o.clone()),
        Some(o) => Err(Error::param("origin", format!("expected {d} finite coordinates, got {o:?}"))),
    }
}

/// Builds the atomic approximation described by `spec`.
pub fn generate(spec: &MeasureSpec) -> Result<Measure> {
    let d = spec.family.dim();
    if d == 0 {
        return Err(Error::param("d", "dimension must be positive"));
    }
    let ambient = Ambient::new(d, spec.s, spec.eps)?;
    let name = spec.family.name().to_string();
    match &spec.family {
        Family::Cantor {
            lambda,
            generation,
            origin,
            scale,
            ..
        } => {
            let lambda = *lambda;
            if !(lambda > 0.0 && lambda <= 0.5) {
                return Err(Error::param("lambda", format!("must lie in (0, 1/2], got {lambda}")));
            }
            if !(*scale > 0.0 && scale.is_finite()) {
                return Err(Error::param("scale", "must be positive"));
            }
            if (*generation as usize) * d > 26 {
                return Err(Error::param("generation", "more than 2^26 atoms requested"));
            }
            let origin = origin_or_zero(origin, d)?;
            // 1-d left endpoints, then the d-fold product.
            let mut line = vec![0.0f64];
            let mut len = *scale;
            for _ in 0..*generation {
                let step = (1.0 - lambda) * len;
                line = line.iter().flat_map(|&p| [p, p + step]).collect();
                len *= lambda;
            }
            let m = line.len();
            let count = m.pow(d as u32);
            let mut coords = Vec::with_capacity(count * d);
            for idx in 0..count {
                let mut rest = idx;
                for k in 0..d {
                    coords.push(origin[k] + line[rest % m]);
                    rest /= m;
                }
            }
            let w = 2f64.powi(-((*generation as i32) * d as i32));
            let meta = MeasureMeta {
                family: name,
                hausdorff_dim: Some(cantor_dimension(d, lambda)),
                resolution: Some(len),
            };
            Ok(Measure::new(ambient, coords, vec![w; count])?.with_meta(meta))
        }
        Family::LebesgueCube {
            side,
            resolution,
            origin,
            ..
        } => {
            if !(*side > 0.0 && side.is_finite()) {
                return Err(Error::param("side", "must be positive"));
            }
            if *resolution == 0 {
                return Err(Error::param("resolution", "must be at least 1"));
            }
            let origin = origin_or_zero(origin, d)?;
            let res = *resolution as usize;
            let h = side / res as f64;
            let count = res
                .checked_pow(d as u32)
                .filter(|&c| c <= 1 << 26)
                .ok_or_else(|| Error::param("resolution", "too many cells"))?;
            let mut coords = Vec::with_capacity(count * d);
            for idx in 0..count {
                let mut rest = idx;
                for k in 0..d {
                    coords.push(origin[k] + (((rest % res) as f64) + 0.5) * h);
                    rest /= res;
                }
            }
            let meta = MeasureMeta {
                family: name,
                hausdorff_dim: Some(d as f64),
                resolution: Some(h),
            };
            Ok(Measure::new(ambient, coords, vec![h.powi(d as i32); count])?.with_meta(meta))
        }
        Family::LebesgueBall {
            radius, resolution, ..
        } => {
            if !(*radius > 0.0 && radius.is_finite()) {
                return Err(Error::param("radius", "must be positive"));
            }
            if *resolution == 0 {
                return Err(Error::param("resolution", "must be at least 1"));
            }
            let res = *resolution as usize;
            let h = 2.0 * radius / res as f64;
            let count = res
                .checked_pow(d as u32)
                .filter(|&c| c <= 1 << 26)
                .ok_or_else(|| Error::param("resolution", "too many cells"))?;
            let mut coords = Vec::new();
            let mut p = vec![0.0; d];
            for idx in 0..count {
                let mut rest = idx;
                for x in p.iter_mut() {
                    *x = -radius + (((rest % res) as f64) + 0.5) * h;
                    rest /= res;
                }
                if p.iter().map(|x| x * x).sum::<f64>() < radius * radius {
                    coords.extend_from_slice(&p);
                }
            }
            let n = coords.len() / d;
            let meta = MeasureMeta {
                family: name,
                hausdorff_dim: Some(d as f64),
                resolution: Some(h),
            };
            Ok(Measure::new(ambient, coords, vec![h.powi(d as i32); n])?.with_meta(meta))
        }
        Family::PlaneLattice {
            k,
            spacing,
            weights,
            half_width,
            resolution,
            stagger,
            ..
        } => plane_lattice(
            ambient,
            *k,
            *spacing,
            weights,
            *half_width,
            *resolution,
            *stagger,
        )
        .map(|m| {
            m.with_meta(MeasureMeta {
                family: name,
                hausdorff_dim: Some(*k as f64),
                resolution: Some(half_width / *resolution as f64),
            })
        }),
        Family::CustomPoints { points, weights } => {
            if points.len() != weights.len() {
                return Err(Error::param(
                    "weights",
                    format!("{} weights for {} points", weights.len(), points.len()),
                ));
            }
            let meta = MeasureMeta {
                family: name,
                ..MeasureMeta::default()
            };
            Ok(Measure::from_points(ambient, points, weights.clone())?.with_meta(meta))
        }
    }
}

/// Fractional in-plane shift of the plane with lattice index `j`: a quadratic
/// Weyl sequence. A shift linear in `j` would leave the atoms a lattice, which
/// is exactly symmetric about each of its points; the quadratic one keeps the
/// planes' grids incommensurable, so only the continuum limit is symmetric.
fn stagger_offset(j: &[i64]) -> f64 {
    const GOLDEN: f64 = 0.618_033_988_749_894_9;
    const SILVER: f64 = 0.414_213_562_373_095_1;
    let t: f64 = j
        .iter()
        .enumerate()
        .map(|(i, &x)| (x * x) as f64 * if i % 2 == 0 { GOLDEN } else { SILVER })
        .sum();
    t.rem_euclid(1.0) - 0.5
}

/// Plane-lattice generator; also used to build measures that match a
/// structure hypothesis exactly.
fn plane_lattice(
    ambient: Ambient,
    k: usize,
    spacing: f64,
    weights: &[f64],
    half_width: f64,
    resolution: u32,
    stagger: bool,
) -> Result<Measure> {
    let d = ambient.d;
    if k == 0 || k >= d {
        return Err(Error::param("k", format!("plane dimension must lie in 1..{d}, got {k}")));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::param("spacing", "must be positive"));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::param("half_width", "must be positive"));
    }
    if resolution == 0 {
        return Err(Error::param("resolution", "must be at least 1"));
    }
    if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::param("weights", "need at least one non-negative weight"));
    }
    let period = weights.len();
    for a in 0..period {
        if weights[a] != weights[(period - a) % period] {
            return Err(Error::param(
                "weights",
                "weight cycle must satisfy f(a) = f(-a) so the planes are symmetric",
            ));
        }
    }
    let h = half_width / resolution as f64;
    let cells = 2 * resolution as usize;
    let jmax = (half_width / spacing).floor() as i64;
    let codim = d - k;
    let side = (2 * jmax + 1) as usize;
    let planes = side.pow(codim as u32);
    let per_plane = cells.pow(k as u32);
    if planes.saturating_mul(per_plane) > 1 << 26 {
        return Err(Error::param("resolution", "too many atoms requested"));
    }
    let mut coords = Vec::with_capacity(planes * per_plane * d);
    let mut ws = Vec::with_capacity(planes * per_plane);
    let mut j = vec![0i64; codim];
    for pidx in 0..planes {
        let mut rest = pidx;
        for x in j.iter_mut() {
            *x = (rest % side) as i64 - jmax;
            rest /= side;
        }
        let class = j.iter().sum::<i64>().rem_euclid(period as i64) as usize;
        let f = weights[class];
        let shift = if stagger { stagger_offset(&j) * h } else { 0.0 };
        for cidx in 0..per_plane {
            let mut rest = cidx;
            for _ in 0..k {
                coords.push(-half_width + (((rest % cells) as f64) + 0.5) * h + shift);
                rest /= cells;
            }
            for &jj in &j {
                coords.push(jj as f64 * spacing);
            }
            ws.push(f * h.powi(k as i32));
        }
    }
    Measure::new(ambient, coords, ws)
}
