//! The lattice of concentric triples of dyadic cubes.
//!
//! A [`Cube`] at level `m` with integer corner `k` stands for the open triple
//! `Π ((k_i - 1) 2^m, (k_i + 2) 2^m)` of the dyadic cube `Π [k_i 2^m, (k_i + 1) 2^m)`.
//! Levels are limited to `|m| <= 40` and corners to `|k| < 2^52`, so every
//! face coordinate is an exact double.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::region::OpenBox;
use crate::measure::Measure;

pub const MAX_LEVEL: i32 = 40;
const MAX_CORNER: i64 = 1 << 52;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cube {
    level: i32,
    corner: Vec<i64>,
}

#[inline]
fn pow2(m: i32) -> f64 {
    2f64.powi(m)
}

impl Cube {
    /// # Panics
    /// If the level or a corner coordinate is out of the exact range.
    pub fn new(level: i32, corner: Vec<i64>) -> Self {
        Cube::try_new(level, corner).expect("cube out of exact range")
    }

    pub fn try_new(level: i32, corner: Vec<i64>) -> Result<Self> {
        if level.abs() > MAX_LEVEL {
            return Err(Error::param("level", format!("|m| must be at most {MAX_LEVEL}, got {level}")));
        }
        if corner.is_empty() {
            return Err(Error::param("corner", "cube needs at least one coordinate"));
        }
        if corner.iter().any(|k| k.abs() >= MAX_CORNER) {
            return Err(Error::param("corner", "corner coordinate exceeds 2^52"));
        }
        Ok(Cube { level, corner })
    }

    /// `Q_0 = (-1, 2)^d`.
    pub fn q0(d: usize) -> Self {
        Cube {
            level: 0,
            corner: vec![0; d],
        }
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn corner(&self) -> &[i64] {
        &self.corner
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    /// Side of the underlying dyadic cube, `2^m`.
    pub fn unit(&self) -> f64 {
        pow2(self.level)
    }

    /// Side of the triple, `3 * 2^m`.
    pub fn side(&self) -> f64 {
        3.0 * self.unit()
    }

    pub fn center(&self) -> Vec<f64> {
        let h = self.unit();
        self.corner.iter().map(|&k| (k as f64 + 0.5) * h).collect()
    }

    /// The open triple itself.
    pub fn region(&self) -> OpenBox {
        let h = self.unit();
        OpenBox::new(
            self.corner.iter().map(|&k| (k - 1) as f64 * h).collect(),
            self.corner.iter().map(|&k| (k + 2) as f64 * h).collect(),
        )
    }

    /// The concentric dilation `factor * Q` of the triple (open).
    pub fn dilated(&self, factor: f64) -> OpenBox {
        let h = self.unit();
        if factor == 3.0 {
            return OpenBox::new(
                self.corner.iter().map(|&k| (k - 4) as f64 * h).collect(),
                self.corner.iter().map(|&k| (k + 5) as f64 * h).collect(),
            );
        }
        let half = 1.5 * factor * h;
        let c = self.center();
        OpenBox::new(c.iter().map(|x| x - half).collect(), c.iter().map(|x| x + half).collect())
    }

    /// Triple of the dyadic cube with four times the side containing this one.
    pub fn grandparent(&self) -> Cube {
        Cube {
            level: self.level + 2,
            corner: self.corner.iter().map(|k| k.div_euclid(4)).collect(),
        }
    }

    /// Inclusion of the open triples, `other ⊆ self`.
    pub fn contains_cube(&self, other: &Cube) -> bool {
        let a = self.region();
        let b = other.region();
        (0..self.dim()).all(|i| a.lo[i] <= b.lo[i] && b.hi[i] <= a.hi[i])
    }

    /// Inclusion `3 * other ⊆ 3 * self`, in exact dyadic arithmetic.
    pub fn contains_triple(&self, other: &Cube) -> bool {
        let a = self.dilated(3.0);
        let b = other.dilated(3.0);
        (0..self.dim()).all(|i| a.lo[i] <= b.lo[i] && b.hi[i] <= a.hi[i])
    }

    /// Whether the open triples intersect.
    pub fn intersects(&self, other: &Cube) -> bool {
        let a = self.region();
        let b = other.region();
        (0..self.dim()).all(|i| a.lo[i] < b.hi[i] && b.lo[i] < a.hi[i])
    }

    /// Whether the open regions `3 * self` and `3 * other` are disjoint.
    pub fn triples_disjoint(&self, other: &Cube) -> bool {
        let a = self.dilated(3.0);
        let b = other.dilated(3.0);
        (0..self.dim()).any(|i| a.hi[i] <= b.lo[i] || b.hi[i] <= a.lo[i])
    }

    /// Cubes at `level > self.level` whose triple contains this triple.
    pub fn containing_at(&self, level: i32) -> Vec<Cube> {
        debug_assert!(level > self.level);
        let shift = (level - self.level) as u32;
        let mut ranges = Vec::with_capacity(self.dim());
        for &k in &self.corner {
            // (k'-1) 2^Δ <= k - 1 and k + 2 <= (k'+2) 2^Δ
            let k = k as i128;
            let hi = floor_shift(k - 1, shift) + 1;
            let lo = ceil_shift(k + 2, shift) - 2;
            if lo > hi {
                return Vec::new();
            }
            ranges.push((lo as i64, hi as i64));
        }
        let mut out = Vec::new();
        product(&ranges, &mut vec![0; self.dim()], 0, &mut |c| {
            out.push(Cube {
                level,
                corner: c.to_vec(),
            })
        });
        out
    }

    /// Density `mu(Q) / l(Q)^s`.
    pub fn density(&self, mu: &Measure) -> f64 {
        mu.mass_cube(self) / self.side().powf(mu.ambient().s)
    }
}

fn floor_shift(x: i128, shift: u32) -> i128 {
    if shift >= 100 {
        return if x < 0 { -1 } else { 0 };
    }
    x >> shift
}

fn ceil_shift(x: i128, shift: u32) -> i128 {
    -floor_shift(-x, shift)
}

fn product(ranges: &[(i64, i64)], cur: &mut Vec<i64>, at: usize, f: &mut impl FnMut(&[i64])) {
    if at == ranges.len() {
        f(cur);
        return;
    }
    for k in ranges[at].0..=ranges[at].1 {
        cur[at] = k;
        product(ranges, cur, at + 1, f);
    }
}

/// `[Q' : Q] = |log2(l(Q') / l(Q))|`.
pub fn ratio(a: &Cube, b: &Cube) -> u32 {
    a.level.abs_diff(b.level)
}

impl fmt::Display for Cube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.level)?;
        for (i, k) in self.corner.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

impl FromStr for Cube {
    type Err = Error;

    /// Parses `m:k1,k2,...,kd`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::param("cube", format!("{why} in {s:?}, expected m:k1,...,kd"));
        let (m, ks) = s.trim().split_once(':').ok_or_else(|| bad("missing ':'"))?;
        let level: i32 = m.trim().parse().map_err(|_| bad("bad level"))?;
        let corner = ks
            .split(',')
            .map(|k| k.trim().parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("bad corner"))?;
        Cube::try_new(level, corner)
    }
}

/// A finite window onto the lattice: levels `m_min..=m_max`, optionally
/// restricted to cubes whose triple meets `window`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeView {
    pub m_min: i32,
    pub m_max: i32,
    pub window: Option<OpenBox>,
}

impl LatticeView {
    pub fn new(m_min: i32, m_max: i32) -> Result<Self> {
        if m_min > m_max {
            return Err(Error::param("levels", format!("m_min {m_min} exceeds m_max {m_max}")));
        }
        if m_min < -MAX_LEVEL || m_max > MAX_LEVEL {
            return Err(Error::param("levels", format!("levels must lie in [-{MAX_LEVEL}, {MAX_LEVEL}]")));
        }
        Ok(LatticeView {
            m_min,
            m_max,
            window: None,
        })
    }

    pub fn with_window(mut self, window: OpenBox) -> Self {
        self.window = Some(window);
        self
    }

    /// Levels resolved by the atoms of `mu`: from `floor(log2 r_min)` up to
    /// one level above the support extent.
    pub fn resolved(mu: &Measure) -> Result<Self> {
        let r = mu.r_min();
        let m_min = r.log2().floor() as i32;
        let ext = mu.extent().max(r);
        let m_max = (ext.log2().ceil() as i32 + 1).max(m_min);
        LatticeView::new(m_min.max(-MAX_LEVEL), m_max.min(MAX_LEVEL))
    }

    pub fn levels(&self) -> impl Iterator<Item = i32> + Clone {
        self.m_min..=self.m_max
    }

    /// Radii `[2^(m_min - 1), 2^m_max]` matching this level range in the
    /// Wolff integral.
    pub fn radii(&self) -> (f64, f64) {
        (pow2(self.m_min - 1), pow2(self.m_max))
    }
}

fn corners_for_point(p: &[f64], level: i32, out: &mut HashSet<Vec<i64>>) {
    let h = pow2(level);
    let mut ranges = Vec::with_capacity(p.len());
    for &x in p {
        let base = (x / h).floor() as i64;
        let ks: Vec<i64> = (base - 1..=base + 1)
            .filter(|&k| (k - 1) as f64 * h < x && x < (k + 2) as f64 * h)
            .collect();
        if ks.is_empty() {
            return;
        }
        ranges.push(ks);
    }
    let mut cur = vec![0i64; p.len()];
    fn rec(r: &[Vec<i64>], cur: &mut Vec<i64>, at: usize, out: &mut HashSet<Vec<i64>>) {
        if at == r.len() {
            out.insert(cur.clone());
            return;
        }
        for &k in &r[at] {
            cur[at] = k;
            rec(r, cur, at + 1, out);
        }
    }
    rec(&ranges, &mut cur, 0, out);
}

/// All cubes of the view whose triple contains a support atom, each once,
/// sorted by level then corner.
pub fn enumerate_cubes(mu: &Measure, view: &LatticeView) -> Vec<Cube> {
    let support = mu.support();
    let mut out = Vec::new();
    for level in view.levels() {
        let mut set = HashSet::new();
        for &i in &support {
            corners_for_point(mu.point(i), level, &mut set);
        }
        let mut cubes: Vec<Cube> = set
            .into_iter()
            .map(|corner| Cube { level, corner })
            .filter(|q| view.window.as_ref().map_or(true, |w| intersects_box(&q.region(), w)))
            .collect();
        cubes.sort();
        out.extend(cubes);
    }
    out
}

fn intersects_box(a: &OpenBox, b: &OpenBox) -> bool {
    (0..a.dim()).all(|i| a.lo[i] < b.hi[i] && b.lo[i] < a.hi[i])
}

/// A cube with its mass and density.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeStat {
    pub cube: Cube,
    pub mass: f64,
    pub density: f64,
}

/// Masses and densities of every enumerated cube, in enumeration order.
pub fn cube_stats(mu: &Measure, view: &LatticeView) -> Vec<CubeStat> {
    let s = mu.ambient().s;
    enumerate_cubes(mu, view)
        .into_par_iter()
        .map(|cube| {
            let mass = mu.mass_cube(&cube);
            let density = mass / cube.side().powf(s);
            CubeStat { cube, mass, density }
        })
        .collect()
}
