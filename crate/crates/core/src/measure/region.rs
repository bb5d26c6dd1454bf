//! Query regions for the spatial index.
//!
//! Every region provides a point predicate and a conservative classification
//! of axis-aligned bounding boxes. The classification must agree with the
//! predicate exactly: when a box is reported `Inside`, every point of the box
//! satisfies `contains`, and when it is reported `Outside`, none does. For
//! balls this relies on IEEE rounding being monotone, so the per-coordinate
//! bounds are computed with the same operation order as the point test.

use serde::{Deserialize, Serialize};

/// How a bounding box relates to a region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Overlap {
    Inside,
    Outside,
    Partial,
}

pub trait Region {
    fn contains(&self, p: &[f64]) -> bool;
    fn classify(&self, lo: &[f64], hi: &[f64]) -> Overlap;
}

/// Squared Euclidean distance, summed in coordinate order.
#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        acc += t * t;
    }
    acc
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

/// Open Euclidean ball `{p : |p - center| < r}`.
#[derive(Clone, Debug)]
pub struct OpenBall<'a> {
    center: &'a [f64],
    r2: f64,
}

impl<'a> OpenBall<'a> {
    pub fn new(center: &'a [f64], r: f64) -> Self {
        let r = r.max(0.0);
        OpenBall { center, r2: r * r }
    }
}

impl Region for OpenBall<'_> {
    #[inline]
    fn contains(&self, p: &[f64]) -> bool {
        dist2(p, self.center) < self.r2
    }

    fn classify(&self, lo: &[f64], hi: &[f64]) -> Overlap {
        let mut far = 0.0;
        let mut near = 0.0;
        for ((&l, &h), &c) in lo.iter().zip(hi).zip(self.center) {
            let a = l - c;
            let b = h - c;
            let (a2, b2) = (a * a, b * b);
            far += if a2 > b2 { a2 } else { b2 };
            near += if c < l {
                a2
            } else if c > h {
                b2
            } else {
                0.0
            };
        }
        if far < self.r2 {
            Overlap::Inside
        } else if near >= self.r2 {
            Overlap::Outside
        } else {
            Overlap::Partial
        }
    }
}

/// Open axis-aligned box `lo < p < hi` (coordinatewise). Bounds may be infinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl OpenBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        OpenBox { lo, hi }
    }

    /// The whole space `R^d`.
    pub fn everything(d: usize) -> Self {
        OpenBox {
            lo: vec![f64::NEG_INFINITY; d],
            hi: vec![f64::INFINITY; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Distance from `p` to the complement of the box; zero when `p` is outside.
    pub fn depth(&self, p: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for ((&l, &h), &x) in self.lo.iter().zip(&self.hi).zip(p) {
            best = best.min(x - l).min(h - x);
        }
        best.max(0.0)
    }
}

impl Region for OpenBox {
    #[inline]
    fn contains(&self, p: &[f64]) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(p)
            .all(|((&l, &h), &x)| l < x && x < h)
    }

    fn classify(&self, lo: &[f64], hi: &[f64]) -> Overlap {
        let mut inside = true;
        for i in 0..lo.len() {
            if hi[i] <= self.lo[i] || lo[i] >= self.hi[i] {
                return Overlap::Outside;
            }
            if !(self.lo[i] < lo[i] && hi[i] < self.hi[i]) {
                inside = false;
            }
        }
        if inside {
            Overlap::Inside
        } else {
            Overlap::Partial
        }
    }
}

/// Closed axis-aligned box `lo <= p <= hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ClosedBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        ClosedBox { lo, hi }
    }

    /// The cube `[-h, h]^d`.
    pub fn centered(d: usize, h: f64) -> Self {
        ClosedBox {
            lo: vec![-h; d],
            hi: vec![h; d],
        }
    }

    /// Shrinks every face inward by `by`; the result may be empty.
    pub fn shrink(&self, by: f64) -> Self {
        ClosedBox {
            lo: self.lo.iter().map(|x| x + by).collect(),
            hi: self.hi.iter().map(|x| x - by).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| l > h)
    }
}

impl Region for ClosedBox {
    #[inline]
    fn contains(&self, p: &[f64]) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(p)
            .all(|((&l, &h), &x)| l <= x && x <= h)
    }

    fn classify(&self, lo: &[f64], hi: &[f64]) -> Overlap {
        let mut inside = true;
        for i in 0..lo.len() {
            if hi[i] < self.lo[i] || lo[i] > self.hi[i] {
                return Overlap::Outside;
            }
            if !(self.lo[i] <= lo[i] && hi[i] <= self.hi[i]) {
                inside = false;
            }
        }
        if inside {
            Overlap::Inside
        } else {
            Overlap::Partial
        }
    }
}
