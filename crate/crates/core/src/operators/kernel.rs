//! Odd Calderón–Zygmund kernels.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Odd Lipschitz bump `φ(x) = x_1 g(|x|) / L` supported in the closed ball
/// `B(0, M)`.
///
/// `g` equals 1 on `[0, aM]` and falls to 0 on `[aM, M]` along the cubic
/// smoothstep, so `φ` is C¹. `L` is the exact Lipschitz constant of
/// `x_1 g(|x|)`, which makes `‖φ‖_Lip = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    radius: f64,
    plateau: f64,
    lip: f64,
}

impl Bump {
    /// Support radius `radius`, plateau fraction `plateau ∈ (0, 1)`.
    pub fn new(radius: f64, plateau: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("radius", format!("bump radius must be positive, got {radius}")));
        }
        if !(plateau > 0.0 && plateau < 1.0) {
            return Err(Error::param("plateau", format!("must lie in (0, 1), got {plateau}")));
        }
        Ok(Bump {
            radius,
            plateau,
            lip: lipschitz_constant(plateau),
        })
    }

    /// The default shape used throughout: plateau fraction 1/2.
    pub fn standard(radius: f64) -> Result<Self> {
        Bump::new(radius, 0.5)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn plateau(&self) -> f64 {
        self.plateau
    }

    /// Radial cutoff `g(r)`.
    #[inline]
    pub fn profile(&self, r: f64) -> f64 {
        let inner = self.plateau * self.radius;
        if r <= inner {
            1.0
        } else if r >= self.radius {
            0.0
        } else {
            let t = (r - inner) / (self.radius - inner);
            1.0 - t * t * (3.0 - 2.0 * t)
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 >= self.radius * self.radius {
            return 0.0;
        }
        x[0] * self.profile(r2.sqrt()) / self.lip
    }

    /// `φ(x / scale)` without allocating.
    #[inline]
    pub fn eval_scaled(&self, x: &[f64], scale: f64) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum::<f64>() / (scale * scale);
        if r2 >= self.radius * self.radius {
            return 0.0;
        }
        (x[0] / scale) * self.profile(r2.sqrt()) / self.lip
    }
}

/// `max(1, max_t |q(t)|)` with `q(t) = d/dr (r g(r))` in the transition
/// variable: `q(t) = 1 - 6αt + (6α - 9)t² + 8t³`, `α = a / (1 - a)`.
///
/// The gradient of `x_1 g(|x|)` has squared norm affine in `cos²θ`, so its
/// maximum over directions is `max(g², (g + r g')²)`.
fn lipschitz_constant(a: f64) -> f64 {
    let alpha = a / (1.0 - a);
    let q = |t: f64| 1.0 - 6.0 * alpha * t + (6.0 * alpha - 9.0) * t * t + 8.0 * t * t * t;
    let mut best = q(0.0).abs().max(q(1.0).abs()).max(1.0);
    // q'(t) = 24 t² + 2(6α - 9) t - 6α
    let (qa, qb, qc) = (24.0, 2.0 * (6.0 * alpha - 9.0), -6.0 * alpha);
    let disc = qb * qb - 4.0 * qa * qc;
    if disc >= 0.0 {
        for t in [(-qb - disc.sqrt()) / (2.0 * qa), (-qb + disc.sqrt()) / (2.0 * qa)] {
            if (0.0..=1.0).contains(&t) {
                best = best.max(q(t).abs());
            }
        }
    }
    best
}

/// Random-sign composite `K(x) = Σ_{|n| <= n0} ε_n 3^(-s) 2^(-ns) φ(x / 2^n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomComposite {
    pub bump: Bump,
    pub s: f64,
    pub n0: u32,
    /// `signs[k]` is `ε_n` for `n = k - n0`.
    pub signs: Vec<i8>,
    pub certificate: Option<CzCertificate>,
}

impl RandomComposite {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n0 = self.n0 as i32;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let m = self.bump.radius();
        let c = 3f64.powf(-self.s);
        let mut acc = 0.0;
        for (k, &e) in self.signs.iter().enumerate() {
            let n = k as i32 - n0;
            let scale = 2f64.powi(n);
            if r2 >= (m * scale) * (m * scale) {
                continue;
            }
            acc += e as f64 * c * scale.powf(-self.s) * self.bump.eval_scaled(x, scale);
        }
        acc
    }

    pub fn negated(&self) -> Self {
        let mut k = self.clone();
        k.signs.iter_mut().for_each(|e| *e = -*e);
        k.certificate = None;
        k
    }
}

/// Numerical size and smoothness constants of a kernel over a radius range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CzCertificate {
    /// `sup |K(x)| |x|^s`.
    pub size: f64,
    /// `sup |∇K(x)| |x|^(s+1)`, by central differences.
    pub gradient: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    pub samples: usize,
}

/// Draws the signs from a ChaCha8 stream seeded by `seed` and certifies the
/// kernel on 10^3 log-spaced radii covering `[2^(-n0-2), 2^(n0+2) M]`.
pub fn random_kernel(bump: Bump, s: f64, n0: u32, seed: u64) -> RandomComposite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signs = (0..2 * n0 + 1).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
    let mut k = RandomComposite {
        bump,
        s,
        n0,
        signs,
        certificate: None,
    };
    let r_lo = 2f64.powi(-(n0 as i32) - 2);
    let r_hi = 2f64.powi(n0 as i32 + 2) * bump.radius();
    k.certificate = Some(certify(&Kernel::Random(k.clone()), 1000, r_lo, r_hi));
    k
}

/// Samples `|K(x)| |x|^s` and `|∇K(x)| |x|^(s+1)` at `samples` log-spaced
/// radii in the plane, along `e_1` and at 45° and 90° from it.
pub fn certify(kernel: &Kernel, samples: usize, r_lo: f64, r_hi: f64) -> CzCertificate {
    let s = kernel.s();
    let mut size: f64 = 0.0;
    let mut grad: f64 = 0.0;
    let dirs = [(1.0, 0.0), (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2), (0.0, 1.0)];
    let mut out = vec![0.0; 2];
    let mut lo = vec![0.0; 2];
    let mut hi = vec![0.0; 2];
    for i in 0..samples {
        let t = if samples > 1 { i as f64 / (samples - 1) as f64 } else { 0.0 };
        let r = r_lo * (r_hi / r_lo).powf(t);
        for &(cx, cy) in &dirs {
            let x = [r * cx, r * cy];
            kernel.eval_into(&x, &mut out);
            let v = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            size = size.max(v * r.powf(s));
            let h = 1e-5 * r;
            let mut g2 = 0.0;
            for axis in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[axis] += h;
                xm[axis] -= h;
                kernel.eval_into(&xp, &mut hi);
                kernel.eval_into(&xm, &mut lo);
                for c in 0..hi.len().min(kernel.components(2)) {
                    let d = (hi[c] - lo[c]) / (2.0 * h);
                    g2 += d * d;
                }
            }
            grad = grad.max(g2.sqrt() * r.powf(s + 1.0));
        }
    }
    CzCertificate {
        size,
        gradient: grad,
        r_lo,
        r_hi,
        samples,
    }
}

/// An odd kernel; the Riesz kernel is vector valued.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    /// `x / |x|^(s+1)`, one component per coordinate.
    Riesz { s: f64 },
    /// The bump itself, `K = φ`.
    Smooth { s: f64, bump: Bump },
    Random(RandomComposite),
}

impl Kernel {
    pub fn s(&self) -> f64 {
        match self {
            Kernel::Riesz { s } | Kernel::Smooth { s, .. } => *s,
            Kernel::Random(k) => k.s,
        }
    }

    /// Number of scalar components in dimension `d`.
    pub fn components(&self, d: usize) -> usize {
        match self {
            Kernel::Riesz { .. } => d,
            _ => 1,
        }
    }

    /// Writes `K(x)` into `out[..components]`. `K(0) = 0`.
    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Kernel::Riesz { s } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                if r2 == 0.0 {
                    out[..x.len()].iter_mut().for_each(|o| *o = 0.0);
                    return;
                }
                let scale = r2.sqrt().powf(-(s + 1.0));
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v * scale;
                }
            }
            Kernel::Smooth { bump, .. } => out[0] = bump.eval(x),
            Kernel::Random(k) => out[0] = k.eval(x),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Kernel::Riesz { .. } => "riesz".into(),
            Kernel::Smooth { bump, .. } => format!("smooth:{}", bump.radius()),
            Kernel::Random(k) => format!("random:{},{}", k.bump.radius(), k.n0),
        }
    }
}

/// Textual kernel choice as accepted on the command line:
/// `riesz`, `smooth:<M>` or `random:<M>,<n0>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    Riesz,
    Smooth { radius: f64 },
    Random { radius: f64, n0: u32 },
}

impl KernelSpec {
    pub fn build(&self, s: f64, seed: u64) -> Result<Kernel> {
        Ok(match *self {
            KernelSpec::Riesz => Kernel::Riesz { s },
            KernelSpec::Smooth { radius } => Kernel::Smooth {
                s,
                bump: Bump::standard(radius)?,
            },
            KernelSpec::Random { radius, n0 } => Kernel::Random(random_kernel(Bump::standard(radius)?, s, n0, seed)),
        })
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param("kernel", format!("expected riesz, smooth:<M> or random:<M>,<n0>, got {s:?}"));
        let s = s.trim();
        if s == "riesz" {
            return Ok(KernelSpec::Riesz);
        }
        if let Some(m) = s.strip_prefix("smooth:") {
            return Ok(KernelSpec::Smooth {
                radius: m.trim().parse().map_err(|_| bad())?,
            });
        }
        if let Some(rest) = s.strip_prefix("random:") {
            let (m, n0) = rest.split_once(',').ok_or_else(bad)?;
            return Ok(KernelSpec::Random {
                radius: m.trim().parse().map_err(|_| bad())?,
                n0: n0.trim().parse().map_err(|_| bad())?,
            });
        }
        Err(bad())
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Riesz => f.write_str("riesz"),
            KernelSpec::Smooth { radius } => write!(f, "smooth:{radius}"),
            KernelSpec::Random { radius, n0 } => write!(f, "random:{radius},{n0}"),
        }
    }
}

/// A finite family of odd Lipschitz bumps `(φ_j)`, ordered by radius then
/// plateau fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFamily {
    pub bumps: Vec<Bump>,
}

impl TestFamily {
    pub fn new(radii: &[f64], plateaus: &[f64]) -> Result<Self> {
        let mut bumps = Vec::new();
        for &r in radii {
            for &a in plateaus {
                bumps.push(Bump::new(r, a)?);
            }
        }
        if bumps.is_empty() {
            return Err(Error::param("family", "needs at least one radius and one plateau"));
        }
        Ok(TestFamily { bumps })
    }

    /// `φ_j` supported in `B(0, j)` for `j = 1..=n`, plateau fractions 1/4 and 3/4.
    pub fn standard(n: usize) -> Result<Self> {
        let radii: Vec<f64> = (1..=n).map(|j| j as f64).collect();
        TestFamily::new(&radii, &[0.25, 0.75])
    }

    pub fn len(&self) -> usize {
        self.bumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bumps.is_empty()
    }
}

impl FromStr for TestFamily {
    type Err = Error;

    /// `r1,r2,...` or `r1,r2,.../a1,a2,...` (plateaus default to 1/2).
    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| -> Result<Vec<f64>> {
            t.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::param("family", format!("not a number: {x:?}")))
                })
                .collect()
        };
        let (r, a) = match s.split_once('/') {
            Some((r, a)) => (parse(r)?, parse(a)?),
            None => (parse(s)?, vec![0.5]),
        };
        TestFamily::new(&r, &a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_odd_and_supported() {
        let b = Bump::new(2.0, 0.3).unwrap();
        for x in [[0.3, -0.4], [1.1, 0.2], [-1.9, 0.0]] {
            let mx = [-x[0], -x[1]];
            assert_eq!(b.eval(&mx), -b.eval(&x));
        }
        assert_eq!(b.eval(&[2.0, 0.0]), 0.0);
        assert_eq!(b.eval(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn bump_lipschitz_on_grid() {
        for a in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let b = Bump::new(1.5, a).unwrap();
            let h = 1e-4;
            let mut worst: f64 = 0.0;
            for i in 0..3000 {
                let x = -1.6 + 3.2 * i as f64 / 3000.0;
                worst = worst.max((b.eval(&[x + h]) - b.eval(&[x])).abs() / h);
            }
            assert!(worst <= 1.0 + 1e-6, "a = {a}: slope {worst}");
            assert!(worst >= 0.99, "a = {a}: constant not sharp, slope {worst}");
        }
    }

    #[test]
    fn riesz_one_dim() {
        let k = Kernel::Riesz { s: 0.5 };
        let mut out = [0.0];
        k.eval_into(&[-4.0], &mut out);
        assert_eq!(out[0], -0.5);
    }

    #[test]
    fn random_kernel_single_term() {
        let b = Bump::standard(1.0).unwrap();
        let mut k = random_kernel(b, 0.5, 0, 7);
        k.signs = vec![1];
        let x = [0.3];
        assert_eq!(k.eval(&x), 3f64.powf(-0.5) * b.eval(&x));
        assert_eq!(k.negated().eval(&x), -k.eval(&x));
    }

    #[test]
    fn random_kernel_is_seeded() {
        let b = Bump::standard(1.0).unwrap();
        assert_eq!(random_kernel(b, 0.5, 4, 11).signs, random_kernel(b, 0.5, 4, 11).signs);
        assert_ne!(random_kernel(b, 0.5, 8, 11).signs, random_kernel(b, 0.5, 8, 12).signs);
    }

    #[test]
    fn riesz_certificate_is_one() {
        let c = certify(&Kernel::Riesz { s: 0.7 }, 50, 1e-3, 1e3);
        assert!((c.size - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_spec_parse() {
        assert_eq!("riesz".parse::<KernelSpec>().unwrap(), KernelSpec::Riesz);
        assert_eq!("smooth:2".parse::<KernelSpec>().unwrap(), KernelSpec::Smooth { radius: 2.0 });
        assert_eq!(
            "random:1.5,8".parse::<KernelSpec>().unwrap(),
            KernelSpec::Random { radius: 1.5, n0: 8 }
        );
        assert!("random:1".parse::<KernelSpec>().is_err());
        let fam: TestFamily = "1,2/0.25,0.75".parse().unwrap();
        assert_eq!(fam.len(), 4);
    }
}
