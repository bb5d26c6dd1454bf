//! Truncated singular integrals on atomic measures, operator norms by power
//! iteration, and the multiscale square function.

mod kernel;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::region::{dist2, OpenBall};
use crate::measure::Measure;
use crate::stats::pairwise_sum;

pub use kernel::{certify, random_kernel, Bump, CzCertificate, Kernel, KernelSpec, RandomComposite, TestFamily};

/// Atom counts up to this size use a stored dense matrix.
pub const DENSE_LIMIT: usize = 2048;

/// Default iteration budget of the power method.
pub const DEFAULT_ITERS: usize = 200;

/// Stopping threshold on the Rayleigh residual.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// `T_ε(fμ)(x_i) = Σ_{j ≠ i, |x_i - x_j| >= ε} K(x_i - x_j) f_j w_j`.
///
/// The result holds `components` values per atom, atom-major.
pub fn truncated_apply(kernel: &Kernel, mu: &Measure, f: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps >= 0.0) {
        return Err(Error::param("epsilon", "truncation radius must be non-negative"));
    }
    if f.len() != mu.len() {
        return Err(Error::param("f", format!("{} values for {} atoms", f.len(), mu.len())));
    }
    let op = Operator::new(kernel, mu, eps);
    Ok(op.apply(f))
}

/// The matrix-valued operator `f ↦ T_ε(fμ)` restricted to the atoms.
pub struct Operator<'a> {
    kernel: &'a Kernel,
    mu: &'a Measure,
    eps2: f64,
    comps: usize,
    /// Per component, row-major `n × n` kernel matrices.
    dense: Option<Vec<Vec<f64>>>,
}

impl<'a> Operator<'a> {
    pub fn new(kernel: &'a Kernel, mu: &'a Measure, eps: f64) -> Self {
        let comps = kernel.components(mu.dim());
        let mut op = Operator {
            kernel,
            mu,
            eps2: eps * eps,
            comps,
            dense: None,
        };
        if mu.len() <= DENSE_LIMIT {
            op.dense = Some(op.matrices());
        }
        op
    }

    pub fn components(&self) -> usize {
        self.comps
    }

    /// Kernel matrices `A_c[i][j] = K_c(x_i - x_j)` for admissible pairs.
    pub fn matrices(&self) -> Vec<Vec<f64>> {
        let n = self.mu.len();
        let c = self.comps;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; c * n];
                let mut diff = vec![0.0; self.mu.dim()];
                let mut out = vec![0.0; c];
                for j in 0..n {
                    if self.pair(i, j, &mut diff, &mut out) {
                        for k in 0..c {
                            row[k * n + j] = out[k];
                        }
                    }
                }
                row
            })
            .collect();
        let mut mats = vec![vec![0.0; n * n]; c];
        for (i, row) in rows.into_iter().enumerate() {
            for k in 0..c {
                mats[k][i * n..(i + 1) * n].copy_from_slice(&row[k * n..(k + 1) * n]);
            }
        }
        mats
    }

    #[inline]
    fn pair(&self, i: usize, j: usize, diff: &mut [f64], out: &mut [f64]) -> bool {
        if i == j {
            return false;
        }
        let (x, y) = (self.mu.point(i), self.mu.point(j));
        if dist2(x, y) < self.eps2 {
            return false;
        }
        for (d, (a, b)) in diff.iter_mut().zip(x.iter().zip(y)) {
            *d = a - b;
        }
        self.kernel.eval_into(diff, out);
        true
    }

    /// `T f`, `components` values per atom (atom-major).
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.mu.len();
        let c = self.comps;
        let wf: Vec<f64> = f.iter().zip(self.mu.weights()).map(|(a, w)| a * w).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; c];
                match &self.dense {
                    Some(mats) => {
                        for k in 0..c {
                            let row = &mats[k][i * n..(i + 1) * n];
                            acc[k] = row.iter().zip(&wf).map(|(a, b)| a * b).sum();
                        }
                    }
                    None => {
                        let mut diff = vec![0.0; self.mu.dim()];
                        let mut out = vec![0.0; c];
                        for j in 0..n {
                            if wf[j] != 0.0 && self.pair(i, j, &mut diff, &mut out) {
                                for k in 0..c {
                                    acc[k] += out[k] * wf[j];
                                }
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        rows.concat()
    }

    /// Adjoint in `L^2(μ)`: `(T* g)_j = Σ_c Σ_i A_c[i][j] w_i g_{i,c}`.
    pub fn adjoint(&self, g: &[f64]) -> Vec<f64> {
        let n = self.mu.len();
        let c = self.comps;
        let w = self.mu.weights();
        if let Some(mats) = &self.dense {
            // row sweeps keep the matrix access contiguous
            let mut out = vec![0.0; n];
            for (k, m) in mats.iter().enumerate() {
                for i in 0..n {
                    let u = w[i] * g[i * c + k];
                    if u != 0.0 {
                        for (o, a) in out.iter_mut().zip(&m[i * n..(i + 1) * n]) {
                            *o += a * u;
                        }
                    }
                }
            }
            return out;
        }
        (0..n)
            .into_par_iter()
            .map(|j| {
                let mut acc = 0.0;
                let mut diff = vec![0.0; self.mu.dim()];
                let mut out = vec![0.0; c];
                for i in 0..n {
                    if w[i] != 0.0 && self.pair(i, j, &mut diff, &mut out) {
                        for k in 0..c {
                            acc += out[k] * w[i] * g[i * c + k];
                        }
                    }
                }
                acc
            })
            .collect()
    }

    /// `‖g‖²_{L²(μ)}` for a vector-valued `g` laid out atom-major.
    pub fn norm2_vec(&self, g: &[f64]) -> f64 {
        let c = self.comps;
        let terms: Vec<f64> = self
            .mu
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * g[i * c..(i + 1) * c].iter().map(|v| v * v).sum::<f64>())
            .collect();
        pairwise_sum(&terms)
    }
}

/// `‖f‖²_{L²(μ)}`.
pub fn norm2(mu: &Measure, f: &[f64]) -> f64 {
    let terms: Vec<f64> = f.iter().zip(mu.weights()).map(|(v, w)| v * v * w).collect();
    pairwise_sum(&terms)
}

/// `⟨f, g⟩_μ`.
pub fn inner(mu: &Measure, f: &[f64], g: &[f64]) -> f64 {
    let terms: Vec<f64> = f.iter().zip(g).zip(mu.weights()).map(|((a, b), w)| a * b * w).collect();
    pairwise_sum(&terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormEstimate {
    pub norm: f64,
    /// `‖T*T f - ρ f‖_μ / (ρ ‖f‖_μ)` at the last iterate.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value of `T_ε` on `L²(μ)` by power iteration on `T*T`
/// from a seeded random start.
pub fn operator_norm(kernel: &Kernel, mu: &Measure, eps: f64, iters: usize, seed: u64) -> Result<NormEstimate> {
    if iters == 0 {
        return Err(Error::param("iters", "need at least one iteration"));
    }
    let op = Operator::new(kernel, mu, eps);
    Ok(power_iteration(&op, mu, iters, seed))
}

pub fn power_iteration(op: &Operator<'_>, mu: &Measure, iters: usize, seed: u64) -> NormEstimate {
    let zero = NormEstimate {
        norm: 0.0,
        residual: 0.0,
        iterations: 0,
        converged: true,
    };
    if mu.is_empty() || mu.total_mass() == 0.0 {
        return zero;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f: Vec<f64> = (0..mu.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut est = zero;
    for it in 1..=iters {
        let nf = norm2(mu, &f).sqrt();
        if nf == 0.0 {
            return zero;
        }
        f.iter_mut().for_each(|v| *v /= nf);
        let tf = op.apply(&f);
        let rho = op.norm2_vec(&tf);
        let g = op.adjoint(&tf);
        if rho == 0.0 {
            return NormEstimate { iterations: it, ..zero };
        }
        let r: Vec<f64> = g.iter().zip(&f).map(|(a, b)| a - rho * b).collect();
        let residual = norm2(mu, &r).sqrt() / rho;
        est = NormEstimate {
            norm: rho.sqrt(),
            residual,
            iterations: it,
            converged: residual < RESIDUAL_TOL,
        };
        if est.converged {
            break;
        }
        f = g;
    }
    est
}

/// `sup_ε ‖T_ε‖` over `ε ∈ {r_min 2^k}` up to the support extent; returns
/// the best estimate and its `ε`.
pub fn sup_norm(kernel: &Kernel, mu: &Measure, iters: usize, seed: u64) -> Result<(NormEstimate, f64)> {
    let r_min = mu.r_min();
    let top = mu.extent().max(r_min);
    let mut best: Option<(NormEstimate, f64)> = None;
    let mut eps = r_min;
    while eps <= top {
        let est = operator_norm(kernel, mu, eps, iters, seed)?;
        if best.as_ref().map_or(true, |(b, _)| est.norm > b.norm) {
            best = Some((est, eps));
        }
        eps *= 2.0;
    }
    Ok(best.expect("at least one truncation radius"))
}

/// `T_{φ,ℓ}(fμ)(x_i) = Σ_j ℓ^(-s) φ(3 (x_i - x_j) / ℓ) f_j w_j` at every atom.
pub fn smooth_apply(bump: &Bump, mu: &Measure, f: &[f64], ell: f64) -> Vec<f64> {
    let s = mu.ambient().s;
    let scale = ell / 3.0;
    let reach = bump.radius() * scale;
    let c = ell.powf(-s);
    let d = mu.dim();
    (0..mu.len())
        .into_par_iter()
        .map(|i| {
            let x = mu.point(i);
            let mut diff = vec![0.0; d];
            let mut terms = Vec::new();
            for j in mu.indices_in(&OpenBall::new(x, reach)) {
                if f[j] == 0.0 || j == i {
                    continue;
                }
                for (t, (a, b)) in diff.iter_mut().zip(x.iter().zip(mu.point(j))) {
                    *t = a - b;
                }
                terms.push(c * bump.eval_scaled(&diff, scale) * f[j] * mu.weight(j));
            }
            pairwise_sum(&terms)
        })
        .collect()
}

/// `Σ_{j != i} φ(R (x_i - x_j) / scale) w_j` at the given atoms, where `R`
/// swaps coordinates `0` and `axis` so that `φ` is odd along `axis`.
pub fn bump_field(bump: &Bump, mu: &Measure, atoms: &[usize], scale: f64, axis: usize) -> Vec<f64> {
    let reach = bump.radius() * scale;
    atoms
        .par_iter()
        .map(|&i| {
            let x = mu.point(i);
            let mut diff = vec![0.0; x.len()];
            let mut terms = Vec::new();
            for j in mu.indices_in(&OpenBall::new(x, reach)) {
                if j == i {
                    continue;
                }
                for (t, (a, b)) in diff.iter_mut().zip(x.iter().zip(mu.point(j))) {
                    *t = a - b;
                }
                diff.swap(0, axis);
                terms.push(bump.eval_scaled(&diff, scale) * mu.weight(j));
            }
            pairwise_sum(&terms)
        })
        .collect()
}

/// `Σ_{n ∈ levels} ‖T_{φ, 3·2^n}(fμ)‖²_{L²(μ)}`.
pub fn square_function(bump: &Bump, mu: &Measure, f: &[f64], levels: std::ops::RangeInclusive<i32>) -> Result<f64> {
    if f.len() != mu.len() {
        return Err(Error::param("f", format!("{} values for {} atoms", f.len(), mu.len())));
    }
    let terms: Vec<f64> = levels
        .map(|n| {
            let t = smooth_apply(bump, mu, f, 3.0 * 2f64.powi(n));
            norm2(mu, &t)
        })
        .collect();
    Ok(pairwise_sum(&terms))
}
