//! Downward domination by bunches.
//!
//! A cube `Q ∈ D_sel` is dominated from below when some family of smaller
//! selected cubes `Q_j` with `3Q_j ⊂ 3Q`, pairwise disjoint `3Q_j` and
//! `D(Q_j) >= 2^(eps [Q:Q_j]) D(Q)` carries weighted energy
//! `Σ D(Q_j)^2 2^(-2 eps [Q:Q_j]) mu(Q_j) >= D(Q)^2 mu(Q)`.
//!
//! Finding such a family is a maximum-weight independent set problem on the
//! disjointness graph of the candidates' triples. In one dimension the
//! triples are intervals and weighted interval scheduling solves it exactly.
//! In higher dimensions small instances are solved by branch and bound and
//! larger ones by greedy selection with exchange moves.

use rayon::prelude::*;

use super::{Certificate, SelectionKind, SelectionResult};
use crate::error::{Error, Result};
use crate::lattice::{ratio, Cube};
use crate::measure::region::OpenBox;

/// Candidate counts up to this size are searched exhaustively in `d >= 2`.
pub const EXACT_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BunchOptions {
    /// Abort with a capacity error above this many candidates.
    pub cap: usize,
    /// Exhaustive search limit for `d >= 2`.
    pub exact_limit: usize,
}

impl Default for BunchOptions {
    fn default() -> Self {
        BunchOptions {
            cap: 20_000,
            exact_limit: EXACT_LIMIT,
        }
    }
}

/// How the answer was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BunchSearch {
    Exact,
    Heuristic,
}

/// A dominating family below `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bunch {
    pub target: Cube,
    pub cubes: Vec<Cube>,
    /// `Σ D(Q_j)^2 2^(-2 eps [Q:Q_j]) mu(Q_j)`.
    pub weight: f64,
    /// `D(Q)^2 mu(Q)`.
    pub target_weight: f64,
}

#[derive(Clone, Debug)]
struct Candidate {
    idx: usize,
    triple: OpenBox,
    weight: f64,
}

fn disjoint(a: &OpenBox, b: &OpenBox) -> bool {
    (0..a.dim()).any(|i| a.hi[i] <= b.lo[i] || b.hi[i] <= a.lo[i])
}

fn inside(inner: &OpenBox, outer: &OpenBox) -> bool {
    (0..inner.dim()).all(|i| outer.lo[i] <= inner.lo[i] && inner.hi[i] <= outer.hi[i])
}

/// Selected cubes satisfying the containment and density conditions for
/// `q`, with their weights, sorted by cube.
pub fn bunch_candidates(upward: &SelectionResult, q: &Cube, eps: f64) -> Result<Vec<(Cube, f64)>> {
    let triples = triples(upward);
    let qi = index_of(upward, q)?;
    Ok(candidates(upward, &triples, qi, eps)
        .into_iter()
        .map(|c| (upward.cubes[c.idx].cube.clone(), c.weight))
        .collect())
}

fn index_of(upward: &SelectionResult, q: &Cube) -> Result<usize> {
    match upward.index.get(q) {
        Some(&i) if upward.selected[i] => Ok(i),
        _ => Err(Error::Domain(format!("cube {q} is not in the upward selection"))),
    }
}

fn triples(upward: &SelectionResult) -> Vec<Option<OpenBox>> {
    upward
        .cubes
        .iter()
        .zip(&upward.selected)
        .map(|(c, &k)| k.then(|| c.cube.dilated(3.0)))
        .collect()
}

fn candidates(upward: &SelectionResult, triples: &[Option<OpenBox>], qi: usize, eps: f64) -> Vec<Candidate> {
    let q = &upward.cubes[qi];
    let outer = triples[qi].as_ref().expect("target is selected");
    let mut out = Vec::new();
    for (j, p) in upward.cubes.iter().enumerate() {
        // cubes are sorted by level, so the lower levels come first
        if p.cube.level() >= q.cube.level() {
            break;
        }
        let Some(t) = &triples[j] else { continue };
        if !inside(t, outer) {
            continue;
        }
        let gap = ratio(&q.cube, &p.cube) as f64;
        if p.density < 2f64.powf(eps * gap) * q.density {
            continue;
        }
        let weight = p.density * p.density * 2f64.powf(-2.0 * eps * gap) * p.mass;
        out.push(Candidate {
            idx: j,
            triple: t.clone(),
            weight,
        });
    }
    out
}

/// Searches a non-trivial dominating bunch for `q ∈ D_sel`.
///
/// Returns `None` when only the trivial bunch `{q}` dominates. A `None`
/// obtained by the heuristic search is reported as such.
pub fn find_bunch(
    upward: &SelectionResult,
    q: &Cube,
    eps: f64,
    opts: &BunchOptions,
) -> Result<(Option<Bunch>, BunchSearch)> {
    let trip = triples(upward);
    let qi = index_of(upward, q)?;
    find_bunch_at(upward, &trip, qi, eps, opts)
}

fn find_bunch_at(
    upward: &SelectionResult,
    triples: &[Option<OpenBox>],
    qi: usize,
    eps: f64,
    opts: &BunchOptions,
) -> Result<(Option<Bunch>, BunchSearch)> {
    let q = &upward.cubes[qi];
    let cands = candidates(upward, triples, qi, eps);
    if cands.len() > opts.cap {
        return Err(Error::Capacity {
            what: format!("bunch search below {}", q.cube),
            count: cands.len(),
            cap: opts.cap,
        });
    }
    let target = q.density * q.density * q.mass;
    let total: f64 = cands.iter().map(|c| c.weight).sum();
    if cands.is_empty() || total < target {
        return Ok((None, BunchSearch::Exact));
    }
    let (chosen, how) = if q.cube.dim() == 1 {
        (interval_schedule(&cands), BunchSearch::Exact)
    } else if cands.len() <= opts.exact_limit {
        (branch_and_bound(&cands), BunchSearch::Exact)
    } else {
        (greedy_swaps(&cands), BunchSearch::Heuristic)
    };
    let weight: f64 = chosen.iter().map(|&i| cands[i].weight).sum();
    if weight >= target && !chosen.is_empty() {
        let mut cubes: Vec<Cube> = chosen.iter().map(|&i| upward.cubes[cands[i].idx].cube.clone()).collect();
        cubes.sort();
        let bunch = Bunch {
            target: q.cube.clone(),
            cubes,
            weight,
            target_weight: target,
        };
        Ok((Some(bunch), how))
    } else {
        Ok((None, how))
    }
}

/// Exact maximum-weight set of pairwise disjoint open intervals.
fn interval_schedule(c: &[Candidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| {
        c[a].triple.hi[0]
            .total_cmp(&c[b].triple.hi[0])
            .then(c[a].triple.lo[0].total_cmp(&c[b].triple.lo[0]))
            .then(a.cmp(&b))
    });
    let ends: Vec<f64> = order.iter().map(|&i| c[i].triple.hi[0]).collect();
    let n = order.len();
    // best[k]: optimum over the first k intervals in end order
    let mut best = vec![0.0f64; n + 1];
    let mut take = vec![false; n + 1];
    let mut prev = vec![0usize; n + 1];
    for k in 1..=n {
        let i = order[k - 1];
        let start = c[i].triple.lo[0];
        let p = ends[..k - 1].partition_point(|&e| e <= start);
        let with = best[p] + c[i].weight;
        prev[k] = p;
        if with > best[k - 1] {
            best[k] = with;
            take[k] = true;
        } else {
            best[k] = best[k - 1];
        }
    }
    let mut out = Vec::new();
    let mut k = n;
    while k > 0 {
        if take[k] {
            out.push(order[k - 1]);
            k = prev[k];
        } else {
            k -= 1;
        }
    }
    out.sort_unstable();
    out
}

/// Exact maximum-weight independent set by branch and bound.
fn branch_and_bound(c: &[Candidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| c[b].weight.total_cmp(&c[a].weight).then(a.cmp(&b)));
    let n = order.len();
    let mut conflict = vec![0u64; n];
    for a in 0..n {
        for b in 0..n {
            if a != b && !disjoint(&c[order[a]].triple, &c[order[b]].triple) {
                conflict[a] |= 1 << b;
            }
        }
    }
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + c[order[k]].weight;
    }
    struct Search<'a> {
        c: &'a [Candidate],
        order: &'a [usize],
        conflict: &'a [u64],
        suffix: &'a [f64],
        best: f64,
        best_set: u64,
    }
    impl Search<'_> {
        fn go(&mut self, k: usize, set: u64, banned: u64, w: f64) {
            if w > self.best {
                self.best = w;
                self.best_set = set;
            }
            if k == self.order.len() || w + self.suffix[k] <= self.best {
                return;
            }
            if banned & (1 << k) == 0 {
                let wk = self.c[self.order[k]].weight;
                self.go(k + 1, set | (1 << k), banned | self.conflict[k], w + wk);
            }
            self.go(k + 1, set, banned, w);
        }
    }
    let mut s = Search {
        c,
        order: &order,
        conflict: &conflict,
        suffix: &suffix,
        best: 0.0,
        best_set: 0,
    };
    s.go(0, 0, 0, 0.0);
    let mut out: Vec<usize> = (0..n).filter(|&k| s.best_set & (1 << k) != 0).map(|k| order[k]).collect();
    out.sort_unstable();
    out
}

/// Greedy by descending weight, then two exchange moves until neither
/// gains weight: swap one candidate in for the chosen ones it overlaps, or
/// drop one chosen candidate and refill greedily.
fn greedy_swaps(c: &[Candidate]) -> Vec<usize> {
    let n = c.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| c[b].weight.total_cmp(&c[a].weight).then(a.cmp(&b)));
    let fits = |chosen: &[bool], k: usize| (0..n).all(|j| !chosen[j] || disjoint(&c[k].triple, &c[j].triple));
    let refill = |chosen: &mut Vec<bool>| {
        for &k in &order {
            if !chosen[k] && fits(chosen, k) {
                chosen[k] = true;
            }
        }
    };
    let total = |chosen: &[bool]| (0..n).filter(|&i| chosen[i]).map(|i| c[i].weight).sum::<f64>();
    let mut chosen = vec![false; n];
    refill(&mut chosen);
    for _round in 0..n {
        let mut improved = false;
        for &i in &order {
            if chosen[i] {
                continue;
            }
            let clash: Vec<usize> = (0..n)
                .filter(|&j| chosen[j] && !disjoint(&c[i].triple, &c[j].triple))
                .collect();
            let lost: f64 = clash.iter().map(|&j| c[j].weight).sum();
            if c[i].weight > lost {
                for j in clash {
                    chosen[j] = false;
                }
                chosen[i] = true;
                refill(&mut chosen);
                improved = true;
            }
        }
        for &i in &order {
            if !chosen[i] {
                continue;
            }
            let mut trial = chosen.clone();
            trial[i] = false;
            for &k in &order {
                if k != i && !trial[k] && fits(&trial, k) {
                    trial[k] = true;
                }
            }
            if total(&trial) > total(&chosen) {
                chosen = trial;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    (0..n).filter(|&i| chosen[i]).collect()
}

/// Re-checks the five bunch conditions against an upward selection.
pub fn verify_bunch(upward: &SelectionResult, bunch: &Bunch, eps: f64) -> std::result::Result<(), String> {
    let q = upward
        .stat(&bunch.target)
        .ok_or_else(|| format!("target {} not enumerated", bunch.target))?;
    let outer = q.cube.dilated(3.0);
    let mut weight = 0.0;
    for (i, c) in bunch.cubes.iter().enumerate() {
        if !upward.is_selected(c) {
            return Err(format!("{c} is not in D_sel"));
        }
        let p = upward.stat(c).expect("selected cubes are enumerated");
        let gap = ratio(&q.cube, c) as f64;
        if p.density < 2f64.powf(eps * gap) * q.density {
            return Err(format!("{c} violates the density condition"));
        }
        if !inside(&c.dilated(3.0), &outer) {
            return Err(format!("3{c} is not inside 3{}", q.cube));
        }
        for other in &bunch.cubes[i + 1..] {
            if !c.triples_disjoint(other) {
                return Err(format!("3{c} and 3{other} overlap"));
            }
        }
        weight += p.density * p.density * 2f64.powf(-2.0 * eps * gap) * p.mass;
    }
    let target = q.density * q.density * q.mass;
    if weight < target * (1.0 - 1e-12) {
        return Err(format!("bunch weight {weight} below target {target}"));
    }
    Ok(())
}

/// Keeps the cubes of `D_sel` that admit no non-trivial dominating bunch.
pub fn select_downward(upward: &SelectionResult, eps: f64, opts: &BunchOptions) -> Result<SelectionResult> {
    if upward.kind != SelectionKind::Upward {
        return Err(Error::Domain("downward selection needs an upward selection as input".into()));
    }
    let trip = triples(upward);
    let members: Vec<usize> = (0..upward.cubes.len()).filter(|&i| upward.selected[i]).collect();
    let outcomes: Vec<Result<(Option<Bunch>, BunchSearch)>> = members
        .par_iter()
        .map(|&qi| find_bunch_at(upward, &trip, qi, eps, opts))
        .collect();
    let universe = members.iter().map(|&i| upward.cubes[i].clone()).collect();
    let mut res = SelectionResult::new(SelectionKind::Downward, universe);
    for (k, out) in outcomes.into_iter().enumerate() {
        match out? {
            (Some(b), _) => {
                res.selected[k] = false;
                res.certificates[k] = Some(Certificate::Below(b));
            }
            (None, BunchSearch::Heuristic) => res.heuristic.push(k),
            (None, BunchSearch::Exact) => {}
        }
    }
    if !res.heuristic.is_empty() {
        log::warn!(
            "downward selection: {} cubes kept on a heuristic (non-exhaustive) bunch search",
            res.heuristic.len()
        );
    }
    res.finish();
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(lo: f64, hi: f64, w: f64) -> Candidate {
        Candidate {
            idx: 0,
            triple: OpenBox::new(vec![lo], vec![hi]),
            weight: w,
        }
    }

    fn brute(c: &[Candidate]) -> f64 {
        let n = c.len();
        let mut best: f64 = 0.0;
        for mask in 0u32..(1 << n) {
            let set: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let ok = set
                .iter()
                .all(|&a| set.iter().all(|&b| a == b || disjoint(&c[a].triple, &c[b].triple)));
            if ok {
                best = best.max(set.iter().map(|&i| c[i].weight).sum());
            }
        }
        best
    }

    #[test]
    fn interval_dp_matches_brute_force() {
        let c = vec![
            cand(0.0, 3.0, 2.0),
            cand(3.0, 6.0, 2.0),
            cand(1.0, 5.0, 3.5),
            cand(5.0, 8.0, 1.0),
            cand(-2.0, 1.0, 0.5),
            cand(2.0, 4.0, 1.0),
        ];
        let w = |s: &[usize]| s.iter().map(|&i| c[i].weight).sum::<f64>();
        assert_eq!(w(&interval_schedule(&c)), brute(&c));
        assert_eq!(w(&branch_and_bound(&c)), brute(&c));
    }

    #[test]
    fn touching_open_intervals_are_disjoint() {
        let c = vec![cand(0.0, 1.0, 1.0), cand(1.0, 2.0, 1.0)];
        assert_eq!(interval_schedule(&c), vec![0, 1]);
    }

    #[test]
    fn greedy_swaps_improves_on_greedy() {
        // the heaviest candidate blocks two lighter ones that beat it together
        let c = vec![cand(0.0, 4.0, 3.0), cand(0.0, 2.0, 2.0), cand(2.0, 4.0, 2.0)];
        let got: f64 = greedy_swaps(&c).iter().map(|&i| c[i].weight).sum();
        assert_eq!(got, 4.0);
    }
}
