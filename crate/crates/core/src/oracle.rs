//! Brute-force ground truth for small instances.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{gradient, kth_largest_magnitude, objective, Problem};
use crate::types::{scatter, BlockStructure, ComplexSignal, SupportSet, C64};

/// Upper bound on the number of supports [`exhaustive_solve`] will visit.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Absolute gradient tolerance of the stationarity checks.
pub const STATIONARITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub best_support: SupportSet,
    pub best_x: ComplexSignal,
    pub best_objective: f64,
    pub supports_evaluated: u128,
}

/// Minimum-norm least squares on the columns in `support`.
pub fn ls_on_support(p: &Problem, support: &SupportSet) -> Result<(ComplexSignal, f64)> {
    let n = p.n();
    if let Some(&last) = support.indices().last() {
        if last >= n {
            return Err(Error::Support(format!("index {last} out of range for n = {n}")));
        }
    }
    if support.is_empty() {
        return Ok((ComplexSignal::zeros(n), p.y.norm_sqr()));
    }
    let a_t = p.a.columns_dense(support.indices());
    let y = DVector::from_column_slice(&p.y);
    let dim = a_t.nrows().max(a_t.ncols()) as f64;
    let svd = a_t.svd(true, true);
    let eps = svd.singular_values.max() * f64::EPSILON * dim;
    let u = svd.solve(&y, eps).map_err(|e| Error::Contract(e.to_string()))?;
    let x = scatter(u.as_slice(), support, n)?;
    let obj = objective(p, &x)?;
    Ok((x, obj))
}

/// Number of supports with exactly `s_i` entries in every block.
pub fn support_count(bs: &BlockStructure) -> u128 {
    bs.lengths()
        .iter()
        .zip(bs.sparsities())
        .fold(1u128, |acc, (&d, &s)| acc.saturating_mul(binomial(d, s)))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] != i + n - k) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Global minimizer over the block-sparse set by enumerating every support.
/// Ties keep the lexicographically smallest support.
pub fn exhaustive_solve(p: &Problem) -> Result<OracleResult> {
    let bs = &p.bs;
    let count = support_count(bs);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let per_block: Vec<Vec<Vec<usize>>> = (0..bs.num_blocks())
        .map(|b| {
            let off = bs.offsets()[b];
            combinations(bs.lengths()[b], bs.sparsities()[b])
                .into_iter()
                .map(|c| c.into_iter().map(|j| j + off).collect())
                .collect()
        })
        .collect();

    let mut digits = vec![0usize; per_block.len()];
    let mut best: Option<(SupportSet, ComplexSignal, f64)> = None;
    let mut evaluated = 0u128;
    loop {
        let idx: Vec<usize> = digits.iter().zip(&per_block).flat_map(|(&d, opts)| opts[d].iter().copied()).collect();
        let support = SupportSet::new(idx, p.n())?;
        let (x, obj) = ls_on_support(p, &support)?;
        evaluated += 1;
        if best.as_ref().is_none_or(|(_, _, b)| obj < *b) {
            best = Some((support, x, obj));
        }
        // Last block is the fastest digit, so visits follow lexicographic order.
        let mut pos = per_block.len();
        loop {
            if pos == 0 {
                let (best_support, best_x, best_objective) = best.expect("at least one support");
                return Ok(OracleResult {
                    best_support,
                    best_x,
                    best_objective,
                    supports_evaluated: evaluated,
                });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < per_block[pos].len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

fn check_feasible(x: &[C64], bs: &BlockStructure) -> Result<()> {
    if x.len() != bs.total_len() {
        return Err(Error::Dimension {
            what: "x",
            expected: bs.total_len(),
            got: x.len(),
        });
    }
    for b in 0..bs.num_blocks() {
        let nnz = x[bs.range(b)].iter().filter(|z| z.norm() > 0.0).count();
        if nnz > bs.sparsities()[b] {
            return Err(Error::Contract(format!(
                "block {b} has {nnz} nonzeros, more than s = {}",
                bs.sparsities()[b]
            )));
        }
    }
    Ok(())
}

/// Per-block characterization of τ-stationarity through the gradient: on a
/// full block the gradient vanishes on the support and is bounded by
/// `M_s(|x_[i]|)/τ` off it; on a deficient block the gradient vanishes.
pub fn verify_stationary(p: &Problem, x: &[C64], tau: f64) -> Result<bool> {
    check_feasible(x, &p.bs)?;
    if !(tau > 0.0) {
        return Err(Error::Contract(format!("tau = {tau} must be positive")));
    }
    let g = gradient(p, x)?;
    let bs = &p.bs;
    for b in 0..bs.num_blocks() {
        let range = bs.range(b);
        let s = bs.sparsities()[b];
        let xb = &x[range.clone()];
        let gb = &g[range];
        let nnz = xb.iter().filter(|z| z.norm() > 0.0).count();
        let m_s = if s == 0 { 0.0 } else { kth_largest_magnitude(xb, s)? };
        let ok = if nnz == s {
            xb.iter().zip(gb).all(|(xj, gj)| {
                if xj.norm() > 0.0 {
                    gj.norm() <= STATIONARITY_TOL
                } else {
                    gj.norm() <= m_s / tau + STATIONARITY_TOL
                }
            })
        } else {
            gb.iter().all(|gj| gj.norm() <= STATIONARITY_TOL) && m_s <= STATIONARITY_TOL
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Direct fixed-point test: every block of `x` is one of the best
/// `s_i`-term approximations of the same block of `x − τ∇f(x)`, with the
/// gradient tolerance scaled by τ.
pub fn in_projection_of_gradient_step(p: &Problem, x: &[C64], tau: f64) -> Result<bool> {
    check_feasible(x, &p.bs)?;
    if !(tau > 0.0) {
        return Err(Error::Contract(format!("tau = {tau} must be positive")));
    }
    let g = gradient(p, x)?;
    let v: Vec<C64> = x.iter().zip(g.iter()).map(|(xj, gj)| xj - gj * tau).collect();
    let tol = tau * STATIONARITY_TOL;
    let bs = &p.bs;
    for b in 0..bs.num_blocks() {
        let range = bs.range(b);
        let (xb, vb) = (&x[range.clone()], &v[range]);
        let s = bs.sparsities()[b];
        let on: Vec<usize> = (0..xb.len()).filter(|&j| xb[j].norm() > 0.0).collect();
        if on.iter().any(|&j| (xb[j] - vb[j]).norm() > tol) {
            return Ok(false);
        }
        let off_peak = (0..xb.len())
            .filter(|j| !on.contains(j))
            .map(|j| vb[j].norm())
            .fold(0.0, f64::max);
        let ok = if on.len() == s {
            // Kept entries must dominate every discarded one.
            let floor = on.iter().map(|&j| xb[j].norm()).fold(f64::INFINITY, f64::min);
            off_peak <= floor + tol
        } else {
            // Room for more entries: the rest of the step must already be zero.
            off_peak <= tol
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}
