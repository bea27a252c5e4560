//! Objective f(x) = ‖Ax − y‖², its Wirtinger gradient, the block hard-threshold
//! projection, the stationarity residual and the halting tolerance.
//!
//! The gradient is taken with respect to the conjugate variable, so
//! ∇f(x) = Aᴴ(Ax − y). Wherever a first-order expansion pairs a term with its
//! conjugate, the pair collapses to `2·real_inner(d, ∇f)`.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::matrix::SensingMatrix;
use crate::types::{norm_sqr, BlockStructure, ComplexSignal, SupportSet, C64};

/// An instance of min ‖Ax − y‖² subject to per-block sparsity.
#[derive(Clone, Debug)]
pub struct Problem {
    pub a: Arc<SensingMatrix>,
    pub y: ComplexSignal,
    pub bs: BlockStructure,
}

impl Problem {
    pub fn new(a: Arc<SensingMatrix>, y: ComplexSignal, bs: BlockStructure) -> Result<Self> {
        check_len("observation", a.rows(), y.len())?;
        check_len("block structure", a.cols(), bs.total_len())?;
        if !y.is_finite() {
            return Err(Error::NonFinite("observation"));
        }
        Ok(Self { a, y, bs })
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// Ax − y.
    pub fn residual(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len("signal", self.n(), x.len())?;
        let mut r = self.a.apply(x);
        r.iter_mut().zip(self.y.iter()).for_each(|(ri, yi)| *ri -= yi);
        Ok(r)
    }
}

/// ‖Ax − y‖².
pub fn objective(p: &Problem, x: &[C64]) -> Result<f64> {
    Ok(norm_sqr(&p.residual(x)?))
}

/// Aᴴ(Ax − y).
pub fn gradient(p: &Problem, x: &[C64]) -> Result<ComplexSignal> {
    let r = p.residual(x)?;
    Ok(p.a.apply_adjoint(&r).into())
}

/// Re(uᴴv): the real inner product of ℂⁿ viewed as ℝ²ⁿ.
pub fn real_inner(u: &[C64], v: &[C64]) -> Result<f64> {
    check_len("real_inner", u.len(), v.len())?;
    Ok(real_inner_unchecked(u, v))
}

pub(crate) fn real_inner_unchecked(u: &[C64], v: &[C64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

/// Indices of the `k` largest moduli of `v`, ties to the lowest index, ascending.
pub(crate) fn top_k_indices(v: &[C64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    // stable sort keeps lower indices first among equal moduli
    order.sort_by(|&a, &b| v[b].norm_sqr().total_cmp(&v[a].norm_sqr()));
    let mut keep: Vec<usize> = order.into_iter().take(k).collect();
    keep.sort_unstable();
    keep
}

/// Union over blocks of the s_i largest-modulus positions of `v`.
pub fn block_top_support(v: &[C64], bs: &BlockStructure) -> Result<SupportSet> {
    check_len("block_top_support", bs.total_len(), v.len())?;
    let mut idx = Vec::with_capacity(bs.total_sparsity());
    for i in 0..bs.num_blocks() {
        let range = bs.range(i);
        let start = range.start;
        idx.extend(
            top_k_indices(&v[range], bs.sparsities()[i])
                .into_iter()
                .map(|j| j + start),
        );
    }
    SupportSet::new(idx, v.len())
}

/// Block hard-thresholding P_𝕊: keeps the s_i largest moduli in each block.
pub fn block_project(x: &[C64], bs: &BlockStructure) -> Result<ComplexSignal> {
    let t = block_top_support(x, bs)?;
    let mut out = ComplexSignal::zeros(x.len());
    for &j in t.indices() {
        out[j] = x[j];
    }
    Ok(out)
}

/// M_k(|v|): the k-th largest modulus, counted with multiplicity.
pub fn kth_largest_magnitude(v: &[C64], k: usize) -> Result<f64> {
    if k == 0 || k > v.len() {
        return Err(Error::Rank { k, len: v.len() });
    }
    let mut mags: Vec<f64> = v.iter().map(|z| z.norm()).collect();
    let (_, kth, _) = mags.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    Ok(*kth)
}

/// F_τ(x;T): ∇f(x) on T and x on T_C, assembled position-wise.
pub fn stationarity_map(p: &Problem, x: &[C64], support: &SupportSet) -> Result<ComplexSignal> {
    let g = gradient(p, x)?;
    Ok(stationarity_from_gradient(x, &g, support))
}

pub(crate) fn stationarity_from_gradient(x: &[C64], g: &[C64], support: &SupportSet) -> ComplexSignal {
    let mask = support.mask(x.len());
    x.iter()
        .zip(g)
        .zip(mask)
        .map(|((&xi, &gi), on)| if on { gi } else { xi })
        .collect()
}

/// Tol_τ(x;T) = ‖F_τ(x;T)‖ + max_{j∈T_C} max(|∇_j f(x)| − M(|x|)/τ, 0),
/// where M(|x|) is the largest modulus of x.
pub fn halting_tolerance(p: &Problem, x: &[C64], support: &SupportSet, tau: f64) -> Result<f64> {
    let g = gradient(p, x)?;
    Ok(tolerance_from_gradient(x, &g, support, tau))
}

pub(crate) fn tolerance_from_gradient(x: &[C64], g: &[C64], support: &SupportSet, tau: f64) -> f64 {
    let mask = support.mask(x.len());
    let x_max = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let bound = x_max / tau;
    let mut f_sq = 0.0;
    let mut excess: f64 = 0.0;
    for ((xi, gi), on) in x.iter().zip(g).zip(mask) {
        if on {
            f_sq += gi.norm_sqr();
        } else {
            f_sq += xi.norm_sqr();
            excess = excess.max(gi.norm() - bound);
        }
    }
    f_sq.sqrt() + excess
}

/// Floating-point allowance for the lemma checks, relative to the magnitudes compared.
const CHECK_SLACK: f64 = 1e-12;

fn diff(q1: &[C64], q2: &[C64]) -> Vec<C64> {
    q1.iter().zip(q2).map(|(a, b)| a - b).collect()
}

/// f(q1) ≤ f(q2) + 2⟨q1 − q2, ∇f(q2)⟩ + ‖q1 − q2‖²/τ, for τ ≤ α_f/2.
pub fn check_descent_lemma(p: &Problem, q1: &[C64], q2: &[C64], tau: f64) -> Result<bool> {
    if !(tau > 0.0 && tau <= p.a.alpha_f() / 2.0) {
        return Err(Error::Contract(format!(
            "descent lemma needs 0 < tau <= alpha_f/2 = {}",
            p.a.alpha_f() / 2.0
        )));
    }
    let (f1, f2) = (objective(p, q1)?, objective(p, q2)?);
    let d = diff(q1, q2);
    let rhs = f2 + 2.0 * real_inner(&d, &gradient(p, q2)?)? + norm_sqr(&d) / tau;
    Ok(f1 <= rhs + CHECK_SLACK * f1.abs().max(rhs.abs()).max(f2))
}

/// f(q1) ≥ f(q2) + 2⟨q1 − q2, ∇f(q2)⟩.
pub fn check_convexity_lemma(p: &Problem, q1: &[C64], q2: &[C64]) -> Result<bool> {
    let (f1, f2) = (objective(p, q1)?, objective(p, q2)?);
    let rhs = f2 + 2.0 * real_inner(&diff(q1, q2), &gradient(p, q2)?)?;
    Ok(f1 >= rhs - CHECK_SLACK * f1.abs().max(rhs.abs()).max(f2))
}

/// ‖∇f(q1) − ∇f(q2)‖ ≤ ‖q1 − q2‖/α_f.
pub fn check_lipschitz(p: &Problem, q1: &[C64], q2: &[C64]) -> Result<bool> {
    let (g1, g2) = (gradient(p, q1)?, gradient(p, q2)?);
    let lhs = norm_sqr(&diff(&g1, &g2)).sqrt();
    let rhs = norm_sqr(&diff(q1, q2)).sqrt() / p.a.alpha_f();
    Ok(lhs <= rhs * (1.0 + CHECK_SLACK))
}
