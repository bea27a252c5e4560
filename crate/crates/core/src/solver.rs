//! Block Newton hard-thresholding pursuit (BNHTP).
//!
//! Each iteration
//! 1. picks the support T = ∪_i top-s_i(|x − τ∇f(x)|) within block i,
//! 2. forms the subspace Newton direction, falling back to a momentum gradient
//!    direction when the Newton system is singular or the switch test fails,
//! 3. backtracks along the direction (Armijo) and writes exact zeros off T.
//!
//! Trial points in the line search are the pruned points `[x_T + α d_T; 0]`,
//! i.e. exactly the iterate that would be accepted.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{
    block_top_support, gradient, real_inner_unchecked, tolerance_from_gradient, Problem,
};
use crate::types::{gather, norm_sqr, ComplexSignal, SupportSet, C64};

/// Relative roundoff allowance in the sufficient-decrease test.
pub const ARMIJO_ROUNDOFF: f64 = 1e-12;
const NEWTON_RIDGE: f64 = 1e-10;
const NEWTON_RESIDUAL_TOL: f64 = 1e-6;

/// How the support-selection step τ is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "TauRepr", into = "TauRepr")]
pub enum TauRule {
    /// α_f/2 = 1/(4 λ_max(AᴴA)), the largest step covered by the descent lemma.
    Auto,
    /// n/‖A‖_F², the unit step after normalizing columns to unit mean energy.
    #[default]
    ColumnNorm,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TauRepr {
    Value(f64),
    Name(TauName),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TauName {
    Auto,
    ColumnNorm,
}

impl From<TauRepr> for TauRule {
    fn from(r: TauRepr) -> Self {
        match r {
            TauRepr::Value(v) => TauRule::Fixed(v),
            TauRepr::Name(TauName::Auto) => TauRule::Auto,
            TauRepr::Name(TauName::ColumnNorm) => TauRule::ColumnNorm,
        }
    }
}

impl From<TauRule> for TauRepr {
    fn from(r: TauRule) -> Self {
        match r {
            TauRule::Fixed(v) => TauRepr::Value(v),
            TauRule::Auto => TauRepr::Name(TauName::Auto),
            TauRule::ColumnNorm => TauRepr::Name(TauName::ColumnNorm),
        }
    }
}

impl TauRule {
    pub fn resolve(self, p: &Problem) -> f64 {
        match self {
            TauRule::Auto => auto_tau(p),
            TauRule::ColumnNorm => column_norm_tau(p),
            TauRule::Fixed(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Step scale τ used in support selection and the Newton switch.
    pub tau: TauRule,
    /// Newton switch constant γ ∈ (0,1).
    pub gamma: f64,
    /// Momentum weight η ≥ 0.
    pub eta: f64,
    pub armijo_sigma: f64,
    pub armijo_beta: f64,
    /// Halting tolerance ε.
    pub epsilon: f64,
    /// Iteration cap K.
    pub max_iter: usize,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: TauRule::default(),
            gamma: 0.01,
            eta: 0.1,
            armijo_sigma: 1e-4,
            armijo_beta: 0.5,
            epsilon: 1e-6,
            max_iter: 100,
            max_backtracks: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let bad = |field: &str, v: String| Err(Error::Contract(format!("solver.{field} = {v} out of range")));
        if let TauRule::Fixed(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return bad("tau", t.to_string());
            }
        }
        if !open_unit(self.gamma) {
            return bad("gamma", self.gamma.to_string());
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta", self.eta.to_string());
        }
        if !open_unit(self.armijo_sigma) {
            return bad("armijo_sigma", self.armijo_sigma.to_string());
        }
        if !open_unit(self.armijo_beta) {
            return bad("armijo_beta", self.armijo_beta.to_string());
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon", self.epsilon.to_string());
        }
        if self.max_iter == 0 {
            return bad("max_iter", "0".into());
        }
        if self.max_backtracks == 0 {
            return bad("max_backtracks", "0".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltingReason {
    Tolerance,
    MaxIter,
    /// No step length passed the sufficient-decrease test.
    LineSearchFailed,
    /// Iterates blew up (AMP only).
    Diverged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    Newton,
    Gradient,
    /// AMP iteration; see [`crate::amp`].
    MessagePassing,
}

/// Diagnostics for one iteration.
///
/// For BNHTP: `objective` is f(x^k), `tolerance` is Tol_τ(x^k;T^k), `slope` is
/// 2·Re(dᴴ∇f(x^k)) and `objective_next` is f(x^{k+1}). AMP reuses the record
/// with `objective` = ‖y − Ax^t‖², `tolerance` = relative change of the
/// iterate, `alpha` = soft threshold and `slope` = Onsager coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub objective: f64,
    pub tolerance: f64,
    pub alpha: f64,
    pub direction: DirectionKind,
    pub slope: f64,
    pub objective_next: f64,
    pub accepted: bool,
    pub support: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    /// Block-feasible estimate.
    pub x_hat: ComplexSignal,
    /// Unprojected iterate, for solvers whose iterates are not feasible.
    pub x_raw: Option<ComplexSignal>,
    pub iterations: usize,
    pub halting_reason: HaltingReason,
    pub history: Vec<IterationRecord>,
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmijoOutcome {
    pub alpha: f64,
    pub accepted: bool,
    pub backtracks: usize,
    /// f at the accepted trial point (at the last trial if rejected).
    pub objective: f64,
}

pub(crate) struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

/// τ = α_f/2 = 1/(4 λ_max(AᴴA)).
pub fn auto_tau(p: &Problem) -> f64 {
    p.a.alpha_f() / 2.0
}

/// τ = n/‖A‖_F², falling back to [`auto_tau`] for a zero matrix.
pub fn column_norm_tau(p: &Problem) -> f64 {
    let energy = p.a.frobenius_sqr();
    if energy > 0.0 {
        p.n() as f64 / energy
    } else {
        auto_tau(p)
    }
}

/// T(x;τ): per block, the s_i largest entries of |x − τ∇f(x)| (ties → lowest index).
pub fn select_support(p: &Problem, x: &[C64], tau: f64) -> Result<SupportSet> {
    let g = gradient(p, x)?;
    support_from_gradient(p, x, &g, tau)
}

fn support_from_gradient(p: &Problem, x: &[C64], g: &[C64], tau: f64) -> Result<SupportSet> {
    let xbar: Vec<C64> = x.iter().zip(g).map(|(xi, gi)| xi - gi * tau).collect();
    block_top_support(&xbar, &p.bs)
}

/// Quantities of the subproblem restricted to a support.
struct Restricted {
    x_t: Vec<C64>,
    /// A_T x_T
    ax_t: Vec<C64>,
    /// A_Tᴴ(A_T x_T − y)
    grad_t: Vec<C64>,
    off_sq: f64,
}

impl Restricted {
    fn new(p: &Problem, x: &[C64], support: &SupportSet) -> Self {
        let idx = support.indices();
        let x_t: Vec<C64> = idx.iter().map(|&j| x[j]).collect();
        let ax_t = p.a.apply_sparse(idx, &x_t);
        let r: Vec<C64> = ax_t.iter().zip(p.y.iter()).map(|(a, y)| a - y).collect();
        let grad_t = p.a.adjoint_on(idx, &r);
        let mask = support.mask(x.len());
        let off_sq = x
            .iter()
            .zip(mask)
            .filter(|(_, on)| !on)
            .map(|(z, _)| z.norm_sqr())
            .sum();
        Self {
            x_t,
            ax_t,
            grad_t,
            off_sq,
        }
    }
}

/// Full-length direction with `on` values on T and −x elsewhere.
fn assemble(x: &[C64], support: &SupportSet, on: &[C64]) -> ComplexSignal {
    let mut d: ComplexSignal = x.iter().map(|z| -z).collect();
    for (&j, &v) in support.indices().iter().zip(on) {
        d[j] = v;
    }
    d
}

/// Momentum gradient direction: d_T = −A_Tᴴ(A_T x_T − y) + η·(d_prev)_T, d_{T_C} = −x_{T_C}.
pub fn gradient_direction(
    p: &Problem,
    x: &[C64],
    support: &SupportSet,
    prev_d: &[C64],
    eta: f64,
) -> Result<ComplexSignal> {
    check_len("signal", p.n(), x.len())?;
    check_len("previous direction", p.n(), prev_d.len())?;
    let sub = Restricted::new(p, x, support);
    Ok(assemble(x, support, &gradient_on(&sub, support, prev_d, eta)))
}

fn gradient_on(sub: &Restricted, support: &SupportSet, prev_d: &[C64], eta: f64) -> Vec<C64> {
    sub.grad_t
        .iter()
        .zip(support.indices())
        .map(|(g, &j)| -g + prev_d[j] * eta)
        .collect()
}

/// Subspace Newton direction. Returns `(d, solvable)`; `d` is meaningless when
/// the restricted Gram system could not be solved.
pub fn newton_direction(p: &Problem, x: &[C64], support: &SupportSet) -> Result<(ComplexSignal, bool)> {
    check_len("signal", p.n(), x.len())?;
    let sub = Restricted::new(p, x, support);
    let (d_t, ok) = newton_on(p, &sub, support);
    Ok((assemble(x, support, &d_t), ok))
}

/// Solves (AᴴA)_{T,T} d_T = −A_Tᴴ(A_T x_T − y), which equals
/// (AᴴA)_{T,T_C} x_{T_C} − ∇_T f(x).
fn newton_on(p: &Problem, sub: &Restricted, support: &SupportSet) -> (Vec<C64>, bool) {
    let t = support.len();
    if t == 0 {
        return (Vec::new(), true);
    }
    let rhs = DVector::from_iterator(t, sub.grad_t.iter().map(|g| -g));
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 {
        return (vec![C64::new(0.0, 0.0); t], true);
    }
    let gram = p.a.gram_on(support.indices());
    let chol = gram.clone().cholesky().or_else(|| {
        let ridge = NEWTON_RIDGE * gram.trace().re / t as f64;
        let mut g = gram.clone();
        for k in 0..t {
            g[(k, k)] += C64::new(ridge, 0.0);
        }
        g.cholesky()
    });
    let Some(chol) = chol else {
        return (vec![C64::new(0.0, 0.0); t], false);
    };
    let d = chol.solve(&rhs);
    let res = (&gram * &d - &rhs).norm();
    let finite = d.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    let ok = finite && res <= NEWTON_RESIDUAL_TOL * rhs_norm;
    (d.iter().copied().collect(), ok)
}

/// Newton switch: ⟨∇_T f(x), (d_N)_T⟩ ≤ −γ‖d_N‖² + ‖x_{T_C}‖²/(4τ).
pub fn newton_switch(
    p: &Problem,
    x: &[C64],
    support: &SupportSet,
    d_newton: &[C64],
    gamma: f64,
    tau: f64,
) -> Result<bool> {
    check_len("newton direction", p.n(), d_newton.len())?;
    let g = gradient(p, x)?;
    let g_t = gather(&g, support)?;
    let d_t = gather(d_newton, support)?;
    let off_sq: f64 = support.complement(p.n()).iter().map(|&j| x[j].norm_sqr()).sum();
    Ok(switch_holds(&g_t, &d_t, norm_sqr(d_newton), off_sq, gamma, tau))
}

fn switch_holds(g_t: &[C64], d_t: &[C64], d_sq: f64, off_sq: f64, gamma: f64, tau: f64) -> bool {
    real_inner_unchecked(g_t, d_t) <= -gamma * d_sq + off_sq / (4.0 * tau)
}

/// Backtracking with α = βˡ, ℓ = 0, 1, …, max_backtracks, accepting the first
/// trial with f([x_T + α d_T; 0]) ≤ f(x) + σα·min(2⟨d, ∇f(x)⟩, 0).
pub fn armijo_search(
    p: &Problem,
    x: &[C64],
    d: &[C64],
    support: &SupportSet,
    cfg: &SolverConfig,
) -> Result<ArmijoOutcome> {
    check_len("direction", p.n(), d.len())?;
    if !d.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NonFinite("search direction"));
    }
    let f0 = crate::model::objective(p, x)?;
    let g = gradient(p, x)?;
    let slope = 2.0 * real_inner_unchecked(d, &g);
    let sub = Restricted::new(p, x, support);
    let d_t: Vec<C64> = support.indices().iter().map(|&j| d[j]).collect();
    let ad_t = p.a.apply_sparse(support.indices(), &d_t);
    Ok(backtrack(p, &sub.ax_t, &ad_t, f0, slope, cfg))
}

fn backtrack(p: &Problem, ax_t: &[C64], ad_t: &[C64], f0: f64, slope: f64, cfg: &SolverConfig) -> ArmijoOutcome {
    let descent = slope.min(0.0);
    let mut alpha = 1.0;
    let mut f = f64::INFINITY;
    for l in 0..=cfg.max_backtracks {
        f = ax_t
            .iter()
            .zip(ad_t)
            .zip(p.y.iter())
            .map(|((u, v), y)| (u + v * alpha - y).norm_sqr())
            .sum();
        if f <= f0 + cfg.armijo_sigma * alpha * descent + ARMIJO_ROUNDOFF * f0 {
            return ArmijoOutcome {
                alpha,
                accepted: true,
                backtracks: l,
                objective: f,
            };
        }
        alpha *= cfg.armijo_beta;
    }
    ArmijoOutcome {
        alpha: 0.0,
        accepted: false,
        backtracks: cfg.max_backtracks,
        objective: f,
    }
}

/// Runs BNHTP from `x0` (zero vector when `None`).
pub fn bnhtp_solve(p: &Problem, cfg: &SolverConfig, x0: Option<&[C64]>) -> Result<SolveResult> {
    cfg.validate()?;
    let clock = Stopwatch::start();
    let n = p.n();
    let tau = cfg.tau.resolve(p);
    let mut x: ComplexSignal = match x0 {
        Some(v) => {
            check_len("initial point", n, v.len())?;
            v.to_vec().into()
        }
        None => ComplexSignal::zeros(n),
    };
    if !x.is_finite() {
        return Err(Error::NonFinite("initial point"));
    }
    let mut prev_d = ComplexSignal::zeros(n);
    let mut x_supp: Vec<usize> = (0..n).filter(|&j| x[j] != C64::new(0.0, 0.0)).collect();
    let mut history = Vec::new();

    for _ in 0..cfg.max_iter {
        let x_vals: Vec<C64> = x_supp.iter().map(|&j| x[j]).collect();
        let ax = p.a.apply_sparse(&x_supp, &x_vals);
        let r: Vec<C64> = ax.iter().zip(p.y.iter()).map(|(a, y)| a - y).collect();
        let f0 = norm_sqr(&r);
        let g = p.a.apply_adjoint(&r);

        let support = support_from_gradient(p, &x, &g, tau)?;
        let tol = tolerance_from_gradient(&x, &g, &support, tau);
        let sub = Restricted::new(p, &x, &support);
        let g_t: Vec<C64> = support.indices().iter().map(|&j| g[j]).collect();

        let (newton_t, solvable) = newton_on(p, &sub, &support);
        let use_newton = solvable && {
            let d_sq = norm_sqr(&newton_t) + sub.off_sq;
            switch_holds(&g_t, &newton_t, d_sq, sub.off_sq, cfg.gamma, tau)
        };

        let mut candidates = Vec::with_capacity(2);
        if use_newton {
            candidates.push((DirectionKind::Newton, newton_t));
        }
        let mut grad_t = gradient_on(&sub, &support, &prev_d, cfg.eta);
        if cfg.eta > 0.0 && direction_slope(&x, &support, &grad_t, &g) >= 0.0 {
            // momentum spoiled descent; drop it for this step
            grad_t = gradient_on(&sub, &support, &prev_d, 0.0);
        }
        candidates.push((DirectionKind::Gradient, grad_t));

        let mut step = None;
        for (kind, d_t) in candidates {
            let slope = direction_slope(&x, &support, &d_t, &g);
            let ad_t = p.a.apply_sparse(support.indices(), &d_t);
            let outcome = backtrack(p, &sub.ax_t, &ad_t, f0, slope, cfg);
            if outcome.accepted {
                step = Some((kind, d_t, slope, outcome));
                break;
            }
        }

        let Some((kind, d_t, slope, outcome)) = step else {
            history.push(IterationRecord {
                objective: f0,
                tolerance: tol,
                alpha: 0.0,
                direction: DirectionKind::Gradient,
                slope: f64::NAN,
                objective_next: f0,
                accepted: false,
                support: support.indices().to_vec(),
            });
            let iterations = history.len();
            return Ok(SolveResult {
                x_hat: x,
                x_raw: None,
                iterations,
                halting_reason: HaltingReason::LineSearchFailed,
                history,
                wall_time: clock.seconds(),
            });
        };

        let alpha = outcome.alpha;
        let mut next = ComplexSignal::zeros(n);
        for ((&j, xv), dv) in support.indices().iter().zip(&sub.x_t).zip(&d_t) {
            next[j] = xv + dv * alpha;
        }
        history.push(IterationRecord {
            objective: f0,
            tolerance: tol,
            alpha,
            direction: kind,
            slope,
            objective_next: outcome.objective,
            accepted: true,
            support: support.indices().to_vec(),
        });
        prev_d = assemble(&x, &support, &d_t);
        x = next;
        x_supp = support.indices().to_vec();

        if tol < cfg.epsilon {
            let iterations = history.len();
            return Ok(SolveResult {
                x_hat: x,
                x_raw: None,
                iterations,
                halting_reason: HaltingReason::Tolerance,
                history,
                wall_time: clock.seconds(),
            });
        }
    }

    let iterations = history.len();
    Ok(SolveResult {
        x_hat: x,
        x_raw: None,
        iterations,
        halting_reason: HaltingReason::MaxIter,
        history,
        wall_time: clock.seconds(),
    })
}

/// 2·Re(dᴴ∇f) for d = [d_T; −x_{T_C}].
fn direction_slope(x: &[C64], support: &SupportSet, d_t: &[C64], g: &[C64]) -> f64 {
    let mask = support.mask(x.len());
    let mut s = 0.0;
    for (j, on) in mask.iter().enumerate() {
        if !on {
            s -= x[j].re * g[j].re + x[j].im * g[j].im;
        }
    }
    for (&j, d) in support.indices().iter().zip(d_t) {
        s += d.re * g[j].re + d.im * g[j].im;
    }
    2.0 * s
}
