//! Complex approximate message passing with soft thresholding, used as the
//! comparison solver. Blocks are ignored during the iteration; only the final
//! estimate is projected onto the block-sparse set.
//!
//! The operator is rescaled internally to unit average column norm,
//! `Ã = A / c` with `c² = ‖A‖_F² / n`, and the iterate tracks `c·x`:
//!
//! ```text
//!     v      = x̃ + Ãᴴ r
//!     θ      = κ ‖r‖ / √m
//!     x̃⁺     = η(v; θ)                       complex soft threshold
//!     b      = (1/m) Σ_{|v_j|>θ} (1 − θ / (2|v_j|))
//!     r⁺     = y − Ã x̃⁺ + b·r
//! ```
//!
//! `b` is the divergence of the complex soft threshold (half the trace of its
//! real 2×2 Jacobian) averaged per measurement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{block_project, Problem};
use crate::solver::{DirectionKind, HaltingReason, IterationRecord, SolveResult, Stopwatch};
use crate::types::{norm_sqr, ComplexSignal, C64};

const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmpConfig {
    pub max_iter: usize,
    /// κ, the multiplier on the noise-level estimate ‖r‖/√m.
    pub threshold_scale: f64,
    /// Weight on the previous iterate, in [0, 1).
    pub damping: f64,
    /// Halts once ‖x⁺ − x‖ ≤ tol·‖x⁺‖.
    pub tol: f64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            threshold_scale: 1.0,
            damping: 0.0,
            tol: 1e-6,
        }
    }
}

impl AmpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Contract("amp.max_iter must be positive".into()));
        }
        if !(self.threshold_scale > 0.0 && self.threshold_scale.is_finite()) {
            return Err(Error::Contract(format!("amp.threshold_scale = {} out of range", self.threshold_scale)));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Contract(format!("amp.damping = {} out of range", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Contract(format!("amp.tol = {} out of range", self.tol)));
        }
        Ok(())
    }
}

/// v·max(1 − t/|v|, 0), and 0 at v = 0.
pub fn soft_threshold(v: C64, t: f64) -> C64 {
    let mag = v.norm();
    if mag <= t || mag == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        v * (1.0 - t / mag)
    }
}

pub fn amp_solve(p: &Problem, cfg: &AmpConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let clock = Stopwatch::start();
    let (m, n) = (p.m(), p.n());
    let scale = (p.a.frobenius_sqr() / n as f64).sqrt();
    if scale == 0.0 {
        return Err(Error::Contract("AMP needs a nonzero sensing matrix".into()));
    }
    let inv_scale = 1.0 / scale;
    let y_norm = p.y.norm();

    let mut x = vec![C64::new(0.0, 0.0); n];
    let mut r: Vec<C64> = p.y.to_vec();
    let mut history = Vec::new();
    let mut reason = HaltingReason::MaxIter;

    for _ in 0..cfg.max_iter {
        let r_norm = norm_sqr(&r).sqrt();
        let theta = cfg.threshold_scale * r_norm / (m as f64).sqrt();
        let corr = p.a.apply_adjoint(&r);
        let mut onsager = 0.0;
        let mut next = Vec::with_capacity(n);
        for (xi, ci) in x.iter().zip(&corr) {
            let v = xi + ci * inv_scale;
            let mag = v.norm();
            if mag > theta {
                onsager += 1.0 - theta / (2.0 * mag);
            }
            next.push(soft_threshold(v, theta));
        }
        onsager /= m as f64;
        if cfg.damping > 0.0 {
            for (nx, ox) in next.iter_mut().zip(&x) {
                *nx = *nx * (1.0 - cfg.damping) + ox * cfg.damping;
            }
        }

        let ax = p.a.apply(&next);
        let new_r: Vec<C64> = p
            .y
            .iter()
            .zip(&ax)
            .zip(&r)
            .map(|((y, a), old)| y - a * inv_scale + old * onsager)
            .collect();

        let change = norm_sqr(&next.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt();
        let next_norm = norm_sqr(&next).sqrt();
        let fit: f64 = p.y.iter().zip(&ax).map(|(y, a)| (a * inv_scale - y).norm_sqr()).sum();
        let rel_change = if next_norm > 0.0 { change / next_norm } else { change };
        let new_r_norm = norm_sqr(&new_r).sqrt();
        history.push(IterationRecord {
            objective: norm_sqr(&r),
            tolerance: rel_change,
            alpha: theta,
            direction: DirectionKind::MessagePassing,
            slope: onsager,
            objective_next: fit,
            accepted: true,
            support: Vec::new(),
        });
        x = next;
        r = new_r;

        if !new_r_norm.is_finite() || new_r_norm > DIVERGENCE_FACTOR * y_norm.max(f64::MIN_POSITIVE) {
            reason = HaltingReason::Diverged;
            break;
        }
        if change <= cfg.tol * next_norm {
            reason = HaltingReason::Tolerance;
            break;
        }
    }

    let raw: ComplexSignal = x.iter().map(|z| z * inv_scale).collect();
    let x_hat = if raw.is_finite() {
        block_project(&raw, &p.bs)?
    } else {
        ComplexSignal::zeros(n)
    };
    Ok(SolveResult {
        x_hat,
        x_raw: Some(raw),
        iterations: history.len(),
        halting_reason: reason,
        history,
        wall_time: clock.seconds(),
    })
}
