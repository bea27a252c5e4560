use std::sync::Arc;

use blockcs::amp::{amp_solve, AmpConfig};
use blockcs::datagen::{exp_matrix_entry, gen_instance_with_matrix, gen_matrix, Instance, MatrixKind, ScenarioParams};
use blockcs::metrics::{calibrate_maxima, relative_error, support_rates, UserMaxima};
use blockcs::model::objective;
use blockcs::{bnhtp_solve, BlockStructure, SolveResult, SolverConfig};
use serde::{Deserialize, Serialize};

/// Largest random matrix the page may ask for, in entries.
const MAX_ENTRIES: usize = 839 * 2048;
const MAX_TRIALS: usize = 500;
const SWEEP_POINTS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub matrix: MatrixKind,
    /// Rows for the random kinds.
    pub m: usize,
    pub blocks: usize,
    /// Block length for the random kinds; the exponential kinds split their
    /// columns evenly over `blocks`.
    pub block_len: usize,
    pub s_bar: usize,
    pub sigma: f64,
    pub seed: u64,
    pub zero_tol: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            matrix: MatrixKind::A1,
            m: 64,
            blocks: 16,
            block_len: 16,
            s_bar: 4,
            sigma: 0.001,
            seed: 0,
            zero_tol: 1e-3,
        }
    }
}

impl Scenario {
    fn params(&self, seed: u64) -> Result<ScenarioParams, String> {
        let (m, n) = self.matrix.fixed_shape().unwrap_or((self.m, self.blocks * self.block_len));
        if self.blocks == 0 || n % self.blocks != 0 {
            return Err(format!("{n} columns do not split into {} blocks", self.blocks));
        }
        if m * n > MAX_ENTRIES {
            return Err(format!("{m}x{n} is larger than the demo allows"));
        }
        let bs = BlockStructure::uniform(self.blocks, n / self.blocks, 1).map_err(|e| e.to_string())?;
        let params = ScenarioParams {
            m,
            bs,
            s_bar: self.s_bar,
            sigma_noise: self.sigma,
            matrix_kind: self.matrix,
            seed,
            ..Default::default()
        };
        params.validate().map_err(|e| e.to_string())?;
        Ok(params)
    }

    fn instances(&self, trials: usize) -> Result<Vec<Instance>, String> {
        let first = self.params(self.seed)?;
        let fixed = first.matrix_kind.fixed_shape().is_some();
        let shared = if fixed { Some(Arc::new(first.matrix().map_err(|e| e.to_string())?)) } else { None };
        (0..trials as u64)
            .map(|t| {
                let params = self.params(self.seed.wrapping_add(t))?;
                let a = match &shared {
                    Some(a) => a.clone(),
                    None => Arc::new(params.matrix().map_err(|e| e.to_string())?),
                };
                gen_instance_with_matrix(&params, a).map_err(|e| e.to_string())
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverTrace {
    pub solver: &'static str,
    pub magnitudes: Vec<f64>,
    pub iterations: usize,
    pub halting_reason: String,
    pub r_error: Option<f64>,
    pub objective: f64,
    pub t_rate: f64,
    pub tc_rate: f64,
    /// f(x^k) per iteration (residual energy for AMP).
    pub objective_trace: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Recovery {
    pub m: usize,
    pub n: usize,
    pub block_len: usize,
    pub truth: Vec<f64>,
    pub solvers: Vec<SolverTrace>,
}

fn trace(name: &'static str, inst: &Instance, res: &SolveResult, zero_tol: f64) -> Result<SolverTrace, String> {
    let err = |e: blockcs::Error| e.to_string();
    let r_error = relative_error(&res.x_hat, &inst.x_true).map_err(err)?;
    let (t_rate, tc_rate) = support_rates(&res.x_hat, &inst.x_true, zero_tol).map_err(err)?;
    Ok(SolverTrace {
        solver: name,
        magnitudes: res.x_hat.iter().map(|z| z.norm()).collect(),
        iterations: res.iterations,
        halting_reason: format!("{:?}", res.halting_reason),
        r_error: r_error.is_finite().then_some(r_error),
        objective: objective(&inst.problem, &res.x_hat).map_err(err)?,
        t_rate,
        tc_rate,
        objective_trace: res.history.iter().map(|h| h.objective).collect(),
    })
}

fn solve_both(inst: &Instance) -> Result<[SolveResult; 2], String> {
    let b = bnhtp_solve(&inst.problem, &SolverConfig::default(), None).map_err(|e| e.to_string())?;
    let a = amp_solve(&inst.problem, &AmpConfig::default()).map_err(|e| e.to_string())?;
    Ok([b, a])
}

pub fn recover(s: &Scenario) -> Result<Recovery, String> {
    let inst = s.instances(1)?.remove(0);
    let [b, a] = solve_both(&inst)?;
    Ok(Recovery {
        m: inst.problem.m(),
        n: inst.problem.n(),
        block_len: inst.problem.bs.lengths()[0],
        truth: inst.x_true.iter().map(|z| z.norm()).collect(),
        solvers: vec![trace("bnhtp", &inst, &b, s.zero_tol)?, trace("amp", &inst, &a, s.zero_tol)?],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseRequest {
    pub matrix: MatrixKind,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
}

impl Default for PhaseRequest {
    fn default() -> Self {
        Self {
            matrix: MatrixKind::A3,
            rows: 128,
            cols: 256,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseImage {
    pub rows: usize,
    pub cols: usize,
    pub phase: Vec<f64>,
}

pub fn matrix_phase(r: &PhaseRequest) -> Result<PhaseImage, String> {
    let (rows, cols) = match r.matrix.fixed_shape() {
        Some((m, n)) => (r.rows.min(m), r.cols.min(n)),
        None => (r.rows, r.cols),
    };
    if rows == 0 || cols == 0 || rows * cols > MAX_ENTRIES {
        return Err(format!("window {rows}x{cols} out of range"));
    }
    let phase = match r.matrix {
        MatrixKind::A3 | MatrixKind::A4 => (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| exp_matrix_entry(r.matrix, i, j).expect("inside the window").arg())
            .collect(),
        _ => gen_matrix(r.matrix, rows, cols, r.seed, false)
            .map_err(|e| e.to_string())?
            .row_major_entries()
            .iter()
            .map(|z| z.arg())
            .collect(),
    };
    Ok(PhaseImage { rows, cols, phase })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepRequest {
    pub scenario: Scenario,
    pub trials: usize,
    pub target_fap: f64,
}

impl Default for SweepRequest {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            trials: 100,
            target_fap: 0.01,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepCurve {
    pub solver: &'static str,
    pub thresholds: Vec<f64>,
    pub fap: Vec<f64>,
    pub fir: Vec<f64>,
    /// Calibrated operating point for `target_fap`.
    pub threshold: f64,
    pub achieved_fap: f64,
    pub achieved_fir: f64,
}

fn curve(solver: &'static str, maxima: &UserMaxima, target: f64) -> Result<SweepCurve, String> {
    let op = calibrate_maxima(maxima, target).map_err(|e| e.to_string())?;
    let top = maxima.inactive.iter().chain(&maxima.active).copied().fold(0.0, f64::max);
    let thresholds: Vec<f64> = (0..=SWEEP_POINTS).map(|k| top * k as f64 / SWEEP_POINTS as f64).collect();
    Ok(SweepCurve {
        solver,
        fap: thresholds.iter().map(|&t| maxima.fap(t)).collect(),
        fir: thresholds.iter().map(|&t| maxima.fir(t)).collect(),
        thresholds,
        threshold: op.threshold,
        achieved_fap: op.fap,
        achieved_fir: op.fir,
    })
}

pub fn threshold_sweep(r: &SweepRequest) -> Result<Vec<SweepCurve>, String> {
    if r.trials == 0 || r.trials > MAX_TRIALS {
        return Err(format!("trials must lie in 1..={MAX_TRIALS}"));
    }
    let mut pooled = [UserMaxima::default(), UserMaxima::default()];
    for inst in r.scenario.instances(r.trials)? {
        let truth = [inst.x_true.clone()];
        for (slot, res) in pooled.iter_mut().zip(solve_both(&inst)?) {
            slot.extend(UserMaxima::collect(&[res.x_hat], &truth, &inst.problem.bs).map_err(|e| e.to_string())?);
        }
    }
    let [b, a] = pooled;
    Ok(vec![curve("bnhtp", &b, r.target_fap)?, curve("amp", &a, r.target_fap)?])
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, String> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    serde_json::from_str(text).map_err(|e| format!("bad request: {e}"))
}

fn emit<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

pub fn recover_json(text: &str) -> Result<String, String> {
    emit(&recover(&parse(text)?)?)
}

pub fn matrix_phase_json(text: &str) -> Result<String, String> {
    emit(&matrix_phase(&parse(text)?)?)
}

pub fn threshold_sweep_json(text: &str) -> Result<String, String> {
    emit(&threshold_sweep(&parse(text)?)?)
}

#[derive(Serialize)]
struct Defaults {
    scenario: Scenario,
    phase: PhaseRequest,
    sweep: SweepRequest,
}

pub fn defaults_json() -> String {
    serde_json::to_string(&Defaults {
        scenario: Scenario::default(),
        phase: PhaseRequest::default(),
        sweep: SweepRequest::default(),
    })
    .expect("defaults serialize")
}
