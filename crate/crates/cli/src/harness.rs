//! Seeded trial batteries: recovery tables, the detection protocol and the
//! small-instance oracle suite.

use std::collections::hash_map::{Entry, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use blockcs::amp::amp_solve;
use blockcs::datagen::{gen_gaussian, gen_instance_with_matrix, Instance, MatrixKind, ScenarioParams};
use blockcs::metrics::{
    aggregate, calibrate_maxima, objective_metric, relative_error_with, support_rates, DetectionStats, MetricsRecord,
    UserMaxima,
};
use blockcs::oracle::{exhaustive_solve, verify_stationary};
use blockcs::solver::{auto_tau, bnhtp_solve, HaltingReason};
use blockcs::{BlockStructure, SensingMatrix, SolveResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentSpec, SolverKind};

pub const TABLE_HEADER: [&str; 12] = [
    "matrix", "s_bar", "sigma", "solver", "iter", "time_s", "r_error", "obj_value", "t_rate", "tc_rate", "seed", "trials",
];

/// One solver run on one instance, as written to the raw JSON-lines files.
/// Wall time is kept out so the files are reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub solver: SolverKind,
    pub iterations: usize,
    pub halting_reason: Option<HaltingReason>,
    pub r_error: f64,
    pub obj_value: f64,
    pub t_rate: f64,
    pub tc_rate: f64,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_time: f64,
}

impl TrialRecord {
    fn metrics(&self) -> MetricsRecord {
        MetricsRecord {
            iterations: self.iterations as f64,
            wall_time: self.wall_time,
            r_error: self.r_error,
            obj_value: self.obj_value,
            t_rate: self.t_rate,
            tc_rate: self.tc_rate,
        }
    }
}

#[derive(Debug)]
pub struct SolverRun {
    pub record: TrialRecord,
    /// Present when the batch was asked to keep full results.
    pub solve: Option<SolveResult>,
}

#[derive(Debug)]
pub struct Cell {
    pub matrix: MatrixKind,
    pub s_bar: usize,
    pub sigma: f64,
    pub solver: SolverKind,
    pub runs: Vec<SolverRun>,
    pub summary: MetricsRecord,
}

/// Matrices shared across trials: the exponential kinds are seed-free.
#[derive(Default)]
struct MatrixCache {
    fixed: HashMap<MatrixKind, Arc<SensingMatrix>>,
}

impl MatrixCache {
    fn get(&mut self, spec: &ExperimentSpec, kind: MatrixKind) -> Result<Option<Arc<SensingMatrix>>> {
        if kind.fixed_shape().is_none() {
            return Ok(None);
        }
        if let Entry::Vacant(e) = self.fixed.entry(kind) {
            e.insert(Arc::new(spec.scenario(kind, 0, 0.0, 0)?.matrix()?));
        }
        Ok(self.fixed.get(&kind).cloned())
    }
}

fn instance(params: &ScenarioParams, shared: Option<&Arc<SensingMatrix>>) -> Result<Instance> {
    let a = match shared {
        Some(a) => a.clone(),
        None => Arc::new(params.matrix()?),
    };
    Ok(gen_instance_with_matrix(params, a)?)
}

fn solve_one(spec: &ExperimentSpec, kind: SolverKind, inst: &Instance) -> blockcs::Result<SolveResult> {
    match kind {
        SolverKind::Bnhtp => bnhtp_solve(&inst.problem, &spec.bnhtp, None),
        SolverKind::Amp => amp_solve(&inst.problem, &spec.amp),
    }
}

fn evaluate(spec: &ExperimentSpec, kind: SolverKind, inst: &Instance, trial: usize, seed: u64) -> (TrialRecord, Option<SolveResult>) {
    let mut rec = TrialRecord {
        trial,
        seed,
        solver: kind,
        iterations: 0,
        halting_reason: None,
        r_error: f64::INFINITY,
        obj_value: f64::INFINITY,
        t_rate: 0.0,
        tc_rate: 0.0,
        error: None,
        wall_time: 0.0,
    };
    let solved = solve_one(spec, kind, inst).and_then(|res| {
        let r_error = relative_error_with(&res.x_hat, &inst.x_true, spec.error_denominator)?;
        let obj_value = objective_metric(&inst.problem, &res.x_hat)?;
        let (t_rate, tc_rate) = support_rates(&res.x_hat, &inst.x_true, spec.zero_tol)?;
        Ok((res, r_error, obj_value, t_rate, tc_rate))
    });
    match solved {
        Ok((res, r_error, obj_value, t_rate, tc_rate)) => {
            rec.iterations = res.iterations;
            rec.halting_reason = Some(res.halting_reason);
            rec.wall_time = res.wall_time;
            rec.r_error = r_error;
            rec.obj_value = obj_value;
            rec.t_rate = t_rate;
            rec.tc_rate = tc_rate;
            (rec, Some(res))
        }
        Err(e) => {
            rec.error = Some(e.to_string());
            (rec, None)
        }
    }
}

/// Runs every (matrix, s̄, σ) cell for every configured solver. Trials run in
/// parallel; results keep trial order.
pub fn run_grid(spec: &ExperimentSpec, keep_solves: bool) -> Result<Vec<Cell>> {
    spec.validate()?;
    let mut cache = MatrixCache::default();
    let mut cells = Vec::new();
    for &kind in &spec.matrix {
        let shared = cache.get(spec, kind)?;
        for &s_bar in &spec.s_bar {
            for &sigma in &spec.sigma {
                let per_trial: Vec<Result<Vec<SolverRun>>> = (0..spec.trials)
                    .into_par_iter()
                    .map(|t| {
                        let seed = spec.trial_seed(t);
                        let params = spec.scenario(kind, s_bar, sigma, seed)?;
                        let inst = instance(&params, shared.as_ref())?;
                        Ok(spec
                            .solvers
                            .iter()
                            .map(|&solver| {
                                let (record, solve) = evaluate(spec, solver, &inst, t, seed);
                                SolverRun {
                                    record,
                                    solve: solve.filter(|_| keep_solves),
                                }
                            })
                            .collect())
                    })
                    .collect();
                let mut by_solver: Vec<Vec<SolverRun>> = spec.solvers.iter().map(|_| Vec::new()).collect();
                for runs in per_trial {
                    for (slot, run) in by_solver.iter_mut().zip(runs?) {
                        slot.push(run);
                    }
                }
                for (&solver, runs) in spec.solvers.iter().zip(by_solver) {
                    let summary = aggregate(&runs.iter().map(|r| r.record.metrics()).collect::<Vec<_>>())?;
                    cells.push(Cell {
                        matrix: kind,
                        s_bar,
                        sigma,
                        solver,
                        runs,
                        summary,
                    });
                }
            }
        }
    }
    Ok(cells)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(path)?))
}

fn finish<W: Write>(w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.into_inner()
        .map_err(|e| anyhow::anyhow!("writing {}: {}", path.display(), e.error()))?
        .flush()
        .with_context(|| format!("writing {}", path.display()))
}

fn cell_stem(kind: MatrixKind, s_bar: usize, sigma: f64) -> String {
    format!("{kind}_s{s_bar}_sigma{sigma}")
}

fn write_raw(path: &Path, runs: &[&SolverRun]) -> Result<()> {
    let mut w = create(path)?;
    for run in runs {
        serde_json::to_writer(&mut w, &run.record)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

/// Paths written by [`run_table`].
#[derive(Clone, Debug)]
pub struct TableOutputs {
    pub table: PathBuf,
    pub raw: Vec<PathBuf>,
    pub timings: PathBuf,
}

/// Writes `table.csv`, one `raw/<cell>.jsonl` per cell and `timings.csv`.
/// The `time_s` column stays empty unless `record_time` is set, keeping the
/// table byte-reproducible; wall times always go to `timings.csv`.
pub fn run_table(spec: &ExperimentSpec, out: &Path, record_time: bool) -> Result<(Vec<Cell>, TableOutputs)> {
    let cells = run_grid(spec, false)?;
    let table = out.join("table.csv");
    let mut w = csv_writer(&table)?;
    w.write_record(TABLE_HEADER)?;
    for c in &cells {
        let s = &c.summary;
        let time = if record_time { s.wall_time.to_string() } else { String::new() };
        w.write_record([
            c.matrix.to_string(),
            c.s_bar.to_string(),
            c.sigma.to_string(),
            c.solver.to_string(),
            s.iterations.to_string(),
            time,
            s.r_error.to_string(),
            s.obj_value.to_string(),
            s.t_rate.to_string(),
            s.tc_rate.to_string(),
            spec.seed.to_string(),
            spec.trials.to_string(),
        ])?;
    }
    finish(w, &table)?;

    let mut raw = Vec::new();
    for chunk in cells.chunk_by(|a, b| (a.matrix, a.s_bar, a.sigma.to_bits()) == (b.matrix, b.s_bar, b.sigma.to_bits())) {
        let path = out.join("raw").join(format!("{}.jsonl", cell_stem(chunk[0].matrix, chunk[0].s_bar, chunk[0].sigma)));
        let runs: Vec<&SolverRun> = chunk.iter().flat_map(|c| &c.runs).collect();
        write_raw(&path, &runs)?;
        raw.push(path);
    }

    let timings = out.join("timings.csv");
    let mut w = csv_writer(&timings)?;
    w.write_record(["matrix", "s_bar", "sigma", "solver", "trial", "time_s"])?;
    for c in &cells {
        for r in &c.runs {
            w.write_record([
                c.matrix.to_string(),
                c.s_bar.to_string(),
                c.sigma.to_string(),
                c.solver.to_string(),
                r.record.trial.to_string(),
                r.record.wall_time.to_string(),
            ])?;
        }
    }
    finish(w, &timings)?;
    Ok((cells, TableOutputs { table, raw, timings }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRow {
    pub sigma: f64,
    pub solver: SolverKind,
    pub stats: DetectionStats,
    pub summary: MetricsRecord,
}

/// Detection protocol on a single (matrix, s̄): per σ and solver, `trials`
/// instances, thresholds calibrated to `target_fap`.
pub fn run_detection_rows(spec: &ExperimentSpec) -> Result<Vec<DetectionRow>> {
    spec.validate()?;
    let Some(target) = spec.target_fap else {
        bail!("target_fap: required for the detection protocol");
    };
    if spec.matrix.len() != 1 || spec.s_bar.len() != 1 {
        bail!("detection runs one matrix kind and one s_bar value at a time");
    }
    let (kind, s_bar) = (spec.matrix[0], spec.s_bar[0]);
    let shared = MatrixCache::default().get(spec, kind)?;
    let bs: BlockStructure = spec.block_structure(kind)?;
    let mut rows = Vec::new();
    for &sigma in &spec.sigma {
        let per_trial: Vec<Result<Vec<(TrialRecord, UserMaxima)>>> = (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let seed = spec.trial_seed(t);
                let params = spec.scenario(kind, s_bar, sigma, seed)?;
                let inst = instance(&params, shared.as_ref())?;
                spec.solvers
                    .iter()
                    .map(|&solver| {
                        let (record, solve) = evaluate(spec, solver, &inst, t, seed);
                        let rec = match &solve {
                            Some(res) => res.x_hat.clone(),
                            None => blockcs::ComplexSignal::zeros(bs.total_len()),
                        };
                        let maxima = UserMaxima::collect(&[rec], std::slice::from_ref(&inst.x_true), &bs)?;
                        Ok((record, maxima))
                    })
                    .collect()
            })
            .collect();
        let mut pooled: Vec<(UserMaxima, Vec<MetricsRecord>)> =
            spec.solvers.iter().map(|_| (UserMaxima::default(), Vec::new())).collect();
        for runs in per_trial {
            for ((maxima, metrics), (record, m)) in pooled.iter_mut().zip(runs?) {
                maxima.extend(m);
                metrics.push(record.metrics());
            }
        }
        for (&solver, (maxima, metrics)) in spec.solvers.iter().zip(pooled) {
            rows.push(DetectionRow {
                sigma,
                solver,
                stats: calibrate_maxima(&maxima, target)?,
                summary: aggregate(&metrics)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct DetectionOutputs {
    pub detection: PathBuf,
    pub panels: Vec<PathBuf>,
}

pub const PANELS: [&str; 4] = ["iterations", "r_error", "obj_value", "fir"];

/// Writes `detection.csv` and one `panel_<name>.csv` per figure panel.
pub fn run_detection(spec: &ExperimentSpec, out: &Path) -> Result<(Vec<DetectionRow>, DetectionOutputs)> {
    let rows = run_detection_rows(spec)?;
    let detection = out.join("detection.csv");
    let mut w = csv_writer(&detection)?;
    w.write_record([
        "matrix", "s_bar", "sigma", "solver", "fap", "fir", "threshold", "trials", "iter", "r_error", "obj_value",
    ])?;
    for r in &rows {
        w.write_record([
            spec.matrix[0].to_string(),
            spec.s_bar[0].to_string(),
            r.sigma.to_string(),
            r.solver.to_string(),
            r.stats.fap.to_string(),
            r.stats.fir.to_string(),
            r.stats.threshold.to_string(),
            r.stats.trials.to_string(),
            r.summary.iterations.to_string(),
            r.summary.r_error.to_string(),
            r.summary.obj_value.to_string(),
        ])?;
    }
    finish(w, &detection)?;

    let mut panels = Vec::new();
    for name in PANELS {
        let path = out.join(format!("panel_{name}.csv"));
        let mut w = csv_writer(&path)?;
        w.write_record(["sigma", "solver", "value"])?;
        for r in &rows {
            let value = match name {
                "iterations" => r.summary.iterations,
                "r_error" => r.summary.r_error,
                "obj_value" => r.summary.obj_value,
                _ => r.stats.fir,
            };
            w.write_record([r.sigma.to_string(), r.solver.to_string(), value.to_string()])?;
        }
        finish(w, &path)?;
        panels.push(path);
    }
    Ok((rows, DetectionOutputs { detection, panels }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleRow {
    pub instance: usize,
    pub seed: u64,
    pub oracle_objective: f64,
    pub bnhtp_objective: f64,
    pub matched: bool,
    pub stationary: bool,
    pub supports_evaluated: u128,
}

#[derive(Debug)]
pub struct OracleRun {
    pub row: OracleRow,
    pub solve: SolveResult,
    pub problem: blockcs::Problem,
}

/// BNHTP's objective within relative 1e-6 of the global minimum.
pub fn objective_matches(bnhtp: f64, best: f64) -> bool {
    bnhtp <= best * (1.0 + 1e-6) + 1e-12
}

/// Noiseless planted instances (one active entry per block, Gaussian matrix),
/// each solved by BNHTP and by exhaustive enumeration.
pub fn run_oracle_suite(spec: &ExperimentSpec) -> Result<Vec<OracleRun>> {
    spec.validate()?;
    let o = &spec.oracle;
    let bs = BlockStructure::uniform(o.blocks, o.block_len, o.sparsity)?;
    (0..o.instances)
        .into_par_iter()
        .map(|i| {
            let seed = spec.trial_seed(i);
            let params = ScenarioParams {
                m: o.m,
                bs: bs.clone(),
                s_bar: o.blocks,
                beta_signal: spec.beta,
                sigma_noise: 0.0,
                matrix_kind: MatrixKind::A1,
                normalize_columns: false,
                seed,
            };
            let a = Arc::new(gen_gaussian(o.m, bs.total_len(), seed)?);
            let inst = gen_instance_with_matrix(&params, a)?;
            let p = inst.problem;
            let best = exhaustive_solve(&p)?;
            let solve = bnhtp_solve(&p, &spec.bnhtp, None)?;
            let bnhtp_objective = objective_metric(&p, &solve.x_hat)?;
            let row = OracleRow {
                instance: i,
                seed,
                oracle_objective: best.best_objective,
                bnhtp_objective,
                matched: objective_matches(bnhtp_objective, best.best_objective),
                stationary: verify_stationary(&p, &best.best_x, auto_tau(&p))?,
                supports_evaluated: best.supports_evaluated,
            };
            Ok(OracleRun { row, solve, problem: p })
        })
        .collect()
}

pub fn write_oracle(runs: &[OracleRun], out: &Path) -> Result<PathBuf> {
    let path = out.join("oracle.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "instance", "seed", "oracle_objective", "bnhtp_objective", "matched", "stationary", "supports_evaluated",
    ])?;
    for r in runs.iter().map(|r| &r.row) {
        w.write_record([
            r.instance.to_string(),
            r.seed.to_string(),
            r.oracle_objective.to_string(),
            r.bnhtp_objective.to_string(),
            r.matched.to_string(),
            r.stationary.to_string(),
            r.supports_evaluated.to_string(),
        ])?;
    }
    finish(w, &path)?;
    Ok(path)
}
