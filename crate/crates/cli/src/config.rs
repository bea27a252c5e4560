//! Experiment configuration, read from JSON.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use blockcs::amp::AmpConfig;
use blockcs::datagen::{MatrixKind, ScenarioParams};
use blockcs::metrics::ErrorDenominator;
use blockcs::{BlockStructure, SolverConfig};
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Bnhtp,
    Amp,
}

impl SolverKind {
    pub fn label(self) -> &'static str {
        match self {
            SolverKind::Bnhtp => "bnhtp",
            SolverKind::Amp => "amp",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Block layout shared by every cell. `block_len = None` splits the columns
/// of each matrix kind evenly over `blocks`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Layout {
    pub blocks: usize,
    pub block_len: Option<usize>,
    pub sparsity: usize,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            blocks: 64,
            block_len: None,
            sparsity: 1,
        }
    }
}

/// Small-instance settings for the `oracle` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    pub m: usize,
    pub blocks: usize,
    pub block_len: usize,
    pub sparsity: usize,
    pub instances: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            m: 8,
            blocks: 3,
            block_len: 4,
            sparsity: 1,
            instances: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(deserialize_with = "one_or_many")]
    pub matrix: Vec<MatrixKind>,
    pub s_bar: Vec<usize>,
    pub sigma: Vec<f64>,
    pub trials: usize,
    #[serde(alias = "master_seed")]
    pub seed: u64,
    /// Rows for the random ensembles; the exponential kinds fix their own.
    pub m: usize,
    /// Columns for the random ensembles.
    pub n: usize,
    pub layout: Layout,
    pub beta: f64,
    pub normalize_columns: bool,
    pub solvers: Vec<SolverKind>,
    pub bnhtp: SolverConfig,
    pub amp: AmpConfig,
    /// Enables the detection protocol when set.
    pub target_fap: Option<f64>,
    /// Recovered moduli at or below this count as zero in the T/Tc rates.
    pub zero_tol: f64,
    pub error_denominator: ErrorDenominator,
    pub output_dir: PathBuf,
    pub oracle: OracleSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            matrix: vec![MatrixKind::A1],
            s_bar: vec![20],
            sigma: vec![0.001],
            trials: 5,
            seed: 0,
            m: 839,
            n: 2048,
            layout: Layout::default(),
            beta: 1.0,
            normalize_columns: false,
            solvers: vec![SolverKind::Bnhtp, SolverKind::Amp],
            bnhtp: SolverConfig::default(),
            amp: AmpConfig::default(),
            target_fap: None,
            zero_tol: 1e-3,
            error_denominator: ErrorDenominator::Recovered,
            output_dir: PathBuf::from("out"),
            oracle: OracleSpec::default(),
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<MatrixKind>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(MatrixKind),
        Many(Vec<MatrixKind>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(k) => vec![k],
        OneOrMany::Many(v) => v,
    })
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                bail!("{name}: must list at least one value");
            }
            Ok(())
        };
        nonempty("matrix", self.matrix.len())?;
        nonempty("s_bar", self.s_bar.len())?;
        nonempty("sigma", self.sigma.len())?;
        nonempty("solvers", self.solvers.len())?;
        if self.trials == 0 {
            bail!("trials: must be at least 1");
        }
        if let Some(&s) = self.sigma.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            bail!("sigma: {s} is not a finite nonnegative value");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            bail!("beta: {} must be positive", self.beta);
        }
        if !(self.zero_tol >= 0.0) {
            bail!("zero_tol: {} must be nonnegative", self.zero_tol);
        }
        if let Some(t) = self.target_fap {
            if !(t > 0.0 && t < 1.0) {
                bail!("target_fap: {t} must lie in (0, 1)");
            }
        }
        if self.m == 0 || self.n == 0 {
            bail!("m, n: must be positive");
        }
        if self.layout.blocks == 0 {
            bail!("layout.blocks: must be positive");
        }
        self.bnhtp.validate().context("bnhtp")?;
        self.amp.validate().context("amp")?;
        for &kind in &self.matrix {
            for &s_bar in &self.s_bar {
                self.scenario(kind, s_bar, 0.0, 0).with_context(|| format!("cell {kind}, s_bar = {s_bar}"))?;
            }
        }
        let o = &self.oracle;
        BlockStructure::uniform(o.blocks, o.block_len, o.sparsity).context("oracle")?;
        if o.m == 0 || o.instances == 0 {
            bail!("oracle.m, oracle.instances: must be positive");
        }
        Ok(())
    }

    /// Matrix shape used for `kind`.
    pub fn shape(&self, kind: MatrixKind) -> (usize, usize) {
        kind.fixed_shape().unwrap_or((self.m, self.n))
    }

    pub fn block_structure(&self, kind: MatrixKind) -> Result<BlockStructure> {
        let (_, n) = self.shape(kind);
        let l = &self.layout;
        let len = match l.block_len {
            Some(len) => len,
            None => {
                if n % l.blocks != 0 {
                    bail!("layout: {n} columns of {kind} do not split into {} equal blocks", l.blocks);
                }
                n / l.blocks
            }
        };
        if len * l.blocks != n {
            bail!("layout: {} blocks of {len} do not cover the {n} columns of {kind}", l.blocks);
        }
        Ok(BlockStructure::uniform(l.blocks, len, l.sparsity)?)
    }

    pub fn scenario(&self, kind: MatrixKind, s_bar: usize, sigma: f64, seed: u64) -> Result<ScenarioParams> {
        let (m, _) = self.shape(kind);
        let params = ScenarioParams {
            m,
            bs: self.block_structure(kind)?,
            s_bar,
            beta_signal: self.beta,
            sigma_noise: sigma,
            matrix_kind: kind,
            normalize_columns: self.normalize_columns,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    /// Seed of trial `t`.
    pub fn trial_seed(&self, t: usize) -> u64 {
        self.seed.wrapping_add(t as u64)
    }
}

/// Parses a JSON config; syntax errors carry line and column, unknown keys
/// are rejected by name and range violations name the field.
pub fn parse_config_str(text: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = serde_json::from_str(text).map_err(|e| {
        if e.is_syntax() || e.is_eof() {
            anyhow::anyhow!("syntax error at line {} column {}: {e}", e.line(), e.column())
        } else {
            anyhow::anyhow!("invalid config at line {}: {e}", e.line())
        }
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config_str(&text).with_context(|| format!("config {}", path.display()))
}

/// Pretty JSON of the spec, every field spelled out.
pub fn emit_config(spec: &ExperimentSpec) -> String {
    serde_json::to_string_pretty(spec).expect("spec serializes")
}

pub fn emit_defaults() -> String {
    emit_config(&ExperimentSpec::default())
}
