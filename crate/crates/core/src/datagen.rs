//! Sensing-matrix ensembles and the multi-user block-sparse data model
//! `y = A x + z`.
//!
//! Randomness comes from ChaCha20 seeded with the scenario seed, split into
//! independent streams: [`STREAM_MATRIX`] for the sensing matrix,
//! [`STREAM_SIGNAL`] for user activity, positions and amplitudes, and
//! [`STREAM_NOISE`] for the measurement noise. Each component is therefore
//! reproducible on its own and across platforms.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SensingMatrix;
use crate::model::Problem;
use crate::types::{BlockStructure, ComplexSignal, C64};

pub const STREAM_MATRIX: u64 = 1;
pub const STREAM_SIGNAL: u64 = 2;
pub const STREAM_NOISE: u64 = 3;

/// Row count of the exponential-type matrices (a prime).
pub const EXP_ROWS: usize = 839;
pub const EXP1_COLS: usize = 2048;
pub const EXP2_COLS: usize = 5952;

/// (first column, 1-based; chirp coefficient) per column band.
const EXP1_BANDS: [(usize, u64); 3] = [(1, 420), (833, 419), (1665, 1)];
const EXP2_BANDS: [(usize, u64); 8] = [
    (1, 420),
    (838, 419),
    (1675, 1),
    (2512, 838),
    (3349, 15),
    (4186, 824),
    (5023, 427),
    (5860, 412),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatrixKind {
    /// i.i.d. circularly-symmetric complex Gaussian.
    #[serde(alias = "gaussian", alias = "A1_gaussian")]
    A1,
    /// Randomized partial cosine transform.
    #[serde(alias = "partial_dct", alias = "A2_partial_dct")]
    A2,
    /// Exponential (chirp × Fourier) type I, 839 × 2048.
    #[serde(alias = "exp_type1", alias = "A3_exp_type1")]
    A3,
    /// Exponential type II, 839 × 5952.
    #[serde(alias = "exp_type2", alias = "A4_exp_type2")]
    A4,
}

impl MatrixKind {
    pub fn label(self) -> &'static str {
        match self {
            MatrixKind::A1 => "A1",
            MatrixKind::A2 => "A2",
            MatrixKind::A3 => "A3",
            MatrixKind::A4 => "A4",
        }
    }

    /// Fixed shape for the deterministic ensembles.
    pub fn fixed_shape(self) -> Option<(usize, usize)> {
        match self {
            MatrixKind::A3 => Some((EXP_ROWS, EXP1_COLS)),
            MatrixKind::A4 => Some((EXP_ROWS, EXP2_COLS)),
            _ => None,
        }
    }
}

impl std::str::FromStr for MatrixKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a1" | "gaussian" => Ok(MatrixKind::A1),
            "a2" | "partial_dct" => Ok(MatrixKind::A2),
            "a3" | "exp_type1" => Ok(MatrixKind::A3),
            "a4" | "exp_type2" => Ok(MatrixKind::A4),
            other => Err(Error::Contract(format!("unknown matrix kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// CN(0, variance): independent real and imaginary parts of variance/2.
fn complex_normal(rng: &mut impl Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

/// Entries i.i.d. CN(0, 1).
pub fn gen_gaussian(m: usize, n: usize, seed: u64) -> Result<SensingMatrix> {
    let mut rng = stream_rng(seed, STREAM_MATRIX);
    let entries: Vec<C64> = (0..m * n).map(|_| complex_normal(&mut rng, 1.0)).collect();
    SensingMatrix::from_row_major(m, n, &entries)
}

/// A_{kn} = cos(2π(n−1)ψ_k) + i·cos(2π(n−1)φ_k) with ψ_k, φ_k ~ U[0,1] per row.
pub fn gen_partial_dct(m: usize, n: usize, seed: u64) -> Result<SensingMatrix> {
    let mut rng = stream_rng(seed, STREAM_MATRIX);
    let mut psi = Vec::with_capacity(m);
    let mut phi = Vec::with_capacity(m);
    for _ in 0..m {
        psi.push(rng.random::<f64>());
        phi.push(rng.random::<f64>());
    }
    partial_dct_from_phases(&psi, &phi, n)
}

/// Partial cosine matrix for given per-row phases (one row per entry of `psi`).
pub fn partial_dct_from_phases(psi: &[f64], phi: &[f64], n: usize) -> Result<SensingMatrix> {
    if psi.len() != phi.len() {
        return Err(Error::Dimension {
            what: "partial_dct phases",
            expected: psi.len(),
            got: phi.len(),
        });
    }
    SensingMatrix::from_fn(psi.len(), n, |k, j| {
        let w = 2.0 * PI * j as f64;
        C64::new((w * psi[k]).cos(), (w * phi[k]).cos())
    })
}

/// Integer phase k of exp(iπk/839) for entry (m, n), 1-based:
/// k ≡ c·m(m−1) + 2(m−1)(n−n_b) (mod 1678).
fn exp_phase(row: usize, col: usize, bands: &[(usize, u64)]) -> usize {
    let p = EXP_ROWS as u64;
    let m = row as u64 + 1;
    let nn = col + 1;
    let &(start, c) = bands.iter().rev().find(|(s, _)| *s <= nn).expect("column inside a band");
    let k1 = (c * m * (m - 1)) % (2 * p);
    let k2 = 2 * (((m - 1) * (nn - start) as u64) % p);
    ((k1 + k2) % (2 * p)) as usize
}

fn unit_root(k: usize) -> C64 {
    C64::from_polar(1.0, PI * k as f64 / EXP_ROWS as f64)
}

fn exp_entry(row: usize, col: usize, bands: &[(usize, u64)]) -> C64 {
    unit_root(exp_phase(row, col, bands))
}

fn exp_matrix(cols: usize, bands: &[(usize, u64)]) -> SensingMatrix {
    let roots: Vec<C64> = (0..2 * EXP_ROWS).map(unit_root).collect();
    let mut entries = Vec::with_capacity(EXP_ROWS * cols);
    for i in 0..EXP_ROWS {
        entries.extend((0..cols).map(|j| roots[exp_phase(i, j, bands)]));
    }
    let widths: Vec<usize> = bands
        .iter()
        .enumerate()
        .map(|(b, &(start, _))| bands.get(b + 1).map_or(cols + 1, |next| next.0) - start)
        .collect();
    // Column n_b of each band carries the chirp alone.
    let chirps: Vec<Vec<C64>> = bands
        .iter()
        .map(|&(start, _)| (0..EXP_ROWS).map(|i| roots[exp_phase(i, start - 1, bands)]).collect())
        .collect();
    SensingMatrix::chirp_fourier(EXP_ROWS, widths, chirps, &entries).expect("fixed shape")
}

pub fn gen_exp_type1() -> SensingMatrix {
    exp_matrix(EXP1_COLS, &EXP1_BANDS)
}

pub fn gen_exp_type2() -> SensingMatrix {
    exp_matrix(EXP2_COLS, &EXP2_BANDS)
}

/// Single entry of the type-I/II exponential matrices (0-based indices).
pub fn exp_matrix_entry(kind: MatrixKind, row: usize, col: usize) -> Option<C64> {
    match kind {
        MatrixKind::A3 if row < EXP_ROWS && col < EXP1_COLS => Some(exp_entry(row, col, &EXP1_BANDS)),
        MatrixKind::A4 if row < EXP_ROWS && col < EXP2_COLS => Some(exp_entry(row, col, &EXP2_BANDS)),
        _ => None,
    }
}

/// Builds a matrix of the requested kind; `m`, `n` are ignored for the fixed
/// exponential ensembles.
pub fn gen_matrix(kind: MatrixKind, m: usize, n: usize, seed: u64, normalize: bool) -> Result<SensingMatrix> {
    let a = match kind {
        MatrixKind::A1 => gen_gaussian(m, n, seed)?,
        MatrixKind::A2 => gen_partial_dct(m, n, seed)?,
        MatrixKind::A3 => gen_exp_type1(),
        MatrixKind::A4 => gen_exp_type2(),
    };
    if normalize {
        normalize_columns(&a)
    } else {
        Ok(a)
    }
}

/// Rescales every column to unit Euclidean norm (zero columns left as is).
pub fn normalize_columns(a: &SensingMatrix) -> Result<SensingMatrix> {
    let norms: Vec<f64> = (0..a.cols())
        .map(|j| a.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    SensingMatrix::from_fn(a.rows(), a.cols(), |i, j| {
        if norms[j] > 0.0 {
            a.get(i, j) / norms[j]
        } else {
            a.get(i, j)
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioParams {
    pub m: usize,
    pub bs: BlockStructure,
    /// Number of active users s̄.
    pub s_bar: usize,
    /// Variance β of each active coefficient.
    pub beta_signal: f64,
    /// Noise standard deviation σ.
    pub sigma_noise: f64,
    pub matrix_kind: MatrixKind,
    pub normalize_columns: bool,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            m: 839,
            bs: BlockStructure::uniform(64, 32, 1).expect("static layout"),
            s_bar: 20,
            beta_signal: 1.0,
            sigma_noise: 0.001,
            matrix_kind: MatrixKind::A1,
            normalize_columns: false,
            seed: 0,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if self.s_bar > self.bs.num_blocks() {
            return Err(Error::Contract(format!(
                "s_bar = {} exceeds the number of blocks {}",
                self.s_bar,
                self.bs.num_blocks()
            )));
        }
        if !(self.beta_signal > 0.0) || !(self.sigma_noise >= 0.0) {
            return Err(Error::Contract("beta must be positive and sigma nonnegative".into()));
        }
        if let Some((m, n)) = self.matrix_kind.fixed_shape() {
            if self.m != m || self.bs.total_len() != n {
                return Err(Error::Contract(format!(
                    "{} is {m}x{n} but the scenario asks for {}x{}",
                    self.matrix_kind,
                    self.m,
                    self.bs.total_len()
                )));
            }
        }
        if self.m == 0 {
            return Err(Error::Contract("m must be positive".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Result<SensingMatrix> {
        gen_matrix(self.matrix_kind, self.m, self.bs.total_len(), self.seed, self.normalize_columns)
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub problem: Problem,
    pub x_true: ComplexSignal,
    /// Active block indices, ascending.
    pub active_set: Vec<usize>,
    pub noise: ComplexSignal,
}

/// Generates the matrix and one signal/noise draw from `params.seed`.
pub fn gen_instance(params: &ScenarioParams) -> Result<Instance> {
    params.validate()?;
    let a = Arc::new(params.matrix()?);
    gen_instance_with_matrix(params, a)
}

/// Draws signal and noise from `params.seed` on an existing matrix.
pub fn gen_instance_with_matrix(params: &ScenarioParams, a: Arc<SensingMatrix>) -> Result<Instance> {
    params.validate()?;
    let bs = &params.bs;
    let n = bs.total_len();
    if a.rows() != params.m || a.cols() != n {
        return Err(Error::Contract(format!(
            "matrix is {}x{} but the scenario asks for {}x{n}",
            a.rows(),
            a.cols(),
            params.m
        )));
    }

    let mut rng = stream_rng(params.seed, STREAM_SIGNAL);
    let mut active_set = sample(&mut rng, bs.num_blocks(), params.s_bar).into_vec();
    active_set.sort_unstable();
    let mut x_true = ComplexSignal::zeros(n);
    for &blk in &active_set {
        let j = bs.offsets()[blk] + rng.random_range(0..bs.lengths()[blk]);
        x_true[j] = complex_normal(&mut rng, params.beta_signal);
    }

    let mut noise_rng = stream_rng(params.seed, STREAM_NOISE);
    let noise: ComplexSignal = (0..params.m)
        .map(|_| complex_normal(&mut noise_rng, params.sigma_noise * params.sigma_noise))
        .collect();

    // Same product as the objective, so σ = 0 gives f(x_true) = 0 exactly.
    let clean = a.apply(&x_true);
    let y: ComplexSignal = clean.iter().zip(noise.iter()).map(|(c, z)| c + z).collect();

    Ok(Instance {
        problem: Problem::new(a, y, bs.clone())?,
        x_true,
        active_set,
        noise,
    })
}

const BCSM_MAGIC: &[u8; 4] = b"BCSM";
pub const BCSM_VERSION: u32 = 1;

/// Writes `"BCSM"`, version, m, n (u32 LE) then row-major (re, im) f64 LE pairs.
pub fn write_bcsm(a: &SensingMatrix, mut w: impl Write) -> Result<()> {
    let dim = |v: usize| u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")));
    w.write_all(BCSM_MAGIC)?;
    w.write_all(&BCSM_VERSION.to_le_bytes())?;
    w.write_all(&dim(a.rows())?.to_le_bytes())?;
    w.write_all(&dim(a.cols())?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(a.rows() * a.cols() * 16);
    for z in a.row_major_entries() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_bcsm(mut r: impl Read) -> Result<SensingMatrix> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != BCSM_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != BCSM_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (m, n) = (word(8) as usize, word(12) as usize);
    let mut body = vec![0u8; m * n * 16];
    r.read_exact(&mut body)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after matrix body".into()));
    }
    let entries: Vec<C64> = body
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[0..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..16].try_into().expect("8 bytes")),
            )
        })
        .collect();
    SensingMatrix::from_row_major(m, n, &entries)
}
