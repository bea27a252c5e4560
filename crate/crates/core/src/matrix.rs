//! Dense complex sensing matrix with cached spectral constants.
//!
//! Storage is row-major with the real and imaginary parts in separate planes so
//! the matrix-vector kernels vectorize. Matrices built from column bands of a
//! chirp-modulated DFT can also carry an FFT form of themselves, which then
//! serves the full products `A·x` and `Aᴴ·r`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};
use crate::types::C64;

const POWER_MAX_ITER: usize = 200;
const POWER_REL_TOL: f64 = 1e-10;
/// Relative inflation applied to the power-iteration estimate of λ_max(AᴴA).
pub const LAMBDA_MARGIN: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct SensingMatrix {
    m: usize,
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    lambda_max: f64,
    alpha_f: f64,
    fast: Option<Arc<ChirpFourier>>,
}

/// `A = scale·[D_1 F_{:,0..w_1}, D_2 F_{:,0..w_2}, …]` where `F` is the
/// unnormalized inverse DFT of size `m` and `D_b` a diagonal of unit phases.
struct ChirpFourier {
    /// Column count of each band.
    widths: Vec<usize>,
    /// Diagonal of each band, length m.
    chirps: Vec<Vec<C64>>,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for ChirpFourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChirpFourier")
            .field("widths", &self.widths)
            .field("scale", &self.scale)
            .finish_non_exhaustive()
    }
}

impl ChirpFourier {
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let m = self.chirps[0].len();
        let mut out = vec![C64::new(0.0, 0.0); m];
        let mut buf = vec![C64::new(0.0, 0.0); m];
        let mut start = 0;
        for (w, chirp) in self.widths.iter().zip(&self.chirps) {
            buf[..*w].copy_from_slice(&x[start..start + w]);
            buf[*w..].fill(C64::new(0.0, 0.0));
            self.inverse.process(&mut buf);
            for ((o, b), c) in out.iter_mut().zip(&buf).zip(chirp) {
                *o += c * b;
            }
            start += w;
        }
        if self.scale != 1.0 {
            out.iter_mut().for_each(|z| *z *= self.scale);
        }
        out
    }

    fn apply_adjoint(&self, r: &[C64]) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.widths.iter().sum());
        for (w, chirp) in self.widths.iter().zip(&self.chirps) {
            let mut buf: Vec<C64> = r.iter().zip(chirp).map(|(z, c)| c.conj() * z).collect();
            self.forward.process(&mut buf);
            out.extend(buf[..*w].iter().map(|z| z * self.scale));
        }
        out
    }
}

impl SensingMatrix {
    /// Builds from row-major entries and computes λ_max(AᴴA) and α_f.
    pub fn from_row_major(m: usize, n: usize, entries: &[C64]) -> Result<Self> {
        let mut a = Self::unanalysed(m, n, entries)?;
        a.refresh_spectrum();
        Ok(a)
    }

    fn unanalysed(m: usize, n: usize, entries: &[C64]) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Contract(format!("matrix must be non-empty, got {m}x{n}")));
        }
        check_len("matrix entries", m * n, entries.len())?;
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("sensing matrix"));
        }
        let re = entries.iter().map(|z| z.re).collect();
        let im = entries.iter().map(|z| z.im).collect();
        Ok(Self {
            m,
            n,
            re,
            im,
            lambda_max: 0.0,
            alpha_f: 0.0,
            fast: None,
        })
    }

    /// Band-structured chirp/DFT matrix with `m` rows. `chirps[b][i]` is the
    /// row-`i` phase of band `b` and `widths[b]` its column count; entry
    /// `(i, k)` of band `b` is `chirps[b][i]·exp(2πi·i·k/m)`. `entries` must be
    /// the same matrix in row-major order.
    pub(crate) fn chirp_fourier(m: usize, widths: Vec<usize>, chirps: Vec<Vec<C64>>, entries: &[C64]) -> Result<Self> {
        let n = widths.iter().sum();
        if widths.len() != chirps.len() || chirps.iter().any(|c| c.len() != m) || widths.iter().any(|&w| w > m) {
            return Err(Error::Contract("inconsistent chirp/DFT band description".into()));
        }
        let mut a = Self::unanalysed(m, n, entries)?;
        let mut planner = FftPlanner::new();
        a.fast = Some(Arc::new(ChirpFourier {
            widths,
            chirps,
            scale: 1.0,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        }));
        a.refresh_spectrum();
        Ok(a)
    }

    /// Whether full products run through an FFT instead of the dense kernels.
    pub fn has_fast_transform(&self) -> bool {
        self.fast.is_some()
    }

    /// Same matrix, dense kernels only.
    pub fn without_fast_transform(&self) -> Self {
        Self {
            fast: None,
            ..self.clone()
        }
    }

    pub fn from_fn(m: usize, n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        let mut entries = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                entries.push(f(i, j));
            }
        }
        Self::from_row_major(m, n, &entries)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
            .expect("identity is well formed")
    }

    fn refresh_spectrum(&mut self) {
        let raw = self.power_iteration();
        self.lambda_max = raw * (1.0 + LAMBDA_MARGIN);
        self.alpha_f = if self.lambda_max > 0.0 {
            1.0 / (2.0 * self.lambda_max)
        } else {
            f64::INFINITY
        };
    }

    /// Largest eigenvalue of AᴴA by power iteration from a fixed pseudo-random start.
    fn power_iteration(&self) -> f64 {
        let mut rng = ChaCha20Rng::seed_from_u64(0x5eed_1a3b_da7a);
        let mut v: Vec<C64> = (0..self.n)
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let nv = crate::types::norm_sqr(&v).sqrt();
        v.iter_mut().for_each(|z| *z /= nv);
        let mut lambda = 0.0;
        for _ in 0..POWER_MAX_ITER {
            let w = self.apply_adjoint(&self.apply(&v));
            let nw = crate::types::norm_sqr(&w).sqrt();
            if nw == 0.0 {
                return 0.0;
            }
            let done = (nw - lambda).abs() <= POWER_REL_TOL * nw;
            lambda = nw;
            v = w.into_iter().map(|z| z / nw).collect();
            if done {
                break;
            }
        }
        lambda
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    /// Margin-inflated estimate of λ_max(AᴴA).
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// α_f = 1 / (2 λ_max(AᴴA)).
    pub fn alpha_f(&self) -> f64 {
        self.alpha_f
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let k = i * self.n + j;
        C64::new(self.re[k], self.im[k])
    }

    pub fn row_major_entries(&self) -> Vec<C64> {
        self.re.iter().zip(&self.im).map(|(&r, &i)| C64::new(r, i)).collect()
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.m).map(|i| self.get(i, j)).collect()
    }

    pub fn frobenius_sqr(&self) -> f64 {
        self.re.iter().map(|v| v * v).sum::<f64>() + self.im.iter().map(|v| v * v).sum::<f64>()
    }

    /// `c·A` with its spectrum rescaled by `c²` (no new power iteration).
    pub fn scaled(&self, c: f64) -> Self {
        let c2 = c * c;
        let lambda_max = self.lambda_max * c2;
        let fast = self.fast.as_ref().map(|f| {
            Arc::new(ChirpFourier {
                widths: f.widths.clone(),
                chirps: f.chirps.clone(),
                scale: f.scale * c,
                forward: f.forward.clone(),
                inverse: f.inverse.clone(),
            })
        });
        Self {
            m: self.m,
            n: self.n,
            re: self.re.iter().map(|v| v * c).collect(),
            im: self.im.iter().map(|v| v * c).collect(),
            lambda_max,
            alpha_f: if lambda_max > 0.0 { 1.0 / (2.0 * lambda_max) } else { f64::INFINITY },
            fast,
        }
    }

    /// Contiguous row/column window, spectrum recomputed.
    pub fn submatrix(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<Self> {
        if rows.end > self.m || cols.end > self.n {
            return Err(Error::Contract("submatrix window exceeds matrix".into()));
        }
        Self::from_fn(rows.len(), cols.len(), |i, j| self.get(rows.start + i, cols.start + j))
    }

    /// y = A·x.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n, "apply: vector length");
        if let Some(f) = &self.fast {
            return f.apply(x);
        }
        let xr: Vec<f64> = x.iter().map(|z| z.re).collect();
        let xi: Vec<f64> = x.iter().map(|z| z.im).collect();
        (0..self.m)
            .map(|i| {
                let row = i * self.n..(i + 1) * self.n;
                complex_dot(&self.re[row.clone()], &self.im[row], &xr, &xi)
            })
            .collect()
    }

    /// A·x for x supported on `idx` (values `vals`, same order).
    pub fn apply_sparse(&self, idx: &[usize], vals: &[C64]) -> Vec<C64> {
        assert_eq!(idx.len(), vals.len(), "apply_sparse: support length");
        let mut out = vec![C64::new(0.0, 0.0); self.m];
        for (i, o) in out.iter_mut().enumerate() {
            let base = i * self.n;
            let (mut sr, mut si) = (0.0, 0.0);
            for (&j, v) in idx.iter().zip(vals) {
                let (ar, ai) = (self.re[base + j], self.im[base + j]);
                sr += ar * v.re - ai * v.im;
                si += ar * v.im + ai * v.re;
            }
            *o = C64::new(sr, si);
        }
        out
    }

    /// g = Aᴴ·r.
    pub fn apply_adjoint(&self, r: &[C64]) -> Vec<C64> {
        assert_eq!(r.len(), self.m, "apply_adjoint: vector length");
        if let Some(f) = &self.fast {
            return f.apply_adjoint(r);
        }
        let mut or = vec![0.0; self.n];
        let mut oi = vec![0.0; self.n];
        for (i, z) in r.iter().enumerate() {
            let (rr, ri) = (z.re, z.im);
            let row = i * self.n..(i + 1) * self.n;
            for (((o_r, o_i), &ar), &ai) in or
                .iter_mut()
                .zip(oi.iter_mut())
                .zip(&self.re[row.clone()])
                .zip(&self.im[row])
            {
                // conj(a)·r
                *o_r += ar * rr + ai * ri;
                *o_i += ar * ri - ai * rr;
            }
        }
        or.into_iter().zip(oi).map(|(a, b)| C64::new(a, b)).collect()
    }

    /// A_Tᴴ·r, only the support entries.
    pub fn adjoint_on(&self, idx: &[usize], r: &[C64]) -> Vec<C64> {
        assert_eq!(r.len(), self.m, "adjoint_on: vector length");
        let mut out = vec![C64::new(0.0, 0.0); idx.len()];
        for (i, z) in r.iter().enumerate() {
            let base = i * self.n;
            for (o, &j) in out.iter_mut().zip(idx) {
                let a = C64::new(self.re[base + j], self.im[base + j]);
                *o += a.conj() * z;
            }
        }
        out
    }

    /// (AᴴA)_{T,T} = A_Tᴴ A_T as a dense Hermitian matrix.
    pub fn gram_on(&self, idx: &[usize]) -> DMatrix<C64> {
        let t = idx.len();
        let m = self.m;
        // columns gathered contiguously; imaginary plane stored negated (conjugate)
        let mut cr = vec![0.0; t * m];
        let mut ci_conj = vec![0.0; t * m];
        let mut ci = vec![0.0; t * m];
        for i in 0..m {
            let base = i * self.n;
            for (a, &j) in idx.iter().enumerate() {
                cr[a * m + i] = self.re[base + j];
                ci[a * m + i] = self.im[base + j];
                ci_conj[a * m + i] = -self.im[base + j];
            }
        }
        let col = |a: usize| a * m..(a + 1) * m;
        let mut g = DMatrix::from_element(t, t, C64::new(0.0, 0.0));
        for a in 0..t {
            g[(a, a)] = C64::new(
                cr[col(a)].iter().map(|v| v * v).sum::<f64>()
                    + ci[col(a)].iter().map(|v| v * v).sum::<f64>(),
                0.0,
            );
            for b in a + 1..t {
                let v = complex_dot(&cr[col(a)], &ci_conj[col(a)], &cr[col(b)], &ci[col(b)]);
                g[(a, b)] = v;
                g[(b, a)] = v.conj();
            }
        }
        g
    }

    /// A_T as a dense m×|T| matrix.
    pub fn columns_dense(&self, idx: &[usize]) -> DMatrix<C64> {
        DMatrix::from_fn(self.m, idx.len(), |i, a| self.get(i, idx[a]))
    }
}

/// Σ (ar + i·ai)(xr + i·xi) with four independent accumulators per part.
fn complex_dot(ar: &[f64], ai: &[f64], xr: &[f64], xi: &[f64]) -> C64 {
    const L: usize = 4;
    let mut sr = [0.0; L];
    let mut si = [0.0; L];
    let n = ar.len();
    let chunks = n / L;
    for c in 0..chunks {
        for l in 0..L {
            let k = c * L + l;
            sr[l] += ar[k] * xr[k] - ai[k] * xi[k];
            si[l] += ar[k] * xi[k] + ai[k] * xr[k];
        }
    }
    let (mut tr, mut ti) = (sr.iter().sum::<f64>(), si.iter().sum::<f64>());
    for k in chunks * L..n {
        tr += ar[k] * xr[k] - ai[k] * xi[k];
        ti += ar[k] * xi[k] + ai[k] * xr[k];
    }
    C64::new(tr, ti)
}
