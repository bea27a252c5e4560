#![allow(dead_code)]

use std::sync::Arc;

use blockcs::{BlockStructure, Problem, SensingMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> SensingMatrix {
    SensingMatrix::from_row_major(m, n, &random_vec(rng, m * n)).unwrap()
}

pub fn random_problem(seed: u64, m: usize, n: usize, bs: BlockStructure) -> Problem {
    let mut r = rng(seed);
    let a = random_matrix(&mut r, m, n);
    let y = random_vec(&mut r, m);
    Problem::new(Arc::new(a), y.into(), bs).unwrap()
}

pub fn identity_problem(y: Vec<C64>, bs: BlockStructure) -> Problem {
    let n = y.len();
    Problem::new(Arc::new(SensingMatrix::identity(n)), y.into(), bs).unwrap()
}

pub fn dist(u: &[C64], v: &[C64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm(u: &[C64]) -> f64 {
    u.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Least squares on the columns `cols` through the normal equations, solved by
/// Gaussian elimination with partial pivoting.
pub fn normal_equations_ls(a: &SensingMatrix, y: &[C64], cols: &[usize]) -> Vec<C64> {
    let k = cols.len();
    let mut g = vec![vec![c(0., 0.); k + 1]; k];
    for (p, &jp) in cols.iter().enumerate() {
        for (q, &jq) in cols.iter().enumerate() {
            g[p][q] = (0..a.rows()).map(|i| a.get(i, jp).conj() * a.get(i, jq)).sum();
        }
        g[p][k] = (0..a.rows()).map(|i| a.get(i, jp).conj() * y[i]).sum();
    }
    gauss_solve(g)
}

/// Solves the augmented system `[M | b]` in place.
pub fn gauss_solve(mut aug: Vec<Vec<C64>>) -> Vec<C64> {
    let k = aug.len();
    for col in 0..k {
        let piv = (col..k).max_by(|&a, &b| aug[a][col].norm().total_cmp(&aug[b][col].norm())).unwrap();
        aug.swap(col, piv);
        for row in col + 1..k {
            let f = aug[row][col] / aug[col][col];
            for j in col..=k {
                let v = aug[col][j];
                aug[row][j] -= f * v;
            }
        }
    }
    let mut x = vec![c(0., 0.); k];
    for row in (0..k).rev() {
        let s: C64 = (row + 1..k).map(|j| aug[row][j] * x[j]).sum();
        x[row] = (aug[row][k] - s) / aug[row][row];
    }
    x
}
