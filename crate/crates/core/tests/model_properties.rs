mod common;

use blockcs::model::{
    block_project, block_top_support, check_convexity_lemma, check_descent_lemma, check_lipschitz, gradient,
    halting_tolerance, objective, stationarity_map,
};
use blockcs::{BlockStructure, SupportSet, C64};
use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn gradient_matches_central_differences() {
    let bs = BlockStructure::uniform(2, 4, 1).unwrap();
    let p = random_problem(101, 6, 8, bs);
    let x = random_vec(&mut rng(102), 8);
    let g = gradient(&p, &x).unwrap();
    let h = 1e-6;
    for j in 0..8 {
        for (part, unit) in [(g[j].re, c(1., 0.)), (g[j].im, c(0., 1.))] {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += unit * h;
            xm[j] -= unit * h;
            let fd = (objective(&p, &xp).unwrap() - objective(&p, &xm).unwrap()) / (2.0 * h);
            assert!((fd - 2.0 * part).abs() <= 1e-6, "coordinate {j}: {fd} vs {}", 2.0 * part);
        }
    }
}

/// Minimum-distance support over all `s`-subsets, earliest subset winning ties.
fn brute_force_support(block: &[C64], s: usize) -> Vec<usize> {
    let d = block.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1 << d) {
        if mask.count_ones() as usize != s {
            continue;
        }
        let set: Vec<usize> = (0..d).filter(|j| mask & (1 << j) != 0).collect();
        let discarded: f64 = (0..d).filter(|j| mask & (1 << j) == 0).map(|j| block[j].norm_sqr()).sum();
        let better = match &best {
            None => true,
            Some((b, bset)) => discarded < *b || (discarded == *b && set < *bset),
        };
        if better {
            best = Some((discarded, set));
        }
    }
    best.unwrap().1
}

#[test]
fn block_project_matches_brute_force_distance() {
    let mut r = rng(7);
    let bs = BlockStructure::uniform(1, 6, 2).unwrap();
    let block = random_vec(&mut r, 6);
    let got = block_project(&block, &bs).unwrap();
    let keep = brute_force_support(&block, 2);
    for j in 0..6 {
        let want = if keep.contains(&j) { block[j] } else { c(0., 0.) };
        assert_eq!(got[j], want);
    }
}

#[test]
fn block_project_with_repeated_magnitudes() {
    let mut r = rng(8);
    for _ in 0..200 {
        let d = r.random_range(2..=8);
        let s = r.random_range(1..=3.min(d));
        // axis-aligned entries with magnitudes from a tiny set give exact ties
        let block: Vec<C64> = (0..d)
            .map(|_| {
                let mag = r.random_range(0..3) as f64;
                [c(mag, 0.), c(0., mag), c(-mag, 0.), c(0., -mag)][r.random_range(0..4)]
            })
            .collect();
        let bs = BlockStructure::uniform(1, d, s).unwrap();
        let got = block_top_support(&block, &bs).unwrap();
        let want = brute_force_support(&block, s);
        assert_eq!(got.indices(), want.as_slice(), "block {block:?}");
    }
}

#[test]
fn stationarity_zero_implies_no_residual_part_in_tolerance() {
    let y = vec![c(1., 0.), c(0., 0.), c(0., 0.), c(-2., 1.), c(0., 0.), c(0., 0.)];
    let bs = BlockStructure::uniform(2, 3, 1).unwrap();
    let p = identity_problem(y.clone(), bs);
    let t = SupportSet::new(vec![0, 3], 6).unwrap();
    assert_eq!(stationarity_map(&p, &y, &t).unwrap().norm(), 0.0);
    assert_eq!(halting_tolerance(&p, &y, &t, 0.25).unwrap(), 0.0);
}

#[test]
fn objective_decreases_along_negative_gradient() {
    for seed in 0..20 {
        let p = random_problem(200 + seed, 7, 10, BlockStructure::uniform(2, 5, 2).unwrap());
        let x = random_vec(&mut rng(300 + seed), 10);
        let g = gradient(&p, &x).unwrap();
        assert!(g.norm() > 1e-8);
        let t = p.a.alpha_f() / 2.0;
        let step: Vec<C64> = x.iter().zip(g.iter()).map(|(a, b)| a - b * t).collect();
        assert!(objective(&p, &step).unwrap() < objective(&p, &x).unwrap());
    }
}

#[test]
fn lemma_checks_hold_on_random_pairs() {
    let p = random_problem(400, 8, 12, BlockStructure::uniform(3, 4, 1).unwrap());
    let tau = p.a.alpha_f() / 2.0;
    let mut r = rng(401);
    for k in 0..1000 {
        let scale = 10f64.powi(k % 7 - 3);
        let q1: Vec<C64> = random_vec(&mut r, 12).into_iter().map(|z| z * scale).collect();
        let q2 = random_vec(&mut r, 12);
        assert!(check_descent_lemma(&p, &q1, &q2, tau).unwrap());
        assert!(check_convexity_lemma(&p, &q1, &q2).unwrap());
        assert!(check_lipschitz(&p, &q1, &q2).unwrap());
    }
}

#[test]
fn lipschitz_ratio_along_top_eigenvector_is_lambda_max() {
    let p = random_problem(500, 6, 9, BlockStructure::uniform(1, 9, 2).unwrap());
    let a = p.a.columns_dense(&(0..9).collect::<Vec<_>>());
    let gram: DMatrix<C64> = a.adjoint() * &a;
    let eig = SymmetricEigen::new(gram);
    let (top, lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, l)| (eig.eigenvectors.column(k).iter().copied().collect::<Vec<C64>>(), *l))
        .unwrap();
    let q2 = random_vec(&mut rng(501), 9);
    let q1: Vec<C64> = q2.iter().zip(&top).map(|(a, b)| a + b).collect();
    let g1 = gradient(&p, &q1).unwrap();
    let g2 = gradient(&p, &q2).unwrap();
    let ratio = dist(&g1, &g2) / dist(&q1, &q2);
    assert!((ratio - lambda).abs() <= 1e-9 * lambda);
    assert!(ratio * 2.0 <= 1.0 / p.a.alpha_f() * (1.0 + 1e-9));
    assert!(check_lipschitz(&p, &q1, &q2).unwrap());
}

fn signal_and_blocks() -> impl Strategy<Value = (Vec<C64>, BlockStructure)> {
    prop::collection::vec((1usize..7, 1usize..4), 1..5).prop_flat_map(|spec| {
        let lengths: Vec<usize> = spec.iter().map(|(d, _)| *d).collect();
        let sparsities: Vec<usize> = spec.iter().map(|(d, s)| (*s).min(*d)).collect();
        let n: usize = lengths.iter().sum();
        let bs = BlockStructure::new(lengths, sparsities).unwrap();
        (prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), n), Just(bs))
            .prop_map(|(v, bs)| (v.into_iter().map(|(a, b)| c(a, b)).collect(), bs))
    })
}

proptest! {
    #[test]
    fn projection_is_idempotent_and_feasible((x, bs) in signal_and_blocks()) {
        let once = block_project(&x, &bs).unwrap();
        let twice = block_project(&once, &bs).unwrap();
        prop_assert_eq!(&once, &twice);
        for b in 0..bs.num_blocks() {
            let nnz = once[bs.range(b)].iter().filter(|z| z.norm() > 0.0).count();
            prop_assert!(nnz <= bs.sparsities()[b]);
        }
    }

    #[test]
    fn projection_keeps_values_or_writes_exact_zero((x, bs) in signal_and_blocks()) {
        let out = block_project(&x, &bs).unwrap();
        for (a, b) in out.iter().zip(&x) {
            prop_assert!(*a == *b || *a == c(0., 0.));
        }
    }
}
