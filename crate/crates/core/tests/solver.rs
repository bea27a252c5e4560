mod common;

use std::sync::Arc;

use blockcs::datagen::gen_gaussian;
use blockcs::model::{block_project, gradient, objective, Problem};
use blockcs::solver::*;
use blockcs::{BlockStructure, ComplexSignal, SensingMatrix, SupportSet, C64};
use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

fn reduced_problem(p: &Problem, t: &SupportSet) -> Problem {
    let idx = t.indices();
    let a = SensingMatrix::from_fn(p.m(), idx.len(), |i, k| p.a.get(i, idx[k])).unwrap();
    Problem::new(Arc::new(a), p.y.clone(), BlockStructure::uniform(1, idx.len(), 1).unwrap()).unwrap()
}

fn on(v: &[C64], t: &SupportSet) -> Vec<C64> {
    t.indices().iter().map(|&j| v[j]).collect()
}

#[test]
fn select_support_examples() {
    let bs = BlockStructure::uniform(2, 2, 1).unwrap();
    let p = identity_problem(vec![c(5., 0.), c(1., 0.), c(0., 0.), c(3., 0.)], bs);
    let t = select_support(&p, &[c(0., 0.); 4], 0.25).unwrap();
    assert_eq!(t.indices(), &[0, 3]);

    // stationary point with a deficient block: support padded with the lowest free index
    let y = vec![c(2., 0.), c(0., 0.), c(0., 0.), c(3., 0.), c(0.5, 0.), c(0., 0.)];
    let p = identity_problem(y.clone(), BlockStructure::uniform(2, 3, 2).unwrap());
    let t = select_support(&p, &y, 0.25).unwrap();
    assert_eq!(t.indices(), &[0, 1, 3, 4]);

    let flat = vec![c(1., 0.); 4];
    let p = identity_problem(flat, BlockStructure::uniform(1, 4, 2).unwrap());
    let t = select_support(&p, &[c(0., 0.); 4], 0.5).unwrap();
    assert_eq!(t.indices(), &[0, 1]);
}

#[test]
fn gradient_direction_examples() {
    let y = vec![c(1., 2.), c(0., 0.), c(0., 0.), c(-1., 0.)];
    let p = identity_problem(y.clone(), BlockStructure::uniform(2, 2, 1).unwrap());
    let t = SupportSet::new(vec![0, 3], 4).unwrap();
    let d = gradient_direction(&p, &y, &t, &[c(0., 0.); 4], 0.0).unwrap();
    assert!(d.iter().all(|z| *z == c(0., 0.)));

    let bs = BlockStructure::uniform(3, 4, 1).unwrap();
    let p = random_problem(11, 8, 12, bs);
    let x = random_vec(&mut rng(12), 12);
    let t = SupportSet::new(vec![1, 6, 9], 12).unwrap();
    let zero = vec![c(0., 0.); 12];
    let d = gradient_direction(&p, &x, &t, &zero, 0.0).unwrap();
    let reduced = reduced_problem(&p, &t);
    let g_red = gradient(&reduced, &on(&x, &t)).unwrap();
    for (a, b) in on(&d, &t).iter().zip(g_red.iter()) {
        assert!((a + b).norm() <= 1e-12);
    }
    for j in t.complement(12) {
        assert_eq!(d[j], -x[j]);
    }

    let d0 = random_vec(&mut rng(13), 12);
    let shifted = gradient_direction(&p, &x, &t, &d0, 0.5).unwrap();
    for &j in t.indices() {
        assert!((shifted[j] - (d[j] + d0[j] * 0.5)).norm() <= 1e-12);
    }
    for j in t.complement(12) {
        assert_eq!(shifted[j], -x[j]);
    }
}

#[test]
fn newton_direction_examples() {
    let y = vec![c(3., 1.), c(0.5, 0.), c(-1., 1.), c(2., 0.)];
    let p = identity_problem(y.clone(), BlockStructure::uniform(2, 2, 1).unwrap());
    let x = vec![c(1., 0.), c(1., 1.), c(0., 0.), c(0., 2.)];
    let t = SupportSet::new(vec![0, 3], 4).unwrap();
    let (d, ok) = newton_direction(&p, &x, &t).unwrap();
    assert!(ok);
    let next: Vec<C64> = x.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
    let want = [y[0], c(0., 0.), c(0., 0.), y[3]];
    assert!(dist(&next, &want) <= 1e-14);

    // x already the least-squares fit on T
    let bs = BlockStructure::uniform(3, 4, 1).unwrap();
    let p = random_problem(21, 8, 12, bs);
    let t = SupportSet::new(vec![0, 5, 10], 12).unwrap();
    let u = normal_equations_ls(&p.a, &p.y, t.indices());
    let mut x = vec![c(0., 0.); 12];
    for (&j, v) in t.indices().iter().zip(&u) {
        x[j] = *v;
    }
    let (d, ok) = newton_direction(&p, &x, &t).unwrap();
    assert!(ok);
    assert!(norm(&on(&d, &t)) <= 1e-10);

    // from x off the fit, x + d on T is the least-squares solution
    let bs = BlockStructure::uniform(3, 4, 2).unwrap();
    let p = random_problem(22, 8, 12, bs);
    let t = SupportSet::new(vec![1, 2, 4, 11], 12).unwrap();
    let mut x = random_vec(&mut rng(23), 12);
    for j in t.complement(12) {
        x[j] = c(0., 0.);
    }
    let (d, ok) = newton_direction(&p, &x, &t).unwrap();
    assert!(ok);
    let fit: Vec<C64> = t.indices().iter().map(|&j| x[j] + d[j]).collect();
    let want = normal_equations_ls(&p.a, &p.y, t.indices());
    assert!(dist(&fit, &want) <= 1e-8 * norm(&want));
}

#[test]
fn newton_direction_flags_or_solves_singular_systems() {
    // duplicated and zero columns make the restricted Gram matrix singular
    let mut r = rng(31);
    let base = random_vec(&mut r, 5 * 3);
    let a = SensingMatrix::from_fn(5, 6, |i, j| match j {
        0 | 1 => base[i * 3],
        2 => c(0., 0.),
        k => base[i * 3 + k - 3],
    })
    .unwrap();
    let y = random_vec(&mut r, 5);
    let p = Problem::new(Arc::new(a), y.into(), BlockStructure::uniform(2, 3, 2).unwrap()).unwrap();
    let t = SupportSet::new(vec![0, 1, 2, 3], 6).unwrap();
    let x = vec![c(0.5, 0.), c(0., 0.), c(0., 0.), c(0., 0.), c(0., 0.), c(1., 1.)];
    let (d, ok) = newton_direction(&p, &x, &t).unwrap();
    if ok {
        assert!(d.is_finite());
        let g = p.a.gram_on(t.indices());
        let dt = nalgebra::DVector::from_vec(on(&d, &t));
        let rhs = nalgebra::DVector::from_vec(p.a.adjoint_on(t.indices(), &p.residual(&on_full(&x, &t)).unwrap()));
        assert!((g * dt + &rhs).norm() <= 1e-6 * rhs.norm());
    }
    assert_eq!(d[5], -x[5]);
}

/// x with its entries off T zeroed.
fn on_full(x: &[C64], t: &SupportSet) -> Vec<C64> {
    let mut out = vec![c(0., 0.); x.len()];
    for &j in t.indices() {
        out[j] = x[j];
    }
    out
}

#[test]
fn newton_switch_examples() {
    let bs = BlockStructure::uniform(2, 3, 1).unwrap();
    let p = random_problem(41, 5, 6, bs);
    let t = SupportSet::new(vec![0, 4], 6).unwrap();
    let x = on_full(&random_vec(&mut rng(42), 6), &t);
    let zero = vec![c(0., 0.); 6];
    assert!(newton_switch(&p, &x, &t, &zero, 0.01, 0.1).unwrap());
    let ascent = on_full(&gradient(&p, &x).unwrap(), &t);
    assert!(!newton_switch(&p, &x, &t, &ascent, 0.01, 0.1).unwrap());

    // noiseless planted problem near its minimizer
    let a = gen_gaussian(10, 6, 3).unwrap();
    let truth = vec![c(1., 0.5), c(0., 0.), c(0., 0.), c(0., 0.), c(-0.7, 1.2), c(0., 0.)];
    let y = a.apply(&truth);
    let p = Problem::new(Arc::new(a), y.into(), BlockStructure::uniform(2, 3, 1).unwrap()).unwrap();
    let near: Vec<C64> = truth.iter().map(|z| if *z == c(0., 0.) { *z } else { z * 1.01 }).collect();
    let (d, ok) = newton_direction(&p, &near, &t).unwrap();
    assert!(ok);
    assert!(newton_switch(&p, &near, &t, &d, 0.01, auto_tau(&p)).unwrap());
}

#[test]
fn armijo_examples() {
    let cfg = SolverConfig::default();
    let bs = BlockStructure::uniform(1, 3, 3).unwrap();
    let p = random_problem(51, 4, 3, bs);
    let x = random_vec(&mut rng(52), 3);
    let all = SupportSet::new(vec![0, 1, 2], 3).unwrap();
    let out = armijo_search(&p, &x, &[c(0., 0.); 3], &all, &cfg).unwrap();
    assert!(out.accepted && out.alpha == 1.0 && out.backtracks == 0);

    let p = identity_problem(vec![c(1., 0.), c(0., 0.)], BlockStructure::uniform(1, 2, 1).unwrap());
    let t = SupportSet::new(vec![0], 2).unwrap();
    let out = armijo_search(&p, &[c(0., 0.); 2], &[c(1., 0.), c(0., 0.)], &t, &cfg).unwrap();
    assert!(out.accepted && out.alpha == 1.0);
    assert_eq!(out.objective, 0.0);

    // badly scaled quadratic: the full gradient step overshoots
    let a = SensingMatrix::from_fn(2, 2, |i, j| if i == j { c([1., 10.][i], 0.) } else { c(0., 0.) }).unwrap();
    let p = Problem::new(Arc::new(a), vec![c(0., 0.); 2].into(), BlockStructure::uniform(1, 2, 2).unwrap()).unwrap();
    let x = vec![c(1., 0.), c(1., 0.)];
    let d: Vec<C64> = gradient(&p, &x).unwrap().iter().map(|z| -z).collect();
    let t = SupportSet::new(vec![0, 1], 2).unwrap();
    let out = armijo_search(&p, &x, &d, &t, &cfg).unwrap();
    assert!(out.accepted && out.backtracks >= 1);
    assert!(out.objective < objective(&p, &x).unwrap());

    assert!(armijo_search(&p, &x, &[c(f64::NAN, 0.), c(0., 0.)], &t, &cfg).is_err());
}

#[test]
fn identity_problem_converges_to_block_threshold() {
    let y = vec![c(3., 0.), c(0., -4.), c(1., 1.), c(0.5, 0.), c(-2., 0.), c(0., 0.1)];
    let bs = BlockStructure::uniform(2, 3, 1).unwrap();
    let p = identity_problem(y.clone(), bs.clone());
    let res = bnhtp_solve(&p, &SolverConfig::default(), None).unwrap();
    let want = block_project(&y, &bs).unwrap();
    assert_eq!(res.halting_reason, HaltingReason::Tolerance);
    assert!(dist(&res.x_hat, &want) <= 1e-12);
    assert_eq!(res.history[0].direction, DirectionKind::Newton);
    assert_eq!(res.history[0].alpha, 1.0);
    let discarded: f64 = [y[0], y[2], y[3], y[5]].iter().map(|z| z.norm_sqr()).sum();
    assert!((objective(&p, &res.x_hat).unwrap() - discarded).abs() <= 1e-12);
}

#[test]
fn zero_data_halts_at_first_iteration() {
    let bs = BlockStructure::uniform(2, 4, 1).unwrap();
    let a = gen_gaussian(5, 8, 1).unwrap();
    let p = Problem::new(Arc::new(a), ComplexSignal::zeros(5), bs).unwrap();
    let res = bnhtp_solve(&p, &SolverConfig::default(), None).unwrap();
    assert_eq!(res.iterations, 1);
    assert_eq!(res.halting_reason, HaltingReason::Tolerance);
    assert_eq!(res.history[0].tolerance, 0.0);
    assert!(res.x_hat.iter().all(|z| *z == c(0., 0.)));
}

#[test]
fn planted_noiseless_recovery() {
    let bs = BlockStructure::uniform(4, 32, 2).unwrap();
    let mut exact = 0;
    for seed in 0..10u64 {
        let a = gen_gaussian(32, 128, 1000 + seed).unwrap();
        let mut r = rng(seed);
        let mut truth = vec![c(0., 0.); 128];
        for b in 0..4 {
            let first = r.random_range(0..32);
            let second = (first + r.random_range(1..32)) % 32;
            for j in [first, second] {
                truth[b * 32 + j] = C64::from_polar(r.random_range(0.5..1.5), r.random_range(0.0..6.3));
            }
        }
        let y = a.apply(&truth);
        let p = Problem::new(Arc::new(a), y.into(), bs.clone()).unwrap();
        let res = bnhtp_solve(&p, &SolverConfig::default(), None).unwrap();
        let err = dist(&res.x_hat, &truth) / norm(&res.x_hat);
        if err <= 1e-8 {
            exact += 1;
        } else {
            println!("seed {seed}: relative error {err:e}, {:?}", res.halting_reason);
        }
    }
    assert_eq!(exact, 10, "planted signal recovered on {exact}/10 instances");
}

#[test]
fn auto_tau_examples() {
    let p = identity_problem(vec![c(1., 0.); 6], BlockStructure::uniform(2, 3, 1).unwrap());
    assert!((auto_tau(&p) - 0.25).abs() <= 0.25 * 1e-5);

    let bs = BlockStructure::uniform(10, 10, 1).unwrap();
    let a = gen_gaussian(50, 100, 7).unwrap();
    let p = Problem::new(Arc::new(a.clone()), ComplexSignal::zeros(50), bs.clone()).unwrap();
    for scale in [0.5, 2.0, 10.0] {
        let q = Problem::new(Arc::new(a.scaled(scale)), ComplexSignal::zeros(50), bs.clone()).unwrap();
        assert!((auto_tau(&q) * scale * scale / auto_tau(&p) - 1.0).abs() <= 1e-12);
    }

    let dense = a.columns_dense(&(0..100).collect::<Vec<_>>());
    let gram: DMatrix<C64> = dense.adjoint() * &dense;
    let lambda = SymmetricEigen::new(gram).eigenvalues.max();
    let ratio = auto_tau(&p) * 4.0 * lambda;
    assert!((0.999..=1.001).contains(&ratio), "ratio {ratio}");
}

#[test]
fn stationary_start_halts_immediately() {
    let y = vec![c(3., 0.), c(0.2, 0.), c(0., 0.), c(0., -4.), c(0.1, 0.1), c(0., 0.)];
    let bs = BlockStructure::uniform(2, 3, 1).unwrap();
    let p = identity_problem(y.clone(), bs.clone());
    let x0 = block_project(&y, &bs).unwrap();
    let res = bnhtp_solve(&p, &SolverConfig::default(), Some(&x0)).unwrap();
    assert_eq!(res.iterations, 1);
    assert_eq!(res.halting_reason, HaltingReason::Tolerance);
    assert!(res.history[0].tolerance < SolverConfig::default().epsilon);
    assert_eq!(res.x_hat, x0);
}

#[test]
fn first_newton_step_is_the_least_squares_fit() {
    let bs = BlockStructure::uniform(4, 8, 1).unwrap();
    for seed in 0..5 {
        let p = random_problem(60 + seed, 16, 32, bs.clone());
        let res = bnhtp_solve(&p, &SolverConfig { max_iter: 1, ..Default::default() }, None).unwrap();
        let rec = &res.history[0];
        if rec.direction != DirectionKind::Newton || rec.alpha != 1.0 {
            continue;
        }
        let t = SupportSet::new(rec.support.clone(), 32).unwrap();
        let want = normal_equations_ls(&p.a, &p.y, t.indices());
        let got = on(&res.x_hat, &t);
        assert!(dist(&got, &want) <= 1e-8 * norm(&want));
    }
}

#[test]
fn joint_rescaling_preserves_support_sequence() {
    let bs = BlockStructure::uniform(8, 16, 1).unwrap();
    for seed in 0..3u64 {
        let a = gen_gaussian(40, 128, 70 + seed).unwrap();
        let y = random_vec(&mut rng(80 + seed), 40);
        let p = Problem::new(Arc::new(a.clone()), y.clone().into(), bs.clone()).unwrap();
        let tau = auto_tau(&p);
        let base_cfg = SolverConfig {
            tau: TauRule::Fixed(tau),
            ..Default::default()
        };
        let base = bnhtp_solve(&p, &base_cfg, None).unwrap();
        for scale in [0.5, 2.0, 10.0] {
            let ys: Vec<C64> = y.iter().map(|z| z * scale).collect();
            let q = Problem::new(Arc::new(a.scaled(scale)), ys.into(), bs.clone()).unwrap();
            let cfg = SolverConfig {
                tau: TauRule::Fixed(tau / (scale * scale)),
                ..Default::default()
            };
            let res = bnhtp_solve(&q, &cfg, None).unwrap();
            let seq = |r: &SolveResult| r.history.iter().map(|h| h.support.clone()).collect::<Vec<_>>();
            assert_eq!(seq(&res), seq(&base), "scale {scale}");
        }
    }
}

#[test]
fn iterates_stay_feasible_and_descend() {
    let bs = BlockStructure::new(vec![5, 7, 4, 8], vec![1, 2, 2, 3]).unwrap();
    for seed in 0..30u64 {
        let p = random_problem(90 + seed, 12, 24, bs.clone());
        let cfg = SolverConfig {
            tau: [TauRule::Auto, TauRule::ColumnNorm, TauRule::Fixed(0.3)][seed as usize % 3],
            ..Default::default()
        };
        let res = bnhtp_solve(&p, &cfg, None).unwrap();
        assert_eq!(res.history.len(), res.iterations);
        for h in res.history.iter().filter(|h| h.accepted) {
            let t = SupportSet::new(h.support.clone(), 24).unwrap();
            for (b, members) in t.per_block(&bs).iter().enumerate() {
                assert!(members.len() <= bs.sparsities()[b]);
            }
            let bound = h.objective + cfg.armijo_sigma * h.alpha * h.slope.min(0.0) + ARMIJO_ROUNDOFF * h.objective;
            assert!(h.objective_next <= bound);
        }
        for b in 0..bs.num_blocks() {
            let nnz = res.x_hat[bs.range(b)].iter().filter(|z| **z != c(0., 0.)).count();
            assert!(nnz <= bs.sparsities()[b]);
        }
    }
}

#[test]
fn config_validation() {
    let bad = [
        SolverConfig { tau: TauRule::Fixed(0.0), ..Default::default() },
        SolverConfig { gamma: 1.0, ..Default::default() },
        SolverConfig { eta: -0.1, ..Default::default() },
        SolverConfig { armijo_beta: 0.0, ..Default::default() },
        SolverConfig { max_iter: 0, ..Default::default() },
    ];
    let p = identity_problem(vec![c(1., 0.)], BlockStructure::uniform(1, 1, 1).unwrap());
    for cfg in bad {
        assert!(bnhtp_solve(&p, &cfg, None).is_err());
    }
    assert!(bnhtp_solve(&p, &SolverConfig::default(), Some(&[c(0., 0.), c(0., 0.)])).is_err());
    let res = bnhtp_solve(&identity_problem(vec![c(1., 0.), c(2., 0.)], BlockStructure::uniform(1, 2, 1).unwrap()),
        &SolverConfig { max_iter: 1, ..Default::default() }, None).unwrap();
    assert_eq!(res.halting_reason, HaltingReason::MaxIter);
}

#[test]
fn column_norm_tau_examples() {
    let p = identity_problem(vec![c(1., 0.); 6], BlockStructure::uniform(2, 3, 1).unwrap());
    assert_eq!(column_norm_tau(&p), 1.0);
    let bs = BlockStructure::uniform(2, 4, 1).unwrap();
    let a = SensingMatrix::from_row_major(2, 8, &[c(2., 0.); 16]).unwrap();
    let p = Problem::new(Arc::new(a), ComplexSignal::zeros(2), bs.clone()).unwrap();
    assert!((column_norm_tau(&p) - 0.125).abs() < 1e-15);
    let z = SensingMatrix::from_row_major(2, 8, &[c(0., 0.); 16]).unwrap();
    let p = Problem::new(Arc::new(z), ComplexSignal::zeros(2), bs).unwrap();
    assert_eq!(column_norm_tau(&p), auto_tau(&p));
}

#[test]
fn tau_rule_serialization() {
    for (text, rule) in [
        ("\"auto\"", TauRule::Auto),
        ("\"column_norm\"", TauRule::ColumnNorm),
        ("0.25", TauRule::Fixed(0.25)),
    ] {
        assert_eq!(serde_json::from_str::<TauRule>(text).unwrap(), rule);
        assert_eq!(serde_json::to_string(&rule).unwrap(), text);
    }
    assert!(serde_json::from_str::<TauRule>("\"largest\"").is_err());
}
