mod common;

use blockcs::datagen::{gen_instance, ScenarioParams};
use blockcs::metrics::*;
use blockcs::solver::bnhtp_solve;
use blockcs::{BlockStructure, ComplexSignal, SolverConfig, C64};
use common::*;
use rand::Rng;

fn signal(v: Vec<C64>) -> ComplexSignal {
    v.into()
}

#[test]
fn relative_error_matches_componentwise_accumulation() {
    let mut r = rng(1);
    for _ in 0..50 {
        let n = r.random_range(1..40);
        let (a, b) = (random_vec(&mut r, n), random_vec(&mut r, n));
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            let (dr, di) = (a[j].re - b[j].re, a[j].im - b[j].im);
            num += dr * dr + di * di;
            den += a[j].re * a[j].re + a[j].im * a[j].im;
        }
        let want = (num / den).sqrt();
        let got = relative_error(&a, &b).unwrap();
        assert!((got - want).abs() <= 1e-12 * want);
    }
}

#[test]
fn relative_error_is_phase_invariant() {
    let mut r = rng(2);
    let rot = C64::from_polar(1.0, 0.7);
    for _ in 0..20 {
        let (a, b) = (random_vec(&mut r, 12), random_vec(&mut r, 12));
        let (ra, rb): (Vec<C64>, Vec<C64>) = (a.iter().map(|z| z * rot).collect(), b.iter().map(|z| z * rot).collect());
        let (e, er) = (relative_error(&a, &b).unwrap(), relative_error(&ra, &rb).unwrap());
        assert!((e - er).abs() <= 1e-12 * e);
    }
}

#[test]
fn support_rates_are_phase_invariant_and_count_indices() {
    let mut r = rng(3);
    for _ in 0..50 {
        let n = 30;
        let truth: Vec<C64> = (0..n)
            .map(|_| if r.random_bool(0.3) { c(r.random(), r.random()) } else { c(0., 0.) })
            .collect();
        let rec: Vec<C64> = (0..n)
            .map(|_| match r.random_range(0..3) {
                0 => c(0., 0.),
                1 => c(1e-9, 0.),
                _ => c(r.random::<f64>() + 0.1, 0.),
            })
            .collect();
        let (mut on, mut on_hit, mut off, mut off_hit) = (0, 0, 0, 0);
        for j in 0..n {
            let kept = rec[j].norm() > DEFAULT_ZERO_TOL;
            if truth[j] != c(0., 0.) {
                on += 1;
                on_hit += kept as i32;
            } else {
                off += 1;
                off_hit += (!kept) as i32;
            }
        }
        let pct = |h: i32, t: i32| if t == 0 { 100.0 } else { 100.0 * h as f64 / t as f64 };
        let got = support_rates(&rec, &truth, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(got, (pct(on_hit, on), pct(off_hit, off)));
        let rotated: Vec<C64> = rec.iter().map(|z| z * C64::from_polar(1.0, 2.1)).collect();
        assert_eq!(support_rates(&rotated, &truth, DEFAULT_ZERO_TOL).unwrap(), got);
    }
}

#[test]
fn one_misidentified_user_out_of_twenty() {
    let params = ScenarioParams {
        s_bar: 20,
        seed: 4,
        ..Default::default()
    };
    let inst = gen_instance(&params).unwrap();
    let bs = &params.bs;
    let res = bnhtp_solve(&inst.problem, &SolverConfig::default(), None).unwrap();
    let mut rec = res.x_hat.clone();
    // Move the recovered entry of the first active user to a wrong position.
    let blk = inst.active_set[0];
    let range = bs.range(blk);
    let j = range.clone().find(|&j| inst.x_true[j] != c(0., 0.)).unwrap();
    let wrong = if j + 1 < range.end { j + 1 } else { range.start };
    for k in range {
        rec[k] = c(0., 0.);
    }
    rec[wrong] = c(1., 0.);
    let (t, tc) = support_rates(&rec, &inst.x_true, DEFAULT_ZERO_TOL).unwrap();

    let n = rec.len();
    let on: Vec<usize> = (0..n).filter(|&k| inst.x_true[k] != c(0., 0.)).collect();
    let hits = on.iter().filter(|&&k| rec[k].norm() > DEFAULT_ZERO_TOL).count();
    let off_hits = (0..n).filter(|k| !on.contains(k) && rec[*k].norm() <= DEFAULT_ZERO_TOL).count();
    assert_eq!(hits, 19);
    assert_eq!(t, 95.0);
    assert_eq!(tc, 100.0 * off_hits as f64 / (n - 20) as f64);
}

#[test]
fn aggregate_matches_spreadsheet_mean() {
    let mut r = rng(5);
    let records: Vec<MetricsRecord> = (0..5)
        .map(|_| MetricsRecord {
            iterations: r.random_range(1..100) as f64,
            wall_time: r.random(),
            r_error: r.random::<f64>() * 0.1,
            obj_value: r.random::<f64>() * 10.0,
            t_rate: r.random::<f64>() * 100.0,
            tc_rate: r.random::<f64>() * 100.0,
        })
        .collect();
    let got = aggregate(&records).unwrap();
    let col = |f: fn(&MetricsRecord) -> f64| {
        let mut s = 0.0;
        for rec in &records {
            s += f(rec);
        }
        s / 5.0
    };
    for (g, w) in [
        (got.iterations, col(|r| r.iterations)),
        (got.wall_time, col(|r| r.wall_time)),
        (got.r_error, col(|r| r.r_error)),
        (got.obj_value, col(|r| r.obj_value)),
        (got.t_rate, col(|r| r.t_rate)),
        (got.tc_rate, col(|r| r.tc_rate)),
    ] {
        assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
    }
}

/// 2000 trials, 8 users of length 4: inactive users carry small Rayleigh-like
/// leakage and active users a larger peak.
fn synthetic_trials(seed: u64) -> (Vec<ComplexSignal>, Vec<ComplexSignal>, BlockStructure) {
    let bs = BlockStructure::uniform(8, 4, 1).unwrap();
    let mut r = rng(seed);
    let mut rec = Vec::new();
    let mut truth = Vec::new();
    for _ in 0..2000 {
        let mut t = vec![c(0., 0.); 32];
        let mut x = vec![c(0., 0.); 32];
        for b in 0..8 {
            let active = r.random_bool(0.25);
            for j in 0..4 {
                x[4 * b + j] = c(r.random::<f64>() * 0.1, r.random::<f64>() * 0.1);
            }
            if active {
                let j = 4 * b + r.random_range(0..4);
                t[j] = c(1.0, 0.0);
                x[j] = c(r.random::<f64>() * 1.5, 0.0);
            }
        }
        rec.push(signal(x));
        truth.push(signal(t));
    }
    (rec, truth, bs)
}

#[test]
fn calibration_matches_exhaustive_sweep() {
    let (rec, truth, bs) = synthetic_trials(6);
    let maxima = UserMaxima::collect(&rec, &truth, &bs).unwrap();
    for target in [0.001, 0.01, 0.05, 0.2] {
        let stats = calibrate_threshold(&rec, &truth, &bs, target).unwrap();

        // Exhaustive oracle: every observed modulus and zero as a candidate.
        let mut all: Vec<f64> = std::iter::once(0.0).chain(maxima.inactive.iter().copied()).collect();
        all.extend(maxima.active.iter().copied());
        all.sort_by(f64::total_cmp);
        let best = all
            .iter()
            .copied()
            .filter(|&th| {
                let fa = maxima.inactive.iter().filter(|&&v| v > th).count() as f64 / maxima.inactive.len() as f64;
                fa <= target
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(stats.threshold, best, "target {target}");
        assert!(stats.fap <= target);
        assert_eq!(stats.trials, 2000);

        // One order statistic lower would overshoot the target.
        let lower = maxima.inactive.iter().copied().filter(|&v| v < best).fold(0.0, f64::max);
        if best > 0.0 {
            assert!(maxima.fap(lower) > target);
        }
        let fir = maxima.active.iter().filter(|&&v| v <= best).count() as f64 / maxima.active.len() as f64;
        assert_eq!(stats.fir, fir);
    }
}

#[test]
fn fap_and_fir_are_monotone_over_the_sweep() {
    let (rec, truth, bs) = synthetic_trials(7);
    let maxima = UserMaxima::collect(&rec, &truth, &bs).unwrap();
    let mut sweep: Vec<f64> = maxima.inactive.iter().chain(&maxima.active).copied().collect();
    sweep.push(0.0);
    sweep.sort_by(f64::total_cmp);
    for w in sweep.windows(2) {
        assert!(maxima.fap(w[1]) <= maxima.fap(w[0]));
        assert!(maxima.fir(w[1]) >= maxima.fir(w[0]));
    }
}

#[test]
fn objective_metric_delegates() {
    let p = random_problem(8, 4, 6, BlockStructure::uniform(2, 3, 1).unwrap());
    let x = signal(random_vec(&mut rng(9), 6));
    let ax = p.a.apply(&x);
    let mut want = 0.0;
    for k in 0..4 {
        want += (ax[k] - p.y[k]).norm_sqr();
    }
    assert!((objective_metric(&p, &x).unwrap() - want).abs() <= 1e-12 * want);
}
