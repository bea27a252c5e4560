//! Recovery indicators and the per-user detection protocol.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{objective, Problem};
use crate::types::{BlockStructure, ComplexSignal, C64};

/// Magnitude at or below which a recovered coordinate counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Number of bisection steps used by [`calibrate_threshold`].
pub const CALIBRATION_STEPS: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iterations: f64,
    pub wall_time: f64,
    pub r_error: f64,
    pub obj_value: f64,
    pub t_rate: f64,
    pub tc_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    pub fap: f64,
    pub fir: f64,
    pub threshold: f64,
    pub trials: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDenominator {
    /// ‖x_rec − x_true‖ / ‖x_rec‖
    #[default]
    Recovered,
    /// ‖x_rec − x_true‖ / ‖x_true‖
    Truth,
}

/// ‖x_rec − x_true‖ / ‖x_rec‖; `+inf` when only the recovery is zero.
pub fn relative_error(x_rec: &[C64], x_true: &[C64]) -> Result<f64> {
    relative_error_with(x_rec, x_true, ErrorDenominator::Recovered)
}

pub fn relative_error_with(x_rec: &[C64], x_true: &[C64], denom: ErrorDenominator) -> Result<f64> {
    check_len("x_true", x_rec.len(), x_true.len())?;
    let diff: f64 = x_rec.iter().zip(x_true).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let base = match denom {
        ErrorDenominator::Recovered => x_rec,
        ErrorDenominator::Truth => x_true,
    };
    let scale = base.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(if diff == 0.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        diff / scale
    })
}

/// Percentages of true nonzeros recovered as nonzero and of true zeros
/// recovered as zero. An empty class scores 100.
pub fn support_rates(x_rec: &[C64], x_true: &[C64], zero_tol: f64) -> Result<(f64, f64)> {
    check_len("x_true", x_rec.len(), x_true.len())?;
    let (mut on, mut on_hit, mut off, mut off_hit) = (0usize, 0usize, 0usize, 0usize);
    for (r, t) in x_rec.iter().zip(x_true) {
        let kept = r.norm() > zero_tol;
        if *t != C64::new(0.0, 0.0) {
            on += 1;
            on_hit += kept as usize;
        } else {
            off += 1;
            off_hit += !kept as usize;
        }
    }
    let pct = |hit: usize, total: usize| if total == 0 { 100.0 } else { 100.0 * hit as f64 / total as f64 };
    Ok((pct(on_hit, on), pct(off_hit, off)))
}

pub fn objective_metric(p: &Problem, x_rec: &[C64]) -> Result<f64> {
    objective(p, x_rec)
}

/// Fieldwise arithmetic mean.
pub fn aggregate(records: &[MetricsRecord]) -> Result<MetricsRecord> {
    if records.is_empty() {
        return Err(Error::Contract("cannot aggregate an empty record list".into()));
    }
    let k = records.len() as f64;
    let mean = |f: fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / k;
    Ok(MetricsRecord {
        iterations: mean(|r| r.iterations),
        wall_time: mean(|r| r.wall_time),
        r_error: mean(|r| r.r_error),
        obj_value: mean(|r| r.obj_value),
        t_rate: mean(|r| r.t_rate),
        tc_rate: mean(|r| r.tc_rate),
    })
}

/// Largest recovered modulus per user-trial, split by the true activity of
/// the user. A user is declared active when its maximum exceeds the
/// threshold.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UserMaxima {
    pub inactive: Vec<f64>,
    pub active: Vec<f64>,
    pub trials: usize,
}

impl UserMaxima {
    pub fn collect(recovered: &[ComplexSignal], truths: &[ComplexSignal], bs: &BlockStructure) -> Result<Self> {
        if recovered.is_empty() {
            return Err(Error::Contract("detection needs at least one trial".into()));
        }
        check_len("truths", recovered.len(), truths.len())?;
        let mut out = UserMaxima {
            trials: recovered.len(),
            ..Default::default()
        };
        for (rec, truth) in recovered.iter().zip(truths) {
            check_len("recovered signal", bs.total_len(), rec.len())?;
            check_len("true signal", bs.total_len(), truth.len())?;
            for b in 0..bs.num_blocks() {
                let range = bs.range(b);
                let peak = rec[range.clone()].iter().map(|z| z.norm()).fold(0.0, f64::max);
                if truth[range].iter().any(|z| *z != C64::new(0.0, 0.0)) {
                    out.active.push(peak);
                } else {
                    out.inactive.push(peak);
                }
            }
        }
        Ok(out)
    }

    pub fn extend(&mut self, other: UserMaxima) {
        self.inactive.extend(other.inactive);
        self.active.extend(other.active);
        self.trials += other.trials;
    }

    pub fn fap(&self, threshold: f64) -> f64 {
        rate(&self.inactive, |v| v > threshold)
    }

    /// Missed-detection rate; 0 when no user is ever active.
    pub fn fir(&self, threshold: f64) -> f64 {
        rate(&self.active, |v| v <= threshold)
    }

    pub fn stats_at(&self, threshold: f64) -> DetectionStats {
        DetectionStats {
            fap: self.fap(threshold),
            fir: self.fir(threshold),
            threshold,
            trials: self.trials,
        }
    }

    /// `{0}` together with every inactive-user maximum, sorted and deduplicated.
    /// FAP only changes at these values.
    pub fn candidates(&self) -> Vec<f64> {
        let mut c: Vec<f64> = std::iter::once(0.0).chain(self.inactive.iter().copied()).collect();
        c.sort_by(f64::total_cmp);
        c.dedup();
        c
    }
}

fn rate(values: &[f64], hit: impl Fn(f64) -> bool) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().filter(|&&v| hit(v)).count() as f64 / values.len() as f64
    }
}

/// Smallest threshold whose false-alarm rate is at most `target_fap`, with the
/// detection statistics at that threshold.
pub fn calibrate_threshold(
    recovered: &[ComplexSignal],
    truths: &[ComplexSignal],
    bs: &BlockStructure,
    target_fap: f64,
) -> Result<DetectionStats> {
    if !(target_fap > 0.0 && target_fap < 1.0) {
        return Err(Error::Contract(format!("target_fap = {target_fap} must lie in (0, 1)")));
    }
    calibrate_maxima(&UserMaxima::collect(recovered, truths, bs)?, target_fap)
}

/// [`calibrate_threshold`] on maxima gathered beforehand, e.g. merged across
/// batches with [`UserMaxima::extend`].
pub fn calibrate_maxima(maxima: &UserMaxima, target_fap: f64) -> Result<DetectionStats> {
    if !(target_fap > 0.0 && target_fap < 1.0) {
        return Err(Error::Contract(format!("target_fap = {target_fap} must lie in (0, 1)")));
    }
    if maxima.inactive.is_empty() {
        return Err(Error::Contract("no inactive user-trials, false-alarm rate undefined".into()));
    }
    let cand = maxima.candidates();
    // The largest candidate always has FAP = 0.
    let (mut lo, mut hi) = (0usize, cand.len() - 1);
    for _ in 0..CALIBRATION_STEPS {
        if lo >= hi {
            break;
        }
        let mid = lo + (hi - lo) / 2;
        if maxima.fap(cand[mid]) <= target_fap {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(maxima.stats_at(cand[hi]))
}
