//! Performance metrics over simulation records: final error, position-error
//! zero crossings with hysteresis, peak overshoot, running L2 error norms and
//! exponential-envelope fits.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::sim::SimRecord;
use crate::target::DesiredTarget;

#[derive(Debug, Clone)]
pub struct Metrics {
    pub final_error: f64,
    /// Zero crossings of the first position-error component, counted with a
    /// hysteresis band to ignore numerical chatter.
    pub zero_crossings: usize,
    pub hysteresis_band: f64,
    /// Worst excursion of the position past its target, in the approach
    /// direction (0 when the response never overshoots).
    pub peak_overshoot: f64,
    /// Running `‖e‖_{L2,[0,t]}` (trapezoidal quadrature of `‖e‖²`).
    pub running_l2: Vec<f64>,
    pub l2_final: f64,
    /// Exponential fit of `log ‖e(t)‖` on the post-transient window.
    pub fitted_rate: Option<f64>,
    pub fit_r2: Option<f64>,
    pub fit_points: usize,
}

/// Least-squares line fit of `ln(values)` on `[t0, t1]`, excluding samples
/// below `floor_rel` times the window peak (the integrator noise floor).
///
/// Returns `(rate, r2, points)` with `rate = -slope`, so positive rates mean
/// decay.
pub fn exponential_fit(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
    floor_rel: f64,
) -> Option<(f64, f64, usize)> {
    // the floor is relative to the global peak: once the signal has decayed
    // to the integrator noise floor it carries no rate information
    let peak = values.iter().fold(0.0f64, |a, &v| a.max(v));
    if peak <= 0.0 {
        return None;
    }
    let floor = peak * floor_rel;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(&t, &v)| t >= window.0 && t <= window.1 && v > floor)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 8 {
        return None;
    }
    let n = pts.len() as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for &(t, y) in &pts {
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let denom = n * stt - st * st;
    if denom.abs() < 1e-300 {
        return None;
    }
    let slope = (n * sty - st * sy) / denom;
    let intercept = (sy - slope * st) / n;
    let mean = sy / n;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for &(t, y) in &pts {
        let pred = intercept + slope * t;
        ss_res += (y - pred) * (y - pred);
        ss_tot += (y - mean) * (y - mean);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some((-slope, r2, pts.len()))
}

/// Count sign alternations of `signal` outside the hysteresis `band`.
pub fn zero_crossings(signal: &[f64], band: f64) -> usize {
    let mut count = 0usize;
    let mut side = 0i8;
    for &v in signal {
        if side == 0 {
            if v > band {
                side = 1;
            } else if v < -band {
                side = -1;
            }
        } else if side == 1 && v < -band {
            count += 1;
            side = -1;
        } else if side == -1 && v > band {
            count += 1;
            side = 1;
        }
    }
    count
}

/// Metrics of a (possibly truncated) run against its target.
pub fn compute_metrics(record: &SimRecord, target: &DesiredTarget) -> Result<Metrics> {
    if record.times.is_empty() {
        return Err(Error::Config("empty simulation record".into()));
    }
    let n = record.times.len();
    // position error of the first mechanical coordinate
    let mut eq = vec![0.0; n];
    let mut e2 = vec![0.0; n];
    for k in 0..n {
        let star = target.state(record.times[k])?.to_vec();
        let y = &record.states[k];
        eq[k] = y[0] - star[0];
        e2[k] = y
            .iter()
            .zip(&star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    let e_norm: Vec<f64> = e2.iter().map(|v| v.sqrt()).collect();
    let mut running = vec![0.0; n];
    let mut acc = 0.0;
    for k in 1..n {
        let dt = record.times[k] - record.times[k - 1];
        acc += 0.5 * (e2[k] + e2[k - 1]) * dt;
        running[k] = acc.sqrt();
    }
    let band = {
        let e0 = eq[0].abs();
        if e0 > 0.0 {
            1e-3 * e0
        } else {
            1e-3 * eq.iter().fold(0.0f64, |a, v| a.max(v.abs()))
        }
    };
    let crossings = zero_crossings(&eq, band);
    // overshoot in the approach direction
    let dir = -eq[0].signum();
    let overshoot = eq.iter().fold(0.0f64, |a, &v| a.max(dir * v));
    let horizon = *record.times.last().unwrap();
    let fit = exponential_fit(&record.times, &e_norm, (0.05 * horizon, horizon), 1e-8);
    Ok(Metrics {
        final_error: *e_norm.last().unwrap(),
        zero_crossings: crossings,
        hysteresis_band: band,
        peak_overshoot: overshoot,
        l2_final: *running.last().unwrap(),
        running_l2: running,
        fitted_rate: fit.map(|f| f.0),
        fit_r2: fit.map(|f| f.1),
        fit_points: fit.map(|f| f.2).unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_exponential_recovers_rate_and_l2() {
        // e(t) = exp(-t) on [0, 10]: ‖e‖_{L2} -> sqrt((1 - e^{-20})/2)
        let n = 2000;
        let times: Vec<f64> = (0..=n).map(|k| 10.0 * k as f64 / n as f64).collect();
        let vals: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let (rate, r2, _) = exponential_fit(&times, &vals, (0.5, 10.0), 1e-30).unwrap();
        assert!((rate - 1.0).abs() < 1e-9);
        assert!(r2 > 0.999999);
        let e2: Vec<f64> = vals.iter().map(|v| v * v).collect();
        let mut acc = 0.0;
        for k in 1..times.len() {
            acc += 0.5 * (e2[k] + e2[k - 1]) * (times[k] - times[k - 1]);
        }
        let expect = ((1.0 - (-20.0f64).exp()) / 2.0).sqrt();
        assert!((acc.sqrt() - expect).abs() < 1e-5);
        assert!((expect - 0.7071).abs() < 1e-4);
    }

    #[test]
    fn crossing_counter_respects_hysteresis() {
        let sig = [1.0, -1.0, 1.0, -1.0, 1e-6, -1e-6, 1e-6];
        assert_eq!(zero_crossings(&sig, 1e-3), 3);
        // chatter within the band does not count
        let chatter = [1.0, 1e-5, -1e-5, 1e-5, -1.0];
        assert_eq!(zero_crossings(&chatter, 1e-3), 1);
    }

    #[test]
    fn zero_signal_gives_zero_metrics() {
        let times: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let vals = vec![0.0; 100];
        assert!(exponential_fit(&times, &vals, (5.0, 99.0), 1e-9).is_none());
        assert_eq!(zero_crossings(&vals, 0.0), 0);
    }
}
