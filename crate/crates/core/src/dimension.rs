//! Oscillation covers and the path-adapted box dimension.
//!
//! `M_omega(E, eps)` is the least number of closed intervals covering `E`
//! on each of which `omega` oscillates by at most `eps`.
//!
//! The greedy cover is optimal. Start at `p = min E`, take the longest
//! feasible interval `[p, r]`, then restart at the first point of `E` not
//! yet covered. Given any cover, order its intervals by left end; the first
//! one must contain `p` and is feasible, and feasibility passes to
//! subintervals, so its part to the right of `p` is some `[p, r']` with
//! `r' <= r`. Replacing it by `[p, r]` covers at least as much and leaves
//! the remaining intervals to cover a subset of what they covered before.
//! Induction on the number of intervals gives `greedy <= optimal`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{segment_crossing, ClosedInterval, IntervalSet, PredictabilityEnvelope, Regime, SampledPath};
use crate::sum::ls_slope;

/// Covers are computed at `eps * (1 + COVER_SLACK)` so that rounding in the
/// crossing times cannot add a sliver interval at the end.
pub const COVER_SLACK: f64 = 1e-10;

/// Resolution floor for covers: `eps >= FLOOR_FACTOR * (max per-step
/// oscillation)`.
pub const FLOOR_FACTOR: f64 = 4.0;

/// `sup - inf` of `path` over `interval`.
pub fn oscillation(path: &SampledPath, interval: ClosedInterval) -> Result<f64> {
    if !(interval.start >= 0.0 && interval.end <= path.end() && interval.start <= interval.end) {
        return Err(Error::Domain(format!(
            "interval [{}, {}] outside [0, {}]",
            interval.start,
            interval.end,
            path.end()
        )));
    }
    let a = path.value_at(interval.start);
    let b = path.value_at(interval.end);
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let times = path.times();
    let first = times.partition_point(|&t| t <= interval.start);
    for (&t, &v) in times[first..].iter().zip(&path.values()[first..]) {
        if t > interval.end {
            break;
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(hi - lo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverResult {
    pub epsilon: f64,
    pub intervals: Vec<ClosedInterval>,
    pub count: usize,
    /// At most `epsilon * (1 + COVER_SLACK)` up to rounding.
    pub max_osc: f64,
}

/// `sup { r : osc_[p, r](omega) <= eps }`, capped at the end of the path.
fn reach(omega: &SampledPath, p: f64, eps: f64) -> f64 {
    let times = omega.times();
    let values = omega.values();
    let mut i = omega.segment_index(p);
    let (mut t_cur, mut v_cur) = (p, omega.value_at(p));
    let (mut lo, mut hi) = (v_cur, v_cur);
    while i + 1 < times.len() {
        let (tb, vb) = (times[i + 1], values[i + 1]);
        if tb > t_cur {
            if vb.max(hi) - vb.min(lo) > eps {
                let target = if vb > v_cur { lo + eps } else { hi - eps };
                let r = segment_crossing(t_cur, tb, v_cur, vb, target);
                return r.clamp(t_cur, tb);
            }
            lo = lo.min(vb);
            hi = hi.max(vb);
            t_cur = tb;
            v_cur = vb;
        }
        i += 1;
    }
    omega.end()
}

/// Greedy left-to-right cover of `e` by intervals of `omega`-oscillation at
/// most `epsilon`; its size is `M_omega(E, epsilon)`.
pub fn covering_number(omega: &SampledPath, e: &IntervalSet, epsilon: f64) -> Result<CoverResult> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if omega.regime() != Regime::ContinuousLinear {
        return Err(Error::Regime("covers need a continuous-linear omega".into()));
    }
    let (Some(first), Some(last)) = (e.min(), e.max()) else {
        return Err(Error::Config("cannot cover the empty set".into()));
    };
    if last > omega.end() {
        return Err(Error::Domain(format!(
            "set reaches {last} beyond the path end {}",
            omega.end()
        )));
    }
    let eff = epsilon * (1.0 + COVER_SLACK);
    let mut intervals = Vec::new();
    let mut max_osc = 0.0f64;
    let mut p = first;
    loop {
        let r = reach(omega, p, eff).max(p);
        let iv = ClosedInterval { start: p, end: r };
        max_osc = max_osc.max(oscillation(omega, iv)?);
        intervals.push(iv);
        match e.first_entry_after(r) {
            Some(q) if q > p => p = q,
            _ => break,
        }
    }
    Ok(CoverResult {
        epsilon,
        count: intervals.len(),
        intervals,
        max_osc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub epsilons: Vec<f64>,
    pub counts: Vec<usize>,
    /// Least-squares slope of `ln M` against `ln(1/eps)`.
    pub slope: f64,
    /// `(eps_min, eps_max)` of the fit.
    pub window: (f64, f64),
}

impl DimensionEstimate {
    fn empty(epsilons: &[f64]) -> Self {
        Self {
            epsilons: epsilons.to_vec(),
            counts: vec![0; epsilons.len()],
            slope: 0.0,
            window: window(epsilons),
        }
    }
}

fn window(eps: &[f64]) -> (f64, f64) {
    let lo = eps.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eps.iter().copied().fold(0.0, f64::max);
    (lo, hi)
}

/// `FLOOR_FACTOR * (max per-step oscillation of omega)`.
pub fn resolution_floor(omega: &SampledPath) -> f64 {
    FLOOR_FACTOR * omega.max_step_oscillation()
}

/// Fits the slope of `ln M_omega(E, eps)` against `ln(1/eps)`. The empty set
/// has dimension 0.
pub fn dimension_estimate(omega: &SampledPath, e: &IntervalSet, epsilons: &[f64]) -> Result<DimensionEstimate> {
    if epsilons.len() < 2 {
        return Err(Error::Config("need at least two epsilons".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || !(epsilons[epsilons.len() - 1] > 0.0) {
        return Err(Error::Config("epsilons must be positive and strictly decreasing".into()));
    }
    let floor = resolution_floor(omega);
    if let Some(&bad) = epsilons.iter().find(|&&x| x < floor) {
        return Err(Error::Domain(format!(
            "epsilon {bad} is below the resolution floor {floor}"
        )));
    }
    if e.is_empty() {
        return Ok(DimensionEstimate::empty(epsilons));
    }
    let counts = epsilons
        .par_iter()
        .map(|&eps| covering_number(omega, e, eps).map(|c| c.count))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = epsilons.iter().map(|&eps| -eps.ln()).collect();
    let y: Vec<f64> = counts.iter().map(|&m| (m as f64).ln()).collect();
    let slope = ls_slope(&x, &y).ok_or_else(|| Error::Config("degenerate epsilon schedule".into()))?;
    Ok(DimensionEstimate {
        epsilons: epsilons.to_vec(),
        counts,
        slope,
        window: window(epsilons),
    })
}

/// Geometric schedule of `count` epsilons from a quarter of the oscillation
/// of `omega` over `[0, t]` down to the resolution floor.
pub fn default_epsilons(omega: &SampledPath, t: f64, count: usize) -> Result<Vec<f64>> {
    let hi = 0.25 * oscillation(omega, ClosedInterval { start: 0.0, end: t.min(omega.end()) })?;
    let lo = resolution_floor(omega);
    if !(hi > lo) || count < 2 {
        return Err(Error::Domain(format!(
            "no scaling window: oscillation/4 = {hi}, resolution floor = {lo}"
        )));
    }
    let ratio = (lo / hi).powf(1.0 / (count - 1) as f64);
    let mut eps: Vec<f64> = (0..count).map(|i| hi * ratio.powi(i as i32)).collect();
    eps[count - 1] = lo;
    Ok(eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TameResult {
    pub tame: bool,
    pub delta: f64,
    pub estimate: DimensionEstimate,
}

/// Whether the exception set of `env` up to `t` has estimated
/// `omega`-dimension below `2 - delta`.
pub fn is_tame(omega: &SampledPath, env: &PredictabilityEnvelope, t: f64, delta: f64) -> Result<TameResult> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    let e = env.exception_set.clip(0.0, t);
    let epsilons = default_epsilons(omega, t, 8)?;
    let estimate = dimension_estimate(omega, &e, &epsilons)?;
    Ok(TameResult {
        tame: estimate.slope < 2.0 - delta,
        delta,
        estimate,
    })
}

pub fn write_estimate_json<W: Write>(mut w: W, est: &DimensionEstimate) -> Result<()> {
    serde_json::to_writer(&mut w, est)?;
    writeln!(w)?;
    Ok(())
}

/// CSV of `(ln(1/eps), ln M)` pairs.
pub fn write_estimate_csv<W: Write>(w: W, est: &DimensionEstimate) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["log_inv_eps", "log_count"])?;
    for (&eps, &m) in est.epsilons.iter().zip(&est.counts) {
        wtr.write_record([(-eps.ln()).to_string(), (m as f64).ln().to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
