//! Level-`n` stopping-time partitions.
//!
//! `T_0 = 0` and `T_k` is the first time after `T_{k-1}` at which `omega` or
//! `phi` has moved by the threshold `2^-n` from its value at `T_{k-1}`.
//! Three regimes share one engine:
//!
//! - continuous: piecewise-linear paths, crossings solved in closed form per
//!   grid segment, so the move equals the threshold up to rounding;
//! - càdlàg: step paths, candidates are grid points and jumps may overshoot;
//! - predictable: an integrand with an envelope whose bounds disagree on a
//!   closed exception set `E`. Outside `E` the next time is the first
//!   threshold move of either path or the first entry into `E`; from a time
//!   inside `E` only `omega` is watched.
//!
//! Every partition is closed by the horizon, tagged [`Trigger::Horizon`],
//! unless a stopping time lands on it exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{ensure_covers, Integrand, IntervalSet, PredictabilityEnvelope, Regime, SampledPath};

/// Highest level ever considered; `2^-60` is far below any useful grid.
pub const MAX_LEVEL: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    /// `T_0 = 0`.
    Start,
    OmegaMove,
    PhiMove,
    Both,
    ExceptionEntered,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionTime {
    pub t: f64,
    pub trigger: Trigger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionLevel {
    pub level: u32,
    pub threshold: f64,
    pub horizon: f64,
    pub times: Vec<PartitionTime>,
}

impl PartitionLevel {
    /// All times, including the closing horizon.
    pub fn instants(&self) -> Vec<f64> {
        self.times.iter().map(|p| p.t).collect()
    }

    /// The stopping times proper, without the closing horizon entry.
    pub fn stopping_times(&self) -> Vec<f64> {
        self.times
            .iter()
            .filter(|p| p.trigger != Trigger::Horizon)
            .map(|p| p.t)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `2^-n`.
pub fn threshold(level: u32) -> f64 {
    (-(level as f64)).exp2()
}

/// Largest `n` with `2^-n >= factor * (max per-step oscillation)` over the
/// continuous-linear paths given. Step paths are exempt: their jumps are
/// genuine, not interpolation artifacts.
pub fn max_admissible_level(paths: &[&SampledPath], factor: f64) -> u32 {
    let osc = paths
        .iter()
        .filter(|p| p.regime() == Regime::ContinuousLinear)
        .map(|p| p.max_step_oscillation())
        .fold(0.0, f64::max);
    let floor = factor * osc;
    if !(floor > 0.0) {
        return MAX_LEVEL;
    }
    (0..=MAX_LEVEL)
        .take_while(|&n| threshold(n) >= floor)
        .last()
        .unwrap_or(0)
}

pub fn check_resolution(level: u32, paths: &[&SampledPath], factor: f64) -> Result<()> {
    let max_level = max_admissible_level(paths, factor);
    if level > max_level {
        return Err(Error::Resolution { level, max_level });
    }
    Ok(())
}

fn check_level(level: u32) -> Result<()> {
    if level == 0 || level > MAX_LEVEL {
        return Err(Error::Config(format!("level must be in 1..={MAX_LEVEL}, got {level}")));
    }
    Ok(())
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

/// Partition for continuous piecewise-linear `omega` and `phi`.
pub fn partition_continuous(
    omega: &SampledPath,
    phi: &SampledPath,
    level: u32,
    horizon: f64,
) -> Result<PartitionLevel> {
    for (p, name) in [(omega, "omega"), (phi, "phi")] {
        if p.regime() != Regime::ContinuousLinear {
            return Err(Error::Regime(format!("{name} must be continuous-linear")));
        }
        ensure_covers(p, horizon, name)?;
    }
    build(omega, phi, None, level, horizon)
}

/// Partition with the inequality form of the stopping rule; accepts step
/// and linear paths.
pub fn partition_cadlag(
    omega: &SampledPath,
    phi: &SampledPath,
    level: u32,
    horizon: f64,
) -> Result<PartitionLevel> {
    ensure_covers(omega, horizon, "omega")?;
    ensure_covers(phi, horizon, "phi")?;
    build(omega, phi, None, level, horizon)
}

/// Two-branch partition for an integrand with a predictability envelope.
/// `phi` is any [`Integrand`], so exact level indicators can be used.
pub fn partition_predictable(
    omega: &SampledPath,
    phi: &dyn Integrand,
    env: &PredictabilityEnvelope,
    level: u32,
    horizon: f64,
) -> Result<PartitionLevel> {
    if omega.regime() != Regime::ContinuousLinear {
        return Err(Error::Regime(
            "the predictable regime needs a continuous-linear omega".into(),
        ));
    }
    ensure_covers(omega, horizon, "omega")?;
    if phi.end() < horizon {
        return Err(Error::Domain(format!(
            "phi ends at {} before horizon {horizon}",
            phi.end()
        )));
    }
    env.validate(phi)?;
    let e = env.exception_set.clip(0.0, horizon);
    build(omega, phi, Some(&e), level, horizon)
}

/// Which stopping rule to apply, for callers that pick the regime at run
/// time.
#[derive(Debug, Clone, Copy)]
pub enum Rule<'a> {
    Continuous,
    Cadlag,
    Predictable(&'a PredictabilityEnvelope),
}

impl Rule<'_> {
    /// Continuous when both paths are continuous-linear, càdlàg otherwise.
    pub fn for_paths(omega: &SampledPath, phi: &SampledPath) -> Rule<'static> {
        if omega.regime() == Regime::ContinuousLinear && phi.regime() == Regime::ContinuousLinear {
            Rule::Continuous
        } else {
            Rule::Cadlag
        }
    }
}

/// Partition under `rule` for any integrand. Under [`Rule::Continuous`] only
/// `omega`'s regime can be checked here.
pub fn partition(
    omega: &SampledPath,
    phi: &dyn Integrand,
    rule: Rule<'_>,
    level: u32,
    horizon: f64,
) -> Result<PartitionLevel> {
    match rule {
        Rule::Predictable(env) => partition_predictable(omega, phi, env, level, horizon),
        Rule::Continuous | Rule::Cadlag => {
            if matches!(rule, Rule::Continuous) && omega.regime() != Regime::ContinuousLinear {
                return Err(Error::Regime("omega must be continuous-linear".into()));
            }
            ensure_covers(omega, horizon, "omega")?;
            if phi.end() < horizon {
                return Err(Error::Domain(format!(
                    "phi ends at {} before horizon {horizon}",
                    phi.end()
                )));
            }
            build(omega, phi, None, level, horizon)
        }
    }
}

fn build(
    omega: &SampledPath,
    phi: &dyn Integrand,
    exception: Option<&IntervalSet>,
    level: u32,
    horizon: f64,
) -> Result<PartitionLevel> {
    check_level(level)?;
    check_horizon(horizon)?;
    let eps = threshold(level);
    let min_span = 32.0 * horizon / omega.len() as f64;
    let mut span = min_span;
    let mut times = vec![PartitionTime {
        t: 0.0,
        trigger: Trigger::Start,
    }];
    let mut t = 0.0;
    while t < horizon {
        let in_e = exception.is_some_and(|e| e.contains(t));
        let entry = if in_e {
            None
        } else {
            exception
                .and_then(|e| e.first_entry_after(t))
                .filter(|&s| s <= horizon)
        };
        let w_ref = omega.value_at(t);
        let p_ref = phi.value(t);
        let limit = entry.unwrap_or(horizon);
        let mut lo = t;
        let mut found = None;
        // Search in growing windows so that the coordinate that moves late
        // is never scanned far beyond the one that moves first.
        while lo < limit && found.is_none() {
            let hi = (lo + span).min(limit);
            let tw = omega.first_departure(lo, hi, w_ref, eps);
            let tp = if in_e {
                None
            } else {
                phi.first_departure(lo, tw.unwrap_or(hi), p_ref, eps)
            };
            found = match (tw, tp) {
                (Some(a), Some(b)) if a == b => Some((a, Trigger::Both)),
                (Some(a), Some(b)) if b < a => Some((b, Trigger::PhiMove)),
                (Some(a), _) => Some((a, Trigger::OmegaMove)),
                (None, Some(b)) => Some((b, Trigger::PhiMove)),
                (None, None) => None,
            };
            lo = hi;
            if found.is_none() {
                span *= 2.0;
            }
        }
        let next = match (found, entry) {
            (Some(f), _) => f,
            (None, Some(s)) => (s, Trigger::ExceptionEntered),
            (None, None) => {
                times.push(PartitionTime {
                    t: horizon,
                    trigger: Trigger::Horizon,
                });
                break;
            }
        };
        if !(next.0 > t) {
            return Err(Error::Contract(format!(
                "partition at level {level} stalls at t = {t}: the integrand moves by the \
                 threshold immediately after a stopping time"
            )));
        }
        span = (2.0 * (next.0 - t)).max(min_span);
        t = next.0;
        times.push(PartitionTime {
            t,
            trigger: next.1,
        });
    }
    Ok(PartitionLevel {
        level,
        threshold: eps,
        horizon,
        times,
    })
}

/// Writes a partition as JSON `{level, threshold, horizon, times: [{t, trigger}]}`.
pub fn write_partition<W: std::io::Write>(mut w: W, part: &PartitionLevel) -> Result<()> {
    serde_json::to_writer(&mut w, part)?;
    writeln!(w)?;
    Ok(())
}
