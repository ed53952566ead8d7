//! Sampled paths with explicit interpolation semantics.
//!
//! A [`SampledPath`] is a finite time grid starting at 0 with one value per
//! grid point and a [`Regime`] saying how the path behaves between grid
//! points: linear interpolation for continuous paths, or a right-continuous
//! step for càdlàg paths (jumps then happen only at grid points).
//!
//! Integrands that are not themselves sampled paths (a smooth function of a
//! path, or a level indicator of a path) are exposed through the
//! [`Evaluate`] and [`Integrand`] traits so the partition and integral code
//! can treat them uniformly.

mod envelope;
mod generate;
mod intervals;
mod io;

pub use envelope::{JumpEnvelope, PredictabilityEnvelope};
pub use generate::{
    derive_seed, generate, jump_envelope, tanaka_integrand, GeneratorKind, PathGeneratorConfig,
    TanakaIntegrand, TanakaKind, PRNG_NAME,
};
pub use intervals::{ClosedInterval, IntervalSet};
pub use io::{read_path, read_path_file, write_path, write_path_file, PathFile, PathFormat, PathMeta};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interpolation regime of a sampled path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Piecewise-linear interpolation between grid points.
    ContinuousLinear,
    /// Right-continuous step: the value at `t` is the value at the greatest
    /// grid point `<= t`.
    CadlagStep,
}

/// A real-valued path known on a finite grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    times: Vec<f64>,
    values: Vec<f64>,
    regime: Regime,
}

impl SampledPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, regime: Regime) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidPath("empty time grid".into()));
        }
        if times.len() != values.len() {
            return Err(Error::InvalidPath(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPath(format!(
                "time grid must start at 0, got {}",
                times[0]
            )));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPath(format!(
                "times not strictly increasing at index {}",
                i + 1
            )));
        }
        if times.iter().chain(values.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidPath("non-finite time or value".into()));
        }
        Ok(Self {
            times,
            values,
            regime,
        })
    }

    /// Builds a path on the grid `0, step, 2*step, ...` up to `horizon`
    /// (the last step is shortened if `horizon` is not a multiple of `step`).
    pub fn from_fn(
        horizon: f64,
        step: f64,
        regime: Regime,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let times = uniform_grid(horizon, step)?;
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values, regime)
    }

    pub fn constant(value: f64, horizon: f64, step: f64, regime: Regime) -> Result<Self> {
        Self::from_fn(horizon, step, regime, |_| value)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Last grid time.
    pub fn end(&self) -> f64 {
        *self.times.last().expect("non-empty by construction")
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = regime;
        self
    }

    /// Index of the greatest grid point `<= t` (0 for `t` before the grid).
    pub(crate) fn segment_index(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t).saturating_sub(1)
    }

    /// Value at `t`. Grid hits return the stored value exactly.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.end()) {
            return Err(Error::Domain(format!(
                "t = {t} outside [0, {}]",
                self.end()
            )));
        }
        Ok(self.value_at(t))
    }

    /// Left limit `f(t-)`: the value at the greatest grid point strictly
    /// below `t` for step paths; equal to [`evaluate`](Self::evaluate) for
    /// continuous paths.
    pub fn left_limit(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= self.end()) {
            return Err(Error::Domain(format!(
                "left limit requires t in (0, {}], got {t}",
                self.end()
            )));
        }
        match self.regime {
            Regime::ContinuousLinear => Ok(self.value_at(t)),
            Regime::CadlagStep => {
                let j = self.times.partition_point(|&x| x < t) - 1;
                Ok(self.values[j])
            }
        }
    }

    /// Unchecked evaluation; `t` is clamped to the grid.
    pub(crate) fn value_at(&self, t: f64) -> f64 {
        let i = self.segment_index(t);
        let last = self.times.len() - 1;
        if i >= last || self.times[i] == t || t <= self.times[0] {
            return self.values[i.min(last)];
        }
        match self.regime {
            Regime::CadlagStep => self.values[i],
            Regime::ContinuousLinear => {
                let (ta, tb) = (self.times[i], self.times[i + 1]);
                let (va, vb) = (self.values[i], self.values[i + 1]);
                va + (vb - va) * ((t - ta) / (tb - ta))
            }
        }
    }

    /// Largest absolute change between consecutive grid values.
    pub fn max_step_oscillation(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max)
    }

    /// Sum of squared grid increments (the realized quadratic variation of
    /// the sampled values up to `t`).
    pub fn grid_quadratic_variation(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut prev = self.values[0];
        for (&ti, &vi) in self.times.iter().zip(&self.values).skip(1) {
            if ti > t {
                if self.regime == Regime::ContinuousLinear {
                    let v = self.value_at(t);
                    acc += (v - prev) * (v - prev);
                }
                break;
            }
            acc += (vi - prev) * (vi - prev);
            prev = vi;
        }
        acc
    }

    /// Samples `f` at every grid point, keeping the grid and regime.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SampledPath {
        SampledPath {
            times: self.times.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            regime: self.regime,
        }
    }

    fn check_covers(&self, horizon: f64, what: &str) -> Result<()> {
        if self.end() < horizon {
            return Err(Error::Domain(format!(
                "{what} ends at {} before horizon {horizon}",
                self.end()
            )));
        }
        Ok(())
    }
}

/// Grid `0, step, 2 step, ...` ending exactly at `horizon`.
pub fn uniform_grid(horizon: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("grid step must be positive, got {step}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    let m = (horizon / step - 1e-9).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..m).map(|i| i as f64 * step).collect();
    times.push(horizon);
    Ok(times)
}

/// Anything that can be evaluated pointwise on `[0, end]`.
pub trait Evaluate: Sync {
    /// Value at `t`; callers keep `t` within `[0, end()]`.
    fn value(&self, t: f64) -> f64;

    fn end(&self) -> f64;
}

/// An integrand whose first significant move after a time can be located
/// exactly, which is what the stopping-time partitions need.
pub trait Integrand: Evaluate {
    /// `inf { s in (after, until] : |value(s) - reference| >= threshold }`,
    /// or `None` if the set is empty.
    fn first_departure(&self, after: f64, until: f64, reference: f64, threshold: f64)
        -> Option<f64>;
}

impl Evaluate for SampledPath {
    fn value(&self, t: f64) -> f64 {
        self.value_at(t)
    }

    fn end(&self) -> f64 {
        SampledPath::end(self)
    }
}

impl Integrand for SampledPath {
    fn first_departure(
        &self,
        after: f64,
        until: f64,
        reference: f64,
        threshold: f64,
    ) -> Option<f64> {
        let until = until.min(self.end());
        if !(until > after) {
            return None;
        }
        if (self.value_at(after) - reference).abs() >= threshold {
            return Some(after);
        }
        let mut i = self.segment_index(after);
        let last = self.times.len() - 1;
        match self.regime {
            Regime::CadlagStep => {
                i += 1;
                while i <= last && self.times[i] <= until {
                    if (self.values[i] - reference).abs() >= threshold {
                        return Some(self.times[i]);
                    }
                    i += 1;
                }
                None
            }
            Regime::ContinuousLinear => {
                while i < last && self.times[i] < until {
                    let (ta, tb) = (self.times[i], self.times[i + 1]);
                    let da = self.values[i] - reference;
                    let db = self.values[i + 1] - reference;
                    // The deviation is linear on the segment and below the
                    // threshold at its left end (or at `after`), so the first
                    // hit is where it reaches +threshold or -threshold.
                    let target = if db >= threshold {
                        Some(threshold)
                    } else if db <= -threshold {
                        Some(-threshold)
                    } else {
                        None
                    };
                    if let Some(target) = target {
                        let t = if (da - target).abs() == 0.0 {
                            ta
                        } else {
                            segment_crossing(ta, tb, da, db, target)
                        };
                        let t = t.max(after).min(tb);
                        return (t <= until).then_some(t);
                    }
                    i += 1;
                }
                None
            }
        }
    }
}

/// Time in `[ta, tb]` where the linear interpolant from `da` to `db` equals
/// `target`.
pub(crate) fn segment_crossing(ta: f64, tb: f64, da: f64, db: f64, target: f64) -> f64 {
    let u = (target - da) / (db - da);
    if u >= 1.0 {
        tb
    } else {
        ta + u * (tb - ta)
    }
}

/// A smooth function applied to a sampled path, `t -> f(path(t))`.
pub struct MappedPath<'a, F> {
    base: &'a SampledPath,
    f: F,
}

impl<'a, F: Fn(f64) -> f64 + Sync> MappedPath<'a, F> {
    pub fn new(base: &'a SampledPath, f: F) -> Self {
        Self { base, f }
    }
}

impl<F: Fn(f64) -> f64 + Sync> Evaluate for MappedPath<'_, F> {
    fn value(&self, t: f64) -> f64 {
        (self.f)(self.base.value_at(t))
    }

    fn end(&self) -> f64 {
        self.base.end()
    }
}

/// Constant integrand on `[0, end]`.
#[derive(Debug, Clone, Copy)]
pub struct Constant {
    pub value: f64,
    pub end: f64,
}

impl Evaluate for Constant {
    fn value(&self, _t: f64) -> f64 {
        self.value
    }

    fn end(&self) -> f64 {
        self.end
    }
}

impl Integrand for Constant {
    fn first_departure(&self, _: f64, _: f64, reference: f64, threshold: f64) -> Option<f64> {
        // A constant never moves; a mismatched reference is a caller bug.
        debug_assert!((self.value - reference).abs() < threshold);
        None
    }
}

pub(crate) fn ensure_covers(path: &SampledPath, horizon: f64, what: &str) -> Result<()> {
    path.check_covers(horizon, what)
}
