use serde::{Deserialize, Serialize};

use super::{Evaluate, IntervalSet, Regime, SampledPath};
use crate::error::{Error, Result};

/// Predictable bounds on the jumps of a càdlàg integrator:
/// `lower(t-) <= omega(t) <= upper(t-)` for every `t > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEnvelope {
    pub lower: SampledPath,
    pub upper: SampledPath,
}

impl JumpEnvelope {
    pub fn new(lower: SampledPath, upper: SampledPath) -> Result<Self> {
        if lower.regime() != Regime::CadlagStep || upper.regime() != Regime::CadlagStep {
            return Err(Error::Regime("jump envelope paths must be cadlag-step".into()));
        }
        Ok(Self { lower, upper })
    }

    /// Checks the envelope condition at every grid point `t > 0` of `omega`.
    pub fn validate(&self, omega: &SampledPath) -> Result<()> {
        for (&t, &w) in omega.times().iter().zip(omega.values()).skip(1) {
            let lo = self.lower.left_limit(t)?;
            let hi = self.upper.left_limit(t)?;
            if !(lo <= w && w <= hi) {
                return Err(Error::Contract(format!(
                    "jump envelope violated at t = {t}: {lo} <= {w} <= {hi} fails"
                )));
            }
        }
        Ok(())
    }
}

/// Bounds `lower <= phi <= upper` on a possibly non-càdlàg integrand, with
/// the closed set where the bounds may disagree.
///
/// The bound paths are recorded at their grid points; between grid points
/// the disagreement set is given by `exception_set` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictabilityEnvelope {
    pub lower: SampledPath,
    pub upper: SampledPath,
    pub exception_set: IntervalSet,
}

impl PredictabilityEnvelope {
    pub fn new(lower: SampledPath, upper: SampledPath, exception_set: IntervalSet) -> Result<Self> {
        let env = Self {
            lower,
            upper,
            exception_set,
        };
        env.check_bounds()?;
        Ok(env)
    }

    /// An envelope whose bounds agree everywhere (the càdlàg case).
    pub fn tight(phi: &SampledPath) -> Self {
        Self {
            lower: phi.clone(),
            upper: phi.clone(),
            exception_set: IntervalSet::empty(),
        }
    }

    /// Whether `lower(t) < upper(t)` is permitted at `t`.
    pub fn is_exceptional(&self, t: f64) -> bool {
        self.exception_set.contains(t)
    }

    fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self
            .lower
            .times()
            .iter()
            .chain(self.upper.times())
            .copied()
            .collect();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }

    fn check_bounds(&self) -> Result<()> {
        for t in self.grid() {
            let lo = self.lower.value(t);
            let hi = self.upper.value(t);
            if lo > hi {
                return Err(Error::Contract(format!("envelope lower {lo} > upper {hi} at t = {t}")));
            }
            if (lo != hi) != self.is_exceptional(t) {
                return Err(Error::Contract(format!(
                    "exception set disagrees with bounds at t = {t} (lower {lo}, upper {hi})"
                )));
            }
        }
        Ok(())
    }

    /// Checks `lower <= phi <= upper` on the envelope grid, and the discrete
    /// right-neighbourhood condition: `phi` just right of each grid point
    /// stays within the bounds recorded at that point.
    pub fn validate(&self, phi: &dyn Evaluate) -> Result<()> {
        self.check_bounds()?;
        let grid = self.grid();
        let end = phi.end();
        for (i, &t) in grid.iter().enumerate() {
            if t > end {
                break;
            }
            let lo = self.lower.value(t);
            let hi = self.upper.value(t);
            let p = phi.value(t);
            if !(lo <= p && p <= hi) {
                return Err(Error::Contract(format!(
                    "integrand {p} outside envelope [{lo}, {hi}] at t = {t}"
                )));
            }
            if let Some(&next) = grid.get(i + 1) {
                let gap = next.min(end) - t;
                if gap > 0.0 {
                    // Right-limit surrogate: a sample just right of t, with
                    // slack equal to the local drift so continuous integrands
                    // are not mistaken for jumps.
                    let delta = 1e-6 * gap;
                    let q = phi.value(t + delta);
                    let slack = 2.0 * (q - phi.value(t + 0.5 * delta)).abs() + 1e-12;
                    if !(lo - slack <= q && q <= hi + slack) {
                        return Err(Error::Contract(format!(
                            "integrand right of t = {t} leaves envelope [{lo}, {hi}]: {q}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
