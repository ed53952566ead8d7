use serde::{Deserialize, Serialize};

use super::{segment_crossing, Regime, SampledPath};
use crate::error::{Error, Result};

/// A closed interval `[start, end]`; `start == end` is a single point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedInterval {
    pub start: f64,
    pub end: f64,
}

impl ClosedInterval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start <= end && start >= 0.0) {
            return Err(Error::Config(format!("invalid interval [{start}, {end}]")));
        }
        Ok(Self { start, end })
    }

    pub fn point(t: f64) -> Self {
        Self { start: t, end: t }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// A finite union of closed intervals, kept sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalSet {
    intervals: Vec<ClosedInterval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Normalizes arbitrary closed intervals into a sorted disjoint union.
    pub fn new(mut intervals: Vec<ClosedInterval>) -> Result<Self> {
        for iv in &intervals {
            ClosedInterval::new(iv.start, iv.end)?;
        }
        intervals.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut merged: Vec<ClosedInterval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match merged.last_mut() {
                Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
                _ => merged.push(iv),
            }
        }
        Ok(Self { intervals: merged })
    }

    pub fn from_points(points: &[f64]) -> Result<Self> {
        Self::new(points.iter().map(|&t| ClosedInterval::point(t)).collect())
    }

    pub fn intervals(&self) -> &[ClosedInterval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn contains(&self, t: f64) -> bool {
        let i = self.intervals.partition_point(|iv| iv.end < t);
        self.intervals.get(i).is_some_and(|iv| iv.start <= t)
    }

    /// `inf { s > t : s in E }`; equals `t` when `t` sits on the left of a
    /// non-degenerate piece of the set.
    pub fn first_entry_after(&self, t: f64) -> Option<f64> {
        let i = self.intervals.partition_point(|iv| iv.end <= t);
        self.intervals.get(i).map(|iv| iv.start.max(t))
    }

    /// Smallest point of the set that is `>= t`.
    pub fn first_point_at_or_after(&self, t: f64) -> Option<f64> {
        let i = self.intervals.partition_point(|iv| iv.end < t);
        self.intervals.get(i).map(|iv| iv.start.max(t))
    }

    pub fn min(&self) -> Option<f64> {
        self.intervals.first().map(|iv| iv.start)
    }

    pub fn max(&self) -> Option<f64> {
        self.intervals.last().map(|iv| iv.end)
    }

    /// Intersection with `[lo, hi]`.
    pub fn clip(&self, lo: f64, hi: f64) -> IntervalSet {
        let intervals = self
            .intervals
            .iter()
            .filter(|iv| iv.end >= lo && iv.start <= hi)
            .map(|iv| ClosedInterval {
                start: iv.start.max(lo),
                end: iv.end.min(hi),
            })
            .collect();
        IntervalSet { intervals }
    }

    /// Union with another set.
    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        IntervalSet::new(all).expect("inputs already valid")
    }

    /// `{ t : |path(t) - level| <= tol }`, exact for piecewise-linear paths.
    /// For step paths the closure of the set is returned.
    pub fn band(path: &SampledPath, level: f64, tol: f64) -> Result<IntervalSet> {
        if !(tol >= 0.0) {
            return Err(Error::Config(format!("band tolerance must be >= 0, got {tol}")));
        }
        let times = path.times();
        let values = path.values();
        let mut out = Vec::new();
        match path.regime() {
            Regime::CadlagStep => {
                for i in 0..times.len() {
                    if (values[i] - level).abs() <= tol {
                        let end = times.get(i + 1).copied().unwrap_or(times[i]);
                        out.push(ClosedInterval { start: times[i], end });
                    }
                }
            }
            Regime::ContinuousLinear => {
                if times.len() == 1 && (values[0] - level).abs() <= tol {
                    out.push(ClosedInterval::point(0.0));
                }
                for i in 0..times.len().saturating_sub(1) {
                    let (ta, tb) = (times[i], times[i + 1]);
                    let da = values[i] - level;
                    let db = values[i + 1] - level;
                    if let Some(iv) = segment_band(ta, tb, da, db, tol) {
                        out.push(iv);
                    }
                }
            }
        }
        IntervalSet::new(out)
    }

    /// The exact level set `{ t : path(t) = level }`.
    pub fn level_set(path: &SampledPath, level: f64) -> Result<IntervalSet> {
        Self::band(path, level, 0.0)
    }
}

/// Sub-interval of `[ta, tb]` where a linear deviation from `da` to `db`
/// stays within `[-tol, tol]`.
fn segment_band(ta: f64, tb: f64, da: f64, db: f64, tol: f64) -> Option<ClosedInterval> {
    let inside = |d: f64| d.abs() <= tol;
    if da == db {
        return inside(da).then_some(ClosedInterval { start: ta, end: tb });
    }
    let at = |target: f64| {
        if da == target {
            ta
        } else if db == target {
            tb
        } else {
            segment_crossing(ta, tb, da, db, target)
        }
    };
    let start = if inside(da) {
        ta
    } else if da > tol && db <= tol {
        at(tol)
    } else if da < -tol && db >= -tol {
        at(-tol)
    } else {
        return None;
    };
    let end = if inside(db) {
        tb
    } else if db > tol {
        at(tol)
    } else {
        at(-tol)
    };
    Some(ClosedInterval {
        start,
        end: end.max(start),
    })
}
