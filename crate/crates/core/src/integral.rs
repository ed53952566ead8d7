//! Integral and quadratic-variation approximants along a partition, the
//! uniform distance between levels, and the Itô-formula residual.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use rayon::prelude::*;

use crate::partition::{partition, partition_cadlag, partition_continuous, PartitionLevel, Rule};
use crate::paths::{Evaluate, Integrand, MappedPath, Regime, SampledPath};
use crate::sum::{ls_slope, Compensated};

/// A function of `s` stored at increasing breakpoints and read as a
/// right-continuous step function in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFunction {
    pub level: u32,
    pub horizon: f64,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl LevelFunction {
    pub fn value(&self, s: f64) -> Result<f64> {
        let first = self.breakpoints.first().copied().unwrap_or(0.0);
        if !(s >= first && s <= self.horizon) {
            return Err(Error::Domain(format!("s = {s} outside [{first}, {}]", self.horizon)));
        }
        let i = self.breakpoints.partition_point(|&b| b <= s) - 1;
        Ok(self.values[i])
    }

    pub fn last_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sup_s |self(s) - other(s)|` over the shared breakpoints.
    pub fn sup_distance(&self, other: &LevelFunction) -> Result<f64> {
        if self.breakpoints != other.breakpoints {
            return Err(Error::Contract(format!(
                "levels {} and {} are not on a common evaluation grid",
                self.level, other.level
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Path grid up to `horizon` merged with every partition time, plus the
/// horizon. Between consecutive points of this grid each approximant is an
/// affine function of `omega(s)`, itself linear there, so sup-distances over
/// it are exact.
pub fn evaluation_grid(omega: &SampledPath, parts: &[&PartitionLevel], horizon: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = omega.times().iter().copied().filter(|&t| t <= horizon).collect();
    for p in parts {
        grid.extend(p.times.iter().map(|x| x.t).filter(|&t| t <= horizon));
    }
    grid.push(horizon);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Partitions and integral approximants for several levels on their common
/// evaluation grid.
#[derive(Debug, Clone)]
pub struct Ladder {
    pub partitions: Vec<PartitionLevel>,
    pub grid: Vec<f64>,
    pub approximants: Vec<LevelFunction>,
}

impl Ladder {
    pub fn build(
        omega: &SampledPath,
        phi: &dyn Integrand,
        rule: Rule<'_>,
        levels: &[u32],
        horizon: f64,
    ) -> Result<Self> {
        let partitions = levels
            .par_iter()
            .map(|&n| partition(omega, phi, rule, n, horizon))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&PartitionLevel> = partitions.iter().collect();
        let grid = evaluation_grid(omega, &refs, horizon);
        let approximants = partitions
            .par_iter()
            .map(|p| ito_approximant(phi, omega, p, &grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            partitions,
            grid,
            approximants,
        })
    }

    /// `A^n` for every level on the same grid.
    pub fn quadratic_variations(&self, omega: &SampledPath) -> Result<Vec<LevelFunction>> {
        self.partitions
            .par_iter()
            .map(|p| qv_approximant(omega, p, &self.grid))
            .collect()
    }
}

fn check_inputs(omega: &SampledPath, part: &PartitionLevel, eval_grid: &[f64]) -> Result<Vec<f64>> {
    let times = part.instants();
    if times.first() != Some(&0.0) || times.last() != Some(&part.horizon) {
        return Err(Error::Contract(format!(
            "partition at level {} must run from 0 to its horizon {}",
            part.level, part.horizon
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Contract("partition times are not strictly increasing".into()));
    }
    if omega.end() < part.horizon {
        return Err(Error::Domain(format!(
            "omega ends at {} before horizon {}",
            omega.end(),
            part.horizon
        )));
    }
    if eval_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Contract("evaluation grid must be strictly increasing".into()));
    }
    if let (Some(&a), Some(&b)) = (eval_grid.first(), eval_grid.last()) {
        if a < 0.0 || b > part.horizon {
            return Err(Error::Domain(format!(
                "evaluation grid [{a}, {b}] leaves [0, {}]",
                part.horizon
            )));
        }
    }
    Ok(times)
}

/// Generic partition sum `sum_k w(T_{k-1}) g(omega(T_k ^ s) - omega(T_{k-1} ^ s))`.
fn partition_sum(
    omega: &SampledPath,
    part: &PartitionLevel,
    eval_grid: &[f64],
    weight: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
) -> Result<LevelFunction> {
    let times = check_inputs(omega, part, eval_grid)?;
    let w: Vec<f64> = times.iter().map(|&t| omega.value(t)).collect();
    let mut prefix = Vec::with_capacity(times.len());
    let mut acc = Compensated::default();
    prefix.push(acc);
    for k in 1..times.len() {
        acc.add(weight(times[k - 1]) * g(w[k] - w[k - 1]));
        prefix.push(acc);
    }
    let mut values = Vec::with_capacity(eval_grid.len());
    let mut j = 0;
    for &s in eval_grid {
        while j + 1 < times.len() && times[j + 1] <= s {
            j += 1;
        }
        let mut v = prefix[j];
        if s > times[j] {
            v.add(weight(times[j]) * g(omega.value(s) - w[j]));
        }
        values.push(v.value());
    }
    Ok(LevelFunction {
        level: part.level,
        horizon: part.horizon,
        breakpoints: eval_grid.to_vec(),
        values,
    })
}

/// `(phi . omega)^n_s = sum_k phi(T_{k-1} ^ s)(omega(T_k ^ s) - omega(T_{k-1} ^ s))`
/// at every `s` of `eval_grid`.
pub fn ito_approximant(
    phi: &dyn Evaluate,
    omega: &SampledPath,
    part: &PartitionLevel,
    eval_grid: &[f64],
) -> Result<LevelFunction> {
    if phi.end() < part.horizon {
        return Err(Error::Domain(format!(
            "phi ends at {} before horizon {}",
            phi.end(),
            part.horizon
        )));
    }
    partition_sum(omega, part, eval_grid, |t| phi.value(t), |d| d)
}

/// `A^n_s = sum_k (omega(T_k ^ s) - omega(T_{k-1} ^ s))^2` at every `s` of
/// `eval_grid`.
pub fn qv_approximant(omega: &SampledPath, part: &PartitionLevel, eval_grid: &[f64]) -> Result<LevelFunction> {
    partition_sum(omega, part, eval_grid, |_| 1.0, |d| d * d)
}

/// `A^n` sampled at the partition times only, where it is nondecreasing.
pub fn qv_at_partition_times(omega: &SampledPath, part: &PartitionLevel) -> Result<LevelFunction> {
    qv_approximant(omega, part, &part.instants())
}

/// Left-point Stieltjes sum `s -> sum g(b_i)(A(b_{i+1}) - A(b_i))` over the
/// breakpoints of `qv` up to `s`.
pub fn stieltjes_against_qv(g: &dyn Evaluate, qv: &LevelFunction) -> Result<LevelFunction> {
    if let Some(i) = qv.values.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Contract(format!(
            "quadratic variation decreases between s = {} and s = {}",
            qv.breakpoints[i],
            qv.breakpoints[i + 1]
        )));
    }
    if let Some(&last) = qv.breakpoints.last() {
        if g.end() < last {
            return Err(Error::Domain(format!("integrand ends at {} before {last}", g.end())));
        }
    }
    let mut acc = Compensated::default();
    let mut values = Vec::with_capacity(qv.values.len());
    values.push(0.0);
    for i in 1..qv.values.len() {
        acc.add(g.value(qv.breakpoints[i - 1]) * (qv.values[i] - qv.values[i - 1]));
        values.push(acc.value());
    }
    if qv.values.is_empty() {
        values.clear();
    }
    Ok(LevelFunction {
        level: qv.level,
        horizon: qv.horizon,
        breakpoints: qv.breakpoints.clone(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol_abs: f64,
    pub tol_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_abs: 1e-3,
            tol_rel: 1e-3,
        }
    }
}

/// Distances at or below `ROUNDING_FLOOR * max(1, |approximants|_inf)` are
/// summation noise and reported as 0.
pub const ROUNDING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub levels: Vec<u32>,
    /// `d_n` for each level after the first.
    pub sup_distances: Vec<f64>,
    /// Slope of `ln d_n` against `ln n`; `None` with fewer than two positive
    /// distances.
    pub fitted_rate: Option<f64>,
    /// Estimate of `sum_{m > n} d_m` at the last level from the fitted rate.
    pub tail_bound: Option<f64>,
    pub converged: bool,
    pub tolerances: Tolerances,
}

/// Distances between consecutive levels and the convergence verdict:
/// converged when the last distance and the extrapolated tail are both
/// within `tol_abs + tol_rel * |approximant|_inf` at the last level.
pub fn convergence_report(approx: &[LevelFunction], tol: Tolerances) -> Result<ConvergenceReport> {
    if approx.len() < 3 {
        return Err(Error::Config(format!(
            "a convergence report needs at least 3 levels, got {}",
            approx.len()
        )));
    }
    if approx.windows(2).any(|w| w[1].level != w[0].level + 1) {
        return Err(Error::Config("levels must be consecutive".into()));
    }
    let levels: Vec<u32> = approx.iter().map(|a| a.level).collect();
    let sup_distances = approx
        .windows(2)
        .map(|w| {
            let floor = ROUNDING_FLOOR * w[0].sup_norm().max(w[1].sup_norm()).max(1.0);
            w[1].sup_distance(&w[0]).map(|d| if d <= floor { 0.0 } else { d })
        })
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = levels[1..]
        .iter()
        .zip(&sup_distances)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&n, &d)| ((n as f64).ln(), d.ln()))
        .unzip();
    let fitted_rate = ls_slope(&xs, &ys);
    let last = *sup_distances.last().expect("at least two distances");
    let n = *levels.last().expect("non-empty") as f64;
    let tail_bound = if last == 0.0 {
        Some(0.0)
    } else {
        fitted_rate.filter(|&r| r < -1.0).map(|r| last * n / (-r - 1.0))
    };
    let bound = tol.tol_abs + tol.tol_rel * approx.last().expect("non-empty").sup_norm();
    let converged = last <= bound && tail_bound.is_some_and(|t| t <= bound);
    Ok(ConvergenceReport {
        levels,
        sup_distances,
        fitted_rate,
        tail_bound,
        converged,
        tolerances: tol,
    })
}

/// Twice-differentiable functions with closed-form derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinF {
    Identity,
    Square,
    Sin,
    Exp,
    /// `sum c_i x^i`.
    Polynomial(Vec<f64>),
}

impl BuiltinF {
    pub fn f(&self, x: f64) -> f64 {
        match self {
            BuiltinF::Identity => x,
            BuiltinF::Square => x * x,
            BuiltinF::Sin => x.sin(),
            BuiltinF::Exp => x.exp(),
            BuiltinF::Polynomial(c) => horner(c, x),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match self {
            BuiltinF::Identity => 1.0,
            BuiltinF::Square => 2.0 * x,
            BuiltinF::Sin => x.cos(),
            BuiltinF::Exp => x.exp(),
            BuiltinF::Polynomial(c) => horner(&derive(c), x),
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match self {
            BuiltinF::Identity => 0.0,
            BuiltinF::Square => 2.0,
            BuiltinF::Sin => -x.sin(),
            BuiltinF::Exp => x.exp(),
            BuiltinF::Polynomial(c) => horner(&derive(&derive(c)), x),
        }
    }

    /// `F'(omega)` sampled on the grid of `omega`.
    pub fn derivative_path(&self, omega: &SampledPath) -> SampledPath {
        omega.map(|x| self.d1(x))
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

fn derive(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, &ci)| i as f64 * ci).collect()
}

impl FromStr for BuiltinF {
    type Err = Error;

    /// `x`, `x2` (or `x^2`), `sin`, `exp`, or `poly:c0,c1,...`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" => Ok(BuiltinF::Identity),
            "x2" | "x^2" => Ok(BuiltinF::Square),
            "sin" => Ok(BuiltinF::Sin),
            "exp" => Ok(BuiltinF::Exp),
            other => {
                let Some(list) = other.strip_prefix("poly:") else {
                    return Err(Error::Config(format!(
                        "unknown function `{other}`; expected x, x2, sin, exp or poly:c0,c1,..."
                    )));
                };
                let coeffs = list
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Config(format!("bad coefficient `{c}`: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(BuiltinF::Polynomial(coeffs))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItoResidual {
    pub level: u32,
    pub t: f64,
    /// `F(omega(t)) - F(omega(0))`.
    pub increment: f64,
    /// `(F'(omega) . omega)^n_t`.
    pub integral: f64,
    /// `1/2 sum F''(omega) dA^n` up to `t`.
    pub correction: f64,
    pub residual: f64,
}

/// `F(omega(t)) - F(omega(0)) - (F'(omega) . omega)^n_t - 1/2 int F''(omega) dA^n`.
///
/// The partition is built from `omega` and `phi`, which must be `F'(omega)`
/// on the grid of `omega` (checked); the sums use `F'` and `F''` exactly.
pub fn ito_residual(
    f: &BuiltinF,
    omega: &SampledPath,
    phi: &SampledPath,
    level: u32,
    t: f64,
) -> Result<ItoResidual> {
    for (&s, &p) in phi.times().iter().zip(phi.values()) {
        if s > t {
            break;
        }
        let expect = f.d1(omega.value(s));
        if (p - expect).abs() > 1e-9 * (1.0 + expect.abs()) {
            return Err(Error::Contract(format!(
                "partition integrand {p} differs from F'(omega) = {expect} at t = {s}"
            )));
        }
    }
    let part = if omega.regime() == Regime::ContinuousLinear && phi.regime() == Regime::ContinuousLinear {
        partition_continuous(omega, phi, level, t)?
    } else {
        partition_cadlag(omega, phi, level, t)?
    };
    ito_residual_on(f, omega, &part)
}

/// [`ito_residual`] along a given partition, at its horizon.
pub fn ito_residual_on(f: &BuiltinF, omega: &SampledPath, part: &PartitionLevel) -> Result<ItoResidual> {
    let t = part.horizon;
    let d1 = MappedPath::new(omega, |x| f.d1(x));
    let d2 = MappedPath::new(omega, |x| f.d2(x));
    let integral = ito_approximant(&d1, omega, part, &[t])?.last_value();
    let qv = qv_at_partition_times(omega, part)?;
    let correction = 0.5 * stieltjes_against_qv(&d2, &qv)?.last_value();
    let increment = f.f(omega.value(t)) - f.f(omega.value(0.0));
    Ok(ItoResidual {
        level: part.level,
        t,
        increment,
        integral,
        correction,
        residual: increment - integral - correction,
    })
}

/// JSON report of a convergence run.
pub fn write_report<W: Write>(mut w: W, report: &ConvergenceReport) -> Result<()> {
    serde_json::to_writer(&mut w, report)?;
    writeln!(w)?;
    Ok(())
}

/// CSV with one row per breakpoint: `s,level_<n>,...`.
pub fn write_levels_csv<W: Write>(w: W, levels: &[LevelFunction]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["s".to_string()];
    header.extend(levels.iter().map(|l| format!("level_{}", l.level)));
    wtr.write_record(&header)?;
    if let Some(first) = levels.first() {
        if levels.iter().any(|l| l.breakpoints != first.breakpoints) {
            return Err(Error::Contract("levels are not on a common evaluation grid".into()));
        }
        for (i, s) in first.breakpoints.iter().enumerate() {
            let mut row = vec![s.to_string()];
            row.extend(levels.iter().map(|l| l.values[i].to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::Constant;

    fn line(h: f64, step: f64) -> SampledPath {
        SampledPath::from_fn(h, step, Regime::ContinuousLinear, |t| t).unwrap()
    }

    #[test]
    fn qv_of_linear_path() {
        let omega = line(1.0, 1.0 / 1024.0);
        let flat = SampledPath::constant(0.0, 1.0, 0.5, Regime::ContinuousLinear).unwrap();
        for n in 1..=6 {
            let part = partition_continuous(&omega, &flat, n, 1.0).unwrap();
            let a = qv_approximant(&omega, &part, &[1.0]).unwrap().last_value();
            assert!((a - (-(n as f64)).exp2()).abs() < 1e-15);
        }
    }

    #[test]
    fn left_riemann_sum_of_t_dt() {
        let omega = line(1.0, 1.0 / 1024.0);
        let n = 4;
        let part = partition_continuous(&omega, &omega, n, 1.0).unwrap();
        let grid = part.instants();
        let v = ito_approximant(&omega, &omega, &part, &grid).unwrap();
        let h = (-(n as f64)).exp2();
        for (&s, &x) in grid.iter().zip(&v.values) {
            let k = (s / h).round();
            // closed form sum_{j<k} j h * h
            let expect = h * h * k * (k - 1.0) / 2.0;
            assert!((x - expect).abs() < 1e-14, "{s}: {x} vs {expect}");
            assert!(s * s / 2.0 - x <= h * s + 1e-14);
        }
    }

    #[test]
    fn stieltjes_examples() {
        let qv = LevelFunction {
            level: 3,
            horizon: 1.0,
            breakpoints: (0..=8).map(|k| k as f64 / 8.0).collect(),
            values: (0..=8).map(|k| k as f64 / 8.0).collect(),
        };
        let one = stieltjes_against_qv(&Constant { value: 1.0, end: 1.0 }, &qv).unwrap();
        assert_eq!(one.values, qv.values);
        let zero = stieltjes_against_qv(&Constant { value: 0.0, end: 1.0 }, &qv).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let g = line(1.0, 0.125);
        let r = stieltjes_against_qv(&g, &qv).unwrap();
        for (&s, &v) in qv.breakpoints.iter().zip(&r.values) {
            assert!((v - s * s / 2.0).abs() <= 0.125);
        }
        let mut bad = qv.clone();
        bad.values[3] = 0.0;
        assert!(matches!(stieltjes_against_qv(&g, &bad), Err(Error::Contract(_))));
    }

    #[test]
    fn report_of_constant_integrand() {
        let omega = SampledPath::from_fn(1.0, 1e-3, Regime::ContinuousLinear, |t| (9.0 * t).sin()).unwrap();
        let phi = SampledPath::constant(2.0, 1.0, 1e-3, Regime::ContinuousLinear).unwrap();
        let parts: Vec<_> = (3..=6).map(|n| partition_continuous(&omega, &phi, n, 1.0).unwrap()).collect();
        let refs: Vec<_> = parts.iter().collect();
        let grid = evaluation_grid(&omega, &refs, 1.0);
        let approx: Vec<_> = parts.iter().map(|p| ito_approximant(&phi, &omega, p, &grid).unwrap()).collect();
        let r = convergence_report(&approx, Tolerances::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.fitted_rate, None);
        assert!(r.sup_distances.iter().all(|&d| d == 0.0));
        assert!(convergence_report(&approx[..2], Tolerances::default()).is_err());
    }

    #[test]
    fn builtin_derivatives() {
        let p: BuiltinF = "poly:1,2,3".parse().unwrap();
        assert_eq!(p.f(2.0), 17.0);
        assert_eq!(p.d1(2.0), 14.0);
        assert_eq!(p.d2(2.0), 6.0);
        assert_eq!("x^2".parse::<BuiltinF>().unwrap(), BuiltinF::Square);
        assert!("cosh".parse::<BuiltinF>().is_err());
    }

    #[test]
    fn residual_of_identity_and_square() {
        let omega = SampledPath::from_fn(1.0, 1e-3, Regime::ContinuousLinear, |t| (5.0 * t).sin() + t).unwrap();
        for f in [BuiltinF::Identity, BuiltinF::Square] {
            let phi = f.derivative_path(&omega);
            for n in 2..=6 {
                let r = ito_residual(&f, &omega, &phi, n, 1.0).unwrap();
                assert!(r.residual.abs() < 1e-12, "{f:?} level {n}: {}", r.residual);
            }
        }
    }

    #[test]
    fn residual_rejects_wrong_derivative() {
        let omega = line(1.0, 0.01);
        let wrong = omega.map(|x| 3.0 * x);
        assert!(matches!(
            ito_residual(&BuiltinF::Square, &omega, &wrong, 3, 1.0),
            Err(Error::Contract(_))
        ));
    }
}
