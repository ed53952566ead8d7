use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    segment_crossing, uniform_grid, Evaluate, Integrand, IntervalSet, JumpEnvelope, PathMeta,
    PredictabilityEnvelope, Regime, SampledPath,
};
use crate::error::{Error, Result};

/// Name of the pseudo-random generator behind every stochastic path kind.
/// Recorded in path metadata; changing it changes every seeded output.
pub const PRNG_NAME: &str = "chacha20/rand_chacha-0.9/seed_from_u64";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Brownian,
    PoissonJump,
    DeterministicFormula,
    TanakaIndicator,
    TanakaSign,
    Constant,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Brownian => "brownian",
            GeneratorKind::PoissonJump => "poisson-jump",
            GeneratorKind::DeterministicFormula => "deterministic-formula",
            GeneratorKind::TanakaIndicator => "tanaka-indicator",
            GeneratorKind::TanakaSign => "tanaka-sign",
            GeneratorKind::Constant => "constant",
        }
    }
}

/// Configuration for [`generate`].
///
/// Recognised parameters (defaults in brackets):
/// - brownian: `initial` [0], `volatility` [1]
/// - poisson-jump: `initial` [0], `volatility` [1], `jump_rate` [10],
///   `jump_bound` [0.1]
/// - deterministic-formula: polynomial coefficients `c0`, `c1`, ... in `t`
/// - constant: `value` [0]
/// - tanaka kinds: `level` [0] (they need a base path, see
///   [`tanaka_integrand`])
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGeneratorConfig {
    pub kind: GeneratorKind,
    #[serde(default)]
    pub seed: u64,
    pub horizon: f64,
    pub grid_step: f64,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    /// Overrides the kind's default regime where that makes sense.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
}

impl PathGeneratorConfig {
    pub fn new(kind: GeneratorKind, seed: u64, horizon: f64, grid_step: f64) -> Self {
        Self {
            kind,
            seed,
            horizon,
            grid_step,
            parameters: BTreeMap::new(),
            regime: None,
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = Some(regime);
        self
    }

    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.parameters.get(key).copied().unwrap_or(default)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return Err(Error::Config(format!(
                "grid_step must be positive, got {}",
                self.grid_step
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if let Some((k, v)) = self.parameters.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!("parameter {k} is not finite: {v}")));
        }
        Ok(())
    }

    pub fn meta(&self) -> PathMeta {
        let mut params: BTreeMap<String, serde_json::Value> = self
            .parameters
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::json!(v)))
            .collect();
        params.insert("kind".into(), self.kind.name().into());
        params.insert("horizon".into(), serde_json::json!(self.horizon));
        params.insert("grid_step".into(), serde_json::json!(self.grid_step));
        PathMeta {
            generator: Some(PRNG_NAME.to_string()),
            seed: Some(self.seed),
            params,
        }
    }
}

/// Per-member seed for ensembles: `splitmix64(base + index * golden)`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates a path. Pure in `config`: equal configs give equal paths.
pub fn generate(config: &PathGeneratorConfig) -> Result<SampledPath> {
    config.validate()?;
    let times = uniform_grid(config.horizon, config.grid_step)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    match config.kind {
        GeneratorKind::Constant => {
            let v = config.param("value", 0.0);
            let regime = config.regime.unwrap_or(Regime::ContinuousLinear);
            let values = vec![v; times.len()];
            SampledPath::new(times, values, regime)
        }
        GeneratorKind::DeterministicFormula => {
            let coeffs = polynomial_coefficients(&config.parameters)?;
            let values = times
                .iter()
                .map(|&t| coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c))
                .collect();
            SampledPath::new(times, values, config.regime.unwrap_or(Regime::ContinuousLinear))
        }
        GeneratorKind::Brownian => {
            let sigma = config.param("volatility", 1.0);
            let mut values = Vec::with_capacity(times.len());
            let mut x = config.param("initial", 0.0);
            values.push(x);
            for w in times.windows(2) {
                let z: f64 = StandardNormal.sample(&mut rng);
                x += sigma * (w[1] - w[0]).sqrt() * z;
                values.push(x);
            }
            SampledPath::new(times, values, config.regime.unwrap_or(Regime::ContinuousLinear))
        }
        GeneratorKind::PoissonJump => {
            let sigma = config.param("volatility", 1.0);
            let rate = config.param("jump_rate", 10.0);
            let bound = config.param("jump_bound", 0.1);
            if !(bound > 0.0) || rate < 0.0 {
                return Err(Error::Config(format!(
                    "poisson-jump needs jump_bound > 0 and jump_rate >= 0 (got {bound}, {rate})"
                )));
            }
            let arrivals = if rate > 0.0 {
                Some(Exp::new(rate).map_err(|e| Error::Config(e.to_string()))?)
            } else {
                None
            };
            let mut next_jump = arrivals.map_or(f64::INFINITY, |d| d.sample(&mut rng));
            let mut values = Vec::with_capacity(times.len());
            let mut x = config.param("initial", 0.0);
            values.push(x);
            for w in times.windows(2) {
                let z: f64 = StandardNormal.sample(&mut rng);
                let mut step = sigma * (w[1] - w[0]).sqrt() * z;
                while next_jump <= w[1] {
                    step += rng.random_range(-bound..=bound);
                    next_jump += arrivals.map_or(f64::INFINITY, |d| d.sample(&mut rng));
                }
                // Every step, diffusive part included, respects the declared
                // bound so that omega +- bound is a valid jump envelope.
                x += step.clamp(-bound, bound);
                values.push(x);
            }
            SampledPath::new(times, values, Regime::CadlagStep)
        }
        GeneratorKind::TanakaIndicator | GeneratorKind::TanakaSign => Err(Error::Config(format!(
            "{} integrands are built from a base path; use tanaka_integrand",
            config.kind.name()
        ))),
    }
}

fn polynomial_coefficients(params: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    let mut coeffs = Vec::new();
    for (k, &v) in params {
        let Some(idx) = k.strip_prefix('c').and_then(|s| s.parse::<usize>().ok()) else {
            return Err(Error::Config(format!(
                "deterministic-formula parameters are c0, c1, ...; got {k}"
            )));
        };
        if coeffs.len() <= idx {
            coeffs.resize(idx + 1, 0.0);
        }
        coeffs[idx] = v;
    }
    Ok(coeffs)
}

/// The envelope `omega - bound <= . <= omega + bound` for a càdlàg path whose
/// jumps are bounded by `bound`.
pub fn jump_envelope(omega: &SampledPath, bound: f64) -> Result<JumpEnvelope> {
    let shift = |d: f64| omega.map(|v| v + d).with_regime(Regime::CadlagStep);
    JumpEnvelope::new(shift(-bound), shift(bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TanakaKind {
    /// `1{omega(t) > a}`, enveloped by `1{omega > a} <= . <= 1{omega >= a}`.
    Indicator,
    /// `sign(omega(t) - a)`, enveloped by `-1` and `+1` on `{omega = a}`.
    Sign,
}

/// Tanaka-type integrand `t -> g(sign(omega(t) - a))` of a continuous path.
///
/// The value only changes on the level set `{omega = a}`, which is computed
/// exactly from the piecewise-linear interpolant and doubles as the
/// exception set of the matching [`PredictabilityEnvelope`].
#[derive(Debug, Clone)]
pub struct TanakaIntegrand {
    base: SampledPath,
    level: f64,
    kind: TanakaKind,
    zero_set: IntervalSet,
}

pub fn tanaka_integrand(base: &SampledPath, level: f64, kind: TanakaKind) -> Result<TanakaIntegrand> {
    if base.regime() != Regime::ContinuousLinear {
        return Err(Error::Regime(
            "tanaka integrands are defined for continuous base paths".into(),
        ));
    }
    if !level.is_finite() {
        return Err(Error::Config(format!("level must be finite, got {level}")));
    }
    Ok(TanakaIntegrand {
        base: base.clone(),
        level,
        kind,
        zero_set: IntervalSet::level_set(base, level)?,
    })
}

impl TanakaIntegrand {
    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn kind(&self) -> TanakaKind {
        self.kind
    }

    pub fn base(&self) -> &SampledPath {
        &self.base
    }

    /// `{ t : omega(t) = a }`.
    pub fn level_set(&self) -> &IntervalSet {
        &self.zero_set
    }

    fn map_sign(&self, s: f64) -> f64 {
        match self.kind {
            TanakaKind::Indicator => {
                if s > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            TanakaKind::Sign => s,
        }
    }

    fn bounds_at_level(&self) -> (f64, f64) {
        match self.kind {
            TanakaKind::Indicator => (0.0, 1.0),
            TanakaKind::Sign => (-1.0, 1.0),
        }
    }

    /// Sign of `omega(t) - a`, consistent with the exact level set.
    fn sign_at(&self, t: f64) -> f64 {
        if self.zero_set.contains(t) {
            return 0.0;
        }
        let times = self.base.times();
        let values = self.base.values();
        let i = self.base.segment_index(t);
        let da = values[i] - self.level;
        if times[i] == t || i + 1 == times.len() {
            return signum0(da);
        }
        let db = values[i + 1] - self.level;
        if da == 0.0 {
            return signum0(db);
        }
        if db == 0.0 || (da > 0.0) == (db > 0.0) {
            return signum0(da);
        }
        // Take the crossing from the stored level set so that values and the
        // exception set agree to the last bit.
        let z = self
            .zero_set
            .first_point_at_or_after(times[i])
            .filter(|&z| z <= times[i + 1])
            .unwrap_or_else(|| segment_crossing(times[i], times[i + 1], da, db, 0.0));
        if t < z {
            signum0(da)
        } else {
            signum0(db)
        }
    }

    /// The integrand sampled on the base grid plus the level-set points, as a
    /// step path (for export; evaluation between those points is only
    /// approximate for the exported form).
    pub fn to_sampled_path(&self) -> SampledPath {
        let grid = self.envelope_grid();
        let values = grid.iter().map(|&t| self.value(t)).collect();
        SampledPath::new(grid, values, Regime::CadlagStep).expect("grid is valid")
    }

    fn envelope_grid(&self) -> Vec<f64> {
        let mut grid: Vec<f64> = self.base.times().to_vec();
        for iv in self.zero_set.intervals() {
            grid.push(iv.start);
            grid.push(iv.end);
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }

    /// `lower = g` off the level set, the extreme values on it.
    pub fn envelope(&self) -> PredictabilityEnvelope {
        let grid = self.envelope_grid();
        let (lo, hi) = self.bounds_at_level();
        let (mut lower, mut upper) = (Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()));
        for &t in &grid {
            if self.zero_set.contains(t) {
                lower.push(lo);
                upper.push(hi);
            } else {
                let v = self.value(t);
                lower.push(v);
                upper.push(v);
            }
        }
        PredictabilityEnvelope {
            lower: SampledPath::new(grid.clone(), lower, Regime::CadlagStep).expect("valid grid"),
            upper: SampledPath::new(grid, upper, Regime::CadlagStep).expect("valid grid"),
            exception_set: self.zero_set.clone(),
        }
    }
}

fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Evaluate for TanakaIntegrand {
    fn value(&self, t: f64) -> f64 {
        self.map_sign(self.sign_at(t))
    }

    fn end(&self) -> f64 {
        self.base.end()
    }
}

impl Integrand for TanakaIntegrand {
    fn first_departure(&self, after: f64, until: f64, reference: f64, threshold: f64) -> Option<f64> {
        let until = until.min(self.end());
        let departs = |v: f64| (v - reference).abs() >= threshold;
        let on_level = departs(self.map_sign(0.0));
        let end_of_piece = |t: f64| {
            let ivs = self.zero_set.intervals();
            let i = ivs.partition_point(|iv| iv.end < t);
            ivs.get(i).filter(|iv| iv.start <= t).map_or(t, |iv| iv.end)
        };
        // The sign is constant on each component of the complement of the
        // level set, so only entries into and exits from it matter.
        let mut cur = after;
        while cur < until {
            let next = self.zero_set.first_entry_after(cur);
            if next == Some(cur) {
                // (cur, exit] lies in the level set
                if on_level {
                    return Some(cur);
                }
                cur = end_of_piece(cur);
                continue;
            }
            let stop = next.unwrap_or(self.end());
            let mid = 0.5 * (cur + stop);
            if mid > cur && mid < stop && departs(self.value(mid)) {
                return Some(cur);
            }
            match next {
                Some(z) if z <= until => {
                    if on_level {
                        return Some(z);
                    }
                    cur = end_of_piece(z);
                }
                _ => return None,
            }
        }
        None
    }
}
