//! Discrete betting protocols and the capital processes behind the
//! convergence argument.
//!
//! Each round Sceptic bets `M_k`, Reality announces `x_k`, and Sceptic's
//! capital may grow by at most `M_k x_k` (it may throw money away). The
//! protocols differ in what Reality may announce.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integral::{evaluation_grid, LevelFunction};
use crate::partition::{partition_cadlag, partition_continuous, threshold, PartitionLevel};
use crate::paths::{Evaluate, Regime, SampledPath};
use crate::sum::Compensated;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// `x_k >= -0.5`; supermartingale capital.
    BoundedBelow,
    /// `|x_k| <= 0.5`; supermartingale capital.
    Bounded,
    /// Any real `x_k`; martingale capital.
    Arbitrary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub bet: f64,
    pub outcome: f64,
    pub capital: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BettingTranscript {
    pub protocol: Protocol,
    pub initial_capital: f64,
    pub rounds: Vec<Round>,
}

/// Relative slack for the capital recursion; the recursion is evaluated in
/// floating point.
const RECURSION_TOL: f64 = 1e-12;

impl BettingTranscript {
    pub fn capitals(&self) -> Vec<f64> {
        std::iter::once(self.initial_capital)
            .chain(self.rounds.iter().map(|r| r.capital))
            .collect()
    }

    pub fn bets(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.bet).collect()
    }

    /// Checks the outcome constraint of the protocol and the capital
    /// recursion `K_k <= K_{k-1} + M_k x_k` (equality for `arbitrary`).
    pub fn validate(&self) -> Result<()> {
        let mut prev = self.initial_capital;
        if !prev.is_finite() {
            return Err(Error::Protocol {
                round: 0,
                reason: format!("initial capital {prev} is not finite"),
            });
        }
        for (i, r) in self.rounds.iter().enumerate() {
            let k = i + 1;
            if !(r.bet.is_finite() && r.outcome.is_finite() && r.capital.is_finite()) {
                return Err(Error::Protocol {
                    round: k,
                    reason: "non-finite entry".into(),
                });
            }
            check_outcome(self.protocol, k, r.outcome)?;
            let allowed = prev + r.bet * r.outcome;
            let slack = RECURSION_TOL * prev.abs().max((r.bet * r.outcome).abs()).max(1.0);
            let ok = match self.protocol {
                Protocol::Arbitrary => (r.capital - allowed).abs() <= slack,
                _ => r.capital <= allowed + slack,
            };
            if !ok {
                return Err(Error::Protocol {
                    round: k,
                    reason: format!(
                        "capital {} does not satisfy the recursion against {prev} + {} * {} = {allowed}",
                        r.capital, r.bet, r.outcome
                    ),
                });
            }
            prev = r.capital;
        }
        Ok(())
    }

    /// JSON lines: a header line `{k: 0, protocol, K}` then one `{k, M, x, K}`
    /// per round.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(
            &mut w,
            &Line {
                k: 0,
                protocol: Some(self.protocol),
                m: None,
                x: None,
                capital: self.initial_capital,
            },
        )?;
        writeln!(w)?;
        for (i, r) in self.rounds.iter().enumerate() {
            serde_json::to_writer(
                &mut w,
                &Line {
                    k: i + 1,
                    protocol: None,
                    m: Some(r.bet),
                    x: Some(r.outcome),
                    capital: r.capital,
                },
            )?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let head: Line = match lines.next() {
            Some(l) => serde_json::from_str(&l?)?,
            None => return Err(Error::Config("empty transcript".into())),
        };
        let protocol = match (head.k, head.protocol) {
            (0, Some(p)) => p,
            _ => {
                return Err(Error::Config(
                    "transcript must start with a k = 0 line naming the protocol".into(),
                ))
            }
        };
        let mut rounds = Vec::new();
        for (i, l) in lines.enumerate() {
            let line: Line = serde_json::from_str(&l?)?;
            let (Some(bet), Some(outcome)) = (line.m, line.x) else {
                return Err(Error::Config(format!("round {} lacks M or x", i + 1)));
            };
            if line.k != i + 1 {
                return Err(Error::Config(format!("expected round {}, found {}", i + 1, line.k)));
            }
            rounds.push(Round {
                bet,
                outcome,
                capital: line.capital,
            });
        }
        Ok(Self {
            protocol,
            initial_capital: head.capital,
            rounds,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Line {
    k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    protocol: Option<Protocol>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(rename = "K")]
    capital: f64,
}

fn check_outcome(protocol: Protocol, round: usize, x: f64) -> Result<()> {
    let ok = match protocol {
        Protocol::BoundedBelow => x >= -0.5,
        Protocol::Bounded => x.abs() <= 0.5,
        Protocol::Arbitrary => x.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        let what = match protocol {
            Protocol::BoundedBelow => "[-0.5, inf)",
            Protocol::Bounded => "[-0.5, 0.5]",
            Protocol::Arbitrary => "the reals",
        };
        Err(Error::Protocol {
            round,
            reason: format!("outcome {x} outside {what}"),
        })
    }
}

/// `K_K = prod exp(x_k - x_k^2)`, realized by betting `M_k = K_{k-1}`.
pub fn supermartingale_capital(outcomes: &[f64]) -> Result<BettingTranscript> {
    let mut rounds = Vec::with_capacity(outcomes.len());
    let mut k_prev = 1.0;
    for (i, &x) in outcomes.iter().enumerate() {
        check_outcome(Protocol::BoundedBelow, i + 1, x)?;
        let capital = k_prev * (x - x * x).exp();
        rounds.push(Round {
            bet: k_prev,
            outcome: x,
            capital,
        });
        k_prev = capital;
    }
    let t = BettingTranscript {
        protocol: Protocol::BoundedBelow,
        initial_capital: 1.0,
        rounds,
    };
    t.validate()?;
    Ok(t)
}

/// `1/2 (prod exp(x_k - x_k^2) + prod exp(-x_k - x_k^2))`, the average of
/// the one-sided process and its mirror; the bet is the average of the two
/// bets `P_{k-1}` and `-Q_{k-1}`.
pub fn symmetrized_supermartingale(outcomes: &[f64]) -> Result<BettingTranscript> {
    let mut rounds = Vec::with_capacity(outcomes.len());
    let (mut p, mut q) = (1.0f64, 1.0f64);
    for (i, &x) in outcomes.iter().enumerate() {
        check_outcome(Protocol::Bounded, i + 1, x)?;
        let bet = 0.5 * (p - q);
        p *= (x - x * x).exp();
        q *= (-x - x * x).exp();
        rounds.push(Round {
            bet,
            outcome: x,
            capital: 0.5 * (p + q),
        });
    }
    let t = BettingTranscript {
        protocol: Protocol::Bounded,
        initial_capital: 1.0,
        rounds,
    };
    t.validate()?;
    Ok(t)
}

/// `K_K = sum x_k^2 - (sum x_k)^2`, realized by betting `-2 sum_{k<K} x_k`.
/// Each capital is computed from the formula and checked against the
/// increment `M_K x_K`.
pub fn k29_capital(outcomes: &[f64]) -> Result<BettingTranscript> {
    let mut rounds = Vec::with_capacity(outcomes.len());
    let mut sq = Compensated::default();
    let mut sum = Compensated::default();
    let mut k_prev = 0.0;
    for (i, &x) in outcomes.iter().enumerate() {
        let bet = -2.0 * sum.value();
        sq.add(x * x);
        sum.add(x);
        let s = sum.value();
        let capital = sq.value() - s * s;
        let scale = sq.value().max(s * s).max(1.0);
        if ((capital - k_prev) - bet * x).abs() > RECURSION_TOL * scale {
            return Err(Error::Contract(format!(
                "K29 increment identity fails at round {}: {} vs {}",
                i + 1,
                capital - k_prev,
                bet * x
            )));
        }
        rounds.push(Round {
            bet,
            outcome: x,
            capital,
        });
        k_prev = capital;
    }
    Ok(BettingTranscript {
        protocol: Protocol::Arbitrary,
        initial_capital: 0.0,
        rounds,
    })
}

/// The level-`n` capital process comparing levels `n` and `n - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Process {
    pub level: u32,
    /// `b_n = n^2`.
    pub b_n: f64,
    /// Merged stopping times `a_k` of both levels.
    pub merged_times: Vec<f64>,
    /// `x_k = b_n (phi(a'_{k-1}) - phi(a''_{k-1}))(omega(a_k) - omega(a_{k-1}))`.
    pub x: Vec<f64>,
    /// `max |x_{k,s}|` over `k` and the evaluation grid.
    pub max_abs_x: f64,
    /// `b_n 2^{-2n+1}`, the a-priori bound on `|x_k|`.
    pub bound: f64,
    /// `s -> exp(sum_k x_{k,s} - sum_k x_{k,s}^2)`.
    pub capital_lower_bound: LevelFunction,
    /// `s -> sum_k x_{k,s}^2`.
    pub square_sum: LevelFunction,
}

impl Theorem1Process {
    pub fn square_sum_sup(&self) -> f64 {
        self.square_sum.sup_norm()
    }
}

/// Builds the level-`n` and level-`n-1` partitions of `(omega, phi)` and the
/// capital process on their evaluation grid.
pub fn theorem1_capital_process(
    phi: &SampledPath,
    omega: &SampledPath,
    level: u32,
    horizon: f64,
) -> Result<Theorem1Process> {
    if level < 2 {
        return Err(Error::Config(format!(
            "the capital process compares levels n and n - 1 >= 1; got n = {level}"
        )));
    }
    let continuous = omega.regime() == Regime::ContinuousLinear && phi.regime() == Regime::ContinuousLinear;
    let build = |n| {
        if continuous {
            partition_continuous(omega, phi, n, horizon)
        } else {
            partition_cadlag(omega, phi, n, horizon)
        }
    };
    let fine = build(level)?;
    let coarse = build(level - 1)?;
    let grid = evaluation_grid(omega, &[&fine, &coarse], horizon);
    theorem1_from_partitions(phi, omega, &fine, &coarse, &grid)
}

/// The capital process for given partitions at levels `n` and `n - 1`.
pub fn theorem1_from_partitions(
    phi: &dyn Evaluate,
    omega: &SampledPath,
    fine: &PartitionLevel,
    coarse: &PartitionLevel,
    eval_grid: &[f64],
) -> Result<Theorem1Process> {
    let n = fine.level;
    if coarse.level + 1 != n || fine.horizon != coarse.horizon {
        return Err(Error::Contract(
            "partitions must be at levels n and n - 1 with a common horizon".into(),
        ));
    }
    let horizon = fine.horizon;
    let b_n = (n as f64) * (n as f64);
    let tf = fine.instants();
    let tc = coarse.instants();
    let mut a: Vec<f64> = tf.iter().chain(&tc).copied().collect();
    a.sort_by(f64::total_cmp);
    a.dedup();

    // coefficient b_n (phi(a') - phi(a'')) for each merged interval
    let mut coef = Vec::with_capacity(a.len().saturating_sub(1));
    let (mut i, mut j) = (0usize, 0usize);
    for &ak in &a[..a.len().saturating_sub(1)] {
        while i + 1 < tf.len() && tf[i + 1] <= ak {
            i += 1;
        }
        while j + 1 < tc.len() && tc[j + 1] <= ak {
            j += 1;
        }
        if tf[i] != ak && tc[j] != ak {
            return Err(Error::Contract(format!("merged time {ak} belongs to neither level")));
        }
        coef.push(b_n * (phi.value(tf[i]) - phi.value(tc[j])));
    }
    let w: Vec<f64> = a.iter().map(|&t| omega.value(t)).collect();
    let x: Vec<f64> = coef.iter().enumerate().map(|(k, c)| c * (w[k + 1] - w[k])).collect();

    let mut max_abs_x = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut lower = Vec::with_capacity(eval_grid.len());
    let mut squares = Vec::with_capacity(eval_grid.len());
    let mut sum = Compensated::default();
    let mut sq = Compensated::default();
    let mut k = 0;
    for &s in eval_grid {
        if !(0.0..=horizon).contains(&s) {
            return Err(Error::Domain(format!("s = {s} outside [0, {horizon}]")));
        }
        while k + 1 < a.len() && a[k + 1] <= s {
            sum.add(x[k]);
            sq.add(x[k] * x[k]);
            k += 1;
        }
        let (mut s1, mut s2) = (sum, sq);
        if k + 1 < a.len() && s > a[k] {
            let xs = coef[k] * (omega.value(s) - w[k]);
            max_abs_x = max_abs_x.max(xs.abs());
            s1.add(xs);
            s2.add(xs * xs);
        }
        lower.push((s1.value() - s2.value()).exp());
        squares.push(s2.value());
    }
    if max_abs_x > 0.5 {
        return Err(Error::Bound(format!(
            "|x_k,s| reaches {max_abs_x} > 0.5 at level {n}; partitions and paths are inconsistent"
        )));
    }
    let lf = |values| LevelFunction {
        level: n,
        horizon,
        breakpoints: eval_grid.to_vec(),
        values,
    };
    Ok(Theorem1Process {
        level: n,
        b_n,
        merged_times: a,
        x,
        max_abs_x,
        bound: b_n * 2.0 * threshold(n) * threshold(n),
        capital_lower_bound: lf(lower),
        square_sum: lf(squares),
    })
}

/// `sup_s sum_k x_{k,s}^2` at level `n`.
pub fn square_sum_diagnostic(phi: &SampledPath, omega: &SampledPath, level: u32, horizon: f64) -> Result<f64> {
    Ok(theorem1_capital_process(phi, omega, level, horizon)?.square_sum_sup())
}

/// Growth of a family of nonnegative capital trajectories against `n^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub levels: Vec<u32>,
    pub sup_capital: Vec<f64>,
    /// `sup_t K^n_t / n^2`.
    pub ratio: Vec<f64>,
    /// Set when the ratio increases strictly over the last three levels.
    pub growing: bool,
}

pub fn growth_diagnostic(trajectories: &[(u32, &LevelFunction)]) -> Result<GrowthReport> {
    let mut levels = Vec::new();
    let mut sup_capital = Vec::new();
    let mut ratio = Vec::new();
    for &(n, k) in trajectories {
        if n == 0 {
            return Err(Error::Config("levels start at 1".into()));
        }
        if k.values.first().is_some_and(|&k0| k0 > 1.0) {
            return Err(Error::Contract(format!("capital at level {n} starts above 1")));
        }
        if k.values.iter().any(|&v| v < 0.0) {
            return Err(Error::Contract(format!("capital at level {n} goes negative")));
        }
        let sup = k.values.iter().fold(0.0f64, |m, &v| m.max(v));
        levels.push(n);
        sup_capital.push(sup);
        ratio.push(sup / (n as f64 * n as f64));
    }
    let growing = ratio.len() >= 3 && ratio[ratio.len() - 3..].windows(2).all(|w| w[1] > w[0]);
    Ok(GrowthReport {
        levels,
        sup_capital,
        ratio,
        growing,
    })
}
