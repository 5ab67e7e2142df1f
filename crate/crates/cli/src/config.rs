//! Experiment configuration, shared by the command line and the reports.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, ensure, Context};
use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use sensel::evaluation::DEFAULT_ORACLE_CAP;
use sensel::generate::{KRule, DEFAULT_DRIFT_FRACTION};
use sensel::Criterion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Run the selected solvers on one instance.
    Solve,
    /// Ratios against the exhaustive optimum over generated instances.
    OracleCompare,
    /// Ratios against the best of a random-selection budget.
    RandomCompare,
    /// Monte Carlo error rates and ROC curves of every selection.
    DetectionEval,
    /// Clique-reduction fixtures.
    Hardness,
    /// Objective and run time of each solver for p = 1..=p.
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionArg {
    Kl,
    C,
    Both,
}

impl CriterionArg {
    pub fn criteria(self) -> Vec<Criterion> {
        match self {
            CriterionArg::Kl => vec![Criterion::Kl],
            CriterionArg::C => vec![Criterion::Chernoff],
            CriterionArg::Both => vec![Criterion::Kl, Criterion::Chernoff],
        }
    }
}

/// `both` runs the mean-difference solvers only when the means are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmArg {
    R,
    Md,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

/// Textual k-rule: `infinity`, `drift[:F]`, `paper-det[:F]`, or `explicit:K0,K1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KRuleArg(pub KRule);

impl FromStr for KRuleArg {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h.trim(), Some(t.trim())),
            None => (s.trim(), None),
        };
        let fraction = |t: Option<&str>| -> anyhow::Result<f64> {
            let f = match t {
                Some(t) => t.parse().with_context(|| format!("bad fraction {t:?}"))?,
                None => DEFAULT_DRIFT_FRACTION,
            };
            ensure!(f > 0.0 && f.is_finite(), "fraction must be positive");
            Ok(f)
        };
        let rule = match head {
            "infinity" | "inf" => KRule::Infinity,
            "drift" | "drift-fraction" => KRule::DriftFraction { fraction: fraction(tail)? },
            "paper-det" => KRule::PaperDet { fraction: fraction(tail)? },
            "explicit" => {
                let t = tail.context("explicit k-rule needs K0,K1")?;
                let (a, b) = t.split_once(',').context("explicit k-rule needs K0,K1")?;
                KRule::Explicit {
                    k0: a.trim().parse().context("bad k0")?,
                    k1: b.trim().parse().context("bad k1")?,
                }
            }
            other => bail!("unknown k-rule {other:?} (infinity, drift[:F], paper-det[:F], explicit:K0,K1)"),
        };
        Ok(KRuleArg(rule))
    }
}

impl fmt::Display for KRuleArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            KRule::Infinity => write!(f, "infinity"),
            KRule::DriftFraction { fraction } => write!(f, "drift:{fraction}"),
            KRule::PaperDet { fraction } => write!(f, "paper-det:{fraction}"),
            KRule::Explicit { k0, k1 } => write!(f, "explicit:{k0},{k1}"),
        }
    }
}

impl Serialize for KRuleArg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for KRuleArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "sensel", version, about = "Sensor selection for Gaussian hypothesis testing")]
pub struct Config {
    #[arg(long, value_enum, default_value = "solve")]
    pub mode: Mode,
    /// Number of sensors of generated instances.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Number of sensors to select.
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of sensors to select as a fraction of n (rounded, at least 1).
    #[arg(long, conflicts_with = "p")]
    pub p_frac: Option<f64>,
    #[arg(long, value_enum, default_value = "both")]
    pub criterion: CriterionArg,
    #[arg(long, value_enum, default_value = "both")]
    pub algorithm: AlgorithmArg,
    /// infinity | drift[:F] | paper-det[:F] | explicit:K0,K1
    #[arg(long, default_value = "drift:0.15")]
    pub k_rule: KRuleArg,
    /// Number of generated instances.
    #[arg(long, default_value_t = 10)]
    pub instances: usize,
    /// Monte Carlo trials per selection.
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    /// Base seed; instance `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest number of subsets the exhaustive oracle may enumerate.
    #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
    pub oracle_cap: u128,
    /// Number of random selections in random-compare.
    #[arg(long, default_value_t = 100_000)]
    pub random_budget: usize,
    /// Output path; standard output when absent.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Problem instance in JSON (overrides n, and p unless given).
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Graph of the hardness mode: Kn, Pn, En, or an edge list `n:1-2,2-3`.
    #[arg(long)]
    pub graph: Option<String>,
    /// Re-run the configuration embedded in an earlier report.
    #[arg(long)]
    #[serde(skip)]
    pub replay: Option<PathBuf>,
}

impl Config {
    /// `p` for an `n`-sensor problem.
    pub fn resolve_p(&self, n: usize) -> anyhow::Result<usize> {
        let p = match (self.p, self.p_frac) {
            (Some(p), _) => p,
            (None, Some(f)) => {
                ensure!(f > 0.0 && f <= 1.0, "p-frac must lie in (0, 1]");
                ((f * n as f64).round() as usize).max(1)
            }
            (None, None) => (n / 3).max(1),
        };
        ensure!(p >= 1 && p <= n, "p = {p} must lie in 1..={n}");
        Ok(p)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(self.n >= 1, "n must be positive");
        ensure!(self.instances >= 1, "instances must be positive");
        ensure!(self.trials >= 2, "trials must be at least 2");
        ensure!(self.random_budget >= 1, "random-budget must be positive");
        if self.instance.is_none() {
            self.resolve_p(self.n)?;
        }
        Ok(())
    }
}
