//! Asymptotic conditions evaluated along an `n` grid.
//!
//! A limit cannot be observed at finite `n`, so each condition path carries a
//! trend verdict: over the last `window` grid points the values must move
//! strictly toward the target and the final value must clear a threshold.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{check_grid, summarize, summary_path, DesignSequence, DesignSummary};
use crate::error::{Error, Result};
use crate::model::{ErrorDistribution, EVModelSpec};
use crate::numeric::{compensated_sum, KahanSum};
use crate::rng::{stream, CounterRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConditionId {
    /// `S_n / n → ∞`, weak/strong consistency of `β̂_n`.
    #[serde(rename = "liu-chen-beta")]
    LiuChenBeta,
    /// `n / √S_n → 0`
    #[serde(rename = "c6")]
    C6,
    /// `max_i |x_i − x̄_n| / √S_n → 0`
    #[serde(rename = "c7")]
    C7,
    /// `|n x̄_n| / max(n, S_n) → 0`, weak consistency of `θ̂_n`.
    #[serde(rename = "theta-consistency")]
    ThetaConsistency,
    /// `S_n / (n x̄_n²) → ∞`
    #[serde(rename = "c17")]
    C17,
    /// `n P(δ² ≥ √S_n) → 0`
    #[serde(rename = "petrov-i")]
    PetrovI,
    /// `(n / S_n) Var(δ² 1{δ² < √S_n}) → 0`
    #[serde(rename = "petrov-ii")]
    PetrovII,
    /// `(n / √S_n) E[δ² 1{δ² < √S_n}] → 0`
    #[serde(rename = "petrov-iii")]
    PetrovIII,
}

impl ConditionId {
    pub const ALL: [ConditionId; 8] = [
        ConditionId::LiuChenBeta,
        ConditionId::C6,
        ConditionId::C7,
        ConditionId::ThetaConsistency,
        ConditionId::C17,
        ConditionId::PetrovI,
        ConditionId::PetrovII,
        ConditionId::PetrovIII,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionId::LiuChenBeta => "liu-chen-beta",
            ConditionId::C6 => "c6",
            ConditionId::C7 => "c7",
            ConditionId::ThetaConsistency => "theta-consistency",
            ConditionId::C17 => "c17",
            ConditionId::PetrovI => "petrov-i",
            ConditionId::PetrovII => "petrov-ii",
            ConditionId::PetrovIII => "petrov-iii",
        }
    }

    pub fn target(&self) -> Target {
        match self {
            ConditionId::LiuChenBeta | ConditionId::C17 => Target::ToInfinity,
            _ => Target::ToZero,
        }
    }

    pub fn needs_model(&self) -> bool {
        matches!(self, ConditionId::PetrovI | ConditionId::PetrovII | ConditionId::PetrovIII)
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ConditionId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                what: "condition id",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    ToZero,
    ToInfinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SatisfiedTrend,
    ViolatedTrend,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::SatisfiedTrend => "satisfied-trend",
            Verdict::ViolatedTrend => "violated-trend",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

fn default_window() -> usize {
    5
}
fn default_zero_threshold() -> f64 {
    0.2
}
fn default_infinity_threshold() -> f64 {
    50.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictRule {
    /// Number of trailing grid points inspected.
    #[serde(default = "default_window")]
    pub window: usize,
    /// A to-zero path must end below this.
    #[serde(default = "default_zero_threshold")]
    pub zero_threshold: f64,
    /// A to-infinity path must end above this.
    #[serde(default = "default_infinity_threshold")]
    pub infinity_threshold: f64,
}

impl Default for VerdictRule {
    fn default() -> Self {
        Self {
            window: default_window(),
            zero_threshold: default_zero_threshold(),
            infinity_threshold: default_infinity_threshold(),
        }
    }
}

/// Satisfied when the tail is strictly monotone toward the target (or
/// already exactly 0 for a to-zero target) and the final value clears the
/// threshold; violated when neither holds;
/// inconclusive otherwise.
pub fn trend_verdict(values: &[f64], target: Target, rule: &VerdictRule) -> Verdict {
    if values.len() < 2 || rule.window < 2 {
        return Verdict::Inconclusive;
    }
    let tail = &values[values.len().saturating_sub(rule.window)..];
    let toward = tail.windows(2).all(|w| match target {
        // a path sitting exactly at its limit cannot move further toward it
        Target::ToZero => w[1] < w[0] || (w[1] == 0.0 && w[0] == 0.0),
        Target::ToInfinity => w[1] > w[0],
    });
    let last = *tail.last().expect("non-empty");
    let clears = match target {
        Target::ToZero => last < rule.zero_threshold,
        Target::ToInfinity => last > rule.infinity_threshold,
    };
    match (toward, clears) {
        (true, true) => Verdict::SatisfiedTrend,
        (false, false) => Verdict::ViolatedTrend,
        _ => Verdict::Inconclusive,
    }
}

/// Serializes non-finite floats as strings so JSON output stays lossless.
mod lossless {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Num(v)
        } else if v.is_nan() {
            Repr::Text("nan".into())
        } else if v > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    fn from_repr(r: Repr) -> Result<f64, String> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(format!("not a number: {other}")),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&x| to_repr(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| from_repr(r).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionPath {
    pub name: ConditionId,
    pub n_grid: Vec<usize>,
    #[serde(with = "lossless")]
    pub values: Vec<f64>,
    pub target: Target,
    pub verdict: Verdict,
}

impl ConditionPath {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,value")?;
        for (n, v) in self.n_grid.iter().zip(&self.values) {
            writeln!(out, "{n},{v}")?;
        }
        Ok(())
    }
}

/// The three truncated-moment quantities for `X_k = δ_k²`, `a_n = √S_n`.
pub fn petrov_values(summary: &DesignSummary, delta: &ErrorDistribution) -> Result<[f64; 3]> {
    let n = summary.n as f64;
    if summary.s_n == 0.0 {
        return Ok([n, f64::INFINITY, f64::INFINITY]);
    }
    let a = summary.s_n.sqrt();
    // δ² < a  ⇔  |δ| < a^{1/2}
    let c = a.sqrt();
    let tail_prob = if delta.is_discrete() {
        1.0 - delta.body_moment(0, c)?
    } else {
        delta.tail_moment(0, c)?
    };
    let m2 = delta.body_moment(2, c)?;
    let m4 = delta.body_moment(4, c)?;
    Ok([
        n * tail_prob,
        n / summary.s_n * (m4 - m2 * m2).max(0.0),
        n / a * m2,
    ])
}

/// Value of a condition at one grid point. The truncated-moment conditions need the
/// model; the others depend on the design summary alone.
pub fn condition_value(cond: ConditionId, s: &DesignSummary, spec: Option<&EVModelSpec>) -> Result<f64> {
    let n = s.n as f64;
    let root = s.s_n.sqrt();
    let v = match cond {
        ConditionId::LiuChenBeta => s.s_n / n,
        ConditionId::C6 => {
            if s.s_n == 0.0 {
                f64::INFINITY
            } else {
                n / root
            }
        }
        ConditionId::C7 => {
            if s.s_n == 0.0 {
                f64::INFINITY
            } else {
                s.max_dev / root
            }
        }
        ConditionId::ThetaConsistency => (n * s.mean).abs() / s.s_star,
        ConditionId::C17 => {
            let denom = n * s.mean * s.mean;
            if denom == 0.0 {
                f64::INFINITY
            } else {
                s.s_n / denom
            }
        }
        ConditionId::PetrovI | ConditionId::PetrovII | ConditionId::PetrovIII => {
            let spec = spec.ok_or_else(|| {
                Error::InvalidParameter(format!("condition `{cond}` needs a model spec"))
            })?;
            let p = petrov_values(s, &spec.delta)?;
            match cond {
                ConditionId::PetrovI => p[0],
                ConditionId::PetrovII => p[1],
                _ => p[2],
            }
        }
    };
    Ok(v)
}

pub fn condition_path_from_summaries(
    cond: ConditionId,
    summaries: &[DesignSummary],
    spec: Option<&EVModelSpec>,
    rule: &VerdictRule,
) -> Result<ConditionPath> {
    let n_grid: Vec<usize> = summaries.iter().map(|s| s.n).collect();
    check_grid(&n_grid, 2)?;
    if let Some(spec) = spec {
        spec.validate()?;
    }
    let values = summaries
        .iter()
        .map(|s| condition_value(cond, s, spec))
        .collect::<Result<Vec<_>>>()?;
    let target = cond.target();
    Ok(ConditionPath {
        name: cond,
        verdict: trend_verdict(&values, target, rule),
        n_grid,
        values,
        target,
    })
}

pub fn condition_path(
    cond: ConditionId,
    design: &DesignSequence,
    spec: Option<&EVModelSpec>,
    n_grid: &[usize],
    rule: &VerdictRule,
) -> Result<ConditionPath> {
    let summaries = summary_path(design, n_grid)?;
    condition_path_from_summaries(cond, &summaries, spec, rule)
}

/// Summaries for a path given directly by `n ↦ S_n`.
pub fn synthetic_path(n_grid: &[usize], s_n: impl Fn(usize) -> f64) -> Result<Vec<DesignSummary>> {
    check_grid(n_grid, 2)?;
    n_grid.iter().map(|&n| DesignSummary::synthetic(n, s_n(n))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyPoint {
    pub n: usize,
    /// `n / √S_n`
    pub n_over_root_s: f64,
    /// `√S_n / max_dev²`
    pub root_s_over_max_dev_sq: f64,
    /// `max_dev² / S_n`
    pub max_dev_sq_over_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub points: Vec<HierarchyPoint>,
    /// Set when c6 or c7 is not a satisfied trend on this grid, in which
    /// case the chain `n ≪ √S_n ≪ max_dev² ≪ S_n` is not expected to hold.
    pub flagged: bool,
}

pub fn dispersion_hierarchy_from_summaries(summaries: &[DesignSummary], rule: &VerdictRule) -> Result<HierarchyReport> {
    let mut points = Vec::with_capacity(summaries.len());
    for s in summaries {
        if s.s_n == 0.0 {
            return Err(Error::ZeroDispersion);
        }
        let root = s.s_n.sqrt();
        let md2 = s.max_dev * s.max_dev;
        points.push(HierarchyPoint {
            n: s.n,
            n_over_root_s: s.n as f64 / root,
            root_s_over_max_dev_sq: root / md2,
            max_dev_sq_over_s: md2 / s.s_n,
        });
    }
    let c6 = condition_path_from_summaries(ConditionId::C6, summaries, None, rule)?;
    let c7 = condition_path_from_summaries(ConditionId::C7, summaries, None, rule)?;
    Ok(HierarchyReport {
        points,
        flagged: c6.verdict != Verdict::SatisfiedTrend || c7.verdict != Verdict::SatisfiedTrend,
    })
}

pub fn dispersion_hierarchy(design: &DesignSequence, n_grid: &[usize], rule: &VerdictRule) -> Result<HierarchyReport> {
    dispersion_hierarchy_from_summaries(&summary_path(design, n_grid)?, rule)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PetrovReport {
    pub conditions: Vec<ConditionPath>,
    /// `n / √S_n` at each grid point.
    #[serde(with = "lossless")]
    pub corollary: Vec<f64>,
}

pub fn petrov_check_from_summaries(
    summaries: &[DesignSummary],
    spec: &EVModelSpec,
    rule: &VerdictRule,
) -> Result<PetrovReport> {
    let conditions = [ConditionId::PetrovI, ConditionId::PetrovII, ConditionId::PetrovIII]
        .into_iter()
        .map(|c| condition_path_from_summaries(c, summaries, Some(spec), rule))
        .collect::<Result<Vec<_>>>()?;
    let corollary = summaries
        .iter()
        .map(|s| condition_value(ConditionId::C6, s, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(PetrovReport { conditions, corollary })
}

/// Evaluates the truncated-moment conditions by quadrature on `δ`'s law.
/// All randomness is in the model, so `seed` only matters for stochastic
/// designs, where it is already part of `design`.
pub fn petrov_check(
    design: &DesignSequence,
    spec: &EVModelSpec,
    n_grid: &[usize],
    rule: &VerdictRule,
) -> Result<PetrovReport> {
    petrov_check_from_summaries(&summary_path(design, n_grid)?, spec, rule)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LindebergMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LindebergReport {
    pub n: usize,
    pub r: f64,
    /// `Σ_i E[X_{n,i}² 1{|X_{n,i}| > r}]`
    pub sum_value: f64,
    pub method: LindebergMethod,
    pub stderr: Option<f64>,
    /// Monte Carlo draws in which at least one term fired.
    pub hits: Option<u64>,
    pub draws: Option<u64>,
}

impl LindebergReport {
    /// Whether a quadrature value and a Monte Carlo estimate agree within
    /// `k` reported standard errors. A Monte Carlo run with no hits cannot
    /// resolve values below `1 / draws`; agreement then means the quadrature
    /// value is below that resolution.
    pub fn agrees_with(&self, mc: &LindebergReport, k: f64) -> bool {
        match (mc.hits, mc.draws, mc.stderr) {
            (Some(0), Some(m), _) => self.sum_value < 1.0 / m as f64,
            (_, _, Some(se)) => (self.sum_value - mc.sum_value).abs() <= k * se,
            _ => false,
        }
    }
}

/// The standardized array `X_{n,i} = c_i ν_i / √V` with
/// `c_i = (x_i − x̄_n) / √S_n`, so that `Σ_i E X_{n,i}² = 1`.
#[derive(Debug, Clone)]
pub struct LindebergArray {
    n: usize,
    spec: EVModelSpec,
    variance: f64,
    /// `|c_i|` sorted descending
    weights: Vec<f64>,
    /// `prefix[k] = Σ_{j<k} c_j²` over the sorted weights
    prefix: Vec<f64>,
}

impl LindebergArray {
    pub fn new(x: &[f64], spec: &EVModelSpec) -> Result<Self> {
        spec.validate()?;
        let summary = summarize(x)?;
        if summary.s_n == 0.0 {
            return Err(Error::ZeroDispersion);
        }
        let variance = spec.nu_variance();
        if variance == 0.0 {
            return Err(Error::ZeroVariance);
        }
        let root = summary.s_n.sqrt();
        let mut weights: Vec<f64> = x.iter().map(|&v| ((v - summary.mean) / root).abs()).collect();
        weights.sort_by(|a, b| b.total_cmp(a));
        let mut prefix = Vec::with_capacity(weights.len() + 1);
        let mut acc = KahanSum::new();
        prefix.push(0.0);
        for &w in &weights {
            acc.add(w * w);
            prefix.push(acc.value());
        }
        Ok(Self {
            n: x.len(),
            spec: *spec,
            variance,
            weights,
            prefix,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sum(&self, r: f64, method: LindebergMethod, mc_draws: u64, seed: u64) -> Result<LindebergReport> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidParameter(format!("truncation level r must be > 0, got {r}")));
        }
        match method {
            LindebergMethod::Quadrature => self.by_quadrature(r),
            LindebergMethod::MonteCarlo => self.by_monte_carlo(r, mc_draws, seed),
        }
    }

    fn by_quadrature(&self, r: f64) -> Result<LindebergReport> {
        let nu = self.spec.composite_error();
        let sd = self.variance.sqrt();
        let bound = nu.support_bound();
        // Runs of equal weights share one tail evaluation.
        let mut runs: Vec<(f64, f64)> = Vec::new();
        for &w in &self.weights {
            match runs.last_mut() {
                Some((last, mass)) if *last == w => *mass += w * w,
                _ => runs.push((w, w * w)),
            }
        }
        let terms = runs
            .par_iter()
            .map(|&(w, mass)| {
                if w == 0.0 {
                    return Ok(0.0);
                }
                // |X| > r  ⇔  |ν| > r √V / |c|
                let t = r * sd / w;
                if matches!(bound, Some(b) if b <= t) {
                    return Ok(0.0);
                }
                Ok(mass * nu.tail_second_moment(t)? / self.variance)
            })
            .collect::<Result<Vec<f64>>>()?;
        let sum = compensated_sum(terms).clamp(0.0, 1.0);
        Ok(LindebergReport {
            n: self.n,
            r,
            sum_value: sum,
            method: LindebergMethod::Quadrature,
            stderr: None,
            hits: None,
            draws: None,
        })
    }

    /// Unbiased estimator built from a single `ν` per draw:
    /// `g(ν) = (ν² / V) Σ_{i : |c_i| |ν| > r √V} c_i²`.
    fn by_monte_carlo(&self, r: f64, draws: u64, seed: u64) -> Result<LindebergReport> {
        if draws < 2 {
            return Err(Error::TooShort { got: draws as usize, min: 2 });
        }
        let nu = self.spec.composite_error();
        let scaled_r = r * self.variance.sqrt();
        const CHUNK: u64 = 1 << 14;
        let chunks = draws.div_ceil(CHUNK);
        let partials: Vec<(f64, f64, u64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut s = KahanSum::new();
                let mut s2 = KahanSum::new();
                let mut hits = 0u64;
                for m in c * CHUNK..((c + 1) * CHUNK).min(draws) {
                    let v = nu.sample(&mut CounterRng::new(seed, 0, stream::LINDEBERG, m));
                    let a = v.abs();
                    if a == 0.0 {
                        s2.add(0.0);
                        continue;
                    }
                    let thr = scaled_r / a;
                    let k = self.weights.partition_point(|&w| w > thr);
                    if k > 0 {
                        hits += 1;
                    }
                    let g = v * v / self.variance * self.prefix[k];
                    s.add(g);
                    s2.add(g * g);
                }
                (s.value(), s2.value(), hits)
            })
            .collect();
        let mut total = KahanSum::new();
        let mut total_sq = KahanSum::new();
        let mut hits = 0;
        for (s, s2, h) in partials {
            total.add(s);
            total_sq.add(s2);
            hits += h;
        }
        let m = draws as f64;
        let mean = total.value() / m;
        let var = ((total_sq.value() - m * mean * mean) / (m - 1.0)).max(0.0);
        Ok(LindebergReport {
            n: self.n,
            r,
            sum_value: mean,
            method: LindebergMethod::MonteCarlo,
            stderr: Some((var / m).sqrt()),
            hits: Some(hits),
            draws: Some(draws),
        })
    }
}

/// Convenience wrapper building the array on the fly.
pub fn lindeberg_sum(
    x: &[f64],
    spec: &EVModelSpec,
    r: f64,
    method: LindebergMethod,
    mc_draws: u64,
    seed: u64,
) -> Result<LindebergReport> {
    LindebergArray::new(x, spec)?.sum(r, method, mc_draws, seed)
}

/// Everything `diagnose` reports for one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub design: DesignSequence,
    pub n_grid: Vec<usize>,
    pub summaries: Vec<DesignSummary>,
    pub conditions: Vec<ConditionPath>,
    pub hierarchy: Option<HierarchyReport>,
    pub petrov: Option<PetrovReport>,
    pub notes: Vec<String>,
}

pub fn diagnose(
    design: &DesignSequence,
    spec: Option<&EVModelSpec>,
    n_grid: &[usize],
    conditions: &[ConditionId],
    rule: &VerdictRule,
    with_hierarchy: bool,
    with_petrov: bool,
) -> Result<DiagnosticsReport> {
    let summaries = summary_path(design, n_grid)?;
    let paths = conditions
        .iter()
        .map(|&c| condition_path_from_summaries(c, &summaries, spec, rule))
        .collect::<Result<Vec<_>>>()?;
    let mut notes = Vec::new();
    let hierarchy = if with_hierarchy {
        match dispersion_hierarchy_from_summaries(&summaries, rule) {
            Ok(h) => Some(h),
            Err(Error::ZeroDispersion) => {
                notes.push("hierarchy skipped: S_n = 0 on the grid".to_string());
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let petrov = if with_petrov {
        let spec = spec.ok_or_else(|| Error::InvalidParameter("petrov check needs a model spec".into()))?;
        Some(petrov_check_from_summaries(&summaries, spec, rule)?)
    } else {
        None
    };
    Ok(DiagnosticsReport {
        design: *design,
        n_grid: n_grid.to_vec(),
        summaries,
        conditions: paths,
        hierarchy,
        petrov,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignKind;
    use crate::model::Family;
    use approx::assert_relative_eq;

    pub const DEFAULT_GRID: [usize; 8] = [50, 100, 200, 500, 1000, 2000, 5000, 10000];

    fn normal_spec() -> EVModelSpec {
        EVModelSpec::new(1.0, 2.0, ErrorDistribution::normal(1.0), ErrorDistribution::normal(1.0))
    }

    #[test]
    fn ids_round_trip() {
        for c in ConditionId::ALL {
            assert_eq!(c.as_str().parse::<ConditionId>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.as_str()));
        }
        assert!("c8".parse::<ConditionId>().is_err());
    }

    #[test]
    fn verdict_rule() {
        let r = VerdictRule::default();
        assert_eq!(trend_verdict(&[1.0, 0.5, 0.3, 0.2, 0.1], Target::ToZero, &r), Verdict::SatisfiedTrend);
        assert_eq!(trend_verdict(&[1.0, 0.9, 1.1, 1.0, 0.95], Target::ToZero, &r), Verdict::ViolatedTrend);
        assert_eq!(trend_verdict(&[5.0, 4.0, 3.0, 2.0, 1.0], Target::ToZero, &r), Verdict::Inconclusive);
        assert_eq!(trend_verdict(&[0.1, 0.12, 0.11, 0.1, 0.05], Target::ToZero, &r), Verdict::Inconclusive);
        assert_eq!(trend_verdict(&[10.0, 20.0, 40.0, 80.0, 160.0], Target::ToInfinity, &r), Verdict::SatisfiedTrend);
        assert_eq!(trend_verdict(&[f64::INFINITY; 5], Target::ToZero, &r), Verdict::ViolatedTrend);
        assert_eq!(trend_verdict(&[0.1], Target::ToZero, &r), Verdict::Inconclusive);
        assert_eq!(trend_verdict(&[1e-3, 1e-9, 0.0, 0.0, 0.0], Target::ToZero, &r), Verdict::SatisfiedTrend);
        assert_eq!(trend_verdict(&[0.0, 0.0, 1e-9, 0.0, 0.0], Target::ToZero, &r), Verdict::Inconclusive);
        // only the trailing window matters
        assert_eq!(
            trend_verdict(&[0.01, 9.0, 0.5, 0.3, 0.2, 0.15, 0.1], Target::ToZero, &r),
            Verdict::SatisfiedTrend
        );
    }

    #[test]
    fn c6_linear_closed_form() {
        let p = condition_path(ConditionId::C6, &DesignSequence::linear(1.0), None, &[100], &VerdictRule::default()).unwrap();
        assert_relative_eq!(p.values[0], 100.0 / 83325f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(p.values[0], 0.3464, max_relative = 1e-3);
    }

    #[test]
    fn linear_design_satisfies_c6_c7_liu_chen() {
        let d = DesignSequence::linear(1.0);
        for c in [ConditionId::C6, ConditionId::C7, ConditionId::LiuChenBeta, ConditionId::ThetaConsistency] {
            let p = condition_path(c, &d, None, &DEFAULT_GRID, &VerdictRule::default()).unwrap();
            assert_eq!(p.verdict, Verdict::SatisfiedTrend, "{c}: {:?}", p.values);
        }
    }

    #[test]
    fn gaussian_iid_violates_liu_chen() {
        let d = DesignSequence::gaussian_iid(1.0, 2024);
        let p = condition_path(ConditionId::LiuChenBeta, &d, None, &DEFAULT_GRID, &VerdictRule::default()).unwrap();
        assert_eq!(p.verdict, Verdict::ViolatedTrend, "{:?}", p.values);
        let last = *p.values.last().unwrap();
        assert!((last - 1.0).abs() < 0.1, "{last}");
    }

    #[test]
    fn geometric_violates_c7() {
        let d = DesignSequence::new(DesignKind::Geometric { ratio: 2.0 });
        let grid = [10, 20, 50, 100, 200, 400];
        let p = condition_path(ConditionId::C7, &d, None, &grid, &VerdictRule::default()).unwrap();
        assert_eq!(p.verdict, Verdict::ViolatedTrend);
        // x̄ ≈ 2^{n+1}/n, S_n ≈ 4^{n+1}(1/3 − 1/n), max_dev ≈ 2^n (1 − 2/n)
        let n = 400.0;
        let oracle = (1.0 - 2.0 / n) / (2.0 * (1.0 / 3.0 - 1.0 / n as f64).sqrt());
        assert_relative_eq!(*p.values.last().unwrap(), oracle, max_relative = 1e-6);
    }

    #[test]
    fn c17_zero_mean_is_infinite() {
        let s = DesignSummary { n: 4, mean: 0.0, s_n: 10.0, max_dev: 2.0, s_star: 10.0 };
        assert_eq!(condition_value(ConditionId::C17, &s, None).unwrap(), f64::INFINITY);
        let p = condition_path(ConditionId::C17, &DesignSequence::alternating(1.0), None, &DEFAULT_GRID, &VerdictRule::default())
            .unwrap();
        assert_ne!(p.verdict, Verdict::ViolatedTrend);
    }

    #[test]
    fn petrov_needs_spec() {
        assert!(condition_path(ConditionId::PetrovI, &DesignSequence::linear(1.0), None, &[10, 20], &VerdictRule::default()).is_err());
    }

    #[test]
    fn hierarchy_power_and_linear() {
        let rule = VerdictRule::default();
        let h = dispersion_hierarchy(&DesignSequence::new(DesignKind::Power { exponent: 2.0 }), &DEFAULT_GRID, &rule).unwrap();
        assert!(!h.flagged);
        for w in h.points.windows(2) {
            assert!(w[1].n_over_root_s < w[0].n_over_root_s);
            assert!(w[1].root_s_over_max_dev_sq < w[0].root_s_over_max_dev_sq);
            assert!(w[1].max_dev_sq_over_s < w[0].max_dev_sq_over_s);
        }
        let h = dispersion_hierarchy(&DesignSequence::linear(1.0), &[1000], &rule).unwrap();
        // (n²/4) / (n³/12) ≈ 3/n
        assert_relative_eq!(h.points[0].max_dev_sq_over_s, 0.003, max_relative = 1e-2);
        let c = DesignSequence::new(DesignKind::Constant { value: 1.0 });
        assert_eq!(dispersion_hierarchy(&c, &[10, 20], &rule), Err(Error::ZeroDispersion));
    }

    #[test]
    fn petrov_iii_tracks_c6() {
        let spec = normal_spec();
        let rep = petrov_check(&DesignSequence::linear(1.0), &spec, &DEFAULT_GRID, &VerdictRule::default()).unwrap();
        let iii = &rep.conditions[2];
        for (v, c6) in iii.values.iter().zip(&rep.corollary) {
            assert!(v <= c6 && *v > 0.99 * c6, "{v} vs {c6}");
        }
        assert_eq!(iii.verdict, Verdict::SatisfiedTrend);
    }

    #[test]
    fn petrov_bounded_delta_has_no_exceedance() {
        let mut spec = normal_spec();
        spec.delta = ErrorDistribution::new(Family::UniformCentered, 1.0).unwrap();
        let s = DesignSummary::synthetic(100, 1e6).unwrap();
        assert_eq!(petrov_values(&s, &spec.delta).unwrap()[0], 0.0);
    }

    #[test]
    fn petrov_values_against_quadrature() {
        let delta = ErrorDistribution::new(Family::Laplace, 1.0).unwrap();
        let s = DesignSummary::synthetic(50, 400.0).unwrap(); // a = 20, c = sqrt(20)
        let p = petrov_values(&s, &delta).unwrap();
        let c = 20f64.sqrt();
        let tol = crate::quadrature::Tolerance { abs: 1e-14, rel: 1e-12 };
        let q = |k: i32| {
            crate::quadrature::integrate(|x| x.powi(k) * delta.density(x).unwrap(), -c, c, tol).unwrap().value
        };
        let tail = 1.0 - q(0);
        assert_relative_eq!(p[0], 50.0 * tail, max_relative = 1e-8);
        assert_relative_eq!(p[1], 50.0 / 400.0 * (q(4) - q(2).powi(2)), max_relative = 1e-9);
        assert_relative_eq!(p[2], 50.0 / 20.0 * q(2), max_relative = 1e-10);
    }

    #[test]
    fn lindeberg_bounded_zero_and_small_r() {
        let spec = EVModelSpec::new(
            0.0,
            1.0,
            ErrorDistribution::new(Family::UniformCentered, 1.0).unwrap(),
            ErrorDistribution::new(Family::ScaledRademacher, 1.0).unwrap(),
        );
        let x = DesignSequence::linear(1.0).generate(1000).unwrap();
        let arr = LindebergArray::new(&x, &spec).unwrap();
        let rep = arr.sum(1.0, LindebergMethod::Quadrature, 0, 0).unwrap();
        assert_eq!(rep.sum_value, 0.0);
        let tiny = arr.sum(1e-9, LindebergMethod::Quadrature, 0, 0).unwrap();
        assert_relative_eq!(tiny.sum_value, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn lindeberg_monotone_in_r() {
        let spec = normal_spec();
        let x = DesignSequence::linear(1.0).generate(50).unwrap();
        let arr = LindebergArray::new(&x, &spec).unwrap();
        let mut prev = f64::INFINITY;
        for r in [0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8] {
            let v = arr.sum(r, LindebergMethod::Quadrature, 0, 0).unwrap().sum_value;
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev, "r={r}: {v} > {prev}");
            prev = v;
        }
    }

    #[test]
    fn lindeberg_rejects_bad_r() {
        let x = DesignSequence::linear(1.0).generate(10).unwrap();
        assert!(lindeberg_sum(&x, &normal_spec(), 0.0, LindebergMethod::Quadrature, 0, 0).is_err());
        assert!(lindeberg_sum(&x, &normal_spec(), -1.0, LindebergMethod::MonteCarlo, 10, 0).is_err());
    }

    #[test]
    fn lindeberg_quadrature_vs_monte_carlo_small_n() {
        let spec = normal_spec();
        let x = DesignSequence::linear(1.0).generate(30).unwrap();
        let arr = LindebergArray::new(&x, &spec).unwrap();
        let q = arr.sum(0.3, LindebergMethod::Quadrature, 0, 0).unwrap();
        let m = arr.sum(0.3, LindebergMethod::MonteCarlo, 200_000, 9).unwrap();
        assert!(q.agrees_with(&m, 4.0), "{q:?} {m:?}");
    }

    #[test]
    fn lossless_json_for_infinite_values() {
        let p = ConditionPath {
            name: ConditionId::C6,
            n_grid: vec![2, 3],
            values: vec![f64::INFINITY, 0.5],
            target: Target::ToZero,
            verdict: Verdict::ViolatedTrend,
        };
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"inf\""));
        let back: ConditionPath = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
