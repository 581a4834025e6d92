//! Seeded Monte Carlo experiments.
//!
//! Every replicate draws its errors from streams keyed by
//! `(seed, n, replicate)`, runs in parallel, and is collected in replicate
//! order before any aggregation, so reports do not depend on the number of
//! worker threads.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{condition_path, ConditionId, Verdict, VerdictRule};
use crate::design::{check_grid, generate_design, summarize, DesignKind, DesignSequence, DesignSummary};
use crate::error::{Error, Result};
use crate::estimator::{decompose, fit, negligible_ratios, standardize, NegligibleRatios, VarianceSource};
use crate::model::{draw_sample_on, EVModelSpec};
use crate::numeric::{mean, median, normal_cdf, normal_quantile, sample_variance};
use crate::rng::replicate_key;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    BetaClt,
    ThetaClt,
    Coverage,
    Negligibility,
    Counterexample,
}

impl TestKind {
    pub fn is_distributional(&self) -> bool {
        !matches!(self, TestKind::Negligibility)
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::BetaClt => "beta-clt",
            TestKind::ThetaClt => "theta-clt",
            TestKind::Coverage => "coverage",
            TestKind::Negligibility => "negligibility",
            TestKind::Counterexample => "counterexample",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statistic {
    #[serde(rename = "z_beta")]
    ZBeta,
    #[serde(rename = "z_theta")]
    ZTheta,
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::ZBeta => "z_beta",
            Statistic::ZTheta => "z_theta",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// KS critical value is `ks_coef / √R + ks_slack`.
    pub ks_coef: f64,
    pub ks_slack: f64,
    pub mean_tol: f64,
    pub var_lo: f64,
    pub var_hi: f64,
    pub coverage_nominal: f64,
    pub coverage_tol: f64,
    pub max_skip_fraction: f64,
    pub min_replicates: usize,
    pub identity_tol: f64,
    pub attenuation_tol: f64,
    /// The counterexample refutes normality when KS exceeds this.
    pub refutation_ks: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            ks_coef: 1.36,
            ks_slack: 0.01,
            mean_tol: 0.05,
            var_lo: 0.9,
            var_hi: 1.1,
            coverage_nominal: 0.95,
            coverage_tol: 0.02,
            max_skip_fraction: 0.01,
            min_replicates: 100,
            identity_tol: 1e-10,
            attenuation_tol: 0.05,
            refutation_ks: 0.1,
        }
    }
}

impl Thresholds {
    pub fn ks_threshold(&self, replicates: usize) -> f64 {
        self.ks_coef / (replicates as f64).sqrt() + self.ks_slack
    }
}

fn default_variance_source() -> VarianceSource {
    VarianceSource::True
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub design: DesignSequence,
    pub model: EVModelSpec,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_variance_source")]
    pub variance_source: VarianceSource,
    pub tests: Vec<TestKind>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub verdict_rule: VerdictRule,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.design.kind.validate()?;
        self.model.validate()?;
        check_grid(&self.n_grid, 2)?;
        if self.tests.is_empty() {
            return Err(Error::InvalidParameter("no tests requested".into()));
        }
        if self.replicates == 0 {
            return Err(Error::TooFewReplicates { got: 0, min: 1 });
        }
        let min = self.thresholds.min_replicates;
        if self.tests.iter().any(TestKind::is_distributional) && self.replicates < min {
            return Err(Error::TooFewReplicates { got: self.replicates, min });
        }
        let nominal = self.thresholds.coverage_nominal;
        if !(nominal > 0.0 && nominal < 1.0) {
            return Err(Error::InvalidParameter(format!("coverage nominal must be in (0, 1), got {nominal}")));
        }
        if self.tests.contains(&TestKind::Counterexample) {
            counterexample_target(&self.design, &self.model)?;
        }
        Ok(())
    }

    fn wants(&self, t: TestKind) -> bool {
        self.tests.contains(&t)
    }

    /// Coverage is measured for each statistic whose CLT test is requested,
    /// or for `z_beta` alone when neither is.
    fn coverage_statistics(&self) -> Vec<Statistic> {
        let mut v = Vec::new();
        if self.wants(TestKind::BetaClt) {
            v.push(Statistic::ZBeta);
        }
        if self.wants(TestKind::ThetaClt) {
            v.push(Statistic::ZTheta);
        }
        if v.is_empty() {
            v.push(Statistic::ZBeta);
        }
        v
    }
}

/// Exact sup-distance between the empirical CDF of `samples` and `Φ`.
pub fn ks_statistic(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::TooShort { got: samples.len(), min: 2 });
    }
    if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let r = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in s.iter().enumerate() {
        let p = normal_cdf(v);
        let k = i as f64;
        d = d.max((k + 1.0) / r - p).max(p - k / r);
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub nominal: f64,
    pub empirical: f64,
    /// Binomial standard error `√(p(1−p)/R)` at the nominal level.
    pub stderr: f64,
    pub samples: usize,
}

/// Fraction of `|z| ≤ Φ⁻¹((1 + nominal) / 2)`.
pub fn coverage(z: &[f64], nominal: f64) -> Result<Coverage> {
    if !(nominal > 0.0 && nominal < 1.0) {
        return Err(Error::InvalidParameter(format!("coverage nominal must be in (0, 1), got {nominal}")));
    }
    if z.len() < 100 {
        return Err(Error::TooFewReplicates { got: z.len(), min: 100 });
    }
    if let Some(index) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let q = normal_quantile(0.5 * (1.0 + nominal));
    let hits = z.iter().filter(|v| v.abs() <= q).count();
    let r = z.len() as f64;
    Ok(Coverage {
        nominal,
        empirical: hits as f64 / r,
        stderr: (nominal * (1.0 - nominal) / r).sqrt(),
        samples: z.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub n: usize,
    pub statistic: Statistic,
    pub ks_distance: f64,
    pub ks_threshold: f64,
    pub mean: f64,
    pub variance: f64,
    pub pass: bool,
}

pub fn normality(n: usize, statistic: Statistic, z: &[f64], th: &Thresholds) -> Result<NormalityResult> {
    let ks_distance = ks_statistic(z)?;
    let ks_threshold = th.ks_threshold(z.len());
    let m = mean(z);
    let v = sample_variance(z);
    Ok(NormalityResult {
        n,
        statistic,
        ks_distance,
        ks_threshold,
        mean: m,
        variance: v,
        pass: ks_distance <= ks_threshold && m.abs() <= th.mean_tol && v >= th.var_lo && v <= th.var_hi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub n: usize,
    pub nominal: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub half_width_basis: Statistic,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegligibilitySummary {
    pub n: usize,
    pub median_delta_dispersion: f64,
    pub median_delta_eps_cross: f64,
    pub median_dispersion_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointReport {
    pub n: usize,
    pub design: DesignSummary,
    pub replicates: usize,
    pub skipped: usize,
    /// Largest relative residual of the two decomposition identities.
    pub max_identity_residual: f64,
    /// Median of `|residual_var − Var(ν)|`.
    pub median_plug_in_gap: f64,
    pub normality: Vec<NormalityResult>,
    pub coverage: Vec<CoverageResult>,
    pub negligibility: Option<NegligibilitySummary>,
    #[serde(skip)]
    pub z_beta: Vec<f64>,
    #[serde(skip)]
    pub z_theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexamplePoint {
    pub n: usize,
    pub s_n: f64,
    pub mean_beta_hat: f64,
    pub var_beta_hat: f64,
    pub attenuation_target: f64,
    /// Standard deviation of `√S_n (β̂_n − β) / √V` across replicates.
    pub spread: f64,
    pub ks_distance: f64,
    pub skipped: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub attenuation_target: f64,
    pub points: Vec<CounterexamplePoint>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub points: Vec<GridPointReport>,
    pub negligibility_pass: Option<bool>,
    pub counterexample: Option<CounterexampleReport>,
    pub warnings: Vec<String>,
    pub failures: Vec<String>,
    pub pass: bool,
}

impl ExperimentReport {
    /// One row per grid point and requested result.
    pub fn write_summary_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,test,statistic,value,threshold,pass")?;
        for p in &self.points {
            for r in &p.normality {
                writeln!(out, "{},ks,{},{},{},{}", p.n, r.statistic, r.ks_distance, r.ks_threshold, r.pass)?;
                writeln!(out, "{},mean,{},{},,", p.n, r.statistic, r.mean)?;
                writeln!(out, "{},variance,{},{},,", p.n, r.statistic, r.variance)?;
            }
            for c in &p.coverage {
                writeln!(out, "{},coverage,{},{},{},{}", p.n, c.half_width_basis, c.empirical, c.nominal, c.pass)?;
            }
            if let Some(g) = &p.negligibility {
                writeln!(out, "{},median_delta_dispersion,,{},,", p.n, g.median_delta_dispersion)?;
                writeln!(out, "{},median_delta_eps_cross,,{},,", p.n, g.median_delta_eps_cross)?;
                writeln!(out, "{},median_dispersion_gap,,{},,", p.n, g.median_dispersion_gap)?;
            }
        }
        if let Some(c) = &self.counterexample {
            for p in &c.points {
                writeln!(out, "{},mean_beta_hat,,{},{},{}", p.n, p.mean_beta_hat, p.attenuation_target, p.pass)?;
                writeln!(out, "{},ks,refutation,{},,", p.n, p.ks_distance)?;
            }
        }
        Ok(())
    }

    /// Per grid point z-samples, `replicate,z_beta,z_theta`.
    pub fn write_samples_csv<W: std::io::Write>(point: &GridPointReport, mut out: W) -> std::io::Result<()> {
        writeln!(out, "replicate,z_beta,z_theta")?;
        for (r, (b, t)) in point.z_beta.iter().zip(&point.z_theta).enumerate() {
            writeln!(out, "{r},{b},{t}")?;
        }
        Ok(())
    }
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidParameter("worker count must be >= 1".into())),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

struct Replicate {
    beta_hat: f64,
    z_beta: f64,
    z_theta: f64,
    identity: f64,
    plug_in_gap: f64,
    ratios: Option<NegligibleRatios>,
}

struct PointDraws {
    replicates: Vec<Replicate>,
    skipped: usize,
}

fn simulate_point(
    spec: &EVModelSpec,
    design: &DesignSequence,
    x: &[f64],
    summary: &DesignSummary,
    seed: u64,
    replicates: usize,
    source: VarianceSource,
) -> Result<PointDraws> {
    let n = x.len();
    let nu_var = spec.nu_variance();
    let outcomes = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<Option<Replicate>> {
            let sample = draw_sample_on(spec, design, x, seed, replicate_key(n, r), true)?;
            let f = match fit(&sample) {
                Ok(f) => f,
                Err(Error::SingularDesign { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let d = decompose(&sample, spec, summary)?;
            let (r10, r13) = d.identity_residuals(&f, spec.beta);
            let z = standardize(&f, spec, summary, source)?;
            let ratios = if summary.s_n > 0.0 {
                Some(negligible_ratios(&d, summary)?)
            } else {
                None
            };
            Ok(Some(Replicate {
                beta_hat: f.beta_hat,
                z_beta: z.z_beta,
                z_theta: z.z_theta,
                identity: r10.max(r13),
                plug_in_gap: (f.residual_var - nu_var).abs(),
                ratios,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let skipped = outcomes.iter().filter(|o| o.is_none()).count();
    Ok(PointDraws {
        replicates: outcomes.into_iter().flatten().collect(),
        skipped,
    })
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.len() >= 2 && v.windows(2).all(|w| w[1] < w[0])
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let th = &config.thresholds;
    let spec = &config.model;
    let mut warnings = Vec::new();
    let mut failures = Vec::new();

    if config.wants(TestKind::ThetaClt) {
        let p = condition_path(ConditionId::C17, &config.design, None, &config.n_grid, &config.verdict_rule)?;
        if p.verdict != Verdict::SatisfiedTrend {
            warnings.push(format!("theta-clt requested but c17 is {} on this grid", p.verdict));
        }
    }

    let max_n = *config.n_grid.last().expect("validated grid");
    let x_all = generate_design(&config.design, max_n)?;
    let clt_wanted = [TestKind::BetaClt, TestKind::ThetaClt, TestKind::Coverage, TestKind::Negligibility]
        .iter()
        .any(|&t| config.wants(t));

    let mut points = Vec::new();
    if clt_wanted {
        for &n in &config.n_grid {
            let x = &x_all[..n];
            let summary = summarize(x)?;
            let draws = simulate_point(spec, &config.design, x, &summary, config.seed, config.replicates, config.variance_source)?;
            let reps = &draws.replicates;
            let skip_fraction = draws.skipped as f64 / config.replicates as f64;
            if skip_fraction > th.max_skip_fraction {
                failures.push(format!("n={n}: {} of {} replicates singular", draws.skipped, config.replicates));
            }
            let z_beta: Vec<f64> = reps.iter().map(|r| r.z_beta).collect();
            let z_theta: Vec<f64> = reps.iter().map(|r| r.z_theta).collect();
            let max_identity_residual = reps.iter().map(|r| r.identity).fold(0.0, f64::max);
            if !(max_identity_residual <= th.identity_tol) {
                failures.push(format!("n={n}: decomposition identity residual {max_identity_residual:e}"));
            }
            let gaps: Vec<f64> = reps.iter().map(|r| r.plug_in_gap).collect();
            let median_plug_in_gap = if gaps.is_empty() { f64::NAN } else { median(&gaps) };

            let mut normality_results = Vec::new();
            for (t, stat, z) in [
                (TestKind::BetaClt, Statistic::ZBeta, &z_beta),
                (TestKind::ThetaClt, Statistic::ZTheta, &z_theta),
            ] {
                if config.wants(t) {
                    let res = normality(n, stat, z, th)?;
                    if !res.pass {
                        failures.push(format!(
                            "n={n}: {t} ks={:.4} (<= {:.4}) mean={:.4} var={:.4}",
                            res.ks_distance, res.ks_threshold, res.mean, res.variance
                        ));
                    }
                    normality_results.push(res);
                }
            }

            let mut coverage_results = Vec::new();
            if config.wants(TestKind::Coverage) {
                for stat in config.coverage_statistics() {
                    let z = if stat == Statistic::ZBeta { &z_beta } else { &z_theta };
                    let c = coverage(z, th.coverage_nominal)?;
                    let pass = (c.empirical - c.nominal).abs() <= th.coverage_tol;
                    if !pass {
                        failures.push(format!("n={n}: coverage of {stat} is {:.4}", c.empirical));
                    }
                    coverage_results.push(CoverageResult {
                        n,
                        nominal: c.nominal,
                        empirical: c.empirical,
                        stderr: c.stderr,
                        half_width_basis: stat,
                        pass,
                    });
                }
            }

            let negligibility = if config.wants(TestKind::Negligibility) {
                let ratios: Vec<NegligibleRatios> = reps.iter().filter_map(|r| r.ratios).collect();
                if ratios.is_empty() {
                    return Err(Error::ZeroDispersion);
                }
                let med = |f: fn(&NegligibleRatios) -> f64| median(&ratios.iter().map(f).collect::<Vec<_>>());
                Some(NegligibilitySummary {
                    n,
                    median_delta_dispersion: med(|r| r.delta_dispersion),
                    median_delta_eps_cross: med(|r| r.delta_eps_cross),
                    median_dispersion_gap: med(|r| r.dispersion_gap),
                })
            } else {
                None
            };

            points.push(GridPointReport {
                n,
                design: summary,
                replicates: config.replicates,
                skipped: draws.skipped,
                max_identity_residual,
                median_plug_in_gap,
                normality: normality_results,
                coverage: coverage_results,
                negligibility,
                z_beta,
                z_theta,
            });
        }
    }

    let negligibility_pass = config.wants(TestKind::Negligibility).then(|| {
        let s: Vec<NegligibilitySummary> = points.iter().filter_map(|p| p.negligibility).collect();
        let col = |f: fn(&NegligibilitySummary) -> f64| s.iter().map(f).collect::<Vec<_>>();
        let ok = strictly_decreasing(&col(|g| g.median_delta_dispersion))
            && strictly_decreasing(&col(|g| g.median_delta_eps_cross))
            && strictly_decreasing(&col(|g| g.median_dispersion_gap));
        if !ok {
            failures.push("negligible-ratio medians do not all strictly decrease along the grid".into());
        }
        ok
    });

    let counterexample = if config.wants(TestKind::Counterexample) {
        let c = counterexample_with(config, th)?;
        for p in c.points.iter().filter(|p| !p.pass) {
            failures.push(format!(
                "n={}: counterexample mean beta_hat {:.4} vs target {:.4}, ks {:.4}",
                p.n, p.mean_beta_hat, p.attenuation_target, p.ks_distance
            ));
        }
        Some(c)
    } else {
        None
    };

    Ok(ExperimentReport {
        config: config.clone(),
        points,
        negligibility_pass,
        counterexample,
        warnings,
        pass: failures.is_empty(),
        failures,
    })
}

pub fn run_experiment_with_workers(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentReport> {
    with_workers(workers, || run_experiment(config))?
}

/// `β V_x / (V_x + σ₁²)` for the gaussian-iid design.
pub fn counterexample_target(design: &DesignSequence, spec: &EVModelSpec) -> Result<f64> {
    match (design.kind, design.generator_variance()) {
        (DesignKind::GaussianIid { .. }, Some(vx)) => Ok(spec.beta * vx / (vx + spec.delta.variance())),
        _ => Err(Error::InvalidParameter(format!(
            "the counterexample needs a gaussian-iid design, got {}",
            design.kind.name()
        ))),
    }
}

fn counterexample_with(config: &ExperimentConfig, th: &Thresholds) -> Result<CounterexampleReport> {
    let spec = &config.model;
    let target = counterexample_target(&config.design, spec)?;
    let max_n = *config.n_grid.last().expect("validated grid");
    let x_all = generate_design(&config.design, max_n)?;
    let mut points = Vec::new();
    for &n in &config.n_grid {
        let x = &x_all[..n];
        let summary = summarize(x)?;
        let draws = simulate_point(spec, &config.design, x, &summary, config.seed, config.replicates, VarianceSource::True)?;
        let beta_hat: Vec<f64> = draws.replicates.iter().map(|r| r.beta_hat).collect();
        let z: Vec<f64> = draws.replicates.iter().map(|r| r.z_beta).collect();
        let mean_beta_hat = mean(&beta_hat);
        let ks_distance = ks_statistic(&z)?;
        let skip_ok = draws.skipped as f64 / config.replicates as f64 <= th.max_skip_fraction;
        points.push(CounterexamplePoint {
            n,
            s_n: summary.s_n,
            mean_beta_hat,
            var_beta_hat: sample_variance(&beta_hat),
            attenuation_target: target,
            spread: sample_variance(&z).sqrt(),
            ks_distance,
            skipped: draws.skipped,
            pass: skip_ok && (mean_beta_hat - target).abs() <= th.attenuation_tol && ks_distance > th.refutation_ks,
        });
    }
    Ok(CounterexampleReport {
        attenuation_target: target,
        pass: points.iter().all(|p| p.pass),
        points,
    })
}

/// Counterexample on a gaussian-iid design: `β̂_n` settles at
/// the attenuation limit instead of `β` and the normalized error does not
/// approach `N(0, 1)`.
pub fn counterexample_run(
    design: &DesignSequence,
    spec: &EVModelSpec,
    n_grid: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<CounterexampleReport> {
    let config = ExperimentConfig {
        design: *design,
        model: *spec,
        n_grid: n_grid.to_vec(),
        replicates,
        seed,
        variance_source: VarianceSource::True,
        tests: vec![TestKind::Counterexample],
        thresholds: Thresholds::default(),
        verdict_rule: VerdictRule::default(),
    };
    config.validate()?;
    counterexample_with(&config, &config.thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ErrorDistribution;
    use crate::rng::{open_unit, CounterRng};

    fn normal_spec(sigma: f64) -> EVModelSpec {
        EVModelSpec::new(1.0, 2.0, ErrorDistribution::normal(sigma), ErrorDistribution::normal(sigma))
    }

    fn small_config(tests: Vec<TestKind>) -> ExperimentConfig {
        ExperimentConfig {
            design: DesignSequence::linear(1.0),
            model: normal_spec(1.0),
            n_grid: vec![50, 200],
            replicates: 200,
            seed: 11,
            variance_source: VarianceSource::True,
            tests,
            thresholds: Thresholds::default(),
            verdict_rule: VerdictRule::default(),
        }
    }

    fn brute_force_ks(s: &[f64]) -> f64 {
        // Evaluate |F̂ − Φ| on both sides of every jump point.
        let r = s.len() as f64;
        let mut d: f64 = 0.0;
        for &t in s {
            let below = s.iter().filter(|&&v| v < t).count() as f64 / r;
            let at_or_below = s.iter().filter(|&&v| v <= t).count() as f64 / r;
            let p = normal_cdf(t);
            d = d.max((at_or_below - p).abs()).max((p - below).abs());
        }
        d
    }

    #[test]
    fn ks_perfect_quantiles() {
        let r = 400;
        let s: Vec<f64> = (1..=r).map(|i| normal_quantile((i as f64 - 0.5) / r as f64)).collect();
        assert!((ks_statistic(&s).unwrap() - 0.5 / r as f64).abs() < 1e-9);
    }

    #[test]
    fn ks_point_mass_and_refusals() {
        assert_eq!(ks_statistic(&[0.0; 50]).unwrap(), 0.5);
        assert!(ks_statistic(&[0.3]).is_err());
        assert_eq!(ks_statistic(&[0.0, f64::NAN]), Err(Error::NonFinite { index: 1 }));
    }

    #[test]
    fn ks_matches_brute_force() {
        for seed in 0..20u64 {
            let s: Vec<f64> = (0..137)
                .map(|i| {
                    let u = open_unit(&mut CounterRng::new(seed, 0, 99, i));
                    // skewed and with ties
                    (normal_quantile(u) * 1.3 + 0.2).round() / 4.0
                })
                .collect();
            assert!((ks_statistic(&s).unwrap() - brute_force_ks(&s)).abs() < 1e-12);
        }
    }

    #[test]
    fn coverage_examples() {
        let r = 1000;
        let z: Vec<f64> = (1..=r).map(|i| normal_quantile((i as f64 - 0.5) / r as f64)).collect();
        let c = coverage(&z, 0.95).unwrap();
        assert!((c.empirical - 0.95).abs() <= 1.0 / r as f64);
        assert_eq!(coverage(&[0.0; 100], 0.95).unwrap().empirical, 1.0);
        assert_eq!(coverage(&[10.0; 100], 0.95).unwrap().empirical, 0.0);
        assert!(coverage(&[0.0; 99], 0.95).is_err());
        assert!(coverage(&[0.0; 100], 1.0).is_err());
    }

    #[test]
    fn refuses_small_r() {
        let mut c = small_config(vec![TestKind::BetaClt]);
        c.replicates = 10;
        assert_eq!(run_experiment(&c).unwrap_err(), Error::TooFewReplicates { got: 10, min: 100 });
        c.tests = vec![TestKind::Negligibility];
        assert!(run_experiment(&c).is_ok());
    }

    #[test]
    fn noiseless_is_point_mass() {
        let mut c = small_config(vec![TestKind::BetaClt]);
        c.model = normal_spec(0.0);
        let rep = run_experiment(&c).unwrap();
        let res = rep.points[0].normality[0];
        assert_eq!(res.ks_distance, 0.5);
        assert!(!res.pass);
        assert!(!rep.pass);
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let c = small_config(vec![TestKind::BetaClt, TestKind::Coverage, TestKind::Negligibility]);
        let a = run_experiment_with_workers(&c, Some(1)).unwrap();
        let b = run_experiment_with_workers(&c, Some(4)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.points[1].z_beta, b.points[1].z_beta);
    }

    #[test]
    fn counterexample_wrong_design() {
        assert!(counterexample_run(&DesignSequence::linear(1.0), &normal_spec(1.0), &[100], 100, 1).is_err());
    }

    #[test]
    fn counterexample_without_measurement_error_has_no_attenuation() {
        let mut spec = normal_spec(1.0);
        spec.delta = ErrorDistribution::normal(0.0);
        let rep = counterexample_run(&DesignSequence::gaussian_iid(1.0, 5), &spec, &[400], 200, 3).unwrap();
        assert_eq!(rep.attenuation_target, 2.0);
        assert!((rep.points[0].mean_beta_hat - 2.0).abs() < 0.02);
    }

    #[test]
    fn config_round_trip() {
        let c = small_config(vec![TestKind::ThetaClt, TestKind::Counterexample]);
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"theta-clt\""));
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
