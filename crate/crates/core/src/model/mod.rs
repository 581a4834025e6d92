//! The errors-in-variables model and its sampler.
//!
//! ```text
//! η_i = θ + β x_i + ε_i,   ξ_i = x_i + δ_i
//! η_i = θ + β ξ_i + ν_i,   ν_i = ε_i − β δ_i
//! ```
//!
//! `ε` and `δ` are independent of each other and across `i`. Each draw is
//! keyed by `(seed, replicate, stream, i)`, so a sample is a pure function of
//! its arguments regardless of how replicates are scheduled.

mod distribution;

use std::io::{self, Write};

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use distribution::{ErrorDistribution, Family};

use crate::design::{generate_design, DesignSequence};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};
use crate::rng::{stream, CounterRng};

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EVModelSpec {
    pub theta: f64,
    pub beta: f64,
    pub eps: ErrorDistribution,
    pub delta: ErrorDistribution,
    /// Moment order excess: `E|ε|^{2+α}` and `E|δ|^{2+α}` must be finite.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl EVModelSpec {
    pub fn new(theta: f64, beta: f64, eps: ErrorDistribution, delta: ErrorDistribution) -> Self {
        Self { theta, beta, eps, delta, alpha: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() || !self.beta.is_finite() {
            return Err(Error::InvalidParameter("theta and beta must be finite".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        self.eps.validate()?;
        self.delta.validate()?;
        self.eps.abs_moment(2.0 + self.alpha)?;
        self.delta.abs_moment(2.0 + self.alpha)?;
        Ok(())
    }

    /// `Var(ε − βδ) = σ₂² + β² σ₁²` under independence.
    pub fn nu_variance(&self) -> f64 {
        self.eps.variance() + self.beta * self.beta * self.delta.variance()
    }

    pub fn composite_error(&self) -> CompositeError {
        CompositeError {
            eps: self.eps,
            delta: self.delta,
            beta: self.beta,
        }
    }
}

/// The law of `ν = ε − βδ`.
#[derive(Debug, Clone, Copy)]
pub struct CompositeError {
    pub eps: ErrorDistribution,
    pub delta: ErrorDistribution,
    pub beta: f64,
}

impl CompositeError {
    pub fn variance(&self) -> f64 {
        self.eps.variance() + self.beta * self.beta * self.delta.variance()
    }

    /// `|ν| <= bound` almost surely, if both components are bounded.
    pub fn support_bound(&self) -> Option<f64> {
        let e = self.eps.support_bound()?;
        if self.beta == 0.0 {
            return Some(e);
        }
        Some(e + self.beta.abs() * self.delta.support_bound()?)
    }

    fn scaled_delta(&self) -> ErrorDistribution {
        self.delta.scaled(self.beta)
    }

    /// `E[ν² 1{|ν| > t}]` for `t >= 0`.
    ///
    /// Exact whenever one component is degenerate, both are normal, or one is
    /// discrete; otherwise one component is integrated numerically against
    /// closed-form partial moments of the other. Two student-t components
    /// would need nested quadrature and are rejected.
    pub fn tail_second_moment(&self, t: f64) -> Result<f64> {
        let w = self.scaled_delta(); // law of −βδ (symmetric)
        if w.is_degenerate() {
            return self.eps.tail_moment(2, t);
        }
        if self.eps.is_degenerate() {
            return w.tail_moment(2, t);
        }
        if self.eps.family == Family::Normal && w.family == Family::Normal {
            return ErrorDistribution::normal(self.variance().sqrt()).tail_moment(2, t);
        }
        if let Family::ScaledRademacher = w.family {
            let s = w.scale;
            return Ok(0.5
                * (self.eps.shifted_tail_moment(2, s, t)? + self.eps.shifted_tail_moment(2, -s, t)?));
        }
        if let Family::ScaledRademacher = self.eps.family {
            let s = self.eps.scale;
            return Ok(0.5 * (w.shifted_tail_moment(2, s, t)? + w.shifted_tail_moment(2, -s, t)?));
        }
        let (outer, inner) = if self.eps.has_closed_form_partials() {
            (w, self.eps)
        } else if w.has_closed_form_partials() {
            (self.eps, w)
        } else {
            return Err(Error::Unsupported(format!(
                "quadrature for ν = ε − βδ with ε ~ {} and δ ~ {}; use monte-carlo",
                self.eps, self.delta
            )));
        };
        let range = outer.support_bound().unwrap_or(f64::INFINITY);
        let tol = Tolerance {
            abs: 1e-12 * self.variance().max(f64::MIN_POSITIVE),
            rel: 1e-10,
        };
        let est = integrate(
            |y| {
                let f = outer.density(y).unwrap_or(0.0);
                if f == 0.0 {
                    return 0.0;
                }
                f * inner.shifted_tail_moment(2, y, t).unwrap_or(f64::NAN)
            },
            -range,
            range,
            tol,
        )?;
        Ok(est.value.max(0.0))
    }

    /// One draw of `ν`.
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        let e = self.eps.sample(rng);
        let d = self.delta.sample(rng);
        e - self.beta * d
    }
}

/// One realised dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EVSample {
    pub n: usize,
    pub design: DesignSequence,
    /// The design values `x_1..x_n` the sample was drawn on.
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub latent_eps: Option<Vec<f64>>,
    pub latent_delta: Option<Vec<f64>>,
}

impl EVSample {
    pub fn has_latents(&self) -> bool {
        self.latent_eps.is_some() && self.latent_delta.is_some()
    }

    /// Writes `i,xi,eta[,eps,delta]` rows (1-based `i`).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        match (&self.latent_eps, &self.latent_delta) {
            (Some(e), Some(d)) => {
                writeln!(out, "i,xi,eta,eps,delta")?;
                for i in 0..self.n {
                    writeln!(out, "{},{},{},{},{}", i + 1, self.xi[i], self.eta[i], e[i], d[i])?;
                }
            }
            _ => {
                writeln!(out, "i,xi,eta")?;
                for i in 0..self.n {
                    writeln!(out, "{},{},{}", i + 1, self.xi[i], self.eta[i])?;
                }
            }
        }
        Ok(())
    }
}

pub fn draw_sample(
    spec: &EVModelSpec,
    design: &DesignSequence,
    n: usize,
    seed: u64,
    replicate: u64,
    retain_latents: bool,
) -> Result<EVSample> {
    let x = generate_design(design, n)?;
    draw_sample_on(spec, design, &x, seed, replicate, retain_latents)
}

/// As [`draw_sample`], reusing design values generated by the caller.
pub fn draw_sample_on(
    spec: &EVModelSpec,
    design: &DesignSequence,
    x: &[f64],
    seed: u64,
    replicate: u64,
    retain_latents: bool,
) -> Result<EVSample> {
    spec.validate()?;
    let n = x.len();
    if n < 2 {
        return Err(Error::TooShort { got: n, min: 2 });
    }
    let mut xi = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    let mut eps_all = retain_latents.then(|| Vec::with_capacity(n));
    let mut delta_all = retain_latents.then(|| Vec::with_capacity(n));
    for (i, &xv) in x.iter().enumerate() {
        let idx = i as u64 + 1;
        let eps = spec.eps.sample(&mut CounterRng::new(seed, replicate, stream::EPS, idx));
        let delta = spec.delta.sample(&mut CounterRng::new(seed, replicate, stream::DELTA, idx));
        xi.push(xv + delta);
        eta.push(spec.theta + spec.beta * xv + eps);
        if let Some(v) = eps_all.as_mut() {
            v.push(eps);
        }
        if let Some(v) = delta_all.as_mut() {
            v.push(delta);
        }
    }
    Ok(EVSample {
        n,
        design: *design,
        x: x.to_vec(),
        xi,
        eta,
        latent_eps: eps_all,
        latent_delta: delta_all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric;

    fn normal_spec(beta: f64) -> EVModelSpec {
        EVModelSpec::new(1.0, beta, ErrorDistribution::normal(1.0), ErrorDistribution::normal(1.0))
    }

    #[test]
    fn noiseless_sample_is_exact_line() {
        let spec = EVModelSpec::new(2.0, 3.0, ErrorDistribution::normal(0.0), ErrorDistribution::normal(0.0));
        let s = draw_sample(&spec, &DesignSequence::linear(1.0), 4, 1, 0, false).unwrap();
        assert_eq!(s.eta, vec![5.0, 8.0, 11.0, 14.0]);
        assert_eq!(s.xi, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn observable_regression_identity() {
        let spec = normal_spec(2.5);
        let s = draw_sample(&spec, &DesignSequence::linear(1.0), 200, 3, 9, true).unwrap();
        let e = s.latent_eps.as_ref().unwrap();
        let d = s.latent_delta.as_ref().unwrap();
        let worst = (0..s.n)
            .map(|i| (s.eta[i] - spec.theta - spec.beta * s.xi[i] - (e[i] - spec.beta * d[i])).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-12 * 1000.0_f64.max(1.0), "{worst}");
        for i in 0..s.n {
            assert_eq!(s.xi[i], s.x[i] + d[i]);
            assert_eq!(s.eta[i], spec.theta + spec.beta * s.x[i] + e[i]);
        }
    }

    #[test]
    fn draws_are_deterministic() {
        let spec = normal_spec(2.0);
        let d = DesignSequence::linear(1.0);
        let a = draw_sample(&spec, &d, 50, 42, 7, true).unwrap();
        let b = draw_sample(&spec, &d, 50, 42, 7, true).unwrap();
        assert_eq!(a, b);
        let c = draw_sample(&spec, &d, 50, 42, 8, true).unwrap();
        assert_ne!(a.xi, c.xi);
    }

    #[test]
    fn prefix_property_holds_for_samples() {
        let spec = normal_spec(2.0);
        let d = DesignSequence::linear(1.0);
        let short = draw_sample(&spec, &d, 20, 5, 1, false).unwrap();
        let long = draw_sample(&spec, &d, 40, 5, 1, false).unwrap();
        assert_eq!(short.xi[..], long.xi[..20]);
        assert_eq!(short.eta[..], long.eta[..20]);
    }

    #[test]
    fn nu_variance_examples() {
        let mut spec = normal_spec(0.0);
        spec.eps = ErrorDistribution::normal(1.7);
        assert!((spec.nu_variance() - 1.7 * 1.7).abs() < 1e-15);
        assert_eq!(normal_spec(2.0).nu_variance(), 5.0);
        let spec = EVModelSpec::new(0.0, 1.0, ErrorDistribution::normal(0.0), ErrorDistribution::normal(2.0));
        assert_eq!(spec.nu_variance(), 4.0);
    }

    #[test]
    fn nu_variance_by_monte_carlo() {
        // Independent oracle: 10^6 draws of ε − βδ.
        let spec = normal_spec(2.0);
        let nu = spec.composite_error();
        let m = 1_000_000;
        let draws: Vec<f64> = (0..m)
            .map(|i| nu.sample(&mut CounterRng::new(11, 0, 99, i as u64)))
            .collect();
        let v = numeric::sample_variance(&draws);
        // se of a normal sample variance: V sqrt(2/(m-1))
        let se = 5.0 * (2.0 / (m as f64 - 1.0)).sqrt();
        assert!((v - 5.0).abs() < 3.0 * se, "{v}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = normal_spec(1.0);
        spec.alpha = 0.0;
        assert!(spec.validate().is_err());
        spec.alpha = 3.5;
        spec.delta = ErrorDistribution::new(Family::StudentT { dof: 5.0 }, 1.0).unwrap();
        assert!(matches!(spec.validate(), Err(Error::MomentDoesNotExist { .. })));
        spec.alpha = 1.0;
        assert!(spec.validate().is_ok());
        spec.theta = f64::NAN;
        assert!(spec.validate().is_err());
        assert!(draw_sample(&normal_spec(1.0), &DesignSequence::linear(1.0), 1, 0, 0, false).is_err());
    }

    #[test]
    fn composite_tail_routes_agree_with_total_variance() {
        let dists = [
            ErrorDistribution::normal(1.0),
            ErrorDistribution::new(Family::UniformCentered, 1.5).unwrap(),
            ErrorDistribution::new(Family::Laplace, 0.8).unwrap(),
            ErrorDistribution::new(Family::StudentT { dof: 7.0 }, 1.0).unwrap(),
            ErrorDistribution::new(Family::ScaledRademacher, 1.2).unwrap(),
        ];
        for e in dists {
            for d in dists {
                let nu = CompositeError { eps: e, delta: d, beta: 1.3 };
                match nu.tail_second_moment(0.0) {
                    Ok(v) => assert!(
                        (v - nu.variance()).abs() < 1e-8 * nu.variance(),
                        "{e} {d}: {v} vs {}",
                        nu.variance()
                    ),
                    Err(Error::Unsupported(_)) => {
                        assert!(matches!(e.family, Family::StudentT { .. }));
                        assert!(matches!(d.family, Family::StudentT { .. }));
                    }
                    Err(other) => panic!("{other}"),
                }
            }
        }
    }

    #[test]
    fn composite_tail_matches_monte_carlo() {
        let nu = CompositeError {
            eps: ErrorDistribution::new(Family::Laplace, 1.0).unwrap(),
            delta: ErrorDistribution::new(Family::UniformCentered, 1.0).unwrap(),
            beta: 2.0,
        };
        let t = 2.0;
        let exact = nu.tail_second_moment(t).unwrap();
        let m = 400_000;
        let g: Vec<f64> = (0..m)
            .map(|i| {
                let v = nu.sample(&mut CounterRng::new(5, 0, 77, i));
                if v.abs() > t { v * v } else { 0.0 }
            })
            .collect();
        let mean = numeric::mean(&g);
        let se = (numeric::sample_variance(&g) / m as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * se, "{exact} vs {mean} ± {se}");
    }

    #[test]
    fn bounded_composite_has_zero_tail_beyond_support() {
        let nu = CompositeError {
            eps: ErrorDistribution::new(Family::UniformCentered, 1.0).unwrap(),
            delta: ErrorDistribution::new(Family::ScaledRademacher, 0.5).unwrap(),
            beta: 2.0,
        };
        assert_eq!(nu.support_bound(), Some(2.0));
        assert_eq!(nu.tail_second_moment(2.0).unwrap(), 0.0);
        assert!(nu.tail_second_moment(1.9).unwrap() > 0.0);
    }

    #[test]
    fn csv_export() {
        let spec = normal_spec(1.0);
        let s = draw_sample(&spec, &DesignSequence::linear(1.0), 3, 1, 0, true).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,xi,eta,eps,delta\n1,"));
        assert_eq!(text.lines().count(), 4);
    }
}
