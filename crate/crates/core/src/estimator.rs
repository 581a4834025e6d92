//! Least-squares fit of `η` on `ξ`, the exact decomposition of `β̂_n − β`,
//! and the standardized statistics.
//!
//! All sums are two-pass and centered; raw-moment shortcuts lose every
//! significant digit once `S_n` reaches the `1e12` range.

use serde::{Deserialize, Serialize};

use crate::design::DesignSummary;
use crate::error::{Error, Result};
use crate::model::{EVModelSpec, EVSample};
use crate::numeric::{self, centered_cross, centered_dot, centered_ss, compensated_sum};

/// Relative cancellation floor for the observed dispersion.
pub const SINGULAR_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta_hat: f64,
    pub theta_hat: f64,
    /// `Σ (ξ_i − ξ̄_n)²`
    pub sxx_obs: f64,
    /// Mean squared residual (divisor `n`), a plug-in for `Var(ν)`.
    pub residual_var: f64,
    pub n: usize,
}

pub fn fit(sample: &EVSample) -> Result<FitResult> {
    fit_xy(&sample.xi, &sample.eta)
}

/// Ordinary least squares of `eta` on `xi` with intercept.
pub fn fit_xy(xi: &[f64], eta: &[f64]) -> Result<FitResult> {
    let n = xi.len();
    if n < 2 || eta.len() != n {
        return Err(Error::TooShort { got: n.min(eta.len()), min: 2 });
    }
    if let Some(index) = xi.iter().chain(eta).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: index % n });
    }
    let xi_bar = numeric::mean(xi);
    let eta_bar = numeric::mean(eta);
    let sxx = centered_ss(xi, xi_bar);
    let threshold = SINGULAR_THRESHOLD * n as f64 * xi_bar.powi(2).max(1.0);
    if !(sxx >= threshold && sxx > 0.0) {
        return Err(Error::SingularDesign { sxx, threshold });
    }
    let beta_hat = centered_cross(xi, xi_bar, eta, eta_bar) / sxx;
    let theta_hat = eta_bar - beta_hat * xi_bar;
    let rss = compensated_sum(xi.iter().zip(eta).map(|(&x, &y)| {
        let r = y - theta_hat - beta_hat * x;
        r * r
    }));
    Ok(FitResult {
        beta_hat,
        theta_hat,
        sxx_obs: sxx,
        residual_var: rss / n as f64,
        n,
    })
}

/// The latent-error terms of `β̂_n − β`.
///
/// Two algebraically equivalent forms:
///
/// ```text
/// β̂ − β = [Σ(ξ−ξ̄)ε − βΣ(x−x̄)δ − βΣ(δ−δ̄)²] / Σ(ξ−ξ̄)²          (observed form)
/// β̂ − β = [Σ(δ−δ̄)ε + Σ(x−x̄)(ε−βδ) − βΣ(δ−δ̄)²] / Σ(ξ−ξ̄)²      (latent form)
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub term_xi_eps: f64,
    pub term_x_delta: f64,
    pub term_delta_sq: f64,
    pub term_delta_eps: f64,
    pub term_x_nu: f64,
    pub sxx_obs: f64,
    /// `Σ (δ_i − δ̄_n)²`, kept separately so it survives `β = 0`.
    pub delta_ss: f64,
}

impl Decomposition {
    pub fn error_observed_form(&self) -> f64 {
        (self.term_xi_eps - self.term_x_delta - self.term_delta_sq) / self.sxx_obs
    }

    pub fn error_latent_form(&self) -> f64 {
        (self.term_delta_eps + self.term_x_nu - self.term_delta_sq) / self.sxx_obs
    }

    /// Residuals of both identities against a direct fit, scaled by the
    /// magnitude of the slope: `|β̂ − (β + form)| / max(|β̂|, |β|)`.
    pub fn identity_residuals(&self, fit: &FitResult, beta: f64) -> (f64, f64) {
        let scale = fit.beta_hat.abs().max(beta.abs()).max(f64::MIN_POSITIVE);
        let r10 = (fit.beta_hat - (beta + self.error_observed_form())).abs() / scale;
        let r13 = (fit.beta_hat - (beta + self.error_latent_form())).abs() / scale;
        (r10, r13)
    }
}

pub fn decompose(sample: &EVSample, spec: &EVModelSpec, summary: &DesignSummary) -> Result<Decomposition> {
    let (eps, delta) = match (&sample.latent_eps, &sample.latent_delta) {
        (Some(e), Some(d)) => (e.as_slice(), d.as_slice()),
        _ => return Err(Error::MissingLatents),
    };
    if summary.n != sample.n {
        return Err(Error::InvalidParameter(format!(
            "summary is for n = {}, sample has n = {}",
            summary.n, sample.n
        )));
    }
    let beta = spec.beta;
    let x_bar = summary.mean;
    let xi_bar = numeric::mean(&sample.xi);
    let delta_bar = numeric::mean(delta);
    let delta_ss = centered_ss(delta, delta_bar);
    let term_x_nu = compensated_sum(
        sample
            .x
            .iter()
            .zip(eps.iter().zip(delta))
            .map(|(&x, (&e, &d))| (x - x_bar) * (e - beta * d)),
    );
    Ok(Decomposition {
        term_xi_eps: centered_dot(&sample.xi, xi_bar, eps),
        term_x_delta: beta * centered_dot(&sample.x, x_bar, delta),
        term_delta_sq: beta * delta_ss,
        term_delta_eps: centered_dot(delta, delta_bar, eps),
        term_x_nu,
        sxx_obs: centered_ss(&sample.xi, xi_bar),
        delta_ss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarianceSource {
    /// `Var(ε − βδ)` from the model.
    #[serde(rename = "true")]
    True,
    /// The fit's mean squared residual.
    #[serde(rename = "plug-in")]
    PlugIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizedStats {
    /// `√S_n (β̂_n − β) / √V`
    pub z_beta: f64,
    /// `√n (θ̂_n − θ) / √V`
    pub z_theta: f64,
    pub used_variance: f64,
    pub variance_source: VarianceSource,
}

/// Standardizes the fit. With the true source and a noiseless model
/// (`V = 0`) both statistics are defined as 0, the degenerate limit law.
pub fn standardize(
    fit: &FitResult,
    spec: &EVModelSpec,
    summary: &DesignSummary,
    source: VarianceSource,
) -> Result<StandardizedStats> {
    if summary.n != fit.n {
        return Err(Error::InvalidParameter(format!(
            "summary is for n = {}, fit has n = {}",
            summary.n, fit.n
        )));
    }
    let v = match source {
        VarianceSource::True => spec.nu_variance(),
        VarianceSource::PlugIn => {
            if !(fit.residual_var > 0.0) {
                return Err(Error::ZeroVariance);
            }
            fit.residual_var
        }
    };
    let (z_beta, z_theta) = if v == 0.0 {
        (0.0, 0.0)
    } else {
        let sd = v.sqrt();
        (
            summary.s_n.sqrt() * (fit.beta_hat - spec.beta) / sd,
            (fit.n as f64).sqrt() * (fit.theta_hat - spec.theta) / sd,
        )
    };
    Ok(StandardizedStats {
        z_beta,
        z_theta,
        used_variance: v,
        variance_source: source,
    })
}

/// The three quantities that must vanish in probability for the slope CLT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegligibleRatios {
    /// `Σ(δ−δ̄)² / √S_n`
    pub delta_dispersion: f64,
    /// `|Σ(δ−δ̄)ε| / √S_n`
    pub delta_eps_cross: f64,
    /// `|Σ(ξ−ξ̄)² / S_n − 1|`
    pub dispersion_gap: f64,
}

pub fn negligible_ratios(decomp: &Decomposition, summary: &DesignSummary) -> Result<NegligibleRatios> {
    if !(summary.s_n > 0.0) {
        return Err(Error::ZeroDispersion);
    }
    let root = summary.s_n.sqrt();
    Ok(NegligibleRatios {
        delta_dispersion: decomp.delta_ss / root,
        delta_eps_cross: decomp.term_delta_eps.abs() / root,
        dispersion_gap: (decomp.sxx_obs / summary.s_n - 1.0).abs(),
    })
}
