use std::fmt;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numeric::{normal_pdf, normal_sf};
use crate::quadrature::{integrate, Tolerance};
use crate::rng::open_unit;

/// Symmetric, zero-mean error families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `scale` is the standard deviation.
    Normal,
    /// Uniform on `[-scale, scale]`.
    UniformCentered,
    /// Density `exp(-|x|/scale) / (2 scale)`.
    Laplace,
    /// `scale * T_dof`, dof > 4.
    StudentT { dof: f64 },
    /// `+scale` or `-scale` with probability 1/2 each.
    ScaledRademacher,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::UniformCentered => "uniform-centered",
            Family::Laplace => "laplace",
            Family::StudentT { .. } => "student-t",
            Family::ScaledRademacher => "scaled-rademacher",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct ErrorDistribution {
    pub family: Family,
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    family: String,
    scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dof: Option<f64>,
}

impl TryFrom<RawDistribution> for ErrorDistribution {
    type Error = Error;
    fn try_from(raw: RawDistribution) -> Result<Self> {
        let family = match (raw.family.as_str(), raw.dof) {
            ("student-t", Some(dof)) => Family::StudentT { dof },
            ("student-t", None) => {
                return Err(Error::InvalidParameter("student-t requires `dof`".into()))
            }
            (_, Some(_)) => {
                return Err(Error::InvalidParameter(format!(
                    "`dof` is only valid for student-t, not `{}`",
                    raw.family
                )))
            }
            ("normal", None) => Family::Normal,
            ("uniform-centered", None) => Family::UniformCentered,
            ("laplace", None) => Family::Laplace,
            ("scaled-rademacher", None) => Family::ScaledRademacher,
            (other, None) => {
                return Err(Error::Unknown {
                    what: "error family",
                    name: other.to_string(),
                })
            }
        };
        let d = ErrorDistribution { family, scale: raw.scale };
        d.validate()?;
        Ok(d)
    }
}

impl From<ErrorDistribution> for RawDistribution {
    fn from(d: ErrorDistribution) -> Self {
        RawDistribution {
            family: d.family.name().to_string(),
            scale: d.scale,
            dof: match d.family {
                Family::StudentT { dof } => Some(dof),
                _ => None,
            },
        }
    }
}

impl fmt::Display for ErrorDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::StudentT { dof } => write!(f, "student-t(dof={dof}, scale={})", self.scale),
            fam => write!(f, "{}(scale={})", fam.name(), self.scale),
        }
    }
}

fn is_small_int(p: f64) -> bool {
    p.fract() == 0.0 && p <= 32.0
}

fn binomial(k: u32, j: u32) -> f64 {
    (0..j).fold(1.0, |acc, m| acc * (k - m) as f64 / (m + 1) as f64)
}

/// `∫_t^∞ y^k e^{-y} dy = e^{-t} Σ_{j≤k} k!/j! t^j`
fn upper_gamma_int(k: u32, t: f64) -> f64 {
    if t == f64::INFINITY {
        return 0.0;
    }
    // t^k + k t^{k-1} + k(k-1) t^{k-2} + ... + k!
    let mut term = 1.0;
    let mut acc = 0.0;
    for j in (0..=k).rev() {
        acc += term * t.powi(j as i32);
        term *= j as f64;
    }
    (-t).exp() * acc
}

impl ErrorDistribution {
    pub fn new(family: Family, scale: f64) -> Result<Self> {
        let d = Self { family, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn normal(scale: f64) -> Self {
        Self { family: Family::Normal, scale }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{} scale must be finite and >= 0, got {}",
                self.family.name(),
                self.scale
            )));
        }
        if let Family::StudentT { dof } = self.family {
            if !(dof.is_finite() && dof > 4.0) {
                return Err(Error::InvalidParameter(format!(
                    "student-t dof must be > 4, got {dof}"
                )));
            }
        }
        Ok(())
    }

    /// Same family, scale multiplied by `factor >= 0`. For these symmetric
    /// families this is the law of `±factor * X`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            family: self.family,
            scale: self.scale * factor.abs(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.scale == 0.0
    }

    pub fn is_discrete(&self) -> bool {
        self.is_degenerate() || matches!(self.family, Family::ScaledRademacher)
    }

    /// Whether `partial_moment` has a closed form (no quadrature needed).
    pub fn has_closed_form_partials(&self) -> bool {
        self.is_degenerate() || !matches!(self.family, Family::StudentT { .. })
    }

    /// Radius of the support, if bounded.
    pub fn support_bound(&self) -> Option<f64> {
        if self.is_degenerate() {
            return Some(0.0);
        }
        match self.family {
            Family::UniformCentered | Family::ScaledRademacher => Some(self.scale),
            _ => None,
        }
    }

    pub fn variance(&self) -> f64 {
        let s2 = self.scale * self.scale;
        match self.family {
            Family::Normal | Family::ScaledRademacher => s2,
            Family::UniformCentered => s2 / 3.0,
            Family::Laplace => 2.0 * s2,
            Family::StudentT { dof } => s2 * dof / (dof - 2.0),
        }
    }

    /// `E|X|^p` in closed form.
    pub fn abs_moment(&self, p: f64) -> Result<f64> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidParameter(format!("moment order must be >= 0, got {p}")));
        }
        if let Family::StudentT { dof } = self.family {
            if p >= dof {
                return Err(Error::MomentDoesNotExist {
                    family: self.to_string(),
                    order: p,
                });
            }
        }
        if p == 0.0 {
            return Ok(1.0);
        }
        if self.is_degenerate() {
            return Ok(0.0);
        }
        let sp = self.scale.powf(p);
        let v = match self.family {
            Family::Normal if is_small_int(p) => {
                // (p-1)!!, times sqrt(2/π) for odd p
                let k = p as u32;
                let dfact = (1..k).rev().step_by(2).fold(1.0, |acc, j| acc * j as f64);
                if k % 2 == 0 {
                    dfact
                } else {
                    dfact * (2.0 / std::f64::consts::PI).sqrt()
                }
            }
            Family::Normal => {
                // 2^{p/2} Γ((p+1)/2) / √π
                (0.5 * p * std::f64::consts::LN_2 + ln_gamma(0.5 * (p + 1.0))
                    - 0.5 * std::f64::consts::PI.ln())
                .exp()
            }
            Family::UniformCentered => 1.0 / (p + 1.0),
            Family::Laplace if is_small_int(p) => (1..=p as u32).fold(1.0, |acc, j| acc * j as f64),
            Family::Laplace => ln_gamma(p + 1.0).exp(),
            Family::StudentT { dof } => (0.5 * p * dof.ln() + ln_gamma(0.5 * (p + 1.0))
                + ln_gamma(0.5 * (dof - p))
                - 0.5 * std::f64::consts::PI.ln()
                - ln_gamma(0.5 * dof))
            .exp(),
            Family::ScaledRademacher => 1.0,
        };
        Ok(sp * v)
    }

    /// `E X^order` (or `E|X|^order` when `absolute`), `order >= 1`.
    pub fn moment(&self, order: f64, absolute: bool) -> Result<f64> {
        if !(order.is_finite() && order >= 1.0) {
            return Err(Error::InvalidParameter(format!("moment order must be >= 1, got {order}")));
        }
        let m = self.abs_moment(order)?;
        if absolute {
            return Ok(m);
        }
        if order.fract() != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "signed moment of non-integer order {order} is undefined"
            )));
        }
        // all families are symmetric
        Ok(if (order as u64) % 2 == 1 { 0.0 } else { m })
    }

    /// Density for continuous, non-degenerate laws.
    pub fn density(&self, x: f64) -> Option<f64> {
        if self.is_discrete() {
            return None;
        }
        let s = self.scale;
        Some(match self.family {
            Family::Normal => normal_pdf(x / s) / s,
            Family::UniformCentered => {
                if x.abs() <= s {
                    0.5 / s
                } else {
                    0.0
                }
            }
            Family::Laplace => (-(x.abs()) / s).exp() / (2.0 * s),
            Family::StudentT { dof } => {
                let z = x / s;
                let log_c = ln_gamma(0.5 * (dof + 1.0))
                    - ln_gamma(0.5 * dof)
                    - 0.5 * (dof * std::f64::consts::PI).ln();
                (log_c - 0.5 * (dof + 1.0) * (z * z / dof).ln_1p()).exp() / s
            }
            Family::ScaledRademacher => unreachable!("discrete"),
        })
    }

    /// `E|X|^p` by quadrature over the density; an independent route used to
    /// cross-check [`abs_moment`](Self::abs_moment).
    pub fn abs_moment_by_quadrature(&self, p: f64) -> Result<f64> {
        if self.is_discrete() {
            return self.abs_moment(p);
        }
        let upper = self.support_bound().unwrap_or(f64::INFINITY);
        let est = integrate(
            |x| x.powf(p) * self.density(x).unwrap_or(0.0),
            0.0,
            upper,
            Tolerance { abs: 1e-14, rel: 1e-11 },
        )?;
        Ok(2.0 * est.value)
    }

    /// `∫ x^k dF` over the open interval `(lo, hi)`, `k <= 4`.
    pub fn partial_moment(&self, k: u32, lo: f64, hi: f64) -> Result<f64> {
        if lo >= hi {
            return Ok(0.0);
        }
        if self.is_degenerate() {
            return Ok(if lo < 0.0 && 0.0 < hi { if k == 0 { 1.0 } else { 0.0 } } else { 0.0 });
        }
        let s = self.scale;
        let v = match self.family {
            Family::Normal => s.powi(k as i32) * std_normal_partial(k, lo / s, hi / s),
            Family::UniformCentered => {
                let l = lo.max(-s);
                let h = hi.min(s);
                if l >= h {
                    0.0
                } else {
                    let e = (k + 1) as i32;
                    (h.powi(e) - l.powi(e)) / ((k + 1) as f64 * 2.0 * s)
                }
            }
            Family::Laplace => {
                let sk = s.powi(k as i32);
                let mut acc = 0.0;
                // positive half
                let p = lo.max(0.0);
                if hi > p {
                    acc += 0.5 * sk * (upper_gamma_int(k, p / s) - upper_gamma_int(k, hi / s));
                }
                // negative half, mirrored: y = -x on (-min(hi,0), -lo)
                let q = hi.min(0.0);
                if q > lo {
                    let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
                    acc += sign
                        * 0.5
                        * sk
                        * (upper_gamma_int(k, -q / s) - upper_gamma_int(k, -lo / s));
                }
                acc
            }
            Family::StudentT { .. } => {
                integrate(
                    |x| x.powi(k as i32) * self.density(x).unwrap_or(0.0),
                    lo,
                    hi,
                    Tolerance { abs: 1e-13, rel: 1e-11 },
                )?
                .value
            }
            Family::ScaledRademacher => [s, -s]
                .iter()
                .filter(|&&a| lo < a && a < hi)
                .map(|&a| 0.5 * a.powi(k as i32))
                .sum(),
        };
        Ok(v)
    }

    /// `E[X^k 1{|X| < c}]`.
    pub fn body_moment(&self, k: u32, c: f64) -> Result<f64> {
        self.partial_moment(k, -c, c)
    }

    /// `E[X^k 1{|X| > c}]`.
    pub fn tail_moment(&self, k: u32, c: f64) -> Result<f64> {
        Ok(self.partial_moment(k, c, f64::INFINITY)? + self.partial_moment(k, f64::NEG_INFINITY, -c)?)
    }

    /// `E[(X + shift)^k 1{|X + shift| > t}]`, expanded binomially over the
    /// half-line partial moments of `X`.
    pub fn shifted_tail_moment(&self, k: u32, shift: f64, t: f64) -> Result<f64> {
        let mut acc = 0.0;
        for j in 0..=k {
            let w = binomial(k, j) * shift.powi((k - j) as i32);
            if w == 0.0 {
                continue;
            }
            let pm = self.partial_moment(j, t - shift, f64::INFINITY)?
                + self.partial_moment(j, f64::NEG_INFINITY, -t - shift)?;
            acc += w * pm;
        }
        // The expansion can leave a tiny negative residue from cancellation.
        Ok(acc.max(0.0))
    }

    pub fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        let s = self.scale;
        match self.family {
            Family::Normal => {
                let z: f64 = StandardNormal.sample(rng);
                s * z
            }
            Family::UniformCentered => s * (2.0 * open_unit(rng) - 1.0),
            Family::Laplace => {
                let u = open_unit(rng) - 0.5;
                -s * u.signum() * (-2.0 * u.abs()).ln_1p()
            }
            Family::StudentT { dof } => {
                let t = StudentT::new(dof).expect("dof validated");
                s * t.sample(rng)
            }
            Family::ScaledRademacher => {
                if rng.next_u64() >> 63 == 1 {
                    s
                } else {
                    -s
                }
            }
        }
    }
}

/// `∫_u^v z^k φ(z) dz` for the standard normal, computed with tail-accurate
/// CDF differences and the recurrence
/// `M_k = (k-1) M_{k-2} + u^{k-1} φ(u) - v^{k-1} φ(v)`.
fn std_normal_partial(k: u32, u: f64, v: f64) -> f64 {
    let mass = if u >= 0.0 {
        normal_sf(u) - normal_sf(v)
    } else if v <= 0.0 {
        normal_sf(-v) - normal_sf(-u)
    } else {
        1.0 - normal_sf(-u) - normal_sf(v)
    };
    let edge = |t: f64, j: u32| -> f64 {
        if t.is_infinite() {
            0.0
        } else {
            t.powi(j as i32) * normal_pdf(t)
        }
    };
    let m1 = edge(u, 0) - edge(v, 0);
    if k == 0 {
        return mass;
    }
    let (mut prev, mut cur) = (mass, m1);
    for j in 2..=k {
        let next = (j - 1) as f64 * prev + edge(u, j - 1) - edge(v, j - 1);
        prev = cur;
        cur = next;
    }
    cur
}
