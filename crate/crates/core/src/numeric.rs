//! Small numerical helpers shared across modules.

use statrs::function::erf::{erfc, erfc_inv};

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// Corrected two-pass mean: a compensated first pass followed by one
/// refinement step using the compensated residual sum.
pub fn mean(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m0 = compensated_sum(x.iter().copied()) / n;
    m0 + compensated_sum(x.iter().map(|&v| v - m0)) / n
}

/// Sum of squared deviations from the mean, two-pass and compensated.
pub fn centered_ss(x: &[f64], mean: f64) -> f64 {
    compensated_sum(x.iter().map(|&v| {
        let d = v - mean;
        d * d
    }))
}

/// Centered cross product Σ (x_i - mx) (y_i - my).
pub fn centered_cross(x: &[f64], mx: f64, y: &[f64], my: f64) -> f64 {
    compensated_sum(x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)))
}

/// Σ (x_i - mx) y_i, the form used by several decomposition terms.
pub fn centered_dot(x: &[f64], mx: f64, y: &[f64]) -> f64 {
    compensated_sum(x.iter().zip(y).map(|(&a, &b)| (a - mx) * b))
}

pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    centered_ss(x, m) / (x.len() as f64 - 1.0)
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF via `erfc`, accurate in both tails.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper tail P(Z > z).
#[inline]
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}
