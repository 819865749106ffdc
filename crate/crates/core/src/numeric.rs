//! Shared numeric helpers: compensated summation and Gaussian tail areas.

use statrs::function::erf::erfc;

/// Neumaier-compensated accumulator.
///
/// All edge sums in this crate accumulate through this type in a fixed
/// order (neighbors within a vertex, then vertices by index), which makes
/// the statistics bit-reproducible across runs and thread counts.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Standard Gaussian CDF Φ(z).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided tail area 2(1 − Φ(|z|)), computed as erfc(|z|/√2) to avoid
/// cancellation in the far tails.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// One-sided upper tail area 1 − Φ(z).
pub fn upper_tail_p(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}
