//! Positive-definite kernels on the response space and the centered
//! four-term kernel H that every statistic in this crate averages.

use crate::data::{PairedDataset, ResponseMatrix};
use crate::error::{Error, Result};

/// Kernel on response points.
///
/// The Gaussian kernel is `exp(-||x - y||^2 / lambda^2)` — note there is
/// no factor of 2 in the exponent denominator; conventions vary and this
/// crate follows the one-over-lambda-squared form throughout.
///
/// With one-hot encoded class labels the linear kernel reduces to the
/// indicator kernel 1{class equal}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    Linear,
    Gaussian { bandwidth: f64 },
}

impl Kernel {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::invalid(format!(
                "Gaussian bandwidth must be a positive real, got {bandwidth}"
            )));
        }
        Ok(Kernel::Gaussian { bandwidth })
    }

    /// Evaluate K(x, y).
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Hot-path evaluation; callers validate dimensions once up front.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match *self {
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            Kernel::Gaussian { bandwidth } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (bandwidth * bandwidth)).exp()
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Kernel::Linear => "linear",
            Kernel::Gaussian { .. } => "gaussian",
        }
    }

    pub fn bandwidth(&self) -> Option<f64> {
        match self {
            Kernel::Linear => None,
            Kernel::Gaussian { bandwidth } => Some(*bandwidth),
        }
    }
}

/// Centered kernel of paired points,
/// H((x, y), (x', y')) = K(x,x') + K(y,y') - K(x,y') - K(x',y).
///
/// Equals the RKHS inner product of the embedding differences
/// <K(x,·)-K(y,·), K(x',·)-K(y',·)>, hence H(w, w) >= 0 and H is
/// symmetric in its two pair arguments.
pub fn centered_h(kern: &Kernel, x1: &[f64], y1: &[f64], x2: &[f64], y2: &[f64]) -> Result<f64> {
    let p = x1.len();
    for other in [y1, x2, y2] {
        if other.len() != p {
            return Err(Error::DimensionMismatch {
                left: p,
                right: other.len(),
            });
        }
    }
    Ok(centered_h_unchecked(kern, x1, y1, x2, y2))
}

#[inline]
pub(crate) fn centered_h_unchecked(
    kern: &Kernel,
    x1: &[f64],
    y1: &[f64],
    x2: &[f64],
    y2: &[f64],
) -> f64 {
    // Grouped as (same-role terms) - (cross terms) so that swapping the
    // two pairs reproduces the same floating-point value exactly.
    (kern.eval_unchecked(x1, x2) + kern.eval_unchecked(y1, y2))
        - (kern.eval_unchecked(x1, y2) + kern.eval_unchecked(x2, y1))
}

fn paired_distances(x: &ResponseMatrix, y: &ResponseMatrix) -> Vec<f64> {
    x.rows()
        .zip(y.rows())
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Median heuristic bandwidth: the median of the paired distances
/// ||X_i - Y_i||. When that median is zero (possible with discrete or
/// duplicated responses) the smallest strictly positive distance is used
/// instead; if every pair coincides the bandwidth is undefined.
pub fn median_bandwidth(data: &PairedDataset) -> Result<f64> {
    median_bandwidth_pair(&data.x, &data.y)
}

/// Median heuristic over an explicit pair of aligned response matrices.
pub fn median_bandwidth_pair(x: &ResponseMatrix, y: &ResponseMatrix) -> Result<f64> {
    if x.len() != y.len() || x.dim() != y.dim() {
        return Err(Error::SizeMismatch {
            what: "bandwidth sample pair",
            left: x.len(),
            right: y.len(),
        });
    }
    let mut dist = paired_distances(x, y);
    dist.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = dist.len();
    let median = if n % 2 == 1 {
        dist[n / 2]
    } else {
        0.5 * (dist[n / 2 - 1] + dist[n / 2])
    };
    if median > 0.0 {
        return Ok(median);
    }
    match dist.iter().copied().find(|&d| d > 0.0) {
        Some(d) => Ok(d),
        None => Err(Error::DegenerateData(
            "all paired distances are zero; median bandwidth undefined".into(),
        )),
    }
}

/// Bandwidth selection for Gaussian kernels: a fixed value or the median
/// heuristic resolved against the data at hand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BandwidthSpec {
    Fixed(f64),
    Median,
}

/// Kernel choice before data is seen. `resolve` turns it into a concrete
/// [`Kernel`], computing the median heuristic when requested.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    Linear,
    Gaussian(BandwidthSpec),
}

impl KernelSpec {
    pub fn resolve(&self, x: &ResponseMatrix, y: &ResponseMatrix) -> Result<Kernel> {
        match self {
            KernelSpec::Linear => Ok(Kernel::Linear),
            KernelSpec::Gaussian(BandwidthSpec::Fixed(bw)) => Kernel::gaussian(*bw),
            KernelSpec::Gaussian(BandwidthSpec::Median) => {
                Kernel::gaussian(median_bandwidth_pair(x, y)?)
            }
        }
    }

    /// Resolve without data; errors if the spec needs the median heuristic.
    pub fn resolve_fixed(&self) -> Result<Kernel> {
        match self {
            KernelSpec::Linear => Ok(Kernel::Linear),
            KernelSpec::Gaussian(BandwidthSpec::Fixed(bw)) => Kernel::gaussian(*bw),
            KernelSpec::Gaussian(BandwidthSpec::Median) => Err(Error::invalid(
                "median bandwidth requires paired response data",
            )),
        }
    }
}
