//! Model-X style conditional goodness-of-fit tests.
//!
//! Given pairs (Y_i, Z_i) and sampling access to a specified conditional
//! law P_{X|Z}, two tests are provided:
//!
//! * the finite-sample exchangeable test — M + 1 i.i.d. draws per unit,
//!   statistics η^(1..M+1) on a shared K-NN graph, and the rank p-value
//!   p_M = (1 + #{m ≤ M : η^(m) ≥ η^(M+1)}) / (M + 1);
//! * the derandomized test — H averaged over M_n resamples per edge
//!   (statistic D_n, studentizer τ̂_n), with a Gaussian null calibration.
//!
//! Every (unit, slot) pair draws from its own counter stream derived from
//! the master seed, so results do not depend on evaluation order and
//! distinct slots are independent, which the exchangeability argument
//! needs.

use crate::data::{CovariateSet, ResponseMatrix};
use crate::error::{Error, Result};
use crate::estimator::{check_alpha, edge_sums_pairs};
use crate::kernels::{centered_h_unchecked, median_bandwidth_pair, BandwidthSpec, Kernel, KernelSpec};
use crate::knn::{build_knn_graph, KnnGraph};
use crate::numeric::{two_sided_p, KahanSum};
use crate::rng::unit_slot_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Source of draws from the specified conditional distribution P_{X|Z=z}.
///
/// Implementations must depend only on `z` and the supplied RNG stream;
/// the engine hands every (unit, slot) its own stream, and may invoke the
/// sampler from multiple threads concurrently.
pub trait ConditionalSampler: Sync {
    /// Dimension of the generated response points.
    fn response_dim(&self) -> usize;

    /// Draw one sample from P_{X|Z=z} into `out` (length `response_dim`).
    fn sample_into(
        &self,
        z: &[f64],
        rng: &mut ChaCha8Rng,
        out: &mut [f64],
    ) -> std::result::Result<(), String>;
}

/// Gaussian conditional law with affine mean and a choice of scale rules.
#[derive(Clone, Debug)]
pub struct GaussianCondSampler {
    /// mean(z) = mean_coefs · z + mean_intercept.
    pub mean_coefs: Vec<f64>,
    pub mean_intercept: f64,
    pub sd: SdFn,
}

/// Conditional standard deviation for [`GaussianCondSampler`].
#[derive(Clone, Debug)]
pub enum SdFn {
    /// Constant standard deviation (zero makes the sampler deterministic).
    Const(f64),
    /// sd(z) = sqrt(z[index]); the covariate carries a variance column.
    VarCoord(usize),
    /// Variance bump along the affine mean index m(z):
    /// sd(z) = sqrt(1 + rho exp(-(m(z) - center)² / (2 scale²))).
    MeanBump { rho: f64, center: f64, scale: f64 },
}

impl GaussianCondSampler {
    fn sd_at(&self, z: &[f64], mean: f64) -> std::result::Result<f64, String> {
        match self.sd {
            SdFn::Const(s) => {
                if s < 0.0 {
                    Err(format!("negative standard deviation {s}"))
                } else {
                    Ok(s)
                }
            }
            SdFn::VarCoord(i) => {
                let var = *z
                    .get(i)
                    .ok_or_else(|| format!("variance coordinate {i} out of range"))?;
                if var <= 0.0 {
                    Err(format!("nonpositive variance {var} in covariate"))
                } else {
                    Ok(var.sqrt())
                }
            }
            SdFn::MeanBump { rho, center, scale } => {
                let delta = mean - center;
                Ok((1.0 + rho * (-delta * delta / (2.0 * scale * scale)).exp()).sqrt())
            }
        }
    }
}

impl ConditionalSampler for GaussianCondSampler {
    fn response_dim(&self) -> usize {
        1
    }

    fn sample_into(
        &self,
        z: &[f64],
        rng: &mut ChaCha8Rng,
        out: &mut [f64],
    ) -> std::result::Result<(), String> {
        if z.len() != self.mean_coefs.len() {
            return Err(format!(
                "covariate dimension {} does not match mean coefficients {}",
                z.len(),
                self.mean_coefs.len()
            ));
        }
        let mean: f64 = self
            .mean_coefs
            .iter()
            .zip(z)
            .map(|(c, v)| c * v)
            .sum::<f64>()
            + self.mean_intercept;
        let sd = self.sd_at(z, mean)?;
        out[0] = if sd == 0.0 {
            mean
        } else {
            Normal::new(mean, sd).map_err(|e| e.to_string())?.sample(rng)
        };
        Ok(())
    }
}

/// Multinomial conditional law: the covariate row is itself the
/// probability vector and the draw is its one-hot realization.
#[derive(Clone, Copy, Debug)]
pub struct MultinomialSampler {
    pub classes: usize,
}

impl ConditionalSampler for MultinomialSampler {
    fn response_dim(&self) -> usize {
        self.classes
    }

    fn sample_into(
        &self,
        z: &[f64],
        rng: &mut ChaCha8Rng,
        out: &mut [f64],
    ) -> std::result::Result<(), String> {
        if z.len() != self.classes {
            return Err(format!(
                "probability vector has {} entries, expected {}",
                z.len(),
                self.classes
            ));
        }
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut class = self.classes - 1;
        for (c, &p) in z.iter().enumerate() {
            if p < 0.0 {
                return Err(format!("negative class probability {p}"));
            }
            cum += p;
            if u < cum {
                class = c;
                break;
            }
        }
        out.fill(0.0);
        out[class] = 1.0;
        Ok(())
    }
}

/// Resample draws: `slots` responses per unit, laid out unit-major.
#[derive(Clone, Debug)]
pub struct DrawMatrix {
    data: Vec<f64>,
    n: usize,
    slots: usize,
    p: usize,
}

impl DrawMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, unit: usize, slot: usize) -> &[f64] {
        let start = (unit * self.slots + slot) * self.p;
        &self.data[start..start + self.p]
    }

    /// Copy one slot out as a contiguous response matrix.
    pub fn slot_matrix(&self, slot: usize) -> ResponseMatrix {
        let mut flat = Vec::with_capacity(self.n * self.p);
        for u in 0..self.n {
            flat.extend_from_slice(self.row(u, slot));
        }
        ResponseMatrix::from_flat(flat, self.n, self.p).expect("draws are finite")
    }

    /// Assemble a draw matrix from externally supplied resamples
    /// (`rows[u][m]` is the m-th resample for unit u).
    pub fn from_rows(rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::invalid("draw matrix needs at least one unit and slot"));
        }
        let slots = rows[0].len();
        let p = rows[0][0].len();
        let mut data = Vec::with_capacity(rows.len() * slots * p);
        for (u, unit_rows) in rows.iter().enumerate() {
            if unit_rows.len() != slots {
                return Err(Error::invalid(format!(
                    "unit {u} has {} resample slots, expected {slots}",
                    unit_rows.len()
                )));
            }
            for row in unit_rows {
                if row.len() != p {
                    return Err(Error::DimensionMismatch {
                        left: p,
                        right: row.len(),
                    });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("resample for unit {u}")));
                }
                data.extend_from_slice(row);
            }
        }
        Ok(Self {
            data,
            n: rows.len(),
            slots,
            p,
        })
    }
}

/// Draw `slots` i.i.d. samples from P_{X|Z=Z_u} for every unit, one
/// counter stream per (unit, slot).
pub fn generate_draws(
    z: &CovariateSet,
    sampler: &dyn ConditionalSampler,
    slots: usize,
    seed: u64,
) -> Result<DrawMatrix> {
    if slots == 0 {
        return Err(Error::invalid("resample slot count must be at least 1"));
    }
    let n = z.len();
    let p = sampler.response_dim();
    if p == 0 {
        return Err(Error::invalid("sampler response dimension must be positive"));
    }
    let mut data = vec![0.0f64; n * slots * p];
    let failures: Vec<(usize, String)> = data
        .par_chunks_mut(slots * p)
        .enumerate()
        .filter_map(|(u, unit_buf)| {
            let zu = z.row(u);
            for slot in 0..slots {
                let mut rng = unit_slot_rng(seed, u, slot);
                let out = &mut unit_buf[slot * p..(slot + 1) * p];
                if let Err(message) = sampler.sample_into(zu, &mut rng, out) {
                    return Some((u, message));
                }
            }
            None
        })
        .collect();
    if let Some((unit, message)) = failures.into_iter().min_by_key(|(u, _)| *u) {
        return Err(Error::Sampler { unit, message });
    }
    Ok(DrawMatrix {
        data,
        n,
        slots,
        p,
    })
}

/// Result of the finite-sample exchangeable test.
#[derive(Clone, Debug)]
pub struct FiniteSampleResult {
    /// Rank p-value; always an integer multiple of 1/(M+1).
    pub p_m: f64,
    /// η^(1), …, η^(M+1); the observed statistic is last.
    pub eta_values: Vec<f64>,
    pub m: usize,
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub kernel: Kernel,
}

impl FiniteSampleResult {
    pub fn reject(&self, alpha: f64) -> bool {
        self.p_m <= alpha
    }
}

fn validate_yz(y: &ResponseMatrix, z: &CovariateSet) -> Result<()> {
    if y.len() != z.len() {
        return Err(Error::SizeMismatch {
            what: "responses vs covariates",
            left: y.len(),
            right: z.len(),
        });
    }
    Ok(())
}

/// Resolve a kernel spec for resampling tests. The median heuristic is
/// computed from two dedicated resample slots that never enter the
/// statistics: the bandwidth then depends on the data only through Z, so
/// the exchangeability of the statistic slots — and with it the
/// finite-sample validity guarantee — survives data-driven bandwidths.
/// Under the null these reserved draws have the same conditional law as
/// (X, Y), so the scale matches the usual median-of-paired-distances rule.
fn resolve_resampling_kernel(
    spec: &KernelSpec,
    draws: &DrawMatrix,
    statistic_slots: usize,
) -> Result<Kernel> {
    match spec {
        KernelSpec::Gaussian(BandwidthSpec::Median) => {
            let a = draws.slot_matrix(statistic_slots);
            let b = draws.slot_matrix(statistic_slots + 1);
            Kernel::gaussian(median_bandwidth_pair(&a, &b)?)
        }
        other => other.resolve_fixed(),
    }
}

/// Finite-sample conditional goodness-of-fit test.
///
/// Draws M + 1 samples per unit, pairs W_u^(m) = (X_u^(M+1), X_u^(m)) for
/// m ≤ M and W_u^(M+1) = (X_u^(M+1), Y_u), computes every η^(m) on the
/// same K-NN graph of the covariates, and reports the rank p-value.
///
/// Note the pairing: every slot shares the (M+1)-th draw as its first
/// coordinate, and only the observed slot carries Y. This is not the
/// "obvious" variant pairing each resample with Y — that one is the
/// derandomized statistic's pairing — and the exchangeability of the
/// resulting η values is what makes p_M valid at any sample size.
pub fn finite_sample_test(
    y: &ResponseMatrix,
    z: &CovariateSet,
    sampler: &dyn ConditionalSampler,
    m: usize,
    kern: &KernelSpec,
    k: usize,
    seed: u64,
) -> Result<FiniteSampleResult> {
    if m < 1 {
        return Err(Error::invalid("finite-sample test needs m >= 1 resamples"));
    }
    validate_yz(y, z)?;
    if sampler.response_dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            left: sampler.response_dim(),
            right: y.dim(),
        });
    }
    let needs_median = matches!(kern, KernelSpec::Gaussian(BandwidthSpec::Median));
    let statistic_slots = m + 1;
    let total_slots = statistic_slots + if needs_median { 2 } else { 0 };
    let draws = generate_draws(z, sampler, total_slots, seed)?;
    let kernel = resolve_resampling_kernel(kern, &draws, statistic_slots)?;
    let graph = build_knn_graph(z, k)?;
    finite_sample_core(y, &draws, statistic_slots, &kernel, &graph, seed)
}

/// Finite-sample test on externally supplied draws (slots - 1 resamples
/// plus the shared first-coordinate draw in the last slot). The seed is
/// recorded in the result for bookkeeping only.
pub fn finite_sample_test_from_draws(
    y: &ResponseMatrix,
    z: &CovariateSet,
    draws: &DrawMatrix,
    kern: &Kernel,
    k: usize,
    seed: u64,
) -> Result<FiniteSampleResult> {
    validate_yz(y, z)?;
    if draws.n() != y.len() {
        return Err(Error::SizeMismatch {
            what: "draws vs responses",
            left: draws.n(),
            right: y.len(),
        });
    }
    if draws.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            left: draws.dim(),
            right: y.dim(),
        });
    }
    if draws.slots() < 2 {
        return Err(Error::invalid("finite-sample test needs at least two slots"));
    }
    let graph = build_knn_graph(z, k)?;
    finite_sample_core(y, draws, draws.slots(), kern, &graph, seed)
}

fn finite_sample_core(
    y: &ResponseMatrix,
    draws: &DrawMatrix,
    statistic_slots: usize,
    kernel: &Kernel,
    graph: &KnnGraph,
    seed: u64,
) -> Result<FiniteSampleResult> {
    let n = y.len();
    let k = graph.k();
    let nk = (n * k) as f64;
    let m = statistic_slots - 1;
    // Slot `m` (0-based last statistic slot) holds the shared first
    // coordinate X^(M+1) of Algorithm-style pairing.
    let eta_values: Vec<f64> = (0..statistic_slots)
        .into_par_iter()
        .map(|s| {
            let sums = edge_sums_pairs(
                n,
                |u| {
                    let first = draws.row(u, m);
                    let second = if s < m { draws.row(u, s) } else { y.row(u) };
                    (first, second)
                },
                kernel,
                graph,
            );
            nk.sqrt() * (sums.h / nk)
        })
        .collect();
    let observed = eta_values[m];
    // Ties count: the indicator is eta^(m) >= eta^(M+1).
    let count = eta_values[..m].iter().filter(|&&e| e >= observed).count();
    let p_m = (1 + count) as f64 / (m + 1) as f64;
    Ok(FiniteSampleResult {
        p_m,
        eta_values,
        m,
        seed,
        n,
        k,
        kernel: *kernel,
    })
}

/// Result of the derandomized test.
#[derive(Clone, Debug)]
pub struct DerandomizedResult {
    pub d_n: f64,
    pub tau_hat: f64,
    pub z_score: f64,
    pub p_value: f64,
    pub m_n: usize,
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub reject: bool,
    pub kernel: Kernel,
}

struct DerandSums {
    d_sum: f64,
    tau_sum: f64,
}

/// Edge sums of the per-edge resample means: Σ mean_m H and
/// Σ (mean_m H)² (1 + mutual). With a single slot the mean is the plain H
/// value and the accumulation order matches [`edge_sums_pairs`] exactly,
/// so D_n with M_n = 1 reproduces the point estimate bit for bit.
fn derand_edge_sums(
    y: &ResponseMatrix,
    draws: &DrawMatrix,
    m_n: usize,
    kern: &Kernel,
    g: &KnnGraph,
) -> DerandSums {
    let n = y.len();
    let per_vertex = |u: usize| -> (f64, f64) {
        let yu = y.row(u);
        let mut d_acc = KahanSum::new();
        let mut tau_acc = KahanSum::new();
        for &v in g.neighbor_row(u) {
            let v = v as usize;
            let yv = y.row(v);
            let mut h_acc = KahanSum::new();
            for s in 0..m_n {
                h_acc.add(centered_h_unchecked(
                    kern,
                    draws.row(u, s),
                    yu,
                    draws.row(v, s),
                    yv,
                ));
            }
            let mean = h_acc.value() / m_n as f64;
            d_acc.add(mean);
            let weight = if g.mutual_unchecked(u, v) { 2.0 } else { 1.0 };
            tau_acc.add(mean * mean * weight);
        }
        (d_acc.value(), tau_acc.value())
    };
    let partials: Vec<(f64, f64)> = if n * g.k() * m_n >= 1 << 14 {
        (0..n).into_par_iter().map(per_vertex).collect()
    } else {
        (0..n).map(per_vertex).collect()
    };
    let mut d_total = KahanSum::new();
    let mut tau_total = KahanSum::new();
    for (d, t) in partials {
        d_total.add(d);
        tau_total.add(t);
    }
    DerandSums {
        d_sum: d_total.value(),
        tau_sum: tau_total.value(),
    }
}

fn derandomized_prepare(
    y: &ResponseMatrix,
    z: &CovariateSet,
    sampler: &dyn ConditionalSampler,
    m_n: usize,
    kern: &KernelSpec,
    k: usize,
    seed: u64,
) -> Result<(DrawMatrix, Kernel, KnnGraph)> {
    if m_n < 1 {
        return Err(Error::invalid("derandomized test needs m_n >= 1 resamples"));
    }
    validate_yz(y, z)?;
    if sampler.response_dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            left: sampler.response_dim(),
            right: y.dim(),
        });
    }
    let needs_median = matches!(kern, KernelSpec::Gaussian(BandwidthSpec::Median));
    let total_slots = m_n + if needs_median { 2 } else { 0 };
    let draws = generate_draws(z, sampler, total_slots, seed)?;
    let kernel = resolve_resampling_kernel(kern, &draws, m_n)?;
    let graph = build_knn_graph(z, k)?;
    Ok((draws, kernel, graph))
}

/// Derandomized statistic D_n: H averaged over M_n resamples per edge,
/// consistent for the population ECMMD² whatever M_n is.
pub fn derandomized_estimate(
    y: &ResponseMatrix,
    z: &CovariateSet,
    sampler: &dyn ConditionalSampler,
    m_n: usize,
    kern: &KernelSpec,
    k: usize,
    seed: u64,
) -> Result<f64> {
    let (draws, kernel, graph) = derandomized_prepare(y, z, sampler, m_n, kern, k, seed)?;
    let sums = derand_edge_sums(y, &draws, m_n, &kernel, &graph);
    Ok(sums.d_sum / (y.len() * graph.k()) as f64)
}

/// Derandomized level-α test: z = sqrt(nK) D_n / τ̂_n against N(0, 1).
#[allow(clippy::too_many_arguments)]
pub fn derandomized_test(
    y: &ResponseMatrix,
    z: &CovariateSet,
    sampler: &dyn ConditionalSampler,
    m_n: usize,
    kern: &KernelSpec,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<DerandomizedResult> {
    check_alpha(alpha)?;
    let (draws, kernel, graph) = derandomized_prepare(y, z, sampler, m_n, kern, k, seed)?;
    derandomized_core(y, &draws, m_n, &kernel, &graph, alpha, seed)
}

/// Derandomized test on externally supplied draws (slots = M_n).
pub fn derandomized_test_from_draws(
    y: &ResponseMatrix,
    z: &CovariateSet,
    draws: &DrawMatrix,
    kern: &Kernel,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<DerandomizedResult> {
    check_alpha(alpha)?;
    validate_yz(y, z)?;
    if draws.n() != y.len() || draws.dim() != y.dim() {
        return Err(Error::invalid(
            "draw matrix does not match the response sample",
        ));
    }
    let graph = build_knn_graph(z, k)?;
    derandomized_core(y, draws, draws.slots(), kern, &graph, alpha, seed)
}

fn derandomized_core(
    y: &ResponseMatrix,
    draws: &DrawMatrix,
    m_n: usize,
    kernel: &Kernel,
    graph: &KnnGraph,
    alpha: f64,
    seed: u64,
) -> Result<DerandomizedResult> {
    let nk = (y.len() * graph.k()) as f64;
    let sums = derand_edge_sums(y, draws, m_n, kernel, graph);
    let d_n = sums.d_sum / nk;
    let tau_sq = sums.tau_sum / nk;
    if tau_sq <= 0.0 {
        return Err(Error::DegenerateVariance { statistic: d_n });
    }
    let tau_hat = tau_sq.sqrt();
    let z_score = nk.sqrt() * d_n / tau_hat;
    let p_value = two_sided_p(z_score);
    Ok(DerandomizedResult {
        d_n,
        tau_hat,
        z_score,
        p_value,
        m_n,
        seed,
        n: y.len(),
        k: graph.k(),
        alpha,
        reject: p_value <= alpha,
        kernel: *kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PairedDataset;
    use crate::estimator::ecmmd_sq;

    fn line_covariates(n: usize) -> CovariateSet {
        CovariateSet::from_scalars(&(0..n).map(|i| i as f64).collect::<Vec<_>>()).unwrap()
    }

    struct EchoSampler;

    impl ConditionalSampler for EchoSampler {
        fn response_dim(&self) -> usize {
            1
        }
        fn sample_into(
            &self,
            z: &[f64],
            _rng: &mut ChaCha8Rng,
            out: &mut [f64],
        ) -> std::result::Result<(), String> {
            out[0] = z[0];
            Ok(())
        }
    }

    struct FailingSampler;

    impl ConditionalSampler for FailingSampler {
        fn response_dim(&self) -> usize {
            1
        }
        fn sample_into(
            &self,
            z: &[f64],
            _rng: &mut ChaCha8Rng,
            out: &mut [f64],
        ) -> std::result::Result<(), String> {
            if z[0] >= 2.0 {
                return Err("unsupported covariate".into());
            }
            out[0] = 0.0;
            Ok(())
        }
    }

    #[test]
    fn draws_are_seed_deterministic() {
        let z = line_covariates(6);
        let sampler = GaussianCondSampler {
            mean_coefs: vec![1.0],
            mean_intercept: 0.0,
            sd: SdFn::Const(1.0),
        };
        let a = generate_draws(&z, &sampler, 4, 99).unwrap();
        let b = generate_draws(&z, &sampler, 4, 99).unwrap();
        let c = generate_draws(&z, &sampler, 4, 100).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn sampler_failure_reports_unit() {
        let z = line_covariates(5);
        match generate_draws(&z, &FailingSampler, 2, 1) {
            Err(Error::Sampler { unit, .. }) => assert_eq!(unit, 2),
            other => panic!("expected sampler failure, got {other:?}"),
        }
    }

    #[test]
    fn pm_hits_floor_when_observed_dominates() {
        // Resamples echo Z while the observed Y sits far away: the
        // observed slot produces the largest eta, so nothing ties or
        // exceeds it and p_M = 1/(M+1).
        let n = 8;
        let z = line_covariates(n);
        let y =
            ResponseMatrix::from_scalars(&(0..n).map(|i| i as f64 + 50.0).collect::<Vec<_>>())
                .unwrap();
        let res = finite_sample_test(
            &y,
            &z,
            &EchoSampler,
            9,
            &KernelSpec::Gaussian(BandwidthSpec::Fixed(5.0)),
            2,
            7,
        )
        .unwrap();
        let observed = *res.eta_values.last().unwrap();
        assert!(res.eta_values[..res.m].iter().all(|&e| e < observed));
        assert!((res.p_m - 1.0 / 10.0).abs() < 1e-15);
    }

    #[test]
    fn pm_granularity_and_determinism() {
        let n = 20;
        let z = line_covariates(n);
        let sampler = GaussianCondSampler {
            mean_coefs: vec![0.2],
            mean_intercept: 0.0,
            sd: SdFn::Const(1.0),
        };
        let y = ResponseMatrix::from_scalars(
            &(0..n).map(|i| 0.2 * i as f64 + 0.1).collect::<Vec<_>>(),
        )
        .unwrap();
        let spec = KernelSpec::Gaussian(BandwidthSpec::Median);
        let r1 = finite_sample_test(&y, &z, &sampler, 19, &spec, 3, 11).unwrap();
        let r2 = finite_sample_test(&y, &z, &sampler, 19, &spec, 3, 11).unwrap();
        let r3 = finite_sample_test(&y, &z, &sampler, 19, &spec, 3, 12).unwrap();
        assert_eq!(r1.eta_values, r2.eta_values);
        assert_eq!(r1.p_m, r2.p_m);
        assert_ne!(r1.eta_values, r3.eta_values);
        let scaled = r1.p_m * 20.0;
        assert!((scaled - scaled.round()).abs() < 1e-9);
        assert!(scaled.round() >= 1.0 && scaled.round() <= 20.0);
    }

    #[test]
    fn slot_permutation_leaves_pm_invariant() {
        // Permuting the resample slots (observed slot fixed) permutes the
        // eta values identically and cannot move p_M.
        let n = 12;
        let z = line_covariates(n);
        let sampler = GaussianCondSampler {
            mean_coefs: vec![1.0],
            mean_intercept: 0.0,
            sd: SdFn::Const(2.0),
        };
        let y = ResponseMatrix::from_scalars(
            &(0..n).map(|i| i as f64 + 0.5).collect::<Vec<_>>(),
        )
        .unwrap();
        let m = 6;
        let draws = generate_draws(&z, &sampler, m + 1, 5).unwrap();
        let kern = Kernel::gaussian(2.0).unwrap();
        let base = finite_sample_test_from_draws(&y, &z, &draws, &kern, 2, 5).unwrap();

        let perm: Vec<usize> = vec![4, 0, 5, 2, 1, 3];
        let rows: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|u| {
                let mut unit: Vec<Vec<f64>> =
                    perm.iter().map(|&s| draws.row(u, s).to_vec()).collect();
                unit.push(draws.row(u, m).to_vec());
                unit
            })
            .collect();
        let permuted_draws = DrawMatrix::from_rows(&rows).unwrap();
        let permuted = finite_sample_test_from_draws(&y, &z, &permuted_draws, &kern, 2, 5).unwrap();

        assert_eq!(base.p_m, permuted.p_m);
        assert_eq!(base.eta_values[m], permuted.eta_values[m]);
        for (new_slot, &old_slot) in perm.iter().enumerate() {
            assert_eq!(permuted.eta_values[new_slot], base.eta_values[old_slot]);
        }
    }

    #[test]
    fn derandomized_single_slot_matches_point_estimate() {
        let n = 30;
        let z = line_covariates(n);
        let sampler = GaussianCondSampler {
            mean_coefs: vec![0.7],
            mean_intercept: -0.3,
            sd: SdFn::Const(1.3),
        };
        let y = ResponseMatrix::from_scalars(
            &(0..n).map(|i| (i as f64).sin()).collect::<Vec<_>>(),
        )
        .unwrap();
        let draws = generate_draws(&z, &sampler, 1, 21).unwrap();
        let kern = Kernel::gaussian(1.0).unwrap();

        let d_n = {
            let graph = build_knn_graph(&z, 4).unwrap();
            let sums = derand_edge_sums(&y, &draws, 1, &kern, &graph);
            sums.d_sum / (n * 4) as f64
        };
        let data = PairedDataset::new(draws.slot_matrix(0), y.clone(), z.clone()).unwrap();
        let graph = build_knn_graph(&z, 4).unwrap();
        let t_n = ecmmd_sq(&data, &kern, &graph).unwrap();
        assert_eq!(d_n, t_n, "M_n = 1 must reproduce the estimate bit for bit");
    }

    #[test]
    fn derandomized_averaging_identity() {
        // For fixed draws, D_n equals the mean over slots of the per-slot
        // point estimates, up to accumulation rounding.
        let n = 16;
        let z = line_covariates(n);
        let sampler = GaussianCondSampler {
            mean_coefs: vec![0.5],
            mean_intercept: 0.0,
            sd: SdFn::Const(1.0),
        };
        let y = ResponseMatrix::from_scalars(
            &(0..n).map(|i| 0.5 * i as f64 - 0.2).collect::<Vec<_>>(),
        )
        .unwrap();
        let m_n = 5;
        let draws = generate_draws(&z, &sampler, m_n, 3).unwrap();
        let kern = Kernel::gaussian(1.5).unwrap();
        let graph = build_knn_graph(&z, 3).unwrap();
        let sums = derand_edge_sums(&y, &draws, m_n, &kern, &graph);
        let d_n = sums.d_sum / (n * 3) as f64;
        let mut mean_of_estimates = 0.0;
        for s in 0..m_n {
            let data = PairedDataset::new(draws.slot_matrix(s), y.clone(), z.clone()).unwrap();
            mean_of_estimates += ecmmd_sq(&data, &kern, &graph).unwrap();
        }
        mean_of_estimates /= m_n as f64;
        assert!((d_n - mean_of_estimates).abs() < 1e-12);
        assert!(sums.tau_sum >= 0.0);
    }

    #[test]
    fn deterministic_identical_sampler_is_degenerate() {
        let n = 10;
        let z = line_covariates(n);
        // Sampler reproduces Y exactly: every H vanishes.
        let y = ResponseMatrix::from_scalars(
            &(0..n).map(|i| i as f64).collect::<Vec<_>>(),
        )
        .unwrap();
        let spec = KernelSpec::Gaussian(BandwidthSpec::Fixed(1.0));
        // The point estimate itself is exactly zero ...
        let d_n = derandomized_estimate(&y, &z, &EchoSampler, 3, &spec, 2, 1).unwrap();
        assert_eq!(d_n, 0.0);
        // ... and the studentized test has nothing to divide by.
        let err = derandomized_test(&y, &z, &EchoSampler, 3, &spec, 2, 0.05, 1).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariance { .. }));
    }

    #[test]
    fn invalid_resample_counts_rejected() {
        let z = line_covariates(4);
        let y = ResponseMatrix::from_scalars(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(finite_sample_test(
            &y,
            &z,
            &EchoSampler,
            0,
            &KernelSpec::Linear,
            1,
            1
        )
        .is_err());
        assert!(derandomized_estimate(
            &y,
            &z,
            &EchoSampler,
            0,
            &KernelSpec::Linear,
            1,
            1
        )
        .is_err());
    }
}
