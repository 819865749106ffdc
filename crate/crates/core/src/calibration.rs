//! Calibration auditing of predictive models.
//!
//! A classifier is calibrated when the label law given the predicted
//! probability vector matches that vector; a draw X ~ Multinomial(f(Z))
//! turns the audit into a conditional two-sample test conditioning on
//! f(Z). Gaussian regression models are audited the same way, drawing
//! X ~ N(mean, variance) and conditioning on the predicted mean (and
//! variance, when heteroscedastic). Reliability binning, the binned ECE
//! estimate, and isotonic recalibration round out the toolkit.

use crate::data::{CovariateSet, PairedDataset, ResponseMatrix};
use crate::error::{Error, Result};
use crate::estimator::asymptotic_test;
use crate::kernels::KernelSpec;
use crate::report::TestReport;
use crate::resampling::{
    finite_sample_test, generate_draws, ConditionalSampler, GaussianCondSampler,
    MultinomialSampler, SdFn,
};
use serde::{Deserialize, Serialize};

/// Predicted class probabilities with observed labels (0-based classes).
#[derive(Clone, Debug)]
pub struct ClassifierPredictions {
    probs: ResponseMatrix,
    labels: Vec<usize>,
}

impl ClassifierPredictions {
    /// Validates that each probability row is nonnegative and sums to one
    /// within 1e-9, with at least two classes.
    pub fn new(probs: &[Vec<f64>], labels: &[usize]) -> Result<Self> {
        if probs.len() != labels.len() {
            return Err(Error::SizeMismatch {
                what: "probability rows vs labels",
                left: probs.len(),
                right: labels.len(),
            });
        }
        let matrix = ResponseMatrix::from_rows(probs)?;
        let r = matrix.dim();
        if r < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        for (i, row) in matrix.rows().enumerate() {
            if row.iter().any(|&p| p < 0.0) {
                return Err(Error::invalid(format!(
                    "negative probability in row {i}"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "probability row {i} sums to {total}, expected 1"
                )));
            }
        }
        for (i, &label) in labels.iter().enumerate() {
            if label >= r {
                return Err(Error::invalid(format!(
                    "label {label} at row {i} out of range for {r} classes"
                )));
            }
        }
        Ok(Self {
            probs: matrix,
            labels: labels.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.probs.dim()
    }

    pub fn probs(&self) -> &ResponseMatrix {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn one_hot_labels(&self) -> ResponseMatrix {
        let r = self.classes();
        let mut flat = vec![0.0; self.len() * r];
        for (i, &label) in self.labels.iter().enumerate() {
            flat[i * r + label] = 1.0;
        }
        ResponseMatrix::from_flat(flat, self.len(), r).expect("one-hot rows are finite")
    }
}

/// One-hot encoding of a class index.
pub fn one_hot(class: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    v
}

/// Gaussian predictive regression model: per-point means with either a
/// shared or a per-point variance.
#[derive(Clone, Debug)]
pub struct GaussianRegressionModel {
    pub means: Vec<f64>,
    pub variances: Variances,
}

#[derive(Clone, Debug)]
pub enum Variances {
    Homoscedastic(f64),
    PerPoint(Vec<f64>),
}

impl GaussianRegressionModel {
    fn validate(&self, n: usize) -> Result<()> {
        if self.means.len() != n {
            return Err(Error::SizeMismatch {
                what: "model means vs responses",
                left: self.means.len(),
                right: n,
            });
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("model means".into()));
        }
        match &self.variances {
            Variances::Homoscedastic(v) => {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(Error::invalid(format!("nonpositive variance {v}")));
                }
            }
            Variances::PerPoint(vs) => {
                if vs.len() != n {
                    return Err(Error::SizeMismatch {
                        what: "model variances vs responses",
                        left: vs.len(),
                        right: n,
                    });
                }
                if vs.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::invalid("nonpositive variance among per-point variances"));
                }
            }
        }
        Ok(())
    }

    fn variance_at(&self, i: usize) -> f64 {
        match &self.variances {
            Variances::Homoscedastic(v) => *v,
            Variances::PerPoint(vs) => vs[i],
        }
    }
}

/// What the covariate carries when auditing a Gaussian regression model.
/// A homoscedastic model is pinned down by its conditional mean, so
/// conditioning on the mean alone suffices there.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conditioning {
    MeanOnly,
    MeanAndVariance,
}

/// Calibration tests run either the single-draw asymptotic test or the
/// exchangeable finite-sample test with M resamples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CalibrationMode {
    Asymptotic,
    FiniteSample { m: usize },
}

/// Calibration test for a classifier: condition on the predicted
/// probability vectors, draw X ~ Multinomial(f(Z)), and compare against
/// the one-hot labels.
pub fn classification_calibration_test(
    pred: &ClassifierPredictions,
    mode: CalibrationMode,
    kern: &KernelSpec,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestReport> {
    let n = pred.len();
    let r = pred.classes();
    let z = CovariateSet::from_flat(
        pred.probs.rows().flatten().copied().collect(),
        n,
        r,
    )?;
    let y = pred.one_hot_labels();
    let sampler = MultinomialSampler { classes: r };
    run_sampled_test(&y, &z, &sampler, mode, kern, k, alpha, seed)
}

/// Calibration test for a Gaussian regression model: condition on the
/// predicted mean (and variance, if requested), draw X from the model,
/// and compare against the observed responses.
#[allow(clippy::too_many_arguments)]
pub fn regression_calibration_test(
    y: &[f64],
    model: &GaussianRegressionModel,
    conditioning: Conditioning,
    mode: CalibrationMode,
    kern: &KernelSpec,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestReport> {
    model.validate(y.len())?;
    let n = y.len();
    if conditioning == Conditioning::MeanOnly {
        if let Variances::PerPoint(_) = model.variances {
            return Err(Error::invalid(
                "mean-only conditioning requires a homoscedastic model",
            ));
        }
    }
    let (z, sampler) = match conditioning {
        Conditioning::MeanOnly => {
            let sd = match model.variances {
                Variances::Homoscedastic(v) => v.sqrt(),
                Variances::PerPoint(_) => unreachable!(),
            };
            (
                CovariateSet::from_scalars(&model.means)?,
                GaussianCondSampler {
                    mean_coefs: vec![1.0],
                    mean_intercept: 0.0,
                    sd: SdFn::Const(sd),
                },
            )
        }
        Conditioning::MeanAndVariance => {
            let mut flat = Vec::with_capacity(2 * n);
            for i in 0..n {
                flat.push(model.means[i]);
                flat.push(model.variance_at(i));
            }
            (
                CovariateSet::from_flat(flat, n, 2)?,
                GaussianCondSampler {
                    mean_coefs: vec![1.0, 0.0],
                    mean_intercept: 0.0,
                    sd: SdFn::VarCoord(1),
                },
            )
        }
    };
    let y = ResponseMatrix::from_scalars(y)?;
    run_sampled_test(&y, &z, &sampler, mode, kern, k, alpha, seed)
}

#[allow(clippy::too_many_arguments)]
fn run_sampled_test(
    y: &ResponseMatrix,
    z: &CovariateSet,
    sampler: &dyn ConditionalSampler,
    mode: CalibrationMode,
    kern: &KernelSpec,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestReport> {
    match mode {
        CalibrationMode::Asymptotic => {
            let draws = generate_draws(z, sampler, 1, seed)?;
            let x = draws.slot_matrix(0);
            let data = PairedDataset::new(x, y.clone(), z.clone())?;
            let kernel = kern.resolve(&data.x, &data.y)?;
            let res = asymptotic_test(&data, &kernel, k, alpha)?;
            Ok(TestReport::from_asymptotic(
                &res,
                z.dim(),
                &kernel,
                Some(seed),
            ))
        }
        CalibrationMode::FiniteSample { m } => {
            let res = finite_sample_test(y, z, sampler, m, kern, k, seed)?;
            Ok(TestReport::from_finite_sample(&res, z.dim(), alpha))
        }
    }
}

/// One reliability bin: the interval ((m-1)/M, m/M], its occupancy, and
/// — when occupied — the empirical label frequency L and the mean
/// predicted probability R.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub l: Option<f64>,
    pub r: Option<f64>,
}

/// Reliability diagram data plus the binned ECE estimate
/// Σ (|B_m|/n) |L(B_m) − R(B_m)|.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub bins: Vec<ReliabilityBin>,
    pub ece: f64,
    pub m: usize,
}

/// Bin positive-class predictions into M equal-width intervals and
/// estimate the expected calibration error. Predictions of exactly zero
/// join the first bin so the counts partition the sample.
pub fn reliability_bins(
    probs: &[f64],
    labels: &[bool],
    m: usize,
) -> Result<ReliabilityReport> {
    if probs.len() != labels.len() {
        return Err(Error::SizeMismatch {
            what: "probabilities vs labels",
            left: probs.len(),
            right: labels.len(),
        });
    }
    if m < 2 {
        return Err(Error::invalid("need at least two reliability bins"));
    }
    if probs.is_empty() {
        return Err(Error::invalid("reliability binning needs data"));
    }
    for (i, &p) in probs.iter().enumerate() {
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            return Err(Error::invalid(format!(
                "probability {p} at row {i} outside [0, 1]"
            )));
        }
    }
    let n = probs.len();
    let mut counts = vec![0usize; m];
    let mut label_sums = vec![0.0f64; m];
    let mut prob_sums = vec![0.0f64; m];
    for (&p, &label) in probs.iter().zip(labels) {
        let bin = ((p * m as f64).ceil() as usize).clamp(1, m) - 1;
        counts[bin] += 1;
        if label {
            label_sums[bin] += 1.0;
        }
        prob_sums[bin] += p;
    }
    let mut bins = Vec::with_capacity(m);
    let mut ece = 0.0;
    for b in 0..m {
        let (l, r) = if counts[b] > 0 {
            let l = label_sums[b] / counts[b] as f64;
            let r = prob_sums[b] / counts[b] as f64;
            ece += counts[b] as f64 / n as f64 * (l - r).abs();
            (Some(l), Some(r))
        } else {
            (None, None)
        };
        bins.push(ReliabilityBin {
            lo: b as f64 / m as f64,
            hi: (b + 1) as f64 / m as f64,
            count: counts[b],
            l,
            r,
        });
    }
    Ok(ReliabilityReport { bins, ece, m })
}

/// Nondecreasing step function fitted by isotonic regression:
/// breakpoints a_1 ≤ … ≤ a_{M+1} spanning [0, 1] and one level per
/// interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsotonicFit {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
    fitted: Vec<f64>,
}

impl IsotonicFit {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Fitted values at the training points, in input order.
    pub fn fitted_values(&self) -> &[f64] {
        &self.fitted
    }

    /// Level of the interval containing `p`, clamped at the ends.
    pub fn evaluate(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        // breakpoints[j] <= p < breakpoints[j+1]; the last interval is
        // closed on the right.
        let j = self.breakpoints[1..self.breakpoints.len() - 1]
            .partition_point(|&a| a <= p);
        self.levels[j.min(self.levels.len() - 1)]
    }
}

/// Least-squares isotonic recalibration by pool-adjacent-violators on the
/// predictions sorted ascending. Tied predictions share a block, so the
/// fitted transformation is a well-defined function of p.
pub fn isotonic_recalibrate(probs: &[f64], labels: &[bool]) -> Result<IsotonicFit> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::SizeMismatch {
            what: "probabilities vs labels",
            left: probs.len(),
            right: labels.len(),
        });
    }
    for (i, &p) in probs.iter().enumerate() {
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            return Err(Error::invalid(format!(
                "probability {p} at row {i} outside [0, 1]"
            )));
        }
    }
    let n = probs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).unwrap().then(a.cmp(&b)));

    // Blocks of (first p, last p, mean level, weight), pre-pooled over
    // tied predictions, then merged while adjacent means decrease.
    struct Block {
        p_min: f64,
        p_max: f64,
        mean: f64,
        weight: f64,
    }
    let mut blocks: Vec<Block> = Vec::new();
    let mut i = 0;
    while i < n {
        let p = probs[order[i]];
        let mut j = i;
        let mut sum = 0.0;
        while j < n && probs[order[j]] == p {
            if labels[order[j]] {
                sum += 1.0;
            }
            j += 1;
        }
        let weight = (j - i) as f64;
        blocks.push(Block {
            p_min: p,
            p_max: p,
            mean: sum / weight,
            weight,
        });
        while blocks.len() >= 2 {
            let last = blocks.len() - 1;
            if blocks[last - 1].mean > blocks[last].mean {
                let b = blocks.pop().unwrap();
                let a = blocks.last_mut().unwrap();
                a.mean = (a.mean * a.weight + b.mean * b.weight) / (a.weight + b.weight);
                a.weight += b.weight;
                a.p_max = b.p_max;
            } else {
                break;
            }
        }
        i = j;
    }

    let m = blocks.len();
    let mut breakpoints = Vec::with_capacity(m + 1);
    breakpoints.push(0.0);
    for w in blocks.windows(2) {
        breakpoints.push(0.5 * (w[0].p_max + w[1].p_min));
    }
    breakpoints.push(1.0);
    let levels: Vec<f64> = blocks.iter().map(|b| b.mean).collect();

    let mut fitted = vec![0.0; n];
    let mut pos = 0;
    for block in &blocks {
        for _ in 0..block.weight as usize {
            fitted[order[pos]] = block.mean;
            pos += 1;
        }
    }
    Ok(IsotonicFit {
        breakpoints,
        levels,
        fitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::BandwidthSpec;

    #[test]
    fn predictions_validated() {
        assert!(ClassifierPredictions::new(&[vec![0.6, 0.5]], &[0]).is_err());
        assert!(ClassifierPredictions::new(&[vec![1.2, -0.2]], &[0]).is_err());
        assert!(ClassifierPredictions::new(&[vec![0.5, 0.5]], &[2]).is_err());
        assert!(ClassifierPredictions::new(&[vec![1.0]], &[0]).is_err());
        let ok = ClassifierPredictions::new(&[vec![0.3, 0.7], vec![0.5, 0.5]], &[0, 1]);
        assert!(ok.is_ok());
    }

    #[test]
    fn degenerate_classifier_is_degenerate_variance() {
        // All mass on class 0 and every label is class 0: X ≡ Y.
        let probs: Vec<Vec<f64>> = (0..10).map(|_| vec![1.0, 0.0]).collect();
        let labels = vec![0usize; 10];
        let pred = ClassifierPredictions::new(&probs, &labels).unwrap();
        let err = classification_calibration_test(
            &pred,
            CalibrationMode::Asymptotic,
            &KernelSpec::Linear,
            2,
            0.05,
            3,
        )
        .unwrap_err();
        assert!(err.is_degenerate());
    }

    #[test]
    fn regression_rejects_bad_variances() {
        let model = GaussianRegressionModel {
            means: vec![0.0, 1.0, 2.0],
            variances: Variances::Homoscedastic(0.0),
        };
        let err = regression_calibration_test(
            &[0.0, 1.0, 2.0],
            &model,
            Conditioning::MeanOnly,
            CalibrationMode::Asymptotic,
            &KernelSpec::Gaussian(BandwidthSpec::Median),
            1,
            0.05,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn mean_only_requires_homoscedastic() {
        let model = GaussianRegressionModel {
            means: vec![0.0, 1.0],
            variances: Variances::PerPoint(vec![1.0, 2.0]),
        };
        assert!(regression_calibration_test(
            &[0.0, 1.0],
            &model,
            Conditioning::MeanOnly,
            CalibrationMode::Asymptotic,
            &KernelSpec::Linear,
            1,
            0.05,
            1,
        )
        .is_err());
    }

    #[test]
    fn reliability_examples() {
        // Deterministic correct predictions: every occupied bin has L = R.
        let probs = [0.0, 1.0, 1.0, 0.0];
        let labels = [false, true, true, false];
        let rep = reliability_bins(&probs, &labels, 10).unwrap();
        assert_eq!(rep.ece, 0.0);
        assert_eq!(rep.bins.iter().map(|b| b.count).sum::<usize>(), 4);

        // All predictions 0.5 with half the labels positive.
        let probs = [0.5; 4];
        let labels = [true, false, true, false];
        let rep = reliability_bins(&probs, &labels, 10).unwrap();
        assert_eq!(rep.ece, 0.0);
        assert_eq!(rep.bins.iter().filter(|b| b.count > 0).count(), 1);

        // All predictions 0.5, all labels positive: ECE = 0.5.
        let labels = [true; 4];
        let rep = reliability_bins(&probs, &labels, 10).unwrap();
        assert!((rep.ece - 0.5).abs() < 1e-15);

        // Empty bins flagged rather than interpolated.
        let empty = rep.bins.iter().find(|b| b.count == 0).unwrap();
        assert!(empty.l.is_none() && empty.r.is_none());
    }

    #[test]
    fn reliability_rejects_bad_input() {
        assert!(reliability_bins(&[0.5], &[true], 1).is_err());
        assert!(reliability_bins(&[1.5], &[true], 5).is_err());
        assert!(reliability_bins(&[0.5, 0.2], &[true], 5).is_err());
    }

    #[test]
    fn isotonic_monotone_data_unchanged() {
        let probs = [0.1, 0.4, 0.8];
        let labels = [false, true, true];
        let fit = isotonic_recalibrate(&probs, &labels).unwrap();
        assert_eq!(fit.fitted_values(), &[0.0, 1.0, 1.0]);
        assert_eq!(fit.evaluate(0.05), 0.0);
        assert_eq!(fit.evaluate(0.9), 1.0);
    }

    #[test]
    fn isotonic_pools_violation() {
        // (0.1, 0.2, 0.3) with labels (1, 0, 1): first two pool at 0.5.
        let probs = [0.1, 0.2, 0.3];
        let labels = [true, false, true];
        let fit = isotonic_recalibrate(&probs, &labels).unwrap();
        assert_eq!(fit.fitted_values(), &[0.5, 0.5, 1.0]);
        assert_eq!(fit.levels(), &[0.5, 1.0]);
        // Between the pooled block and the last point the boundary sits
        // midway; evaluation clamps outside [0, 1].
        assert_eq!(fit.evaluate(0.24), 0.5);
        assert_eq!(fit.evaluate(0.26), 1.0);
        assert_eq!(fit.evaluate(-3.0), 0.5);
        assert_eq!(fit.evaluate(7.0), 1.0);
    }

    #[test]
    fn isotonic_constant_labels() {
        let probs = [0.2, 0.5, 0.9];
        let fit = isotonic_recalibrate(&probs, &[true, true, true]).unwrap();
        assert_eq!(fit.fitted_values(), &[1.0, 1.0, 1.0]);
        let fit = isotonic_recalibrate(&probs, &[false, false, false]).unwrap();
        assert_eq!(fit.fitted_values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn isotonic_idempotent() {
        let probs = [0.1, 0.3, 0.35, 0.6, 0.8];
        let labels = [true, false, true, false, true];
        let fit = isotonic_recalibrate(&probs, &labels).unwrap();
        // Feeding the fitted values back as "probabilities" against the
        // same labels must leave them unchanged.
        let refit_probs = fit.fitted_values();
        let refit = isotonic_recalibrate(refit_probs, &labels).unwrap();
        for (a, b) in refit.fitted_values().iter().zip(refit_probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn isotonic_ties_share_a_level() {
        let probs = [0.4, 0.4, 0.7];
        let labels = [true, false, true];
        let fit = isotonic_recalibrate(&probs, &labels).unwrap();
        assert_eq!(fit.fitted_values()[0], fit.fitted_values()[1]);
        assert!((fit.fitted_values()[0] - 0.5).abs() < 1e-12);
    }
}
