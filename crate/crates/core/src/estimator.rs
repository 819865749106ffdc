//! ECMMD² point estimate, scaled statistic, null-variance estimator, and
//! the asymptotic level-α test.
//!
//! The estimate averages the centered kernel H over the directed edges of
//! the K-NN graph on the covariates:
//!
//! ```text
//! T_n = (1/(nK)) Σ_u Σ_{v ∈ N(u)} H(W_u, W_v),      W_i = (X_i, Y_i)
//! η_n = sqrt(nK) · T_n
//! σ̂_n² = (1/(nK)) Σ_{(u,v) ∈ E} H²(W_u, W_v) · (1 + 1{(v,u) ∈ E})
//! ```
//!
//! Under the null the studentized ratio η_n/σ̂_n is asymptotically
//! standard Gaussian, which yields the test decision without any
//! resampling. Sums run neighbors-then-vertices with compensated
//! accumulation; parallel execution reduces per-vertex partials in index
//! order, so results are bit-identical across thread counts.
//!
//! The neighbor count K is the caller's choice and no growth rate is
//! enforced: consistency of the point estimate tolerates K growing almost
//! linearly in n, while the Gaussian null calibration is backed by theory
//! only for K growing very slowly, even though it holds up empirically
//! for far larger K (the test suites run K up to 25 at n in the low
//! hundreds).

use crate::data::PairedDataset;
use crate::error::{Error, Result};
use crate::kernels::{centered_h_unchecked, Kernel};
use crate::knn::{build_knn_graph, KnnGraph};
use crate::numeric::{two_sided_p, upper_tail_p, KahanSum};
use rayon::prelude::*;

/// Below this many edges the parallel split costs more than it saves.
const PARALLEL_EDGE_THRESHOLD: usize = 1 << 14;

pub(crate) struct EdgeSums {
    /// Σ over directed edges of H.
    pub h: f64,
    /// Σ over directed edges of H² · (1 + mutual).
    pub h2_weighted: f64,
}

/// Edge sums over pairs supplied by `pair: u -> (first_u, second_u)`.
/// Per-vertex inner sums are order-fixed; the outer reduction walks
/// vertices in index order.
pub(crate) fn edge_sums_pairs<'a, F>(n: usize, pair: F, kern: &Kernel, g: &KnnGraph) -> EdgeSums
where
    F: Fn(usize) -> (&'a [f64], &'a [f64]) + Sync,
{
    let per_vertex = |u: usize| -> (f64, f64) {
        let (au, bu) = pair(u);
        let mut h_acc = KahanSum::new();
        let mut h2_acc = KahanSum::new();
        for &v in g.neighbor_row(u) {
            let v = v as usize;
            let (av, bv) = pair(v);
            let h = centered_h_unchecked(kern, au, bu, av, bv);
            h_acc.add(h);
            let weight = if g.mutual_unchecked(u, v) { 2.0 } else { 1.0 };
            h2_acc.add(h * h * weight);
        }
        (h_acc.value(), h2_acc.value())
    };

    let partials: Vec<(f64, f64)> = if n * g.k() >= PARALLEL_EDGE_THRESHOLD {
        (0..n).into_par_iter().map(per_vertex).collect()
    } else {
        (0..n).map(per_vertex).collect()
    };

    let mut h_total = KahanSum::new();
    let mut h2_total = KahanSum::new();
    for (h, h2) in partials {
        h_total.add(h);
        h2_total.add(h2);
    }
    EdgeSums {
        h: h_total.value(),
        h2_weighted: h2_total.value(),
    }
}

fn validate(data: &PairedDataset, g: &KnnGraph) -> Result<()> {
    if data.len() != g.n() {
        return Err(Error::SizeMismatch {
            what: "dataset vs graph",
            left: data.len(),
            right: g.n(),
        });
    }
    Ok(())
}

fn dataset_sums(data: &PairedDataset, kern: &Kernel, g: &KnnGraph) -> Result<EdgeSums> {
    validate(data, g)?;
    let x = &data.x;
    let y = &data.y;
    Ok(edge_sums_pairs(
        data.len(),
        |u| (x.row(u), y.row(u)),
        kern,
        g,
    ))
}

/// K-NN estimate of ECMMD².
pub fn ecmmd_sq(data: &PairedDataset, kern: &Kernel, g: &KnnGraph) -> Result<f64> {
    let sums = dataset_sums(data, kern, g)?;
    Ok(sums.h / (data.len() * g.k()) as f64)
}

/// Scaled statistic η_n = sqrt(nK) · ECMMD².
pub fn eta_n(data: &PairedDataset, kern: &Kernel, g: &KnnGraph) -> Result<f64> {
    let nk = (data.len() * g.k()) as f64;
    Ok(nk.sqrt() * ecmmd_sq(data, kern, g)?)
}

/// Plug-in estimate of the conditional null variance of η_n: the average
/// of H² over directed edges, counted twice where the edge is mutual.
pub fn sigma_hat_sq(data: &PairedDataset, kern: &Kernel, g: &KnnGraph) -> Result<f64> {
    let sums = dataset_sums(data, kern, g)?;
    Ok(sums.h2_weighted / (data.len() * g.k()) as f64)
}

/// Alternative hypothesis direction for the asymptotic test. The
/// population ECMMD² is nonnegative, so `Greater` is offered for users
/// who want the one-sided version; the two-sided form is the default.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alternative {
    TwoSided,
    Greater,
}

/// Outcome of the asymptotic test.
#[derive(Clone, Debug)]
pub struct EcmmdResult {
    pub t_n: f64,
    pub eta_n: f64,
    pub sigma_hat: f64,
    pub z_score: f64,
    pub p_value: f64,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub reject: bool,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Two-sided asymptotic level-α test.
pub fn asymptotic_test(
    data: &PairedDataset,
    kern: &Kernel,
    k: usize,
    alpha: f64,
) -> Result<EcmmdResult> {
    asymptotic_test_with(data, kern, k, alpha, Alternative::TwoSided)
}

/// Asymptotic test with an explicit alternative. Builds the K-NN graph,
/// computes T_n, η_n, σ̂_n, the z-score and its tail area, and decides at
/// level α. A zero σ̂_n means every H on the edges vanished (typically
/// X ≡ Y) and is reported as a degenerate-variance error carrying T_n.
pub fn asymptotic_test_with(
    data: &PairedDataset,
    kern: &Kernel,
    k: usize,
    alpha: f64,
    alternative: Alternative,
) -> Result<EcmmdResult> {
    check_alpha(alpha)?;
    let g = build_knn_graph(&data.z, k)?;
    let sums = dataset_sums(data, kern, &g)?;
    let nk = (data.len() * g.k()) as f64;
    let t_n = sums.h / nk;
    let eta = nk.sqrt() * t_n;
    let sigma_sq = sums.h2_weighted / nk;
    if sigma_sq <= 0.0 {
        return Err(Error::DegenerateVariance { statistic: t_n });
    }
    let sigma_hat = sigma_sq.sqrt();
    let z = eta / sigma_hat;
    let p_value = match alternative {
        Alternative::TwoSided => two_sided_p(z),
        Alternative::Greater => upper_tail_p(z),
    };
    Ok(EcmmdResult {
        t_n,
        eta_n: eta,
        sigma_hat,
        z_score: z,
        p_value,
        n: data.len(),
        k,
        alpha,
        reject: p_value <= alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateSet, ResponseMatrix};

    /// Worked three-point example: Z = {0, 1, 3}, K = 1, linear kernel on
    /// one-hot binary responses, X classes (1, 0, 1) against Y (0, 1, 0).
    fn worked_example() -> PairedDataset {
        let x = ResponseMatrix::from_rows(&[
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let y = ResponseMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ])
        .unwrap();
        let z = CovariateSet::from_scalars(&[0.0, 1.0, 3.0]).unwrap();
        PairedDataset::new(x, y, z).unwrap()
    }

    #[test]
    fn worked_example_statistics() {
        let data = worked_example();
        let g = build_knn_graph(&data.z, 1).unwrap();
        let kern = Kernel::Linear;

        // Edges 0->1, 1->0, 2->1, every H = -2: T_3 = -2.
        let t = ecmmd_sq(&data, &kern, &g).unwrap();
        assert_eq!(t, -2.0);

        let eta = eta_n(&data, &kern, &g).unwrap();
        assert!((eta - 3.0f64.sqrt() * (-2.0)).abs() < 1e-12);
        assert!((eta + 3.4641016).abs() < 1e-6);

        // (0,1) and (1,0) mutual contribute 8 each, (2,1) contributes 4.
        let s2 = sigma_hat_sq(&data, &kern, &g).unwrap();
        assert!((s2 - 20.0 / 3.0).abs() < 1e-12);
        assert!((s2 - 6.6666667).abs() < 1e-6);
    }

    #[test]
    fn worked_example_test_outcome() {
        let data = worked_example();
        let res = asymptotic_test(&data, &Kernel::Linear, 1, 0.05).unwrap();
        assert!((res.z_score + 1.3416408).abs() < 1e-6);
        assert!((res.p_value - 0.1797).abs() < 1e-4);
        assert!(!res.reject);
        // Invariants of the result record.
        assert_eq!(res.eta_n, (3.0f64).sqrt() * res.t_n);
        let expected_p = 2.0 * (1.0 - crate::numeric::normal_cdf(res.z_score.abs()));
        assert!((res.p_value - expected_p).abs() < 1e-12);
    }

    #[test]
    fn identical_responses_are_degenerate() {
        let x = ResponseMatrix::from_scalars(&[0.5, 1.5, -0.5, 2.0]).unwrap();
        let z = CovariateSet::from_scalars(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let data = PairedDataset::new(x.clone(), x, z).unwrap();
        let g = build_knn_graph(&data.z, 2).unwrap();
        let kern = Kernel::gaussian(1.0).unwrap();
        assert_eq!(ecmmd_sq(&data, &kern, &g).unwrap(), 0.0);
        assert_eq!(eta_n(&data, &kern, &g).unwrap(), 0.0);
        assert_eq!(sigma_hat_sq(&data, &kern, &g).unwrap(), 0.0);
        match asymptotic_test(&data, &kern, 2, 0.05) {
            Err(Error::DegenerateVariance { statistic }) => assert_eq!(statistic, 0.0),
            other => panic!("expected degenerate variance, got {other:?}"),
        }
    }

    #[test]
    fn homogeneity_of_eta() {
        // Doubling the responses under the linear kernel quadruples H,
        // hence quadruples eta; at minimum eta must scale linearly with
        // every H, which the shared-sums identity below pins exactly.
        let data = worked_example();
        let g = build_knn_graph(&data.z, 1).unwrap();
        let doubled = PairedDataset::new(
            ResponseMatrix::from_rows(
                &data.x.rows().map(|r| r.iter().map(|v| 2.0 * v).collect()).collect::<Vec<_>>(),
            )
            .unwrap(),
            ResponseMatrix::from_rows(
                &data.y.rows().map(|r| r.iter().map(|v| 2.0 * v).collect()).collect::<Vec<_>>(),
            )
            .unwrap(),
            data.z.clone(),
        )
        .unwrap();
        let eta_base = eta_n(&data, &Kernel::Linear, &g).unwrap();
        let eta_doubled = eta_n(&doubled, &Kernel::Linear, &g).unwrap();
        assert!((eta_doubled - 4.0 * eta_base).abs() < 1e-12);
    }

    #[test]
    fn graph_size_mismatch_rejected() {
        let data = worked_example();
        let other = CovariateSet::from_scalars(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let g = build_knn_graph(&other, 1).unwrap();
        assert!(ecmmd_sq(&data, &Kernel::Linear, &g).is_err());
    }

    #[test]
    fn alpha_validated() {
        let data = worked_example();
        assert!(asymptotic_test(&data, &Kernel::Linear, 1, 0.0).is_err());
        assert!(asymptotic_test(&data, &Kernel::Linear, 1, 1.0).is_err());
    }
}
