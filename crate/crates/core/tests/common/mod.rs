//! Brute-force reference implementations and shared helpers for the
//! integration suites. Everything here recomputes the statistics from
//! their definitions with O(n²) scans, independent of the library's
//! kd-tree and edge-sum paths.

#![allow(dead_code)]

use ecmmd::data::{CovariateSet, PairedDataset, ResponseMatrix};
use ecmmd::kernels::{centered_h, Kernel};
use ecmmd::numeric::normal_cdf;
use ecmmd::resampling::DrawMatrix;

/// Brute-force directed K-NN lists ordered by (distance, index).
pub fn brute_knn(z: &CovariateSet, k: usize) -> Vec<Vec<usize>> {
    let n = z.len();
    (0..n)
        .map(|u| {
            let mut cands: Vec<(f64, usize)> = (0..n)
                .filter(|&v| v != u)
                .map(|v| {
                    let d2: f64 = z
                        .row(u)
                        .iter()
                        .zip(z.row(v))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d2, v)
                })
                .collect();
            cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            cands.into_iter().take(k).map(|(_, v)| v).collect()
        })
        .collect()
}

fn is_edge(neighbors: &[Vec<usize>], u: usize, v: usize) -> bool {
    neighbors[u].contains(&v)
}

/// Naive double loop over ordered pairs: T_n = (1/(nK)) Σ H·1{edge}.
pub fn brute_t_n(data: &PairedDataset, kern: &Kernel, neighbors: &[Vec<usize>], k: usize) -> f64 {
    let n = data.len();
    let mut sum = 0.0;
    for u in 0..n {
        for v in 0..n {
            if u != v && is_edge(neighbors, u, v) {
                sum += centered_h(kern, data.x.row(u), data.y.row(u), data.x.row(v), data.y.row(v))
                    .unwrap();
            }
        }
    }
    sum / (n * k) as f64
}

pub fn brute_eta_n(data: &PairedDataset, kern: &Kernel, neighbors: &[Vec<usize>], k: usize) -> f64 {
    ((data.len() * k) as f64).sqrt() * brute_t_n(data, kern, neighbors, k)
}

/// σ̂² from its displayed form: (1/(nK)) Σ_{u,v} H²(1{edge} + 1{mutual}).
pub fn brute_sigma_sq(
    data: &PairedDataset,
    kern: &Kernel,
    neighbors: &[Vec<usize>],
    k: usize,
) -> f64 {
    let n = data.len();
    let mut sum = 0.0;
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            let edge = is_edge(neighbors, u, v) as u32;
            let mutual = (is_edge(neighbors, u, v) && is_edge(neighbors, v, u)) as u32;
            if edge + mutual == 0 {
                continue;
            }
            let h = centered_h(kern, data.x.row(u), data.y.row(u), data.x.row(v), data.y.row(v))
                .unwrap();
            sum += h * h * (edge + mutual) as f64;
        }
    }
    sum / (n * k) as f64
}

/// D_n from its definition: per edge, the mean over resample slots of
/// H((X_u^m, Y_u), (X_v^m, Y_v)), averaged over all edges.
pub fn brute_d_n(
    y: &ResponseMatrix,
    draws: &DrawMatrix,
    kern: &Kernel,
    neighbors: &[Vec<usize>],
    k: usize,
) -> f64 {
    let n = y.len();
    let m_n = draws.slots();
    let mut sum = 0.0;
    for u in 0..n {
        for v in 0..n {
            if u != v && is_edge(neighbors, u, v) {
                let mut inner = 0.0;
                for s in 0..m_n {
                    inner += centered_h(kern, draws.row(u, s), y.row(u), draws.row(v, s), y.row(v))
                        .unwrap();
                }
                sum += inner / m_n as f64;
            }
        }
    }
    sum / (n * k) as f64
}

/// τ̂² from its definition over all ordered pairs.
pub fn brute_tau_sq(
    y: &ResponseMatrix,
    draws: &DrawMatrix,
    kern: &Kernel,
    neighbors: &[Vec<usize>],
    k: usize,
) -> f64 {
    let n = y.len();
    let m_n = draws.slots();
    let mut sum = 0.0;
    for u in 0..n {
        for v in 0..n {
            if u == v || !is_edge(neighbors, u, v) {
                continue;
            }
            let mut inner = 0.0;
            for s in 0..m_n {
                inner += centered_h(kern, draws.row(u, s), y.row(u), draws.row(v, s), y.row(v))
                    .unwrap();
            }
            let mean = inner / m_n as f64;
            let weight = if is_edge(neighbors, v, u) { 2.0 } else { 1.0 };
            sum += mean * mean * weight;
        }
    }
    sum / (n * k) as f64
}

/// One-sample Kolmogorov–Smirnov distance to N(0, 1).
pub fn ks_distance_std_normal(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in sorted.iter().enumerate() {
        let cdf = normal_cdf(v);
        d = d.max(cdf - i as f64 / n);
        d = d.max((i + 1) as f64 / n - cdf);
    }
    d
}

/// Exhaustive isotonic oracle: over all contiguous partitions of the
/// points sorted by p (tied p's forced into one block), fit block means,
/// keep partitions with nondecreasing means, and return the fitted values
/// of the SSE-minimal feasible partition.
pub fn exhaustive_isotonic(probs: &[f64], labels: &[bool]) -> Vec<f64> {
    let n = probs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).unwrap().then(a.cmp(&b)));
    // Group tied predictions: a step function cannot separate equal p's.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &idx in &order {
        match groups.last_mut() {
            Some(last) if probs[*last.last().unwrap()] == probs[idx] => last.push(idx),
            _ => groups.push(vec![idx]),
        }
    }
    let g = groups.len();
    let mut best_sse = f64::INFINITY;
    let mut best_fit = vec![0.0; n];
    // Bitmask over g-1 possible cut positions.
    for mask in 0..(1u32 << (g - 1)) {
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut current: Vec<usize> = Vec::new();
        for (gi, group) in groups.iter().enumerate() {
            current.extend_from_slice(group);
            let cut = gi + 1 == g || (mask >> gi) & 1 == 1;
            if cut {
                blocks.push(std::mem::take(&mut current));
            }
        }
        let means: Vec<f64> = blocks
            .iter()
            .map(|b| {
                b.iter().map(|&i| labels[i] as u8 as f64).sum::<f64>() / b.len() as f64
            })
            .collect();
        if means.windows(2).any(|w| w[0] > w[1]) {
            continue;
        }
        let mut sse = 0.0;
        for (b, &mean) in blocks.iter().zip(&means) {
            for &i in b {
                let r = labels[i] as u8 as f64 - mean;
                sse += r * r;
            }
        }
        if sse < best_sse - 1e-12 {
            best_sse = sse;
            for (b, &mean) in blocks.iter().zip(&means) {
                for &i in b {
                    best_fit[i] = mean;
                }
            }
        }
    }
    best_fit
}

/// |a - b| within a relative tolerance anchored at unit scale.
pub fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
