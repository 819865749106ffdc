//! Directed K-nearest-neighbor graph over covariate points.
//!
//! Construction goes through an exact kd-tree (median splits, bounded
//! candidate heap), so the expected cost is O(K n log n) for fixed
//! dimension while the result is identical to brute-force search.
//! Candidates are ordered by (distance, index), so ties — impossible for
//! continuous covariates but common in CSV data — resolve to the smaller
//! index, deterministically.
//!
//! Covariates live in R^d under the L2 metric only; other inner-product
//! spaces would need an isometric embedding into R^d first.

use crate::data::CovariateSet;
use crate::error::{Error, Result};
use rayon::prelude::*;
use std::cmp::Ordering;

/// Directed K-NN graph. Out-neighbor lists keep the (distance, index)
/// order produced by the search; edge membership queries run on a
/// per-vertex index-sorted copy.
#[derive(Clone, Debug)]
pub struct KnnGraph {
    n: usize,
    k: usize,
    neighbors: Vec<u32>,
    by_index: Vec<u32>,
}

impl KnnGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Total number of directed edges, n * K.
    pub fn edge_count(&self) -> usize {
        self.n * self.k
    }

    /// Out-neighbors of `u` ordered by (distance, index).
    ///
    /// Panics if `u >= n`; statistic code iterates vertices in range.
    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbor_row(u).iter().map(|&v| v as usize)
    }

    #[inline]
    pub(crate) fn neighbor_row(&self, u: usize) -> &[u32] {
        &self.neighbors[u * self.k..(u + 1) * self.k]
    }

    /// Whether (u, v) is a directed edge, i.e. v is among the K nearest
    /// neighbors of u. Self-pairs are never edges.
    pub fn is_edge(&self, u: usize, v: usize) -> Result<bool> {
        self.check_index(u)?;
        self.check_index(v)?;
        Ok(self.edge_unchecked(u, v))
    }

    /// Whether both (u, v) and (v, u) are edges.
    pub fn is_mutual(&self, u: usize, v: usize) -> Result<bool> {
        self.check_index(u)?;
        self.check_index(v)?;
        Ok(self.edge_unchecked(u, v) && self.edge_unchecked(v, u))
    }

    #[inline]
    pub(crate) fn edge_unchecked(&self, u: usize, v: usize) -> bool {
        let row = &self.by_index[u * self.k..(u + 1) * self.k];
        row.binary_search(&(v as u32)).is_ok()
    }

    #[inline]
    pub(crate) fn mutual_unchecked(&self, u: usize, v: usize) -> bool {
        self.edge_unchecked(u, v) && self.edge_unchecked(v, u)
    }

    fn check_index(&self, u: usize) -> Result<()> {
        if u >= self.n {
            return Err(Error::invalid(format!(
                "vertex index {u} out of range for n = {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Build the directed K-NN graph of the covariate points under the L2
/// metric. Requires 1 <= k <= n - 1.
pub fn build_knn_graph(z: &CovariateSet, k: usize) -> Result<KnnGraph> {
    let n = z.len();
    if k == 0 || k > n - 1 {
        return Err(Error::invalid(format!(
            "neighbor count k = {k} out of range for n = {n} (need 1 <= k <= n - 1)"
        )));
    }
    let tree = KdTree::build(z);
    let mut neighbors = vec![0u32; n * k];
    neighbors
        .par_chunks_mut(k)
        .enumerate()
        .for_each(|(u, row)| tree.nearest_into(u, row));
    let mut by_index = neighbors.clone();
    by_index.par_chunks_mut(k).for_each(|row| row.sort_unstable());
    Ok(KnnGraph {
        n,
        k,
        neighbors,
        by_index,
    })
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    d2: f64,
    idx: u32,
}

impl Candidate {
    // Total order by (distance, index); distances are finite by
    // construction so partial_cmp cannot fail.
    #[inline]
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.d2
            .partial_cmp(&other.d2)
            .unwrap()
            .then(self.idx.cmp(&other.idx))
    }
}

/// Fixed-capacity worst-out candidate list. Capacities here are K + 1
/// (K neighbors plus the query point itself), small enough that a sorted
/// vector beats a binary heap.
struct BoundedNearest {
    cap: usize,
    items: Vec<Candidate>,
}

impl BoundedNearest {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            items: Vec::with_capacity(cap + 1),
        }
    }

    #[inline]
    fn full(&self) -> bool {
        self.items.len() == self.cap
    }

    /// Current worst candidate; only meaningful when full.
    #[inline]
    fn worst_d2(&self) -> f64 {
        self.items.last().map(|c| c.d2).unwrap_or(f64::INFINITY)
    }

    #[inline]
    fn offer(&mut self, cand: Candidate) {
        if self.full() && cand.cmp_key(self.items.last().unwrap()) != Ordering::Less {
            return;
        }
        let pos = self
            .items
            .partition_point(|c| c.cmp_key(&cand) == Ordering::Less);
        self.items.insert(pos, cand);
        if self.items.len() > self.cap {
            self.items.pop();
        }
    }
}

/// Exact kd-tree with implicit layout: every subtree owns a contiguous
/// segment of the permutation array, its root sitting at the segment
/// midpoint. Splitting axes cycle with depth; points are ordered by
/// (coordinate, index) so duplicated covariates stay well-ordered.
struct KdTree<'a> {
    z: &'a CovariateSet,
    order: Vec<u32>,
}

impl<'a> KdTree<'a> {
    fn build(z: &'a CovariateSet) -> Self {
        let mut order: Vec<u32> = (0..z.len() as u32).collect();
        let d = z.dim();
        let mut stack: Vec<(usize, usize, usize)> = vec![(0, z.len(), 0)];
        while let Some((lo, hi, depth)) = stack.pop() {
            if hi - lo <= 1 {
                continue;
            }
            let axis = depth % d;
            let mid = lo + (hi - lo) / 2;
            order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
                let ca = z.row(a as usize)[axis];
                let cb = z.row(b as usize)[axis];
                ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
            });
            stack.push((lo, mid, depth + 1));
            stack.push((mid + 1, hi, depth + 1));
        }
        Self { z, order }
    }

    /// Write the K nearest neighbors of point `u` (excluding `u` itself)
    /// into `out`, ordered by (distance, index).
    fn nearest_into(&self, u: usize, out: &mut [u32]) {
        let k = out.len();
        let query = self.z.row(u);
        // K + 1 candidates: u itself may or may not make the cut when
        // duplicates tie at distance zero, but the K best excluding u are
        // always contained in the K + 1 best overall.
        let mut best = BoundedNearest::new(k + 1);
        self.search(query, 0, self.order.len(), 0, &mut best);
        let mut filled = 0;
        for cand in best.items.iter().filter(|c| c.idx as usize != u) {
            if filled == k {
                break;
            }
            out[filled] = cand.idx;
            filled += 1;
        }
        debug_assert_eq!(filled, k);
    }

    fn search(&self, query: &[f64], lo: usize, hi: usize, depth: usize, best: &mut BoundedNearest) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let point = self.z.row(idx as usize);
        let d2: f64 = query
            .iter()
            .zip(point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        best.offer(Candidate { d2, idx });
        if hi - lo == 1 {
            return;
        }
        let axis = depth % self.z.dim();
        let delta = query[axis] - point[axis];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(query, near.0, near.1, depth + 1, best);
        // The far half can still hold a tie at exactly delta^2, and ties
        // may win on index, so the cut uses <= rather than <.
        if !best.full() || delta * delta <= best.worst_d2() {
            self.search(query, far.0, far.1, depth + 1, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cov(rows: &[Vec<f64>]) -> CovariateSet {
        CovariateSet::from_rows(rows).unwrap()
    }

    fn brute_neighbors(z: &CovariateSet, u: usize, k: usize) -> Vec<usize> {
        let mut cands: Vec<(f64, usize)> = (0..z.len())
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
    }

    #[test]
    fn line_example_k1() {
        // Z = {0, 1, 3}: nearest of 0 is 1, of 1 is 0, of 3 is 1 (0-based).
        let z = cov(&[vec![0.0], vec![1.0], vec![3.0]]);
        let g = build_knn_graph(&z, 1).unwrap();
        assert_eq!(g.neighbors(0).collect::<Vec<_>>(), vec![1]);
        assert_eq!(g.neighbors(1).collect::<Vec<_>>(), vec![0]);
        assert_eq!(g.neighbors(2).collect::<Vec<_>>(), vec![1]);

        assert!(g.is_edge(0, 1).unwrap());
        assert!(!g.is_edge(0, 2).unwrap());
        assert!(!g.is_edge(0, 0).unwrap());
        assert!(g.is_mutual(0, 1).unwrap());
        // (2, 1) is one-directional: N(1) = {0} excludes 2.
        assert!(g.is_edge(2, 1).unwrap());
        assert!(!g.is_mutual(2, 1).unwrap());
        assert!(!g.is_mutual(1, 1).unwrap());
    }

    #[test]
    fn line_example_k2_complete() {
        let z = cov(&[vec![0.0], vec![1.0], vec![3.0]]);
        let g = build_knn_graph(&z, 2).unwrap();
        for u in 0..3 {
            let mut ns: Vec<usize> = g.neighbors(u).collect();
            ns.sort_unstable();
            let expected: Vec<usize> = (0..3).filter(|&v| v != u).collect();
            assert_eq!(ns, expected);
        }
    }

    #[test]
    fn tie_breaks_to_smaller_index() {
        // (1,0) and (0,1) are equidistant from (5,5); index 1 wins.
        let z = cov(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![5.0, 5.0],
        ]);
        let g = build_knn_graph(&z, 1).unwrap();
        assert_eq!(g.neighbors(3).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn k_out_of_range_rejected() {
        let z = cov(&[vec![0.0], vec![1.0], vec![3.0]]);
        assert!(build_knn_graph(&z, 0).is_err());
        assert!(build_knn_graph(&z, 3).is_err());
        assert!(build_knn_graph(&z, 2).is_ok());
    }

    #[test]
    fn index_out_of_range_rejected() {
        let z = cov(&[vec![0.0], vec![1.0]]);
        let g = build_knn_graph(&z, 1).unwrap();
        assert!(g.is_edge(0, 2).is_err());
        assert!(g.is_mutual(5, 0).is_err());
    }

    #[test]
    fn duplicated_points_stay_ordered() {
        let z = cov(&[vec![1.0], vec![1.0], vec![1.0], vec![9.0]]);
        let g = build_knn_graph(&z, 2).unwrap();
        assert_eq!(g.neighbors(0).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(g.neighbors(1).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(g.neighbors(2).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(g.neighbors(3).collect::<Vec<_>>(), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            rows in proptest::collection::vec(
                proptest::collection::vec(-100.0f64..100.0, 3),
                5..60,
            ),
            k in 1usize..8,
        ) {
            let k = k.min(rows.len() - 1);
            let z = cov(&rows);
            let g = build_knn_graph(&z, k).unwrap();
            for u in 0..z.len() {
                let got: Vec<usize> = g.neighbors(u).collect();
                prop_assert_eq!(&got, &brute_neighbors(&z, u, k));
            }
        }

        #[test]
        fn scale_translation_invariance(
            rows in proptest::collection::vec(
                proptest::collection::vec(-10.0f64..10.0, 2),
                8..40,
            ),
            scale in 0.5f64..4.0,
            shift in -5.0f64..5.0,
        ) {
            let z = cov(&rows);
            let moved: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().map(|v| scale * v + shift).collect())
                .collect();
            let zm = cov(&moved);
            let k = 3.min(rows.len() - 1);
            let a = build_knn_graph(&z, k).unwrap();
            let b = build_knn_graph(&zm, k).unwrap();
            prop_assert_eq!(a.neighbors_vec(), b.neighbors_vec());
        }

        #[test]
        fn degree_and_determinism(
            rows in proptest::collection::vec(
                proptest::collection::vec(-50.0f64..50.0, 2),
                4..30,
            ),
        ) {
            let z = cov(&rows);
            let k = 2.min(rows.len() - 1);
            let a = build_knn_graph(&z, k).unwrap();
            let b = build_knn_graph(&z, k).unwrap();
            prop_assert_eq!(a.neighbors_vec(), b.neighbors_vec());
            prop_assert_eq!(a.edge_count(), rows.len() * k);
            for u in 0..z.len() {
                prop_assert_eq!(a.neighbors(u).count(), k);
                prop_assert!(a.neighbors(u).all(|v| v != u));
            }
        }
    }

    impl KnnGraph {
        fn neighbors_vec(&self) -> Vec<u32> {
            self.neighbors.clone()
        }
    }
}
