//! Exact k-nearest-neighbor search over the rows of a dense matrix.
//!
//! A kd-tree with median splits on the widest dimension, searched with
//! incremental per-axis distance bounds. Results are identical to exhaustive
//! search: candidates are ranked by `(squared distance, row index)` and a
//! subtree is skipped only when its lower bound is strictly worse than the
//! current k-th candidate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;

const LEAF_SIZE: usize = 16;

/// Squared Euclidean distance, summed left to right over columns.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub squared_distance: f64,
    pub index: usize,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.squared_distance.sqrt()
    }
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.squared_distance
            .total_cmp(&other.squared_distance)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Index over the rows of a matrix. The matrix itself is passed to each
/// query and must be the one the tree was built from.
#[derive(Debug, Clone)]
pub struct KdTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
    rows: usize,
    cols: usize,
}

fn row(data: &Array2<f64>, i: usize) -> &[f64] {
    data.row(i).to_slice().expect("standard layout")
}

impl KdTree {
    /// `data` must be in standard (row-major) layout.
    pub fn build(data: &Array2<f64>) -> Self {
        assert!(data.is_standard_layout(), "kd-tree needs a row-major matrix");
        let mut tree = KdTree {
            nodes: Vec::new(),
            order: (0..data.nrows()).collect(),
            rows: data.nrows(),
            cols: data.ncols(),
        };
        if tree.rows > 0 {
            tree.build_node(data, 0, tree.rows);
        }
        tree
    }

    fn build_node(&mut self, data: &Array2<f64>, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let mut best = (0, 0.0);
        for d in 0..self.cols {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let v = data[[i, d]];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best.1 {
                best = (d, hi - lo);
            }
        }
        if best.1 <= 0.0 {
            return id;
        }
        let dim = best.0;
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            data[[a, dim]].total_cmp(&data[[b, dim]]).then(a.cmp(&b))
        });
        let value = data[[self.order[mid], dim]];
        let left = self.build_node(data, start, mid);
        let right = self.build_node(data, mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// The `k` nearest rows to `query`, ascending by (distance, index).
    /// `exclude` drops one row index from consideration.
    pub fn knn(&self, data: &Array2<f64>, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        debug_assert_eq!(data.dim(), (self.rows, self.cols));
        debug_assert_eq!(query.len(), self.cols);
        if k == 0 || self.rows == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        let mut offsets = vec![0.0; self.cols];
        let mut q = Query { data, query, k, exclude, heap: &mut heap, offsets: &mut offsets };
        self.search(&mut q, 0, 0.0);
        heap.into_sorted_vec()
    }

    pub fn nearest(&self, data: &Array2<f64>, query: &[f64]) -> Option<Neighbor> {
        self.knn(data, query, 1, None).into_iter().next()
    }

    fn search(&self, q: &mut Query<'_>, node: usize, bound: f64) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == q.exclude {
                        continue;
                    }
                    let cand = Neighbor { squared_distance: squared_distance(q.query, row(q.data, i)), index: i };
                    if q.heap.len() < q.k {
                        q.heap.push(cand);
                    } else if cand < *q.heap.peek().expect("non-empty") {
                        q.heap.pop();
                        q.heap.push(cand);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q.query[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(q, near, bound);
                let old = q.offsets[dim];
                let far_bound = bound - old * old + diff * diff;
                if q.admits(far_bound) {
                    q.offsets[dim] = diff;
                    self.search(q, far, far_bound);
                    q.offsets[dim] = old;
                }
            }
        }
    }
}

struct Query<'a> {
    data: &'a Array2<f64>,
    query: &'a [f64],
    k: usize,
    exclude: Option<usize>,
    heap: &'a mut BinaryHeap<Neighbor>,
    /// Per-axis gap from the query to the current cell.
    offsets: &'a mut [f64],
}

impl Query<'_> {
    /// The running bound is a sum updated out of order, so it is shrunk by a
    /// relative margin before comparing against exact distances.
    fn admits(&self, bound: f64) -> bool {
        self.heap.len() < self.k || bound * (1.0 - 1e-9) <= self.heap.peek().expect("non-empty").squared_distance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(data: &Array2<f64>, q: &[f64], k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = (0..data.nrows())
            .filter(|&i| Some(i) != exclude)
            .map(|i| {
                let d: f64 = q.iter().zip(data.row(i)).map(|(a, b)| (a - b) * (a - b)).sum();
                Neighbor { squared_distance: d, index: i }
            })
            .collect();
        all.sort();
        all.truncate(k);
        all
    }

    fn random(rows: usize, cols: usize, seed: u64, grid: bool) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| {
            if grid {
                f64::from(rng.random_range(0..3))
            } else {
                rng.random::<f64>()
            }
        })
    }

    #[test]
    fn matches_exhaustive_search() {
        for (seed, grid) in [(1, false), (2, true), (3, false)] {
            let data = random(200, 10, seed, grid);
            let tree = KdTree::build(&data);
            for i in 0..data.nrows() {
                let q = data.row(i).to_vec();
                assert_eq!(tree.knn(&data, &q, 5, Some(i)), brute(&data, &q, 5, Some(i)), "row {i}");
            }
        }
    }

    #[test]
    fn one_dimensional_example() {
        let data = ndarray::array![[0.0], [1.0], [3.0]];
        let tree = KdTree::build(&data);
        let got: Vec<usize> = tree.knn(&data, &[0.0], 2, Some(0)).iter().map(|n| n.index).collect();
        assert_eq!(got, vec![1, 2]);
    }

    #[test]
    fn duplicates_come_first_at_distance_zero() {
        let mut data = random(50, 3, 4, false);
        let copy = data.row(7).to_owned();
        data.row_mut(30).assign(&copy);
        let tree = KdTree::build(&data);
        let nn = tree.knn(&data, &copy.to_vec(), 1, Some(7));
        assert_eq!(nn[0], Neighbor { squared_distance: 0.0, index: 30 });
    }

    #[test]
    fn all_identical_rows_tie_by_index() {
        let data = Array2::from_elem((40, 2), 1.5);
        let tree = KdTree::build(&data);
        let got: Vec<usize> = tree.knn(&data, &[1.5, 1.5], 3, Some(0)).iter().map(|n| n.index).collect();
        assert_eq!(got, vec![1, 2, 3]);
    }
}
