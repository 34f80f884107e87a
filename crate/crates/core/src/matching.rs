//! Exact k-nearest-neighbour search under the Euclidean metric.
//!
//! Tie rule shared by the kd-tree and the brute-force scan: let D be the
//! k-th smallest distance. Donors closer than D − eps are always kept; the
//! remaining slots go to donors within eps of D in increasing index order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-9;
pub const TIE_POLICY: &str = "distances within eps rank equal; lowest donor index wins";

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Serialize)]
pub struct MatchResult {
    pub k: usize,
    pub eps: f64,
    pub tie_policy: &'static str,
    /// Donor indices per query, ordered by (distance, index).
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn validate(donors: &DMatrix<f64>, queries: &DMatrix<f64>, k: usize, eps: f64) -> Result<()> {
    if donors.nrows() == 0 {
        return Err(Error::InvalidArgument("donor set is empty".into()));
    }
    if k == 0 || k > donors.nrows() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be between 1 and the number of donors ({})",
            donors.nrows()
        )));
    }
    if donors.ncols() != queries.ncols() {
        return Err(Error::InvalidArgument(format!(
            "donors have {} dimensions, queries {}",
            donors.ncols(),
            queries.ncols()
        )));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument("eps must be non-negative".into()));
    }
    if donors.iter().chain(queries.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite coordinate in matching space".into()));
    }
    Ok(())
}

/// Applies the tie rule to a candidate list that contains every donor with
/// distance ≤ D + eps, where `kth` is D.
fn apply_ties(mut cands: Vec<(f64, usize)>, kth: f64, k: usize, eps: f64) -> (Vec<usize>, Vec<f64>) {
    let mut chosen: Vec<(f64, usize)> = cands.iter().copied().filter(|(d, _)| *d < kth - eps).collect();
    cands.retain(|(d, _)| *d >= kth - eps && *d <= kth + eps);
    cands.sort_by_key(|c| c.1);
    chosen.extend(cands.into_iter().take(k - chosen.len()));
    chosen.sort_by(cmp_pair);
    chosen.into_iter().map(|(d, i)| (i, d)).unzip()
}

fn cmp_pair(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// O(n·m) reference scan.
pub fn brute_force_knn(donors: &DMatrix<f64>, queries: &DMatrix<f64>, k: usize, eps: f64) -> Result<MatchResult> {
    validate(donors, queries, k, eps)?;
    let d = rows(donors);
    let (indices, distances) = rows(queries)
        .iter()
        .map(|q| {
            let mut all: Vec<(f64, usize)> = d.iter().enumerate().map(|(i, p)| (distance(q, p), i)).collect();
            all.sort_by(cmp_pair);
            let kth = all[k - 1].0;
            all.retain(|(dd, _)| *dd <= kth + eps);
            apply_ties(all, kth, k, eps)
        })
        .unzip();
    Ok(MatchResult { k, eps, tie_policy: TIE_POLICY, indices, distances })
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: Box<Node>, right: Box<Node>, lo: Vec<f64>, hi: Vec<f64> },
}

/// Static kd-tree over donor rows.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec<f64>>,
    order: Vec<usize>,
    root: Node,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_pair(&(self.0, self.1), &(other.0, other.1))
    }
}

fn bounds(points: &[Vec<f64>], idx: &[usize], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &i in idx {
        for j in 0..dim {
            lo[j] = lo[j].min(points[i][j]);
            hi[j] = hi[j].max(points[i][j]);
        }
    }
    (lo, hi)
}

/// Distance from `q` to the box [lo, hi].
fn box_distance(q: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    q.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&x, (&l, &h))| {
            let d = if x < l {
                l - x
            } else if x > h {
                x - h
            } else {
                0.0
            };
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

impl KdTree {
    pub fn build(donors: &DMatrix<f64>) -> KdTree {
        let points = rows(donors);
        let dim = donors.ncols();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let (lo, hi) = bounds(&points, &order, dim);
        let root = Self::build_node(&points, &mut order, 0, dim);
        KdTree { points, order, root, lo, hi }
    }

    fn build_node(points: &[Vec<f64>], order: &mut [usize], offset: usize, dim: usize) -> Node {
        let n = order.len();
        if n <= LEAF_SIZE || dim == 0 {
            return Node::Leaf { start: offset, end: offset + n };
        }
        let (lo, hi) = bounds(points, order, dim);
        let split_dim =
            (0..dim).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a))).unwrap_or(0);
        if hi[split_dim] <= lo[split_dim] {
            return Node::Leaf { start: offset, end: offset + n };
        }
        order.sort_by(|&a, &b| points[a][split_dim].total_cmp(&points[b][split_dim]).then(a.cmp(&b)));
        let mid = n / 2;
        let value = points[order[mid]][split_dim];
        let (l, r) = order.split_at_mut(mid);
        let left = Box::new(Self::build_node(points, l, offset, dim));
        let right = Box::new(Self::build_node(points, r, offset + mid, dim));
        Node::Split { dim: split_dim, value, left, right, lo, hi }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn node_box<'a>(&'a self, node: &'a Node) -> Option<(&'a [f64], &'a [f64])> {
        match node {
            Node::Split { lo, hi, .. } => Some((lo, hi)),
            Node::Leaf { .. } => None,
        }
    }

    fn knn_rec(&self, node: &Node, q: &[f64], k: usize, heap: &mut BinaryHeap<HeapItem>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d = distance(q, &self.points[i]);
                    let item = HeapItem(d, i);
                    if heap.len() < k {
                        heap.push(item);
                    } else if item < *heap.peek().expect("non-empty heap") {
                        heap.pop();
                        heap.push(item);
                    }
                }
            }
            Node::Split { dim, value, left, right, .. } => {
                let (near, far) = if q[*dim] < *value { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, heap);
                let bound = heap.peek().map(|h| h.0).unwrap_or(f64::INFINITY);
                let far_d = match self.node_box(far) {
                    Some((lo, hi)) => box_distance(q, lo, hi),
                    None => (q[*dim] - value).abs(),
                };
                if heap.len() < k || far_d <= bound {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }

    fn radius_rec(&self, node: &Node, q: &[f64], r: f64, out: &mut Vec<(f64, usize)>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d = distance(q, &self.points[i]);
                    if d <= r {
                        out.push((d, i));
                    }
                }
            }
            Node::Split { left, right, .. } => {
                for child in [left, right] {
                    let inside = match self.node_box(child) {
                        Some((lo, hi)) => box_distance(q, lo, hi) <= r + 1e-12 * r.max(1.0),
                        None => true,
                    };
                    if inside {
                        self.radius_rec(child, q, r, out);
                    }
                }
            }
        }
    }

    /// k neighbours of one query point under the tie rule, as
    /// (indices, distances).
    pub fn query(&self, q: &[f64], k: usize, eps: f64) -> (Vec<usize>, Vec<f64>) {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if box_distance(q, &self.lo, &self.hi).is_finite() {
            self.knn_rec(&self.root, q, k, &mut heap);
        }
        let kth = heap.peek().map(|h| h.0).unwrap_or(0.0);
        let mut cands = Vec::new();
        self.radius_rec(&self.root, q, kth + eps, &mut cands);
        cands.sort_by(cmp_pair);
        apply_ties(cands, kth, k, eps)
    }
}

/// kd-tree k-NN for every query row.
pub fn knn_query(donors: &DMatrix<f64>, queries: &DMatrix<f64>, k: usize, eps: f64) -> Result<MatchResult> {
    validate(donors, queries, k, eps)?;
    let tree = KdTree::build(donors);
    let q = rows(queries);
    let (indices, distances) = q.par_iter().map(|row| tree.query(row, k, eps)).unzip();
    Ok(MatchResult { k, eps, tie_policy: TIE_POLICY, indices, distances })
}

/// Matching on a single coordinate.
pub fn knn_query_1d(donors: &[f64], queries: &[f64], k: usize, eps: f64) -> Result<MatchResult> {
    let d = DMatrix::from_column_slice(donors.len(), 1, donors);
    let q = DMatrix::from_column_slice(queries.len(), 1, queries);
    knn_query(&d, &q, k, eps)
}
