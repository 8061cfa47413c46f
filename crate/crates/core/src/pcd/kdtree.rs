use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Exact kd-tree over fixed-dimension rows stored contiguously.
///
/// Distances are squared Euclidean, accumulated coordinate by coordinate in
/// ascending axis order, so results match a naive scan bit for bit. Ties are
/// broken by the lower row index.
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    data: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

impl KdTree {
    /// Builds the tree over `data.len() / dim` rows.
    pub fn build(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "data length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        let n = data.len() / dim;
        let mut tree = Self {
            dim,
            data,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build_node(0, n);
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn coord(&self, i: usize, axis: usize) -> f64 {
        self.data[i * self.dim + axis]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // Split along the axis of largest extent.
        let mut axis = 0;
        let mut best_extent = f64::NEG_INFINITY;
        for a in 0..self.dim {
            let (lo, hi) = self.order[start..end]
                .iter()
                .map(|&i| self.coord(i, a))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            if hi - lo > best_extent {
                best_extent = hi - lo;
                axis = a;
            }
        }
        let mid = start + (end - start) / 2;
        let mut order = std::mem::take(&mut self.order);
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            self.coord(a, axis)
                .total_cmp(&self.coord(b, axis))
                .then(a.cmp(&b))
        });
        let value = self.coord(order[mid], axis);
        self.order = order;
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        Ok(())
    }

    /// The `min(k, len)` nearest rows as `(index, squared distance)`, nearest first.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        self.check_query(query)?;
        let k = k.min(self.len());
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_node(0, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        Ok(out.into_iter().map(|c| (c.index, c.dist)).collect())
    }

    fn knn_node(&self, node: usize, q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate {
                        dist: squared_distance(q, self.row(i)),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap holds k items") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_node(near, q, k, heap);
                let worst = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap.peek().map_or(f64::INFINITY, |c| c.dist)
                };
                if diff * diff <= worst {
                    self.knn_node(far, q, k, heap);
                }
            }
        }
    }

    /// Nearest row as `(index, squared distance)`.
    pub fn nearest(&self, query: &[f64]) -> Result<(usize, f64)> {
        Ok(self.knn(query, 1)?[0])
    }

    /// All rows with distance `<= radius`, sorted by distance then index.
    pub fn within_radius(&self, query: &[f64], radius: f64) -> Result<Vec<(usize, f64)>> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be >= 0, got {radius}")));
        }
        self.check_query(query)?;
        let r2 = radius * radius;
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            match self.nodes[node] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let d = squared_distance(query, self.row(i));
                        if d <= r2 {
                            out.push(Candidate { dist: d, index: i });
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let diff = query[axis] - value;
                    if diff <= 0.0 || diff * diff <= r2 {
                        stack.push(left);
                    }
                    if diff >= 0.0 || diff * diff <= r2 {
                        stack.push(right);
                    }
                }
            }
        }
        out.sort();
        Ok(out.into_iter().map(|c| (c.index, c.dist)).collect())
    }
}

/// Exact spatial index over the positions of a [`PointCloud`].
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    tree: KdTree,
}

impl NeighborIndex {
    pub fn new(pc: &PointCloud) -> Self {
        Self::from_positions(&pc.positions)
    }

    pub fn from_positions(positions: &[Vec3]) -> Self {
        let data = positions.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        Self {
            tree: KdTree::build(data, 3).expect("3-column data"),
        }
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    /// Indices of the `min(k, N)` nearest points, nearest first, ties to the lower index.
    pub fn knn(&self, query: &Vec3, k: usize) -> Result<Vec<usize>> {
        Ok(self.knn_with_distances(query, k)?.into_iter().map(|(i, _)| i).collect())
    }

    /// Like [`knn`](Self::knn) with squared distances attached.
    pub fn knn_with_distances(&self, query: &Vec3, k: usize) -> Result<Vec<(usize, f64)>> {
        self.tree.knn(query.as_slice(), k)
    }

    /// Points within `radius` (inclusive) as `(index, squared distance)`.
    pub fn radius(&self, query: &Vec3, radius: f64) -> Result<Vec<(usize, f64)>> {
        self.tree.within_radius(query.as_slice(), radius)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn brute_knn(points: &[Vec3], q: &Vec3, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (squared_distance(q.as_slice(), p.as_slice()), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn query_on_stored_point() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 2.0, 3.0), Vec3::new(-1.0, 0.5, 0.0)];
        let idx = NeighborIndex::from_positions(&pts);
        let r = idx.knn_with_distances(&pts[1], 1).unwrap();
        assert_eq!(r, vec![(1, 0.0)]);
    }

    #[test]
    fn ten_random_points_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..10)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let idx = NeighborIndex::from_positions(&pts);
        let q = Vec3::new(0.5, 0.5, 0.5);
        assert_eq!(idx.knn(&q, 4).unwrap(), brute_knn(&pts, &q, 4));
    }

    #[test]
    fn k_larger_than_n_returns_all() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        let idx = NeighborIndex::from_positions(&pts);
        assert_eq!(idx.knn(&Vec3::zeros(), 10).unwrap(), vec![0, 1]);
    }

    #[test]
    fn empty_index_errors() {
        let idx = NeighborIndex::from_positions(&[]);
        assert!(idx.knn(&Vec3::zeros(), 1).is_err());
    }

    #[test]
    fn ties_prefer_lower_index() {
        let pts: Vec<Vec3> = (0..40).map(|_| Vec3::new(1.0, 1.0, 1.0)).collect();
        let idx = NeighborIndex::from_positions(&pts);
        assert_eq!(idx.knn(&Vec3::zeros(), 3).unwrap(), vec![0, 1, 2]);
    }

    fn cloud() -> impl Strategy<Value = Vec<Vec3>> {
        // Coarse grid coordinates force plenty of distance ties.
        prop::collection::vec((-8i32..8, -8i32..8, -8i32..8), 1..200).prop_map(|v| {
            v.into_iter()
                .map(|(x, y, z)| Vec3::new(x as f64 * 0.25, y as f64 * 0.25, z as f64 * 0.25))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn knn_equals_brute_force(pts in cloud(), q in prop::array::uniform3(-2.5f64..2.5), k in 1usize..20) {
            let idx = NeighborIndex::from_positions(&pts);
            let q = Vec3::new(q[0], q[1], q[2]);
            prop_assert_eq!(idx.knn(&q, k).unwrap(), brute_knn(&pts, &q, k.min(pts.len())));
        }

        #[test]
        fn radius_returns_all_and_only(pts in cloud(), q in prop::array::uniform3(-2.5f64..2.5), r in 0.0f64..1.5) {
            let idx = NeighborIndex::from_positions(&pts);
            let q = Vec3::new(q[0], q[1], q[2]);
            let mut got: Vec<usize> = idx.radius(&q, r).unwrap().into_iter().map(|(i, _)| i).collect();
            got.sort_unstable();
            let want: Vec<usize> = (0..pts.len())
                .filter(|&i| squared_distance(q.as_slice(), pts[i].as_slice()) <= r * r)
                .collect();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn high_dimensional_nearest(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 1..80),
                                    q in prop::collection::vec(-1.0f64..1.0, 6)) {
            let data: Vec<f64> = rows.iter().flatten().copied().collect();
            let tree = KdTree::build(data, 6).unwrap();
            let (_, d) = tree.nearest(&q).unwrap();
            let brute = rows.iter().map(|r| squared_distance(&q, r)).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(d, brute);
        }
    }
}
