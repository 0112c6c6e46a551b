use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;

const LEAF_SIZE: usize = 8;

/// Squared distance with a fixed operation order, shared with the brute-force paths
/// so both produce bit-identical keys.
#[inline]
pub fn dist2(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

/// Total order on `(distance², index)`; distances are never NaN for finite inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { lo: usize, hi: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Balanced 3-D tree. Immutable after construction.
///
/// Left subtrees hold coordinates `≤ value` and right subtrees `≥ value` on the split axis.
#[derive(Debug, Clone)]
pub struct KdIndex {
    points: Vec<Vector3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdIndex {
    pub fn build(points: Vec<Vector3<f64>>) -> Self {
        let mut index = Self { order: (0..points.len()).collect(), points, nodes: Vec::new() };
        if !index.points.is_empty() {
            index.build_range(0, index.points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Vector3<f64> {
        &self.points[i]
    }

    fn build_range(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        if hi - lo <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { lo, hi });
            return id;
        }
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[lo..hi] {
            min = min.inf(&self.points[i]);
            max = max.sup(&self.points[i]);
        }
        let axis = (max - min).imax();
        let mid = (lo + hi) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { lo, hi });
        let left = self.build_range(lo, mid);
        let right = self.build_range(mid, hi);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// The `k` nearest points as `(distance², index)`, ascending with ties broken by index.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<(f64, usize)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut out: Vec<(f64, usize)> = heap.into_iter().map(|Key(d, i)| (d, i)).collect();
        out.sort_by(|a, b| Key(a.0, a.1).cmp(&Key(b.0, b.1)));
        out
    }

    fn search(&self, node: usize, q: &Vector3<f64>, k: usize, heap: &mut BinaryHeap<Key>) {
        match self.nodes[node] {
            Node::Leaf { lo, hi } => {
                for &i in &self.order[lo..hi] {
                    let key = Key(dist2(q, &self.points[i]), i);
                    if heap.len() < k {
                        heap.push(key);
                    } else if key < *heap.peek().expect("non-empty") {
                        heap.pop();
                        heap.push(key);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // `≤` keeps equal-distance candidates with smaller indices reachable.
                if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").0 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

/// Reference k-nearest search over every point.
pub fn brute_force_knn(points: &[Vector3<f64>], query: &Vector3<f64>, k: usize) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (dist2(query, p), i)).collect();
    all.sort_by(|a, b| Key(a.0, a.1).cmp(&Key(b.0, b.1)));
    all.truncate(k);
    all
}
