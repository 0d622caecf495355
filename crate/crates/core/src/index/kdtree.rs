use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::{vec3, Point3, PointCloud};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.dist_sq.sqrt()
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

// Max-heap on (distance, index).
struct HeapItem(Neighbor);

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.0.key_cmp(&other.0) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.key_cmp(&other.0)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Immutable 3D kd-tree. Query results refer to indices of the source slice;
/// distance ties are broken by the lower index, so results equal a linear
/// scan exactly.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl SpatialIndex {
    pub fn build(points: &[Point3]) -> Self {
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build_node(0, points.len());
        }
        index
    }

    pub fn from_cloud(pc: &PointCloud) -> Self {
        Self::build(&pc.points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Point3 {
        self.points[i]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for k in 0..3 {
                lo[k] = lo[k].min(self.points[i][k]);
                hi[k] = hi[k].max(self.points[i][k]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        if hi[axis] - lo[axis] == 0.0 {
            // All points coincide.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
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

    /// The `k` nearest points in ascending (distance, index) order.
    pub fn knn(&self, query: Point3, k: usize) -> Result<Vec<Neighbor>> {
        self.knn_filtered(query, k, None)
    }

    /// Like [`knn`](Self::knn) but never returns `exclude` (used for kNN graphs
    /// where a point is not its own neighbour).
    pub fn knn_excluding(&self, query: Point3, k: usize, exclude: usize) -> Result<Vec<Neighbor>> {
        self.knn_filtered(query, k, Some(exclude))
    }

    fn knn_filtered(&self, query: Point3, k: usize, exclude: Option<usize>) -> Result<Vec<Neighbor>> {
        let available = self.len() - usize::from(exclude.is_some_and(|e| e < self.len()));
        if k > available {
            return Err(Error::InvalidInput(format!(
                "k = {k} exceeds the {available} indexed candidate points"
            )));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, exclude, &mut heap);
        let mut out: Vec<Neighbor> = heap.into_iter().map(|h| h.0).collect();
        out.sort_by(|a, b| a.key_cmp(b));
        Ok(out)
    }

    pub fn nearest(&self, query: Point3) -> Option<Neighbor> {
        if self.is_empty() {
            return None;
        }
        self.knn(query, 1).ok().and_then(|v| v.into_iter().next())
    }

    fn search(
        &self,
        node: usize,
        q: Point3,
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<HeapItem>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let cand = Neighbor {
                        index: i,
                        dist_sq: vec3::dist_sq(q, self.points[i]),
                    };
                    if heap.len() < k {
                        heap.push(HeapItem(cand));
                    } else if cand.key_cmp(&heap.peek().unwrap().0) == Ordering::Less {
                        heap.pop();
                        heap.push(HeapItem(cand));
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
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, heap);
                let plane = diff * diff;
                if heap.len() < k || plane <= heap.peek().unwrap().0.dist_sq {
                    self.search(far, q, k, exclude, heap);
                }
            }
        }
    }
}

/// Flattened kNN graph: row `i` holds the `k` nearest other points of `i`.
pub fn knn_graph(points: &[Point3], k: usize) -> Result<Vec<usize>> {
    if k >= points.len() {
        return Err(Error::InvalidInput(format!(
            "kNN graph needs k < n (k = {k}, n = {})",
            points.len()
        )));
    }
    let index = SpatialIndex::build(points);
    let mut out = Vec::with_capacity(points.len() * k);
    for (i, &p) in points.iter().enumerate() {
        out.extend(index.knn_excluding(p, k, i)?.into_iter().map(|n| n.index));
    }
    Ok(out)
}
