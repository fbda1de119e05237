//! Kd-tree nearest-neighbor search over 3D points.
//!
//! Results are exact and match a brute-force scan including tie handling:
//! among equally-near points the lowest original index wins. Pruning only
//! discards subtrees whose axis gap is strictly greater than the current
//! best distance, so equal-distance candidates are always visited.

/// Squared Euclidean distance.
pub fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// L1 (Manhattan) distance.
pub fn dist_l1(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()
}

pub struct KdTree {
    points: Vec<[f64; 3]>,
    /// Original indices arranged in tree order (median at range midpoint).
    order: Vec<usize>,
}

impl KdTree {
    pub fn build(points: &[[f64; 3]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut tree = KdTree {
            points: points.to_vec(),
            order: Vec::new(),
        };
        build_range(&tree.points, &mut order, 0);
        tree.order = order;
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point by squared Euclidean distance: `(index, squared dist)`.
    pub fn nearest(&self, q: [f64; 3]) -> (usize, f64) {
        debug_assert!(!self.points.is_empty());
        let mut best = (usize::MAX, f64::INFINITY);
        self.search_l2(q, 0, self.order.len(), 0, &mut best);
        best
    }

    /// Nearest point by L1 distance: `(index, L1 dist)`.
    pub fn nearest_l1(&self, q: [f64; 3]) -> (usize, f64) {
        debug_assert!(!self.points.is_empty());
        let mut best = (usize::MAX, f64::INFINITY);
        self.search_l1(q, 0, self.order.len(), 0, &mut best);
        best
    }

    fn consider(&self, q: [f64; 3], idx: usize, best: &mut (usize, f64), l1: bool) {
        let p = self.points[idx];
        let d = if l1 { dist_l1(q, p) } else { dist2(q, p) };
        if d < best.1 || (d == best.1 && idx < best.0) {
            *best = (idx, d);
        }
    }

    fn search_l2(&self, q: [f64; 3], lo: usize, hi: usize, depth: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        self.consider(q, idx, best, false);
        let axis = depth % 3;
        let gap = q[axis] - self.points[idx][axis];
        let (near, far) = if gap < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search_l2(q, near.0, near.1, depth + 1, best);
        if gap * gap <= best.1 {
            self.search_l2(q, far.0, far.1, depth + 1, best);
        }
    }

    fn search_l1(&self, q: [f64; 3], lo: usize, hi: usize, depth: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        self.consider(q, idx, best, true);
        let axis = depth % 3;
        let gap = q[axis] - self.points[idx][axis];
        let (near, far) = if gap < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search_l1(q, near.0, near.1, depth + 1, best);
        if gap.abs() <= best.1 {
            self.search_l1(q, far.0, far.1, depth + 1, best);
        }
    }
}

fn build_range(points: &[[f64; 3]], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    let (left, rest) = order.split_at_mut(mid);
    build_range(points, left, depth + 1);
    build_range(points, &mut rest[1..], depth + 1);
}
