//! Exact spatial index over a point cloud.
//!
//! A balanced k-d tree stored implicitly in an array: the node for a slot
//! range is its midpoint, split on `depth % dims`. Queries return original
//! cloud indices and are exact (no approximation), so brute-force scans must
//! agree with them point for point. The 2D variant indexes the x-y
//! projection and measures planar distances; z is ignored entirely.

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexDims {
    Two,
    Three,
}

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    dims: usize,
    /// Original cloud indices in tree order.
    ids: Vec<usize>,
    /// Coordinates aligned with `ids`; z is zeroed for 2D indexes.
    coords: Vec<[f64; 3]>,
}

impl SpatialIndex {
    /// Indexes every point of the cloud.
    pub fn build(cloud: &PointCloud, dims: IndexDims) -> Self {
        let all: Vec<usize> = (0..cloud.len()).collect();
        Self::build_subset(cloud, &all, dims)
    }

    /// Indexes only `subset` (original cloud indices); queries report those
    /// same indices back.
    pub fn build_subset(cloud: &PointCloud, subset: &[usize], dims: IndexDims) -> Self {
        let dims = match dims {
            IndexDims::Two => 2,
            IndexDims::Three => 3,
        };
        let mut entries: Vec<(usize, [f64; 3])> = subset
            .iter()
            .map(|&i| {
                let p = &cloud.points[i];
                let z = if dims == 2 { 0.0 } else { p.z };
                (i, [p.x, p.y, z])
            })
            .collect();
        build_recursive(&mut entries, 0, dims);
        let (ids, coords) = entries.into_iter().unzip();
        SpatialIndex { dims, ids, coords }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// All indexed points within `radius` (inclusive) of `q`, sorted by
    /// original index. The query point itself is not excluded; use
    /// [`SpatialIndex::radius_query_excluding`] for member queries.
    pub fn radius_query(&self, q: &Point, radius: f64) -> Result<Vec<usize>> {
        self.radius_query_excluding(q, usize::MAX, radius)
    }

    /// Like [`SpatialIndex::radius_query`], but omits the member whose
    /// original index equals `self_id`. Exclusion is by index identity, not
    /// by coordinates, so coincident points are still reported.
    pub fn radius_query_excluding(
        &self,
        q: &Point,
        self_id: usize,
        radius: f64,
    ) -> Result<Vec<usize>> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::parameter(
                "radius",
                format!("{radius} must be positive and finite"),
            ));
        }
        let mut out = Vec::new();
        if !self.ids.is_empty() {
            let qc = self.query_coords(q);
            self.radius_recurse(0, self.ids.len(), 0, &qc, radius * radius, self_id, &mut out);
            out.sort_unstable();
        }
        Ok(out)
    }

    /// The `k` nearest indexed points to `q` as `(index, distance)`, sorted
    /// ascending by distance with ties broken by lower original index. If
    /// `k` exceeds the index size the whole index is returned in that order.
    pub fn knn_query(&self, q: &Point, k: usize) -> Result<Vec<(usize, f64)>> {
        self.knn_query_excluding(q, usize::MAX, k)
    }

    /// Like [`SpatialIndex::knn_query`], but omits the member whose original
    /// index equals `self_id`.
    pub fn knn_query_excluding(
        &self,
        q: &Point,
        self_id: usize,
        k: usize,
    ) -> Result<Vec<(usize, f64)>> {
        if k == 0 {
            return Err(Error::parameter("k", "must be at least 1"));
        }
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if !self.ids.is_empty() {
            let qc = self.query_coords(q);
            self.knn_recurse(0, self.ids.len(), 0, &qc, self_id, k, &mut heap);
        }
        let mut out: Vec<(f64, usize)> = heap;
        out.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(out.into_iter().map(|(d2, id)| (id, d2.sqrt())).collect())
    }

    fn query_coords(&self, q: &Point) -> [f64; 3] {
        let z = if self.dims == 2 { 0.0 } else { q.z };
        [q.x, q.y, z]
    }

    fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        let dz = a[2] - b[2];
        dx * dx + dy * dy + dz * dz
    }

    fn radius_recurse(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        q: &[f64; 3],
        r2: f64,
        self_id: usize,
        out: &mut Vec<usize>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let node = &self.coords[mid];
        if self.ids[mid] != self_id && Self::dist2(q, node) <= r2 {
            out.push(self.ids[mid]);
        }
        let axis = depth % self.dims;
        let diff = q[axis] - node[axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.radius_recurse(near.0, near.1, depth + 1, q, r2, self_id, out);
        if diff * diff <= r2 {
            self.radius_recurse(far.0, far.1, depth + 1, q, r2, self_id, out);
        }
    }

    fn knn_recurse(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        q: &[f64; 3],
        self_id: usize,
        k: usize,
        heap: &mut Vec<(f64, usize)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let node = &self.coords[mid];
        let id = self.ids[mid];
        if id != self_id {
            let d2 = Self::dist2(q, node);
            heap_offer(heap, k, (d2, id));
        }
        let axis = depth % self.dims;
        let diff = q[axis] - node[axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_recurse(near.0, near.1, depth + 1, q, self_id, k, heap);
        // The far side can still hold a candidate that beats the current
        // worst on the (distance, index) order, so prune only on strict
        // distance excess.
        if heap.len() < k || diff * diff <= heap[0].0 {
            self.knn_recurse(far.0, far.1, depth + 1, q, self_id, k, heap);
        }
    }
}

/// Binary max-heap on (distance^2, original index), worst candidate at the
/// root; keeps the best `k`.
fn heap_offer(heap: &mut Vec<(f64, usize)>, k: usize, item: (f64, usize)) {
    let worse = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).is_gt();
    if heap.len() < k {
        heap.push(item);
        let mut i = heap.len() - 1;
        while i > 0 {
            let parent = (i - 1) / 2;
            if worse(&heap[i], &heap[parent]) {
                heap.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    } else if worse(&heap[0], &item) {
        heap[0] = item;
        let mut i = 0;
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut largest = i;
            if l < heap.len() && worse(&heap[l], &heap[largest]) {
                largest = l;
            }
            if r < heap.len() && worse(&heap[r], &heap[largest]) {
                largest = r;
            }
            if largest == i {
                break;
            }
            heap.swap(i, largest);
            i = largest;
        }
    }
}

fn build_recursive(entries: &mut [(usize, [f64; 3])], depth: usize, dims: usize) {
    if entries.len() <= 1 {
        return;
    }
    let axis = depth % dims;
    let mid = entries.len() / 2;
    entries.select_nth_unstable_by(mid, |a, b| {
        a.1[axis].total_cmp(&b.1[axis]).then(a.0.cmp(&b.0))
    });
    let (left, rest) = entries.split_at_mut(mid);
    build_recursive(left, depth + 1, dims);
    build_recursive(&mut rest[1..], depth + 1, dims);
}
