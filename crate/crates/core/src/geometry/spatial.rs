//! Nearest-neighbour queries on a uniform hash grid.

use super::pointset::{dist2, Point3};
use crate::scalar::Scalar;

/// Uniform grid over the bounding box of a point set.
///
/// Queries return the lowest-index point among those at minimal distance.
#[derive(Clone, Debug)]
pub struct NearestIndex<T> {
    points: Vec<Point3<T>>,
    lo: Point3<T>,
    cell: T,
    dims: [usize; 3],
    /// CSR layout: points of cell `c` are `items[starts[c]..starts[c + 1]]`, ascending.
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<T: Scalar> NearestIndex<T> {
    /// Builds the index; `points` must be non-empty.
    pub fn new(points: &[Point3<T>]) -> Self {
        assert!(!points.is_empty(), "NearestIndex over an empty point set");
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let ext: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]).to_f64_lossy()).collect();
        let max_ext = ext.iter().cloned().fold(0.0, f64::max).max(1e-9);
        // Roughly two points per occupied cell for surface-like sets.
        let target = (points.len() as f64 / 2.0).max(1.0);
        let vol: f64 = ext.iter().map(|e| e.max(max_ext * 1e-3)).product();
        let cell_f = (vol / target).cbrt().max(max_ext / 256.0).max(1e-9);
        // At most 257 cells per axis, so clamping never folds distant points into a cell.
        let cell = T::lit(cell_f);
        let dims = [0, 1, 2].map(|a| (ext[a] / cell_f).floor() as usize + 1);
        let ncell = dims[0] * dims[1] * dims[2];
        let mut index = NearestIndex {
            points: points.to_vec(),
            lo,
            cell,
            dims,
            starts: vec![0; ncell + 1],
            items: vec![0; points.len()],
        };
        let keys: Vec<usize> = points.iter().map(|&p| index.cell_key(index.cell_of(p))).collect();
        for &k in &keys {
            index.starts[k + 1] += 1;
        }
        for c in 0..ncell {
            index.starts[c + 1] += index.starts[c];
        }
        let mut fill = index.starts.clone();
        for (i, &k) in keys.iter().enumerate() {
            index.items[fill[k]] = i;
            fill[k] += 1;
        }
        index
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn cell_of(&self, p: Point3<T>) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let g = ((p[a] - self.lo[a]) / self.cell).floor();
            if g.is_nan() || g < T::zero() {
                0
            } else {
                g.to_usize().unwrap_or(usize::MAX).min(self.dims[a] - 1)
            }
        })
    }

    fn cell_key(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    /// `(index, squared distance)` of the nearest point.
    pub fn nearest(&self, q: Point3<T>) -> (usize, T) {
        let c = self.cell_of(q);
        let mut best = (usize::MAX, T::infinity());
        let max_ring = *self.dims.iter().max().unwrap();
        for ring in 0..=max_ring {
            self.visit_ring(c, ring, |i| {
                let d = dist2(q, self.points[i]);
                if d < best.1 || (d == best.1 && i < best.0) {
                    best = (i, d);
                }
            });
            // Every cell in a later ring is at least `ring * cell` away.
            let reach = T::from_usize_lossy(ring) * self.cell;
            if best.0 != usize::MAX && best.1 < reach * reach {
                break;
            }
        }
        best
    }

    /// All points within squared distance `r2` of `q`, ascending by index.
    pub fn within(&self, q: Point3<T>, r2: T) -> Vec<usize> {
        let r = r2.sqrt();
        let lo = self.cell_of([q[0] - r, q[1] - r, q[2] - r]);
        let hi = self.cell_of([q[0] + r, q[1] + r, q[2] + r]);
        let mut out = Vec::new();
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let k = self.cell_key([x, y, z]);
                    for &i in &self.items[self.starts[k]..self.starts[k + 1]] {
                        if dist2(q, self.points[i]) <= r2 {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest points ordered by (distance, index). Brute force over growing
    /// radii, exact.
    pub fn k_nearest(&self, q: Point3<T>, k: usize) -> Vec<usize> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut radius = self.cell;
        loop {
            let cand = self.within(q, radius * radius);
            if cand.len() >= k || cand.len() == self.points.len() {
                let mut scored: Vec<(T, usize)> = cand.iter().map(|&i| (dist2(q, self.points[i]), i)).collect();
                scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                // Only points inside the ball are guaranteed complete.
                return scored.into_iter().take(k).map(|(_, i)| i).collect();
            }
            radius = radius * T::lit(2.0);
        }
    }

    fn visit_ring(&self, c: [usize; 3], ring: usize, mut f: impl FnMut(usize)) {
        let r = ring as isize;
        let lo = |a: usize| (c[a] as isize - r).max(0);
        let hi = |a: usize| (c[a] as isize + r).min(self.dims[a] as isize - 1);
        for z in lo(2)..=hi(2) {
            for y in lo(1)..=hi(1) {
                for x in lo(0)..=hi(0) {
                    let on_shell = (x - c[0] as isize).abs() == r
                        || (y - c[1] as isize).abs() == r
                        || (z - c[2] as isize).abs() == r;
                    if !on_shell {
                        continue;
                    }
                    let k = self.cell_key([x as usize, y as usize, z as usize]);
                    for &i in &self.items[self.starts[k]..self.starts[k + 1]] {
                        f(i);
                    }
                }
            }
        }
    }
}

/// Exhaustive nearest neighbour, lowest index on ties.
pub fn brute_force_nearest<T: Scalar>(points: &[Point3<T>], q: Point3<T>) -> (usize, T) {
    let mut best = (usize::MAX, T::infinity());
    for (i, &p) in points.iter().enumerate() {
        let d = dist2(q, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}
