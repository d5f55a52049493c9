//! Skeleton extraction from surfaces, curve/sheet labeling and skeletal volumes.

use nalgebra::{Matrix3, SymmetricEigen};
use skelforge_core::geometry::{dilate, fill_interior, Connectivity, Label, NearestIndex, PointSet, VoxelGrid};
use skelforge_core::{Error, Result};

/// Marches each oriented surface point inward along `-n` while its distance to the
/// nearest surface sample keeps growing. Points stop on the medial locus, where the
/// opposite side starts to get closer.
pub fn sink_to_skeleton(surface: &PointSet<f64>, step: f64, max_steps: usize) -> Result<PointSet<f64>> {
    let normals = surface.require_normals()?;
    if !(step > 0.0) {
        return Err(Error::Invalid("sink step must be positive".into()));
    }
    if surface.is_empty() {
        return Err(Error::Empty("surface samples"));
    }
    let index = NearestIndex::new(&surface.points);
    let points = surface
        .points
        .iter()
        .zip(normals)
        .map(|(&p, n)| {
            let mut cur = p;
            let mut d = 0.0;
            for _ in 0..max_steps {
                let next = [0, 1, 2].map(|k| cur[k] - step * n[k]);
                let (_, d2) = index.nearest(next);
                let dn = d2.sqrt();
                if dn < d {
                    break;
                }
                cur = next;
                d = dn;
            }
            cur
        })
        .collect();
    Ok(PointSet::new(points))
}

/// Labels each point by PCA over its `k` nearest neighbours (itself included): a curve
/// point has `lambda_2 / lambda_1 < ratio`, where `lambda_1 >= lambda_2` are the two
/// leading covariance eigenvalues.
pub fn classify_curve_sheet(points: &[[f64; 3]], k: usize, ratio: f64) -> Result<Vec<Label>> {
    if k < 3 {
        return Err(Error::Invalid(format!("curve/sheet neighbourhood k = {k} is below 3")));
    }
    if points.len() < k {
        return Err(Error::Invalid(format!(
            "curve/sheet classification needs at least k = {k} points, got {}",
            points.len()
        )));
    }
    let index = NearestIndex::new(points);
    Ok(points
        .iter()
        .map(|&p| {
            let nb = index.k_nearest(p, k);
            let mut mean = [0.0; 3];
            for &i in &nb {
                for a in 0..3 {
                    mean[a] += points[i][a] / k as f64;
                }
            }
            let mut cov = Matrix3::<f64>::zeros();
            for &i in &nb {
                let d = [0, 1, 2].map(|a| points[i][a] - mean[a]);
                for r in 0..3 {
                    for c in 0..3 {
                        cov[(r, c)] += d[r] * d[c] / k as f64;
                    }
                }
            }
            let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|v: &f64| v.max(0.0)).collect();
            ev.sort_by(|a, b| b.total_cmp(a));
            if ev[0] <= 0.0 || ev[1] / ev[0] < ratio {
                Label::Curve
            } else {
                Label::Sheet
            }
        })
        .collect())
}

/// Default dilation radius: 2 voxels at resolution 256, scaled linearly, at least 1.
pub fn default_dilation_radius(res: usize) -> usize {
    ((2 * res) as f64 / 256.0).round().max(1.0) as usize
}

/// Quantizes skeletal points into an `res^3` grid, fills enclosed cavities and dilates.
pub fn build_gt_volume(skeleton: &[[f64; 3]], res: usize, radius: usize, conn: Connectivity) -> Result<VoxelGrid<f64>> {
    if skeleton.is_empty() {
        return Err(Error::Empty("skeleton points"));
    }
    let mut grid = VoxelGrid::zeros(res);
    for &p in skeleton {
        let [x, y, z] = grid
            .voxel_of(p)
            .ok_or_else(|| Error::Invalid(format!("skeletal point {p:?} lies outside the unit cube")))?;
        grid.set(x, y, z, 1.0);
    }
    let filled = fill_interior(&grid)?;
    dilate(&filled, radius, conn)
}
