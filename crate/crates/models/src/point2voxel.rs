//! Soft voxelization of skeletal points: `U(i) = exp(-M d_i^2)`, where `d_i` is the
//! distance from voxel center `i` to its nearest point, measured in voxels.

use skelforge_core::autodiff::{backward_fn, Tape, Var};
use skelforge_core::geometry::{center_coord, Point3, VoxelGrid};
use skelforge_core::{Error, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct P2VConfig {
    /// Sharpness `M`.
    pub m: f64,
    /// Values below this are truncated to zero.
    pub tol: f64,
}

impl Default for P2VConfig {
    fn default() -> Self {
        P2VConfig { m: 10.0, tol: 1e-6 }
    }
}

impl P2VConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) || !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Invalid(format!("point-to-voxel needs M > 0 and 0 < tol < 1, got {self:?}")));
        }
        Ok(())
    }

    /// Truncation radius in voxels: `exp(-M rho^2) = tol`.
    pub fn rho_voxels(&self) -> f64 {
        ((1.0 / self.tol).ln() / self.m).sqrt()
    }
}

/// Per-voxel squared distance (in voxels) to the nearest point within the truncation
/// radius, and that point's index. Ties keep the lowest index.
fn nearest_field(points: &[Point3<f64>], res: usize, rho: f64) -> (Vec<f64>, Vec<u32>) {
    let n = res * res * res;
    let mut best = vec![f64::INFINITY; n];
    let mut arg = vec![u32::MAX; n];
    let rho2 = rho * rho;
    let rf = res as f64;
    for (pi, p) in points.iter().enumerate() {
        let g = p.map(|c| (c + 0.5) * rf - 0.5);
        let lo = g.map(|c| (c - rho).ceil().max(0.0));
        let hi = g.map(|c| (c + rho).floor().min(rf - 1.0));
        if (0..3).any(|k| lo[k] > hi[k]) {
            continue;
        }
        for z in lo[2] as usize..=hi[2] as usize {
            let dz = (center_coord::<f64>(res, z) - p[2]) * rf;
            for y in lo[1] as usize..=hi[1] as usize {
                let dy = (center_coord::<f64>(res, y) - p[1]) * rf;
                let dyz = dy * dy + dz * dz;
                if dyz > rho2 {
                    continue;
                }
                for x in lo[0] as usize..=hi[0] as usize {
                    let dx = (center_coord::<f64>(res, x) - p[0]) * rf;
                    let d2 = dx * dx + dyz;
                    let i = x + res * (y + res * z);
                    if d2 <= rho2 && d2 < best[i] {
                        best[i] = d2;
                        arg[i] = pi as u32;
                    }
                }
            }
        }
    }
    (best, arg)
}

/// Soft occupancy `[1, 1, r, r, r]` of `[N, 3]` points, differentiable in the points.
///
/// Only voxels within the truncation radius of some point are visited. The gradient of
/// each active voxel flows to its nearest point.
pub fn point_to_voxel(tape: &mut Tape<f64>, points: Var, res: usize, cfg: P2VConfig) -> Result<Var> {
    cfg.validate()?;
    let shape = tape.shape(points).to_vec();
    if shape.len() != 2 || shape[1] != 3 || shape[0] == 0 || res == 0 {
        return Err(Error::Shape {
            op: "point_to_voxel",
            shapes: vec![shape],
        });
    }
    let pts: Vec<Point3<f64>> = tape.value(points).data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    let (best, arg) = nearest_field(&pts, res, cfg.rho_voxels());
    let values: Vec<f64> = best.iter().map(|&d2| if d2.is_finite() { (-cfg.m * d2).exp() } else { 0.0 }).collect();
    let out = Tensor::new(vec![1, 1, res, res, res], values.clone())?;
    let m = cfg.m;
    Ok(tape.push(
        out,
        &[points],
        backward_fn("point_to_voxel", move |_: &[&Tensor<f64>], _: &Tensor<f64>, g: &Tensor<f64>| {
            let rf = res as f64;
            let k = 2.0 * m * rf * rf;
            let mut gp = vec![0.0; pts.len() * 3];
            for (i, (&a, &gv)) in arg.iter().zip(g.data()).enumerate() {
                if a == u32::MAX || gv == 0.0 {
                    continue;
                }
                let (x, y, z) = (i % res, (i / res) % res, i / (res * res));
                let c = [center_coord::<f64>(res, x), center_coord(res, y), center_coord(res, z)];
                let p = pts[a as usize];
                let s = gv * values[i] * k;
                for d in 0..3 {
                    gp[3 * a as usize + d] += s * (c[d] - p[d]);
                }
            }
            vec![Some(Tensor::new(vec![pts.len(), 3], gp).unwrap())]
        }),
    ))
}

/// Untruncated evaluation scanning every voxel against every point.
pub fn point_to_voxel_exact(points: &[Point3<f64>], res: usize, m: f64) -> VoxelGrid<f64> {
    let rf = res as f64;
    VoxelGrid::from_fn(res, |x, y, z| {
        let c = [center_coord::<f64>(res, x), center_coord(res, y), center_coord(res, z)];
        let d2 = points
            .iter()
            .map(|p| (0..3).map(|k| ((c[k] - p[k]) * rf).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        (-m * d2).exp()
    })
    .expect("values in [0, 1]")
}

/// `[1, 1, r, r, r]` tensor view of a grid.
pub fn grid_to_tensor(grid: &VoxelGrid<f64>) -> Tensor<f64> {
    let r = grid.resolution();
    Tensor::new(vec![1, 1, r, r, r], grid.values().to_vec()).expect("grid shape")
}

/// Inverse of [`grid_to_tensor`]; values are clamped into `[0, 1]`.
pub fn tensor_to_grid(t: &Tensor<f64>) -> Result<VoxelGrid<f64>> {
    let s = t.shape();
    let r = *s.last().unwrap_or(&0);
    if t.len() != r * r * r || r == 0 {
        return Err(Error::Shape {
            op: "tensor_to_grid",
            shapes: vec![s.to_vec()],
        });
    }
    VoxelGrid::new(r, t.data().iter().map(|v| v.clamp(0.0, 1.0)).collect())
}
