//! Evaluation metrics: Chamfer distance on surface samples and volumetric IoU.

use skelforge_core::geometry::{chamfer_distance, fill_interior, iou, sample_surface, Reduction, TriangleMesh, VoxelGrid};
use skelforge_core::Result;

/// Chamfer distances are reported multiplied by this factor.
pub const CD_SCALE: f64 = 1000.0;

/// Mean squared nearest-neighbour distance in each direction, summed, times
/// [`CD_SCALE`], between `n` area-uniform samples of each mesh.
pub fn chamfer_metric(pred: &TriangleMesh<f64>, gt: &TriangleMesh<f64>, n: usize, seed: u64) -> Result<f64> {
    let a = sample_surface(pred, n, seed)?.points.points;
    let b = sample_surface(gt, n, seed)?.points.points;
    Ok(chamfer_distance(&a, &b, Reduction::Mean)? * CD_SCALE)
}

/// Solid occupancy of a mesh on an `res^3` grid over the unit cube: voxels hit by dense
/// surface samples, plus everything they enclose.
pub fn solid_voxels(mesh: &TriangleMesh<f64>, res: usize, seed: u64) -> Result<VoxelGrid<f64>> {
    let mut shell = VoxelGrid::zeros(res);
    // About 16 samples per voxel face of surface area.
    let area = mesh.total_area();
    let n = ((area * (res * res) as f64 * 16.0).ceil() as usize).max(1000);
    for p in &sample_surface(mesh, n, seed)?.points.points {
        if let Some([x, y, z]) = shell.voxel_of(*p) {
            shell.set(x, y, z, 1.0);
        }
    }
    for v in &mesh.vertices {
        if let Some([x, y, z]) = shell.voxel_of(*v) {
            shell.set(x, y, z, 1.0);
        }
    }
    fill_interior(&shell)
}

/// IoU of the solid voxelizations of two meshes at `res^3`.
pub fn iou_metric(pred: &TriangleMesh<f64>, gt: &TriangleMesh<f64>, res: usize, seed: u64) -> Result<f64> {
    iou(&solid_voxels(pred, res, seed)?, &solid_voxels(gt, res, seed)?, 0.5)
}
