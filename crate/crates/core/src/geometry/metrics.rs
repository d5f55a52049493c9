use super::voxel::VoxelGrid;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Intersection over union of the binarized grids; 1 when both are empty.
pub fn iou<T: Scalar>(a: &VoxelGrid<T>, b: &VoxelGrid<T>, thresh: T) -> Result<f64> {
    if a.resolution() != b.resolution() {
        return Err(Error::invalid(format!(
            "iou of grids with resolutions {} and {}",
            a.resolution(),
            b.resolution()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        let (x, y) = (x >= thresh, y >= thresh);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
