//! Point sets, voxel grids, meshes and the geometric kernels built on them.

mod bilinear;
mod camera;
mod chamfer;
mod curvature;
mod marching_cubes;
mod mc_tables;
mod mesh;
mod metrics;
mod morphology;
mod pointset;
mod sampling;
mod spatial;
mod voxel;

pub use bilinear::{bilinear_value, pixel_to_texel};
pub use camera::{Camera, Projection};
pub use chamfer::{
    chamfer_brute_force, chamfer_distance, laplacian_deltas, nearest_assignments, weighted_chamfer_distance,
    Reduction,
};
pub use curvature::{curvature_weights, CurvatureRule};
pub use marching_cubes::marching_cubes;
pub use mesh::{grid_torus, octahedron, TriangleMesh};
pub use metrics::iou;
pub use morphology::{dilate, fill_interior, Connectivity};
pub use pointset::{add, cross, dist2, dot, norm, normalize, scale, sub, Label, Point3, PointSet};
pub use sampling::{sample_surface, SurfaceSamples};
pub use spatial::{brute_force_nearest, NearestIndex};
pub use voxel::{center_coord, VoxelGrid};
