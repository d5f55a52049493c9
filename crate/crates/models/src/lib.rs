//! Skeleton-guided single-view reconstruction models: skeleton decoders, point-to-voxel
//! conversion, volume refinement, mesh deformation and the implicit surface field.

pub mod dataset;
pub mod decoders;
pub mod point2voxel;
pub mod refinement;
pub mod skegcnn;
pub mod skedisn;
