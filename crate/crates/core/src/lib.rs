//! Reverse-mode autodiff, small neural layers and the geometry kernels used by the
//! skeleton-guided reconstruction pipeline.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix the
//! double-precision instantiation the models use.

pub mod autodiff;
pub mod error;
pub mod geometry;
pub mod io;
pub mod nn;
mod scalar;
mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tape64 = autodiff::Tape<f64>;
pub type ParamStore64 = nn::ParamStore<f64>;
pub type PointSet64 = geometry::PointSet<f64>;
pub type VoxelGrid64 = geometry::VoxelGrid<f64>;
pub type TriangleMesh64 = geometry::TriangleMesh<f64>;

pub type Tensor32 = Tensor<f32>;
pub type Tape32 = autodiff::Tape<f32>;
pub type PointSet32 = geometry::PointSet<f32>;
pub type VoxelGrid32 = geometry::VoxelGrid<f32>;
pub type TriangleMesh32 = geometry::TriangleMesh<f32>;
