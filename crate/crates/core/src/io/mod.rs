//! Mesh, point and volume file formats.

mod obj;
mod ply;
mod skv;

pub use obj::{read_obj, write_obj};
pub use ply::{read_ply_mesh, read_ply_points, write_ply_mesh, write_ply_points};
pub use skv::{read_skv, write_skv, SKV_MAGIC};
