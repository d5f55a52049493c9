//! Table-driven isosurface extraction.

use std::collections::HashMap;

use super::mc_tables::TRI_TABLE;
use super::mesh::TriangleMesh;
use super::pointset::Point3;
use super::voxel::VoxelGrid;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Cube corner offsets `(x, y, z)` in table order.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Cube edges as (lower corner, axis), in table order.
const EDGES: [(usize, usize); 12] = [
    (0, 0),
    (1, 1),
    (3, 0),
    (0, 1),
    (4, 0),
    (5, 1),
    (7, 0),
    (4, 1),
    (0, 2),
    (1, 2),
    (2, 2),
    (3, 2),
];

/// Extracts the `iso` level set of the grid, sampled at voxel centers.
///
/// Vertices lie on cell edges by linear interpolation and are shared between adjacent
/// cells, so grids whose boundary layer is below `iso` give closed meshes. Triangles
/// are oriented with normals pointing from high to low values. A grid without
/// crossings yields an empty mesh.
pub fn marching_cubes<T: Scalar>(grid: &VoxelGrid<T>, iso: T) -> Result<TriangleMesh<T>> {
    let r = grid.resolution();
    if r < 2 {
        return Err(Error::invalid(format!("marching cubes needs resolution >= 2, got {r}")));
    }
    let mut vertices: Vec<Point3<T>> = Vec::new();
    let mut faces = Vec::new();
    let mut edge_vertex: HashMap<usize, usize> = HashMap::new();
    let vals = grid.values();
    for z in 0..r - 1 {
        for y in 0..r - 1 {
            for x in 0..r - 1 {
                let mut case = 0usize;
                let mut cv = [T::zero(); 8];
                for (k, c) in CORNERS.iter().enumerate() {
                    cv[k] = vals[grid.index(x + c[0], y + c[1], z + c[2])];
                    if cv[k] < iso {
                        case |= 1 << k;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRI_TABLE[case];
                let mut ids = [0usize; 3];
                for (t, &e) in row.iter().take_while(|&&e| e >= 0).enumerate() {
                    let (c0, axis) = EDGES[e as usize];
                    let p0 = [x + CORNERS[c0][0], y + CORNERS[c0][1], z + CORNERS[c0][2]];
                    let key = 3 * grid.index(p0[0], p0[1], p0[2]) + axis;
                    let id = *edge_vertex.entry(key).or_insert_with(|| {
                        let mut p1 = p0;
                        p1[axis] += 1;
                        let v0 = vals[grid.index(p0[0], p0[1], p0[2])];
                        let v1 = vals[grid.index(p1[0], p1[1], p1[2])];
                        let t = if v1 == v0 { T::lit(0.5) } else { (iso - v0) / (v1 - v0) };
                        let mut pos = grid.center(p0[0], p0[1], p0[2]);
                        pos[axis] += t * grid.voxel_size();
                        vertices.push(pos);
                        vertices.len() - 1
                    });
                    ids[t % 3] = id;
                    if t % 3 == 2 {
                        faces.push(ids);
                    }
                }
            }
        }
    }
    Ok(TriangleMesh { vertices, faces })
}
