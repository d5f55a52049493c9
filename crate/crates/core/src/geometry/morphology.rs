//! Binary voxel morphology.

use std::collections::VecDeque;

use super::voxel::VoxelGrid;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    /// Face neighbours.
    Six,
    /// Face, edge and corner neighbours.
    TwentySix,
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let l1 = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => l1 == 1,
                        Connectivity::TwentySix => l1 > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

fn neighbors(r: usize, i: usize, offs: &[[isize; 3]], mut f: impl FnMut(usize)) {
    let (x, y, z) = ((i % r) as isize, ((i / r) % r) as isize, (i / (r * r)) as isize);
    let ri = r as isize;
    for o in offs {
        let (a, b, c) = (x + o[0], y + o[1], z + o[2]);
        if a >= 0 && b >= 0 && c >= 0 && a < ri && b < ri && c < ri {
            f((a + ri * (b + ri * c)) as usize);
        }
    }
}

/// Binary dilation of the voxels `>= 0.5`, repeated `radius` times.
pub fn dilate<T: Scalar>(grid: &VoxelGrid<T>, radius: usize, conn: Connectivity) -> Result<VoxelGrid<T>> {
    let r = grid.resolution();
    let offs = conn.offsets();
    let mut mask = grid.occupied(T::lit(0.5));
    for _ in 0..radius {
        let mut next = mask.clone();
        for (i, &m) in mask.iter().enumerate() {
            if m {
                neighbors(r, i, &offs, |j| next[j] = true);
            }
        }
        mask = next;
    }
    VoxelGrid::from_mask(r, &mask)
}

/// Marks every voxel not reachable from the grid boundary through empty voxels
/// (6-connected) as occupied.
pub fn fill_interior<T: Scalar>(grid: &VoxelGrid<T>) -> Result<VoxelGrid<T>> {
    let r = grid.resolution();
    let solid = grid.occupied(T::lit(0.5));
    let mut exterior = vec![false; solid.len()];
    let mut queue = VecDeque::new();
    for (i, &s) in solid.iter().enumerate() {
        let [x, y, z] = grid.coords(i);
        let on_boundary = [x, y, z].iter().any(|&c| c == 0 || c == r - 1);
        if on_boundary && !s {
            exterior[i] = true;
            queue.push_back(i);
        }
    }
    let offs = Connectivity::Six.offsets();
    while let Some(i) = queue.pop_front() {
        neighbors(r, i, &offs, |j| {
            if !solid[j] && !exterior[j] {
                exterior[j] = true;
                queue.push_back(j);
            }
        });
    }
    let mask: Vec<bool> = exterior.iter().map(|&e| !e).collect();
    VoxelGrid::from_mask(r, &mask)
}
