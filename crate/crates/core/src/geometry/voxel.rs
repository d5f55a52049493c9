use super::pointset::Point3;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Cubic occupancy grid over the fixed world box `[-0.5, 0.5]^3`.
///
/// Values are stored x-fastest: `index = x + r * (y + r * z)`. Voxel `(x, y, z)` has
/// its center at `-0.5 + (i + 0.5) / r` on each axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid<T> {
    res: usize,
    values: Vec<T>,
}

impl<T: Scalar> VoxelGrid<T> {
    pub fn zeros(res: usize) -> Self {
        VoxelGrid {
            res,
            values: vec![T::zero(); res * res * res],
        }
    }

    pub fn full(res: usize, v: T) -> Result<Self> {
        Self::new(res, vec![v; res * res * res])
    }

    /// Checks the value count and that all values lie in `[0, 1]`.
    pub fn new(res: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != res * res * res {
            return Err(Error::invalid(format!("{} values for a {res}^3 grid", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(Error::invalid(format!("voxel {i} = {} outside [0, 1]", values[i])));
        }
        Ok(VoxelGrid { res, values })
    }

    pub fn from_fn(res: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(res * res * res);
        for z in 0..res {
            for y in 0..res {
                for x in 0..res {
                    values.push(f(x, y, z));
                }
            }
        }
        Self::new(res, values)
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.res * (y + self.res * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let r = self.res;
        [i % r, (i / r) % r, i / (r * r)]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.values[self.index(x, y, z)]
    }

    /// Writes `v` clamped into `[0, 1]`.
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: T) {
        let i = self.index(x, y, z);
        self.values[i] = v.max(T::zero()).min(T::one());
    }

    pub fn voxel_size(&self) -> T {
        T::one() / T::from_usize_lossy(self.res)
    }

    /// World coordinate of the center of voxel index `i` along one axis.
    #[inline]
    pub fn center_coord(&self, i: usize) -> T {
        center_coord(self.res, i)
    }

    pub fn center(&self, x: usize, y: usize, z: usize) -> Point3<T> {
        [self.center_coord(x), self.center_coord(y), self.center_coord(z)]
    }

    /// Continuous grid coordinate of a world position (inverse of the center map).
    pub fn world_to_grid(&self, p: Point3<T>) -> Point3<T> {
        let r = T::from_usize_lossy(self.res);
        p.map(|v| (v + T::lit(0.5)) * r - T::lit(0.5))
    }

    /// Index of the voxel containing `p`, or `None` outside the box.
    pub fn voxel_of(&self, p: Point3<T>) -> Option<[usize; 3]> {
        let r = T::from_usize_lossy(self.res);
        let mut out = [0; 3];
        for a in 0..3 {
            let g = ((p[a] + T::lit(0.5)) * r).floor();
            if !(g >= T::zero() && g < r) {
                return None;
            }
            out[a] = g.to_usize().unwrap();
        }
        Some(out)
    }

    /// `1` where the value is at least `thresh`, else `0`.
    pub fn binarized(&self, thresh: T) -> VoxelGrid<T> {
        VoxelGrid {
            res: self.res,
            values: self.values.iter().map(|&v| if v >= thresh { T::one() } else { T::zero() }).collect(),
        }
    }

    pub fn occupied(&self, thresh: T) -> Vec<bool> {
        self.values.iter().map(|&v| v >= thresh).collect()
    }

    pub fn count_occupied(&self, thresh: T) -> usize {
        self.values.iter().filter(|&&v| v >= thresh).count()
    }

    pub fn from_mask(res: usize, mask: &[bool]) -> Result<Self> {
        Self::new(res, mask.iter().map(|&b| if b { T::one() } else { T::zero() }).collect())
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == T::zero() || v == T::one())
    }

    pub fn min_max(&self) -> (T, T) {
        self.values
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// 2x2x2 max pooling.
    pub fn downsample_max(&self, factor: usize) -> Result<VoxelGrid<T>> {
        if factor == 0 || self.res % factor != 0 {
            return Err(Error::invalid(format!("resolution {} is not divisible by {factor}", self.res)));
        }
        let r = self.res / factor;
        VoxelGrid::from_fn(r, |x, y, z| {
            let mut m = T::zero();
            for dz in 0..factor {
                for dy in 0..factor {
                    for dx in 0..factor {
                        m = m.max(self.get(x * factor + dx, y * factor + dy, z * factor + dz));
                    }
                }
            }
            m
        })
    }

    pub fn cast<U: Scalar>(&self) -> VoxelGrid<U> {
        VoxelGrid {
            res: self.res,
            values: self.values.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

#[inline]
pub fn center_coord<T: Scalar>(res: usize, i: usize) -> T {
    T::lit(-0.5 + (i as f64 + 0.5) / res as f64)
}
