//! Volumetric resampling ops on `[N, C, D, H, W]` activations.

use std::sync::Arc;

use super::ops::backward_fn;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[inline]
fn idx3(dims: [usize; 3], z: usize, y: usize, x: usize) -> usize {
    (z * dims[1] + y) * dims[2] + x
}

fn check5(op: &'static str, shape: &[usize]) -> Result<()> {
    if shape.len() != 5 {
        return Err(Error::shape(op, &[shape]));
    }
    Ok(())
}

impl<T: Scalar> Tape<T> {
    /// Non-overlapping 2x2x2 max pooling. Ties go to the first voxel in z, y, x order.
    pub fn max_pool3d_2x(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check5("max_pool3d_2x", &shape)?;
        if shape[2..].iter().any(|d| d % 2 != 0) {
            return Err(Error::shape("max_pool3d_2x", &[&shape]));
        }
        let nc = shape[0] * shape[1];
        let dims = [shape[2], shape[3], shape[4]];
        let od = [dims[0] / 2, dims[1] / 2, dims[2] / 2];
        let (vin, vout) = (dims.iter().product::<usize>(), od.iter().product::<usize>());
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(nc * vout);
        let mut arg = Vec::with_capacity(nc * vout);
        for ch in 0..nc {
            let s = &src[ch * vin..(ch + 1) * vin];
            for z in 0..od[0] {
                for y in 0..od[1] {
                    for xx in 0..od[2] {
                        let mut best = idx3(dims, 2 * z, 2 * y, 2 * xx);
                        for dz in 0..2 {
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let i = idx3(dims, 2 * z + dz, 2 * y + dy, 2 * xx + dx);
                                    if s[i] > s[best] {
                                        best = i;
                                    }
                                }
                            }
                        }
                        data.push(s[best]);
                        arg.push(ch * vin + best);
                    }
                }
            }
        }
        let out_shape = vec![shape[0], shape[1], od[0], od[1], od[2]];
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            &[x],
            backward_fn("max_pool3d_2x", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let mut gx = vec![T::zero(); nc * vin];
                for (&a, &gv) in arg.iter().zip(g.data()) {
                    gx[a] += gv;
                }
                vec![Some(Tensor::new(shape.clone(), gx).unwrap())]
            }),
        ))
    }

    /// Nearest-neighbour upsampling by 2 along every spatial axis.
    pub fn upsample_nearest3d_2x(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check5("upsample_nearest3d_2x", &shape)?;
        let nc = shape[0] * shape[1];
        let dims = [shape[2], shape[3], shape[4]];
        let od = [dims[0] * 2, dims[1] * 2, dims[2] * 2];
        let (vin, vout) = (dims.iter().product::<usize>(), od.iter().product::<usize>());
        let src = self.value(x).data();
        let mut data = vec![T::zero(); nc * vout];
        for ch in 0..nc {
            for z in 0..od[0] {
                for y in 0..od[1] {
                    for xx in 0..od[2] {
                        data[ch * vout + idx3(od, z, y, xx)] = src[ch * vin + idx3(dims, z / 2, y / 2, xx / 2)];
                    }
                }
            }
        }
        let out_shape = vec![shape[0], shape[1], od[0], od[1], od[2]];
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            &[x],
            backward_fn("upsample_nearest3d_2x", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let gd = g.data();
                let mut gx = vec![T::zero(); nc * vin];
                for ch in 0..nc {
                    for z in 0..od[0] {
                        for y in 0..od[1] {
                            for xx in 0..od[2] {
                                gx[ch * vin + idx3(dims, z / 2, y / 2, xx / 2)] += gd[ch * vout + idx3(od, z, y, xx)];
                            }
                        }
                    }
                }
                vec![Some(Tensor::new(shape.clone(), gx).unwrap())]
            }),
        ))
    }

    /// Cubic windows of edge `size` cut from a `[1, C, D, H, W]` volume.
    ///
    /// Offsets may reach outside the volume; those voxels read zero. Output is
    /// `[offsets.len(), C, size, size, size]`.
    pub fn extract_windows(&mut self, x: Var, offsets: &[[isize; 3]], size: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check5("extract_windows", &shape)?;
        if shape[0] != 1 || offsets.is_empty() || size == 0 {
            return Err(Error::shape("extract_windows", &[&shape]));
        }
        let c = shape[1];
        let dims = [shape[2], shape[3], shape[4]];
        let vin: usize = dims.iter().product();
        let vw = size * size * size;
        let src = self.value(x).data();
        let mut data = vec![T::zero(); offsets.len() * c * vw];
        for_each_window_voxel(offsets, size, dims, |w, local, global| {
            for ch in 0..c {
                data[(w * c + ch) * vw + local] = src[ch * vin + global];
            }
        });
        let offsets: Arc<[[isize; 3]]> = offsets.into();
        let nwin = offsets.len();
        Ok(self.push(
            Tensor::new(vec![nwin, c, size, size, size], data)?,
            &[x],
            backward_fn("extract_windows", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let gd = g.data();
                let mut gx = vec![T::zero(); c * vin];
                for_each_window_voxel(&offsets, size, dims, |w, local, global| {
                    for ch in 0..c {
                        gx[ch * vin + global] += gd[(w * c + ch) * vw + local];
                    }
                });
                vec![Some(Tensor::new(shape.clone(), gx).unwrap())]
            }),
        ))
    }

    /// Averages overlapping cubic windows `[Nw, C, s, s, s]` into a `[1, C, D, H, W]`
    /// volume of extent `dims`.
    ///
    /// Contributions to each voxel are summed in lexicographic offset order, so the
    /// result does not depend on the order of `offsets`. Uncovered voxels are zero.
    pub fn stitch_windows(&mut self, windows: Var, offsets: &[[usize; 3]], dims: [usize; 3]) -> Result<Var> {
        let shape = self.shape(windows).to_vec();
        check5("stitch_windows", &shape)?;
        let s = shape[2];
        if shape[3] != s || shape[4] != s || shape[0] != offsets.len() {
            return Err(Error::shape("stitch_windows", &[&shape]));
        }
        for o in offsets {
            if (0..3).any(|a| o[a] + s > dims[a]) {
                return Err(Error::invalid(format!("window at {o:?} of size {s} exceeds {dims:?}")));
            }
        }
        let c = shape[1];
        let vout: usize = dims.iter().product();
        let vw = s * s * s;
        let mut order: Vec<usize> = (0..offsets.len()).collect();
        order.sort_by_key(|&i| offsets[i]);
        let mut coverage = vec![0u32; vout];
        let signed: Vec<[isize; 3]> = offsets.iter().map(|o| [o[0] as isize, o[1] as isize, o[2] as isize]).collect();
        let ordered: Vec<[isize; 3]> = order.iter().map(|&i| signed[i]).collect();
        for_each_window_voxel(&ordered, s, dims, |_, _, global| coverage[global] += 1);
        let src = self.value(windows).data();
        let mut acc = vec![T::zero(); c * vout];
        for_each_window_voxel(&ordered, s, dims, |k, local, global| {
            let w = order[k];
            for ch in 0..c {
                acc[ch * vout + global] += src[(w * c + ch) * vw + local];
            }
        });
        let inv: Vec<T> = coverage
            .iter()
            .map(|&n| if n == 0 { T::zero() } else { T::one() / T::from_u32(n).unwrap() })
            .collect();
        for ch in 0..c {
            for (v, &f) in acc[ch * vout..(ch + 1) * vout].iter_mut().zip(&inv) {
                *v *= f;
            }
        }
        let ordered: Arc<[[isize; 3]]> = ordered.into();
        Ok(self.push(
            Tensor::new(vec![1, c, dims[0], dims[1], dims[2]], acc)?,
            &[windows],
            backward_fn("stitch_windows", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let gd = g.data();
                let mut gw = vec![T::zero(); shape.iter().product()];
                for_each_window_voxel(&ordered, s, dims, |k, local, global| {
                    let w = order[k];
                    for ch in 0..c {
                        gw[(w * c + ch) * vw + local] = gd[ch * vout + global] * inv[global];
                    }
                });
                vec![Some(Tensor::new(shape.clone(), gw).unwrap())]
            }),
        ))
    }
}

/// Visits `(window, local index, global index)` for every in-bounds voxel of each window.
pub(crate) fn for_each_window_voxel(
    offsets: &[[isize; 3]],
    size: usize,
    dims: [usize; 3],
    mut f: impl FnMut(usize, usize, usize),
) {
    let sz = [size; 3];
    for (w, o) in offsets.iter().enumerate() {
        for z in 0..size {
            let gz = o[0] + z as isize;
            if gz < 0 || gz as usize >= dims[0] {
                continue;
            }
            for y in 0..size {
                let gy = o[1] + y as isize;
                if gy < 0 || gy as usize >= dims[1] {
                    continue;
                }
                for x in 0..size {
                    let gx = o[2] + x as isize;
                    if gx < 0 || gx as usize >= dims[2] {
                        continue;
                    }
                    f(w, idx3(sz, z, y, x), idx3(dims, gz as usize, gy as usize, gx as usize));
                }
            }
        }
    }
}
