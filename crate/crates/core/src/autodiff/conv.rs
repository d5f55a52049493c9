//! Strided 3D convolution and its transpose via im2col + gemm.
//!
//! Layouts: activations `[N, C, D, H, W]`, convolution weights `[O, C, kd, kh, kw]`,
//! transposed-convolution weights `[C, O, kd, kh, kw]`. A 2D convolution is the
//! special case `D = 1, kd = 1, stride_d = 1, pad_d = 0`.

use super::ops::backward_fn;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::{gemm, MatView, Scalar};
use crate::tensor::Tensor;

/// Kernel, stride and padding per axis (depth, height, width).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl ConvGeometry {
    /// Cubic kernel with the same stride and padding on every axis.
    pub fn cubic(kernel: usize, stride: usize, pad: usize) -> Self {
        ConvGeometry {
            kernel: [kernel; 3],
            stride: [stride; 3],
            pad: [pad; 3],
        }
    }

    /// Planar kernel for `[N, C, 1, H, W]` images.
    pub fn planar(kernel: usize, stride: usize, pad: usize) -> Self {
        ConvGeometry {
            kernel: [1, kernel, kernel],
            stride: [1, stride, stride],
            pad: [0, pad, pad],
        }
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Output extent of a convolution over `input`; `None` when the kernel does not fit.
    pub fn output_size(&self, input: [usize; 3]) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let span = input[a] + 2 * self.pad[a];
            if span < self.kernel[a] || self.stride[a] == 0 {
                return None;
            }
            out[a] = (span - self.kernel[a]) / self.stride[a] + 1;
        }
        Some(out)
    }
}

fn spatial(shape: &[usize]) -> [usize; 3] {
    [shape[2], shape[3], shape[4]]
}

/// Output columns `ox` whose input column `ox * stride + k - pad` lies inside `[0, n)`.
fn valid_range(n: usize, k: usize, stride: usize, pad: usize, out: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k).div_ceil(stride);
    let hi = if n + pad > k { ((n + pad - k - 1) / stride + 1).min(out) } else { 0 };
    (lo.min(hi), hi)
}

/// Unfolds one `[C, D, H, W]` sample into `[C * K, Do * Ho * Wo]`.
fn im2col<T: Scalar>(x: &[T], c: usize, dims: [usize; 3], g: &ConvGeometry, out: [usize; 3], cols: &mut [T]) {
    let [d, h, w] = dims;
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    let [od, oh, ow] = out;
    let p = od * oh * ow;
    let mut r = 0;
    for ci in 0..c {
        let xc = &x[ci * d * h * w..(ci + 1) * d * h * w];
        for kz in 0..kd {
            for ky in 0..kh {
                for kx in 0..kw {
                    let (lo, hi) = valid_range(w, kx, sw, pw, ow);
                    let row = &mut cols[r * p..(r + 1) * p];
                    for oz in 0..od {
                        let iz = (oz * sd + kz) as isize - pd as isize;
                        for oy in 0..oh {
                            let iy = (oy * sh + ky) as isize - ph as isize;
                            let dst = &mut row[(oz * oh + oy) * ow..(oz * oh + oy + 1) * ow];
                            if !(iz >= 0 && (iz as usize) < d && iy >= 0 && (iy as usize) < h) || lo == hi {
                                dst.fill(T::zero());
                                continue;
                            }
                            let base = (iz as usize * h + iy as usize) * w;
                            dst[..lo].fill(T::zero());
                            dst[hi..].fill(T::zero());
                            let start = base + lo * sw + kx - pw;
                            if sw == 1 {
                                dst[lo..hi].copy_from_slice(&xc[start..start + hi - lo]);
                            } else {
                                for (v, &s) in dst[lo..hi].iter_mut().zip(xc[start..].iter().step_by(sw)) {
                                    *v = s;
                                }
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into a `[C, D, H, W]` sample.
fn col2im<T: Scalar>(cols: &[T], c: usize, dims: [usize; 3], g: &ConvGeometry, out: [usize; 3], x: &mut [T]) {
    let [d, h, w] = dims;
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    let [od, oh, ow] = out;
    let p = od * oh * ow;
    let mut r = 0;
    for ci in 0..c {
        let xc = &mut x[ci * d * h * w..(ci + 1) * d * h * w];
        for kz in 0..kd {
            for ky in 0..kh {
                for kx in 0..kw {
                    let (lo, hi) = valid_range(w, kx, sw, pw, ow);
                    let row = &cols[r * p..(r + 1) * p];
                    r += 1;
                    if lo == hi {
                        continue;
                    }
                    for oz in 0..od {
                        let iz = (oz * sd + kz) as isize - pd as isize;
                        for oy in 0..oh {
                            let iy = (oy * sh + ky) as isize - ph as isize;
                            if !(iz >= 0 && (iz as usize) < d && iy >= 0 && (iy as usize) < h) {
                                continue;
                            }
                            let src = &row[(oz * oh + oy) * ow + lo..(oz * oh + oy) * ow + hi];
                            let start = (iz as usize * h + iy as usize) * w + lo * sw + kx - pw;
                            if sw == 1 {
                                for (v, &s) in xc[start..start + hi - lo].iter_mut().zip(src) {
                                    *v += s;
                                }
                            } else {
                                for (v, &s) in xc[start..].iter_mut().step_by(sw).zip(src) {
                                    *v += s;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn bias_grad<T: Scalar>(g: &[T], n: usize, o: usize, p: usize) -> Vec<T> {
    let mut gb = vec![T::zero(); o];
    for s in 0..n {
        for (oc, acc) in gb.iter_mut().enumerate() {
            let start = (s * o + oc) * p;
            *acc += g[start..start + p].iter().copied().sum::<T>();
        }
    }
    gb
}

impl<T: Scalar> Tape<T> {
    /// 3D convolution. `x: [N, C, D, H, W]`, `w: [O, C, kd, kh, kw]`, `b: [O]`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let bad = || Error::shape("conv3d", &[&sx, &sw]);
        if sx.len() != 5 || sw.len() != 5 || sw[1] != sx[1] || sw[2..] != geom.kernel[..] {
            return Err(bad());
        }
        if let Some(b) = b {
            if self.shape(b) != [sw[0]] {
                return Err(Error::shape("conv3d bias", &[&sw, self.shape(b)]));
            }
        }
        let (n, c, o) = (sx[0], sx[1], sw[0]);
        let dims = spatial(&sx);
        let out = geom.output_size(dims).ok_or_else(bad)?;
        let k = geom.kernel_volume();
        let (r, p) = (c * k, out.iter().product::<usize>());
        let vin = dims.iter().product::<usize>();
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut y = vec![T::zero(); n * o * p];
        let mut cols = vec![T::zero(); r * p];
        for s in 0..n {
            im2col(&xd[s * c * vin..(s + 1) * c * vin], c, dims, &geom, out, &mut cols);
            gemm(T::one(), wd, MatView::new(o, r), &cols, MatView::new(r, p), T::zero(), &mut y[s * o * p..(s + 1) * o * p]);
        }
        if let Some(b) = b {
            let bd = self.value(b).data();
            for s in 0..n {
                for oc in 0..o {
                    let start = (s * o + oc) * p;
                    for v in &mut y[start..start + p] {
                        *v += bd[oc];
                    }
                }
            }
        }
        let out_shape = vec![n, o, out[0], out[1], out[2]];
        let value = Tensor::new(out_shape, y)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        let has_bias = b.is_some();
        Ok(self.push(
            value,
            &parents,
            backward_fn("conv3d", move |inp: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let (xd, wd, gd) = (inp[0].data(), inp[1].data(), g.data());
                let mut gx = vec![T::zero(); n * c * vin];
                let mut gw = vec![T::zero(); o * r];
                let mut cols = vec![T::zero(); r * p];
                let mut gcols = vec![T::zero(); r * p];
                for s in 0..n {
                    let gs = &gd[s * o * p..(s + 1) * o * p];
                    im2col(&xd[s * c * vin..(s + 1) * c * vin], c, dims, &geom, out, &mut cols);
                    gemm(T::one(), gs, MatView::new(o, p), &cols, MatView::new(r, p).t(), T::one(), &mut gw);
                    gemm(T::one(), wd, MatView::new(o, r).t(), gs, MatView::new(o, p), T::zero(), &mut gcols);
                    col2im(&gcols, c, dims, &geom, out, &mut gx[s * c * vin..(s + 1) * c * vin]);
                }
                let mut grads = vec![
                    Some(Tensor::new(inp[0].shape().to_vec(), gx).unwrap()),
                    Some(Tensor::new(inp[1].shape().to_vec(), gw).unwrap()),
                ];
                if has_bias {
                    grads.push(Some(Tensor::new(vec![o], bias_grad(gd, n, o, p)).unwrap()));
                }
                grads
            }),
        ))
    }

    /// Transposed 3D convolution producing spatial size `out_size`.
    ///
    /// `x: [N, C, D, H, W]`, `w: [C, O, kd, kh, kw]`. `out_size` must be an extent
    /// whose forward convolution under `geom` has the spatial size of `x`.
    pub fn conv_transpose3d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
        out_size: [usize; 3],
    ) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let bad = || Error::shape("conv_transpose3d", &[&sx, &sw, &out_size]);
        if sx.len() != 5 || sw.len() != 5 || sw[0] != sx[1] || sw[2..] != geom.kernel[..] {
            return Err(bad());
        }
        let dims = spatial(&sx);
        if geom.output_size(out_size) != Some(dims) {
            return Err(bad());
        }
        if let Some(b) = b {
            if self.shape(b) != [sw[1]] {
                return Err(Error::shape("conv_transpose3d bias", &[&sw, self.shape(b)]));
            }
        }
        let (n, c, o) = (sx[0], sx[1], sw[1]);
        let k = geom.kernel_volume();
        let (r, pin) = (o * k, dims.iter().product::<usize>());
        let vout: usize = out_size.iter().product();
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut y = vec![T::zero(); n * o * vout];
        let mut cols = vec![T::zero(); r * pin];
        for s in 0..n {
            gemm(T::one(), wd, MatView::new(c, r).t(), &xd[s * c * pin..(s + 1) * c * pin], MatView::new(c, pin), T::zero(), &mut cols);
            col2im(&cols, o, out_size, &geom, dims, &mut y[s * o * vout..(s + 1) * o * vout]);
        }
        if let Some(b) = b {
            let bd = self.value(b).data();
            for s in 0..n {
                for oc in 0..o {
                    let start = (s * o + oc) * vout;
                    for v in &mut y[start..start + vout] {
                        *v += bd[oc];
                    }
                }
            }
        }
        let value = Tensor::new(vec![n, o, out_size[0], out_size[1], out_size[2]], y)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        let has_bias = b.is_some();
        Ok(self.push(
            value,
            &parents,
            backward_fn("conv_transpose3d", move |inp: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let (xd, wd, gd) = (inp[0].data(), inp[1].data(), g.data());
                let mut gx = vec![T::zero(); n * c * pin];
                let mut gw = vec![T::zero(); c * r];
                let mut gcols = vec![T::zero(); r * pin];
                for s in 0..n {
                    im2col(&gd[s * o * vout..(s + 1) * o * vout], o, out_size, &geom, dims, &mut gcols);
                    gemm(T::one(), wd, MatView::new(c, r), &gcols, MatView::new(r, pin), T::zero(), &mut gx[s * c * pin..(s + 1) * c * pin]);
                    gemm(T::one(), &xd[s * c * pin..(s + 1) * c * pin], MatView::new(c, pin), &gcols, MatView::new(r, pin).t(), T::one(), &mut gw);
                }
                let mut grads = vec![
                    Some(Tensor::new(inp[0].shape().to_vec(), gx).unwrap()),
                    Some(Tensor::new(inp[1].shape().to_vec(), gw).unwrap()),
                ];
                if has_bias {
                    grads.push(Some(Tensor::new(vec![o], bias_grad(gd, n, o, vout)).unwrap()));
                }
                grads
            }),
        ))
    }
}
