use crate::autodiff::{backward_fn, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Texel corners and weights of one bilinear lookup.
#[derive(Clone, Copy)]
struct Tap<T> {
    idx: [usize; 4],
    w: [T; 4],
    /// Fractional offsets and whether the coordinate was inside (not clamped) per axis.
    frac: [T; 2],
    live: [bool; 2],
}

fn tap<T: Scalar>(x: T, y: T, h: usize, w: usize) -> Tap<T> {
    let axis = |v: T, n: usize| -> (usize, usize, T, bool) {
        let hi = T::from_usize_lossy(n - 1);
        let live = v >= T::zero() && v <= hi;
        let c = v.max(T::zero()).min(hi);
        if n == 1 {
            return (0, 0, T::zero(), false);
        }
        let i0 = c.floor().to_usize().unwrap().min(n - 2);
        (i0, i0 + 1, c - T::from_usize_lossy(i0), live)
    };
    let (x0, x1, fx, lx) = axis(x, w);
    let (y0, y1, fy, ly) = axis(y, h);
    let one = T::one();
    Tap {
        idx: [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
        w: [(one - fx) * (one - fy), fx * (one - fy), (one - fx) * fy, fx * fy],
        frac: [fx, fy],
        live: [lx, ly],
    }
}

impl<T: Scalar> Tape<T> {
    /// Bilinear lookup of a `[.., H, W]` feature map (leading axes flattened into `C`
    /// channels) at `[N, 2]` texel coordinates `(x, y)`; texel centers sit at integers.
    /// Coordinates are clamped to the map. Returns `[N, C]`.
    pub fn bilinear_sample(&mut self, map: Var, coords: Var) -> Result<Var> {
        let ms = self.shape(map).to_vec();
        let cs = self.shape(coords).to_vec();
        if ms.len() < 3 || cs.len() != 2 || cs[1] != 2 {
            return Err(Error::shape("bilinear_sample", &[&ms, &cs]));
        }
        let (h, w) = (ms[ms.len() - 2], ms[ms.len() - 1]);
        let c: usize = ms[..ms.len() - 2].iter().product();
        let hw = h * w;
        if hw == 0 || c == 0 {
            return Err(Error::shape("bilinear_sample", &[&ms]));
        }
        let n = cs[0];
        let md = self.value(map).data();
        let taps: Vec<Tap<T>> = self.value(coords).data().chunks(2).map(|p| tap(p[0], p[1], h, w)).collect();
        let mut data = Vec::with_capacity(n * c);
        for t in &taps {
            for ch in 0..c {
                let base = ch * hw;
                let mut v = T::zero();
                for k in 0..4 {
                    v += t.w[k] * md[base + t.idx[k]];
                }
                data.push(v);
            }
        }
        Ok(self.push(
            Tensor::new(vec![n, c], data)?,
            &[map, coords],
            backward_fn("bilinear_sample", move |inp: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let md = inp[0].data();
                let gd = g.data();
                let mut gm = vec![T::zero(); c * hw];
                let mut gc = vec![T::zero(); n * 2];
                let one = T::one();
                for (i, t) in taps.iter().enumerate() {
                    let [fx, fy] = t.frac;
                    for ch in 0..c {
                        let gv = gd[i * c + ch];
                        let base = ch * hw;
                        for k in 0..4 {
                            gm[base + t.idx[k]] += t.w[k] * gv;
                        }
                        let m = [md[base + t.idx[0]], md[base + t.idx[1]], md[base + t.idx[2]], md[base + t.idx[3]]];
                        if t.live[0] {
                            gc[2 * i] += gv * ((one - fy) * (m[1] - m[0]) + fy * (m[3] - m[2]));
                        }
                        if t.live[1] {
                            gc[2 * i + 1] += gv * ((one - fx) * (m[2] - m[0]) + fx * (m[3] - m[1]));
                        }
                    }
                }
                vec![
                    Some(Tensor::new(inp[0].shape().to_vec(), gm).unwrap()),
                    Some(Tensor::new(vec![n, 2], gc).unwrap()),
                ]
            }),
        ))
    }
}

/// Map texel coordinates of image pixel positions for a map at down-sampling `factor`.
pub fn pixel_to_texel(px: [f64; 2], factor: usize) -> [f64; 2] {
    let f = factor as f64;
    [px[0] / f - 0.5, px[1] / f - 0.5]
}

/// Plain bilinear lookup into one channel, for tests and non-differentiable use.
pub fn bilinear_value<T: Scalar>(map: &[T], h: usize, w: usize, p: [T; 2]) -> T {
    let t = tap(p[0], p[1], h, w);
    (0..4).map(|k| t.w[k] * map[t.idx[k]]).sum()
}
