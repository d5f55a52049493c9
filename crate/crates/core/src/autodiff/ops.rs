//! Dense primitive operations recorded on the tape.

use std::sync::Arc;

use super::tape::{Backward, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::{gemm, MatView, Scalar};
use crate::tensor::Tensor;

/// Upper bound applied to `exp` arguments.
pub const EXP_CLAMP: f64 = 40.0;
/// `log` arguments are clamped to `[LOG_EPS, 1 - LOG_EPS]`.
pub const LOG_EPS: f64 = 1e-12;

/// Backward rule given as a closure.
pub struct BackwardFn<F> {
    name: &'static str,
    f: F,
}

pub type GradList<T> = Vec<Option<Tensor<T>>>;

impl<T, F> Backward<T> for BackwardFn<F>
where
    T: Scalar,
    F: Fn(&[&Tensor<T>], &Tensor<T>, &Tensor<T>) -> GradList<T>,
{
    fn name(&self) -> &'static str {
        self.name
    }

    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> GradList<T> {
        (self.f)(inputs, output, grad)
    }
}

pub fn backward_fn<T, F>(name: &'static str, f: F) -> BackwardFn<F>
where
    T: Scalar,
    F: Fn(&[&Tensor<T>], &Tensor<T>, &Tensor<T>) -> GradList<T>,
{
    BackwardFn { name, f }
}

fn tensor<T: Scalar>(shape: &[usize], data: Vec<T>) -> Tensor<T> {
    Tensor::new(shape.to_vec(), data).expect("kernel produced consistent shape")
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    tensor(
        a.shape(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

impl<T: Scalar> Tape<T> {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, &[self.shape(a), self.shape(b)]));
        }
        Ok(())
    }

    fn unary(
        &mut self,
        name: &'static str,
        a: Var,
        f: impl Fn(T) -> T,
        // derivative from (input, output)
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var {
        let value = self.value(a).map(f);
        self.push(
            value,
            &[a],
            backward_fn(name, move |inp: &[&Tensor<T>], out: &Tensor<T>, g: &Tensor<T>| {
                let data = inp[0]
                    .data()
                    .iter()
                    .zip(out.data())
                    .zip(g.data())
                    .map(|((&x, &y), &g)| g * df(x, y))
                    .collect();
                vec![Some(tensor(g.shape(), data))]
            }),
        )
    }

    /// `[n, k] x [k, m] -> [n, m]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", &[sa, sb]));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); n * m];
        gemm(
            T::one(),
            self.value(a).data(),
            MatView::new(n, k),
            self.value(b).data(),
            MatView::new(k, m),
            T::zero(),
            &mut out,
        );
        let value = tensor(&[n, m], out);
        Ok(self.push(
            value,
            &[a, b],
            backward_fn("matmul", move |inp: &[&Tensor<T>], _out: &Tensor<T>, g: &Tensor<T>| {
                let mut ga = vec![T::zero(); n * k];
                gemm(T::one(), g.data(), MatView::new(n, m), inp[1].data(), MatView::new(k, m).t(), T::zero(), &mut ga);
                let mut gb = vec![T::zero(); k * m];
                gemm(T::one(), inp[0].data(), MatView::new(n, k).t(), g.data(), MatView::new(n, m), T::zero(), &mut gb);
                vec![Some(tensor(&[n, k], ga)), Some(tensor(&[k, m], gb))]
            }),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(
            value,
            &[a, b],
            backward_fn("add", |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| vec![Some(g.clone()), Some(g.clone())]),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(
            value,
            &[a, b],
            backward_fn("sub", |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                vec![Some(g.clone()), Some(g.map(|x| -x))]
            }),
        ))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(
            value,
            &[a, b],
            backward_fn("mul", |inp: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                vec![
                    Some(zip_map(g, inp[1], |g, y| g * y)),
                    Some(zip_map(g, inp[0], |g, x| g * x)),
                ]
            }),
        ))
    }

    /// Adds a vector of length `m` to every trailing row of `x` (`[.., m]`).
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (sx, sr) = (self.shape(x), self.shape(row));
        let m = *sr.last().unwrap_or(&0);
        if sx.is_empty() || sr.iter().product::<usize>() != m || *sx.last().unwrap() != m || m == 0 {
            return Err(Error::shape("add_row", &[sx, sr]));
        }
        let r = self.value(row).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for chunk in data.chunks_mut(m) {
            for (v, &b) in chunk.iter_mut().zip(&r) {
                *v += b;
            }
        }
        let value = tensor(self.shape(x), data);
        let row_shape = sr.to_vec();
        Ok(self.push(
            value,
            &[x, row],
            backward_fn("add_row", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let mut gr = vec![T::zero(); m];
                for chunk in g.data().chunks(m) {
                    for (a, &b) in gr.iter_mut().zip(chunk) {
                        *a += b;
                    }
                }
                vec![Some(g.clone()), Some(tensor(&row_shape, gr))]
            }),
        ))
    }

    /// Multiplies every element by `c`.
    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.affine(a, c, T::zero())
    }

    /// `c * a + d`
    pub fn affine(&mut self, a: Var, c: T, d: T) -> Var {
        self.unary("affine", a, |x| c * x + d, move |_, _| c)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(
            "relu",
            a,
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary("tanh", a, |x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary("sigmoid", a, sigmoid, |_, y| y * (T::one() - y))
    }

    /// `exp` with the argument clamped below [`EXP_CLAMP`].
    pub fn exp(&mut self, a: Var) -> Var {
        let hi = T::lit(EXP_CLAMP);
        self.unary(
            "exp",
            a,
            move |x| x.min(hi).exp(),
            move |x, y| if x < hi { y } else { T::zero() },
        )
    }

    /// Natural log with the argument clamped to `[LOG_EPS, 1 - LOG_EPS]`.
    pub fn log(&mut self, a: Var) -> Var {
        let lo = T::lit(LOG_EPS);
        let hi = T::one() - lo;
        self.unary(
            "log",
            a,
            move |x| x.max(lo).min(hi).ln(),
            move |x, _| if x >= lo && x <= hi { T::one() / x } else { T::zero() },
        )
    }

    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        self.unary(
            "clamp",
            a,
            move |x| x.max(lo).min(hi),
            move |x, _| if x >= lo && x <= hi { T::one() } else { T::zero() },
        )
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let Some(&m) = shape.last() else {
            return Err(Error::shape("softmax", &[&shape]));
        };
        if m == 0 {
            return Err(Error::shape("softmax", &[&shape]));
        }
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(m) {
            softmax_in_place(row);
        }
        let value = tensor(&shape, data);
        Ok(self.push(
            value,
            &[a],
            backward_fn("softmax", move |_: &[&Tensor<T>], out: &Tensor<T>, g: &Tensor<T>| {
                let mut gx = Vec::with_capacity(g.len());
                for (y, gy) in out.data().chunks(m).zip(g.data().chunks(m)) {
                    let dot: T = y.iter().zip(gy).map(|(&a, &b)| a * b).sum();
                    gx.extend(y.iter().zip(gy).map(|(&y, &g)| y * (g - dot)));
                }
                vec![Some(tensor(out.shape(), gx))]
            }),
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        let s: T = self.value(a).data().iter().copied().sum();
        self.push(
            Tensor::scalar(s),
            &[a],
            backward_fn("sum", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                vec![Some(Tensor::full(&shape, g.data()[0]))]
            }),
        )
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::Empty("mean of an empty tensor"));
        }
        let s = self.sum(a);
        Ok(self.scale(s, T::one() / T::from_usize_lossy(n)))
    }

    /// Mean over the last axis: `[.., m] -> [..]`.
    pub fn mean_last(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let Some(&m) = shape.last() else {
            return Err(Error::shape("mean_last", &[&shape]));
        };
        if m == 0 {
            return Err(Error::Empty("mean over an empty axis"));
        }
        let inv = T::one() / T::from_usize_lossy(m);
        let data: Vec<T> = self
            .value(a)
            .data()
            .chunks(m)
            .map(|c| c.iter().copied().sum::<T>() * inv)
            .collect();
        let out_shape = shape[..shape.len() - 1].to_vec();
        Ok(self.push(
            tensor(&out_shape, data),
            &[a],
            backward_fn("mean_last", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let gx = g.data().iter().flat_map(|&v| std::iter::repeat(v * inv).take(m)).collect();
                vec![Some(tensor(&shape, gx))]
            }),
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let old = self.shape(a).to_vec();
        let value = self.value(a).clone().reshape(shape)?;
        Ok(self.push(
            value,
            &[a],
            backward_fn("reshape", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                vec![Some(g.clone().reshape(&old).expect("same size"))]
            }),
        ))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Empty("concat of no tensors"));
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &[&base]));
        }
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            let ok = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                let shapes: Vec<&[usize]> = parts.iter().map(|&p| self.shape(p)).collect();
                return Err(Error::shape("concat", &shapes));
            }
            widths.push(s[axis]);
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&p, &w) in parts.iter().zip(&widths) {
                let src = self.value(p).data();
                data.extend_from_slice(&src[o * w * inner..(o + 1) * w * inner]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let part_shapes: Vec<Vec<usize>> = parts.iter().map(|&p| self.shape(p).to_vec()).collect();
        Ok(self.push(
            tensor(&shape, data),
            parts,
            backward_fn("concat", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let mut outs: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(outer * w * inner)).collect();
                let gd = g.data();
                let mut pos = 0;
                for _ in 0..outer {
                    for (buf, &w) in outs.iter_mut().zip(&widths) {
                        buf.extend_from_slice(&gd[pos..pos + w * inner]);
                        pos += w * inner;
                    }
                }
                outs.into_iter()
                    .zip(&part_shapes)
                    .map(|(d, s)| Some(tensor(s, d)))
                    .collect()
            }),
        ))
    }

    /// Rows `idx` of `x` along the first axis (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || idx.iter().any(|&i| i >= shape[0]) {
            return Err(Error::shape("gather_rows", &[&shape]));
        }
        let row: usize = shape[1..].iter().product();
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(idx.len() * row);
        for &i in idx {
            data.extend_from_slice(&src[i * row..(i + 1) * row]);
        }
        let mut out_shape = shape.clone();
        out_shape[0] = idx.len();
        let idx: Arc<[usize]> = idx.into();
        Ok(self.push(
            tensor(&out_shape, data),
            &[x],
            backward_fn("gather_rows", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let mut gx = vec![T::zero(); shape.iter().product()];
                for (k, &i) in idx.iter().enumerate() {
                    for (a, &b) in gx[i * row..(i + 1) * row].iter_mut().zip(&g.data()[k * row..(k + 1) * row]) {
                        *a += b;
                    }
                }
                vec![Some(tensor(&shape, gx))]
            }),
        ))
    }

    /// Repeats a `[m]` (or `[1, m]`) vector into `[n, m]`.
    pub fn broadcast_rows(&mut self, v: Var, n: usize) -> Result<Var> {
        let m = self.value(v).len();
        let flat = self.reshape(v, &[1, m])?;
        self.gather_rows(flat, &vec![0; n])
    }

    /// Elementwise maximum across equally shaped tensors; ties go to the earliest.
    pub fn maximum(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Empty("maximum of no tensors"));
        };
        for &p in parts {
            self.same_shape("maximum", first, p)?;
        }
        let n = self.value(first).len();
        let mut arg = vec![0usize; n];
        let mut data = self.value(first).data().to_vec();
        for (k, &p) in parts.iter().enumerate().skip(1) {
            for (i, &x) in self.value(p).data().iter().enumerate() {
                if x > data[i] {
                    data[i] = x;
                    arg[i] = k;
                }
            }
        }
        let shape = self.shape(first).to_vec();
        let count = parts.len();
        Ok(self.push(
            tensor(&shape, data),
            parts,
            backward_fn("maximum", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let mut outs = vec![vec![T::zero(); n]; count];
                for (i, (&k, &gv)) in arg.iter().zip(g.data()).enumerate() {
                    outs[k][i] = gv;
                }
                outs.into_iter().map(|d| Some(tensor(&shape, d))).collect()
            }),
        ))
    }

    /// Slice `[start, start + len)` of `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape("narrow", &[&shape]));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let w = shape[axis];
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * w + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        Ok(self.push(
            tensor(&out_shape, data),
            &[x],
            backward_fn("narrow", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let mut gx = vec![T::zero(); shape.iter().product()];
                for o in 0..outer {
                    let base = (o * w + start) * inner;
                    gx[base..base + len * inner].copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(tensor(&shape, gx))]
            }),
        ))
    }

    /// Squared Euclidean norm of all entries.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.mul(a, a).expect("same shape");
        self.sum(s)
    }

    /// Affine map of row vectors: `x [n, k] * w [k, m] + b [m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - mx).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}
