//! Chamfer distances and the Laplacian smoothness term as tape operations.

use std::sync::Arc;

use super::pointset::{dist2, Point3};
use super::spatial::NearestIndex;
use crate::autodiff::{backward_fn, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Sum,
    /// Each direction averaged over its source set.
    Mean,
}

fn as_points<T: Scalar>(t: &Tensor<T>) -> Vec<Point3<T>> {
    t.data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
}

fn check_points<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<()> {
    let s = t.shape();
    if s.len() != 2 || s[1] != 3 {
        return Err(Error::shape(op, &[s]));
    }
    if s[0] == 0 {
        return Err(Error::Empty("point set"));
    }
    Ok(())
}

/// Nearest neighbour in `to` of every point of `from`.
pub fn nearest_assignments<T: Scalar>(from: &[Point3<T>], to: &[Point3<T>]) -> Vec<(usize, T)> {
    let index = NearestIndex::new(to);
    from.iter().map(|&p| index.nearest(p)).collect()
}

struct ChamferEval<T> {
    value: T,
    ab: Vec<usize>,
    ba: Vec<usize>,
    scale_a: T,
    scale_b: T,
}

/// `sum_i w[nn(a_i)] d(a_i)^2 * scale_a + sum_j w[j] d(b_j)^2 * scale_b`, weights indexed
/// by points of `b`; unit weights when `w` is `None`.
fn chamfer_eval<T: Scalar>(a: &[Point3<T>], b: &[Point3<T>], w: Option<&[T]>, red: Reduction) -> ChamferEval<T> {
    let ab = nearest_assignments(a, b);
    let ba = nearest_assignments(b, a);
    let (scale_a, scale_b) = match red {
        Reduction::Sum => (T::one(), T::one()),
        Reduction::Mean => (T::one() / T::from_usize_lossy(a.len()), T::one() / T::from_usize_lossy(b.len())),
    };
    let weight = |j: usize| w.map_or(T::one(), |w| w[j]);
    let mut sa = T::zero();
    for &(j, d) in &ab {
        sa += weight(j) * d;
    }
    let mut sb = T::zero();
    for (j, &(_, d)) in ba.iter().enumerate() {
        sb += weight(j) * d;
    }
    ChamferEval {
        value: sa * scale_a + sb * scale_b,
        ab: ab.into_iter().map(|(j, _)| j).collect(),
        ba: ba.into_iter().map(|(i, _)| i).collect(),
        scale_a,
        scale_b,
    }
}

/// Symmetric Chamfer distance between two point sets (no tape).
pub fn chamfer_distance<T: Scalar>(a: &[Point3<T>], b: &[Point3<T>], red: Reduction) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("chamfer of an empty point set"));
    }
    Ok(chamfer_eval(a, b, None, red).value)
}

/// Weighted Chamfer distance with per-ground-truth weights (no tape).
pub fn weighted_chamfer_distance<T: Scalar>(pred: &[Point3<T>], gt: &[Point3<T>], kappa: &[T]) -> Result<T> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Empty("chamfer of an empty point set"));
    }
    if kappa.len() != gt.len() {
        return Err(Error::shape("weighted_chamfer", &[&[gt.len()], &[kappa.len()]]));
    }
    Ok(chamfer_eval(pred, gt, Some(kappa), Reduction::Sum).value)
}

impl<T: Scalar> Tape<T> {
    /// Chamfer distance between `[N, 3]` and `[M, 3]` point tensors.
    pub fn chamfer(&mut self, a: Var, b: Var, red: Reduction) -> Result<Var> {
        self.chamfer_impl(a, b, None, red)
    }

    /// `sum_q kappa[nn(q)] |q - nn(q)|^2 + sum_g kappa[g] min_q |q - g|^2` with one
    /// weight per ground-truth point.
    pub fn weighted_chamfer(&mut self, pred: Var, gt: Var, kappa: &[T]) -> Result<Var> {
        let m = self.shape(gt)[0];
        if kappa.len() != m {
            return Err(Error::shape("weighted_chamfer", &[&[m], &[kappa.len()]]));
        }
        self.chamfer_impl(pred, gt, Some(kappa.into()), Reduction::Sum)
    }

    fn chamfer_impl(&mut self, a: Var, b: Var, w: Option<Arc<[T]>>, red: Reduction) -> Result<Var> {
        check_points("chamfer", self.value(a))?;
        check_points("chamfer", self.value(b))?;
        let pa = as_points(self.value(a));
        let pb = as_points(self.value(b));
        let ev = chamfer_eval(&pa, &pb, w.as_deref(), red);
        let (na, nb) = (pa.len(), pb.len());
        let ChamferEval {
            value,
            ab,
            ba,
            scale_a,
            scale_b,
        } = ev;
        Ok(self.push(
            Tensor::scalar(value),
            &[a, b],
            backward_fn("chamfer", move |inp: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let g = g.data()[0];
                let (xa, xb) = (inp[0].data(), inp[1].data());
                let mut ga = vec![T::zero(); na * 3];
                let mut gb = vec![T::zero(); nb * 3];
                let two = T::lit(2.0);
                let weight = |j: usize| w.as_ref().map_or(T::one(), |w| w[j]);
                for (i, &j) in ab.iter().enumerate() {
                    let c = two * g * scale_a * weight(j);
                    for k in 0..3 {
                        let d = c * (xa[3 * i + k] - xb[3 * j + k]);
                        ga[3 * i + k] += d;
                        gb[3 * j + k] -= d;
                    }
                }
                for (j, &i) in ba.iter().enumerate() {
                    let c = two * g * scale_b * weight(j);
                    for k in 0..3 {
                        let d = c * (xb[3 * j + k] - xa[3 * i + k]);
                        gb[3 * j + k] += d;
                        ga[3 * i + k] -= d;
                    }
                }
                vec![
                    Some(Tensor::new(vec![na, 3], ga).unwrap()),
                    Some(Tensor::new(vec![nb, 3], gb).unwrap()),
                ]
            }),
        ))
    }

    /// `sum_p |p - mean(neighbors(p))|^2` for `[N, 3]` points.
    pub fn laplacian_reg(&mut self, points: Var, neighbors: &[Vec<usize>]) -> Result<Var> {
        let t = self.value(points);
        check_points("laplacian_reg", t)?;
        let n = t.shape()[0];
        if neighbors.len() != n {
            return Err(Error::shape("laplacian_reg", &[&[n], &[neighbors.len()]]));
        }
        if let Some(p) = neighbors.iter().position(|l| l.is_empty()) {
            return Err(Error::invalid(format!("point {p} has no neighbors")));
        }
        if neighbors.iter().flatten().any(|&q| q >= n) {
            return Err(Error::invalid("neighbor index out of range"));
        }
        let pts = as_points(t);
        let deltas: Vec<Point3<T>> = laplacian_deltas(&pts, neighbors);
        let mut value = T::zero();
        for d in &deltas {
            value += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        }
        let neighbors: Arc<[Vec<usize>]> = neighbors.into();
        Ok(self.push(
            Tensor::scalar(value),
            &[points],
            backward_fn("laplacian_reg", move |_: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>| {
                let g2 = g.data()[0] * T::lit(2.0);
                let mut gx = vec![T::zero(); n * 3];
                for (p, (d, nb)) in deltas.iter().zip(neighbors.iter()).enumerate() {
                    let inv = T::one() / T::from_usize_lossy(nb.len());
                    for k in 0..3 {
                        gx[3 * p + k] += g2 * d[k];
                        for &q in nb {
                            gx[3 * q + k] -= g2 * d[k] * inv;
                        }
                    }
                }
                vec![Some(Tensor::new(vec![n, 3], gx).unwrap())]
            }),
        ))
    }
}

/// `p - centroid(neighbors(p))` per point.
pub fn laplacian_deltas<T: Scalar>(pts: &[Point3<T>], neighbors: &[Vec<usize>]) -> Vec<Point3<T>> {
    pts.iter()
        .zip(neighbors)
        .map(|(p, nb)| {
            let inv = T::one() / T::from_usize_lossy(nb.len());
            let mut c = [T::zero(); 3];
            for &q in nb {
                for k in 0..3 {
                    c[k] += pts[q][k];
                }
            }
            [p[0] - c[0] * inv, p[1] - c[1] * inv, p[2] - c[2] * inv]
        })
        .collect()
}

/// Brute-force evaluation for tests and small inputs.
pub fn chamfer_brute_force<T: Scalar>(a: &[Point3<T>], b: &[Point3<T>], red: Reduction) -> T {
    let one_way = |x: &[Point3<T>], y: &[Point3<T>]| -> T {
        let s: T = x
            .iter()
            .map(|&p| y.iter().map(|&q| dist2(p, q)).fold(T::infinity(), T::min))
            .sum();
        match red {
            Reduction::Sum => s,
            Reduction::Mean => s / T::from_usize_lossy(x.len()),
        }
    };
    one_way(a, b) + one_way(b, a)
}
