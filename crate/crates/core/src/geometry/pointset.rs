use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub type Point3<T> = [T; 3];

/// Local dimensionality of a skeletal point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Curve,
    Sheet,
}

impl Label {
    pub fn code(self) -> u8 {
        match self {
            Label::Curve => 0,
            Label::Sheet => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Label> {
        match c {
            0 => Some(Label::Curve),
            1 => Some(Label::Sheet),
            _ => None,
        }
    }
}

/// Ordered points with optional unit normals and curve/sheet labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet<T> {
    pub points: Vec<Point3<T>>,
    normals: Option<Vec<Point3<T>>>,
    labels: Option<Vec<Label>>,
}

const NORMAL_TOL: f64 = 1e-6;

impl<T: Scalar> PointSet<T> {
    pub fn new(points: Vec<Point3<T>>) -> Self {
        PointSet {
            points,
            normals: None,
            labels: None,
        }
    }

    pub fn from_flat(flat: &[T]) -> Result<Self> {
        if flat.len() % 3 != 0 {
            return Err(Error::shape("PointSet::from_flat", &[&[flat.len()]]));
        }
        Ok(Self::new(flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()))
    }

    /// Attaches normals; each must have unit length within `1e-6`.
    pub fn with_normals(mut self, normals: Vec<Point3<T>>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::shape("PointSet::with_normals", &[&[self.points.len()], &[normals.len()]]));
        }
        for (i, n) in normals.iter().enumerate() {
            let len = norm(*n).to_f64_lossy();
            if (len - 1.0).abs() > NORMAL_TOL {
                return Err(Error::invalid(format!("normal {i} has length {len}")));
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::shape("PointSet::with_labels", &[&[self.points.len()], &[labels.len()]]));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_label(self, label: Label) -> Self {
        let n = self.points.len();
        PointSet {
            labels: Some(vec![label; n]),
            ..self
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn normals(&self) -> Option<&[Point3<T>]> {
        self.normals.as_deref()
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn require_normals(&self) -> Result<&[Point3<T>]> {
        self.normals().ok_or_else(|| Error::invalid("point set has no normals"))
    }

    pub fn flat(&self) -> Vec<T> {
        self.points.iter().flatten().copied().collect()
    }

    /// `[N, 3]` tensor of coordinates.
    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::new(vec![self.len(), 3], self.flat()).expect("N x 3")
    }

    /// Points whose label equals `label`.
    pub fn select(&self, label: Label) -> PointSet<T> {
        let Some(labels) = &self.labels else {
            return PointSet::new(Vec::new());
        };
        let keep: Vec<usize> = (0..self.len()).filter(|&i| labels[i] == label).collect();
        self.subset(&keep)
    }

    pub fn subset(&self, idx: &[usize]) -> PointSet<T> {
        PointSet {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            normals: self.normals.as_ref().map(|n| idx.iter().map(|&i| n[i]).collect()),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Concatenation; normals and labels survive only when both sides carry them.
    pub fn concat(&self, other: &PointSet<T>) -> PointSet<T> {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let join = |a: Option<&[Point3<T>]>, b: Option<&[Point3<T>]>| match (a, b) {
            (Some(a), Some(b)) => Some([a, b].concat()),
            _ => None,
        };
        let normals = if self.is_empty() {
            other.normals.clone()
        } else if other.is_empty() {
            self.normals.clone()
        } else {
            join(self.normals(), other.normals())
        };
        let labels = if self.is_empty() {
            other.labels.clone()
        } else if other.is_empty() {
            self.labels.clone()
        } else {
            match (self.labels(), other.labels()) {
                (Some(a), Some(b)) => Some([a, b].concat()),
                _ => None,
            }
        };
        PointSet { points, normals, labels }
    }

    pub fn cast<U: Scalar>(&self) -> PointSet<U> {
        let c = |p: &Point3<T>| p.map(|v| U::lit(v.to_f64_lossy()));
        PointSet {
            points: self.points.iter().map(c).collect(),
            normals: self.normals.as_ref().map(|n| n.iter().map(c).collect()),
            labels: self.labels.clone(),
        }
    }
}

#[inline]
pub fn sub<T: Scalar>(a: Point3<T>, b: Point3<T>) -> Point3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add<T: Scalar>(a: Point3<T>, b: Point3<T>) -> Point3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale<T: Scalar>(a: Point3<T>, s: T) -> Point3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot<T: Scalar>(a: Point3<T>, b: Point3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<T: Scalar>(a: Point3<T>, b: Point3<T>) -> Point3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm<T: Scalar>(a: Point3<T>) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist2<T: Scalar>(a: Point3<T>, b: Point3<T>) -> T {
    let d = sub(a, b);
    dot(d, d)
}

pub fn normalize<T: Scalar>(a: Point3<T>) -> Option<Point3<T>> {
    let n = norm(a);
    if n > T::zero() && n.is_finite() {
        Some(scale(a, T::one() / n))
    } else {
        None
    }
}
