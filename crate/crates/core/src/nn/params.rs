use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Magic bytes of the parameter checkpoint format.
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SKF1";

#[derive(Clone, Debug)]
struct Param<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    m: Vec<T>,
    v: Vec<T>,
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named trainable tensors with their Adam moments.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Param<T>>,
    step: u64,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::DuplicateParam(name.to_string()));
        }
        let n = value.len();
        self.params.insert(
            name.to_string(),
            Param {
                value,
                grad: None,
                m: vec![T::zero(); n],
                v: vec![T::zero(); n],
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Overwrites a parameter's value; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if p.value.shape() != value.shape() {
            return Err(Error::shape("ParamStore::set", &[p.value.shape(), value.shape()]));
        }
        p.value = value;
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Records the parameter on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape<T>, name: &str) -> Result<Var> {
        Ok(tape.bind(name, self.get(name)?.clone()))
    }

    /// Adds the gradients of every binding on `tape` that names a parameter of this store.
    /// Returns how many bindings were absorbed.
    pub fn absorb_grads(&mut self, tape: &Tape<T>, grads: &Gradients<T>) -> usize {
        let mut n = 0;
        for (name, var) in tape.bindings() {
            let (Some(p), Some(g)) = (self.params.get_mut(name), grads.get(*var)) else {
                continue;
            };
            match &mut p.grad {
                Some(acc) => {
                    for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                slot => *slot = Some(g.clone()),
            }
            n += 1;
        }
        n
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name).and_then(|p| p.grad.as_ref())
    }

    pub fn clear_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad = None;
        }
    }

    /// Gives every parameter without a gradient an explicit zero gradient.
    pub fn zero_missing_grads(&mut self) {
        for p in self.params.values_mut() {
            if p.grad.is_none() {
                p.grad = Some(Tensor::zeros(p.value.shape()));
            }
        }
    }

    /// One Adam update with learning rate `lr`; clears gradients afterwards.
    pub fn step(&mut self, adam: &Adam, lr: f64) -> Result<()> {
        let missing: Vec<String> = self
            .params
            .iter()
            .filter(|(_, p)| p.grad.is_none())
            .map(|(n, _)| n.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingGrads(missing));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(adam.beta1), T::lit(adam.beta2));
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let (lr, eps) = (T::lit(lr), T::lit(adam.eps));
        for p in self.params.values_mut() {
            let g = p.grad.take().expect("checked above");
            for (((x, m), v), &g) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.m.iter_mut())
                .zip(p.v.iter_mut())
                .zip(g.data())
            {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *x -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Writes all parameter values in the `SKF1` format.
    ///
    /// Layout (little-endian): magic `SKF1`, `u32` record count, then per record in
    /// name order: `u32` name length, UTF-8 name, `u32` rank, `rank` x `u64` dims,
    /// `prod(dims)` x `f64` values. Optimizer state is not stored.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, p) in &self.params {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(p.value.ndim() as u32).to_le_bytes())?;
            for &d in p.value.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &x in p.value.data() {
                w.write_all(&x.to_f64_lossy().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |m: &str| Error::format("SKF1 checkpoint", m);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("wrong magic"));
        }
        let count = read_u32(r)?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let len = read_u32(r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| bad("non UTF-8 name"))?;
            let rank = read_u32(r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(T::lit(f64::from_le_bytes(b)));
            }
            store.insert(&name, Tensor::new(shape, data)?)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Copies values of identically named parameters from `other`.
    pub fn load_values_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        for (name, p) in &other.params {
            if self.contains(name) {
                self.set(name, p.value.clone())?;
            }
        }
        Ok(())
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::from_f64(&[1], &[x]).unwrap()).unwrap();
        s
    }

    fn loss_grad(store: &mut ParamStore<f64>, f: impl Fn(&mut Tape<f64>, Var) -> Var) -> f64 {
        let mut tape = Tape::new();
        let x = store.bind(&mut tape, "x").unwrap();
        let loss = f(&mut tape, x);
        let grads = tape.backward(loss).unwrap();
        store.absorb_grads(&tape, &grads);
        tape.value(loss).item().unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = scalar_store(1.5);
        s.zero_missing_grads();
        s.step(&Adam::default(), 0.1).unwrap();
        assert_eq!(s.get("x").unwrap().data(), &[1.5]);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut s = scalar_store(0.0);
        // d/dx of x is 1.
        loss_grad(&mut s, |t, x| t.sum(x));
        s.step(&Adam::default(), 0.1).unwrap();
        let x = s.get("x").unwrap().data()[0];
        assert!((x + 0.1).abs() < 1e-6, "{x}");
    }

    #[test]
    fn two_steps_descend_quadratic() {
        let mut s = scalar_store(0.0);
        let quad = |t: &mut Tape<f64>, x: Var| {
            let d = t.affine(x, 1.0, -5.0);
            t.sum_squares(d)
        };
        let l0 = loss_grad(&mut s, quad);
        s.step(&Adam::default(), 0.1).unwrap();
        loss_grad(&mut s, quad);
        s.step(&Adam::default(), 0.1).unwrap();
        let l2 = loss_grad(&mut s, quad);
        assert!(l2 < l0, "{l2} !< {l0}");
    }

    #[test]
    fn missing_grads_are_named() {
        let mut s = scalar_store(0.0);
        s.insert("w", Tensor::zeros(&[2])).unwrap();
        loss_grad(&mut s, |t, x| t.sum(x));
        match s.step(&Adam::default(), 0.1) {
            Err(Error::MissingGrads(names)) => assert_eq!(names, vec!["w".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = scalar_store(0.0);
        assert!(matches!(s.insert("x", Tensor::zeros(&[1])), Err(Error::DuplicateParam(_))));
    }

    #[test]
    fn checkpoint_roundtrip_and_magic() {
        let mut s = ParamStore::<f64>::new();
        s.insert("a.w", Tensor::from_f64(&[2, 2], &[1.0, -2.0, 3.5, 1e-300]).unwrap()).unwrap();
        s.insert("b", Tensor::scalar(7.0)).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SKF1");
        let back = ParamStore::<f64>::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.get("a.w").unwrap(), s.get("a.w").unwrap());
        assert_eq!(back.get("b").unwrap(), s.get("b").unwrap());
        buf[0] = b'X';
        assert!(ParamStore::<f64>::read_from(&mut buf.as_slice()).is_err());
    }
}
