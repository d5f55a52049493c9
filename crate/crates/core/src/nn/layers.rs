use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use crate::autodiff::{ConvGeometry, Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Weight initialization schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Uniform with variance `2 / fan_in`, for ReLU layers.
    He,
    /// Uniform with variance `2 / (fan_in + fan_out)`.
    Xavier,
    Zeros,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Scalar>(self, tape: &mut Tape<T>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }

    fn default_init(self) -> Init {
        match self {
            Activation::Relu => Init::He,
            _ => Init::Xavier,
        }
    }
}

/// Random tensor of `shape` drawn for the given fan-in and fan-out.
pub fn init_tensor<T: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, init: Init, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let var = match init {
        Init::He => 2.0 / fan_in as f64,
        Init::Xavier => 2.0 / (fan_in + fan_out) as f64,
        Init::Zeros => return Tensor::zeros(shape),
    };
    let bound = (3.0 * var).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

/// Fully connected layer acting on row vectors: `y = x W + b`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub name: String,
    pub fan_in: usize,
    pub fan_out: usize,
    pub bias: bool,
}

impl Dense {
    pub fn new(name: impl Into<String>, fan_in: usize, fan_out: usize) -> Self {
        Dense {
            name: name.into(),
            fan_in,
            fan_out,
            bias: true,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, init: Init, rng: &mut ChaCha8Rng) -> Result<()> {
        store.insert(
            &self.weight_name(),
            init_tensor(&[self.fan_in, self.fan_out], self.fan_in, self.fan_out, init, rng),
        )?;
        if self.bias {
            store.insert(&self.bias_name(), Tensor::zeros(&[self.fan_out]))?;
        }
        Ok(())
    }

    /// `x: [n, fan_in] -> [n, fan_out]`
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = store.bind(tape, &self.weight_name())?;
        let b = if self.bias {
            Some(store.bind(tape, &self.bias_name())?)
        } else {
            None
        };
        tape.linear(x, w, b)
    }
}

/// Stack of dense layers; `hidden` after every layer but the last, `output` after it.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    /// `widths = [input, h1, ..., out]`
    pub fn new(prefix: &str, widths: &[usize], hidden: Activation, output: Activation) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(format!("{prefix}.fc{i}"), w[0], w[1]))
            .collect();
        Mlp { layers, hidden, output }
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let act = if i == last { self.output } else { self.hidden };
            l.init(store, act.default_init(), rng)?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        self.forward_from(tape, store, x, 0)
    }

    /// Runs layers `start..` on `x` (used when the first layer is applied piecewise).
    pub fn forward_from<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, mut x: Var, start: usize) -> Result<Var> {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate().skip(start) {
            x = l.forward(tape, store, x)?;
            x = if i == last { self.output } else { self.hidden }.apply(tape, x);
        }
        Ok(x)
    }

    /// Applies the first layer to `[a | broadcast(c)]` without materializing the
    /// concatenation: `a W_a + c W_c + b`, where `c: [1, k]` is shared by all rows.
    pub fn forward_with_shared<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        a: Var,
        shared: Var,
    ) -> Result<Var> {
        let first = &self.layers[0];
        let wa_width = tape.shape(a)[1];
        let n = tape.shape(a)[0];
        let w = store.bind(tape, &first.weight_name())?;
        let wa = tape.narrow(w, 0, 0, wa_width)?;
        let wc = tape.narrow(w, 0, wa_width, first.fan_in - wa_width)?;
        let ya = tape.matmul(a, wa)?;
        let yc = tape.matmul(shared, wc)?;
        let yc = if first.bias {
            let b = store.bind(tape, &first.bias_name())?;
            let yc_flat = tape.reshape(yc, &[first.fan_out])?;
            tape.add(yc_flat, b)?
        } else {
            yc
        };
        let mut x = tape.add_row(ya, yc)?;
        debug_assert_eq!(tape.shape(x), &[n, first.fan_out]);
        x = if self.layers.len() == 1 { self.output } else { self.hidden }.apply(tape, x);
        self.forward_from(tape, store, x, 1)
    }
}

/// 3D (or planar) convolution layer.
#[derive(Clone, Debug)]
pub struct Conv {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub geom: ConvGeometry,
    pub transpose: bool,
    pub bias: bool,
}

impl Conv {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, geom: ConvGeometry) -> Self {
        Conv {
            name: name.into(),
            cin,
            cout,
            geom,
            transpose: false,
            bias: true,
        }
    }

    pub fn transposed(name: impl Into<String>, cin: usize, cout: usize, geom: ConvGeometry) -> Self {
        Conv {
            transpose: true,
            ..Conv::new(name, cin, cout, geom)
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    fn weight_shape(&self) -> [usize; 5] {
        let [kd, kh, kw] = self.geom.kernel;
        if self.transpose {
            [self.cin, self.cout, kd, kh, kw]
        } else {
            [self.cout, self.cin, kd, kh, kw]
        }
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, init: Init, rng: &mut ChaCha8Rng) -> Result<()> {
        let k = self.geom.kernel_volume();
        let (fan_in, fan_out) = (self.cin * k, self.cout * k);
        store.insert(&format!("{}.w", self.name), init_tensor(&self.weight_shape(), fan_in, fan_out, init, rng))?;
        if self.bias {
            store.insert(&format!("{}.b", self.name), Tensor::zeros(&[self.cout]))?;
        }
        Ok(())
    }

    /// Forward pass; `out_size` is required for transposed layers.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        out_size: Option<[usize; 3]>,
    ) -> Result<Var> {
        let w = store.bind(tape, &format!("{}.w", self.name))?;
        let b = if self.bias {
            Some(store.bind(tape, &format!("{}.b", self.name))?)
        } else {
            None
        };
        if self.transpose {
            let out = out_size.ok_or_else(|| crate::error::Error::invalid(format!("{}: transposed conv needs an output size", self.name)))?;
            tape.conv_transpose3d(x, w, b, self.geom, out)
        } else {
            tape.conv3d(x, w, b, self.geom)
        }
    }
}
