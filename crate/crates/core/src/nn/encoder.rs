//! Small strided convolutional image encoder.

use rand_chacha::ChaCha8Rng;

use super::layers::{Conv, Dense, Init};
use super::params::ParamStore;
use crate::autodiff::{ConvGeometry, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One intermediate activation `[1, C, 1, H/f, W/f]` and its down-sampling factor `f`.
#[derive(Clone, Copy, Debug)]
pub struct FeatureMap {
    pub var: Var,
    pub factor: usize,
    pub channels: usize,
}

#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// `[1, m]`
    pub global_code: Var,
    /// Ordered by increasing factor.
    pub feature_maps: Vec<FeatureMap>,
}

#[derive(Clone, Debug)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub code_dim: usize,
    /// Output channels of the five convolutions; all but the first halve the resolution.
    pub channels: [usize; 5],
    pub bias: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            in_channels: 3,
            code_dim: 512,
            channels: [16, 16, 32, 64, 128],
            bias: true,
        }
    }
}

/// Five 3x3 convolutions (stride 1, then four of stride 2), global average pooling
/// and a dense projection to the code.
#[derive(Clone, Debug)]
pub struct ImageEncoder {
    pub cfg: EncoderConfig,
    convs: Vec<Conv>,
    head: Dense,
    prefix: String,
}

impl ImageEncoder {
    pub fn new(prefix: &str, cfg: EncoderConfig) -> Self {
        let mut convs = Vec::new();
        let mut cin = cfg.in_channels;
        for (i, &cout) in cfg.channels.iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            let mut c = Conv::new(format!("{prefix}.conv{i}"), cin, cout, ConvGeometry::planar(3, stride, 1));
            if !cfg.bias {
                c = c.without_bias();
            }
            convs.push(c);
            cin = cout;
        }
        let mut head = Dense::new(format!("{prefix}.head"), cin, cfg.code_dim);
        if !cfg.bias {
            head = head.without_bias();
        }
        ImageEncoder {
            cfg,
            convs,
            head,
            prefix: prefix.to_string(),
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        for c in &self.convs {
            c.init(store, Init::He, rng)?;
        }
        self.head.init(store, Init::Xavier, rng)
    }

    /// Channels of the maps returned at factors 2, 4 and 8.
    pub fn feature_channels(&self) -> [usize; 3] {
        [self.cfg.channels[1], self.cfg.channels[2], self.cfg.channels[3]]
    }

    /// Encodes an `H x W x C` image (row-major, channel-last).
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, image: &Tensor<T>) -> Result<EncoderOutput> {
        let s = image.shape();
        if s.len() != 3 || s[2] != self.cfg.in_channels {
            return Err(Error::shape("image_encoder", &[s]));
        }
        let (h, w, c) = (s[0], s[1], s[2]);
        if h != w || h % 16 != 0 || h == 0 {
            return Err(Error::invalid(format!("encoder input must be square with side divisible by 16, got {h}x{w}")));
        }
        let src = image.data();
        let mut planar = vec![T::zero(); c * h * w];
        for (p, px) in src.chunks(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                planar[ch * h * w + p] = v;
            }
        }
        let mut x = tape.constant(Tensor::new(vec![1, c, 1, h, w], planar)?);
        let mut maps = Vec::new();
        let mut factor = 1;
        for (i, conv) in self.convs.iter().enumerate() {
            x = conv.forward(tape, store, x, None)?;
            x = tape.relu(x);
            if i > 0 {
                factor *= 2;
            }
            if (2..=8).contains(&factor) && i > 0 {
                maps.push(FeatureMap {
                    var: x,
                    factor,
                    channels: conv.cout,
                });
            }
        }
        let cl = self.convs.last().unwrap().cout;
        let side = h / factor;
        let flat = tape.reshape(x, &[cl, side * side])?;
        let pooled = tape.mean_last(flat)?;
        let pooled = tape.reshape(pooled, &[1, cl])?;
        let global_code = self.head.forward(tape, store, pooled)?;
        Ok(EncoderOutput {
            global_code,
            feature_maps: maps,
        })
    }
}
