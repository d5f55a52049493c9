//! Trainable building blocks on top of the tape.

mod aggregate;
mod encoder;
mod layers;
mod params;

pub use aggregate::{max_pool_aggregate, max_pool_aggregate_vars};
pub use encoder::{EncoderConfig, EncoderOutput, FeatureMap, ImageEncoder};
pub use layers::{init_tensor, Activation, Conv, Dense, Init, Mlp};
pub use params::{Adam, ParamStore, CHECKPOINT_MAGIC};
