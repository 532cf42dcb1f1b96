//! The untrained encoder-decoder prior: parameters, forward evaluation,
//! reverse-mode gradients and the Adam optimizer.

mod adam;
mod graph;
mod model;
mod params;
mod scalar;
mod spec;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Gradients, NORM_EPS};
pub use model::{backward, forward, Backward};
pub use params::{init_params, load_checkpoint, make_input, save_checkpoint, Param, ParameterStore, INPUT_NOISE_SCALE};
pub use scalar::Real;
pub use spec::NetworkSpec;
pub use tensor::Tensor;
