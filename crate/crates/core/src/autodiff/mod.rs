//! Dense tensors, a reverse-mode tape, rectifier MLPs and an adaptive-moment optimizer.

mod adam;
mod mlp;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use mlp::{Linear, Mlp, Param, Parameters};
pub use tape::{cosine_features, Gradients, Tape, Var};
pub use tensor::Tensor;
