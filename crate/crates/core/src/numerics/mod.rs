//! Dense matrices, reverse-mode gradients, optimizer and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
mod layers;
mod matrix;
mod optim;
mod param;
pub mod special;
mod tape;

pub use layers::{normal_matrix, uniform_matrix, Linear};
pub use matrix::{dot, Matrix};
pub use optim::{Adam, AdamConfig};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{softmax_rows, Tape, Var};
