//! Minimal reverse-mode differentiable core: tensors, a recording tape,
//! LSTM and linear layers, losses, and clipped SGD. Double precision
//! throughout.

pub mod checkpoint;
pub mod fd;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use graph::{Graph, Var};
pub use layers::{
    bidi_layer, linear, lstm_sequence, lstm_step, mse, softmax_ce, BidiParams, LinearParams,
    LstmParams,
};
pub use optim::{sgd_step, ClipMode};
pub use params::{Initializer, ParamGrads, ParamId, ParamSet};
pub use tensor::Tensor;
