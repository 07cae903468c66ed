//! The CNN encoder, its parameters, and checkpoint I/O.

mod checkpoint;
pub mod encoder;
mod params;

pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, Manifest, TensorEntry, MANIFEST, PARAMS};
pub use encoder::{
    accumulate_gradients, encode_part, encode_task, forward, forward_query, head_loss, predict, query_loss, score_task, softmax_forward,
    Prediction, QueryInput, SoftmaxOutput, Tape, Task,
};
pub use params::{init_params, slot, HyperParams, ModelParams, OutputLayer, Vocab};
