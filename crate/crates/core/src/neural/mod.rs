//! Multilayer LSTM recurrent auto-encoder with partial reconstruction.
//!
//! The encoder reads all `P` input channels of a window; the decoder
//! reconstructs only the `K <= P` designated output channels. Training is
//! mean-squared error through exact backpropagation through time, optimized
//! with Adam and regularized by dropout on non-recurrent connections.

mod adam;
mod config;
mod forward;
mod io;
mod lstm;
mod params;
mod train;

pub use adam::{adam_step, AdamState};
pub use config::{compression_ratio, ModelConfig};
pub use forward::{
    backward, clip_global_norm, decode, encode, encode_batch, mse_loss, reconstruct, ContextVector,
    Dropout,
};
pub use io::{load_model, save_model, FORMAT_VERSION};
pub use lstm::{lstm_cell_step, GATES};
pub use params::{AutoencoderParams, Dense, DecoderInit, LstmLayerParams};
pub use train::{evaluate_mse, train, TrainReport};
