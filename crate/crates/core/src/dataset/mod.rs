//! Multichannel series ingestion, z-score scaling and window sampling.

mod prepare;
mod scaler;
mod series;
mod stream;
mod window;

pub use prepare::{prepare_windows, PreparedWindows};
pub use scaler::{fit_scaler, ScalingStats, MIN_STD};
pub use series::{load_csv, write_csv, SeriesDataset};
pub use stream::StreamBuffer;
pub use window::{draw_windows, split_windows, SplitSpec, WindowSample};
