use super::{draw_windows, fit_scaler, split_windows, ScalingStats, SeriesDataset, SplitSpec, WindowSample};
use crate::error::Result;

/// Scaled train/validation windows and the scaler that produced them.
#[derive(Debug, Clone)]
pub struct PreparedWindows {
    pub scaler: ScalingStats,
    pub train: Vec<WindowSample>,
    pub validation: Vec<WindowSample>,
}

/// Fits the scaler on the frames covered by training windows only, then
/// scales the whole series and splits its windows.
pub fn prepare_windows(dataset: &SeriesDataset, t: usize, split: SplitSpec) -> Result<PreparedWindows> {
    let (train_raw, _) = split_windows(draw_windows(dataset, t)?, split)?;
    let fit_end = train_raw.last().expect("non-empty train side").start_index + t;
    let scaler = fit_scaler(dataset, 0..fit_end)?;
    let (train, validation) = split_windows(draw_windows(&scaler.apply(dataset)?, t)?, split)?;
    Ok(PreparedWindows {
        scaler,
        train,
        validation,
    })
}
