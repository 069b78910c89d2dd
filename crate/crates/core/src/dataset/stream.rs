use std::collections::VecDeque;

use ndarray::Array2;

use super::{ScalingStats, WindowSample};
use crate::error::{Error, Result};

/// Ring buffer over an unbounded frame stream. Holds the last `T` scaled
/// frames and emits a window on every push once full.
///
/// Single producer: frames must be pushed in time order from one thread.
#[derive(Debug, Clone)]
pub struct StreamBuffer {
    scaler: ScalingStats,
    window_len: usize,
    ring: VecDeque<Vec<f64>>,
    pushed: usize,
}

impl StreamBuffer {
    pub fn new(scaler: ScalingStats, window_len: usize) -> Result<Self> {
        if window_len == 0 {
            return Err(Error::usage("window length must be positive"));
        }
        Ok(Self {
            scaler,
            window_len,
            ring: VecDeque::with_capacity(window_len),
            pushed: 0,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.scaler.n_channels()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Frames pushed so far.
    pub fn frames_seen(&self) -> usize {
        self.pushed
    }

    /// Scales `frame`, appends it, and returns the window ending at it once
    /// `T` frames have been seen.
    pub fn push(&mut self, frame: &[f64]) -> Result<Option<WindowSample>> {
        if frame.len() != self.n_channels() {
            return Err(Error::usage(format!(
                "frame has {} values, stream expects {}",
                frame.len(),
                self.n_channels()
            )));
        }
        let mut scaled = if self.ring.len() == self.window_len {
            self.ring.pop_front().expect("full ring")
        } else {
            Vec::with_capacity(frame.len())
        };
        scaled.clear();
        scaled.extend_from_slice(frame);
        self.scaler.scale_frame(&mut scaled)?;
        self.ring.push_back(scaled);
        self.pushed += 1;

        if self.ring.len() < self.window_len {
            return Ok(None);
        }
        let p = self.n_channels();
        let mut values = Array2::zeros((self.window_len, p));
        for (mut row, frame) in values.rows_mut().into_iter().zip(&self.ring) {
            row.as_slice_mut()
                .expect("standard layout")
                .copy_from_slice(frame);
        }
        Ok(Some(WindowSample {
            values,
            start_index: self.pushed - self.window_len,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{draw_windows, fit_scaler, SeriesDataset};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, p: usize, seed: u64) -> SeriesDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = Array2::from_shape_fn((n, p), |_| rng.random_range(-3.0..3.0));
        SeriesDataset::from_frames(frames).unwrap()
    }

    #[test]
    fn warm_up_then_matches_batch_windows() {
        let ds = random_dataset(30, 3, 1);
        let stats = fit_scaler(&ds, 0..20).unwrap();
        let scaled = stats.apply(&ds).unwrap();
        let t = 6;
        let batch = draw_windows(&scaled, t).unwrap();
        let mut buf = StreamBuffer::new(stats, t).unwrap();
        for i in 0..t - 1 {
            assert!(buf.push(ds.frame(i).as_slice().unwrap()).unwrap().is_none());
        }
        let first = buf.push(ds.frame(t - 1).as_slice().unwrap()).unwrap().unwrap();
        assert_eq!(first, batch[0]);
        let second = buf.push(ds.frame(t).as_slice().unwrap()).unwrap().unwrap();
        assert_eq!(second, batch[1]);
    }

    #[test]
    fn full_replay_prefix_matches_batch() {
        let ds = random_dataset(80, 2, 9);
        let stats = fit_scaler(&ds, 0..80).unwrap();
        let batch = draw_windows(&stats.apply(&ds).unwrap(), 10).unwrap();
        let mut buf = StreamBuffer::new(stats, 10).unwrap();
        let streamed: Vec<_> = ds
            .frames()
            .rows()
            .into_iter()
            .filter_map(|r| buf.push(r.as_slice().unwrap()).unwrap())
            .collect();
        // the stream also emits the window ending at the last frame
        assert_eq!(streamed.len(), batch.len() + 1);
        assert_eq!(&streamed[..batch.len()], &batch[..]);
    }

    #[test]
    fn wrong_frame_length_is_usage_error() {
        let ds = random_dataset(10, 2, 2);
        let stats = fit_scaler(&ds, 0..10).unwrap();
        let mut buf = StreamBuffer::new(stats, 3).unwrap();
        assert!(matches!(buf.push(&[1.0]), Err(Error::Usage(_))));
    }
}
