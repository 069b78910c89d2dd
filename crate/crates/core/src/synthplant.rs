//! Regime-switching synthetic plant data with lead-lag channel structure.
//!
//! Each channel sits at a per-regime baseline plus i.i.d. Gaussian noise.
//! Lead channels move to the next regime's baseline a fixed number of steps
//! before the regime boundary, so they anticipate changes in their targets.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::SeriesDataset;
use crate::error::{Error, Result};

/// `lead` switches regime `lag` steps ahead of `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeadPair {
    pub lead: usize,
    pub target: usize,
    pub lag: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub n_channels: usize,
    pub n_states: usize,
    /// `n_states x n_channels` regime baselines.
    pub state_means: Array2<f64>,
    pub lead_map: Vec<LeadPair>,
    /// Inclusive bounds on how long a regime persists.
    pub dwell_range: (usize, usize),
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub data: SeriesDataset,
    pub regime_labels: Vec<usize>,
}

impl LabeledSeries {
    /// Positions `t` where `regime_labels[t] != regime_labels[t - 1]`.
    pub fn transitions(&self) -> Vec<usize> {
        boundaries(&self.regime_labels)
    }

    /// Majority regime of each length-`t` window, one per start in
    /// `0..len - t` (the windows `draw_windows` yields). Ties go to the
    /// regime at the window start.
    pub fn window_regimes(&self, t: usize) -> Vec<usize> {
        let labels = &self.regime_labels;
        if t == 0 || t >= labels.len() {
            return Vec::new();
        }
        let n_states = labels.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; n_states];
        for &l in &labels[..t] {
            counts[l] += 1;
        }
        let mut out = Vec::with_capacity(labels.len() - t);
        for s in 0..labels.len() - t {
            if s > 0 {
                counts[labels[s - 1]] -= 1;
                counts[labels[s + t - 1]] += 1;
            }
            let mut best = labels[s];
            for (state, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = state;
                }
            }
            out.push(best);
        }
        out
    }
}

fn boundaries(labels: &[usize]) -> Vec<usize> {
    (1..labels.len())
        .filter(|&t| labels[t] != labels[t - 1])
        .collect()
}

impl PlantSpec {
    pub fn max_lag(&self) -> usize {
        self.lead_map.iter().map(|p| p.lag).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_channels == 0 || self.n_states == 0 {
            return cfg("plant needs at least one channel and one state".into());
        }
        if self.state_means.dim() != (self.n_states, self.n_channels) {
            return cfg(format!(
                "state_means is {:?}, expected ({}, {})",
                self.state_means.dim(),
                self.n_states,
                self.n_channels
            ));
        }
        if self.state_means.iter().any(|v| !v.is_finite()) {
            return cfg("state_means must be finite".into());
        }
        let (lo, hi) = self.dwell_range;
        if lo == 0 || lo > hi {
            return cfg(format!("invalid dwell range [{lo}, {hi}]"));
        }
        for pair in &self.lead_map {
            if pair.lag == 0 {
                return cfg(format!("lead {} -> {} has zero lag", pair.lead, pair.target));
            }
            if pair.lead >= self.n_channels || pair.target >= self.n_channels {
                return cfg(format!(
                    "lead pair {} -> {} outside [0, {})",
                    pair.lead, pair.target, self.n_channels
                ));
            }
            if pair.lead == pair.target {
                return cfg(format!("channel {} cannot lead itself", pair.lead));
            }
        }
        if lo < 2 * self.max_lag() {
            return cfg(format!(
                "minimum dwell {lo} shorter than twice the largest lag {}",
                self.max_lag()
            ));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return cfg(format!("noise_std {} must be non-negative", self.noise_std));
        }
        Ok(())
    }

    /// Channel names grouped like a compressor train sensor list.
    pub fn channel_names(&self) -> Vec<String> {
        (0..self.n_channels).map(channel_name).collect()
    }
}

fn channel_name(j: usize) -> String {
    let group = match j % 4 {
        0 => "pressure",
        1 => "temperature",
        2 => "vibration",
        _ => "speed",
    };
    format!("{group}_{j:03}")
}

/// Generates `length` steps. Deterministic in `(spec, length)`.
pub fn generate(spec: &PlantSpec, length: usize) -> Result<LabeledSeries> {
    spec.validate()?;
    if length <= spec.dwell_range.0 {
        return Err(Error::Config(format!(
            "length {length} must exceed minimum dwell {}",
            spec.dwell_range.0
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut labels = Vec::with_capacity(length);
    let mut state = rng.random_range(0..spec.n_states);
    while labels.len() < length {
        let dwell = rng.random_range(spec.dwell_range.0..=spec.dwell_range.1);
        let take = dwell.min(length - labels.len());
        labels.extend(std::iter::repeat_n(state, take));
        if spec.n_states > 1 {
            // uniform over the other states
            let step = rng.random_range(1..spec.n_states);
            state = (state + step) % spec.n_states;
        }
    }

    // per-channel lead horizon; a channel leading several targets uses its
    // longest lag
    let mut lead_lag = vec![0usize; spec.n_channels];
    for pair in &spec.lead_map {
        lead_lag[pair.lead] = lead_lag[pair.lead].max(pair.lag);
    }

    let mut frames = Array2::zeros((length, spec.n_channels));
    for t in 0..length {
        for j in 0..spec.n_channels {
            let z: f64 = StandardNormal.sample(&mut rng);
            frames[[t, j]] = spec.state_means[[labels[t], j]] + spec.noise_std * z;
        }
    }
    for b in boundaries(&labels) {
        let next = labels[b];
        for (j, &lag) in lead_lag.iter().enumerate() {
            if lag == 0 {
                continue;
            }
            let shift = spec.state_means[[next, j]] - spec.state_means[[labels[b - 1], j]];
            for t in b.saturating_sub(lag)..b {
                frames[[t, j]] += shift;
            }
        }
    }

    let data = SeriesDataset::new(spec.channel_names(), frames)?;
    Ok(LabeledSeries {
        data,
        regime_labels: labels,
    })
}

/// A two-regime plant where every target channel has at least one lead
/// channel with a lag of 3 to 6 steps.
pub fn default_compressor_spec(p: usize, targets: &[usize], seed: u64) -> Result<PlantSpec> {
    if targets.is_empty() {
        return Err(Error::Config("at least one target channel is required".into()));
    }
    if let Some(&bad) = targets.iter().find(|&&k| k >= p) {
        return Err(Error::Config(format!("target {bad} outside [0, {p})")));
    }
    let candidates: Vec<usize> = (0..p).filter(|j| !targets.contains(j)).collect();
    if candidates.is_empty() {
        return Err(Error::Config(
            "every channel is a target; no channel left to lead".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);

    let n_states = 2;
    let mut state_means = Array2::zeros((n_states, p));
    for j in 0..p {
        // group-typical magnitude, then a regime offset of 0.5 to 1.5 units
        let level = match j % 4 {
            0 => rng.random_range(20.0..80.0),
            1 => rng.random_range(250.0..350.0),
            2 => rng.random_range(0.5..2.0),
            _ => rng.random_range(2500.0..3500.0),
        };
        let offset = rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        state_means[[0, j]] = level;
        state_means[[1, j]] = level + offset;
    }

    let mut lead_map = Vec::new();
    for (i, &target) in targets.iter().enumerate() {
        let lead = candidates[(i * 7 + rng.random_range(0..candidates.len())) % candidates.len()];
        lead_map.push(LeadPair {
            lead,
            target,
            lag: rng.random_range(3..=6),
        });
    }

    let spec = PlantSpec {
        n_channels: p,
        n_states,
        state_means,
        lead_map,
        dwell_range: (200, 300),
        noise_std: 0.1,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}
