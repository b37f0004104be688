//! Seeded synthetic datasets for smoke tests and toy runs.

use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DataError, TimeSeriesFrame};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SinusoidMixture {
    pub channels: usize,
    pub points: usize,
    /// Sinusoids summed per channel.
    pub components: usize,
    /// Half-width of the uniform noise added to every value.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SinusoidMixture {
    fn default() -> Self {
        Self {
            channels: 2,
            points: 2000,
            components: 3,
            noise: 0.05,
            seed: 7,
        }
    }
}

/// Hourly timestamps starting at 2016-07-01 00:00:00.
pub fn hourly_timestamps(points: usize) -> Vec<String> {
    let start = NaiveDate::from_ymd_opt(2016, 7, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date");
    (0..points)
        .map(|t| {
            (start + Duration::hours(t as i64))
                .format("%Y-%m-%d %H:%M:%S")
                .to_string()
        })
        .collect()
}

impl SinusoidMixture {
    /// Periods are drawn from 6..96 steps, amplitudes from 0.3..1.0.
    pub fn generate(&self) -> TimeSeriesFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let waves: Vec<Vec<(f64, f64, f64)>> = (0..self.channels)
            .map(|_| {
                (0..self.components)
                    .map(|_| {
                        let period = rng.random_range(6.0..96.0);
                        let amp = rng.random_range(0.3..1.0);
                        let phase = rng.random_range(0.0..std::f64::consts::TAU);
                        (std::f64::consts::TAU / period, amp, phase)
                    })
                    .collect()
            })
            .collect();
        let mut values = Vec::with_capacity(self.points * self.channels);
        for t in 0..self.points {
            for w in &waves {
                let clean: f64 = w.iter().map(|(f, a, p)| a * (f * t as f64 + p).sin()).sum();
                let jitter = if self.noise > 0.0 {
                    rng.random_range(-self.noise..self.noise)
                } else {
                    0.0
                };
                values.push(clean + jitter);
            }
        }
        TimeSeriesFrame::new(
            hourly_timestamps(self.points),
            Tensor::matrix(self.points, self.channels, values),
            (0..self.channels).map(|c| format!("ch{c}")).collect(),
        )
        .expect("generated frame is consistent")
    }
}

/// Adds a piecewise-constant level of `+amplitude` or `-amplitude` to every
/// channel, switching at random every `block` rows. Returns the per-row
/// level signs.
pub fn add_regimes(frame: &mut TimeSeriesFrame, block: usize, amplitude: f64, seed: u64) -> Vec<bool> {
    assert!(block > 0, "regime block must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<bool> = (0..frame.len().div_ceil(block)).map(|_| rng.random_bool(0.5)).collect();
    let n = frame.num_channels();
    let high: Vec<bool> = (0..frame.len()).map(|t| blocks[t / block]).collect();
    for (t, row) in frame.values.data_mut().chunks_mut(n).enumerate() {
        let shift = if high[t] { amplitude } else { -amplitude };
        row.iter_mut().for_each(|v| *v += shift);
    }
    high
}

/// Header `date,<channels>`; values use the shortest representation that
/// parses back to the same `f64`.
pub fn to_csv(frame: &TimeSeriesFrame) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["date".to_string()];
    header.extend(frame.channel_names.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    let n = frame.num_channels();
    for (t, row) in frame.values.data().chunks(n).enumerate() {
        let mut rec = vec![frame.timestamps[t].clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn write_csv(frame: &TimeSeriesFrame, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, to_csv(frame)).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}
