//! Dataset ingestion, scaling, chronological splits and windowing.

use std::ops::Range;
use std::path::Path;

use chrono::NaiveDateTime;

use crate::numerics::Tensor;

/// Channels whose standard deviation falls below this are passed through
/// unscaled.
pub const MIN_STD: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("empty dataset: {0}")]
    Empty(String),
    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("row {row}, column `{column}`: cannot parse `{text}` as a number")]
    Parse { row: usize, column: String, text: String },
    #[error("row {row}, column `{column}`: non-finite value")]
    NonFinite { row: usize, column: String },
    #[error("split configuration: {0}")]
    Split(String),
}

/// Raw multivariate series in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesFrame {
    pub timestamps: Vec<String>,
    /// `L x N` values.
    pub values: Tensor,
    pub channel_names: Vec<String>,
}

impl TimeSeriesFrame {
    pub fn new(timestamps: Vec<String>, values: Tensor, channel_names: Vec<String>) -> Result<Self, DataError> {
        if values.cols() != channel_names.len() || values.rows() != timestamps.len() {
            return Err(DataError::Csv(format!(
                "frame shape {:?} disagrees with {} timestamps and {} channels",
                values.shape(),
                timestamps.len(),
                channel_names.len()
            )));
        }
        Ok(Self {
            timestamps,
            values,
            channel_names,
        })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_channels(&self) -> usize {
        self.channel_names.len()
    }
}

pub fn load_csv(path: &Path, has_date_column: bool) -> Result<TimeSeriesFrame, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text, has_date_column)
}

/// Parses CSV text with a header row. Data rows are numbered from 1 in
/// error messages (the header is not counted).
pub fn parse_csv(text: &str, has_date_column: bool) -> Result<TimeSeriesFrame, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(DataError::Empty("missing header row".into()));
    }
    let skip = usize::from(has_date_column);
    if header.len() <= skip {
        return Err(DataError::Empty("header has no value columns".into()));
    }
    let channel_names = header[skip..].to_vec();
    let n = channel_names.len();

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        if record.len() != header.len() {
            return Err(DataError::Ragged {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        timestamps.push(if has_date_column {
            record[0].to_string()
        } else {
            (row - 1).to_string()
        });
        for (j, cell) in record.iter().skip(skip).enumerate() {
            let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                row,
                column: channel_names[j].clone(),
                text: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row,
                    column: channel_names[j].clone(),
                });
            }
            values.push(v);
        }
    }
    if timestamps.is_empty() {
        return Err(DataError::Empty("no data rows".into()));
    }
    let l = timestamps.len();
    TimeSeriesFrame::new(timestamps, Tensor::matrix(l, n, values), channel_names)
}

/// How the series is cut into train/validation/test.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitPlan {
    Fractions {
        train: f64,
        val: f64,
        test: f64,
    },
    /// Calendar-month lengths, 30-day months, derived from the sampling
    /// interval of the first two timestamps.
    Months {
        train: u32,
        val: u32,
        test: u32,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub plan: SplitPlan,
    pub few_shot_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            plan: SplitPlan::Fractions {
                train: 0.6,
                val: 0.2,
                test: 0.2,
            },
            few_shot_fraction: 1.0,
        }
    }
}

/// Named split presets, `name = plan` per line.
const SPLIT_PRESETS: &str = include_str!("../assets/split_presets.txt");

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if let SplitPlan::Fractions { train, val, test } = self.plan {
            if [train, val, test].iter().any(|f| !(f.is_finite() && *f > 0.0)) {
                return Err(DataError::Split("fractions must be positive".into()));
            }
            let sum = train + val + test;
            if sum > 1.0 + 1e-12 {
                return Err(DataError::Split(format!("fractions sum to {sum} > 1")));
            }
        }
        if let SplitPlan::Months { train, val, test } = self.plan {
            if train == 0 || val == 0 || test == 0 {
                return Err(DataError::Split("month counts must be positive".into()));
            }
        }
        if !(self.few_shot_fraction > 0.0 && self.few_shot_fraction <= 1.0) {
            return Err(DataError::Split(format!(
                "few-shot fraction {} outside (0, 1]",
                self.few_shot_fraction
            )));
        }
        Ok(())
    }

    /// Looks up a named preset such as `ett`.
    pub fn preset(name: &str) -> Result<SplitPlan, DataError> {
        for line in SPLIT_PRESETS.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, plan)) = line.split_once('=') else {
                continue;
            };
            if key.trim() == name {
                return parse_plan(plan.trim());
            }
        }
        Err(DataError::Split(format!("unknown split preset `{name}`")))
    }
}

/// Parses `fractions a,b,c` or `months a,b,c`.
pub fn parse_plan(text: &str) -> Result<SplitPlan, DataError> {
    let (kind, rest) = text
        .split_once(char::is_whitespace)
        .ok_or_else(|| DataError::Split(format!("bad split plan `{text}`")))?;
    let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(DataError::Split(format!("split plan `{text}` needs three values")));
    }
    let bad = || DataError::Split(format!("bad split plan `{text}`"));
    match kind {
        "fractions" => {
            let v: Vec<f64> = parts
                .iter()
                .map(|p| p.parse().map_err(|_| bad()))
                .collect::<Result<_, _>>()?;
            Ok(SplitPlan::Fractions {
                train: v[0],
                val: v[1],
                test: v[2],
            })
        }
        "months" => {
            let v: Vec<u32> = parts
                .iter()
                .map(|p| p.parse().map_err(|_| bad()))
                .collect::<Result<_, _>>()?;
            Ok(SplitPlan::Months {
                train: v[0],
                val: v[1],
                test: v[2],
            })
        }
        _ => Err(bad()),
    }
}

impl std::fmt::Display for SplitPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitPlan::Fractions { train, val, test } => write!(f, "fractions {train},{val},{test}"),
            SplitPlan::Months { train, val, test } => write!(f, "months {train},{val},{test}"),
        }
    }
}

/// Contiguous row ranges of the three splits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

fn floor_index(len: usize, cumulative: f64) -> usize {
    // the small offset keeps e.g. 100 * 0.7 = 70.00000000000001 and
    // 14400 * 0.8 = 11519.999... on the intended integer
    ((len as f64 * cumulative) + 1e-9).floor() as usize
}

/// Number of rows per 30-day month implied by the first sampling interval.
pub fn rows_per_month(timestamps: &[String]) -> Result<usize, DataError> {
    const FORMATS: [&str; 3] = ["%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S"];
    let parse = |s: &str| {
        FORMATS
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
            .or_else(|| {
                chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .ok()
                    .and_then(|d| d.and_hms_opt(0, 0, 0))
            })
    };
    let (Some(a), Some(b)) = (
        timestamps.first().and_then(|s| parse(s)),
        timestamps.get(1).and_then(|s| parse(s)),
    ) else {
        return Err(DataError::Split("month-based split needs parseable timestamps".into()));
    };
    let step = (b - a).num_seconds();
    const MONTH: i64 = 30 * 24 * 3600;
    if step <= 0 || MONTH % step != 0 {
        return Err(DataError::Split(format!(
            "sampling interval of {step}s does not divide a 30-day month"
        )));
    }
    Ok((MONTH / step) as usize)
}

/// Cuts `[0, L)` into contiguous train/val/test ranges.
pub fn split(frame: &TimeSeriesFrame, spec: &SplitSpec) -> Result<SplitRanges, DataError> {
    spec.validate()?;
    let len = frame.len();
    let (a, b, c) = match spec.plan {
        SplitPlan::Fractions { train, val, test } => (
            floor_index(len, train),
            floor_index(len, train + val),
            floor_index(len, train + val + test),
        ),
        SplitPlan::Months { train, val, test } => {
            let rpm = rows_per_month(&frame.timestamps)?;
            let a = train as usize * rpm;
            let b = a + val as usize * rpm;
            let c = b + test as usize * rpm;
            if c > len {
                return Err(DataError::Split(format!(
                    "month split needs {c} rows but the series has {len}"
                )));
            }
            (a, b, c)
        }
    };
    Ok(SplitRanges {
        train: 0..a,
        val: a..b,
        test: b..c,
    })
}

impl SplitRanges {
    /// Slice each split's windows are drawn from. Validation and test
    /// inputs may start up to `t_in` rows before their split; targets never
    /// cross a boundary.
    pub fn window_slices(&self, t_in: usize) -> [Range<usize>; 3] {
        [
            self.train.clone(),
            self.val.start.saturating_sub(t_in)..self.val.end,
            self.test.start.saturating_sub(t_in)..self.test.end,
        ]
    }

    /// Fails when any split cannot hold at least one window.
    pub fn check_lengths(&self, t_in: usize, m: usize) -> Result<(), DataError> {
        let names = ["train", "val", "test"];
        for (name, s) in names.iter().zip(self.window_slices(t_in)) {
            if s.len() < t_in + m {
                return Err(DataError::Split(format!(
                    "{name} split has {} usable rows, needs at least seq_len + pred_len = {}",
                    s.len(),
                    t_in + m
                )));
            }
        }
        Ok(())
    }
}

/// Per-channel mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn column_stats(values: &Tensor, rows: Range<usize>) -> (Vec<f64>, Vec<f64>) {
    let n = values.cols();
    let mut mean = Vec::with_capacity(n);
    let mut std = Vec::with_capacity(n);
    for j in 0..n {
        let m = crate::numerics::shifted_mean(rows.clone().map(|i| values.get(i, j)));
        let var = rows.clone().map(|i| (values.get(i, j) - m).powi(2)).sum::<f64>() / rows.len() as f64;
        mean.push(m);
        std.push(var.sqrt());
    }
    (mean, std)
}

impl ScalerStats {
    /// Fits population statistics on `rows` of the frame.
    pub fn fit(frame: &TimeSeriesFrame, rows: Range<usize>) -> Result<Self, DataError> {
        if rows.is_empty() || rows.end > frame.len() {
            return Err(DataError::Split(format!(
                "cannot fit scaler on rows {rows:?} of {}",
                frame.len()
            )));
        }
        let (mean, std) = column_stats(&frame.values, rows);
        Ok(Self { mean, std })
    }

    fn effective_std(&self, j: usize) -> f64 {
        if self.std[j] < MIN_STD {
            1.0
        } else {
            self.std[j]
        }
    }

    /// z-scores every row of an `rows x N` matrix.
    pub fn transform(&self, x: &Tensor) -> Tensor {
        let n = x.cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let j = k % n;
                (v - self.mean[j]) / self.effective_std(j)
            })
            .collect();
        Tensor::matrix(x.rows(), n, data)
    }

    pub fn inverse_transform(&self, x: &Tensor) -> Tensor {
        let n = x.cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let j = k % n;
                v * self.effective_std(j) + self.mean[j]
            })
            .collect();
        Tensor::matrix(x.rows(), n, data)
    }

    pub fn transform_frame(&self, frame: &TimeSeriesFrame) -> TimeSeriesFrame {
        TimeSeriesFrame {
            timestamps: frame.timestamps.clone(),
            values: self.transform(&frame.values),
            channel_names: frame.channel_names.clone(),
        }
    }
}

/// One `(input, target)` training example.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    /// `T_in x N` input.
    pub x: Tensor,
    /// `M x N` target, beginning right after the input.
    pub y: Tensor,
    /// Row index of the first input step in the source frame.
    pub window_start: usize,
    pub instance_mean: Vec<f64>,
    /// Per-channel std of `x`, clamped to 1 below [`MIN_STD`].
    pub instance_std: Vec<f64>,
}

impl WindowSample {
    pub fn seq_len(&self) -> usize {
        self.x.rows()
    }

    pub fn pred_len(&self) -> usize {
        self.y.rows()
    }

    pub fn num_channels(&self) -> usize {
        self.x.cols()
    }

    /// Input values of channel `n`.
    pub fn channel(&self, n: usize) -> Vec<f64> {
        (0..self.x.rows()).map(|t| self.x.get(t, n)).collect()
    }
}

pub fn window_count(slice_len: usize, t_in: usize, m: usize) -> usize {
    (slice_len + 1).saturating_sub(t_in + m)
}

/// Every window whose input and target fall inside `slice`.
pub fn make_windows(frame: &TimeSeriesFrame, t_in: usize, m: usize, slice: Range<usize>) -> Vec<WindowSample> {
    assert!(t_in >= 1 && m >= 1, "window lengths must be positive");
    let end = slice.end.min(frame.len());
    let start = slice.start.min(end);
    let count = window_count(end - start, t_in, m);
    let n = frame.num_channels();
    let values = &frame.values;
    (0..count)
        .map(|k| {
            let s = start + k;
            let x = Tensor::matrix(t_in, n, values.data()[s * n..(s + t_in) * n].to_vec());
            let y = Tensor::matrix(m, n, values.data()[(s + t_in) * n..(s + t_in + m) * n].to_vec());
            let (mean, std) = column_stats(&x, 0..t_in);
            let std = std.into_iter().map(|v| if v < MIN_STD { 1.0 } else { v }).collect();
            WindowSample {
                x,
                y,
                window_start: s,
                instance_mean: mean,
                instance_std: std,
            }
        })
        .collect()
}

/// Chronological prefix holding `floor(count * fraction)` windows, at least
/// one when the input is non-empty.
pub fn few_shot_subset(windows: &[WindowSample], fraction: f64) -> Vec<WindowSample> {
    let keep = few_shot_count(windows.len(), fraction);
    windows[..keep].to_vec()
}

pub fn few_shot_count(count: usize, fraction: f64) -> usize {
    if count == 0 {
        return 0;
    }
    let k = ((count as f64 * fraction) + 1e-9).floor() as usize;
    k.clamp(1, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame_of(len: usize, n: usize) -> TimeSeriesFrame {
        let values = Tensor::matrix(len, n, (0..len * n).map(|v| v as f64).collect());
        TimeSeriesFrame::new(
            (0..len).map(|i| i.to_string()).collect(),
            values,
            (0..n).map(|j| format!("c{j}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn parses_small_file() {
        let f = parse_csv("date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n2020-01-03,5,6\n", true).unwrap();
        assert_eq!((f.len(), f.num_channels()), (3, 2));
        assert_eq!(f.channel_names, vec!["a", "b"]);
        assert_eq!(f.timestamps[2], "2020-01-03");
        assert_eq!(f.values.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn non_numeric_cell_names_its_row() {
        let err = parse_csv("date,a,b\nd1,1,2\nd2,x,3\n", true).unwrap_err();
        assert!(matches!(err, DataError::Parse { row: 2, .. }), "{err}");
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = parse_csv("a,b\n1,2\n3\n", false).unwrap_err();
        assert!(matches!(err, DataError::Ragged { row: 2, .. }));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(matches!(parse_csv("", true), Err(DataError::Empty(_))));
        assert!(matches!(parse_csv("date,a\n", true), Err(DataError::Empty(_))));
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&frame_of(700, 1), 512, 96, 0..700).len(), 93);
        assert_eq!(make_windows(&frame_of(600, 1), 512, 96, 0..600).len(), 0);
        let w = make_windows(&frame_of(608, 1), 512, 96, 0..608);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].y.data()[0], 512.0);
        assert_eq!(w[0].y.data()[95], 607.0);
    }

    #[test]
    fn fraction_split() {
        let spec = SplitSpec {
            plan: SplitPlan::Fractions {
                train: 0.7,
                val: 0.1,
                test: 0.2,
            },
            few_shot_fraction: 1.0,
        };
        let r = split(&frame_of(100, 1), &spec).unwrap();
        assert_eq!((r.train, r.val, r.test), (0..70, 70..80, 80..100));

        let r = split(&frame_of(14400, 1), &SplitSpec::default()).unwrap();
        assert_eq!((r.train.len(), r.val.len(), r.test.len()), (8640, 2880, 2880));
    }

    #[test]
    fn oversized_fractions_rejected() {
        let spec = SplitSpec {
            plan: SplitPlan::Fractions {
                train: 0.7,
                val: 0.15,
                test: 0.2,
            },
            few_shot_fraction: 1.0,
        };
        assert!(matches!(split(&frame_of(100, 1), &spec), Err(DataError::Split(_))));
    }

    #[test]
    fn ett_preset_uses_months() {
        let plan = SplitSpec::preset("ett").unwrap();
        assert_eq!(
            plan,
            SplitPlan::Months {
                train: 12,
                val: 4,
                test: 4
            }
        );
        let start = chrono::NaiveDate::from_ymd_opt(2016, 7, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let len = 20 * 30 * 24 + 5;
        let timestamps = (0..len)
            .map(|h| {
                (start + chrono::Duration::hours(h as i64))
                    .format("%Y-%m-%d %H:%M:%S")
                    .to_string()
            })
            .collect();
        let frame = TimeSeriesFrame::new(timestamps, Tensor::zeros(&[len, 1]), vec!["ot".into()]).unwrap();
        let r = split(
            &frame,
            &SplitSpec {
                plan,
                few_shot_fraction: 1.0,
            },
        )
        .unwrap();
        assert_eq!(r.train, 0..8640);
        assert_eq!(r.val, 8640..11520);
        assert_eq!(r.test, 11520..14400);
    }

    #[test]
    fn split_too_short_for_windows() {
        let r = split(&frame_of(100, 1), &SplitSpec::default()).unwrap();
        assert!(r.check_lengths(16, 4).is_ok());
        assert!(matches!(r.check_lengths(64, 16), Err(DataError::Split(_))));
    }

    #[test]
    fn few_shot_prefixes() {
        let frame = frame_of(1100, 1);
        let windows = make_windows(&frame, 1, 1, 0..1001);
        assert_eq!(windows.len(), 1000);
        let ten = few_shot_subset(&windows, 0.10);
        assert_eq!(ten.len(), 100);
        assert_eq!(ten[99].window_start, 99);
        assert_eq!(few_shot_subset(&windows, 0.05).len(), 50);
        assert_eq!(few_shot_subset(&windows[..7], 0.05).len(), 1);
        assert_eq!(few_shot_subset(&windows, 1.0), windows);
    }

    #[test]
    fn scaler_examples() {
        let f = TimeSeriesFrame::new(
            vec!["0".into(), "1".into()],
            Tensor::from_rows(&[vec![0.0, 5.0], vec![2.0, 5.0]]),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let s = ScalerStats::fit(&f, 0..2).unwrap();
        assert_eq!(s.mean, vec![1.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 0.0]);
        let z = s.transform(&f.values);
        assert_eq!(z.data(), &[-1.0, 0.0, 1.0, 0.0]);
        assert_eq!(s.inverse_transform(&z), f.values);
    }

    /// Brute-force enumeration of valid window starts.
    fn enumerate_windows(len: usize, t_in: usize, m: usize) -> usize {
        (0..len).filter(|s| s + t_in + m <= len).count()
    }

    #[test]
    fn window_count_exhaustive() {
        for len in (0..=10_000).step_by(7).chain([10_000]) {
            for &(t_in, m) in &[(1, 1), (16, 4), (512, 96), (64, 16), (333, 1)] {
                assert_eq!(window_count(len, t_in, m), enumerate_windows(len, t_in, m));
            }
        }
    }

    proptest! {
        #[test]
        fn window_count_matches_enumeration(len in 0usize..=10_000, t_in in 1usize..600, m in 1usize..200) {
            prop_assert_eq!(window_count(len, t_in, m), enumerate_windows(len, t_in, m));
        }

        #[test]
        fn scaler_round_trip(seed in proptest::collection::vec(-1e4f64..1e4, 12..60)) {
            let rows = seed.len() / 3;
            let values = Tensor::matrix(rows, 3, seed[..rows * 3].to_vec());
            let f = TimeSeriesFrame::new((0..rows).map(|i| i.to_string()).collect(), values, vec!["a".into(), "b".into(), "c".into()]).unwrap();
            let s = ScalerStats::fit(&f, 0..rows / 2 + 1).unwrap();
            let back = s.inverse_transform(&s.transform(&f.values));
            prop_assert!(back.max_abs_diff(&f.values) < 1e-9);
        }

        #[test]
        fn splits_are_ordered_and_cover_targets(len in 200usize..3000, t_in in 4usize..32, m in 1usize..16) {
            let r = split(&frame_of(len, 1), &SplitSpec::default()).unwrap();
            prop_assert!(r.train.end == r.val.start && r.val.end == r.test.start);
            prop_assert!(r.test.end <= len);
            let frame = frame_of(len, 1);
            let mut targets = Vec::new();
            for s in r.window_slices(t_in) {
                for w in make_windows(&frame, t_in, m, s) {
                    targets.extend(w.window_start + t_in..w.window_start + t_in + m);
                }
            }
            targets.sort_unstable();
            targets.dedup();
            let expected: Vec<usize> = (t_in..r.test.end).collect();
            prop_assert_eq!(targets, expected);
        }
    }

    #[test]
    fn loading_twice_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "date,a\n1,0.1\n2,0.30000000000000004\n").unwrap();
        assert_eq!(load_csv(&p, true).unwrap(), load_csv(&p, true).unwrap());
    }
}
