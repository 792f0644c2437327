//! Time-indexed vector data with stepwise or linear interpolation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{parse_time, Time};

#[derive(Debug, Error)]
pub enum TimeSeriesError {
    #[error("time series is empty")]
    Empty,
    #[error("time {0} outside series range [{1}, {2}]")]
    OutOfRange(Time, Time, Time),
    #[error("times must be strictly increasing (at {0})")]
    NotIncreasing(Time),
    #[error("value dimension {got} differs from {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Stepwise,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutOfRange {
    #[default]
    Clamp,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<Time>,
    values: Vec<Vec<f64>>,
    pub interpolation: Interpolation,
    pub out_of_range: OutOfRange,
}

impl TimeSeries {
    pub fn new(
        points: Vec<(Time, Vec<f64>)>,
        interpolation: Interpolation,
        out_of_range: OutOfRange,
    ) -> Result<Self, TimeSeriesError> {
        let dim = points.first().ok_or(TimeSeriesError::Empty)?.1.len();
        let mut times = Vec::with_capacity(points.len());
        let mut values = Vec::with_capacity(points.len());
        for (t, v) in points {
            if let Some(&last) = times.last() {
                if t <= last {
                    return Err(TimeSeriesError::NotIncreasing(t));
                }
            }
            if v.len() != dim {
                return Err(TimeSeriesError::Dimension { expected: dim, got: v.len() });
            }
            times.push(t);
            values.push(v);
        }
        Ok(TimeSeries { times, values, interpolation, out_of_range })
    }

    pub fn scalar(points: &[(Time, f64)], interpolation: Interpolation) -> Result<Self, TimeSeriesError> {
        Self::new(points.iter().map(|&(t, v)| (t, vec![v])).collect(), interpolation, OutOfRange::Clamp)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[Time] {
        &self.times
    }

    pub fn start(&self) -> Time {
        self.times[0]
    }

    pub fn end(&self) -> Time {
        *self.times.last().expect("series is non-empty")
    }

    /// First knot strictly after `t`, if any.
    pub fn next_knot_after(&self, t: Time) -> Option<Time> {
        let i = self.times.partition_point(|&k| k <= t);
        self.times.get(i).copied()
    }

    pub fn value_at(&self, t: Time) -> Result<Vec<f64>, TimeSeriesError> {
        let (first, last) = (self.start(), self.end());
        if t < first || t > last {
            if self.out_of_range == OutOfRange::Error {
                return Err(TimeSeriesError::OutOfRange(t, first, last));
            }
            let idx = if t < first { 0 } else { self.len() - 1 };
            return Ok(self.values[idx].clone());
        }
        // index of the last knot with time <= t
        let i = self.times.partition_point(|&k| k <= t) - 1;
        match self.interpolation {
            Interpolation::Stepwise => Ok(self.values[i].clone()),
            Interpolation::Linear => {
                if i + 1 == self.len() || self.times[i] == t {
                    return Ok(self.values[i].clone());
                }
                let (t0, t1) = (self.times[i] as f64, self.times[i + 1] as f64);
                let w = (t as f64 - t0) / (t1 - t0);
                Ok(self.values[i]
                    .iter()
                    .zip(&self.values[i + 1])
                    .map(|(a, b)| a + w * (b - a))
                    .collect())
            }
        }
    }

    /// Reads `time,value1[,value2...]` rows; `#` starts a comment line.
    pub fn from_csv_str(
        text: &str,
        interpolation: Interpolation,
        out_of_range: OutOfRange,
    ) -> Result<Self, TimeSeriesError> {
        let mut points = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let t_str = fields.next().unwrap_or_default();
            let t = parse_time(t_str).map_err(|e| TimeSeriesError::Parse { line: n + 1, msg: e.to_string() })?;
            let vals = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| TimeSeriesError::Parse { line: n + 1, msg: format!("bad number '{f}'") })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if vals.is_empty() {
                return Err(TimeSeriesError::Parse { line: n + 1, msg: "row has no values".into() });
            }
            points.push((t, vals));
        }
        Self::new(points, interpolation, out_of_range)
    }

    pub fn from_csv_file(
        path: impl AsRef<Path>,
        interpolation: Interpolation,
        out_of_range: OutOfRange,
    ) -> Result<Self, TimeSeriesError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text, interpolation, out_of_range)
    }
}
