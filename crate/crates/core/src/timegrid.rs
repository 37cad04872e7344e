//! Partitioned follow-up domain and the per-unit temporal quantities built on it.
//!
//! Intervals are right-open, `[a_{k-1}, a_k)`, except the last one which is
//! closed at `a_L`. A unit whose time lies beyond `a_L` is treated as censored
//! with full exposure in every interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TimeGridError {
    #[error("time axis needs at least two boundaries, got {0}")]
    TooFewBoundaries(usize),
    #[error("time axis boundary {index} is not finite")]
    NonFinite { index: usize },
    #[error("time axis is not strictly increasing at position {index}")]
    NotIncreasing { index: usize },
    #[error("time {time} precedes the start of follow-up {start}")]
    BeforeStart { time: f64, start: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    boundaries: Vec<f64>,
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = TimeGridError;

    fn try_from(boundaries: Vec<f64>) -> Result<Self, Self::Error> {
        TimeGrid::new(boundaries)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(grid: TimeGrid) -> Self {
        grid.boundaries
    }
}

impl TimeGrid {
    pub fn new(boundaries: Vec<f64>) -> Result<Self, TimeGridError> {
        if boundaries.len() < 2 {
            return Err(TimeGridError::TooFewBoundaries(boundaries.len()));
        }
        for (index, b) in boundaries.iter().enumerate() {
            if !b.is_finite() {
                return Err(TimeGridError::NonFinite { index });
            }
        }
        for index in 1..boundaries.len() {
            if boundaries[index] <= boundaries[index - 1] {
                return Err(TimeGridError::NotIncreasing { index });
            }
        }
        Ok(Self { boundaries })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Number of intervals `L`.
    pub fn n_intervals(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn end(&self) -> f64 {
        self.boundaries[self.boundaries.len() - 1]
    }

    /// Interval lengths `a_k - a_{k-1}`.
    pub fn widths(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    fn check_start(&self, t: f64) -> Result<(), TimeGridError> {
        if t < self.start() || t.is_nan() {
            return Err(TimeGridError::BeforeStart {
                time: t,
                start: self.start(),
            });
        }
        Ok(())
    }

    /// Index of the interval containing `t`, or `None` past `a_L`.
    pub fn locate(&self, t: f64) -> Result<Option<usize>, TimeGridError> {
        self.check_start(t)?;
        if t > self.end() {
            return Ok(None);
        }
        let last = self.n_intervals() - 1;
        // first k with t < a_k; t == a_L falls into the last (closed) interval
        let k = self.boundaries[1..].partition_point(|&b| b <= t);
        Ok(Some(k.min(last)))
    }

    /// Time spent in each interval before `t`.
    pub fn exposure(&self, t: f64) -> Result<Vec<f64>, TimeGridError> {
        self.check_start(t)?;
        Ok(self
            .boundaries
            .windows(2)
            .map(|w| {
                let (lo, hi) = (w[0], w[1]);
                if t < lo {
                    0.0
                } else if t < hi {
                    t - lo
                } else {
                    hi - lo
                }
            })
            .collect())
    }

    pub fn event_vector(&self, t: f64, event: bool) -> Result<Vec<u8>, TimeGridError> {
        let slot = self.locate(t)?;
        let mut d = vec![0u8; self.n_intervals()];
        if event {
            if let Some(k) = slot {
                d[k] = 1;
            }
        }
        Ok(d)
    }

    /// At-risk indicators: one before the interval holding `t`, zero from it on.
    pub fn at_risk(&self, t: f64) -> Result<Vec<u8>, TimeGridError> {
        let slot = self.locate(t)?;
        let l = self.n_intervals();
        Ok(match slot {
            None => vec![1; l],
            Some(kbar) => (0..l).map(|k| u8::from(k < kbar)).collect(),
        })
    }

    pub fn unit(&self, t: f64, event: bool) -> Result<UnitTemporal, TimeGridError> {
        Ok(UnitTemporal {
            e: self.exposure(t)?,
            d: self.event_vector(t, event)?,
            y: self.at_risk(t)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitTemporal {
    pub e: Vec<f64>,
    pub d: Vec<u8>,
    pub y: Vec<u8>,
}

/// Row-major `n x L` exposure, event and at-risk matrices for a whole dataset.
#[derive(Debug, Clone)]
pub struct TemporalMatrices {
    n_units: usize,
    n_intervals: usize,
    exposure: Vec<f64>,
    event: Vec<u8>,
    at_risk: Vec<u8>,
}

impl TemporalMatrices {
    pub fn build(grid: &TimeGrid, time: &[f64], event: &[bool]) -> Result<Self, TimeGridError> {
        assert_eq!(time.len(), event.len(), "time/event length mismatch");
        let l = grid.n_intervals();
        let mut exposure = Vec::with_capacity(time.len() * l);
        let mut ev = Vec::with_capacity(time.len() * l);
        let mut at_risk = Vec::with_capacity(time.len() * l);
        for (&t, &flag) in time.iter().zip(event) {
            let u = grid.unit(t, flag)?;
            exposure.extend(u.e);
            ev.extend(u.d);
            at_risk.extend(u.y);
        }
        Ok(Self {
            n_units: time.len(),
            n_intervals: l,
            exposure,
            event: ev,
            at_risk,
        })
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    pub fn exposure_row(&self, i: usize) -> &[f64] {
        &self.exposure[i * self.n_intervals..(i + 1) * self.n_intervals]
    }

    pub fn event_row(&self, i: usize) -> &[u8] {
        &self.event[i * self.n_intervals..(i + 1) * self.n_intervals]
    }

    pub fn at_risk_row(&self, i: usize) -> &[u8] {
        &self.at_risk[i * self.n_intervals..(i + 1) * self.n_intervals]
    }
}
