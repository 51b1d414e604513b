//! Deterministic functions of time used for every model coefficient.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Values that can be blended linearly between two knots.
pub trait Lerp: Clone {
    /// `self + weight * (other - self)`.
    fn lerp(&self, other: &Self, weight: f64) -> Self;
}

impl Lerp for f64 {
    fn lerp(&self, other: &Self, weight: f64) -> Self {
        self + weight * (other - self)
    }
}

impl Lerp for DVector<f64> {
    fn lerp(&self, other: &Self, weight: f64) -> Self {
        self.zip_map(other, |a, b| a + weight * (b - a))
    }
}

impl Lerp for DMatrix<f64> {
    fn lerp(&self, other: &Self, weight: f64) -> Self {
        self.zip_map(other, |a, b| a + weight * (b - a))
    }
}

/// A deterministic function of time.
///
/// Tables are evaluated by clamping outside the knot range. `Table` interpolates
/// linearly between knots; `Steps` holds each knot value until the next knot.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeFunction<V> {
    Constant(V),
    Table { times: Vec<f64>, values: Vec<V> },
    Steps { times: Vec<f64>, values: Vec<V> },
}

impl<V: Lerp> TimeFunction<V> {
    pub fn constant(value: V) -> Self {
        TimeFunction::Constant(value)
    }

    /// Piecewise-linear function through `(times[i], values[i])`.
    pub fn table(times: Vec<f64>, values: Vec<V>) -> Result<Self> {
        check_knots(&times, values.len())?;
        Ok(TimeFunction::Table { times, values })
    }

    /// Right-continuous step function: `values[i]` on `[times[i], times[i + 1])`.
    pub fn steps(times: Vec<f64>, values: Vec<V>) -> Result<Self> {
        check_knots(&times, values.len())?;
        Ok(TimeFunction::Steps { times, values })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TimeFunction::Constant(_))
    }

    pub fn eval(&self, t: f64) -> V {
        match self {
            TimeFunction::Constant(v) => v.clone(),
            TimeFunction::Table { times, values } => {
                let i = times.partition_point(|&k| k <= t);
                if i == 0 {
                    values[0].clone()
                } else if i == times.len() || times[i - 1] == t {
                    values[i - 1].clone()
                } else {
                    let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
                    values[i - 1].lerp(&values[i], w)
                }
            }
            TimeFunction::Steps { times, values } => {
                let i = times.partition_point(|&k| k <= t);
                values[i.saturating_sub(1)].clone()
            }
        }
    }

    /// Every stored value (one for constants, one per knot for tables).
    pub fn values(&self) -> &[V] {
        match self {
            TimeFunction::Constant(v) => core::slice::from_ref(v),
            TimeFunction::Table { values, .. } | TimeFunction::Steps { values, .. } => values,
        }
    }

    /// Knot times, empty for constants.
    pub fn knots(&self) -> &[f64] {
        match self {
            TimeFunction::Constant(_) => &[],
            TimeFunction::Table { times, .. } | TimeFunction::Steps { times, .. } => times,
        }
    }

    /// Shifts every knot by `offset` (a no-op for constants).
    pub fn shifted(mut self, offset: f64) -> Self {
        if let TimeFunction::Table { times, .. } | TimeFunction::Steps { times, .. } = &mut self {
            times.iter_mut().for_each(|t| *t += offset);
        }
        self
    }
}

impl<V> From<V> for TimeFunction<V> {
    fn from(value: V) -> Self {
        TimeFunction::Constant(value)
    }
}

fn check_knots(times: &[f64], n_values: usize) -> Result<()> {
    if times.is_empty() {
        return Err(invalid("time table", "at least one knot is required"));
    }
    if times.len() != n_values {
        return Err(invalid("time table", "knot and value counts differ"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(invalid("time table", "knot times must be finite"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("time table", "knot times must be strictly increasing"));
    }
    Ok(())
}
