//! Liability models for the two experiments: geometric growth of income and
//! expense, and deterministic drift read off a table of annual estimates.
//!
//! Benchmark components are ordered `(income C, expense B)`, so the shortfall
//! `B - C` is `a* y` with `a = (-1, 1)`.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::model::LiabilityParams;
use crate::time_fn::TimeFunction;

/// One row of a liability estimate table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRow {
    pub year: f64,
    pub income: f64,
    pub expense: f64,
}

/// Annual (or irregular) estimates of income and expense by calendar year.
#[derive(Debug, Clone, PartialEq)]
pub struct LiabilityEstimateTable {
    rows: Vec<EstimateRow>,
}

impl LiabilityEstimateTable {
    /// Requires at least two rows, strictly increasing years and finite values.
    pub fn new(rows: Vec<EstimateRow>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientData(format!("{} row(s), at least 2 required", rows.len())));
        }
        for r in &rows {
            if !(r.year.is_finite() && r.income.is_finite() && r.expense.is_finite()) {
                return Err(invalid("estimate table", format!("non-finite entry in year {}", r.year)));
            }
        }
        if let Some(w) = rows.windows(2).find(|w| w[1].year <= w[0].year) {
            return Err(invalid(
                "estimate table",
                format!("years must be strictly increasing ({} then {})", w[0].year, w[1].year),
            ));
        }
        Ok(LiabilityEstimateTable { rows })
    }

    pub fn rows(&self) -> &[EstimateRow] {
        &self.rows
    }

    pub fn first_year(&self) -> f64 {
        self.rows[0].year
    }

    pub fn last_year(&self) -> f64 {
        self.rows[self.rows.len() - 1].year
    }

    /// Linearly interpolated `(income, expense)` at `year`, clamped to the table.
    pub fn interpolate(&self, year: f64) -> (f64, f64) {
        let years: Vec<f64> = self.rows.iter().map(|r| r.year).collect();
        let values: Vec<DVector<f64>> = self.rows.iter().map(row_vector).collect();
        let v = TimeFunction::Table { times: years, values }.eval(year);
        (v[0], v[1])
    }
}

fn row_vector(r: &EstimateRow) -> DVector<f64> {
    DVector::from_vec(alloc::vec![r.income, r.expense])
}

/// How the drift `h` is derived from the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Differencing {
    /// Central differences at interior knots, one-sided at the ends,
    /// interpolated linearly in time.
    #[default]
    Central,
    /// Forward difference over each interval, held constant on it. Integrating
    /// this drift on a grid that contains the knots reproduces the table values
    /// at the knots exactly.
    Forward,
}

/// `dC = g C dt`, `dB = g B dt`, no noise; `d` is the Brownian dimension.
pub fn artificial_liability(growth: f64, c0: f64, b0: f64, d: usize) -> Result<LiabilityParams> {
    if !(growth.is_finite() && c0.is_finite() && b0.is_finite()) {
        return Err(invalid("artificial liability", "growth and initial values must be finite"));
    }
    LiabilityParams::constant(
        DMatrix::identity(2, 2) * growth,
        DVector::zeros(2),
        DMatrix::zeros(2, d),
        DVector::from_vec(alloc::vec![c0, b0]),
    )
}

/// Deterministic liability with `alpha = 0`, `sigma_Y = 0` and `h` from
/// differences of the table, with `start_year` mapped to `t = 0`.
///
/// The table must cover `[start_year, start_year + horizon]`. Differences use
/// neighbouring rows outside that window when they exist, and `h` is clamped
/// to its last tabulated value after the final row.
pub fn calibrate_from_table(
    table: &LiabilityEstimateTable,
    start_year: f64,
    horizon: f64,
    d: usize,
    scheme: Differencing,
) -> Result<LiabilityParams> {
    if !(horizon > 0.0) || !horizon.is_finite() || !start_year.is_finite() {
        return Err(invalid("calibration window", "start year must be finite and the horizon positive"));
    }
    let end_year = start_year + horizon;
    let tol = 1e-9;
    if table.first_year() > start_year + tol || table.last_year() < end_year - tol {
        return Err(Error::Coverage {
            start: start_year,
            end: end_year,
            table_start: table.first_year(),
            table_end: table.last_year(),
        });
    }
    let rows = table.rows();
    let slopes = match scheme {
        Differencing::Central => central_slopes(rows),
        Differencing::Forward => forward_slopes(rows),
    };
    // From the last knot at or before the start; later knots are kept so a
    // solver horizon beyond `horizon` still sees tabulated drift.
    let first = rows.iter().rposition(|r| r.year <= start_year + tol).unwrap_or(0);
    if rows.len() - first < 2 {
        return Err(Error::InsufficientData(format!(
            "fewer than 2 rows span [{start_year}, {end_year}]"
        )));
    }
    let times: Vec<f64> = rows[first..].iter().map(|r| r.year - start_year).collect();
    let values = slopes[first..].to_vec();
    let h = match scheme {
        Differencing::Central => TimeFunction::table(times, values)?,
        Differencing::Forward => TimeFunction::steps(times, values)?,
    };
    let (c0, b0) = table.interpolate(start_year);
    LiabilityParams::new(
        DMatrix::zeros(2, 2).into(),
        h,
        DMatrix::zeros(2, d).into(),
        DVector::from_vec(alloc::vec![c0, b0]),
    )
}

fn slope(a: &EstimateRow, b: &EstimateRow) -> DVector<f64> {
    (row_vector(b) - row_vector(a)) / (b.year - a.year)
}

fn central_slopes(rows: &[EstimateRow]) -> Vec<DVector<f64>> {
    let n = rows.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                slope(&rows[0], &rows[1])
            } else if i == n - 1 {
                slope(&rows[n - 2], &rows[n - 1])
            } else {
                slope(&rows[i - 1], &rows[i + 1])
            }
        })
        .collect()
}

fn forward_slopes(rows: &[EstimateRow]) -> Vec<DVector<f64>> {
    let n = rows.len();
    (0..n)
        .map(|i| if i + 1 < n { slope(&rows[i], &rows[i + 1]) } else { slope(&rows[n - 2], &rows[n - 1]) })
        .collect()
}
