//! Hedging error, cost and allocation statistics over a [`PathSet`].
//!
//! All reductions run over paths in index order, so results are reproducible
//! bit for bit for a given set of paths.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DVector;

use crate::error::{check_dim, invalid, Result};
use crate::model::Objective;
use crate::simulate::PathSet;

/// Floor on the benchmark level used as denominator of the relative error.
pub const BENCHMARK_FLOOR: f64 = 1e-9;

/// Sample mean of per-path costs with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEstimate {
    pub mean: f64,
    /// `sd / sqrt(N)`; NaN for a single path.
    pub stderr: f64,
    pub per_path: Vec<f64>,
}

impl CostEstimate {
    pub fn from_samples(per_path: Vec<f64>) -> Self {
        let (mean, stderr) = mean_stderr(&per_path);
        CostEstimate { mean, stderr, per_path }
    }
}

/// Paired difference `first - second` of two cost estimates on common paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedComparison {
    pub first: f64,
    pub second: f64,
    pub difference: f64,
    pub stderr: f64,
}

impl PairedComparison {
    /// Difference in units of its standard error.
    pub fn z_score(&self) -> f64 {
        self.difference / self.stderr
    }
}

/// Hedging-error curves and the cost of one simulated strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeReport {
    pub grid: Vec<f64>,
    /// Mean absolute tracking error per node.
    pub e_bar: Vec<f64>,
    /// `per_path[i][k]`, kept on request.
    pub per_path: Option<Vec<Vec<f64>>>,
    /// Cross-path mean benchmark level per node.
    pub benchmark_mean: Vec<f64>,
    /// `e_bar / max(|benchmark_mean|, BENCHMARK_FLOOR)`.
    pub relative_error: Vec<f64>,
    pub cost: CostEstimate,
    /// Mean holdings per node: risky assets then the money account.
    pub mean_allocation: Vec<Vec<f64>>,
}

impl HedgeReport {
    /// Time average of the pointwise relative error over `[from, to]` (trapezoid).
    pub fn mean_relative_error(&self, from: f64, to: f64) -> f64 {
        time_average(&self.grid, &self.relative_error, from, to)
    }

    /// `avg(e_bar) / avg(|benchmark_mean|)` over `[from, to]`.
    pub fn ratio_of_averages(&self, from: f64, to: f64) -> f64 {
        let level: Vec<f64> = self.benchmark_mean.iter().map(|b| b.abs()).collect();
        time_average(&self.grid, &self.e_bar, from, to) / time_average(&self.grid, &level, from, to).max(BENCHMARK_FLOOR)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.relative_error.iter().copied().fold(0.0, f64::max)
    }

    /// `e_bar` at the node closest to `t`.
    pub fn e_bar_at(&self, t: f64) -> f64 {
        self.e_bar[nearest_node(&self.grid, t)]
    }
}

/// Per-node mean and 10/50/90% quantiles of each holding.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationReport {
    pub grid: Vec<f64>,
    /// Series index: risky assets `0..n`, then the money account.
    pub mean: Vec<Vec<f64>>,
    pub q10: Vec<Vec<f64>>,
    pub q50: Vec<Vec<f64>>,
    pub q90: Vec<Vec<f64>>,
}

impl AllocationReport {
    /// Number of series (risky assets plus the money account).
    pub fn series(&self) -> usize {
        self.mean.len()
    }
}

fn check_paths(paths: &PathSet, objective: &Objective) -> Result<()> {
    check_dim("objective projection a", paths.m(), objective.m())?;
    if paths.is_empty() {
        return Err(invalid("paths", "no simulated paths"));
    }
    Ok(())
}

/// `a(t)* Y_t` per node for one path (`A* Y_T` at the horizon).
fn benchmark_path(paths: &PathSet, objective: &Objective, path: usize) -> Vec<f64> {
    paths
        .grid()
        .iter()
        .enumerate()
        .map(|(k, &t)| objective.benchmark_value(t, &DVector::from_column_slice(paths.y(path, k))))
        .collect()
}

/// Absolute tracking error `|a(t)* Y_t - X_t|` averaged over paths.
pub fn hedging_error(paths: &PathSet, objective: &Objective, keep_per_path: bool) -> Result<HedgeReport> {
    check_paths(paths, objective)?;
    let nodes = paths.nodes();
    let count = paths.len() as f64;
    let mut e_sum = vec![0.0; nodes];
    let mut bench_sum = vec![0.0; nodes];
    let mut per_path = keep_per_path.then(|| Vec::with_capacity(paths.len()));
    for p in 0..paths.len() {
        let bench = benchmark_path(paths, objective, p);
        let errors: Vec<f64> = (0..nodes).map(|k| (bench[k] - paths.x(p, k)).abs()).collect();
        for k in 0..nodes {
            e_sum[k] += errors[k];
            bench_sum[k] += bench[k];
        }
        if let Some(store) = per_path.as_mut() {
            store.push(errors);
        }
    }
    let e_bar: Vec<f64> = e_sum.iter().map(|s| s / count).collect();
    let benchmark_mean: Vec<f64> = bench_sum.iter().map(|s| s / count).collect();
    let relative_error = e_bar
        .iter()
        .zip(&benchmark_mean)
        .map(|(e, b)| e / b.abs().max(BENCHMARK_FLOOR))
        .collect();
    let alloc = allocation_report(paths);
    Ok(HedgeReport {
        grid: paths.grid().to_vec(),
        e_bar,
        per_path,
        benchmark_mean,
        relative_error,
        cost: estimate_cost(paths, objective)?,
        mean_allocation: alloc.mean,
    })
}

/// Per-path `int gamma1 (a* Y - X)^2 dt + gamma2 (A* Y_T - X_T)^2`, the
/// integral by the trapezoid rule on the simulation grid.
pub fn estimate_cost(paths: &PathSet, objective: &Objective) -> Result<CostEstimate> {
    check_paths(paths, objective)?;
    let grid = paths.grid();
    let last = grid.len() - 1;
    let terminal = objective.terminal();
    let samples = (0..paths.len())
        .map(|p| {
            let sq: Vec<f64> = grid
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let y = DVector::from_column_slice(paths.y(p, k));
                    let e = objective.a().eval(t).dot(&y) - paths.x(p, k);
                    e * e
                })
                .collect();
            let running = trapezoid(grid, &sq);
            let e_t = terminal.dot(&DVector::from_column_slice(paths.y(p, last))) - paths.x(p, last);
            objective.gamma1() * running + objective.gamma2() * e_t * e_t
        })
        .collect();
    Ok(CostEstimate::from_samples(samples))
}

/// Paired comparison of two cost estimates computed on the same paths.
pub fn paired_comparison(first: &CostEstimate, second: &CostEstimate) -> Result<PairedComparison> {
    check_dim("paired cost samples", first.per_path.len(), second.per_path.len())?;
    let diff: Vec<f64> = first.per_path.iter().zip(&second.per_path).map(|(a, b)| a - b).collect();
    let (difference, stderr) = mean_stderr(&diff);
    Ok(PairedComparison {
        first: first.mean,
        second: second.mean,
        difference,
        stderr,
    })
}

/// Mean and quantiles of risky holdings and the money account `X - sum(xi)`.
pub fn allocation_report(paths: &PathSet) -> AllocationReport {
    let n = paths.n();
    let nodes = paths.nodes();
    let series = n + 1;
    let mut mean = vec![vec![0.0; nodes]; series];
    let mut q10 = mean.clone();
    let mut q50 = mean.clone();
    let mut q90 = mean.clone();
    let mut column = Vec::with_capacity(paths.len());
    for j in 0..series {
        for k in 0..nodes {
            column.clear();
            column.extend((0..paths.len()).map(|p| if j < n { paths.xi(p, k)[j] } else { paths.money_account(p, k) }));
            mean[j][k] = column.iter().sum::<f64>() / column.len() as f64;
            column.sort_by(f64::total_cmp);
            q10[j][k] = quantile_sorted(&column, 0.1);
            q50[j][k] = quantile_sorted(&column, 0.5);
            q90[j][k] = quantile_sorted(&column, 0.9);
        }
    }
    AllocationReport {
        grid: paths.grid().to_vec(),
        mean,
        q10,
        q50,
        q90,
    }
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let pos = p.clamp(0.0, 1.0) * (len - 1) as f64;
            let lo = libm::floor(pos) as usize;
            let hi = (lo + 1).min(len - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var / n))
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Trapezoid average over the grid nodes inside `[from, to]`.
fn time_average(grid: &[f64], values: &[f64], from: f64, to: f64) -> f64 {
    let tol = 1e-9;
    let idx: Vec<usize> = (0..grid.len())
        .filter(|&k| grid[k] >= from - tol && grid[k] <= to + tol)
        .collect();
    match idx.len() {
        0 => f64::NAN,
        1 => values[idx[0]],
        _ => {
            let g: Vec<f64> = idx.iter().map(|&k| grid[k]).collect();
            let v: Vec<f64> = idx.iter().map(|&k| values[k]).collect();
            trapezoid(&g, &v) / (g[g.len() - 1] - g[0])
        }
    }
}

fn nearest_node(grid: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (k, g) in grid.iter().enumerate() {
        if (g - t).abs() < (grid[best] - t).abs() {
            best = k;
        }
    }
    best
}
