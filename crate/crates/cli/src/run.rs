//! The three commands: solve, simulate and compare.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use alm_lqg::metrics::{
    allocation_report, estimate_cost, hedging_error, paired_comparison, CostEstimate, HedgeReport, PairedComparison,
    BENCHMARK_FLOOR,
};
use alm_lqg::{
    stationary_solve, ConstantMix, DVector, FeedbackStrategy, LiabilityParams, MarketParams, PathSet, Policy,
    RiccatiSolution, SimConfig, Simulator,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig, Scenario};
use crate::report;

/// Exit code for invalid configuration.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numerical or output failures.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] alm_lqg::Error),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_VALIDATION,
            RunError::Numerical(_) | RunError::Output { .. } => EXIT_FAILURE,
        }
    }
}

/// Simulates every path of `config` on the rayon pool. Paths are collected
/// in index order, so the result equals the sequential run bit for bit.
pub fn simulate_parallel<P: Policy>(
    market: &MarketParams,
    liability: &LiabilityParams,
    policy: &P,
    config: SimConfig,
    x0: f64,
) -> alm_lqg::Result<PathSet> {
    let sim = Simulator::new(market, liability, policy, config, x0)?;
    let paths = (0..config.paths()).into_par_iter().map(|i| sim.run_path(i)).collect();
    Ok(sim.collect(paths))
}

/// Solves the backward system (over the padding horizon when configured)
/// and builds the optimal feedback strategy.
pub fn build_strategy(scenario: &Scenario) -> alm_lqg::Result<FeedbackStrategy> {
    let sol = stationary_solve(
        &scenario.market,
        &scenario.liability,
        &scenario.objective,
        scenario.solver_horizon,
        scenario.options,
    )?;
    FeedbackStrategy::new(
        scenario.market.clone(),
        scenario.liability.clone(),
        scenario.objective.clone(),
        sol,
    )
}

/// Maximum relative variation of `F00`, `F0~`, `G0` over `[0, T]`, and how
/// the last sixth of the horizon compares with the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct Stationarity {
    pub horizon: f64,
    pub whole: f64,
    pub per_series: Vec<(String, f64)>,
    pub tail_start: f64,
    pub early: f64,
    pub late: f64,
}

impl Stationarity {
    pub fn of(sol: &RiccatiSolution) -> Self {
        let horizon = sol.horizon();
        let whole = sol.variation(0.0, horizon);
        let mut names = vec!["F00".to_string()];
        names.extend((1..=sol.m()).map(|j| format!("F0_{j}")));
        names.push("G0".into());
        let per_series = names.into_iter().zip(whole.series().map(|s| s.relative())).collect();
        let tail_start = horizon * 5.0 / 6.0;
        Stationarity {
            horizon,
            whole: whole.max_relative(),
            per_series,
            tail_start,
            early: sol.variation(0.0, tail_start).max_relative(),
            late: sol.variation(tail_start, horizon).max_relative(),
        }
    }

    fn describe(&self, out: &mut String) {
        let _ = writeln!(out, "stationarity on [0, {}]", self.horizon);
        let _ = writeln!(out, "  max relative variation: {:.6}", self.whole);
        for (name, v) in &self.per_series {
            let _ = writeln!(out, "    {name}: {v:.6}");
        }
        let _ = writeln!(
            out,
            "  variation on [0, {t}]: {:.6}; on [{t}, {}]: {:.6}",
            self.early,
            self.horizon,
            self.late,
            t = self.tail_start
        );
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    run: RunInfo,
    config: &'a RunConfig,
}

#[derive(Debug, Serialize)]
struct RunInfo {
    command: String,
    tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    sampler: String,
    relative_error_floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    alternative: Option<String>,
}

struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|e| RunError::Output {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(Outputs { dir: dir.to_path_buf() })
    }

    fn csv(&self, name: &str, write: impl FnOnce(BufWriter<File>) -> Result<(), csv::Error>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let err = |message: String| RunError::Output {
            path: path.clone(),
            message,
        };
        let file = File::create(&path).map_err(|e| err(e.to_string()))?;
        write(BufWriter::new(file)).map_err(|e| err(e.to_string()))
    }

    fn text(&self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| RunError::Output {
            path,
            message: e.to_string(),
        })
    }

    fn manifest(&self, config: &RunConfig, command: &str, seed: Option<u64>, alternative: Option<String>) -> Result<(), RunError> {
        let manifest = Manifest {
            run: RunInfo {
                command: command.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                seed,
                sampler: "ChaCha8 seeded with the run seed, stream = path index; ziggurat standard normals".into(),
                relative_error_floor: BENCHMARK_FLOOR,
                alternative,
            },
            config,
        };
        let text = toml::to_string(&manifest).map_err(|e| RunError::Output {
            path: self.dir.join("manifest.toml"),
            message: e.to_string(),
        })?;
        self.text("manifest.toml", &text)
    }
}

fn solver_summary(scenario: &Scenario, sol: &RiccatiSolution, out: &mut String) {
    let _ = writeln!(out, "formulation: {:?}", sol.formulation());
    let _ = writeln!(out, "objective horizon T: {}", sol.horizon());
    let _ = writeln!(out, "solver horizon: {}", sol.solver_horizon());
    let _ = writeln!(out, "solver step: {}", scenario.options.step);
    Stationarity::of(sol).describe(out);
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub strategy: FeedbackStrategy,
    pub stationarity: Stationarity,
    pub summary: String,
}

/// Writes `riccati.csv`, `summary.txt` and `manifest.toml`.
pub fn run_solve(config: &RunConfig, scenario: &Scenario) -> Result<SolveOutcome, RunError> {
    let strategy = build_strategy(scenario)?;
    let out = Outputs::create(&scenario.out_dir)?;
    out.csv("riccati.csv", |w| report::write_riccati(w, strategy.riccati()))?;
    let mut summary = String::new();
    solver_summary(scenario, strategy.riccati(), &mut summary);
    out.text("summary.txt", &summary)?;
    out.manifest(config, "solve", None, None)?;
    Ok(SolveOutcome {
        stationarity: Stationarity::of(strategy.riccati()),
        strategy,
        summary,
    })
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub paths: PathSet,
    pub report: HedgeReport,
    pub summary: String,
}

/// Solve, simulate, and write every report.
pub fn run_simulate(config: &RunConfig, scenario: &Scenario) -> Result<SimulateOutcome, RunError> {
    let plan = scenario.simulation()?;
    let strategy = build_strategy(scenario)?;
    let paths = simulate_parallel(&scenario.market, &scenario.liability, &strategy, plan.config, plan.x0)?;
    let report = hedging_error(&paths, &scenario.objective, false)?;
    let allocations = allocation_report(&paths);

    let out = Outputs::create(&scenario.out_dir)?;
    out.csv("riccati.csv", |w| report::write_riccati(w, strategy.riccati()))?;
    if scenario.write_paths {
        out.csv("paths.csv", |w| report::write_paths(w, &paths))?;
    }
    out.csv("hedge_report.csv", |w| report::write_hedge_report(w, &report))?;
    out.csv("allocations.csv", |w| report::write_allocations(w, &allocations))?;

    let horizon = scenario.objective.horizon();
    let mut summary = String::new();
    solver_summary(scenario, strategy.riccati(), &mut summary);
    let _ = writeln!(summary, "seed: {}", plan.config.seed());
    let _ = writeln!(summary, "paths: {}, dt: {}", plan.config.paths(), plan.config.dt());
    let _ = writeln!(summary, "initial wealth: {}", plan.x0);
    let _ = writeln!(summary, "J estimate: {} (stderr {})", report.cost.mean, report.cost.stderr);
    let _ = writeln!(summary, "E_bar at T: {}", report.e_bar[report.e_bar.len() - 1]);
    let _ = writeln!(summary, "max E_bar: {}", report.e_bar.iter().copied().fold(0.0, f64::max));
    let _ = writeln!(
        summary,
        "relative error, time average over [0, {horizon}]: {:.6}",
        report.mean_relative_error(0.0, horizon)
    );
    let _ = writeln!(
        summary,
        "relative error, ratio of time averages: {:.6}",
        report.ratio_of_averages(0.0, horizon)
    );
    let _ = writeln!(summary, "relative error, pointwise maximum: {:.6}", report.max_relative_error());
    out.text("summary.txt", &summary)?;
    out.manifest(config, "simulate", Some(plan.config.seed()), None)?;
    Ok(SimulateOutcome { paths, report, summary })
}

/// Alternative policy for `compare`.
#[derive(Debug, Clone, PartialEq)]
pub enum Alternative {
    /// Constant fractions of wealth per risky asset; the rest in the money account.
    Weights(Vec<f64>),
    /// The optimal strategy itself, replayed on the same paths.
    Optimal,
}

impl Alternative {
    fn label(&self) -> String {
        match self {
            Alternative::Optimal => "optimal (replayed)".into(),
            Alternative::Weights(w) => {
                let parts: Vec<String> = w.iter().map(|v| format!("{v}")).collect();
                format!("constant mix [{}]", parts.join(", "))
            }
        }
    }
}

#[derive(Debug)]
pub struct CompareOutcome {
    pub optimal: CostEstimate,
    pub alternative: CostEstimate,
    pub paired: PairedComparison,
    pub summary: String,
}

/// Costs of the optimal strategy and an alternative on common random numbers.
pub fn run_compare(config: &RunConfig, scenario: &Scenario, alternative: &Alternative) -> Result<CompareOutcome, RunError> {
    let plan = scenario.simulation()?;
    let n = scenario.market.n();
    let m = scenario.liability.m();
    let mix = match alternative {
        Alternative::Weights(w) if w.len() != n => {
            return Err(ConfigError::new("--weights", format!("expected {n} weights, found {}", w.len())).into())
        }
        Alternative::Weights(w) if w.iter().any(|v| !v.is_finite()) => {
            return Err(ConfigError::new("--weights", "weights must be finite").into())
        }
        Alternative::Weights(w) => Some(ConstantMix::new(DVector::from_vec(w.clone()), m)?),
        Alternative::Optimal => None,
    };
    let strategy = build_strategy(scenario)?;
    let (market, liability, objective) = (&scenario.market, &scenario.liability, &scenario.objective);
    let optimal_paths = simulate_parallel(market, liability, &strategy, plan.config, plan.x0)?;
    let alt_paths = match &mix {
        Some(mix) => simulate_parallel(market, liability, mix, plan.config, plan.x0)?,
        None => simulate_parallel(market, liability, &strategy, plan.config, plan.x0)?,
    };
    let optimal = estimate_cost(&optimal_paths, objective)?;
    let alt = estimate_cost(&alt_paths, objective)?;
    let paired = paired_comparison(&optimal, &alt)?;

    let out = Outputs::create(&scenario.out_dir)?;
    out.csv("comparison.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["policy", "J", "stderr"])?;
        w.write_record(["optimal".to_string(), format!("{}", optimal.mean), format!("{}", optimal.stderr)])?;
        w.write_record([alternative.label(), format!("{}", alt.mean), format!("{}", alt.stderr)])?;
        w.write_record([
            "difference (optimal - alternative)".to_string(),
            format!("{}", paired.difference),
            format!("{}", paired.stderr),
        ])?;
        w.flush()?;
        Ok(())
    })?;
    let mut summary = String::new();
    let _ = writeln!(summary, "seed: {}, paths: {}", plan.config.seed(), plan.config.paths());
    let _ = writeln!(summary, "optimal: J = {} (stderr {})", optimal.mean, optimal.stderr);
    let _ = writeln!(summary, "{}: J = {} (stderr {})", alternative.label(), alt.mean, alt.stderr);
    let _ = writeln!(
        summary,
        "paired difference: {} (stderr {}, z = {:.2})",
        paired.difference,
        paired.stderr,
        paired.z_score()
    );
    out.text("comparison.txt", &summary)?;
    out.manifest(config, "compare", Some(plan.config.seed()), Some(alternative.label()))?;
    Ok(CompareOutcome {
        optimal,
        alternative: alt,
        paired,
        summary,
    })
}
