//! TOML run configuration and its validation into model objects.
//!
//! ```toml
//! [market]
//! r = 0.0
//! b = [0.03, 0.048, 0.035, 0.05]
//! covariance = [[...], ...]      # or sigma_s = [[...], ...]
//!
//! [liability]
//! kind = "artificial"            # or "table", "linear"
//! growth = 0.01
//! c0 = 80.0
//! b0 = 100.0
//!
//! [objective]
//! gamma1 = 1.0
//! gamma2 = 1.0
//! a = [-1.0, 1.0]
//! horizon = 30.0
//!
//! [solver]
//! padding_horizon = 50.0         # or "none"
//!
//! [simulation]
//! paths = 1000
//! dt = 0.25
//! seed = 7
//! x0 = "match-benchmark"         # or a number
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use alm_lqg::calibrate::{artificial_liability, calibrate_from_table, Differencing};
use alm_lqg::riccati::DEFAULT_STEP;
use alm_lqg::{
    DMatrix, DVector, FactorOrientation, Formulation, LiabilityParams, MarketParams, Objective, SimConfig,
    SolverOptions,
};
use serde::{Deserialize, Serialize};

use crate::table::read_estimate_table;

/// A configuration problem, tied to the offending field.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: Option<MarketSection>,
    pub liability: Option<LiabilitySection>,
    pub objective: Option<ObjectiveSection>,
    #[serde(default)]
    pub solver: SolverSection,
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub r: f64,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_s: Option<Vec<Vec<f64>>>,
    /// Triangular factor of `covariance` used as `sigma_S`.
    #[serde(default)]
    pub factor: Factor,
    /// Brownian dimension; defaults to assets plus benchmark components.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brownian_dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Factor {
    #[default]
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LiabilitySection {
    /// Income and expense growing at a common rate.
    Artificial { growth: f64, c0: f64, b0: f64 },
    /// Drift from a CSV table of estimates (`year,income,expense`).
    Table {
        path: PathBuf,
        #[serde(default = "default_start_year")]
        start_year: f64,
        #[serde(default)]
        differencing: DifferencingSetting,
    },
    /// Constant `alpha`, `h`, `sigma_Y`, `y0` given directly.
    Linear {
        alpha: Vec<Vec<f64>>,
        h: Vec<f64>,
        sigma_y: Vec<Vec<f64>>,
        y0: Vec<f64>,
    },
}

fn default_start_year() -> f64 {
    2040.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DifferencingSetting {
    #[default]
    Central,
    Forward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub gamma1: f64,
    pub gamma2: f64,
    pub a: Vec<f64>,
    /// Terminal projection; defaults to `a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Vec<f64>>,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub padding_horizon: Padding,
    #[serde(default)]
    pub formulation: FormulationSetting,
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            step: DEFAULT_STEP,
            padding_horizon: Padding::None,
            formulation: FormulationSetting::Doubled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulationSetting {
    #[default]
    Doubled,
    Consistent,
}

/// Solver horizon beyond the objective horizon, or `"none"`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "NumberOrWord", into = "NumberOrWord")]
pub enum Padding {
    #[default]
    None,
    Years(f64),
}

/// Initial wealth, or `"match-benchmark"` for `a(0)* y0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NumberOrWord", into = "NumberOrWord")]
pub enum InitialWealth {
    MatchBenchmark,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum NumberOrWord {
    Number(f64),
    Word(String),
}

impl TryFrom<NumberOrWord> for Padding {
    type Error = String;

    fn try_from(v: NumberOrWord) -> Result<Self, String> {
        match v {
            NumberOrWord::Number(x) => Ok(Padding::Years(x)),
            NumberOrWord::Word(w) if w == "none" => Ok(Padding::None),
            NumberOrWord::Word(w) => Err(format!("expected a number of years or \"none\", found \"{w}\"")),
        }
    }
}

impl From<Padding> for NumberOrWord {
    fn from(p: Padding) -> Self {
        match p {
            Padding::None => NumberOrWord::Word("none".into()),
            Padding::Years(x) => NumberOrWord::Number(x),
        }
    }
}

impl TryFrom<NumberOrWord> for InitialWealth {
    type Error = String;

    fn try_from(v: NumberOrWord) -> Result<Self, String> {
        match v {
            NumberOrWord::Number(x) => Ok(InitialWealth::Value(x)),
            NumberOrWord::Word(w) if w == "match-benchmark" => Ok(InitialWealth::MatchBenchmark),
            NumberOrWord::Word(w) => Err(format!("expected a number or \"match-benchmark\", found \"{w}\"")),
        }
    }
}

impl From<InitialWealth> for NumberOrWord {
    fn from(w: InitialWealth) -> Self {
        match w {
            InitialWealth::MatchBenchmark => NumberOrWord::Word("match-benchmark".into()),
            InitialWealth::Value(x) => NumberOrWord::Number(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub x0: InitialWealth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    /// Write every simulated path to `paths.csv`.
    #[serde(default = "default_true")]
    pub write_paths: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out(),
            write_paths: true,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::new("config", e.message()))
    }

    /// Reads a config file. Relative table paths resolve against its directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
        let config = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((config, base))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(sim) = self.simulation.as_mut() {
            if let Some(seed) = overrides.seed {
                sim.seed = seed;
            }
            if let Some(paths) = overrides.paths {
                sim.paths = paths;
            }
        }
        if let Some(out) = &overrides.out {
            self.output.dir = out.clone();
        }
    }

    /// Builds and checks every model object before any computation.
    pub fn validate(&self, base_dir: &Path) -> Result<Scenario, ConfigError> {
        let market_cfg = self.market.as_ref().ok_or_else(|| missing_block("market"))?;
        let liability_cfg = self.liability.as_ref().ok_or_else(|| missing_block("liability"))?;
        let objective_cfg = self.objective.as_ref().ok_or_else(|| missing_block("objective"))?;

        let m = liability_dim(liability_cfg);
        let market = build_market(market_cfg, m, liability_cfg)?;
        let liability = build_liability(liability_cfg, market.d(), objective_cfg.horizon, base_dir)?;
        liability
            .check_compatible(&market)
            .map_err(|e| ConfigError::new("liability", e))?;
        let objective = build_objective(objective_cfg)?;
        objective
            .check_compatible(&liability)
            .map_err(|e| ConfigError::new("objective.a", e))?;

        let solver = &self.solver;
        if !(solver.step > 0.0) || !solver.step.is_finite() {
            return Err(ConfigError::new("solver.step", "must be positive"));
        }
        let solver_horizon = match solver.padding_horizon {
            Padding::None => objective.horizon(),
            Padding::Years(t) if t >= objective.horizon() && t.is_finite() => t,
            Padding::Years(t) => {
                return Err(ConfigError::new(
                    "solver.padding_horizon",
                    format!("{t} is shorter than the objective horizon {}", objective.horizon()),
                ))
            }
        };
        let options = SolverOptions {
            step: solver.step,
            formulation: match solver.formulation {
                FormulationSetting::Doubled => Formulation::Doubled,
                FormulationSetting::Consistent => Formulation::Consistent,
            },
            value_terms: true,
        };

        let simulation = match &self.simulation {
            None => None,
            Some(s) => {
                let config = SimConfig::new(s.paths, s.dt, s.seed, objective.horizon())
                    .map_err(|e| ConfigError::new("simulation", e))?;
                let x0 = match s.x0 {
                    InitialWealth::MatchBenchmark => objective.benchmark_value(0.0, &liability.y0),
                    InitialWealth::Value(x) if x.is_finite() => x,
                    InitialWealth::Value(_) => return Err(ConfigError::new("simulation.x0", "must be finite")),
                };
                Some(SimulationPlan { config, x0 })
            }
        };

        Ok(Scenario {
            market,
            liability,
            objective,
            solver_horizon,
            options,
            simulation,
            out_dir: self.output.dir.clone(),
            write_paths: self.output.write_paths,
        })
    }
}

/// Validated inputs of a run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub market: MarketParams,
    pub liability: LiabilityParams,
    pub objective: Objective,
    pub solver_horizon: f64,
    pub options: SolverOptions,
    pub simulation: Option<SimulationPlan>,
    pub out_dir: PathBuf,
    pub write_paths: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SimulationPlan {
    pub config: SimConfig,
    pub x0: f64,
}

impl Scenario {
    pub fn simulation(&self) -> Result<SimulationPlan, ConfigError> {
        self.simulation.ok_or_else(|| missing_block("simulation"))
    }
}

fn missing_block(name: &str) -> ConfigError {
    ConfigError::new(name, format!("missing [{name}] block"))
}

fn liability_dim(cfg: &LiabilitySection) -> usize {
    match cfg {
        LiabilitySection::Artificial { .. } | LiabilitySection::Table { .. } => 2,
        LiabilitySection::Linear { y0, .. } => y0.len(),
    }
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(ConfigError::new(
            field,
            format!("row {i} has {} entries, row 0 has {ncols}", rows[i].len()),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn build_market(cfg: &MarketSection, m: usize, liability: &LiabilitySection) -> Result<MarketParams, ConfigError> {
    let n = cfg.b.len();
    if n == 0 {
        return Err(ConfigError::new("market.b", "at least one risky asset is required"));
    }
    let b = DVector::from_vec(cfg.b.clone());
    // A directly given sigma_Y fixes the Brownian dimension.
    let implied_d = match liability {
        LiabilitySection::Linear { sigma_y, .. } => sigma_y.first().map(Vec::len),
        _ => None,
    };
    match (&cfg.covariance, &cfg.sigma_s) {
        (Some(_), Some(_)) => Err(ConfigError::new("market", "give either `covariance` or `sigma_s`, not both")),
        (None, None) => Err(ConfigError::new("market.covariance", "missing covariance block (or `sigma_s`)")),
        (Some(cov), None) => {
            let cov = matrix("market.covariance", cov)?;
            if cov.nrows() != n || cov.ncols() != n {
                return Err(ConfigError::new(
                    "market.covariance",
                    format!("expected {n}x{n}, found {}x{}", cov.nrows(), cov.ncols()),
                ));
            }
            let d = cfg.brownian_dim.or(implied_d).unwrap_or(n + m);
            let orientation = match cfg.factor {
                Factor::Lower => FactorOrientation::Lower,
                Factor::Upper => FactorOrientation::Upper,
            };
            MarketParams::from_covariance_oriented(cfg.r, b, &cov, d, orientation)
                .map_err(|e| ConfigError::new("market.covariance", e))
        }
        (None, Some(sigma)) => {
            let sigma = matrix("market.sigma_s", sigma)?;
            if sigma.nrows() != n {
                return Err(ConfigError::new(
                    "market.sigma_s",
                    format!("expected {n} rows, found {}", sigma.nrows()),
                ));
            }
            if let Some(d) = cfg.brownian_dim {
                if d != sigma.ncols() {
                    return Err(ConfigError::new(
                        "market.brownian_dim",
                        format!("{d} does not match the {} columns of sigma_s", sigma.ncols()),
                    ));
                }
            }
            MarketParams::new(cfg.r.into(), b.into(), sigma.into()).map_err(|e| ConfigError::new("market.sigma_s", e))
        }
    }
}

fn build_liability(
    cfg: &LiabilitySection,
    d: usize,
    horizon: f64,
    base_dir: &Path,
) -> Result<LiabilityParams, ConfigError> {
    match cfg {
        LiabilitySection::Artificial { growth, c0, b0 } => {
            artificial_liability(*growth, *c0, *b0, d).map_err(|e| ConfigError::new("liability", e))
        }
        LiabilitySection::Table {
            path,
            start_year,
            differencing,
        } => {
            let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            let table = read_estimate_table(&full).map_err(|e| ConfigError::new("liability.path", e))?;
            let scheme = match differencing {
                DifferencingSetting::Central => Differencing::Central,
                DifferencingSetting::Forward => Differencing::Forward,
            };
            calibrate_from_table(&table, *start_year, horizon, d, scheme)
                .map_err(|e| ConfigError::new("liability.start_year", e))
        }
        LiabilitySection::Linear { alpha, h, sigma_y, y0 } => LiabilityParams::constant(
            matrix("liability.alpha", alpha)?,
            DVector::from_vec(h.clone()),
            matrix("liability.sigma_y", sigma_y)?,
            DVector::from_vec(y0.clone()),
        )
        .map_err(|e| ConfigError::new("liability", e)),
    }
}

fn build_objective(cfg: &ObjectiveSection) -> Result<Objective, ConfigError> {
    let a = DVector::from_vec(cfg.a.clone());
    let terminal = cfg.terminal.clone().map(DVector::from_vec).unwrap_or_else(|| a.clone());
    if terminal.len() != a.len() {
        return Err(ConfigError::new(
            "objective.terminal",
            format!("expected {} entries, found {}", a.len(), terminal.len()),
        ));
    }
    Objective::new(cfg.gamma1, cfg.gamma2, a.into(), terminal, cfg.horizon).map_err(|e| ConfigError::new("objective", e))
}
