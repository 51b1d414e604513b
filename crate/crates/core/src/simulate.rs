//! Euler-Maruyama Monte Carlo of prices, benchmark components and wealth.
//!
//! Path `i` draws its Brownian increments from ChaCha8 seeded with the run
//! seed on stream `i`, with standard normals from the ziggurat sampler of
//! `rand_distr`. Paths are therefore independent of each other and of the
//! order they are run in, and two policies simulated with the same seed see
//! identical increments path by path.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, invalid, Result};
use crate::model::{LiabilityParams, MarketParams};
use crate::strategy::{AffineRule, Policy};

/// Number of paths, step, seed and horizon of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    paths: usize,
    steps: usize,
    seed: u64,
    horizon: f64,
}

impl SimConfig {
    /// `horizon / dt` must be a whole number of steps (relative tolerance 1e-6).
    pub fn new(paths: usize, dt: f64, seed: u64, horizon: f64) -> Result<Self> {
        if paths == 0 {
            return Err(invalid("paths", "at least one path is required"));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", "must be positive"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid("T", "horizon must be positive"));
        }
        let ratio = horizon / dt;
        let steps = libm::round(ratio);
        if steps < 1.0 || (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
            return Err(invalid("dt", "the horizon must be a whole number of steps"));
        }
        Ok(SimConfig {
            paths,
            steps: steps as usize,
            seed,
            horizon,
        })
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SimConfig { seed, ..self }
    }

    pub fn with_paths(self, paths: usize) -> Result<Self> {
        Self::new(paths, self.dt(), self.seed, self.horizon)
    }

    /// `0, dt, ..., T`, ending exactly at `T`.
    pub fn grid(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.steps)
            .map(|k| if k == self.steps { self.horizon } else { k as f64 * dt })
            .collect()
    }

    /// Brownian increment source for one path.
    pub fn path_rng(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng
    }
}

/// One simulated trajectory, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// Risky prices, `nodes * n`.
    pub s: Vec<f64>,
    /// Benchmark components, `nodes * m`.
    pub y: Vec<f64>,
    /// Wealth, one per node.
    pub x: Vec<f64>,
    /// Risky holdings chosen at each node, `nodes * n`.
    pub xi: Vec<f64>,
}

/// Monte Carlo trajectories on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    grid: Vec<f64>,
    s0: Vec<f64>,
    n: usize,
    m: usize,
    config: SimConfig,
    x0: f64,
    paths: Vec<PathRecord>,
}

impl PathSet {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Money-market price, shared by every path.
    pub fn riskfree(&self) -> &[f64] {
        &self.s0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn initial_wealth(&self) -> f64 {
        self.x0
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn records(&self) -> &[PathRecord] {
        &self.paths
    }

    pub fn x(&self, path: usize, node: usize) -> f64 {
        self.paths[path].x[node]
    }

    pub fn y(&self, path: usize, node: usize) -> &[f64] {
        &self.paths[path].y[node * self.m..(node + 1) * self.m]
    }

    pub fn s(&self, path: usize, node: usize) -> &[f64] {
        &self.paths[path].s[node * self.n..(node + 1) * self.n]
    }

    pub fn xi(&self, path: usize, node: usize) -> &[f64] {
        &self.paths[path].xi[node * self.n..(node + 1) * self.n]
    }

    /// `X - sum(xi)`.
    pub fn money_account(&self, path: usize, node: usize) -> f64 {
        self.x(path, node) - self.xi(path, node).iter().sum::<f64>()
    }
}

#[derive(Debug, Clone)]
struct Node {
    r: f64,
    b: DVector<f64>,
    sigma_s: DMatrix<f64>,
    alpha: DMatrix<f64>,
    h: DVector<f64>,
    sigma_y: DMatrix<f64>,
    rule: AffineRule,
}

/// A prepared run: coefficients and policy gains frozen at every left node.
#[derive(Debug, Clone)]
pub struct Simulator {
    n: usize,
    m: usize,
    d: usize,
    config: SimConfig,
    x0: f64,
    grid: Vec<f64>,
    s0: Vec<f64>,
    s_init: DVector<f64>,
    y_init: DVector<f64>,
    nodes: Vec<Node>,
    final_rule: AffineRule,
}

impl Simulator {
    pub fn new<P: Policy>(
        market: &MarketParams,
        liability: &LiabilityParams,
        policy: &P,
        config: SimConfig,
        x0: f64,
    ) -> Result<Self> {
        liability.check_compatible(market)?;
        check_dim("policy assets", market.n(), policy.assets())?;
        if !x0.is_finite() {
            return Err(invalid("x0", "initial wealth must be finite"));
        }
        let grid = config.grid();
        let mut nodes = Vec::with_capacity(config.steps);
        for &t in &grid[..config.steps] {
            let rule = policy.rule_at(t)?;
            check_dim("policy rule benchmark dimension", liability.m(), rule.state.ncols())?;
            nodes.push(Node {
                r: market.r.eval(t),
                b: market.b.eval(t),
                sigma_s: market.sigma_s.eval(t),
                alpha: liability.alpha.eval(t),
                h: liability.h.eval(t),
                sigma_y: liability.sigma_y.eval(t),
                rule,
            });
        }
        // Holdings recorded at T: the rule at T when defined, else the last one in force.
        let final_rule = policy
            .rule_at(config.horizon)
            .unwrap_or_else(|_| nodes[config.steps - 1].rule.clone());

        let mut s0 = Vec::with_capacity(grid.len());
        s0.push(market.s0_riskfree);
        for k in 0..config.steps {
            let dt = grid[k + 1] - grid[k];
            s0.push(s0[k] * (1.0 + nodes[k].r * dt));
        }

        Ok(Simulator {
            n: market.n(),
            m: liability.m(),
            d: market.d(),
            config,
            x0,
            grid,
            s0,
            s_init: market.s0.clone(),
            y_init: liability.y0.clone(),
            nodes,
            final_rule,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Brownian dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Path `path` with increments from its own random stream.
    pub fn run_path(&self, path: usize) -> PathRecord {
        let mut rng = self.config.path_rng(path);
        self.integrate(|k, dw| draw_increments(&mut rng, self.grid[k + 1] - self.grid[k], dw))
    }

    /// Path driven by caller-supplied increments, `steps * d` values step-major.
    pub fn run_path_with_increments(&self, increments: &[f64]) -> Result<PathRecord> {
        check_dim("Brownian increments", self.config.steps * self.d, increments.len())?;
        let d = self.d;
        Ok(self.integrate(|k, dw| dw.copy_from_slice(&increments[k * d..(k + 1) * d])))
    }

    fn integrate(&self, mut increments: impl FnMut(usize, &mut [f64])) -> PathRecord {
        let (n, m, d) = (self.n, self.m, self.d);
        let nodes = self.grid.len();
        let mut rec = PathRecord {
            s: Vec::with_capacity(nodes * n),
            y: Vec::with_capacity(nodes * m),
            x: Vec::with_capacity(nodes),
            xi: vec![0.0; nodes * n],
        };
        let mut s: Vec<f64> = self.s_init.iter().copied().collect();
        let mut y: Vec<f64> = self.y_init.iter().copied().collect();
        let mut x = self.x0;
        let mut dw = vec![0.0; d];
        let mut ret = vec![0.0; n];
        let mut dy = vec![0.0; m];

        for (k, node) in self.nodes.iter().enumerate() {
            rec.s.extend_from_slice(&s);
            rec.y.extend_from_slice(&y);
            rec.x.push(x);
            let xi = &mut rec.xi[k * n..(k + 1) * n];
            node.rule.apply_into(x, &y, xi);

            let dt = self.grid[k + 1] - self.grid[k];
            increments(k, &mut dw);
            for i in 0..n {
                let mut v = node.b[i] * dt;
                for j in 0..d {
                    v += node.sigma_s[(i, j)] * dw[j];
                }
                ret[i] = v;
            }
            for i in 0..m {
                let mut v = node.h[i];
                for j in 0..m {
                    v += node.alpha[(i, j)] * y[j];
                }
                v *= dt;
                for j in 0..d {
                    v += node.sigma_y[(i, j)] * dw[j];
                }
                dy[i] = v;
            }
            let risky: f64 = xi.iter().sum();
            let gain: f64 = xi.iter().zip(&ret).map(|(a, r)| a * r).sum();
            x += gain + (x - risky) * node.r * dt;
            for (si, ri) in s.iter_mut().zip(&ret) {
                *si *= 1.0 + ri;
            }
            for (yi, di) in y.iter_mut().zip(&dy) {
                *yi += di;
            }
        }
        rec.s.extend_from_slice(&s);
        rec.y.extend_from_slice(&y);
        rec.x.push(x);
        let last = nodes - 1;
        self.final_rule.apply_into(x, &y, &mut rec.xi[last * n..]);
        rec
    }

    /// Wraps records (in path order) into a [`PathSet`].
    pub fn collect(&self, paths: Vec<PathRecord>) -> PathSet {
        PathSet {
            grid: self.grid.clone(),
            s0: self.s0.clone(),
            n: self.n,
            m: self.m,
            config: self.config,
            x0: self.x0,
            paths,
        }
    }
}

fn draw_increments(rng: &mut ChaCha8Rng, dt: f64, out: &mut [f64]) {
    let scale = libm::sqrt(dt);
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = scale * z;
    }
}

/// Runs every path sequentially.
pub fn simulate_paths<P: Policy>(
    market: &MarketParams,
    liability: &LiabilityParams,
    policy: &P,
    config: SimConfig,
    x0: f64,
) -> Result<PathSet> {
    let sim = Simulator::new(market, liability, policy, config, x0)?;
    let paths = (0..config.paths).map(|i| sim.run_path(i)).collect();
    Ok(sim.collect(paths))
}

/// Benchmark-component trajectories without any portfolio.
#[derive(Debug, Clone, PartialEq)]
pub struct LiabilityPaths {
    pub grid: Vec<f64>,
    pub m: usize,
    /// Per path, `nodes * m` values node-major.
    pub paths: Vec<Vec<f64>>,
}

impl LiabilityPaths {
    pub fn y(&self, path: usize, node: usize) -> &[f64] {
        &self.paths[path][node * self.m..(node + 1) * self.m]
    }
}

/// Simulates `Y` alone. Uses the same per-path streams as [`simulate_paths`],
/// so the trajectories coincide with the `Y` paths of a full run.
pub fn simulate_liability_only(liability: &LiabilityParams, config: SimConfig) -> Result<LiabilityPaths> {
    let grid = config.grid();
    let (m, d) = (liability.m(), liability.d());
    let nodes: Vec<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> = grid[..config.steps]
        .iter()
        .map(|&t| (liability.alpha.eval(t), liability.h.eval(t), liability.sigma_y.eval(t)))
        .collect();
    let paths = (0..config.paths)
        .map(|p| {
            let mut rng = config.path_rng(p);
            let mut y = liability.y0.clone();
            let mut out = Vec::with_capacity(grid.len() * m);
            let mut dw = vec![0.0; d];
            for (k, (alpha, h, sigma_y)) in nodes.iter().enumerate() {
                out.extend(y.iter());
                let dt = grid[k + 1] - grid[k];
                draw_increments(&mut rng, dt, &mut dw);
                let noise = sigma_y * DVector::from_column_slice(&dw);
                y += (alpha * &y + h) * dt + noise;
            }
            out.extend(y.iter());
            out
        })
        .collect();
    Ok(LiabilityPaths { grid, m, paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::strategy::{ConstantHoldings, ConstantMix};

    fn frozen_market() -> MarketParams {
        MarketParams::new(0.0.into(), DVector::zeros(2).into(), DMatrix::zeros(2, 3).into()).unwrap()
    }

    fn frozen_liability() -> LiabilityParams {
        LiabilityParams::constant(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(1, 3),
            DVector::from_element(1, 5.0),
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0, 0.25, 1, 30.0).is_err());
        assert!(SimConfig::new(1, 0.0, 1, 30.0).is_err());
        assert!(SimConfig::new(1, 0.7, 1, 2.0).is_err());
        let c = SimConfig::new(10, 0.25, 1, 30.0).unwrap();
        assert_eq!(c.steps(), 120);
        let g = c.grid();
        assert_eq!((g[0], g[120], g.len()), (0.0, 30.0, 121));
        assert_eq!(SimConfig::new(3, 0.1, 1, 1.0).unwrap().steps(), 10);
    }

    #[test]
    fn frozen_dynamics_stay_put() {
        let mix = ConstantMix::new(DVector::from_vec(vec![0.3, 0.2]), 1).unwrap();
        let cfg = SimConfig::new(4, 0.5, 9, 3.0).unwrap();
        let set = simulate_paths(&frozen_market(), &frozen_liability(), &mix, cfg, 7.0).unwrap();
        for p in 0..set.len() {
            for k in 0..set.nodes() {
                assert_eq!(set.x(p, k), 7.0);
                assert_eq!(set.y(p, k), &[5.0]);
                assert_eq!(set.s(p, k), &[1.0, 1.0]);
                assert_eq!(set.riskfree()[k], 1.0);
            }
        }
    }

    #[test]
    fn deterministic_wealth_matches_explicit_solution() {
        let r = 0.02;
        let b = [0.05, 0.03];
        let market = MarketParams::new(r.into(), DVector::from_row_slice(&b).into(), DMatrix::zeros(2, 3).into()).unwrap();
        let xi = [3.0, -1.0];
        let hold = ConstantHoldings::new(DVector::from_row_slice(&xi), 1);
        let horizon = 5.0;
        let cfg = SimConfig::new(1, 1.0 / 400.0, 1, horizon).unwrap();
        let x0 = 10.0;
        let set = simulate_paths(&market, &frozen_liability(), &hold, cfg, x0).unwrap();
        // e^{rT} x0 + int_0^T e^{r(T-s)} (b - r1)* xi ds by composite Simpson.
        let drift: f64 = b.iter().zip(&xi).map(|(bi, x)| (bi - r) * x).sum();
        let n = 1000;
        let h = horizon / n as f64;
        let f = |s: f64| libm::exp(r * (horizon - s)) * drift;
        let mut integral = f(0.0) + f(horizon);
        for k in 1..n {
            integral += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        integral *= h / 3.0;
        let exact = libm::exp(r * horizon) * x0 + integral;
        let got = set.x(0, set.nodes() - 1);
        assert!((got - exact).abs() <= 1e-3 * exact.abs(), "{got} vs {exact}");
        assert!((set.riskfree()[set.nodes() - 1] - libm::exp(r * horizon)).abs() < 1e-3);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let market = presets::gpif_market(2);
        let liability = LiabilityParams::constant(
            DMatrix::identity(2, 2) * 0.01,
            DVector::zeros(2),
            DMatrix::from_fn(2, 6, |i, j| if j == 4 + i { 1.0 } else { 0.0 }),
            DVector::from_vec(alloc::vec![80.0, 100.0]),
        )
        .unwrap();
        let mix = ConstantMix::new(DVector::from_element(4, 0.25), 2).unwrap();
        let cfg = SimConfig::new(5, 0.25, 42, 3.0).unwrap();
        let a = simulate_paths(&market, &liability, &mix, cfg, 20.0).unwrap();
        let b = simulate_paths(&market, &liability, &mix, cfg, 20.0).unwrap();
        assert_eq!(a, b);
        let c = simulate_paths(&market, &liability, &mix, cfg.with_seed(43), 20.0).unwrap();
        assert_ne!(a.records(), c.records());

        // Common random numbers: another policy sees the same benchmark paths.
        let cash = ConstantMix::all_cash(4, 2);
        let d = simulate_paths(&market, &liability, &cash, cfg, 20.0).unwrap();
        for p in 0..5 {
            assert_eq!(a.records()[p].y, d.records()[p].y);
            assert_eq!(a.records()[p].s, d.records()[p].s);
        }
        // Path i does not depend on how many paths are run.
        let sim = Simulator::new(&market, &liability, &mix, cfg, 20.0).unwrap();
        assert_eq!(sim.run_path(3), a.records()[3]);

        let li_only = simulate_liability_only(&liability, cfg).unwrap();
        for p in 0..5 {
            assert_eq!(li_only.paths[p], a.records()[p].y);
        }
    }

    #[test]
    fn money_account_and_initial_wealth() {
        let market = presets::gpif_market(2);
        let liability = LiabilityParams::constant(
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(2, 6),
            DVector::from_vec(alloc::vec![1.0, 2.0]),
        )
        .unwrap();
        let mix = ConstantMix::new(DVector::from_vec(alloc::vec![0.1, 0.2, 0.3, 0.0]), 2).unwrap();
        let set = simulate_paths(&market, &liability, &mix, SimConfig::new(3, 0.25, 5, 1.0).unwrap(), 12.0).unwrap();
        for p in 0..3 {
            assert_eq!(set.x(p, 0), 12.0);
            for k in 0..set.nodes() {
                let x = set.x(p, k);
                assert!((set.money_account(p, k) - 0.4 * x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn liability_growth() {
        let li = LiabilityParams::constant(
            DMatrix::identity(2, 2) * 0.01,
            DVector::zeros(2),
            DMatrix::zeros(2, 2),
            DVector::from_vec(alloc::vec![80.0, 100.0]),
        )
        .unwrap();
        let cfg = SimConfig::new(2, 0.25, 1, 30.0).unwrap();
        let out = simulate_liability_only(&li, cfg).unwrap();
        let c = out.y(0, 120)[0];
        let exact = 80.0 * libm::exp(0.3);
        // Euler growth (1 + 0.0025)^120 vs e^{0.3}: relative error ~ 0.0375 dt.
        assert!((c - exact).abs() / exact < 0.05 * 0.25);
        assert!((c - 80.0 * libm::pow(1.0025, 120.0)).abs() < 1e-9);

        let linear = LiabilityParams::constant(
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 0.75),
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 2.0),
        )
        .unwrap();
        let out = simulate_liability_only(&linear, SimConfig::new(1, 0.25, 0, 10.0).unwrap()).unwrap();
        for (k, t) in out.grid.iter().enumerate() {
            assert!((out.y(0, k)[0] - (2.0 + 0.75 * t)).abs() < 1e-12);
        }

        let empty = LiabilityParams::constant(DMatrix::zeros(0, 0), DVector::zeros(0), DMatrix::zeros(0, 0), DVector::zeros(0))
            .unwrap();
        let out = simulate_liability_only(&empty, SimConfig::new(3, 0.5, 0, 2.0).unwrap()).unwrap();
        assert!(out.paths.iter().all(|p| p.is_empty()));
    }

    #[test]
    fn supplied_increments_match_stream() {
        let market = MarketParams::new(
            0.01.into(),
            DVector::from_element(1, 0.05).into(),
            DMatrix::from_row_slice(1, 2, &[0.2, 0.0]).into(),
        )
        .unwrap();
        let li = LiabilityParams::constant(
            DMatrix::from_element(1, 1, 0.02),
            DVector::from_element(1, 0.1),
            DMatrix::from_row_slice(1, 2, &[0.05, 0.1]),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let mix = ConstantMix::new(DVector::from_element(1, 0.6), 1).unwrap();
        let cfg = SimConfig::new(1, 0.1, 11, 1.0).unwrap();
        let sim = Simulator::new(&market, &li, &mix, cfg, 1.0).unwrap();
        let mut rng = cfg.path_rng(0);
        let mut inc = alloc::vec![0.0; 20];
        let grid = cfg.grid();
        for k in 0..10 {
            draw_increments(&mut rng, grid[k + 1] - grid[k], &mut inc[2 * k..2 * k + 2]);
        }
        assert_eq!(sim.run_path_with_increments(&inc).unwrap(), sim.run_path(0));
        assert!(sim.run_path_with_increments(&inc[..4]).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let mix = ConstantMix::new(DVector::zeros(3), 1).unwrap();
        let cfg = SimConfig::new(1, 0.5, 0, 1.0).unwrap();
        assert!(simulate_paths(&frozen_market(), &frozen_liability(), &mix, cfg, 1.0).is_err());
        let li = LiabilityParams::constant(DMatrix::zeros(1, 1), DVector::zeros(1), DMatrix::zeros(1, 4), DVector::zeros(1))
            .unwrap();
        let mix = ConstantMix::new(DVector::zeros(2), 1).unwrap();
        assert!(simulate_paths(&frozen_market(), &li, &mix, cfg, 1.0).is_err());
    }
}
