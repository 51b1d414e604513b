//! Feedback controls.
//!
//! Every control here is affine in the state: holdings in the risky assets are
//! `xi = wealth * x + state * y + offset` with time-dependent coefficients. The
//! simulator relies on this and asks a [`Policy`] for its [`AffineRule`] once
//! per time step.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Error, Result};
use crate::model::{LiabilityParams, MarketParams, Objective};
use crate::riccati::RiccatiSolution;

/// `xi = wealth * x + state * y + offset` (amounts per risky asset).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRule {
    pub wealth: DVector<f64>,
    pub state: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineRule {
    pub fn zero(n: usize, m: usize) -> Self {
        AffineRule {
            wealth: DVector::zeros(n),
            state: DMatrix::zeros(n, m),
            offset: DVector::zeros(n),
        }
    }

    pub fn apply(&self, x: f64, y: &DVector<f64>) -> DVector<f64> {
        &self.wealth * x + &self.state * y + &self.offset
    }

    /// Allocation-free form of [`AffineRule::apply`] for the simulation loop.
    pub fn apply_into(&self, x: f64, y: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = self.wealth[i] * x + self.offset[i];
            for (j, yj) in y.iter().enumerate() {
                v += self.state[(i, j)] * yj;
            }
            *o = v;
        }
    }
}

/// A trading rule the simulator can drive.
pub trait Policy {
    /// Number of risky assets the rule trades.
    fn assets(&self) -> usize;

    /// Affine coefficients in force at time `t`.
    fn rule_at(&self, t: f64) -> Result<AffineRule>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn assets(&self) -> usize {
        (**self).assets()
    }

    fn rule_at(&self, t: f64) -> Result<AffineRule> {
        (**self).rule_at(t)
    }
}

/// Holds `weights[i] * X` in asset `i`; the rest sits in the money market.
/// Zero weights give the all-cash strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantMix {
    weights: DVector<f64>,
    m: usize,
}

impl ConstantMix {
    pub fn new(weights: DVector<f64>, m: usize) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid("weights", "must be finite"));
        }
        Ok(ConstantMix { weights, m })
    }

    pub fn all_cash(n: usize, m: usize) -> Self {
        ConstantMix {
            weights: DVector::zeros(n),
            m,
        }
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }
}

impl Policy for ConstantMix {
    fn assets(&self) -> usize {
        self.weights.len()
    }

    fn rule_at(&self, _t: f64) -> Result<AffineRule> {
        let n = self.weights.len();
        Ok(AffineRule {
            wealth: self.weights.clone(),
            state: DMatrix::zeros(n, self.m),
            offset: DVector::zeros(n),
        })
    }
}

/// Fixed currency amounts in each asset, whatever the state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantHoldings {
    amounts: DVector<f64>,
    m: usize,
}

impl ConstantHoldings {
    pub fn new(amounts: DVector<f64>, m: usize) -> Self {
        ConstantHoldings { amounts, m }
    }
}

impl Policy for ConstantHoldings {
    fn assets(&self) -> usize {
        self.amounts.len()
    }

    fn rule_at(&self, _t: f64) -> Result<AffineRule> {
        let n = self.amounts.len();
        Ok(AffineRule {
            wealth: DVector::zeros(n),
            state: DMatrix::zeros(n, self.m),
            offset: self.amounts.clone(),
        })
    }
}

/// The optimal tracking control and its value function.
#[derive(Debug, Clone)]
pub struct FeedbackStrategy {
    market: MarketParams,
    liability: LiabilityParams,
    objective: Objective,
    riccati: RiccatiSolution,
}

impl FeedbackStrategy {
    /// `riccati` must come from the same model and cover the objective horizon.
    pub fn new(
        market: MarketParams,
        liability: LiabilityParams,
        objective: Objective,
        riccati: RiccatiSolution,
    ) -> Result<Self> {
        liability.check_compatible(&market)?;
        objective.check_compatible(&liability)?;
        check_dim("Riccati solution benchmark dimension", liability.m(), riccati.m())?;
        if riccati.horizon() != objective.horizon() || riccati.solver_horizon() < objective.horizon() {
            return Err(invalid(
                "Riccati solution",
                "was solved for a different objective horizon",
            ));
        }
        Ok(FeedbackStrategy {
            market,
            liability,
            objective,
            riccati,
        })
    }

    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    pub fn liability(&self) -> &LiabilityParams {
        &self.liability
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn riccati(&self) -> &RiccatiSolution {
        &self.riccati
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let horizon = self.objective.horizon();
        if t >= 0.0 && t <= horizon {
            Ok(())
        } else {
            Err(Error::OutOfRange { t, horizon })
        }
    }

    fn f00_at(&self, t: f64) -> Result<crate::riccati::RiccatiPoint> {
        let p = self.riccati.evaluate(t)?;
        if !(p.f00 > 0.0) {
            return Err(Error::NonPositiveF00 { t, value: p.f00 });
        }
        Ok(p)
    }

    /// Optimal holdings in the risky assets at state `(t, x, y)`:
    ///
    /// ```text
    /// xi = -1/(2 F00) (sigma_S sigma_S*)^-1 [ (b - r1)(2 F00 x + 2 F0~* y + G0) + 2 sigma_S sigma_Y* F0~ ]
    /// ```
    ///
    /// The money market holds `x - sum(xi)`.
    pub fn optimal_control(&self, t: f64, x: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_time(t)?;
        check_dim("y", self.liability.m(), y.len())?;
        let p = self.f00_at(t)?;
        let factor = self.market.gram_factor(t)?;
        let mu = self.market.excess_drift(t);
        let k = self.liability.cross_covariance(&self.market, t);
        let bracket = mu * (2.0 * p.f00 * x + 2.0 * p.f0.dot(y) + p.g0) + k * &p.f0 * 2.0;
        Ok(factor.solve(&bracket) * (-1.0 / (2.0 * p.f00)))
    }

    /// `V(t, x, y) = F00 x^2 + 2 x F0~* y + y* F~ y + G0 x + G~* y + g`.
    pub fn value_function(&self, t: f64, x: f64, y: &DVector<f64>) -> Result<f64> {
        self.check_time(t)?;
        check_dim("y", self.liability.m(), y.len())?;
        let p = self.riccati.evaluate(t)?;
        let v = self.riccati.evaluate_value_terms(t)?;
        Ok(p.f00 * x * x + 2.0 * x * p.f0.dot(y) + y.dot(&(&v.f_tilde * y)) + p.g0 * x + v.g_tilde.dot(y) + v.g)
    }

    /// `min_xi` argument of the HJB equation evaluated at holdings `xi`:
    /// `mu* xi V_x + xi* S xi V_xx / 2 + xi* K V_xy`.
    pub fn hamiltonian(&self, t: f64, x: f64, y: &DVector<f64>, xi: &DVector<f64>) -> Result<f64> {
        let p = self.riccati.evaluate(t)?;
        let mu = self.market.excess_drift(t);
        let k = self.liability.cross_covariance(&self.market, t);
        let vx = 2.0 * p.f00 * x + 2.0 * p.f0.dot(y) + p.g0;
        let vxx = 2.0 * p.f00;
        let vxy = &p.f0 * 2.0;
        Ok(mu.dot(xi) * vx + 0.5 * xi.dot(&(self.market.gram(t) * xi)) * vxx + xi.dot(&(k * vxy)))
    }
}

impl Policy for FeedbackStrategy {
    fn assets(&self) -> usize {
        self.market.n()
    }

    /// Gains of the optimal control: with `z = S^-1 mu`,
    /// `xi = -z x - z F0~* y / F00 - z G0 / (2 F00) - S^-1 K F0~ / F00`.
    fn rule_at(&self, t: f64) -> Result<AffineRule> {
        self.check_time(t)?;
        let p = self.f00_at(t)?;
        let factor = self.market.gram_factor(t)?;
        let z = factor.solve(&self.market.excess_drift(t));
        let k = self.liability.cross_covariance(&self.market, t);
        let corr = factor.solve(&(k * &p.f0));
        Ok(AffineRule {
            wealth: -&z,
            state: &z * p.f0.transpose() * (-1.0 / p.f00),
            offset: &z * (-p.g0 / (2.0 * p.f00)) - corr / p.f00,
        })
    }
}

/// Free-function form of [`FeedbackStrategy::optimal_control`].
pub fn optimal_control(strategy: &FeedbackStrategy, t: f64, x: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
    strategy.optimal_control(t, x, y)
}

/// Free-function form of [`FeedbackStrategy::value_function`].
pub fn value_function(strategy: &FeedbackStrategy, t: f64, x: f64, y: &DVector<f64>) -> Result<f64> {
    strategy.value_function(t, x, y)
}

/// Benchmark level `a(t)* y` (`A* y` at the horizon).
pub fn benchmark_value(objective: &Objective, t: f64, y: &DVector<f64>) -> f64 {
    objective.benchmark_value(t, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, FactorOrientation};
    use crate::riccati::{solve_riccati, stationary_solve, RiccatiSolution, SolverOptions};
    use alloc::vec;
    use proptest::prelude::*;

    fn scalar_model(sigma_y: [f64; 2]) -> (MarketParams, LiabilityParams, Objective) {
        let market = MarketParams::new(
            0.01.into(),
            DVector::from_element(1, 0.05).into(),
            DMatrix::from_row_slice(1, 2, &[0.2, 0.0]).into(),
        )
        .unwrap();
        let liability = LiabilityParams::constant(
            DMatrix::from_element(1, 1, 0.02),
            DVector::from_element(1, 0.1),
            DMatrix::from_row_slice(1, 2, &sigma_y),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let a = DVector::from_element(1, 1.0);
        let objective = Objective::new(1.0, 1.0, a.clone().into(), a, 1.0).unwrap();
        (market, liability, objective)
    }

    fn strategy_for(model: (MarketParams, LiabilityParams, Objective)) -> FeedbackStrategy {
        let (mk, li, ob) = model;
        let ric = solve_riccati(&mk, &li, &ob, ob.horizon(), SolverOptions::default()).unwrap();
        FeedbackStrategy::new(mk, li, ob, ric).unwrap()
    }

    fn four_asset_strategy(orientation: FactorOrientation) -> FeedbackStrategy {
        let mk = presets::gpif_market_oriented(2, orientation);
        let li = LiabilityParams::constant(
            DMatrix::identity(2, 2) * 0.01,
            DVector::zeros(2),
            DMatrix::zeros(2, 6),
            DVector::from_vec(vec![80.0, 100.0]),
        )
        .unwrap();
        let ob = presets::shortfall_objective(30.0).unwrap();
        let ric = stationary_solve(&mk, &li, &ob, 50.0, SolverOptions { step: 0.01, ..Default::default() }).unwrap();
        FeedbackStrategy::new(mk, li, ob, ric).unwrap()
    }

    /// Hand-built Riccati data: F00 = 1, F0~ = -2, G0 = 0 on [0, 1].
    fn fixed_solution() -> FeedbackStrategy {
        let (mk, _, _) = scalar_model([0.0, 0.0]);
        let mk = MarketParams::new(0.0.into(), DVector::from_element(1, 0.04).into(), mk.sigma_s.clone()).unwrap();
        let li = LiabilityParams::constant(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(1, 2),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let a = DVector::from_element(1, 1.0);
        // A zero-drift twin with gamma1 = 0 has the constant solution F00 = 1,
        // F0~ = -2, G0 = 0; pair it with the b - r = 0.04 market.
        let flat = MarketParams::new(0.0.into(), DVector::zeros(1).into(), mk.sigma_s.clone()).unwrap();
        let ob = Objective::new(0.0, 1.0, a.clone().into(), a, 1.0).unwrap();
        let ric: RiccatiSolution = solve_riccati(&flat, &li, &ob, 1.0, SolverOptions::default()).unwrap();
        FeedbackStrategy::new(mk, li, ob, ric).unwrap()
    }

    #[test]
    fn scalar_hand_evaluation() {
        let s = fixed_solution();
        let p = s.riccati().evaluate(0.3).unwrap();
        assert_eq!((p.f00, p.f0[0], p.g0), (1.0, -2.0, 0.0));
        let xi = s.optimal_control(0.3, 1.0, &DVector::from_element(1, 1.0)).unwrap();
        assert!((xi[0] - 1.0).abs() < 1e-12, "{xi}");
    }

    #[test]
    fn zero_bracket_gives_zero_control() {
        let s = fixed_solution();
        // 2 F00 x + 2 F0~ y + G0 = 2x - 4y = 0 at x = 2y.
        let xi = s.optimal_control(0.5, 3.0, &DVector::from_element(1, 1.5)).unwrap();
        assert_eq!(xi[0], 0.0);
    }

    #[test]
    fn rule_matches_direct_formula() {
        for strategy in [strategy_for(scalar_model([0.05, 0.1])), four_asset_strategy(FactorOrientation::Lower)] {
            let m = strategy.liability().m();
            for (t, x) in [(0.0, 1.3), (0.37, -2.0), (0.9, 25.0)] {
                let y = DVector::from_fn(m, |i, _| 50.0 + 30.0 * i as f64 + t);
                let direct = strategy.optimal_control(t, x, &y).unwrap();
                let via_rule = strategy.rule_at(t).unwrap().apply(x, &y);
                assert!((direct - via_rule).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn linearity_in_bracket() {
        let s = strategy_for(scalar_model([0.0, 0.0]));
        let rule = s.rule_at(0.4).unwrap();
        let y = DVector::from_element(1, 2.0);
        let single = &rule.wealth * 1.5 + &rule.state * &y + &rule.offset;
        let doubled = &rule.wealth * 3.0 + &rule.state * (&y * 2.0) + &rule.offset * 2.0;
        assert!((doubled - single * 2.0).amax() < 1e-12);
    }

    #[test]
    fn value_function_terminal_condition() {
        // Doubled terminal data has F0~(T) = -2 gamma2 A, so only the consistent
        // variant reproduces gamma2 (A* y - x)^2.
        let (mk, li, ob) = scalar_model([0.05, 0.1]);
        let opts = SolverOptions {
            formulation: crate::Formulation::Consistent,
            ..Default::default()
        };
        let ric = solve_riccati(&mk, &li, &ob, 1.0, opts).unwrap();
        let s = FeedbackStrategy::new(mk, li, ob, ric).unwrap();
        for (x, y) in [(0.0, 1.0), (2.0, -1.0), (0.7, 0.7)] {
            let v = s.value_function(1.0, x, &DVector::from_element(1, y)).unwrap();
            assert!((v - (y - x) * (y - x)).abs() < 1e-14);
        }
        assert_eq!(s.value_function(1.0, 0.7, &DVector::from_element(1, 0.7)).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_and_dimension_errors() {
        let s = strategy_for(scalar_model([0.0, 0.0]));
        let y = DVector::from_element(1, 1.0);
        assert!(matches!(s.optimal_control(1.5, 0.0, &y), Err(Error::OutOfRange { .. })));
        assert!(matches!(s.optimal_control(-0.5, 0.0, &y), Err(Error::OutOfRange { .. })));
        assert!(matches!(
            s.optimal_control(0.5, 0.0, &DVector::zeros(2)),
            Err(Error::Dimension { .. })
        ));
        assert!(s.optimal_control(1.0, 0.0, &y).is_ok());
    }

    #[test]
    fn mismatched_riccati_is_rejected() {
        let (mk, li, ob) = scalar_model([0.0, 0.0]);
        let other = Objective::new(1.0, 1.0, DVector::from_element(1, 1.0).into(), DVector::from_element(1, 1.0), 2.0)
            .unwrap();
        let ric = solve_riccati(&mk, &li, &other, 2.0, SolverOptions::default()).unwrap();
        assert!(FeedbackStrategy::new(mk, li, ob, ric).is_err());
    }

    #[test]
    fn zero_target_with_no_benchmark_noise() {
        let (mk, li, _) = scalar_model([0.0, 0.0]);
        let li = LiabilityParams::constant(
            li.alpha.eval(0.0),
            DVector::zeros(1),
            DMatrix::zeros(1, 2),
            li.y0.clone(),
        )
        .unwrap();
        let ob = Objective::new(0.0, 1.0, DVector::zeros(1).into(), DVector::zeros(1), 1.0).unwrap();
        let ric = solve_riccati(&mk, &li, &ob, 1.0, SolverOptions::default()).unwrap();
        let s = FeedbackStrategy::new(mk, li, ob, ric).unwrap();
        let xi = s.optimal_control(0.2, 0.0, &DVector::from_element(1, 17.0)).unwrap();
        assert_eq!(xi[0], 0.0);
    }

    #[test]
    fn four_asset_strategy_ranking() {
        let ranking = |orientation| {
            let s = four_asset_strategy(orientation);
            // Wealth below the benchmark: buy risk to catch up.
            let xi = s.optimal_control(10.0, 15.0, &DVector::from_vec(vec![80.0, 100.0])).unwrap();
            assert!(xi.iter().all(|v| v.is_finite() && *v > -1e3));
            let mut order: alloc::vec::Vec<usize> = (0..4).collect();
            order.sort_by(|&i, &j| xi[j].abs().total_cmp(&xi[i].abs()));
            order
        };
        // Lower factor: direction Sigma^-1 mu, domestic bond first, foreign bond second.
        assert_eq!(&ranking(FactorOrientation::Lower)[..2], &[0, 2]);
        // Upper factor: domestic bond and foreign stock.
        assert_eq!(&ranking(FactorOrientation::Upper)[..2], &[0, 3]);
    }

    #[test]
    fn constant_policies() {
        let mix = ConstantMix::new(DVector::from_vec(vec![0.5, 0.25]), 3).unwrap();
        let rule = mix.rule_at(1.0).unwrap();
        assert_eq!(rule.apply(8.0, &DVector::from_element(3, 9.0)), DVector::from_vec(vec![4.0, 2.0]));
        let cash = ConstantMix::all_cash(2, 1);
        assert_eq!(cash.rule_at(0.0).unwrap(), AffineRule::zero(2, 1));
        let hold = ConstantHoldings::new(DVector::from_vec(vec![1.0, -1.0]), 1);
        assert_eq!(hold.rule_at(3.0).unwrap().apply(100.0, &DVector::zeros(1)), DVector::from_vec(vec![1.0, -1.0]));
        let mut out = [0.0; 2];
        rule.apply_into(8.0, &[9.0, 9.0, 9.0], &mut out);
        assert_eq!(out, [4.0, 2.0]);
    }

    proptest! {
        #[test]
        fn control_is_affine(t in 0.0f64..1.0, x1 in -5.0f64..5.0, x2 in -5.0f64..5.0,
                             y1 in -5.0f64..5.0, y2 in -5.0f64..5.0) {
            let s = strategy_for(scalar_model([0.05, 0.1]));
            let v = |x: f64, y: f64| s.optimal_control(t, x, &DVector::from_element(1, y)).unwrap();
            let lhs = v(x1 + x2, y1 + y2) - v(x2, y2);
            let rhs = v(x1, y1) - v(0.0, 0.0);
            prop_assert!((lhs - rhs).amax() < 1e-9);
        }

        #[test]
        fn control_minimizes_hamiltonian(t in 0.0f64..30.0, x in 0.0f64..40.0,
                                         c in 60.0f64..90.0, b in 90.0f64..120.0,
                                         delta in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let s = four_asset_strategy(FactorOrientation::Lower);
            let y = DVector::from_vec(vec![c, b]);
            let xi = s.optimal_control(t, x, &y).unwrap();
            let h0 = s.hamiltonian(t, x, &y, &xi).unwrap();
            let h1 = s.hamiltonian(t, x, &y, &(&xi + DVector::from_vec(delta))).unwrap();
            prop_assert!(h1 >= h0 - 1e-9 * h0.abs().max(1.0));
        }
    }
}
