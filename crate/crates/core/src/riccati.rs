//! Backward ODE system behind the optimal tracking strategy.
//!
//! The value function is the quadratic form
//!
//! ```text
//! V(t, x, y) = F00 x^2 + 2 x F0~* y + y* F~ y + G0 x + G~* y + g
//! ```
//!
//! and its coefficients solve a triangular system of linear (or, for `F~`,
//! `G~`, `g`, source-driven linear) ODEs run backward from the solver horizon:
//! `F00 -> F0~ -> {G0, F~} -> G~ -> g`. Only `F00`, `F0~` and `G0` enter the
//! control; the remaining three complete the value function.
//!
//! Writing `mu = b - r 1`, `S = sigma_S sigma_S*`, `K = sigma_S sigma_Y*`,
//! `theta = mu* S^-1 mu`, `rho = K* S^-1 mu` and `Q = K* S^-1 K`:
//!
//! ```text
//! F00' = -gamma1 - 2 r F00 + theta F00
//! F0~' =  gamma1 a - r F0~ - alpha* F0~ + theta F0~
//! G0'  = -r G0 - 2 h* F0~ + theta G0 + c rho* F0~
//! ```
//!
//! with `c = 1` ([`Formulation::Doubled`]) or `c = 2` ([`Formulation::Consistent`]).
//! The two formulations also differ in the terminal value of `F0~` and in the
//! value-function terms; see [`Formulation`].

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::model::{LiabilityParams, MarketParams, Objective};
use crate::ode::rk4;

/// Default RK4 step, in years.
pub const DEFAULT_STEP: f64 = 1.0 / 400.0;
/// Smallest admissible `F00` before the horizon.
pub const F00_FLOOR: f64 = 1e-12;

/// Which variant of the ODE system to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Formulation {
    /// Terminal value `F0~(T) = -2 gamma2 A`, cross-diffusion coefficient 1 in
    /// the `G0` and `G~` equations, `F0~ F0~* / F00` in the `F~` equation.
    /// Reproduces the end-of-horizon gain collapse of the unpadded strategy.
    #[default]
    Doubled,
    /// Coefficients obtained by matching every monomial of the HJB equation
    /// under the quadratic ansatz: `F0~(T) = -gamma2 A`, cross-diffusion
    /// coefficient 2, `theta F0~ F0~* / F00` in the `F~` equation, no `r` term
    /// for `G~`, and the extra `-F0~* Q F0~ / F00` source for `g`. With this
    /// variant `V(0, x0, y0)` equals the expected cost of the feedback control.
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub step: f64,
    pub formulation: Formulation,
    /// Keep `F~`, `G~`, `g` in the solution (needed for the value function).
    pub value_terms: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            step: DEFAULT_STEP,
            formulation: Formulation::Doubled,
            value_terms: true,
        }
    }
}

/// `F00`, `F0~`, `G0` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiPoint {
    pub f00: f64,
    pub f0: DVector<f64>,
    pub g0: f64,
}

/// `F~`, `G~`, `g` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuePoint {
    pub f_tilde: DMatrix<f64>,
    pub g_tilde: DVector<f64>,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct ValueTerms {
    f_tilde: Vec<DMatrix<f64>>,
    g_tilde: Vec<DVector<f64>>,
    g: Vec<f64>,
}

/// Solution sampled on a uniform grid over `[0, solver_horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    grid: Vec<f64>,
    f00: Vec<f64>,
    f0: Vec<DVector<f64>>,
    g0: Vec<f64>,
    value: Option<ValueTerms>,
    horizon: f64,
    solver_horizon: f64,
    formulation: Formulation,
}

/// Range statistics of one solution component over a time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
    pub max_abs: f64,
}

impl Spread {
    fn of(values: impl Iterator<Item = f64>) -> Spread {
        values.fold(
            Spread {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                max_abs: 0.0,
            },
            |s, v| Spread {
                min: s.min.min(v),
                max: s.max.max(v),
                max_abs: s.max_abs.max(v.abs()),
            },
        )
    }

    /// `max - min`.
    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    /// Range relative to the largest magnitude; zero for an identically zero series.
    pub fn relative(&self) -> f64 {
        if self.max_abs <= 1e-12 {
            0.0
        } else {
            self.range() / self.max_abs
        }
    }
}

/// Variation of `F00`, each `F0~` component and `G0` over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Variation {
    pub f00: Spread,
    pub f0: Vec<Spread>,
    pub g0: Spread,
}

impl Variation {
    /// Largest relative variation over all tracked series.
    pub fn max_relative(&self) -> f64 {
        self.series().map(|s| s.relative()).fold(0.0, f64::max)
    }

    /// `F00`, `F0~1..m`, `G0` in that order.
    pub fn series(&self) -> impl Iterator<Item = &Spread> {
        core::iter::once(&self.f00).chain(self.f0.iter()).chain(core::iter::once(&self.g0))
    }
}

impl RiccatiSolution {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn f00(&self) -> &[f64] {
        &self.f00
    }

    pub fn f0(&self) -> &[DVector<f64>] {
        &self.f0
    }

    pub fn g0(&self) -> &[f64] {
        &self.g0
    }

    /// Stored `F~` per node, if value terms were kept.
    pub fn f_tilde(&self) -> Option<&[DMatrix<f64>]> {
        self.value.as_ref().map(|v| v.f_tilde.as_slice())
    }

    pub fn g_tilde(&self) -> Option<&[DVector<f64>]> {
        self.value.as_ref().map(|v| v.g_tilde.as_slice())
    }

    pub fn g(&self) -> Option<&[f64]> {
        self.value.as_ref().map(|v| v.g.as_slice())
    }

    pub fn has_value_terms(&self) -> bool {
        self.value.is_some()
    }

    /// Objective horizon `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Horizon the ODEs were integrated from (`T` or the padded horizon).
    pub fn solver_horizon(&self) -> f64 {
        self.solver_horizon
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn m(&self) -> usize {
        self.f0[0].len()
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(t >= 0.0 && t <= self.solver_horizon) {
            return Err(Error::OutOfRange {
                t,
                horizon: self.solver_horizon,
            });
        }
        let i = self.grid.partition_point(|&g| g <= t);
        if self.grid[i - 1] == t || i == self.grid.len() {
            Ok((i - 1, 0.0))
        } else {
            let w = (t - self.grid[i - 1]) / (self.grid[i] - self.grid[i - 1]);
            Ok((i - 1, w))
        }
    }

    /// Linear interpolation of `F00`, `F0~`, `G0`; exact at grid nodes.
    pub fn evaluate(&self, t: f64) -> Result<RiccatiPoint> {
        let (i, w) = self.locate(t)?;
        if w == 0.0 {
            return Ok(RiccatiPoint {
                f00: self.f00[i],
                f0: self.f0[i].clone(),
                g0: self.g0[i],
            });
        }
        let lerp = |a: f64, b: f64| a + w * (b - a);
        Ok(RiccatiPoint {
            f00: lerp(self.f00[i], self.f00[i + 1]),
            f0: self.f0[i].zip_map(&self.f0[i + 1], lerp),
            g0: lerp(self.g0[i], self.g0[i + 1]),
        })
    }

    /// Linear interpolation of `F~`, `G~`, `g`.
    pub fn evaluate_value_terms(&self, t: f64) -> Result<ValuePoint> {
        let value = self.value.as_ref().ok_or(Error::MissingValueTerms)?;
        let (i, w) = self.locate(t)?;
        if w == 0.0 {
            return Ok(ValuePoint {
                f_tilde: value.f_tilde[i].clone(),
                g_tilde: value.g_tilde[i].clone(),
                g: value.g[i],
            });
        }
        let lerp = |a: f64, b: f64| a + w * (b - a);
        Ok(ValuePoint {
            f_tilde: value.f_tilde[i].zip_map(&value.f_tilde[i + 1], lerp),
            g_tilde: value.g_tilde[i].zip_map(&value.g_tilde[i + 1], lerp),
            g: lerp(value.g[i], value.g[i + 1]),
        })
    }

    /// Variation of the strategy coefficients over the grid nodes in `[from, to]`.
    pub fn variation(&self, from: f64, to: f64) -> Variation {
        let idx: Vec<usize> = (0..self.grid.len())
            .filter(|&k| self.grid[k] >= from - 1e-12 && self.grid[k] <= to + 1e-12)
            .collect();
        Variation {
            f00: Spread::of(idx.iter().map(|&k| self.f00[k])),
            f0: (0..self.m())
                .map(|j| Spread::of(idx.iter().map(|&k| self.f0[k][j])))
                .collect(),
            g0: Spread::of(idx.iter().map(|&k| self.g0[k])),
        }
    }
}

/// Time-`t` coefficients of the ODE system.
#[derive(Debug, Clone)]
struct Coefficients {
    r: f64,
    theta: f64,
    rho: DVector<f64>,
    q: DMatrix<f64>,
    alpha: DMatrix<f64>,
    h: DVector<f64>,
    yy: DMatrix<f64>,
    a: DVector<f64>,
}

impl Coefficients {
    fn at(market: &MarketParams, liability: &LiabilityParams, objective: &Objective, t: f64) -> Result<Self> {
        let factor = market.gram_factor(t)?;
        let mu = market.excess_drift(t);
        let k = liability.cross_covariance(market, t);
        let z = factor.solve(&mu);
        let sk = factor.solve(&k);
        let sigma_y = liability.sigma_y.eval(t);
        Ok(Coefficients {
            r: market.r.eval(t),
            theta: mu.dot(&z).max(0.0),
            rho: k.transpose() * &z,
            q: k.transpose() * sk,
            alpha: liability.alpha.eval(t),
            h: liability.h.eval(t),
            yy: &sigma_y * sigma_y.transpose(),
            a: objective.a().eval(t),
        })
    }
}

/// Offsets of each block inside the flat ODE state.
#[derive(Debug, Clone, Copy)]
struct Layout {
    m: usize,
}

impl Layout {
    fn len(&self) -> usize {
        3 + 2 * self.m + self.m * self.m
    }
    fn f0(&self) -> usize {
        1
    }
    fn g0(&self) -> usize {
        1 + self.m
    }
    fn f_tilde(&self) -> usize {
        2 + self.m
    }
    fn g_tilde(&self) -> usize {
        2 + self.m + self.m * self.m
    }
    fn g(&self) -> usize {
        2 + 2 * self.m + self.m * self.m
    }
}

/// `d/dt` of the flat state.
fn time_derivative(c: &Coefficients, gamma1: f64, formulation: Formulation, lay: Layout, y: &DVector<f64>) -> DVector<f64> {
    let m = lay.m;
    let f00 = y[0];
    let f0 = y.rows(lay.f0(), m).into_owned();
    let g0 = y[lay.g0()];
    let ft = DMatrix::from_column_slice(m, m, y.rows(lay.f_tilde(), m * m).as_slice());
    let gt = y.rows(lay.g_tilde(), m).into_owned();

    let rho_f0 = c.rho.dot(&f0);
    let (cross, quad, gt_rate) = match formulation {
        Formulation::Doubled => (1.0, 1.0, c.r),
        Formulation::Consistent => (2.0, c.theta, 0.0),
    };
    // Terms divided by F00 only arise when gamma2 = 0 at the terminal node,
    // where F0~ and G0 vanish as well.
    let inv_f00 = if f00 > 0.0 { 1.0 / f00 } else { 0.0 };

    let alpha_t = c.alpha.transpose();
    let d_f00 = -gamma1 - 2.0 * c.r * f00 + c.theta * f00;
    let d_f0 = &c.a * gamma1 - &f0 * c.r - &alpha_t * &f0 + &f0 * c.theta;
    let d_g0 = -c.r * g0 - 2.0 * c.h.dot(&f0) + c.theta * g0 + cross * rho_f0;
    let d_ft = -(&c.a * c.a.transpose()) * gamma1 - (&alpha_t * &ft + &ft * &c.alpha)
        + (&f0 * f0.transpose()) * (quad * inv_f00);
    let d_gt = -&gt * gt_rate - &alpha_t * &gt - (&ft * &c.h) * 2.0
        + &f0 * (c.theta * g0 * inv_f00 + cross * rho_f0 * inv_f00);
    let mut d_g = -c.h.dot(&gt) - (&c.yy * &ft).trace() + c.theta * g0 * g0 * 0.25 * inv_f00;
    d_g += match formulation {
        Formulation::Doubled => 0.5 * g0 * inv_f00 * rho_f0,
        Formulation::Consistent => g0 * inv_f00 * rho_f0 + f0.dot(&(&c.q * &f0)) * inv_f00,
    };

    let mut out = DVector::zeros(lay.len());
    out[0] = d_f00;
    out.rows_mut(lay.f0(), m).copy_from(&d_f0);
    out[lay.g0()] = d_g0;
    out.rows_mut(lay.f_tilde(), m * m).copy_from_slice(d_ft.as_slice());
    out.rows_mut(lay.g_tilde(), m).copy_from(&d_gt);
    out[lay.g()] = d_g;
    out
}

fn step_count(span: f64, step: f64) -> usize {
    let ratio = span / step;
    let nearest = libm::round(ratio);
    if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
        (nearest as usize).max(1)
    } else {
        libm::ceil(ratio) as usize
    }
}

fn all_constant(market: &MarketParams, liability: &LiabilityParams, objective: &Objective) -> bool {
    market.r.is_constant()
        && market.b.is_constant()
        && market.sigma_s.is_constant()
        && liability.alpha.is_constant()
        && liability.h.is_constant()
        && liability.sigma_y.is_constant()
        && objective.a().is_constant()
}

/// Integrates the ODE system backward from `solver_horizon` to 0 with fixed-step RK4.
///
/// The step is shrunk, if needed, so that a whole number of steps spans the
/// horizon; terminal conditions hold exactly at the last node.
pub fn solve_riccati(
    market: &MarketParams,
    liability: &LiabilityParams,
    objective: &Objective,
    solver_horizon: f64,
    options: SolverOptions,
) -> Result<RiccatiSolution> {
    liability.check_compatible(market)?;
    objective.check_compatible(liability)?;
    if !(options.step > 0.0) || !options.step.is_finite() {
        return Err(invalid("step", "must be positive"));
    }
    if !(solver_horizon >= objective.horizon()) || !solver_horizon.is_finite() {
        return Err(invalid("solver horizon", "must be at least the objective horizon"));
    }

    let m = liability.m();
    let lay = Layout { m };
    let gamma1 = objective.gamma1();
    let gamma2 = objective.gamma2();
    let big_a = objective.terminal();
    let steps = step_count(solver_horizon, options.step);

    let mut terminal = DVector::zeros(lay.len());
    terminal[0] = gamma2;
    let f0_scale = match options.formulation {
        Formulation::Doubled => -2.0 * gamma2,
        Formulation::Consistent => -gamma2,
    };
    terminal.rows_mut(lay.f0(), m).copy_from(&(big_a * f0_scale));
    let ft_t = big_a * big_a.transpose() * gamma2;
    terminal.rows_mut(lay.f_tilde(), m * m).copy_from_slice(ft_t.as_slice());

    let cached = if all_constant(market, liability, objective) {
        Some(Coefficients::at(market, liability, objective, 0.0)?)
    } else {
        None
    };

    // March in s = solver_horizon - t, so d/ds = -d/dt.
    let states = rk4(
        terminal,
        solver_horizon,
        steps,
        |s, y| {
            let t = solver_horizon - s;
            let c = match &cached {
                Some(c) => c.clone(),
                None => Coefficients::at(market, liability, objective, t)?,
            };
            Ok(-time_derivative(&c, gamma1, options.formulation, lay, y))
        },
        |y| {
            let mut ft = DMatrix::from_column_slice(m, m, y.rows(lay.f_tilde(), m * m).as_slice());
            ft = (&ft + ft.transpose()) * 0.5;
            y.rows_mut(lay.f_tilde(), m * m).copy_from_slice(ft.as_slice());
        },
    )?;

    let h = solver_horizon / steps as f64;
    let grid: Vec<f64> = (0..=steps)
        .map(|k| if k == steps { solver_horizon } else { k as f64 * h })
        .collect();
    // states[k] sits at s = k h, i.e. t = solver_horizon - k h.
    let ordered: Vec<&DVector<f64>> = states.iter().rev().collect();

    for (k, y) in ordered.iter().enumerate().take(steps) {
        if !(y[0] >= F00_FLOOR) {
            return Err(Error::NonPositiveF00 {
                t: grid[k],
                value: y[0],
            });
        }
    }

    let value = options.value_terms.then(|| ValueTerms {
        f_tilde: ordered
            .iter()
            .map(|y| DMatrix::from_column_slice(m, m, y.rows(lay.f_tilde(), m * m).as_slice()))
            .collect(),
        g_tilde: ordered.iter().map(|y| y.rows(lay.g_tilde(), m).into_owned()).collect(),
        g: ordered.iter().map(|y| y[lay.g()]).collect(),
    });

    Ok(RiccatiSolution {
        f00: ordered.iter().map(|y| y[0]).collect(),
        f0: ordered.iter().map(|y| y.rows(lay.f0(), m).into_owned()).collect(),
        g0: ordered.iter().map(|y| y[lay.g0()]).collect(),
        grid,
        value,
        horizon: objective.horizon(),
        solver_horizon,
        formulation: options.formulation,
    })
}

/// Solves over the padded horizon `padding_horizon >= T`, so that on `[0, T]`
/// the coefficients sit near their stationary values instead of relaxing to
/// the terminal data.
pub fn stationary_solve(
    market: &MarketParams,
    liability: &LiabilityParams,
    objective: &Objective,
    padding_horizon: f64,
    options: SolverOptions,
) -> Result<RiccatiSolution> {
    if !(padding_horizon >= objective.horizon()) {
        return Err(invalid("padding horizon", "must be at least the objective horizon"));
    }
    solve_riccati(market, liability, objective, padding_horizon, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::TimeFunction;
    use alloc::vec;

    fn exp(x: f64) -> f64 {
        libm::exp(x)
    }

    /// n = 1, theta = 0.04, r = 0; m = 2 with diagonal alpha, sigma_Y = 0.
    fn scalar_setup(gamma1: f64, gamma2: f64, horizon: f64) -> (MarketParams, LiabilityParams, Objective) {
        let market = MarketParams::new(
            0.0.into(),
            DVector::from_element(1, 0.05).into(),
            DMatrix::from_row_slice(1, 3, &[0.25, 0.0, 0.0]).into(),
        )
        .unwrap();
        let liability = LiabilityParams::constant(
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, -0.02])),
            DVector::zeros(2),
            DMatrix::zeros(2, 3),
            DVector::from_vec(vec![80.0, 100.0]),
        )
        .unwrap();
        let a = DVector::from_vec(vec![-1.0, 1.0]);
        let objective = Objective::new(gamma1, gamma2, a.clone().into(), a, horizon).unwrap();
        (market, liability, objective)
    }

    /// Closed form of `F00` for constant theta, r = 0.
    fn f00_exact(gamma1: f64, gamma2: f64, theta: f64, tau: f64) -> f64 {
        (gamma2 - gamma1 / theta) * exp(-theta * tau) + gamma1 / theta
    }

    /// Closed form of one `F0~` component: `F' = c F + gamma1 a` with `c = theta - alpha_ii`.
    fn f0_exact(gamma1: f64, terminal: f64, a: f64, c: f64, tau: f64) -> f64 {
        let fixed = -gamma1 * a / c;
        fixed + (terminal - fixed) * exp(-c * tau)
    }

    #[test]
    fn f00_matches_closed_form() {
        let (mk, li, ob) = scalar_setup(1.0, 1.0, 1.0);
        let sol = solve_riccati(&mk, &li, &ob, 1.0, SolverOptions::default()).unwrap();
        let exact0 = 25.0 - 24.0 * exp(-0.04);
        assert!((sol.f00()[0] - exact0).abs() <= 1e-8 * exact0);
        assert!((exact0 - 1.941053).abs() < 1e-6);
        let half = sol.evaluate(0.5).unwrap().f00;
        let exact_half = f00_exact(1.0, 1.0, 0.04, 0.5);
        assert!((half - exact_half).abs() <= 1e-8 * exact_half);
    }

    #[test]
    fn f0_matches_closed_form_for_both_terminal_conventions() {
        let (mk, li, ob) = scalar_setup(1.0, 1.0, 1.0);
        for (formulation, scale) in [(Formulation::Doubled, -2.0), (Formulation::Consistent, -1.0)] {
            let opts = SolverOptions {
                formulation,
                ..Default::default()
            };
            let sol = solve_riccati(&mk, &li, &ob, 1.0, opts).unwrap();
            for (j, (a, alpha)) in [(-1.0, 0.01), (1.0, -0.02)].into_iter().enumerate() {
                let exact = f0_exact(1.0, scale * a, a, 0.04 - alpha, 1.0);
                let got = sol.f0()[0][j];
                assert!((got - exact).abs() <= 1e-8 * exact.abs(), "{got} vs {exact}");
            }
        }
    }

    #[test]
    fn terminal_conditions_exact() {
        let mk = presets::gpif_market(2);
        let li = LiabilityParams::constant(
            DMatrix::identity(2, 2) * 0.01,
            DVector::from_vec(vec![0.5, 1.0]),
            DMatrix::from_fn(2, 6, |i, j| if j == 4 + i { 0.3 } else { 0.0 }),
            DVector::from_vec(vec![80.0, 100.0]),
        )
        .unwrap();
        let ob = presets::shortfall_objective(2.0).unwrap();
        let sol = solve_riccati(&mk, &li, &ob, 3.0, SolverOptions::default()).unwrap();
        let last = sol.grid().len() - 1;
        assert_eq!(sol.grid()[last], 3.0);
        assert_eq!(sol.f00()[last], 1.0);
        assert_eq!(sol.f0()[last], DVector::from_vec(vec![2.0, -2.0]));
        assert_eq!(sol.g0()[last], 0.0);
        let a = ob.terminal();
        assert_eq!(sol.f_tilde().unwrap()[last], a * a.transpose());
        assert_eq!(sol.g_tilde().unwrap()[last], DVector::zeros(2));
        assert_eq!(sol.g().unwrap()[last], 0.0);
        for f in sol.f_tilde().unwrap() {
            assert_eq!(f, &f.transpose());
        }
        assert!(sol.f00().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn zero_running_weight_and_zero_theta_is_constant() {
        let market = MarketParams::new(
            0.0.into(),
            DVector::zeros(1).into(),
            DMatrix::from_row_slice(1, 2, &[0.2, 0.0]).into(),
        )
        .unwrap();
        let liability = LiabilityParams::constant(
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 0.7),
            DMatrix::from_row_slice(1, 2, &[0.0, 0.1]),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let a = DVector::from_element(1, 1.5);
        let ob = Objective::new(0.0, 1.0, a.clone().into(), a, 2.0).unwrap();
        let sol = solve_riccati(&market, &liability, &ob, 2.0, SolverOptions::default()).unwrap();
        for k in 0..sol.grid().len() {
            assert!((sol.f00()[k] - 1.0).abs() < 1e-14);
            assert!((sol.f0()[k][0] + 3.0).abs() < 1e-14);
            // G0' = -2 h F0~ = 4.2, so G0 = -4.2 (T - t)
            let tau = 2.0 - sol.grid()[k];
            assert!((sol.g0()[k] + 4.2 * tau).abs() < 1e-10);
        }
    }

    #[test]
    fn homogeneous_data_gives_zero_linear_terms() {
        let (mk, li, _) = scalar_setup(1.0, 1.0, 1.0);
        let a = DVector::from_vec(vec![-1.0, 1.0]);
        let ob = Objective::new(0.0, 1.0, a.into(), DVector::zeros(2), 5.0).unwrap();
        let sol = solve_riccati(&mk, &li, &ob, 5.0, SolverOptions::default()).unwrap();
        assert!(sol.f0().iter().all(|v| v.amax() == 0.0));
        assert!(sol.g0().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fourth_order_convergence() {
        let (mk, li, ob) = scalar_setup(1.0, 1.0, 4.0);
        let exact = f00_exact(1.0, 1.0, 0.04, 4.0);
        let err = |step: f64| {
            let opts = SolverOptions {
                step,
                ..Default::default()
            };
            (solve_riccati(&mk, &li, &ob, 4.0, opts).unwrap().f00()[0] - exact).abs()
        };
        let ratio = err(1.0) / err(0.5);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
        let ratio = err(0.5) / err(0.25);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn stationary_level() {
        let (mk, li, ob) = scalar_setup(1.0, 1.0, 30.0);
        let sol = stationary_solve(&mk, &li, &ob, 600.0, SolverOptions { step: 0.05, ..Default::default() }).unwrap();
        assert!((sol.f00()[0] - 25.0).abs() < 1e-6);
        let same = stationary_solve(&mk, &li, &ob, 30.0, SolverOptions::default()).unwrap();
        let direct = solve_riccati(&mk, &li, &ob, 30.0, SolverOptions::default()).unwrap();
        assert_eq!(same, direct);
        assert!(stationary_solve(&mk, &li, &ob, 29.0, SolverOptions::default()).is_err());
    }

    #[test]
    fn evaluate_interpolates() {
        let (mk, li, ob) = scalar_setup(1.0, 1.0, 1.0);
        let sol = solve_riccati(&mk, &li, &ob, 1.0, SolverOptions { step: 0.5, ..Default::default() }).unwrap();
        let mid = sol.evaluate(0.25).unwrap();
        assert_eq!(mid.f00, 0.5 * (sol.f00()[0] + sol.f00()[1]));
        assert_eq!(sol.evaluate(0.5).unwrap().f00, sol.f00()[1]);
        assert!(matches!(sol.evaluate(-0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(sol.evaluate(1.1), Err(Error::OutOfRange { .. })));
        assert!(sol.evaluate(1.0).is_ok());
    }

    #[test]
    fn missing_value_terms() {
        let (mk, li, ob) = scalar_setup(1.0, 1.0, 1.0);
        let opts = SolverOptions {
            value_terms: false,
            ..Default::default()
        };
        let sol = solve_riccati(&mk, &li, &ob, 1.0, opts).unwrap();
        assert_eq!(sol.evaluate_value_terms(0.5), Err(Error::MissingValueTerms));
    }

    #[test]
    fn uneven_step_lands_on_horizon() {
        let (mk, li, ob) = scalar_setup(1.0, 1.0, 1.0);
        let sol = solve_riccati(&mk, &li, &ob, 1.0, SolverOptions { step: 0.3, ..Default::default() }).unwrap();
        assert_eq!(sol.grid().len(), 5);
        assert_eq!(*sol.grid().last().unwrap(), 1.0);
    }

    #[test]
    fn zero_terminal_weight_is_accepted() {
        let (mk, li, _) = scalar_setup(1.0, 0.0, 1.0);
        let a = DVector::from_vec(vec![-1.0, 1.0]);
        let ob = Objective::new(1.0, 0.0, a.clone().into(), a, 1.0).unwrap();
        let sol = solve_riccati(&mk, &li, &ob, 1.0, SolverOptions::default()).unwrap();
        assert!(sol.f00()[0] > 0.0);
        assert!(sol.f_tilde().unwrap().iter().all(|m| m.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn singular_diffusion_is_reported() {
        let market = MarketParams::new(
            0.0.into(),
            DVector::from_element(1, 0.05).into(),
            DMatrix::zeros(1, 2).into(),
        )
        .unwrap();
        let li = LiabilityParams::constant(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(1, 2),
            DVector::zeros(1),
        )
        .unwrap();
        let a = DVector::from_element(1, 1.0);
        let ob = Objective::new(1.0, 1.0, a.clone().into(), a, 1.0).unwrap();
        assert!(matches!(
            solve_riccati(&market, &li, &ob, 1.0, SolverOptions::default()),
            Err(Error::SingularDiffusion { .. })
        ));
    }

    /// Time-varying instance with correlated benchmark noise.
    fn varying_setup() -> (MarketParams, LiabilityParams, Objective) {
        let market = MarketParams::new(
            TimeFunction::table(vec![0.0, 2.0], vec![0.01, 0.02]).unwrap(),
            TimeFunction::table(
                vec![0.0, 2.0],
                vec![DVector::from_vec(vec![0.05, 0.07]), DVector::from_vec(vec![0.06, 0.05])],
            )
            .unwrap(),
            DMatrix::from_row_slice(2, 3, &[0.2, 0.0, 0.0, 0.05, 0.25, 0.0]).into(),
        )
        .unwrap();
        let liability = LiabilityParams::new(
            DMatrix::from_element(1, 1, 0.03).into(),
            TimeFunction::table(vec![0.0, 2.0], vec![DVector::from_element(1, 0.1), DVector::from_element(1, 0.4)])
                .unwrap(),
            DMatrix::from_row_slice(1, 3, &[0.04, 0.02, 0.1]).into(),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let a = TimeFunction::table(vec![0.0, 2.0], vec![DVector::from_element(1, 1.0), DVector::from_element(1, 0.8)])
            .unwrap();
        let objective = Objective::new(1.0, 2.0, a, DVector::from_element(1, 0.9), 2.0).unwrap();
        (market, liability, objective)
    }

    #[test]
    fn residuals_are_second_order() {
        let (mk, li, ob) = varying_setup();
        let lay = Layout { m: 1 };
        let max_residual = |step: f64| {
            let opts = SolverOptions {
                step,
                formulation: Formulation::Consistent,
                value_terms: true,
            };
            let sol = solve_riccati(&mk, &li, &ob, 2.0, opts).unwrap();
            let pack = |k: usize| {
                let mut y = DVector::zeros(lay.len());
                y[0] = sol.f00()[k];
                y[1] = sol.f0()[k][0];
                y[2] = sol.g0()[k];
                y[3] = sol.f_tilde().unwrap()[k][(0, 0)];
                y[4] = sol.g_tilde().unwrap()[k][0];
                y[5] = sol.g().unwrap()[k];
                y
            };
            let n = sol.grid().len();
            let mut worst: f64 = 0.0;
            for k in 1..n - 1 {
                let fd = (pack(k + 1) - pack(k - 1)) / (2.0 * step);
                let c = Coefficients::at(&mk, &li, &ob, sol.grid()[k]).unwrap();
                let rhs = time_derivative(&c, ob.gamma1(), Formulation::Consistent, lay, &pack(k));
                worst = worst.max((fd - rhs).amax());
            }
            worst
        };
        let coarse = max_residual(0.02);
        let fine = max_residual(0.01);
        assert!(coarse < 1e-2, "{coarse}");
        let ratio = coarse / fine;
        assert!(ratio > 3.0 && ratio < 5.0, "residual ratio {ratio}");
    }

    #[test]
    fn doubled_and_consistent_share_f00() {
        let (mk, li, ob) = varying_setup();
        let p = solve_riccati(&mk, &li, &ob, 2.0, SolverOptions::default()).unwrap();
        let c = solve_riccati(
            &mk,
            &li,
            &ob,
            2.0,
            SolverOptions {
                formulation: Formulation::Consistent,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(p.f00(), c.f00());
        assert_ne!(p.f0(), c.f0());
    }

    #[test]
    fn variation_statistics() {
        let s = Spread::of([1.0, 3.0, 2.0].into_iter());
        assert_eq!(s.range(), 2.0);
        assert!((s.relative() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(Spread::of([0.0, 0.0].into_iter()).relative(), 0.0);
    }
}
