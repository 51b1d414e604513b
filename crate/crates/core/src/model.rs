//! Market, liability and objective definitions.
//!
//! Units are years for time and trillion yen for money throughout.

use alloc::format;
use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Error, Result};
use crate::time_fn::TimeFunction;

/// Absolute tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest admissible Cholesky pivot.
pub const PIVOT_TOL: f64 = 1e-14;

/// Lower-triangular `L` with `L L* = sigma`.
///
/// Inputs within [`SYMMETRY_TOL`] of symmetric are symmetrized before
/// factoring. A pivot at or below [`PIVOT_TOL`] is reported as
/// [`Error::NotPositiveDefinite`].
pub fn cholesky_lower(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sigma.nrows();
    check_dim("covariance columns", n, sigma.ncols())?;
    let asymmetry = (sigma - sigma.transpose()).amax();
    if !(asymmetry <= SYMMETRY_TOL) {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let s = (sigma + sigma.transpose()) * 0.5;

    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = s[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > PIVOT_TOL) {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        let diag = libm::sqrt(pivot);
        l[(j, j)] = diag;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / diag;
        }
    }
    Ok(l)
}

/// Cholesky factor of a symmetric positive definite matrix, used for solves.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
}

impl SpdFactor {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        cholesky_lower(matrix).map(|lower| SpdFactor { lower })
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Solves `A x = rhs` for a vector or matrix right-hand side.
    pub fn solve<C: nalgebra::Dim, S>(
        &self,
        rhs: &nalgebra::Matrix<f64, nalgebra::Dyn, C, S>,
    ) -> nalgebra::OMatrix<f64, nalgebra::Dyn, C>
    where
        S: nalgebra::storage::Storage<f64, nalgebra::Dyn, C>,
        nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<nalgebra::Dyn, C>,
    {
        let mut x = rhs.clone_owned();
        // Pivots are bounded away from zero, so both triangular solves succeed.
        self.lower.solve_lower_triangular_mut(&mut x);
        self.lower.tr_solve_lower_triangular_mut(&mut x);
        x
    }
}

/// Triangular Cholesky factor used as the volatility loading.
///
/// `Lower` gives `sigma_S sigma_S* = covariance`. `Upper` loads `L*`, so the
/// model covariance is `L* L` instead; it exists to reproduce results computed
/// with the upper factor `R` of `R* R = covariance` taken as `sigma_S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FactorOrientation {
    #[default]
    Lower,
    Upper,
}

/// Risk-free rate, drifts and volatility loadings of the traded assets.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    n: usize,
    d: usize,
    pub r: TimeFunction<f64>,
    pub b: TimeFunction<DVector<f64>>,
    pub sigma_s: TimeFunction<DMatrix<f64>>,
    pub s0_riskfree: f64,
    pub s0: DVector<f64>,
}

impl MarketParams {
    /// Validates dimensions across every knot. Initial prices default to 1.
    pub fn new(
        r: TimeFunction<f64>,
        b: TimeFunction<DVector<f64>>,
        sigma_s: TimeFunction<DMatrix<f64>>,
    ) -> Result<Self> {
        let first = &sigma_s.values()[0];
        let (n, d) = (first.nrows(), first.ncols());
        if n == 0 {
            return Err(invalid("sigma_S", "at least one risky asset is required"));
        }
        if d < n {
            return Err(invalid(
                "sigma_S",
                format!("Brownian dimension {d} is smaller than asset count {n}"),
            ));
        }
        for s in sigma_s.values() {
            check_dim("sigma_S rows", n, s.nrows())?;
            check_dim("sigma_S columns", d, s.ncols())?;
        }
        for v in b.values() {
            check_dim("b", n, v.len())?;
        }
        let finite = r.values().iter().all(|x| x.is_finite())
            && b.values().iter().all(|v| v.iter().all(|x| x.is_finite()))
            && sigma_s.values().iter().all(|m| m.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(invalid("market", "coefficients must be finite"));
        }
        Ok(MarketParams {
            n,
            d,
            r,
            b,
            sigma_s,
            s0_riskfree: 1.0,
            s0: DVector::from_element(n, 1.0),
        })
    }

    /// Constant market whose volatility loading is the Cholesky factor of
    /// `covariance`, padded with zero columns up to Brownian dimension `d`.
    pub fn from_covariance(r: f64, b: DVector<f64>, covariance: &DMatrix<f64>, d: usize) -> Result<Self> {
        Self::from_covariance_oriented(r, b, covariance, d, FactorOrientation::Lower)
    }

    /// As [`MarketParams::from_covariance`] with a choice of triangular factor.
    pub fn from_covariance_oriented(
        r: f64,
        b: DVector<f64>,
        covariance: &DMatrix<f64>,
        d: usize,
        orientation: FactorOrientation,
    ) -> Result<Self> {
        let n = covariance.nrows();
        check_dim("b", n, b.len())?;
        if d < n {
            return Err(invalid(
                "d",
                format!("Brownian dimension {d} is smaller than asset count {n}"),
            ));
        }
        let l = match orientation {
            FactorOrientation::Lower => cholesky_lower(covariance)?,
            FactorOrientation::Upper => cholesky_lower(covariance)?.transpose(),
        };
        let mut sigma = DMatrix::zeros(n, d);
        sigma.view_mut((0, 0), (n, n)).copy_from(&l);
        Self::new(r.into(), b.into(), sigma.into())
    }

    pub fn with_prices(mut self, s0_riskfree: f64, s0: DVector<f64>) -> Result<Self> {
        check_dim("s0", self.n, s0.len())?;
        if !(s0_riskfree > 0.0) {
            return Err(invalid("s0_riskfree", "must be positive"));
        }
        self.s0_riskfree = s0_riskfree;
        self.s0 = s0;
        Ok(self)
    }

    /// Number of risky assets.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Brownian dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// `b(t) - r(t) 1`.
    pub fn excess_drift(&self, t: f64) -> DVector<f64> {
        let r = self.r.eval(t);
        self.b.eval(t).add_scalar(-r)
    }

    /// `sigma_S(t) sigma_S(t)*`.
    pub fn gram(&self, t: f64) -> DMatrix<f64> {
        let s = self.sigma_s.eval(t);
        &s * s.transpose()
    }

    /// Factor of the Gram matrix, or [`Error::SingularDiffusion`].
    pub fn gram_factor(&self, t: f64) -> Result<SpdFactor> {
        SpdFactor::new(&self.gram(t)).map_err(|_| Error::SingularDiffusion { t })
    }

    /// Market price of risk squared: `(b - r1)* (sigma_S sigma_S*)^-1 (b - r1)`.
    pub fn risk_quadratic(&self, t: f64) -> Result<f64> {
        let mu = self.excess_drift(t);
        let z = self.gram_factor(t)?.solve(&mu);
        Ok(mu.dot(&z).max(0.0))
    }
}

/// Free-function form of [`MarketParams::excess_drift`].
pub fn excess_drift(market: &MarketParams, t: f64) -> DVector<f64> {
    market.excess_drift(t)
}

/// Free-function form of [`MarketParams::risk_quadratic`].
pub fn risk_quadratic(market: &MarketParams, t: f64) -> Result<f64> {
    market.risk_quadratic(t)
}

/// Affine dynamics `dY = (alpha Y + h) dt + sigma_Y dW` of the benchmark components.
#[derive(Debug, Clone, PartialEq)]
pub struct LiabilityParams {
    m: usize,
    d: usize,
    pub alpha: TimeFunction<DMatrix<f64>>,
    pub h: TimeFunction<DVector<f64>>,
    pub sigma_y: TimeFunction<DMatrix<f64>>,
    pub y0: DVector<f64>,
}

impl LiabilityParams {
    pub fn new(
        alpha: TimeFunction<DMatrix<f64>>,
        h: TimeFunction<DVector<f64>>,
        sigma_y: TimeFunction<DMatrix<f64>>,
        y0: DVector<f64>,
    ) -> Result<Self> {
        let m = y0.len();
        let d = sigma_y.values()[0].ncols();
        for a in alpha.values() {
            check_dim("alpha rows", m, a.nrows())?;
            check_dim("alpha columns", m, a.ncols())?;
        }
        for v in h.values() {
            check_dim("h", m, v.len())?;
        }
        for s in sigma_y.values() {
            check_dim("sigma_Y rows", m, s.nrows())?;
            check_dim("sigma_Y columns", d, s.ncols())?;
        }
        let finite = y0.iter().all(|x| x.is_finite())
            && alpha.values().iter().all(|m| m.iter().all(|x| x.is_finite()))
            && h.values().iter().all(|v| v.iter().all(|x| x.is_finite()))
            && sigma_y.values().iter().all(|m| m.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(invalid("liability", "coefficients must be finite"));
        }
        Ok(LiabilityParams {
            m,
            d,
            alpha,
            h,
            sigma_y,
            y0,
        })
    }

    /// Constant-coefficient liability.
    pub fn constant(alpha: DMatrix<f64>, h: DVector<f64>, sigma_y: DMatrix<f64>, y0: DVector<f64>) -> Result<Self> {
        Self::new(alpha.into(), h.into(), sigma_y.into(), y0)
    }

    /// Number of benchmark components.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Brownian dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Checks that the liability is driven by the same Brownian motion as `market`.
    pub fn check_compatible(&self, market: &MarketParams) -> Result<()> {
        check_dim("sigma_Y columns (Brownian dimension)", market.d(), self.d)
    }

    /// `sigma_S(t) sigma_Y(t)*`, the n x m instantaneous covariance of asset
    /// returns with benchmark components.
    pub fn cross_covariance(&self, market: &MarketParams, t: f64) -> DMatrix<f64> {
        market.sigma_s.eval(t) * self.sigma_y.eval(t).transpose()
    }
}

/// Tracking criterion: running weight, terminal weight, projections and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    gamma1: f64,
    gamma2: f64,
    a: TimeFunction<DVector<f64>>,
    terminal: DVector<f64>,
    horizon: f64,
}

impl Objective {
    /// Rejects negative weights, `gamma1 = gamma2 = 0` and non-positive horizons.
    pub fn new(
        gamma1: f64,
        gamma2: f64,
        a: TimeFunction<DVector<f64>>,
        terminal: DVector<f64>,
        horizon: f64,
    ) -> Result<Self> {
        if !(gamma1 >= 0.0) || !gamma1.is_finite() {
            return Err(invalid("gamma1", "must be finite and non-negative"));
        }
        if !(gamma2 >= 0.0) || !gamma2.is_finite() {
            return Err(invalid("gamma2", "must be finite and non-negative"));
        }
        if gamma1 + gamma2 <= 0.0 {
            return Err(invalid("gamma1 + gamma2", "at least one weight must be positive"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid("T", "horizon must be positive"));
        }
        for v in a.values() {
            check_dim("a", terminal.len(), v.len())?;
        }
        Ok(Objective {
            gamma1,
            gamma2,
            a,
            terminal,
            horizon,
        })
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn a(&self) -> &TimeFunction<DVector<f64>> {
        &self.a
    }

    /// The terminal projection `A`.
    pub fn terminal(&self) -> &DVector<f64> {
        &self.terminal
    }

    /// Objective horizon `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Benchmark components the projections act on.
    pub fn m(&self) -> usize {
        self.terminal.len()
    }

    pub fn check_compatible(&self, liability: &LiabilityParams) -> Result<()> {
        check_dim("objective projection a", liability.m(), self.m())
    }

    /// Tracked benchmark level: `a(t)* y` before the horizon, `A* y` at it.
    pub fn benchmark_value(&self, t: f64, y: &DVector<f64>) -> f64 {
        if t >= self.horizon {
            self.terminal.dot(y)
        } else {
            self.a.eval(t).dot(y)
        }
    }
}

/// Parameters shared by both numerical experiments: four GPIF asset classes
/// (domestic bond, domestic stock, foreign bond, foreign stock).
pub mod presets {
    use super::*;
    use alloc::vec;

    pub const DRIFTS: [f64; 4] = [0.03, 0.048, 0.035, 0.05];

    #[rustfmt::skip]
    pub const COVARIANCE: [[f64; 4]; 4] = [
        [0.00297025,     0.0018189375, -0.000439488,  -0.0005409125],
        [0.0018189375,   0.04950625,   -0.00777504,    0.0119248875],
        [-0.000439488,  -0.00777504,    0.01806336,    0.01467312],
        [-0.0005409125,  0.0119248875,  0.01467312,    0.03940225],
    ];

    pub fn covariance() -> DMatrix<f64> {
        DMatrix::from_fn(4, 4, |i, j| COVARIANCE[i][j])
    }

    /// Four assets, zero risk-free rate, Brownian dimension `4 + m`.
    pub fn gpif_market(m: usize) -> MarketParams {
        gpif_market_oriented(m, FactorOrientation::Lower)
    }

    pub fn gpif_market_oriented(m: usize, orientation: FactorOrientation) -> MarketParams {
        MarketParams::from_covariance_oriented(0.0, DVector::from_row_slice(&DRIFTS), &covariance(), 4 + m, orientation)
            .expect("preset covariance is positive definite")
    }

    /// Track expense minus income: `gamma1 = gamma2 = 1`, `a = A = (-1, 1)`.
    pub fn shortfall_objective(horizon: f64) -> Result<Objective> {
        let a = DVector::from_vec(vec![-1.0, 1.0]);
        Objective::new(1.0, 1.0, a.clone().into(), a, horizon)
    }
}
