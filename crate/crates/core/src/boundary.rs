//! Free boundary of the dual obstacle problem and the closed-form dual value φ.
//!
//! In the continuation region `y > y*`
//!
//! ```text
//! φ(y) = C y^n2 + κ y^n1 G1(y) − κ y^n2 G2(y),   κ = 2 / (θ² (n1 − n2))
//! G1(y) = ∫_∞^y  −Ū1(z) z^(−n1−1) dz
//! G2(y) = ∫_y*^y −Ū1(z) z^(−n2−1) dz
//! ```
//!
//! and below the boundary φ equals the obstacle `(1/ρ)Ū2(ρy) − (w/r)y`.
//! Every integral is a sum of closed-form power antiderivatives.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Model, Regime};
use crate::numerics::{expand, log_brent};

const ROOT_TOL: f64 = 1e-13;

impl Model {
    fn require_stopping(&self, what: &str) -> Result<()> {
        match self.regime {
            Regime::Stopping => Ok(()),
            Regime::Ruined => Err(Error::Regime(format!(
                "{what} needs alpha(1-p1) > 1-p2; these parameters are in the ruined regime"
            ))),
        }
    }

    /// `∫_a^b −Ū1(z) z^(−n−1) dz` with orientation (negative when `b < a`).
    pub fn neg_ubar1_integral(&self, a: f64, b: f64, n: f64) -> Result<f64> {
        let pieces = self.ubar1_pieces();
        if a <= b {
            Ok(-pieces.integrate(a, b, n)?)
        } else {
            Ok(pieces.integrate(b, a, n)?)
        }
    }

    /// `∫_∞^y −Ū1(z) z^(−n−1) dz`. Diverges unless `n` exceeds every exponent of Ū1.
    pub fn tail_integral(&self, y: f64, n: f64) -> Result<f64> {
        self.neg_ubar1_integral(f64::INFINITY, y, n)
    }

    /// Unique zero of Ū on `(0, ∞)`.
    pub fn find_y0(&self) -> Result<f64> {
        let start = if self.dc.y_tilde.is_finite() && self.dc.y_tilde > 0.0 { self.dc.y_tilde } else { 1e-6 };
        let lo = expand(start, 0.1, 300, |y| self.ubar_combined(y) < 0.0, "y0 lower bracket")?;
        let hi = expand(start, 10.0, 300, |y| self.ubar_combined(y) > 0.0, "y0 upper bracket")?;
        log_brent(|y| self.ubar_combined(y), lo, hi, ROOT_TOL, "y0")
    }

    /// `F(y) = ∫_∞^y Ū(z) z^(−n1−1) dz`.
    pub fn f_value(&self, y: f64) -> Result<f64> {
        self.require_stopping("F")?;
        Ok(-self.ubar_pieces().integrate(y, f64::INFINITY, self.dc.n1)?)
    }

    pub fn solve_free_boundary(&self) -> Result<DualSolution> {
        self.require_stopping("the free boundary")?;
        let y0 = self.find_y0()?;
        let f = |y: f64| self.f_value(y).unwrap_or(f64::NAN);
        if f(y0) >= 0.0 {
            return Err(Error::RootNotFound("F is non-negative at y0".into()));
        }
        let start = if self.dc.y_tilde.is_finite() { (1e-3 * self.dc.y_tilde).min(1e-3 * y0) } else { 1e-3 * y0 };
        let lo = expand(start, 0.1, 300, |y| f(y) > 0.0, "y* lower bracket")?;
        let y_star = log_brent(f, lo, y0, ROOT_TOL, "y*")?;
        let mut sol = DualSolution::with_boundary(*self, y_star)?;
        sol.y0 = Some(y0);
        Ok(sol)
    }

    /// Closed-form boundary when labor is disabled.
    pub fn closed_form_y_star_no_labor(&self) -> Result<f64> {
        if self.params.b_max > 0.0 {
            return Err(Error::Precondition("the no-labor closed form needs b_max = 0".into()));
        }
        self.require_stopping("the no-labor closed form")?;
        let dc = &self.dc;
        let p = &self.params;
        let (q1, q2) = (dc.p1p, dc.p2p);
        let base = -(q1 / q2) * (dc.theta * dc.theta / (2.0 * dc.rho))
            * (q1 - dc.n1)
            * (q2 - dc.n2)
            * p.alpha.powf(q1 - 1.0)
            * (dc.rho / p.k).powf(q2)
            * p.v2.powf(1.0 - q2)
            / p.v1.powf(1.0 - q1);
        Ok(base.powf(1.0 / (q1 - q2)))
    }

    /// `(1/ρ)Ū2(ρy) − (w/r)y`.
    pub fn obstacle(&self, y: f64) -> f64 {
        self.ubar2(self.dc.rho * y) / self.dc.rho - self.params.w / self.params.r * y
    }

    pub fn obstacle_prime(&self, y: f64) -> f64 {
        let q = self.dc.p2p;
        q * self.ubar2_coef() * (self.dc.rho * y).powf(q - 1.0) - self.params.w / self.params.r
    }

    pub fn obstacle_second(&self, y: f64) -> f64 {
        let q = self.dc.p2p;
        self.dc.rho * q * (q - 1.0) * self.ubar2_coef() * (self.dc.rho * y).powf(q - 2.0)
    }
}

/// Dual free-boundary solution. In the ruined regime there is no boundary:
/// `y_star` is 0, `c_coef` is 0 and `x_star` is absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualSolution {
    #[serde(skip)]
    pub model: Model,
    pub regime: Regime,
    pub y_star: f64,
    pub c_coef: f64,
    pub x_star: Option<f64>,
    pub y0: Option<f64>,
}

impl DualSolution {
    /// Solves in either regime.
    pub fn new(model: Model) -> Result<Self> {
        match model.regime {
            Regime::Stopping => model.solve_free_boundary(),
            Regime::Ruined => Ok(Self { model, regime: Regime::Ruined, y_star: 0.0, c_coef: 0.0, x_star: None, y0: None }),
        }
    }

    /// Assembles the solution for a given boundary without checking `F(y*) = 0`.
    pub fn with_boundary(model: Model, y_star: f64) -> Result<Self> {
        model.require_stopping("a boundary")?;
        if !(y_star > 0.0 && y_star.is_finite()) {
            return Err(Error::OutOfRange(format!("boundary must be positive, got {y_star}")));
        }
        let dc = &model.dc;
        let w_r = model.params.w / model.params.r;
        let c_coef = y_star.powf(-dc.n2) / (dc.n1 - dc.n2)
            * ((dc.n1 - dc.p2p) / dc.rho * model.ubar2(dc.rho * y_star) - (dc.n1 - 1.0) * w_r * y_star);
        Ok(Self {
            model,
            regime: Regime::Stopping,
            y_star,
            c_coef,
            x_star: Some(model.inv_marginal_wealth(dc.rho * y_star)),
            y0: None,
        })
    }

    pub fn critical_wealth(&self) -> Result<f64> {
        self.x_star.ok_or_else(|| {
            Error::Regime("no critical wealth: it is never optimal to annuitize in the ruined regime".into())
        })
    }

    pub(crate) fn kappa(&self) -> f64 {
        let dc = &self.model.dc;
        2.0 / (dc.theta * dc.theta * (dc.n1 - dc.n2))
    }

    fn in_stopping_region(&self, y: f64) -> bool {
        self.regime == Regime::Stopping && y <= self.y_star
    }

    // Both integrals converge for y > 0: every exponent of Ū1 lies in (0, 1],
    // below n1 and above n2.
    pub(crate) fn g1(&self, y: f64) -> f64 {
        self.model.tail_integral(y, self.model.dc.n1).expect("upper tail converges for n1 > 1")
    }

    pub(crate) fn g2(&self, y: f64) -> f64 {
        self.model
            .neg_ubar1_integral(self.y_star, y, self.model.dc.n2)
            .expect("lower tail converges for n2 < 0")
    }

    /// Continuation-region formula, also usable below `y*` as an extension.
    pub fn phi_continuation(&self, y: f64) -> [f64; 3] {
        let dc = &self.model.dc;
        let (n1, n2, c, kap) = (dc.n1, dc.n2, self.c_coef, self.kappa());
        let (g1, g2) = (self.g1(y), self.g2(y));
        let u1 = self.model.ubar1(y);
        let yn1 = y.powf(n1);
        let yn2 = y.powf(n2);
        let v = c * yn2 + kap * yn1 * g1 - kap * yn2 * g2;
        let d1 = (c * n2 * yn2 + kap * n1 * yn1 * g1 - kap * n2 * yn2 * g2) / y;
        let d2 = (c * n2 * (n2 - 1.0) * yn2 + kap * n1 * (n1 - 1.0) * yn1 * g1 - kap * n2 * (n2 - 1.0) * yn2 * g2) / (y * y)
            - 2.0 * u1 / (dc.theta * dc.theta * y * y);
        [v, d1, d2]
    }

    pub fn phi(&self, y: f64) -> f64 {
        if self.in_stopping_region(y) {
            self.model.obstacle(y)
        } else {
            self.phi_continuation(y)[0]
        }
    }

    pub fn phi_prime(&self, y: f64) -> f64 {
        if self.in_stopping_region(y) {
            self.model.obstacle_prime(y)
        } else {
            self.phi_continuation(y)[1]
        }
    }

    pub fn phi_second(&self, y: f64) -> f64 {
        if self.in_stopping_region(y) {
            self.model.obstacle_second(y)
        } else {
            self.phi_continuation(y)[2]
        }
    }

    /// Wealth as a function of the shadow price; `I(ρy)` below the boundary.
    pub(crate) fn wealth_at(&self, y: f64) -> f64 {
        if self.in_stopping_region(y) {
            self.model.inv_marginal_wealth(self.model.dc.rho * y)
        } else {
            self.wealth_formula(y)
        }
    }

    /// The explicit continuation-region wealth map.
    fn wealth_formula(&self, y: f64) -> f64 {
        let dc = &self.model.dc;
        let (n1, n2, kap) = (dc.n1, dc.n2, self.kappa());
        -self.c_coef * n2 * y.powf(n2 - 1.0) - kap * n1 * y.powf(n1 - 1.0) * self.g1(y)
            + kap * n2 * y.powf(n2 - 1.0) * self.g2(y)
            - self.model.params.w / self.model.params.r
    }

    /// Wealth in the continuation region `y >= y*`.
    pub fn wealth_of_shadow(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) || (self.regime == Regime::Stopping && y < self.y_star) {
            return Err(Error::OutOfRange(format!("shadow price {y:e} is below the boundary {:e}", self.y_star)));
        }
        Ok(self.wealth_formula(y))
    }

    /// Inverse of [`wealth_of_shadow`](Self::wealth_of_shadow).
    pub fn shadow_of_wealth(&self, x: f64) -> Result<f64> {
        let floor = -self.model.params.w / self.model.params.r;
        if !(x > floor) {
            return Err(Error::OutOfRange(format!("wealth {x} is not above the floor {floor}")));
        }
        let g = |y: f64| self.wealth_formula(y) - x;
        match self.x_star {
            Some(xs) => {
                if x >= xs {
                    return Err(Error::OutOfRange(format!("wealth {x} is in the stopping region (x* = {xs})")));
                }
                let limit = 1e9 * self.y_star;
                let hi = expand(2.0 * self.y_star, 2.0, 64, |y| y > limit || g(y) < 0.0, "wealth bracket")?;
                if hi > limit {
                    return Err(Error::OutOfRange(format!("wealth {x} is below the attainable range")));
                }
                if x == xs {
                    return Ok(self.y_star);
                }
                log_brent(g, self.y_star, hi, ROOT_TOL, "shadow of wealth")
            }
            None => {
                let start = if self.model.dc.y_tilde.is_finite() { self.model.dc.y_tilde } else { 1e-6 };
                let lo = expand(start, 0.5, 2000, |y| g(y) > 0.0, "wealth bracket")
                    .map_err(|_| Error::OutOfRange(format!("wealth {x} is above the attainable range")))?;
                let hi = expand(start, 2.0, 2000, |y| g(y) < 0.0, "wealth bracket")
                    .map_err(|_| Error::OutOfRange(format!("wealth {x} is below the attainable range")))?;
                log_brent(g, lo, hi, ROOT_TOL, "shadow of wealth")
            }
        }
    }
}
