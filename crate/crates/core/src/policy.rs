//! Value function and optimal controls in wealth coordinates.

use serde::Serialize;

use crate::boundary::DualSolution;
use crate::error::{Error, Result};
use crate::model::{Model, Regime};

/// Optimal controls and value at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyPoint {
    pub y: f64,
    pub x: f64,
    pub c_star: f64,
    pub b_star: f64,
    pub pi_star: f64,
    pub value: f64,
    /// Wealth is in the stopping region: the point describes the annuitant.
    pub stopped: bool,
}

impl Model {
    pub fn optimal_consumption(&self, y: f64) -> f64 {
        self.inv_marginal_consumption(y)
    }

    pub fn optimal_labor(&self, y: f64) -> f64 {
        1.0 - self.inv_marginal_leisure(y)
    }

    /// `(v2/ρ)·U2(kx)`, the value of annuitizing wealth `x` now.
    pub fn stopping_value(&self, x: f64) -> Result<f64> {
        Ok(self.params.v2 / self.dc.rho * self.u2(self.params.k * x)?)
    }
}

impl DualSolution {
    pub fn value_function(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::OutOfRange(format!("value function needs x > 0, got {x}")));
        }
        if let Some(xs) = self.x_star {
            if x >= xs {
                return self.model.stopping_value(x);
            }
        }
        let y = self.shadow_of_wealth(x)?;
        Ok(y * (x + self.model.params.w / self.model.params.r) + self.phi(y))
    }

    /// Risky investment from the explicit control formula.
    pub fn optimal_portfolio(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) || (self.regime == Regime::Stopping && y < self.y_star) {
            return Err(Error::OutOfRange(format!("portfolio needs y >= y* = {:e}, got {y:e}", self.y_star)));
        }
        let dc = &self.model.dc;
        let (n1, n2, th, kap) = (dc.n1, dc.n2, dc.theta, self.kappa());
        let bracket = self.c_coef * n2 * (n2 - 1.0) * y.powf(n2 - 1.0) - 2.0 * self.model.ubar1(y) / (th * th * y)
            + kap * n1 * (n1 - 1.0) * y.powf(n1 - 1.0) * self.g1(y)
            - kap * n2 * (n2 - 1.0) * y.powf(n2 - 1.0) * self.g2(y);
        Ok(th / self.model.params.sigma * bracket)
    }

    /// Full policy at wealth `x`. At or above `x*` the point is the annuitant:
    /// consumption is the annuity payment, no labor, no risky position.
    pub fn policy_at_wealth(&self, x: f64) -> Result<PolicyPoint> {
        let m = &self.model;
        if let Some(xs) = self.x_star {
            if x >= xs {
                let k = m.params.k;
                let y = m.params.v2 * k * (k * x).powf(-m.params.p2) / m.dc.rho;
                return Ok(PolicyPoint {
                    y,
                    x,
                    c_star: k * x,
                    b_star: 0.0,
                    pi_star: 0.0,
                    value: m.stopping_value(x)?,
                    stopped: true,
                });
            }
        }
        let y = self.shadow_of_wealth(x)?;
        Ok(PolicyPoint {
            y,
            x,
            c_star: m.optimal_consumption(y),
            b_star: m.optimal_labor(y),
            pi_star: self.optimal_portfolio(y)?,
            value: y * (x + m.params.w / m.params.r) + self.phi(y),
            stopped: false,
        })
    }
}
