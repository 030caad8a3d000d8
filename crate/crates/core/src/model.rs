//! Exogenous parameters, presets and every derived constant of the dual solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Economic and preference parameters. Field names are the JSON keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    pub delta: f64,
    pub k: f64,
    pub w: f64,
    pub b_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub p1: f64,
    pub p2: f64,
    pub v1: f64,
    pub v2: f64,
}

pub const PARAM_KEYS: [&str; 13] = [
    "r", "mu", "sigma", "delta", "k", "w", "b_max", "alpha", "beta", "p1", "p2", "v1", "v2",
];

impl ModelParams {
    /// Male retiree reference setting.
    pub fn base() -> Self {
        Self {
            r: 0.035,
            mu: 0.08,
            sigma: 0.15,
            delta: 0.01,
            k: 0.095,
            w: 100.0,
            b_max: 0.5,
            alpha: 0.5,
            beta: 0.5,
            p1: 2.0,
            p2: 2.0,
            v1: 0.01,
            v2: 0.1,
        }
    }

    /// Named presets: `base`, `m1` (no labor), `m2` (low labor cap), `m3` (high labor cap).
    pub fn preset(name: &str) -> Result<Self> {
        let mut p = Self::base();
        match name {
            "base" => {}
            "m1" => p.b_max = 0.0,
            "m2" => {
                p.b_max = 0.25;
                p.beta = 1.0;
            }
            "m3" => {
                p.b_max = 0.5;
                p.beta = 0.5;
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown preset '{other}' (expected base, m1, m2 or m3)"
                )))
            }
        }
        Ok(p)
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        Ok(match key {
            "r" => self.r,
            "mu" => self.mu,
            "sigma" => self.sigma,
            "delta" => self.delta,
            "k" => self.k,
            "w" => self.w,
            "b_max" => self.b_max,
            "alpha" => self.alpha,
            "beta" => self.beta,
            "p1" => self.p1,
            "p2" => self.p2,
            "v1" => self.v1,
            "v2" => self.v2,
            "sharpe" => (self.mu - self.r) / self.sigma,
            other => return Err(Error::InvalidParameter(format!("unknown parameter '{other}'"))),
        })
    }

    /// Sets one field by key. `sharpe` moves `mu` with `r` and `sigma` held fixed.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "r" => self.r = value,
            "mu" => self.mu = value,
            "sigma" => self.sigma = value,
            "delta" => self.delta = value,
            "k" => self.k = value,
            "w" => self.w = value,
            "b_max" => self.b_max = value,
            "alpha" => self.alpha = value,
            "beta" => self.beta = value,
            "p1" => self.p1 = value,
            "p2" => self.p2 = value,
            "v1" => self.v1 = value,
            "v2" => self.v2 = value,
            "sharpe" => self.mu = self.r + value * self.sigma,
            other => return Err(Error::InvalidParameter(format!("unknown parameter '{other}'"))),
        }
        Ok(())
    }

    /// Checks every invariant and reports the first violation by name.
    pub fn validate(self) -> Result<Self> {
        for key in PARAM_KEYS {
            if !self.get(key)?.is_finite() {
                return fail(format!("{key} must be finite"));
            }
        }
        if self.r <= 0.0 {
            return fail("r must be positive");
        }
        if self.mu <= self.r {
            return fail("mu must exceed r");
        }
        if self.sigma <= 0.0 {
            return fail("sigma must be positive");
        }
        if self.delta < 0.0 {
            return fail("delta must be non-negative");
        }
        if self.k <= self.r {
            return fail("k must exceed r");
        }
        if self.w < 0.0 {
            return fail("w must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.b_max) {
            return fail("b_max must lie in [0, 1]");
        }
        if self.alpha <= 0.0 {
            return fail("alpha must be positive");
        }
        if self.beta <= 0.0 {
            return fail("beta must be positive");
        }
        if self.p1 <= 1.0 {
            return fail("p1 must exceed 1");
        }
        if self.p2 <= 1.0 {
            return fail("p2 must exceed 1");
        }
        if self.v1 <= 0.0 {
            return fail("v1 must be positive");
        }
        if self.v2 <= 0.0 {
            return fail("v2 must be positive");
        }
        Ok(self)
    }
}

fn fail<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}

/// Where the utility-region seams sit in shadow-price units.
///
/// `Leveraged` is the exact conjugate of the weighted running utility: both
/// seams scale with `v1`. `Unleveraged` keeps the seams at their unweighted
/// positions while the branch formulas stay weighted. The second convention
/// makes the conjugate discontinuous at the seams but reproduces the published
/// critical-wealth figures; use it only for that purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdScaling {
    #[default]
    Leveraged,
    Unleveraged,
}

impl std::str::FromStr for ThresholdScaling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leveraged" => Ok(Self::Leveraged),
            "unleveraged" => Ok(Self::Unleveraged),
            other => fail(format!("unknown threshold scaling '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// A finite free boundary exists.
    Stopping,
    /// Never optimal to annuitize.
    Ruined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub theta: f64,
    pub rho: f64,
    pub n1: f64,
    pub n2: f64,
    pub p: f64,
    pub p1p: f64,
    pub p2p: f64,
    /// n evaluated at p2p.
    pub n_p2p: f64,
    pub l_min: f64,
    pub y_tilde: f64,
    pub y_bar: f64,
    #[serde(rename = "A_tilde")]
    pub a_tilde: f64,
    #[serde(rename = "A_coef")]
    pub a_coef: f64,
    #[serde(rename = "A_bar")]
    pub a_bar: f64,
    pub c_bar: f64,
    pub c_tilde: f64,
}

impl DerivedConstants {
    pub fn new(params: &ModelParams, scaling: ThresholdScaling) -> Self {
        let ModelParams { r, mu, sigma, delta, w, b_max, alpha, beta, p1, p2, v1, .. } = *params;
        let theta = (mu - r) / sigma;
        let rho = r + delta;
        let (n1, n2) = quadratic_roots(0.5 * theta * theta, rho - r - 0.5 * theta * theta, -rho);

        let a1 = alpha * (1.0 - p1);
        let ab1 = (alpha + beta) * (1.0 - p1);
        let p = ab1 / (ab1 - 1.0);
        let p1p = a1 / (a1 - 1.0);
        let p2p = (p2 - 1.0) / p2;
        let l_min = 1.0 - b_max;

        let y_tilde0 = alpha * (alpha * w / beta).powf(a1 - 1.0);
        let y_bar0 = if b_max == 0.0 { y_tilde0 } else { y_tilde0 * l_min.powf(ab1 - 1.0) };
        let seam_scale = match scaling {
            ThresholdScaling::Leveraged => v1,
            ThresholdScaling::Unleveraged => 1.0,
        };

        let a_tilde = v1.powf(1.0 - p1p) * (-alpha.powf(1.0 - p1p) / p1p);
        let a_bar = if b_max == 0.0 { a_tilde } else { a_tilde * l_min.powf(-(beta / alpha) * p1p) };
        let s = alpha + beta;
        let a_coef = v1.powf(1.0 - p)
            * (-(s / p)
                * alpha.powf(-alpha * p / s)
                * beta.powf(-beta * p / s)
                * w.powf(beta * p / s));

        let n_p2p = n_poly(theta, rho, r, p2p);
        Self {
            theta,
            rho,
            n1,
            n2,
            p,
            p1p,
            p2p,
            n_p2p,
            l_min,
            y_tilde: seam_scale * y_tilde0,
            y_bar: seam_scale * y_bar0,
            a_tilde,
            a_coef,
            a_bar,
            c_bar: alpha * w / beta * l_min,
            c_tilde: alpha * w / beta,
        }
    }

    /// n(x) = ½θ²x² + (ρ − r − ½θ²)x − ρ.
    pub fn n_of(&self, x: f64, r: f64) -> f64 {
        n_poly(self.theta, self.rho, r, x)
    }
}

fn n_poly(theta: f64, rho: f64, r: f64, x: f64) -> f64 {
    let h = 0.5 * theta * theta;
    h * x * x + (rho - r - h) * x - rho
}

/// Roots of a x² + b x + c with a > 0 and c < 0, larger first.
fn quadratic_roots(a: f64, b: f64, c: f64) -> (f64, f64) {
    let disc = (b * b - 4.0 * a * c).sqrt();
    let q = -0.5 * (b + b.signum() * disc);
    let (u, v) = (q / a, c / q);
    if u > v {
        (u, v)
    } else {
        (v, u)
    }
}

pub fn stopping_regime(dc: &DerivedConstants, params: &ModelParams) -> Regime {
    let by_elasticity = params.alpha * (1.0 - params.p1) > 1.0 - params.p2;
    let by_exponent = dc.p1p < dc.p2p;
    assert!(
        by_elasticity == by_exponent || (dc.p1p - dc.p2p).abs() < 1e-12,
        "regime tests disagree: alpha(1-p1) > 1-p2 is {by_elasticity}, p1' < p2' is {by_exponent}"
    );
    if by_elasticity {
        Regime::Stopping
    } else {
        Regime::Ruined
    }
}

/// Validated parameters together with their derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Model {
    pub params: ModelParams,
    pub dc: DerivedConstants,
    pub scaling: ThresholdScaling,
    pub regime: Regime,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        Self::with_scaling(params, ThresholdScaling::Leveraged)
    }

    pub fn with_scaling(params: ModelParams, scaling: ThresholdScaling) -> Result<Self> {
        let params = params.validate()?;
        let dc = DerivedConstants::new(&params, scaling);
        let regime = stopping_regime(&dc, &params);
        Ok(Self { params, dc, scaling, regime })
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::new(ModelParams::preset(name)?)
    }
}
