//! Independent checks of the closed-form solution.
//!
//! Quadrature re-derives the integrals, finite differences re-derive the
//! derivatives, and Monte Carlo re-derives the value function and the budget
//! identity from simulated optimal paths.

use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::DualSolution;
use crate::error::{Error, Result};
use crate::model::Regime;
use crate::simulator::{walk, SimulationConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn new(check: &str, max_residual: f64, tolerance: f64) -> Self {
        Self { check: check.into(), max_residual, tolerance, passed: max_residual <= tolerance }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check == name)
    }

    fn extend(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
    }
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { mean, stderr: (var / n).sqrt() }
    }
}

const QUAD_REL_TOL: f64 = 1e-12;
const MAX_DEPTH: usize = 40;

/// Adaptive refinement: a segment is accepted once its error estimate is
/// below either the relative target or the absolute floor `abs_tol`.
fn de_segment<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64, depth: usize) -> Result<f64> {
    let out = quadrature::integrate(f, a, b, 1e-300);
    let target = (QUAD_REL_TOL * out.integral.abs()).max(abs_tol);
    if out.integral.is_finite() && out.error_estimate <= target {
        return Ok(out.integral);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Quadrature(format!(
            "[{a:e}, {b:e}]: error estimate {:e} on integral {:e}",
            out.error_estimate, out.integral
        )));
    }
    let mid = if a == 0.0 {
        b * 1e-2
    } else if b / a > 4.0 {
        (a * b).sqrt()
    } else {
        0.5 * (a + b)
    };
    Ok(de_segment(f, a, mid, abs_tol, depth + 1)? + de_segment(f, mid, b, abs_tol, depth + 1)?)
}

/// Finite subintervals, one per decade when the range is wide.
fn decades(a: f64, b: f64) -> Vec<(f64, f64)> {
    if a > 0.0 && b / a > 10.0 {
        let n = (b / a).log10().ceil() as usize;
        (0..n)
            .map(|i| {
                let lo = a * 10f64.powi(i as i32);
                let hi = if i + 1 == n { b } else { a * 10f64.powi(i as i32 + 1) };
                (lo, hi)
            })
            .collect()
    } else {
        vec![(a, b)]
    }
}

/// `∫_a^b f` by adaptive double-exponential quadrature, splitting at the
/// given breakpoints. An infinite upper limit is mapped through `u = 1/z`.
pub fn quad_integral<F: Fn(f64) -> f64 + Sync>(f: F, a: f64, b: f64, breaks: &[f64]) -> Result<f64> {
    if a > b {
        return Ok(-quad_integral(f, b, a, breaks)?);
    }
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&p| p > a && p < b && p.is_finite()).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    pts.extend(inner);
    pts.push(b);

    let g = |u: f64| if u == 0.0 { 0.0 } else { f(1.0 / u) / (u * u) };
    // (integrand in u-space, lo, hi)
    let mut segs: Vec<(bool, f64, f64)> = Vec::new();
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi.is_infinite() {
            if lo <= 0.0 {
                return Err(Error::Quadrature("an infinite range needs a positive lower limit".into()));
            }
            let top = 1.0 / lo;
            let floor = top * 1e-40;
            segs.push((true, 0.0, floor));
            segs.extend(decades(floor, top).into_iter().map(|(l, h)| (true, l, h)));
        } else {
            segs.extend(decades(lo, hi).into_iter().map(|(l, h)| (false, l, h)));
        }
    }
    let eval = |inv: bool, l: f64, h: f64, tol: f64| {
        if inv {
            de_segment(&g, l, h, tol, 0)
        } else {
            de_segment(&f, l, h, tol, 0)
        }
    };
    let rough: f64 = segs.iter().map(|&(inv, l, h)| eval(inv, l, h, f64::INFINITY).map(f64::abs)).sum::<Result<f64>>()?;
    let abs_tol = 1e-14 * rough;
    segs.iter().map(|&(inv, l, h)| eval(inv, l, h, abs_tol)).sum()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Deterministic pseudo-random points in log space.
fn probe_points(lo: f64, hi: f64, n: usize, salt: u64) -> Vec<f64> {
    let mut s = crate::rng::PathStream::new(0x5eed ^ salt, 0);
    (0..n).map(|_| lo * (hi / lo).powf(s.next_uniform())).collect()
}

impl DualSolution {
    fn seams(&self) -> Vec<f64> {
        let dc = &self.model.dc;
        [dc.y_tilde, dc.y_bar].into_iter().filter(|s| s.is_finite() && *s > 0.0).collect()
    }

    fn near_seam(&self, y: f64, h: f64) -> bool {
        self.seams().iter().chain(std::iter::once(&self.y_star)).any(|s| (y - s).abs() < 10.0 * h)
    }

    fn anchor(&self) -> f64 {
        match self.regime {
            Regime::Stopping => self.y_star,
            Regime::Ruined => {
                let t = self.model.dc.y_tilde;
                if t.is_finite() {
                    t
                } else {
                    1e-6
                }
            }
        }
    }

    /// Closed-form integrals against adaptive quadrature at 20 points per exponent.
    pub fn check_quadrature(&self) -> Result<VerificationReport> {
        let m = &self.model;
        let dc = &m.dc;
        let breaks = self.seams();
        let a = self.anchor();
        let pts = probe_points(a * 1e-2, a * 1e4, 20, 1);
        let mut report = VerificationReport::default();

        let neg_u1_n1 = |z: f64| -m.ubar1(z) * z.powf(-dc.n1 - 1.0);
        let mut worst: f64 = 0.0;
        for &y in &pts {
            let quad = -quad_integral(neg_u1_n1, y, f64::INFINITY, &breaks)?;
            worst = worst.max(rel_err(m.tail_integral(y, dc.n1)?, quad));
        }
        report.checks.push(CheckResult::new("quadrature_tail_n1", worst, 1e-8));

        let lower = self.y_star;
        let neg_u1_n2 = |z: f64| -m.ubar1(z) * z.powf(-dc.n2 - 1.0);
        let mut worst: f64 = 0.0;
        for &y in &pts {
            let quad = quad_integral(neg_u1_n2, lower, y, &breaks)?;
            worst = worst.max(rel_err(m.neg_ubar1_integral(lower, y, dc.n2)?, quad));
        }
        report.checks.push(CheckResult::new("quadrature_tail_n2", worst, 1e-8));

        if self.regime == Regime::Stopping {
            let integrand = |z: f64| m.ubar_combined(z) * z.powf(-dc.n1 - 1.0);
            let mut worst: f64 = 0.0;
            for &y in &pts {
                let quad = -quad_integral(integrand, y, f64::INFINITY, &breaks)?;
                let exact = m.f_value(y)?;
                // F vanishes at y*, so measure against the size of its pieces
                let scale = quad_integral(|z: f64| integrand(z).abs(), y, f64::INFINITY, &breaks)?;
                worst = worst.max((exact - quad).abs() / scale);
            }
            report.checks.push(CheckResult::new("quadrature_F", worst, 1e-8));
        }
        Ok(report)
    }

    /// Ū1 and Ū2 decreasing and convex on a grid.
    pub fn check_conjugate_shape(&self) -> VerificationReport {
        let m = &self.model;
        let ys = log_grid(1e-12, 1e2, 1400);
        let mut worst: f64 = 0.0;
        for w in ys.windows(3) {
            for f in [&|y: f64| m.ubar1(y), &|y: f64| m.ubar2(y)] as [&dyn Fn(f64) -> f64; 2] {
                let (a, b, c) = (f(w[0]), f(w[1]), f(w[2]));
                let chord = a + (c - a) * (w[1] - w[0]) / (w[2] - w[0]);
                let scale = 1.0 + b.abs();
                worst = worst.max((b - a).max(0.0) / scale).max((b - chord).max(0.0) / scale);
            }
        }
        VerificationReport { checks: vec![CheckResult::new("conjugate_convexity", worst, 1e-12)] }
    }

    /// Closed-form derivatives against central differences away from seams.
    pub fn check_derivatives(&self) -> VerificationReport {
        let m = &self.model;
        let a = self.anchor();
        let ys = log_grid(a * 1e-2, a * 1e4, 400);
        let (mut du, mut d1, mut d2): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for &y in &ys {
            let h = 1e-5 * y;
            if self.near_seam(y, h) {
                continue;
            }
            du = du.max(rel_err((m.ubar1(y + h) - m.ubar1(y - h)) / (2.0 * h), m.ubar1_prime(y)));
            if self.regime == Regime::Stopping && y > self.y_star || self.regime == Regime::Ruined {
                d1 = d1.max(rel_err((self.phi(y + h) - self.phi(y - h)) / (2.0 * h), self.phi_prime(y)));
                d2 = d2.max(rel_err((self.phi_prime(y + h) - self.phi_prime(y - h)) / (2.0 * h), self.phi_second(y)));
            }
        }
        VerificationReport {
            checks: vec![
                CheckResult::new("derivative_ubar1", du, 1e-5),
                CheckResult::new("derivative_phi", d1, 1e-5),
                CheckResult::new("derivative_phi_second", d2, 1e-5),
            ],
        }
    }

    fn generator(&self, y: f64, v: f64, d1: f64, d2: f64) -> f64 {
        let dc = &self.model.dc;
        -dc.rho * v + (dc.rho - self.model.params.r) * y * d1 + 0.5 * dc.theta * dc.theta * y * y * d2 + self.model.ubar1(y)
    }

    /// The obstacle-problem conditions on a log grid straddling the boundary.
    pub fn check_variational_inequality(&self, n_grid: usize) -> Result<VerificationReport> {
        if self.regime != Regime::Stopping {
            return Err(Error::Regime("the variational inequality needs a boundary".into()));
        }
        let m = &self.model;
        let ys = log_grid(self.y_star * 1e-2, self.y_star * 1e4, n_grid);
        let (mut ode, mut stop, mut gap): (f64, f64, f64) = (0.0, f64::NEG_INFINITY, 0.0);
        for &y in &ys {
            let u1 = m.ubar1(y);
            if y > self.y_star {
                let [v, d1, d2] = self.phi_continuation(y);
                ode = ode.max(self.generator(y, v, d1, d2).abs() / (1.0 + u1.abs()));
                let obstacle = m.obstacle(y);
                gap = gap.max((obstacle - v).max(0.0) / (1.0 + obstacle.abs()));
            } else {
                let l = self.generator(y, m.obstacle(y), m.obstacle_prime(y), m.obstacle_second(y));
                stop = stop.max(l);
            }
        }
        let ys = self.y_star;
        let [v, d1, _] = self.phi_continuation(ys);
        let ob = m.obstacle(ys);
        let obp = m.obstacle_prime(ys);
        Ok(VerificationReport {
            checks: vec![
                CheckResult::new("ode_residual", ode, 1e-6),
                CheckResult::new("stopping_region_residual", stop.max(0.0), 1e-9),
                CheckResult::new("obstacle_dominance", gap, 1e-9),
                CheckResult::new("value_matching", (v - ob).abs() / (1.0 + ob.abs()), 1e-9),
                CheckResult::new("smooth_pasting", (d1 - obp).abs() / (1.0 + obp.abs()), 1e-8),
            ],
        })
    }

    fn stopping_cfg(&self, cfg: &SimulationConfig) -> Result<f64> {
        cfg.validate()?;
        if self.regime != Regime::Stopping {
            return Err(Error::Regime("Monte-Carlo checks need a boundary".into()));
        }
        self.critical_wealth()
    }

    /// Per-path `∫H(c + w·l)dt + H_τ(X_τ + w/r)` along optimal paths.
    pub fn budget_estimate(&self, cfg: &SimulationConfig) -> Result<Estimate> {
        let x_star = self.stopping_cfg(cfg)?;
        let m = &self.model;
        let (r, w, th, dt) = (m.params.r, m.params.w, m.dc.theta, cfg.dt);
        if cfg.x0 >= x_star {
            return Ok(Estimate { mean: cfg.x0 + w / r, stderr: 0.0 });
        }
        let y_start = self.shadow_of_wealth(cfg.x0)?;
        let drift = -(r + 0.5 * th * th) * dt;
        let vol = th * dt.sqrt();
        let values: Vec<f64> = (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|p| {
                let mut h = 1.0;
                let mut acc = 0.0;
                let end = walk(self, cfg, p, y_start, |_, y, z| {
                    acc += h * (m.inv_marginal_consumption(y) + w * m.inv_marginal_leisure(y)) * dt;
                    h *= (drift - vol * z).exp();
                });
                acc + h * (self.wealth_at(end.y_end) + w / r)
            })
            .collect();
        Ok(Estimate::of(&values))
    }

    pub fn check_budget_constraint(&self, cfg: &SimulationConfig) -> Result<VerificationReport> {
        let est = self.budget_estimate(cfg)?;
        let target = cfg.x0 + self.model.params.w / self.model.params.r;
        Ok(VerificationReport {
            checks: vec![CheckResult::new("budget_identity", (est.mean - target).abs(), 3.0 * est.stderr)],
        })
    }

    /// Monte-Carlo value of the objective under the optimal controls.
    /// Censored paths add the discounted optimal continuation value.
    pub fn estimate_primal_value(&self, cfg: &SimulationConfig) -> Result<Estimate> {
        let x_star = self.stopping_cfg(cfg)?;
        let m = &self.model;
        if cfg.x0 >= x_star {
            return Ok(Estimate { mean: m.stopping_value(cfg.x0)?, stderr: 0.0 });
        }
        let (rho, w, r, v1, dt) = (m.dc.rho, m.params.w, m.params.r, m.params.v1, cfg.dt);
        let y_start = self.shadow_of_wealth(cfg.x0)?;
        let values: Vec<f64> = (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|p| -> Result<f64> {
                let mut acc = 0.0;
                let end = walk(self, cfg, p, y_start, |i, y, _| {
                    let u = m
                        .u1(m.inv_marginal_consumption(y), m.inv_marginal_leisure(y))
                        .expect("optimal controls are interior");
                    acc += (-rho * i as f64 * dt).exp() * v1 * u * dt;
                });
                let t = end.steps as f64 * dt;
                let x = self.wealth_at(end.y_end);
                let terminal = if end.stopped {
                    m.stopping_value(x)?
                } else {
                    end.y_end * (x + w / r) + self.phi(end.y_end)
                };
                Ok(acc + (-rho * t).exp() * terminal)
            })
            .collect::<Result<_>>()?;
        Ok(Estimate::of(&values))
    }

    pub fn check_duality_gap(&self, cfg: &SimulationConfig) -> Result<VerificationReport> {
        let est = self.estimate_primal_value(cfg)?;
        let v = self.value_function(cfg.x0)?;
        Ok(VerificationReport {
            checks: vec![CheckResult::new("duality_gap", (est.mean - v).abs(), 3.0 * est.stderr)],
        })
    }

    /// Objective value when labor is held at `b` while consumption and
    /// investment follow the optimal maps at the current wealth. Wealth is
    /// stepped with an Euler scheme; after `forced_stop` the optimal
    /// continuation is used.
    pub fn estimate_constant_labor_value(&self, cfg: &SimulationConfig, b: f64) -> Result<Estimate> {
        let x_star = self.stopping_cfg(cfg)?;
        let m = &self.model;
        if !(0.0..=m.params.b_max).contains(&b) {
            return Err(Error::OutOfRange(format!("labor {b} outside [0, {}]", m.params.b_max)));
        }
        let table = WealthTable::new(self, 4000);
        let p = &m.params;
        let (rho, dt, n) = (m.dc.rho, cfg.dt, cfg.n_steps());
        let sq = dt.sqrt();
        let values: Vec<f64> = (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|path| -> Result<f64> {
                let mut s = crate::rng::PathStream::new(cfg.seed, path);
                let mut x = cfg.x0;
                let mut acc = 0.0;
                for i in 0..n {
                    let t = i as f64 * dt;
                    if x >= x_star {
                        return Ok(acc + (-rho * t).exp() * m.stopping_value(x)?);
                    }
                    let y = table.shadow(x);
                    let c = m.inv_marginal_consumption(y);
                    let pi = self.optimal_portfolio(y)?;
                    acc += (-rho * t).exp() * p.v1 * m.u1(c, 1.0 - b)? * dt;
                    let z = s.next_normal();
                    x += (p.r * x + pi * (p.mu - p.r) - c + p.w * b) * dt + pi * p.sigma * sq * z;
                }
                let t = n as f64 * dt;
                let v = if x >= x_star { m.stopping_value(x)? } else { self.value_function(x.max(table.x_min()))? };
                Ok(acc + (-rho * t).exp() * v)
            })
            .collect::<Result<_>>()?;
        Ok(Estimate::of(&values))
    }

    /// Every applicable check. Monte-Carlo checks are skipped when `mc` is `None`.
    pub fn verify_all(&self, mc: Option<&SimulationConfig>) -> Result<VerificationReport> {
        let mut report = self.check_conjugate_shape();
        report.extend(self.check_derivatives());
        report.extend(self.check_quadrature()?);
        if self.regime == Regime::Stopping {
            report.extend(self.check_variational_inequality(2000)?);
            if let Some(cfg) = mc {
                report.extend(self.check_budget_constraint(cfg)?);
                report.extend(self.check_duality_gap(cfg)?);
            }
        }
        Ok(report)
    }
}

/// Tabulated inverse of the wealth map for per-step lookups.
struct WealthTable {
    xs: Vec<f64>,
    ln_ys: Vec<f64>,
}

impl WealthTable {
    fn new(sol: &DualSolution, n: usize) -> Self {
        let ys = log_grid(sol.y_star, sol.y_star * 1e8, n);
        let xs: Vec<f64> = ys.iter().map(|&y| sol.wealth_at(y)).rev().collect();
        let ln_ys = ys.iter().map(|y| y.ln()).rev().collect();
        Self { xs, ln_ys }
    }

    fn x_min(&self) -> f64 {
        self.xs[0].max(1e-9)
    }

    /// Shadow price at wealth `x`, clamped to the tabulated range.
    fn shadow(&self, x: f64) -> f64 {
        let i = self.xs.partition_point(|&v| v <= x);
        if i == 0 {
            return self.ln_ys[0].exp();
        }
        if i == self.xs.len() {
            return self.ln_ys[i - 1].exp();
        }
        let t = (x - self.xs[i - 1]) / (self.xs[i] - self.xs[i - 1]);
        (self.ln_ys[i - 1] + t * (self.ln_ys[i] - self.ln_ys[i - 1])).exp()
    }
}
