//! Monte-Carlo cohorts of retirees following the optimal policy.
//!
//! Each path simulates the shadow price exactly on a `dt` grid, stops at the
//! first grid time with `Y <= y*`, and is censored (forced to annuitize) at
//! `forced_stop`. Paths run in parallel but results are collected in path
//! order and reduced sequentially, so output does not depend on thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::DualSolution;
use crate::error::{Error, Result};
use crate::model::Regime;
use crate::rng::PathStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub forced_stop: f64,
    pub seed: u64,
    pub x0: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { n_paths: 1000, dt: 1.0 / 252.0, horizon: 20.0, forced_stop: 15.0, seed: 42, x0: 1000.0 }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.n_paths < 1 {
            return bad("n_paths must be at least 1");
        }
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return bad("dt must lie in (0, 1]");
        }
        if !(self.forced_stop >= 0.0 && self.forced_stop.is_finite()) {
            return bad("forced_stop must be non-negative");
        }
        if self.forced_stop > self.horizon {
            return bad("forced_stop must not exceed horizon");
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return bad("x0 must be positive");
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.forced_stop / self.dt).round() as usize
    }
}

/// One simulated retiree. Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path: u64,
    /// Annuitization time; equals `forced_stop` when censored.
    pub tau: f64,
    pub censored: bool,
    pub x_tau: f64,
    pub annual_annuity: f64,
    pub avg_consumption: f64,
    pub avg_labor_income: f64,
    pub pv_annuity: f64,
    pub pv_consumption: f64,
    pub pv_labor: f64,
    pub net_wealth: f64,
}

pub const CSV_HEADER: &str =
    "path,tau,censored,x_tau,annual_annuity,avg_consumption,avg_labor_income,pv_annuity,pv_consumption,pv_labor,net_wealth";

/// Exact lognormal step of the shadow price.
pub fn step_shadow(y: f64, dt: f64, z: f64, rho: f64, r: f64, theta: f64) -> f64 {
    y * ((rho - r - 0.5 * theta * theta) * dt - theta * dt.sqrt() * z).exp()
}

pub(crate) struct Walk {
    pub steps: usize,
    pub stopped: bool,
    pub y_end: f64,
}

/// Runs one shadow path from `y_start`. `on_step(i, y_i, z_i)` sees the
/// left-point state of every interval before it is advanced with `z_i`.
pub(crate) fn walk<F: FnMut(usize, f64, f64)>(sol: &DualSolution, cfg: &SimulationConfig, path: u64, y_start: f64, mut on_step: F) -> Walk {
    let dc = &sol.model.dc;
    let r = sol.model.params.r;
    let mut stream = PathStream::new(cfg.seed, path);
    let mut y = y_start;
    let n = cfg.n_steps();
    for i in 0..n {
        let z = stream.next_normal();
        on_step(i, y, z);
        y = step_shadow(y, cfg.dt, z, dc.rho, r, dc.theta);
        if y <= sol.y_star {
            return Walk { steps: i + 1, stopped: true, y_end: y };
        }
    }
    Walk { steps: n, stopped: false, y_end: y }
}

impl DualSolution {
    fn require_boundary(&self) -> Result<f64> {
        match self.regime {
            Regime::Stopping => self.critical_wealth(),
            Regime::Ruined => Err(Error::Regime("simulation needs a stopping boundary; the regime is ruined".into())),
        }
    }

    pub fn simulate_path(&self, cfg: &SimulationConfig, path: u64) -> Result<PathRecord> {
        let x_star = self.require_boundary()?;
        let m = &self.model;
        let (k, rho, w) = (m.params.k, m.dc.rho, m.params.w);
        if cfg.x0 >= x_star {
            let pv = k * cfg.x0 / rho;
            return Ok(PathRecord {
                path,
                tau: 0.0,
                censored: false,
                x_tau: cfg.x0,
                annual_annuity: k * cfg.x0,
                avg_consumption: 0.0,
                avg_labor_income: 0.0,
                pv_annuity: pv,
                pv_consumption: 0.0,
                pv_labor: 0.0,
                net_wealth: pv,
            });
        }
        let y_start = self.shadow_of_wealth(cfg.x0)?;
        let (mut sum_c, mut sum_l, mut pv_c, mut pv_l) = (0.0, 0.0, 0.0, 0.0);
        let dt = cfg.dt;
        let walk = walk(self, cfg, path, y_start, |i, y, _| {
            let c = m.optimal_consumption(y) * dt;
            let l = w * m.optimal_labor(y) * dt;
            let disc = (-rho * i as f64 * dt).exp();
            sum_c += c;
            sum_l += l;
            pv_c += disc * c;
            pv_l += disc * l;
        });
        let tau = walk.steps as f64 * dt;
        let x_tau = if walk.stopped { self.wealth_at(walk.y_end) } else { self.wealth_of_shadow(walk.y_end)? };
        let pv_a = (-rho * tau).exp() * k * x_tau / rho;
        let avg = |s: f64| if tau > 0.0 { s / tau } else { 0.0 };
        Ok(PathRecord {
            path,
            tau,
            censored: !walk.stopped,
            x_tau,
            annual_annuity: k * x_tau,
            avg_consumption: avg(sum_c),
            avg_labor_income: avg(sum_l),
            pv_annuity: pv_a,
            pv_consumption: pv_c,
            pv_labor: pv_l,
            net_wealth: pv_l + pv_a - pv_c,
        })
    }

    /// Simulates every path, in path order.
    pub fn simulate_paths(&self, cfg: &SimulationConfig) -> Result<Vec<PathRecord>> {
        cfg.validate()?;
        self.require_boundary()?;
        (0..cfg.n_paths as u64).into_par_iter().map(|p| self.simulate_path(cfg, p)).collect()
    }

    pub fn run_cohort(&self, cfg: &SimulationConfig) -> Result<(Vec<PathRecord>, CohortStats)> {
        let records = self.simulate_paths(cfg)?;
        let stats = CohortStats::from_records(&records, cfg);
        Ok((records, stats))
    }

    /// Mean annuitization time and mean annual flows for each starting wealth.
    pub fn sweep_initial_wealth(&self, cfg: &SimulationConfig, x0_list: &[f64]) -> Result<Vec<WealthSweepRow>> {
        let x_star = self.require_boundary()?;
        x0_list
            .iter()
            .map(|&x0| {
                if x0 >= x_star {
                    return Err(Error::Precondition(format!("initial wealth {x0} is not below x* = {x_star}")));
                }
                let cfg = SimulationConfig { x0, ..*cfg };
                let records = self.simulate_paths(&cfg)?;
                let n = records.len() as f64;
                Ok(WealthSweepRow {
                    x0,
                    mean_tau: records.iter().map(|r| r.tau).sum::<f64>() / n,
                    mean_consumption: records.iter().map(|r| r.avg_consumption).sum::<f64>() / n,
                    mean_labor_income: records.iter().map(|r| r.avg_labor_income).sum::<f64>() / n,
                    censored_fraction: records.iter().filter(|r| r.censored).count() as f64 / n,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WealthSweepRow {
    pub x0: f64,
    pub mean_tau: f64,
    pub mean_consumption: f64,
    pub mean_labor_income: f64,
    pub censored_fraction: f64,
}

pub fn write_paths_csv<W: Write>(records: &[PathRecord], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Order statistics in the cohort-table layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub p5: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p90: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self {
            min: v[0],
            p5: quantile(&v, 0.05),
            p25: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            p75: quantile(&v, 0.75),
            p90: quantile(&v, 0.9),
            max: v[v.len() - 1],
            mean,
            std: var.sqrt(),
        }
    }
}

/// Linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn with_edges(values: &[f64], edges: Vec<f64>) -> Self {
        let mut counts = vec![0; edges.len() - 1];
        let last = edges.len() - 2;
        for &v in values {
            if v < edges[0] || v > edges[last + 1] {
                continue;
            }
            let i = edges[1..].partition_point(|&e| e <= v).min(last);
            counts[i] += 1;
        }
        Self { edges, counts }
    }

    pub fn uniform(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let edges = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        Self::with_edges(values, edges)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortStats {
    pub n_paths: usize,
    pub n_censored: usize,
    pub x0: f64,
    pub forced_stop: f64,
    pub mean_tau: f64,
    pub tau: Summary,
    pub annual_annuity: Summary,
    pub avg_consumption: Summary,
    pub avg_labor_income: Summary,
    pub pv_annuity: Summary,
    pub pv_consumption: Summary,
    pub pv_labor: Summary,
    pub net_wealth: Summary,
    /// `(N, P(τ <= N))` for whole years up to the forced stop.
    pub prob_annuitized_within: Vec<(f64, f64)>,
    /// Uncensored annuitization times in one-year bins.
    pub tau_histogram: Histogram,
    pub annuity_histogram: Histogram,
    pub pv_annuity_histogram: Histogram,
}

impl CohortStats {
    pub fn from_records(records: &[PathRecord], cfg: &SimulationConfig) -> Self {
        let col = |f: fn(&PathRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
        let n = records.len();
        let taus = col(|r| r.tau);
        let stopped: Vec<f64> = records.iter().filter(|r| !r.censored).map(|r| r.tau).collect();
        let years = cfg.forced_stop.floor() as usize;
        let prob = (1..=years)
            .map(|y| {
                let y = y as f64;
                (y, stopped.iter().filter(|&&t| t <= y + 1e-9).count() as f64 / n as f64)
            })
            .collect();
        let tau_edges = (0..=cfg.forced_stop.ceil().max(1.0) as usize).map(|e| e as f64).collect();
        let annuity = col(|r| r.annual_annuity);
        let pv_annuity = col(|r| r.pv_annuity);
        Self {
            n_paths: n,
            n_censored: n - stopped.len(),
            x0: cfg.x0,
            forced_stop: cfg.forced_stop,
            mean_tau: taus.iter().sum::<f64>() / n as f64,
            tau: Summary::of(&taus),
            annual_annuity: Summary::of(&annuity),
            avg_consumption: Summary::of(&col(|r| r.avg_consumption)),
            avg_labor_income: Summary::of(&col(|r| r.avg_labor_income)),
            pv_annuity: Summary::of(&pv_annuity),
            pv_consumption: Summary::of(&col(|r| r.pv_consumption)),
            pv_labor: Summary::of(&col(|r| r.pv_labor)),
            net_wealth: Summary::of(&col(|r| r.net_wealth)),
            prob_annuitized_within: prob,
            tau_histogram: Histogram::with_edges(&stopped, tau_edges),
            annuity_histogram: Histogram::uniform(&annuity, 20),
            pv_annuity_histogram: Histogram::uniform(&pv_annuity, 20),
        }
    }

    /// `P(τ <= years)` among all paths; censored paths never count.
    pub fn prob_within(&self, years: f64) -> Option<f64> {
        self.prob_annuitized_within.iter().find(|(y, _)| (*y - years).abs() < 1e-9).map(|(_, p)| *p)
    }
}
