//! Comparative statics of the critical wealth over parameter grids.

use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::DualSolution;
use crate::error::Result;
use crate::model::{Model, ModelParams, ThresholdScaling};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub param_value: f64,
    /// Absent in the ruined regime.
    pub x_star: Option<f64>,
    pub y_star: Option<f64>,
    pub value_at_x: Option<f64>,
}

/// `steps` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![lo];
    }
    (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
}

fn solve_at(params: ModelParams, scaling: ThresholdScaling, value_at: Option<f64>) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
    let sol = DualSolution::new(Model::with_scaling(params, scaling)?)?;
    let value = value_at.map(|x| sol.value_function(x)).transpose()?;
    let y = sol.x_star.map(|_| sol.y_star);
    Ok((sol.x_star, y, value))
}

/// Solves once per value of `key` (a parameter name or `sharpe`).
pub fn sweep_parameter(
    base: ModelParams,
    scaling: ThresholdScaling,
    key: &str,
    values: &[f64],
    value_at: Option<f64>,
) -> Result<Vec<SweepRow>> {
    base.get(key)?;
    values
        .par_iter()
        .map(|&v| {
            let mut p = base;
            p.set(key, v)?;
            let (x_star, y_star, value_at_x) = solve_at(p, scaling, value_at)?;
            Ok(SweepRow { param_value: v, x_star, y_star, value_at_x })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow2 {
    pub param_value: f64,
    pub param2_value: f64,
    pub x_star: Option<f64>,
    pub y_star: Option<f64>,
}

/// Row-major grid over two parameters.
pub fn sweep_grid(
    base: ModelParams,
    scaling: ThresholdScaling,
    (key1, values1): (&str, &[f64]),
    (key2, values2): (&str, &[f64]),
) -> Result<Vec<SweepRow2>> {
    base.get(key1)?;
    base.get(key2)?;
    let cells: Vec<(f64, f64)> = values1.iter().flat_map(|&a| values2.iter().map(move |&b| (a, b))).collect();
    cells
        .par_iter()
        .map(|&(a, b)| {
            let mut p = base;
            p.set(key1, a)?;
            p.set(key2, b)?;
            let (x_star, y_star, _) = solve_at(p, scaling, None)?;
            Ok(SweepRow2 { param_value: a, param2_value: b, x_star, y_star })
        })
        .collect()
}
