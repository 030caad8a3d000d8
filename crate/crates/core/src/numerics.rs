use roots::{find_root_brent, Convergency};

use crate::error::{Error, Result};

struct Tolerance {
    tol: f64,
    max_iter: usize,
}

impl Convergency<f64> for Tolerance {
    fn is_root_found(&mut self, y: f64) -> bool {
        y == 0.0
    }

    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() <= self.tol
    }

    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter >= self.max_iter
    }
}

/// Root of `f` on the positive bracket `[lo, hi]`, searched in `ln y` so the
/// tolerance is relative.
pub(crate) fn log_brent<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, rel_tol: f64, what: &str) -> Result<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let fa = f(lo);
    let fb = f(hi);
    if !(fa.is_finite() && fb.is_finite()) || fa * fb > 0.0 {
        return Err(Error::RootNotFound(format!(
            "{what}: bracket [{lo:e}, {hi:e}] has f = ({fa:e}, {fb:e})"
        )));
    }
    let mut conv = Tolerance { tol: rel_tol, max_iter: 400 };
    find_root_brent(a, b, |u: f64| f(u.exp()), &mut conv)
        .map(f64::exp)
        .map_err(|e| Error::RootNotFound(format!("{what}: {e}")))
}

/// Moves `y` geometrically by `factor` until `accept(y)` holds.
pub(crate) fn expand<P: FnMut(f64) -> bool>(mut y: f64, factor: f64, max_steps: usize, mut accept: P, what: &str) -> Result<f64> {
    for _ in 0..max_steps {
        if accept(y) {
            return Ok(y);
        }
        y *= factor;
        if y == 0.0 || !y.is_finite() {
            break;
        }
    }
    Err(Error::RootNotFound(format!("{what}: bracket expansion failed")))
}
