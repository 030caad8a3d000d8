//! Direct utilities, their weighted conjugates and the inverse marginal maps.
//!
//! All public maps take shadow prices for the weighted objective
//! `v1·U1` / `v2·U2`. The conjugate of `v·U` is `v·Ū(y/v)`, so a power term
//! `a·y^q` picks up `v^(1−q)` while the wage terms are unchanged.

use crate::error::{Error, Result};
use crate::model::Model;

/// Which utility region a shadow price falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// No work: `y <= y_tilde`.
    FullLeisure,
    /// Interior labor choice: `y_tilde < y < y_bar`.
    Flexible,
    /// Labor at its cap: `y >= y_bar`.
    MinLeisure,
}

/// `coef · y^exp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTerm {
    pub coef: f64,
    pub exp: f64,
}

/// A sum of power terms valid on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    len: usize,
    terms: [PowerTerm; 4],
}

impl Piece {
    fn new(lo: f64, hi: f64, terms: &[PowerTerm]) -> Self {
        let mut arr = [PowerTerm { coef: 0.0, exp: 1.0 }; 4];
        let mut len = 0;
        for t in terms.iter().filter(|t| t.coef != 0.0) {
            arr[len] = *t;
            len += 1;
        }
        Self { lo, hi, len, terms: arr }
    }

    pub fn terms(&self) -> &[PowerTerm] {
        &self.terms[..self.len]
    }

    fn push(&mut self, t: PowerTerm) {
        if t.coef == 0.0 {
            return;
        }
        if let Some(i) = self.terms().iter().position(|s| s.exp == t.exp) {
            self.terms[i].coef += t.coef;
            if self.terms[i].coef == 0.0 {
                self.terms.copy_within(i + 1..self.len, i);
                self.len -= 1;
            }
        } else {
            self.terms[self.len] = t;
            self.len += 1;
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.terms().iter().map(|t| t.coef * y.powf(t.exp)).sum()
    }

    /// `∫_a^b Σ coef·z^(q−n−1) dz` for `lo <= a <= b <= hi`; either end may be 0 or ∞.
    pub fn integrate(&self, a: f64, b: f64, n: f64) -> Result<f64> {
        let mut total = 0.0;
        for t in self.terms() {
            let e = t.exp - n;
            if b.is_infinite() && e >= 0.0 {
                return Err(Error::Divergent(format!("z^{e} tail at infinity")));
            }
            if a == 0.0 && e <= 0.0 {
                return Err(Error::Divergent(format!("z^{e} singularity at zero")));
            }
            let v = if e.abs() < 1e-14 { (b / a).ln() } else { (b.powf(e) - a.powf(e)) / e };
            total += t.coef * v;
        }
        Ok(total)
    }
}

/// Up to three pieces covering `(0, ∞)` in increasing order.
#[derive(Debug, Clone, Copy)]
pub struct Pieces {
    len: usize,
    items: [Piece; 3],
}

impl Pieces {
    pub fn iter(&self) -> impl Iterator<Item = &Piece> {
        self.items[..self.len].iter()
    }

    fn add_to_all(&mut self, t: PowerTerm) {
        for p in &mut self.items[..self.len] {
            p.push(t);
        }
    }

    /// `∫_a^b f(z)·z^(−n−1) dz` for the piecewise power function `f`, `0 <= a <= b <= ∞`.
    pub fn integrate(&self, a: f64, b: f64, n: f64) -> Result<f64> {
        let mut total = 0.0;
        for p in self.iter() {
            let lo = a.max(p.lo);
            let hi = b.min(p.hi);
            if lo < hi {
                total += p.integrate(lo, hi, n)?;
            }
        }
        Ok(total)
    }

    pub fn eval(&self, y: f64) -> f64 {
        let last = self.len - 1;
        for (i, p) in self.iter().enumerate() {
            if y <= p.hi || i == last {
                return p.eval(y);
            }
        }
        unreachable!()
    }
}

impl Model {
    pub fn region(&self, y: f64) -> Region {
        if y <= self.dc.y_tilde {
            Region::FullLeisure
        } else if y < self.dc.y_bar {
            Region::Flexible
        } else {
            Region::MinLeisure
        }
    }

    /// Unweighted running utility `l^(β(1−p1)) c^(α(1−p1)) / (1−p1)`.
    pub fn u1(&self, c: f64, l: f64) -> Result<f64> {
        if c <= 0.0 || !(l > 0.0 && l <= 1.0) {
            return Err(Error::OutOfRange(format!("u1 needs c > 0 and l in (0, 1], got c={c}, l={l}")));
        }
        let p = &self.params;
        let e = 1.0 - p.p1;
        Ok(l.powf(p.beta * e) * c.powf(p.alpha * e) / e)
    }

    /// Unweighted terminal utility `x^(1−p2) / (1−p2)`.
    pub fn u2(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Err(Error::OutOfRange(format!("u2 needs x > 0, got {x}")));
        }
        let e = 1.0 - self.params.p2;
        Ok(x.powf(e) / e)
    }

    pub fn ubar1(&self, y: f64) -> f64 {
        let dc = &self.dc;
        let w = self.params.w;
        match self.region(y) {
            Region::FullLeisure => dc.a_tilde * y.powf(dc.p1p) - w * y,
            Region::Flexible => dc.a_coef * y.powf(dc.p),
            Region::MinLeisure => dc.a_bar * y.powf(dc.p1p) - w * dc.l_min * y,
        }
    }

    pub fn ubar1_prime(&self, y: f64) -> f64 {
        let dc = &self.dc;
        let w = self.params.w;
        match self.region(y) {
            Region::FullLeisure => dc.p1p * dc.a_tilde * y.powf(dc.p1p - 1.0) - w,
            Region::Flexible => dc.p * dc.a_coef * y.powf(dc.p - 1.0),
            Region::MinLeisure => dc.p1p * dc.a_bar * y.powf(dc.p1p - 1.0) - w * dc.l_min,
        }
    }

    /// Coefficient `K` with `Ū2(y) = K·y^p2'` (weighted, includes `k`).
    pub fn ubar2_coef(&self) -> f64 {
        let p2p = self.dc.p2p;
        -self.params.v2.powf(1.0 - p2p) / p2p * self.params.k.powf(-p2p)
    }

    pub fn ubar2(&self, y: f64) -> f64 {
        self.ubar2_coef() * y.powf(self.dc.p2p)
    }

    pub fn inv_marginal_consumption(&self, y: f64) -> f64 {
        let p = &self.params;
        let dc = &self.dc;
        let s = y / p.v1 / p.alpha;
        match self.region(y) {
            Region::FullLeisure => s.powf(dc.p1p - 1.0),
            Region::Flexible => {
                s.powf(dc.p - 1.0) * (p.alpha * p.w / p.beta).powf(p.beta * dc.p / (p.alpha + p.beta))
            }
            Region::MinLeisure => s.powf(dc.p1p - 1.0) * dc.l_min.powf(-(p.beta / p.alpha) * dc.p1p),
        }
    }

    pub fn inv_marginal_leisure(&self, y: f64) -> f64 {
        let p = &self.params;
        let dc = &self.dc;
        match self.region(y) {
            Region::FullLeisure => 1.0,
            Region::Flexible => {
                let s = y / p.v1 / p.alpha;
                s.powf(dc.p - 1.0)
                    * (p.alpha * p.w / p.beta).powf(p.beta * dc.p / (p.alpha + p.beta) - 1.0)
            }
            Region::MinLeisure => dc.l_min,
        }
    }

    /// `I(y) = (1/k)·(y/(v2·k))^(p2'−1)`.
    pub fn inv_marginal_wealth(&self, y: f64) -> f64 {
        let k = self.params.k;
        (y / (self.params.v2 * k)).powf(self.dc.p2p - 1.0) / k
    }

    /// Ū1 as explicit power pieces.
    pub fn ubar1_pieces(&self) -> Pieces {
        let dc = &self.dc;
        let w = self.params.w;
        let full = Piece::new(
            0.0,
            dc.y_tilde,
            &[PowerTerm { coef: dc.a_tilde, exp: dc.p1p }, PowerTerm { coef: -w, exp: 1.0 }],
        );
        let mid = Piece::new(dc.y_tilde, dc.y_bar, &[PowerTerm { coef: dc.a_coef, exp: dc.p }]);
        let min = Piece::new(
            dc.y_bar,
            f64::INFINITY,
            &[PowerTerm { coef: dc.a_bar, exp: dc.p1p }, PowerTerm { coef: -w * dc.l_min, exp: 1.0 }],
        );
        let mut out = Pieces { len: 0, items: [full; 3] };
        for p in [full, mid, min] {
            if p.lo < p.hi && p.lo.is_finite() {
                out.items[out.len] = p;
                out.len += 1;
            }
        }
        out
    }

    /// `Ū(y) = Ū1(y) + (n(p2')/ρ)·Ū2(ρy) + w·y` as power pieces.
    pub fn ubar_pieces(&self) -> Pieces {
        let mut pieces = self.ubar1_pieces();
        let dc = &self.dc;
        let c2 = dc.n_p2p / dc.rho * self.ubar2_coef() * dc.rho.powf(dc.p2p);
        pieces.add_to_all(PowerTerm { coef: c2, exp: dc.p2p });
        pieces.add_to_all(PowerTerm { coef: self.params.w, exp: 1.0 });
        pieces
    }

    pub fn ubar_combined(&self, y: f64) -> f64 {
        let dc = &self.dc;
        self.ubar1(y) + dc.n_p2p / dc.rho * self.ubar2(dc.rho * y) + self.params.w * y
    }
}
