//! Gauss-Legendre S_N quadrature on the direction cosine interval [-1, 1].

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Direction cosines sorted ascending with their weights (summing to 2).
#[derive(Debug, Clone, PartialEq)]
pub struct AngularQuadrature {
    mu: Vec<f64>,
    w: Vec<f64>,
}

/// Legendre polynomial P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

impl AngularQuadrature {
    /// Builds the N-point Gauss-Legendre rule by Newton iteration on the
    /// positive roots of P_N, mirrored so that directions pair exactly.
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidQuadrature(n));
        }
        let half = n / 2;
        let mut pos = Vec::with_capacity(half);
        for i in 1..=half {
            // Chebyshev-like initial guess, descending from the largest root
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            for _ in 0..NEWTON_MAX_ITER {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if p.abs() < NEWTON_TOL || dx.abs() < NEWTON_TOL {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            pos.push((x, w));
        }
        // pos is descending in x; negative half first, then ascending positives
        let mut mu = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for &(x, wt) in &pos {
            mu.push(-x);
            w.push(wt);
        }
        for &(x, wt) in pos.iter().rev() {
            mu.push(x);
            w.push(wt);
        }
        Ok(Self { mu, w })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Index of the direction with the opposite cosine.
    pub fn mirror(&self, n: usize) -> usize {
        self.mu.len() - 1 - n
    }

    /// Indices of directions with negative cosine (moving toward -x).
    pub fn negative(&self) -> std::ops::Range<usize> {
        0..self.mu.len() / 2
    }

    pub fn positive(&self) -> std::ops::Range<usize> {
        self.mu.len() / 2..self.mu.len()
    }

    /// Quadrature-consistent half-range factor `sum w|mu| / sum w`.
    pub fn boundary_factor(&self) -> f64 {
        let num: f64 = self.mu.iter().zip(&self.w).map(|(m, w)| w * m.abs()).sum();
        let den: f64 = self.w.iter().sum();
        num / den
    }
}
