//! Implicit diffusion solves with no-flux boundaries.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::DomainGrid;
use crate::math::sqrt;
use crate::{Error, Result};

/// `A = diag * I - dt * (Dx d_xx + Dy d_yy)` with homogeneous Neumann
/// boundaries, discretized with the five-point stencil. Symmetric positive
/// definite whenever `diag > 0`.
pub(crate) struct ImplicitDiffusion<'a> {
    pub grid: &'a DomainGrid,
    pub diag: f64,
    pub coef: [f64; 2],
}

impl ImplicitDiffusion<'_> {
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let h2 = g.dx() * g.dx();
        let cx = self.coef[0] / h2;
        let cy = self.coef[1] / h2;
        for j in 0..ny {
            for i in 0..nx {
                let k = g.index(i, j);
                let xc = x[k];
                let mut lap = 0.0;
                if i > 0 {
                    lap += cx * (x[k - 1] - xc);
                }
                if i + 1 < nx {
                    lap += cx * (x[k + 1] - xc);
                }
                if g.dim() == 2 {
                    if j > 0 {
                        lap += cy * (x[k - nx] - xc);
                    }
                    if j + 1 < ny {
                        lap += cy * (x[k + nx] - xc);
                    }
                }
                out[k] = self.diag * xc - lap;
            }
        }
    }

    /// Solves `A x = b` by conjugate gradients starting from the contents of
    /// `x`, until `|r| <= rel_tol * |b|`.
    pub fn solve(&self, b: &[f64], x: &mut [f64], rel_tol: f64) -> Result<usize> {
        let n = b.len();
        let max_iter = 10 * n + 100;
        let mut r = vec![0.0; n];
        self.apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let b_norm = norm(b).max(f64::MIN_POSITIVE);
        let target = rel_tol * b_norm;
        let mut rr = dot(&r, &r);
        if sqrt(rr) <= target {
            return Ok(0);
        }
        let mut p = r.clone();
        let mut ap: Vec<f64> = vec![0.0; n];
        for it in 1..=max_iter {
            self.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::SolverDiverged { iterations: it, residual: sqrt(rr) });
            }
            let alpha = rr / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rr_new = dot(&r, &r);
            if sqrt(rr_new) <= target {
                return Ok(it);
            }
            let beta = rr_new / rr;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
            rr = rr_new;
        }
        Err(Error::SolverDiverged { iterations: max_iter, residual: sqrt(rr) })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_recovers_a_known_solution() {
        let g = DomainGrid::square(0.0, 1.0, 12).unwrap();
        let op = ImplicitDiffusion { grid: &g, diag: 1.3, coef: [0.02, 0.05] };
        let exact: Vec<f64> = (0..g.len()).map(|k| ((k * 37) % 11) as f64 * 0.1).collect();
        let mut b = vec![0.0; g.len()];
        op.apply(&exact, &mut b);
        let mut x = vec![0.0; g.len()];
        op.solve(&b, &mut x, 1e-13).unwrap();
        for (a, e) in x.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-10);
        }
    }

    #[test]
    fn operator_preserves_sums_when_diag_is_one() {
        let g = DomainGrid::new_1d(0.0, 1.0, 30).unwrap();
        let op = ImplicitDiffusion { grid: &g, diag: 1.0, coef: [0.7, 0.0] };
        let x: Vec<f64> = (0..30).map(|k| (k as f64 * 0.3).sin()).collect();
        let mut out = vec![0.0; 30];
        op.apply(&x, &mut out);
        let s0: f64 = x.iter().sum();
        let s1: f64 = out.iter().sum();
        assert!((s0 - s1).abs() < 1e-12);
    }
}
