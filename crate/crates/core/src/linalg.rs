//! Sparse linear solvers for the grid operators.
//!
//! Constant symmetric operators (pressure Poisson, implicit viscous and
//! thermal diffusion) are factored once with a banded Cholesky
//! decomposition. The coupled species system changes every step and is not
//! symmetric; it is solved with preconditioned BiCGSTAB.

use crate::error::{Error, Result};

/// Symmetric positive-definite band matrix stored as its lower band.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    /// Row `i` holds columns `i - bw ..= i` at offsets `0 ..= bw`.
    band: Vec<f64>,
    factored: bool,
}

impl BandedSpd {
    pub fn new(n: usize, bandwidth: usize) -> Self {
        Self { n, bw: bandwidth, band: vec![0.0; n * (bandwidth + 1)], factored: false }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw, "({i}, {j}) outside the band");
        i * (self.bw + 1) + self.bw - (i - j)
    }

    /// Adds `v` to entry `(i, j)` (and by symmetry `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(!self.factored, "matrix already factored");
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(r, c);
        self.band[s] += v;
    }

    /// `y = A x` (before factorization).
    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        assert!(!self.factored, "matrix already factored");
        y.fill(0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.band[self.slot(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
    }

    /// In-place Cholesky factorization `A = L Lᵀ`.
    pub fn factor(mut self) -> Result<Self> {
        let bw = self.bw;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = self.band[self.slot(i, j)];
                for k in klo..j {
                    s -= self.band[self.slot(i, k)] * self.band[self.slot(j, k)];
                }
                let slot = self.slot(i, j);
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::LinearSolveFailed(format!("band matrix not positive definite at row {i}")));
                    }
                    self.band[slot] = s.sqrt();
                } else {
                    self.band[slot] = s / self.band[self.slot(j, j)];
                }
            }
        }
        self.factored = true;
        Ok(self)
    }

    /// Solves `A x = b` in place using the factorization.
    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored, "call factor() first");
        let bw = self.bw;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            for k in lo..i {
                s -= self.band[self.slot(i, k)] * b[k];
            }
            b[i] = s / self.band[self.slot(i, i)];
        }
        for i in (0..self.n).rev() {
            b[i] /= self.band[self.slot(i, i)];
            let lo = i.saturating_sub(bw);
            let bi = b[i];
            for k in lo..i {
                b[k] -= self.band[self.slot(i, k)] * bi;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Right-preconditioned BiCGSTAB for `A x = b`.
///
/// `apply` computes `A v`, `precondition` applies an approximate inverse.
/// Iterates until the true relative residual falls below `tol`; the caller
/// decides whether the returned residual is acceptable.
pub fn bicgstab<A, P>(apply: A, precondition: P, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> IterativeStats
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return IterativeStats { iterations: 0, relative_residual: 0.0 };
    }
    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let residual = |x: &[f64], r: &mut [f64], tmp: &mut [f64]| {
        apply(x, tmp);
        for k in 0..n {
            r[k] = b[k] - tmp[k];
        }
        norm(r) / bnorm
    };
    let mut rel = residual(x, &mut r, &mut tmp);
    let mut iterations = 0;
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    // Restart from the true residual when the recurrence stagnates or breaks down.
    'restart: while rel > tol && iterations < max_iter {
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        v.fill(0.0);
        p.fill(0.0);
        while iterations < max_iter {
            iterations += 1;
            let rho_new = dot(&r0, &r);
            if rho_new.abs() < 1e-300 {
                rel = residual(x, &mut r, &mut tmp);
                continue 'restart;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for k in 0..n {
                p[k] = r[k] + beta * (p[k] - omega * v[k]);
            }
            precondition(&p, &mut phat);
            apply(&phat, &mut v);
            let r0v = dot(&r0, &v);
            if r0v.abs() < 1e-300 {
                rel = residual(x, &mut r, &mut tmp);
                continue 'restart;
            }
            alpha = rho / r0v;
            for k in 0..n {
                s[k] = r[k] - alpha * v[k];
            }
            if norm(&s) / bnorm <= tol * 0.1 {
                for k in 0..n {
                    x[k] += alpha * phat[k];
                }
                rel = residual(x, &mut r, &mut tmp);
                if rel <= tol {
                    break 'restart;
                }
                continue 'restart;
            }
            precondition(&s, &mut shat);
            apply(&shat, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for k in 0..n {
                x[k] += alpha * phat[k] + omega * shat[k];
                r[k] = s[k] - omega * t[k];
            }
            if norm(&r) / bnorm <= tol * 0.1 || omega == 0.0 {
                rel = residual(x, &mut r, &mut tmp);
                if rel <= tol {
                    break 'restart;
                }
                continue 'restart;
            }
        }
        rel = residual(x, &mut r, &mut tmp);
    }
    IterativeStats { iterations, relative_residual: rel }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> BandedSpd {
        let mut a = BandedSpd::new(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0 + shift);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn banded_cholesky_solves() {
        let n = 50;
        let a = laplacian_1d(n, 0.1);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul(&x_true, &mut b);
        let f = a.factor().unwrap();
        f.solve(&mut b);
        for (x, t) in b.iter().zip(&x_true) {
            assert!((x - t).abs() < 1e-12);
        }
    }

    #[test]
    fn banded_cholesky_rejects_indefinite() {
        let mut a = BandedSpd::new(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        assert!(a.factor().is_err());
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let n = 200;
        // Upwinded convection-diffusion: nonsymmetric, diagonally dominant.
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 4.0 * x[i] - 2.5 * l - 0.5 * r;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
        let mut x = vec![0.0; n];
        let stats = bicgstab(apply, |r: &[f64], z: &mut [f64]| z.copy_from_slice(r), &b, &mut x, 1e-13, 1000);
        assert!(stats.relative_residual <= 1e-13, "{stats:?}");
    }
}
