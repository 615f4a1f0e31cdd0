//! Stefan–Maxwell linear systems.
//!
//! With `B(Y)` the singular Stefan–Maxwell matrix
//!
//! ```text
//! B_ij = -d'_ij Y_i Y_j  (i ≠ j),     B_ii = Σ_{k≠i} d'_ik Y_i Y_k
//! ```
//!
//! and `γ = min d'_ij`, the regularized matrix `C = B + γ Y Yᵀ` is symmetric
//! positive definite whenever every `Y_i > 0`. Rewriting the system for the
//! fluxes `F_i = Y_i V_i` gives an invertible `N×N` system for every
//! `Y ≥ 0, Y ≠ 0`:
//!
//! ```text
//! (Σ_{j≠i} d'_ij Y_j + γ Y_i) F_i - Y_i Σ_{j≠i} (d'_ij - γ) F_j = P_i
//! ```
//!
//! which is what [`solve_fluxes`] solves. Summing its rows gives
//! `γ (Σ Y)(Σ F) = Σ P`, so the fluxes balance exactly when the driving
//! vectors do.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mixture::{grad_mole_from_mass, molar_sum, mole_fractions, SpeciesSet, DEGENERACY_THRESHOLD};

/// Acceptance threshold for the relative residual of the dense solves.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// The singular matrix `B(Y)` and its regularization `C(Y) = B + γ Y Yᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmMatrix {
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub gamma: f64,
}

/// Result of a flux solve. Rows are species, columns spatial directions.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSolve {
    pub fluxes: DMatrix<f64>,
    /// Diffusion velocities `V_i = F_i / Y_i`, only when every species is active.
    pub velocities: Option<DMatrix<f64>>,
    /// `Y_i > δ` per species.
    pub active: Vec<bool>,
}

/// Assembles `B(Y)` and `C(Y)`.
///
/// The diagonal of `B` is formed as the negated sum of its row so that row
/// and column sums vanish up to a single rounding.
pub fn assemble(species: &SpeciesSet, y: &[f64]) -> SmMatrix {
    let n = species.len();
    assert_eq!(y.len(), n, "composition length must match the species count");
    let gamma = species.gamma();
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                b[(i, j)] = -species.d_prime(i, j) * y[i] * y[j];
            }
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| b[(i, j)]).sum();
        b[(i, i)] = -off;
    }
    let c = DMatrix::from_fn(n, n, |i, j| b[(i, j)] + gamma * y[i] * y[j]);
    SmMatrix { b, c, gamma }
}

/// Solves `C(Y) V = P` by Cholesky factorization. Requires every `Y_i > δ`.
///
/// When `Σ P_i = 0` the solution also satisfies `Σ Y_i V_i = 0` and
/// `B(Y) V = P`.
pub fn solve_velocities(species: &SpeciesSet, y: &[f64], p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    assert_eq!(p.nrows(), species.len(), "driving vectors must have one row per species");
    if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| !(**v > DEGENERACY_THRESHOLD)) {
        return Err(Error::NotStrictlyPositive { index, value });
    }
    let sm = assemble(species, y);
    let chol = sm
        .c
        .clone()
        .cholesky()
        .ok_or_else(|| Error::LinearSolveFailed("C(Y) is not positive definite".into()))?;
    let v = chol.solve(p);
    check_residual(&sm.c, &v, p)?;
    Ok(v)
}

fn check_residual(a: &DMatrix<f64>, x: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<()> {
    let r = a * x - rhs;
    let scale = (a.norm() * x.norm()).max(rhs.norm());
    if scale == 0.0 {
        return Ok(());
    }
    let rel = r.norm() / scale;
    if rel.is_finite() && rel <= RESIDUAL_TOLERANCE {
        Ok(())
    } else {
        Err(Error::LinearSolveFailed(format!("relative residual {rel:e}")))
    }
}

fn check_nonnegative(y: &[f64]) -> Result<f64> {
    if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::InvalidComposition(format!("Y_{} = {v} is negative", i + 1)));
    }
    let sum: f64 = y.iter().sum();
    if sum <= DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateComposition { sum });
    }
    Ok(sum)
}

/// Mass fractions with every entry at or below `δ` replaced by zero.
fn effective(y: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let active: Vec<bool> = y.iter().map(|&v| v > DEGENERACY_THRESHOLD).collect();
    let ye = y.iter().zip(&active).map(|(&v, &a)| if a { v } else { 0.0 }).collect();
    (ye, active)
}

/// Solves the invertible flux system for arbitrary driving vectors `P`.
///
/// Inactive species (`Y_i ≤ δ`) decouple as `F_i = P_i / S_i` with
/// `S_i = Σ_{j active} d'_ij Y_j`; the active block is then solved with a
/// pivoted LU factorization.
pub fn solve_fluxes(species: &SpeciesSet, y: &[f64], p: &DMatrix<f64>) -> Result<FluxSolve> {
    let n = species.len();
    assert_eq!(y.len(), n, "composition length must match the species count");
    assert_eq!(p.nrows(), n, "driving vectors must have one row per species");
    check_nonnegative(y)?;
    let (ye, active) = effective(y);
    let act: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
    if act.is_empty() {
        return Err(Error::DegenerateComposition { sum: y.iter().sum() });
    }
    let dims = p.ncols();
    let gamma = species.gamma();
    let mut f = DMatrix::zeros(n, dims);

    for i in (0..n).filter(|&i| !active[i]) {
        let s: f64 = act.iter().map(|&j| species.d_prime(i, j) * ye[j]).sum();
        for l in 0..dims {
            f[(i, l)] = p[(i, l)] / s;
        }
    }

    let k = act.len();
    let mut a = DMatrix::zeros(k, k);
    let mut rhs = DMatrix::zeros(k, dims);
    for (r, &i) in act.iter().enumerate() {
        let diag: f64 = act.iter().filter(|&&j| j != i).map(|&j| species.d_prime(i, j) * ye[j]).sum::<f64>() + gamma * ye[i];
        a[(r, r)] = diag;
        for (c, &j) in act.iter().enumerate() {
            if j != i {
                a[(r, c)] = -ye[i] * (species.d_prime(i, j) - gamma);
            }
        }
        for l in 0..dims {
            let coupling: f64 = (0..n)
                .filter(|&j| !active[j])
                .map(|j| (species.d_prime(i, j) - gamma) * f[(j, l)])
                .sum();
            rhs[(r, l)] = p[(i, l)] + ye[i] * coupling;
        }
    }
    let sol = a
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LinearSolveFailed("flux system is singular".into()))?;
    check_residual(&a, &sol, &rhs)?;
    for (r, &i) in act.iter().enumerate() {
        for l in 0..dims {
            f[(i, l)] = sol[(r, l)];
        }
    }

    let velocities = if k == n {
        Some(DMatrix::from_fn(n, dims, |i, l| f[(i, l)] / ye[i]))
    } else {
        None
    };
    Ok(FluxSolve { fluxes: f, velocities, active })
}

/// Closed-form fluxes for three species, valid when `Σ P_i = 0`.
///
/// With `ρ̃ = d'_13 d'_23 Y_3 + d'_12 d'_13 Y_1 + d'_12 d'_23 Y_2` and
/// `w = (d'_23, d'_13, d'_12)`:
///
/// `F_k = (w_k P_k - Y_k (w · P) / Σ Y) / ρ̃`.
pub fn three_species_fluxes(species: &SpeciesSet, y: &[f64], p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if species.len() != 3 {
        return Err(Error::InvalidSpecies(format!("closed form needs 3 species, got {}", species.len())));
    }
    assert_eq!(y.len(), 3, "composition length must match the species count");
    assert_eq!(p.nrows(), 3, "driving vectors must have one row per species");
    let sum = check_nonnegative(y)?;
    let (d12, d13, d23) = (species.d_prime(0, 1), species.d_prime(0, 2), species.d_prime(1, 2));
    let rho = d13 * d23 * y[2] + d12 * d13 * y[0] + d12 * d23 * y[1];
    let floor = DEGENERACY_THRESHOLD * species.d_prime_low().powi(2);
    if !(rho > floor) {
        return Err(Error::DegenerateComposition { sum });
    }
    let w = [d23, d13, d12];
    Ok(DMatrix::from_fn(3, p.ncols(), |k, l| {
        let wp = w[0] * p[(0, l)] + w[1] * p[(1, l)] + w[2] * p[(2, l)];
        (w[k] * p[(k, l)] - y[k] * wp / sum) / rho
    }))
}

/// Driving vectors `P_i = -Y_M² ∇X_i` for the given mass-fraction gradients.
pub fn driving_vectors(species: &SpeciesSet, y: &[f64], grad_y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gx = grad_mole_from_mass(species, y, grad_y)?;
    let y_m = molar_sum(species, y);
    Ok(gx * (-y_m * y_m))
}

/// Diffusion coefficients `a_ij(Y)` with `F_i = -Σ_j a_ij ∇Y_j`.
///
/// The inverse coefficients `f_ij` come from `N` solves of the flux system
/// with canonical right-hand sides, then
/// `a_ij = f_ij Y_M / M_j - Σ_ℓ Y_ℓ f_iℓ / (M_j M_ℓ)`.
/// Column sums `Σ_i a_ij` vanish for every `Y ≥ 0, Y ≠ 0`.
pub fn flux_coefficients(species: &SpeciesSet, y: &[f64]) -> Result<DMatrix<f64>> {
    let n = species.len();
    let solve = solve_fluxes(species, y, &DMatrix::identity(n, n))?;
    let f = solve.fluxes;
    let (ye, _) = effective(y);
    let m = species.molar_masses();
    let y_m = molar_sum(species, &ye);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let mixed: f64 = (0..n).map(|l| ye[l] * f[(i, l)] / m[l]).sum();
        for j in 0..n {
            a[(i, j)] = (f[(i, j)] * y_m - mixed) / m[j];
        }
    }
    Ok(a)
}

/// Reusable buffers for evaluating [`flux_coefficients`] many times, as the
/// grid solvers do once per face and step. Results agree with
/// [`flux_coefficients`] up to rounding.
#[derive(Debug, Clone)]
pub struct CoefficientWorkspace {
    n: usize,
    ye: Vec<f64>,
    active: Vec<usize>,
    inactive: Vec<usize>,
    /// Flux solve with identity driving vectors, row-major `N×N`.
    f: Vec<f64>,
    lu: Vec<f64>,
    a: Vec<f64>,
    rhs: Vec<f64>,
    x: Vec<f64>,
}

impl CoefficientWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            ye: vec![0.0; n],
            active: Vec::with_capacity(n),
            inactive: Vec::with_capacity(n),
            f: vec![0.0; n * n],
            lu: vec![0.0; n * n],
            a: vec![0.0; n * n],
            rhs: vec![0.0; n * n],
            x: vec![0.0; n * n],
        }
    }

    /// Writes `a_ij` row-major into `out` (length `N²`).
    pub fn flux_coefficients(&mut self, species: &SpeciesSet, y: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n;
        assert_eq!(species.len(), n, "workspace built for a different species count");
        assert_eq!(y.len(), n, "composition length must match the species count");
        assert_eq!(out.len(), n * n, "output must hold N² coefficients");
        check_nonnegative(y)?;
        self.active.clear();
        self.inactive.clear();
        for i in 0..n {
            if y[i] > DEGENERACY_THRESHOLD {
                self.ye[i] = y[i];
                self.active.push(i);
            } else {
                self.ye[i] = 0.0;
                self.inactive.push(i);
            }
        }
        if self.active.is_empty() {
            return Err(Error::DegenerateComposition { sum: y.iter().sum() });
        }
        let gamma = species.gamma();
        let ye = &self.ye;
        self.f.iter_mut().for_each(|v| *v = 0.0);
        for &i in &self.inactive {
            let s: f64 = self.active.iter().map(|&j| species.d_prime(i, j) * ye[j]).sum();
            self.f[i * n + i] = 1.0 / s;
        }

        // Active block with one right-hand side per species.
        let k = self.active.len();
        for (r, &i) in self.active.iter().enumerate() {
            let mut diag = gamma * ye[i];
            for (c, &j) in self.active.iter().enumerate() {
                if j != i {
                    diag += species.d_prime(i, j) * ye[j];
                    self.a[r * k + c] = -ye[i] * (species.d_prime(i, j) - gamma);
                }
            }
            self.a[r * k + r] = diag;
            for l in 0..n {
                let coupling = if self.inactive.contains(&l) { (species.d_prime(i, l) - gamma) * self.f[l * n + l] } else { 0.0 };
                self.rhs[r * n + l] = if l == i { 1.0 } else { 0.0 } + ye[i] * coupling;
            }
        }
        self.lu[..k * k].copy_from_slice(&self.a[..k * k]);
        self.x[..k * n].copy_from_slice(&self.rhs[..k * n]);
        let (lu, x) = (&mut self.lu, &mut self.x);
        for col in 0..k {
            let piv = (col..k).max_by(|&p, &q| lu[p * k + col].abs().total_cmp(&lu[q * k + col].abs())).expect("nonempty");
            if lu[piv * k + col] == 0.0 {
                return Err(Error::LinearSolveFailed("flux system is singular".into()));
            }
            if piv != col {
                for c in 0..k {
                    lu.swap(piv * k + c, col * k + c);
                }
                for l in 0..n {
                    x.swap(piv * n + l, col * n + l);
                }
            }
            let d = lu[col * k + col];
            for r in col + 1..k {
                let m = lu[r * k + col] / d;
                if m != 0.0 {
                    for c in col..k {
                        lu[r * k + c] -= m * lu[col * k + c];
                    }
                    for l in 0..n {
                        x[r * n + l] -= m * x[col * n + l];
                    }
                }
            }
        }
        for r in (0..k).rev() {
            for l in 0..n {
                let mut v = x[r * n + l];
                for c in r + 1..k {
                    v -= lu[r * k + c] * x[c * n + l];
                }
                x[r * n + l] = v / lu[r * k + r];
            }
        }
        let (mut rn, mut an, mut xn, mut bn) = (0.0, 0.0, 0.0, 0.0);
        for r in 0..k {
            for c in 0..k {
                an += self.a[r * k + c].powi(2);
            }
            for l in 0..n {
                let ax: f64 = (0..k).map(|c| self.a[r * k + c] * x[c * n + l]).sum();
                rn += (ax - self.rhs[r * n + l]).powi(2);
                xn += x[r * n + l].powi(2);
                bn += self.rhs[r * n + l].powi(2);
            }
        }
        let scale = (an * xn).sqrt().max(bn.sqrt());
        let rel = rn.sqrt() / scale;
        if !(rel.is_finite() && rel <= RESIDUAL_TOLERANCE) {
            return Err(Error::LinearSolveFailed(format!("relative residual {rel:e}")));
        }
        for (r, &i) in self.active.iter().enumerate() {
            self.f[i * n..(i + 1) * n].copy_from_slice(&x[r * n..(r + 1) * n]);
        }

        let m = species.molar_masses();
        let y_m: f64 = (0..n).map(|l| ye[l] / m[l]).sum();
        for i in 0..n {
            let row = &self.f[i * n..(i + 1) * n];
            let mixed: f64 = (0..n).map(|l| ye[l] * row[l] / m[l]).sum();
            for j in 0..n {
                out[i * n + j] = (row[j] * y_m - mixed) / m[j];
            }
        }
        Ok(())
    }
}

/// Generalized fluxes `F̃_i = -Σ_j a_ij(Y) ∇Y_j`.
///
/// They sum to zero for any gradient and coincide with the Stefan–Maxwell
/// fluxes when `Σ Y_i = 1`.
pub fn generalized_fluxes(species: &SpeciesSet, y: &[f64], grad_y: &DMatrix<f64>) -> Result<FluxSolve> {
    assert_eq!(grad_y.nrows(), species.len(), "gradient rows must match the species count");
    let a = flux_coefficients(species, y)?;
    let fluxes = -(a * grad_y);
    let (ye, active) = effective(y);
    let velocities = if active.iter().all(|&a| a) {
        Some(DMatrix::from_fn(fluxes.nrows(), fluxes.ncols(), |i, l| fluxes[(i, l)] / ye[i]))
    } else {
        None
    };
    Ok(FluxSolve { fluxes, velocities, active })
}

/// Entropy dissipation `-Σ_{Y_i>0} F_i · ∇μ_i` with `∇μ_i = ∇X_i / (M_i X_i)`.
///
/// Requires `0 ≤ Y_i ≤ 1` and `|Σ Y_i - 1| ≤ 1e-8`.
pub fn dissipation_rate(species: &SpeciesSet, y: &[f64], grad_y: &DMatrix<f64>) -> Result<f64> {
    if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidComposition(format!("Y_{} = {v} outside [0, 1]", i + 1)));
    }
    let sum: f64 = y.iter().sum();
    if (sum - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidComposition(format!("mass fractions sum to {sum}")));
    }
    let flux = generalized_fluxes(species, y, grad_y)?.fluxes;
    let mole = mole_fractions(species, y)?;
    let gx = grad_mole_from_mass(species, y, grad_y)?;
    let mut total = 0.0;
    for i in 0..species.len() {
        let x = mole.x[i];
        if x <= DEGENERACY_THRESHOLD {
            continue;
        }
        let dot: f64 = flux.row(i).iter().zip(gx.row(i).iter()).map(|(f, g)| f * g).sum();
        total -= dot / (species.molar_mass(i) * x);
    }
    Ok(total)
}
