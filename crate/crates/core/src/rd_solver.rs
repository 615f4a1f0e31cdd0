//! Finite-volume discretization of the species equations
//!
//! `∂Y_i/∂t + (v·∇)Y_i + ∇·F_i - ε∇·(|∇Y|^{q-2}∇Y_i) = ω_i`
//!
//! with Stefan–Maxwell fluxes `F_i = -Σ_j a_ij(Y) ∇Y_j`.
//!
//! Diffusive fluxes are two-point face fluxes with `a_ij` evaluated at the
//! face-averaged composition, so every face flux telescopes and the species
//! sum of face fluxes vanishes exactly. A step is explicit in advection,
//! reaction and the q-Laplacian, and linearly implicit in diffusion with the
//! coefficients lagged at the old level.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, Grid, VelocityField};
use crate::kinetics::{extended_rates, RateModel};
use crate::linalg::{bicgstab, IterativeStats};
use crate::mixture::SpeciesSet;
use crate::stefan_maxwell::CoefficientWorkspace;

/// Relative residual the implicit species solve aims for.
pub const SOLVER_TOLERANCE: f64 = 1e-13;
/// Residual above which the implicit species solve counts as failed.
pub const SOLVER_ACCEPTANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 2000;

/// Mass fractions on the cell grid plus the inlet composition `Y^u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesField {
    n: usize,
    /// Cell-major storage: species `k` of cell `c` at `c * n + k`.
    y: Vec<f64>,
    inlet: Vec<f64>,
}

impl SpeciesField {
    /// Builds a field from cell-major values. The inlet must lie on the
    /// open simplex.
    pub fn new(n: usize, y: Vec<f64>, inlet: Vec<f64>) -> Result<Self> {
        if n == 0 || !y.len().is_multiple_of(n) {
            return Err(Error::InvalidComposition(format!("{} values do not split into {n} species", y.len())));
        }
        if inlet.len() != n {
            return Err(Error::InvalidComposition(format!("inlet has {} entries, expected {n}", inlet.len())));
        }
        if let Some(v) = inlet.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidComposition(format!("inlet mass fraction {v} is not positive")));
        }
        let sum: f64 = inlet.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidComposition(format!("inlet mass fractions sum to {sum}")));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidComposition("non-finite mass fraction".into()));
        }
        Ok(Self { n, y, inlet })
    }

    /// The same composition in every cell.
    pub fn uniform(grid: &Grid, composition: &[f64], inlet: Vec<f64>) -> Result<Self> {
        let y = composition.iter().copied().cycle().take(grid.cells() * composition.len()).collect();
        Self::new(composition.len(), y, inlet)
    }

    /// Samples `f(x, z)` at cell centers.
    pub fn from_fn(grid: &Grid, inlet: Vec<f64>, mut f: impl FnMut(f64, f64) -> Vec<f64>) -> Result<Self> {
        let n = inlet.len();
        let mut y = Vec::with_capacity(grid.cells() * n);
        for j in 0..grid.nz {
            for i in 0..grid.nx {
                let (x, z) = grid.center(i, j);
                let v = f(x, z);
                if v.len() != n {
                    return Err(Error::InvalidComposition(format!("initial composition has {} entries, expected {n}", v.len())));
                }
                y.extend(v);
            }
        }
        Self::new(n, y, inlet)
    }

    pub fn species_count(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> usize {
        self.y.len() / self.n
    }

    pub fn inlet(&self) -> &[f64] {
        &self.inlet
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.y
    }

    #[inline]
    pub fn cell(&self, c: usize) -> &[f64] {
        &self.y[c * self.n..(c + 1) * self.n]
    }

    /// Values of one species over all cells.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.y.iter().skip(k).step_by(self.n).copied().collect()
    }

    pub fn min(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.y.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_cells |Σ_i Y_i - 1|`.
    pub fn max_sum_deviation(&self) -> f64 {
        self.y.chunks(self.n).map(|c| (c.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `∫ Y_i` by the midpoint rule, per species.
    pub fn total_mass(&self, grid: &Grid) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for c in self.y.chunks(self.n) {
            for (t, v) in m.iter_mut().zip(c) {
                *t += v;
            }
        }
        m.iter().map(|t| t * grid.cell_area()).collect()
    }
}

/// Parameters of the q-Laplacian regularization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationParams {
    pub epsilon: f64,
    pub q: f64,
}

impl RegularizationParams {
    pub fn new(epsilon: f64, q: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::ConfigInvalid(format!("epsilon must be nonnegative, got {epsilon}")));
        }
        if !(q > 2.0 && q.is_finite()) {
            return Err(Error::ConfigInvalid(format!("q must exceed 2, got {q}")));
        }
        Ok(Self { epsilon, q })
    }

    pub fn none() -> Self {
        Self { epsilon: 0.0, q: 4.0 }
    }
}

impl Default for RegularizationParams {
    fn default() -> Self {
        Self::none()
    }
}

/// Acceptance thresholds of a species step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub positivity: f64,
    pub sum: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { positivity: 1e-10, sum: 1e-8 }
    }
}

/// Species values padded with one layer of ghost cells.
#[derive(Debug, Clone)]
pub struct GhostedField {
    n: usize,
    nx: usize,
    nz: usize,
    data: Vec<f64>,
}

impl GhostedField {
    /// Value at cell `(i, j)` where `-1 ≤ i ≤ nx`, `-1 ≤ j ≤ nz`.
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> &[f64] {
        let s = ((j + 1) as usize * (self.nx + 2) + (i + 1) as usize) * self.n;
        &self.data[s..s + self.n]
    }

    #[inline]
    fn at_mut(&mut self, i: isize, j: isize) -> &mut [f64] {
        let s = ((j + 1) as usize * (self.nx + 2) + (i + 1) as usize) * self.n;
        &mut self.data[s..s + self.n]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.nz)
    }
}

/// Fills ghost cells: the inlet ghost is `2 Y^u - Y` so the face value is
/// `Y^u`; every other side mirrors the interior, giving zero normal gradient.
pub fn apply_species_bcs(grid: &Grid, boundary: BoundaryKind, field: &SpeciesField) -> GhostedField {
    let n = field.n;
    let (nx, nz) = (grid.nx as isize, grid.nz as isize);
    let mut g = GhostedField { n, nx: grid.nx, nz: grid.nz, data: vec![0.0; (grid.nx + 2) * (grid.nz + 2) * n] };
    for j in 0..nz {
        for i in 0..nx {
            g.at_mut(i, j).copy_from_slice(field.cell(grid.cell(i as usize, j as usize)));
        }
    }
    for j in 0..nz {
        let west = g.at(0, j).to_vec();
        g.at_mut(-1, j).copy_from_slice(&west);
        let east = g.at(nx - 1, j).to_vec();
        g.at_mut(nx, j).copy_from_slice(&east);
    }
    for i in 0..nx {
        let top = g.at(i, nz - 1).to_vec();
        g.at_mut(i, nz).copy_from_slice(&top);
        let bottom = g.at(i, 0).to_vec();
        let ghost: Vec<f64> = match boundary {
            BoundaryKind::Channel => bottom.iter().zip(&field.inlet).map(|(y, u)| 2.0 * u - y).collect(),
            BoundaryKind::ClosedBox => bottom,
        };
        g.at_mut(i, -1).copy_from_slice(&ghost);
    }
    g
}

/// Stefan–Maxwell coefficient blocks on every face that carries a
/// diffusive flux: interior faces, plus the inlet in a channel.
#[derive(Debug, Clone)]
struct FaceCoefficients {
    n: usize,
    /// Vertical faces, indexed like `u`; wall faces stay zero.
    x: Vec<f64>,
    /// Horizontal faces, indexed like `w`; the outlet stays zero.
    z: Vec<f64>,
}

impl FaceCoefficients {
    #[inline]
    fn x_block(&self, f: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.x[f * nn..(f + 1) * nn]
    }

    #[inline]
    fn z_block(&self, f: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.z[f * nn..(f + 1) * nn]
    }
}

fn store_block(dst: &mut [f64], a: &DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..n {
            dst[i * n + j] = a[(i, j)];
        }
    }
}

fn face_coefficients(grid: &Grid, boundary: BoundaryKind, species: &SpeciesSet, field: &SpeciesField) -> Result<FaceCoefficients> {
    let n = field.n;
    let nn = n * n;
    let mut fc = FaceCoefficients { n, x: vec![0.0; grid.u_faces() * nn], z: vec![0.0; grid.w_faces() * nn] };
    let mut ws = CoefficientWorkspace::new(n);
    let mut mid = vec![0.0; n];
    for j in 0..grid.nz {
        for i in 1..grid.nx {
            let (l, r) = (field.cell(grid.cell(i - 1, j)), field.cell(grid.cell(i, j)));
            for k in 0..n {
                mid[k] = 0.5 * (l[k] + r[k]);
            }
            let f = grid.u_index(i, j);
            ws.flux_coefficients(species, &mid, &mut fc.x[f * nn..(f + 1) * nn])?;
        }
    }
    for j in 1..grid.nz {
        for i in 0..grid.nx {
            let (s, t) = (field.cell(grid.cell(i, j - 1)), field.cell(grid.cell(i, j)));
            for k in 0..n {
                mid[k] = 0.5 * (s[k] + t[k]);
            }
            let f = grid.w_index(i, j);
            ws.flux_coefficients(species, &mid, &mut fc.z[f * nn..(f + 1) * nn])?;
        }
    }
    if boundary == BoundaryKind::Channel {
        // The face value on the inlet is Y^u itself.
        let mut a = vec![0.0; nn];
        ws.flux_coefficients(species, &field.inlet, &mut a)?;
        for i in 0..grid.nx {
            let f = grid.w_index(i, 0);
            fc.z[f * nn..(f + 1) * nn].copy_from_slice(&a);
        }
    }
    Ok(fc)
}

/// The linear diffusion operator `L` with frozen face coefficients:
/// `(L Y)_P = Σ_f h_f⁻² A_f (Y_P - Y_nb)`, the inlet face contributing
/// `2 dz⁻² A_f (Y_P - Y^u)`.
struct DiffusionOperator<'a> {
    grid: &'a Grid,
    boundary: BoundaryKind,
    coeffs: FaceCoefficients,
    inlet: &'a [f64],
}

impl DiffusionOperator<'_> {
    /// Accumulates `scale * L_hom x` into `out`, where `L_hom` omits the
    /// inlet value `Y^u`.
    fn apply_homogeneous(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let g = self.grid;
        let n = self.coeffs.n;
        let (cx, cz) = (scale / (g.dx * g.dx), scale / (g.dz * g.dz));
        let mut diff = vec![0.0; n];
        for j in 0..g.nz {
            for i in 1..g.nx {
                let (l, r) = (g.cell(i - 1, j), g.cell(i, j));
                let a = self.coeffs.x_block(g.u_index(i, j));
                for k in 0..n {
                    diff[k] = x[r * n + k] - x[l * n + k];
                }
                for row in 0..n {
                    let s: f64 = (0..n).map(|col| a[row * n + col] * diff[col]).sum::<f64>() * cx;
                    out[r * n + row] += s;
                    out[l * n + row] -= s;
                }
            }
        }
        for j in 1..g.nz {
            for i in 0..g.nx {
                let (b, t) = (g.cell(i, j - 1), g.cell(i, j));
                let a = self.coeffs.z_block(g.w_index(i, j));
                for k in 0..n {
                    diff[k] = x[t * n + k] - x[b * n + k];
                }
                for row in 0..n {
                    let s: f64 = (0..n).map(|col| a[row * n + col] * diff[col]).sum::<f64>() * cz;
                    out[t * n + row] += s;
                    out[b * n + row] -= s;
                }
            }
        }
        if self.boundary == BoundaryKind::Channel {
            for i in 0..g.nx {
                let p = g.cell(i, 0);
                let a = self.coeffs.z_block(g.w_index(i, 0));
                for row in 0..n {
                    let s: f64 = (0..n).map(|col| a[row * n + col] * x[p * n + col]).sum();
                    out[p * n + row] += 2.0 * cz * s;
                }
            }
        }
    }

    /// Accumulates the inlet part `-scale * 2 dz⁻² A Y^u` of `L`.
    fn apply_inlet(&self, scale: f64, out: &mut [f64]) {
        if self.boundary != BoundaryKind::Channel {
            return;
        }
        let g = self.grid;
        let n = self.coeffs.n;
        let cz = 2.0 * scale / (g.dz * g.dz);
        for i in 0..g.nx {
            let p = g.cell(i, 0);
            let a = self.coeffs.z_block(g.w_index(i, 0));
            for row in 0..n {
                let s: f64 = (0..n).map(|col| a[row * n + col] * self.inlet[col]).sum();
                out[p * n + row] -= cz * s;
            }
        }
    }

    /// Per-cell `N×N` diagonal blocks of `I + dt L_hom`, inverted.
    fn block_jacobi(&self, dt: f64) -> Result<Vec<f64>> {
        let g = self.grid;
        let n = self.coeffs.n;
        let nn = n * n;
        let mut blocks = vec![0.0; g.cells() * nn];
        for c in 0..g.cells() {
            for k in 0..n {
                blocks[c * nn + k * n + k] = 1.0;
            }
        }
        let (cx, cz) = (dt / (g.dx * g.dx), dt / (g.dz * g.dz));
        let mut add = |c: usize, a: &[f64], s: f64| {
            for (d, v) in blocks[c * nn..(c + 1) * nn].iter_mut().zip(a) {
                *d += s * v;
            }
        };
        for j in 0..g.nz {
            for i in 1..g.nx {
                let a = self.coeffs.x_block(g.u_index(i, j));
                add(g.cell(i - 1, j), a, cx);
                add(g.cell(i, j), a, cx);
            }
        }
        for j in 1..g.nz {
            for i in 0..g.nx {
                let a = self.coeffs.z_block(g.w_index(i, j));
                add(g.cell(i, j - 1), a, cz);
                add(g.cell(i, j), a, cz);
            }
        }
        if self.boundary == BoundaryKind::Channel {
            for i in 0..g.nx {
                add(g.cell(i, 0), self.coeffs.z_block(g.w_index(i, 0)), 2.0 * cz);
            }
        }
        for c in 0..g.cells() {
            let m = DMatrix::from_row_slice(n, n, &blocks[c * nn..(c + 1) * nn]);
            let inv = m.try_inverse().ok_or_else(|| Error::LinearSolveFailed(format!("singular diagonal block in cell {c}")))?;
            store_block(&mut blocks[c * nn..(c + 1) * nn], &inv);
        }
        Ok(blocks)
    }
}

/// Discrete `∇·F_i` per cell (cell-major, `N` values per cell).
pub fn flux_divergence(grid: &Grid, boundary: BoundaryKind, species: &SpeciesSet, field: &SpeciesField) -> Result<Vec<f64>> {
    let op = DiffusionOperator { grid, boundary, coeffs: face_coefficients(grid, boundary, species, field)?, inlet: &field.inlet };
    let mut out = vec![0.0; field.y.len()];
    op.apply_homogeneous(&field.y, 1.0, &mut out);
    op.apply_inlet(1.0, &mut out);
    Ok(out)
}

/// Per-face gradient data for the q-Laplacian.
struct QFaces {
    /// `(cell_a, cell_b, spacing, κ_f, gradient)` with the flux `κ_f ∇Y`
    /// pointing from `a` to `b`; `cell_a` is `None` on the inlet.
    faces: Vec<(Option<usize>, usize, f64, f64, Vec<f64>)>,
    max_gradient: f64,
}

fn q_faces(grid: &Grid, boundary: BoundaryKind, field: &SpeciesField, reg: RegularizationParams) -> QFaces {
    let n = field.n;
    let g = apply_species_bcs(grid, boundary, field);
    // Central cell gradients, used for the tangential part of face gradients.
    let mut cg = vec![[0.0; 2]; grid.cells() * n];
    for j in 0..grid.nz as isize {
        for i in 0..grid.nx as isize {
            let c = grid.cell(i as usize, j as usize);
            for k in 0..n {
                cg[c * n + k] = [
                    (g.at(i + 1, j)[k] - g.at(i - 1, j)[k]) / (2.0 * grid.dx),
                    (g.at(i, j + 1)[k] - g.at(i, j - 1)[k]) / (2.0 * grid.dz),
                ];
            }
        }
    }
    let mut faces = Vec::new();
    let mut max_gradient = 0.0f64;
    let mut push = |a: Option<usize>, b: usize, h: f64, normal: Vec<f64>, tangential: Vec<f64>| {
        let norm2: f64 = normal.iter().chain(&tangential).map(|v| v * v).sum();
        let norm = norm2.sqrt();
        max_gradient = max_gradient.max(norm);
        let kappa = reg.epsilon * norm.powf(reg.q - 2.0);
        faces.push((a, b, h, kappa, normal));
    };
    for j in 0..grid.nz {
        for i in 1..grid.nx {
            let (l, r) = (grid.cell(i - 1, j), grid.cell(i, j));
            let normal = (0..n).map(|k| (field.cell(r)[k] - field.cell(l)[k]) / grid.dx).collect();
            let tangential = (0..n).map(|k| 0.5 * (cg[l * n + k][1] + cg[r * n + k][1])).collect();
            push(Some(l), r, grid.dx, normal, tangential);
        }
    }
    for j in 1..grid.nz {
        for i in 0..grid.nx {
            let (b, t) = (grid.cell(i, j - 1), grid.cell(i, j));
            let normal = (0..n).map(|k| (field.cell(t)[k] - field.cell(b)[k]) / grid.dz).collect();
            let tangential = (0..n).map(|k| 0.5 * (cg[b * n + k][0] + cg[t * n + k][0])).collect();
            push(Some(b), t, grid.dz, normal, tangential);
        }
    }
    if boundary == BoundaryKind::Channel {
        for i in 0..grid.nx {
            let p = grid.cell(i, 0);
            let normal = (0..n).map(|k| 2.0 * (field.cell(p)[k] - field.inlet[k]) / grid.dz).collect();
            let tangential = (0..n).map(|k| cg[p * n + k][0]).collect();
            push(None, p, grid.dz, normal, tangential);
        }
    }
    QFaces { faces, max_gradient }
}

/// Discrete `ε∇·(|∇Y|^{q-2}∇Y_i)` per cell.
pub fn q_laplacian_term(grid: &Grid, boundary: BoundaryKind, field: &SpeciesField, reg: RegularizationParams) -> Vec<f64> {
    let n = field.n;
    let mut out = vec![0.0; field.y.len()];
    if reg.epsilon == 0.0 {
        return out;
    }
    for (a, b, h, kappa, grad) in q_faces(grid, boundary, field, reg).faces {
        for k in 0..n {
            let flux = kappa * grad[k] / h;
            out[b * n + k] -= flux;
            if let Some(a) = a {
                out[a * n + k] += flux;
            }
        }
    }
    out
}

/// First-order upwind `(v·∇)Y_i` per cell.
///
/// Written as `Σ_{inflow faces} |v·ν| h⁻¹ (Y_P - Y_nb)`; on the inlet the
/// upstream value is `Y^u`.
pub fn advection_term(grid: &Grid, boundary: BoundaryKind, v: &VelocityField, field: &SpeciesField) -> Vec<f64> {
    let n = field.n;
    let mut out = vec![0.0; field.y.len()];
    let ghost = apply_species_bcs(grid, boundary, field);
    for j in 0..grid.nz {
        for i in 0..grid.nx {
            let p = grid.cell(i, j);
            let yp = field.cell(p);
            let (ii, jj) = (i as isize, j as isize);
            let mut inflow = |rate: f64, nb: &[f64]| {
                if rate > 0.0 {
                    for k in 0..n {
                        out[p * n + k] += rate * (yp[k] - nb[k]);
                    }
                }
            };
            inflow(v.u[grid.u_index(i, j)] / grid.dx, ghost.at(ii - 1, jj));
            inflow(-v.u[grid.u_index(i + 1, j)] / grid.dx, ghost.at(ii + 1, jj));
            let south = if j == 0 && boundary == BoundaryKind::Channel { &field.inlet[..] } else { ghost.at(ii, jj - 1) };
            inflow(v.w[grid.w_index(i, j)] / grid.dz, south);
            inflow(-v.w[grid.w_index(i, j + 1)] / grid.dz, ghost.at(ii, jj + 1));
        }
    }
    out
}

/// Everything a species step needs besides the state.
#[derive(Debug, Clone, Copy)]
pub struct SpeciesProblem<'a> {
    pub grid: &'a Grid,
    pub boundary: BoundaryKind,
    pub species: &'a SpeciesSet,
    pub model: &'a dyn RateModel,
    pub reg: RegularizationParams,
    pub tol: Tolerances,
}

impl SpeciesProblem<'_> {
    /// Largest admissible explicit time step for the current state.
    pub fn max_dt(&self, field: &SpeciesField, v: &VelocityField) -> f64 {
        let g = self.grid;
        let h = g.dx.min(g.dz);
        let mut dt = f64::INFINITY;
        let speed = v.max_speed();
        if speed > 0.0 {
            dt = dt.min(0.5 * h / speed);
            // Keeps the explicit upwind update a convex combination.
            let inflow = v.max_inflow_rate(g);
            if inflow > 0.0 {
                dt = dt.min(1.0 / inflow);
            }
        }
        let lip = self.model.lipschitz();
        if lip > 0.0 {
            dt = dt.min(1.0 / lip);
        }
        if self.reg.epsilon > 0.0 {
            let gmax = q_faces(g, self.boundary, field, self.reg).max_gradient;
            if gmax > 0.0 {
                dt = dt.min(0.25 * h * h / (self.reg.epsilon * gmax.powf(self.reg.q - 2.0)));
            }
        }
        dt
    }

    /// Advances the species by `dt` given velocity `v` and cell
    /// temperatures `theta`.
    pub fn step(&self, field: &SpeciesField, v: &VelocityField, theta: &[f64], dt: f64) -> Result<SpeciesField> {
        self.step_with_stats(field, v, theta, dt).map(|(f, _)| f)
    }

    pub fn step_with_stats(&self, field: &SpeciesField, v: &VelocityField, theta: &[f64], dt: f64) -> Result<(SpeciesField, IterativeStats)> {
        let g = self.grid;
        let n = field.n;
        assert_eq!(n, self.species.len(), "field and species set disagree on N");
        assert_eq!(n, self.model.species_count(), "field and rate model disagree on N");
        assert_eq!(theta.len(), g.cells(), "temperature must be cell-centered");
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::StepRejected(format!("time step {dt} is not positive")));
        }

        let mut rhs = field.y.clone();
        let adv = advection_term(g, self.boundary, v, field);
        for (r, a) in rhs.iter_mut().zip(&adv) {
            *r -= dt * a;
        }
        for c in 0..g.cells() {
            let w = extended_rates(self.model, theta[c], field.cell(c));
            for k in 0..n {
                rhs[c * n + k] += dt * w[k];
            }
        }
        if self.reg.epsilon > 0.0 {
            let ql = q_laplacian_term(g, self.boundary, field, self.reg);
            for (r, q) in rhs.iter_mut().zip(&ql) {
                *r += dt * q;
            }
        }

        let op = DiffusionOperator { grid: g, boundary: self.boundary, coeffs: face_coefficients(g, self.boundary, self.species, field)?, inlet: &field.inlet };
        op.apply_inlet(-dt, &mut rhs);
        let pre = op.block_jacobi(dt)?;
        let nn = n * n;
        let apply = |x: &[f64], y: &mut [f64]| {
            y.copy_from_slice(x);
            op.apply_homogeneous(x, dt, y);
        };
        let precondition = |r: &[f64], z: &mut [f64]| {
            for c in 0..g.cells() {
                let b = &pre[c * nn..(c + 1) * nn];
                for row in 0..n {
                    z[c * n + row] = (0..n).map(|col| b[row * n + col] * r[c * n + col]).sum();
                }
            }
        };
        let mut next = field.y.clone();
        let stats = bicgstab(apply, precondition, &rhs, &mut next, SOLVER_TOLERANCE, MAX_ITERATIONS);
        if !(stats.relative_residual <= SOLVER_ACCEPTANCE) {
            return Err(Error::LinearSolveFailed(format!(
                "species solve stalled at relative residual {:e} after {} iterations",
                stats.relative_residual, stats.iterations
            )));
        }

        let out = SpeciesField { n, y: next, inlet: field.inlet.clone() };
        let min = out.min();
        if !(min >= -self.tol.positivity) {
            return Err(Error::StepRejected(format!("mass fraction undershoot {min:e}")));
        }
        let dev = out.max_sum_deviation();
        if !(dev <= self.tol.sum) {
            return Err(Error::StepRejected(format!("mass fractions drift from one by {dev:e}")));
        }
        Ok((out, stats))
    }
}

/// One species step; see [`SpeciesProblem::step`].
pub fn step_species(problem: &SpeciesProblem<'_>, field: &SpeciesField, v: &VelocityField, theta: &[f64], dt: f64) -> Result<SpeciesField> {
    problem.step(field, v, theta, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{Chain, NoReaction};

    fn binary() -> SpeciesSet {
        SpeciesSet::from_scaled(vec![1.0, 1.0], DMatrix::from_element(2, 2, 2.0)).unwrap()
    }

    fn three() -> SpeciesSet {
        SpeciesSet::new(vec![1.0, 2.0, 3.0], DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.5, 1.0, 0.0, 2.0, 0.5, 2.0, 0.0]), 1.0).unwrap()
    }

    fn bumpy3(grid: &Grid) -> SpeciesField {
        SpeciesField::from_fn(grid, vec![0.5, 0.3, 0.2], |x, z| {
            let a = 0.35 + 0.15 * (3.0 * x).sin() * (2.0 * z).cos();
            let b = 0.3 + 0.1 * (5.0 * z).cos();
            vec![a, b, 1.0 - a - b]
        })
        .unwrap()
    }

    #[test]
    fn inlet_validation() {
        let g = Grid::new(2, 2, 1.0, 1.0).unwrap();
        assert!(SpeciesField::uniform(&g, &[0.5, 0.5], vec![0.0, 1.0]).is_err());
        assert!(SpeciesField::uniform(&g, &[0.5, 0.5], vec![0.6, 0.6]).is_err());
        assert!(SpeciesField::uniform(&g, &[0.5, 0.5], vec![0.5, 0.5]).is_ok());
        assert!(RegularizationParams::new(1e-3, 2.0).is_err());
        assert!(RegularizationParams::new(-1.0, 3.0).is_err());
    }

    #[test]
    fn inlet_ghost_reproduces_inlet_on_face() {
        let g = Grid::new(4, 3, 1.0, 1.0).unwrap();
        let f = bumpy3(&g);
        let gh = apply_species_bcs(&g, BoundaryKind::Channel, &f);
        for i in 0..4 {
            for k in 0..3 {
                assert_close!(0.5 * (gh.at(i, 0)[k] + gh.at(i, -1)[k]), f.inlet()[k], 1e-14);
                assert_eq!(gh.at(i, 3)[k], gh.at(i, 2)[k]);
            }
        }
        for j in 0..3 {
            assert_eq!(gh.at(-1, j), gh.at(0, j));
            assert_eq!(gh.at(4, j), gh.at(3, j));
        }
    }

    #[test]
    fn uniform_inlet_state_has_no_diffusion() {
        let g = Grid::new(6, 5, 1.0, 1.0).unwrap();
        let sp = three();
        let f = SpeciesField::uniform(&g, &[0.5, 0.3, 0.2], vec![0.5, 0.3, 0.2]).unwrap();
        for boundary in [BoundaryKind::Channel, BoundaryKind::ClosedBox] {
            let d = flux_divergence(&g, boundary, &sp, &f).unwrap();
            assert!(d.iter().all(|v| v.abs() < 1e-13));
        }
    }

    #[test]
    fn species_sum_of_divergences_vanishes() {
        let g = Grid::new(8, 7, 1.0, 1.2).unwrap();
        let sp = three();
        let f = bumpy3(&g);
        let d = flux_divergence(&g, BoundaryKind::Channel, &sp, &f).unwrap();
        for c in d.chunks(3) {
            assert!(c.iter().sum::<f64>().abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn binary_operator_is_scaled_laplacian() {
        let g = Grid::new(9, 6, 1.0, 0.7).unwrap();
        let f = SpeciesField::from_fn(&g, vec![0.5, 0.5], |x, z| {
            let a = 0.5 + 0.3 * (4.0 * x).sin() * (3.0 * z).cos();
            vec![a, 1.0 - a]
        })
        .unwrap();
        let d = flux_divergence(&g, BoundaryKind::ClosedBox, &binary(), &f).unwrap();
        let y1 = f.component(0);
        for j in 0..g.nz {
            for i in 0..g.nx {
                let c = g.cell(i, j);
                let at = |i: usize, j: usize| y1[g.cell(i, j)];
                let xm = if i > 0 { at(i - 1, j) } else { at(i, j) };
                let xp = if i + 1 < g.nx { at(i + 1, j) } else { at(i, j) };
                let zm = if j > 0 { at(i, j - 1) } else { at(i, j) };
                let zp = if j + 1 < g.nz { at(i, j + 1) } else { at(i, j) };
                let lap = (xm - 2.0 * at(i, j) + xp) / (g.dx * g.dx) + (zm - 2.0 * at(i, j) + zp) / (g.dz * g.dz);
                assert_close!(d[2 * c], -0.5 * lap, 1e-12);
            }
        }
    }

    #[test]
    fn q_laplacian_of_power_profiles() {
        let reg = RegularizationParams::new(1.0, 3.0).unwrap();
        // Y = x²: d/dx(|2x| 2x) = 8x, reproduced exactly in the interior.
        let g = Grid::new(40, 1, 1.0, 0.1).unwrap();
        let f = SpeciesField::from_fn(&g, vec![0.5, 0.5], |x, _| vec![x * x, 0.0]).unwrap();
        let t = q_laplacian_term(&g, BoundaryKind::ClosedBox, &f, reg);
        for i in 1..39 {
            let (x, _) = g.center(i, 0);
            assert_close!(t[2 * i], 8.0 * x, 1e-9);
        }
        // Y = x³: d/dx(9x⁴) = 36x³ at second order.
        let err = |nx: usize| {
            let g = Grid::new(nx, 1, 1.0, 0.1).unwrap();
            let f = SpeciesField::from_fn(&g, vec![0.5, 0.5], |x, _| vec![x * x * x, 0.0]).unwrap();
            let t = q_laplacian_term(&g, BoundaryKind::ClosedBox, &f, reg);
            (1..nx - 1).map(|i| (t[2 * i] - 36.0 * g.center(i, 0).0.powi(3)).abs()).fold(0.0, f64::max)
        };
        let order = (err(32) / err(64)).log2();
        assert!(order > 1.9, "order {order}");
        let none = q_laplacian_term(&g, BoundaryKind::ClosedBox, &f, RegularizationParams::none());
        assert!(none.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn upwind_advection_of_linear_profile() {
        let g = Grid::new(5, 10, 1.0, 1.0).unwrap();
        let v = VelocityField::lifted(&g);
        let s = 0.3;
        let f = SpeciesField::from_fn(&g, vec![0.5, 0.5], |_, z| vec![0.2 + s * z, 0.8 - s * z]).unwrap();
        let a = advection_term(&g, BoundaryKind::Channel, &v, &f);
        for j in 1..g.nz {
            for i in 0..g.nx {
                let c = g.cell(i, j);
                assert_close!(a[2 * c], s, 1e-12);
                assert_close!(a[2 * c + 1], -s, 1e-12);
            }
        }
        let still = advection_term(&g, BoundaryKind::Channel, &VelocityField::zeros(&g), &f);
        assert!(still.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn uniform_state_is_a_fixed_point() {
        let g = Grid::new(6, 6, 1.0, 1.0).unwrap();
        let sp = three();
        let model = NoReaction::new(3);
        let p = SpeciesProblem { grid: &g, boundary: BoundaryKind::ClosedBox, species: &sp, model: &model, reg: RegularizationParams::none(), tol: Tolerances::default() };
        let f = SpeciesField::uniform(&g, &[0.2, 0.3, 0.5], vec![0.2, 0.3, 0.5]).unwrap();
        let next = p.step(&f, &VelocityField::zeros(&g), &vec![0.0; g.cells()], 0.01).unwrap();
        for (a, b) in next.values().iter().zip(f.values()) {
            assert_close!(*a, *b, 1e-14);
        }
    }

    #[test]
    fn closed_box_conserves_mass_and_sum() {
        let g = Grid::new(12, 10, 1.0, 1.0).unwrap();
        let sp = three();
        let model = NoReaction::new(3);
        let p = SpeciesProblem { grid: &g, boundary: BoundaryKind::ClosedBox, species: &sp, model: &model, reg: RegularizationParams::none(), tol: Tolerances::default() };
        let mut f = bumpy3(&g);
        let m0 = f.total_mass(&g);
        for _ in 0..20 {
            f = p.step(&f, &VelocityField::zeros(&g), &vec![0.0; g.cells()], 5e-3).unwrap();
        }
        for (a, b) in f.total_mass(&g).iter().zip(&m0) {
            assert_close!(*a, *b, 1e-10);
        }
        assert!(f.max_sum_deviation() < 1e-10);
        assert!(f.min() > 0.0);
    }

    #[test]
    fn channel_step_with_reaction_keeps_invariants() {
        let g = Grid::new(10, 12, 1.0, 1.0).unwrap();
        let sp = three();
        let model = Chain::default();
        let p = SpeciesProblem { grid: &g, boundary: BoundaryKind::Channel, species: &sp, model: &model, reg: RegularizationParams::new(1e-3, 4.0).unwrap(), tol: Tolerances::default() };
        let mut f = bumpy3(&g);
        let v = VelocityField::lifted(&g);
        let theta: Vec<f64> = (0..g.cells()).map(|c| 2.0 * (c % 7) as f64).collect();
        for _ in 0..10 {
            let dt = p.max_dt(&f, &v).min(0.02);
            f = p.step(&f, &v, &theta, dt).unwrap();
        }
        assert!(f.max_sum_deviation() < 1e-10);
        assert!(f.min() >= -1e-10);
    }
}
