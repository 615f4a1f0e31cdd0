//! Gibbs energy and per-step invariant monitoring.

use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, Grid};
use crate::hydro::FlowState;
use crate::mixture::{SpeciesSet, DEGENERACY_THRESHOLD};
use crate::rd_solver::{apply_species_bcs, SpeciesField};
use crate::stefan_maxwell::CoefficientWorkspace;

/// Regularization of the Gibbs energy and its reference composition.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsParams {
    eta: f64,
    inlet: Vec<f64>,
}

impl GibbsParams {
    pub fn new(eta: f64, inlet: Vec<f64>) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::ConfigInvalid(format!("eta must lie in (0, 1), got {eta}")));
        }
        Ok(Self { eta, inlet })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn inlet(&self) -> &[f64] {
        &self.inlet
    }
}

pub const DEFAULT_ETA: f64 = 1e-8;

/// `g^η(Y) = Σ_j Z_j [log(Z_j / Σ Z) - log(Z^u_j / Σ Z^u)]`,
/// `Z_j = (Y_j + η) / M_j`. Small negative undershoots are read as zero.
pub fn gibbs_density(species: &SpeciesSet, y: &[f64], params: &GibbsParams) -> f64 {
    let m = species.molar_masses();
    let z = |v: &[f64], j: usize| (v[j].max(0.0) + params.eta) / m[j];
    let n = species.len();
    let zs: f64 = (0..n).map(|j| z(y, j)).sum();
    let zu: f64 = (0..n).map(|j| z(&params.inlet, j)).sum();
    (0..n)
        .map(|j| {
            let (a, b) = (z(y, j), z(&params.inlet, j));
            a * ((a / zs).ln() - (b / zu).ln())
        })
        .sum()
}

/// Midpoint-rule integral of [`gibbs_density`] over the grid.
pub fn gibbs_energy(grid: &Grid, species: &SpeciesSet, field: &SpeciesField, params: &GibbsParams) -> f64 {
    (0..field.cells()).map(|c| gibbs_density(species, field.cell(c), params)).sum::<f64>() * grid.cell_area()
}

/// Dissipation `-Σ_{X_i>δ} F_i · ∇X_i / (M_i X_i)` at one point, with
/// `grad` holding `(∂_x Y_i, ∂_z Y_i)` per species. Agrees with
/// [`dissipation_rate`] on the simplex.
fn point_dissipation(ws: &mut CoefficientWorkspace, a: &mut [f64], species: &SpeciesSet, y: &[f64], grad: &[[f64; 2]]) -> Result<f64> {
    let n = y.len();
    ws.flux_coefficients(species, y, a)?;
    let m = species.molar_masses();
    let y_m: f64 = (0..n).map(|l| y[l] / m[l]).sum();
    let mixed = [0, 1].map(|d| (0..n).map(|l| grad[l][d] / m[l]).sum::<f64>());
    let mut total = 0.0;
    for i in 0..n {
        let x = y[i] / (m[i] * y_m);
        if x <= DEGENERACY_THRESHOLD {
            continue;
        }
        for d in 0..2 {
            let flux: f64 = -(0..n).map(|j| a[i * n + j] * grad[j][d]).sum::<f64>();
            let gx = grad[i][d] / (m[i] * y_m) - y[i] / (m[i] * y_m * y_m) * mixed[d];
            total -= flux * gx / (m[i] * x);
        }
    }
    Ok(total)
}

/// Domain integral of the entropy dissipation, with central-difference
/// gradients. Each cell composition is projected onto the simplex first
/// and absent species contribute no gradient.
pub fn dissipation_integral(grid: &Grid, boundary: BoundaryKind, species: &SpeciesSet, field: &SpeciesField) -> Result<f64> {
    let n = field.species_count();
    let gh = apply_species_bcs(grid, boundary, field);
    let mut ws = CoefficientWorkspace::new(n);
    let mut a = vec![0.0; n * n];
    let mut y = vec![0.0; n];
    let mut grad = vec![[0.0; 2]; n];
    let mut total = 0.0;
    for j in 0..grid.nz {
        for i in 0..grid.nx {
            let raw = field.cell(grid.cell(i, j));
            for (v, r) in y.iter_mut().zip(raw) {
                *v = r.clamp(0.0, 1.0);
            }
            let s: f64 = y.iter().sum();
            y.iter_mut().for_each(|v| *v /= s);
            let (ii, jj) = (i as isize, j as isize);
            for k in 0..n {
                grad[k] = if y[k] <= DEGENERACY_THRESHOLD {
                    [0.0, 0.0]
                } else {
                    [
                        (gh.at(ii + 1, jj)[k] - gh.at(ii - 1, jj)[k]) / (2.0 * grid.dx),
                        (gh.at(ii, jj + 1)[k] - gh.at(ii, jj - 1)[k]) / (2.0 * grid.dz),
                    ]
                };
            }
            total += point_dissipation(&mut ws, &mut a, species, &y, &grad)?;
        }
    }
    Ok(total * grid.cell_area())
}

/// Column names of the time-series CSV, in order.
pub const CSV_COLUMNS: [&str; 10] =
    ["step", "time", "minY", "maxY", "maxSumDeviation", "minTheta", "maxDivV", "gibbsEnergy", "dissipationIntegral", "stepAccepted"];

/// Monitored quantities after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantReport {
    pub step: usize,
    pub time: f64,
    pub min_y: f64,
    pub max_y: f64,
    pub max_sum_deviation: f64,
    pub min_theta: f64,
    pub max_div_v: f64,
    pub gibbs_energy: f64,
    pub dissipation_integral: f64,
    pub step_accepted: bool,
}

impl InvariantReport {
    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.step,
            self.time,
            self.min_y,
            self.max_y,
            self.max_sum_deviation,
            self.min_theta,
            self.max_div_v,
            self.gibbs_energy,
            self.dissipation_integral,
            self.step_accepted
        )
    }

    pub fn is_finite(&self) -> bool {
        [self.time, self.min_y, self.max_y, self.max_sum_deviation, self.min_theta, self.max_div_v, self.gibbs_energy, self.dissipation_integral]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Gathers every monitored quantity for the current state. `step`, `time`
/// and `step_accepted` are left for the caller to fill in.
pub fn invariant_report(
    grid: &Grid,
    boundary: BoundaryKind,
    species: &SpeciesSet,
    params: &GibbsParams,
    state: &FlowState,
    field: &SpeciesField,
) -> Result<InvariantReport> {
    Ok(InvariantReport {
        step: 0,
        time: 0.0,
        min_y: field.min(),
        max_y: field.max(),
        max_sum_deviation: field.max_sum_deviation(),
        min_theta: state.min_theta(),
        max_div_v: state.velocity.max_divergence(grid),
        gibbs_energy: gibbs_energy(grid, species, field, params),
        dissipation_integral: dissipation_integral(grid, boundary, species, field)?,
        step_accepted: true,
    })
}
