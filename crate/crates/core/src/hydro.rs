//! Boussinesq flow and temperature on the staggered grid.
//!
//! Momentum `∂v/∂t + (v·∇)v - Pr Δv + ∇p = e_n σ θ` is advanced by an
//! incremental pressure-correction projection: explicit upwind advection,
//! implicit viscous diffusion, a pure-Neumann pressure Poisson solve and a
//! velocity correction. Temperature `∂θ/∂t + (v·∇)θ - Δθ = -Σ h_i ω_i`
//! uses upwind advection, implicit diffusion and an explicit source.
//!
//! In a channel the horizontal velocity vanishes on the whole boundary, the
//! vertical velocity is one on inlet and outlet and has zero normal
//! derivative on the walls, so `e_n` satisfies every condition exactly. In a
//! closed box both components vanish on top and bottom.

use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, Grid, VelocityField};
use crate::kinetics::{heat_release, RateModel};
use crate::linalg::BandedSpd;
use crate::rd_solver::SpeciesField;

/// Relative residual above which the pressure solve is rejected.
pub const POISSON_TOLERANCE: f64 = 1e-10;
/// Temperature undershoot that rejects a step.
pub const THETA_TOLERANCE: f64 = 1e-10;

/// Velocity, pressure and temperature with the flow constants.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub velocity: VelocityField,
    /// Cell-centered pressure with zero mean.
    pub pressure: Vec<f64>,
    /// Cell-centered temperature.
    pub theta: Vec<f64>,
    pub prandtl: f64,
    pub sigma: f64,
}

impl FlowState {
    /// Base state `v = e_n` (channel) or `v = 0` (box), `p = 0`, `θ = 0`.
    pub fn at_rest(grid: &Grid, boundary: BoundaryKind, prandtl: f64, sigma: f64) -> Result<Self> {
        if !(prandtl > 0.0 && prandtl.is_finite()) {
            return Err(Error::ConfigInvalid(format!("Prandtl number must be positive, got {prandtl}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::ConfigInvalid(format!("buoyancy constant must be nonnegative, got {sigma}")));
        }
        Ok(Self {
            velocity: base_velocity(grid, boundary),
            pressure: vec![0.0; grid.cells()],
            theta: vec![0.0; grid.cells()],
            prandtl,
            sigma,
        })
    }

    pub fn min_theta(&self) -> f64 {
        self.theta.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The velocity that carries the boundary data: `e_n` or zero.
pub fn base_velocity(grid: &Grid, boundary: BoundaryKind) -> VelocityField {
    match boundary {
        BoundaryKind::Channel => VelocityField::lifted(grid),
        BoundaryKind::ClosedBox => VelocityField::zeros(grid),
    }
}

#[derive(Debug)]
struct Factors {
    dt: f64,
    u: Option<BandedSpd>,
    w: Option<BandedSpd>,
    theta: BandedSpd,
}

/// Advances [`FlowState`], caching factorizations of the constant
/// operators between steps of equal size.
#[derive(Debug)]
pub struct FlowStepper {
    grid: Grid,
    boundary: BoundaryKind,
    prandtl: f64,
    poisson: BandedSpd,
    factors: Option<Factors>,
}

impl FlowStepper {
    pub fn new(grid: Grid, boundary: BoundaryKind, prandtl: f64) -> Result<Self> {
        if !(prandtl > 0.0 && prandtl.is_finite()) {
            return Err(Error::ConfigInvalid(format!("Prandtl number must be positive, got {prandtl}")));
        }
        let poisson = poisson_matrix(&grid)?;
        Ok(Self { grid, boundary, prandtl, poisson, factors: None })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn boundary(&self) -> BoundaryKind {
        self.boundary
    }

    fn factors(&mut self, dt: f64) -> Result<&Factors> {
        if self.factors.as_ref().is_none_or(|f| f.dt != dt) {
            let nu = dt * self.prandtl;
            self.factors = Some(Factors {
                dt,
                u: u_matrix(&self.grid, nu)?,
                w: w_matrix(&self.grid, nu)?,
                theta: theta_matrix(&self.grid, self.boundary, dt)?,
            });
        }
        Ok(self.factors.as_ref().expect("just built"))
    }

    /// Largest time step the explicit advection tolerates.
    pub fn max_dt(&self, state: &FlowState) -> f64 {
        let speed = state.velocity.max_speed();
        if speed == 0.0 {
            return f64::INFINITY;
        }
        let mut dt = 0.5 * self.grid.dx.min(self.grid.dz) / speed;
        let inflow = state.velocity.max_inflow_rate(&self.grid);
        if inflow > 0.0 {
            dt = dt.min(1.0 / inflow);
        }
        dt
    }

    /// One projection step for velocity and pressure.
    pub fn step_flow(&mut self, state: &FlowState, dt: f64) -> Result<FlowState> {
        check_dt(dt)?;
        assert_eq!(state.prandtl, self.prandtl, "stepper built for a different Prandtl number");
        let g = self.grid;
        let v = &state.velocity;
        let p = &state.pressure;
        let nu = dt * state.prandtl;

        // Provisional velocity, solved for the increment so that boundary
        // data enter only through the explicit Laplacian.
        let mut star = v.clone();
        let (adv_u, adv_w) = momentum_advection(&g, v);
        let (lap_u, lap_w) = velocity_laplacian(&g, v);
        let factors = self.factors(dt)?;
        if let Some(fu) = &factors.u {
            let mut rhs = vec![0.0; fu.size()];
            for j in 0..g.nz {
                for i in 1..g.nx {
                    let f = g.u_index(i, j);
                    let dp = (p[g.cell(i, j)] - p[g.cell(i - 1, j)]) / g.dx;
                    rhs[j * (g.nx - 1) + i - 1] = nu * lap_u[f] - dt * adv_u[f] - dt * dp;
                }
            }
            fu.solve(&mut rhs);
            for j in 0..g.nz {
                for i in 1..g.nx {
                    star.u[g.u_index(i, j)] += rhs[j * (g.nx - 1) + i - 1];
                }
            }
        }
        if let Some(fw) = &factors.w {
            let mut rhs = vec![0.0; fw.size()];
            for j in 1..g.nz {
                for i in 0..g.nx {
                    let f = g.w_index(i, j);
                    let dp = (p[g.cell(i, j)] - p[g.cell(i, j - 1)]) / g.dz;
                    let th = 0.5 * (state.theta[g.cell(i, j)] + state.theta[g.cell(i, j - 1)]);
                    rhs[(j - 1) * g.nx + i] = nu * lap_w[f] - dt * adv_w[f] - dt * dp + dt * state.sigma * th;
                }
            }
            fw.solve(&mut rhs);
            for j in 1..g.nz {
                for i in 0..g.nx {
                    star.w[g.w_index(i, j)] += rhs[(j - 1) * g.nx + i];
                }
            }
        }

        // Projection.
        let phi = self.solve_pressure(&star.divergence(&g), dt)?;
        let mut next = star;
        for j in 0..g.nz {
            for i in 1..g.nx {
                next.u[g.u_index(i, j)] -= dt * (phi[g.cell(i, j)] - phi[g.cell(i - 1, j)]) / g.dx;
            }
        }
        for j in 1..g.nz {
            for i in 0..g.nx {
                next.w[g.w_index(i, j)] -= dt * (phi[g.cell(i, j)] - phi[g.cell(i, j - 1)]) / g.dz;
            }
        }
        let mut pressure: Vec<f64> = p.iter().zip(&phi).map(|(a, b)| a + b).collect();
        let mean = pressure.iter().sum::<f64>() / pressure.len() as f64;
        pressure.iter_mut().for_each(|v| *v -= mean);
        Ok(FlowState { velocity: next, pressure, theta: state.theta.clone(), prandtl: state.prandtl, sigma: state.sigma })
    }

    /// Solves `D G φ = div / dt` with zero normal gradient, mean-free.
    fn solve_pressure(&self, div: &[f64], dt: f64) -> Result<Vec<f64>> {
        let g = &self.grid;
        let n = g.cells();
        // Only the compatible part of the source is solvable.
        let mean = div.iter().sum::<f64>() / n as f64;
        let b: Vec<f64> = div.iter().map(|d| (d - mean) / dt).collect();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        // The factored matrix is -L with cell 0 grounded.
        let mut x: Vec<f64> = b[1..].iter().map(|v| -v).collect();
        self.poisson.solve(&mut x);
        let mut phi = Vec::with_capacity(n);
        phi.push(0.0);
        phi.extend(x);
        let lphi = neumann_laplacian(g, &phi);
        let res = lphi.iter().zip(&b).map(|(l, b)| (l - b) * (l - b)).sum::<f64>().sqrt() / bnorm;
        if !(res <= POISSON_TOLERANCE) {
            return Err(Error::PoissonSolveFailed { residual: res });
        }
        let m = phi.iter().sum::<f64>() / n as f64;
        phi.iter_mut().for_each(|v| *v -= m);
        Ok(phi)
    }

    /// Advances the temperature with the heat released by `model` at the
    /// current composition.
    pub fn step_temperature(&mut self, model: &dyn RateModel, state: &FlowState, species: &SpeciesField, dt: f64) -> Result<FlowState> {
        check_dt(dt)?;
        let g = self.grid;
        let boundary = self.boundary;
        assert_eq!(species.cells(), g.cells(), "species field does not match the grid");
        let adv = scalar_advection(&g, boundary, &state.velocity, &state.theta, 0.0);
        let mut rhs: Vec<f64> = (0..g.cells())
            .map(|c| state.theta[c] - dt * adv[c] + dt * heat_release(model, state.theta[c], species.cell(c)))
            .collect();
        self.factors(dt)?.theta.solve(&mut rhs);
        let min = rhs.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min >= -THETA_TOLERANCE) {
            return Err(Error::StepRejected(format!("temperature undershoot {min:e}")));
        }
        Ok(FlowState { theta: rhs, ..state.clone() })
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::StepRejected(format!("time step {dt} is not positive")))
    }
}

/// One flow step; see [`FlowStepper::step_flow`].
pub fn step_flow(stepper: &mut FlowStepper, state: &FlowState, dt: f64) -> Result<FlowState> {
    stepper.step_flow(state, dt)
}

/// One temperature step; see [`FlowStepper::step_temperature`].
pub fn step_temperature(stepper: &mut FlowStepper, model: &dyn RateModel, state: &FlowState, species: &SpeciesField, dt: f64) -> Result<FlowState> {
    stepper.step_temperature(model, state, species, dt)
}

/// Five-point Laplacian of a cell field with zero normal gradient.
fn neumann_laplacian(g: &Grid, phi: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.cells()];
    let (cx, cz) = (1.0 / (g.dx * g.dx), 1.0 / (g.dz * g.dz));
    for j in 0..g.nz {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            let mut s = 0.0;
            if i > 0 {
                s += cx * (phi[c - 1] - phi[c]);
            }
            if i + 1 < g.nx {
                s += cx * (phi[c + 1] - phi[c]);
            }
            if j > 0 {
                s += cz * (phi[c - g.nx] - phi[c]);
            }
            if j + 1 < g.nz {
                s += cz * (phi[c + g.nx] - phi[c]);
            }
            out[c] = s;
        }
    }
    out
}

/// `-L` on cells `1..n`, with cell 0 grounded, factored.
fn poisson_matrix(g: &Grid) -> Result<BandedSpd> {
    let n = g.cells();
    let mut a = BandedSpd::new(n - 1, g.nx);
    if n == 1 {
        return a.factor();
    }
    let (cx, cz) = (1.0 / (g.dx * g.dx), 1.0 / (g.dz * g.dz));
    for j in 0..g.nz {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            let mut link = |nb: usize, coef: f64| {
                if c > 0 {
                    a.add(c - 1, c - 1, coef);
                    if nb > 0 && nb < c {
                        a.add(c - 1, nb - 1, -coef);
                    }
                }
            };
            if i > 0 {
                link(c - 1, cx);
            }
            if i + 1 < g.nx {
                link(c + 1, cx);
            }
            if j > 0 {
                link(c - g.nx, cz);
            }
            if j + 1 < g.nz {
                link(c + g.nx, cz);
            }
        }
    }
    a.factor()
}

/// `I - ν Δ` on interior `u` faces; no-slip ghosts on top and bottom.
fn u_matrix(g: &Grid, nu: f64) -> Result<Option<BandedSpd>> {
    if g.nx < 2 {
        return Ok(None);
    }
    let m = g.nx - 1;
    let mut a = BandedSpd::new(m * g.nz, m);
    let (cx, cz) = (nu / (g.dx * g.dx), nu / (g.dz * g.dz));
    for j in 0..g.nz {
        for i in 0..m {
            let r = j * m + i;
            let mut diag = 1.0 + 2.0 * cx;
            if i > 0 {
                a.add(r, r - 1, -cx);
            }
            if j > 0 {
                a.add(r, r - m, -cz);
                diag += cz;
            } else {
                diag += 2.0 * cz;
            }
            if j + 1 < g.nz {
                diag += cz;
            } else {
                diag += 2.0 * cz;
            }
            a.add(r, r, diag);
        }
    }
    a.factor().map(Some)
}

/// `I - ν Δ` on interior `w` faces; zero-gradient ghosts on the walls.
fn w_matrix(g: &Grid, nu: f64) -> Result<Option<BandedSpd>> {
    if g.nz < 2 {
        return Ok(None);
    }
    let mut a = BandedSpd::new(g.nx * (g.nz - 1), g.nx);
    let (cx, cz) = (nu / (g.dx * g.dx), nu / (g.dz * g.dz));
    for j in 1..g.nz {
        for i in 0..g.nx {
            let r = (j - 1) * g.nx + i;
            let mut diag = 1.0 + 2.0 * cz;
            if i > 0 {
                a.add(r, r - 1, -cx);
                diag += cx;
            }
            if i + 1 < g.nx {
                diag += cx;
            }
            if j > 1 {
                a.add(r, r - g.nx, -cz);
            }
            a.add(r, r, diag);
        }
    }
    a.factor().map(Some)
}

/// `I - dt Δ` on cells; Dirichlet zero at a channel inlet, zero gradient
/// elsewhere.
fn theta_matrix(g: &Grid, boundary: BoundaryKind, dt: f64) -> Result<BandedSpd> {
    let mut a = BandedSpd::new(g.cells(), g.nx);
    let (cx, cz) = (dt / (g.dx * g.dx), dt / (g.dz * g.dz));
    for j in 0..g.nz {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            let mut diag = 1.0;
            if i > 0 {
                a.add(c, c - 1, -cx);
                diag += cx;
            }
            if i + 1 < g.nx {
                diag += cx;
            }
            if j > 0 {
                a.add(c, c - g.nx, -cz);
                diag += cz;
            } else if boundary == BoundaryKind::Channel {
                diag += 2.0 * cz;
            }
            if j + 1 < g.nz {
                diag += cz;
            }
            a.add(c, c, diag);
        }
    }
    a.factor()
}

/// `Δ_h u` on interior `u` faces and `Δ_h w` on interior `w` faces, with
/// the same ghosts as the implicit matrices.
fn velocity_laplacian(g: &Grid, v: &VelocityField) -> (Vec<f64>, Vec<f64>) {
    let mut lu = vec![0.0; g.u_faces()];
    let mut lw = vec![0.0; g.w_faces()];
    let (cx, cz) = (1.0 / (g.dx * g.dx), 1.0 / (g.dz * g.dz));
    for j in 0..g.nz {
        for i in 1..g.nx {
            let u = v.u[g.u_index(i, j)];
            let below = if j > 0 { v.u[g.u_index(i, j - 1)] } else { -u };
            let above = if j + 1 < g.nz { v.u[g.u_index(i, j + 1)] } else { -u };
            lu[g.u_index(i, j)] =
                cx * ((v.u[g.u_index(i - 1, j)] - u) + (v.u[g.u_index(i + 1, j)] - u)) + cz * ((below - u) + (above - u));
        }
    }
    for j in 1..g.nz {
        for i in 0..g.nx {
            let w = v.w[g.w_index(i, j)];
            let west = if i > 0 { v.w[g.w_index(i - 1, j)] } else { w };
            let east = if i + 1 < g.nx { v.w[g.w_index(i + 1, j)] } else { w };
            lw[g.w_index(i, j)] =
                cx * ((west - w) + (east - w)) + cz * ((v.w[g.w_index(i, j - 1)] - w) + (v.w[g.w_index(i, j + 1)] - w));
        }
    }
    (lu, lw)
}

#[inline]
fn upwind(speed: f64, here: f64, behind: f64, ahead: f64, h: f64) -> f64 {
    if speed > 0.0 {
        speed * (here - behind) / h
    } else {
        speed * (ahead - here) / h
    }
}

/// Upwind `(v·∇)u` on `u` faces and `(v·∇)w` on `w` faces.
fn momentum_advection(g: &Grid, v: &VelocityField) -> (Vec<f64>, Vec<f64>) {
    let mut au = vec![0.0; g.u_faces()];
    let mut aw = vec![0.0; g.w_faces()];
    for j in 0..g.nz {
        for i in 1..g.nx {
            let f = g.u_index(i, j);
            let u = v.u[f];
            let w = 0.25 * (v.w[g.w_index(i - 1, j)] + v.w[g.w_index(i, j)] + v.w[g.w_index(i - 1, j + 1)] + v.w[g.w_index(i, j + 1)]);
            let below = if j > 0 { v.u[g.u_index(i, j - 1)] } else { -u };
            let above = if j + 1 < g.nz { v.u[g.u_index(i, j + 1)] } else { -u };
            au[f] = upwind(u, u, v.u[g.u_index(i - 1, j)], v.u[g.u_index(i + 1, j)], g.dx) + upwind(w, u, below, above, g.dz);
        }
    }
    for j in 1..g.nz {
        for i in 0..g.nx {
            let f = g.w_index(i, j);
            let w = v.w[f];
            let u = 0.25 * (v.u[g.u_index(i, j - 1)] + v.u[g.u_index(i + 1, j - 1)] + v.u[g.u_index(i, j)] + v.u[g.u_index(i + 1, j)]);
            let west = if i > 0 { v.w[g.w_index(i - 1, j)] } else { w };
            let east = if i + 1 < g.nx { v.w[g.w_index(i + 1, j)] } else { w };
            aw[f] = upwind(u, w, west, east, g.dx) + upwind(w, w, v.w[g.w_index(i, j - 1)], v.w[g.w_index(i, j + 1)], g.dz);
        }
    }
    (au, aw)
}

/// Upwind `(v·∇)s` for a cell scalar with zero-gradient ghosts and inflow
/// value `inlet` on a channel inlet.
fn scalar_advection(g: &Grid, boundary: BoundaryKind, v: &VelocityField, s: &[f64], inlet: f64) -> Vec<f64> {
    let mut out = vec![0.0; g.cells()];
    for j in 0..g.nz {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            let sp = s[c];
            let west = if i > 0 { s[c - 1] } else { sp };
            let east = if i + 1 < g.nx { s[c + 1] } else { sp };
            let south = if j > 0 {
                s[c - g.nx]
            } else if boundary == BoundaryKind::Channel {
                inlet
            } else {
                sp
            };
            let north = if j + 1 < g.nz { s[c + g.nx] } else { sp };
            let mut acc = 0.0;
            for (rate, nb) in [
                (v.u[g.u_index(i, j)] / g.dx, west),
                (-v.u[g.u_index(i + 1, j)] / g.dx, east),
                (v.w[g.w_index(i, j)] / g.dz, south),
                (-v.w[g.w_index(i, j + 1)] / g.dz, north),
            ] {
                if rate > 0.0 {
                    acc += rate * (sp - nb);
                }
            }
            out[c] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{NoReaction, SingleStep};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn channel(nx: usize, nz: usize) -> (Grid, FlowStepper, FlowState) {
        let g = Grid::new(nx, nz, 1.0, 1.5).unwrap();
        let st = FlowStepper::new(g, BoundaryKind::Channel, 1.0).unwrap();
        let s = FlowState::at_rest(&g, BoundaryKind::Channel, 1.0, 1.0).unwrap();
        (g, st, s)
    }

    #[test]
    fn lifted_flow_is_steady() {
        let (_, mut st, mut s) = channel(8, 10);
        for _ in 0..20 {
            s = st.step_flow(&s, 0.05).unwrap();
        }
        assert!(s.velocity.w.iter().all(|w| (w - 1.0).abs() < 1e-12));
        assert!(s.velocity.u.iter().all(|u| u.abs() < 1e-12));
        assert!(s.pressure.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn projection_removes_divergence() {
        let (g, mut st, mut s) = channel(12, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (a, b): (f64, f64) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
        for j in 0..g.nz {
            for i in 1..g.nx {
                s.velocity.u[g.u_index(i, j)] = 0.3 * (a * i as f64).sin() * (b * j as f64).cos();
            }
        }
        for j in 1..g.nz {
            for i in 0..g.nx {
                s.velocity.w[g.w_index(i, j)] = 1.0 + 0.2 * (b * i as f64).cos() * (a * j as f64).sin();
            }
        }
        assert!(s.velocity.max_divergence(&g) > 1e-2);
        s = st.step_flow(&s, 0.01).unwrap();
        assert!(s.velocity.max_divergence(&g) <= 1e-10);
    }

    #[test]
    fn heating_lifts_the_hot_region() {
        let (g, mut st, mut s) = channel(10, 10);
        for j in 3..6 {
            for i in 3..6 {
                s.theta[g.cell(i, j)] = 1.0;
            }
        }
        let next = st.step_flow(&s, 0.02).unwrap();
        let f = g.w_index(4, 5);
        assert!(next.velocity.w[f] > 1.0);
        // Every row still carries the same vertical mass flux.
        for j in 0..=g.nz {
            let flux: f64 = (0..g.nx).map(|i| next.velocity.w[g.w_index(i, j)] * g.dx).sum();
            assert!((flux - g.lx).abs() < 1e-12);
        }
    }

    #[test]
    fn cold_state_without_reaction_is_unchanged() {
        let (g, mut st, s) = channel(6, 6);
        let y = SpeciesField::uniform(&g, &[0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let next = st.step_temperature(&NoReaction::new(2), &s, &y, 0.01).unwrap();
        assert!(next.theta.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn temperature_stays_nonnegative() {
        let (g, mut st, mut s) = channel(10, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        s.theta.iter_mut().for_each(|t| *t = rng.random_range(0.0..2.0));
        let y = SpeciesField::uniform(&g, &[0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let model = NoReaction::new(2);
        for _ in 0..50 {
            let dt = st.max_dt(&s);
            s = st.step_temperature(&model, &s, &y, dt).unwrap();
            assert!(s.min_theta() >= -1e-10);
        }
        // Heat release with fuel present only warms.
        let y = SpeciesField::uniform(&g, &[1.0, 0.0], vec![0.5, 0.5]).unwrap();
        let hot = st.step_temperature(&SingleStep::default(), &s, &y, 0.05).unwrap();
        let cold = st.step_temperature(&NoReaction::new(2), &s, &y, 0.05).unwrap();
        assert!(hot.theta.iter().zip(&cold.theta).all(|(h, c)| h >= c));
    }

    #[test]
    fn closed_box_at_rest_stays_at_rest() {
        let g = Grid::new(6, 5, 1.0, 1.0).unwrap();
        let mut st = FlowStepper::new(g, BoundaryKind::ClosedBox, 0.7).unwrap();
        let mut s = FlowState::at_rest(&g, BoundaryKind::ClosedBox, 0.7, 0.0).unwrap();
        s.theta.iter_mut().enumerate().for_each(|(c, t)| *t = c as f64);
        let next = st.step_flow(&s, 0.1).unwrap();
        assert!(next.velocity.max_speed() < 1e-13);
    }

    #[test]
    fn invalid_constants_are_rejected() {
        let g = Grid::new(3, 3, 1.0, 1.0).unwrap();
        assert!(FlowState::at_rest(&g, BoundaryKind::Channel, 0.0, 1.0).is_err());
        assert!(FlowStepper::new(g, BoundaryKind::Channel, -1.0).is_err());
    }
}
