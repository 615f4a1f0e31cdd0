//! Verification suites with pass/fail outcomes.
//!
//! Each check samples deterministically (fixed seeds) or runs a preset, and
//! reports the measured quantity next to its threshold.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, Grid};
use crate::hydro::{FlowState, FlowStepper};
use crate::kinetics::{self, Chain, RateModel, SingleStep, VALIDATION_SAMPLES};
use crate::mixture::SpeciesSet;
use crate::rd_solver::{flux_divergence, RegularizationParams, SpeciesField};
use crate::simulation::Simulation;
use crate::stefan_maxwell::{assemble, dissipation_rate, generalized_fluxes, solve_fluxes, three_species_fluxes};

/// Result of one check.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Suite names accepted by [`run_suite`], besides `all`.
pub const SUITES: [&str; 10] = [
    "oracle",
    "flux_conservation",
    "matrix_structure",
    "dissipation",
    "diffusion_box",
    "flame_channel",
    "binary_fick",
    "epsilon_study",
    "kinetics_gate",
    "hydro_fixed_point",
];

type Check = fn() -> Result<(bool, String)>;

fn check(id: u32) -> (&'static str, Check, Option<f64>) {
    match id {
        1 => ("oracle", oracle_equivalence, Some(5.0)),
        2 => ("flux_conservation", flux_conservation, None),
        3 => ("matrix_structure", matrix_structure, None),
        4 => ("dissipation", dissipation, None),
        5 => ("diffusion_box", diffusion_box, Some(60.0)),
        6 => ("flame_channel", flame_channel, Some(120.0)),
        7 => ("binary_fick", binary_fick, None),
        8 => ("epsilon_study", epsilon_study, None),
        9 => ("kinetics_gate", kinetics_gate, None),
        10 => ("hydro_fixed_point", hydro_fixed_point, None),
        _ => unreachable!("no check {id}"),
    }
}

/// Runs check `id` (1 to 10), timing it against its runtime limit.
pub fn run_check(id: u32) -> Outcome {
    let (name, f, limit) = check(id);
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match result {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(limit) = limit {
        if elapsed.as_secs_f64() > limit {
            passed = false;
            detail.push_str(&format!("; exceeded {limit} s limit"));
        }
    }
    Outcome { id, name, passed, detail, elapsed }
}

/// Runs a named suite, or every check for `all`.
pub fn run_suite(name: &str) -> Result<Vec<Outcome>> {
    if name == "all" {
        return Ok((1..=10).map(run_check).collect());
    }
    let id = SUITES
        .iter()
        .position(|s| *s == name)
        .ok_or_else(|| Error::ConfigInvalid(format!("unknown suite {name:?}; available: all, {}", SUITES.join(", "))))?;
    Ok(vec![run_check(id as u32 + 1)])
}

fn oracle_species() -> Result<SpeciesSet> {
    RunConfig::preset("three_species_oracle")?.species_set()
}

/// A point of the closed simplex; a third of the samples lie on an edge and
/// a tenth on a vertex.
fn closed_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut y: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let u: f64 = rng.random();
    if u < 0.1 {
        y.iter_mut().for_each(|v| *v = 0.0);
        y[rng.random_range(0..n)] = 1.0;
    } else if u < 0.43 {
        y[rng.random_range(0..n)] = 0.0;
    }
    let s: f64 = y.iter().sum();
    y.iter().map(|v| v / s).collect()
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn balanced(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = normal_matrix(rng, rows, cols);
    for c in 0..cols {
        let mean = m.column(c).sum() / rows as f64;
        m.column_mut(c).add_scalar_mut(-mean);
    }
    m
}

fn oracle_equivalence() -> Result<(bool, String)> {
    let species = oracle_species()?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples = 10_000;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let y = closed_simplex(&mut rng, 3);
        let p = balanced(&mut rng, 3, 2);
        let a = solve_fluxes(&species, &y, &p)?.fluxes;
        let b = three_species_fluxes(&species, &y, &p)?;
        let scale = b.amax().max(f64::MIN_POSITIVE);
        worst = worst.max((a - &b).amax() / scale);
    }
    Ok((worst <= 1e-10, format!("max relative error {worst:.2e} over {samples} samples (limit 1e-10)")))
}

fn random_species(rng: &mut ChaCha8Rng, n: usize) -> Result<SpeciesSet> {
    let m: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = rng.random_range(0.2..2.0);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    SpeciesSet::new(m, d, 1.0)
}

fn flux_conservation() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sets = [oracle_species()?, random_species(&mut rng, 4)?, random_species(&mut rng, 6)?];
    let samples = 10_000;
    let mut worst = 0.0f64;
    let mut unbalanced = 0;
    for s in 0..samples {
        let species = &sets[s % sets.len()];
        let n = species.len();
        let y = closed_simplex(&mut rng, n);
        let grad = normal_matrix(&mut rng, n, 2);
        if (0..2).any(|c| grad.column(c).sum().abs() > 1e-3) {
            unbalanced += 1;
        }
        let f = generalized_fluxes(species, &y, &grad)?.fluxes;
        for c in 0..2 {
            worst = worst.max(f.column(c).sum().abs());
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max |Σ F_i| {worst:.2e} over {samples} samples, {unbalanced} with Σ∇Y ≠ 0 (limit 1e-12)"),
    ))
}

fn matrix_structure() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sets = [oracle_species()?, random_species(&mut rng, 4)?, random_species(&mut rng, 7)?];
    let samples = 10_000;
    let (mut asym, mut sums, mut quad, mut coercive_fail) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for s in 0..samples {
        let species = &sets[s % sets.len()];
        let n = species.len();
        // Strictly positive compositions for the coercivity check.
        let mut y = closed_simplex(&mut rng, n);
        y.iter_mut().for_each(|v| *v = 0.9 * *v + 0.1 / n as f64);
        let sm = assemble(species, &y);
        let b = &sm.b;
        let scale = b.amax().max(1.0);
        asym = asym.max((b - b.transpose()).amax() / scale);
        for i in 0..n {
            sums = sums.max(b.row(i).sum().abs() / scale);
            sums = sums.max(b.column(i).sum().abs() / scale);
        }
        let v = normal_matrix(&mut rng, n, 1);
        let lhs = (v.transpose() * b * &v)[(0, 0)];
        let mut rhs = 0.0;
        for i in 0..n {
            for j in 0..i {
                rhs += species.d_prime(i, j) * y[i] * y[j] * (v[i] - v[j]).powi(2);
            }
        }
        quad = quad.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        let cform = (v.transpose() * &sm.c * &v)[(0, 0)];
        let ysum: f64 = y.iter().sum();
        let bound = sm.gamma * ysum * (0..n).map(|i| y[i] * v[i] * v[i]).sum::<f64>();
        if cform < bound * (1.0 - 1e-12) {
            coercive_fail += 1;
        }
    }
    let ok = asym <= 1e-14 && sums <= 1e-14 && quad <= 1e-12 && coercive_fail == 0;
    Ok((
        ok,
        format!(
            "asymmetry {asym:.1e}, row/column sums {sums:.1e} (limit 1e-14); quadratic form {quad:.1e} (limit 1e-12); coercivity violations {coercive_fail}/{samples}"
        ),
    ))
}

/// Minimum of dissipation / |∇Y|² and the number of negative values over
/// admissible samples: `Y` on the closed simplex, `Σ∇Y = 0`, and no
/// gradient in absent species.
pub fn dissipation_ratio(species: &SpeciesSet, samples: usize, seed: u64) -> Result<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = species.len();
    let mut min_ratio = f64::INFINITY;
    let mut negative = 0;
    for _ in 0..samples {
        let y = closed_simplex(&mut rng, n);
        let active: Vec<usize> = (0..n).filter(|&i| y[i] > 0.0).collect();
        if active.len() < 2 {
            continue;
        }
        let g = balanced(&mut rng, active.len(), 2);
        let mut grad = DMatrix::zeros(n, 2);
        for (r, &i) in active.iter().enumerate() {
            grad.set_row(i, &g.row(r));
        }
        let d = dissipation_rate(species, &y, &grad)?;
        if d < 0.0 {
            negative += 1;
        }
        min_ratio = min_ratio.min(d / grad.norm_squared());
    }
    Ok((min_ratio, negative))
}

fn dissipation() -> Result<(bool, String)> {
    let species = oracle_species()?;
    let samples = 100_000;
    let (c1, neg) = dissipation_ratio(&species, samples, 4)?;
    let (c1b, negb) = dissipation_ratio(&species, samples, 5)?;
    let zero = dissipation_rate(&species, &[0.2, 0.3, 0.5], &DMatrix::zeros(3, 2))?;
    let ok = neg + negb == 0 && c1 > 0.0 && c1b > 0.0 && zero == 0.0;
    Ok((ok, format!("negative values {}; empirical c1 {c1:.4e} (resampled {c1b:.4e}) over {samples} samples", neg + negb)))
}

fn preset_sim(name: &str) -> Result<(RunConfig, Simulation)> {
    let config = RunConfig::preset(name)?;
    let sim = Simulation::new(&config)?;
    Ok((config, sim))
}

fn diffusion_box() -> Result<(bool, String)> {
    let (config, mut sim) = preset_sim("diffusion_box")?;
    let grid = *sim.grid();
    let mass0 = sim.field.total_mass(&grid);
    let mut drift = 0.0f64;
    let mut rise = f64::NEG_INFINITY;
    let mut prev = None;
    let reports = sim.run_until(config.numerics.t_end, config.numerics.max_steps, |sim, r| {
        for (m, m0) in sim.field.total_mass(sim.grid()).iter().zip(&mass0) {
            drift = drift.max((m - m0).abs() / m0);
        }
        if let Some(p) = prev {
            rise = rise.max(r.gibbs_energy - p);
        }
        prev = Some(r.gibbs_energy);
        Ok(())
    })?;
    let steps = reports.len() - 1;
    let min_y = reports.iter().map(|r| r.min_y).fold(f64::INFINITY, f64::min);
    let sum_dev = reports.iter().map(|r| r.max_sum_deviation).fold(0.0, f64::max);
    let (g0, g1) = (reports[0].gibbs_energy, reports[steps].gibbs_energy);
    let ok = steps == 2000 && min_y >= -1e-10 && sum_dev <= 1e-8 && drift <= 1e-8 && rise <= 1e-8;
    Ok((
        ok,
        format!(
            "{steps} steps; min Y {min_y:.3e}; max |ΣY-1| {sum_dev:.1e}; mass drift {drift:.1e}; max Gibbs increase {rise:.1e} (energy {g0:.4e} -> {g1:.4e})"
        ),
    ))
}

fn flame_channel() -> Result<(bool, String)> {
    let (config, mut sim) = preset_sim("flame_channel")?;
    let reports = sim.run_until(config.numerics.t_end, config.numerics.max_steps, |_, _| Ok(()))?;
    let steps = reports.len() - 1;
    let all_ok = reports.iter().all(|r| r.step_accepted && r.is_finite());
    let min_y = reports.iter().map(|r| r.min_y).fold(f64::INFINITY, f64::min);
    let sum_dev = reports.iter().map(|r| r.max_sum_deviation).fold(0.0, f64::max);
    let min_theta = reports.iter().map(|r| r.min_theta).fold(f64::INFINITY, f64::min);
    let max_div = reports.iter().map(|r| r.max_div_v).fold(0.0, f64::max);
    let min_diss = reports.iter().map(|r| r.dissipation_integral).fold(f64::INFINITY, f64::min);
    let max_theta = sim.flow.theta.iter().copied().fold(0.0, f64::max);
    let ok = steps == 1000 && all_ok && min_y >= -1e-10 && sum_dev <= 1e-8 && min_theta >= -1e-10 && max_div <= 1e-10 && min_diss >= 0.0;
    Ok((
        ok,
        format!(
            "{steps} steps to t = {:.3}; min Y {min_y:.3e}; max |ΣY-1| {sum_dev:.1e}; min θ {min_theta:.3e}; max θ {max_theta:.3}; max div v {max_div:.1e}; min dissipation {min_diss:.3e}",
            sim.time
        ),
    ))
}

/// L² error of the binary cosine mode against its exact decay at the
/// preset's final time, on an `n × n` grid with `dt ∝ h²`.
pub fn binary_fick_error(n: usize) -> Result<f64> {
    let mut config = RunConfig::preset("binary_fick")?;
    let base = config.grid.nx as f64;
    config.grid.nx = n;
    config.grid.nz = n;
    config.numerics.dt *= (base / n as f64).powi(2);
    let mut sim = Simulation::new(&config)?;
    let t_end = config.numerics.t_end;
    sim.run_until(t_end, None, |_, _| Ok(()))?;
    let grid = *sim.grid();
    // Diffusivity 1/d'_12 = 1/2 and Laplacian eigenvalue -2π².
    let decay = (-std::f64::consts::PI.powi(2) * t_end).exp();
    let y1 = sim.field.component(0);
    let mut err = 0.0;
    for j in 0..grid.nz {
        for i in 0..grid.nx {
            let (x, z) = grid.center(i, j);
            let exact = 0.5 + 0.25 * (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * z).cos() * decay;
            err += (y1[grid.cell(i, j)] - exact).powi(2);
        }
    }
    Ok((err * grid.cell_area()).sqrt())
}

fn binary_fick() -> Result<(bool, String)> {
    let config = RunConfig::preset("binary_fick")?;
    let species = config.species_set()?;
    let dprime = species.d_prime(0, 1);
    let grid = Grid::new(24, 20, 1.0, 0.8)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let y1: Vec<f64> = (0..grid.cells()).map(|_| rng.random_range(0.05..0.95)).collect();
    let field = SpeciesField::new(2, y1.iter().flat_map(|&a| [a, 1.0 - a]).collect(), vec![0.5, 0.5])?;
    let div = flux_divergence(&grid, BoundaryKind::ClosedBox, &species, &field)?;
    let mut op_err = 0.0f64;
    for j in 0..grid.nz {
        for i in 0..grid.nx {
            let c = grid.cell(i, j);
            let at = |i: usize, j: usize| y1[grid.cell(i, j)];
            let mut lap = 0.0;
            for (ok, v, h) in [
                (i > 0, if i > 0 { at(i - 1, j) } else { 0.0 }, grid.dx),
                (i + 1 < grid.nx, if i + 1 < grid.nx { at(i + 1, j) } else { 0.0 }, grid.dx),
                (j > 0, if j > 0 { at(i, j - 1) } else { 0.0 }, grid.dz),
                (j + 1 < grid.nz, if j + 1 < grid.nz { at(i, j + 1) } else { 0.0 }, grid.dz),
            ] {
                if ok {
                    lap += (v - at(i, j)) / (h * h);
                }
            }
            op_err = op_err.max((div[2 * c] + lap / dprime).abs());
        }
    }
    let (e32, e64) = (binary_fick_error(32)?, binary_fick_error(64)?);
    let order = (e32 / e64).log2();
    let ok = op_err <= 1e-12 && order >= 1.8;
    Ok((ok, format!("operator mismatch {op_err:.1e} (limit 1e-12); L2 errors {e32:.3e} / {e64:.3e}, order {order:.3} (limit 1.8)")))
}

/// Final-state L² distances between runs at each `ε` and the `ε = 0` run,
/// all with the same time step.
pub fn epsilon_distances(epsilons: &[f64]) -> Result<Vec<f64>> {
    let config = RunConfig::preset("epsilon_study")?;
    let q = config.numerics.q;
    let largest = epsilons.iter().copied().fold(0.0, f64::max);
    let mut probe = Simulation::new(&config)?;
    probe.set_regularization(RegularizationParams::new(largest, q)?);
    let dt = config.numerics.dt.min(0.5 * probe.stable_dt());
    let run = |eps: f64| -> Result<SpeciesField> {
        let mut sim = Simulation::new(&config)?;
        sim.set_regularization(RegularizationParams::new(eps, q)?);
        sim.set_max_dt(dt);
        sim.run_until(config.numerics.t_end, None, |_, _| Ok(()))?;
        Ok(sim.field)
    };
    let reference = run(0.0)?;
    let area = config.grid()?.cell_area();
    epsilons
        .iter()
        .map(|&eps| {
            let f = run(eps)?;
            Ok((f.values().iter().zip(reference.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * area).sqrt())
        })
        .collect()
}

fn epsilon_study() -> Result<(bool, String)> {
    let eps = [1e-2, 1e-3, 1e-4];
    let d = epsilon_distances(&eps)?;
    let ok = d.windows(2).all(|w| w[1] < w[0]) && d.iter().all(|v| v.is_finite());
    Ok((ok, format!("L2 distance to ε = 0: {:.3e} / {:.3e} / {:.3e} at ε = 1e-2 / 1e-3 / 1e-4", d[0], d[1], d[2])))
}

/// Production that goes negative, violating the sign assumption on purpose.
#[derive(Debug)]
pub struct NegativeProduction;

impl RateModel for NegativeProduction {
    fn name(&self) -> &str {
        "negative_production"
    }
    fn species_count(&self) -> usize {
        2
    }
    fn production(&self, theta: f64, _: &[f64], out: &mut [f64]) {
        out[0] = -kinetics::arrhenius(1.0, 1.0, theta);
        out[1] = kinetics::arrhenius(1.0, 1.0, theta);
    }
    fn removal(&self, _: f64, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn heats(&self) -> &[f64] {
        &[0.0, 0.0]
    }
    fn rate_bound(&self) -> f64 {
        1.0
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
}

fn kinetics_gate() -> Result<(bool, String)> {
    let mut shipped: Vec<(String, Arc<dyn RateModel>)> =
        vec![("single_step".into(), Arc::new(SingleStep::default())), ("chain".into(), Arc::new(Chain::default()))];
    for name in crate::config::PRESETS {
        let c = RunConfig::preset(name)?;
        shipped.push((format!("{name} preset"), c.raw_model()?));
    }
    let mut failures = Vec::new();
    for (i, (name, model)) in shipped.iter().enumerate() {
        if let Err(e) = kinetics::validate(model.clone(), VALIDATION_SAMPLES, 100 + i as u64) {
            failures.push(format!("{name}: {e}"));
        }
    }
    let broken = kinetics::validate(Arc::new(NegativeProduction), VALIDATION_SAMPLES, 99);
    let rejected = matches!(broken, Err(Error::ModelRejected { .. }));
    let ok = failures.is_empty() && rejected;
    Ok((
        ok,
        format!(
            "{} shipped models, {} failing{}; broken model {}",
            shipped.len(),
            failures.len(),
            if failures.is_empty() { String::new() } else { format!(" ({})", failures.join("; ")) },
            if rejected { "rejected" } else { "accepted" }
        ),
    ))
}

fn hydro_fixed_point() -> Result<(bool, String)> {
    let config = RunConfig::preset("flame_channel")?;
    let grid = config.grid()?;
    let mut stepper = FlowStepper::new(grid, BoundaryKind::Channel, config.physics.prandtl)?;
    let start = FlowState::at_rest(&grid, BoundaryKind::Channel, config.physics.prandtl, config.physics.sigma)?;
    let mut state = start.clone();
    let mut dev = 0.0f64;
    for _ in 0..100 {
        state = stepper.step_flow(&state, config.numerics.dt)?;
        let v = &state.velocity;
        let d = v.u.iter().zip(&start.velocity.u).chain(v.w.iter().zip(&start.velocity.w)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let p = state.pressure.iter().map(|p| p.abs()).fold(0.0, f64::max);
        dev = dev.max(d).max(p);
    }
    Ok((dev <= 1e-12, format!("max deviation from v = e_n, p = 0 over 100 steps {dev:.1e} (limit 1e-12)")))
}
