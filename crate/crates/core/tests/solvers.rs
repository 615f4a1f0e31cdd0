use stefan_flame::config::RunConfig;
use stefan_flame::grid::{BoundaryKind, Grid, VelocityField};
use stefan_flame::hydro::{base_velocity, FlowState, FlowStepper};
use stefan_flame::kinetics::NoReaction;
use stefan_flame::rd_solver::{flux_divergence, q_laplacian_term, RegularizationParams, SpeciesField, SpeciesProblem, Tolerances};
use stefan_flame::simulation::Simulation;

fn small(name: &str, n: usize) -> RunConfig {
    let mut c = RunConfig::preset(name).unwrap();
    c.grid.nx = n;
    c.grid.nz = n;
    c.kinetics.validation_samples = 2000;
    c
}

#[test]
fn closed_box_steps_conserve_mass_and_sum() {
    let c = small("diffusion_box", 16);
    let mut sim = Simulation::new(&c).unwrap();
    let m0 = sim.field.total_mass(sim.grid());
    for _ in 0..50 {
        let dt = sim.stable_dt();
        sim.advance(dt).unwrap();
    }
    let m1 = sim.field.total_mass(sim.grid());
    for (a, b) in m0.iter().zip(&m1) {
        assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} vs {b}");
    }
    assert!(sim.field.max_sum_deviation() <= 1e-12);
    assert!(sim.field.min() >= -1e-10);
}

#[test]
fn gibbs_energy_decreases_in_closed_box() {
    let c = small("diffusion_box", 16);
    let mut sim = Simulation::new(&c).unwrap();
    let mut last = sim.report().unwrap().gibbs_energy;
    for _ in 0..40 {
        let dt = sim.stable_dt();
        sim.advance(dt).unwrap();
        let e = sim.report().unwrap().gibbs_energy;
        assert!(e <= last + 1e-12, "{e} > {last}");
        last = e;
    }
}

#[test]
fn inlet_state_is_stationary_in_lifted_channel() {
    let c = small("three_species_oracle", 12);
    let grid = c.grid().unwrap();
    let species = c.species_set().unwrap();
    let inlet = c.physics.inlet.clone();
    let field = SpeciesField::uniform(&grid, &inlet, inlet.clone()).unwrap();
    let model = NoReaction::new(3);
    let problem = SpeciesProblem {
        grid: &grid,
        boundary: BoundaryKind::Channel,
        species: &species,
        model: &model,
        reg: RegularizationParams::new(1e-3, 4.0).unwrap(),
        tol: Tolerances::default(),
    };
    let v = VelocityField::lifted(&grid);
    let next = problem.step(&field, &v, &vec![0.0; grid.cells()], 1e-3).unwrap();
    for (a, b) in next.values().iter().zip(field.values()) {
        assert!((a - b).abs() <= 1e-13);
    }
}

#[test]
fn operators_vanish_on_uniform_fields() {
    let grid = Grid::new(10, 6, 1.0, 0.6).unwrap();
    let species = small("diffusion_box", 10).species_set().unwrap();
    let y = [0.25, 0.35, 0.4];
    let field = SpeciesField::uniform(&grid, &y, y.to_vec()).unwrap();
    for boundary in [BoundaryKind::Channel, BoundaryKind::ClosedBox] {
        let div = flux_divergence(&grid, boundary, &species, &field).unwrap();
        assert!(div.iter().all(|v| v.abs() <= 1e-12));
        let q = q_laplacian_term(&grid, boundary, &field, RegularizationParams::new(1e-2, 4.0).unwrap());
        assert!(q.iter().all(|v| v.abs() <= 1e-12));
    }
}

#[test]
fn flow_stays_divergence_free_under_heating() {
    let grid = Grid::new(16, 24, 1.0, 1.5).unwrap();
    let mut stepper = FlowStepper::new(grid, BoundaryKind::Channel, 0.7).unwrap();
    let mut state = FlowState::at_rest(&grid, BoundaryKind::Channel, 0.7, 2.0).unwrap();
    for j in 0..grid.nz {
        for i in 0..grid.nx {
            let (x, z) = grid.center(i, j);
            state.theta[grid.cell(i, j)] = (-((x - 0.5).powi(2) + (z - 0.7).powi(2)) / 0.02).exp();
        }
    }
    for _ in 0..20 {
        let dt = stepper.max_dt(&state).min(5e-3);
        state = stepper.step_flow(&state, dt).unwrap();
        assert!(state.velocity.max_divergence(&grid) <= 1e-10);
    }
    let base = base_velocity(&grid, BoundaryKind::Channel);
    let moved = state.velocity.w.iter().zip(&base.w).any(|(a, b)| (a - b).abs() > 1e-6);
    assert!(moved);
}

#[test]
fn coupled_run_keeps_temperature_nonnegative() {
    let mut c = small("flame_channel", 16);
    c.numerics.max_steps = Some(40);
    let mut sim = Simulation::new(&c).unwrap();
    let reports = sim.run_until(c.numerics.t_end, Some(40), |_, _| Ok(())).unwrap();
    assert_eq!(reports.len(), 41);
    for r in &reports {
        assert!(r.is_finite());
        assert!(r.min_theta >= -1e-10);
        assert!(r.max_div_v <= 1e-10);
        assert!(r.min_y >= -1e-10 && r.max_sum_deviation <= 1e-8);
    }
}
