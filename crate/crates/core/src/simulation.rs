//! Operator-split time loop: flow, temperature, species, report.

use std::path::PathBuf;

use crate::config::RunConfig;
use crate::diagnostics::{invariant_report, GibbsParams, InvariantReport};
use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, Grid};
use crate::hydro::{FlowState, FlowStepper};
use crate::kinetics::ValidatedModel;
use crate::mixture::SpeciesSet;
use crate::output::{write_snapshot, TimeSeriesWriter};
use crate::rd_solver::{RegularizationParams, SpeciesField, SpeciesProblem, Tolerances};

/// A fully assembled run: configuration, operators and current state.
#[derive(Debug)]
pub struct Simulation {
    grid: Grid,
    boundary: BoundaryKind,
    species: SpeciesSet,
    model: ValidatedModel,
    reg: RegularizationParams,
    tol: Tolerances,
    gibbs: GibbsParams,
    stepper: FlowStepper,
    evolve_flow: bool,
    evolve_temperature: bool,
    max_dt: f64,
    max_halvings: u32,
    pub flow: FlowState,
    pub field: SpeciesField,
    pub time: f64,
    pub step: usize,
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub time: f64,
    pub reports: Vec<InvariantReport>,
    pub snapshots: Vec<PathBuf>,
    pub time_series: Option<PathBuf>,
}

impl Simulation {
    /// Validates `config` and builds the initial state.
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let boundary = config.boundary();
        let mut flow = FlowState::at_rest(&grid, boundary, config.physics.prandtl, config.physics.sigma)?;
        flow.theta = config.initial_theta(&grid)?;
        Ok(Self {
            grid,
            boundary,
            species: config.species_set()?,
            model: config.rate_model()?,
            reg: config.regularization()?,
            tol: config.tolerances(),
            gibbs: config.gibbs()?,
            stepper: FlowStepper::new(grid, boundary, config.physics.prandtl)?,
            evolve_flow: config.physics.evolve_flow,
            evolve_temperature: config.physics.evolve_temperature,
            max_dt: config.numerics.dt,
            max_halvings: config.numerics.max_halvings,
            flow,
            field: config.initial_species(&grid)?,
            time: 0.0,
            step: 0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn boundary(&self) -> BoundaryKind {
        self.boundary
    }

    pub fn species(&self) -> &SpeciesSet {
        &self.species
    }

    pub fn model(&self) -> &ValidatedModel {
        &self.model
    }

    pub fn regularization(&self) -> RegularizationParams {
        self.reg
    }

    pub fn set_regularization(&mut self, reg: RegularizationParams) {
        self.reg = reg;
    }

    pub fn set_max_dt(&mut self, dt: f64) {
        self.max_dt = dt;
    }

    pub fn gibbs(&self) -> &GibbsParams {
        &self.gibbs
    }

    fn problem(&self) -> SpeciesProblem<'_> {
        SpeciesProblem { grid: &self.grid, boundary: self.boundary, species: &self.species, model: &*self.model, reg: self.reg, tol: self.tol }
    }

    /// Largest stable step for the current state, capped by the configured `dt`.
    pub fn stable_dt(&self) -> f64 {
        let mut dt = self.max_dt.min(self.problem().max_dt(&self.field, &self.flow.velocity));
        if self.evolve_flow || self.evolve_temperature {
            dt = dt.min(self.stepper.max_dt(&self.flow));
        }
        dt
    }

    /// Report for the current state.
    pub fn report(&self) -> Result<InvariantReport> {
        let mut r = invariant_report(&self.grid, self.boundary, &self.species, &self.gibbs, &self.flow, &self.field)?;
        r.step = self.step;
        r.time = self.time;
        Ok(r)
    }

    fn try_step(&mut self, dt: f64) -> Result<(FlowState, SpeciesField)> {
        let mut flow = if self.evolve_flow { self.stepper.step_flow(&self.flow, dt)? } else { self.flow.clone() };
        if self.evolve_temperature {
            flow = self.stepper.step_temperature(&*self.model, &flow, &self.field, dt)?;
        }
        let field = self.problem().step(&self.field, &flow.velocity, &flow.theta, dt)?;
        Ok((flow, field))
    }

    /// Advances one step of at most `dt`, halving on rejection. Returns the
    /// step actually taken.
    pub fn advance(&mut self, dt: f64) -> Result<f64> {
        let mut dt = dt;
        let mut last = None;
        for _ in 0..=self.max_halvings {
            match self.try_step(dt) {
                Ok((flow, field)) => {
                    self.flow = flow;
                    self.field = field;
                    self.time += dt;
                    self.step += 1;
                    return Ok(dt);
                }
                Err(e @ (Error::StepRejected(_) | Error::LinearSolveFailed(_))) => {
                    last = Some(e);
                    dt *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::StepRejected(format!(
            "step {} rejected after {} halvings: {}",
            self.step + 1,
            self.max_halvings,
            last.map(|e| e.to_string()).unwrap_or_default()
        )))
    }

    /// Steps until `t_end` or `max_steps`, calling `observe` after the
    /// initial state and after every accepted step.
    pub fn run_until(
        &mut self,
        t_end: f64,
        max_steps: Option<usize>,
        mut observe: impl FnMut(&Simulation, &InvariantReport) -> Result<()>,
    ) -> Result<Vec<InvariantReport>> {
        let mut reports = vec![self.report()?];
        observe(self, &reports[0])?;
        // Guards against a sliver of a final step from rounding.
        let slack = 1e-12 * t_end;
        while self.time < t_end - slack && max_steps.is_none_or(|m| self.step < m) {
            let mut dt = self.stable_dt();
            if self.time + dt > t_end - slack {
                dt = t_end - self.time;
            }
            match self.advance(dt) {
                Ok(_) => {
                    let r = self.report()?;
                    observe(self, &r)?;
                    reports.push(r);
                }
                Err(e) => {
                    let mut r = self.report()?;
                    r.step = self.step + 1;
                    r.step_accepted = false;
                    observe(self, &r)?;
                    return Err(e);
                }
            }
        }
        Ok(reports)
    }
}

/// Runs `config` and writes snapshots plus `timeseries.csv` into the
/// configured output directory. Nothing is written if the configuration is
/// invalid.
pub fn run_simulation(config: &RunConfig) -> Result<RunSummary> {
    let mut sim = Simulation::new(config)?;
    let dir = config.output.directory.clone();
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
    let csv_path = dir.join("timeseries.csv");
    let mut csv = TimeSeriesWriter::create(&csv_path)?;
    let interval = config.output.snapshot_interval;
    let mut snapshots = Vec::new();
    let snap = |sim: &Simulation, snapshots: &mut Vec<PathBuf>| -> Result<()> {
        let path = dir.join(format!("snapshot_{:06}.vtk", sim.step));
        if snapshots.last() != Some(&path) {
            write_snapshot(&path, &sim.grid, &sim.flow, &sim.field, &format!("step {} time {:.16e}", sim.step, sim.time))?;
            snapshots.push(path);
        }
        Ok(())
    };
    let result = sim.run_until(config.numerics.t_end, config.numerics.max_steps, |sim, report| {
        csv.append(report)?;
        if report.step_accepted && (sim.step == 0 || (interval > 0 && sim.step.is_multiple_of(interval))) {
            snap(sim, &mut snapshots)?;
        }
        Ok(())
    });
    csv.flush()?;
    snap(&sim, &mut snapshots)?;
    let reports = result?;
    Ok(RunSummary { steps: sim.step, time: sim.time, reports, snapshots, time_series: Some(csv_path) })
}
