//! Run configuration in TOML.
//!
//! ```toml
//! [species]
//! molar_masses = [1.0, 2.0]
//! diffusion = [[0.0, 1.0], [1.0, 0.0]]
//!
//! [kinetics]
//! model = "none"
//!
//! [grid]
//! nx = 16
//! nz = 16
//!
//! [physics]
//! boundary = "closed_box"
//! inlet = [0.5, 0.5]
//! initial_species = { kind = "front", below = [0.9, 0.1], above = [0.1, 0.9], interface = 0.5, width = 0.1 }
//!
//! [numerics]
//! dt = 1e-3
//! t_end = 0.1
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{GibbsParams, DEFAULT_ETA};
use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, Grid};
use crate::kinetics::{self, Chain, NoReaction, RateModel, SingleStep, ValidatedModel};
use crate::mixture::SpeciesSet;
use crate::rd_solver::{RegularizationParams, SpeciesField, Tolerances};

/// Names of the shipped presets.
pub const PRESETS: [&str; 5] = ["diffusion_box", "binary_fick", "three_species_oracle", "flame_channel", "epsilon_study"];

fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "diffusion_box" => include_str!("../presets/diffusion_box.toml"),
        "binary_fick" => include_str!("../presets/binary_fick.toml"),
        "three_species_oracle" => include_str!("../presets/three_species_oracle.toml"),
        "flame_channel" => include_str!("../presets/flame_channel.toml"),
        "epsilon_study" => include_str!("../presets/epsilon_study.toml"),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub species: SpeciesConfig,
    #[serde(default)]
    pub kinetics: KineticsConfig,
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConfig {
    pub molar_masses: Vec<f64>,
    /// Binary diffusion coefficients `D_ij`; the diagonal is ignored.
    pub diffusion: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsConfig {
    /// `none`, `single_step` or `chain`.
    pub model: String,
    #[serde(default)]
    pub pre_exponential: Option<Vec<f64>>,
    #[serde(default)]
    pub activation: Option<Vec<f64>>,
    #[serde(default)]
    pub heats: Option<Vec<f64>>,
    #[serde(default = "default_samples")]
    pub validation_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for KineticsConfig {
    fn default() -> Self {
        Self { model: "none".into(), pre_exponential: None, activation: None, heats: None, validation_samples: default_samples(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub nz: usize,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub lz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryConfig {
    Channel,
    ClosedBox,
}

impl From<BoundaryConfig> for BoundaryKind {
    fn from(b: BoundaryConfig) -> Self {
        match b {
            BoundaryConfig::Channel => BoundaryKind::Channel,
            BoundaryConfig::ClosedBox => BoundaryKind::ClosedBox,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub boundary: BoundaryConfig,
    #[serde(default = "one")]
    pub prandtl: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    /// Inlet composition `Y^u`, also the Gibbs reference state.
    pub inlet: Vec<f64>,
    #[serde(default)]
    pub initial_species: InitialSpecies,
    #[serde(default)]
    pub initial_theta: InitialTheta,
    #[serde(default = "yes")]
    pub evolve_flow: bool,
    #[serde(default = "yes")]
    pub evolve_temperature: bool,
}

/// Initial mass fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpecies {
    /// The inlet composition everywhere.
    #[default]
    Inlet,
    Uniform { value: Vec<f64> },
    /// Smooth transition in `z` between two compositions.
    Front { below: Vec<f64>, above: Vec<f64>, interface: f64, width: f64 },
    /// Gaussian pocket of `core` in a `background` mixture.
    Blob { background: Vec<f64>, core: Vec<f64>, center: [f64; 2], radius: f64 },
    /// `mean + amplitude cos(kx π x / lx) cos(kz π z / lz)`; the amplitudes
    /// must sum to zero.
    Cosine { mean: Vec<f64>, amplitude: Vec<f64>, kx: u32, kz: u32 },
}

/// Initial temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialTheta {
    #[default]
    Zero,
    Uniform { value: f64 },
    Blob { peak: f64, center: [f64; 2], radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    /// Largest time step; smaller steps are taken when stability demands.
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_tol_pos")]
    pub tol_pos: f64,
    #[serde(default = "default_tol_sum")]
    pub tol_sum: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Steps between snapshots; `0` writes only the first and last state.
    #[serde(default)]
    pub snapshot_interval: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: default_directory(), snapshot_interval: 0 }
    }
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_samples() -> usize {
    kinetics::VALIDATION_SAMPLES
}
fn default_q() -> f64 {
    4.0
}
fn default_tol_pos() -> f64 {
    1e-10
}
fn default_tol_sum() -> f64 {
    1e-8
}
fn default_eta() -> f64 {
    DEFAULT_ETA
}
fn default_halvings() -> u32 {
    10
}
fn default_directory() -> PathBuf {
    PathBuf::from("output")
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::ConfigInvalid(msg.into())
}

fn check_simplex(name: &str, y: &[f64], n: usize, open: bool) -> Result<()> {
    if y.len() != n {
        return Err(invalid(format!("{name} has {} entries, expected {n}", y.len())));
    }
    if let Some(v) = y.iter().find(|v| if open { !(**v > 0.0) } else { !(**v >= 0.0) }) {
        return Err(invalid(format!("{name} entry {v} is not {}", if open { "positive" } else { "nonnegative" })));
    }
    let s: f64 = y.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let src = preset_source(name).ok_or_else(|| invalid(format!("unknown preset {name:?}; available: {}", PRESETS.join(", "))))?;
        Self::from_toml_str(src)
    }

    /// Loads `source` as a file if it exists, otherwise as a preset name.
    pub fn resolve(source: &str) -> Result<Self> {
        let path = Path::new(source);
        if path.exists() {
            Self::load(path)
        } else if preset_source(source).is_some() {
            Self::preset(source)
        } else {
            Err(Error::Io { path: path.to_path_buf(), source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such config file or preset") })
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn species_count(&self) -> usize {
        self.species.molar_masses.len()
    }

    pub fn species_set(&self) -> Result<SpeciesSet> {
        let n = self.species_count();
        let d = &self.species.diffusion;
        if d.len() != n || d.iter().any(|r| r.len() != n) {
            return Err(invalid(format!("diffusion must be a {n}x{n} matrix")));
        }
        let flat: Vec<f64> = d.iter().flatten().copied().collect();
        SpeciesSet::new(self.species.molar_masses.clone(), DMatrix::from_row_slice(n, n, &flat), self.species.kappa)
            .map_err(|e| invalid(format!("species: {e}")))
    }

    pub fn boundary(&self) -> BoundaryKind {
        self.physics.boundary.into()
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.nx, self.grid.nz, self.grid.lx, self.grid.lz)
    }

    pub fn regularization(&self) -> Result<RegularizationParams> {
        RegularizationParams::new(self.numerics.epsilon, self.numerics.q)
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances { positivity: self.numerics.tol_pos, sum: self.numerics.tol_sum }
    }

    pub fn gibbs(&self) -> Result<GibbsParams> {
        GibbsParams::new(self.numerics.eta, self.physics.inlet.clone())
    }

    /// The configured rate model, before validation.
    pub fn raw_model(&self) -> Result<Arc<dyn RateModel>> {
        let k = &self.kinetics;
        let n = self.species_count();
        let fixed = |name: &str, v: &Option<Vec<f64>>, len: usize, default: &[f64]| -> Result<Vec<f64>> {
            match v {
                None => Ok(default.to_vec()),
                Some(v) if v.len() == len => Ok(v.clone()),
                Some(v) => Err(invalid(format!("kinetics.{name} needs {len} entries, got {}", v.len()))),
            }
        };
        let need = |m: usize| {
            if n == m {
                Ok(())
            } else {
                Err(invalid(format!("model {:?} is for {m} species, config has {n}", k.model)))
            }
        };
        let model: Arc<dyn RateModel> = match k.model.as_str() {
            "none" => {
                if k.pre_exponential.is_some() || k.activation.is_some() || k.heats.is_some() {
                    return Err(invalid("model \"none\" takes no parameters"));
                }
                Arc::new(NoReaction::new(n))
            }
            "single_step" => {
                need(2)?;
                let a = fixed("pre_exponential", &k.pre_exponential, 1, &[1.0])?;
                let e = fixed("activation", &k.activation, 1, &[4.0])?;
                let h = fixed("heats", &k.heats, 2, &[1.0, 0.0])?;
                if h[1] != 0.0 {
                    return Err(invalid("single_step takes heats = [h, 0]"));
                }
                Arc::new(SingleStep::new(a[0], e[0], h[0]))
            }
            "chain" => {
                need(3)?;
                let a = fixed("pre_exponential", &k.pre_exponential, 2, &[1.0, 0.5])?;
                let e = fixed("activation", &k.activation, 2, &[4.0, 6.0])?;
                let h = fixed("heats", &k.heats, 3, &[2.0, 1.0, 0.0])?;
                Arc::new(Chain::new([a[0], a[1]], [e[0], e[1]], [h[0], h[1], h[2]]))
            }
            other => return Err(invalid(format!("unknown kinetics model {other:?} (none, single_step, chain)"))),
        };
        for (name, v) in [("pre_exponential", &k.pre_exponential), ("activation", &k.activation), ("heats", &k.heats)] {
            if let Some(v) = v {
                if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                    return Err(invalid(format!("kinetics.{name} entry {x} must be finite and nonnegative")));
                }
            }
        }
        Ok(model)
    }

    /// The configured rate model, checked against the kinetic assumptions.
    pub fn rate_model(&self) -> Result<ValidatedModel> {
        kinetics::validate(self.raw_model()?, self.kinetics.validation_samples, self.kinetics.seed)
    }

    pub fn initial_species(&self, grid: &Grid) -> Result<SpeciesField> {
        let n = self.species_count();
        let inlet = self.physics.inlet.clone();
        let (lx, lz) = (grid.lx, grid.lz);
        let blend = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| a + (b - a) * t).collect() };
        let field = match &self.physics.initial_species {
            InitialSpecies::Inlet => SpeciesField::uniform(grid, &inlet, inlet.clone()),
            InitialSpecies::Uniform { value } => {
                check_simplex("initial_species.value", value, n, false)?;
                SpeciesField::uniform(grid, value, inlet.clone())
            }
            InitialSpecies::Front { below, above, interface, width } => {
                check_simplex("initial_species.below", below, n, false)?;
                check_simplex("initial_species.above", above, n, false)?;
                if !(*width > 0.0) {
                    return Err(invalid("initial_species.width must be positive"));
                }
                SpeciesField::from_fn(grid, inlet.clone(), |_, z| blend(below, above, 0.5 * (1.0 + ((z - interface) / width).tanh())))
            }
            InitialSpecies::Blob { background, core, center, radius } => {
                check_simplex("initial_species.background", background, n, false)?;
                check_simplex("initial_species.core", core, n, false)?;
                if !(*radius > 0.0) {
                    return Err(invalid("initial_species.radius must be positive"));
                }
                SpeciesField::from_fn(grid, inlet.clone(), |x, z| {
                    let r2 = (x - center[0]).powi(2) + (z - center[1]).powi(2);
                    blend(background, core, (-r2 / (radius * radius)).exp())
                })
            }
            InitialSpecies::Cosine { mean, amplitude, kx, kz } => {
                check_simplex("initial_species.mean", mean, n, false)?;
                if amplitude.len() != n {
                    return Err(invalid(format!("initial_species.amplitude needs {n} entries")));
                }
                if amplitude.iter().sum::<f64>().abs() > 1e-12 {
                    return Err(invalid("initial_species.amplitude must sum to zero"));
                }
                let (kx, kz) = (f64::from(*kx), f64::from(*kz));
                SpeciesField::from_fn(grid, inlet.clone(), |x, z| {
                    let s = (kx * std::f64::consts::PI * x / lx).cos() * (kz * std::f64::consts::PI * z / lz).cos();
                    mean.iter().zip(amplitude).map(|(m, a)| m + a * s).collect()
                })
            }
        }
        .map_err(|e| invalid(format!("initial species: {e}")))?;
        if field.min() < 0.0 || field.max() > 1.0 {
            return Err(invalid("initial mass fractions leave [0, 1]"));
        }
        if field.max_sum_deviation() > 1e-12 {
            return Err(invalid("initial mass fractions do not sum to 1"));
        }
        Ok(field)
    }

    pub fn initial_theta(&self, grid: &Grid) -> Result<Vec<f64>> {
        let mut theta = vec![0.0; grid.cells()];
        match &self.physics.initial_theta {
            InitialTheta::Zero => {}
            InitialTheta::Uniform { value } => theta.fill(*value),
            InitialTheta::Blob { peak, center, radius } => {
                if !(*radius > 0.0) {
                    return Err(invalid("initial_theta.radius must be positive"));
                }
                for j in 0..grid.nz {
                    for i in 0..grid.nx {
                        let (x, z) = grid.center(i, j);
                        let r2 = (x - center[0]).powi(2) + (z - center[1]).powi(2);
                        theta[grid.cell(i, j)] = peak * (-r2 / (radius * radius)).exp();
                    }
                }
            }
        }
        if let Some(t) = theta.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(invalid(format!("initial temperature {t} must be finite and nonnegative")));
        }
        Ok(theta)
    }

    /// Checks every block against the preconditions of the solver modules.
    pub fn validate(&self) -> Result<()> {
        let n = self.species_count();
        self.species_set()?;
        check_simplex("physics.inlet", &self.physics.inlet, n, true)?;
        let grid = self.grid().map_err(|e| invalid(format!("grid: {e}")))?;
        let p = &self.physics;
        if !(p.prandtl > 0.0 && p.prandtl.is_finite()) {
            return Err(invalid(format!("physics.prandtl must be positive, got {}", p.prandtl)));
        }
        if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
            return Err(invalid(format!("physics.sigma must be nonnegative, got {}", p.sigma)));
        }
        let num = &self.numerics;
        if !(num.dt > 0.0 && num.dt.is_finite()) {
            return Err(invalid(format!("numerics.dt must be positive, got {}", num.dt)));
        }
        if !(num.t_end > 0.0 && num.t_end.is_finite()) {
            return Err(invalid(format!("numerics.t_end must be positive, got {}", num.t_end)));
        }
        if num.max_steps == Some(0) {
            return Err(invalid("numerics.max_steps must be positive"));
        }
        self.regularization().map_err(|e| invalid(format!("numerics: {e}")))?;
        if !(num.tol_pos > 0.0 && num.tol_sum > 0.0) {
            return Err(invalid("numerics tolerances must be positive"));
        }
        self.gibbs().map_err(|e| invalid(format!("numerics: {e}")))?;
        self.rate_model().map_err(|e| invalid(format!("kinetics: {e}")))?;
        self.initial_species(&grid)?;
        self.initial_theta(&grid)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in PRESETS {
            let mut c = RunConfig::preset(name).unwrap();
            c.kinetics.validation_samples = 2000;
            c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(RunConfig::preset("nope").is_err());
    }

    #[test]
    fn inlet_must_be_on_open_simplex() {
        let mut c = RunConfig::preset("diffusion_box").unwrap();
        c.kinetics.validation_samples = 100;
        c.physics.inlet = vec![0.5, 0.3, 0.3];
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid(_))));
        c.physics.inlet = vec![0.0, 0.5, 0.5];
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::preset("flame_channel").unwrap();
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = include_str!("../presets/binary_fick.toml").to_string();
        text.push_str("\n[extra]\nfoo = 1\n");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn model_must_match_species_count() {
        let mut c = RunConfig::preset("binary_fick").unwrap();
        c.kinetics.model = "chain".into();
        assert!(c.raw_model().is_err());
        c.kinetics.model = "single_step".into();
        assert!(c.raw_model().is_ok());
        c.kinetics.model = "magic".into();
        assert!(c.raw_model().is_err());
    }
}
