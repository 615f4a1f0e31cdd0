//! Reaction rates `ω_i = α_i(θ, Y) - Y_i β_i(θ, Y)` with heats of reaction.
//!
//! A model is only usable once it has passed [`validate`], which samples the
//! structural assumptions every rate model must satisfy: nonnegative
//! production and removal factors, rates summing to zero, a global bound
//! `K2`, and no heat absorption at `θ = 0`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A reaction-rate model split into production and removal parts.
pub trait RateModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn species_count(&self) -> usize;

    /// Production rates `α_i(θ, Y)`, for `θ ≥ 0` and `Y ∈ [0, 1]^N`.
    fn production(&self, theta: f64, y: &[f64], out: &mut [f64]);

    /// Removal factors `β_i(θ, Y)`; species `i` is consumed at `Y_i β_i`.
    fn removal(&self, theta: f64, y: &[f64], out: &mut [f64]);

    /// Heats of reaction `h_i`.
    fn heats(&self) -> &[f64];

    /// Global bound `K2` on `|α_i|`, `|β_i|` and `|ω_i|`.
    fn rate_bound(&self) -> f64;

    /// Lipschitz constant of `ω` in `(θ, Y)`, used for time-step control.
    fn lipschitz(&self) -> f64;
}

/// Arrhenius factor `A exp(-E/θ)`, continuously extended by 0 at `θ = 0`.
pub fn arrhenius(pre_exponential: f64, activation: f64, theta: f64) -> f64 {
    if theta <= 0.0 {
        0.0
    } else {
        pre_exponential * (-activation / theta).exp()
    }
}

/// Bound on `|d/dθ A exp(-E/θ)|`, attained at `θ = E/2`.
fn arrhenius_slope_bound(pre_exponential: f64, activation: f64) -> f64 {
    if activation <= 0.0 {
        0.0
    } else {
        pre_exponential * 4.0 / (activation * std::f64::consts::E.powi(2))
    }
}

/// Inert mixture: every rate vanishes.
#[derive(Debug, Clone)]
pub struct NoReaction {
    heats: Vec<f64>,
}

impl NoReaction {
    pub fn new(species: usize) -> Self {
        Self { heats: vec![0.0; species] }
    }
}

impl RateModel for NoReaction {
    fn name(&self) -> &str {
        "none"
    }
    fn species_count(&self) -> usize {
        self.heats.len()
    }
    fn production(&self, _: f64, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn removal(&self, _: f64, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn heats(&self) -> &[f64] {
        &self.heats
    }
    fn rate_bound(&self) -> f64 {
        0.0
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
}

/// Single irreversible step `A → B` with
/// `ω_A = -Y_A k(θ)`, `ω_B = -ω_A`, `k = A₀ exp(-E/θ)`.
#[derive(Debug, Clone)]
pub struct SingleStep {
    pub pre_exponential: f64,
    pub activation: f64,
    heats: [f64; 2],
}

impl SingleStep {
    pub fn new(pre_exponential: f64, activation: f64, heat: f64) -> Self {
        Self { pre_exponential, activation, heats: [heat, 0.0] }
    }
}

impl Default for SingleStep {
    fn default() -> Self {
        Self::new(1.0, 4.0, 1.0)
    }
}

impl RateModel for SingleStep {
    fn name(&self) -> &str {
        "single_step"
    }
    fn species_count(&self) -> usize {
        2
    }
    fn production(&self, theta: f64, y: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = y[0] * arrhenius(self.pre_exponential, self.activation, theta);
    }
    fn removal(&self, theta: f64, _: &[f64], out: &mut [f64]) {
        out[0] = arrhenius(self.pre_exponential, self.activation, theta);
        out[1] = 0.0;
    }
    fn heats(&self) -> &[f64] {
        &self.heats
    }
    fn rate_bound(&self) -> f64 {
        self.pre_exponential
    }
    fn lipschitz(&self) -> f64 {
        self.pre_exponential + arrhenius_slope_bound(self.pre_exponential, self.activation)
    }
}

/// Two-step chain `A → B → C` with Arrhenius rates `k₁, k₂`:
/// `ω_A = -k₁ Y_A`, `ω_B = k₁ Y_A - k₂ Y_B`, `ω_C = k₂ Y_B`.
///
/// Heat is released (never absorbed) when `h_A ≥ h_B ≥ h_C`.
#[derive(Debug, Clone)]
pub struct Chain {
    pub pre_exponential: [f64; 2],
    pub activation: [f64; 2],
    heats: [f64; 3],
}

impl Chain {
    pub fn new(pre_exponential: [f64; 2], activation: [f64; 2], heats: [f64; 3]) -> Self {
        Self { pre_exponential, activation, heats }
    }

    fn rates(&self, theta: f64) -> (f64, f64) {
        (
            arrhenius(self.pre_exponential[0], self.activation[0], theta),
            arrhenius(self.pre_exponential[1], self.activation[1], theta),
        )
    }
}

impl Default for Chain {
    fn default() -> Self {
        Self::new([1.0, 0.5], [4.0, 6.0], [2.0, 1.0, 0.0])
    }
}

impl RateModel for Chain {
    fn name(&self) -> &str {
        "chain"
    }
    fn species_count(&self) -> usize {
        3
    }
    fn production(&self, theta: f64, y: &[f64], out: &mut [f64]) {
        let (k1, k2) = self.rates(theta);
        out[0] = 0.0;
        out[1] = k1 * y[0];
        out[2] = k2 * y[1];
    }
    fn removal(&self, theta: f64, _: &[f64], out: &mut [f64]) {
        let (k1, k2) = self.rates(theta);
        out[0] = k1;
        out[1] = k2;
        out[2] = 0.0;
    }
    fn heats(&self) -> &[f64] {
        &self.heats
    }
    fn rate_bound(&self) -> f64 {
        self.pre_exponential[0].max(self.pre_exponential[1])
    }
    fn lipschitz(&self) -> f64 {
        (0..2)
            .map(|r| self.pre_exponential[r] + arrhenius_slope_bound(self.pre_exponential[r], self.activation[r]))
            .sum()
    }
}

/// A model that has passed [`validate`]. Cheap to clone.
#[derive(Debug, Clone)]
pub struct ValidatedModel {
    model: Arc<dyn RateModel>,
    report: AssumptionReport,
}

impl ValidatedModel {
    pub fn report(&self) -> &AssumptionReport {
        &self.report
    }

    pub fn model(&self) -> &dyn RateModel {
        self.model.as_ref()
    }
}

impl std::ops::Deref for ValidatedModel {
    type Target = dyn RateModel;

    fn deref(&self) -> &Self::Target {
        self.model.as_ref()
    }
}

/// Worst values seen while sampling a model's assumptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport {
    pub samples: usize,
    /// Most negative `α_i` or `β_i` (0 when none was negative).
    pub min_factor: f64,
    pub max_rate_sum: f64,
    pub max_magnitude: f64,
    pub max_magnitude_extended: f64,
    /// Largest `Σ h_i ω_i(0, Y)`.
    pub max_cold_heat: f64,
}

/// Default number of samples drawn by [`validate`].
pub const VALIDATION_SAMPLES: usize = 100_000;

/// Samples the model assumptions and returns the worst values found.
pub fn check_assumptions(model: &dyn RateModel, samples: usize, seed: u64) -> AssumptionReport {
    let n = model.species_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut report = AssumptionReport {
        samples,
        min_factor: 0.0,
        max_rate_sum: 0.0,
        max_magnitude: 0.0,
        max_magnitude_extended: 0.0,
        max_cold_heat: f64::NEG_INFINITY,
    };
    for s in 0..samples {
        let theta = if s % 10 == 0 { 0.0 } else { 10f64.powf(rng.random_range(-3.0..3.0)) };
        for v in y.iter_mut() {
            *v = match rng.random_range(0..8) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random_range(0.0..=1.0),
            };
        }
        model.production(theta, &y, &mut alpha);
        model.removal(theta, &y, &mut beta);
        let mut sum = 0.0;
        for i in 0..n {
            report.min_factor = report.min_factor.min(alpha[i]).min(beta[i]);
            let w = alpha[i] - y[i] * beta[i];
            sum += w;
            report.max_magnitude = report.max_magnitude.max(alpha[i].abs()).max(beta[i].abs()).max(w.abs());
        }
        report.max_rate_sum = report.max_rate_sum.max(sum.abs());

        model.production(0.0, &y, &mut alpha);
        model.removal(0.0, &y, &mut beta);
        let cold: f64 = (0..n).map(|i| model.heats()[i] * (alpha[i] - y[i] * beta[i])).sum();
        report.max_cold_heat = report.max_cold_heat.max(cold);

        let theta_ext = rng.random_range(-10.0..1000.0);
        let y_ext: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..3.0)).collect();
        let w = extended_rates(model, theta_ext, &y_ext);
        report.max_magnitude_extended = w.iter().fold(report.max_magnitude_extended, |m, v| m.max(v.abs()));
    }
    report
}

/// Validates a model against its structural assumptions; a model failing any
/// check is rejected.
pub fn validate(model: Arc<dyn RateModel>, samples: usize, seed: u64) -> Result<ValidatedModel> {
    let reject = |reason: String| Error::ModelRejected { model: model.name().to_string(), reason };
    if model.heats().len() != model.species_count() {
        return Err(reject("heats length differs from species count".into()));
    }
    let k2 = model.rate_bound();
    if !(k2.is_finite() && k2 >= 0.0) {
        return Err(reject(format!("rate bound K2 = {k2} is not finite and nonnegative")));
    }
    let lip = model.lipschitz();
    if !(lip.is_finite() && lip >= 0.0) {
        return Err(reject(format!("Lipschitz constant {lip} is not finite and nonnegative")));
    }
    let report = check_assumptions(model.as_ref(), samples, seed);
    let scale = k2.max(1.0);
    if report.min_factor < 0.0 {
        return Err(reject(format!("negative production or removal factor {:e}", report.min_factor)));
    }
    if report.max_rate_sum > 1e-12 * scale {
        return Err(reject(format!("rates do not sum to zero (|Σω| = {:e})", report.max_rate_sum)));
    }
    let bound = k2 * (1.0 + 1e-12);
    if report.max_magnitude > bound || report.max_magnitude_extended > bound {
        return Err(reject(format!(
            "rates exceed the declared bound K2 = {k2} (saw {:e})",
            report.max_magnitude.max(report.max_magnitude_extended)
        )));
    }
    if report.max_cold_heat > 1e-12 * scale {
        return Err(reject(format!("heat is absorbed at θ = 0 (Σ h ω = {:e})", report.max_cold_heat)));
    }
    Ok(ValidatedModel { model, report })
}

/// `ω_i = α_i - Y_i β_i` on the physical domain `θ ≥ 0`, `Y ∈ [0, 1]^N`.
pub fn rates(model: &dyn RateModel, theta: f64, y: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(y.len(), model.species_count(), "composition length must match the model");
    if !(theta >= 0.0) {
        return Err(Error::DomainViolation(format!("θ = {theta} is negative")));
    }
    if let Some(v) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::DomainViolation(format!("mass fraction {v} outside [0, 1]")));
    }
    Ok(raw_rates(model, theta, y))
}

fn raw_rates(model: &dyn RateModel, theta: f64, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    model.production(theta, y, &mut alpha);
    model.removal(theta, y, &mut beta);
    (0..n).map(|i| alpha[i] - y[i] * beta[i]).collect()
}

/// Rates extended to all of `R^{N+1}` by evaluating at `(θ⁺, ψ(Y))` with
/// `ψ` the clamp to `[0, 1]`.
pub fn extended_rates(model: &dyn RateModel, theta: f64, y: &[f64]) -> Vec<f64> {
    assert_eq!(y.len(), model.species_count(), "composition length must match the model");
    let clipped: Vec<f64> = y.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    raw_rates(model, theta.max(0.0), &clipped)
}

/// Heat source `-Σ h_i ω_i` of the temperature equation (extended rates).
pub fn heat_release(model: &dyn RateModel, theta: f64, y: &[f64]) -> f64 {
    let w = extended_rates(model, theta, y);
    -w.iter().zip(model.heats()).map(|(w, h)| h * w).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct NegativeProduction;

    impl RateModel for NegativeProduction {
        fn name(&self) -> &str {
            "broken"
        }
        fn species_count(&self) -> usize {
            2
        }
        fn production(&self, _: f64, y: &[f64], out: &mut [f64]) {
            out[0] = -0.1 * y[1];
            out[1] = 0.1 * y[1];
        }
        fn removal(&self, _: f64, _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn heats(&self) -> &[f64] {
            &[1.0, 0.0]
        }
        fn rate_bound(&self) -> f64 {
            1.0
        }
        fn lipschitz(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn absent_species_is_only_produced() {
        let m = Chain::default();
        let w = rates(&m, 2.0, &[0.5, 0.0, 0.5]).unwrap();
        let mut alpha = [0.0; 3];
        m.production(2.0, &[0.5, 0.0, 0.5], &mut alpha);
        assert_eq!(w[1], alpha[1]);
        assert!(w[1] >= 0.0);
    }

    #[test]
    fn single_step_hand_values() {
        let m = SingleStep::default();
        let w = rates(&m, 1.0, &[1.0, 0.0]).unwrap();
        let k = (-4.0f64).exp();
        assert!((w[0] + k).abs() < 1e-16);
        assert!((w[1] - k).abs() < 1e-16);
        assert!((heat_release(&m, 1.0, &[1.0, 0.0]) - k).abs() < 1e-16);
    }

    #[test]
    fn extension_clips_arguments() {
        let m = SingleStep::default();
        assert_eq!(extended_rates(&m, -1.0, &[0.7, 0.3]), vec![0.0, 0.0]);
        assert_eq!(extended_rates(&m, 2.0, &[1.7, -0.2]), rates(&m, 2.0, &[1.0, 0.0]).unwrap());
        assert_eq!(extended_rates(&m, 2.0, &[0.3, 0.7]), rates(&m, 2.0, &[0.3, 0.7]).unwrap());
    }

    #[test]
    fn domain_is_enforced() {
        let m = SingleStep::default();
        assert!(matches!(rates(&m, -0.5, &[0.5, 0.5]), Err(Error::DomainViolation(_))));
        assert!(matches!(rates(&m, 0.5, &[1.5, 0.5]), Err(Error::DomainViolation(_))));
    }

    #[test]
    fn cold_mixture_does_not_absorb_heat() {
        for m in [&SingleStep::default() as &dyn RateModel, &Chain::default()] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..1000 {
                let y: Vec<f64> = (0..m.species_count()).map(|_| rng.random_range(0.0..=1.0)).collect();
                assert!(heat_release(m, 0.0, &y) >= 0.0);
            }
        }
        // A mixture at equilibrium releases nothing.
        assert_eq!(heat_release(&Chain::default(), 3.0, &[0.0, 0.0, 1.0]), 0.0);
    }

    #[test]
    fn shipped_models_pass_validation() {
        for m in [
            Arc::new(NoReaction::new(3)) as Arc<dyn RateModel>,
            Arc::new(SingleStep::default()),
            Arc::new(Chain::default()),
            Arc::new(Chain::new([20.0, 5.0], [4.0, 6.0], [3.0, 1.0, 0.0])),
        ] {
            let v = validate(m, 20_000, 42).unwrap();
            assert!(v.report().max_rate_sum <= 1e-12);
        }
    }

    #[test]
    fn broken_model_is_rejected() {
        let r = validate(Arc::new(NegativeProduction), 1000, 42);
        assert!(matches!(r, Err(Error::ModelRejected { .. })), "{r:?}");
    }

    #[test]
    fn endothermic_chain_is_rejected_only_if_cold_heat_is_positive() {
        // Rates vanish at θ = 0, so reversed heats still pass the cold check.
        assert!(validate(Arc::new(Chain::new([1.0, 1.0], [1.0, 1.0], [0.0, 1.0, 2.0])), 1000, 1).is_ok());
    }
}
