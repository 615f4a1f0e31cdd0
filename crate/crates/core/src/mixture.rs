//! Species metadata and the algebra between mass fractions, mole fractions
//! and their gradients.
//!
//! Mass fractions `Y` and mole fractions `X` are related through the molar
//! sum `Y_M = Σ Y_j / M_j`:
//!
//! ```text
//! X_i = Y_i / (M_i Y_M),    Y_i = M_i X_i / X_M,    X_M = Σ M_j X_j = 1 / Y_M
//! ```

use std::ops::Deref;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Threshold on `Σ Y_i` (and per-species on `Y_i`) below which a mass
/// fraction is treated as zero.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// Immutable description of the chemistry: molar masses, binary diffusion
/// coefficients and the thermal diffusion constant.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesSet {
    molar_masses: Vec<f64>,
    diffusion: DMatrix<f64>,
    kappa: f64,
    /// `d'_ij = kappa / (D_ij M_i M_j)`, zero on the diagonal.
    scaled: DMatrix<f64>,
    dprime_low: f64,
    dprime_high: f64,
}

impl SpeciesSet {
    /// Builds a species set from molar masses `M`, the binary diffusion
    /// matrix `D` (diagonal ignored) and the constant `kappa`.
    pub fn new(molar_masses: Vec<f64>, diffusion: DMatrix<f64>, kappa: f64) -> Result<Self> {
        let n = molar_masses.len();
        if n < 2 {
            return Err(Error::InvalidSpecies(format!("need at least two species, got {n}")));
        }
        if diffusion.nrows() != n || diffusion.ncols() != n {
            return Err(Error::InvalidSpecies(format!(
                "diffusion matrix is {}x{}, expected {n}x{n}",
                diffusion.nrows(),
                diffusion.ncols()
            )));
        }
        if let Some((i, m)) = molar_masses.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidSpecies(format!("molar mass M_{} = {m} must be positive", i + 1)));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::InvalidSpecies(format!("kappa = {kappa} must be positive")));
        }
        let mut scaled = DMatrix::zeros(n, n);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dij = diffusion[(i, j)];
                let dji = diffusion[(j, i)];
                if !(dij.is_finite() && dij > 0.0) {
                    return Err(Error::InvalidSpecies(format!(
                        "D_{}{} = {dij} must be positive",
                        i + 1,
                        j + 1
                    )));
                }
                if (dij - dji).abs() > 1e-12 * dij.abs().max(dji.abs()) {
                    return Err(Error::InvalidSpecies(format!(
                        "D is not symmetric: D_{}{} = {dij}, D_{}{} = {dji}",
                        i + 1,
                        j + 1,
                        j + 1,
                        i + 1
                    )));
                }
                let d = kappa / dij / (molar_masses[i] * molar_masses[j]);
                if !(d.is_finite() && d > 0.0) {
                    return Err(Error::InvalidSpecies(format!("d'_{}{} = {d} is not finite and positive", i + 1, j + 1)));
                }
                scaled[(i, j)] = d;
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        // Symmetrize exactly so B(Y) built from d' is exactly symmetric.
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (scaled[(i, j)] + scaled[(j, i)]);
                scaled[(i, j)] = avg;
                scaled[(j, i)] = avg;
            }
        }
        Ok(Self { molar_masses, diffusion, kappa, scaled, dprime_low: lo, dprime_high: hi })
    }

    /// Convenience constructor from the mass-scaled coefficients `d'_ij`
    /// directly, with `kappa = 1`.
    pub fn from_scaled(molar_masses: Vec<f64>, dprime: DMatrix<f64>) -> Result<Self> {
        let n = molar_masses.len();
        if dprime.nrows() != n || dprime.ncols() != n {
            return Err(Error::InvalidSpecies("d' matrix has the wrong shape".into()));
        }
        let diffusion = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                1.0 / (dprime[(i, j)] * molar_masses[i] * molar_masses[j])
            }
        });
        Self::new(molar_masses, diffusion, 1.0)
    }

    pub fn len(&self) -> usize {
        self.molar_masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.molar_masses.is_empty()
    }

    pub fn molar_masses(&self) -> &[f64] {
        &self.molar_masses
    }

    pub fn molar_mass(&self, i: usize) -> f64 {
        self.molar_masses[i]
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.diffusion
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `d_ij = kappa / D_ij`.
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.kappa / self.diffusion[(i, j)]
    }

    /// `d'_ij = d_ij / (M_i M_j)`; zero on the diagonal.
    pub fn d_prime(&self, i: usize, j: usize) -> f64 {
        self.scaled[(i, j)]
    }

    pub fn d_prime_matrix(&self) -> &DMatrix<f64> {
        &self.scaled
    }

    pub fn m_low(&self) -> f64 {
        self.molar_masses.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn m_high(&self) -> f64 {
        self.molar_masses.iter().copied().fold(0.0, f64::max)
    }

    /// `M̃ = M_high / M_low`.
    pub fn m_ratio(&self) -> f64 {
        self.m_high() / self.m_low()
    }

    pub fn d_prime_low(&self) -> f64 {
        self.dprime_low
    }

    pub fn d_prime_high(&self) -> f64 {
        self.dprime_high
    }

    /// Regularization weight of the Stefan–Maxwell matrix, `γ = min d'_ij`.
    pub fn gamma(&self) -> f64 {
        self.dprime_low
    }
}

/// Mass-fraction vector at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition(Vec<f64>);

impl Composition {
    pub fn new(y: Vec<f64>) -> Self {
        Self(y)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `Y_i ≥ -tol` and `|Σ Y_i - 1| ≤ tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        self.0.iter().all(|&y| y >= -tol) && (self.sum() - 1.0).abs() <= tol
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Composition {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Composition {
    fn from(y: Vec<f64>) -> Self {
        Self(y)
    }
}

/// Mole fractions with the molar sum `Y_M` and the mean molar mass `X_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoleData {
    pub x: Vec<f64>,
    pub y_m: f64,
    pub x_m: f64,
}

/// `Y_M = Σ Y_j / M_j`.
pub fn molar_sum(species: &SpeciesSet, y: &[f64]) -> f64 {
    y.iter().zip(species.molar_masses()).map(|(y, m)| y / m).sum()
}

fn check_composition(species: &SpeciesSet, y: &[f64]) -> Result<()> {
    assert_eq!(y.len(), species.len(), "composition length must match the species count");
    if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::InvalidComposition(format!("Y_{} = {v} is negative", i + 1)));
    }
    let sum: f64 = y.iter().sum();
    if sum <= DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateComposition { sum });
    }
    Ok(())
}

/// Mole fractions `X_i = Y_i / (M_i Y_M)`.
pub fn mole_fractions(species: &SpeciesSet, y: &[f64]) -> Result<MoleData> {
    check_composition(species, y)?;
    let y_m = molar_sum(species, y);
    let x: Vec<f64> = y.iter().zip(species.molar_masses()).map(|(y, m)| y / (m * y_m)).collect();
    let x_m = x.iter().zip(species.molar_masses()).map(|(x, m)| m * x).sum();
    Ok(MoleData { x, y_m, x_m })
}

/// Inverse map `Y_i = M_i X_i / X_M`; returns mass fractions summing to one.
pub fn mass_from_mole(species: &SpeciesSet, x: &[f64]) -> Vec<f64> {
    let x_m: f64 = x.iter().zip(species.molar_masses()).map(|(x, m)| m * x).sum();
    x.iter().zip(species.molar_masses()).map(|(x, m)| m * x / x_m).collect()
}

/// Mole-fraction gradients from mass-fraction gradients (species-major,
/// one column per spatial direction):
///
/// `∇X_i = ∇Y_i / (M_i Y_M) - Y_i / (M_i Y_M²) Σ_ℓ ∇Y_ℓ / M_ℓ`.
pub fn grad_mole_from_mass(species: &SpeciesSet, y: &[f64], grad_y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_composition(species, y)?;
    assert_eq!(grad_y.nrows(), species.len(), "gradient rows must match the species count");
    let y_m = molar_sum(species, y);
    let m = species.molar_masses();
    let mut grad_ym = vec![0.0; grad_y.ncols()];
    for (l, g) in grad_ym.iter_mut().enumerate() {
        *g = (0..m.len()).map(|k| grad_y[(k, l)] / m[k]).sum();
    }
    Ok(DMatrix::from_fn(grad_y.nrows(), grad_y.ncols(), |i, l| {
        grad_y[(i, l)] / (m[i] * y_m) - y[i] / (m[i] * y_m * y_m) * grad_ym[l]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_species(m: Vec<f64>) -> SpeciesSet {
        let n = m.len();
        SpeciesSet::from_scaled(m, DMatrix::from_element(n, n, 1.0)).unwrap()
    }

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let e: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn binary_mole_fractions() {
        let sp = uniform_species(vec![1.0, 2.0]);
        let md = mole_fractions(&sp, &[0.5, 0.5]).unwrap();
        assert_close!(md.y_m, 0.75, 1e-15);
        assert_close!(md.x[0], 2.0 / 3.0, 1e-15);
        assert_close!(md.x[1], 1.0 / 3.0, 1e-15);
        assert_close!(md.y_m * md.x_m, 1.0, 1e-15);
    }

    #[test]
    fn pure_species_is_its_own_mole_fraction() {
        let sp = uniform_species(vec![1.0, 17.0, 3.5]);
        let md = mole_fractions(&sp, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(md.x, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn equal_masses_give_x_equal_y() {
        let sp = uniform_species(vec![2.5; 4]);
        let y = [0.1, 0.2, 0.3, 0.4];
        let md = mole_fractions(&sp, &y).unwrap();
        for (x, y) in md.x.iter().zip(y) {
            assert_close!(*x, y, 1e-15);
        }
    }

    #[test]
    fn degenerate_composition_is_reported() {
        let sp = uniform_species(vec![1.0, 2.0]);
        assert!(matches!(mole_fractions(&sp, &[0.0, 1e-13]), Err(Error::DegenerateComposition { .. })));
        assert!(matches!(
            grad_mole_from_mass(&sp, &[0.0, 0.0], &DMatrix::zeros(2, 2)),
            Err(Error::DegenerateComposition { .. })
        ));
        assert!(matches!(mole_fractions(&sp, &[-0.1, 1.1]), Err(Error::InvalidComposition(_))));
    }

    #[test]
    fn invalid_species_sets_are_rejected() {
        assert!(SpeciesSet::new(vec![1.0, -1.0], DMatrix::from_element(2, 2, 1.0), 1.0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 1.0]);
        assert!(SpeciesSet::new(vec![1.0, 1.0], asym, 1.0).is_err());
        let zero = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(SpeciesSet::new(vec![1.0, 1.0], zero, 1.0).is_err());
        // Diagonal entries are ignored.
        let diag = DMatrix::from_row_slice(2, 2, &[-5.0, 0.5, 0.5, f64::NAN]);
        let sp = SpeciesSet::new(vec![1.0, 2.0], diag, 3.0).unwrap();
        assert_close!(sp.d(0, 1), 6.0, 1e-15);
        assert_close!(sp.d_prime(0, 1), 3.0, 1e-15);
        assert_close!(sp.m_ratio(), 2.0, 0.0);
    }

    #[test]
    fn zero_gradient_maps_to_zero() {
        let sp = uniform_species(vec![1.0, 2.0, 3.0]);
        let g = grad_mole_from_mass(&sp, &[0.2, 0.3, 0.5], &DMatrix::zeros(3, 2)).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_masses_with_balanced_gradient_keep_gradient() {
        let sp = uniform_species(vec![1.0; 3]);
        let gy = DMatrix::from_row_slice(3, 2, &[0.3, -1.0, 0.2, 0.5, -0.5, 0.5]);
        let gx = grad_mole_from_mass(&sp, &[0.2, 0.3, 0.5], &gy).unwrap();
        for (a, b) in gx.iter().zip(gy.iter()) {
            assert_close!(*a, *b, 1e-15);
        }
    }

    #[test]
    fn round_trip_normalizes() {
        let sp = uniform_species(vec![1.0, 4.0, 2.0]);
        let y = [0.2, 0.4, 0.6];
        let md = mole_fractions(&sp, &y).unwrap();
        let back = mass_from_mole(&sp, &md.x);
        for (b, y) in back.iter().zip(y) {
            assert_close!(*b, y / 1.2, 1e-12);
        }
    }

    #[test]
    fn molar_sum_bounds_on_simplex_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sp = uniform_species(vec![1.0, 4.5, 2.0, 16.0]);
        let (lo, hi) = (sp.m_low(), sp.m_high());
        for _ in 0..100_000 {
            let y = random_simplex(&mut rng, 4);
            let md = mole_fractions(&sp, &y).unwrap();
            assert!(md.y_m >= 1.0 / hi * (1.0 - 1e-14) && md.y_m <= 1.0 / lo * (1.0 + 1e-14));
            assert!(md.x_m >= lo * (1.0 - 1e-14) && md.x_m <= hi * (1.0 + 1e-14));
            assert_close!(md.x.iter().sum::<f64>(), 1.0, 1e-14);
            assert_close!(md.y_m * md.x_m, 1.0, 1e-14);
        }
    }

    #[test]
    fn gradient_norm_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sp = uniform_species(vec![1.0, 3.0, 7.0]);
        let n = sp.len();
        let c = 2.0 * n as f64 * sp.m_ratio().powi(2);
        for _ in 0..20_000 {
            let y = random_simplex(&mut rng, n);
            let mut gy = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
            for l in 0..2 {
                let mean = gy.column(l).sum() / n as f64;
                gy.column_mut(l).add_scalar_mut(-mean);
            }
            let gx = grad_mole_from_mass(&sp, &y, &gy).unwrap();
            let (nx, ny) = (gx.norm(), gy.norm());
            assert!(nx <= c * ny * (1.0 + 1e-12), "|∇X| = {nx}, |∇Y| = {ny}");
            assert!(ny <= c * nx * (1.0 + 1e-12), "|∇Y| = {ny}, |∇X| = {nx}");
        }
    }

    proptest::proptest! {
        #[test]
        fn mole_round_trip(raw in proptest::collection::vec(0.0f64..1.0, 3),
                           m in proptest::collection::vec(0.5f64..40.0, 3)) {
            proptest::prop_assume!(raw.iter().sum::<f64>() > 1e-6);
            let sp = uniform_species(m);
            let md = mole_fractions(&sp, &raw).unwrap();
            let back = mass_from_mole(&sp, &md.x);
            let s: f64 = raw.iter().sum();
            for (b, y) in back.iter().zip(&raw) {
                proptest::prop_assert!((b - y / s).abs() <= 1e-12);
            }
        }
    }
}
