//! Multicomponent reacting flow with Stefan–Maxwell diffusion.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} = {a:e} vs {} = {b:e} (tol {tol:e})", stringify!($a), stringify!($b));
    }};
}

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod hydro;
pub mod kinetics;
pub mod linalg;
pub mod mixture;
pub mod output;
pub mod rd_solver;
pub mod simulation;
pub mod stefan_maxwell;
pub mod verify;

pub use nalgebra;

pub use error::{Error, Result};
pub use mixture::{Composition, SpeciesSet};
