//! Compiles the guide's chapters as doc-tests, one module per chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/mixtures.md")]
pub mod mixtures {}
#[doc = include_str!("../../../book/src/stefan-maxwell.md")]
pub mod stefan_maxwell {}
#[doc = include_str!("../../../book/src/generalized-fluxes.md")]
pub mod generalized_fluxes {}
#[doc = include_str!("../../../book/src/kinetics.md")]
pub mod kinetics {}
#[doc = include_str!("../../../book/src/discretization.md")]
pub mod discretization {}
#[doc = include_str!("../../../book/src/flow.md")]
pub mod flow {}
#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}
#[doc = include_str!("../../../book/src/running.md")]
pub mod running {}
