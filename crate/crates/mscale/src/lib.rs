//! Laboratory for multiscale decomposition of linear inverse problems with
//! Banach-norm regularization.
//!
//! The crate builds hierarchical decompositions `σ_n = Σ_{j≤n} u_j` where each
//! layer solves `min_u λ_n‖y − A(σ_{n−1}+u)‖² + R(u)` at geometrically growing
//! fidelity weights, and certifies every layer through the dual-norm
//! optimality characterization. It ships an explicit sequence-space operator
//! for which the decomposition provably diverges in `ℓ¹` even though the data
//! is exactly attainable, the closed-form machinery to verify that behavior
//! scale by scale, and a 1D total-variation denoising instantiation as the
//! contrasting classical use.
//!
//! Modules:
//! - [`seqspace`]: truncated sequence vectors and the four norms in play.
//! - [`operators`]: column-defined operators, the example operator, spectral
//!   estimates.
//! - [`counterexample`]: closed-form layers, residuals, pairing coefficients,
//!   and the scale-by-scale claim verifier.
//! - [`varsolve`]: proximal inner solver plus dual-norm certificates.
//! - [`multiscale`]: the outer iteration, diagnostics, TV denoising driver.
//! - [`report`]: JSON/CSV emission with atomic writes.

pub mod counterexample;
pub mod error;
pub mod multiscale;
pub mod operators;
pub mod report;
pub mod seqspace;
pub mod varsolve;

pub use error::{Error, Result};
pub use seqspace::SeqVector;
