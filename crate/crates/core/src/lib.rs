//! Galerkin-truncated Fourier machinery for mild solutions of the 3D
//! incompressible Navier-Stokes equations on the torus `[0, 2π]³`, with
//! initial data in the pseudomeasure space `PM²`.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: the truncated frequency lattice `{k ∈ ℤ³ : 0 < |k|∞ ≤ N}`.
//! * [`field`]: spectral fields, time grids and trajectories, plus data generators.
//! * [`norms`]: `PM^a`, the space-time norms `𝒫ℳ^b`, `𝒵^c`, the triple norm and
//!   the weighted-sup seminorm `sup t^{a/2-1}‖u‖_{PM^a}`.
//! * [`operators`]: Leray projection, heat semigroup, Gevrey weights, exact
//!   truncated convolution and the Duhamel bilinear forms.
//! * [`solver`]: Picard iteration for the mild formulation (plain and weighted).
//! * [`lemma_oracle`]: brute-force certificate for the lattice convolution bound
//!   `|k| Σ_j 1/(|j|²|k-j|²) ≤ c`.
//! * [`analyticity`]: exponential Fourier decay measurement and weight inequalities.
//! * [`io`] and [`cli`]: file formats and the batch command runner.

pub mod analyticity;
pub mod cli;
pub mod error;
pub mod fft3;
pub mod field;
pub mod io;
pub mod lattice;
pub mod lemma_oracle;
pub mod norms;
pub mod operators;
pub mod quadrature;
pub mod solver;
pub mod summation;

pub use error::{Error, Result};
pub use field::{CVec3, FieldFlags, SpectralField, TimeGrid, Trajectory};
pub use lattice::{LatticeSpec, WaveVector};
