//! Spectral simulator and diagnostics for fermionic mean-field dynamics with
//! a periodized Coulomb interaction on the torus `[0, L)^3`.

pub mod density_matrix;
pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod free_phase;
pub mod grid;
pub mod harness;
pub mod hartree;
pub mod kernel;
pub mod linalg;
pub mod orbitals;
pub mod spectral;
pub mod two_body;

pub use error::{Error, ErrorClass, Result};
pub use grid::{ComplexField, Grid, RealField};
pub use kernel::{KernelKind, KernelSpectrum, Sign};
pub use spectral::{spectral_derivative, Spectral};
pub use orbitals::{fermi_sphere, modulated_family, OrbitalSet};
pub use free_phase::{apply_phase, effective_residual, free_propagate, phase_gradients, PhaseState};
pub use hartree::{energy, hartree_evolve, hartree_step, HartreeOptions, HartreePropagator};
pub use density_matrix::{
    alpha_dense, alpha_functional, expectation_gap, sandwich_check, slater_dm, trace_distance, DenseDM,
    LowRankDM, Sandwich,
};
pub use diagnostics::{deviation_norms, hls_ratios, lieb_thirring_ratio, vsq_sup, DeviationNorms, VsqSup};
pub use two_body::{compare_run, reduced_dm, slater_to_twobody, CompareConfig, CompareRow, TwoBodyPropagator, TwoBodyState};
