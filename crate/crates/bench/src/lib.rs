//! Fixtures shared by the criterion benches.

use fmfd_core::orbitals::perturbed_family;
use fmfd_core::{modulated_family, Grid, OrbitalSet, Result, TwoBodyState};

/// Modulated closed-shell state on the `L = N^{1/3}` box.
pub fn scaled_state(n_particles: usize, n: usize) -> Result<OrbitalSet> {
    modulated_family(n_particles, Grid::new(n, (n_particles as f64).cbrt())?, 0.1)
}

/// A state and a perturbation of it, for trace-distance timings.
pub fn state_pair(n_particles: usize, n: usize) -> Result<(OrbitalSet, OrbitalSet)> {
    let a = scaled_state(n_particles, n)?;
    let b = perturbed_family(&a, 0.2, 2, 7)?;
    Ok((a, b))
}

/// Two-particle Slater state on the `L = 2^{1/3}` box.
pub fn two_body_state(n: usize) -> Result<TwoBodyState> {
    TwoBodyState::from_orbitals(&scaled_state(2, n)?)
}
