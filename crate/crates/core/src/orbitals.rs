//! Orthonormal orbital families and the quantities measured on them.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, RealField};
use crate::kernel::Sign;
use crate::linalg::{self, CMat};
use crate::spectral::Spectral;

/// Gram deviation accepted by [`OrbitalSet::new`].
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-10;

/// `N` orbitals on a common grid together with the coupling `lambda` and the
/// interaction sign used by every dynamics that consumes them.
#[derive(Debug, Clone)]
pub struct OrbitalSet {
    grid: Grid,
    orbitals: Vec<ComplexField>,
    coupling: f64,
    sign: Sign,
}

/// Mean-field coupling `N^{-2/3}`.
pub fn mean_field_coupling(n_particles: usize) -> f64 {
    (n_particles as f64).powf(-2.0 / 3.0)
}

impl OrbitalSet {
    /// Validates orthonormality; coupling defaults to `N^{-2/3}`.
    pub fn new(grid: Grid, orbitals: Vec<ComplexField>, sign: Sign) -> Result<Self> {
        let set = Self::from_orbitals_unchecked(grid, orbitals, sign)?;
        let dev = set.gram_deviation();
        // also rejects NaN
        if dev.is_nan() || dev > ORTHONORMALITY_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "orbitals are not orthonormal: Gram deviation {dev:e}"
            )));
        }
        Ok(set)
    }

    /// Skips the orthonormality check (grids and count are still validated).
    pub fn from_orbitals_unchecked(grid: Grid, orbitals: Vec<ComplexField>, sign: Sign) -> Result<Self> {
        if orbitals.is_empty() {
            return Err(Error::InvalidParameter("an orbital set needs N >= 1".into()));
        }
        for f in &orbitals {
            grid.check_same(f.grid(), "orbital set")?;
        }
        let coupling = mean_field_coupling(orbitals.len());
        Ok(Self { grid, orbitals, coupling, sign })
    }

    /// Overrides the coupling, e.g. `0` for decoupled reference runs.
    pub fn with_coupling(mut self, coupling: f64) -> Result<Self> {
        if !coupling.is_finite() || coupling < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "coupling must be finite and non-negative, got {coupling}"
            )));
        }
        self.coupling = coupling;
        Ok(self)
    }

    pub fn with_sign(mut self, sign: Sign) -> Self {
        self.sign = sign;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_particles(&self) -> usize {
        self.orbitals.len()
    }

    pub fn orbitals(&self) -> &[ComplexField] {
        &self.orbitals
    }

    pub(crate) fn orbitals_mut(&mut self) -> &mut [ComplexField] {
        &mut self.orbitals
    }

    pub fn into_orbitals(self) -> Vec<ComplexField> {
        self.orbitals
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// Same metadata, new orbital data.
    pub(crate) fn replace_orbitals(&self, orbitals: Vec<ComplexField>) -> Self {
        debug_assert_eq!(orbitals.len(), self.orbitals.len());
        Self {
            grid: self.grid,
            orbitals,
            coupling: self.coupling,
            sign: self.sign,
        }
    }

    pub(crate) fn slices(&self) -> Vec<&[Complex64]> {
        self.orbitals.iter().map(|f| f.values()).collect()
    }

    /// `rho(x) = sum_j |phi_j(x)|^2`, summed over `j` in order at every point.
    pub fn density(&self) -> RealField {
        let len = self.grid.len();
        let mut values = vec![0.0; len];
        values
            .par_chunks_mut(2048)
            .enumerate()
            .for_each(|(c, chunk)| {
                let start = c * 2048;
                for f in &self.orbitals {
                    let src = &f.values()[start..start + chunk.len()];
                    for (r, v) in chunk.iter_mut().zip(src) {
                        *r += v.norm_sqr();
                    }
                }
            });
        RealField::from_values(self.grid, values).expect("length matches grid")
    }

    /// `sum_j ||nabla^a phi_j||^2`.
    pub fn sobolev_sum(&self, order: u32) -> Result<f64> {
        self.sobolev_sum_with(&Spectral::new(self.grid), order)
    }

    pub fn sobolev_sum_with(&self, spectral: &Spectral, order: u32) -> Result<f64> {
        let terms: Vec<Result<f64>> = self
            .orbitals
            .par_iter()
            .map(|f| spectral.derivative_norm_sqr(f, order))
            .collect();
        let mut total = 0.0;
        for t in terms {
            total += t?;
        }
        Ok(total)
    }

    /// `G_ij = <phi_i, phi_j>`.
    pub fn gram(&self) -> CMat {
        linalg::gram_matrix(&self.slices(), self.grid.cell_volume())
    }

    /// `max |G - I|`.
    pub fn gram_deviation(&self) -> f64 {
        linalg::identity_deviation(&self.gram())
    }

    /// `chi_j = sum_i phi_i U_ij`.
    pub fn mix(&self, unitary: &CMat) -> Result<Self> {
        let n = self.n_particles();
        if unitary.nrows() != n || unitary.ncols() != n {
            return Err(Error::Dimension(format!(
                "mixing matrix is {}x{}, expected {n}x{n}",
                unitary.nrows(),
                unitary.ncols()
            )));
        }
        let out = linalg::combine(&self.slices(), unitary);
        Ok(self.replace_orbitals(self.fields(out)))
    }

    /// Ordered Gram-factorization re-orthonormalization.
    pub fn orthonormalized(&self) -> Result<Self> {
        let t = linalg::orthonormalizing_coefficients(&self.gram())?;
        let out = linalg::combine(&self.slices(), &t);
        Ok(self.replace_orbitals(self.fields(out)))
    }

    /// `e^{i theta} phi_j` for every orbital.
    pub fn global_phase(&self, theta: f64) -> Self {
        let z = Complex64::from_polar(1.0, theta);
        let mut out = self.clone();
        out.orbitals.iter_mut().for_each(|f| f.scale(z));
        out
    }

    fn fields(&self, data: Vec<Vec<Complex64>>) -> Vec<ComplexField> {
        data.into_iter()
            .map(|v| ComplexField::from_values(self.grid, v).expect("length matches grid"))
            .collect()
    }
}

/// The `count` lattice modes of lowest `|m|^2` representable on `grid`, ties
/// broken lexicographically on the signed mode vector.
pub fn fermi_modes(count: usize, grid: &Grid) -> Result<Vec<[i64; 3]>> {
    if count > grid.len() {
        return Err(Error::Capacity(format!(
            "{count} orbitals requested but the grid holds only {} modes",
            grid.len()
        )));
    }
    let mut modes: Vec<[i64; 3]> = (0..grid.len()).map(|i| grid.mode(i)).collect();
    modes.sort_by_key(|m| (m[0] * m[0] + m[1] * m[1] + m[2] * m[2], *m));
    modes.truncate(count);
    Ok(modes)
}

/// Is `n` a closed-shell particle number (every filled `|m|^2` shell complete)?
pub fn is_closed_shell(n: usize) -> bool {
    let r = ((n as f64).cbrt().ceil() as i64) + 2;
    let mut shells: Vec<i64> = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            for c in -r..=r {
                shells.push(a * a + b * b + c * c);
            }
        }
    }
    shells.sort_unstable();
    n == 0 || (n < shells.len() && shells[n - 1] != shells[n])
}

/// Plane waves `L^{-3/2} e^{2 pi i m.x / L}` over the Fermi-sphere modes.
pub fn fermi_sphere(n_particles: usize, grid: Grid) -> Result<OrbitalSet> {
    if n_particles == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let orbitals = fermi_modes(n_particles, &grid)?
        .into_par_iter()
        .map(|m| ComplexField::plane_wave(grid, m))
        .collect();
    OrbitalSet::from_orbitals_unchecked(grid, orbitals, Sign::Plus)
}

pub const MAX_MODULATION: f64 = 0.5;

/// Fermi-sphere orbitals carried through the measure-preserving warp
/// `x1 -> Y(x1)` whose Jacobian is `(1 + eps cos(2 pi x1 / L))^2 / (1 + eps^2/2)`:
///
/// `phi_j(x) = sqrt(Y'(x1)) L^{-3/2} exp(2 pi i m_j.(Y(x1), x2, x3) / L)`,
///
/// followed by ordered Gram-factorization re-orthonormalization. Every orbital
/// (and hence the density) picks up the relative modulation `~2 eps`, for any
/// `N`; `N = 1` gives density `~ (1 + eps cos)^2`, and `eps = 0` is exactly
/// [`fermi_sphere`].
pub fn modulated_family(n_particles: usize, grid: Grid, eps: f64) -> Result<OrbitalSet> {
    if !(0.0..=MAX_MODULATION).contains(&eps) {
        return Err(Error::InvalidParameter(format!(
            "modulation must lie in [0, {MAX_MODULATION}], got {eps}"
        )));
    }
    let base = fermi_sphere(n_particles, grid)?;
    if eps == 0.0 {
        return Ok(base);
    }
    let l = grid.box_length();
    let q = 2.0 * PI / l;
    let norm = 1.0 + 0.5 * eps * eps;
    let amp = l.powf(-1.5);
    let modes = fermi_modes(n_particles, &grid)?;
    let orbitals = modes
        .into_par_iter()
        .map(|m| {
            ComplexField::from_fn(grid, |x| {
                let theta = q * x[0];
                let sqrt_jac = (1.0 + eps * theta.cos()) / norm.sqrt();
                let warped = x[0]
                    + (2.0 * eps * theta.sin() + 0.25 * eps * eps * (2.0 * theta).sin()) / (q * norm);
                let phase = q * (m[0] as f64 * warped + m[1] as f64 * x[1] + m[2] as f64 * x[2]);
                Complex64::from_polar(amp * sqrt_jac, phase)
            })
        })
        .collect();
    OrbitalSet::from_orbitals_unchecked(grid, orbitals, Sign::Plus)?.orthonormalized()
}

fn gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Random orthonormal family with Gaussian coefficients on the modes
/// `|m_i| <= bandwidth`.
pub fn random_family(n_particles: usize, grid: Grid, bandwidth: i64, seed: u64) -> Result<OrbitalSet> {
    let modes: Vec<usize> = (0..grid.len())
        .filter(|&i| grid.mode(i).iter().all(|c| c.abs() <= bandwidth))
        .collect();
    if n_particles == 0 || n_particles > modes.len() {
        return Err(Error::Capacity(format!(
            "{n_particles} random orbitals requested with only {} available modes",
            modes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectral = Spectral::new(grid);
    let orbitals = (0..n_particles)
        .map(|_| {
            let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
            for &i in &modes {
                coeffs[i] = gaussian(&mut rng);
            }
            spectral.from_coefficients(&coeffs)
        })
        .collect();
    OrbitalSet::from_orbitals_unchecked(grid, orbitals, Sign::Plus)?.orthonormalized()
}

/// Haar-like random unitary from the Gram-Schmidt orthonormalization of a
/// complex Gaussian matrix.
pub fn random_unitary(dim: usize, seed: u64) -> Result<CMat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = CMat::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            a[(i, j)] = gaussian(&mut rng);
        }
    }
    let g = a.adjoint() * &a;
    let t = linalg::orthonormalizing_coefficients(&g)?;
    Ok(&a * &t)
}

/// Re-orthonormalized `phi_j + strength * r_j` with random band-limited `r_j`.
pub fn perturbed_family(set: &OrbitalSet, strength: f64, bandwidth: i64, seed: u64) -> Result<OrbitalSet> {
    let noise = random_family(set.n_particles(), *set.grid(), bandwidth, seed)?;
    let orbitals = set
        .orbitals()
        .iter()
        .zip(noise.orbitals())
        .map(|(a, b)| {
            let values = a
                .values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| x + y * strength)
                .collect();
            ComplexField::from_values(*set.grid(), values).expect("same grid")
        })
        .collect();
    set.replace_orbitals(orbitals).orthonormalized()
}
