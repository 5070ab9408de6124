//! Measurable versions of the functional inequalities used to control the
//! mean-field dynamics: `||v^2 * rho||_inf`, Lieb-Thirring and
//! Hardy-Littlewood-Sobolev ratios, and orbital deviation norms.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, RealField};
use crate::kernel::{KernelKind, KernelSpectrum, Sign};
use crate::orbitals::OrbitalSet;
use crate::spectral::Spectral;

/// Pointwise negativity tolerated in a density.
pub const DENSITY_FLOOR: f64 = -1e-12;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        nodes[order - 1 - i] = -x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// `kappa = int_{[-1/2, 1/2]^3} |u|^{-2} du`, so that the minimum-image box
/// `[-L/2, L/2]^3` carries kernel mass `int |x|^{-2} dx = kappa L`.
///
/// Integrating one axis in closed form leaves
/// `kappa = 3 int_{-1/2}^{1/2} (2/a) atan(1/(2a)) dz` with `a = sqrt(1/4 + z^2)`.
pub fn inverse_square_box_constant() -> f64 {
    let (x, w) = gauss_legendre(48);
    let mut acc = 0.0;
    // Two panels keep the smooth integrand well inside the node range.
    for (lo, hi) in [(-0.5, 0.0), (0.0, 0.5)] {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (xi, wi) in x.iter().zip(&w) {
            let z: f64 = mid + half * xi;
            let a = (0.25 + z * z).sqrt();
            acc += wi * half * (2.0 / a) * (1.0 / (2.0 * a)).atan();
        }
    }
    3.0 * acc
}

/// Kernel mass `K0 = kappa L` of `|x|^{-2}` over the minimum-image cell.
pub fn background_kernel_mass(box_length: f64) -> f64 {
    inverse_square_box_constant() * box_length
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VsqSup {
    /// `max (v^2 * rho)` with the kernel's zero mode removed.
    pub sup: f64,
    /// `sup + mean(rho) K0`, adding back the uniform background.
    pub restored: f64,
}

/// `||v^2 * rho||_inf` for a density `rho >= 0`.
pub fn vsq_sup(rho: &RealField) -> Result<VsqSup> {
    vsq_sup_with(&Spectral::new(*rho.grid()), rho)
}

pub fn vsq_sup_with(spectral: &Spectral, rho: &RealField) -> Result<VsqSup> {
    let min = rho.min();
    if min < DENSITY_FLOOR {
        return Err(Error::InvalidInput(format!("density is negative (min {min:e})")));
    }
    let grid = *rho.grid();
    let kernel = KernelSpectrum::new(grid, KernelKind::CoulombSquared, Sign::Plus);
    let conv = kernel.convolve_with(spectral, rho)?;
    let sup = conv.max();
    Ok(VsqSup { sup, restored: sup + rho.mean() * background_kernel_mass(grid.box_length()) })
}

/// `int rho^{1 + 2a/3} / sum_j ||nabla^a phi_j||^2`.
pub fn lieb_thirring_ratio(set: &OrbitalSet, order: u32) -> Result<f64> {
    if !(3..=4).contains(&order) {
        return Err(Error::InvalidParameter(format!(
            "Lieb-Thirring order must be 3 or 4, got {order}"
        )));
    }
    let denom = set.sobolev_sum(order)?;
    if denom <= 0.0 {
        return Err(Error::Degenerate(
            "all orbitals are constant: the Sobolev sum vanishes".into(),
        ));
    }
    let p = 1.0 + 2.0 * order as f64 / 3.0;
    let rho = set.density();
    let num: f64 = rho.values().iter().map(|v| v.max(0.0).powf(p)).sum::<f64>() * set.grid().cell_volume();
    Ok(num / denom)
}

/// `||rho||_p = (int |rho|^p)^{1/p}`.
pub fn lp_norm(rho: &RealField, p: f64) -> f64 {
    let s: f64 = rho.values().iter().map(|v| v.abs().powf(p)).sum::<f64>() * rho.grid().cell_volume();
    s.powf(1.0 / p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlsRatios {
    /// `int (|v| * rho) rho / ||rho||_{6/5}^2`
    pub r1: f64,
    /// `int (v^2 * rho) rho / ||rho||_{3/2}^2`
    pub r2: f64,
}

pub fn hls_ratios_density(rho: &RealField) -> Result<HlsRatios> {
    let grid = *rho.grid();
    if rho.max_abs() == 0.0 {
        return Err(Error::Degenerate("density vanishes identically".into()));
    }
    let spectral = Spectral::new(grid);
    let coulomb = KernelSpectrum::new(grid, KernelKind::Coulomb, Sign::Plus).convolve_with(&spectral, rho)?;
    let squared = KernelSpectrum::new(grid, KernelKind::CoulombSquared, Sign::Plus).convolve_with(&spectral, rho)?;
    let n65 = lp_norm(rho, 1.2);
    let n32 = lp_norm(rho, 1.5);
    Ok(HlsRatios {
        r1: coulomb.dot(rho)? / (n65 * n65),
        r2: squared.dot(rho)? / (n32 * n32),
    })
}

pub fn hls_ratios(set: &OrbitalSet) -> Result<HlsRatios> {
    hls_ratios_density(&set.density())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationNorms {
    /// `sum_j ||a_j - b_j||^2`
    pub d0: f64,
    /// `sum_j ||grad (a_j - b_j)||^2`
    pub d1: f64,
}

pub fn deviation_norms(a: &OrbitalSet, b: &OrbitalSet) -> Result<DeviationNorms> {
    deviation_norms_with(&Spectral::new(*a.grid()), a, b)
}

pub fn deviation_norms_with(spectral: &Spectral, a: &OrbitalSet, b: &OrbitalSet) -> Result<DeviationNorms> {
    if a.n_particles() != b.n_particles() {
        return Err(Error::Dimension(format!(
            "orbital sets have {} and {} orbitals",
            a.n_particles(),
            b.n_particles()
        )));
    }
    a.grid().check_same(b.grid(), "deviation_norms")?;
    let grid: Grid = *a.grid();
    let parts: Vec<Result<(f64, f64)>> = a
        .orbitals()
        .par_iter()
        .zip(b.orbitals())
        .map(|(x, y)| {
            let diff: Vec<_> = x.values().iter().zip(y.values()).map(|(p, q)| p - q).collect();
            let diff = ComplexField::from_values(grid, diff)?;
            Ok((diff.norm_sqr(), spectral.derivative_norm_sqr(&diff, 1)?))
        })
        .collect();
    let (mut d0, mut d1) = (0.0, 0.0);
    for p in parts {
        let (x, y) = p?;
        d0 += x;
        d1 += y;
    }
    Ok(DeviationNorms { d0, d1 })
}
