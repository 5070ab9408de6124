//! The invariant and inequality suite behind `fmfd check`: small grids, a few
//! seconds in total.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use super::checkpoint::{decode_orbitals, encode_orbitals};
use super::fit::fit_slope;
use crate::density_matrix::{
    dense_slater_dm, expectation_gap, sandwich_check, slater_dm, trace_distance, trace_distance_dense,
};
use crate::diagnostics::{hls_ratios, lieb_thirring_ratio};
use crate::error::Result;
use crate::free_phase::{free_propagate, FreePhaseTrajectory};
use crate::grid::{ComplexField, Grid, RealField};
use crate::hartree::{hartree_trajectory, max_orbital_distance, HartreeOptions};
use crate::kernel::Sign;
use crate::orbitals::{fermi_sphere, modulated_family, perturbed_family, random_family, OrbitalSet};
use crate::spectral::Spectral;
use crate::two_body::{compare_run, CompareConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(u64) -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 12] = [
    ("parseval", parseval),
    ("plane_wave_null", plane_wave_null),
    ("conservation", conservation),
    ("laplacian_identity", laplacian_identity),
    ("trace_norm_equivalence", trace_norm_equivalence),
    ("trace_norm_closed_form", trace_norm_closed_form),
    ("sandwich", sandwich),
    ("expectation_gap", bounded_observable),
    ("inequality_ratios", inequality_ratios),
    ("two_body_zero_coupling", two_body_zero_coupling),
    ("slope_fit", slope_fit),
    ("checkpoint", checkpoint),
];

/// Runs every check; an error inside a check counts as a failure.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, f)| match f(seed) {
            Ok((passed, detail)) => CheckOutcome { name, passed, detail },
            Err(e) => CheckOutcome { name, passed: false, detail: format!("error: {e}") },
        })
        .collect()
}

fn scaled_grid(n_particles: usize, n: usize) -> Result<Grid> {
    Grid::new(n, (n_particles as f64).cbrt())
}

fn parseval(seed: u64) -> Result<(bool, String)> {
    let set = random_family(3, Grid::new(8, 1.7)?, 3, seed)?;
    let spectral = Spectral::new(*set.grid());
    let mut worst = 0.0f64;
    for f in set.orbitals() {
        let c: f64 = spectral.coefficients(f).iter().map(|v| v.norm_sqr()).sum();
        worst = worst.max((c - f.norm_sqr()).abs());
    }
    Ok((worst < 1e-13, format!("max |sum |c|^2 - ||f||^2| = {worst:e}")))
}

fn plane_wave_null(_: u64) -> Result<(bool, String)> {
    let set = fermi_sphere(7, scaled_grid(7, 12)?)?;
    let opts = HartreeOptions::new(1e-3);
    let (h, _) = hartree_trajectory(&set, 0.05, &opts, 0)?;
    let dev = max_orbital_distance(&h, &free_propagate(&set, 0.05));
    let mut fp = FreePhaseTrajectory::new(&set, 1e-3)?;
    for _ in 0..50 {
        fp.step()?;
    }
    let phi = fp.phase().phase().max_abs();
    Ok((dev <= 1e-11 && phi <= 1e-14, format!("orbital deviation {dev:e}, max |Phi| {phi:e}")))
}

fn conservation(_: u64) -> Result<(bool, String)> {
    let set = modulated_family(7, scaled_grid(7, 12)?, 0.1)?;
    let (_, records) = hartree_trajectory(&set, 0.05, &HartreeOptions::new(1e-3), 5)?;
    let e0 = records[0].energy;
    let drift = records.iter().map(|r| (r.energy - e0).abs() / e0.abs()).fold(0.0, f64::max);
    let gram = records.iter().map(|r| r.gram_deviation).fold(0.0, f64::max);
    Ok((drift <= 1e-6 && gram <= 1e-10, format!("energy drift {drift:e}, Gram deviation {gram:e}")))
}

fn laplacian_identity(_: u64) -> Result<(bool, String)> {
    let set = modulated_family(7, scaled_grid(7, 12)?, 0.2)?;
    let mut fp = FreePhaseTrajectory::new(&set, 1e-3)?;
    for _ in 0..20 {
        fp.step()?;
    }
    let res = fp.phase().laplacian_identity_residual();
    let scale = fp.phase().gradients().laplacian.max_abs().max(1e-300);
    Ok((res <= 1e-9 * scale.max(1.0), format!("residual {res:e} against |Delta Phi| {scale:e}")))
}

fn random_pair(seed: u64, n_particles: usize, grid: Grid) -> Result<(OrbitalSet, OrbitalSet)> {
    let chi = random_family(n_particles, grid, 2, seed)?;
    let phi = perturbed_family(&chi, 0.3, 2, seed.wrapping_add(1))?;
    Ok((chi, phi))
}

fn trace_norm_equivalence(seed: u64) -> Result<(bool, String)> {
    let grid = Grid::new(6, 1.5)?;
    let mut worst = 0.0f64;
    for k in 0..5u64 {
        let (a, b) = random_pair(seed.wrapping_mul(31).wrapping_add(k), 1 + k as usize, grid)?;
        let low = trace_distance(&slater_dm(&a)?, &slater_dm(&b)?)?;
        let dense = trace_distance_dense(&dense_slater_dm(&a)?, &dense_slater_dm(&b)?)?;
        worst = worst.max((low - dense).abs());
    }
    Ok((worst <= 1e-9, format!("max |subspace - dense| = {worst:e}")))
}

fn trace_norm_closed_form(_: u64) -> Result<(bool, String)> {
    let grid = Grid::new(6, 1.5)?;
    let a = ComplexField::plane_wave(grid, [0, 0, 0]);
    let b = ComplexField::plane_wave(grid, [1, -1, 0]);
    let chi = OrbitalSet::new(grid, vec![a.clone()], Sign::Plus)?;
    let mut worst = 0.0f64;
    for c in [0.0, std::f64::consts::FRAC_1_SQRT_2, 0.99] {
        let s = (1.0f64 - c * c).sqrt();
        let values = a.values().iter().zip(b.values()).map(|(x, y)| x * c + y * s).collect();
        let phi = OrbitalSet::new(grid, vec![ComplexField::from_values(grid, values)?], Sign::Plus)?;
        let d = trace_distance(&slater_dm(&chi)?, &slater_dm(&phi)?)?;
        worst = worst.max((d - 2.0 * s).abs());
    }
    Ok((worst <= 1e-12, format!("max |d - 2 sqrt(1 - c^2)| = {worst:e}")))
}

fn sandwich(seed: u64) -> Result<(bool, String)> {
    let grid = Grid::new(6, 1.5)?;
    let mut min_slack = f64::INFINITY;
    for k in 0..20u64 {
        let (a, b) = random_pair(seed.wrapping_mul(101).wrapping_add(k), 1 + (k % 5) as usize, grid)?;
        min_slack = min_slack.min(sandwich_check(&a, &b)?.slack());
    }
    Ok((min_slack >= -1e-10, format!("minimum slack {min_slack:e}")))
}

fn bounded_observable(seed: u64) -> Result<(bool, String)> {
    let grid = Grid::new(6, 1.5)?;
    let (a, b) = random_pair(seed, 3, grid)?;
    let q = 2.0 * PI / grid.box_length();
    let obs = RealField::from_fn(grid, |x| (q * x[0]).cos() + 0.5 * (q * x[2]).sin());
    let gap = expectation_gap(&obs, obs.max_abs(), &slater_dm(&a)?, &slater_dm(&b)?)?;
    let d = trace_distance(&slater_dm(&a)?, &slater_dm(&b)?)?;
    Ok((gap.abs() <= obs.max_abs() * d + 1e-12, format!("gap {gap:e} <= ||A|| d = {:e}", obs.max_abs() * d)))
}

fn inequality_ratios(_: u64) -> Result<(bool, String)> {
    let mut detail = Vec::new();
    let mut ok = true;
    for n in [7, 19] {
        let set = modulated_family(n, scaled_grid(n, 12)?, 0.1)?;
        let lt3 = lieb_thirring_ratio(&set, 3)?;
        let lt4 = lieb_thirring_ratio(&set, 4)?;
        let hls = hls_ratios(&set)?;
        ok &= [lt3, lt4, hls.r1, hls.r2].iter().all(|v| v.is_finite() && *v > 0.0);
        detail.push(format!("N={n}: LT3 {lt3:.4e}, LT4 {lt4:.4e}, HLS {:.4e}/{:.4e}", hls.r1, hls.r2));
    }
    Ok((ok, detail.join("; ")))
}

fn two_body_zero_coupling(_: u64) -> Result<(bool, String)> {
    let cfg = CompareConfig { n: 6, dt: 2e-3, t_final: 0.02, every: 5, zero_coupling: true, ..CompareConfig::default() };
    let rows = compare_run(&cfg)?;
    let worst = rows.iter().flat_map(|r| r.distance).fold(0.0, f64::max);
    let anti = rows.iter().map(|r| r.antisymmetry).fold(0.0, f64::max);
    let norm = rows.iter().map(|r| r.norm_drift).fold(0.0, f64::max);
    Ok((
        worst <= 1e-10 && anti <= 1e-11 && norm <= 1e-10,
        format!("max distance {worst:e}, antisymmetry {anti:e}, norm drift {norm:e}"),
    ))
}

fn slope_fit(_: u64) -> Result<(bool, String)> {
    let f = fit_slope(&[8.0, 27.0, 64.0].map(|n: f64| (n, n.cbrt())))?;
    let err = (f.slope - 1.0 / 3.0).abs();
    Ok((err <= 1e-12 && (f.r2 - 1.0).abs() <= 1e-12, format!("slope error {err:e}, r2 {}", f.r2)))
}

fn checkpoint(seed: u64) -> Result<(bool, String)> {
    let set = random_family(4, Grid::new(6, 1.5)?, 2, seed)?.with_sign(Sign::Minus);
    let back = decode_orbitals(&encode_orbitals(&set))?;
    let same = back.sign() == set.sign()
        && back.orbitals().iter().zip(set.orbitals()).all(|(a, b)| {
            a.values()
                .iter()
                .zip(b.values())
                .all(|(x, y): (&Complex64, &Complex64)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
        });
    Ok((same, "bitwise round trip".into()))
}
