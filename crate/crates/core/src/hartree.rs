//! Split-step integration of the fermionic Hartree equations
//!
//! `i d/dt phi_j = (-Delta + lambda (v * rho)) phi_j`,
//!
//! optionally with the Hartree-Fock exchange term, and the conserved energy.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, RealField};
use crate::kernel::{KernelKind, KernelSpectrum};
use crate::linalg::{self, CMat};
use crate::orbitals::OrbitalSet;
use crate::spectral::Spectral;

/// Largest accepted `dt (pi n / L)^2`.
pub const STABILITY_LIMIT: f64 = std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HartreeOptions {
    pub dt: f64,
    /// Adds the exchange term `-lambda sum_k phi_k (v * (conj(phi_k) f))`.
    pub exchange: bool,
    /// Relative imaginary part tolerated in mean-field convolutions.
    pub imag_tolerance: f64,
}

impl HartreeOptions {
    pub fn new(dt: f64) -> Self {
        Self { dt, exchange: false, imag_tolerance: crate::kernel::IMAG_TOLERANCE }
    }

    pub fn with_exchange(mut self, exchange: bool) -> Self {
        self.exchange = exchange;
        self
    }

    /// Checks `dt > 0` and the phase-wrapping guard `dt (pi n / L)^2 <= pi`.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        let guard = self.dt * grid.nyquist_wavenumber().powi(2);
        if guard > STABILITY_LIMIT {
            return Err(Error::InvalidParameter(format!(
                "dt = {} too large for this grid: dt (pi n/L)^2 = {guard:.4} exceeds pi",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Number of steps of size `dt` that make up `t_final`.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::InvalidParameter(format!("final time must be >= 0, got {t_final}")));
    }
    let ratio = t_final / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "final time {t_final} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(steps as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub interaction: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.interaction
    }
}

/// Reusable transforms and multipliers for one grid, kernel sign and `dt`.
#[derive(Debug, Clone)]
pub struct HartreePropagator {
    spectral: Spectral,
    kernel: KernelSpectrum,
    opts: HartreeOptions,
    half_kinetic: Vec<Complex64>,
    full_kinetic: Vec<Complex64>,
}

impl HartreePropagator {
    pub fn new(set: &OrbitalSet, opts: HartreeOptions) -> Result<Self> {
        let grid = *set.grid();
        opts.validate(&grid)?;
        let spectral = Spectral::new(grid);
        let kernel = KernelSpectrum::new(grid, KernelKind::Coulomb, set.sign());
        Ok(Self {
            half_kinetic: spectral.free_propagator(0.5 * opts.dt),
            full_kinetic: spectral.free_propagator(opts.dt),
            spectral,
            kernel,
            opts,
        })
    }

    pub fn options(&self) -> &HartreeOptions {
        &self.opts
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn kernel(&self) -> &KernelSpectrum {
        &self.kernel
    }

    fn check(&self, set: &OrbitalSet) -> Result<()> {
        self.spectral.grid().check_same(set.grid(), "Hartree step")?;
        if set.sign() != self.kernel.sign() {
            return Err(Error::InvalidParameter(
                "orbital set sign differs from the propagator's kernel sign".into(),
            ));
        }
        Ok(())
    }

    fn kinetic(&self, set: &mut OrbitalSet, multiplier: &[Complex64]) {
        set.orbitals_mut()
            .par_iter_mut()
            .for_each(|f| self.spectral.apply_multiplier(f.values_mut(), multiplier));
    }

    /// `lambda (v * rho)` for the current orbitals.
    pub fn mean_field(&self, set: &OrbitalSet) -> Result<RealField> {
        let rho = set.density();
        let field = self.kernel.convolve_checked(&self.spectral, &rho, self.opts.imag_tolerance)?;
        Ok(field.scaled(set.coupling()))
    }

    fn potential_phase(&self, set: &mut OrbitalSet, fraction: f64) -> Result<()> {
        if set.coupling() == 0.0 {
            return Ok(());
        }
        let field = self.mean_field(set)?;
        let tau = fraction * self.opts.dt;
        let phase: Vec<Complex64> = field
            .values()
            .iter()
            .map(|v| Complex64::from_polar(1.0, -tau * v))
            .collect();
        set.orbitals_mut().par_iter_mut().for_each(|f| {
            for (x, p) in f.values_mut().iter_mut().zip(&phase) {
                *x *= p;
            }
        });
        Ok(())
    }

    /// `X f = -lambda sum_k phi_k (v * (conj(phi_k) f))`.
    pub fn exchange_apply(&self, set: &OrbitalSet, f: &[Complex64]) -> Vec<Complex64> {
        let lambda = set.coupling();
        let len = f.len();
        let mut out = vec![Complex64::new(0.0, 0.0); len];
        for phi in set.orbitals() {
            let mut g: Vec<Complex64> = phi.values().iter().zip(f).map(|(p, x)| p.conj() * x).collect();
            self.kernel.convolve_complex_in_place(&self.spectral, &mut g);
            for ((o, p), w) in out.iter_mut().zip(phi.values()).zip(&g) {
                *o -= lambda * p * w;
            }
        }
        out
    }

    /// Applies `exp(-i dt X)` restricted to the span of the orbitals and
    /// their exchange images (identity on the complement).
    fn exchange_unitary(&self, set: &mut OrbitalSet) -> Result<()> {
        if set.coupling() == 0.0 {
            return Ok(());
        }
        let w = set.grid().cell_volume();
        let images: Vec<Vec<Complex64>> = set
            .orbitals()
            .par_iter()
            .map(|phi| self.exchange_apply(set, phi.values()))
            .collect();
        let mut span: Vec<&[Complex64]> = set.orbitals().iter().map(|f| f.values()).collect();
        span.extend(images.iter().map(|v| v.as_slice()));
        let basis = linalg::orthonormal_basis(&span, w, 1e-10);
        let q_refs: Vec<&[Complex64]> = basis.iter().map(|v| v.as_slice()).collect();
        let xq: Vec<Vec<Complex64>> = basis.par_iter().map(|q| self.exchange_apply(set, q)).collect();
        let xq_refs: Vec<&[Complex64]> = xq.iter().map(|v| v.as_slice()).collect();
        let raw = linalg::cross_overlap(&q_refs, &xq_refs, w);
        let r = raw.nrows();
        let xs = CMat::from_fn(r, r, |i, j| 0.5 * (raw[(i, j)] + raw[(j, i)].conj()));
        let mut u = linalg::hermitian_unitary(&xs, self.opts.dt)?;
        for i in 0..r {
            u[(i, i)] -= Complex64::new(1.0, 0.0);
        }
        let phis: Vec<&[Complex64]> = set.orbitals().iter().map(|f| f.values()).collect();
        let c = linalg::cross_overlap(&q_refs, &phis, w);
        let delta = linalg::combine(&q_refs, &(&u * &c));
        for (f, d) in set.orbitals_mut().iter_mut().zip(delta) {
            for (x, y) in f.values_mut().iter_mut().zip(d) {
                *x += y;
            }
        }
        Ok(())
    }

    fn interaction_step(&self, set: &mut OrbitalSet) -> Result<()> {
        if self.opts.exchange {
            self.potential_phase(set, 0.5)?;
            self.exchange_unitary(set)?;
            self.potential_phase(set, 0.5)
        } else {
            self.potential_phase(set, 1.0)
        }
    }

    fn check_finite(set: &OrbitalSet, step: usize) -> Result<()> {
        for (j, f) in set.orbitals().iter().enumerate() {
            if !f.is_finite() {
                return Err(Error::NumericalBlowup {
                    step,
                    detail: format!("orbital {j} contains NaN or Inf"),
                });
            }
        }
        Ok(())
    }

    /// One Strang step.
    pub fn step(&self, set: &mut OrbitalSet, step_index: usize) -> Result<()> {
        self.advance(set, 1, step_index)
    }

    /// `steps` Strang steps with adjacent half kinetic factors merged.
    /// `first_step` is the global index of the first step, for error reports.
    pub fn advance(&self, set: &mut OrbitalSet, steps: usize, first_step: usize) -> Result<()> {
        self.check(set)?;
        if steps == 0 {
            return Ok(());
        }
        self.kinetic(set, &self.half_kinetic);
        for s in 0..steps {
            self.interaction_step(set)?;
            if s + 1 < steps {
                self.kinetic(set, &self.full_kinetic);
            } else {
                self.kinetic(set, &self.half_kinetic);
            }
            Self::check_finite(set, first_step + s + 1)?;
        }
        Ok(())
    }

    pub fn energy_parts(&self, set: &OrbitalSet) -> Result<EnergyParts> {
        self.check(set)?;
        let kinetic = set.sobolev_sum_with(&self.spectral, 1)?;
        let interaction = if set.coupling() == 0.0 {
            0.0
        } else {
            let rho = set.density();
            let field = self.kernel.convolve_with(&self.spectral, &rho)?;
            0.5 * set.coupling() * field.dot(&rho)?
        };
        Ok(EnergyParts { kinetic, interaction })
    }
}

/// Single Strang step on a copy of `set`.
pub fn hartree_step(set: &OrbitalSet, opts: &HartreeOptions) -> Result<OrbitalSet> {
    let prop = HartreePropagator::new(set, *opts)?;
    let mut out = set.clone();
    prop.step(&mut out, 0)?;
    Ok(out)
}

/// `E = sum_j ||grad phi_j||^2 + lambda/2 int (v * rho) rho`.
pub fn energy(set: &OrbitalSet) -> Result<f64> {
    Ok(energy_parts(set)?.total())
}

pub fn energy_parts(set: &OrbitalSet) -> Result<EnergyParts> {
    let grid = *set.grid();
    let spectral = Spectral::new(grid);
    let kinetic = set.sobolev_sum_with(&spectral, 1)?;
    let rho = set.density();
    let field = KernelSpectrum::new(grid, KernelKind::Coulomb, set.sign()).convolve_with(&spectral, &rho)?;
    Ok(EnergyParts { kinetic, interaction: 0.5 * set.coupling() * field.dot(&rho)? })
}

/// State handed to an evolution observer.
pub struct Observation<'a> {
    pub step: usize,
    pub t: f64,
    pub energy: EnergyParts,
    pub gram_deviation: f64,
    pub density: &'a RealField,
    pub set: &'a OrbitalSet,
}

/// Per-observation summary collected by [`hartree_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HartreeRecord {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub kinetic: f64,
    pub gram_deviation: f64,
}

/// Runs to `t_final`, calling `observer` at step 0, every `every` steps and at
/// the final step (`every = 0` observes only the end points).
pub fn hartree_evolve(
    set: &OrbitalSet,
    t_final: f64,
    opts: &HartreeOptions,
    every: usize,
    observer: &mut dyn FnMut(&Observation<'_>) -> Result<()>,
) -> Result<OrbitalSet> {
    let prop = HartreePropagator::new(set, *opts)?;
    let steps = step_count(t_final, opts.dt)?;
    let mut current = set.clone();
    let observe = |current: &OrbitalSet, step: usize, observer: &mut dyn FnMut(&Observation<'_>) -> Result<()>| {
        let density = current.density();
        let obs = Observation {
            step,
            t: step as f64 * opts.dt,
            energy: prop.energy_parts(current)?,
            gram_deviation: current.gram_deviation(),
            density: &density,
            set: current,
        };
        observer(&obs)
    };
    observe(&current, 0, observer)?;
    let mut done = 0;
    while done < steps {
        let chunk = if every == 0 { steps - done } else { every.min(steps - done) };
        prop.advance(&mut current, chunk, done)?;
        done += chunk;
        observe(&current, done, observer)?;
    }
    Ok(current)
}

/// [`hartree_evolve`] collecting energy and Gram records.
pub fn hartree_trajectory(
    set: &OrbitalSet,
    t_final: f64,
    opts: &HartreeOptions,
    every: usize,
) -> Result<(OrbitalSet, Vec<HartreeRecord>)> {
    let mut records = Vec::new();
    let out = hartree_evolve(set, t_final, opts, every, &mut |o| {
        records.push(HartreeRecord {
            step: o.step,
            t: o.t,
            energy: o.energy.total(),
            kinetic: o.energy.kinetic,
            gram_deviation: o.gram_deviation,
        });
        Ok(())
    })?;
    Ok((out, records))
}

/// Largest `||a_j - b_j||` over matched orbitals.
pub fn max_orbital_distance(a: &OrbitalSet, b: &OrbitalSet) -> f64 {
    a.orbitals()
        .iter()
        .zip(b.orbitals())
        .map(|(x, y)| x.distance_sqr(y).sqrt())
        .fold(0.0, f64::max)
}
