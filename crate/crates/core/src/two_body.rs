//! Exact two-particle dynamics on the product grid.
//!
//! `psi(x1, x2)` is stored flat with `idx = i1 + n^3 i2`, which is also the
//! axis order of the six-dimensional transform (the `x1` axes fastest).

use faer::MatRef;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density_matrix::{alpha_dense, slater_dm, trace_distance, DenseDM, Sandwich};
use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::free_phase::{free_propagate_with, FreePhaseTrajectory};
use crate::grid::{ComplexField, Grid};
use crate::hartree::{step_count, HartreeOptions, HartreePropagator};
use crate::kernel::{KernelKind, KernelSpectrum, Sign};
use crate::orbitals::{mean_field_coupling, modulated_family, OrbitalSet, ORTHONORMALITY_TOLERANCE};
use crate::spectral::Spectral;

/// Hard ceiling on points per axis: `16^6` amplitudes are 268 MB.
pub const MAX_TWO_BODY_POINTS_PER_AXIS: usize = 16;
/// Largest grid `compare_run` accepts without `allow_large`.
pub const DEFAULT_TWO_BODY_POINTS_PER_AXIS: usize = 12;

#[derive(Debug, Clone)]
pub struct TwoBodyState {
    grid: Grid,
    psi: Vec<Complex64>,
    coupling: f64,
    sign: Sign,
}

fn check_capacity(grid: &Grid) -> Result<()> {
    if grid.n() > MAX_TWO_BODY_POINTS_PER_AXIS {
        return Err(Error::Capacity(format!(
            "two-body grids need n <= {MAX_TWO_BODY_POINTS_PER_AXIS}, got n = {}",
            grid.n()
        )));
    }
    Ok(())
}

impl TwoBodyState {
    /// Wraps raw amplitudes; coupling defaults to `2^{-2/3}`.
    pub fn new(grid: Grid, psi: Vec<Complex64>, sign: Sign) -> Result<Self> {
        check_capacity(&grid)?;
        if psi.len() != grid.len() * grid.len() {
            return Err(Error::Dimension(format!(
                "two-body amplitude has {} entries, grid needs {}",
                psi.len(),
                grid.len() * grid.len()
            )));
        }
        Ok(Self { grid, psi, coupling: mean_field_coupling(2), sign })
    }

    /// Antisymmetrized product of the two orbitals of `set`, inheriting its
    /// coupling and sign.
    pub fn from_orbitals(set: &OrbitalSet) -> Result<Self> {
        if set.n_particles() != 2 {
            return Err(Error::Dimension(format!(
                "two-body state needs 2 orbitals, got {}",
                set.n_particles()
            )));
        }
        let o = set.orbitals();
        slater_to_twobody(&o[0], &o[1], set.sign())?.with_coupling(set.coupling())
    }

    pub fn with_coupling(mut self, coupling: f64) -> Result<Self> {
        if !(coupling.is_finite() && coupling >= 0.0) {
            return Err(Error::InvalidParameter(format!("coupling must be >= 0, got {coupling}")));
        }
        self.coupling = coupling;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn psi(&self) -> &[Complex64] {
        &self.psi
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// `psi(x1, x2)` at grid indices.
    pub fn value(&self, x1: usize, x2: usize) -> Complex64 {
        self.psi[x1 + self.grid.len() * x2]
    }

    pub fn norm(&self) -> f64 {
        let m = self.grid.len();
        let partial: Vec<f64> = self
            .psi
            .par_chunks(m)
            .map(|b| b.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .collect();
        let w = self.grid.cell_volume();
        (partial.iter().sum::<f64>() * w * w).sqrt()
    }

    /// `max |psi(x1, x2) + psi(x2, x1)|`.
    pub fn antisymmetry_error(&self) -> f64 {
        let m = self.grid.len();
        let psi = &self.psi;
        (0..m)
            .into_par_iter()
            .map(|i2| {
                (0..m)
                    .map(|i1| (psi[i1 + m * i2] + psi[i2 + m * i1]).norm())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    fn is_finite(&self) -> bool {
        self.psi.par_iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// `psi = (chi1 (x) chi2 - chi2 (x) chi1) / sqrt 2`.
pub fn slater_to_twobody(chi1: &ComplexField, chi2: &ComplexField, sign: Sign) -> Result<TwoBodyState> {
    let grid = *chi1.grid();
    grid.check_same(chi2.grid(), "slater_to_twobody")?;
    check_capacity(&grid)?;
    let overlap = chi1.inner(chi2).norm();
    if overlap > ORTHONORMALITY_TOLERANCE {
        return Err(Error::InvalidInput(format!("orbitals overlap by {overlap:e}")));
    }
    for (k, chi) in [chi1, chi2].into_iter().enumerate() {
        let dev = (chi.norm() - 1.0).abs();
        if dev > ORTHONORMALITY_TOLERANCE {
            return Err(Error::InvalidInput(format!("orbital {k} has norm deviation {dev:e}")));
        }
    }
    let m = grid.len();
    let (a, b) = (chi1.values(), chi2.values());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = vec![Complex64::new(0.0, 0.0); m * m];
    psi.par_chunks_mut(m).enumerate().for_each(|(i2, block)| {
        for (i1, v) in block.iter_mut().enumerate() {
            *v = (a[i1] * b[i2] - b[i1] * a[i2]) * s;
        }
    });
    TwoBodyState::new(grid, psi, sign)
}

/// `gamma(x, y) = sum_{x2} psi(x, x2) conj psi(y, x2) dV`, stored as `gamma dV`.
pub fn reduced_dm(state: &TwoBodyState) -> Result<DenseDM> {
    let m = state.grid.len();
    let w = state.grid.cell_volume();
    let a = MatRef::from_column_major_slice(&state.psi, m, m);
    let g = a * a.adjoint();
    let matrix = faer::Mat::from_fn(m, m, |i, j| 0.5 * (g[(i, j)] + g[(j, i)].conj()) * (w * w));
    DenseDM::from_matrix(state.grid, matrix)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoBodyEnergy {
    pub kinetic: f64,
    pub interaction: f64,
}

impl TwoBodyEnergy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.interaction
    }
}

/// Strang splitting for `-Delta_1 - Delta_2 + lambda V(x1 - x2)`, with `V`
/// the periodized Coulomb kernel shared with the mean-field solver.
#[derive(Debug, Clone)]
pub struct TwoBodyPropagator {
    grid: Grid,
    dt: f64,
    coupling: f64,
    sign: Sign,
    fft: FftNd,
    k2: Vec<f64>,
    kernel: Vec<f64>,
    half_kinetic: Vec<Complex64>,
    full_kinetic: Vec<Complex64>,
    potential_phase: Vec<Complex64>,
}

impl TwoBodyPropagator {
    pub fn new(state: &TwoBodyState, dt: f64) -> Result<Self> {
        let grid = state.grid;
        HartreeOptions::new(dt).validate(&grid)?;
        let spectral = Spectral::new(grid);
        let kernel = KernelSpectrum::new(grid, KernelKind::Coulomb, state.sign)
            .real_space_with(&spectral)
            .into_values();
        let potential_phase = kernel
            .iter()
            .map(|v| Complex64::from_polar(1.0, -dt * state.coupling * v))
            .collect();
        Ok(Self {
            grid,
            dt,
            coupling: state.coupling,
            sign: state.sign,
            fft: FftNd::new(grid.n(), 6),
            k2: spectral.k2().to_vec(),
            half_kinetic: spectral.free_propagator(0.5 * dt),
            full_kinetic: spectral.free_propagator(dt),
            kernel,
            potential_phase,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn check(&self, state: &TwoBodyState) -> Result<()> {
        self.grid.check_same(&state.grid, "two-body step")?;
        if state.sign != self.sign || state.coupling != self.coupling {
            return Err(Error::InvalidParameter(
                "state coupling or sign differs from the propagator's".into(),
            ));
        }
        Ok(())
    }

    /// `e^{-i (|k1|^2 + |k2|^2) tau}` as the product of two 3-d factors.
    fn kinetic(&self, psi: &mut [Complex64], p3: &[Complex64]) {
        self.fft.forward(psi);
        psi.par_chunks_mut(p3.len()).enumerate().for_each(|(j2, block)| {
            let b = p3[j2];
            for (v, a) in block.iter_mut().zip(p3) {
                *v *= a * b;
            }
        });
        self.fft.inverse(psi);
    }

    /// Applies `f(V[x1 - x2])` pointwise, `table` indexed by the difference.
    fn for_each_pair<T: Sync>(
        grid: &Grid,
        psi: &mut [Complex64],
        table: &[T],
        f: impl Fn(&mut Complex64, &T) + Sync,
    ) {
        let n = grid.n();
        psi.par_chunks_mut(grid.len()).enumerate().for_each(|(i2, block)| {
            let [a2, b2, c2] = grid.unflatten(i2);
            let mut i1 = 0;
            for c1 in 0..n {
                let dc = (c1 + n - c2) % n;
                for b1 in 0..n {
                    let db = (b1 + n - b2) % n;
                    for a1 in 0..n {
                        let d = (a1 + n - a2) % n + n * (db + n * dc);
                        f(&mut block[i1], &table[d]);
                        i1 += 1;
                    }
                }
            }
        });
    }

    fn potential(&self, psi: &mut [Complex64]) {
        Self::for_each_pair(&self.grid, psi, &self.potential_phase, |v, p| *v *= p);
    }

    pub fn step(&self, state: &mut TwoBodyState, step_index: usize) -> Result<()> {
        self.advance(state, 1, step_index)
    }

    /// `steps` Strang steps with adjacent half kinetic factors merged.
    pub fn advance(&self, state: &mut TwoBodyState, steps: usize, first_step: usize) -> Result<()> {
        self.check(state)?;
        if steps == 0 {
            return Ok(());
        }
        self.kinetic(&mut state.psi, &self.half_kinetic);
        for s in 0..steps {
            self.potential(&mut state.psi);
            let mult = if s + 1 < steps { &self.full_kinetic } else { &self.half_kinetic };
            self.kinetic(&mut state.psi, mult);
            if !state.is_finite() {
                return Err(Error::NumericalBlowup {
                    step: first_step + s + 1,
                    detail: "two-body amplitude contains NaN or Inf".into(),
                });
            }
        }
        Ok(())
    }

    /// `<psi, H psi>` split into kinetic and pair parts.
    pub fn energy(&self, state: &TwoBodyState) -> Result<TwoBodyEnergy> {
        self.grid.check_same(&state.grid, "two-body energy")?;
        let m = self.grid.len();
        let w = self.grid.cell_volume();
        let mut f = state.psi.clone();
        self.fft.forward(&mut f);
        let k2 = &self.k2;
        let kin: Vec<f64> = f
            .par_chunks(m)
            .enumerate()
            .map(|(j2, block)| {
                block
                    .iter()
                    .zip(k2)
                    .map(|(v, a)| (a + k2[j2]) * v.norm_sqr())
                    .sum::<f64>()
            })
            .collect();
        let kinetic = kin.iter().sum::<f64>() * w * w / (m * m) as f64;
        // Weight |psi|^2 by V(x1 - x2) in a scratch copy.
        let mut scratch: Vec<Complex64> = state.psi.iter().map(|v| Complex64::new(v.norm_sqr(), 0.0)).collect();
        Self::for_each_pair(&self.grid, &mut scratch, &self.kernel, |v, k| *v *= k);
        let pot: Vec<f64> = scratch.par_chunks(m).map(|b| b.iter().map(|v| v.re).sum::<f64>()).collect();
        let interaction = state.coupling * pot.iter().sum::<f64>() * w * w;
        Ok(TwoBodyEnergy { kinetic, interaction })
    }
}

pub fn two_body_energy(state: &TwoBodyState) -> Result<TwoBodyEnergy> {
    // dt only enters the phases, which energy does not use.
    let dt = 1e-12;
    TwoBodyPropagator::new(state, dt)?.energy(state)
}

/// Settings of one exact-versus-mean-field comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub n: usize,
    pub eps: f64,
    pub sign: Sign,
    pub dt: f64,
    pub t_final: f64,
    /// Observation stride in steps; 0 observes only the end points.
    pub every: usize,
    /// Runs all three dynamics with `lambda = 0`.
    pub zero_coupling: bool,
    /// Permits `n` above [`DEFAULT_TWO_BODY_POINTS_PER_AXIS`].
    pub allow_large: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            n: 12,
            eps: 0.1,
            sign: Sign::Plus,
            dt: 1e-3,
            t_final: 0.2,
            every: 50,
            zero_coupling: false,
            allow_large: false,
        }
    }
}

/// Index into the per-family arrays of [`CompareRow`].
pub const FAMILIES: [&str; 3] = ["hartree", "free_phase", "free"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub step: usize,
    pub t: f64,
    /// `||gamma_psi - gamma_family||_tr`, ordered as [`FAMILIES`].
    pub distance: [f64; 3],
    pub alpha: [f64; 3],
    pub sandwich: [Sandwich; 3],
    pub energy: f64,
    pub norm_drift: f64,
    pub antisymmetry: f64,
}

fn compare_grid(cfg: &CompareConfig) -> Result<Grid> {
    let cap = if cfg.allow_large { MAX_TWO_BODY_POINTS_PER_AXIS } else { DEFAULT_TWO_BODY_POINTS_PER_AXIS };
    if cfg.n > cap {
        let hint = if cfg.allow_large { "" } else { " (larger grids need the explicit opt-in)" };
        return Err(Error::Capacity(format!("two-body comparison needs n <= {cap}, got {}{hint}", cfg.n)));
    }
    Grid::new(cfg.n, 2f64.cbrt())
}

/// Evolves the exact state, the Hartree orbitals, the free-with-phase and the
/// plain free orbitals from one modulated pair and compares their reduced
/// density matrices.
pub fn compare_run(cfg: &CompareConfig) -> Result<Vec<CompareRow>> {
    let grid = compare_grid(cfg)?;
    let mut init = modulated_family(2, grid, cfg.eps)?.with_sign(cfg.sign);
    if cfg.zero_coupling {
        init = init.with_coupling(0.0)?;
    }
    let steps = step_count(cfg.t_final, cfg.dt)?;
    let mut psi = TwoBodyState::from_orbitals(&init)?;
    let exact = TwoBodyPropagator::new(&psi, cfg.dt)?;
    let hartree = HartreePropagator::new(&init, HartreeOptions::new(cfg.dt))?;
    let mut mf = init.clone();
    let mut phased = FreePhaseTrajectory::new(&init, cfg.dt)?;
    let spectral = Spectral::new(grid);

    let mut rows = Vec::new();
    let mut observe = |step: usize, psi: &TwoBodyState, mf: &OrbitalSet, phased: &FreePhaseTrajectory| -> Result<()> {
        let t = step as f64 * cfg.dt;
        let gamma = reduced_dm(psi)?;
        let families = [mf.clone(), phased.phased()?, free_propagate_with(&spectral, &init, t)];
        let per: Vec<Result<(f64, f64)>> = families
            .par_iter()
            .map(|fam| Ok((trace_distance(&gamma, &slater_dm(fam)?)?, alpha_dense(&gamma, fam)?)))
            .collect();
        let mut distance = [0.0; 3];
        let mut alpha = [0.0; 3];
        for (k, r) in per.into_iter().enumerate() {
            (distance[k], alpha[k]) = r?;
        }
        rows.push(CompareRow {
            step,
            t,
            distance,
            alpha,
            sandwich: std::array::from_fn(|k| Sandwich::from_parts(distance[k], alpha[k])),
            energy: exact.energy(psi)?.total(),
            norm_drift: (psi.norm() - 1.0).abs(),
            antisymmetry: psi.antisymmetry_error(),
        });
        Ok(())
    };

    observe(0, &psi, &mf, &phased)?;
    let mut done = 0;
    while done < steps {
        let chunk = if cfg.every == 0 { steps - done } else { cfg.every.min(steps - done) };
        exact.advance(&mut psi, chunk, done)?;
        hartree.advance(&mut mf, chunk, done)?;
        for _ in 0..chunk {
            phased.step()?;
        }
        done += chunk;
        observe(done, &psi, &mf, &phased)?;
    }
    Ok(rows)
}
