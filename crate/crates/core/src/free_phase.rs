//! Exact free evolution, the accumulated mean-field phase
//!
//! `Phi^t(x) = lambda int_0^t (v * rho_free^s)(x) ds`,
//!
//! the phase-corrected orbitals `e^{-i Phi^t} phi_free^t`, and residuals of
//! the effective equation they satisfy.
//!
//! On the torus the kernel has no zero mode, so `Delta Phi^t` reproduces
//! `-4 pi lambda int_0^t (rho - mean rho)` rather than the full density.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, RealField};
use crate::kernel::{KernelKind, KernelSpectrum, Sign};
use crate::orbitals::OrbitalSet;
use crate::spectral::Spectral;

/// `phi_j -> e^{-i |k|^2 t} phi_j` in Fourier space (no time-step error).
pub fn free_propagate(set: &OrbitalSet, t: f64) -> OrbitalSet {
    free_propagate_with(&Spectral::new(*set.grid()), set, t)
}

pub fn free_propagate_with(spectral: &Spectral, set: &OrbitalSet, t: f64) -> OrbitalSet {
    let mult = spectral.free_propagator(t);
    let mut out = set.clone();
    out.orbitals_mut()
        .par_iter_mut()
        .for_each(|f| spectral.apply_multiplier(f.values_mut(), &mult));
    out
}

/// Trapezoid accumulation of `Phi^t` on a uniform time lattice.
#[derive(Debug, Clone)]
pub struct PhaseState {
    spectral: Spectral,
    kernel: KernelSpectrum,
    coupling: f64,
    t: f64,
    steps: usize,
    phi: RealField,
    /// `(v * rho)` at the latest node.
    integrand: RealField,
    rho: RealField,
    /// Trapezoid approximation of `int_0^t rho ds`.
    rho_integral: RealField,
}

impl PhaseState {
    /// State at `t = 0` (`Phi = 0`) for the free density `rho0`.
    pub fn new(grid: Grid, coupling: f64, sign: Sign, rho0: &RealField) -> Result<Self> {
        grid.check_same(rho0.grid(), "phase state")?;
        let spectral = Spectral::new(grid);
        let kernel = KernelSpectrum::new(grid, KernelKind::Coulomb, sign);
        let integrand = kernel.convolve_with(&spectral, rho0)?;
        Ok(Self {
            coupling,
            t: 0.0,
            steps: 0,
            phi: RealField::zeros(grid),
            integrand,
            rho: rho0.clone(),
            rho_integral: RealField::zeros(grid),
            spectral,
            kernel,
        })
    }

    /// Uses the set's grid, coupling, sign and density.
    pub fn for_orbitals(set: &OrbitalSet) -> Result<Self> {
        Self::new(*set.grid(), set.coupling(), set.sign(), &set.density())
    }

    pub fn grid(&self) -> &Grid {
        self.spectral.grid()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn phase(&self) -> &RealField {
        &self.phi
    }

    pub fn density_integral(&self) -> &RealField {
        &self.rho_integral
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn kernel(&self) -> &KernelSpectrum {
        &self.kernel
    }

    /// `lambda (v * rho)` at the latest node.
    pub fn mean_field(&self) -> RealField {
        self.integrand.scaled(self.coupling)
    }

    /// `Phi += dt/2 lambda [(v * rho_prev) + (v * rho_next)]`, `t += dt`.
    pub fn accumulate(&mut self, rho_next: &RealField, dt: f64) -> Result<()> {
        self.grid().check_same(rho_next.grid(), "accumulate_phase")?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let next = self.kernel.convolve_with(&self.spectral, rho_next)?;
        let w = 0.5 * dt * self.coupling;
        for ((p, a), b) in self.phi.values_mut().iter_mut().zip(self.integrand.values()).zip(next.values()) {
            *p += w * (a + b);
        }
        for ((r, a), b) in self
            .rho_integral
            .values_mut()
            .iter_mut()
            .zip(self.rho.values())
            .zip(rho_next.values())
        {
            *r += 0.5 * dt * (a + b);
        }
        self.integrand = next;
        self.rho = rho_next.clone();
        self.steps += 1;
        self.t += dt;
        Ok(())
    }

    /// Supremum of `|grad Phi|` and the spectral Laplacian of `Phi`.
    pub fn gradients(&self) -> PhaseGradients {
        let grad = self.spectral.gradient_real(&self.phi);
        let mut sup = 0.0f64;
        for idx in 0..self.grid().len() {
            let g2 = grad[0].values()[idx].powi(2) + grad[1].values()[idx].powi(2) + grad[2].values()[idx].powi(2);
            sup = sup.max(g2.sqrt());
        }
        PhaseGradients { sup_grad: sup, laplacian: self.spectral.laplacian_real(&self.phi) }
    }

    /// `max |Delta Phi + 4 pi s lambda int_0^t (rho - mean rho)|`, where `s` is the
    /// kernel sign.
    pub fn laplacian_identity_residual(&self) -> f64 {
        let lap = self.spectral.laplacian_real(&self.phi);
        let mean = self.rho_integral.mean();
        let c = 4.0 * std::f64::consts::PI * self.kernel.sign().value() * self.coupling;
        lap.values()
            .iter()
            .zip(self.rho_integral.values())
            .map(|(l, r)| (l + c * (r - mean)).abs())
            .fold(0.0, f64::max)
    }

    /// `e^{-i Phi} phi_j` for every orbital.
    pub fn apply(&self, free_set: &OrbitalSet) -> Result<OrbitalSet> {
        apply_phase(free_set, self)
    }
}

#[derive(Debug, Clone)]
pub struct PhaseGradients {
    pub sup_grad: f64,
    pub laplacian: RealField,
}

/// `e^{-i Phi} phi_j`; moduli and the Gram matrix are unchanged.
pub fn apply_phase(free_set: &OrbitalSet, ps: &PhaseState) -> Result<OrbitalSet> {
    ps.grid().check_same(free_set.grid(), "apply_phase")?;
    let phase: Vec<Complex64> = ps.phi.values().iter().map(|p| Complex64::from_polar(1.0, -p)).collect();
    let mut out = free_set.clone();
    out.orbitals_mut().par_iter_mut().for_each(|f| {
        for (x, p) in f.values_mut().iter_mut().zip(&phase) {
            *x *= p;
        }
    });
    Ok(out)
}

pub fn phase_gradients(ps: &PhaseState) -> PhaseGradients {
    ps.gradients()
}

/// A phase-corrected orbital set at time `t`.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub t: f64,
    pub set: &'a OrbitalSet,
}

/// Per-orbital norms of
///
/// `i (f^{t+dt} - f^{t-dt}) / (2 dt) - [(-i grad + grad Phi)^2 f^t + lambda (v * rho_free^t) f^t]`
///
/// with the square expanded as `-Delta + |grad Phi|^2 - i Delta Phi - 2i grad Phi . grad`.
pub fn effective_residual(
    prev: Snapshot<'_>,
    cur: Snapshot<'_>,
    next: Snapshot<'_>,
    ps: &PhaseState,
    rho_free: &RealField,
) -> Result<Vec<f64>> {
    let dt = 0.5 * (next.t - prev.t);
    let tol = 1e-9 * dt.abs().max(cur.t.abs());
    if dt.is_nan() || dt <= 0.0 || ((cur.t - prev.t) - dt).abs() > tol || ((next.t - cur.t) - dt).abs() > tol {
        return Err(Error::InvalidInput(format!(
            "snapshot times {}, {}, {} are not uniformly spaced",
            prev.t, cur.t, next.t
        )));
    }
    if (ps.t() - cur.t).abs() > tol {
        return Err(Error::InvalidInput(format!(
            "phase state is at t = {} but the middle snapshot is at t = {}",
            ps.t(),
            cur.t
        )));
    }
    let grid = *cur.set.grid();
    for s in [prev.set, next.set] {
        grid.check_same(s.grid(), "effective_residual")?;
        if s.n_particles() != cur.set.n_particles() {
            return Err(Error::Dimension("snapshots have different particle numbers".into()));
        }
    }
    grid.check_same(rho_free.grid(), "effective_residual")?;
    grid.check_same(ps.grid(), "effective_residual")?;

    let spectral = ps.spectral();
    let grad_phi = spectral.gradient_real(ps.phase());
    let lap_phi = spectral.laplacian_real(ps.phase());
    let field = ps.kernel().convolve_with(spectral, rho_free)?.scaled(ps.coupling());
    let i = Complex64::new(0.0, 1.0);
    let residuals = (0..cur.set.n_particles())
        .into_par_iter()
        .map(|j| {
            let f = &cur.set.orbitals()[j];
            let lap_f = spectral.laplacian(f);
            let grad_f = spectral.gradient(f);
            let fp = next.set.orbitals()[j].values();
            let fm = prev.set.orbitals()[j].values();
            let mut acc = 0.0;
            for idx in 0..grid.len() {
                let g = [grad_phi[0].values()[idx], grad_phi[1].values()[idx], grad_phi[2].values()[idx]];
                let g2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
                let fx = f.values()[idx];
                let g_dot_grad = grad_f[0].values()[idx] * g[0]
                    + grad_f[1].values()[idx] * g[1]
                    + grad_f[2].values()[idx] * g[2];
                let rhs = -lap_f.values()[idx] + fx * g2 - i * lap_phi.values()[idx] * fx - 2.0 * i * g_dot_grad
                    + fx * field.values()[idx];
                let lhs = i * (fp[idx] - fm[idx]) / (2.0 * dt);
                acc += (lhs - rhs).norm_sqr();
            }
            (acc * grid.cell_volume()).sqrt()
        })
        .collect();
    Ok(residuals)
}

/// Free-with-phase orbitals `e^{-i Phi^t} phi_free^t` along a trajectory:
/// keeps the free set, the phase state and the free transform together.
#[derive(Debug, Clone)]
pub struct FreePhaseTrajectory {
    initial: OrbitalSet,
    spectral: Spectral,
    free: OrbitalSet,
    phase: PhaseState,
    dt: f64,
}

impl FreePhaseTrajectory {
    pub fn new(initial: &OrbitalSet, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            spectral: Spectral::new(*initial.grid()),
            free: initial.clone(),
            phase: PhaseState::for_orbitals(initial)?,
            initial: initial.clone(),
            dt,
        })
    }

    pub fn t(&self) -> f64 {
        self.phase.steps() as f64 * self.dt
    }

    pub fn steps(&self) -> usize {
        self.phase.steps()
    }

    /// One trapezoid node forward; the free orbitals are recomputed exactly
    /// from the initial data, so no error builds up in them.
    pub fn step(&mut self) -> Result<()> {
        let t_next = (self.phase.steps() + 1) as f64 * self.dt;
        self.free = free_propagate_with(&self.spectral, &self.initial, t_next);
        let rho = self.free.density();
        self.phase.accumulate(&rho, self.dt)?;
        Ok(())
    }

    pub fn free(&self) -> &OrbitalSet {
        &self.free
    }

    pub fn phase(&self) -> &PhaseState {
        &self.phase
    }

    pub fn phased(&self) -> Result<OrbitalSet> {
        apply_phase(&self.free, &self.phase)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbitals::{fermi_sphere, modulated_family};
    use std::f64::consts::PI;

    fn scaled_grid(n_particles: usize, n: usize) -> Grid {
        Grid::new(n, (n_particles as f64).cbrt()).unwrap()
    }

    #[test]
    fn plane_wave_picks_up_phase() {
        let g = scaled_grid(7, 8);
        let set = fermi_sphere(7, g).unwrap();
        let t = 0.37;
        let out = free_propagate(&set, t);
        let q = 2.0 * PI / g.box_length();
        let m = crate::orbitals::fermi_modes(7, &g).unwrap();
        for (j, f) in out.orbitals().iter().enumerate() {
            let k2 = q * q * (m[j][0] * m[j][0] + m[j][1] * m[j][1] + m[j][2] * m[j][2]) as f64;
            let mut expected = set.orbitals()[j].clone();
            expected.scale(Complex64::from_polar(1.0, -k2 * t));
            assert!(f.max_abs_diff(&expected) < 1e-13);
        }
        let rho = out.density();
        let mean = 7.0 / g.volume();
        assert!(rho.values().iter().all(|v| (v - mean).abs() < 1e-13));
    }

    #[test]
    fn group_property() {
        let g = scaled_grid(7, 8);
        let set = modulated_family(7, g, 0.2).unwrap();
        let a = free_propagate(&free_propagate(&set, 0.1), 0.25);
        let b = free_propagate(&set, 0.35);
        for (x, y) in a.orbitals().iter().zip(b.orbitals()) {
            assert!(x.max_abs_diff(y) < 1e-13 * x.values().iter().map(|v| v.norm()).fold(1.0, f64::max));
        }
    }

    #[test]
    fn constant_density_gives_no_phase() {
        let g = scaled_grid(7, 8);
        let rho = RealField::from_fn(g, |_| 7.0 / g.volume());
        let mut ps = PhaseState::new(g, 7f64.powf(-2.0 / 3.0), Sign::Plus, &rho).unwrap();
        for _ in 0..10 {
            ps.accumulate(&rho, 1e-2).unwrap();
        }
        assert!(ps.phase().max_abs() < 1e-14);
        let grads = ps.gradients();
        assert!(grads.sup_grad < 1e-13);
    }

    #[test]
    fn static_single_mode_density() {
        let g = scaled_grid(7, 8);
        let l = g.box_length();
        let lambda = 0.3;
        let c = 0.4;
        let q = 2.0 * PI / l;
        let rho = RealField::from_fn(g, |x| 1.0 + c * (q * x[0]).cos());
        let mut ps = PhaseState::new(g, lambda, Sign::Plus, &rho).unwrap();
        for _ in 0..20 {
            ps.accumulate(&rho, 5e-3).unwrap();
        }
        let t = ps.t();
        assert!((t - 0.1).abs() < 1e-15);
        let expected = RealField::from_fn(g, |x| t * lambda * c * l * l / PI * (q * x[0]).cos());
        assert!(ps.phase().max_abs_diff(&expected).unwrap() < 1e-14);
        // Mean-subtracted Laplacian identity.
        let lap = ps.gradients().laplacian;
        let target = RealField::from_fn(g, |x| -4.0 * PI * lambda * t * c * (q * x[0]).cos());
        assert!(lap.max_abs_diff(&target).unwrap() < 1e-10);
        assert!(ps.laplacian_identity_residual() < 1e-10);
    }

    #[test]
    fn phase_keeps_moduli() {
        let g = scaled_grid(7, 8);
        let set = modulated_family(7, g, 0.3).unwrap();
        let mut traj = FreePhaseTrajectory::new(&set, 1e-2).unwrap();
        for _ in 0..5 {
            traj.step().unwrap();
        }
        let phased = traj.phased().unwrap();
        for (a, b) in phased.orbitals().iter().zip(traj.free().orbitals()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x.norm() - y.norm()).abs() < 1e-15);
            }
        }
        assert!((phased.gram_deviation() - traj.free().gram_deviation()).abs() < 1e-13);
        assert!(traj.phase().phase().max_abs() > 0.0);
    }

    #[test]
    fn zero_phase_is_identity() {
        let g = scaled_grid(7, 8);
        let set = modulated_family(7, g, 0.3).unwrap();
        let ps = PhaseState::for_orbitals(&set).unwrap();
        let out = apply_phase(&set, &ps).unwrap();
        for (a, b) in out.orbitals().iter().zip(set.orbitals()) {
            assert_eq!(a.values(), b.values());
        }
    }

    fn residual_at(set: &OrbitalSet, dt: f64, node: usize) -> Vec<f64> {
        let mut traj = FreePhaseTrajectory::new(set, dt).unwrap();
        let mut snaps = Vec::new();
        snaps.push(traj.phased().unwrap());
        let mut mid_state = None;
        for s in 1..=node + 1 {
            traj.step().unwrap();
            snaps.push(traj.phased().unwrap());
            if s == node {
                mid_state = Some((traj.phase().clone(), traj.free().density()));
            }
        }
        let (ps, rho) = mid_state.unwrap();
        let k = snaps.len();
        effective_residual(
            Snapshot { t: (node - 1) as f64 * dt, set: &snaps[k - 3] },
            Snapshot { t: node as f64 * dt, set: &snaps[k - 2] },
            Snapshot { t: (node + 1) as f64 * dt, set: &snaps[k - 1] },
            &ps,
            &rho,
        )
        .unwrap()
    }

    #[test]
    fn plane_wave_residual_matches_central_difference() {
        let g = scaled_grid(7, 8);
        let set = fermi_sphere(7, g).unwrap();
        let dt = 1e-4;
        let r = residual_at(&set, dt, 1);
        let q2 = (2.0 * PI / g.box_length()).powi(2);
        // Zero mode exact; |m|^2 = 1 modes: |k|^2 |1 - sin(|k|^2 dt) / (|k|^2 dt)|.
        assert!(r[0] < 1e-10);
        let x = q2 * dt;
        let expected = q2 * (1.0 - x.sin() / x).abs();
        for v in &r[1..] {
            assert!((v - expected).abs() < 1e-7 * q2.max(1.0), "{v} vs {expected}");
        }
    }

    #[test]
    fn residual_is_second_order() {
        let g = scaled_grid(7, 16);
        let set = modulated_family(7, g, 0.1).unwrap().with_coupling(5.0).unwrap();
        let coarse: f64 = residual_at(&set, 2e-3, 4).iter().sum();
        let fine: f64 = residual_at(&set, 1e-3, 8).iter().sum();
        let ratio = coarse / fine;
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn first_window_is_finite() {
        let g = scaled_grid(1, 8);
        let set = modulated_family(1, g, 0.2).unwrap();
        let r = residual_at(&set, 1e-3, 1);
        assert!(r.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mismatched_snapshot_times_rejected() {
        let g = scaled_grid(1, 8);
        let set = modulated_family(1, g, 0.2).unwrap();
        let ps = PhaseState::for_orbitals(&set).unwrap();
        let rho = set.density();
        let err = effective_residual(
            Snapshot { t: -1e-3, set: &set },
            Snapshot { t: 0.0, set: &set },
            Snapshot { t: 3e-3, set: &set },
            &ps,
            &rho,
        );
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }
}
