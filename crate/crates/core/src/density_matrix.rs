//! One-particle reduced density matrices, trace distances and the
//! α-functional `<psi, q_1 psi>` with `q = 1 - sum_j |phi_j><phi_j|`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid, RealField};
use crate::linalg::{self, CMat};
use crate::orbitals::OrbitalSet;

/// Residual below which a union-basis vector is treated as dependent.
pub const BASIS_DROP_TOLERANCE: f64 = 1e-10;
/// Largest grid for which a dense `n^3 x n^3` kernel is allowed.
pub const MAX_DENSE_POINTS_PER_AXIS: usize = 16;
/// Slack used by the sandwich inequality check.
pub const SANDWICH_SLACK: f64 = 1e-10;

/// `gamma = sum_ij c_ij |u_i><u_j|` over an orthonormal basis `u`.
#[derive(Debug, Clone)]
pub struct LowRankDM {
    grid: Grid,
    basis: Vec<ComplexField>,
    coeffs: CMat,
}

impl LowRankDM {
    pub fn new(grid: Grid, basis: Vec<ComplexField>, coeffs: CMat) -> Result<Self> {
        let r = basis.len();
        if coeffs.nrows() != r || coeffs.ncols() != r {
            return Err(Error::Dimension(format!(
                "{}x{} coefficients for a rank-{r} basis",
                coeffs.nrows(),
                coeffs.ncols()
            )));
        }
        for f in &basis {
            grid.check_same(f.grid(), "low-rank density matrix")?;
        }
        let asym = linalg::hermitian_deviation(&coeffs);
        if asym > 1e-12 {
            return Err(Error::InvalidState(format!("coefficient matrix not Hermitian ({asym:e})")));
        }
        let refs: Vec<&[Complex64]> = basis.iter().map(|f| f.values()).collect();
        let dev = linalg::identity_deviation(&linalg::gram_matrix(&refs, grid.cell_volume()));
        if dev > 1e-10 {
            return Err(Error::InvalidState(format!("basis not orthonormal ({dev:e})")));
        }
        Ok(Self { grid, basis, coeffs })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[ComplexField] {
        &self.basis
    }

    pub fn coeffs(&self) -> &CMat {
        &self.coeffs
    }

    pub fn trace(&self) -> f64 {
        (0..self.rank()).map(|i| self.coeffs[(i, i)].re).sum()
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::hermitian_eigenvalues(&self.coeffs)
    }

    fn slices(&self) -> Vec<&[Complex64]> {
        self.basis.iter().map(|f| f.values()).collect()
    }

    /// `tr(A gamma) = sum_ij c_ij <u_j, A u_i>` for a multiplication operator `A`.
    pub fn expectation(&self, a: &RealField) -> Result<f64> {
        self.grid.check_same(a.grid(), "expectation")?;
        let w = self.grid.cell_volume();
        let r = self.rank();
        let au: Vec<Vec<Complex64>> = self
            .basis
            .iter()
            .map(|u| u.values().iter().zip(a.values()).map(|(x, y)| x * y).collect())
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, au_i) in au.iter().enumerate() {
            for j in 0..r {
                acc += self.coeffs[(i, j)] * linalg::dot(self.basis[j].values(), au_i) * w;
            }
        }
        Ok(acc.re)
    }
}

/// Dense kernel stored as `M = gamma(x, y) dV`, the matrix of `gamma` in the
/// orthonormal basis of normalized grid indicators.
#[derive(Debug, Clone)]
pub struct DenseDM {
    grid: Grid,
    matrix: CMat,
}

impl DenseDM {
    pub fn from_matrix(grid: Grid, matrix: CMat) -> Result<Self> {
        check_dense_grid(&grid)?;
        if matrix.nrows() != grid.len() || matrix.ncols() != grid.len() {
            return Err(Error::Dimension(format!(
                "dense kernel is {}x{}, grid has {} points",
                matrix.nrows(),
                matrix.ncols(),
                grid.len()
            )));
        }
        let asym = linalg::hermitian_deviation(&matrix);
        if asym > 1e-10 {
            return Err(Error::InvalidState(format!("dense kernel not Hermitian ({asym:e})")));
        }
        let dm = Self { grid, matrix };
        let tr = dm.trace();
        if (tr - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidState(format!("dense kernel has trace {tr}")));
        }
        Ok(dm)
    }

    pub fn from_low_rank(dm: &LowRankDM) -> Result<Self> {
        check_dense_grid(&dm.grid)?;
        let len = dm.grid.len();
        let w = dm.grid.cell_volume();
        let r = dm.rank();
        let u = CMat::from_fn(len, r, |x, i| dm.basis[i].values()[x] * w.sqrt());
        let matrix = &u * &dm.coeffs * u.adjoint();
        Ok(Self { grid: dm.grid, matrix })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        (0..self.matrix.nrows()).map(|i| self.matrix[(i, i)].re).sum()
    }

    /// `gamma(x, y)` at grid indices.
    pub fn kernel(&self, x: usize, y: usize) -> Complex64 {
        self.matrix[(x, y)] / self.grid.cell_volume()
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::hermitian_eigenvalues(&self.matrix)
    }

    /// `tr(A gamma) = sum_x A(x) gamma(x, x) dV`.
    pub fn expectation(&self, a: &RealField) -> Result<f64> {
        self.grid.check_same(a.grid(), "expectation")?;
        Ok(a.values().iter().enumerate().map(|(x, v)| v * self.matrix[(x, x)].re).sum())
    }

    /// `<phi, gamma phi>`.
    pub fn quadratic_form(&self, phi: &ComplexField) -> Result<f64> {
        self.grid.check_same(phi.grid(), "quadratic form")?;
        let w = self.grid.cell_volume();
        let v = faer::Col::<Complex64>::from_fn(self.grid.len(), |x| phi.values()[x] * w.sqrt());
        let mv = &self.matrix * &v;
        Ok((0..v.nrows()).map(|i| (v[i].conj() * mv[i]).re).sum())
    }
}

fn check_dense_grid(grid: &Grid) -> Result<()> {
    if grid.n() > MAX_DENSE_POINTS_PER_AXIS {
        return Err(Error::Capacity(format!(
            "dense density matrices need n <= {MAX_DENSE_POINTS_PER_AXIS}, got n = {}",
            grid.n()
        )));
    }
    Ok(())
}

/// Either representation, for [`trace_distance`].
#[derive(Debug, Clone, Copy)]
pub enum DmRef<'a> {
    LowRank(&'a LowRankDM),
    Dense(&'a DenseDM),
}

impl<'a> From<&'a LowRankDM> for DmRef<'a> {
    fn from(dm: &'a LowRankDM) -> Self {
        DmRef::LowRank(dm)
    }
}

impl<'a> From<&'a DenseDM> for DmRef<'a> {
    fn from(dm: &'a DenseDM) -> Self {
        DmRef::Dense(dm)
    }
}

impl DmRef<'_> {
    fn grid(&self) -> &Grid {
        match self {
            DmRef::LowRank(d) => d.grid(),
            DmRef::Dense(d) => d.grid(),
        }
    }

    pub fn expectation(&self, a: &RealField) -> Result<f64> {
        match self {
            DmRef::LowRank(d) => d.expectation(a),
            DmRef::Dense(d) => d.expectation(a),
        }
    }
}

/// `gamma = (1/N) sum_j |phi_j><phi_j|`.
pub fn slater_dm(set: &OrbitalSet) -> Result<LowRankDM> {
    let dev = set.gram_deviation();
    if dev > 1e-8 {
        return Err(Error::InvalidState(format!(
            "Slater density matrix needs orthonormal orbitals (Gram deviation {dev:e})"
        )));
    }
    let n = set.n_particles();
    let coeffs = CMat::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(1.0 / n as f64, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    Ok(LowRankDM { grid: *set.grid(), basis: set.orbitals().to_vec(), coeffs })
}

/// `||A - B||_tr` by reduction to the common span of both bases.
pub fn trace_distance_low_rank(a: &LowRankDM, b: &LowRankDM) -> Result<f64> {
    a.grid.check_same(&b.grid, "trace_distance")?;
    let w = a.grid.cell_volume();
    let mut span = a.slices();
    span.extend(b.slices());
    let basis = linalg::orthonormal_basis(&span, w, BASIS_DROP_TOLERANCE);
    let q: Vec<&[Complex64]> = basis.iter().map(|v| v.as_slice()).collect();
    let pa = linalg::cross_overlap(&q, &a.slices(), w);
    let pb = linalg::cross_overlap(&q, &b.slices(), w);
    let da = &pa * &a.coeffs * pa.adjoint();
    let db = &pb * &b.coeffs * pb.adjoint();
    let d = &da - &db;
    let r = d.nrows();
    let d = CMat::from_fn(r, r, |i, j| 0.5 * (d[(i, j)] + d[(j, i)].conj()));
    linalg::trace_norm_hermitian(&d)
}

pub fn trace_distance_dense(a: &DenseDM, b: &DenseDM) -> Result<f64> {
    a.grid.check_same(&b.grid, "trace_distance")?;
    let d = &a.matrix - &b.matrix;
    linalg::trace_norm_hermitian(&d)
}

/// Trace distance between any two density matrices on the same grid.
pub fn trace_distance<'a, 'b>(a: impl Into<DmRef<'a>>, b: impl Into<DmRef<'b>>) -> Result<f64> {
    let (a, b) = (a.into(), b.into());
    a.grid().check_same(b.grid(), "trace_distance")?;
    match (a, b) {
        (DmRef::LowRank(x), DmRef::LowRank(y)) => trace_distance_low_rank(x, y),
        (DmRef::Dense(x), DmRef::Dense(y)) => trace_distance_dense(x, y),
        (DmRef::Dense(x), DmRef::LowRank(y)) | (DmRef::LowRank(y), DmRef::Dense(x)) => {
            trace_distance_dense(x, &DenseDM::from_low_rank(y)?)
        }
    }
}

/// `alpha = 1 - (1/N) sum_ij |<phi_i, chi_j>|^2` for `psi` the Slater
/// determinant of `chi`.
pub fn alpha_functional(chi: &OrbitalSet, phi: &OrbitalSet) -> Result<f64> {
    if chi.n_particles() != phi.n_particles() {
        return Err(Error::Dimension(format!(
            "alpha needs equal particle numbers, got {} and {}",
            chi.n_particles(),
            phi.n_particles()
        )));
    }
    chi.grid().check_same(phi.grid(), "alpha")?;
    let s = linalg::cross_overlap(&phi.slices(), &chi.slices(), chi.grid().cell_volume());
    let n = chi.n_particles();
    let mut overlap = 0.0;
    for j in 0..n {
        for i in 0..n {
            overlap += s[(i, j)].norm_sqr();
        }
    }
    Ok(1.0 - overlap / n as f64)
}

/// `alpha = 1 - tr(p gamma) = 1 - sum_j <phi_j, gamma phi_j>`.
pub fn alpha_dense(gamma: &DenseDM, phi: &OrbitalSet) -> Result<f64> {
    gamma.grid.check_same(phi.grid(), "alpha")?;
    let terms: Vec<Result<f64>> = phi.orbitals().par_iter().map(|f| gamma.quadratic_form(f)).collect();
    let mut tr = 0.0;
    for t in terms {
        tr += t?;
    }
    Ok(1.0 - tr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sandwich {
    /// `d^2`
    pub lhs: f64,
    /// `8 alpha`
    pub mid: f64,
    /// `4 d`
    pub rhs: f64,
    pub ok: bool,
}

impl Sandwich {
    pub fn from_parts(distance: f64, alpha: f64) -> Self {
        let (lhs, mid, rhs) = (distance * distance, 8.0 * alpha, 4.0 * distance);
        Self { lhs, mid, rhs, ok: lhs <= mid + SANDWICH_SLACK && mid <= rhs + SANDWICH_SLACK }
    }

    /// Smallest of the two slacks `8 alpha - d^2` and `4 d - 8 alpha`.
    pub fn slack(&self) -> f64 {
        (self.mid - self.lhs).min(self.rhs - self.mid)
    }
}

/// `d^2 <= 8 alpha <= 4 d` with `d = ||gamma_chi - gamma_phi||_tr`.
pub fn sandwich_check(chi: &OrbitalSet, phi: &OrbitalSet) -> Result<Sandwich> {
    let alpha = alpha_functional(chi, phi)?;
    let d = trace_distance_low_rank(&slater_dm(chi)?, &slater_dm(phi)?)?;
    Ok(Sandwich::from_parts(d, alpha))
}

/// `tr[A (gamma_a - gamma_b)]` for a real multiplication operator with
/// declared `||A||_inf`; fails if the trace-norm bound is violated.
pub fn expectation_gap<'a, 'b>(
    a: &RealField,
    sup_norm: f64,
    dm_a: impl Into<DmRef<'a>>,
    dm_b: impl Into<DmRef<'b>>,
) -> Result<f64> {
    let (dm_a, dm_b) = (dm_a.into(), dm_b.into());
    let actual = a.max_abs();
    if actual > sup_norm * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "declared sup norm {sup_norm} is below the field's maximum {actual}"
        )));
    }
    let gap = dm_a.expectation(a)? - dm_b.expectation(a)?;
    let d = trace_distance(dm_a, dm_b)?;
    if gap.abs() > sup_norm * d + 1e-10 {
        return Err(Error::Numerical(format!(
            "expectation gap {gap} exceeds ||A|| * trace distance = {}",
            sup_norm * d
        )));
    }
    Ok(gap)
}

/// Dense `gamma` of the Slater determinant of `chi`, oracle for small grids.
pub fn dense_slater_dm(set: &OrbitalSet) -> Result<DenseDM> {
    DenseDM::from_low_rank(&slater_dm(set)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Sign;
    use crate::orbitals::{fermi_sphere, perturbed_family, random_family, random_unitary};

    fn grid() -> Grid {
        Grid::new(8, 1.6).unwrap()
    }

    /// Two orthonormal single orbitals with `|<a, b>| = c`.
    fn overlap_pair(c: f64) -> (OrbitalSet, OrbitalSet) {
        let g = grid();
        let base = fermi_sphere(2, g).unwrap();
        let (e0, e1) = (&base.orbitals()[0], &base.orbitals()[1]);
        let s = (1.0 - c * c).sqrt();
        let b = ComplexField::from_values(
            g,
            e0.values().iter().zip(e1.values()).map(|(x, y)| x * c + y * s).collect(),
        )
        .unwrap();
        (
            OrbitalSet::new(g, vec![e0.clone()], Sign::Plus).unwrap(),
            OrbitalSet::new(g, vec![b], Sign::Plus).unwrap(),
        )
    }

    #[test]
    fn slater_dm_normalization() {
        let g = grid();
        let set = random_family(4, g, 2, 1).unwrap();
        let dm = slater_dm(&set).unwrap();
        assert!((dm.trace() - 1.0).abs() < 1e-14);
        assert!(dm.eigenvalues().unwrap().iter().all(|v| (v - 0.25).abs() < 1e-14));
        let one = slater_dm(&fermi_sphere(1, g).unwrap()).unwrap();
        let dense = DenseDM::from_low_rank(&one).unwrap();
        let ev = dense.eigenvalues().unwrap();
        assert!((ev[ev.len() - 1] - 1.0).abs() < 1e-12 && ev[0].abs() < 1e-12);
    }

    #[test]
    fn identical_states_have_zero_distance() {
        let set = random_family(3, grid(), 2, 2).unwrap();
        let dm = slater_dm(&set).unwrap();
        assert!(trace_distance(&dm, &dm).unwrap() < 1e-12);
    }

    #[test]
    fn two_level_closed_form() {
        for c in [0.0, 1.0 / 2f64.sqrt(), 0.99] {
            let (a, b) = overlap_pair(c);
            let d = trace_distance(&slater_dm(&a).unwrap(), &slater_dm(&b).unwrap()).unwrap();
            let expected = 2.0 * (1.0 - c * c).sqrt();
            assert!((d - expected).abs() < 1e-12, "c={c}: {d} vs {expected}");
        }
    }

    #[test]
    fn disjoint_families_are_at_distance_two() {
        let g = grid();
        let modes = fermi_sphere(6, g).unwrap();
        let a = OrbitalSet::new(g, modes.orbitals()[..3].to_vec(), Sign::Plus).unwrap();
        let b = OrbitalSet::new(g, modes.orbitals()[3..].to_vec(), Sign::Plus).unwrap();
        let d = trace_distance(&slater_dm(&a).unwrap(), &slater_dm(&b).unwrap()).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert!((alpha_functional(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_examples() {
        let set = random_family(3, grid(), 2, 4).unwrap();
        assert!(alpha_functional(&set, &set).unwrap().abs() < 1e-12);
        let (a, b) = overlap_pair(0.75f64.sqrt());
        assert!((alpha_functional(&a, &b).unwrap() - 0.25).abs() < 1e-12);
        let s = sandwich_check(&a, &b).unwrap();
        assert!((s.lhs - 1.0).abs() < 1e-12 && (s.mid - 2.0).abs() < 1e-12 && (s.rhs - 4.0).abs() < 1e-12);
        assert!(s.ok);
        let s = sandwich_check(&set, &set).unwrap();
        assert!(s.ok && s.lhs.abs() < 1e-20 && s.rhs.abs() < 1e-10);
        let other = random_family(2, grid(), 2, 4).unwrap();
        assert!(matches!(alpha_functional(&set, &other), Err(Error::Dimension(_))));
    }

    #[test]
    fn alpha_closed_form_matches_dense_contraction() {
        let g = grid();
        let phi = random_family(3, g, 2, 10).unwrap();
        let chi = perturbed_family(&phi, 0.4, 2, 11).unwrap();
        let closed = alpha_functional(&chi, &phi).unwrap();
        let dense = alpha_dense(&dense_slater_dm(&chi).unwrap(), &phi).unwrap();
        assert!((closed - dense).abs() < 1e-10);
    }

    #[test]
    fn alpha_is_invariant_under_mixing() {
        let g = grid();
        let phi = random_family(4, g, 2, 20).unwrap();
        let chi = perturbed_family(&phi, 0.3, 2, 21).unwrap();
        let mixed = chi.mix(&random_unitary(4, 22).unwrap()).unwrap();
        let a = alpha_functional(&chi, &phi).unwrap();
        let b = alpha_functional(&mixed, &phi).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn low_rank_matches_dense() {
        let g = grid();
        let a = random_family(3, g, 2, 30).unwrap();
        let b = perturbed_family(&a, 0.5, 3, 31).unwrap();
        let (la, lb) = (slater_dm(&a).unwrap(), slater_dm(&b).unwrap());
        let low = trace_distance(&la, &lb).unwrap();
        let (da, db) = (DenseDM::from_low_rank(&la).unwrap(), DenseDM::from_low_rank(&lb).unwrap());
        let dense = trace_distance(&da, &db).unwrap();
        let mixed = trace_distance(&da, &lb).unwrap();
        assert!((low - dense).abs() < 1e-9);
        assert!((low - mixed).abs() < 1e-9);
    }

    #[test]
    fn triangle_inequality() {
        let g = grid();
        for seed in 0..5 {
            let a = random_family(2, g, 2, 100 + seed).unwrap();
            let b = perturbed_family(&a, 0.3, 2, 200 + seed).unwrap();
            let c = perturbed_family(&a, 0.6, 2, 300 + seed).unwrap();
            let (da, db, dc) = (slater_dm(&a).unwrap(), slater_dm(&b).unwrap(), slater_dm(&c).unwrap());
            let ab = trace_distance(&da, &db).unwrap();
            let bc = trace_distance(&db, &dc).unwrap();
            let ac = trace_distance(&da, &dc).unwrap();
            assert!(ac <= ab + bc + 1e-9);
            assert!((ab - trace_distance(&db, &da).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn expectation_gap_examples() {
        let g = grid();
        let l = g.box_length();
        let a = random_family(2, g, 2, 40).unwrap();
        let b = perturbed_family(&a, 0.5, 2, 41).unwrap();
        let (da, db) = (slater_dm(&a).unwrap(), slater_dm(&b).unwrap());
        let one = RealField::from_fn(g, |_| 1.0);
        assert!(expectation_gap(&one, 1.0, &da, &db).unwrap().abs() < 1e-12);
        assert!(expectation_gap(&one, 1.0, &da, &da).unwrap().abs() < 1e-14);
        // Localized orbitals on either side of the half-box cut x1 = L/2.
        let left = ComplexField::from_fn(g, |x| {
            if x[0] < 0.5 * l { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        let norm = left.norm();
        let mut left = left;
        left.scale(Complex64::new(1.0 / norm, 0.0));
        let right = ComplexField::from_fn(g, |x| {
            if x[0] >= 0.5 * l { Complex64::new(1.0 / norm, 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        let sl = OrbitalSet::new(g, vec![left], Sign::Plus).unwrap();
        let sr = OrbitalSet::new(g, vec![right], Sign::Plus).unwrap();
        let half = RealField::from_fn(g, |x| if x[0] < 0.5 * l { 1.0 } else { 0.0 });
        let gap = expectation_gap(&half, 1.0, &slater_dm(&sl).unwrap(), &slater_dm(&sr).unwrap()).unwrap();
        assert!((gap - 1.0).abs() < 1e-12);
        assert!(matches!(expectation_gap(&half, 0.5, &da, &db), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn dense_grid_cap() {
        let g = Grid::new(18, 1.0).unwrap();
        let set = fermi_sphere(1, g).unwrap();
        assert!(matches!(dense_slater_dm(&set), Err(Error::Capacity(_))));
    }
}
