//! Periodic cubic grid on the torus `[0, L)^3` and the fields living on it.
//!
//! Points are stored x-fastest: the flat index of `(i, j, l)` is
//! `i + n * (j + n * l)`. Fourier modes use the same layout with the lattice
//! ordering `m = 0, 1, .., n/2 - 1, -n/2, .., -1` on every axis.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MIN_POINTS_PER_AXIS: usize = 4;
pub const MAX_POINTS_PER_AXIS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    box_length: f64,
}

impl Grid {
    pub fn new(n: usize, box_length: f64) -> Result<Self> {
        if !n.is_multiple_of(2) || !(MIN_POINTS_PER_AXIS..=MAX_POINTS_PER_AXIS).contains(&n) {
            return Err(Error::InvalidParameter(format!(
                "points per axis must be even and in [{MIN_POINTS_PER_AXIS}, {MAX_POINTS_PER_AXIS}], got {n}"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "box length must be positive and finite, got {box_length}"
            )));
        }
        Ok(Self { n, box_length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    /// Total number of grid points, `n^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Quadrature weight `(L/n)^3`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn volume(&self) -> f64 {
        self.box_length.powi(3)
    }

    /// Integer lattice index `m` of axis position `i`.
    pub fn lattice_index(&self, i: usize) -> i64 {
        let half = self.n / 2;
        if i < half {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Axis position holding lattice index `m`, if representable.
    pub fn axis_position(&self, m: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        if m < -half || m >= half {
            None
        } else if m >= 0 {
            Some(m as usize)
        } else {
            Some((m + self.n as i64) as usize)
        }
    }

    /// Wavenumbers `2 pi m / L` of one axis in lattice order.
    pub fn axis_wavenumbers(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| 2.0 * PI * self.lattice_index(i) as f64 / self.box_length)
            .collect()
    }

    /// Largest positive wavenumber component, `pi n / L * (1 - 2/n)`.
    pub fn max_positive_wavenumber(&self) -> f64 {
        2.0 * PI * (self.n / 2 - 1) as f64 / self.box_length
    }

    /// Magnitude of the unpaired Nyquist component, `pi n / L`.
    pub fn nyquist_wavenumber(&self) -> f64 {
        PI * self.n as f64 / self.box_length
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.n / 2
    }

    /// Splits a flat index into its three axis positions.
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx % n, (idx / n) % n, idx / (n * n)]
    }

    pub fn flatten(&self, pos: [usize; 3]) -> usize {
        pos[0] + self.n * (pos[1] + self.n * pos[2])
    }

    /// Cartesian coordinates of grid point `idx`.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let h = self.spacing();
        let [i, j, l] = self.unflatten(idx);
        [i as f64 * h, j as f64 * h, l as f64 * h]
    }

    /// Integer mode vector of Fourier index `idx`.
    pub fn mode(&self, idx: usize) -> [i64; 3] {
        let [i, j, l] = self.unflatten(idx);
        [self.lattice_index(i), self.lattice_index(j), self.lattice_index(l)]
    }

    /// Fourier index of integer mode `m`, if representable on this grid.
    pub fn mode_index(&self, m: [i64; 3]) -> Option<usize> {
        Some(self.flatten([
            self.axis_position(m[0])?,
            self.axis_position(m[1])?,
            self.axis_position(m[2])?,
        ]))
    }

    /// `|k|^2` for every Fourier index.
    pub fn wavenumber_squared(&self) -> Vec<f64> {
        let k = self.axis_wavenumbers();
        let n = self.n;
        let mut out = Vec::with_capacity(self.len());
        for l in 0..n {
            for j in 0..n {
                for i in 0..n {
                    out.push(k[i] * k[i] + k[j] * k[j] + k[l] * k[l]);
                }
            }
        }
        out
    }

    pub fn check_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: grid (n={}, L={}) does not match grid (n={}, L={})",
                self.n, self.box_length, other.n, other.box_length
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
}

impl RealField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "real field needs {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Quadrature of the field over the box.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Pointwise `self + factor * other`.
    pub fn add_scaled(&self, other: &RealField, factor: f64) -> Result<Self> {
        self.grid.check_same(&other.grid, "add_scaled")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + factor * b)
            .collect();
        Ok(Self {
            grid: self.grid,
            values,
        })
    }

    /// Integral of the pointwise product.
    pub fn dot(&self, other: &RealField) -> Result<f64> {
        self.grid.check_same(&other.grid, "dot")?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn max_abs_diff(&self, other: &RealField) -> Result<f64> {
        self.grid.check_same(&other.grid, "max_abs_diff")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "complex field needs {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    /// Normalized plane wave `L^{-3/2} exp(2 pi i m.x / L)`.
    pub fn plane_wave(grid: Grid, m: [i64; 3]) -> Self {
        let l = grid.box_length();
        let amp = l.powf(-1.5);
        let q = 2.0 * std::f64::consts::PI / l;
        Self::from_fn(grid, |x| {
            let phase = q * (m[0] as f64 * x[0] + m[1] as f64 * x[1] + m[2] as f64 * x[2]);
            Complex64::from_polar(amp, phase)
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// `<self, other> = sum conj(self) other dV`.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        debug_assert_eq!(self.grid, other.grid);
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Squared L2 distance `||self - other||^2`.
    pub fn distance_sqr(&self, other: &ComplexField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn max_abs_diff(&self, other: &ComplexField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn scale(&mut self, factor: Complex64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Pointwise `|f|^2`.
    pub fn modulus_sqr(&self) -> RealField {
        RealField {
            grid: self.grid,
            values: self.values.iter().map(|v| v.norm_sqr()).collect(),
        }
    }
}
