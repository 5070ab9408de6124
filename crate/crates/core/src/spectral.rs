//! Fourier-space operators on a [`Grid`].
//!
//! Plane-wave coefficients use the normalization `c_k = L^{3/2} / n^3 * DFT(f)_k`,
//! so a normalized plane wave has a single unit coefficient and
//! `||f||^2 = sum_k |c_k|^2` holds exactly on the grid.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::grid::{ComplexField, Grid, RealField};

#[derive(Debug, Clone)]
pub struct Spectral {
    grid: Grid,
    fft: FftNd,
    axis_k: Vec<f64>,
    k2: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            fft: FftNd::new(grid.n(), 3),
            axis_k: grid.axis_wavenumbers(),
            k2: grid.wavenumber_squared(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn fft(&self) -> &FftNd {
        &self.fft
    }

    /// `|k|^2` per Fourier index.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    pub fn axis_wavenumbers(&self) -> &[f64] {
        &self.axis_k
    }

    /// Wavenumber component along `axis` with the Nyquist entry zeroed, as
    /// used by odd-order derivative multipliers.
    pub fn odd_wavenumber(&self, idx: usize, axis: usize) -> f64 {
        let pos = self.grid.unflatten(idx)[axis];
        if self.grid.is_nyquist(pos) {
            0.0
        } else {
            self.axis_k[pos]
        }
    }

    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.fft.forward(data);
    }

    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.fft.inverse(data);
    }

    /// Plane-wave coefficients of `f` (Parseval-exact normalization).
    pub fn coefficients(&self, f: &ComplexField) -> Vec<Complex64> {
        let mut c = f.values().to_vec();
        self.fft.forward(&mut c);
        let scale = self.grid.volume().sqrt() / self.grid.len() as f64;
        c.iter_mut().for_each(|v| *v *= scale);
        c
    }

    /// Inverse of [`Spectral::coefficients`].
    pub fn from_coefficients(&self, coeffs: &[Complex64]) -> ComplexField {
        let mut v = coeffs.to_vec();
        self.fft.inverse(&mut v);
        let scale = self.grid.len() as f64 / self.grid.volume().sqrt();
        v.iter_mut().for_each(|x| *x *= scale);
        ComplexField::from_values(self.grid, v).expect("length preserved")
    }

    /// Applies a diagonal Fourier multiplier in place.
    pub fn apply_multiplier(&self, data: &mut [Complex64], multiplier: &[Complex64]) {
        self.fft.forward(data);
        data.par_chunks_mut(4096)
            .zip(multiplier.par_chunks(4096))
            .for_each(|(d, m)| {
                for (x, y) in d.iter_mut().zip(m) {
                    *x *= y;
                }
            });
        self.fft.inverse(data);
    }

    /// Same as [`Spectral::apply_multiplier`] but without inner parallelism, for
    /// callers that already parallelize over many fields.
    pub fn apply_multiplier_serial(&self, data: &mut [Complex64], multiplier: &[Complex64]) {
        self.fft.forward(data);
        for (x, y) in data.iter_mut().zip(multiplier) {
            *x *= y;
        }
        self.fft.inverse(data);
    }

    /// `||nabla^a f||^2 = sum_k |k|^{2a} |c_k|^2`.
    pub fn derivative_norm_sqr(&self, f: &ComplexField, order: u32) -> Result<f64> {
        if !(1..=4).contains(&order) {
            return Err(Error::InvalidParameter(format!(
                "derivative order must be in 1..=4, got {order}"
            )));
        }
        self.grid.check_same(f.grid(), "derivative_norm_sqr")?;
        let c = self.coefficients(f);
        Ok(c.iter()
            .zip(&self.k2)
            .map(|(v, k2)| k2.powi(order as i32) * v.norm_sqr())
            .sum())
    }

    /// Spectral gradient of a complex field (Nyquist components zeroed).
    pub fn gradient(&self, f: &ComplexField) -> [ComplexField; 3] {
        let mut spec = f.values().to_vec();
        self.fft.forward(&mut spec);
        let make = |axis: usize| {
            let mut d: Vec<Complex64> = spec
                .iter()
                .enumerate()
                .map(|(idx, v)| v * Complex64::new(0.0, self.odd_wavenumber(idx, axis)))
                .collect();
            self.fft.inverse(&mut d);
            ComplexField::from_values(self.grid, d).expect("length preserved")
        };
        [make(0), make(1), make(2)]
    }

    /// Spectral gradient of a real field (Nyquist components zeroed).
    pub fn gradient_real(&self, f: &RealField) -> [RealField; 3] {
        let mut spec: Vec<Complex64> = f.values().iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.fft.forward(&mut spec);
        let make = |axis: usize| {
            let mut d: Vec<Complex64> = spec
                .iter()
                .enumerate()
                .map(|(idx, v)| v * Complex64::new(0.0, self.odd_wavenumber(idx, axis)))
                .collect();
            self.fft.inverse(&mut d);
            RealField::from_values(self.grid, d.into_iter().map(|v| v.re).collect())
                .expect("length preserved")
        };
        [make(0), make(1), make(2)]
    }

    /// Spectral Laplacian `-|k|^2` of a real field.
    pub fn laplacian_real(&self, f: &RealField) -> RealField {
        let mut spec: Vec<Complex64> = f.values().iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.fft.forward(&mut spec);
        for (v, k2) in spec.iter_mut().zip(&self.k2) {
            *v *= -k2;
        }
        self.fft.inverse(&mut spec);
        RealField::from_values(self.grid, spec.into_iter().map(|v| v.re).collect())
            .expect("length preserved")
    }

    /// Spectral Laplacian of a complex field.
    pub fn laplacian(&self, f: &ComplexField) -> ComplexField {
        let mut spec = f.values().to_vec();
        self.fft.forward(&mut spec);
        for (v, k2) in spec.iter_mut().zip(&self.k2) {
            *v *= -k2;
        }
        self.fft.inverse(&mut spec);
        ComplexField::from_values(self.grid, spec).expect("length preserved")
    }

    /// Diagonal multiplier `exp(-i |k|^2 t)` of free propagation.
    pub fn free_propagator(&self, t: f64) -> Vec<Complex64> {
        self.k2
            .iter()
            .map(|k2| Complex64::from_polar(1.0, -k2 * t))
            .collect()
    }
}

/// `||nabla^a f||^2` computed in Fourier space.
pub fn spectral_derivative(f: &ComplexField, order: u32) -> Result<f64> {
    Spectral::new(*f.grid()).derivative_norm_sqr(f, order)
}
