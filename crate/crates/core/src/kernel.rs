//! Periodized interaction kernels as Fourier multipliers.
//!
//! Both kernels drop the zero mode (`v(0) = 0`), which is the same as a
//! uniform neutralizing background on the torus.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, RealField};
use crate::spectral::Spectral;

/// Relative size of the imaginary part tolerated before truncating a
/// convolution result to real.
pub const IMAG_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `1/|x|`, multiplier `4 pi / |k|^2`.
    Coulomb,
    /// `1/|x|^2`, multiplier `2 pi^2 / |k|`.
    CoulombSquared,
}

/// Sign of the pair interaction: `Plus` is repulsive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }
}

impl std::str::FromStr for Sign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "plus" | "+" | "+1" | "1" => Ok(Sign::Plus),
            "minus" | "-" | "-1" => Ok(Sign::Minus),
            other => Err(Error::InvalidParameter(format!(
                "sign must be plus or minus, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
        })
    }
}

#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    grid: Grid,
    kind: KernelKind,
    sign: Sign,
    coeffs: Vec<f64>,
}

impl KernelSpectrum {
    /// `sign` only affects [`KernelKind::Coulomb`].
    pub fn new(grid: Grid, kind: KernelKind, sign: Sign) -> Self {
        let s = match kind {
            KernelKind::Coulomb => sign.value(),
            KernelKind::CoulombSquared => 1.0,
        };
        let coeffs = grid
            .wavenumber_squared()
            .into_iter()
            .map(|k2| {
                if k2 == 0.0 {
                    0.0
                } else {
                    match kind {
                        KernelKind::Coulomb => s * 4.0 * PI / k2,
                        KernelKind::CoulombSquared => 2.0 * PI * PI / k2.sqrt(),
                    }
                }
            })
            .collect();
        Self { grid, kind, sign, coeffs }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// Multiplier per Fourier index.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Periodized kernel in real space, `K(x) = L^{-3} sum_k v(k) e^{ikx}`.
    pub fn real_space(&self) -> RealField {
        let spectral = Spectral::new(self.grid);
        self.real_space_with(&spectral)
    }

    pub fn real_space_with(&self, spectral: &Spectral) -> RealField {
        let mut buf: Vec<Complex64> = self.coeffs.iter().map(|c| Complex64::new(*c, 0.0)).collect();
        spectral.inverse_in_place(&mut buf);
        let scale = 1.0 / self.grid.cell_volume();
        let values = buf.into_iter().map(|v| v.re * scale).collect();
        RealField::from_values(self.grid, values).expect("length preserved")
    }

    /// Periodic convolution `(v * rho)(x) = sum_y K(x - y) rho(y) dV`.
    pub fn convolve(&self, rho: &RealField) -> Result<RealField> {
        self.convolve_with(&Spectral::new(self.grid), rho)
    }

    /// Same as [`KernelSpectrum::convolve`] reusing a prepared transform.
    pub fn convolve_with(&self, spectral: &Spectral, rho: &RealField) -> Result<RealField> {
        self.convolve_checked(spectral, rho, IMAG_TOLERANCE)
    }

    /// Convolution failing if the relative imaginary part exceeds `imag_tol`.
    pub fn convolve_checked(&self, spectral: &Spectral, rho: &RealField, imag_tol: f64) -> Result<RealField> {
        self.grid.check_same(rho.grid(), "convolve")?;
        self.grid.check_same(spectral.grid(), "convolve")?;
        let mut buf: Vec<Complex64> = rho.values().iter().map(|v| Complex64::new(*v, 0.0)).collect();
        spectral.forward_in_place(&mut buf);
        buf.par_chunks_mut(4096)
            .zip(self.coeffs.par_chunks(4096))
            .for_each(|(b, c)| {
                for (x, y) in b.iter_mut().zip(c) {
                    *x *= y;
                }
            });
        spectral.inverse_in_place(&mut buf);
        let mut max_re = 0.0f64;
        let mut max_im = 0.0f64;
        for v in &buf {
            max_re = max_re.max(v.re.abs());
            max_im = max_im.max(v.im.abs());
        }
        // Scale by the largest possible output so roundoff on an (almost)
        // vanishing result is not mistaken for a complex one.
        let bound = rho.max_abs() * self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if max_im > imag_tol * max_re.max(bound) {
            return Err(Error::Numerical(format!(
                "convolution has imaginary part {max_im:e} against real part {max_re:e}"
            )));
        }
        let values = buf.into_iter().map(|v| v.re).collect();
        RealField::from_values(self.grid, values)
    }

    /// Convolution of a complex field, in place.
    pub fn convolve_complex_in_place(&self, spectral: &Spectral, data: &mut [Complex64]) {
        let mult: Vec<Complex64> = self.coeffs.iter().map(|c| Complex64::new(*c, 0.0)).collect();
        spectral.apply_multiplier(data, &mult);
    }
}
