//! Uniform periodic lattices on the unit torus, grid functions, and the
//! Fourier-multiplier operators built on them.
//!
//! The domain is `[0,1)ᴺ` with `N ∈ {1, 2}`, so physical wavenumbers are
//! `k = 2π m` for integer mode vectors `m`. Two-dimensional samples are stored
//! row-major with the x index slowest: sample `(i, j)` lives at `i*n + j` and
//! sits at `(i h, j h)`.

pub mod fft;
mod ops;

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use ops::derivative_wavevector;
pub use ops::{
    dealiased_product, divergence, fractional_laplacian, fractional_power, gradient, holder_proxy, inverse_laplacian,
    laplacian, sobolev_norm, sup_norm,
};

/// Uniform periodic lattice with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} unsupported (1 or 2)")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n} must be a power of two and at least 8"
            )));
        }
        Ok(Grid { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Total number of samples, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Physical coordinates of sample `idx` (unused components are 0).
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let h = self.h();
        match self.dim {
            1 => [idx as f64 * h, 0.0],
            _ => [(idx / self.n) as f64 * h, (idx % self.n) as f64 * h],
        }
    }

    /// Per-axis lattice indices of sample `idx`.
    pub fn index(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.n, idx % self.n],
        }
    }

    /// Flat index of the per-axis indices `(i, j)`, wrapped periodically.
    pub fn flat(&self, i: i64, j: i64) -> usize {
        let n = self.n as i64;
        match self.dim {
            1 => i.rem_euclid(n) as usize,
            _ => (i.rem_euclid(n) * n + j.rem_euclid(n)) as usize,
        }
    }

    /// Integer mode vector for FFT index `idx`.
    pub fn mode(&self, idx: usize) -> [i64; 2] {
        let [i, j] = self.index(idx);
        match self.dim {
            1 => [fft::signed_mode(i, self.n), 0],
            _ => [fft::signed_mode(i, self.n), fft::signed_mode(j, self.n)],
        }
    }

    /// Physical wavevector `2π m` for FFT index `idx`.
    pub fn wavevector(&self, idx: usize) -> [f64; 2] {
        let [a, b] = self.mode(idx);
        [2.0 * PI * a as f64, 2.0 * PI * b as f64]
    }

    /// `|k|` for FFT index `idx`.
    pub fn wavenumber(&self, idx: usize) -> f64 {
        let [a, b] = self.wavevector(idx);
        (a * a + b * b).sqrt()
    }

    pub fn is_nyquist(&self, idx: usize) -> bool {
        fft::is_nyquist(idx, self.n, self.dim)
    }
}

/// Exponent `α` of the fractional Laplacian, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FractionalExponent(f64);

impl FractionalExponent {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(FractionalExponent(alpha))
        } else {
            Err(Error::param("alpha", format!("{alpha} not in (0, 1)")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FractionalExponent {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        FractionalExponent::new(v)
    }
}

impl From<FractionalExponent> for f64 {
    fn from(a: FractionalExponent) -> f64 {
        a.0
    }
}

/// Real grid function. Values are finite by construction; the spectrum is
/// computed lazily and cached.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl Field {
    /// Validates length and finiteness.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self::from_raw(grid, values))
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        Field {
            grid,
            values,
            spectrum: OnceLock::new(),
        }
    }

    /// Samples `f` at the grid points.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Field::new(grid, values)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Real field with the given spectral coefficients (imaginary round-off
    /// is discarded).
    pub fn from_spectrum(grid: Grid, coeffs: &[Complex64]) -> Self {
        debug_assert_eq!(coeffs.len(), grid.len());
        let values = fft::inverse(coeffs, grid.n(), grid.dim());
        let f = Self::from_raw(grid, values);
        let _ = f.spectrum.set(coeffs.to_vec());
        f
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum
            .get_or_init(|| fft::forward(&self.values, self.grid.n(), self.grid.dim()))
    }

    /// `∫ f dx` on the unit torus (rectangle rule, exact for trigonometric
    /// polynomials resolved on the grid).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise map. Non-finite output is rejected.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn map_raw(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise binary combination on a shared grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Field::new(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn scale(&self, a: f64) -> Field {
        self.map_raw(|v| a * v)
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.zip_with(other, |x, y| a * x + b * y)
    }

    /// Largest absolute pointwise difference.
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `dim` fields on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Field>,
}

impl VectorField {
    pub fn new(components: Vec<Field>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidGrid("vector field without components".into()));
        };
        let grid = first.grid();
        if components.len() != grid.dim() {
            return Err(Error::InvalidGrid(format!(
                "{} components on a {}-dimensional grid",
                components.len(),
                grid.dim()
            )));
        }
        if components.iter().any(|c| c.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(VectorField { components })
    }

    pub fn zeros(grid: Grid) -> Self {
        VectorField {
            components: (0..grid.dim()).map(|_| Field::zeros(grid)).collect(),
        }
    }

    pub fn grid(&self) -> Grid {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Field {
        &self.components[i]
    }

    pub fn into_components(self) -> Vec<Field> {
        self.components
    }

    /// Pointwise Euclidean magnitude squared.
    pub fn norm_sq_pointwise(&self) -> Vec<f64> {
        let len = self.grid().len();
        (0..len)
            .map(|i| self.components.iter().map(|c| c.values()[i].powi(2)).sum())
            .collect()
    }

    pub fn map_components(&self, f: impl Fn(&Field) -> Field) -> VectorField {
        VectorField {
            components: self.components.iter().map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1, 8).is_ok());
        assert!(Grid::new(1, 4).is_err());
        assert!(Grid::new(1, 24).is_err());
        assert!(Grid::new(3, 8).is_err());
        assert_eq!(Grid::new(2, 16).unwrap().len(), 256);
    }

    #[test]
    fn mode_set_closed_under_negation() {
        let g = Grid::new(2, 8).unwrap();
        let modes: std::collections::HashSet<[i64; 2]> = (0..g.len()).map(|i| g.mode(i)).collect();
        let n = g.n() as i64;
        for m in &modes {
            let neg = [
                (-m[0] + n / 2).rem_euclid(n) - n / 2,
                (-m[1] + n / 2).rem_euclid(n) - n / 2,
            ];
            assert!(modes.contains(&neg));
        }
    }

    #[test]
    fn non_finite_rejected_with_location() {
        let g = Grid::new(1, 8).unwrap();
        let mut v = vec![0.0; 8];
        v[5] = f64::NAN;
        match Field::new(g, v) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn alpha_bounds() {
        assert!(FractionalExponent::new(0.0).is_err());
        assert!(FractionalExponent::new(1.0).is_err());
        assert!(FractionalExponent::new(0.3).is_ok());
    }
}
