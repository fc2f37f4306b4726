use num_complex::Complex64;

use super::{fft, Field, FractionalExponent, Grid, VectorField};
use crate::error::{Error, Result};

/// Derivative wavevector: `2π m` with the Nyquist component of each axis
/// zeroed, since an odd derivative of the Nyquist mode is not representable
/// by a real grid function.
pub(crate) fn derivative_wavevector(grid: Grid, idx: usize) -> [f64; 2] {
    let n = grid.n();
    let mut k = grid.wavevector(idx);
    let ix = grid.index(idx);
    for a in 0..grid.dim() {
        if ix[a] == n / 2 {
            k[a] = 0.0;
        }
    }
    k
}

fn apply_multiplier(f: &Field, symbol: impl Fn(usize) -> Complex64) -> Field {
    let coeffs: Vec<Complex64> = f.spectrum().iter().enumerate().map(|(i, c)| c * symbol(i)).collect();
    Field::from_spectrum(f.grid(), &coeffs)
}

/// Fourier multiplier `|k|^λ` (`L^λ` with `L = (-Δ)^{1/2}`). For `λ > 0` the
/// zero mode is annihilated; `λ = 0` is the identity.
pub fn fractional_power(f: &Field, lambda: f64) -> Field {
    if lambda == 0.0 {
        return f.clone();
    }
    let grid = f.grid();
    apply_multiplier(f, |i| Complex64::new(grid.wavenumber(i).powf(lambda), 0.0))
}

/// `L^{2α} f`: the periodic fractional Laplacian, symbol `|k|^{2α}`.
pub fn fractional_laplacian(f: &Field, alpha: FractionalExponent) -> Field {
    fractional_power(f, 2.0 * alpha.get())
}

pub fn gradient(f: &Field) -> VectorField {
    let grid = f.grid();
    let comps = (0..grid.dim())
        .map(|a| apply_multiplier(f, |i| Complex64::new(0.0, derivative_wavevector(grid, i)[a])))
        .collect();
    VectorField::new(comps).expect("gradient components share the grid")
}

pub fn divergence(v: &VectorField) -> Field {
    let grid = v.grid();
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (a, comp) in v.components().iter().enumerate() {
        for (i, c) in comp.spectrum().iter().enumerate() {
            acc[i] += c * Complex64::new(0.0, derivative_wavevector(grid, i)[a]);
        }
    }
    Field::from_spectrum(grid, &acc)
}

/// Laplacian with symbol `-|k_d|²`, `k_d` the derivative wavevector, so that
/// `divergence(gradient(f)) == laplacian(f)` exactly.
pub fn laplacian(f: &Field) -> Field {
    let grid = f.grid();
    apply_multiplier(f, |i| {
        let k = derivative_wavevector(grid, i);
        Complex64::new(-(k[0] * k[0] + k[1] * k[1]), 0.0)
    })
}

/// Zero-mean solution `ψ` of `-Δψ = f - mean(f)` (symbol `1/|k|²`).
pub fn inverse_laplacian(f: &Field) -> Field {
    let grid = f.grid();
    apply_multiplier(f, |i| {
        let k = grid.wavenumber(i);
        if k == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0 / (k * k), 0.0)
        }
    })
}

/// Pointwise product with 3/2-rule zero padding, so quadratic aliasing onto
/// the retained modes vanishes.
pub fn dealiased_product(f: &Field, g: &Field) -> Result<Field> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = f.grid();
    let (n, dim) = (grid.n(), grid.dim());
    let pf = fft::to_padded_physical(f.spectrum(), n, dim);
    let pg = fft::to_padded_physical(g.spectrum(), n, dim);
    let prod: Vec<f64> = pf.iter().zip(&pg).map(|(a, b)| a * b).collect();
    Ok(Field::from_spectrum(grid, &fft::from_padded_physical(&prod, n, dim)))
}

/// `(Σ_k (1 + |k|²)^s |f̂_k|²)^{1/2}`.
pub fn sobolev_norm(f: &Field, s: f64) -> f64 {
    let grid = f.grid();
    f.spectrum()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let k2 = grid.wavenumber(i).powi(2);
            (1.0 + k2).powf(s) * c.norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

pub fn sup_norm(f: &Field) -> f64 {
    f.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Spectral surrogate for the Hölder norm: `‖f‖_∞ + ‖L^λ f‖_∞`, `0 < λ < 2`.
/// This is a monitor, not an equivalent norm.
pub fn holder_proxy(f: &Field, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 2.0) {
        return Err(Error::param("lambda", format!("{lambda} not in (0, 2)")));
    }
    Ok(sup_norm(f) + sup_norm(&fractional_power(f, lambda)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn g1(n: usize) -> Grid {
        Grid::new(1, n).unwrap()
    }

    fn a(x: f64) -> FractionalExponent {
        FractionalExponent::new(x).unwrap()
    }

    #[test]
    fn constant_is_in_kernel() {
        let f = Field::constant(g1(32), 5.0);
        let out = fractional_laplacian(&f, a(0.3));
        assert!(sup_norm(&out) < 1e-12);
        assert!(out.integral().abs() < 1e-14);
    }

    #[test]
    fn cosine_eigenfunction_half() {
        let g = g1(64);
        let f = Field::from_fn(g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let out = fractional_laplacian(&f, a(0.5));
        let want = Field::from_fn(g, |x| 2.0 * PI * (2.0 * PI * x[0]).cos()).unwrap();
        assert!(out.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn two_mode_quarter() {
        let g = g1(64);
        let f = Field::from_fn(g, |x| (4.0 * PI * x[0]).cos() + (2.0 * PI * x[0]).sin()).unwrap();
        let out = fractional_laplacian(&f, a(0.25));
        // mode-by-mode multiplier evaluation
        let want = Field::from_fn(g, |x| {
            (4.0 * PI).sqrt() * (4.0 * PI * x[0]).cos() + (2.0 * PI).sqrt() * (2.0 * PI * x[0]).sin()
        })
        .unwrap();
        assert!(out.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn gradient_of_sine_and_constant() {
        let g = g1(32);
        let f = Field::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        let d = gradient(&f);
        let want = Field::from_fn(g, |x| 2.0 * PI * (2.0 * PI * x[0]).cos()).unwrap();
        assert!(d.component(0).max_abs_diff(&want) < 1e-12);
        let c = gradient(&Field::constant(g, 3.0));
        assert!(sup_norm(c.component(0)) < 1e-13);
    }

    #[test]
    fn divergence_of_gradient_2d() {
        let g = Grid::new(2, 32).unwrap();
        let f = Field::from_fn(g, |x| (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos()).unwrap();
        let lap = divergence(&gradient(&f));
        let want = f.scale(-8.0 * PI * PI);
        assert!(lap.max_abs_diff(&want) < 1e-11);
        assert!(lap.max_abs_diff(&laplacian(&f)) < 1e-11);
    }

    #[test]
    fn product_identity_and_square() {
        let g = g1(32);
        let one = Field::constant(g, 1.0);
        let h = Field::from_fn(g, |x| (2.0 * PI * x[0]).sin() + 0.3 * (6.0 * PI * x[0]).cos()).unwrap();
        assert!(dealiased_product(&one, &h).unwrap().max_abs_diff(&h) < 1e-13);

        let c = Field::from_fn(g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let sq = dealiased_product(&c, &c).unwrap();
        let s = sq.spectrum();
        assert!((s[0].re - 0.5).abs() < 1e-14);
        assert!((s[2].re - 0.25).abs() < 1e-14 && (s[30].re - 0.25).abs() < 1e-14);
        let rest: f64 = s
            .iter()
            .enumerate()
            .filter(|(i, _)| ![0, 2, 30].contains(i))
            .map(|(_, c)| c.norm())
            .sum();
        assert!(rest < 1e-14);
    }

    #[test]
    fn highest_retained_mode_square_has_no_low_mode_garbage() {
        let n = 32;
        let g = g1(n);
        let m = (n / 2 - 1) as f64;
        let f = Field::from_fn(g, |x| (2.0 * PI * m * x[0]).cos()).unwrap();
        let sq = dealiased_product(&f, &f).unwrap();
        // exact: 1/2 + 1/2 cos(2·2πm x); the second mode is beyond n/2 and dropped
        let s = sq.spectrum();
        assert!((s[0].re - 0.5).abs() < 1e-14);
        let other: f64 = s.iter().skip(1).map(|c| c.norm()).sum();
        assert!(other < 1e-13, "aliased energy {other}");
    }

    #[test]
    fn mismatched_grids_rejected() {
        let f = Field::zeros(g1(16));
        let h = Field::zeros(g1(32));
        assert!(matches!(dealiased_product(&f, &h), Err(Error::GridMismatch)));
    }

    #[test]
    fn norms() {
        let g = g1(64);
        let z = Field::zeros(g);
        assert_eq!(sobolev_norm(&z, 2.0), 0.0);
        assert_eq!(sup_norm(&z), 0.0);
        assert_eq!(holder_proxy(&z, 0.7).unwrap(), 0.0);

        let s = Field::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        let want = ((1.0 + 4.0 * PI * PI) * 0.5).sqrt();
        assert!((sobolev_norm(&s, 1.0) - want).abs() < 1e-12);

        let c = Field::from_fn(g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        assert!((holder_proxy(&c, 1.0).unwrap() - (1.0 + 2.0 * PI)).abs() < 1e-12);
        assert!(holder_proxy(&c, 2.0).is_err());
    }

    #[test]
    fn inverse_laplacian_single_mode() {
        let g = g1(32);
        let r = Field::from_fn(g, |x| 0.1 * (2.0 * PI * x[0]).cos()).unwrap();
        let psi = inverse_laplacian(&r);
        let want = r.scale(1.0 / (4.0 * PI * PI));
        assert!(psi.max_abs_diff(&want) < 1e-15);
    }
}
