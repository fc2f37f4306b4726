//! Periodic finite-difference stencils. These are deliberately independent
//! of the FFT path: they feed the near-field corrections of the singular
//! quadratures, which serve as cross-checks of the spectral operators.

use crate::spectral::Grid;

/// `Σ_s w_s f(x + s e_axis)` for every grid point.
fn apply(values: &[f64], grid: Grid, axis: usize, taps: &[(i64, f64)], scale: f64) -> Vec<f64> {
    (0..grid.len())
        .map(|idx| {
            let [i, j] = grid.index(idx);
            let (i, j) = (i as i64, j as i64);
            let acc: f64 = taps
                .iter()
                .map(|&(s, w)| {
                    let shifted = if axis == 0 {
                        grid.flat(i + s, j)
                    } else {
                        grid.flat(i, j + s)
                    };
                    w * values[shifted]
                })
                .sum();
            acc * scale
        })
        .collect()
}

/// Fourth-order first derivative.
pub(crate) fn d1(values: &[f64], grid: Grid, axis: usize) -> Vec<f64> {
    let taps = [(-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)];
    apply(values, grid, axis, &taps, 1.0 / (12.0 * grid.h()))
}

/// Second-order second derivative.
pub(crate) fn d2_low(values: &[f64], grid: Grid, axis: usize) -> Vec<f64> {
    let taps = [(-1, 1.0), (0, -2.0), (1, 1.0)];
    apply(values, grid, axis, &taps, grid.h().powi(-2))
}

/// Second-order fourth derivative.
pub(crate) fn d4_low(values: &[f64], grid: Grid, axis: usize) -> Vec<f64> {
    let taps = [(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)];
    apply(values, grid, axis, &taps, grid.h().powi(-4))
}

/// Second-order Laplacian.
pub(crate) fn laplacian_low(values: &[f64], grid: Grid) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for axis in 0..grid.dim() {
        for (o, v) in out.iter_mut().zip(d2_low(values, grid, axis)) {
            *o += v;
        }
    }
    out
}

/// Fourth-order flux-form `∇·(c ∇u)`. The summed output telescopes, so its
/// grid sum vanishes up to round-off for any `c`, `u`.
pub(crate) fn div_coef_grad(coef: &[f64], u: &[f64], grid: Grid) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for axis in 0..grid.dim() {
        // face values at i + 1/2, stored at i
        let grad = apply(
            u,
            grid,
            axis,
            &[(-1, 1.0), (0, -27.0), (1, 27.0), (2, -1.0)],
            1.0 / (24.0 * grid.h()),
        );
        let face = apply(
            coef,
            grid,
            axis,
            &[(-1, -1.0), (0, 9.0), (1, 9.0), (2, -1.0)],
            1.0 / 16.0,
        );
        let flux: Vec<f64> = grad.iter().zip(&face).map(|(g, c)| g * c).collect();
        let div = apply(
            &flux,
            grid,
            axis,
            &[(-2, 1.0), (-1, -27.0), (0, 27.0), (1, -1.0)],
            1.0 / (24.0 * grid.h()),
        );
        for (o, v) in out.iter_mut().zip(div) {
            *o += v;
        }
    }
    out
}
