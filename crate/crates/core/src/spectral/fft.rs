//! Complex FFTs on the periodic lattice, zero-padding for 3/2-rule
//! dealiasing, and mode bookkeeping.
//!
//! Coefficient convention: `f̂_k = n^{-N} Σ_j f_j e^{-i k·x_j}`, so that
//! `f(x) = Σ_k f̂_k e^{i k·x}` and `Σ |f̂_k|² = ∫ f²` on the unit torus.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

type Plan = Arc<dyn Fft<f64>>;
type PlanCache = (FftPlanner<f64>, HashMap<(usize, bool), Plan>);

fn plan(len: usize, inverse: bool) -> Plan {
    static PLANS: OnceLock<Mutex<PlanCache>> = OnceLock::new();
    let cell = PLANS.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cell.lock().expect("fft plan cache poisoned");
    let (planner, cache) = &mut *guard;
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// Signed integer mode of FFT index `j` on an axis of length `n`.
/// The Nyquist index `n/2` maps to `-n/2`.
#[inline]
pub fn signed_mode(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

#[inline]
fn wrap(m: i64, n: usize) -> usize {
    m.rem_euclid(n as i64) as usize
}

/// Unnormalized in-place transform of `dim`-dimensional row-major data.
pub(crate) fn transform_nd(data: &mut [Complex64], n: usize, dim: usize, inverse: bool) {
    let p = plan(n, inverse);
    let mut scratch = vec![Complex64::new(0.0, 0.0); p.get_inplace_scratch_len()];
    match dim {
        1 => p.process_with_scratch(data, &mut scratch),
        2 => {
            // rows are contiguous (second axis)
            p.process_with_scratch(data, &mut scratch);
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = data[i * n + j];
                }
                p.process_with_scratch(&mut col, &mut scratch);
                for i in 0..n {
                    data[i * n + j] = col[i];
                }
            }
        }
        _ => unreachable!("grid dimension validated at construction"),
    }
}

/// Normalized forward transform of real samples.
pub fn forward(values: &[f64], n: usize, dim: usize) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_nd(&mut data, n, dim, false);
    let scale = 1.0 / data.len() as f64;
    for c in &mut data {
        *c *= scale;
    }
    data
}

/// Inverse transform; returns the real part (imaginary parts are round-off
/// for Hermitian spectra).
pub fn inverse(coeffs: &[Complex64], n: usize, dim: usize) -> Vec<f64> {
    let mut data = coeffs.to_vec();
    transform_nd(&mut data, n, dim, true);
    data.into_iter().map(|c| c.re).collect()
}

/// Per-axis length of the 3/2-padded grid.
#[inline]
pub fn padded_n(n: usize) -> usize {
    3 * n / 2
}

/// Whether FFT index `idx` on an `n^dim` grid carries a Nyquist component.
#[inline]
pub fn is_nyquist(idx: usize, n: usize, dim: usize) -> bool {
    let half = n / 2;
    match dim {
        1 => idx == half,
        _ => idx / n == half || idx % n == half,
    }
}

/// Embeds `n`-grid coefficients into the padded spectrum. Nyquist modes are
/// dropped.
pub fn pad(coeffs: &[Complex64], n: usize, dim: usize) -> Vec<Complex64> {
    let m = padded_n(n);
    let zero = Complex64::new(0.0, 0.0);
    match dim {
        1 => {
            let mut out = vec![zero; m];
            for (j, c) in coeffs.iter().enumerate() {
                if j != n / 2 {
                    out[wrap(signed_mode(j, n), m)] = *c;
                }
            }
            out
        }
        _ => {
            let mut out = vec![zero; m * m];
            for i in 0..n {
                if i == n / 2 {
                    continue;
                }
                let pi = wrap(signed_mode(i, n), m);
                for j in 0..n {
                    if j == n / 2 {
                        continue;
                    }
                    out[pi * m + wrap(signed_mode(j, n), m)] = coeffs[i * n + j];
                }
            }
            out
        }
    }
}

/// Restricts padded coefficients back to the `n`-grid modes `|m| < n/2`;
/// Nyquist entries are zero.
pub fn truncate(padded: &[Complex64], n: usize, dim: usize) -> Vec<Complex64> {
    let m = padded_n(n);
    let zero = Complex64::new(0.0, 0.0);
    match dim {
        1 => (0..n)
            .map(|j| {
                if j == n / 2 {
                    zero
                } else {
                    padded[wrap(signed_mode(j, n), m)]
                }
            })
            .collect(),
        _ => {
            let mut out = vec![zero; n * n];
            for i in 0..n {
                if i == n / 2 {
                    continue;
                }
                let pi = wrap(signed_mode(i, n), m);
                for j in 0..n {
                    if j == n / 2 {
                        continue;
                    }
                    out[i * n + j] = padded[pi * m + wrap(signed_mode(j, n), m)];
                }
            }
            out
        }
    }
}

/// Samples the trigonometric interpolant of `coeffs` on the padded grid.
pub fn to_padded_physical(coeffs: &[Complex64], n: usize, dim: usize) -> Vec<f64> {
    inverse(&pad(coeffs, n, dim), padded_n(n), dim)
}

/// Forward transform on the padded grid followed by truncation to `n` modes.
pub fn from_padded_physical(values: &[f64], n: usize, dim: usize) -> Vec<Complex64> {
    truncate(&forward(values, padded_n(n), dim), n, dim)
}

/// Zeroes every Nyquist coefficient in place.
pub fn clear_nyquist(coeffs: &mut [Complex64], n: usize, dim: usize) {
    let zero = Complex64::new(0.0, 0.0);
    match dim {
        1 => coeffs[n / 2] = zero,
        _ => {
            for k in 0..n {
                coeffs[(n / 2) * n + k] = zero;
                coeffs[k * n + n / 2] = zero;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_2d() {
        let n = 16;
        let vals: Vec<f64> = (0..n * n).map(|i| ((i * 7919) % 101) as f64 / 13.0).collect();
        let back = inverse(&forward(&vals, n, 2), n, 2);
        for (a, b) in vals.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pad_truncate_identity_without_nyquist() {
        let n = 8;
        let mut c: Vec<Complex64> = (0..n).map(|j| Complex64::new(j as f64, -(j as f64))).collect();
        clear_nyquist(&mut c, n, 1);
        assert_eq!(truncate(&pad(&c, n, 1), n, 1), c);
    }
}
