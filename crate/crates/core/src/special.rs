//! Special functions used by the kernel normalization and the singular
//! quadrature corrections: Hurwitz zeta (analytically continued to real
//! `s != 1`), Dirichlet beta, and the square-lattice zeta sums.

/// Bernoulli numbers B_2, B_4, ..., B_20.
const BERNOULLI_EVEN: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Hurwitz zeta `ζ(s, a) = Σ_{k≥0} (k + a)^{-s}` for real `s != 1`, `a > 0`,
/// by Euler-Maclaurin summation. The expansion is the analytic continuation,
/// so negative `s` is fine.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    debug_assert!(a > 0.0);
    debug_assert!((s - 1.0).abs() > 1e-12);
    const M: usize = 10;
    let mut sum = 0.0;
    for k in 0..M {
        sum += (k as f64 + a).powf(-s);
    }
    let x = M as f64 + a;
    sum += x.powf(1.0 - s) / (s - 1.0);
    sum += 0.5 * x.powf(-s);
    // rising = s (s+1) ... (s+2j-2), fact = (2j)!
    let mut rising = s;
    let mut fact = 2.0;
    let mut xpow = x.powf(-s - 1.0);
    for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
        if j > 0 {
            let m = 2 * j as u32;
            rising *= (s + m as f64 - 1.0) * (s + m as f64);
            fact *= ((m + 1) * (m + 2)) as f64;
            xpow /= x * x;
        }
        sum += b / fact * rising * xpow;
    }
    sum
}

/// Riemann zeta for real `s != 1`.
pub fn riemann_zeta(s: f64) -> f64 {
    hurwitz_zeta(s, 1.0)
}

/// Dirichlet beta `β(s) = Σ_{k≥0} (-1)^k (2k+1)^{-s}`, valid for real `s != 1`.
pub fn dirichlet_beta(s: f64) -> f64 {
    4f64.powf(-s) * (hurwitz_zeta(s, 0.25) - hurwitz_zeta(s, 0.75))
}

/// Continued lattice sum `Z_N(s) = Σ_{j ∈ ℤᴺ \ 0} |j|^{-s}` for `N ∈ {1, 2}`.
pub fn lattice_zeta(dim: usize, s: f64) -> f64 {
    match dim {
        1 => 2.0 * riemann_zeta(s),
        2 => 4.0 * riemann_zeta(0.5 * s) * dirichlet_beta(0.5 * s),
        _ => panic!("lattice_zeta: unsupported dimension {dim}"),
    }
}

/// Gamma function on the whole real line minus the poles.
pub fn gamma(x: f64) -> f64 {
    if x > 0.0 {
        statrs::function::gamma::gamma(x)
    } else {
        // Γ(x) = Γ(x + 1) / x, applied until the argument is positive.
        gamma(x + 1.0) / x
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 0 { 1.0 } else { p1 };
            dp = order as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol * b.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn riemann_zeta_reference_values() {
        close(riemann_zeta(2.0), PI * PI / 6.0, 1e-14);
        close(riemann_zeta(3.0), 1.202_056_903_159_594_2, 1e-14);
        close(riemann_zeta(0.0), -0.5, 1e-14);
        close(riemann_zeta(-1.0), -1.0 / 12.0, 1e-13);
        assert!(riemann_zeta(-2.0).abs() < 1e-12);
        close(riemann_zeta(0.5), -1.460_354_508_809_586_8, 1e-13);
        close(riemann_zeta(-0.5), -0.207_886_224_977_354_57, 1e-12);
    }

    #[test]
    fn hurwitz_half_shift_identity() {
        for &s in &[-1.5, -0.3, 0.4, 2.5] {
            let lhs = hurwitz_zeta(s, 0.5);
            let rhs = (2f64.powf(s) - 1.0) * riemann_zeta(s);
            close(lhs, rhs, 1e-12);
        }
    }

    #[test]
    fn dirichlet_beta_reference_values() {
        close(dirichlet_beta(2.0), 0.915_965_594_177_219, 1e-14);
        close(dirichlet_beta(0.0), 0.5, 1e-13);
        close(dirichlet_beta(0.5), 0.667_691_457_189_609_1, 1e-13);
    }

    #[test]
    fn lattice_zeta_matches_direct_sum_where_convergent() {
        let s = 5.0;
        let mut direct = 0.0;
        let r = 400i64;
        for i in -r..=r {
            for j in -r..=r {
                if i != 0 || j != 0 {
                    direct += ((i * i + j * j) as f64).powf(-0.5 * s);
                }
            }
        }
        close(lattice_zeta(2, s), direct, 1e-6);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(22)).sum();
        close(integral, 2.0 / 23.0, 1e-14);
        let cos: f64 = x.iter().zip(&w).map(|(x, w)| w * x.cos()).sum();
        close(cos, 2.0 * 1f64.sin(), 1e-14);
    }

    #[test]
    fn gamma_at_negative_half() {
        close(gamma(-0.5), -2.0 * PI.sqrt(), 1e-13);
        close(gamma(0.5), PI.sqrt(), 1e-13);
    }
}
