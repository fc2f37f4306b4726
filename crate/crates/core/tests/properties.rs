use proptest::prelude::*;

use easim_core::alignment::{periodized_kernel, KernelSpec};
use easim_core::diagnostics::{coercivity_check, h_value, DiagnosticsRecord};
use easim_core::io::{decode_checkpoint, encode_checkpoint, parse_timeseries, timeseries_to_string, Checkpoint};
use easim_core::spectral::{fractional_power, Field, FractionalExponent, Grid};
use easim_core::state::{make_perturbation_ic, rho_of_sigma, sigma_of_rho, ModelParams};

fn record(step: u64, v: &[f64]) -> DiagnosticsRecord {
    DiagnosticsRecord {
        step,
        t: v[0],
        mass: v[1],
        momentum_x: v[2],
        momentum_y: v[3],
        kinetic: v[4],
        internal: v[5],
        dissipation_damping: v[6],
        dissipation_alignment: v[7],
        l2_rho_dev: v[8],
        hs_sigma: v[9],
        hs_u: v[10],
        grad_u_inf: v[11],
        sigma_holder: v[12],
        bkm_integrand: v[13],
        cross_low: v[14],
        cross_high: v[15],
        y: v[16],
        v_eps: v[17],
        w_eps: v[18],
        rho_min: v[19],
    }
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3f64..1e3,
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sigma_rho_round_trip(gamma in 1.0f64..3.5, delta in 0.0f64..0.3, seed in 0u64..1000) {
        let grid = Grid::new(1, 64).unwrap();
        let params = ModelParams::new(gamma, 0.0, 0.5, None, 1).unwrap();
        let s = make_perturbation_ic(grid, delta, seed, 8, &params).unwrap();
        let back = rho_of_sigma(&sigma_of_rho(&s.rho, gamma).unwrap(), gamma).unwrap();
        prop_assert!(back.max_abs_diff(&s.rho) <= 1e-12);
    }

    #[test]
    fn relative_enthalpy_is_nonnegative(r in -0.999f64..10.0, gamma in 1.0f64..4.0) {
        let h = h_value(r, gamma);
        prop_assert!(h >= 0.0, "h({r}, {gamma}) = {h}");
    }

    #[test]
    fn csv_round_trip_is_bit_exact(rows in prop::collection::vec((any::<u64>(), prop::collection::vec(finite(), 20)), 0..6)) {
        let recs: Vec<_> = rows.iter().map(|(k, v)| record(*k, v)).collect();
        let text = timeseries_to_string(&recs).unwrap();
        prop_assert!(!text.contains('\r'));
        let back = parse_timeseries(text.as_bytes()).unwrap();
        prop_assert_eq!(back.len(), recs.len());
        for (a, b) in back.iter().zip(&recs) {
            prop_assert_eq!(a.step, b.step);
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn checkpoint_round_trip(dim in 1usize..=2, seed in 0u64..500, gamma in 1.0f64..3.0, beta in 0.0f64..2.0, alpha in 0.05f64..0.95) {
        let grid = Grid::new(dim, if dim == 1 { 32 } else { 16 }).unwrap();
        let params = ModelParams::new(gamma, beta, alpha, None, dim).unwrap();
        let state = make_perturbation_ic(grid, 0.1, seed, 3, &params).unwrap();
        let ck = Checkpoint { state, gamma, beta, alpha };
        let bytes = encode_checkpoint(&ck);
        prop_assert_eq!(decode_checkpoint(&bytes).unwrap(), ck);
        prop_assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn coercivity_holds(seed in 0u64..10_000, alpha in 0.1f64..0.9, delta in 0.01f64..0.3) {
        let grid = Grid::new(1, 32).unwrap();
        let params = ModelParams::new(1.0, 0.0, alpha, None, 1).unwrap();
        let table = periodized_kernel(&KernelSpec::new(params.alpha, 1).unwrap(), grid).unwrap();
        let s = make_perturbation_ic(grid, delta, seed, 6, &params).unwrap();
        let c = coercivity_check(&s, &table).unwrap();
        prop_assert!(c.margin >= 1.0, "margin {}", c.margin);
    }

    #[test]
    fn fractional_powers_compose(a in 0.0f64..2.0, b in 0.0f64..2.0, seed in 0u64..1000) {
        let grid = Grid::new(1, 64).unwrap();
        let params = ModelParams::new(1.0, 0.0, 0.5, None, 1).unwrap();
        let f = make_perturbation_ic(grid, 0.1, seed, 8, &params).unwrap().u.component(0).clone();
        let two = fractional_power(&fractional_power(&f, a), b);
        let one = fractional_power(&f, a + b);
        let scale = one.values().iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        prop_assert!(two.max_abs_diff(&one) <= 1e-10 * scale);
    }

    #[test]
    fn parseval(values in prop::collection::vec(-10.0f64..10.0, 64)) {
        let grid = Grid::new(1, 64).unwrap();
        let f = Field::new(grid, values).unwrap();
        let physical: f64 = f.values().iter().map(|x| x * x).sum::<f64>() * grid.cell_volume();
        let spectral: f64 = f.spectrum().iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((physical - spectral).abs() <= 1e-12 * physical.max(1.0));
    }
}

#[test]
fn kernel_table_is_even() {
    for (dim, n) in [(1, 64), (2, 16)] {
        let grid = Grid::new(dim, n).unwrap();
        for alpha in [0.2, 0.5, 0.8] {
            let spec = KernelSpec::new(FractionalExponent::new(alpha).unwrap(), dim).unwrap();
            let t = periodized_kernel(&spec, grid).unwrap();
            let v = t.values();
            for idx in 0..grid.len() {
                let [i, j] = grid.index(idx);
                let mirror = grid.flat(-(i as i64), -(j as i64));
                let scale = v[idx].abs().max(1.0);
                assert!(
                    (v[idx] - v[mirror]).abs() <= 1e-12 * scale,
                    "dim {dim} alpha {alpha} at {idx}"
                );
            }
        }
    }
}
