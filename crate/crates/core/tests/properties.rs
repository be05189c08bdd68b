use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use exciton_heom::config::{parse_config, ScanParameter};
use exciton_heom::files::{format_series, format_trajectory, parse_series, parse_trajectory};
use exciton_heom::hierarchy::{
    enumerate_indices, operator_count, required_depth, validity_flag, CharacteristicFrequency,
};
use exciton_heom::measures::{nm_ity, trace_distance, DistanceSeries, SeriesKind};
use exciton_heom::propagator::{
    convert_representation, propagate, HierarchyState, IntegrationSettings, Representation,
};
use exciton_heom::scan::{dimer_preset, run_scan, ScanSpec};
use exciton_heom::units::{BathSpec, OpenSystem};

/// Number of n-tuples of non-negative integers with sum ≤ max, by explicit
/// nested enumeration.
fn brute_count(n: usize, max: u32) -> u128 {
    fn rec(sites_left: usize, budget: u32) -> u128 {
        if sites_left == 0 {
            return 1;
        }
        (0..=budget).map(|used| rec(sites_left - 1, budget - used)).sum()
    }
    rec(n, max)
}

fn density_matrix(n: usize, raw: &[f64]) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(n, n, |i, j| Complex64::new(raw[2 * (i * n + j)], raw[2 * (i * n + j) + 1]));
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    rho / tr
}

fn unitary(n: usize, raw: &[f64]) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(n, n, |i, j| Complex64::new(raw[2 * (i * n + j)], raw[2 * (i * n + j) + 1]));
    let h = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| Complex64::from_polar(1.0, x)));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

fn dimer(lambda: f64, tau_c: f64) -> OpenSystem {
    let bath = BathSpec::from_correlation_time(lambda, tau_c, 288.0).unwrap();
    let j = DMatrix::from_row_slice(2, 2, &[0.0, -87.7, -87.7, 0.0]);
    OpenSystem::from_parts(vec![0.0, 120.0], j, bath).unwrap()
}

fn series(values: Vec<f64>) -> DistanceSeries {
    DistanceSeries {
        times: (0..values.len()).map(|k| k as f64).collect(),
        values,
        kind: SeriesKind::SystemTraceDistance,
    }
}

proptest! {
    #[test]
    fn operator_count_matches_enumeration(n in 1usize..=8, max in 0u32..=12) {
        prop_assert_eq!(operator_count(n, max), brute_count(n, max));
    }

    #[test]
    fn table_is_tier_major_and_adjacency_round_trips(n in 1usize..=5, max in 0u32..=6) {
        let table = enumerate_indices(n, max).unwrap();
        prop_assert_eq!(table.len() as u128, brute_count(n, max));
        prop_assert!(table.index(0).is_zero());
        for w in table.indices().windows(2) {
            prop_assert!(w[0].tier() < w[1].tier() || (w[0].tier() == w[1].tier() && w[0].entries() < w[1].entries()));
        }
        for k in 0..table.len() {
            prop_assert_eq!(table.ordinal_of(table.index(k)), Some(k));
            for m in 0..n {
                if let Some(j) = table.raise(k, m) {
                    prop_assert_eq!(table.lower(j, m), Some(k));
                    prop_assert_eq!(table.index(j).tier(), table.index(k).tier() + 1);
                } else {
                    prop_assert_eq!(table.index(k).tier(), max);
                }
                if let Some(j) = table.lower(k, m) {
                    prop_assert_eq!(table.raise(j, m), Some(k));
                } else {
                    prop_assert_eq!(table.index(k).entries()[m], 0);
                }
            }
        }
        let again = enumerate_indices(n, max).unwrap();
        prop_assert_eq!(again.indices(), table.indices());
    }

    #[test]
    fn trace_distance_is_a_unitarily_invariant_metric(
        a in prop::collection::vec(-1.0f64..1.0, 18),
        b in prop::collection::vec(-1.0f64..1.0, 18),
        c in prop::collection::vec(-1.0f64..1.0, 18),
        u in prop::collection::vec(-3.0f64..3.0, 18),
    ) {
        let (r1, r2, r3) = (density_matrix(3, &a), density_matrix(3, &b), density_matrix(3, &c));
        let d12 = trace_distance(&r1, &r2).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d12));
        prop_assert!((d12 - trace_distance(&r2, &r1).unwrap()).abs() < 1e-12);
        prop_assert!(trace_distance(&r1, &r1).unwrap() < 1e-12);
        let d13 = trace_distance(&r1, &r3).unwrap();
        let d23 = trace_distance(&r2, &r3).unwrap();
        prop_assert!(d12 <= d13 + d23 + 1e-12);
        let u = unitary(3, &u);
        let rot = |r: &DMatrix<Complex64>| &u * r * u.adjoint();
        prop_assert!((trace_distance(&rot(&r1), &rot(&r2)).unwrap() - d12).abs() < 1e-10);
    }

    #[test]
    fn nm_ity_counts_positive_increments(values in prop::collection::vec(0.0f64..1.0, 0..50)) {
        let nm = nm_ity(&series(values.clone()));
        prop_assert!(nm >= 0.0);
        let expected: f64 = values.windows(2).map(|w| (w[1] - w[0]).max(0.0)).sum();
        prop_assert!((nm - expected).abs() < 1e-12);
        // rises minus falls telescopes to the net change
        let falls = nm_ity(&series(values.iter().map(|v| -v).collect()));
        let net = match (values.first(), values.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        };
        prop_assert!((nm - falls - net).abs() < 1e-10);
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(nm_ity(&series(sorted)), 0.0);
    }

    #[test]
    fn required_depth_is_monotone_in_gamma(g1 in 0.001f64..0.2, g2 in 0.001f64..0.2, tier in 0u32..80) {
        let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let sys = dimer(20.0, 100.0);
        let f = CharacteristicFrequency::EigenvalueSpread;
        let slow = BathSpec::new(20.0, lo, 288.0).unwrap();
        let fast = BathSpec::new(20.0, hi, 288.0).unwrap();
        prop_assert!(required_depth(sys.model(), &slow, 5.0, f) >= required_depth(sys.model(), &fast, 5.0, f));
        if validity_flag(tier, sys.model(), &slow, 5.0, f) {
            prop_assert!(validity_flag(tier, sys.model(), &fast, 5.0, f));
        }
    }

    #[test]
    fn representation_conversion_round_trips(raw in prop::collection::vec(-1.0f64..1.0, 6 * 8), lambda in 1.0f64..100.0) {
        let sys = dimer(lambda, 100.0);
        let table = Arc::new(enumerate_indices(2, 2).unwrap());
        let matrices: Vec<DMatrix<Complex64>> = (0..table.len())
            .map(|k| DMatrix::from_fn(2, 2, |i, j| Complex64::new(raw[8 * k + 2 * (2 * i + j)], raw[8 * k + 2 * (2 * i + j) + 1])))
            .collect();
        let state = HierarchyState::from_matrices(Arc::clone(&table), &matrices, Representation::Regular).unwrap();
        let there = convert_representation(&state, Representation::Normalized, sys.bath()).unwrap();
        let back = convert_representation(&there, Representation::Regular, sys.bath()).unwrap();
        for (x, y) in back.as_slice().iter().zip(state.as_slice()) {
            prop_assert!((x - y).norm() < 1e-12 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn series_files_round_trip_bit_exactly(values in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 0..40)) {
        let s = series(values);
        prop_assert_eq!(parse_series(&format_series(&s, Some(&dimer_preset()))).unwrap(), s);
    }

    #[test]
    fn config_round_trips(lambda in 0.0f64..500.0, tau in 1.0f64..1000.0, tier in 0u32..60, t_end in 0u32..100) {
        let mut cfg = dimer_preset().with_lambda(lambda).with_tau_c(tau).with_max_tier(tier);
        cfg.integration.t_end_fs = f64::from(t_end) * 10.0;
        prop_assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn propagation_conserves_trace_and_hermiticity(
        raw in prop::collection::vec(-1.0f64..1.0, 8),
        lambda in 0.0f64..150.0,
        tau in 30.0f64..200.0,
    ) {
        let rho0 = density_matrix(2, &raw);
        let traj = propagate(&rho0, &dimer(lambda, tau), IntegrationSettings::new(6, 200.0), true).unwrap();
        for (rho, snap) in traj.system_states.iter().zip(traj.ado_snapshots.as_ref().unwrap()) {
            prop_assert!((rho.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-10);
            prop_assert!(snap.max_hermitian_deviation() < 1e-10);
        }
    }

    #[test]
    fn trajectory_files_round_trip(raw in prop::collection::vec(-1.0f64..1.0, 8)) {
        let rho0 = density_matrix(2, &raw);
        let traj = propagate(&rho0, &dimer(20.0, 100.0), IntegrationSettings::new(3, 40.0), false).unwrap();
        let (times, states) = parse_trajectory(&format_trajectory(&traj, None)).unwrap();
        prop_assert_eq!(times, traj.times);
        prop_assert_eq!(states, traj.system_states);
    }
}

#[test]
fn scans_are_deterministic() {
    let mut base = dimer_preset().with_max_tier(6);
    base.integration.t_end_fs = 200.0;
    let spec = ScanSpec::new(base, ScanParameter::DissipationRate, vec![0.005, 0.01, 0.02]).with_t_end(200.0);
    let a = run_scan(&spec).unwrap();
    let b = run_scan(&spec).unwrap();
    assert_eq!(a.rows.len(), 3);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.nm_ity.to_bits(), y.nm_ity.to_bits());
        assert_eq!(x, y);
    }
    // validity flips at most once along increasing γ
    let flips = a.rows.windows(2).filter(|w| w[0].valid != w[1].valid).count();
    assert!(flips <= 1);
}
