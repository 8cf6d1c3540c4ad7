use proptest::prelude::*;

use critmat::cone::{le_rel, ConeMatrix, ConePoint};
use critmat::ensemble::EnsembleSpec;
use critmat::measure::{HistogramConfig, OccupationHistogram};
use critmat::metric::{
    cone_distance, contraction_coefficient, hennion_distance, projective_action, Direction, MetricConstants,
};
use critmat::runner::Runner;
use critmat::simulator::{ladder_decomposition, paired_stopping_times, TrajectoryState, LADDER_NORM_TOL};

/// Rows of log-uniform entries lifted to the `δ·(row max)` floor, with an
/// optional zero row.
fn s_delta(d: usize) -> impl Strategy<Value = (f64, ConeMatrix)> {
    (
        0.05f64..=1.0,
        prop::collection::vec(-3.0f64..3.0, d * d),
        prop::option::weighted(0.2, 0..d),
    )
        .prop_map(move |(delta, logs, zero_row)| {
            let mut entries: Vec<f64> = logs.iter().map(|e| 10f64.powf(*e)).collect();
            for (i, row) in entries.chunks_mut(d).enumerate() {
                if zero_row == Some(i) {
                    row.fill(0.0);
                    continue;
                }
                let floor = delta * row.iter().copied().fold(0.0, f64::max);
                row.iter_mut().for_each(|v| *v = v.max(floor));
            }
            (delta, ConeMatrix::new(d, entries).unwrap())
        })
}

fn cone_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![3 => (-3.0f64..3.0).prop_map(|e| 10f64.powf(e)), 1 => Just(0.0)], d)
        .prop_filter("nonzero", |x| x.iter().any(|v| *v > 0.0))
}

fn direction(d: usize) -> impl Strategy<Value = Direction> {
    cone_vec(d).prop_map(|x| Direction::from_point(&ConePoint::new(x).unwrap()).unwrap())
}

fn l1(x: &[f64]) -> f64 {
    x.iter().sum()
}

fn apply(a: &ConeMatrix, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    a.apply_into(x, &mut out);
    out
}

proptest! {
    #[test]
    fn norm_sandwich((_, a) in s_delta(3), x in cone_vec(3)) {
        let n = a.norms();
        let ax = l1(&apply(&a, &x));
        prop_assert!(le_rel(n.col_min * l1(&x), ax));
        prop_assert!(le_rel(ax, n.col_max * l1(&x)));
    }

    #[test]
    fn delta_lower_bound((_, a) in s_delta(4), x in cone_vec(4)) {
        let delta = a.s_delta_margin();
        prop_assert!(le_rel(delta * a.col_max() * l1(&x), l1(&apply(&a, &x))));
    }

    #[test]
    fn semigroup_closure((_, a) in s_delta(3), (_, b) in s_delta(3)) {
        let ab = a.compose(&b).unwrap();
        let floor = a.s_delta_margin().min(b.s_delta_margin());
        prop_assert!(ab.s_delta_margin() >= floor - 1e-12);
        prop_assert!(le_rel(floor * a.col_max() * b.col_max(), ab.col_max()));
    }

    #[test]
    fn cone_margin_bound((_, a) in s_delta(5)) {
        prop_assert!(a.cone_margin() >= a.s_delta_margin() / 5.0 - 1e-12);
    }

    #[test]
    fn metric_axioms(x in direction(3), y in direction(3), z in direction(3)) {
        let dxy = hennion_distance(&x, &y).unwrap();
        prop_assert_eq!(dxy, hennion_distance(&y, &x).unwrap());
        prop_assert!((0.0..=1.0).contains(&dxy));
        prop_assert!(hennion_distance(&x, &z).unwrap() <= dxy + hennion_distance(&y, &z).unwrap() + 1e-12);
        let gap: f64 = x.coords().iter().zip(y.coords()).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(gap <= 2.0 * dxy + 1e-12);
    }

    #[test]
    fn per_step_contraction((_, a) in s_delta(3), x in direction(3), y in direction(3)) {
        let coeff = contraction_coefficient(&a);
        let rho = MetricConstants::new(a.s_delta_margin().min(1.0)).unwrap().rho_delta;
        prop_assert!(coeff <= rho + 1e-12);
        let (ax, _) = projective_action(&a, &x).unwrap();
        let (ay, _) = projective_action(&a, &y).unwrap();
        let d = hennion_distance(&ax, &ay).unwrap();
        prop_assert!(d <= coeff * hennion_distance(&x, &y).unwrap() + 1e-12);
        prop_assert!(d <= coeff + 1e-12);
    }

    #[test]
    fn cocycle_additivity((_, a) in s_delta(3), (_, b) in s_delta(3), x in direction(3)) {
        let ab = a.compose(&b).unwrap();
        let (bx, rho_b) = projective_action(&b, &x).unwrap();
        let (_, rho_a) = projective_action(&a, &bx).unwrap();
        let (_, rho_ab) = projective_action(&ab, &x).unwrap();
        prop_assert!((rho_ab - rho_a - rho_b).abs() <= 1e-10);
    }

    #[test]
    fn raw_distance_is_scale_free(x in cone_vec(3), y in cone_vec(3), s in 0.01f64..100.0) {
        let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
        let d = cone_distance(&x, &y).unwrap();
        prop_assert!((cone_distance(&scaled, &y).unwrap() - d).abs() <= 1e-12);
    }

    #[test]
    fn log_domain_matches_direct_iteration(
        steps in prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 4), prop::collection::vec(-2.0f64..2.0, 2)), 1..=30),
        x0 in prop::collection::vec(0.1f64..4.0, 2),
    ) {
        let mut state = TrajectoryState::new(&ConePoint::new(x0.clone()).unwrap());
        let mut direct = x0;
        for (a, b) in &steps {
            let a = ConeMatrix::new(2, a.iter().map(|e| 2f64.powf(*e)).collect()).unwrap();
            let b = ConePoint::new(b.iter().map(|e| 2f64.powf(*e)).collect()).unwrap();
            state.step(&a, &b);
            direct = apply(&a, &direct).iter().zip(b.coords()).map(|(u, v)| u + v).collect();
        }
        for (g, e) in state.to_point().iter().zip(&direct) {
            prop_assert!((g - e).abs() <= 1e-9 * e);
        }
    }
}

fn mixture() -> EnsembleSpec {
    EnsembleSpec::from_json(
        r#"{"dim": 2, "delta": 1, "atoms": [
            {"weight": 0.5, "A": [[1,1],[1,1]], "B": [1,1]},
            {"weight": 0.5, "A": [[0.25,0.25],[0.25,0.25]], "B": [1,1]}]}"#,
    )
    .unwrap()
}

fn generator() -> EnsembleSpec {
    EnsembleSpec::from_json(
        r#"{"dim": 3, "delta": 0.5, "scale": 0.2,
            "generator": {"entry_log10_range": [-0.5, 0.5], "b_log10_range": [-1, 1]}}"#,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vector_time_never_exceeds_norm_time(seed in any::<u64>(), w in 0.0f64..=1.0, a in 1.5f64..40.0) {
        let x = ConePoint::new(vec![w, 1.0 - w]).unwrap();
        let (v, n) = paired_stopping_times(&mixture(), &x, a, 100_000, &mut Runner::new(seed).stream(0)).unwrap();
        match (v.time(), n.time()) {
            (Some(tv), Some(tn)) => prop_assert!(tv <= tn),
            (None, Some(_)) => prop_assert!(false, "vector time censored before norm time"),
            _ => {}
        }
    }

    #[test]
    fn ladder_blocks_respect_the_norm_bound(seed in any::<u64>(), a in 1.5f64..10.0) {
        let x0 = ConePoint::new(vec![1.0, 0.5, 0.0]).unwrap();
        let l = ladder_decomposition(&generator(), &x0, a, 5, 1_000_000, &mut Runner::new(seed).stream(0)).unwrap();
        prop_assert!(l.norm_bound_holds(LADDER_NORM_TOL));
        prop_assert!(l.reconstruction_error <= 1e-9);
        for b in &l.blocks {
            prop_assert!(b.log_norm <= -a.ln() + LADDER_NORM_TOL);
        }
    }

    #[test]
    fn histogram_normalization_and_coarsening(counts in prop::collection::vec(0u64..5_000, 16), bump in 1u64..100) {
        let config = HistogramConfig { first_bin: -8, bins: 16, ..HistogramConfig::default() };
        let mut counts = counts;
        counts[8] += bump;
        let h = OccupationHistogram::from_radial_counts(config, 2, &counts).unwrap();
        prop_assert_eq!(h.ref_window_mass(), 1.0);
        let fine: f64 = h.radial_masses().unwrap().iter().sum();
        let coarse: f64 = h.coarsen().unwrap().radial_masses().unwrap().iter().sum();
        prop_assert!((fine - coarse).abs() <= 1e-12 * fine);
    }

    #[test]
    fn histogram_merge_commutes(a in prop::collection::vec(0u64..1_000, 8), b in prop::collection::vec(0u64..1_000, 8)) {
        let config = HistogramConfig { first_bin: -4, bins: 8, ..HistogramConfig::default() };
        let ha = OccupationHistogram::from_radial_counts(config.clone(), 2, &a).unwrap();
        let hb = OccupationHistogram::from_radial_counts(config, 2, &b).unwrap();
        let (mut ab, mut ba) = (ha.clone(), hb.clone());
        ab.merge(&hb).unwrap();
        ba.merge(&ha).unwrap();
        prop_assert_eq!(ab.radial_counts(), ba.radial_counts());
        prop_assert_eq!(ab.ref_count(), ba.ref_count());
    }
}
