use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use tvvar::dataset::{build_lagged_design, standardize, TimeSeriesDataset};
use tvvar::inference::{block_ranges, quantile_type7, resample_blocks};
use tvvar::kernel::{equispaced_points, kernel_weights};
use tvvar::penalized_regression::{
    kkt_violation, lambda_max, soft_threshold, weighted_lasso, weighted_least_squares, RegressionProblem,
};
use tvvar::spline_estimator::select_k;

fn problem() -> impl Strategy<Value = RegressionProblem> {
    (1usize..4, 6usize..20).prop_flat_map(|(q, m)| {
        (
            prop::collection::vec(-3.0..3.0f64, m * q),
            prop::collection::vec(-3.0..3.0f64, m),
            prop::collection::vec(0.05..1.0f64, m),
        )
            .prop_map(move |(x, y, w)| {
                RegressionProblem::new(DMatrix::from_vec(m, q, x), DVector::from_vec(y), DVector::from_vec(w)).unwrap()
            })
    })
}

fn series(n: usize, seed: u64) -> DMatrix<f64> {
    DMatrix::from_fn(n, 3, |i, j| ((i * 7 + j * 13) as f64 + seed as f64).sin() + 0.01 * i as f64)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn kernel_weights_bounded_and_peaked(t in 0.0..1.0f64, b in 0.01..2.0f64, n in 2usize..60) {
        let times = equispaced_points(n);
        let w = kernel_weights(t, &times, b).unwrap();
        prop_assert!(w.weights.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let nearest = (0..n).min_by(|&a, &c| (times[a] - t).abs().total_cmp(&(times[c] - t).abs())).unwrap();
        let top = w.weights.iter().cloned().fold(0.0, f64::max);
        prop_assert_eq!(w.weights[nearest], top);
        prop_assert!((w.n_util - w.weights.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn soft_threshold_shrinks(z in -10.0..10.0f64, t in 0.0..5.0f64) {
        let s = soft_threshold(z, t);
        prop_assert!(s.abs() <= z.abs());
        prop_assert!(s == 0.0 || s.signum() == z.signum());
        prop_assert!((z - s).abs() <= t + 1e-12);
    }

    #[test]
    fn lasso_satisfies_kkt(p in problem(), frac in 0.0..1.5f64) {
        let lambda = frac * lambda_max(&p).unwrap();
        let sol = weighted_lasso(&p, lambda).unwrap();
        prop_assert!(kkt_violation(&p, &sol) < 1e-5);
        prop_assert!(sol.objective <= p.objective(0.0, &vec![0.0; p.q()], lambda) + 1e-12);
        if frac >= 1.0 {
            prop_assert!(sol.slopes.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn lasso_at_zero_penalty_is_least_squares(p in problem()) {
        let lasso = weighted_lasso(&p, 0.0).unwrap();
        let wls = weighted_least_squares(&p).unwrap();
        prop_assert!(lasso.objective <= wls.objective * (1.0 + 1e-6) + 1e-9);
    }

    #[test]
    fn blocks_partition_occasions(n in 2usize..500, blocks in 2usize..40) {
        prop_assume!(blocks <= n);
        let r = block_ranges(n, blocks).unwrap();
        prop_assert_eq!(r.len(), blocks);
        prop_assert_eq!(r[0].start, 0);
        prop_assert_eq!(r[blocks - 1].end, n);
        for w in r.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(w[0].len() >= w[1].len());
            prop_assert!(w[0].len() - w[1].len() <= 1);
        }
    }

    #[test]
    fn resampling_never_pairs_across_seams(n in 20usize..120, blocks in 2usize..8, draws in prop::collection::vec(0usize..8, 8)) {
        let draws: Vec<usize> = draws[..blocks].iter().map(|d| d % blocks).collect();
        let data = TimeSeriesDataset::new(series(n, 1), vec!["a".into(), "b".into(), "c".into()], None, None, None).unwrap();
        let boot = resample_blocks(&data, blocks, &draws).unwrap();
        let ranges = block_ranges(n, blocks).unwrap();
        prop_assert_eq!(boot.n(), draws.iter().map(|&d| ranges[d].len()).sum::<usize>());
        let src = data.values();
        let row_of = |t: usize| (0..n).find(|&r| src.row(r) == boot.values().row(t)).unwrap();
        for t in 1..boot.n() {
            if boot.consecutive(t) {
                prop_assert_eq!(row_of(t), row_of(t - 1) + 1);
            }
        }
    }

    #[test]
    fn type7_quantiles_are_monotone(mut v in prop::collection::vec(-100.0..100.0f64, 1..50), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        v.sort_by(f64::total_cmp);
        let (lo, hi) = (a.min(b), a.max(b));
        let (ql, qh) = (quantile_type7(&v, lo), quantile_type7(&v, hi));
        prop_assert!(ql <= qh);
        prop_assert!(v[0] <= ql && qh <= v[v.len() - 1]);
    }

    #[test]
    fn lagged_rows_respect_day_breaks(days in 3u32..8, beeps in 3u32..8) {
        let n = (days * beeps) as usize;
        let beep: Vec<u32> = (0..n as u32).map(|t| t % beeps + 1).collect();
        let day: Vec<u32> = (0..n as u32).map(|t| t / beeps + 1).collect();
        let data = TimeSeriesDataset::new(series(n, 2), vec!["a".into(), "b".into(), "c".into()], None, Some(beep), Some(day)).unwrap();
        let d = build_lagged_design(&data, &[1]).unwrap();
        prop_assert_eq!(d.included_rows(), n - days as usize);
        prop_assert!(d.response_rows.iter().all(|&r| data.consecutive(r)));
    }

    #[test]
    fn standardized_columns_have_unit_scale(n in 10usize..200, seed in 0u64..100) {
        let data = TimeSeriesDataset::new(series(n, seed), vec!["a".into(), "b".into(), "c".into()], None, None, None).unwrap();
        let d = standardize(&build_lagged_design(&data, &[1]).unwrap()).unwrap();
        for col in d.predictors.column_iter().chain(d.responses.column_iter()) {
            let m = col.mean();
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn basis_dimension_is_identified(n in 1usize..3000, p in 1usize..30, k_max in 3usize..20) {
        if let Ok(k) = select_k(n, p, k_max) {
            prop_assert!((3..=k_max).contains(&k));
            prop_assert!(k * (p + 1) < n);
        }
    }
}
