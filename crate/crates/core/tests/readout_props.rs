mod common;

use common::{regression_instance, ridge_oracle};
use faer::Mat;
use nwn_core::readout::{ridge_fit, RidgeConfig};
use proptest::prelude::*;

fn max_rel_gap(w: &Mat<f64>, oracle: &[Vec<f64>]) -> f64 {
    let scale = oracle.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut gap = 0.0f64;
    for (i, row) in oracle.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            gap = gap.max((w[(i, j)] - v).abs());
        }
    }
    gap / scale
}

fn frobenius(w: &Mat<f64>) -> f64 {
    w.col_iter().flat_map(|c| c.iter().copied().collect::<Vec<_>>()).map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn matches_normal_equations(seed in any::<u64>(), n_out in 1usize..=50, n_y in 1usize..4, extra in 0usize..200, washout in 0usize..40, log_lambda in -8.0..1.0f64) {
        let rows = washout + n_out + 10 + extra;
        let (r, y) = regression_instance(seed, rows, n_out, n_y);
        let lambda = 10f64.powf(log_lambda);
        let cfg = RidgeConfig { tikhonov: lambda, washout_steps: washout, standardize: false };
        let fit = ridge_fit(&r, &y, &cfg).unwrap();
        prop_assert_eq!(fit.training_rows, rows - washout);
        let gap = max_rel_gap(&fit.w_out, &ridge_oracle(&r, &y, lambda, washout));
        prop_assert!(gap < 1e-8, "relative gap {gap:e}");
    }

    #[test]
    fn shrinkage_is_monotone(seed in any::<u64>(), n_out in 1usize..20) {
        let (r, y) = regression_instance(seed, 3 * n_out + 20, n_out, 3);
        let mut last = f64::INFINITY;
        for log_lambda in [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0] {
            let cfg = RidgeConfig { tikhonov: 10f64.powf(log_lambda), washout_steps: 0, standardize: false };
            let norm = frobenius(&ridge_fit(&r, &y, &cfg).unwrap().w_out);
            prop_assert!(norm <= last * (1.0 + 1e-12));
            last = norm;
        }
    }

    #[test]
    fn washout_rows_do_not_touch_the_fit(seed in any::<u64>(), washout in 1usize..30, row_frac in 0.0..1.0f64, col in 0usize..5, bump in -1e6..1e6f64) {
        let (r, y) = regression_instance(seed, washout + 40, 5, 2);
        let cfg = RidgeConfig { tikhonov: 1e-6, washout_steps: washout, standardize: false };
        let before = ridge_fit(&r, &y, &cfg).unwrap();
        let row = ((washout as f64 * row_frac) as usize).min(washout - 1);
        let (mut r2, mut y2) = (r.clone(), y.clone());
        r2[(row, col)] += bump;
        y2[(row, col % 2)] = f64::NAN;
        let after = ridge_fit(&r2, &y2, &cfg).unwrap();
        prop_assert_eq!(before.w_out, after.w_out);
    }
}

#[test]
fn zero_weights_give_the_skip_connection() {
    let (r, _) = regression_instance(3, 60, 4, 3);
    let zero = Mat::<f64>::zeros(60, 3);
    let fit = ridge_fit(&r, &zero, &RidgeConfig { washout_steps: 10, ..RidgeConfig::default() }).unwrap();
    let u = [0.3, -0.1, 2.0];
    assert_eq!(fit.predict(&[1.0, 2.0, 3.0, 4.0], &u).unwrap(), u.to_vec());
}
