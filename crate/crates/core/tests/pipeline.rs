//! Cross-module round trips: noiseless recovery through the full subspace
//! pipeline, the ALS baseline against it, and sweep-level behavior.

use mmce_core::acquisition::{add_noise, assemble_noiseless, AcquisitionContext};
use mmce_core::als::{als_estimate, AlsConfig};
use mmce_core::channel::{channel_grid, sample_paths, PathSet, SystemConfig};
use mmce_core::error::Error;
use mmce_core::esprit::{estimate, EstimateOptions};
use mmce_core::eval::{
    channel_nmse, match_paths, parameter_mse, run_sweep, EstimatorKind, SweepAxis, SweepSpec,
};
use mmce_core::tensor::C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn noiseless(seed: u64, l: usize) -> (SystemConfig, PathSet, mmce_core::acquisition::ReceivedTensor)
{
    let cfg = SystemConfig::desk_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let paths = sample_paths(&cfg, l, 30.0, &mut rng).unwrap();
    let ctx = AcquisitionContext::generate(&cfg, &mut rng);
    let t = assemble_noiseless(&cfg, &paths, &ctx).unwrap();
    (cfg, paths, t)
}

#[test]
fn noiseless_single_path_full_recovery() {
    let (cfg, paths, t) = noiseless(42, 1);
    let opts = EstimateOptions {
        refine_angles: true,
        ..EstimateOptions::default()
    };
    let out = estimate(&t, 1, &opts).unwrap();
    let truth = &paths.paths()[0];
    let got = &out.paths.paths[0];
    assert!((got.aoa_rad - truth.aoa_rad).abs() / truth.aoa_rad < 1e-6);
    assert!((got.aod_rad - truth.aod_rad).abs() / truth.aod_rad < 1e-6);
    assert!((got.delay_s - truth.delay_s).abs() / truth.delay_s < 1e-6);
    assert!((got.doppler_hz - truth.doppler_hz).abs() / truth.doppler_hz.abs() < 1e-6);
    assert!((got.gain - truth.gain).norm() / truth.gain.norm() < 1e-6);
    let truth_channels = channel_grid(&cfg, paths.paths()).unwrap();
    let nmse = channel_nmse(&truth_channels, &out.channels).unwrap();
    assert!(nmse <= 1e-10, "nmse {nmse:.3e}");
}

#[test]
fn noiseless_three_paths_gains_recovered_exactly() {
    // the scaling chain must close: gains are exact, not just collinear
    let (cfg, paths, t) = noiseless(7, 3);
    let opts = EstimateOptions {
        refine_angles: true,
        ..EstimateOptions::default()
    };
    let out = estimate(&t, 3, &opts).unwrap();
    let perm = match_paths(&paths, &out.paths).unwrap();
    for (l, p) in paths.paths().iter().enumerate() {
        let e = &out.paths.paths[perm[l]];
        // gain accuracy is limited by the refined-angle error entering the
        // scaling templates, not by the chain itself (exact templates give
        // 1e-10, see the unit test)
        assert!(
            (e.gain - p.gain).norm() / p.gain.norm() < 1e-6,
            "path {l}: gain {:?} vs {:?}",
            e.gain,
            p.gain
        );
    }
    let truth_channels = channel_grid(&cfg, paths.paths()).unwrap();
    let nmse = channel_nmse(&truth_channels, &out.channels).unwrap();
    assert!(nmse <= 1e-8, "nmse {nmse:.3e}");
}

#[test]
fn permutation_coherence_across_factors() {
    // one column matching aligns all four recovered factor matrices
    let (cfg, paths, t) = noiseless(11, 3);
    let out = estimate(&t, 3, &EstimateOptions::default()).unwrap();
    let (a, b, c, d) =
        mmce_core::acquisition::effective_factors(&cfg, &paths, &t.ctx).unwrap();
    let perm = match_paths(&paths, &out.paths).unwrap();
    let collinearity = |x: &mmce_core::tensor::CVec, y: &mmce_core::tensor::CVec| {
        let inner: C64 = x.iter().zip(y.iter()).map(|(p, q)| p.conj() * q).sum();
        inner.norm() / (x.norm() * y.norm())
    };
    for (l, &j) in perm.iter().enumerate() {
        for (truth_m, est_m) in [
            (&a, &out.factors.a_hat),
            (&b, &out.factors.b_hat),
            (&c, &out.factors.c_hat),
            (&d, &out.factors.d_hat),
        ] {
            let t_col: mmce_core::tensor::CVec = truth_m.column(l).into();
            let e_col: mmce_core::tensor::CVec = est_m.column(j).into();
            let rho = collinearity(&t_col, &e_col);
            assert!(rho >= 1.0 - 1e-8, "factor column {l} collinearity {rho}");
        }
    }
}

#[test]
fn noisy_estimate_stays_finite() {
    let (cfg, paths, t) = noiseless(3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let noisy = add_noise(&t, 10.0, &mut rng).unwrap();
    let out = estimate(&noisy, 3, &EstimateOptions::default()).unwrap();
    let truth_channels = channel_grid(&cfg, paths.paths()).unwrap();
    let nmse = channel_nmse(&truth_channels, &out.channels).unwrap();
    assert!(nmse.is_finite());
    assert!(nmse < 1.0, "nmse {nmse:.3e}");
}

#[test]
fn paper_scale_noisy_estimate() {
    let cfg = SystemConfig::paper_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let paths = sample_paths(&cfg, 3, 30.0, &mut rng).unwrap();
    let ctx = AcquisitionContext::generate(&cfg, &mut rng);
    let clean = assemble_noiseless(&cfg, &paths, &ctx).unwrap();
    let noisy = add_noise(&clean, 10.0, &mut rng).unwrap();
    let out = estimate(&noisy, 3, &EstimateOptions::default()).unwrap();
    assert!(out.diagnostics.uniqueness.satisfied);
    let truth_channels = channel_grid(&cfg, paths.paths()).unwrap();
    let nmse = channel_nmse(&truth_channels, &out.channels).unwrap();
    assert!(nmse.is_finite());
    assert!(nmse < 1.0, "nmse {nmse:.3e}");
}

#[test]
fn als_and_esprit_agree_on_single_path() {
    // with refinement both converge to the same continuous correlation peak,
    // so the two reconstructions agree far more tightly than the raw grid
    let (_, _, t) = noiseless(5, 1);
    let opts = EstimateOptions {
        grid_size: 2000,
        refine_angles: true,
        ..EstimateOptions::default()
    };
    let es = estimate(&t, 1, &opts).unwrap();
    let al = als_estimate(&t, 1, &AlsConfig::default(), &opts).unwrap();
    let mutual = channel_nmse(&es.channels, &al.channels).unwrap();
    assert!(mutual <= 1e-6, "mutual nmse {mutual:.3e}");
}

#[test]
fn estimator_error_surfaces_as_typed_failure() {
    let (_, _, t) = noiseless(9, 2);
    // demanding more paths than the noiseless rank supports
    match estimate(&t, 5, &EstimateOptions::default()) {
        Err(Error::RankDeficient { .. }) => {}
        other => panic!("expected typed rank failure, got {other:?}"),
    }
}

#[test]
fn scale_invariance_of_parameter_estimates() {
    // rescaling a recovered factor column must not move angles or delays
    let (_, _, t) = noiseless(13, 2);
    let out = estimate(&t, 2, &EstimateOptions::default()).unwrap();
    let s = C64::from_polar(3.0, 1.1);
    let mut a_scaled = out.factors.a_hat.clone();
    let col: mmce_core::tensor::CVec = a_scaled.column(0).into();
    a_scaled.set_column(0, &(col * s));
    let aoas = mmce_core::esprit::estimate_angles(
        &a_scaled,
        &t.ctx.w.transpose(),
        t.cfg.antenna_spacing_ratio,
        500,
        false,
    )
    .unwrap();
    let aoas_ref = mmce_core::esprit::estimate_angles(
        &out.factors.a_hat,
        &t.ctx.w.transpose(),
        t.cfg.antenna_spacing_ratio,
        500,
        false,
    )
    .unwrap();
    assert_eq!(aoas, aoas_ref);

    let mut c_scaled = out.factors.c_hat.clone();
    let col: mmce_core::tensor::CVec = c_scaled.column(1).into();
    c_scaled.set_column(1, &(col * s));
    let tau = mmce_core::esprit::estimate_delays(&c_scaled, &t.cfg).unwrap();
    let tau_ref = mmce_core::esprit::estimate_delays(&out.factors.c_hat, &t.cfg).unwrap();
    assert!((tau[1] - tau_ref[1]).abs() <= 1e-14 * tau_ref[1].abs());
}

#[test]
fn sweep_single_noiseless_trial_is_clean() {
    let mut spec = SweepSpec::new(
        SystemConfig::desk_scale(),
        SweepAxis::SnrDb,
        vec![f64::INFINITY],
    );
    spec.trials = 1;
    spec.l_paths = 3;
    spec.estimators = vec![EstimatorKind::Esprit];
    spec.refine_angles = true;
    let result = run_sweep(&spec).unwrap();
    assert_eq!(result.rows.len(), 1);
    let row = &result.rows[0];
    assert_eq!(row.failures, 0);
    assert!(row.mean_nmse.unwrap() <= 1e-8);
}

#[test]
fn sweep_is_byte_deterministic() {
    let mut spec = SweepSpec::new(SystemConfig::desk_scale(), SweepAxis::SnrDb, vec![10.0]);
    spec.trials = 3;
    spec.l_paths = 2;
    spec.estimators = vec![EstimatorKind::Esprit, EstimatorKind::Als];
    spec.grid_size = 500;
    let a = run_sweep(&spec).unwrap();
    let b = run_sweep(&spec).unwrap();
    assert_eq!(a.results_csv(spec.axis), b.results_csv(spec.axis));
    assert_eq!(a.trials_csv(spec.axis), b.trials_csv(spec.axis));
}

#[test]
fn sweep_records_failures_and_continues() {
    let mut spec = SweepSpec::new(SystemConfig::desk_scale(), SweepAxis::SnrDb, vec![
        f64::INFINITY,
    ]);
    spec.trials = 2;
    spec.l_paths = 3;
    spec.l_paths_est = Some(6); // overmodeled: noiseless rank is 3
    spec.estimators = vec![EstimatorKind::Esprit];
    spec.grid_size = 200;
    let result = run_sweep(&spec).unwrap();
    assert_eq!(result.rows[0].failures, 2);
    assert!(result.rows[0].mean_nmse.is_none());
    // per-trial log carries the error strings
    assert!(result
        .trial_log
        .iter()
        .all(|(_, _, r)| !r.success && r.error.is_some()));
}

#[test]
fn sweep_aggregates_match_trial_log() {
    let mut spec = SweepSpec::new(SystemConfig::desk_scale(), SweepAxis::SnrDb, vec![20.0]);
    spec.trials = 5;
    spec.l_paths = 2;
    spec.estimators = vec![EstimatorKind::Esprit];
    spec.grid_size = 500;
    let result = run_sweep(&spec).unwrap();
    let row = &result.rows[0];
    let ok: Vec<f64> = result
        .trial_log
        .iter()
        .filter(|(_, _, r)| r.success)
        .map(|(_, _, r)| r.nmse.unwrap())
        .collect();
    let mean = ok.iter().sum::<f64>() / ok.len() as f64;
    assert!((row.mean_nmse.unwrap() - mean).abs() <= 1e-12 * mean.max(1e-300));
    let mse_delay: Vec<f64> = result
        .trial_log
        .iter()
        .filter(|(_, _, r)| r.success)
        .map(|(_, _, r)| r.mse.unwrap().delay)
        .collect();
    let mean_delay = mse_delay.iter().sum::<f64>() / mse_delay.len() as f64;
    assert!(
        (row.mean_mse.as_ref().unwrap().delay - mean_delay).abs()
            <= 1e-12 * mean_delay.max(1e-300)
    );
}

#[test]
fn sweep_over_subcarriers_and_slots() {
    // non-SNR axes rebuild the system config per point
    for (axis, values) in [
        (SweepAxis::KPilot, vec![8.0, 16.0]),
        (SweepAxis::MSlots, vec![6.0, 10.0]),
        (SweepAxis::LPaths, vec![1.0, 2.0]),
    ] {
        let mut spec = SweepSpec::new(SystemConfig::desk_scale(), axis, values.clone());
        spec.trials = 2;
        spec.l_paths = 2;
        spec.estimators = vec![EstimatorKind::Esprit];
        spec.grid_size = 400;
        let result = run_sweep(&spec).unwrap();
        assert_eq!(result.rows.len(), values.len());
        for row in &result.rows {
            assert_eq!(row.failures, 0, "axis {axis:?} value {}", row.axis_value);
            assert!(row.mean_nmse.unwrap() < 1.0);
        }
    }
    // fractional values on an integer axis are rejected
    let spec = SweepSpec::new(SystemConfig::desk_scale(), SweepAxis::KPilot, vec![7.5]);
    assert!(run_sweep(&spec).is_err());
}

#[test]
fn persisted_trial_log_reproduces_aggregates() {
    let mut spec = SweepSpec::new(SystemConfig::desk_scale(), SweepAxis::SnrDb, vec![15.0]);
    spec.trials = 4;
    spec.l_paths = 2;
    spec.estimators = vec![EstimatorKind::Esprit];
    spec.grid_size = 500;
    let result = run_sweep(&spec).unwrap();
    // recompute the mean NMSE from the serialized per-trial table
    let csv = result.trials_csv(spec.axis);
    let mut nmses = Vec::new();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], "1.5000000000000000e1");
        if cols[4] == "true" {
            nmses.push(cols[11].parse::<f64>().unwrap());
        }
    }
    assert_eq!(nmses.len(), 4);
    let mean = nmses.iter().sum::<f64>() / nmses.len() as f64;
    let reported = result.rows[0].mean_nmse.unwrap();
    assert!(
        (mean - reported).abs() <= 1e-12 * reported,
        "{mean} vs {reported}"
    );
}

#[test]
fn parameter_mse_zero_for_self_comparison() {
    let (_, paths, _) = noiseless(21, 3);
    let est = mmce_core::channel::EstimatedPaths {
        paths: paths.paths().to_vec(),
    };
    let perm = match_paths(&paths, &est).unwrap();
    let mse = parameter_mse(&paths, &est, &perm);
    assert_eq!(mse.aoa + mse.aod + mse.delay + mse.gain + mse.doppler, 0.0);
}
