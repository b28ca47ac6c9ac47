//! Metrics and the Monte Carlo experiment driver.
//!
//! Estimates come back with an arbitrary column permutation, so metrics
//! first match estimated paths to the truth by a minimum-cost assignment on
//! the angles. Sweeps derive one seed per trial from the base seed by a
//! counter, record per-trial results (failures included, never aborting),
//! and serialize deterministic CSV tables; wall-clock times go to a
//! separate table so the metric tables are byte-reproducible.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{add_noise, assemble_noiseless, AcquisitionContext};
use crate::als::{als_estimate, AlsConfig};
use crate::channel::{channel_grid, sample_paths, EstimatedPaths, PathSet, SystemConfig};
use crate::crb::{fim, CrbFamilies, CrbMode};
use crate::error::{Error, Result};
use crate::esprit::{estimate as esprit_estimate, EstimateOptions};
use crate::tensor::CMat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    Esprit,
    Als,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Esprit => "esprit",
            EstimatorKind::Als => "als",
        }
    }
}

/// Squared-error sums per parameter family (over matched paths).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterMse {
    pub aoa: f64,
    pub aod: f64,
    pub delay: f64,
    pub gain: f64,
    pub doppler: f64,
}

/// Outcome of one estimator run on one trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub estimator: EstimatorKind,
    pub seed: u64,
    pub success: bool,
    pub error: Option<String>,
    pub mse: Option<ParameterMse>,
    pub nmse: Option<f64>,
    pub wall_time_s: f64,
}

/// Minimum-total-cost assignment of estimated paths to true paths. The cost
/// of pairing truth i with estimate j is the squared angle differences
/// normalized by the domain width: ((θ_i−θ̂_j)/π)² + ((φ_i−φ̂_j)/π)².
/// Returns `perm` with `perm[i]` the estimate index matched to truth i.
pub fn match_paths(truth: &PathSet, est: &EstimatedPaths) -> Result<Vec<usize>> {
    if truth.len() != est.len() {
        return Err(Error::DimensionMismatch(format!(
            "path count mismatch: {} true vs {} estimated",
            truth.len(),
            est.len()
        )));
    }
    let cost: Vec<Vec<f64>> = truth
        .paths()
        .iter()
        .map(|t| {
            est.paths
                .iter()
                .map(|e| {
                    let da = (t.aoa_rad - e.aoa_rad) / std::f64::consts::PI;
                    let dd = (t.aod_rad - e.aod_rad) / std::f64::consts::PI;
                    da * da + dd * dd
                })
                .collect()
        })
        .collect();
    Ok(hungarian_min_cost(&cost))
}

/// O(n³) assignment by shortest augmenting paths with potentials. Ties break
/// toward the lowest column index, so the result is deterministic.
fn hungarian_min_cost(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row assigned to column j (1-based)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    perm
}

/// Squared 2-norm differences per parameter family after matching; gains
/// compare as complex numbers.
pub fn parameter_mse(truth: &PathSet, est: &EstimatedPaths, perm: &[usize]) -> ParameterMse {
    let mut out = ParameterMse {
        aoa: 0.0,
        aod: 0.0,
        delay: 0.0,
        gain: 0.0,
        doppler: 0.0,
    };
    for (t, &j) in truth.paths().iter().zip(perm) {
        let e = &est.paths[j];
        out.aoa += (t.aoa_rad - e.aoa_rad).powi(2);
        out.aod += (t.aod_rad - e.aod_rad).powi(2);
        out.delay += (t.delay_s - e.delay_s).powi(2);
        out.gain += (t.gain - e.gain).norm_sqr();
        out.doppler += (t.doppler_hz - e.doppler_hz).powi(2);
    }
    out
}

/// Channel NMSE: the per-slice normalized Frobenius error averaged over all
/// (mini-slot, subcarrier) slices.
pub fn channel_nmse(truth: &[CMat], est: &[CMat]) -> Result<f64> {
    if truth.len() != est.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "slice count mismatch: {} vs {}",
            truth.len(),
            est.len()
        )));
    }
    let mut acc = 0.0;
    for (h, h_hat) in truth.iter().zip(est) {
        let denom = h.norm_squared();
        if denom == 0.0 {
            return Err(Error::ZeroNorm("true channel slice".into()));
        }
        acc += (h_hat - h).norm_squared() / denom;
    }
    Ok(acc / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    SnrDb,
    KPilot,
    MSlots,
    LPaths,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::KPilot => "k_pilot",
            SweepAxis::MSlots => "m_slots",
            SweepAxis::LPaths => "l_paths",
        }
    }
}

/// Specification of one Monte Carlo sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub trials: usize,
    pub base: SystemConfig,
    pub estimators: Vec<EstimatorKind>,
    pub l_paths: usize,
    /// Estimator model order override; defaults to the true path count.
    pub l_paths_est: Option<usize>,
    pub speed_mps: f64,
    /// Append Cramer-Rao columns (mean over the trial draws) when set.
    pub crb: Option<CrbMode>,
    pub refine_angles: bool,
    pub grid_size: usize,
    pub als_max_iters: usize,
    pub als_tol: f64,
}

impl SweepSpec {
    pub fn new(base: SystemConfig, axis: SweepAxis, values: Vec<f64>) -> Self {
        Self {
            axis,
            values,
            trials: 1,
            base,
            estimators: vec![EstimatorKind::Esprit],
            l_paths: 3,
            l_paths_est: None,
            speed_mps: 30.0,
            crb: None,
            refine_angles: false,
            grid_size: 5000,
            als_max_iters: 500,
            als_tol: 1e-8,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one value".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("sweep needs at least one trial".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("sweep needs an estimator".into()));
        }
        if matches!(
            self.axis,
            SweepAxis::KPilot | SweepAxis::MSlots | SweepAxis::LPaths
        ) {
            for &v in &self.values {
                if v.fract() != 0.0 || v < 1.0 {
                    return Err(Error::InvalidConfig(format!(
                        "axis {} needs positive integer values, got {v}",
                        self.axis.name()
                    )));
                }
            }
        }
        Ok(())
    }

    fn config_at(&self, value: f64) -> (SystemConfig, usize) {
        let mut cfg = self.base.clone();
        let mut l = self.l_paths;
        match self.axis {
            SweepAxis::SnrDb => cfg.snr_db = value,
            SweepAxis::KPilot => cfg.k_pilot = value as usize,
            SweepAxis::MSlots => cfg.m_slots = value as usize,
            SweepAxis::LPaths => l = value as usize,
        }
        (cfg, l)
    }
}

/// Aggregates for one (axis value, estimator) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub estimator: EstimatorKind,
    pub trials: usize,
    pub failures: usize,
    pub mean_mse: Option<ParameterMse>,
    pub median_mse: Option<ParameterMse>,
    pub mean_nmse: Option<f64>,
    pub median_nmse: Option<f64>,
    pub mean_wall_time_s: f64,
    pub crb: Option<CrbFamilies>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// (point index, trial index, result) for every estimator run.
    pub trial_log: Vec<(usize, usize, TrialResult)>,
    /// Axis value per point index.
    pub axis_values: Vec<f64>,
    pub l_paths: usize,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn aggregate_mse(all: &[ParameterMse], f: impl Fn(&[f64]) -> f64) -> ParameterMse {
    ParameterMse {
        aoa: f(&all.iter().map(|m| m.aoa).collect::<Vec<_>>()),
        aod: f(&all.iter().map(|m| m.aod).collect::<Vec<_>>()),
        delay: f(&all.iter().map(|m| m.delay).collect::<Vec<_>>()),
        gain: f(&all.iter().map(|m| m.gain).collect::<Vec<_>>()),
        doppler: f(&all.iter().map(|m| m.doppler).collect::<Vec<_>>()),
    }
}

/// Run the sweep. Per-trial seeds are `base.seed + counter` with the counter
/// advancing once per (point, trial), so reruns of the same spec are
/// bit-identical; estimator failures are recorded and never abort the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    spec.base.validate()?;
    let mut rows = Vec::new();
    let mut trial_log = Vec::new();
    let mut counter: u64 = 0;

    for (point_idx, &value) in spec.values.iter().enumerate() {
        let (cfg, l_true) = spec.config_at(value);
        cfg.validate()?;
        let l_est = spec.l_paths_est.unwrap_or(l_true);
        let opts = EstimateOptions {
            grid_size: spec.grid_size,
            refine_angles: spec.refine_angles,
            ..EstimateOptions::default()
        };

        let mut per_estimator: Vec<Vec<TrialResult>> =
            vec![Vec::with_capacity(spec.trials); spec.estimators.len()];
        let mut crb_acc: Vec<CrbFamilies> = Vec::new();

        for trial in 0..spec.trials {
            let seed = spec.base.seed.wrapping_add(counter);
            counter += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = sample_paths(&cfg, l_true, spec.speed_mps, &mut rng)?;
            let ctx = AcquisitionContext::generate(&cfg, &mut rng);
            let clean = assemble_noiseless(&cfg, &truth, &ctx)?;
            let observed = add_noise(&clean, cfg.snr_db, &mut rng)?;
            let truth_channels = channel_grid(&cfg, truth.paths())?;

            if let Some(mode) = spec.crb {
                if observed.ctx.noise_var > 0.0 {
                    let r = fim(&cfg, &observed.ctx, truth.paths(), mode)?;
                    crb_acc.push(r.families(l_true));
                }
            }

            for (ei, &kind) in spec.estimators.iter().enumerate() {
                let started = Instant::now();
                let outcome = match kind {
                    EstimatorKind::Esprit => esprit_estimate(&observed, l_est, &opts),
                    EstimatorKind::Als => {
                        let als_cfg = AlsConfig {
                            max_iters: spec.als_max_iters,
                            tol: spec.als_tol,
                            seed,
                            ..AlsConfig::default()
                        };
                        als_estimate(&observed, l_est, &als_cfg, &opts)
                    }
                };
                let wall = started.elapsed().as_secs_f64();
                let result = match outcome {
                    Ok(out) => {
                        if out.paths.len() == truth.len() {
                            let perm = match_paths(&truth, &out.paths)?;
                            let mse = parameter_mse(&truth, &out.paths, &perm);
                            let nmse = channel_nmse(&truth_channels, &out.channels)?;
                            TrialResult {
                                estimator: kind,
                                seed,
                                success: true,
                                error: None,
                                mse: Some(mse),
                                nmse: Some(nmse),
                                wall_time_s: wall,
                            }
                        } else {
                            TrialResult {
                                estimator: kind,
                                seed,
                                success: false,
                                error: Some("model order mismatch".into()),
                                mse: None,
                                nmse: None,
                                wall_time_s: wall,
                            }
                        }
                    }
                    Err(e) => TrialResult {
                        estimator: kind,
                        seed,
                        success: false,
                        error: Some(e.to_string()),
                        mse: None,
                        nmse: None,
                        wall_time_s: wall,
                    },
                };
                per_estimator[ei].push(result.clone());
                trial_log.push((point_idx, trial, result));
            }
        }

        let crb_mean = if crb_acc.is_empty() {
            None
        } else {
            let n = crb_acc.len() as f64;
            Some(CrbFamilies {
                aoa: crb_acc.iter().map(|c| c.aoa).sum::<f64>() / n,
                aod: crb_acc.iter().map(|c| c.aod).sum::<f64>() / n,
                delay: crb_acc.iter().map(|c| c.delay).sum::<f64>() / n,
                gain: crb_acc.iter().map(|c| c.gain).sum::<f64>() / n,
                doppler: crb_acc.iter().map(|c| c.doppler).sum::<f64>() / n,
            })
        };

        for (ei, &kind) in spec.estimators.iter().enumerate() {
            let results = &per_estimator[ei];
            let ok: Vec<&TrialResult> = results.iter().filter(|r| r.success).collect();
            let failures = results.len() - ok.len();
            let (mean_mse, median_mse, mean_nmse, median_nmse) = if ok.is_empty() {
                (None, None, None, None)
            } else {
                let mses: Vec<ParameterMse> = ok.iter().map(|r| r.mse.unwrap()).collect();
                let nmses: Vec<f64> = ok.iter().map(|r| r.nmse.unwrap()).collect();
                (
                    Some(aggregate_mse(&mses, mean)),
                    Some(aggregate_mse(&mses, median)),
                    Some(mean(&nmses)),
                    Some(median(&nmses)),
                )
            };
            rows.push(SweepRow {
                axis_value: value,
                estimator: kind,
                trials: results.len(),
                failures,
                mean_mse,
                median_mse,
                mean_nmse,
                median_nmse,
                mean_wall_time_s: mean(
                    &results.iter().map(|r| r.wall_time_s).collect::<Vec<_>>(),
                ),
                crb: crb_mean,
            });
        }
    }
    Ok(SweepResult {
        rows,
        trial_log,
        axis_values: spec.values.clone(),
        l_paths: spec.l_paths,
    })
}

/// Full-precision decimal so re-parsing the CSV is lossless.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

impl SweepResult {
    /// Deterministic aggregate table (no wall-clock columns).
    pub fn results_csv(&self, axis: SweepAxis) -> String {
        let mut out = String::new();
        out.push_str(axis.name());
        out.push_str(",estimator,trials,failures");
        for fam in ["aoa", "aod", "delay", "gain", "doppler"] {
            out.push_str(&format!(
                ",mean_mse_{fam}_sum,median_mse_{fam}_sum,mean_mse_{fam}_perpath"
            ));
        }
        out.push_str(",mean_nmse,median_nmse");
        for fam in ["aoa", "aod", "delay", "gain", "doppler"] {
            out.push_str(&format!(",crb_{fam}_sum"));
        }
        out.push('\n');
        let l = self.l_paths as f64;
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                fmt_f64(r.axis_value),
                r.estimator.name(),
                r.trials,
                r.failures
            ));
            let fams = |m: &ParameterMse| [m.aoa, m.aod, m.delay, m.gain, m.doppler];
            for i in 0..5 {
                let mean_v = r.mean_mse.as_ref().map(|m| fams(m)[i]);
                let median_v = r.median_mse.as_ref().map(|m| fams(m)[i]);
                out.push_str(&format!(
                    ",{},{},{}",
                    fmt_opt(mean_v),
                    fmt_opt(median_v),
                    fmt_opt(mean_v.map(|v| v / l))
                ));
            }
            out.push_str(&format!(
                ",{},{}",
                fmt_opt(r.mean_nmse),
                fmt_opt(r.median_nmse)
            ));
            let crbs = r
                .crb
                .map(|c| [c.aoa, c.aod, c.delay, c.gain, c.doppler])
                .unwrap_or([f64::NAN; 5]);
            for v in crbs {
                if r.crb.is_some() {
                    out.push_str(&format!(",{}", fmt_f64(v)));
                } else {
                    out.push(',');
                }
            }
            out.push('\n');
        }
        out
    }

    /// Deterministic per-trial log (no wall-clock columns).
    pub fn trials_csv(&self, axis: SweepAxis) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{},trial,estimator,seed,success,error,mse_aoa,mse_aod,mse_delay,mse_gain,mse_doppler,nmse\n",
            axis.name()
        ));
        for (point, trial, r) in &self.trial_log {
            let m = r.mse;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                fmt_f64(self.axis_values[*point]),
                trial,
                r.estimator.name(),
                r.seed,
                r.success,
                r.error.clone().unwrap_or_default().replace(',', ";"),
                fmt_opt(m.map(|m| m.aoa)),
                fmt_opt(m.map(|m| m.aod)),
                fmt_opt(m.map(|m| m.delay)),
                fmt_opt(m.map(|m| m.gain)),
                fmt_opt(m.map(|m| m.doppler)),
                fmt_opt(r.nmse),
            ));
        }
        out
    }

    /// Wall-clock table; not covered by the byte-reproducibility guarantee.
    pub fn timing_csv(&self) -> String {
        let mut out = String::from("point,trial,estimator,wall_time_s\n");
        for (point, trial, r) in &self.trial_log {
            out.push_str(&format!(
                "{},{},{},{}\n",
                point,
                trial,
                r.estimator.name(),
                fmt_f64(r.wall_time_s)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Path;
    use crate::tensor::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn paths_from(angles: &[(f64, f64)]) -> PathSet {
        PathSet::new(
            angles
                .iter()
                .enumerate()
                .map(|(i, &(aoa, aod))| Path {
                    aoa_rad: aoa,
                    aod_rad: aod,
                    delay_s: 50e-9 * (i + 1) as f64,
                    doppler_hz: 400.0 * (i + 1) as f64,
                    gain: C64::new(1.0, i as f64),
                })
                .collect(),
        )
        .unwrap()
    }

    fn estimated_from(truth: &PathSet, order: &[usize]) -> EstimatedPaths {
        EstimatedPaths {
            paths: order.iter().map(|&i| truth.paths()[i]).collect(),
        }
    }

    #[test]
    fn identity_match() {
        let truth = paths_from(&[(0.7, 1.1), (1.4, 2.2), (2.1, 0.5)]);
        let est = estimated_from(&truth, &[0, 1, 2]);
        assert_eq!(match_paths(&truth, &est).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn swap_match_recovers_inverse() {
        let truth = paths_from(&[(0.7, 1.1), (1.4, 2.2), (2.1, 0.5)]);
        let est = estimated_from(&truth, &[2, 0, 1]);
        // truth i sits at est position perm[i]
        assert_eq!(match_paths(&truth, &est).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn count_mismatch_rejected() {
        let truth = paths_from(&[(0.7, 1.1), (1.4, 2.2)]);
        let est = EstimatedPaths {
            paths: truth.paths()[..1].to_vec(),
        };
        assert!(match_paths(&truth, &est).is_err());
    }

    #[test]
    fn hungarian_agrees_with_brute_force() {
        // 1000 random instances, L in 2..=4, tiny perturbations + shuffles
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for case in 0..1000 {
            let l = 2 + case % 3;
            let cost: Vec<Vec<f64>> = (0..l)
                .map(|_| (0..l).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let fast = hungarian_min_cost(&cost);
            let fast_cost: f64 = fast.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            let brute = brute_force_min(&cost);
            assert!(
                (fast_cost - brute).abs() < 1e-12,
                "case {case}: {fast_cost} vs {brute}"
            );
        }
    }

    fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
        let n = cost.len();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut idx, 0, &mut |p| {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            if c < best {
                best = c;
            }
        });
        best
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn shuffled_noisy_estimates_recover_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let l = 2 + (rng.gen::<u32>() % 3) as usize;
            let angles: Vec<(f64, f64)> = (0..l)
                .map(|i| (0.4 + 0.6 * i as f64, 2.6 - 0.5 * i as f64))
                .collect();
            let truth = paths_from(&angles);
            let mut order: Vec<usize> = (0..l).collect();
            for i in (1..l).rev() {
                let j = (rng.gen::<u32>() as usize) % (i + 1);
                order.swap(i, j);
            }
            let mut est = estimated_from(&truth, &order);
            for p in est.paths.iter_mut() {
                p.aoa_rad += 1e-6 * (rng.gen::<f64>() - 0.5);
                p.aod_rad += 1e-6 * (rng.gen::<f64>() - 0.5);
            }
            let perm = match_paths(&truth, &est).unwrap();
            for (i, &j) in perm.iter().enumerate() {
                assert_eq!(order[j], i);
            }
        }
    }

    #[test]
    fn mse_zero_for_exact_match() {
        let truth = paths_from(&[(0.7, 1.1), (1.4, 2.2)]);
        let est = estimated_from(&truth, &[0, 1]);
        let m = parameter_mse(&truth, &est, &[0, 1]);
        assert_eq!(
            (m.aoa, m.aod, m.delay, m.gain, m.doppler),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn mse_single_offset() {
        let truth = paths_from(&[(0.7, 1.1)]);
        let mut est = estimated_from(&truth, &[0]);
        est.paths[0].aoa_rad += 0.01;
        let m = parameter_mse(&truth, &est, &[0]);
        assert!((m.aoa - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn mse_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let truth = paths_from(&[(0.7, 1.1), (1.3, 2.0), (2.2, 0.4)]);
        let mut est = estimated_from(&truth, &[0, 1, 2]);
        for p in est.paths.iter_mut() {
            p.aoa_rad += rng.gen::<f64>() * 0.01;
            p.aod_rad += rng.gen::<f64>() * 0.01;
            p.delay_s += rng.gen::<f64>() * 1e-9;
            p.doppler_hz += rng.gen::<f64>();
            p.gain += C64::new(rng.gen::<f64>() * 0.01, -rng.gen::<f64>() * 0.01);
        }
        let m = parameter_mse(&truth, &est, &[0, 1, 2]);
        let mut oracle = [0.0; 5];
        for (t, e) in truth.paths().iter().zip(&est.paths) {
            oracle[0] += (t.aoa_rad - e.aoa_rad).powi(2);
            oracle[1] += (t.aod_rad - e.aod_rad).powi(2);
            oracle[2] += (t.delay_s - e.delay_s).powi(2);
            oracle[3] += (t.gain - e.gain).norm_sqr();
            oracle[4] += (t.doppler_hz - e.doppler_hz).powi(2);
        }
        for (got, want) in [m.aoa, m.aod, m.delay, m.gain, m.doppler].iter().zip(&oracle) {
            assert!((got - want).abs() <= 1e-14 * want.max(1e-300));
        }
    }

    #[test]
    fn nmse_trivial_values() {
        let h = CMat::from_fn(3, 2, |i, j| C64::new(1.0 + i as f64, j as f64));
        let truth = vec![h.clone(), h.clone()];
        assert_eq!(channel_nmse(&truth, &truth).unwrap(), 0.0);
        let zeros = vec![CMat::zeros(3, 2), CMat::zeros(3, 2)];
        assert!((channel_nmse(&truth, &zeros).unwrap() - 1.0).abs() < 1e-15);
        let eps = 1e-3;
        let scaled: Vec<CMat> = truth.iter().map(|m| m * C64::new(1.0 + eps, 0.0)).collect();
        assert!((channel_nmse(&truth, &scaled).unwrap() - eps * eps).abs() < 1e-12);
    }

    #[test]
    fn nmse_unitary_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = CMat::from_fn(4, 4, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let e = CMat::from_fn(4, 4, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let q = crate::linalg::svd(&CMat::from_fn(4, 4, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        }))
        .unwrap()
        .u;
        let base = channel_nmse(std::slice::from_ref(&h), std::slice::from_ref(&e)).unwrap();
        let rotated = channel_nmse(&[&q * h], &[&q * e]).unwrap();
        assert!((base - rotated).abs() < 1e-12 * base);
    }

    #[test]
    fn zero_truth_slice_rejected() {
        let truth = vec![CMat::zeros(2, 2)];
        let est = vec![CMat::zeros(2, 2)];
        assert!(matches!(
            channel_nmse(&truth, &est),
            Err(Error::ZeroNorm(_))
        ));
    }
}
