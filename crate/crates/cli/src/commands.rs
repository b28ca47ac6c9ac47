//! Subcommand implementations. Every command resolves its configuration,
//! writes its outputs atomically into the output directory and always emits
//! a manifest describing the run.

use std::path::{Path as FsPath, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mmce_core::acquisition::{add_noise, assemble_noiseless, AcquisitionContext, ReceivedTensor};
use mmce_core::als::{als_estimate, AlsConfig, AlsInit};
use mmce_core::channel::{channel_grid, sample_paths, PathSet, SystemConfig};
use mmce_core::crb::crb_curve;
use mmce_core::esprit::{check_uniqueness, estimate, EstimateOptions, SmoothingPlan};
use mmce_core::eval::{
    channel_nmse, fmt_f64, match_paths, parameter_mse, run_sweep, EstimatorKind, SweepAxis,
    SweepSpec,
};
use mmce_core::tensor::{C64, CMat, DenseTensor};

use crate::config::RunConfig;
use crate::manifest::RunManifest;
use crate::scenario::{load_scenario, save_scenario, ScenarioHeader, SCENARIO_VERSION};
use crate::{atomic_write, CliError};

fn resolve_paths(
    cfg: &RunConfig,
    sys: &SystemConfig,
    scenario: Option<&FsPath>,
    rng: &mut ChaCha8Rng,
) -> Result<PathSet, CliError> {
    match scenario {
        Some(file) => {
            let (paths, _) = load_scenario(file).map_err(CliError::scenario)?;
            Ok(paths)
        }
        None => sample_paths(sys, cfg.paths.l_paths, cfg.paths.speed_mps, rng)
            .map_err(CliError::core),
    }
}

fn tensor_to_csv(t: &DenseTensor) -> String {
    let shape = t.shape();
    let mut out = String::from("q,n,k,m,re,im\n");
    for m in 0..shape[3] {
        for k in 0..shape[2] {
            for n in 0..shape[1] {
                for q in 0..shape[0] {
                    let z = t.get(&[q, n, k, m]);
                    out.push_str(&format!(
                        "{q},{n},{k},{m},{},{}\n",
                        fmt_f64(z.re),
                        fmt_f64(z.im)
                    ));
                }
            }
        }
    }
    out
}

fn tensor_from_csv(text: &str, sys: &SystemConfig) -> Result<DenseTensor, CliError> {
    let shape = vec![sys.q_bs, sys.n_sym, sys.k_pilot, sys.m_slots];
    let mut t = DenseTensor::zeros(shape).map_err(CliError::core)?;
    for (idx, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(CliError::io(format!(
                "tensor file line {}: expected 6 columns",
                idx + 1
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|e| CliError::io(format!("tensor line {}: bad {what}: {e}", idx + 1)))
        };
        let q = parse(f[0], "q")? as usize;
        let n = parse(f[1], "n")? as usize;
        let k = parse(f[2], "k")? as usize;
        let m = parse(f[3], "m")? as usize;
        let re = parse(f[4], "re")?;
        let im = parse(f[5], "im")?;
        t.set(&[q, n, k, m], C64::new(re, im));
    }
    Ok(t)
}

fn front_end_to_csv(ctx: &AcquisitionContext) -> String {
    let mut out = String::from("matrix,row,col,re,im\n");
    for (name, m) in [("w", &ctx.w), ("s", &ctx.s)] {
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let z = m[(r, c)];
                out.push_str(&format!(
                    "{name},{r},{c},{},{}\n",
                    fmt_f64(z.re),
                    fmt_f64(z.im)
                ));
            }
        }
    }
    out
}

fn front_end_from_csv(text: &str, sys: &SystemConfig) -> Result<AcquisitionContext, CliError> {
    let mut w = CMat::zeros(sys.n_bs, sys.q_bs);
    let mut s = CMat::zeros(sys.n_ms, sys.n_sym);
    for (idx, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(CliError::io(format!(
                "front-end file line {}: expected 5 columns",
                idx + 1
            )));
        }
        let parse = |sv: &str, what: &str| -> Result<f64, CliError> {
            sv.parse()
                .map_err(|e| CliError::io(format!("front-end line {}: bad {what}: {e}", idx + 1)))
        };
        let r = parse(f[1], "row")? as usize;
        let c = parse(f[2], "col")? as usize;
        let z = C64::new(parse(f[3], "re")?, parse(f[4], "im")?);
        match f[0] {
            "w" => w[(r, c)] = z,
            "s" => s[(r, c)] = z,
            other => {
                return Err(CliError::io(format!(
                    "front-end line {}: unknown matrix '{other}'",
                    idx + 1
                )))
            }
        }
    }
    Ok(AcquisitionContext {
        w,
        s,
        noise_var: 0.0,
    })
}

pub fn cmd_simulate(
    cfg: &RunConfig,
    scenario: Option<&FsPath>,
    out_dir: &FsPath,
) -> Result<Vec<PathBuf>, CliError> {
    let sys = cfg.system_config();
    sys.validate().map_err(CliError::core)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sys.seed);
    let paths = resolve_paths(cfg, &sys, scenario, &mut rng)?;
    let ctx = AcquisitionContext::generate(&sys, &mut rng);
    let clean = assemble_noiseless(&sys, &paths, &ctx).map_err(CliError::core)?;
    let observed = add_noise(&clean, sys.snr_db, &mut rng).map_err(CliError::core)?;

    let header = ScenarioHeader {
        version: SCENARIO_VERSION,
        f_c_hz: sys.f_c_hz,
        speed_mps: Some(cfg.paths.speed_mps),
        v_t_mps: None,
    };
    let truth_file = out_dir.join("truth.csv");
    save_scenario(&truth_file, paths.paths(), &header).map_err(CliError::io)?;
    let tensor_file = out_dir.join("tensor.csv");
    atomic_write(&tensor_file, tensor_to_csv(&observed.y).as_bytes()).map_err(CliError::io)?;
    let fe_file = out_dir.join("front_end.csv");
    atomic_write(&fe_file, front_end_to_csv(&observed.ctx).as_bytes()).map_err(CliError::io)?;

    let mut manifest = RunManifest::new("simulate", cfg, scenario);
    let outputs = vec![truth_file, tensor_file, fe_file];
    manifest.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    manifest
        .save(&out_dir.join("manifest.json"))
        .map_err(CliError::io)?;
    Ok(outputs)
}

fn estimator_options(cfg: &RunConfig) -> EstimateOptions {
    EstimateOptions {
        grid_size: cfg.estimate.grid_size,
        refine_angles: cfg.estimate.refine_angles,
        ..EstimateOptions::default()
    }
}

pub fn cmd_estimate(
    cfg: &RunConfig,
    input_dir: &FsPath,
    out_dir: &FsPath,
) -> Result<Vec<PathBuf>, CliError> {
    let manifest = RunManifest::load(&input_dir.join("manifest.json")).map_err(CliError::io)?;
    let sys = manifest.config.system_config();
    sys.validate().map_err(CliError::core)?;
    let tensor_text = std::fs::read_to_string(input_dir.join("tensor.csv"))
        .map_err(|e| CliError::io(format!("cannot read tensor.csv: {e}")))?;
    let y = tensor_from_csv(&tensor_text, &sys)?;
    let fe_text = std::fs::read_to_string(input_dir.join("front_end.csv"))
        .map_err(|e| CliError::io(format!("cannot read front_end.csv: {e}")))?;
    let ctx = front_end_from_csv(&fe_text, &sys)?;
    let observed = ReceivedTensor {
        y,
        ctx,
        cfg: sys.clone(),
    };
    let (truth, _) = load_scenario(&input_dir.join("truth.csv")).map_err(CliError::scenario)?;
    let truth_channels = channel_grid(&sys, truth.paths()).map_err(CliError::core)?;

    let opts = estimator_options(cfg);
    let l_est = cfg.estimate.l_paths_est.unwrap_or(truth.len());
    let kinds = cfg.estimator_kinds().map_err(CliError::io)?;

    let mut outputs = Vec::new();
    let mut metrics = String::from(
        "estimator,success,error,mse_aoa,mse_aod,mse_delay,mse_gain,mse_doppler,nmse\n",
    );
    for kind in kinds {
        let result = match kind {
            EstimatorKind::Esprit => estimate(&observed, l_est, &opts),
            EstimatorKind::Als => {
                let als_cfg = AlsConfig {
                    max_iters: cfg.als.max_iters,
                    tol: cfg.als.tol,
                    init: AlsInit::Random,
                    seed: sys.seed,
                };
                als_estimate(&observed, l_est, &als_cfg, &opts)
            }
        };
        match result {
            Ok(out) => {
                let header = ScenarioHeader {
                    version: SCENARIO_VERSION,
                    f_c_hz: sys.f_c_hz,
                    speed_mps: None,
                    v_t_mps: None,
                };
                let est_file = out_dir.join(format!("estimates_{}.csv", kind.name()));
                save_scenario(&est_file, &out.paths.paths, &header).map_err(CliError::io)?;
                outputs.push(est_file);
                if out.paths.len() == truth.len() {
                    let perm = match_paths(&truth, &out.paths).map_err(CliError::core)?;
                    let mse = parameter_mse(&truth, &out.paths, &perm);
                    let nmse =
                        channel_nmse(&truth_channels, &out.channels).map_err(CliError::core)?;
                    metrics.push_str(&format!(
                        "{},true,,{},{},{},{},{},{}\n",
                        kind.name(),
                        fmt_f64(mse.aoa),
                        fmt_f64(mse.aod),
                        fmt_f64(mse.delay),
                        fmt_f64(mse.gain),
                        fmt_f64(mse.doppler),
                        fmt_f64(nmse)
                    ));
                } else {
                    metrics.push_str(&format!("{},true,model order mismatch,,,,,,\n", kind.name()));
                }
            }
            Err(e) => {
                metrics.push_str(&format!(
                    "{},false,{},,,,,,\n",
                    kind.name(),
                    e.to_string().replace(',', ";")
                ));
            }
        }
    }
    let metrics_file = out_dir.join("metrics.csv");
    atomic_write(&metrics_file, metrics.as_bytes()).map_err(CliError::io)?;
    outputs.push(metrics_file);

    let mut manifest = RunManifest::new("estimate", cfg, None);
    manifest.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    manifest
        .save(&out_dir.join("manifest.json"))
        .map_err(CliError::io)?;
    Ok(outputs)
}

fn sweep_axis(name: &str) -> Result<SweepAxis, CliError> {
    match name {
        "snr-db" | "snr_db" | "snr" => Ok(SweepAxis::SnrDb),
        "k-pilot" | "k_pilot" => Ok(SweepAxis::KPilot),
        "m-slots" | "m_slots" => Ok(SweepAxis::MSlots),
        "l-paths" | "l_paths" => Ok(SweepAxis::LPaths),
        other => Err(CliError::io(format!(
            "unknown sweep axis '{other}' (use snr-db, k-pilot, m-slots or l-paths)"
        ))),
    }
}

pub fn cmd_bench(cfg: &RunConfig, out_dir: &FsPath) -> Result<Vec<PathBuf>, CliError> {
    let axis = sweep_axis(&cfg.bench.axis)?;
    let mut spec = SweepSpec::new(cfg.system_config(), axis, cfg.bench.values.clone());
    spec.trials = cfg.bench.trials;
    spec.l_paths = cfg.paths.l_paths;
    spec.l_paths_est = cfg.estimate.l_paths_est;
    spec.speed_mps = cfg.paths.speed_mps;
    spec.estimators = cfg.estimator_kinds().map_err(CliError::io)?;
    spec.refine_angles = cfg.estimate.refine_angles;
    spec.grid_size = cfg.estimate.grid_size;
    spec.als_max_iters = cfg.als.max_iters;
    spec.als_tol = cfg.als.tol;
    if cfg.bench.with_crb {
        spec.crb = Some(cfg.crb_mode().map_err(CliError::io)?);
    }
    let result = run_sweep(&spec).map_err(CliError::core)?;

    let results_file = out_dir.join("results.csv");
    atomic_write(&results_file, result.results_csv(axis).as_bytes()).map_err(CliError::io)?;
    let trials_file = out_dir.join("trials.csv");
    atomic_write(&trials_file, result.trials_csv(axis).as_bytes()).map_err(CliError::io)?;
    let timing_file = out_dir.join("timing.csv");
    atomic_write(&timing_file, result.timing_csv().as_bytes()).map_err(CliError::io)?;

    let outputs = vec![results_file, trials_file, timing_file];
    let mut manifest = RunManifest::new("bench", cfg, None);
    manifest.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    manifest
        .save(&out_dir.join("manifest.json"))
        .map_err(CliError::io)?;
    Ok(outputs)
}

pub fn cmd_crb(
    cfg: &RunConfig,
    scenario: Option<&FsPath>,
    out_dir: &FsPath,
) -> Result<Vec<PathBuf>, CliError> {
    let sys = cfg.system_config();
    sys.validate().map_err(CliError::core)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sys.seed);
    let paths = resolve_paths(cfg, &sys, scenario, &mut rng)?;
    let mode = cfg.crb_mode().map_err(CliError::io)?;
    let table = crb_curve(&sys, &paths, &cfg.crb.snr_grid_db, mode).map_err(CliError::core)?;

    let n_params = table.diag_rows[0].len();
    let mut csv = String::from("snr_db,crb_aoa_sum,crb_aod_sum,crb_delay_sum,crb_gain_sum,crb_doppler_sum");
    for i in 0..n_params {
        csv.push_str(&format!(",crb_p{i}"));
    }
    csv.push('\n');
    for (row, (fam, snr)) in table
        .families
        .iter()
        .zip(table.snr_db.iter())
        .enumerate()
    {
        csv.push_str(&format!(
            "{},{},{},{},{},{}",
            fmt_f64(*snr),
            fmt_f64(fam.aoa),
            fmt_f64(fam.aod),
            fmt_f64(fam.delay),
            fmt_f64(fam.gain),
            fmt_f64(fam.doppler)
        ));
        for v in &table.diag_rows[row] {
            csv.push_str(&format!(",{}", fmt_f64(*v)));
        }
        csv.push('\n');
    }
    let crb_file = out_dir.join("crb.csv");
    atomic_write(&crb_file, csv.as_bytes()).map_err(CliError::io)?;

    let outputs = vec![crb_file];
    let mut manifest = RunManifest::new("crb", cfg, scenario);
    manifest.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    manifest
        .save(&out_dir.join("manifest.json"))
        .map_err(CliError::io)?;
    Ok(outputs)
}

pub fn cmd_check_uniqueness(cfg: &RunConfig, out_dir: &FsPath) -> Result<Vec<PathBuf>, CliError> {
    let sys = cfg.system_config();
    sys.validate().map_err(CliError::core)?;
    let plan = SmoothingPlan::balanced(sys.m_slots).map_err(CliError::core)?;
    let report = check_uniqueness(&sys, &plan, cfg.paths.l_paths);
    println!("{report}");

    let json = serde_json::json!({
        "satisfied": report.satisfied,
        "smoothed_rows": report.smoothed_rows,
        "l_paths": report.l_paths,
        "subspace_condition_ok": report.cond_subspace_ok,
        "subspace_margin": report.smoothed_rows as i64 - report.l_paths as i64,
        "krank_sum": report.krank_sum,
        "krank_required": report.krank_required,
        "krank_condition_ok": report.cond_krank_ok,
        "krank_margin": report.krank_sum as i64 - report.krank_required as i64,
        "plan": { "k4": plan.k4(), "l4": plan.l4() },
    });
    let file = out_dir.join("uniqueness.json");
    atomic_write(&file, serde_json::to_string_pretty(&json).unwrap().as_bytes())
        .map_err(CliError::io)?;

    let outputs = vec![file];
    let mut manifest = RunManifest::new("check-uniqueness", cfg, None);
    manifest.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    manifest
        .save(&out_dir.join("manifest.json"))
        .map_err(CliError::io)?;
    Ok(outputs)
}
