//! Pilot acquisition: hybrid combiner and pilot generation, assembly of the
//! fourth-order observation tensor, and additive noise at a prescribed SNR.
//!
//! The observation has shape Q_BS × N_s × K × M (RF chain, pilot symbol,
//! subcarrier, mini-slot). Noiselessly it is the CP reconstruction of
//! [[A, B, C, D]] with A = Wᵀ A_BS and B = Sᵀ A_MS; noise enters as Wᵀ N
//! per (m, k) slice, so the combined noise is colored by the combiner.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

use crate::channel::{
    bs_steering_matrix, factor_c, factor_d, gain_variance, ms_steering_matrix, PathSet,
    SystemConfig,
};
use crate::error::{Error, Result};
use crate::tensor::{cp_reconstruct, CpModel, DenseTensor, C64, CMat};

/// Fixed acquisition hardware for one run: the common RF combiner, the
/// precoded pilot block and the injected noise variance (0 when noiseless).
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionContext {
    /// RF combiner, N_BS × Q_BS, constant-modulus entries.
    pub w: CMat,
    /// Pilot block, N_MS × N_s, columns with squared norm 1/N_MS.
    pub s: CMat,
    /// Variance of the raw (pre-combiner) noise entries.
    pub noise_var: f64,
}

impl AcquisitionContext {
    pub fn generate(cfg: &SystemConfig, rng: &mut impl Rng) -> Self {
        Self {
            w: generate_combiner(cfg, rng),
            s: generate_pilots(cfg, rng),
            noise_var: 0.0,
        }
    }

    fn check_dims(&self, cfg: &SystemConfig) -> Result<()> {
        if self.w.nrows() != cfg.n_bs || self.w.ncols() != cfg.q_bs {
            return Err(Error::DimensionMismatch(format!(
                "combiner is {}x{}, config expects {}x{}",
                self.w.nrows(),
                self.w.ncols(),
                cfg.n_bs,
                cfg.q_bs
            )));
        }
        if self.s.nrows() != cfg.n_ms || self.s.ncols() != cfg.n_sym {
            return Err(Error::DimensionMismatch(format!(
                "pilot block is {}x{}, config expects {}x{}",
                self.s.nrows(),
                self.s.ncols(),
                cfg.n_ms,
                cfg.n_sym
            )));
        }
        Ok(())
    }

    /// Average power of a pilot entry, measured from S itself.
    pub fn pilot_entry_power(&self) -> f64 {
        self.s.iter().map(|z| z.norm_sqr()).sum::<f64>() / (self.s.len() as f64)
    }
}

/// Observation tensor plus everything needed to interpret it.
#[derive(Debug, Clone)]
pub struct ReceivedTensor {
    pub y: DenseTensor,
    pub ctx: AcquisitionContext,
    pub cfg: SystemConfig,
}

/// Random constant-modulus combiner: entries e^{jφ} / √N_BS.
pub fn generate_combiner(cfg: &SystemConfig, rng: &mut impl Rng) -> CMat {
    let scale = 1.0 / (cfg.n_bs as f64).sqrt();
    CMat::from_fn(cfg.n_bs, cfg.q_bs, |_, _| {
        C64::from_polar(scale, rng.gen_range(0.0..2.0 * PI))
    })
}

/// Random unit-modulus-phase pilots scaled so every column has squared norm
/// exactly 1/N_MS.
pub fn generate_pilots(cfg: &SystemConfig, rng: &mut impl Rng) -> CMat {
    let scale = 1.0 / cfg.n_ms as f64;
    CMat::from_fn(cfg.n_ms, cfg.n_sym, |_, _| {
        C64::from_polar(scale, rng.gen_range(0.0..2.0 * PI))
    })
}

/// The effective CP factors seen after combining: A = Wᵀ A_BS, B = Sᵀ A_MS,
/// plus the Doppler-offset subcarrier factor C and the mini-slot factor D.
pub fn effective_factors(
    cfg: &SystemConfig,
    paths: &PathSet,
    ctx: &AcquisitionContext,
) -> Result<(CMat, CMat, CMat, CMat)> {
    ctx.check_dims(cfg)?;
    let a = ctx.w.transpose() * bs_steering_matrix(cfg, paths.paths())?;
    let b = ctx.s.transpose() * ms_steering_matrix(cfg, paths.paths())?;
    let c = factor_c(cfg, paths.paths());
    let d = factor_d(cfg, paths.paths());
    Ok((a, b, c, d))
}

/// Noiseless observation: CP reconstruction of [[A, B, C, D]].
pub fn assemble_noiseless(
    cfg: &SystemConfig,
    paths: &PathSet,
    ctx: &AcquisitionContext,
) -> Result<ReceivedTensor> {
    let (a, b, c, d) = effective_factors(cfg, paths, ctx)?;
    let model = CpModel::new(vec![a, b, c, d])?;
    let y = cp_reconstruct(&model);
    Ok(ReceivedTensor {
        y,
        ctx: AcquisitionContext {
            noise_var: 0.0,
            ..ctx.clone()
        },
        cfg: cfg.clone(),
    })
}

/// Inject combined noise Wᵀ N per (m, k) slice, with raw entries i.i.d.
/// CN(0, σ_n²) and σ_n² = P σ_α² / SNR, P measured from S. An infinite
/// `snr_db` leaves the tensor untouched.
pub fn add_noise(t: &ReceivedTensor, snr_db: f64, rng: &mut impl Rng) -> Result<ReceivedTensor> {
    if snr_db.is_nan() {
        return Err(Error::InvalidConfig("SNR must not be NaN".into()));
    }
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(t.clone());
    }
    let cfg = &t.cfg;
    let snr = 10f64.powf(snr_db / 10.0);
    let sigma_n_sq = t.ctx.pilot_entry_power() * gain_variance(cfg)? / snr;
    let normal = Normal::new(0.0, (sigma_n_sq / 2.0).sqrt())
        .map_err(|e| Error::Numerical(format!("noise std: {e}")))?;

    let mut y = t.y.clone();
    let w_t = t.ctx.w.transpose();
    for m in 0..cfg.m_slots {
        for k in 0..cfg.k_pilot {
            let raw = CMat::from_fn(cfg.n_bs, cfg.n_sym, |_, _| {
                Complex::new(normal.sample(rng), normal.sample(rng))
            });
            let combined = &w_t * raw;
            for n in 0..cfg.n_sym {
                for q in 0..cfg.q_bs {
                    let idx = [q, n, k, m];
                    y.set(&idx, y.get(&idx) + combined[(q, n)]);
                }
            }
        }
    }
    Ok(ReceivedTensor {
        y,
        ctx: AcquisitionContext {
            noise_var: sigma_n_sq,
            ..t.ctx.clone()
        },
        cfg: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{instantaneous_channel, sample_paths, steering_vector, Path};
    use crate::tensor::khatri_rao;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, l: usize) -> (SystemConfig, PathSet, AcquisitionContext) {
        let cfg = SystemConfig::desk_scale();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paths = sample_paths(&cfg, l, 30.0, &mut rng).unwrap();
        let ctx = AcquisitionContext::generate(&cfg, &mut rng);
        (cfg, paths, ctx)
    }

    #[test]
    fn combiner_entries_constant_modulus() {
        let cfg = SystemConfig::paper_scale();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = generate_combiner(&cfg, &mut rng);
        assert_eq!((w.nrows(), w.ncols()), (128, 16));
        let expect = 1.0 / (cfg.n_bs as f64).sqrt();
        for z in w.iter() {
            assert!((z.norm() - expect).abs() < 1e-14);
        }
        let w2 = generate_combiner(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
        assert!((w - w2).norm() > 1e-3);
    }

    #[test]
    fn pilot_columns_have_power_limit() {
        let cfg = SystemConfig::paper_scale();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = generate_pilots(&cfg, &mut rng);
        assert_eq!(s.ncols(), 7);
        for n in 0..s.ncols() {
            let norm_sq: f64 = s.column(n).iter().map(|z| z.norm_sqr()).sum();
            assert!((norm_sq - 1.0 / 64.0).abs() < 1e-15);
        }
        let s2 = generate_pilots(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(s, s2);
    }

    #[test]
    fn identity_front_end_exposes_raw_factors() {
        // square W = I, S = I: tensor entries are products of the raw fibers
        let mut cfg = SystemConfig::desk_scale();
        cfg.n_bs = 8;
        cfg.q_bs = 8;
        cfg.n_ms = 7;
        cfg.n_sym = 7;
        let paths = PathSet::new(vec![Path {
            aoa_rad: 1.3,
            aod_rad: 0.9,
            delay_s: 80e-9,
            doppler_hz: 2000.0,
            gain: C64::new(0.5, 0.2),
        }])
        .unwrap();
        let ctx = AcquisitionContext {
            w: CMat::identity(8, 8),
            s: CMat::identity(7, 7),
            noise_var: 0.0,
        };
        let t = assemble_noiseless(&cfg, &paths, &ctx).unwrap();
        let a = steering_vector(cfg.n_bs, 1.3, 0.5).unwrap();
        let b = steering_vector(cfg.n_ms, 0.9, 0.5).unwrap();
        let c = crate::channel::factor_c_column(&cfg, &paths.paths()[0]);
        let d = crate::channel::factor_d_column(&cfg, &paths.paths()[0]);
        for q in 0..8 {
            for n in 0..7 {
                for k in [0usize, 5, 15] {
                    for m in [0usize, 4, 9] {
                        let expect = a[q] * b[n] * c[k] * d[m];
                        assert!((t.y.get(&[q, n, k, m]) - expect).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn cp_and_slicewise_constructions_agree() {
        let (cfg, paths, ctx) = setup(10, 3);
        let t = assemble_noiseless(&cfg, &paths, &ctx).unwrap();
        let w_t = ctx.w.transpose();
        for (m, k) in [(1usize, 1usize), (3, 7), (10, 16)] {
            let h = instantaneous_channel(&cfg, &paths, m, k).unwrap();
            let slice = &w_t * h * &ctx.s;
            for q in 0..cfg.q_bs {
                for n in 0..cfg.n_sym {
                    let got = t.y.get(&[q, n, k - 1, m - 1]);
                    assert!(
                        (got - slice[(q, n)]).norm() <= 1e-10 * slice.norm().max(1e-30),
                        "mismatch at q={q} n={n} k={k} m={m}"
                    );
                }
            }
        }
    }

    #[test]
    fn mode1_unfolding_has_khatri_rao_structure() {
        let (cfg, paths, ctx) = setup(11, 2);
        let t = assemble_noiseless(&cfg, &paths, &ctx).unwrap();
        let (a, b, c, d) = effective_factors(&cfg, &paths, &ctx).unwrap();
        let unf = t.y.mode_n_unfold(1).unwrap();
        let kr = khatri_rao(&khatri_rao(&d, &c).unwrap(), &b).unwrap();
        let expect = kr * a.transpose();
        assert!((unf - &expect).norm() / expect.norm() < 1e-10);
    }

    #[test]
    fn zero_gain_path_contributes_nothing() {
        let (cfg, paths, ctx) = setup(12, 2);
        let mut one_zeroed = paths.paths().to_vec();
        one_zeroed[1].gain = C64::new(0.0, 0.0);
        let only_first = PathSet::new(vec![one_zeroed[0]]).unwrap();
        let zeroed = PathSet::new(one_zeroed).unwrap();
        let ta = assemble_noiseless(&cfg, &zeroed, &ctx).unwrap();
        let tb = assemble_noiseless(&cfg, &only_first, &ctx).unwrap();
        let diff: f64 = ta
            .y
            .data()
            .iter()
            .zip(tb.y.data())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-12 * tb.y.frobenius_norm());
    }

    #[test]
    fn assembly_linear_in_gain() {
        let (cfg, paths, ctx) = setup(13, 1);
        let mut scaled = paths.paths().to_vec();
        scaled[0].gain *= C64::new(2.0, -1.0);
        let t1 = assemble_noiseless(&cfg, &paths, &ctx).unwrap();
        let t2 =
            assemble_noiseless(&cfg, &PathSet::new(scaled).unwrap(), &ctx).unwrap();
        let s = C64::new(2.0, -1.0);
        for (x, y) in t1.y.data().iter().zip(t2.y.data()) {
            assert!((x * s - y).norm() < 1e-12 * y.norm().max(1e-30));
        }
    }

    #[test]
    fn infinite_snr_is_identity() {
        let (cfg, paths, ctx) = setup(14, 2);
        let t = assemble_noiseless(&cfg, &paths, &ctx).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let t2 = add_noise(&t, f64::INFINITY, &mut rng).unwrap();
        assert_eq!(t.y, t2.y);
        assert_eq!(t2.ctx.noise_var, 0.0);
    }

    #[test]
    fn noise_variance_scales_inverse_snr() {
        let (cfg, paths, ctx) = setup(15, 2);
        let t = assemble_noiseless(&cfg, &paths, &ctx).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = add_noise(&t, 10.0, &mut rng).unwrap();
        let b = add_noise(&t, 13.010299956639812, &mut rng).unwrap();
        assert!((a.ctx.noise_var / b.ctx.noise_var - 2.0).abs() < 1e-12);
        // P is 1/N_MS^2 per entry by the column norm constraint
        assert!((t.ctx.pilot_entry_power() - 1.0 / (cfg.n_ms * cfg.n_ms) as f64).abs() < 1e-18);
    }

    #[test]
    fn combined_noise_row_variance_matches_combiner_columns() {
        // empirical variance of (Wᵀ N)[q, :] over many slices ≈ σ_n² ‖w_q‖²
        let mut cfg = SystemConfig::desk_scale();
        cfg.m_slots = 50;
        cfg.k_pilot = 16;
        cfg.n_sym = 14;
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let paths = sample_paths(&cfg, 1, 30.0, &mut rng).unwrap();
        let mut ctx = AcquisitionContext::generate(&cfg, &mut rng);
        // zero signal: measure pure noise
        let mut zero_paths = paths.paths().to_vec();
        zero_paths[0].gain = C64::new(0.0, 0.0);
        let t = assemble_noiseless(&cfg, &PathSet::new(zero_paths).unwrap(), &ctx).unwrap();
        let noisy = add_noise(&t, 0.0, &mut rng).unwrap();
        let sigma = noisy.ctx.noise_var;
        ctx.noise_var = sigma;
        let samples_per_q = cfg.n_sym * cfg.k_pilot * cfg.m_slots;
        for q in 0..cfg.q_bs {
            let wq_norm_sq: f64 = ctx.w.column(q).iter().map(|z| z.norm_sqr()).sum();
            let mut acc = 0.0;
            for n in 0..cfg.n_sym {
                for k in 0..cfg.k_pilot {
                    for m in 0..cfg.m_slots {
                        acc += noisy.y.get(&[q, n, k, m]).norm_sqr();
                    }
                }
            }
            let empirical = acc / samples_per_q as f64;
            let expect = sigma * wq_norm_sq;
            assert!(
                (empirical - expect).abs() / expect < 0.05,
                "row {q}: {empirical:.3e} vs {expect:.3e}"
            );
        }
    }
}
