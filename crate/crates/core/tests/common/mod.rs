//! Fixtures and oracles shared by the integration suites.

use mmce_core::acquisition::AcquisitionContext;
use mmce_core::channel::{Path, SystemConfig};
use mmce_core::crb::ParamId;
use mmce_core::tensor::{C64, CVec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn toy_config() -> SystemConfig {
    SystemConfig {
        n_bs: 4,
        n_ms: 3,
        q_bs: 2,
        q_ms: 2,
        n_subcarriers_total: 64,
        k_pilot: 3,
        n_sym: 2,
        m_slots: 3,
        scs_hz: 480e3,
        f_c_hz: 30e9,
        antenna_spacing_ratio: 0.5,
        snr_db: 10.0,
        distance_m: 100.0,
        seed: 7,
    }
}

pub fn toy_paths() -> Vec<Path> {
    vec![
        Path {
            aoa_rad: 1.1,
            aod_rad: 0.8,
            delay_s: 100e-9,
            doppler_hz: 1200.0,
            gain: C64::new(0.7, 0.3),
        },
        Path {
            aoa_rad: 2.0,
            aod_rad: 2.3,
            delay_s: 300e-9,
            doppler_hz: -800.0,
            gain: C64::new(-0.2, 0.9),
        },
    ]
}

pub fn toy_ctx(cfg: &SystemConfig, sigma_sq: f64) -> AcquisitionContext {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ctx = AcquisitionContext::generate(cfg, &mut rng);
    ctx.noise_var = sigma_sq;
    ctx
}

/// Step sizes scaled to each parameter's natural period so the central
/// difference stays in its asymptotic regime.
pub fn fd_step(cfg: &SystemConfig, paths: &[Path], id: ParamId) -> f64 {
    match id {
        ParamId::Aoa(_) | ParamId::Aod(_) => 1e-7,
        ParamId::Delay(_) => 1e-6 * cfg.n_subcarriers_total as f64 / cfg.f_s_hz(),
        ParamId::Doppler(l) => {
            let aperture = 1.0 / (cfg.m_slots as f64 * cfg.mini_slot_duration_s());
            1e-6 * paths[l].doppler_hz.abs().max(aperture)
        }
        ParamId::Gain(l) => 1e-6 * paths[l].gain.norm().max(1.0),
    }
}

pub fn perturbed(paths: &[Path], id: ParamId, delta: f64, imag: bool) -> Vec<Path> {
    let mut out = paths.to_vec();
    match id {
        ParamId::Aoa(l) => out[l].aoa_rad += delta,
        ParamId::Aod(l) => out[l].aod_rad += delta,
        ParamId::Delay(l) => out[l].delay_s += delta,
        ParamId::Doppler(l) => out[l].doppler_hz += delta,
        ParamId::Gain(l) => {
            out[l].gain += if imag {
                C64::new(0.0, delta)
            } else {
                C64::new(delta, 0.0)
            }
        }
    }
    out
}

/// Central finite difference of the vectorized observation.
pub fn fd_column(
    cfg: &SystemConfig,
    ctx: &AcquisitionContext,
    paths: &[Path],
    id: ParamId,
    imag: bool,
) -> CVec {
    let h = fd_step(cfg, paths, id);
    let plus = mmce_core::crb::z_vector(cfg, ctx, &perturbed(paths, id, h, imag)).unwrap();
    let minus = mmce_core::crb::z_vector(cfg, ctx, &perturbed(paths, id, -h, imag)).unwrap();
    (plus - minus) / C64::new(2.0 * h, 0.0)
}
