//! Ground-truth path generation and the two channel models.
//!
//! The instantaneous model carries an explicit per-path Doppler phase that
//! evolves across mini-slots; the statistical model evolves the gains with a
//! first-order autoregression whose correlation coefficient comes from the
//! zeroth-order Bessel function of the Doppler-time product.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{C64, CMat, CVec};

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Antenna, RF-chain and OFDM numerology for one simulated link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// BS antenna count.
    pub n_bs: usize,
    /// MS antenna count.
    pub n_ms: usize,
    /// BS RF chains (must be < `n_bs`).
    pub q_bs: usize,
    /// MS RF chains (must be < `n_ms`). The pilot block is norm-constrained
    /// directly, so this count never enters the estimator; it is kept to
    /// describe the hardware.
    pub q_ms: usize,
    /// Total OFDM subcarriers N.
    pub n_subcarriers_total: usize,
    /// Pilot subcarriers K.
    pub k_pilot: usize,
    /// OFDM symbols per mini-slot.
    pub n_sym: usize,
    /// Mini-slots M.
    pub m_slots: usize,
    /// Subcarrier spacing in Hz.
    pub scs_hz: f64,
    /// Carrier frequency in Hz.
    pub f_c_hz: f64,
    /// Antenna spacing over carrier wavelength (half-wavelength by default).
    pub antenna_spacing_ratio: f64,
    /// Operating SNR in dB (see `acquisition::add_noise` for the definition).
    pub snr_db: f64,
    /// BS-MS distance in meters, sets the gain variance.
    pub distance_m: f64,
    /// Base RNG seed for anything random derived from this config.
    pub seed: u64,
}

impl SystemConfig {
    /// OFDM sampling frequency f_s = N · Δf.
    pub fn f_s_hz(&self) -> f64 {
        self.n_subcarriers_total as f64 * self.scs_hz
    }

    /// Symbol duration T_s = 1 / Δf.
    pub fn symbol_duration_s(&self) -> f64 {
        1.0 / self.scs_hz
    }

    /// Mini-slot duration N_s · T_s.
    pub fn mini_slot_duration_s(&self) -> f64 {
        self.n_sym as f64 * self.symbol_duration_s()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bs == 0 || self.n_ms == 0 || self.q_bs == 0 || self.q_ms == 0 {
            return Err(Error::InvalidConfig(
                "antenna and RF chain counts must be positive".into(),
            ));
        }
        if self.q_bs >= self.n_bs || self.q_ms >= self.n_ms {
            return Err(Error::InvalidConfig(
                "RF chain count must be smaller than the antenna count".into(),
            ));
        }
        if self.k_pilot == 0 || self.k_pilot > self.n_subcarriers_total {
            return Err(Error::InvalidConfig(
                "pilot subcarriers must satisfy 1 <= K <= N".into(),
            ));
        }
        if self.n_sym == 0 || self.m_slots == 0 {
            return Err(Error::InvalidConfig(
                "need at least one symbol and one mini-slot".into(),
            ));
        }
        if !(self.scs_hz > 0.0) || !(self.f_c_hz > 0.0) {
            return Err(Error::InvalidConfig(
                "subcarrier spacing and carrier frequency must be positive".into(),
            ));
        }
        if !(self.antenna_spacing_ratio > 0.0) {
            return Err(Error::InvalidConfig(
                "antenna spacing ratio must be positive".into(),
            ));
        }
        if !(self.distance_m > 0.0) {
            return Err(Error::InvalidConfig("distance must be positive".into()));
        }
        Ok(())
    }

    /// Small configuration that runs a full pipeline in milliseconds.
    pub fn desk_scale() -> Self {
        Self {
            n_bs: 32,
            n_ms: 16,
            q_bs: 8,
            q_ms: 4,
            n_subcarriers_total: 1024,
            k_pilot: 16,
            n_sym: 7,
            m_slots: 10,
            scs_hz: 480e3,
            f_c_hz: 30e9,
            antenna_spacing_ratio: 0.5,
            snr_db: 20.0,
            distance_m: 100.0,
            seed: 0,
        }
    }

    /// Full-size configuration (128/64 antennas, 16/8 RF chains, numerology
    /// with 480 kHz subcarrier spacing at 30 GHz).
    pub fn paper_scale() -> Self {
        Self {
            n_bs: 128,
            n_ms: 64,
            q_bs: 16,
            q_ms: 8,
            ..Self::desk_scale()
        }
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// Angle of arrival at the BS, radians in (0, π).
    pub aoa_rad: f64,
    /// Angle of departure at the MS, radians in (0, π).
    pub aod_rad: f64,
    /// Propagation delay, seconds.
    pub delay_s: f64,
    /// Doppler frequency shift, Hz.
    pub doppler_hz: f64,
    /// Complex channel gain.
    pub gain: C64,
}

/// A set of L paths with pairwise-distinct angles, delays and Dopplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    paths: Vec<Path>,
}

impl PathSet {
    pub fn new(paths: Vec<Path>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidPaths("need at least one path".into()));
        }
        for (name, pick) in [
            ("AoA", &(|p: &Path| p.aoa_rad) as &dyn Fn(&Path) -> f64),
            ("AoD", &|p: &Path| p.aod_rad),
            ("delay", &|p: &Path| p.delay_s),
            ("Doppler", &|p: &Path| p.doppler_hz),
        ] {
            for i in 0..paths.len() {
                if !pick(&paths[i]).is_finite() {
                    return Err(Error::InvalidPaths(format!("non-finite {name}")));
                }
                for j in (i + 1)..paths.len() {
                    if pick(&paths[i]) == pick(&paths[j]) {
                        return Err(Error::InvalidPaths(format!(
                            "{name} of paths {i} and {j} coincide"
                        )));
                    }
                }
            }
        }
        if paths.iter().any(|p| p.delay_s < 0.0) {
            return Err(Error::InvalidPaths("negative delay".into()));
        }
        Ok(Self { paths })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }
}

/// Parameter estimates produced by an estimator; no distinctness invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedPaths {
    pub paths: Vec<Path>,
}

impl EstimatedPaths {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// First-order AR gain evolution parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArModelParams {
    pub rho: f64,
    pub innovation_var: f64,
}

impl ArModelParams {
    pub fn new(rho: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::InvalidConfig(format!(
                "AR correlation must lie in [-1, 1], got {rho}"
            )));
        }
        Ok(Self {
            rho,
            innovation_var: 1.0 - rho * rho,
        })
    }

    /// ρ = J0(2π f_max N_s T_s) for the configured mini-slot duration.
    pub fn from_max_doppler(cfg: &SystemConfig, f_max_hz: f64) -> Result<Self> {
        Self::new(bessel_j0(2.0 * PI * f_max_hz * cfg.mini_slot_duration_s()))
    }
}

/// Zeroth-order Bessel function of the first kind by its power series.
/// Intended for the small arguments (|x| < 10) the AR model produces.
pub fn bessel_j0(x: f64) -> f64 {
    let y = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=60 {
        term *= -y / ((k * k) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1.0) {
            break;
        }
    }
    sum
}

/// ULA steering vector: entry x is exp(j 2π (d/λ) x cos(angle)), x = 0..X-1.
pub fn steering_vector(count: usize, angle_rad: f64, spacing_ratio: f64) -> Result<CVec> {
    if count == 0 {
        return Err(Error::InvalidConfig("steering vector needs X >= 1".into()));
    }
    let phase_step = 2.0 * PI * spacing_ratio * angle_rad.cos();
    Ok(CVec::from_fn(count, |x, _| {
        C64::from_polar(1.0, phase_step * x as f64)
    }))
}

pub fn bs_steering_matrix(cfg: &SystemConfig, paths: &[Path]) -> Result<CMat> {
    let mut m = CMat::zeros(cfg.n_bs, paths.len());
    for (l, p) in paths.iter().enumerate() {
        m.set_column(
            l,
            &steering_vector(cfg.n_bs, p.aoa_rad, cfg.antenna_spacing_ratio)?,
        );
    }
    Ok(m)
}

pub fn ms_steering_matrix(cfg: &SystemConfig, paths: &[Path]) -> Result<CMat> {
    let mut m = CMat::zeros(cfg.n_ms, paths.len());
    for (l, p) in paths.iter().enumerate() {
        m.set_column(
            l,
            &steering_vector(cfg.n_ms, p.aod_rad, cfg.antenna_spacing_ratio)?,
        );
    }
    Ok(m)
}

/// Frequency-domain factor column over the K pilot subcarriers. Entry k
/// (1-based) is α exp(−j (2π/N) (f_s τ) (k − (f_d/f_s) N)): a delay
/// progression offset by the Doppler shift, scaled by the path gain.
pub fn factor_c_column(cfg: &SystemConfig, path: &Path) -> CVec {
    let n = cfg.n_subcarriers_total as f64;
    let fs_tau = cfg.f_s_hz() * path.delay_s;
    let offset = path.doppler_hz / cfg.f_s_hz() * n;
    CVec::from_fn(cfg.k_pilot, |k0, _| {
        let k = (k0 + 1) as f64;
        path.gain * C64::from_polar(1.0, -2.0 * PI / n * fs_tau * (k - offset))
    })
}

/// Mini-slot phase progression: entry m (1-based) is
/// exp(j 2π f_d (m−1) N_s T_s); entry 1 is 1.
pub fn factor_d_column(cfg: &SystemConfig, path: &Path) -> CVec {
    let step = 2.0 * PI * path.doppler_hz * cfg.mini_slot_duration_s();
    CVec::from_fn(cfg.m_slots, |m0, _| C64::from_polar(1.0, step * m0 as f64))
}

pub fn factor_c(cfg: &SystemConfig, paths: &[Path]) -> CMat {
    let mut m = CMat::zeros(cfg.k_pilot, paths.len());
    for (l, p) in paths.iter().enumerate() {
        m.set_column(l, &factor_c_column(cfg, p));
    }
    m
}

pub fn factor_d(cfg: &SystemConfig, paths: &[Path]) -> CMat {
    let mut m = CMat::zeros(cfg.m_slots, paths.len());
    for (l, p) in paths.iter().enumerate() {
        m.set_column(l, &factor_d_column(cfg, p));
    }
    m
}

/// Instantaneous frequency-domain channel at mini-slot m, pilot subcarrier k
/// (both 1-based): A_BS · D_k(C) · D_m(D) · A_MSᵀ.
pub fn instantaneous_channel(
    cfg: &SystemConfig,
    paths: &PathSet,
    m: usize,
    k: usize,
) -> Result<CMat> {
    if m == 0 || m > cfg.m_slots || k == 0 || k > cfg.k_pilot {
        return Err(Error::DimensionMismatch(format!(
            "slice index (m={m}, k={k}) outside 1..={} x 1..={}",
            cfg.m_slots, cfg.k_pilot
        )));
    }
    channel_slice(cfg, paths.paths(), m, k)
}

fn channel_slice(cfg: &SystemConfig, paths: &[Path], m: usize, k: usize) -> Result<CMat> {
    let a_bs = bs_steering_matrix(cfg, paths)?;
    let a_ms = ms_steering_matrix(cfg, paths)?;
    let c = factor_c(cfg, paths);
    let d = factor_d(cfg, paths);
    let diag = CMat::from_fn(paths.len(), paths.len(), |i, j| {
        if i == j {
            c[(k - 1, i)] * d[(m - 1, i)]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(&a_bs * diag * a_ms.transpose())
}

/// All M·K channel slices, indexed (m-1)·K + (k-1).
pub fn channel_grid(cfg: &SystemConfig, paths: &[Path]) -> Result<Vec<CMat>> {
    let a_bs = bs_steering_matrix(cfg, paths)?;
    let a_ms_t = ms_steering_matrix(cfg, paths)?.transpose();
    let c = factor_c(cfg, paths);
    let d = factor_d(cfg, paths);
    let l = paths.len();
    let mut out = Vec::with_capacity(cfg.m_slots * cfg.k_pilot);
    for m in 0..cfg.m_slots {
        for k in 0..cfg.k_pilot {
            let diag = CMat::from_fn(l, l, |i, j| {
                if i == j {
                    c[(k, i)] * d[(m, i)]
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            out.push(&a_bs * diag * &a_ms_t);
        }
    }
    Ok(out)
}

/// Gain variance σ_α² = (c / (4π D f_c))².
pub fn gain_variance(cfg: &SystemConfig) -> Result<f64> {
    if !(cfg.distance_m > 0.0) || !(cfg.f_c_hz > 0.0) {
        return Err(Error::InvalidConfig(
            "distance and carrier frequency must be positive".into(),
        ));
    }
    let amp = SPEED_OF_LIGHT / (4.0 * PI * cfg.distance_m * cfg.f_c_hz);
    Ok(amp * amp)
}

fn complex_gaussian(rng: &mut impl Rng, var: f64) -> C64 {
    let normal = Normal::new(0.0, (var / 2.0).sqrt()).expect("variance must be non-negative");
    C64::new(normal.sample(rng), normal.sample(rng))
}

/// AR(1) gain trajectories: one length-L gain vector per mini-slot. The
/// first slot draws CN(0, σ_α²); subsequent slots follow
/// α_m = ρ α_{m−1} + ψ with ψ ~ CN(0, 1 − ρ²).
pub fn statistical_channel_sequence(
    cfg: &SystemConfig,
    paths: &PathSet,
    ar: &ArModelParams,
    rng: &mut impl Rng,
) -> Result<Vec<CVec>> {
    let l = paths.len();
    let var0 = gain_variance(cfg)?;
    let mut out = Vec::with_capacity(cfg.m_slots);
    let mut current = CVec::from_fn(l, |_, _| complex_gaussian(rng, var0));
    out.push(current.clone());
    for _ in 1..cfg.m_slots {
        let next = CVec::from_fn(l, |i, _| {
            ar.rho * current[i]
                + if ar.innovation_var > 0.0 {
                    complex_gaussian(rng, ar.innovation_var)
                } else {
                    C64::new(0.0, 0.0)
                }
        });
        out.push(next.clone());
        current = next;
    }
    Ok(out)
}

/// Statistical-model channel matrix for one mini-slot's gain vector.
pub fn statistical_channel_slice(
    cfg: &SystemConfig,
    paths: &PathSet,
    gains: &CVec,
) -> Result<CMat> {
    if gains.len() != paths.len() {
        return Err(Error::DimensionMismatch(
            "gain vector length does not match path count".into(),
        ));
    }
    let a_bs = bs_steering_matrix(cfg, paths.paths())?;
    let a_ms_t = ms_steering_matrix(cfg, paths.paths())?.transpose();
    let l = paths.len();
    let diag = CMat::from_fn(l, l, |i, j| {
        if i == j {
            gains[i]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(&a_bs * diag * a_ms_t)
}

/// Sampling bounds and minimum separations for random path generation.
///
/// The angle domain stays off the array endfire, and the delay range keeps
/// the per-subcarrier phase progression inside one unambiguous turn; small
/// pairwise separations keep the factor matrices numerically well
/// conditioned, as the estimator assumes distinct parameters per path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSampler {
    pub angle_min_rad: f64,
    pub angle_max_rad: f64,
    pub min_angle_sep_rad: f64,
    /// Delay bounds as fractions of the alias-free span N / f_s.
    pub delay_min_frac: f64,
    pub delay_max_frac: f64,
    pub min_delay_sep_s: f64,
    pub min_doppler_sep_hz: f64,
    pub max_retries: usize,
}

impl Default for PathSampler {
    fn default() -> Self {
        Self {
            angle_min_rad: 0.1 * PI,
            angle_max_rad: 0.9 * PI,
            min_angle_sep_rad: 0.05,
            delay_min_frac: 0.05,
            delay_max_frac: 0.8,
            min_delay_sep_s: 50e-9,
            min_doppler_sep_hz: 300.0,
            max_retries: 10_000,
        }
    }
}

fn draw_separated(
    rng: &mut impl Rng,
    count: usize,
    lo: f64,
    hi: f64,
    min_sep: f64,
    max_retries: usize,
    what: &str,
) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..max_retries {
            let v = rng.gen_range(lo..hi);
            if values.iter().all(|&u| (u - v).abs() >= min_sep) {
                accepted = Some(v);
                break;
            }
        }
        match accepted {
            Some(v) => values.push(v),
            None => {
                return Err(Error::SamplingFailed(format!(
                    "could not place {count} {what} values in [{lo}, {hi}] with separation {min_sep}"
                )));
            }
        }
    }
    Ok(values)
}

/// Draw L random paths: angles uniform with a minimum separation, delays
/// uniform over the alias-free span, Dopplers uniform in ±v f_c / c, gains
/// CN(0, σ_α²).
pub fn sample_paths(
    cfg: &SystemConfig,
    l_paths: usize,
    speed_mps: f64,
    rng: &mut impl Rng,
) -> Result<PathSet> {
    sample_paths_with(cfg, l_paths, speed_mps, &PathSampler::default(), rng)
}

pub fn sample_paths_with(
    cfg: &SystemConfig,
    l_paths: usize,
    speed_mps: f64,
    sampler: &PathSampler,
    rng: &mut impl Rng,
) -> Result<PathSet> {
    if l_paths == 0 {
        return Err(Error::InvalidPaths("need at least one path".into()));
    }
    let f_max = speed_mps * cfg.f_c_hz / SPEED_OF_LIGHT;
    if !(f_max > 0.0) {
        return Err(Error::InvalidConfig(
            "speed must be positive to bound the Doppler shifts".into(),
        ));
    }
    let delay_span = cfg.n_subcarriers_total as f64 / cfg.f_s_hz();
    let aoas = draw_separated(
        rng,
        l_paths,
        sampler.angle_min_rad,
        sampler.angle_max_rad,
        sampler.min_angle_sep_rad,
        sampler.max_retries,
        "AoA",
    )?;
    let aods = draw_separated(
        rng,
        l_paths,
        sampler.angle_min_rad,
        sampler.angle_max_rad,
        sampler.min_angle_sep_rad,
        sampler.max_retries,
        "AoD",
    )?;
    let delays = draw_separated(
        rng,
        l_paths,
        sampler.delay_min_frac * delay_span,
        sampler.delay_max_frac * delay_span,
        sampler.min_delay_sep_s,
        sampler.max_retries,
        "delay",
    )?;
    let dopplers = draw_separated(
        rng,
        l_paths,
        -f_max,
        f_max,
        sampler.min_doppler_sep_hz.min(f_max),
        sampler.max_retries,
        "Doppler",
    )?;
    let var = gain_variance(cfg)?;
    let paths: Vec<Path> = (0..l_paths)
        .map(|l| Path {
            aoa_rad: aoas[l],
            aod_rad: aods[l],
            delay_s: delays[l],
            doppler_hz: dopplers[l],
            gain: complex_gaussian(rng, var),
        })
        .collect();
    PathSet::new(paths)
}
