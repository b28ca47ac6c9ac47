//! Fisher information and Cramer-Rao bounds for the per-path channel
//! parameters.
//!
//! The observation is vectorized as z = Σ_l a_l ⊗ d_l ⊗ c_l ⊗ b_l and the
//! combined noise covariance has the Kronecker structure σ_n² (Wᵀ W*) ⊗ I,
//! so its inverse only ever touches the small Q_BS × Q_BS factor. Each FIM
//! entry is 2 Re{(∂z/∂p_i)ᴴ C⁻¹ (∂z/∂p_j)}; the real part is taken
//! explicitly so the matrix over real parameters is real symmetric.
//!
//! Two gain conventions are exposed: the complex gain as a single parameter
//! (5L entries) and the real/imaginary split (6L entries, the default for
//! estimation-theoretic use).

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::acquisition::AcquisitionContext;
use crate::channel::{gain_variance, steering_vector, Path, PathSet, SystemConfig};
use crate::error::{Error, Result};
use crate::tensor::{kron_vec, C64, CMat, CVec};

/// Which real parameter a derivative column belongs to (path index 0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamId {
    Aoa(usize),
    Aod(usize),
    Delay(usize),
    /// Coefficient column of the complex gain (z is linear in α_l).
    Gain(usize),
    Doppler(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CrbMode {
    /// 5L parameters, complex gain treated as one entry.
    PaperComplexGain,
    /// 6L parameters, gain split into real and imaginary parts.
    RealSplitGain,
}

/// Kronecker-structured noise covariance σ_n² (Wᵀ W*) ⊗ I. The inverse is
/// applied through the small factor only.
#[derive(Debug, Clone)]
pub struct NoiseCovariance {
    factor: CMat,
    factor_inv: CMat,
    pub sigma_sq: f64,
    inner_dim: usize,
}

impl NoiseCovariance {
    pub fn new(w: &CMat, sigma_sq: f64, inner_dim: usize) -> Result<Self> {
        if !(sigma_sq > 0.0) {
            return Err(Error::InvalidConfig(
                "noise variance must be positive for the CRB".into(),
            ));
        }
        let factor = w.transpose() * w.conjugate();
        let factor_inv = factor
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("Wᵀ W* is singular".into()))?;
        Ok(Self {
            factor,
            factor_inv,
            sigma_sq,
            inner_dim,
        })
    }

    /// The Q_BS × Q_BS Kronecker factor Wᵀ W*.
    pub fn factor(&self) -> &CMat {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows() * self.inner_dim
    }

    /// C⁻¹ v for a vector laid out with the combiner index slowest.
    pub fn apply_inverse(&self, v: &CVec) -> Result<CVec> {
        let q = self.factor.nrows();
        if v.len() != q * self.inner_dim {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} does not match covariance dimension {}",
                v.len(),
                q * self.inner_dim
            )));
        }
        let mut out = CVec::zeros(v.len());
        let scale = 1.0 / self.sigma_sq;
        for qi in 0..q {
            for qj in 0..q {
                let coeff = self.factor_inv[(qi, qj)] * scale;
                if coeff.norm_sqr() == 0.0 {
                    continue;
                }
                let src = qj * self.inner_dim;
                let dst = qi * self.inner_dim;
                for i in 0..self.inner_dim {
                    out[dst + i] += coeff * v[src + i];
                }
            }
        }
        Ok(out)
    }
}

/// Covariance of the combined noise for this acquisition context.
pub fn noise_covariance(cfg: &SystemConfig, ctx: &AcquisitionContext) -> Result<NoiseCovariance> {
    NoiseCovariance::new(
        &ctx.w,
        ctx.noise_var,
        cfg.n_sym * cfg.k_pilot * cfg.m_slots,
    )
}

fn derivative_steering(count: usize, angle: f64, spacing: f64) -> CVec {
    CVec::from_fn(count, |x, _| {
        let xf = x as f64;
        let phase = 2.0 * PI * spacing * xf * angle.cos();
        C64::new(0.0, -2.0 * PI * spacing * xf * angle.sin()) * C64::from_polar(1.0, phase)
    })
}

fn unit_gain_c_column(cfg: &SystemConfig, path: &Path) -> CVec {
    let n = cfg.n_subcarriers_total as f64;
    let fs_tau = cfg.f_s_hz() * path.delay_s;
    let offset = path.doppler_hz / cfg.f_s_hz() * n;
    CVec::from_fn(cfg.k_pilot, |k0, _| {
        C64::from_polar(1.0, -2.0 * PI / n * fs_tau * ((k0 + 1) as f64 - offset))
    })
}

struct PathFibers {
    a: CVec,
    b: CVec,
    c: CVec,
    d: CVec,
}

fn fibers(cfg: &SystemConfig, ctx: &AcquisitionContext, path: &Path) -> Result<PathFibers> {
    Ok(PathFibers {
        a: ctx.w.transpose() * steering_vector(cfg.n_bs, path.aoa_rad, cfg.antenna_spacing_ratio)?,
        b: ctx.s.transpose() * steering_vector(cfg.n_ms, path.aod_rad, cfg.antenna_spacing_ratio)?,
        c: crate::channel::factor_c_column(cfg, path),
        d: crate::channel::factor_d_column(cfg, path),
    })
}

fn chain(a: &CVec, d: &CVec, c: &CVec, b: &CVec) -> CVec {
    kron_vec(&kron_vec(&kron_vec(a, d), c), b)
}

/// Vectorized noiseless observation Σ_l a_l ⊗ d_l ⊗ c_l ⊗ b_l.
pub fn z_vector(cfg: &SystemConfig, ctx: &AcquisitionContext, paths: &[Path]) -> Result<CVec> {
    let len = cfg.q_bs * cfg.m_slots * cfg.k_pilot * cfg.n_sym;
    let mut z = CVec::zeros(len);
    for p in paths {
        let f = fibers(cfg, ctx, p)?;
        z += chain(&f.a, &f.d, &f.c, &f.b);
    }
    Ok(z)
}

/// Analytic derivative of the vectorized observation with respect to one
/// parameter. Only path l's rank-one term depends on its own parameters;
/// the Doppler derivative carries both the mini-slot progression term and
/// the delay-carrier term (the subcarrier fiber's phase 2π f_d τ).
pub fn dz_dparam(
    cfg: &SystemConfig,
    ctx: &AcquisitionContext,
    paths: &[Path],
    which: ParamId,
) -> Result<CVec> {
    let l = match which {
        ParamId::Aoa(l) | ParamId::Aod(l) | ParamId::Delay(l) | ParamId::Gain(l)
        | ParamId::Doppler(l) => l,
    };
    let path = paths.get(l).ok_or_else(|| {
        Error::DimensionMismatch(format!("path index {l} out of range ({})", paths.len()))
    })?;
    let f = fibers(cfg, ctx, path)?;
    let out = match which {
        ParamId::Aoa(_) => {
            let da = ctx.w.transpose()
                * derivative_steering(cfg.n_bs, path.aoa_rad, cfg.antenna_spacing_ratio);
            chain(&da, &f.d, &f.c, &f.b)
        }
        ParamId::Aod(_) => {
            let db = ctx.s.transpose()
                * derivative_steering(cfg.n_ms, path.aod_rad, cfg.antenna_spacing_ratio);
            chain(&f.a, &f.d, &f.c, &db)
        }
        ParamId::Delay(_) => {
            let n = cfg.n_subcarriers_total as f64;
            let f_s = cfg.f_s_hz();
            let dc = CVec::from_fn(cfg.k_pilot, |k0, _| {
                let k = (k0 + 1) as f64;
                C64::new(0.0, -2.0 * PI / n * (k * f_s - n * path.doppler_hz)) * f.c[k0]
            });
            chain(&f.a, &f.d, &dc, &f.b)
        }
        ParamId::Gain(_) => {
            let c_unit = unit_gain_c_column(cfg, path);
            chain(&f.a, &f.d, &c_unit, &f.b)
        }
        ParamId::Doppler(_) => {
            let slot = cfg.mini_slot_duration_s();
            let dd = CVec::from_fn(cfg.m_slots, |m0, _| {
                C64::new(0.0, 2.0 * PI * m0 as f64 * slot) * f.d[m0]
            });
            let progression = chain(&f.a, &dd, &f.c, &f.b);
            let carrier =
                chain(&f.a, &f.d, &f.c, &f.b) * C64::new(0.0, 2.0 * PI * path.delay_s);
            progression + carrier
        }
    };
    Ok(out)
}

/// The parameter order used by [`fim`]: AoAs, AoDs, delays, gains, Dopplers,
/// each block running over paths. In the split mode the gain block is all
/// real parts then all imaginary parts.
pub fn param_order(l_paths: usize, mode: CrbMode) -> Vec<(ParamId, bool)> {
    // the bool marks an imaginary-part column (derivative gets a factor j)
    let mut order = Vec::new();
    for l in 0..l_paths {
        order.push((ParamId::Aoa(l), false));
    }
    for l in 0..l_paths {
        order.push((ParamId::Aod(l), false));
    }
    for l in 0..l_paths {
        order.push((ParamId::Delay(l), false));
    }
    match mode {
        CrbMode::PaperComplexGain => {
            for l in 0..l_paths {
                order.push((ParamId::Gain(l), false));
            }
        }
        CrbMode::RealSplitGain => {
            for l in 0..l_paths {
                order.push((ParamId::Gain(l), false));
            }
            for l in 0..l_paths {
                order.push((ParamId::Gain(l), true));
            }
        }
    }
    for l in 0..l_paths {
        order.push((ParamId::Doppler(l), false));
    }
    order
}

#[derive(Debug, Clone)]
pub struct FimResult {
    pub fim: DMatrix<f64>,
    /// Diagonal of the FIM pseudo-inverse, in [`param_order`] order.
    pub crb_diag: Vec<f64>,
    pub mode: CrbMode,
    /// Numerical rank of the FIM at the pseudo-inverse cutoff.
    pub rank: usize,
}

/// Per-parameter-family CRB sums over paths (variances add across paths,
/// and across the real/imaginary split for the gains).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CrbFamilies {
    pub aoa: f64,
    pub aod: f64,
    pub delay: f64,
    pub gain: f64,
    pub doppler: f64,
}

impl FimResult {
    pub fn families(&self, l_paths: usize) -> CrbFamilies {
        let d = &self.crb_diag;
        let sum = |from: usize, count: usize| d[from..from + count].iter().sum::<f64>();
        let gain_cols = match self.mode {
            CrbMode::PaperComplexGain => l_paths,
            CrbMode::RealSplitGain => 2 * l_paths,
        };
        CrbFamilies {
            aoa: sum(0, l_paths),
            aod: sum(l_paths, l_paths),
            delay: sum(2 * l_paths, l_paths),
            gain: sum(3 * l_paths, gain_cols),
            doppler: sum(3 * l_paths + gain_cols, l_paths),
        }
    }
}

/// Assemble the Fisher information matrix from the analytic derivative
/// stack and invert it (pseudo-inverse with a relative cutoff) for the CRB.
pub fn fim(
    cfg: &SystemConfig,
    ctx: &AcquisitionContext,
    paths: &[Path],
    mode: CrbMode,
) -> Result<FimResult> {
    let cov = noise_covariance(cfg, ctx)?;
    let order = param_order(paths.len(), mode);
    let n = order.len();

    let mut cols: Vec<CVec> = Vec::with_capacity(n);
    let mut whitened: Vec<CVec> = Vec::with_capacity(n);
    for &(id, imag) in &order {
        let mut g = dz_dparam(cfg, ctx, paths, id)?;
        if imag {
            g *= C64::new(0.0, 1.0);
        }
        whitened.push(cov.apply_inverse(&g)?);
        cols.push(g);
    }

    let mut f = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let inner: C64 = cols[i]
                .iter()
                .zip(whitened[j].iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            f[(i, j)] = 2.0 * inner.re;
        }
    }
    // symmetrize round-off
    let f = (&f + f.transpose()) * 0.5;

    // The parameter families live on wildly different scales (seconds vs
    // hertz vs radians), so balance the diagonal to unit before inverting;
    // the cutoff then acts on coupling structure instead of units.
    let diag: Vec<f64> = (0..n).map(|i| f[(i, i)]).collect();
    let balanced_ok = diag.iter().all(|&d| d > 0.0 && d.is_finite());
    let (pinv, rank) = if balanced_ok {
        let scale: Vec<f64> = diag.iter().map(|&d| 1.0 / d.sqrt()).collect();
        let b = DMatrix::<f64>::from_fn(n, n, |i, j| f[(i, j)] * scale[i] * scale[j]);
        let b = (&b + b.transpose()) * 0.5;
        let svd = b.clone().svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let cutoff = 1e-12 * smax;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        let pinv_b = svd
            .pseudo_inverse(cutoff)
            .map_err(|e| Error::Numerical(format!("FIM pseudo-inverse: {e}")))?;
        let pinv = DMatrix::<f64>::from_fn(n, n, |i, j| pinv_b[(i, j)] * scale[i] * scale[j]);
        (pinv, rank)
    } else {
        let svd = f.clone().svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let cutoff = 1e-12 * smax;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        let pinv = svd
            .pseudo_inverse(cutoff)
            .map_err(|e| Error::Numerical(format!("FIM pseudo-inverse: {e}")))?;
        (pinv, rank)
    };
    let crb_diag: Vec<f64> = (0..n).map(|i| pinv[(i, i)]).collect();
    Ok(FimResult {
        fim: f,
        crb_diag,
        mode,
        rank,
    })
}

/// CRB evaluated over an SNR grid with the acquisition front end drawn
/// deterministically from the config seed.
#[derive(Debug, Clone)]
pub struct CrbTable {
    pub snr_db: Vec<f64>,
    pub diag_rows: Vec<Vec<f64>>,
    pub families: Vec<CrbFamilies>,
    pub mode: CrbMode,
}

pub fn crb_curve(
    cfg: &SystemConfig,
    paths: &PathSet,
    snr_grid: &[f64],
    mode: CrbMode,
) -> Result<CrbTable> {
    if snr_grid.is_empty() {
        return Err(Error::InvalidConfig("empty SNR grid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ctx = AcquisitionContext::generate(cfg, &mut rng);
    let p = ctx.pilot_entry_power();
    let var_alpha = gain_variance(cfg)?;
    let mut diag_rows = Vec::with_capacity(snr_grid.len());
    let mut families = Vec::with_capacity(snr_grid.len());
    for &snr_db in snr_grid {
        let snr = 10f64.powf(snr_db / 10.0);
        ctx.noise_var = p * var_alpha / snr;
        let r = fim(cfg, &ctx, paths.paths(), mode)?;
        families.push(r.families(paths.len()));
        diag_rows.push(r.crb_diag);
    }
    Ok(CrbTable {
        snr_db: snr_grid.to_vec(),
        diag_rows,
        families,
        mode,
    })
}
