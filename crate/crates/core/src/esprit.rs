//! ESPRIT-type decomposition of the observation tensor and channel-parameter
//! extraction.
//!
//! The pipeline reshapes the Q_BS × N_s × K × M observation into a
//! third-order tensor [[B⊙A, C, D]], spatially smooths its mode-1 unfolding
//! along the Vandermonde mini-slot factor D, and reads the Doppler
//! generators off the eigenvalues of the shift-invariance relation between
//! two row-shifted blocks of the dominant left subspace. The remaining
//! factors follow by least-squares collapses of the singular subspaces, a
//! rank-one split for the coupled spatial factor, and per-parameter
//! inversions (grid search for angles, adjacent-row phase ratios for
//! delays, scaling-chain resolution for the gains).

use std::f64::consts::PI;

use crate::acquisition::ReceivedTensor;
use crate::channel::{channel_grid, steering_vector, EstimatedPaths, Path, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{cond2, dominant_triplet, eig_small, pinv, svd};
use crate::tensor::{C64, CMat, CVec, DenseTensor};

/// Window/shift split for spatial smoothing: `k4` consecutive mini-slot rows
/// per block, `l4` shifted blocks, with k4 + l4 = M + 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoothingPlan {
    k4: usize,
    l4: usize,
}

impl SmoothingPlan {
    pub fn new(k4: usize, l4: usize, m_slots: usize) -> Result<Self> {
        if k4 + l4 != m_slots + 1 {
            return Err(Error::InvalidConfig(format!(
                "smoothing plan must satisfy k4 + l4 = M + 1, got {k4} + {l4} != {} + 1",
                m_slots
            )));
        }
        if k4 < 2 || l4 < 1 {
            return Err(Error::InvalidConfig(format!(
                "smoothing plan needs k4 >= 2 and l4 >= 1, got ({k4}, {l4})"
            )));
        }
        Ok(Self { k4, l4 })
    }

    /// Balanced split: k4 = ceil((M+1)/2).
    pub fn balanced(m_slots: usize) -> Result<Self> {
        let k4 = (m_slots + 2) / 2;
        let l4 = (m_slots + 1).saturating_sub(k4);
        Self::new(k4, l4, m_slots)
    }

    pub fn k4(&self) -> usize {
        self.k4
    }

    pub fn l4(&self) -> usize {
        self.l4
    }
}

/// How the first entry of a recovered Doppler factor column is anchored.
/// The subspace route re-synthesizes columns starting at the generator; the
/// ALS route leaves columns anchored at one. Downstream scaling resolution
/// needs to know which template to project on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DopplerAnchor {
    GeneratorFirst,
    UnitFirst,
}

/// Recovered CP factors with their common permutation and per-column scaling
/// ambiguity left in place.
#[derive(Debug, Clone)]
pub struct FactorMatrices {
    pub a_hat: CMat,
    pub b_hat: CMat,
    pub c_hat: CMat,
    pub d_hat: CMat,
    /// Unit-modulus Doppler generators, one per recovered column.
    pub eigvals: Vec<C64>,
    pub anchor: DopplerAnchor,
}

/// Two sufficient conditions for a unique Vandermonde-constrained
/// decomposition, evaluated with generic-position k-ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub satisfied: bool,
    /// (K4 − 1) · K against L.
    pub smoothed_rows: usize,
    pub l_paths: usize,
    pub cond_subspace_ok: bool,
    /// min(Q_BS, L) + min(N_s, L) against ceil(L / L4) + 1.
    pub krank_sum: usize,
    pub krank_required: usize,
    pub cond_krank_ok: bool,
}

impl std::fmt::Display for UniquenessReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "uniqueness: {}",
            if self.satisfied { "satisfied" } else { "violated" }
        )?;
        writeln!(
            f,
            "  smoothed subspace rows: (K4-1)*K = {} >= L = {} ... {} (margin {})",
            self.smoothed_rows,
            self.l_paths,
            if self.cond_subspace_ok { "ok" } else { "VIOLATED" },
            self.smoothed_rows as i64 - self.l_paths as i64
        )?;
        write!(
            f,
            "  k-rank sum: k(A)+k(B) = {} >= ceil(L/L4)+1 = {} ... {} (margin {})",
            self.krank_sum,
            self.krank_required,
            if self.cond_krank_ok { "ok" } else { "VIOLATED" },
            self.krank_sum as i64 - self.krank_required as i64
        )
    }
}

/// Evaluate the sufficient uniqueness conditions for the planned smoothing.
pub fn check_uniqueness(
    cfg: &SystemConfig,
    plan: &SmoothingPlan,
    l_paths: usize,
) -> UniquenessReport {
    let smoothed_rows = (plan.k4 - 1) * cfg.k_pilot;
    let cond_subspace_ok = smoothed_rows >= l_paths;
    let krank_sum = cfg.q_bs.min(l_paths) + cfg.n_sym.min(l_paths);
    let krank_required = l_paths.div_ceil(plan.l4) + 1;
    let cond_krank_ok = krank_sum >= krank_required;
    UniquenessReport {
        satisfied: cond_subspace_ok && cond_krank_ok,
        smoothed_rows,
        l_paths,
        cond_subspace_ok,
        krank_sum,
        krank_required,
        cond_krank_ok,
    }
}

/// View the observation as the third-order tensor (Q_BS·N_s) × K × M.
/// The first two modes merge without data movement under first-index-fastest
/// storage.
pub fn reshape_received(t: &ReceivedTensor) -> Result<DenseTensor> {
    let cfg = &t.cfg;
    t.y.reshape(vec![cfg.q_bs * cfg.n_sym, cfg.k_pilot, cfg.m_slots])
}

/// Spatial smoothing of the MK × (Q_BS N_s) mode-1 unfolding: stack the L4
/// mini-slot-shifted row blocks side by side, giving (K4 K) × (L4 Q_BS N_s).
pub fn spatial_smooth(
    x1: &CMat,
    plan: &SmoothingPlan,
    k_pilot: usize,
    m_slots: usize,
) -> Result<CMat> {
    if plan.k4 + plan.l4 != m_slots + 1 {
        return Err(Error::InvalidConfig(
            "smoothing plan does not match the mini-slot count".into(),
        ));
    }
    if x1.nrows() != m_slots * k_pilot {
        return Err(Error::DimensionMismatch(format!(
            "unfolding has {} rows, expected M*K = {}",
            x1.nrows(),
            m_slots * k_pilot
        )));
    }
    let cols = x1.ncols();
    let mut xs = CMat::zeros(plan.k4 * k_pilot, plan.l4 * cols);
    for shift in 0..plan.l4 {
        for m in 0..plan.k4 {
            for k in 0..k_pilot {
                let src_row = (shift + m) * k_pilot + k;
                let dst_row = m * k_pilot + k;
                for c in 0..cols {
                    xs[(dst_row, shift * cols + c)] = x1[(src_row, c)];
                }
            }
        }
    }
    Ok(xs)
}

/// Everything the downstream factor recoveries need from the smoothed
/// matrix: the truncated SVD, the shift-invariance eigenpairs and the
/// normalized Doppler generators.
#[derive(Debug, Clone)]
pub struct GeneratorRecovery {
    /// Unit-modulus generators, one per path.
    pub eigvals: Vec<C64>,
    /// Eigenvalues before the unit-modulus normalization.
    pub raw_eigvals: Vec<C64>,
    /// Eigenvector matrix of the shift-invariance relation.
    pub p: CMat,
    /// First L left singular vectors of the smoothed matrix.
    pub u: CMat,
    /// First L singular values.
    pub sigma: Vec<f64>,
    /// First L right singular vectors (columns).
    pub v: CMat,
    /// σ_{L+1}/σ_L, a model-order diagnostic (0 when unavailable).
    pub rank_gap: f64,
    /// Condition number of the eigenvector matrix.
    pub p_cond: f64,
}

pub fn recover_generators(
    xs: &CMat,
    l_paths: usize,
    k_pilot: usize,
    sv_rel_cutoff: f64,
    cond_limit: f64,
) -> Result<GeneratorRecovery> {
    if l_paths == 0 {
        return Err(Error::InvalidConfig("need at least one path".into()));
    }
    let k4 = xs.nrows() / k_pilot;
    if k4 * k_pilot != xs.nrows() || k4 < 2 {
        return Err(Error::DimensionMismatch(format!(
            "smoothed matrix rows {} are not K4*K with K4 >= 2 (K = {})",
            xs.nrows(),
            k_pilot
        )));
    }
    let parts = svd(xs)?;
    let smax = parts.singular_values.iter().cloned().fold(0.0, f64::max);
    // the rank test cannot resolve below the SVD's own reliability floor
    let rank_cutoff = sv_rel_cutoff.max(crate::linalg::SV_RELIABLE_REL);
    let significant = parts
        .singular_values
        .iter()
        .filter(|&&s| s > rank_cutoff * smax && s > 0.0)
        .count();
    if significant < l_paths {
        return Err(Error::RankDeficient {
            needed: l_paths,
            found: significant,
        });
    }
    // singular values arrive sorted descending
    let mut order: Vec<usize> = (0..parts.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        parts.singular_values[b]
            .partial_cmp(&parts.singular_values[a])
            .unwrap()
    });
    let take: Vec<usize> = order[..l_paths].to_vec();
    let sigma: Vec<f64> = take.iter().map(|&i| parts.singular_values[i]).collect();
    let rank_gap = if l_paths < order.len() {
        parts.singular_values[order[l_paths]] / sigma[l_paths - 1]
    } else {
        0.0
    };
    let mut u = CMat::zeros(xs.nrows(), l_paths);
    let mut v = CMat::zeros(xs.ncols(), l_paths);
    for (c, &i) in take.iter().enumerate() {
        let ucol: CVec = parts.u.column(i).into();
        let vcol: CVec = parts.v.column(i).into();
        u.set_column(c, &ucol);
        v.set_column(c, &vcol);
    }

    let rows_sub = (k4 - 1) * k_pilot;
    let u1 = u.rows(0, rows_sub).into_owned();
    let u2 = u.rows(k_pilot, rows_sub).into_owned();
    let shift = pinv(&u1, sv_rel_cutoff)? * u2;
    let (raw_eigvals, p) = eig_small(&shift)?;

    let p_cond = cond2(&p)?;
    if p_cond > cond_limit {
        return Err(Error::IllConditioned {
            cond: p_cond,
            limit: cond_limit,
        });
    }
    let mut eigvals = Vec::with_capacity(l_paths);
    for &z in &raw_eigvals {
        let n = z.norm();
        if n == 0.0 {
            return Err(Error::Numerical("zero shift-invariance eigenvalue".into()));
        }
        eigvals.push(z / n);
    }
    Ok(GeneratorRecovery {
        eigvals,
        raw_eigvals,
        p,
        u,
        sigma,
        v,
        rank_gap,
        p_cond,
    })
}

/// Vandermonde columns from unit-modulus generators. `GeneratorFirst`
/// starts each column at z (matching the re-synthesized Doppler factor),
/// `UnitFirst` starts at 1.
pub fn vandermonde_from_generators(
    generators: &[C64],
    rows: usize,
    anchor: DopplerAnchor,
) -> CMat {
    CMat::from_fn(rows, generators.len(), |m, l| {
        let exp = match anchor {
            DopplerAnchor::GeneratorFirst => (m + 1) as i32,
            DopplerAnchor::UnitFirst => m as i32,
        };
        generators[l].powi(exp)
    })
}

/// Least-squares collapse of U·p_l over the Kronecker structure
/// (d_l ⊗ c_l): ĉ_l = Σ_i conj(d_l[i]) block_i / ‖d_l‖².
pub fn recover_c(u: &CMat, p: &CMat, d_k4: &CMat) -> Result<CMat> {
    let k4 = d_k4.nrows();
    if !u.nrows().is_multiple_of(k4) {
        return Err(Error::DimensionMismatch(format!(
            "subspace rows {} not divisible by template length {k4}",
            u.nrows()
        )));
    }
    let k = u.nrows() / k4;
    let l = p.ncols();
    let up = u * p;
    let mut c_hat = CMat::zeros(k, l);
    for col in 0..l {
        let t = d_k4.column(col);
        let denom: f64 = t.iter().map(|z| z.norm_sqr()).sum();
        if denom == 0.0 {
            return Err(Error::ZeroNorm(format!("Doppler template column {col}")));
        }
        let mut acc = CVec::zeros(k);
        for i in 0..k4 {
            let w = t[i].conj();
            for r in 0..k {
                acc[r] += w * up[(i * k + r, col)];
            }
        }
        c_hat.set_column(col, &(acc / C64::new(denom, 0.0)));
    }
    Ok(c_hat)
}

/// Recover the coupled spatial factor E = B⊙A from the right singular
/// vectors, then split each column into a rank-one pair by its dominant
/// singular triplet.
pub fn recover_e_and_split(
    v: &CMat,
    sigma: &[f64],
    p: &CMat,
    d_l4: &CMat,
    q_bs: usize,
    n_s: usize,
) -> Result<(CMat, CMat)> {
    let l = p.ncols();
    let l4 = d_l4.nrows();
    if v.nrows() != l4 * q_bs * n_s {
        return Err(Error::DimensionMismatch(format!(
            "right subspace has {} rows, expected L4*Q_BS*N_s = {}",
            v.nrows(),
            l4 * q_bs * n_s
        )));
    }
    let n = p
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Singular("eigenvector matrix is not invertible".into()))?;
    let sig = CMat::from_fn(l, l, |i, j| {
        if i == j {
            C64::new(sigma[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let ve = v.conjugate() * sig * n;

    let block = q_bs * n_s;
    let mut a_hat = CMat::zeros(q_bs, l);
    let mut b_hat = CMat::zeros(n_s, l);
    for col in 0..l {
        let t = d_l4.column(col);
        let denom: f64 = t.iter().map(|z| z.norm_sqr()).sum();
        if denom == 0.0 {
            return Err(Error::ZeroNorm(format!("Doppler template column {col}")));
        }
        let mut e_col = CVec::zeros(block);
        for i in 0..l4 {
            let w = t[i].conj();
            for r in 0..block {
                e_col[r] += w * ve[(i * block + r, col)];
            }
        }
        e_col /= C64::new(denom, 0.0);
        // unvec column-major into Q_BS × N_s, then best rank-one split
        let e_mat = CMat::from_fn(q_bs, n_s, |q, s| e_col[s * q_bs + q]);
        let (s1, u1, v1) = dominant_triplet(&e_mat)?;
        a_hat.set_column(col, &(u1 * C64::new(s1, 0.0)));
        b_hat.set_column(col, &v1.conjugate());
    }
    Ok((a_hat, b_hat))
}

/// Doppler shifts from the principal phases of the generators.
pub fn estimate_doppler(eigvals: &[C64], cfg: &SystemConfig) -> Vec<f64> {
    let scale = 2.0 * PI * cfg.mini_slot_duration_s();
    eigvals.iter().map(|z| z.arg() / scale).collect()
}

fn correlation_metric(col: &CVec, mapped: &CVec) -> f64 {
    let denom: f64 = mapped.iter().map(|z| z.norm_sqr()).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let inner: C64 = col.iter().zip(mapped.iter()).map(|(a, b)| a.conj() * b).sum();
    inner.norm_sqr() / denom
}

fn golden_section_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Correlation-based angle recovery for the columns of a recovered spatial
/// factor. `steering_map_t` is the transposed front end (Wᵀ for the arrival
/// side, Sᵀ for the departure side); the search runs over a uniform grid of
/// `grid_size` interior points of (0, π), optionally followed by one
/// golden-section refinement pass around the coarse argmax.
pub fn estimate_angles(
    cols: &CMat,
    steering_map_t: &CMat,
    spacing_ratio: f64,
    grid_size: usize,
    refine: bool,
) -> Result<Vec<f64>> {
    if grid_size < 2 {
        return Err(Error::InvalidConfig("angle grid needs G >= 2".into()));
    }
    let antennas = steering_map_t.ncols();
    let step = PI / (grid_size + 1) as f64;
    let thetas: Vec<f64> = (0..grid_size).map(|i| step * (i + 1) as f64).collect();
    let mapped: Vec<CVec> = thetas
        .iter()
        .map(|&th| steering_map_t * steering_vector(antennas, th, spacing_ratio).unwrap())
        .collect();

    let mut out = Vec::with_capacity(cols.ncols());
    for l in 0..cols.ncols() {
        let col: CVec = cols.column(l).into();
        if col.norm() == 0.0 {
            return Err(Error::ZeroNorm(format!("spatial factor column {l}")));
        }
        let (best, _) = mapped
            .iter()
            .enumerate()
            .map(|(i, m)| (i, correlation_metric(&col, m)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        let coarse = thetas[best];
        if refine {
            let lo = (coarse - step).max(step * 1e-3);
            let hi = (coarse + step).min(PI - step * 1e-3);
            let refined = golden_section_max(
                |th| {
                    let m = steering_map_t * steering_vector(antennas, th, spacing_ratio).unwrap();
                    correlation_metric(&col, &m)
                },
                lo,
                hi,
                30,
            );
            out.push(refined);
        } else {
            out.push(coarse);
        }
    }
    Ok(out)
}

/// Delays from the least-squares adjacent-row ratio of each recovered
/// subcarrier column: the ratio's phase is −2π f_s τ / N, read modulo one
/// turn into the non-negative delay span.
pub fn estimate_delays(c_hat: &CMat, cfg: &SystemConfig) -> Result<Vec<f64>> {
    let k = c_hat.nrows();
    if k < 2 {
        return Err(Error::InvalidConfig(
            "delay estimation needs at least two pilot subcarriers".into(),
        ));
    }
    let scale = cfg.n_subcarriers_total as f64 / (2.0 * PI * cfg.f_s_hz());
    let mut out = Vec::with_capacity(c_hat.ncols());
    for l in 0..c_hat.ncols() {
        let col = c_hat.column(l);
        let mut num = C64::new(0.0, 0.0);
        let mut den = 0.0;
        for i in 0..k - 1 {
            num += col[i].conj() * col[i + 1];
            den += col[i].norm_sqr();
        }
        if den == 0.0 {
            return Err(Error::ZeroNorm(format!("subcarrier factor column {l}")));
        }
        let mut phase = (num / C64::new(den, 0.0)).arg();
        if phase > 0.0 {
            phase -= 2.0 * PI;
        }
        out.push(-phase * scale);
    }
    Ok(out)
}

fn column_projection(template: &CVec, col: &CVec, what: &str) -> Result<C64> {
    let denom: f64 = template.iter().map(|z| z.norm_sqr()).sum();
    if denom == 0.0 {
        return Err(Error::ZeroNorm(what.into()));
    }
    let inner: C64 = template
        .iter()
        .zip(col.iter())
        .map(|(t, c)| t.conj() * c)
        .sum();
    Ok(inner / C64::new(denom, 0.0))
}

/// Resolve the per-column scaling chain and estimate the complex gains.
///
/// Δ1, Δ2, Δ4 are projections of the recovered columns onto templates
/// rebuilt from the estimated angles and Dopplers; Δ3 follows from the
/// product constraint, and the gain is the projection of the (first-row
/// dropped) delay template onto the recovered subcarrier column, carried
/// back through Δ3 and the Doppler-delay carrier phase.
pub fn resolve_ambiguity_and_gains(
    factors: &FactorMatrices,
    aoas: &[f64],
    aods: &[f64],
    delays: &[f64],
    dopplers: &[f64],
    w: &CMat,
    s: &CMat,
    cfg: &SystemConfig,
) -> Result<EstimatedPaths> {
    let l_paths = factors.a_hat.ncols();
    if [aoas.len(), aods.len(), delays.len(), dopplers.len()]
        .iter()
        .any(|&n| n != l_paths)
    {
        return Err(Error::DimensionMismatch(
            "parameter slices do not match the factor column count".into(),
        ));
    }
    let k = factors.c_hat.nrows();
    if k < 2 {
        return Err(Error::InvalidConfig(
            "gain estimation needs at least two pilot subcarriers".into(),
        ));
    }
    let w_t = w.transpose();
    let s_t = s.transpose();
    let n = cfg.n_subcarriers_total as f64;
    let f_s = cfg.f_s_hz();
    let slot = cfg.mini_slot_duration_s();

    let mut paths = Vec::with_capacity(l_paths);
    for l in 0..l_paths {
        let t_a = &w_t * steering_vector(cfg.n_bs, aoas[l], cfg.antenna_spacing_ratio)?;
        let t_b = &s_t * steering_vector(cfg.n_ms, aods[l], cfg.antenna_spacing_ratio)?;
        let delta1 = column_projection(&t_a, &factors.a_hat.column(l).into(), "arrival template")?;
        let delta2 = column_projection(&t_b, &factors.b_hat.column(l).into(), "departure template")?;

        let z = C64::from_polar(1.0, 2.0 * PI * dopplers[l] * slot);
        let t_d = CVec::from_fn(factors.d_hat.nrows(), |m, _| match factors.anchor {
            DopplerAnchor::GeneratorFirst => z.powi((m + 1) as i32),
            DopplerAnchor::UnitFirst => z.powi(m as i32),
        });
        let delta4 = column_projection(&t_d, &factors.d_hat.column(l).into(), "Doppler template")?;

        let prod = delta1 * delta2 * delta4;
        if prod.norm() == 0.0 {
            return Err(Error::Numerical(format!(
                "vanishing scaling ambiguity on path {l}"
            )));
        }
        // delay template with the first row dropped, against the matching
        // rows of the recovered column
        let t_c = CVec::from_fn(k - 1, |i, _| {
            C64::from_polar(1.0, -2.0 * PI / n * f_s * delays[l] * (i + 2) as f64)
        });
        let c_tail = CVec::from_fn(k - 1, |i, _| factors.c_hat[(i + 1, l)]);
        let proj = column_projection(&t_c, &c_tail, "delay template")?;
        let carrier = C64::from_polar(1.0, -2.0 * PI * dopplers[l] * delays[l]);
        let gain = prod * proj * carrier;

        paths.push(Path {
            aoa_rad: aoas[l],
            aod_rad: aods[l],
            delay_s: delays[l],
            doppler_hz: dopplers[l],
            gain,
        });
    }
    Ok(EstimatedPaths { paths })
}

/// Knobs for the full pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    /// Smoothing split; balanced when unset.
    pub plan: Option<(usize, usize)>,
    /// Angle search grid size.
    pub grid_size: usize,
    /// One golden-section pass around the coarse angle argmax.
    pub refine_angles: bool,
    /// Reject the shift-invariance eigenvector matrix above this condition
    /// number (near-equal Doppler generators).
    pub cond_limit: f64,
    /// Relative singular-value cutoff for rank tests and pseudo-inverses.
    pub sv_rel_cutoff: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            plan: None,
            grid_size: 5000,
            refine_angles: false,
            cond_limit: 1e8,
            sv_rel_cutoff: 1e-12,
        }
    }
}

/// Per-run diagnostics that do not gate the estimate.
#[derive(Debug, Clone)]
pub struct EstimateDiagnostics {
    pub uniqueness: UniquenessReport,
    /// σ_{L+1}/σ_L of the smoothed matrix; near 1 flags under-modeling.
    pub rank_gap: f64,
    pub p_cond: f64,
    /// Moduli of the shift-invariance eigenvalues before normalization.
    pub eigval_moduli: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub paths: EstimatedPaths,
    pub factors: FactorMatrices,
    /// Channel slices rebuilt from the estimated parameters,
    /// indexed (m-1)·K + (k-1).
    pub channels: Vec<CMat>,
    pub diagnostics: EstimateDiagnostics,
}

/// Full pipeline: smoothing, subspace decomposition, factor recovery and
/// parameter extraction.
pub fn estimate(
    t: &ReceivedTensor,
    l_paths: usize,
    opts: &EstimateOptions,
) -> Result<EstimateOutput> {
    let cfg = &t.cfg;
    let plan = match opts.plan {
        Some((k4, l4)) => SmoothingPlan::new(k4, l4, cfg.m_slots)?,
        None => SmoothingPlan::balanced(cfg.m_slots)?,
    };
    let uniqueness = check_uniqueness(cfg, &plan, l_paths);
    if !uniqueness.satisfied {
        // estimation proceeds; the conditions are sufficient, not necessary
        eprintln!("warning: decomposition uniqueness conditions not met\n{uniqueness}");
    }

    let x1 = reshape_received(t)?.mode_n_unfold(1)?;
    let xs = spatial_smooth(&x1, &plan, cfg.k_pilot, cfg.m_slots)?;
    let gen = recover_generators(&xs, l_paths, cfg.k_pilot, opts.sv_rel_cutoff, opts.cond_limit)?;

    let d_hat =
        vandermonde_from_generators(&gen.eigvals, cfg.m_slots, DopplerAnchor::GeneratorFirst);
    let c_templates = vandermonde_from_generators(&gen.eigvals, plan.k4(), DopplerAnchor::UnitFirst);
    let c_hat = recover_c(&gen.u, &gen.p, &c_templates)?;
    let e_templates = vandermonde_from_generators(&gen.eigvals, plan.l4(), DopplerAnchor::UnitFirst);
    let (a_hat, b_hat) =
        recover_e_and_split(&gen.v, &gen.sigma, &gen.p, &e_templates, cfg.q_bs, cfg.n_sym)?;

    let factors = FactorMatrices {
        a_hat,
        b_hat,
        c_hat,
        d_hat,
        eigvals: gen.eigvals.clone(),
        anchor: DopplerAnchor::GeneratorFirst,
    };

    let dopplers = estimate_doppler(&factors.eigvals, cfg);
    let aoas = estimate_angles(
        &factors.a_hat,
        &t.ctx.w.transpose(),
        cfg.antenna_spacing_ratio,
        opts.grid_size,
        opts.refine_angles,
    )?;
    let aods = estimate_angles(
        &factors.b_hat,
        &t.ctx.s.transpose(),
        cfg.antenna_spacing_ratio,
        opts.grid_size,
        opts.refine_angles,
    )?;
    let delays = estimate_delays(&factors.c_hat, cfg)?;
    let paths = resolve_ambiguity_and_gains(
        &factors, &aoas, &aods, &delays, &dopplers, &t.ctx.w, &t.ctx.s, cfg,
    )?;
    let channels = channel_grid(cfg, &paths.paths)?;

    Ok(EstimateOutput {
        paths,
        factors,
        channels,
        diagnostics: EstimateDiagnostics {
            uniqueness,
            rank_gap: gen.rank_gap,
            p_cond: gen.p_cond,
            eigval_moduli: gen.raw_eigvals.iter().map(|z| z.norm()).collect(),
        },
    })
}
