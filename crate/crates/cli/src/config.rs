//! Run configuration: a TOML file sets everything, command-line flags
//! override individual fields.

use serde::{Deserialize, Serialize};

use mmce_core::channel::SystemConfig;
use mmce_core::crb::CrbMode;
use mmce_core::eval::EstimatorKind;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsSection {
    pub l_paths: usize,
    pub speed_mps: f64,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            l_paths: 3,
            speed_mps: 30.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateSection {
    pub grid_size: usize,
    pub refine_angles: bool,
    /// Estimators to run: "esprit" and/or "als".
    pub estimators: Vec<String>,
    /// Assumed model order; defaults to the true path count.
    pub l_paths_est: Option<usize>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            grid_size: 5000,
            refine_angles: false,
            estimators: vec!["esprit".to_string()],
            l_paths_est: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AlsSection {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for AlsSection {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSection {
    /// Sweep axis: snr-db | k-pilot | m-slots | l-paths.
    pub axis: String,
    pub values: Vec<f64>,
    pub trials: usize,
    pub with_crb: bool,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            axis: "snr-db".to_string(),
            values: vec![0.0, 10.0, 20.0],
            trials: 10,
            with_crb: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CrbSection {
    /// "split" (6L real parameters) or "paper" (5L with complex gains).
    pub mode: String,
    pub snr_grid_db: Vec<f64>,
}

impl Default for CrbSection {
    fn default() -> Self {
        Self {
            mode: "split".to_string(),
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub system: SystemConfigSection,
    pub paths: PathsSection,
    pub estimate: EstimateSection,
    pub als: AlsSection,
    pub bench: BenchSection,
    pub crb: CrbSection,
}

/// Infinite SNR (the noiseless sentinel) is not representable as a JSON
/// number, so the field round-trips through a string when non-finite.
mod snr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum NumOrStr {
            Num(f64),
            Str(String),
        }
        match NumOrStr::deserialize(d)? {
            NumOrStr::Num(v) => Ok(v),
            NumOrStr::Str(s) => s
                .trim()
                .parse()
                .map_err(|e| serde::de::Error::custom(format!("bad SNR '{s}': {e}"))),
        }
    }
}

/// Same fields as the library config, wrapped so the TOML file can omit any
/// of them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfigSection {
    pub n_bs: usize,
    pub n_ms: usize,
    pub q_bs: usize,
    pub q_ms: usize,
    pub n_subcarriers_total: usize,
    pub k_pilot: usize,
    pub n_sym: usize,
    pub m_slots: usize,
    pub scs_hz: f64,
    pub f_c_hz: f64,
    pub antenna_spacing_ratio: f64,
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
    pub distance_m: f64,
    pub seed: u64,
}

impl Default for SystemConfigSection {
    fn default() -> Self {
        let c = SystemConfig::desk_scale();
        Self {
            n_bs: c.n_bs,
            n_ms: c.n_ms,
            q_bs: c.q_bs,
            q_ms: c.q_ms,
            n_subcarriers_total: c.n_subcarriers_total,
            k_pilot: c.k_pilot,
            n_sym: c.n_sym,
            m_slots: c.m_slots,
            scs_hz: c.scs_hz,
            f_c_hz: c.f_c_hz,
            antenna_spacing_ratio: c.antenna_spacing_ratio,
            snr_db: c.snr_db,
            distance_m: c.distance_m,
            seed: c.seed,
        }
    }
}

impl RunConfig {
    pub fn system_config(&self) -> SystemConfig {
        let s = &self.system;
        SystemConfig {
            n_bs: s.n_bs,
            n_ms: s.n_ms,
            q_bs: s.q_bs,
            q_ms: s.q_ms,
            n_subcarriers_total: s.n_subcarriers_total,
            k_pilot: s.k_pilot,
            n_sym: s.n_sym,
            m_slots: s.m_slots,
            scs_hz: s.scs_hz,
            f_c_hz: s.f_c_hz,
            antenna_spacing_ratio: s.antenna_spacing_ratio,
            snr_db: s.snr_db,
            distance_m: s.distance_m,
            seed: s.seed,
        }
    }

    pub fn estimator_kinds(&self) -> Result<Vec<EstimatorKind>, String> {
        self.estimate
            .estimators
            .iter()
            .map(|s| match s.as_str() {
                "esprit" => Ok(EstimatorKind::Esprit),
                "als" => Ok(EstimatorKind::Als),
                other => Err(format!("unknown estimator '{other}' (use esprit or als)")),
            })
            .collect()
    }

    pub fn crb_mode(&self) -> Result<CrbMode, String> {
        match self.crb.mode.as_str() {
            "split" => Ok(CrbMode::RealSplitGain),
            "paper" => Ok(CrbMode::PaperComplexGain),
            other => Err(format!("unknown CRB mode '{other}' (use split or paper)")),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("config parse error: {e}"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
