//! Scenario files: ray-traced path lists with a small key-value header.
//!
//! Format: comment lines `# key: value` carry the header (format version,
//! carrier frequency, optional transmitter speed and velocity vector),
//! followed by a CSV table with one row per path. The Doppler column may be
//! left empty when the header carries a velocity vector; it is then derived
//! as f_d = f_c (d · v_T) / c with d the azimuth departure direction.
//! Angles are azimuth-only to match the linear-array model; 3D ray data
//! must be pre-projected.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use mmce_core::channel::{Path, PathSet, SPEED_OF_LIGHT};
use mmce_core::eval::fmt_f64;
use mmce_core::tensor::C64;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioHeader {
    pub version: u32,
    pub f_c_hz: f64,
    pub speed_mps: Option<f64>,
    pub v_t_mps: Option<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct ScenarioMeta {
    pub header: ScenarioHeader,
    /// Rows whose parameters had to be nudged to restore distinctness.
    pub perturbed_rows: Vec<usize>,
    /// How many Doppler values were derived from the velocity vector.
    pub derived_dopplers: usize,
}

fn parse_header_line(line: &str, header: &mut ScenarioHeader) -> Result<(), String> {
    let body = line.trim_start_matches('#').trim();
    let Some((key, value)) = body.split_once(':') else {
        return Ok(()); // free-form comment
    };
    let key = key.trim();
    let value = value.trim();
    match key {
        "mmce-scenario-version" => {
            header.version = value
                .parse()
                .map_err(|e| format!("bad version '{value}': {e}"))?;
        }
        "f_c_hz" => {
            header.f_c_hz = value
                .parse()
                .map_err(|e| format!("bad f_c_hz '{value}': {e}"))?;
        }
        "speed_mps" => {
            header.speed_mps = Some(
                value
                    .parse()
                    .map_err(|e| format!("bad speed_mps '{value}': {e}"))?,
            );
        }
        "v_t_mps" => {
            let parts: Vec<&str> = value.split(',').collect();
            if parts.len() != 3 {
                return Err(format!("v_t_mps needs three components, got '{value}'"));
            }
            let mut v = [0.0; 3];
            for (i, p) in parts.iter().enumerate() {
                v[i] = p
                    .trim()
                    .parse()
                    .map_err(|e| format!("bad v_t_mps component '{p}': {e}"))?;
            }
            header.v_t_mps = Some(v);
        }
        _ => {}
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(raw: &str, what: &str, line_no: usize) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e| format!("line {line_no}: bad {what} '{raw}': {e}"))
}

/// Nudge coinciding values apart by steps of at most 1e-9 (in the field's
/// own unit). Returns the indices of rows that moved.
fn enforce_distinct(paths: &mut [Path]) -> Vec<usize> {
    let mut touched = Vec::new();
    #[allow(clippy::type_complexity)]
    let fields: [(fn(&Path) -> f64, fn(&mut Path, f64)); 4] = [
        (|p| p.aoa_rad, |p, v| p.aoa_rad = v),
        (|p| p.aod_rad, |p, v| p.aod_rad = v),
        (|p| p.delay_s, |p, v| p.delay_s = v),
        (|p| p.doppler_hz, |p, v| p.doppler_hz = v),
    ];
    for (get, set) in fields {
        for i in 0..paths.len() {
            let mut bumps = 0u32;
            while paths[..i].iter().any(|q| get(q) == get(&paths[i])) {
                bumps += 1;
                let v = get(&paths[i]) + 1e-9;
                set(&mut paths[i], v);
                if bumps > 64 {
                    break;
                }
            }
            if bumps > 0 && !touched.contains(&i) {
                touched.push(i);
            }
        }
    }
    touched
}

pub fn load_scenario(path: &FsPath) -> Result<(PathSet, ScenarioMeta), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read scenario {}: {e}", path.display()))?;
    let mut header = ScenarioHeader {
        version: SCENARIO_VERSION,
        f_c_hz: 0.0,
        speed_mps: None,
        v_t_mps: None,
    };
    let mut rows: Vec<(usize, Path, bool)> = Vec::new();
    let mut saw_table_header = false;
    let mut derived = 0usize;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            parse_header_line(line, &mut header)?;
            continue;
        }
        if !saw_table_header {
            // first non-comment line is the column header
            saw_table_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(format!(
                "line {line_no}: expected 7 columns, got {}",
                fields.len()
            ));
        }
        let _path_id: usize = parse_field(fields[0], "path_id", line_no)?;
        let aod: f64 = parse_field(fields[1], "aod_azimuth_rad", line_no)?;
        let aoa: f64 = parse_field(fields[2], "aoa_azimuth_rad", line_no)?;
        let delay: f64 = parse_field(fields[3], "delay_s", line_no)?;
        if delay < 0.0 {
            return Err(format!("line {line_no}: negative delay {delay}"));
        }
        let gain_re: f64 = parse_field(fields[4], "gain_re", line_no)?;
        let gain_im: f64 = parse_field(fields[5], "gain_im", line_no)?;
        let doppler = if fields[6].trim().is_empty() {
            None
        } else {
            Some(parse_field::<f64>(fields[6], "doppler_hz", line_no)?)
        };
        let (doppler_hz, was_derived) = match doppler {
            Some(f) => (f, false),
            None => {
                let v = header.v_t_mps.ok_or_else(|| {
                    format!(
                        "line {line_no}: doppler_hz empty and no v_t_mps header to derive it from"
                    )
                })?;
                if header.f_c_hz <= 0.0 {
                    return Err(format!(
                        "line {line_no}: doppler derivation needs a positive f_c_hz header"
                    ));
                }
                let d = [aod.cos(), aod.sin(), 0.0];
                let dot = d[0] * v[0] + d[1] * v[1] + d[2] * v[2];
                derived += 1;
                (header.f_c_hz * dot / SPEED_OF_LIGHT, true)
            }
        };
        rows.push((
            line_no,
            Path {
                aoa_rad: aoa,
                aod_rad: aod,
                delay_s: delay,
                doppler_hz,
                gain: C64::new(gain_re, gain_im),
            },
            was_derived,
        ));
    }
    if rows.is_empty() {
        return Err("scenario has no path rows".to_string());
    }

    let mut paths: Vec<Path> = rows.iter().map(|(_, p, _)| *p).collect();
    let perturbed = enforce_distinct(&mut paths);
    for &i in &perturbed {
        eprintln!(
            "warning: scenario row {} nudged by <=1e-9 to restore distinctness",
            rows[i].0
        );
    }
    let set = PathSet::new(paths).map_err(|e| format!("scenario paths invalid: {e}"))?;
    Ok((
        set,
        ScenarioMeta {
            header,
            perturbed_rows: perturbed,
            derived_dopplers: derived,
        },
    ))
}

pub fn scenario_to_string(paths: &[Path], header: &ScenarioHeader) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# mmce-scenario-version: {}", header.version);
    let _ = writeln!(out, "# f_c_hz: {}", fmt_f64(header.f_c_hz));
    if let Some(v) = header.speed_mps {
        let _ = writeln!(out, "# speed_mps: {}", fmt_f64(v));
    }
    if let Some(v) = header.v_t_mps {
        let _ = writeln!(
            out,
            "# v_t_mps: {},{},{}",
            fmt_f64(v[0]),
            fmt_f64(v[1]),
            fmt_f64(v[2])
        );
    }
    out.push_str("path_id,aod_azimuth_rad,aoa_azimuth_rad,delay_s,gain_re,gain_im,doppler_hz\n");
    for (i, p) in paths.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i,
            fmt_f64(p.aod_rad),
            fmt_f64(p.aoa_rad),
            fmt_f64(p.delay_s),
            fmt_f64(p.gain.re),
            fmt_f64(p.gain.im),
            fmt_f64(p.doppler_hz)
        );
    }
    out
}

pub fn save_scenario(
    path: &FsPath,
    paths: &[Path],
    header: &ScenarioHeader,
) -> Result<(), String> {
    crate::atomic_write(path, scenario_to_string(paths, header).as_bytes())
}
