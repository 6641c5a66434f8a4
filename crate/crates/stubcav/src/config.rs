//! Sectioned `key = value` run configuration.
//!
//! Every key has a default, so an empty file is a complete configuration.
//! Unknown sections and keys are rejected, and every error names the
//! offending `section.key`. [`RunConfig::emit`] writes all keys in a fixed
//! order; parsing that text gives back the same configuration.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use stubcav_core::experiment::ThermalParams;
use stubcav_core::mode::{BetaMode, GridSpec};
use stubcav_core::perturbation::FieldSampling;
use stubcav_core::units::{validate_geometry, DEFAULT_Q_EXT};
use stubcav_core::{CavityGeometry, Error as CoreError, MagnetSpec, MaterialParams};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Temperature,
    Ramp,
    Switch,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Temperature => "temperature",
            SweepKind::Ramp => "ramp",
            SweepKind::Switch => "switch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "temperature" => Some(SweepKind::Temperature),
            "ramp" => Some(SweepKind::Ramp),
            "switch" => Some(SweepKind::Switch),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dr: f64,
    pub dz: f64,
    pub beta_mode: BetaMode,
    pub perturbation_average: FieldSampling,
    /// Shift-map spacing, m.
    pub map_step: f64,
    /// Highest sphere-centre height in the shift map, m.
    pub map_z_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dr: 1e-4,
            dz: 1e-4,
            beta_mode: BetaMode::Tm01,
            perturbation_average: FieldSampling::Center,
            map_step: 1e-4,
            map_z_max: 2e-3,
        }
    }
}

impl SolverConfig {
    pub fn grid(&self, g: &CavityGeometry) -> Result<GridSpec, CoreError> {
        GridSpec::covering(g, self.dr, self.dz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub kind: SweepKind,
    pub t_start: f64,
    pub t_stop: f64,
    pub t_step: f64,
    /// One run per power for temperature sweeps, dBm.
    pub powers: Vec<f64>,
    /// Bath temperature of ramps and switching, K.
    pub t_bath: f64,
    pub ramp_start: f64,
    pub ramp_stop: f64,
    pub ramp_step: f64,
    /// Ramp back down after reaching `ramp_stop`.
    pub ramp_return: bool,
    pub switch_high: f64,
    pub switch_lows: Vec<f64>,
    /// Dwell per temperature or ramp point, s.
    pub dwell: f64,
    /// Dwell per switching level, s.
    pub switch_dwell: f64,
    /// Magnet height above the stub top, m.
    pub magnet_z: Option<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            kind: SweepKind::Temperature,
            t_start: 0.135,
            t_stop: 1.0,
            t_step: 0.005,
            powers: vec![-15.0, -5.0, 0.0, 5.0],
            t_bath: 0.785,
            ramp_start: -15.0,
            ramp_stop: 5.0,
            ramp_step: 1.0,
            ramp_return: true,
            switch_high: 5.0,
            switch_lows: vec![-5.0, -4.0, -2.0],
            dwell: 60.0,
            switch_dwell: 300.0,
            magnet_z: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Per-quadrature Gaussian noise on synthetic S21.
    pub sigma: f64,
    pub seed: u64,
    pub trace_points: usize,
    /// Synthetic trace span in loaded linewidths.
    pub trace_span: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma: 1e-3, seed: 0, trace_points: 801, trace_span: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cavity: CavityGeometry,
    pub magnet: MagnetSpec,
    pub material: MaterialParams,
    pub q_ext: f64,
    pub thermal: ThermalParams,
    pub solver: SolverConfig,
    pub protocol: ProtocolConfig,
    pub noise: NoiseConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cavity: CavityGeometry::REFERENCE,
            magnet: MagnetSpec::REFERENCE,
            material: MaterialParams::CALIBRATED,
            q_ext: DEFAULT_Q_EXT,
            thermal: ThermalParams::CALIBRATED,
            solver: SolverConfig::default(),
            protocol: ProtocolConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

const SECTIONS: [&str; 8] = ["cavity", "magnet", "material", "coupling", "thermal", "solver", "protocol", "noise"];

/// Shortest text that parses back to the same `f64`.
fn num(v: f64) -> String {
    let a = v.abs();
    if v != 0.0 && !(1e-3..1e6).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", ")
}

fn parse_num(key: &str, s: &str) -> Result<f64, ConfigError> {
    let v: f64 = s.parse().map_err(|_| err(format!("{key}: expected a number, got '{s}'")))?;
    if !v.is_finite() {
        return Err(err(format!("{key} must be finite")));
    }
    Ok(v)
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>, ConfigError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| parse_num(key, p.trim())).collect()
}

fn parse_bool(key: &str, s: &str) -> Result<bool, ConfigError> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(format!("{key}: expected true or false, got '{s}'"))),
    }
}

fn parse_int<T: std::str::FromStr>(key: &str, s: &str) -> Result<T, ConfigError> {
    s.parse().map_err(|_| err(format!("{key}: expected a non-negative integer, got '{s}'")))
}

impl RunConfig {
    /// Every `(section, key, value)` in emission order.
    fn entries(&self) -> Vec<(&'static str, &'static str, String)> {
        let c = &self.cavity;
        let m = &self.material;
        let t = &self.thermal;
        let s = &self.solver;
        let p = &self.protocol;
        let n = &self.noise;
        let beta = match s.beta_mode {
            BetaMode::Tm01 => "tm01",
            BetaMode::Te11 => "te11",
        };
        let avg = match s.perturbation_average {
            FieldSampling::Center => "center",
            FieldSampling::Volume => "volume",
        };
        vec![
            ("cavity", "outer_radius", num(c.outer_radius)),
            ("cavity", "outer_height", num(c.outer_height)),
            ("cavity", "stub_height", num(c.stub_height)),
            ("cavity", "stub_radius", num(c.stub_radius)),
            ("magnet", "radius", num(self.magnet.radius)),
            ("magnet", "remanence", num(self.magnet.remanence)),
            ("material", "t_c", num(m.t_c)),
            ("material", "lambda0", num(m.lambda0)),
            ("material", "sigma_n", num(m.sigma_n)),
            ("material", "b_c0", num(m.b_c0)),
            ("material", "r_res", num(m.r_res)),
            ("coupling", "q_ext", num(self.q_ext)),
            ("thermal", "r_th", num(t.r_th)),
            ("thermal", "tau_th", num(t.tau_th)),
            ("thermal", "base_t", num(t.base_t)),
            ("thermal", "eta_trap", num(t.eta_trap)),
            ("thermal", "flux_pin_threshold", num(t.flux_pin_threshold)),
            ("solver", "dr", num(s.dr)),
            ("solver", "dz", num(s.dz)),
            ("solver", "beta_mode", beta.into()),
            ("solver", "perturbation_average", avg.into()),
            ("solver", "map_step", num(s.map_step)),
            ("solver", "map_z_max", num(s.map_z_max)),
            ("protocol", "kind", p.kind.name().into()),
            ("protocol", "t_start", num(p.t_start)),
            ("protocol", "t_stop", num(p.t_stop)),
            ("protocol", "t_step", num(p.t_step)),
            ("protocol", "powers", list(&p.powers)),
            ("protocol", "t_bath", num(p.t_bath)),
            ("protocol", "ramp_start", num(p.ramp_start)),
            ("protocol", "ramp_stop", num(p.ramp_stop)),
            ("protocol", "ramp_step", num(p.ramp_step)),
            ("protocol", "ramp_return", p.ramp_return.to_string()),
            ("protocol", "switch_high", num(p.switch_high)),
            ("protocol", "switch_lows", list(&p.switch_lows)),
            ("protocol", "dwell", num(p.dwell)),
            ("protocol", "switch_dwell", num(p.switch_dwell)),
            ("protocol", "magnet_z", p.magnet_z.map_or_else(|| "none".into(), num)),
            ("noise", "sigma", num(n.sigma)),
            ("noise", "seed", n.seed.to_string()),
            ("noise", "trace_points", n.trace_points.to_string()),
            ("noise", "trace_span", num(n.trace_span)),
        ]
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let name = format!("{section}.{key}");
        let k = name.as_str();
        let f = || parse_num(k, value);
        match (section, key) {
            ("cavity", "outer_radius") => self.cavity.outer_radius = f()?,
            ("cavity", "outer_height") => self.cavity.outer_height = f()?,
            ("cavity", "stub_height") => self.cavity.stub_height = f()?,
            ("cavity", "stub_radius") => self.cavity.stub_radius = f()?,
            ("magnet", "radius") => self.magnet.radius = f()?,
            ("magnet", "remanence") => self.magnet.remanence = f()?,
            ("material", "t_c") => self.material.t_c = f()?,
            ("material", "lambda0") => self.material.lambda0 = f()?,
            ("material", "sigma_n") => self.material.sigma_n = f()?,
            ("material", "b_c0") => self.material.b_c0 = f()?,
            ("material", "r_res") => self.material.r_res = f()?,
            ("coupling", "q_ext") => self.q_ext = f()?,
            ("thermal", "r_th") => self.thermal.r_th = f()?,
            ("thermal", "tau_th") => self.thermal.tau_th = f()?,
            ("thermal", "base_t") => self.thermal.base_t = f()?,
            ("thermal", "eta_trap") => self.thermal.eta_trap = f()?,
            ("thermal", "flux_pin_threshold") => self.thermal.flux_pin_threshold = f()?,
            ("solver", "dr") => self.solver.dr = f()?,
            ("solver", "dz") => self.solver.dz = f()?,
            ("solver", "beta_mode") => {
                self.solver.beta_mode = match value {
                    "tm01" => BetaMode::Tm01,
                    "te11" => BetaMode::Te11,
                    _ => return Err(err(format!("{k}: expected tm01 or te11, got '{value}'"))),
                }
            }
            ("solver", "perturbation_average") => {
                self.solver.perturbation_average = match value {
                    "center" => FieldSampling::Center,
                    "volume" => FieldSampling::Volume,
                    _ => return Err(err(format!("{k}: expected center or volume, got '{value}'"))),
                }
            }
            ("solver", "map_step") => self.solver.map_step = f()?,
            ("solver", "map_z_max") => self.solver.map_z_max = f()?,
            ("protocol", "kind") => {
                self.protocol.kind = SweepKind::parse(value)
                    .ok_or_else(|| err(format!("{k}: expected temperature, ramp or switch, got '{value}'")))?
            }
            ("protocol", "t_start") => self.protocol.t_start = f()?,
            ("protocol", "t_stop") => self.protocol.t_stop = f()?,
            ("protocol", "t_step") => self.protocol.t_step = f()?,
            ("protocol", "powers") => self.protocol.powers = parse_list(k, value)?,
            ("protocol", "t_bath") => self.protocol.t_bath = f()?,
            ("protocol", "ramp_start") => self.protocol.ramp_start = f()?,
            ("protocol", "ramp_stop") => self.protocol.ramp_stop = f()?,
            ("protocol", "ramp_step") => self.protocol.ramp_step = f()?,
            ("protocol", "ramp_return") => self.protocol.ramp_return = parse_bool(k, value)?,
            ("protocol", "switch_high") => self.protocol.switch_high = f()?,
            ("protocol", "switch_lows") => self.protocol.switch_lows = parse_list(k, value)?,
            ("protocol", "dwell") => self.protocol.dwell = f()?,
            ("protocol", "switch_dwell") => self.protocol.switch_dwell = f()?,
            ("protocol", "magnet_z") => self.protocol.magnet_z = if value == "none" { None } else { Some(f()?) },
            ("noise", "sigma") => self.noise.sigma = f()?,
            ("noise", "seed") => self.noise.seed = parse_int(k, value)?,
            ("noise", "trace_points") => self.noise.trace_points = parse_int(k, value)?,
            ("noise", "trace_span") => self.noise.trace_span = f()?,
            _ => return Err(err(format!("unknown key {k}"))),
        }
        Ok(())
    }

    /// Canonical text form: every key, fixed order, one section per block.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (section, key, value) in self.entries() {
            if section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// SHA-256 of [`emit`](Self::emit), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.emit().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_geometry(self.cavity, self.magnet).map_err(|e| match e {
            CoreError::Geometry(v) => err(v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")),
            other => err(other.to_string()),
        })?;
        self.material.validate().map_err(|e| err(core_message(&e)))?;
        self.thermal.validate().map_err(|e| err(core_message(&e)))?;
        let positive = [
            ("coupling.q_ext", self.q_ext),
            ("solver.dr", self.solver.dr),
            ("solver.dz", self.solver.dz),
            ("solver.map_step", self.solver.map_step),
            ("solver.map_z_max", self.solver.map_z_max),
            ("protocol.t_start", self.protocol.t_start),
            ("protocol.t_step", self.protocol.t_step),
            ("protocol.t_bath", self.protocol.t_bath),
            ("protocol.ramp_step", self.protocol.ramp_step),
            ("protocol.dwell", self.protocol.dwell),
            ("protocol.switch_dwell", self.protocol.switch_dwell),
            ("noise.trace_span", self.noise.trace_span),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(err(format!("{name} must be > 0")));
            }
        }
        if self.protocol.t_stop < self.protocol.t_start {
            return Err(err("protocol.t_stop must be >= protocol.t_start"));
        }
        if self.protocol.ramp_stop < self.protocol.ramp_start {
            return Err(err("protocol.ramp_stop must be >= protocol.ramp_start"));
        }
        if self.protocol.powers.is_empty() {
            return Err(err("protocol.powers must be non-empty"));
        }
        if self.protocol.switch_lows.is_empty() {
            return Err(err("protocol.switch_lows must be non-empty"));
        }
        if let Some(z) = self.protocol.magnet_z {
            if !(z >= self.magnet.radius) {
                return Err(err("protocol.magnet_z must be >= magnet.radius"));
            }
        }
        if !(self.noise.sigma >= 0.0) {
            return Err(err("noise.sigma must be >= 0"));
        }
        if self.noise.trace_points < 32 {
            return Err(err("noise.trace_points must be >= 32"));
        }
        Ok(())
    }
}

/// Core configuration errors already carry the `section.key` text.
fn core_message(e: &CoreError) -> String {
    match e {
        CoreError::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut section: Option<String> = None;
    let mut seen = std::collections::HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(format!("line {}: malformed section header", lineno + 1)))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(err(format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("line {}: expected key = value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.as_deref().ok_or_else(|| err(format!("key {key} appears before any section")))?;
        if !seen.insert(format!("{sec}.{key}")) {
            return Err(err(format!("duplicate key {sec}.{key}")));
        }
        cfg.set(sec, key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
