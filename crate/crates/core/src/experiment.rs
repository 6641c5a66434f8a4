//! Stateful replay of the measurement protocols.
//!
//! Each setpoint is a dwell at fixed bath temperature and drive. The wall
//! temperature relaxes toward `t_bath + r_th * P * 2x(1 - x)` with time
//! constant `tau_th`, where the dissipated fraction depends on the loaded Q
//! at the current wall temperature. After the dwell the quench and trapped
//! flux bookkeeping runs and the record is taken.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::resonance::{dissipated_fraction, operating_point, Calibration, OperatingPoint, WallState};
use crate::superconductor::critical_field;
use crate::units::{dbm_to_watts, MaterialParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    /// Thermal resistance from wall to bath, K/W.
    pub r_th: f64,
    /// Wall relaxation time constant, s.
    pub tau_th: f64,
    /// Base temperature after a warm reset, K.
    pub base_t: f64,
    /// Residual resistance gained per squared tesla of pinned field, ohm/T^2.
    pub eta_trap: f64,
    /// Peak field above which flux is pinned on every dwell, T.
    pub flux_pin_threshold: f64,
}

impl ThermalParams {
    pub const CALIBRATED: Self =
        Self { r_th: 122.0, tau_th: 5.0, base_t: 0.135, eta_trap: 1e8, flux_pin_threshold: 1e-3 };

    pub fn validate(&self) -> Result<()> {
        let positive = [("thermal.r_th", self.r_th), ("thermal.tau_th", self.tau_th), ("thermal.base_t", self.base_t)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(alloc::format!("{name} must be > 0")));
            }
        }
        let non_negative = [("thermal.eta_trap", self.eta_trap), ("thermal.flux_pin_threshold", self.flux_pin_threshold)];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(alloc::format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self::CALIBRATED
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CryostatState {
    pub t_bath: f64,
    /// Wall temperature, K.
    pub t_eff: f64,
    pub r_th: f64,
    /// Accumulated residual resistance from pinned flux, ohm.
    pub trapped_flux_r: f64,
    pub quenched: bool,
    /// Elapsed time, s.
    pub time: f64,
}

impl CryostatState {
    /// Freshly cooled wall in equilibrium with a bath at `t_bath`.
    pub fn equilibrium(t_bath: f64, thermal: &ThermalParams) -> Self {
        Self { t_bath, t_eff: t_bath, r_th: thermal.r_th, trapped_flux_r: 0.0, quenched: false, time: 0.0 }
    }
}

/// Warm-up and cool-down to base: clears pinned flux and the quench flag.
pub fn warm_reset(s: &CryostatState, thermal: &ThermalParams) -> CryostatState {
    CryostatState {
        t_bath: thermal.base_t,
        t_eff: thermal.base_t,
        trapped_flux_r: 0.0,
        quenched: false,
        ..*s
    }
}

/// Explicit exponential relaxation over `dt` toward the steady state for a
/// fixed loaded Q.
pub fn thermal_step(s: &CryostatState, p_in: f64, q_loaded: f64, q_ext: f64, dt: f64, tau_th: f64) -> Result<CryostatState> {
    if !(dt > 0.0) {
        return Err(Error::domain("time step must be > 0"));
    }
    let target = s.t_bath + s.r_th * p_in * dissipated_fraction(q_loaded, q_ext);
    let a = libm::exp(-dt / tau_th);
    Ok(CryostatState { t_eff: target + (s.t_eff - target) * a, time: s.time + dt, ..*s })
}

/// Quench detection and flux pinning after a dwell that ended with peak
/// wall field `b_rf_peak`.
pub fn quench_update(
    s: &CryostatState,
    b_rf_peak: f64,
    bistable: bool,
    mat: &MaterialParams,
    thermal: &ThermalParams,
) -> CryostatState {
    let quench = s.t_eff >= mat.t_c || b_rf_peak >= critical_field(s.t_eff, mat) || bistable;
    let pinned = thermal.eta_trap * b_rf_peak * b_rf_peak;
    let gain = if (quench && !s.quenched) || b_rf_peak > thermal.flux_pin_threshold { pinned } else { 0.0 };
    CryostatState { trapped_flux_r: s.trapped_flux_r + gain, quenched: quench, ..*s }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    TemperatureSweep,
    PowerRamp,
    PowerSwitch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepProtocol {
    pub kind: ProtocolKind,
    /// `(t_bath K, p_in dBm)` per dwell.
    pub setpoints: Vec<(f64, f64)>,
    /// Dwell per setpoint, s.
    pub dwell: f64,
    /// Magnet height above the stub top, m; `None` for the bare cavity.
    pub magnet_z: Option<f64>,
}

/// One minute per temperature or power point.
pub const SWEEP_DWELL: f64 = 60.0;
/// Five minutes per switching level.
pub const SWITCH_DWELL: f64 = 300.0;

impl SweepProtocol {
    pub fn temperature_sweep(t_from: f64, t_to: f64, step: f64, p_dbm: f64) -> Result<Self> {
        if !(step > 0.0) || !(t_to >= t_from) {
            return Err(Error::domain("temperature sweep needs step > 0 and t_to >= t_from"));
        }
        let n = libm::round((t_to - t_from) / step) as usize;
        let setpoints = (0..=n).map(|i| (t_from + step * i as f64, p_dbm)).collect();
        Self::new(ProtocolKind::TemperatureSweep, setpoints, SWEEP_DWELL, None)
    }

    pub fn power_ramp(t_bath: f64, powers: &[f64]) -> Result<Self> {
        let setpoints = powers.iter().map(|&p| (t_bath, p)).collect();
        Self::new(ProtocolKind::PowerRamp, setpoints, SWEEP_DWELL, None)
    }

    /// Integer-dBm ramp from `p_lo` up to `p_hi` and back down.
    pub fn up_down_ramp(t_bath: f64, p_lo: i32, p_hi: i32) -> Result<Self> {
        let up: Vec<f64> = (p_lo..=p_hi).map(f64::from).collect();
        let down = up.iter().rev().skip(1).copied();
        let powers: Vec<f64> = up.iter().copied().chain(down).collect();
        Self::power_ramp(t_bath, &powers)
    }

    /// Alternating dwells: `high`, then each low in turn preceded by `high`.
    pub fn power_switch(t_bath: f64, high: f64, lows: &[f64]) -> Result<Self> {
        let setpoints = lows.iter().flat_map(|&lo| [(t_bath, high), (t_bath, lo)]).collect();
        Self::new(ProtocolKind::PowerSwitch, setpoints, SWITCH_DWELL, None)
    }

    pub fn new(kind: ProtocolKind, setpoints: Vec<(f64, f64)>, dwell: f64, magnet_z: Option<f64>) -> Result<Self> {
        let p = Self { kind, setpoints, dwell, magnet_z };
        p.validate()?;
        Ok(p)
    }

    pub fn with_dwell(mut self, dwell: f64) -> Result<Self> {
        self.dwell = dwell;
        self.validate()?;
        Ok(self)
    }

    pub fn with_magnet(mut self, z: Option<f64>) -> Self {
        self.magnet_z = z;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.setpoints.is_empty() {
            return Err(Error::Config("protocol.setpoints must be non-empty".into()));
        }
        if !(self.dwell > 0.0) || !self.dwell.is_finite() {
            return Err(Error::Config("protocol.dwell must be > 0".into()));
        }
        if self.setpoints.iter().any(|&(t, p)| !(t >= 0.0) || !t.is_finite() || !p.is_finite()) {
            return Err(Error::Config("protocol.setpoints must be finite with t >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub time: f64,
    pub t_bath: f64,
    pub t_eff: f64,
    pub p_in_dbm: f64,
    pub f0: f64,
    pub q_loaded: f64,
    pub q_int: f64,
    pub state: WallState,
    pub trapped_flux_r: f64,
    /// Peak wall field at the end of the dwell, before flux pinning, T.
    pub b_rf_peak: f64,
    pub quenched: bool,
}

/// Fixed substeps per dwell.
pub const DWELL_SUBSTEPS: usize = 20;

/// The driven cavity inside the cryostat.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub calib: Calibration,
    pub thermal: ThermalParams,
}

impl Simulator {
    pub fn new(calib: Calibration, thermal: ThermalParams) -> Result<Self> {
        thermal.validate()?;
        Ok(Self { calib, thermal })
    }

    fn operating(&self, t: f64, p_in: f64, z: Option<f64>, trapped: f64) -> Result<OperatingPoint> {
        operating_point(t, p_in, z, trapped, &self.calib)
    }

    /// Steady-state wall temperature implied by the dissipation at wall
    /// temperature `t`.
    fn heated(&self, t: f64, t_bath: f64, p_in: f64, trapped: f64, r_th: f64) -> Result<f64> {
        let op = self.operating(t, p_in, None, trapped)?;
        Ok(t_bath + r_th * p_in * dissipated_fraction(op.result.q_loaded, self.calib.q_ext))
    }

    /// One implicit relaxation substep: solves `u = a t + (1 - a) T(u)` for
    /// the root nearest `t` in the direction of motion, so a wall that runs
    /// away stops at the first self-consistent temperature it reaches.
    fn relax(&self, s: &CryostatState, p_in: f64, a: f64) -> Result<f64> {
        let (t, tb) = (s.t_eff, s.t_bath);
        let residual = |u: f64| -> Result<f64> {
            Ok(u - a * t - (1.0 - a) * self.heated(u, tb, p_in, s.trapped_flux_r, s.r_th)?)
        };
        let g0 = t - self.heated(t, tb, p_in, s.trapped_flux_r, s.r_th)?;
        if g0 == 0.0 {
            return Ok(t);
        }
        let dir = if g0 > 0.0 { -1.0 } else { 1.0 };
        let crossed = |g: f64| if dir > 0.0 { g >= 0.0 } else { g <= 0.0 };
        let mut step = 1e-7;
        let mut lo = t;
        for _ in 0..200 {
            let mut u = lo + dir * step;
            if dir < 0.0 && u < tb {
                u = tb;
            }
            if crossed(residual(u)?) {
                let mut hi = u;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if crossed(residual(mid)?) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Ok(hi);
            }
            if dir < 0.0 && u <= tb {
                return Ok(tb);
            }
            lo = u;
            step *= 1.4;
        }
        Ok(lo)
    }

    /// Dwell at `(t_bath, p_dbm)` for `dwell` seconds, then record.
    pub fn dwell(
        &self,
        s: &mut CryostatState,
        t_bath: f64,
        p_dbm: f64,
        dwell: f64,
        magnet_z: Option<f64>,
    ) -> Result<SweepRecord> {
        let p_in = dbm_to_watts(p_dbm)?;
        s.t_bath = t_bath;
        s.t_eff = s.t_eff.max(t_bath);
        let a = libm::exp(-dwell / DWELL_SUBSTEPS as f64 / self.thermal.tau_th);
        for _ in 0..DWELL_SUBSTEPS {
            s.t_eff = self.relax(s, p_in, a)?;
        }
        s.time += dwell;
        let end = self.operating(s.t_eff, p_in, magnet_z, s.trapped_flux_r)?;
        *s = quench_update(s, end.b_rf_peak, end.state == WallState::Bistable, &self.calib.material, &self.thermal);
        let op = self.operating(s.t_eff, p_in, magnet_z, s.trapped_flux_r)?;
        Ok(SweepRecord {
            time: s.time,
            t_bath,
            t_eff: s.t_eff,
            p_in_dbm: p_dbm,
            f0: op.result.f0,
            q_loaded: op.result.q_loaded,
            q_int: op.result.q_int,
            state: op.state,
            trapped_flux_r: s.trapped_flux_r,
            b_rf_peak: end.b_rf_peak,
            quenched: s.quenched,
        })
    }

    /// Runs `p` from the given state.
    pub fn run_from(&self, p: &SweepProtocol, s: &mut CryostatState) -> Result<Vec<SweepRecord>> {
        p.validate()?;
        p.setpoints.iter().map(|&(tb, dbm)| self.dwell(s, tb, dbm, p.dwell, p.magnet_z)).collect()
    }

    /// Runs `p` from a freshly cooled wall at the first bath temperature.
    pub fn run_protocol(&self, p: &SweepProtocol) -> Result<Vec<SweepRecord>> {
        p.validate()?;
        let mut s = CryostatState::equilibrium(p.setpoints[0].0, &self.thermal);
        self.run_from(p, &mut s)
    }

    /// Whether a fresh wall at `t_bath` driven at `p_dbm` settles out of the
    /// superconducting state.
    fn goes_normal(&self, t_bath: f64, p_dbm: f64) -> Result<bool> {
        let mut s = CryostatState::equilibrium(t_bath, &self.thermal);
        let mut last = WallState::Superconducting;
        for _ in 0..TRANSITION_DWELLS {
            last = self.dwell(&mut s, t_bath, p_dbm, SWEEP_DWELL, None)?.state;
        }
        Ok(last != WallState::Superconducting)
    }

    /// Lowest bath temperature at which the settled wall is normal, to 1 mK.
    pub fn transition_temperature(&self, p_dbm: f64) -> Result<f64> {
        let mut hi = 1.2 * self.calib.material.t_c;
        if !self.goes_normal(hi, p_dbm)? {
            return Err(Error::NoTransition);
        }
        let mut lo = TRANSITION_SEARCH_FLOOR.min(hi);
        if self.goes_normal(lo, p_dbm)? {
            return Ok(lo);
        }
        while hi - lo > 1e-3 {
            let mid = 0.5 * (lo + hi);
            if self.goes_normal(mid, p_dbm)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// High/low switching at fixed bath temperature from a fresh wall.
    pub fn power_switch_series(&self, high: f64, lows: &[f64], t_bath: f64) -> Result<Vec<SweepRecord>> {
        self.run_protocol(&SweepProtocol::power_switch(t_bath, high, lows)?)
    }
}

/// Dwells used to settle each trial bath temperature.
pub const TRANSITION_DWELLS: usize = 3;
/// Lower end of the transition bisection, K.
pub const TRANSITION_SEARCH_FLOOR: f64 = 0.3;

/// Index of the first record whose loaded Q falls below a tenth of the best
/// Q seen before it, considering only the rising part of the power ramp.
pub fn q_collapse(records: &[SweepRecord]) -> Option<usize> {
    let mut best = f64::NEG_INFINITY;
    for (i, r) in records.iter().enumerate() {
        if i > 0 && r.p_in_dbm < records[i - 1].p_in_dbm {
            break;
        }
        if i > 0 && r.q_loaded < 0.1 * best {
            return Some(i);
        }
        best = best.max(r.q_loaded);
    }
    None
}

/// Qualitative targets for tuning `r_th` and `b_c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTargets {
    /// Desired transition at -15 dBm, K.
    pub transition_low_power: f64,
    /// Allowed band around `transition_low_power`, K.
    pub transition_band: f64,
    /// Required lowering of the transition at +5 dBm, K.
    pub min_power_shift: f64,
    /// Bath temperature of the collapse ramp, K.
    pub collapse_bath: f64,
    /// Allowed collapse powers, dBm.
    pub collapse_window: (f64, f64),
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            transition_low_power: 0.8,
            transition_band: 0.05,
            min_power_shift: 0.03,
            collapse_bath: 0.785,
            collapse_window: (-5.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationCandidate {
    pub r_th: f64,
    pub b_c0: f64,
    pub transition_low: Option<f64>,
    pub transition_high: Option<f64>,
    pub collapse_dbm: Option<f64>,
    pub meets_targets: bool,
    /// Lower is better; distance from the centre of each target.
    pub score: f64,
}

/// Evaluates one `(r_th, b_c0)` pair against the targets.
pub fn evaluate_candidate(base: &Simulator, r_th: f64, b_c0: f64, targets: &CalibrationTargets) -> Result<CalibrationCandidate> {
    let mut sim = base.clone();
    sim.thermal.r_th = r_th;
    sim.calib.material.b_c0 = b_c0;
    sim.calib.material.validate()?;
    let t_low = match sim.transition_temperature(-15.0) {
        Ok(t) => Some(t),
        Err(Error::NoTransition) => None,
        Err(e) => return Err(e),
    };
    let t_high = match sim.transition_temperature(5.0) {
        Ok(t) => Some(t),
        Err(Error::NoTransition) => None,
        Err(e) => return Err(e),
    };
    let ramp = sim.run_protocol(&SweepProtocol::up_down_ramp(targets.collapse_bath, -15, 5)?)?;
    let collapse = q_collapse(&ramp).map(|i| ramp[i].p_in_dbm);
    let (lo, hi) = targets.collapse_window;
    let meets = match (t_low, t_high, collapse) {
        (Some(a), Some(b), Some(c)) => {
            (a - targets.transition_low_power).abs() <= targets.transition_band
                && b <= a - targets.min_power_shift
                && (lo..=hi).contains(&c)
        }
        _ => false,
    };
    let mid = 0.5 * (lo + hi);
    let score = t_low.map_or(f64::INFINITY, |a| (a - targets.transition_low_power).abs() / targets.transition_band)
        + collapse.map_or(f64::INFINITY, |c| (c - mid).abs() / (hi - lo));
    Ok(CalibrationCandidate { r_th, b_c0, transition_low: t_low, transition_high: t_high, collapse_dbm: collapse, meets_targets: meets, score })
}

/// Grid search over `r_th` and `b_c0`; returns every candidate and the index
/// of the best one that meets the targets.
pub fn calibrate(
    base: &Simulator,
    r_th_grid: &[f64],
    b_c0_grid: &[f64],
    targets: &CalibrationTargets,
) -> Result<(Vec<CalibrationCandidate>, Option<usize>)> {
    let mut all = Vec::with_capacity(r_th_grid.len() * b_c0_grid.len());
    for &r in r_th_grid {
        for &b in b_c0_grid {
            all.push(evaluate_candidate(base, r, b, targets)?);
        }
    }
    let best = all
        .iter()
        .enumerate()
        .filter(|(_, c)| c.meets_targets)
        .min_by(|a, b| a.1.score.total_cmp(&b.1.score))
        .map(|(i, _)| i);
    Ok((all, best))
}
