//! Pipeline stages. Each reads its prerequisites from the output directory
//! and writes its own artifacts there.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use stubcav_core::experiment::{calibrate as grid_search, CalibrationTargets, Simulator, SweepProtocol, SweepRecord};
use stubcav_core::mode::{evanescent_beta, solve_bare_mode, ModeField};
use stubcav_core::perturbation::{
    invert_height, slater_shift, sphere_polarizabilities, LevitationCurve, MapGrid, RegionOfInterest, ShiftMap,
};
use stubcav_core::resonance::{
    fit_resonance, frequency_grid, synth_s21, Calibration, FitOptions, ModeSummary, ResonanceResult, TraceMeta,
    WallState,
};
use stubcav_core::PhysicalConstants;

use crate::config::{RunConfig, SweepKind};
use crate::io::{self, num, opt, Table};
use crate::AppError;

pub const MODE_FILE: &str = "mode.csv";
pub const FIELDS_FILE: &str = "fields.csv";
pub const SHIFT_MAP_FILE: &str = "shift_map.csv";
pub const CALIBRATION_FILE: &str = "calibration.csv";
pub const CALIBRATION_SCAN_FILE: &str = "calibration_scan.csv";
pub const RUNS_DIR: &str = "runs";
pub const TRACES_DIR: &str = "traces";
pub const FIT_REPORT_FILE: &str = "fit_report.csv";
pub const HEIGHTS_FILE: &str = "heights.csv";

/// Scale factors applied to the configured `r_th` and `b_c0` in `calibrate`.
/// The configured pair is kept whenever it meets the targets.
pub const R_TH_SCALES: [f64; 3] = [0.8, 1.0, 1.25];
pub const B_C0_SCALES: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub force: bool,
}

impl Context {
    pub fn new(cfg: RunConfig, out: impl Into<PathBuf>, force: bool) -> Self {
        Self { cfg, out: out.into(), force }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, table: &Table) -> Result<PathBuf, AppError> {
        let p = self.path(name);
        io::write_artifact(&p, &table.render(&self.cfg)?, self.force)?;
        Ok(p)
    }

    fn require(&self, name: &str, stage: &str) -> Result<io::ReadTable, AppError> {
        let p = self.path(name);
        if !p.exists() {
            return Err(AppError::Config(format!("{} not found; run cmd_{stage} first", p.display())));
        }
        io::read_table(&p)
    }
}

fn state_name(s: WallState) -> &'static str {
    match s {
        WallState::Superconducting => "SC",
        WallState::Normal => "Normal",
        WallState::Bistable => "Bistable",
    }
}

/// Bare-cavity mode on the configured grid.
pub fn solve_mode(cfg: &RunConfig) -> Result<ModeField, AppError> {
    let grid = cfg.solver.grid(&cfg.cavity)?;
    Ok(solve_bare_mode(&cfg.cavity, &grid, &PhysicalConstants::SI)?)
}

/// Shift map over the stub top, cells evaluated in parallel.
pub fn compute_shift_map(cfg: &RunConfig, mode: &ModeField) -> Result<ShiftMap, AppError> {
    let grid = MapGrid::regular(cfg.cavity.stub_radius, cfg.solver.map_z_max, cfg.solver.map_step)?;
    let pol = sphere_polarizabilities(cfg.magnet.radius, &PhysicalConstants::SI)?;
    let sampling = cfg.solver.perturbation_average;
    let cells = grid
        .positions()
        .into_par_iter()
        .map(|(x, z)| slater_shift(mode, &cfg.cavity, x, z, &pol, sampling))
        .collect();
    Ok(ShiftMap::from_cells(grid, mode.frequency(), cells)?)
}

pub fn cmd_mode_solve(ctx: &Context, fields: bool) -> Result<ModeSummary, AppError> {
    let mode = solve_mode(&ctx.cfg)?;
    let summary = ModeSummary::from_mode(&mode);
    let grid = mode.grid();
    let mut t = Table::new(&["f0_hz", "geometry_factor_ohm", "b_peak_per_root_joule", "residual", "dr_m", "dz_m"]);
    if let Ok(beta) = evanescent_beta(summary.f0, &ctx.cfg.cavity, &PhysicalConstants::SI, ctx.cfg.solver.beta_mode) {
        t.comment(format!("evanescent_beta_per_m = {}", num(beta)));
    }
    t.push(vec![
        num(summary.f0),
        num(summary.geometry_factor),
        num(summary.field_per_root_joule),
        num(mode.residual()),
        num(grid.dr),
        num(grid.dz),
    ]);
    ctx.write(MODE_FILE, &t)?;
    if fields {
        let mut f = Table::new(&["r_m", "z_m", "e_r", "e_z", "h_phi"]);
        for s in mode.cell_samples() {
            f.push(vec![num(s.r), num(s.z), num(s.e_r), num(s.e_z), num(s.h_phi)]);
        }
        ctx.write(FIELDS_FILE, &f)?;
    }
    Ok(summary)
}

pub fn cmd_shift_map(ctx: &Context) -> Result<ShiftMap, AppError> {
    let mode = solve_mode(&ctx.cfg)?;
    let map = compute_shift_map(&ctx.cfg, &mode)?;
    let mut t = Table::new(&["x_mm", "z_mm", "delta_f_hz"]);
    t.comment(format!("f0_ref_hz = {}", num(map.f0_ref)));
    for (iz, &z) in map.z_coords.iter().enumerate() {
        for (ix, &x) in map.x_coords.iter().enumerate() {
            t.push(vec![num(x * 1e3), num(z * 1e3), opt(map.get(ix, iz))]);
        }
    }
    ctx.write(SHIFT_MAP_FILE, &t)?;
    Ok(map)
}

/// Rebuilds a shift map from its CSV form.
pub fn read_shift_map(t: &io::ReadTable) -> Result<ShiftMap, AppError> {
    let f0_ref = io::parse_f64(t.meta("f0_ref_hz").unwrap_or(""), "f0_ref_hz")?;
    let (xi, zi, di) = (t.column("x_mm")?, t.column("z_mm")?, t.column("delta_f_hz")?);
    let mut xs: Vec<f64> = Vec::new();
    let mut zs: Vec<f64> = Vec::new();
    let mut delta_f = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        let x = io::parse_f64(&row[xi], "x_mm")? * 1e-3;
        let z = io::parse_f64(&row[zi], "z_mm")? * 1e-3;
        if !xs.contains(&x) {
            xs.push(x);
        }
        if !zs.contains(&z) {
            zs.push(z);
        }
        delta_f.push(if row[di].is_empty() { None } else { Some(io::parse_f64(&row[di], "delta_f_hz")?) });
    }
    if xs.len() * zs.len() != delta_f.len() {
        return Err(AppError::Io("shift map is not a full grid".into()));
    }
    Ok(ShiftMap { x_coords: xs, z_coords: zs, delta_f, f0_ref })
}

fn read_mode_summary(t: &io::ReadTable) -> Result<ModeSummary, AppError> {
    let row = t.rows.first().ok_or_else(|| AppError::Io("mode.csv has no data row".into()))?;
    let get = |name: &str| -> Result<f64, AppError> { io::parse_f64(&row[t.column(name)?], name) };
    Ok(ModeSummary {
        f0: get("f0_hz")?,
        geometry_factor: get("geometry_factor_ohm")?,
        field_per_root_joule: get("b_peak_per_root_joule")?,
    })
}

pub fn simulator(cfg: &RunConfig, mode: ModeSummary) -> Result<Simulator, AppError> {
    let calib = Calibration::new(mode, &cfg.cavity, cfg.material, cfg.q_ext)?;
    Ok(Simulator::new(calib, cfg.thermal)?)
}

/// Result of the thermal calibration stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOutcome {
    pub mode: ModeSummary,
    pub r_th: f64,
    pub b_c0: f64,
}

pub fn cmd_calibrate(ctx: &Context) -> Result<CalibrationOutcome, AppError> {
    let mode = read_mode_summary(&ctx.require(MODE_FILE, "mode_solve")?)?;
    let base = simulator(&ctx.cfg, mode)?;
    let targets = CalibrationTargets::default();
    let r_grid: Vec<f64> = R_TH_SCALES.iter().map(|s| s * ctx.cfg.thermal.r_th).collect();
    let b_grid: Vec<f64> = B_C0_SCALES.iter().map(|s| s * ctx.cfg.material.b_c0).collect();
    // one grid search per r_th row so rows can run in parallel
    let rows = r_grid
        .par_iter()
        .map(|&r| grid_search(&base, &[r], &b_grid, &targets).map(|(c, _)| c))
        .collect::<Result<Vec<_>, _>>()?;
    let all: Vec<_> = rows.into_iter().flatten().collect();

    let mut scan = Table::new(&[
        "r_th_k_per_w",
        "b_c0_t",
        "transition_low_k",
        "transition_high_k",
        "collapse_dbm",
        "meets_targets",
        "score",
    ]);
    for c in &all {
        scan.push(vec![
            num(c.r_th),
            num(c.b_c0),
            opt(c.transition_low),
            opt(c.transition_high),
            opt(c.collapse_dbm),
            c.meets_targets.to_string(),
            num(c.score),
        ]);
    }
    ctx.write(CALIBRATION_SCAN_FILE, &scan)?;

    let configured = all
        .iter()
        .find(|c| c.meets_targets && c.r_th == ctx.cfg.thermal.r_th && c.b_c0 == ctx.cfg.material.b_c0);
    let best = configured
        .or_else(|| all.iter().filter(|c| c.meets_targets).min_by(|a, b| a.score.total_cmp(&b.score)))
        .ok_or_else(|| AppError::Numerical("no (r_th, b_c0) candidate meets the calibration targets".into()))?;
    let mut t = Table::new(&["parameter", "value"]);
    let mut kv = |k: &str, v: String| t.push(vec![k.to_string(), v]);
    kv("f0_hz", num(mode.f0));
    kv("geometry_factor_ohm", num(mode.geometry_factor));
    kv("b_peak_per_root_joule", num(mode.field_per_root_joule));
    kv("q_ext", num(ctx.cfg.q_ext));
    kv("r_th_k_per_w", num(best.r_th));
    kv("b_c0_t", num(best.b_c0));
    kv("transition_low_k", opt(best.transition_low));
    kv("transition_high_k", opt(best.transition_high));
    kv("collapse_dbm", opt(best.collapse_dbm));
    ctx.write(CALIBRATION_FILE, &t)?;
    Ok(CalibrationOutcome { mode, r_th: best.r_th, b_c0: best.b_c0 })
}

fn read_calibration(t: &io::ReadTable) -> Result<CalibrationOutcome, AppError> {
    let (pi, vi) = (t.column("parameter")?, t.column("value")?);
    let get = |name: &str| -> Result<f64, AppError> {
        let row = t
            .rows
            .iter()
            .find(|r| r[pi] == name)
            .ok_or_else(|| AppError::Io(format!("calibration.csv lacks {name}")))?;
        io::parse_f64(&row[vi], name)
    };
    Ok(CalibrationOutcome {
        mode: ModeSummary {
            f0: get("f0_hz")?,
            geometry_factor: get("geometry_factor_ohm")?,
            field_per_root_joule: get("b_peak_per_root_joule")?,
        },
        r_th: get("r_th_k_per_w")?,
        b_c0: get("b_c0_t")?,
    })
}

/// Command-line overrides of the configured protocol.
#[derive(Debug, Clone, Default)]
pub struct SweepOverrides {
    pub kind: Option<SweepKind>,
    pub powers: Option<Vec<f64>>,
    pub magnet_z: Option<f64>,
    /// Also write a synthetic S21 trace per record.
    pub traces: bool,
}

fn mk(t: f64) -> String {
    format!("{}", (t * 1e3).round())
}

/// `(file stem, protocol)` for every run implied by the configuration.
pub fn protocols(cfg: &RunConfig, kind: SweepKind, magnet_z: Option<f64>) -> Result<Vec<(String, SweepProtocol)>, AppError> {
    let p = &cfg.protocol;
    let runs = match kind {
        SweepKind::Temperature => p
            .powers
            .iter()
            .map(|&dbm| {
                let proto = SweepProtocol::temperature_sweep(p.t_start, p.t_stop, p.t_step, dbm)?.with_dwell(p.dwell)?;
                Ok((format!("temperature_{}dBm", num(dbm)), proto))
            })
            .collect::<Result<Vec<_>, AppError>>()?,
        SweepKind::Ramp => {
            let n = ((p.ramp_stop - p.ramp_start) / p.ramp_step).round() as usize;
            let up: Vec<f64> = (0..=n).map(|i| p.ramp_start + p.ramp_step * i as f64).collect();
            let mut powers = up.clone();
            if p.ramp_return {
                powers.extend(up.iter().rev().skip(1));
            }
            let proto = SweepProtocol::power_ramp(p.t_bath, &powers)?.with_dwell(p.dwell)?;
            vec![(format!("ramp_{}mK", mk(p.t_bath)), proto)]
        }
        SweepKind::Switch => {
            let proto = SweepProtocol::power_switch(p.t_bath, p.switch_high, &p.switch_lows)?.with_dwell(p.switch_dwell)?;
            vec![(format!("switch_{}mK", mk(p.t_bath)), proto)]
        }
    };
    Ok(runs.into_iter().map(|(name, proto)| (name, proto.with_magnet(magnet_z))).collect())
}

pub fn run_table(records: &[SweepRecord], proto: &SweepProtocol) -> Table {
    let mut t = Table::new(&[
        "time_s",
        "t_bath_k",
        "t_eff_k",
        "p_in_dbm",
        "f0_hz",
        "q_loaded",
        "q_int",
        "state",
        "trapped_flux_r_ohm",
    ]);
    t.comment(format!("dwell_s = {}", num(proto.dwell)));
    t.comment(format!("magnet_z_m = {}", opt(proto.magnet_z)));
    for r in records {
        t.push(vec![
            num(r.time),
            num(r.t_bath),
            num(r.t_eff),
            num(r.p_in_dbm),
            num(r.f0),
            num(r.q_loaded),
            num(r.q_int),
            state_name(r.state).into(),
            num(r.trapped_flux_r),
        ]);
    }
    t
}

/// Runs every configured protocol; returns `(file stem, records)` per run.
pub fn cmd_sweep(ctx: &Context, ov: &SweepOverrides) -> Result<Vec<(String, Vec<SweepRecord>)>, AppError> {
    let mut cfg = ctx.cfg.clone();
    if let Some(p) = &ov.powers {
        cfg.protocol.powers = p.clone();
    }
    let kind = ov.kind.unwrap_or(cfg.protocol.kind);
    let magnet_z = ov.magnet_z.or(cfg.protocol.magnet_z);
    cfg.validate()?;

    let cal = read_calibration(&ctx.require(CALIBRATION_FILE, "calibrate")?)?;
    cfg.thermal.r_th = cal.r_th;
    cfg.material.b_c0 = cal.b_c0;
    let mut sim = simulator(&cfg, cal.mode)?;
    if magnet_z.is_some() {
        let map = read_shift_map(&ctx.require(SHIFT_MAP_FILE, "shift_map")?)?;
        sim.calib = sim.calib.clone().with_magnet(LevitationCurve::from_map(&map, &RegionOfInterest::default())?);
    }

    let runs = protocols(&cfg, kind, magnet_z)?;
    let results = runs
        .par_iter()
        .map(|(name, proto)| sim.run_protocol(proto).map(|r| (name.clone(), r)))
        .collect::<Result<Vec<_>, _>>()?;

    for (run_idx, ((name, records), (_, proto))) in results.iter().zip(&runs).enumerate() {
        ctx.write(&format!("{RUNS_DIR}/{name}.csv"), &run_table(records, proto))?;
        if ov.traces {
            for (i, r) in records.iter().enumerate() {
                let res = ResonanceResult::new(r.f0, r.q_int, cfg.q_ext)?;
                let freqs = frequency_grid(&res, cfg.noise.trace_span, cfg.noise.trace_points);
                let meta = TraceMeta { power_dbm: r.p_in_dbm, temperature: r.t_eff, timestamp: r.time };
                let seed = cfg.noise.seed.wrapping_add(((run_idx as u64) << 32) | i as u64);
                let trace = synth_s21(&res, freqs, cfg.noise.sigma, seed, meta)?;
                ctx.write(&format!("{TRACES_DIR}/{name}_{i:04}.csv"), &io::trace_table(&trace))?;
            }
        }
    }
    Ok(results)
}

#[derive(Debug, Clone, Default)]
pub struct FitArgs {
    /// Explicit trace files; empty means every file in `traces/`.
    pub traces: Vec<PathBuf>,
    pub background: bool,
    pub magnitude_only: bool,
}

pub fn cmd_fit(ctx: &Context, args: &FitArgs) -> Result<usize, AppError> {
    let files = if args.traces.is_empty() {
        let dir = ctx.path(TRACES_DIR);
        if !dir.is_dir() {
            return Err(AppError::Config(format!("{} not found; run cmd_sweep --traces first", dir.display())));
        }
        io::csv_files(&dir)?
    } else {
        args.traces.clone()
    };
    if files.is_empty() {
        return Err(AppError::Config("no traces to fit; run cmd_sweep --traces first".into()));
    }
    let opts = FitOptions { background: args.background, magnitude_only: args.magnitude_only, ..FitOptions::default() };
    let rows = files
        .par_iter()
        .map(|p| -> Result<Vec<String>, AppError> {
            let trace = io::read_trace(p)?;
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(match fit_resonance(&trace, &opts) {
                Ok(r) => vec![
                    name,
                    num(r.f0_hat),
                    num(r.q_loaded_hat),
                    num(r.q_ext_hat),
                    num(r.q_int_hat()),
                    num(r.peak_transmission_hat),
                    num(r.residual_rms),
                    num(r.var_f0.sqrt()),
                    num(r.var_q_loaded.sqrt()),
                    num(r.var_q_ext.sqrt()),
                    r.converged.to_string(),
                    r.narrow_span.to_string(),
                    "ok".into(),
                ],
                Err(e) => {
                    let mut row = vec![name];
                    row.extend(std::iter::repeat_n(String::new(), 9));
                    row.extend(["false".into(), "false".into(), e.to_string().replace(',', ";")]);
                    row
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(&[
        "trace",
        "f0_hz",
        "q_loaded",
        "q_ext",
        "q_int",
        "peak_transmission",
        "residual_rms",
        "sd_f0_hz",
        "sd_q_loaded",
        "sd_q_ext",
        "converged",
        "narrow_span",
        "status",
    ]);
    let n = rows.len();
    for r in rows {
        t.push(r);
    }
    ctx.write(FIT_REPORT_FILE, &t)?;
    Ok(n)
}

/// Heights for the given frequencies, or for every successful fit.
pub fn cmd_invert_height(ctx: &Context, freqs: Option<&[f64]>) -> Result<Vec<Result<f64, AppError>>, AppError> {
    let map = read_shift_map(&ctx.require(SHIFT_MAP_FILE, "shift_map")?)?;
    let curve = LevitationCurve::from_map(&map, &RegionOfInterest::default())?;
    let freqs: Vec<f64> = match freqs {
        Some(f) => f.to_vec(),
        None => {
            let t = ctx.require(FIT_REPORT_FILE, "fit")?;
            let (fi, si) = (t.column("f0_hz")?, t.column("status")?);
            t.rows
                .iter()
                .filter(|r| r[si] == "ok")
                .map(|r| io::parse_f64(&r[fi], "f0_hz"))
                .collect::<Result<_, _>>()?
        }
    };
    let mut t = Table::new(&["f_meas_hz", "delta_f_hz", "z_m", "status"]);
    t.comment(format!("f0_ref_hz = {}", num(map.f0_ref)));
    let mut out = Vec::with_capacity(freqs.len());
    for f in freqs {
        let z = invert_height(f, &curve, map.f0_ref).map_err(AppError::from);
        let (zs, status) = match &z {
            Ok(z) => (num(*z), "ok".to_string()),
            Err(e) => (String::new(), e.to_string().replace(',', ";")),
        };
        t.push(vec![num(f), num(f - map.f0_ref), zs, status]);
        out.push(z);
    }
    ctx.write(HEIGHTS_FILE, &t)?;
    Ok(out)
}

/// Directory holding the run files.
pub fn runs_dir(out: &Path) -> PathBuf {
    out.join(RUNS_DIR)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_names_and_lengths() {
        let cfg = RunConfig::default();
        let t = protocols(&cfg, SweepKind::Temperature, None).unwrap();
        let names: Vec<_> = t.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["temperature_-15dBm", "temperature_-5dBm", "temperature_0dBm", "temperature_5dBm"]);
        assert_eq!(t[0].1.setpoints.len(), 174);

        let r = protocols(&cfg, SweepKind::Ramp, None).unwrap();
        assert_eq!(r[0].0, "ramp_785mK");
        assert_eq!(r[0].1.setpoints.len(), 41);
        assert_eq!(r[0].1.setpoints[20].1, 5.0);

        let s = protocols(&cfg, SweepKind::Switch, Some(1e-3)).unwrap();
        assert_eq!(s[0].1.setpoints.len(), 6);
        assert_eq!(s[0].1.dwell, 300.0);
        assert_eq!(s[0].1.magnet_z, Some(1e-3));
    }

    #[test]
    fn missing_prerequisites_name_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = Context::new(RunConfig::default(), dir.path(), false);
        let e = cmd_calibrate(&ctx).unwrap_err();
        assert!(e.to_string().contains("run cmd_mode_solve first"), "{e}");
        let e = cmd_sweep(&ctx, &SweepOverrides::default()).unwrap_err();
        assert!(e.to_string().contains("run cmd_calibrate first"), "{e}");
        let e = cmd_invert_height(&ctx, Some(&[1e10])).unwrap_err();
        assert!(e.to_string().contains("run cmd_shift_map first"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn shift_map_csv_round_trip() {
        let map = ShiftMap {
            x_coords: vec![0.0, 1e-4],
            z_coords: vec![0.0, 1e-4, 2e-4],
            delta_f: vec![None, None, Some(-3.5), Some(1.25e6), Some(-2.0), Some(7.0)],
            f0_ref: 1.0e10,
        };
        let mut t = Table::new(&["x_mm", "z_mm", "delta_f_hz"]);
        t.comment(format!("f0_ref_hz = {}", num(map.f0_ref)));
        for (iz, &z) in map.z_coords.iter().enumerate() {
            for (ix, &x) in map.x_coords.iter().enumerate() {
                t.push(vec![num(x * 1e3), num(z * 1e3), opt(map.get(ix, iz))]);
            }
        }
        let text = t.render(&RunConfig::default()).unwrap();
        let back = read_shift_map(&io::parse_table(&text).unwrap()).unwrap();
        assert_eq!(back.delta_f, map.delta_f);
        assert_eq!(back.f0_ref, map.f0_ref);
        for (a, b) in back.z_coords.iter().zip(&map.z_coords) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
