//! Quality factors, two-port transmission, resonance fitting and the
//! self-consistent operating point of the driven cavity.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mode::{drive_energy, ModeField};
use crate::perturbation::LevitationCurve;
use crate::superconductor::{
    critical_field, kinetic_inductance, resonant_frequency_lumped, superfluid_fraction,
    surface_impedance_for_fraction, InductanceBudget,
};
use crate::units::{dbm_to_watts, CavityGeometry, MaterialParams, PhysicalConstants};

/// `G / R_s`.
pub fn internal_q(geometry_factor: f64, r_s: f64) -> Result<f64> {
    if r_s == 0.0 {
        return Err(Error::LosslessWall);
    }
    if !(geometry_factor > 0.0) || !(r_s > 0.0) {
        return Err(Error::domain("geometry factor and surface resistance must be > 0"));
    }
    Ok(geometry_factor / r_s)
}

/// `(1/q_int + 2/q_ext)^-1` for two identical ports.
pub fn loaded_q(q_int: f64, q_ext: f64) -> Result<f64> {
    if !(q_int > 0.0) || !(q_ext > 0.0) {
        return Err(Error::domain("quality factors must be > 0"));
    }
    Ok(1.0 / (1.0 / q_int + 2.0 / q_ext))
}

/// On-resonance transmission `x = 2 q_loaded / q_ext`.
pub fn peak_transmission(q_loaded: f64, q_ext: f64) -> f64 {
    2.0 * q_loaded / q_ext
}

/// Fraction of the incident power dissipated in the walls at resonance,
/// `2x(1 - x)`.
pub fn dissipated_fraction(q_loaded: f64, q_ext: f64) -> f64 {
    let x = peak_transmission(q_loaded, q_ext);
    2.0 * x * (1.0 - x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceResult {
    pub f0: f64,
    pub q_int: f64,
    /// Per port; both ports are identical.
    pub q_ext: f64,
    pub q_loaded: f64,
}

impl ResonanceResult {
    pub fn new(f0: f64, q_int: f64, q_ext: f64) -> Result<Self> {
        if !(f0 > 0.0) || !f0.is_finite() {
            return Err(Error::domain("resonance frequency must be > 0"));
        }
        let q_loaded = loaded_q(q_int, q_ext)?;
        Ok(Self { f0, q_int, q_ext, q_loaded })
    }

    pub fn peak_transmission(&self) -> f64 {
        peak_transmission(self.q_loaded, self.q_ext)
    }

    /// Full width at half power, Hz.
    pub fn linewidth(&self) -> f64 {
        self.f0 / self.q_loaded
    }

    pub fn transmission(&self, f: f64) -> Complex64 {
        lorentzian(f, self.f0, self.q_loaded, self.peak_transmission())
    }
}

fn lorentzian(f: f64, f0: f64, q: f64, x: f64) -> Complex64 {
    let d = Complex64::new(1.0, 2.0 * q * (f - f0) / f0);
    Complex64::new(x, 0.0) / d
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraceMeta {
    pub power_dbm: f64,
    pub temperature: f64,
    /// Seconds since the start of the run.
    pub timestamp: f64,
}

pub const MIN_TRACE_POINTS: usize = 32;

/// A transmission trace as a network analyzer would record it.
#[derive(Debug, Clone, PartialEq)]
pub struct S21Trace {
    freqs: Vec<f64>,
    s21: Vec<Complex64>,
    pub meta: TraceMeta,
}

impl S21Trace {
    pub fn new(freqs: Vec<f64>, s21: Vec<Complex64>, meta: TraceMeta) -> Result<Self> {
        if freqs.len() != s21.len() {
            return Err(Error::domain("trace frequency and S21 lengths differ"));
        }
        if freqs.len() < MIN_TRACE_POINTS {
            return Err(Error::domain(format!("trace needs at least {MIN_TRACE_POINTS} points")));
        }
        if freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("trace frequencies must be strictly increasing"));
        }
        if s21.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("trace contains non-finite S21"));
        }
        Ok(Self { freqs, s21, meta })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn s21(&self) -> &[Complex64] {
        &self.s21
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.freqs[self.freqs.len() - 1] - self.freqs[0]
    }
}

/// `n` evenly spaced frequencies covering `linewidths` loaded linewidths
/// around the resonance.
pub fn frequency_grid(res: &ResonanceResult, linewidths: f64, n: usize) -> Vec<f64> {
    let half = 0.5 * linewidths * res.linewidth();
    let step = 2.0 * half / (n.max(2) - 1) as f64;
    (0..n).map(|i| res.f0 - half + step * i as f64).collect()
}

/// Noisy Lorentzian transmission; each quadrature gets independent Gaussian
/// noise of standard deviation `noise_sigma`.
pub fn synth_s21(
    res: &ResonanceResult,
    freqs: Vec<f64>,
    noise_sigma: f64,
    seed: u64,
    meta: TraceMeta,
) -> Result<S21Trace> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::domain("noise sigma must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s21 = freqs
        .iter()
        .map(|&f| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            res.transmission(f) + Complex64::new(noise_sigma * re, noise_sigma * im)
        })
        .collect();
    S21Trace::new(freqs, s21, meta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialGuess {
    pub f0: f64,
    pub q_loaded: f64,
    pub peak_transmission: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Adds a complex linear background `a + b (f - f_center) / span`.
    pub background: bool,
    /// Fits `|S21|` only.
    pub magnitude_only: bool,
    /// Largest residual RMS a converged fit may have.
    pub residual_ceiling: f64,
    pub max_iter: usize,
    pub initial_guess: Option<InitialGuess>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { background: false, magnitude_only: false, residual_ceiling: 0.05, max_iter: 200, initial_guess: None }
    }
}

/// Spans narrower than this many loaded linewidths are flagged.
pub const MIN_SPAN_LINEWIDTHS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub f0_hat: f64,
    pub q_loaded_hat: f64,
    pub q_ext_hat: f64,
    pub peak_transmission_hat: f64,
    /// RMS of the residual over all real components.
    pub residual_rms: f64,
    pub var_f0: f64,
    pub var_q_loaded: f64,
    pub var_q_ext: f64,
    pub converged: bool,
    pub iterations: usize,
    pub narrow_span: bool,
}

impl FitReport {
    pub fn q_int_hat(&self) -> f64 {
        1.0 / (1.0 / self.q_loaded_hat - 2.0 / self.q_ext_hat)
    }
}

/// Initial guess from the magnitude peak and its half-power width.
pub fn estimate_guess(trace: &S21Trace) -> InitialGuess {
    let f = trace.freqs();
    let mag: Vec<f64> = trace.s21().iter().map(|z| z.norm()).collect();
    let (ipk, &peak) = mag.iter().enumerate().fold((0, &mag[0]), |acc, (i, m)| if *m > *acc.1 { (i, m) } else { acc });
    let half = peak / core::f64::consts::SQRT_2;
    let crossing = |range: &mut dyn Iterator<Item = usize>, step: isize| -> Option<f64> {
        for i in range {
            let j = (i as isize - step) as usize;
            if mag[i] < half {
                let t = (half - mag[i]) / (mag[j] - mag[i]);
                return Some(f[i] + t * (f[j] - f[i]));
            }
        }
        None
    };
    let lo = crossing(&mut (0..ipk).rev(), -1);
    let hi = crossing(&mut (ipk + 1..f.len()), 1);
    let f0 = f[ipk];
    let width = match (lo, hi) {
        (Some(a), Some(b)) => b - a,
        (Some(a), None) => 2.0 * (f0 - a),
        (None, Some(b)) => 2.0 * (b - f0),
        (None, None) => trace.span(),
    };
    let width = width.max(f[1] - f[0]);
    InitialGuess { f0, q_loaded: f0 / width, peak_transmission: peak }
}

struct Model<'a> {
    trace: &'a S21Trace,
    opts: &'a FitOptions,
    center: f64,
    span: f64,
}

impl Model<'_> {
    fn n_params(&self) -> usize {
        if self.opts.background { 7 } else { 3 }
    }

    fn n_residuals(&self) -> usize {
        if self.opts.magnitude_only { self.trace.len() } else { 2 * self.trace.len() }
    }

    /// Complex model value and its derivatives at one frequency.
    fn eval(&self, p: &[f64], f: f64, grad: &mut [Complex64]) -> Complex64 {
        let (f0, q, x) = (p[0], p[1], p[2]);
        let d = Complex64::new(1.0, 2.0 * q * (f - f0) / f0);
        let inv = d.inv();
        let inv2 = inv * inv;
        let j = Complex64::i();
        let mut s = inv * x;
        grad[0] = j * (x * 2.0 * q * f / (f0 * f0)) * inv2;
        grad[1] = -j * (x * 2.0 * (f - f0) / f0) * inv2;
        grad[2] = inv;
        if self.opts.background {
            let u = (f - self.center) / self.span;
            s += Complex64::new(p[3] + p[5] * u, p[4] + p[6] * u);
            grad[3] = Complex64::new(1.0, 0.0);
            grad[4] = j;
            grad[5] = Complex64::new(u, 0.0);
            grad[6] = j * u;
        }
        s
    }

    fn residuals(&self, p: &[f64], r: &mut DVector<f64>, jac: Option<&mut DMatrix<f64>>) {
        let n = self.n_params();
        let mut grad = [Complex64::new(0.0, 0.0); 7];
        let mut jac = jac;
        for (k, (&f, &y)) in self.trace.freqs().iter().zip(self.trace.s21()).enumerate() {
            let s = self.eval(p, f, &mut grad[..n]);
            if self.opts.magnitude_only {
                let m = s.norm();
                r[k] = m - y.norm();
                if let Some(jm) = jac.as_deref_mut() {
                    for c in 0..n {
                        jm[(k, c)] = if m > 0.0 { (s.conj() * grad[c]).re / m } else { 0.0 };
                    }
                }
            } else {
                r[2 * k] = s.re - y.re;
                r[2 * k + 1] = s.im - y.im;
                if let Some(jm) = jac.as_deref_mut() {
                    for c in 0..n {
                        jm[(2 * k, c)] = grad[c].re;
                        jm[(2 * k + 1, c)] = grad[c].im;
                    }
                }
            }
        }
    }
}

/// Levenberg-Marquardt least squares of the Lorentzian transmission model.
pub fn fit_resonance(trace: &S21Trace, opts: &FitOptions) -> Result<FitReport> {
    let guess = opts.initial_guess.unwrap_or_else(|| estimate_guess(trace));
    if !(guess.f0 > 0.0 && guess.q_loaded > 0.0 && guess.peak_transmission > 0.0) {
        return Err(Error::domain("initial guess must be positive"));
    }
    let model = Model {
        trace,
        opts,
        center: 0.5 * (trace.freqs()[0] + trace.freqs()[trace.len() - 1]),
        span: trace.span(),
    };
    let (m, n) = (model.n_residuals(), model.n_params());
    let mut p = vec![0.0; n];
    p[0] = guess.f0;
    p[1] = guess.q_loaded;
    p[2] = guess.peak_transmission;

    let mut r = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, n);
    model.residuals(&p, &mut r, Some(&mut jac));
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut r_trial = DVector::zeros(m);

    while iterations < opts.max_iter {
        iterations += 1;
        let g = jac.transpose() * &r;
        let jtj = jac.transpose() * &jac;
        let scale: Vec<f64> = (0..n).map(|i| libm::sqrt(jtj[(i, i)]).max(1e-300)).collect();
        // cosine between the residual and the column space
        let cosine = (0..n).map(|i| (g[i] / scale[i]).abs()).fold(0.0, f64::max) / libm::sqrt(cost).max(1e-300);
        if cosine < 1e-10 || cost <= 1e-30 * m as f64 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] = jtj[(i, j)] / (scale[i] * scale[j]);
                }
                a[(i, i)] += lambda;
            }
            let rhs = DVector::from_iterator(n, (0..n).map(|i| -g[i] / scale[i]));
            let Some(step) = a.cholesky().map(|c| c.solve(&rhs)) else {
                lambda *= 4.0;
                continue;
            };
            for i in 0..n {
                trial[i] = p[i] + step[i] / scale[i];
            }
            if !(trial[0] > 0.0 && trial[1] > 0.0) {
                lambda *= 4.0;
                continue;
            }
            model.residuals(&trial, &mut r_trial, None);
            let c = r_trial.norm_squared();
            if c.is_finite() && c < cost {
                let small = (0..n).all(|i| (trial[i] - p[i]).abs() <= 1e-14 * (p[i].abs() + 1e-300));
                p.copy_from_slice(&trial);
                cost = c;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left at machine precision
            converged = true;
            break;
        }
        model.residuals(&p, &mut r, Some(&mut jac));
        if converged {
            break;
        }
    }

    let residual_rms = libm::sqrt(cost / m as f64);
    let dof = (m.saturating_sub(n)).max(1) as f64;
    let sigma2 = cost / dof;
    let jtj = jac.transpose() * &jac;
    let cov = jtj.try_inverse().map(|c| c * sigma2);
    let (var_f0, var_q, var_q_ext) = match cov {
        Some(c) => {
            let (q, x) = (p[1], p[2]);
            let (dq, dx) = (2.0 / x, -2.0 * q / (x * x));
            let vqe = dq * dq * c[(1, 1)] + dx * dx * c[(2, 2)] + 2.0 * dq * dx * c[(1, 2)];
            (c[(0, 0)], c[(1, 1)], vqe.max(0.0))
        }
        None => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
    };
    let converged = converged && residual_rms <= opts.residual_ceiling;
    Ok(FitReport {
        f0_hat: p[0],
        q_loaded_hat: p[1],
        q_ext_hat: 2.0 * p[1] / p[2],
        peak_transmission_hat: p[2],
        residual_rms,
        var_f0,
        var_q_loaded: var_q,
        var_q_ext,
        converged,
        iterations,
        narrow_span: trace.span() < MIN_SPAN_LINEWIDTHS * p[0] / p[1],
    })
}

/// The numbers the operating point needs from a solved mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSummary {
    pub f0: f64,
    /// `G`, ohm.
    pub geometry_factor: f64,
    /// Peak wall field `mu0 H_max` per square root of stored energy, T/sqrt(J).
    pub field_per_root_joule: f64,
}

impl ModeSummary {
    pub fn from_mode(mode: &ModeField) -> Self {
        let k = PhysicalConstants::SI;
        Self {
            f0: mode.frequency(),
            geometry_factor: mode.geometry_factor(),
            field_per_root_joule: k.mu0 * mode.surface_h_max() / libm::sqrt(mode.stored_energy()),
        }
    }
}

/// Everything needed to turn (temperature, power, magnet height) into an
/// observable resonance.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub mode: ModeSummary,
    pub material: MaterialParams,
    pub q_ext: f64,
    pub budget: InductanceBudget,
    /// On-axis magnet shift versus height; `None` for the bare cavity.
    pub magnet: Option<LevitationCurve>,
    pub consts: PhysicalConstants,
}

impl Calibration {
    /// The kinetic share is fixed by the wall reactance at zero temperature:
    /// `L_k / L_g = w mu0 lambda0 / G`.
    pub fn new(mode: ModeSummary, geometry: &CavityGeometry, material: MaterialParams, q_ext: f64) -> Result<Self> {
        material.validate()?;
        if !(q_ext > 0.0) {
            return Err(Error::Config("coupling.q_ext must be > 0".into()));
        }
        let k = PhysicalConstants::SI;
        let omega = 2.0 * PI * mode.f0;
        let l_geom = k.mu0 / (2.0 * PI) * libm::log(geometry.outer_radius / geometry.stub_radius) * geometry.stub_height;
        let ratio = omega * k.mu0 * material.lambda0 / mode.geometry_factor;
        let budget = InductanceBudget::anchored(mode.f0, l_geom, ratio)?;
        Ok(Self { mode, material, q_ext, budget, magnet: None, consts: k })
    }

    pub fn with_magnet(mut self, curve: LevitationCurve) -> Self {
        self.magnet = Some(curve);
        self
    }

    pub fn kinetic_ratio(&self) -> f64 {
        self.budget.l_kin / self.budget.l_geom
    }

    /// Frequency shift from the magnet at height `z`; zero without a magnet.
    pub fn magnet_shift(&self, z: Option<f64>) -> Result<f64> {
        match (z, &self.magnet) {
            (None, _) => Ok(0.0),
            (Some(z), Some(curve)) => curve.shift_at(z),
            (Some(_), None) => Err(Error::Precondition("magnet height given but no shift map calibrated".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WallState {
    Superconducting,
    Normal,
    /// The field-suppression loop did not settle; observables are those of
    /// the normal branch.
    Bistable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub result: ResonanceResult,
    pub state: WallState,
    pub pair_fraction: f64,
    /// Peak wall field of the superconducting branch, T.
    pub b_rf_peak: f64,
    /// Last two pair-fraction iterates of the fixed point.
    pub iterates: (f64, f64),
}

struct Branch {
    result: ResonanceResult,
    b: f64,
}

fn branch(x: f64, p_in: f64, trapped_r: f64, shift: f64, c: &Calibration) -> Result<Branch> {
    let f_mode = c.mode.f0;
    let zs = surface_impedance_for_fraction(x, f_mode, &c.material, &c.consts)?;
    let r_s = if x > 0.0 { zs.r_s + trapped_r } else { zs.r_s };
    let q_int = internal_q(c.mode.geometry_factor, r_s)?;
    let q_l = loaded_q(q_int, c.q_ext)?;
    let b = c.mode.field_per_root_joule * libm::sqrt(drive_energy(p_in, q_l, c.q_ext, f_mode));
    let lambda_eff = zs.x_s / (2.0 * PI * f_mode * c.consts.mu0);
    let budget = InductanceBudget {
        l_kin: kinetic_inductance(lambda_eff, &c.budget, c.material.lambda0)?,
        ..c.budget
    };
    let f0 = resonant_frequency_lumped(&budget)? + shift;
    Ok(Branch { result: ResonanceResult::new(f0, q_int, c.q_ext)?, b })
}

pub const FIXED_POINT_TOL: f64 = 1e-9;
pub const FIXED_POINT_MAX_ITER: usize = 100;

/// Self-consistent operating point for wall temperature `t`, drive `p_in`
/// (W) and an extra surface resistance `trapped_r` from pinned flux.
///
/// The pair fraction is relaxed with damping 0.5 toward the value implied by
/// the field that the current `Q` produces.
pub fn operating_point(
    t: f64,
    p_in: f64,
    magnet_z: Option<f64>,
    trapped_r: f64,
    c: &Calibration,
) -> Result<OperatingPoint> {
    if !(p_in >= 0.0) || !p_in.is_finite() {
        return Err(Error::domain("drive power must be finite and >= 0"));
    }
    if !(trapped_r >= 0.0) {
        return Err(Error::domain("trapped-flux resistance must be >= 0"));
    }
    let shift = c.magnet_shift(magnet_z)?;
    let x_t = superfluid_fraction(t, c.material.t_c)?;
    let normal = |iterates| -> Result<OperatingPoint> {
        let n = branch(0.0, p_in, trapped_r, shift, c)?;
        Ok(OperatingPoint { result: n.result, state: WallState::Normal, pair_fraction: 0.0, b_rf_peak: n.b, iterates })
    };
    if x_t <= 0.0 {
        return normal((0.0, 0.0));
    }
    let b_c = critical_field(t, &c.material);
    let mut x = x_t;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let b = branch(x, p_in, trapped_r, shift, c)?.b;
        let ratio = b / b_c;
        let target = x_t * (1.0 - ratio * ratio).max(0.0);
        let next = 0.5 * x + 0.5 * target;
        if (next - x).abs() <= FIXED_POINT_TOL * next.max(1e-300) {
            let sc = branch(next, p_in, trapped_r, shift, c)?;
            return Ok(OperatingPoint {
                result: sc.result,
                state: WallState::Superconducting,
                pair_fraction: next,
                b_rf_peak: sc.b,
                iterates: (x, next),
            });
        }
        if target == 0.0 && next < 1e-12 * x_t {
            let n = branch(0.0, p_in, trapped_r, shift, c)?;
            if n.b >= b_c {
                return normal((x, next));
            }
        }
        x = next;
    }
    let last = branch(x, p_in, trapped_r, shift, c)?;
    let n = branch(0.0, p_in, trapped_r, shift, c)?;
    Ok(OperatingPoint {
        result: n.result,
        state: WallState::Bistable,
        pair_fraction: 0.0,
        b_rf_peak: last.b,
        iterates: (x, 0.0),
    })
}

/// Observable resonance at wall temperature `t` and drive `p_dbm`, with no
/// trapped flux. A fixed point that does not settle is an error.
pub fn observable_state(t: f64, p_dbm: f64, magnet_z: Option<f64>, c: &Calibration) -> Result<ResonanceResult> {
    let p = if p_dbm == f64::NEG_INFINITY { 0.0 } else { dbm_to_watts(p_dbm)? };
    let op = operating_point(t, p, magnet_z, 0.0, c)?;
    match op.state {
        WallState::Bistable => Err(Error::Bistable { first: op.iterates.0, second: op.iterates.1 }),
        _ => Ok(op.result),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn summary() -> ModeSummary {
        ModeSummary { f0: 10.0e9, geometry_factor: 110.0, field_per_root_joule: 4.4 }
    }

    fn material() -> MaterialParams {
        MaterialParams { t_c: 0.805, lambda0: 390e-9, sigma_n: 3.24e5, b_c0: 10e-3, r_res: 2e-9 }
    }

    fn calibration() -> Calibration {
        Calibration::new(summary(), &CavityGeometry::REFERENCE, material(), 9400.0).unwrap()
    }

    #[test]
    fn internal_q_examples() {
        assert_relative_eq!(internal_q(100.0, 100e-9).unwrap(), 1e9, max_relative = 1e-12);
        let q1 = internal_q(100.0, 1e-6).unwrap();
        let q2 = internal_q(100.0, 2e-6).unwrap();
        assert_relative_eq!(q1, 2.0 * q2, max_relative = 1e-12);
        assert_eq!(internal_q(100.0, 0.0), Err(Error::LosslessWall));
        assert_eq!(Error::LosslessWall.to_string(), "lossless wall: Q undefined");
    }

    #[test]
    fn loaded_q_examples() {
        assert_relative_eq!(loaded_q(1e6, 1e6).unwrap(), 1e6 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(loaded_q(1e30, 1e6).unwrap(), 5e5, max_relative = 1e-12);
    }

    #[test]
    fn internal_q_falls_with_temperature() {
        let c = calibration();
        let q = |t: f64| operating_point(t, 0.0, None, 0.0, &c).unwrap().result.q_int;
        assert!(q(0.757) > q(0.785));
    }

    #[test]
    fn transmission_on_resonance_and_half_power() {
        let r = ResonanceResult::new(10e9, 2e5, 1e5).unwrap();
        let x = 2.0 * r.q_loaded / r.q_ext;
        assert_relative_eq!(r.transmission(r.f0).norm(), x, max_relative = 1e-15);
        let hw = r.f0 / (2.0 * r.q_loaded);
        for f in [r.f0 - hw, r.f0 + hw] {
            assert_relative_eq!(r.transmission(f).norm(), x / core::f64::consts::SQRT_2, max_relative = 1e-9);
        }
    }

    #[test]
    fn synthesis_is_seeded() {
        let r = ResonanceResult::new(10e9, 2e5, 1e5).unwrap();
        let fs = frequency_grid(&r, 10.0, 64);
        let a = synth_s21(&r, fs.clone(), 1e-3, 7, TraceMeta::default()).unwrap();
        let b = synth_s21(&r, fs.clone(), 1e-3, 7, TraceMeta::default()).unwrap();
        let c = synth_s21(&r, fs, 1e-3, 8, TraceMeta::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn trace_validation() {
        let fs: Vec<f64> = (0..31).map(|i| i as f64).collect();
        let s = vec![Complex64::new(0.0, 0.0); 31];
        assert!(S21Trace::new(fs, s, TraceMeta::default()).is_err());
        let mut fs: Vec<f64> = (0..40).map(|i| i as f64).collect();
        fs[5] = fs[4];
        assert!(S21Trace::new(fs, vec![Complex64::new(0.0, 0.0); 40], TraceMeta::default()).is_err());
    }

    #[test]
    fn noiseless_round_trip() {
        let r = ResonanceResult::new(10.0287e9, 3.1e5, 2.0e5).unwrap();
        let trace = synth_s21(&r, frequency_grid(&r, 10.0, 801), 0.0, 1, TraceMeta::default()).unwrap();
        let rep = fit_resonance(&trace, &FitOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(((rep.f0_hat - r.f0) / r.f0).abs() < 1e-9);
        assert!(((rep.q_loaded_hat - r.q_loaded) / r.q_loaded).abs() < 1e-6);
        assert!(((rep.q_ext_hat - r.q_ext) / r.q_ext).abs() < 1e-6);
        assert!(!rep.narrow_span);
    }

    #[test]
    fn magnitude_only_round_trip() {
        let r = ResonanceResult::new(9.5e9, 4e4, 5e4).unwrap();
        let trace = synth_s21(&r, frequency_grid(&r, 12.0, 401), 0.0, 1, TraceMeta::default()).unwrap();
        let opts = FitOptions { magnitude_only: true, ..FitOptions::default() };
        let rep = fit_resonance(&trace, &opts).unwrap();
        assert!(rep.converged);
        assert!(((rep.f0_hat - r.f0) / r.f0).abs() < 1e-9);
        assert!(((rep.q_loaded_hat - r.q_loaded) / r.q_loaded).abs() < 1e-6);
    }

    #[test]
    fn background_term_recovers_q() {
        let r = ResonanceResult::new(10e9, 2e5, 1e5).unwrap();
        let fs = frequency_grid(&r, 10.0, 801);
        let (fc, span) = (r.f0, fs[800] - fs[0]);
        let s: Vec<Complex64> =
            fs.iter().map(|&f| r.transmission(f) + Complex64::new(0.02 + 0.1 * (f - fc) / span, 0.0)).collect();
        let trace = S21Trace::new(fs, s, TraceMeta::default()).unwrap();
        let plain = fit_resonance(&trace, &FitOptions::default()).unwrap();
        let opts = FitOptions { background: true, ..FitOptions::default() };
        let rep = fit_resonance(&trace, &opts).unwrap();
        assert!(rep.converged);
        assert!(((rep.q_loaded_hat - r.q_loaded) / r.q_loaded).abs() < 0.1);
        assert!(rep.residual_rms < plain.residual_rms);
    }

    #[test]
    fn narrow_span_is_flagged() {
        let r = ResonanceResult::new(10e9, 2e5, 1e5).unwrap();
        let trace = synth_s21(&r, frequency_grid(&r, 3.0, 101), 0.0, 1, TraceMeta::default()).unwrap();
        let rep = fit_resonance(&trace, &FitOptions::default()).unwrap();
        assert!(rep.narrow_span);
    }

    #[test]
    fn errors_shrink_with_noise() {
        let r = ResonanceResult::new(10e9, 2e5, 1e5).unwrap();
        let fs = frequency_grid(&r, 10.0, 801);
        let mut prev = f64::INFINITY;
        for sigma in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
            let trace = synth_s21(&r, fs.clone(), sigma, 11, TraceMeta::default()).unwrap();
            let rep = fit_resonance(&trace, &FitOptions::default()).unwrap();
            let err = ((rep.q_loaded_hat - r.q_loaded) / r.q_loaded).abs() + ((rep.f0_hat - r.f0) / r.linewidth()).abs();
            assert!(err < prev, "sigma {sigma}: {err} >= {prev}");
            prev = err;
        }
    }

    #[test]
    fn unperturbed_limit() {
        let c = calibration();
        let op = operating_point(0.0, 0.0, None, 0.0, &c).unwrap();
        assert_eq!(op.state, WallState::Superconducting);
        assert_relative_eq!(op.result.f0, c.mode.f0, max_relative = 1e-12);
        assert_relative_eq!(op.result.q_int, c.mode.geometry_factor / c.material.r_res, max_relative = 1e-6);
        let obs = observable_state(0.0, f64::NEG_INFINITY, None, &c).unwrap();
        assert_eq!(obs, op.result);
    }

    #[test]
    fn magnet_shift_adds_to_frequency() {
        let curve = LevitationCurve::new(vec![(0.5e-3, -2e6), (1.0e-3, -1e6), (1.5e-3, -0.5e6)]).unwrap();
        let c = calibration().with_magnet(curve);
        let bare = observable_state(0.3, -15.0, None, &c).unwrap();
        let lev = observable_state(0.3, -15.0, Some(1.0e-3), &c).unwrap();
        assert_relative_eq!(lev.f0 - bare.f0, -1e6, max_relative = 1e-9);
        assert!(observable_state(0.3, -15.0, Some(1.0e-3), &calibration()).is_err());
    }

    #[test]
    fn frequency_falls_with_temperature() {
        let c = calibration();
        let mut prev = f64::INFINITY;
        for i in 0..80 {
            let t = 0.01 * i as f64;
            let f = observable_state(t, -15.0, None, &c).unwrap().f0;
            assert!(f < prev || i == 0, "t = {t}");
            prev = f;
        }
    }

    #[test]
    fn normal_state_above_tc() {
        let c = calibration();
        let op = operating_point(0.9, 1e-3, None, 1e-6, &c).unwrap();
        assert_eq!(op.state, WallState::Normal);
        let zs = crate::superconductor::normal_surface_impedance(c.mode.f0, &c.material, &c.consts);
        assert_relative_eq!(op.result.q_int, c.mode.geometry_factor / zs.r_s, max_relative = 1e-12);
    }

    #[test]
    fn strong_field_collapses_the_condensate() {
        let c = calibration();
        // near t_c the critical field is tiny; a watt of drive cannot be held
        let op = operating_point(0.8, 1.0, None, 0.0, &c).unwrap();
        assert_ne!(op.state, WallState::Superconducting);
    }

    #[test]
    fn operating_point_is_deterministic() {
        let c = calibration();
        let a = operating_point(0.78, 3e-3, None, 1e-7, &c).unwrap();
        let b = operating_point(0.78, 3e-3, None, 1e-7, &c).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn loaded_q_identity(qi in 1.0f64..1e12, qe in 1.0f64..1e12, f0 in 1e6f64..1e11) {
            let r = ResonanceResult::new(f0, qi, qe).unwrap();
            let lhs = 1.0 / r.q_loaded;
            let rhs = 1.0 / qi + 2.0 / qe;
            prop_assert!(((lhs - rhs) / rhs).abs() < 1e-12);
            prop_assert!(r.q_loaded <= qi.min(qe / 2.0) * (1.0 + 1e-12));
        }

        #[test]
        fn two_port_energy_balance(x in 1e-6f64..=1.0) {
            let s11 = x - 1.0;
            let s21 = x;
            let total = s11 * s11 + s21 * s21 + 2.0 * x * (1.0 - x);
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn dissipation_matches_q_budget(qi in 1e2f64..1e9, qe in 1e2f64..1e9) {
            let ql = loaded_q(qi, qe).unwrap();
            let x = peak_transmission(ql, qe);
            // wall loss over incident power from the port decomposition
            let expected = 4.0 * ql * ql / (qi * qe);
            prop_assert!((dissipated_fraction(ql, qe) - expected).abs() < 1e-12);
            prop_assert!(x > 0.0 && x <= 1.0);
        }
    }
}
