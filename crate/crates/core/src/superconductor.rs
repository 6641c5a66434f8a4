//! Two-fluid description of the cavity wall.
//!
//! The condensate fraction follows `1 - (T/Tc)^4`, the London depth scales as
//! the inverse square root of the pair density, and the RF field suppresses
//! the pair density quadratically up to the thermodynamic critical field
//! `Bc(T) = Bc0 (1 - (T/Tc)^2)`. The surface impedance is the local two-fluid
//! impedance `sqrt(i w mu0 / sigma)` with `sigma = sigma_n x_n - i / (w mu0 lambda^2)`.

use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::units::{MaterialParams, PhysicalConstants};

/// Fraction of electrons in the condensate, `1 - (t/t_c)^4` clamped to [0, 1].
pub fn superfluid_fraction(t: f64, t_c: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain("temperature must be >= 0"));
    }
    if !(t_c > 0.0) {
        return Err(Error::domain("critical temperature must be > 0"));
    }
    if t >= t_c {
        return Ok(0.0);
    }
    let r = t / t_c;
    let r2 = r * r;
    Ok((1.0 - r2 * r2).clamp(0.0, 1.0))
}

/// London penetration depth for an absolute pair density `n_s` (m^-3):
/// `sqrt(m_e / (mu0 n_s e^2))`.
pub fn london_depth(n_s: f64, k: &PhysicalConstants) -> Result<f64> {
    if !(n_s > 0.0) {
        return Err(Error::domain("pair density must be > 0"));
    }
    Ok(libm::sqrt(k.m_e / (k.mu0 * n_s * k.e_charge * k.e_charge)))
}

/// Temperature-dependent penetration depth `lambda0 / sqrt(n_s/n)`.
pub fn penetration_depth(t: f64, mat: &MaterialParams) -> Result<f64> {
    let x = superfluid_fraction(t, mat.t_c)?;
    if t >= mat.t_c || x <= 0.0 {
        return Err(Error::NormalState);
    }
    Ok(mat.lambda0 / libm::sqrt(x))
}

/// Thermodynamic critical field at temperature `t`; zero at and above `t_c`.
pub fn critical_field(t: f64, mat: &MaterialParams) -> f64 {
    let r = t / mat.t_c;
    (mat.b_c0 * (1.0 - r * r)).max(0.0)
}

/// Pair fraction including suppression by an RF field of peak amplitude
/// `b_rf_peak`: `x(t) * max(0, 1 - (b / Bc(t))^2)`.
pub fn effective_pair_density(t: f64, b_rf_peak: f64, mat: &MaterialParams) -> Result<f64> {
    if !(b_rf_peak >= 0.0) {
        return Err(Error::domain("rf field amplitude must be >= 0"));
    }
    let x = superfluid_fraction(t, mat.t_c)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    let bc = critical_field(t, mat);
    if b_rf_peak >= bc {
        return Ok(0.0);
    }
    let ratio = b_rf_peak / bc;
    Ok(x * (1.0 - ratio * ratio))
}

/// Surface resistance and reactance, ohm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceImpedance {
    pub r_s: f64,
    pub x_s: f64,
}

/// Normal-metal skin-effect impedance `(1 + i) sqrt(w mu0 / (2 sigma_n))`.
pub fn normal_surface_impedance(f: f64, mat: &MaterialParams, k: &PhysicalConstants) -> SurfaceImpedance {
    let omega = 2.0 * PI * f;
    let r = libm::sqrt(omega * k.mu0 / (2.0 * mat.sigma_n));
    SurfaceImpedance { r_s: r, x_s: r }
}

/// Two-fluid surface impedance for a given effective pair fraction.
///
/// A pair fraction of zero selects the normal branch (no residual term).
pub fn surface_impedance_for_fraction(
    pair_fraction: f64,
    f: f64,
    mat: &MaterialParams,
    k: &PhysicalConstants,
) -> Result<SurfaceImpedance> {
    if !(f > 0.0) {
        return Err(Error::domain("frequency must be > 0"));
    }
    if !(0.0..=1.0).contains(&pair_fraction) {
        return Err(Error::domain("pair fraction must lie in [0, 1]"));
    }
    if pair_fraction == 0.0 {
        return Ok(normal_surface_impedance(f, mat, k));
    }
    let omega = 2.0 * PI * f;
    // 1 / (w mu0 lambda_eff^2) with lambda_eff = lambda0 / sqrt(x_s)
    let sigma2 = pair_fraction / (omega * k.mu0 * mat.lambda0 * mat.lambda0);
    let sigma = Complex64::new(mat.sigma_n * (1.0 - pair_fraction), -sigma2);
    let z = (Complex64::new(0.0, omega * k.mu0) / sigma).sqrt();
    Ok(SurfaceImpedance { r_s: z.re + mat.r_res, x_s: z.im })
}

/// Surface impedance at temperature `t`, frequency `f` and RF field `b_rf_peak`.
/// Above `t_c` (or once the field destroys the condensate) the normal branch
/// is returned rather than an error, so sweeps can cross the transition.
pub fn surface_impedance(
    t: f64,
    f: f64,
    b_rf_peak: f64,
    mat: &MaterialParams,
    k: &PhysicalConstants,
) -> Result<SurfaceImpedance> {
    let x = effective_pair_density(t, b_rf_peak, mat)?;
    surface_impedance_for_fraction(x, f, mat, k)
}

/// Thermodynamic and electromagnetic state of the wall at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperconductorState {
    pub temperature: f64,
    /// Effective n_s/n, including field suppression.
    pub pair_fraction: f64,
    /// Effective penetration depth; infinite in the normal state.
    pub lambda: f64,
    pub surface_resistance: f64,
    pub surface_reactance: f64,
    pub is_superconducting: bool,
}

impl SuperconductorState {
    pub fn evaluate(
        t: f64,
        f: f64,
        b_rf_peak: f64,
        mat: &MaterialParams,
        k: &PhysicalConstants,
    ) -> Result<Self> {
        let x = effective_pair_density(t, b_rf_peak, mat)?;
        Self::from_fraction(t, x, f, mat, k)
    }

    pub fn from_fraction(
        t: f64,
        pair_fraction: f64,
        f: f64,
        mat: &MaterialParams,
        k: &PhysicalConstants,
    ) -> Result<Self> {
        let zs = surface_impedance_for_fraction(pair_fraction, f, mat, k)?;
        let sc = t < mat.t_c && pair_fraction > 0.0;
        let lambda = if sc { mat.lambda0 / libm::sqrt(pair_fraction) } else { f64::INFINITY };
        Ok(Self {
            temperature: t,
            pair_fraction,
            lambda,
            surface_resistance: zs.r_s,
            surface_reactance: zs.x_s,
            is_superconducting: sc,
        })
    }
}

/// Lumped inductance and capacitance of the resonance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InductanceBudget {
    /// Geometric inductance, H.
    pub l_geom: f64,
    /// Kinetic inductance at the reference penetration depth, H.
    pub l_kin: f64,
    /// Effective capacitance, F.
    pub c_eff: f64,
}

impl InductanceBudget {
    /// Builds a budget whose resonance at the reference penetration depth is
    /// `f_ref`, with `l_kin = kinetic_ratio * l_geom`.
    pub fn anchored(f_ref: f64, l_geom: f64, kinetic_ratio: f64) -> Result<Self> {
        if !(f_ref > 0.0) || !(l_geom > 0.0) || !(kinetic_ratio >= 0.0) {
            return Err(Error::domain("budget anchor requires positive frequency and inductance"));
        }
        let l_kin = kinetic_ratio * l_geom;
        let w = 2.0 * PI * f_ref;
        Ok(Self { l_geom, l_kin, c_eff: 1.0 / (w * w * (l_geom + l_kin)) })
    }

    pub fn total_inductance(&self) -> f64 {
        self.l_geom + self.l_kin
    }
}

/// Kinetic inductance scaled linearly from the calibration point:
/// `l_kin * lambda_eff / lambda_ref`.
pub fn kinetic_inductance(lambda_eff: f64, budget: &InductanceBudget, lambda_ref: f64) -> Result<f64> {
    if !(lambda_eff > 0.0) || !(lambda_ref > 0.0) {
        return Err(Error::domain("penetration depths must be > 0"));
    }
    Ok(budget.l_kin * (lambda_eff / lambda_ref))
}

/// `1 / (2 pi sqrt((L_g + L_k) C))`.
pub fn resonant_frequency_lumped(budget: &InductanceBudget) -> Result<f64> {
    let l = budget.l_geom + budget.l_kin;
    if !(l > 0.0) || !(budget.c_eff > 0.0) || budget.l_geom < 0.0 || budget.l_kin < 0.0 {
        return Err(Error::domain("inductance and capacitance must be > 0"));
    }
    Ok(1.0 / (2.0 * PI * libm::sqrt(l * budget.c_eff)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn al() -> MaterialParams {
        MaterialParams { t_c: 1.2, lambda0: 50e-9, sigma_n: 2.0e7, b_c0: 10e-3, r_res: 2e-9 }
    }

    #[test]
    fn fraction_examples() {
        assert_eq!(superfluid_fraction(0.0, 1.2).unwrap(), 1.0);
        assert_eq!(superfluid_fraction(1.2, 1.2).unwrap(), 0.0);
        assert!((superfluid_fraction(0.6, 1.2).unwrap() - 0.9375).abs() < 1e-15);
        assert_eq!(superfluid_fraction(2.0, 1.2).unwrap(), 0.0);
        assert!(superfluid_fraction(-0.1, 1.2).is_err());
        assert!(superfluid_fraction(0.1, 0.0).is_err());
    }

    #[test]
    fn london_examples() {
        let k = PhysicalConstants::SI;
        let l1 = london_depth(1.0e28, &k).unwrap();
        assert!((l1 - 5.314e-8).abs() < 1e-11, "{l1}");
        let l4 = london_depth(4.0e28, &k).unwrap();
        assert!((l4 - l1 / 2.0).abs() < 1e-22);
        assert!(london_depth(1e-300, &k).unwrap() > 1e100);
        assert!(london_depth(0.0, &k).is_err());
    }

    #[test]
    fn penetration_examples() {
        let m = al();
        assert_eq!(penetration_depth(0.0, &m).unwrap(), m.lambda0);
        let r = penetration_depth(0.99 * m.t_c, &m).unwrap() / m.lambda0;
        // 1 / sqrt(1 - 0.99^4), evaluated by hand
        assert!((r - 5.037_672_144_956_657).abs() < 1e-9, "{r}");
        assert_eq!(penetration_depth(m.t_c, &m).unwrap_err(), Error::NormalState);
    }

    #[test]
    fn pair_breaking_examples() {
        let m = al();
        let x0 = superfluid_fraction(0.6, m.t_c).unwrap();
        assert_eq!(effective_pair_density(0.6, 0.0, &m).unwrap(), x0);
        let bc = critical_field(0.6, &m);
        assert_eq!(effective_pair_density(0.6, bc, &m).unwrap(), 0.0);
        let half = effective_pair_density(0.6, bc / 2.0, &m).unwrap();
        assert!((half - 0.703_125).abs() < 1e-15);
        assert_eq!(effective_pair_density(1.3, 0.0, &m).unwrap(), 0.0);
    }

    #[test]
    fn impedance_limits() {
        let m = al();
        let k = PhysicalConstants::SI;
        let f = 10e9;
        let cold = surface_impedance(1e-4, f, 0.0, &m, &k).unwrap();
        assert!((cold.r_s - m.r_res).abs() < 1e-3 * m.r_res, "{}", cold.r_s);
        // reactance approaches w mu0 lambda0
        let xl = 2.0 * PI * f * k.mu0 * m.lambda0;
        assert!((cold.x_s / xl - 1.0).abs() < 1e-6);

        let hot = surface_impedance(1.5, f, 0.0, &m, &k).unwrap();
        let rn = libm::sqrt(2.0 * PI * f * k.mu0 / (2.0 * m.sigma_n));
        assert!((hot.r_s - rn).abs() < 1e-15);
        assert!((hot.x_s - rn).abs() < 1e-15);

        let a = surface_impedance(0.757, f, 0.0, &m, &k).unwrap();
        let b = surface_impedance(0.785, f, 0.0, &m, &k).unwrap();
        assert!(a.r_s < b.r_s);
    }

    #[test]
    fn lumped_examples() {
        let b = InductanceBudget { l_geom: 1e-9, l_kin: 0.0, c_eff: 1e-12 };
        let f = resonant_frequency_lumped(&b).unwrap();
        assert!((f - 5.032_921_210e9).abs() < 1.0, "{f}");
        let b4 = InductanceBudget { l_geom: 4e-9, ..b };
        assert!((resonant_frequency_lumped(&b4).unwrap() - f / 2.0).abs() < 1e-3);
        let bk = InductanceBudget { l_kin: 1e-15, ..b };
        assert!(resonant_frequency_lumped(&bk).unwrap() < f);
        assert!(resonant_frequency_lumped(&InductanceBudget { c_eff: 0.0, ..b }).is_err());
    }

    #[test]
    fn kinetic_examples() {
        let b = InductanceBudget { l_geom: 1e-9, l_kin: 2e-12, c_eff: 1e-12 };
        assert_eq!(kinetic_inductance(50e-9, &b, 50e-9).unwrap(), b.l_kin);
        assert_eq!(kinetic_inductance(100e-9, &b, 50e-9).unwrap(), 2.0 * b.l_kin);
        let m = al();
        let lam = penetration_depth(0.99 * m.t_c, &m).unwrap();
        let ratio = kinetic_inductance(lam, &b, m.lambda0).unwrap() / b.l_kin;
        assert!((ratio - 5.037_672_144_956_657).abs() < 1e-9);
        assert!(kinetic_inductance(0.0, &b, 1.0).is_err());
    }

    #[test]
    fn anchored_budget_hits_reference() {
        let b = InductanceBudget::anchored(12e9, 3e-10, 1e-3).unwrap();
        let f = resonant_frequency_lumped(&b).unwrap();
        assert!((f / 12e9 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn penetration_identity_on_grid() {
        let m = al();
        for i in 0..200 {
            let t = m.t_c * (i as f64) / 200.0;
            let r = t / m.t_c;
            let direct = m.lambda0 * libm::pow(1.0 - r * r * r * r, -0.5);
            let lam = penetration_depth(t, &m).unwrap();
            assert!((lam - direct).abs() <= 1e-12 * direct);
        }
    }

    proptest! {
        #[test]
        fn fraction_monotone(a in 0.0f64..1.2, b in 0.0f64..1.2) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(superfluid_fraction(lo, 1.2).unwrap() >= superfluid_fraction(hi, 1.2).unwrap());
        }

        #[test]
        fn pair_density_falls_with_field(t in 0.0f64..1.19, b1 in 0.0f64..0.02, b2 in 0.0f64..0.02) {
            let m = al();
            let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
            prop_assert!(effective_pair_density(t, lo, &m).unwrap() >= effective_pair_density(t, hi, &m).unwrap());
        }

        #[test]
        fn lumped_decreasing(l in 1e-12f64..1e-8, lk in 0.0f64..1e-9, c in 1e-15f64..1e-11, s in 1.0001f64..4.0) {
            let b = InductanceBudget { l_geom: l, l_kin: lk, c_eff: c };
            let f = resonant_frequency_lumped(&b).unwrap();
            let more_l = InductanceBudget { l_geom: l * s, ..b };
            let more_c = InductanceBudget { c_eff: c * s, ..b };
            prop_assert!(resonant_frequency_lumped(&more_l).unwrap() < f);
            prop_assert!(resonant_frequency_lumped(&more_c).unwrap() < f);
        }

        #[test]
        fn warming_lowers_lumped_frequency(t1 in 0.01f64..1.19, t2 in 0.01f64..1.19) {
            prop_assume!((t1 - t2).abs() > 1e-6);
            let m = al();
            let b = InductanceBudget { l_geom: 1e-9, l_kin: 1e-12, c_eff: 1e-13 };
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let f = |t: f64| {
                let lk = kinetic_inductance(penetration_depth(t, &m).unwrap(), &b, m.lambda0).unwrap();
                resonant_frequency_lumped(&InductanceBudget { l_kin: lk, ..b }).unwrap()
            };
            prop_assert!(f(hi) < f(lo));
        }

        #[test]
        fn resistance_rises_with_temperature(t1 in 0.02f64..1.19, t2 in 0.02f64..1.19) {
            prop_assume!((t1 - t2).abs() > 1e-4);
            let m = al();
            let k = PhysicalConstants::SI;
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let a = surface_impedance(lo, 12e9, 0.0, &m, &k).unwrap().r_s;
            let b = surface_impedance(hi, 12e9, 0.0, &m, &k).unwrap().r_s;
            prop_assert!(a < b);
        }
    }
}
