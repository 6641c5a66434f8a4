//! Physical constants, power conversion and the validated parameter records
//! shared by every other module.
//!
//! Everything here is SI. Millimetres, GHz and dBm only appear at the I/O
//! boundary (see the `stubcav` crate).

use alloc::vec::Vec;

use crate::error::{Error, GeometryViolation, Result};

/// The first zero of the Bessel function J0.
pub const BESSEL_J0_ZERO: f64 = 2.404_825_557_695_773;

/// The first zero of J1' (TE11 cutoff of a circular guide).
pub const BESSEL_J1P_ZERO: f64 = 1.841_183_781_340_659;

/// Physical constants, CODATA 2018.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Speed of light in vacuum, m/s.
    pub c: f64,
    /// Vacuum permeability, H/m.
    pub mu0: f64,
    /// Vacuum permittivity, F/m.
    pub eps0: f64,
    /// Electron mass, kg.
    pub m_e: f64,
    /// Elementary charge, C.
    pub e_charge: f64,
}

impl PhysicalConstants {
    pub const SI: Self = Self {
        c: 299_792_458.0,
        mu0: 1.256_637_062_12e-6,
        eps0: 8.854_187_812_8e-12,
        m_e: 9.109_383_701_5e-31,
        e_charge: 1.602_176_634e-19,
    };

    /// Impedance of free space, sqrt(mu0 / eps0).
    pub fn z0(&self) -> f64 {
        libm::sqrt(self.mu0 / self.eps0)
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(p_dbm: f64) -> Result<f64> {
    if !p_dbm.is_finite() {
        return Err(Error::domain("power in dBm must be finite"));
    }
    Ok(1e-3 * libm::pow(10.0, p_dbm / 10.0))
}

/// Converts a power in watts to dBm. Zero maps to negative infinity.
pub fn watts_to_dbm(p_w: f64) -> Result<f64> {
    if !(p_w >= 0.0) || !p_w.is_finite() {
        return Err(Error::domain("power in watts must be finite and non-negative"));
    }
    Ok(10.0 * libm::log10(p_w / 1e-3))
}

/// Dimensions of the coaxial quarter-wave cavity, in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityGeometry {
    pub outer_radius: f64,
    pub outer_height: f64,
    pub stub_height: f64,
    pub stub_radius: f64,
}

impl CavityGeometry {
    /// 7 mm x 55 mm outer cylinder with a 2 mm x 5 mm stub.
    pub const REFERENCE: Self = Self {
        outer_radius: 7e-3,
        outer_height: 55e-3,
        stub_height: 5e-3,
        stub_radius: 2e-3,
    };

    fn violations(&self, out: &mut Vec<GeometryViolation>) {
        let fields = [
            ("cavity.outer_radius", self.outer_radius),
            ("cavity.outer_height", self.outer_height),
            ("cavity.stub_height", self.stub_height),
            ("cavity.stub_radius", self.stub_radius),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                out.push(GeometryViolation::NonPositive(name));
            }
        }
        if self.stub_radius >= self.outer_radius {
            out.push(GeometryViolation::StubExceedsOuterRadius);
        }
        if self.stub_height >= self.outer_height {
            out.push(GeometryViolation::StubExceedsOuterHeight);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        self.violations(&mut v);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Geometry(v))
        }
    }

    /// Shortest distance from a point `(r, z)` to any metal surface of the
    /// cavity (outer wall, end caps, stub). Negative inside metal.
    pub fn clearance(&self, r: f64, z: f64) -> f64 {
        let to_outer = self.outer_radius - r;
        let to_bottom = z;
        let to_top = self.outer_height - z;
        let to_stub = if r <= self.stub_radius {
            z - self.stub_height
        } else if z <= self.stub_height {
            r - self.stub_radius
        } else {
            libm::hypot(r - self.stub_radius, z - self.stub_height)
        };
        to_outer.min(to_bottom).min(to_top).min(to_stub)
    }
}

impl Default for CavityGeometry {
    fn default() -> Self {
        Self::REFERENCE
    }
}

/// How the magnet responds to the RF field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConductorModel {
    #[default]
    PerfectConductor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetSpec {
    /// Sphere radius, m.
    pub radius: f64,
    /// Nominal field strength, T. Metadata only; the RF model ignores it.
    pub remanence: f64,
    pub conductor_model: ConductorModel,
}

impl MagnetSpec {
    /// N52 sphere, 0.5 mm radius, 1.47 T.
    pub const REFERENCE: Self = Self {
        radius: 0.5e-3,
        remanence: 1.47,
        conductor_model: ConductorModel::PerfectConductor,
    };
}

impl Default for MagnetSpec {
    fn default() -> Self {
        Self::REFERENCE
    }
}

/// Superconducting wall parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// Critical temperature, K.
    pub t_c: f64,
    /// Penetration depth at zero temperature, m.
    pub lambda0: f64,
    /// Normal-state conductivity, S/m.
    pub sigma_n: f64,
    /// Critical field at zero temperature, T.
    pub b_c0: f64,
    /// Residual surface resistance, ohm.
    pub r_res: f64,
}

impl MaterialParams {
    /// Default wall parameters, tuned so the driven cavity reproduces the
    /// measured transition near 800 mK and the power-induced collapse.
    pub const CALIBRATED: Self = Self { t_c: 0.805, lambda0: 390e-9, sigma_n: 3.24e5, b_c0: 10e-3, r_res: 2e-9 };

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("material.t_c", self.t_c),
            ("material.lambda0", self.lambda0),
            ("material.sigma_n", self.sigma_n),
            ("material.b_c0", self.b_c0),
            ("material.r_res", self.r_res),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(alloc::format!("{name} must be > 0")));
            }
        }
        if self.t_c > 10.0 {
            return Err(Error::Config("material.t_c must be <= 10 K".into()));
        }
        Ok(())
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self::CALIBRATED
    }
}

/// Default external quality factor of each coupling port.
pub const DEFAULT_Q_EXT: f64 = 9.4e3;

/// A geometry and magnet pair that passed [`validate_geometry`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedSystem {
    geometry: CavityGeometry,
    magnet: MagnetSpec,
}

impl ValidatedSystem {
    pub fn geometry(&self) -> &CavityGeometry {
        &self.geometry
    }

    pub fn magnet(&self) -> &MagnetSpec {
        &self.magnet
    }
}

/// Checks every geometry and magnet invariant and reports all violations.
pub fn validate_geometry(g: CavityGeometry, m: MagnetSpec) -> Result<ValidatedSystem> {
    let mut v = Vec::new();
    g.violations(&mut v);
    if !(m.radius > 0.0) || !m.radius.is_finite() {
        v.push(GeometryViolation::NonPositive("magnet.radius"));
    } else if m.radius >= g.stub_radius {
        v.push(GeometryViolation::MagnetExceedsStubRadius);
    }
    if v.is_empty() {
        Ok(ValidatedSystem { geometry: g, magnet: m })
    } else {
        Err(Error::Geometry(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_consistent() {
        let k = PhysicalConstants::SI;
        assert!((k.c * k.c * k.mu0 * k.eps0 - 1.0).abs() < 1e-12);
        for v in [k.c, k.mu0, k.eps0, k.m_e, k.e_charge] {
            assert!(v > 0.0);
        }
    }

    #[test]
    fn dbm_examples() {
        assert_eq!(dbm_to_watts(0.0).unwrap(), 1.0e-3);
        assert!((dbm_to_watts(5.0).unwrap() - 3.162_277_660_168_379e-3).abs() < 1e-15);
        assert!((dbm_to_watts(-15.0).unwrap() - 3.162_277_660_168_379e-5).abs() < 1e-17);
        assert!(dbm_to_watts(f64::NAN).is_err());
        assert!(dbm_to_watts(f64::INFINITY).is_err());
    }

    #[test]
    fn reference_geometry_is_valid() {
        assert!(validate_geometry(CavityGeometry::REFERENCE, MagnetSpec::REFERENCE).is_ok());
    }

    #[test]
    fn violations_are_named() {
        let g = CavityGeometry { stub_radius: 8e-3, ..CavityGeometry::REFERENCE };
        let err = validate_geometry(g, MagnetSpec::REFERENCE).unwrap_err();
        assert!(alloc::format!("{err}").contains("stub exceeds outer radius"));

        let m = MagnetSpec { radius: 3e-3, ..MagnetSpec::REFERENCE };
        let err = validate_geometry(CavityGeometry::REFERENCE, m).unwrap_err();
        assert!(alloc::format!("{err}").contains("magnet exceeds stub radius"));

        let g = CavityGeometry { stub_radius: -1.0, ..CavityGeometry::REFERENCE };
        let err = validate_geometry(g, MagnetSpec::REFERENCE).unwrap_err();
        assert!(alloc::format!("{err}").contains("cavity.stub_radius must be > 0"));
    }

    #[test]
    fn clearance_to_stub_edge() {
        let g = CavityGeometry::REFERENCE;
        assert!((g.clearance(0.0, 6e-3) - 1e-3).abs() < 1e-15);
        assert!((g.clearance(3e-3, 2e-3) - 1e-3).abs() < 1e-15);
        assert!(g.clearance(1e-3, 4e-3) < 0.0);
    }

    proptest::proptest! {
        #[test]
        fn dbm_round_trip(p in -40.0f64..20.0) {
            let back = watts_to_dbm(dbm_to_watts(p).unwrap()).unwrap();
            proptest::prop_assert!((back - p).abs() < 1e-9);
        }

        #[test]
        fn dbm_monotone(a in -60.0f64..30.0, d in 1e-6f64..10.0) {
            proptest::prop_assert!(dbm_to_watts(a + d).unwrap() > dbm_to_watts(a).unwrap());
        }
    }
}
