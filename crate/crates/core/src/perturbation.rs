//! Frequency shift caused by the magnet, treated as a small perfectly
//! conducting sphere in the mode's field.
//!
//! Positions are `(x, z)`: `x` is the radial offset from the cavity axis and
//! `z` the height of the sphere centre above the stub top. Contact with the
//! stub is `z = radius`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mode::ModeField;
use crate::units::{CavityGeometry, PhysicalConstants};

/// Dipole polarizabilities of a conducting sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePolarizability {
    /// Sphere radius, m.
    pub radius: f64,
    /// Electric, `4 pi eps0 a^3`, F m^2.
    pub alpha_e: f64,
    /// Magnetic magnitude, `2 pi mu0 a^3`, H m^2. Diamagnetic.
    pub alpha_m: f64,
}

pub fn sphere_polarizabilities(a: f64, k: &PhysicalConstants) -> Result<SpherePolarizability> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain("sphere radius must be > 0"));
    }
    let a3 = a * a * a;
    Ok(SpherePolarizability {
        radius: a,
        alpha_e: 4.0 * PI * k.eps0 * a3,
        alpha_m: 2.0 * PI * k.mu0 * a3,
    })
}

/// How the field is sampled over the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldSampling {
    /// Fields at the sphere centre.
    #[default]
    Center,
    /// `E^2` and `H^2` averaged over the sphere volume.
    Volume,
}

/// Shifts larger than this fraction of `f0` are outside first-order theory.
pub const PERTURBATIVE_LIMIT: f64 = 1e-2;

fn squared_fields(mode: &ModeField, r: f64, z: f64) -> Result<(f64, f64)> {
    let s = mode.sample(r, z)?;
    Ok((s.e_r * s.e_r + s.e_z * s.e_z, s.h_phi * s.h_phi))
}

fn averaged_fields(mode: &ModeField, x: f64, z: f64, a: f64) -> Result<(f64, f64)> {
    // cubic lattice clipped to the ball
    const N: i32 = 4;
    let step = a / N as f64;
    let (mut e2, mut h2, mut count) = (0.0, 0.0, 0usize);
    for ix in -N..=N {
        for iy in -N..=N {
            for iz in -N..=N {
                let (dx, dy, dz) = (ix as f64 * step, iy as f64 * step, iz as f64 * step);
                if dx * dx + dy * dy + dz * dz > a * a {
                    continue;
                }
                let r = libm::hypot(x + dx, dy);
                let (e, h) = squared_fields(mode, r, z + dz)?;
                e2 += e;
                h2 += h;
                count += 1;
            }
        }
    }
    Ok((e2 / count as f64, h2 / count as f64))
}

/// First-order shift `f0 (alpha_m H^2 - alpha_e E^2) / (4 U)`, Hz.
pub fn slater_shift(
    mode: &ModeField,
    geometry: &CavityGeometry,
    x: f64,
    z_above_stub: f64,
    pol: &SpherePolarizability,
    sampling: FieldSampling,
) -> Result<f64> {
    let r = x.abs();
    let z = geometry.stub_height + z_above_stub;
    let clearance = geometry.clearance(r, z);
    if clearance < pol.radius * (1.0 - 1e-9) {
        return Err(Error::Precondition(format!(
            "sphere at x = {:.4} mm, z = {:.4} mm overlaps metal: clearance {:.4} mm < radius {:.4} mm",
            x * 1e3,
            z_above_stub * 1e3,
            clearance * 1e3,
            pol.radius * 1e3
        )));
    }
    let (e2, h2) = match sampling {
        FieldSampling::Center => squared_fields(mode, r, z)?,
        FieldSampling::Volume => averaged_fields(mode, x.abs(), z, pol.radius)?,
    };
    Ok(mode.frequency() * (pol.alpha_m * h2 - pol.alpha_e * e2) / (4.0 * mode.stored_energy()))
}

/// Regular sampling of magnet positions.
#[derive(Debug, Clone, PartialEq)]
pub struct MapGrid {
    pub x_coords: Vec<f64>,
    pub z_coords: Vec<f64>,
}

fn axis(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(Error::domain("map axis needs step > 0 and hi >= lo"));
    }
    let n = libm::round((hi - lo) / step) as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

impl MapGrid {
    pub fn regular(x_max: f64, z_max: f64, step: f64) -> Result<Self> {
        Ok(Self { x_coords: axis(0.0, x_max, step)?, z_coords: axis(0.0, z_max, step)? })
    }

    /// `x` over the stub top and `z` up to 2 mm, 0.1 mm apart.
    pub fn default_for(g: &CavityGeometry) -> Self {
        Self::regular(g.stub_radius, 2e-3, 1e-4).expect("positive defaults")
    }

    /// Positions in output order: `x` fastest.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.x_coords.len() * self.z_coords.len());
        for &z in &self.z_coords {
            for &x in &self.x_coords {
                out.push((x, z));
            }
        }
        out
    }
}

/// Shift at every map position; `None` where the sphere would overlap metal.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftMap {
    pub x_coords: Vec<f64>,
    pub z_coords: Vec<f64>,
    /// Row-major with `x` fastest.
    pub delta_f: Vec<Option<f64>>,
    pub f0_ref: f64,
}

impl ShiftMap {
    /// Assembles a map from per-position results in [`MapGrid::positions`]
    /// order. Overlap errors become absent cells; other errors propagate.
    pub fn from_cells(grid: MapGrid, f0_ref: f64, cells: Vec<Result<f64>>) -> Result<Self> {
        if cells.len() != grid.x_coords.len() * grid.z_coords.len() {
            return Err(Error::domain("cell count does not match the map grid"));
        }
        let mut delta_f = Vec::with_capacity(cells.len());
        for c in cells {
            match c {
                Ok(v) if v.is_finite() => delta_f.push(Some(v)),
                Ok(_) => return Err(Error::domain("non-finite shift")),
                Err(Error::Precondition(_)) => delta_f.push(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Self { x_coords: grid.x_coords, z_coords: grid.z_coords, delta_f, f0_ref })
    }

    pub fn get(&self, ix: usize, iz: usize) -> Option<f64> {
        self.delta_f[ix + self.x_coords.len() * iz]
    }

    /// Index of the lowest row with any feasible cell.
    pub fn contact_row(&self) -> Option<usize> {
        (0..self.z_coords.len()).find(|&iz| (0..self.x_coords.len()).any(|ix| self.get(ix, iz).is_some()))
    }

    /// `(z, delta_f)` along the column closest to `x`, feasible cells only.
    pub fn column(&self, x: f64) -> Vec<(f64, f64)> {
        let ix = self
            .x_coords
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (0..self.z_coords.len())
            .filter_map(|iz| self.get(ix, iz).map(|v| (self.z_coords[iz], v)))
            .collect()
    }

    /// Positions whose relative shift exceeds [`PERTURBATIVE_LIMIT`].
    pub fn nonperturbative_cells(&self) -> Vec<(f64, f64)> {
        let nx = self.x_coords.len();
        self.delta_f
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_some_and(|d| (d / self.f0_ref).abs() >= PERTURBATIVE_LIMIT))
            .map(|(c, _)| (self.x_coords[c % nx], self.z_coords[c / nx]))
            .collect()
    }
}

/// Serial shift map. The `stubcav` crate parallelises the same cells.
pub fn shift_map(
    mode: &ModeField,
    geometry: &CavityGeometry,
    grid: MapGrid,
    pol: &SpherePolarizability,
    sampling: FieldSampling,
) -> Result<ShiftMap> {
    let cells = grid
        .positions()
        .into_iter()
        .map(|(x, z)| slater_shift(mode, geometry, x, z, pol, sampling))
        .collect();
    ShiftMap::from_cells(grid, mode.frequency(), cells)
}

/// Where levitation is expected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionOfInterest {
    pub x_range: (f64, f64),
    pub z_range: (f64, f64),
}

impl Default for RegionOfInterest {
    fn default() -> Self {
        Self { x_range: (0.0, 0.5e-3), z_range: (0.1e-3, 1.5e-3) }
    }
}

impl RegionOfInterest {
    pub fn validate(&self, map: &ShiftMap) -> Result<()> {
        let (x0, x1) = self.x_range;
        let (z0, z1) = self.z_range;
        if !(x1 > x0) || !(z1 > z0) {
            return Err(Error::Config("region of interest ranges must be non-empty".into()));
        }
        let span = |c: &[f64]| (c.first().copied().unwrap_or(0.0), c.last().copied().unwrap_or(0.0));
        let (mx0, mx1) = span(&map.x_coords);
        let (mz0, mz1) = span(&map.z_coords);
        let tol = 1e-12;
        if x0 < mx0 - tol || x1 > mx1 + tol || z0 < mz0 - tol || z1 > mz1 + tol {
            return Err(Error::Config("region of interest lies outside the shift map".into()));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        let tol = 1e-12;
        x >= self.x_range.0 - tol && x <= self.x_range.1 + tol && z >= self.z_range.0 - tol && z <= self.z_range.1 + tol
    }
}

/// On-axis shift versus height with a monotone cubic interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct LevitationCurve {
    z: Vec<f64>,
    shift: Vec<f64>,
    slope: Vec<f64>,
}

impl LevitationCurve {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::domain("levitation curve needs at least two samples"));
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::domain("levitation curve heights must be strictly increasing"));
        }
        let (z, shift): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        let slope = pchip_slopes(&z, &shift);
        Ok(Self { z, shift, slope })
    }

    /// The `x = 0` column of `map` restricted to the region of interest.
    pub fn from_map(map: &ShiftMap, roi: &RegionOfInterest) -> Result<Self> {
        roi.validate(map)?;
        let x = roi.x_range.0;
        let samples: Vec<(f64, f64)> = map.column(x).into_iter().filter(|&(z, _)| roi.contains(x, z)).collect();
        Self::new(samples)
    }

    pub fn heights(&self) -> &[f64] {
        &self.z
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shift
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.z[0], self.z[self.z.len() - 1])
    }

    pub fn is_strictly_monotone(&self) -> bool {
        let up = self.shift.windows(2).all(|w| w[1] > w[0]);
        let down = self.shift.windows(2).all(|w| w[1] < w[0]);
        up || down
    }

    /// Interpolated shift at height `z`, Hz.
    pub fn shift_at(&self, z: f64) -> Result<f64> {
        let (lo, hi) = self.z_range();
        if !(z >= lo - 1e-12 && z <= hi + 1e-12) {
            return Err(Error::domain(format!("height {:.4} mm outside the levitation curve", z * 1e3)));
        }
        let z = z.clamp(lo, hi);
        let i = match self.z.iter().position(|&v| v > z) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => self.z.len() - 2,
        };
        Ok(self.hermite(i, z))
    }

    fn hermite(&self, i: usize, z: f64) -> f64 {
        let h = self.z[i + 1] - self.z[i];
        let t = (z - self.z[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.shift[i] + h10 * h * self.slope[i] + h01 * self.shift[i + 1] + h11 * h * self.slope[i + 1]
    }
}

/// Fritsch-Carlson slopes; keeps the interpolant monotone between samples.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let secant: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
    let mut m = alloc::vec![0.0; n];
    if n == 2 {
        m[0] = secant[0];
        m[1] = secant[0];
        return m;
    }
    for i in 1..n - 1 {
        let (a, b) = (secant[i - 1], secant[i]);
        if a * b <= 0.0 {
            m[i] = 0.0;
        } else {
            let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
            let (w1, w2) = (2.0 * h1 + h0, h1 + 2.0 * h0);
            m[i] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    m[0] = end(x[1] - x[0], x[2] - x[1], secant[0], secant[1]);
    m[n - 1] = end(x[n - 1] - x[n - 2], x[n - 2] - x[n - 3], secant[n - 2], secant[n - 3]);
    m
}

/// Shift tolerance of the height inversion, Hz.
pub const INVERSION_TOLERANCE_HZ: f64 = 1.0;

/// Height whose predicted shift matches `f_meas - f0_ref`.
pub fn invert_height(f_meas: f64, curve: &LevitationCurve, f0_ref: f64) -> Result<f64> {
    let mut target = f_meas - f0_ref;
    if !target.is_finite() {
        return Err(Error::domain("measured frequency must be finite"));
    }
    // absolute frequencies lose a few ulps of the shift at the band edges
    let lowest = curve.shift.iter().copied().fold(f64::INFINITY, f64::min);
    let highest = curve.shift.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if target < lowest && lowest - target <= INVERSION_TOLERANCE_HZ {
        target = lowest;
    } else if target > highest && target - highest <= INVERSION_TOLERANCE_HZ {
        target = highest;
    }
    let brackets: Vec<usize> = (0..curve.z.len() - 1)
        .filter(|&i| {
            let (a, b) = (curve.shift[i], curve.shift[i + 1]);
            a.min(b) <= target && target <= a.max(b)
        })
        .collect();
    // a target on a shared sample lands in two neighbouring segments
    let distinct: Vec<usize> = brackets
        .iter()
        .copied()
        .filter(|&i| !(brackets.contains(&(i + 1)) && curve.shift[i + 1] == target))
        .collect();
    let seg = match distinct.as_slice() {
        [] => return Err(Error::OutOfBand),
        [i] => *i,
        many => {
            return Err(Error::AmbiguousInversion {
                intervals: many.iter().map(|&i| (curve.z[i], curve.z[i + 1])).collect(),
            })
        }
    };

    let (mut lo, mut hi) = (curve.z[seg], curve.z[seg + 1]);
    let rising = curve.shift[seg + 1] >= curve.shift[seg];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = curve.hermite(seg, mid);
        if (v - target).abs() < INVERSION_TOLERANCE_HZ || hi - lo < 1e-15 {
            return Ok(mid);
        }
        if (v < target) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    const K: PhysicalConstants = PhysicalConstants::SI;

    #[test]
    fn polarizability_examples() {
        let p = sphere_polarizabilities(0.5e-3, &K).unwrap();
        let expected = 4.0 * PI * 8.854_187_812_8e-12 * 1.25e-10;
        assert!((p.alpha_e - expected).abs() < 1e-30);
        assert!((p.alpha_e - 1.3908e-20).abs() < 1e-24);
        let q = sphere_polarizabilities(1e-3, &K).unwrap();
        assert!((q.alpha_e / p.alpha_e - 8.0).abs() < 1e-12);
        assert!((q.alpha_m / p.alpha_m - 8.0).abs() < 1e-12);
        assert!((p.alpha_e / K.eps0 - 2.0 * p.alpha_m / K.mu0).abs() < 1e-24);
        assert!(sphere_polarizabilities(0.0, &K).is_err());
        assert!(sphere_polarizabilities(-1.0, &K).is_err());
    }

    fn ramp_curve() -> LevitationCurve {
        LevitationCurve::new((0..11).map(|i| {
            let z = 0.5e-3 + i as f64 * 1e-4;
            (z, -4e7 * libm::exp(-900.0 * z))
        }).collect()).unwrap()
    }

    #[test]
    fn inversion_round_trips_samples() {
        let c = ramp_curve();
        for (&z, &d) in c.heights().iter().zip(c.shifts()) {
            let got = invert_height(10e9 + d, &c, 10e9).unwrap();
            assert!((got - z).abs() < 1e-9, "{z} {got}");
        }
    }

    #[test]
    fn inversion_tolerates_rounding_at_band_edge() {
        let c = ramp_curve();
        let f0 = 10.028664623216734e9;
        let (z0, d0) = (c.heights()[0], c.shifts()[0]);
        let got = invert_height(f0 + d0 - 1e-3, &c, f0).unwrap();
        assert!((got - z0).abs() < 1e-9);
    }

    #[test]
    fn inversion_out_of_band() {
        let c = ramp_curve();
        let max = c.shifts().iter().copied().fold(f64::MIN, f64::max);
        assert!(matches!(invert_height(10e9 + max + 10e6, &c, 10e9), Err(Error::OutOfBand)));
    }

    #[test]
    fn inversion_brackets_midpoint() {
        let c = ramp_curve();
        let (z1, z2) = (c.heights()[3], c.heights()[4]);
        let mid = 0.5 * (c.shifts()[3] + c.shifts()[4]);
        let z = invert_height(mid, &c, 0.0).unwrap();
        assert!(z > z1 && z < z2);
    }

    #[test]
    fn non_monotone_curve_is_ambiguous() {
        let c = LevitationCurve::new(alloc::vec![(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)]).unwrap();
        assert!(!c.is_strictly_monotone());
        match invert_height(1.0, &c, 0.0) {
            Err(Error::AmbiguousInversion { intervals }) => assert_eq!(intervals.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pchip_is_monotone_between_samples() {
        let c = LevitationCurve::new(alloc::vec![(0.0, 0.0), (1.0, 0.1), (2.0, 5.0), (3.0, 5.01)]).unwrap();
        let mut prev = f64::MIN;
        for i in 0..=300 {
            let v = c.shift_at(i as f64 * 0.01).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn default_roi() {
        let r = RegionOfInterest::default();
        assert_eq!(r.x_range, (0.0, 0.5e-3));
        assert_eq!(r.z_range, (0.1e-3, 1.5e-3));
    }

    proptest::proptest! {
        #[test]
        fn inversion_round_trip_anywhere(t in 0.0f64..1.0) {
            let c = ramp_curve();
            let (lo, hi) = c.z_range();
            let z = lo + t * (hi - lo);
            let d = c.shift_at(z).unwrap();
            let got = invert_height(d, &c, 0.0).unwrap();
            proptest::prop_assert!((got - z).abs() < 1e-8);
        }
    }
}
