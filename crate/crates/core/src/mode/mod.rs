//! Axisymmetric TM (m = 0) eigenmodes of the cavity.
//!
//! The unknown is `H_phi` at cell centres. `E_z` lives on the vertical cell
//! faces and `E_r` on the horizontal ones, both obtained from the discrete
//! curl. Faces that touch metal are dropped, which enforces tangential
//! `E = 0` on every wall exactly. The axis face uses the circulation around
//! the innermost disk, which removes the `1/r` singularity.
//!
//! All field arrays hold peak phasor amplitudes, so the time-averaged stored
//! energy is `(1/4) * integral(eps0 |E|^2 + mu0 |H|^2) dV`.

mod banded;
mod eigen;
mod mesh;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

pub use mesh::{AxisymmetricMesh, GridSpec};

use crate::error::{Error, Result};
use crate::units::{CavityGeometry, PhysicalConstants, BESSEL_J0_ZERO, BESSEL_J1P_ZERO};
use banded::SymmetricBand;

/// Minimum number of radial cells across the stub.
pub const MIN_STUB_CELLS: f64 = 10.0;

/// A solved, energy-normalised cavity mode on a staggered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField {
    f0: f64,
    mesh: AxisymmetricMesh,
    /// `nr * nz`, index `i + nr * j`.
    h_phi: Vec<f64>,
    /// `nr * (nz + 1)`, index `i + nr * j`, at `(r_center(i), z_face(j))`.
    e_r: Vec<f64>,
    /// `(nr + 1) * nz`, index `i + (nr + 1) * j`, at `(r_face(i), z_center(j))`.
    e_z: Vec<f64>,
    consts: PhysicalConstants,
    residual: f64,
}

/// Field components at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub r: f64,
    pub z: f64,
    pub e_r: f64,
    pub e_z: f64,
    pub h_phi: f64,
}

impl FieldSample {
    pub fn e_abs(&self) -> f64 {
        libm::hypot(self.e_r, self.e_z)
    }

    pub fn h_abs(&self) -> f64 {
        self.h_phi.abs()
    }
}

struct Face {
    terms: [(usize, f64); 2],
    len: usize,
    weight: f64,
}

/// Discrete curl on the vacuum cells: `A = D^T W D`, `B = diag(cell weights)`.
struct Operator {
    unknown: Vec<Option<usize>>,
    cell_weight: Vec<f64>,
    vertical: Vec<(usize, usize, Face)>,
    horizontal: Vec<(usize, usize, Face)>,
}

fn vertical_face_weight(grid: &GridSpec, i: usize) -> f64 {
    if i == 0 {
        grid.dr * grid.dr / 8.0 * grid.dz
    } else {
        grid.r_face(i) * grid.dr * grid.dz
    }
}

fn horizontal_face_weight(grid: &GridSpec, i: usize) -> f64 {
    grid.r_center(i) * grid.dr * grid.dz
}

fn cell_weight(grid: &GridSpec, i: usize) -> f64 {
    grid.r_center(i) * grid.dr * grid.dz
}

impl Operator {
    fn assemble(mesh: &AxisymmetricMesh) -> Self {
        let grid = *mesh.grid();
        let (nr, nz) = (grid.nr, grid.nz);
        let mut unknown = vec![None; nr * nz];
        let mut cell_weight = Vec::new();
        for j in 0..nz {
            for i in 0..nr {
                if mesh.is_vacuum(i, j) {
                    unknown[i + nr * j] = Some(cell_weight.len());
                    cell_weight.push(self::cell_weight(&grid, i));
                }
            }
        }

        let mut vertical = Vec::new();
        for j in 0..nz {
            if let Some(u0) = unknown[nr * j] {
                let face = Face { terms: [(u0, 4.0 / grid.dr), (0, 0.0)], len: 1, weight: vertical_face_weight(&grid, 0) };
                vertical.push((0, j, face));
            }
            for i in 1..nr {
                if let (Some(a), Some(b)) = (unknown[i - 1 + nr * j], unknown[i + nr * j]) {
                    let scale = grid.r_face(i) * grid.dr;
                    let face = Face {
                        terms: [(a, -grid.r_center(i - 1) / scale), (b, grid.r_center(i) / scale)],
                        len: 2,
                        weight: vertical_face_weight(&grid, i),
                    };
                    vertical.push((i, j, face));
                }
            }
        }

        let mut horizontal = Vec::new();
        for j in 1..nz {
            for i in 0..nr {
                if let (Some(a), Some(b)) = (unknown[i + nr * (j - 1)], unknown[i + nr * j]) {
                    let face = Face {
                        terms: [(a, 1.0 / grid.dz), (b, -1.0 / grid.dz)],
                        len: 2,
                        weight: horizontal_face_weight(&grid, i),
                    };
                    horizontal.push((i, j, face));
                }
            }
        }
        Self { unknown, cell_weight, vertical, horizontal }
    }

    fn faces(&self) -> impl Iterator<Item = &Face> {
        self.vertical.iter().chain(&self.horizontal).map(|(_, _, f)| f)
    }

    /// `B^{-1/2} A B^{-1/2}` in banded form.
    fn symmetric_matrix(&self) -> SymmetricBand {
        let n = self.cell_weight.len();
        let bw = self
            .faces()
            .filter(|f| f.len == 2)
            .map(|f| f.terms[0].0.abs_diff(f.terms[1].0))
            .max()
            .unwrap_or(0);
        let inv_sqrt: Vec<f64> = self.cell_weight.iter().map(|w| 1.0 / libm::sqrt(*w)).collect();
        let mut m = SymmetricBand::zeros(n, bw);
        for f in self.faces() {
            let terms = &f.terms[..f.len];
            for (a, &(ua, ca)) in terms.iter().enumerate() {
                for &(ub, cb) in &terms[..=a] {
                    let v = f.weight * ca * cb * inv_sqrt[ua] * inv_sqrt[ub];
                    m.add(ua, ub, v);
                }
            }
        }
        m
    }

    fn curl(face: &Face, h: &[f64]) -> f64 {
        face.terms[..face.len].iter().map(|&(u, c)| c * h[u]).sum()
    }
}

/// The lowest `count` modes of a meshed cavity, starting the search near
/// `guess_hz`.
pub fn solve_modes(mesh: &AxisymmetricMesh, k: &PhysicalConstants, guess_hz: f64, count: usize) -> Result<Vec<ModeField>> {
    if !(guess_hz > 0.0) || count == 0 {
        return Err(Error::domain("mode search needs a positive guess and count"));
    }
    let op = Operator::assemble(mesh);
    if op.cell_weight.is_empty() {
        return Err(Error::Precondition("mesh has no vacuum cells".into()));
    }
    let m = op.symmetric_matrix();
    let k_guess = 2.0 * PI * guess_hz / k.c;
    let pairs = eigen::lowest_eigenpairs(&m, k_guess * k_guess, count)?;

    let grid = *mesh.grid();
    let (nr, nz) = (grid.nr, grid.nz);
    let mut out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        if !(pair.value > 0.0) {
            return Err(Error::NoConvergence { residual: pair.residual });
        }
        let k_mode = libm::sqrt(pair.value);
        let omega = k_mode * k.c;
        let mut h: Vec<f64> = pair.vector.iter().zip(&op.cell_weight).map(|(y, w)| y / libm::sqrt(*w)).collect();
        // fix the arbitrary sign so output is reproducible
        let peak = h.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if peak < 0.0 {
            h.iter_mut().for_each(|v| *v = -*v);
        }

        let mut h_phi = vec![0.0; nr * nz];
        for (cell, u) in op.unknown.iter().enumerate() {
            if let Some(u) = u {
                h_phi[cell] = h[*u];
            }
        }
        let to_e = 1.0 / (omega * k.eps0);
        let mut e_z = vec![0.0; (nr + 1) * nz];
        for (i, j, f) in &op.vertical {
            e_z[i + (nr + 1) * j] = Operator::curl(f, &h) * to_e;
        }
        let mut e_r = vec![0.0; nr * (nz + 1)];
        for (i, j, f) in &op.horizontal {
            e_r[i + nr * j] = Operator::curl(f, &h) * to_e;
        }

        let mut mode = ModeField {
            f0: omega / (2.0 * PI),
            mesh: mesh.clone(),
            h_phi,
            e_r,
            e_z,
            consts: *k,
            residual: pair.residual,
        };
        let u = mode.stored_energy();
        mode = mode.scaled(1.0 / libm::sqrt(u));
        out.push(mode);
    }
    Ok(out)
}

/// Fundamental mode of the stub cavity, normalised to 1 J.
pub fn solve_bare_mode(g: &CavityGeometry, grid: &GridSpec, k: &PhysicalConstants) -> Result<ModeField> {
    g.validate()?;
    grid.validate(g)?;
    if g.stub_radius / grid.dr < MIN_STUB_CELLS * (1.0 - 1e-9) {
        return Err(Error::Precondition(alloc::format!(
            "grid too coarse: {:.1} cells across the stub radius, need {MIN_STUB_CELLS}",
            g.stub_radius / grid.dr
        )));
    }
    let mesh = AxisymmetricMesh::cavity(g, *grid)?;
    let guess = analytic_coax_estimate(g, k);
    let mut modes = solve_modes(&mesh, k, guess, 1)?;
    Ok(modes.remove(0))
}

fn lerp_grid(
    x: f64,
    y: f64,
    (x0, dx, nx): (f64, f64, usize),
    (y0, dy, ny): (f64, f64, usize),
    value: impl Fn(usize, usize) -> Option<f64>,
) -> f64 {
    let locate = |p: f64, p0: f64, d: f64, n: usize| -> (usize, f64) {
        if n < 2 {
            return (0, 0.0);
        }
        let s = (p - p0) / d;
        let i = (libm::floor(s).max(0.0) as usize).min(n - 2);
        (i, (s - i as f64).clamp(0.0, 1.0))
    };
    let (i0, t) = locate(x, x0, dx, nx);
    let (j0, u) = locate(y, y0, dy, ny);
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (di, wi) in [(0, 1.0 - t), (1, t)] {
        for (dj, wj) in [(0, 1.0 - u), (1, u)] {
            let (i, j) = (i0 + di, j0 + dj);
            if i >= nx || j >= ny {
                continue;
            }
            let w = wi * wj;
            if w == 0.0 {
                continue;
            }
            if let Some(v) = value(i, j) {
                acc += w * v;
                wsum += w;
            }
        }
    }
    if wsum > 0.0 {
        acc / wsum
    } else {
        0.0
    }
}

impl ModeField {
    pub fn frequency(&self) -> f64 {
        self.f0
    }

    pub fn mesh(&self) -> &AxisymmetricMesh {
        &self.mesh
    }

    pub fn grid(&self) -> &GridSpec {
        self.mesh.grid()
    }

    /// Relative eigen-residual of the discrete problem.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn h_phi(&self) -> &[f64] {
        &self.h_phi
    }

    pub fn e_r(&self) -> &[f64] {
        &self.e_r
    }

    pub fn e_z(&self) -> &[f64] {
        &self.e_z
    }

    /// Every field multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in out.h_phi.iter_mut().chain(&mut out.e_r).chain(&mut out.e_z) {
            *v *= factor;
        }
        out
    }

    /// Time-averaged electric energy, J.
    pub fn electric_energy(&self) -> f64 {
        let grid = self.grid();
        let (nr, nz) = (grid.nr, grid.nz);
        let mut sum = 0.0;
        for j in 0..nz {
            for i in 0..=nr {
                let e = self.e_z[i + (nr + 1) * j];
                sum += vertical_face_weight(grid, i) * e * e;
            }
        }
        for j in 0..=nz {
            for i in 0..nr {
                let e = self.e_r[i + nr * j];
                sum += horizontal_face_weight(grid, i) * e * e;
            }
        }
        0.25 * 2.0 * PI * self.consts.eps0 * sum
    }

    /// Time-averaged magnetic energy, J.
    pub fn magnetic_energy(&self) -> f64 {
        0.25 * 2.0 * PI * self.consts.mu0 * self.h_squared_volume()
    }

    /// Time-averaged stored energy, J.
    pub fn stored_energy(&self) -> f64 {
        self.electric_energy() + self.magnetic_energy()
    }

    /// `sum(r dr dz h^2)`, i.e. the volume integral of `H^2` over `2 pi`.
    fn h_squared_volume(&self) -> f64 {
        let grid = self.grid();
        let nr = grid.nr;
        self.h_phi
            .iter()
            .enumerate()
            .map(|(c, h)| cell_weight(grid, c % nr) * h * h)
            .sum()
    }

    fn cell_h(&self, i: isize, j: isize) -> Option<f64> {
        let nr = self.grid().nr;
        self.mesh.vacuum_at(i, j).then(|| self.h_phi[i as usize + nr * j as usize])
    }

    /// Field components at `(r, z)` by bilinear interpolation of each
    /// staggered grid. Grid nodes buried in metal are skipped; nodes on a
    /// wall take part with their (zero tangential) value.
    pub fn sample(&self, r: f64, z: f64) -> Result<FieldSample> {
        if !self.mesh.contains(r, z) {
            return Err(Error::domain(alloc::format!(
                "point ({r:.6e}, {z:.6e}) m is outside the cavity volume"
            )));
        }
        let grid = *self.grid();
        let (nr, nz, dr, dz) = (grid.nr, grid.nz, grid.dr, grid.dz);
        let vac = |i: isize, j: isize| self.mesh.vacuum_at(i, j);
        // H_phi and E_r both vanish linearly at the axis
        let axis = if r < 0.5 * dr { r / (0.5 * dr) } else { 1.0 };

        let h = lerp_grid(r, z, (0.5 * dr, dr, nr), (0.5 * dz, dz, nz), |i, j| {
            self.cell_h(i as isize, j as isize)
        }) * axis;
        let e_r = lerp_grid(r, z, (0.5 * dr, dr, nr), (0.0, dz, nz + 1), |i, j| {
            let (ii, jj) = (i as isize, j as isize);
            (vac(ii, jj - 1) || vac(ii, jj)).then(|| self.e_r[i + nr * j])
        }) * axis;
        let e_z = lerp_grid(r, z, (0.0, dr, nr + 1), (0.5 * dz, dz, nz), |i, j| {
            let (ii, jj) = (i as isize, j as isize);
            (vac(ii - 1, jj) || vac(ii, jj)).then(|| self.e_z[i + (nr + 1) * j])
        });
        Ok(FieldSample { r, z, e_r, e_z, h_phi: h })
    }

    /// `(|E|, |H|)` at `(r, z)`.
    pub fn field_at(&self, r: f64, z: f64) -> Result<(f64, f64)> {
        let s = self.sample(r, z)?;
        Ok((s.e_abs(), s.h_abs()))
    }

    /// Visits every wall segment with its area over `2 pi` and the
    /// tangential `H` extrapolated onto the wall.
    fn for_each_wall(&self, mut visit: impl FnMut(f64, f64)) {
        let grid = *self.grid();
        let (nr, nz) = (grid.nr, grid.nz);
        for j in 0..nz {
            // the axis is not a wall
            for i in 1..=nr {
                let (l, rgt) = (self.cell_h(i as isize - 1, j as isize), self.cell_h(i as isize, j as isize));
                let (h, rc) = match (l, rgt) {
                    (Some(h), None) => (h, grid.r_center(i - 1)),
                    (None, Some(h)) => (h, grid.r_center(i)),
                    _ => continue,
                };
                let rw = grid.r_face(i);
                // r H is nearly constant across half a cell of a coaxial gap
                visit(rw * grid.dz, h * rc / rw);
            }
        }
        for j in 0..=nz {
            for i in 0..nr {
                let (b, a) = (self.cell_h(i as isize, j as isize - 1), self.cell_h(i as isize, j as isize));
                let h = match (b, a) {
                    (Some(h), None) | (None, Some(h)) => h,
                    _ => continue,
                };
                visit(grid.r_center(i) * grid.dr, h);
            }
        }
    }

    /// Largest tangential magnetic field on any wall, A/m.
    pub fn surface_h_max(&self) -> f64 {
        let mut peak = 0.0f64;
        self.for_each_wall(|_, h| peak = peak.max(h.abs()));
        peak
    }

    /// `G = omega mu0 integral(H^2 dV) / wall integral(H_t^2 dA)`, ohm.
    pub fn geometry_factor(&self) -> f64 {
        let mut wall = 0.0;
        self.for_each_wall(|area, h| wall += area * h * h);
        let omega = 2.0 * PI * self.f0;
        omega * self.consts.mu0 * self.h_squared_volume() / wall
    }

    /// Peak wall field `B = mu0 H_max` for a drive of `p_in` watts into one
    /// of two identical ports.
    pub fn rf_field_amplitude(&self, p_in: f64, q_loaded: f64, q_ext: f64, f0: f64) -> Result<f64> {
        if !(p_in >= 0.0) || !p_in.is_finite() {
            return Err(Error::domain("drive power must be finite and >= 0"));
        }
        if !(q_loaded > 0.0 && q_ext > 0.0 && f0 > 0.0) {
            return Err(Error::domain("Q values and frequency must be > 0"));
        }
        let energy = drive_energy(p_in, q_loaded, q_ext, f0);
        Ok(self.consts.mu0 * self.surface_h_max() * libm::sqrt(energy / self.stored_energy()))
    }

    /// Field components at every vacuum cell centre, `E` averaged from the
    /// two adjacent faces. Ordered `r` fastest.
    pub fn cell_samples(&self) -> Vec<FieldSample> {
        let grid = *self.grid();
        let (nr, nz) = (grid.nr, grid.nz);
        let mut out = Vec::with_capacity(self.mesh.vacuum_cells());
        for j in 0..nz {
            for i in 0..nr {
                if !self.mesh.is_vacuum(i, j) {
                    continue;
                }
                out.push(FieldSample {
                    r: grid.r_center(i),
                    z: grid.z_center(j),
                    e_r: 0.5 * (self.e_r[i + nr * j] + self.e_r[i + nr * (j + 1)]),
                    e_z: 0.5 * (self.e_z[i + (nr + 1) * j] + self.e_z[i + 1 + (nr + 1) * j]),
                    h_phi: self.h_phi[i + nr * j],
                });
            }
        }
        out
    }
}

/// Steady-state stored energy for power `p_in` into one of two identical
/// ports: `U = 4 Q_l^2 P / (Q_ext omega0)`.
pub fn drive_energy(p_in: f64, q_loaded: f64, q_ext: f64, f0: f64) -> f64 {
    4.0 * q_loaded * q_loaded * p_in / (q_ext * 2.0 * PI * f0)
}

/// Extra electrical length from the open-end capacitance of the stub, m.
///
/// The stub top sees the lid as a parallel plate and, in parallel, the
/// evanescent guide above it, whose field reaches roughly `1 / k_c` before
/// decaying. With a tall lid the second term dominates.
pub fn end_correction(g: &CavityGeometry, k: &PhysicalConstants) -> f64 {
    let area = PI * g.stub_radius * g.stub_radius;
    let to_lid = g.outer_height - g.stub_height;
    let fringe_depth = 1.0 / BetaMode::Tm01.cutoff_wavenumber(g.outer_radius);
    let c_top = k.eps0 * area * (1.0 / to_lid + 1.0 / fringe_depth);
    let z_line = k.z0() / (2.0 * PI) * libm::log(g.outer_radius / g.stub_radius);
    c_top * z_line * k.c
}

/// Quarter-wave estimate `c / (4 (h + dl))`, Hz.
pub fn analytic_coax_estimate(g: &CavityGeometry, k: &PhysicalConstants) -> f64 {
    quarter_wave(g.stub_height, end_correction(g, k), k)
}

/// `c / (4 (length + correction))`.
pub fn quarter_wave(length: f64, correction: f64, k: &PhysicalConstants) -> f64 {
    k.c / (4.0 * (length + correction))
}

/// Which circular-guide cutoff governs the decay above the stub.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BetaMode {
    #[default]
    Tm01,
    Te11,
}

impl BetaMode {
    pub fn cutoff_wavenumber(self, outer_radius: f64) -> f64 {
        match self {
            BetaMode::Tm01 => BESSEL_J0_ZERO / outer_radius,
            BetaMode::Te11 => BESSEL_J1P_ZERO / outer_radius,
        }
    }
}

/// Evanescent decay constant of the guide above the stub, 1/m.
pub fn evanescent_beta(f: f64, g: &CavityGeometry, k: &PhysicalConstants, mode: BetaMode) -> Result<f64> {
    if !(f >= 0.0) || !f.is_finite() {
        return Err(Error::domain("frequency must be finite and >= 0"));
    }
    let kc = mode.cutoff_wavenumber(g.outer_radius);
    let k0 = 2.0 * PI * f / k.c;
    if k0 > kc {
        return Err(Error::Propagating);
    }
    Ok(libm::sqrt(kc * kc - k0 * k0))
}

/// `exp(-beta (z - z_ref))` decay above the stub top.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvanescentModel {
    pub beta: f64,
    pub z_ref: f64,
}

impl EvanescentModel {
    pub fn new(f: f64, g: &CavityGeometry, k: &PhysicalConstants, mode: BetaMode) -> Result<Self> {
        Ok(Self { beta: evanescent_beta(f, g, k, mode)?, z_ref: g.stub_height })
    }

    pub fn attenuation(&self, z: f64) -> f64 {
        libm::exp(-self.beta * (z - self.z_ref))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const K: PhysicalConstants = PhysicalConstants::SI;

    fn pillbox(dr: f64) -> ModeField {
        let (radius, height) = (7e-3, 10e-3);
        let grid = GridSpec {
            dr,
            dz: dr,
            nr: libm::round(radius / dr) as usize,
            nz: libm::round(height / dr) as usize,
        };
        let mesh = AxisymmetricMesh::pillbox(radius, height, grid).unwrap();
        solve_modes(&mesh, &K, 15e9, 1).unwrap().remove(0)
    }

    fn pillbox_exact() -> f64 {
        BESSEL_J0_ZERO * K.c / (2.0 * PI * 7e-3)
    }

    #[test]
    fn pillbox_matches_bessel_zero() {
        let mode = pillbox(1e-4);
        let exact = pillbox_exact();
        assert!((exact - 16.3918e9).abs() < 1e5, "{exact}");
        assert!((mode.frequency() / exact - 1.0).abs() < 0.01, "{}", mode.frequency());
        assert!(mode.residual() <= 1e-8);
    }

    #[test]
    fn pillbox_converges_at_second_order() {
        let exact = pillbox_exact();
        let e: Vec<f64> = [2e-4, 1e-4, 5e-5].iter().map(|&d| (pillbox(d).frequency() - exact).abs()).collect();
        let p1 = libm::log2(e[0] / e[1]);
        let p2 = libm::log2(e[1] / e[2]);
        assert!((1.7..2.3).contains(&p1), "orders {p1} {p2}");
        assert!((1.7..2.3).contains(&p2), "orders {p1} {p2}");
    }

    #[test]
    fn normalised_with_equipartition() {
        let mode = pillbox(2e-4);
        assert!((mode.stored_energy() - 1.0).abs() < 1e-12);
        let frac = mode.electric_energy() / mode.stored_energy();
        assert!((frac - 0.5).abs() < 1e-6, "{frac}");
        let tripled = mode.scaled(3.0);
        assert!((tripled.stored_energy() - 9.0).abs() < 1e-10);
    }

    #[test]
    fn pillbox_fields_follow_bessel_profile() {
        // TM010: E_z ~ J0(k r), H_phi ~ J1(k r)
        let mode = pillbox(1e-4);
        let kr = 2.0 * PI * mode.frequency() / K.c;
        let (e_axis, _) = mode.field_at(0.0, 5e-3).unwrap();
        let (e_mid, h_mid) = mode.field_at(3.5e-3, 5e-3).unwrap();
        assert!((e_mid / e_axis - libm::j0(kr * 3.5e-3)).abs() < 0.01);
        let (_, h_peak) = mode.field_at(1.8412 / kr, 5e-3).unwrap();
        assert!((h_mid / h_peak - libm::j1(kr * 3.5e-3) / libm::j1(1.8412)).abs() < 0.01);
    }

    #[test]
    fn pillbox_geometry_factor() {
        // closed-form TM010 value: G = eta * j01 / (2 (1 + R/L))
        let mode = pillbox(1e-4);
        let exact = K.z0() * BESSEL_J0_ZERO / (2.0 * (1.0 + 7.0 / 10.0));
        assert!((mode.geometry_factor() / exact - 1.0).abs() < 0.02, "{}", mode.geometry_factor());
    }

    #[test]
    fn tangential_e_vanishes_on_walls() {
        let mode = pillbox(2e-4);
        let s = mode.sample(7e-3, 4e-3).unwrap();
        assert_eq!(s.e_z, 0.0);
        let s = mode.sample(3e-3, 10e-3).unwrap();
        assert_eq!(s.e_r, 0.0);
    }

    #[test]
    fn outside_points_rejected() {
        let mode = pillbox(2e-4);
        assert!(mode.field_at(8e-3, 5e-3).is_err());
        assert!(mode.field_at(1e-3, 11e-3).is_err());
    }

    #[test]
    fn coax_estimate_examples() {
        let g = CavityGeometry::REFERENCE;
        assert!((quarter_wave(5e-3, 0.0, &K) - 1.4990e10).abs() < 1e6);
        assert!((quarter_wave(10e-3, 0.0, &K) * 2.0 - quarter_wave(5e-3, 0.0, &K)).abs() < 1e-3);
        let dl = end_correction(&g, &K);
        assert!(dl > 0.0);
        assert!(analytic_coax_estimate(&g, &K) < quarter_wave(5e-3, 0.0, &K));
    }

    #[test]
    fn beta_examples() {
        let g = CavityGeometry::REFERENCE;
        let b0 = evanescent_beta(0.0, &g, &K, BetaMode::Tm01).unwrap();
        assert!((b0 - 343.6).abs() < 0.1);
        let fc = BESSEL_J0_ZERO / 7e-3 * K.c / (2.0 * PI);
        assert!(evanescent_beta(fc, &g, &K, BetaMode::Tm01).unwrap() < 1e-3);
        assert!(matches!(evanescent_beta(fc * 1.01, &g, &K, BetaMode::Tm01), Err(Error::Propagating)));
        let te = evanescent_beta(0.0, &g, &K, BetaMode::Te11).unwrap();
        assert!(te < b0);
    }

    #[test]
    fn drive_scaling() {
        let mode = pillbox(2e-4);
        let b = |p| mode.rf_field_amplitude(p, 1e5, 1e6, mode.frequency()).unwrap();
        assert_eq!(b(0.0), 0.0);
        let lo = b(crate::units::dbm_to_watts(-15.0).unwrap());
        let hi = b(crate::units::dbm_to_watts(5.0).unwrap());
        assert!((hi / lo - 10.0).abs() < 1e-9);
    }

    #[test]
    fn coarse_grid_rejected() {
        let g = CavityGeometry::REFERENCE;
        let grid = GridSpec::covering(&g, 5e-4, 5e-4).unwrap();
        assert!(matches!(solve_bare_mode(&g, &grid, &K), Err(Error::Precondition(_))));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn beta_decreases_with_frequency(f in 0.0f64..1.6e10, df in 1e6f64..3e8) {
            let g = CavityGeometry::REFERENCE;
            let a = evanescent_beta(f, &g, &K, BetaMode::Tm01).unwrap();
            let b = evanescent_beta(f + df, &g, &K, BetaMode::Tm01).unwrap();
            proptest::prop_assert!(b < a);
        }
    }
}
