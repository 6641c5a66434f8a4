//! Cell-centred staircase meshes of axisymmetric cavities.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::units::CavityGeometry;

/// Uniform `(r, z)` grid anchored at the axis and the cavity floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dr: f64,
    pub dz: f64,
    pub nr: usize,
    pub nz: usize,
}

fn cells(extent: f64, step: f64) -> usize {
    // tolerate round-off in extent / step
    libm::ceil(extent / step - 1e-9) as usize
}

impl GridSpec {
    /// The smallest grid with the given spacing that covers the cavity.
    pub fn covering(g: &CavityGeometry, dr: f64, dz: f64) -> Result<Self> {
        if !(dr > 0.0 && dz > 0.0) {
            return Err(Error::Precondition("grid spacing must be > 0".into()));
        }
        let grid = Self { dr, dz, nr: cells(g.outer_radius, dr), nz: cells(g.outer_height, dz) };
        grid.validate(g)?;
        Ok(grid)
    }

    pub fn validate(&self, g: &CavityGeometry) -> Result<()> {
        if !(self.dr > 0.0 && self.dz > 0.0) || !self.dr.is_finite() || !self.dz.is_finite() {
            return Err(Error::Precondition("grid spacing must be > 0".into()));
        }
        let slack = 1e-9;
        if (self.nr as f64) * self.dr < g.outer_radius * (1.0 - slack)
            || (self.nz as f64) * self.dz < g.outer_height * (1.0 - slack)
        {
            return Err(Error::Precondition(format!(
                "grid {}x{} does not cover the cavity",
                self.nr, self.nz
            )));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.nr * self.nz
    }

    pub fn r_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dr
    }

    pub fn z_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dz
    }

    pub fn r_face(&self, i: usize) -> f64 {
        i as f64 * self.dr
    }

    pub fn z_face(&self, j: usize) -> f64 {
        j as f64 * self.dz
    }
}

/// A grid plus a mask of which cells are vacuum. Everything else is perfect
/// conductor.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisymmetricMesh {
    grid: GridSpec,
    vacuum: Vec<bool>,
}

impl AxisymmetricMesh {
    fn from_predicate(grid: GridSpec, inside: impl Fn(f64, f64) -> bool) -> Self {
        let mut vacuum = Vec::with_capacity(grid.cell_count());
        for j in 0..grid.nz {
            for i in 0..grid.nr {
                vacuum.push(inside(grid.r_center(i), grid.z_center(j)));
            }
        }
        Self { grid, vacuum }
    }

    /// The coaxial stub cavity.
    pub fn cavity(g: &CavityGeometry, grid: GridSpec) -> Result<Self> {
        g.validate()?;
        grid.validate(g)?;
        let g = *g;
        Ok(Self::from_predicate(grid, move |r, z| {
            r < g.outer_radius
                && z < g.outer_height
                && !(r < g.stub_radius && z < g.stub_height)
        }))
    }

    /// A closed cylinder with no stub.
    pub fn pillbox(radius: f64, height: f64, grid: GridSpec) -> Result<Self> {
        if !(radius > 0.0 && height > 0.0) {
            return Err(Error::domain("pillbox dimensions must be > 0"));
        }
        let g = CavityGeometry {
            outer_radius: radius,
            outer_height: height,
            stub_height: 0.0,
            stub_radius: 0.0,
        };
        grid.validate(&g)?;
        Ok(Self::from_predicate(grid, move |r, z| r < radius && z < height))
    }

    /// Fills every cell whose centre lies inside an on-axis sphere.
    pub fn with_sphere(mut self, center_z: f64, radius: f64) -> Self {
        let grid = self.grid;
        for j in 0..grid.nz {
            for i in 0..grid.nr {
                let (r, z) = (grid.r_center(i), grid.z_center(j));
                if r * r + (z - center_z) * (z - center_z) < radius * radius {
                    self.vacuum[i + grid.nr * j] = false;
                }
            }
        }
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn is_vacuum(&self, i: usize, j: usize) -> bool {
        i < self.grid.nr && j < self.grid.nz && self.vacuum[i + self.grid.nr * j]
    }

    /// Like [`is_vacuum`](Self::is_vacuum) but tolerant of indices one past
    /// either edge.
    pub(crate) fn vacuum_at(&self, i: isize, j: isize) -> bool {
        i >= 0 && j >= 0 && self.is_vacuum(i as usize, j as usize)
    }

    pub fn vacuum_cells(&self) -> usize {
        self.vacuum.iter().filter(|&&v| v).count()
    }

    /// True if `(r, z)` lies in the closure of some vacuum cell.
    pub fn contains(&self, r: f64, z: f64) -> bool {
        if !(r >= 0.0) || !(z >= 0.0) || !r.is_finite() || !z.is_finite() {
            return false;
        }
        let eps_r = 1e-9 * self.grid.dr;
        let eps_z = 1e-9 * self.grid.dz;
        let mut any = false;
        for dr in [-eps_r, eps_r] {
            for dz in [-eps_z, eps_z] {
                let (rr, zz) = (r + dr, z + dz);
                if rr < 0.0 || zz < 0.0 {
                    continue;
                }
                let i = libm::floor(rr / self.grid.dr) as isize;
                let j = libm::floor(zz / self.grid.dz) as isize;
                any |= self.vacuum_at(i, j);
            }
        }
        any
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covering_grid_counts() {
        let g = CavityGeometry::REFERENCE;
        let grid = GridSpec::covering(&g, 1e-4, 1e-4).unwrap();
        assert_eq!((grid.nr, grid.nz), (70, 550));
        assert!(GridSpec { nr: 10, ..grid }.validate(&g).is_err());
        assert!(GridSpec::covering(&g, 0.0, 1e-4).is_err());
    }

    #[test]
    fn stub_cells_are_metal() {
        let g = CavityGeometry::REFERENCE;
        let mesh = AxisymmetricMesh::cavity(&g, GridSpec::covering(&g, 1e-4, 1e-4).unwrap()).unwrap();
        assert!(!mesh.is_vacuum(0, 0));
        assert!(!mesh.is_vacuum(19, 49));
        assert!(mesh.is_vacuum(20, 49));
        assert!(mesh.is_vacuum(19, 50));
        let expected = 70 * 550 - 20 * 50;
        assert_eq!(mesh.vacuum_cells(), expected);
    }

    #[test]
    fn contains_respects_metal() {
        let g = CavityGeometry::REFERENCE;
        let mesh = AxisymmetricMesh::cavity(&g, GridSpec::covering(&g, 1e-4, 1e-4).unwrap()).unwrap();
        assert!(mesh.contains(0.0, 5e-3));
        assert!(mesh.contains(2e-3, 2e-3));
        assert!(mesh.contains(7e-3, 30e-3));
        assert!(!mesh.contains(1e-3, 4e-3));
        assert!(!mesh.contains(7.1e-3, 30e-3));
        assert!(!mesh.contains(-1e-3, 30e-3));
    }

    #[test]
    fn sphere_removes_cells() {
        let grid = GridSpec { dr: 1e-4, dz: 1e-4, nr: 70, nz: 100 };
        let mesh = AxisymmetricMesh::pillbox(7e-3, 10e-3, grid).unwrap();
        let with = mesh.clone().with_sphere(5e-3, 0.5e-3);
        assert!(with.vacuum_cells() < mesh.vacuum_cells());
        assert!(!with.is_vacuum(0, 50));
        assert!(with.is_vacuum(6, 50));
    }
}
