//! Uniform staggered (MAC) grid on the channel `(0, lx) × (0, lz)`.
//!
//! Scalars live at cell centers, indexed `j * nx + i` with `i` along `x`
//! (horizontal) and `j` along `z` (vertical, the direction of `e_n`).
//! Horizontal velocity `u` lives on the `(nx + 1) × nz` vertical faces,
//! vertical velocity `w` on the `nx × (nz + 1)` horizontal faces.
//!
//! Boundary naming follows the channel: the inlet is the bottom `z = 0`,
//! the outlet the top `z = lz`, the walls are `x = 0` and `x = lx`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub nz: usize,
    pub lx: f64,
    pub lz: f64,
    pub dx: f64,
    pub dz: f64,
}

impl Grid {
    pub fn new(nx: usize, nz: usize, lx: f64, lz: f64) -> Result<Self> {
        if nx == 0 || nz == 0 {
            return Err(Error::ConfigInvalid(format!("grid needs at least one cell, got {nx}x{nz}")));
        }
        if !(lx > 0.0 && lz > 0.0 && lx.is_finite() && lz.is_finite()) {
            return Err(Error::ConfigInvalid(format!("grid extents must be positive, got {lx}x{lz}")));
        }
        Ok(Self { nx, nz, lx, lz, dx: lx / nx as f64, dz: lz / nz as f64 })
    }

    pub fn cells(&self) -> usize {
        self.nx * self.nz
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dz
    }

    /// Cell-center coordinates.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dz)
    }

    pub fn u_faces(&self) -> usize {
        (self.nx + 1) * self.nz
    }

    pub fn w_faces(&self) -> usize {
        self.nx * (self.nz + 1)
    }

    /// Index of the vertical face at `x = i dx` in row `j`.
    #[inline]
    pub fn u_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Index of the horizontal face at `z = j dz` in column `i`.
    #[inline]
    pub fn w_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

/// Which boundary conditions the domain carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Inlet at the bottom (Dirichlet composition, zero temperature,
    /// unit inflow), impervious side walls and an outlet at the top.
    Channel,
    /// Zero flux through every side.
    ClosedBox,
}

/// Face-centered velocity on the staggered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

impl VelocityField {
    pub fn zeros(grid: &Grid) -> Self {
        Self { u: vec![0.0; grid.u_faces()], w: vec![0.0; grid.w_faces()] }
    }

    /// The unit vertical field `e_n`, which satisfies the channel boundary
    /// conditions exactly.
    pub fn lifted(grid: &Grid) -> Self {
        Self { u: vec![0.0; grid.u_faces()], w: vec![1.0; grid.w_faces()] }
    }

    /// Discrete divergence per cell.
    pub fn divergence(&self, grid: &Grid) -> Vec<f64> {
        let mut div = vec![0.0; grid.cells()];
        for j in 0..grid.nz {
            for i in 0..grid.nx {
                div[grid.cell(i, j)] = (self.u[grid.u_index(i + 1, j)] - self.u[grid.u_index(i, j)]) / grid.dx
                    + (self.w[grid.w_index(i, j + 1)] - self.w[grid.w_index(i, j)]) / grid.dz;
            }
        }
        div
    }

    pub fn max_divergence(&self, grid: &Grid) -> f64 {
        self.divergence(grid).iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Largest face speed of either component.
    pub fn max_speed(&self) -> f64 {
        self.u.iter().chain(&self.w).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest per-cell inflow rate `Σ |v·ν|⁻ / h` over a cell's faces.
    pub fn max_inflow_rate(&self, grid: &Grid) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..grid.nz {
            for i in 0..grid.nx {
                let west = self.u[grid.u_index(i, j)].max(0.0);
                let east = (-self.u[grid.u_index(i + 1, j)]).max(0.0);
                let south = self.w[grid.w_index(i, j)].max(0.0);
                let north = (-self.w[grid.w_index(i, j + 1)]).max(0.0);
                worst = worst.max((west + east) / grid.dx + (south + north) / grid.dz);
            }
        }
        worst
    }

    /// Velocity interpolated to cell centers, `(u, w)` per cell.
    pub fn cell_centered(&self, grid: &Grid) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(grid.cells());
        for j in 0..grid.nz {
            for i in 0..grid.nx {
                out.push([
                    0.5 * (self.u[grid.u_index(i, j)] + self.u[grid.u_index(i + 1, j)]),
                    0.5 * (self.w[grid.w_index(i, j)] + self.w[grid.w_index(i, j + 1)]),
                ]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifted_field_is_divergence_free() {
        let g = Grid::new(5, 7, 1.0, 2.0).unwrap();
        assert_eq!(VelocityField::lifted(&g).max_divergence(&g), 0.0);
        assert!(Grid::new(0, 3, 1.0, 1.0).is_err());
        assert!(Grid::new(3, 3, -1.0, 1.0).is_err());
    }

    #[test]
    fn inflow_rate_counts_incoming_faces() {
        let g = Grid::new(2, 2, 1.0, 1.0).unwrap();
        let v = VelocityField::lifted(&g);
        assert_eq!(v.max_inflow_rate(&g), 2.0);
        assert_eq!(v.cell_centered(&g)[3], [0.0, 1.0]);
    }
}
