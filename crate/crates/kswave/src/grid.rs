//! Uniform mesh on the truncated co-moving strip `[-l_z, l_z] x [0, lambda)`,
//! periodic in `y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How transversal (`y`) derivatives are discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum YScheme {
    /// Second-order centered periodic differences (default, shared by all steppers).
    #[default]
    Centered,
    /// Trigonometric-interpolation derivatives, for convergence studies.
    Spectral,
}

/// Node budget guard; 2D double fields beyond this are almost certainly a typo.
pub const MAX_NODES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripGrid {
    /// Half-length of the truncated z-domain.
    pub l_z: f64,
    /// Number of z nodes (both endpoints included).
    pub nz: usize,
    /// Transversal period.
    pub lambda: f64,
    /// Number of y nodes; node `y = lambda` is identified with `y = 0`.
    pub ny: usize,
    pub dz: f64,
    pub dy: f64,
    #[serde(default)]
    pub y_scheme: YScheme,
}

impl StripGrid {
    pub fn new(l_z: f64, nz: usize, lambda: f64, ny: usize) -> Result<Self> {
        if !(l_z > 0.0) || !(lambda > 0.0) {
            return Err(Error::InvalidParams(format!(
                "grid extents must be positive: l_z = {l_z}, lambda = {lambda}"
            )));
        }
        if nz < 16 {
            return Err(Error::InvalidParams(format!("nz = {nz}, need at least 16")));
        }
        if ny < 4 || !ny.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "ny = {ny}, need an even count of at least 4"
            )));
        }
        if nz.saturating_mul(ny) > MAX_NODES {
            return Err(Error::InvalidParams(format!(
                "grid {nz} x {ny} exceeds the node budget {MAX_NODES}"
            )));
        }
        Ok(Self {
            l_z,
            nz,
            lambda,
            ny,
            dz: 2.0 * l_z / (nz - 1) as f64,
            dy: lambda / ny as f64,
            y_scheme: YScheme::default(),
        })
    }

    pub fn with_y_scheme(mut self, scheme: YScheme) -> Self {
        self.y_scheme = scheme;
        self
    }

    pub fn z(&self, i: usize) -> f64 {
        -self.l_z + i as f64 * self.dz
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy
    }

    pub fn z_nodes(&self) -> Vec<f64> {
        (0..self.nz).map(|i| self.z(i)).collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nz, self.ny)
    }

    /// Width of the zero-buffer next to each z-boundary where perturbation
    /// fields must vanish. Default 10% of the half-length.
    pub fn buffer_width(&self) -> f64 {
        0.1 * self.l_z
    }

    /// True if node `i` lies in the buffer zone at either z end.
    pub fn in_buffer(&self, i: usize) -> bool {
        let z = self.z(i);
        z <= -self.l_z + self.buffer_width() || z >= self.l_z - self.buffer_width()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacings() {
        let g = StripGrid::new(10.0, 101, 0.5, 8).unwrap();
        assert!((g.dz - 0.2).abs() < 1e-15);
        assert!((g.dy - 0.0625).abs() < 1e-15);
        assert_eq!(g.z(0), -10.0);
        assert_eq!(g.z(100), 10.0);
        assert!((g.y(8) - g.lambda).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(StripGrid::new(10.0, 8, 0.5, 8).is_err());
        assert!(StripGrid::new(10.0, 64, 0.5, 7).is_err());
        assert!(StripGrid::new(-1.0, 64, 0.5, 8).is_err());
    }
}
