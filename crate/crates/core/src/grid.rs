//! Structured grid on the unit square, cyclic boundary indexing, and
//! piecewise-constant coefficient fields.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dyadic tensor grid on `[0,1]^2` with `2^level + 1` nodes per dimension.
///
/// Boundary nodes are ordered counterclockwise starting from the corner
/// `(0,0)`, so index distance is meaningful modulo the boundary count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    level: u32,
}

pub const MAX_LEVEL: u32 = 12;

impl GridSpec {
    pub fn new(level: u32) -> Result<Self> {
        if level == 0 || level > MAX_LEVEL {
            return Err(Error::UnsupportedLevel {
                level,
                max: MAX_LEVEL,
            });
        }
        Ok(Self { level })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Nodes per dimension, `2^level + 1`.
    pub fn nodes_per_dim(&self) -> usize {
        (1usize << self.level) + 1
    }

    /// Cells per dimension, `2^level`.
    pub fn cells_per_dim(&self) -> usize {
        1usize << self.level
    }

    /// Mesh size `h = 1/(nodes_per_dim - 1)`.
    pub fn mesh_size(&self) -> f64 {
        1.0 / (self.nodes_per_dim() - 1) as f64
    }

    /// Number of boundary nodes, `4 * (nodes_per_dim - 1) = 2^(level+2)`.
    pub fn boundary_count(&self) -> usize {
        4 * (self.nodes_per_dim() - 1)
    }

    /// Number of interior nodes, `(nodes_per_dim - 2)^2`.
    pub fn interior_count(&self) -> usize {
        let m = self.nodes_per_dim() - 2;
        m * m
    }

    /// Grid coordinates `(ix, iy)` of the k-th boundary node in cyclic
    /// counterclockwise order starting at `(0,0)`.
    pub fn boundary_node(&self, k: usize) -> (usize, usize) {
        let m = self.nodes_per_dim() - 1;
        debug_assert!(k < 4 * m);
        let edge = k / m;
        let off = k % m;
        match edge {
            0 => (off, 0),          // bottom, left to right
            1 => (m, off),          // right, bottom to top
            2 => (m - off, m),      // top, right to left
            _ => (0, m - off),      // left, top to bottom
        }
    }

    /// Physical coordinates of the k-th boundary node.
    pub fn boundary_coords(&self, k: usize) -> (f64, f64) {
        let h = self.mesh_size();
        let (ix, iy) = self.boundary_node(k);
        (ix as f64 * h, iy as f64 * h)
    }

    /// Arclength of the k-th boundary node measured counterclockwise from
    /// `(0,0)`; the perimeter is 4.
    pub fn boundary_arclength(&self, k: usize) -> f64 {
        k as f64 * self.mesh_size()
    }

    /// Inverse of [`boundary_node`]: cyclic boundary index of grid node
    /// `(ix, iy)`, or `None` for interior nodes.
    pub fn boundary_index(&self, ix: usize, iy: usize) -> Option<usize> {
        let m = self.nodes_per_dim() - 1;
        if iy == 0 && ix < m {
            Some(ix)
        } else if ix == m && iy < m {
            Some(m + iy)
        } else if iy == m && ix > 0 {
            Some(2 * m + (m - ix))
        } else if ix == 0 && iy > 0 {
            Some(3 * m + (m - iy))
        } else {
            None
        }
    }
}

/// A point on the boundary of the unit square, as handed to boundary data
/// functions: physical coordinates plus arclength along the cyclic ordering.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: f64,
    /// Counterclockwise arclength from `(0,0)`; the perimeter is 4.
    pub arclength: f64,
}

/// Nodal interpolation of a continuous boundary function at the cyclically
/// ordered boundary nodes.
pub fn boundary_project<F>(grid: &GridSpec, f: F) -> Vec<f64>
where
    F: Fn(BoundaryPoint) -> f64,
{
    (0..grid.boundary_count())
        .map(|k| {
            let (x, y) = grid.boundary_coords(k);
            f(BoundaryPoint {
                x,
                y,
                arclength: grid.boundary_arclength(k),
            })
        })
        .collect()
}

/// Piecewise-constant coefficient on a square pixel grid.
///
/// The pixel grid must divide the FE cell grid so each element lies inside
/// exactly one pixel. Values are strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductivityField {
    resolution: usize,
    values: Vec<f64>,
}

impl ConductivityField {
    /// Row-major pixel values, `values[py * resolution + px]`.
    pub fn new(resolution: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != resolution * resolution {
            return Err(Error::DimensionMismatch {
                context: "conductivity values vs resolution^2",
                expected: resolution * resolution,
                got: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositiveConductivity { index, value });
            }
        }
        Ok(Self { resolution, values })
    }

    pub fn constant(resolution: usize, value: f64) -> Result<Self> {
        Self::new(resolution, vec![value; resolution * resolution])
    }

    /// Rasterize `f(x, y)` at pixel centers.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(resolution: usize, f: F) -> Result<Self> {
        let mut values = Vec::with_capacity(resolution * resolution);
        for py in 0..resolution {
            for px in 0..resolution {
                let x = (px as f64 + 0.5) / resolution as f64;
                let y = (py as f64 + 0.5) / resolution as f64;
                values.push(f(x, y));
            }
        }
        Self::new(resolution, values)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, px: usize, py: usize) -> f64 {
        self.values[py * self.resolution + px]
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.resolution, self.values.iter().map(|v| v * c).collect())
    }

    /// Check that the pixel grid divides the cell grid of `grid`.
    pub fn check_compatible(&self, grid: &GridSpec) -> Result<usize> {
        let cells = grid.cells_per_dim();
        if self.resolution == 0 || cells % self.resolution != 0 {
            return Err(Error::IncompatibleParamGrid {
                param: self.resolution,
                cells,
            });
        }
        Ok(cells / self.resolution)
    }

    /// Pixel index owning cell `(cx, cy)` of the given grid.
    pub fn pixel_of_cell(&self, grid: &GridSpec, cx: usize, cy: usize) -> usize {
        let ratio = grid.cells_per_dim() / self.resolution;
        (cy / ratio) * self.resolution + (cx / ratio)
    }
}

/// One ellipse of the head phantom: additive intensity, semi-axes, center
/// and rotation in the `[-1,1]^2` phantom frame.
struct Ellipse {
    intensity: f64,
    a: f64,
    b: f64,
    x0: f64,
    y0: f64,
    phi_deg: f64,
}

const SHEPP_LOGAN: [Ellipse; 10] = [
    Ellipse { intensity: 2.00, a: 0.6900, b: 0.9200, x0: 0.00, y0: 0.0000, phi_deg: 0.0 },
    Ellipse { intensity: -0.98, a: 0.6624, b: 0.8740, x0: 0.00, y0: -0.0184, phi_deg: 0.0 },
    Ellipse { intensity: -0.02, a: 0.1100, b: 0.3100, x0: 0.22, y0: 0.0000, phi_deg: -18.0 },
    Ellipse { intensity: -0.02, a: 0.1600, b: 0.4100, x0: -0.22, y0: 0.0000, phi_deg: 18.0 },
    Ellipse { intensity: 0.01, a: 0.2100, b: 0.2500, x0: 0.00, y0: 0.3500, phi_deg: 0.0 },
    Ellipse { intensity: 0.01, a: 0.0460, b: 0.0460, x0: 0.00, y0: 0.1000, phi_deg: 0.0 },
    Ellipse { intensity: 0.01, a: 0.0460, b: 0.0460, x0: 0.00, y0: -0.1000, phi_deg: 0.0 },
    Ellipse { intensity: 0.01, a: 0.0460, b: 0.0230, x0: -0.08, y0: -0.6050, phi_deg: 0.0 },
    Ellipse { intensity: 0.01, a: 0.0230, b: 0.0230, x0: 0.00, y0: -0.6060, phi_deg: 0.0 },
    Ellipse { intensity: 0.01, a: 0.0230, b: 0.0460, x0: 0.06, y0: -0.6050, phi_deg: 0.0 },
];

/// Raw Shepp-Logan intensity at `(x, y)` in `[0,1]^2`, in `[0, 2]`.
pub fn shepp_logan_intensity(x: f64, y: f64) -> f64 {
    // Map the unit square onto the phantom frame [-1,1]^2.
    let xp = 2.0 * x - 1.0;
    let yp = 2.0 * y - 1.0;
    let mut v = 0.0;
    for e in &SHEPP_LOGAN {
        let phi = e.phi_deg.to_radians();
        let (s, c) = phi.sin_cos();
        let dx = xp - e.x0;
        let dy = yp - e.y0;
        let u = c * dx + s * dy;
        let w = -s * dx + c * dy;
        if (u / e.a).powi(2) + (w / e.b).powi(2) <= 1.0 {
            v += e.intensity;
        }
    }
    v
}

/// Shepp-Logan phantom rasterized to a pixel grid and affinely mapped to
/// conductivity values in `[1, 2]` so the coefficient stays positive.
pub fn shepp_logan_conductivity(resolution: usize) -> ConductivityField {
    ConductivityField::from_fn(resolution, |x, y| {
        1.0 + 0.5 * shepp_logan_intensity(x, y).clamp(0.0, 2.0)
    })
    .expect("phantom values are positive by construction")
}

/// Two circular inclusions of value 2 on a unit background.
pub fn two_blob_conductivity(resolution: usize) -> ConductivityField {
    ConductivityField::from_fn(resolution, |x, y| {
        let d1 = (x - 0.34).powi(2) + (y - 0.62).powi(2);
        let d2 = (x - 0.66).powi(2) + (y - 0.36).powi(2);
        if d1 <= 0.15f64.powi(2) || d2 <= 0.15f64.powi(2) {
            2.0
        } else {
            1.0
        }
    })
    .expect("blob values are positive by construction")
}

/// Smooth radial bump, values in `[1, 2]`.
pub fn smooth_bump_conductivity(resolution: usize) -> ConductivityField {
    ConductivityField::from_fn(resolution, |x, y| {
        let r2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
        1.0 + (-r2 / 0.08).exp()
    })
    .expect("bump values are positive by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_counts_are_dyadic() {
        for level in 1..=8 {
            let g = GridSpec::new(level).unwrap();
            assert_eq!(g.nodes_per_dim(), (1 << level) + 1);
            assert_eq!(g.boundary_count(), 1 << (level + 2));
            assert_abs_diff_eq!(
                g.mesh_size() * (g.nodes_per_dim() - 1) as f64,
                1.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn boundary_ordering_is_cyclic_and_involutive() {
        let g = GridSpec::new(3).unwrap();
        let n = g.boundary_count();
        assert_eq!(g.boundary_node(0), (0, 0));
        // Walk counterclockwise: consecutive nodes are grid neighbors.
        for k in 0..n {
            let (x0, y0) = g.boundary_node(k);
            let (x1, y1) = g.boundary_node((k + 1) % n);
            let d = x0.abs_diff(x1) + y0.abs_diff(y1);
            assert_eq!(d, 1, "nodes {k} and {} are not adjacent", (k + 1) % n);
            assert_eq!(g.boundary_index(x0, y0), Some(k));
        }
        assert_eq!(g.boundary_index(3, 3), None);
    }

    #[test]
    fn boundary_project_reproduces_constants_and_linears() {
        let g = GridSpec::new(3).unwrap();
        let ones = boundary_project(&g, |_| 1.0);
        assert!(ones.iter().all(|&v| v == 1.0));

        let xs = boundary_project(&g, |p| p.x);
        for (k, &v) in xs.iter().enumerate() {
            let (x, _) = g.boundary_coords(k);
            assert_abs_diff_eq!(v, x, epsilon = 1e-15);
        }
    }

    #[test]
    fn boundary_project_matches_pointwise_cosine() {
        // Oracle: direct evaluation of cos(2*pi*t) at the 32 nodes of level 3.
        let g = GridSpec::new(3).unwrap();
        let got = boundary_project(&g, |p| (2.0 * std::f64::consts::PI * p.arclength).cos());
        assert_eq!(got.len(), 32);
        for (k, &v) in got.iter().enumerate() {
            let t = k as f64 * g.mesh_size();
            let expect = (2.0 * std::f64::consts::PI * t).cos();
            assert_abs_diff_eq!(v, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn conductivity_rejects_nonpositive() {
        assert!(ConductivityField::new(2, vec![1.0, 2.0, 3.0, 0.0]).is_err());
        assert!(ConductivityField::new(2, vec![1.0, 2.0, 3.0, -1.0]).is_err());
        assert!(ConductivityField::new(2, vec![1.0, 2.0, 3.0, f64::NAN]).is_err());
        assert!(ConductivityField::new(2, vec![1.0; 4]).is_ok());
    }

    #[test]
    fn param_grid_must_divide_cell_grid() {
        let g = GridSpec::new(4).unwrap(); // 16 cells per dim
        assert!(ConductivityField::constant(8, 1.0).unwrap().check_compatible(&g).is_ok());
        assert!(ConductivityField::constant(16, 1.0).unwrap().check_compatible(&g).is_ok());
        assert!(ConductivityField::constant(3, 1.0).unwrap().check_compatible(&g).is_err());
        assert!(ConductivityField::constant(32, 1.0).unwrap().check_compatible(&g).is_err());
    }

    #[test]
    fn shepp_logan_values_lie_in_unit_band() {
        let f = shepp_logan_conductivity(64);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in f.values() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!(lo >= 1.0 && hi <= 2.0, "range [{lo}, {hi}]");
        // The skull ring must actually reach the top of the band.
        assert!(hi > 1.9);
    }
}
