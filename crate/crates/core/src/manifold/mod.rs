//! Discrete Riemannian geometry on closed manifolds.
//!
//! Three backends are supported:
//!
//! * [`Geometry::Circle1D`]: a periodic line with metric `g = φ² dx²`;
//! * [`Geometry::ConformalTorus2D`]: a periodic square with `g = e^{2w}(dx² + dy²)`;
//! * [`Geometry::RoundSphere`]: the round `n`-sphere of radius² `r²`, handled
//!   analytically. Its fields live on the single-node homogeneous grid.
//!
//! Both grid backends are conformally flat, `g_ij = a·δ_ij` with `a = φ²` or
//! `a = e^{2w}`, which every kernel in [`ops`] exploits. Differential
//! operators use second-order centred differences; the Laplace–Beltrami
//! operator is written in divergence form so that `∫ Δf dμ` telescopes to zero.

mod distance;
mod ops;

pub use ops::Connection;

use crate::error::{invalid, GeoError, Result};
use crate::grid::{GridSpec, ScalarField, SymTensorField};

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// `g = φ² dx²` on a periodic line; `φ > 0`.
    Circle1D { phi: ScalarField },
    /// `g = e^{2w}(dx² + dy²)` on a periodic square.
    ConformalTorus2D { w: ScalarField },
    /// Round sphere `S^n` with `g = r² ĝ`.
    RoundSphere { n: usize, r2: f64 },
}

impl Geometry {
    pub fn circle(phi: ScalarField) -> Result<Self> {
        if phi.grid().dim() != 1 {
            return Err(invalid("Circle1D needs a 1D grid"));
        }
        if phi.min() <= 0.0 {
            return Err(GeoError::Extinction {
                t: f64::NAN,
                detail: format!("φ must be positive, min φ = {}", phi.min()),
            });
        }
        Ok(Self::Circle1D { phi })
    }

    pub fn torus(w: ScalarField) -> Result<Self> {
        if w.grid().dim() != 2 {
            return Err(invalid("ConformalTorus2D needs a 2D grid"));
        }
        Ok(Self::ConformalTorus2D { w })
    }

    pub fn sphere(n: usize, r2: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("sphere dimension must be at least 2, got {n}")));
        }
        if !(r2.is_finite() && r2 > 0.0) {
            return Err(GeoError::Extinction { t: f64::NAN, detail: format!("r² = {r2}") });
        }
        Ok(Self::RoundSphere { n, r2 })
    }

    /// Flat circle of circumference `len`.
    pub fn flat_circle(n: usize, len: f64) -> Result<Self> {
        Self::circle(ScalarField::constant(GridSpec::line(n, len)?, 1.0))
    }

    /// Flat square torus of side `len`.
    pub fn flat_torus(n: usize, len: f64) -> Result<Self> {
        Self::torus(ScalarField::zeros(GridSpec::square(n, len)?))
    }

    pub fn backend_name(&self) -> &'static str {
        match self {
            Self::Circle1D { .. } => "circle",
            Self::ConformalTorus2D { .. } => "torus",
            Self::RoundSphere { .. } => "sphere",
        }
    }

    pub fn grid(&self) -> GridSpec {
        match self {
            Self::Circle1D { phi } => *phi.grid(),
            Self::ConformalTorus2D { w } => *w.grid(),
            Self::RoundSphere { .. } => GridSpec::homogeneous(),
        }
    }

    /// Manifold dimension `n` (not the grid dimension on the sphere).
    pub fn dimension(&self) -> usize {
        match self {
            Self::Circle1D { .. } => 1,
            Self::ConformalTorus2D { .. } => 2,
            Self::RoundSphere { n, .. } => *n,
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self, Self::RoundSphere { .. })
    }

    pub(crate) fn require_grid(&self, op: &'static str) -> Result<()> {
        if self.is_analytic() {
            Err(GeoError::UnsupportedBackend { op, backend: self.backend_name() })
        } else {
            Ok(())
        }
    }

    /// Conformal factor `a` with `g_ij = a δ_ij` (`1` on the sphere, where
    /// tensors are stored relative to `g`).
    pub fn conformal_factor(&self) -> ScalarField {
        match self {
            Self::Circle1D { phi } => phi.map(|p| p * p),
            Self::ConformalTorus2D { w } => w.map(|w| (2.0 * w).exp()),
            Self::RoundSphere { .. } => ScalarField::constant(GridSpec::homogeneous(), 1.0),
        }
    }

    /// The metric `g_ij` as a tensor field.
    pub fn metric(&self) -> SymTensorField {
        let grid = self.grid();
        let a = self.conformal_factor();
        match grid.dim() {
            2 => SymTensorField::from_raw(
                grid,
                a.values().iter().flat_map(|&a| [a, 0.0, a]).collect(),
            ),
            _ => SymTensorField::from_raw(grid, a.into_values()),
        }
    }

    /// Riemannian volume density `√det g` relative to the coordinate measure.
    pub fn volume_density(&self) -> ScalarField {
        match self {
            Self::Circle1D { phi } => phi.clone(),
            Self::ConformalTorus2D { w } => w.map(|w| (2.0 * w).exp()),
            Self::RoundSphere { .. } => ScalarField::constant(GridSpec::homogeneous(), 1.0),
        }
    }

    /// Total volume of the manifold.
    pub fn volume(&self) -> f64 {
        match self {
            Self::RoundSphere { n, r2 } => unit_sphere_area(*n) * r2.powf(*n as f64 / 2.0),
            _ => {
                let grid = self.grid();
                self.volume_density().values().iter().sum::<f64>() * grid.cell_volume()
            }
        }
    }
}

/// Area of the unit `n`-sphere in `R^{n+1}`.
pub fn unit_sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 1.0) * unit_sphere_area(n - 2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(2) - 4.0 * PI).abs() < 1e-12);
        assert!((unit_sphere_area(3) - 2.0 * PI * PI).abs() < 1e-12);
        let s = Geometry::sphere(2, 2.0).unwrap();
        assert!((s.volume() - 8.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn constructors_validate() {
        let g = GridSpec::line(8, 1.0).unwrap();
        assert!(Geometry::circle(ScalarField::constant(g, 0.0)).is_err());
        assert!(Geometry::sphere(1, 1.0).is_err());
        assert!(Geometry::sphere(2, -1.0).is_err());
        assert!(Geometry::torus(ScalarField::zeros(g)).is_err());
    }

    #[test]
    fn flat_torus_volume() {
        let t = Geometry::flat_torus(16, 2.0).unwrap();
        assert!((t.volume() - 4.0).abs() < 1e-12);
    }
}
