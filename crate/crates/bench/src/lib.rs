//! Shared fixtures for the kernel benchmarks.

use std::f64::consts::TAU;

use geoflow_core::{FlowKind, FlowState, Geometry, GridSpec, InitialData, PmeState, ScalarField};

/// Conformal torus with a smooth non-flat factor.
pub fn wavy_torus(n: usize) -> Geometry {
    let g = GridSpec::square(n, 1.0).expect("valid grid");
    Geometry::torus(ScalarField::from_fn(g, |x, y| 0.15 * (TAU * x).sin() * (TAU * y).cos())).expect("finite factor")
}

/// Gaussian bump PME state on [`wavy_torus`].
pub fn bump_state(n: usize, kind: &FlowKind) -> PmeState {
    let geom = wavy_torus(n);
    let u = InitialData::GaussianBump { amplitude: 1.0, width: 0.15, center: [0.5, 0.5], floor: 0.2 }
        .sample(geom.grid())
        .expect("positive data");
    PmeState::new(FlowState::new(0.1, geom, None, kind).expect("valid state"), u, 2.0).expect("valid state")
}
