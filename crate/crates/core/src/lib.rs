//! Numerical laboratory for the porous medium equation with potential,
//! `u_t = Δu^p + S u`, on closed manifolds whose metric evolves by
//! `∂g/∂t = −2S_ij`, together with checks of the associated differential and
//! integrated Harnack estimates and the evolution identities behind them.

pub mod error;
pub mod flow;
pub mod grid;
pub mod harnack;
pub mod identities;
pub mod manifold;
pub mod pme;
pub mod structure;

pub use error::{GeoError, Result};
pub use grid::{GridSpec, ScalarField, SymTensorField, VectorField};
pub use manifold::Geometry;
pub use flow::{CurvatureBounds, FlowKind, FlowState, TimeFunction};
pub use harnack::{HarnackConfig, Verdict};
pub use identities::{Identity, IdentityLadder, LadderPreset};
pub use pme::{InitialData, PmeSnapshot, PmeState, Run, Schedule};
pub use structure::{HypothesisReport, XSampling};
