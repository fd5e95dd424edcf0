//! The geometric flow `∂g/∂t = −2S_ij` for the supported choices of `S_ij`,
//! optionally coupled to a scalar map `f` with `∂f/∂t = Δf`.

use crate::error::{invalid, GeoError, Result};
use crate::grid::{ScalarField, SymTensorField};
use crate::manifold::Geometry;

/// Explicit-scheme stability number: `dt ≤ CFL · h² / max(diffusivity)`.
pub const CFL: f64 = 0.2;

/// Piecewise-linear function of time given by a table of `(t, value)` knots,
/// extended as a constant outside the table.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFunction {
    knots: Vec<(f64, f64)>,
}

impl TimeFunction {
    pub fn constant(c: f64) -> Self {
        Self { knots: vec![(0.0, c)] }
    }

    pub fn table(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(invalid("time table needs at least one knot"));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(invalid("time table knots must have strictly increasing times"));
        }
        if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(invalid("time table contains non-finite entries"));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    fn segment(&self, t: f64) -> Option<usize> {
        if self.knots.len() < 2 || t < self.knots[0].0 || t >= self.knots[self.knots.len() - 1].0 {
            return None;
        }
        Some(self.knots.partition_point(|k| k.0 <= t) - 1)
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.segment(t) {
            Some(i) => {
                let ((t0, v0), (t1, v1)) = (self.knots[i], self.knots[i + 1]);
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
            None if t < self.knots[0].0 => self.knots[0].1,
            None => self.knots[self.knots.len() - 1].1,
        }
    }

    /// Slope of the segment containing `t` (0 outside the table).
    pub fn derivative(&self, t: f64) -> f64 {
        match self.segment(t) {
            Some(i) => {
                let ((t0, v0), (t1, v1)) = (self.knots[i], self.knots[i + 1]);
                (v1 - v0) / (t1 - t0)
            }
            None => 0.0,
        }
    }

    /// Samples `[t0, t1]` at the knots inside it plus both ends.
    fn samples(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut ts = vec![t0];
        ts.extend(self.knots.iter().map(|k| k.0).filter(|&t| t > t0 && t < t1));
        ts.push(t1);
        ts.into_iter().map(|t| self.value(t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowKind {
    /// `S_ij = 0`.
    Static,
    /// `S_ij = R_ij`.
    Ricci,
    /// `S_ij = λ(t) g_ij`.
    ScaledIdentity(TimeFunction),
    /// List's extended Ricci flow: `S_ij = R_ij − 2∇_i f ∇_j f`.
    ListExtended,
    /// Ricci flow coupled to a scalar harmonic map flow:
    /// `S_ij = R_ij − α(t)∇_i f ∇_j f`, with `α > 0` non-increasing.
    HarmonicScalar(TimeFunction),
}

impl FlowKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Static => "static",
            Self::Ricci => "ricci",
            Self::ScaledIdentity(_) => "scaled-identity",
            Self::ListExtended => "list-extended",
            Self::HarmonicScalar(_) => "harmonic-scalar",
        }
    }

    /// Whether the kind carries the coupled scalar map `f`.
    pub fn needs_scalar_map(&self) -> bool {
        matches!(self, Self::ListExtended | Self::HarmonicScalar(_))
    }

    /// Coupling strength `α(t)` of the `∇f⊗∇f` term, if any.
    pub fn alpha(&self, t: f64) -> Option<f64> {
        match self {
            Self::ListExtended => Some(2.0),
            Self::HarmonicScalar(a) => Some(a.value(t)),
            _ => None,
        }
    }

    pub fn alpha_derivative(&self, t: f64) -> Option<f64> {
        match self {
            Self::ListExtended => Some(0.0),
            Self::HarmonicScalar(a) => Some(a.derivative(t)),
            _ => None,
        }
    }

    /// Checks the backend/kind pairing and, for `HarmonicScalar`, that `α`
    /// is positive and non-increasing on `[t0, t1]` (sampled at the knots).
    pub fn validate(&self, geom: &Geometry, t0: f64, t1: f64) -> Result<()> {
        let incompatible = |reason: &str| GeoError::IncompatibleKind {
            kind: self.name(),
            backend: geom.backend_name(),
            reason: reason.to_string(),
        };
        match (self, geom) {
            (Self::Ricci, Geometry::Circle1D { .. }) => {
                Err(incompatible("Ricci flow is trivial in one dimension; use static"))
            }
            (Self::ListExtended | Self::HarmonicScalar(_), Geometry::Circle1D { .. }) => {
                if let Self::HarmonicScalar(alpha) = self {
                    let samples = alpha.samples(t0, t1);
                    if samples.iter().any(|&a| a <= 0.0) {
                        return Err(incompatible("α(t) must stay positive"));
                    }
                    if samples.windows(2).any(|w| w[1] > w[0]) {
                        return Err(incompatible("α(t) must be non-increasing"));
                    }
                }
                Ok(())
            }
            (Self::ListExtended | Self::HarmonicScalar(_), _) => {
                Err(incompatible("∇f⊗∇f is only conformal on the circle"))
            }
            _ => Ok(()),
        }
    }
}

/// Metric and coupled map at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub geom: Geometry,
    pub f: Option<ScalarField>,
}

impl FlowState {
    pub fn new(t: f64, geom: Geometry, f: Option<ScalarField>, kind: &FlowKind) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid(format!("time must be finite and non-negative, got {t}")));
        }
        match (&f, kind.needs_scalar_map()) {
            (None, true) => return Err(invalid(format!("flow kind {} needs a scalar map f", kind.name()))),
            (Some(_), false) => {
                return Err(invalid(format!("flow kind {} does not carry a scalar map", kind.name())))
            }
            (Some(f), true) if *f.grid() != geom.grid() => {
                return Err(GeoError::GridMismatch("scalar map and metric grids differ".into()))
            }
            _ => {}
        }
        kind.validate(&geom, t, t)?;
        Ok(Self { t, geom, f })
    }
}

/// The tensor `S_ij` driving the flow.
pub fn s_tensor(state: &FlowState, kind: &FlowKind) -> Result<SymTensorField> {
    let geom = &state.geom;
    match kind {
        FlowKind::Static => Ok(SymTensorField::zeros(geom.grid())),
        FlowKind::Ricci => {
            kind.validate(geom, state.t, state.t)?;
            Ok(geom.ricci())
        }
        FlowKind::ScaledIdentity(lambda) => Ok(geom.metric().scale(lambda.value(state.t))),
        FlowKind::ListExtended | FlowKind::HarmonicScalar(_) => {
            kind.validate(geom, state.t, state.t)?;
            let alpha = kind.alpha(state.t).expect("coupled kind");
            let f = state.f.as_ref().ok_or_else(|| invalid("missing scalar map f"))?;
            // 1D: Ric = 0, so S_11 = −α (∂_x f)²
            let fx = &geom.partials(f)[0];
            let ric = geom.ricci();
            Ok(SymTensorField::from_raw(
                geom.grid(),
                fx.iter().zip(ric.raw()).map(|(d, r)| r - alpha * d * d).collect(),
            ))
        }
    }
}

/// `S = g^{ij} S_ij`.
pub fn s_trace(state: &FlowState, kind: &FlowKind) -> Result<ScalarField> {
    Ok(state.geom.trace(&s_tensor(state, kind)?))
}

/// Centred time derivative of `S` between two snapshots bracketing the
/// evaluation time.
pub fn s_time_derivative(prev: &FlowState, next: &FlowState, kind: &FlowKind) -> Result<ScalarField> {
    if prev.geom.grid() != next.geom.grid() {
        return Err(GeoError::GridMismatch("snapshots live on different grids".into()));
    }
    let dt = next.t - prev.t;
    if dt <= 0.0 {
        return Err(invalid("snapshots must be ordered in time"));
    }
    let (a, b) = (s_trace(prev, kind)?, s_trace(next, kind)?);
    Ok(b.zip_map(&a, |b, a| (b - a) / dt))
}

/// Smallest `k1, k2, k3 ≥ 0` with `Ric ≥ −(n−1)k1 g` and `−k2 g ≤ S ≤ k3 g`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurvatureBounds {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl CurvatureBounds {
    /// Componentwise maximum.
    pub fn max(self, other: Self) -> Self {
        Self { k1: self.k1.max(other.k1), k2: self.k2.max(other.k2), k3: self.k3.max(other.k3) }
    }
}

pub fn minimal_bounds(state: &FlowState, kind: &FlowKind) -> Result<CurvatureBounds> {
    let geom = &state.geom;
    let n = geom.dimension();
    let (ric_lo, _) = geom.relative_eigen_range(&geom.ricci());
    let k1 = if n > 1 { (-ric_lo / (n - 1) as f64).max(0.0) } else { 0.0 };
    let (s_lo, s_hi) = geom.relative_eigen_range(&s_tensor(state, kind)?);
    Ok(CurvatureBounds { k1, k2: (-s_lo).max(0.0), k3: s_hi.max(0.0) })
}

/// Time derivative of the flow's degrees of freedom: `φ²` on the circle,
/// `w` on the torus, `r²` on the sphere, plus the coupled map.
#[derive(Debug, Clone)]
pub(crate) struct FlowTendency {
    metric: Vec<f64>,
    f: Option<Vec<f64>>,
}

impl FlowTendency {
    pub(crate) fn average(&self, other: &Self) -> Self {
        let avg = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        Self {
            metric: avg(&self.metric, &other.metric),
            f: match (&self.f, &other.f) {
                (Some(a), Some(b)) => Some(avg(a, b)),
                _ => None,
            },
        }
    }
}

pub(crate) fn tendency(state: &FlowState, kind: &FlowKind) -> Result<FlowTendency> {
    let geom = &state.geom;
    let s = s_tensor(state, kind)?;
    let metric = match geom {
        Geometry::Circle1D { .. } => s.raw().iter().map(|s11| -2.0 * s11).collect(),
        Geometry::ConformalTorus2D { .. } => {
            let a = geom.conformal_factor();
            let tol = 1e-10 * (1.0 + s.max_abs());
            let mut rate = Vec::with_capacity(a.len());
            for (k, &ak) in a.values().iter().enumerate() {
                let c = s.at(k);
                if c[1].abs() > tol || (c[0] - c[2]).abs() > tol {
                    return Err(GeoError::IncompatibleKind {
                        kind: kind.name(),
                        backend: geom.backend_name(),
                        reason: format!("S_ij is not conformal at node {k}"),
                    });
                }
                // S_ij = σ g_ij  ⇒  ∂_t w = −σ
                rate.push(-0.5 * (c[0] + c[2]) / ak);
            }
            rate
        }
        Geometry::RoundSphere { r2, .. } => vec![-2.0 * s.at(0)[0] * r2],
    };
    let f = match &state.f {
        Some(f) => Some(geom.laplacian(f).into_values()),
        None => None,
    };
    Ok(FlowTendency { metric, f })
}

pub(crate) fn apply(state: &FlowState, rate: &FlowTendency, dt: f64) -> Result<FlowState> {
    let t = state.t + dt;
    let geom = match &state.geom {
        Geometry::Circle1D { phi } => {
            let mut out = Vec::with_capacity(phi.len());
            for (k, (p, r)) in phi.values().iter().zip(&rate.metric).enumerate() {
                let phi2 = p * p + dt * r;
                if !(phi2 > 0.0) {
                    return Err(GeoError::Extinction { t, detail: format!("φ² = {phi2} at node {k}") });
                }
                out.push(phi2.sqrt());
            }
            Geometry::Circle1D { phi: ScalarField::from_raw(*phi.grid(), out) }
        }
        Geometry::ConformalTorus2D { w } => {
            let out = w.values().iter().zip(&rate.metric).map(|(w, r)| w + dt * r).collect();
            let w = ScalarField::new(*w.grid(), out)
                .map_err(|_| GeoError::Extinction { t, detail: "conformal factor blew up".into() })?;
            Geometry::ConformalTorus2D { w }
        }
        Geometry::RoundSphere { n, r2 } => {
            let r2 = r2 + dt * rate.metric[0];
            if !(r2 > 0.0) {
                return Err(GeoError::Extinction { t, detail: format!("sphere collapsed, r² = {r2}") });
            }
            Geometry::RoundSphere { n: *n, r2 }
        }
    };
    let f = match (&state.f, &rate.f) {
        (Some(f), Some(df)) => Some(ScalarField::from_raw(
            *f.grid(),
            f.values().iter().zip(df).map(|(f, d)| f + dt * d).collect(),
        )),
        _ => None,
    };
    Ok(FlowState { t, geom, f })
}

/// Largest stable explicit step for the flow itself (∞ when the flow has no
/// diffusive part).
pub fn stable_dt(state: &FlowState, kind: &FlowKind) -> f64 {
    let geom = &state.geom;
    let grid = geom.grid();
    if grid.is_homogeneous() {
        return f64::INFINITY;
    }
    let diffusive = match kind {
        FlowKind::Ricci => true,
        _ => state.f.is_some(),
    };
    if !diffusive {
        return f64::INFINITY;
    }
    let h = grid.h_max();
    let min_a = geom.conformal_factor().min();
    CFL * h * h * min_a
}

/// How a requested step was actually taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepReport {
    /// Number of times the requested `dt` was halved to satisfy the CFL bound.
    pub halvings: u32,
    pub substeps: u32,
}

/// Number of halvings of `dt` needed to get below `limit`.
pub(crate) fn halvings_for(dt: f64, limit: f64) -> u32 {
    let mut k = 0;
    let mut d = dt;
    while d > limit && k < 60 {
        d *= 0.5;
        k += 1;
    }
    k
}

fn heun(state: &FlowState, kind: &FlowKind, dt: f64) -> Result<FlowState> {
    let k1 = tendency(state, kind)?;
    let mid = apply(state, &k1, dt)?;
    let k2 = tendency(&mid, kind)?;
    apply(state, &k1.average(&k2), dt)
}

/// Advances the flow by `dt` with the explicit two-stage Runge–Kutta (Heun)
/// scheme, halving `dt` as often as the stability bound requires.
pub fn step(state: &FlowState, kind: &FlowKind, dt: f64) -> Result<FlowState> {
    step_reported(state, kind, dt).map(|(s, _)| s)
}

pub fn step_reported(state: &FlowState, kind: &FlowKind, dt: f64) -> Result<(FlowState, StepReport)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let halvings = halvings_for(dt, stable_dt(state, kind));
    let substeps = 1u32 << halvings;
    let sub = dt / substeps as f64;
    let mut cur = state.clone();
    for _ in 0..substeps {
        cur = heun(&cur, kind, sub)?;
    }
    Ok((cur, StepReport { halvings, substeps }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use std::f64::consts::TAU;

    fn circle_with_map(n: usize, alpha: FlowKind) -> (FlowState, FlowKind) {
        let geom = Geometry::flat_circle(n, 1.0).unwrap();
        let f = ScalarField::from_fn(geom.grid(), |x, _| (TAU * x).sin());
        (FlowState::new(0.0, geom, Some(f), &alpha).unwrap(), alpha)
    }

    #[test]
    fn time_function_interpolates() {
        let tf = TimeFunction::table(vec![(0.0, 2.0), (1.0, 1.0), (2.0, 1.0)]).unwrap();
        assert_eq!(tf.value(0.5), 1.5);
        assert_eq!(tf.value(-1.0), 2.0);
        assert_eq!(tf.value(5.0), 1.0);
        assert_eq!(tf.derivative(0.25), -1.0);
        assert_eq!(tf.derivative(1.5), 0.0);
        assert!(TimeFunction::table(vec![(1.0, 0.0), (0.5, 1.0)]).is_err());
    }

    #[test]
    fn harmonic_alpha_must_be_positive_and_non_increasing() {
        let geom = Geometry::flat_circle(16, 1.0).unwrap();
        let up = FlowKind::HarmonicScalar(TimeFunction::table(vec![(0.0, 1.0), (1.0, 2.0)]).unwrap());
        assert!(up.validate(&geom, 0.0, 1.0).is_err());
        let neg = FlowKind::HarmonicScalar(TimeFunction::table(vec![(0.0, 1.0), (1.0, -0.5)]).unwrap());
        assert!(neg.validate(&geom, 0.0, 1.0).is_err());
        let ok = FlowKind::HarmonicScalar(TimeFunction::table(vec![(0.0, 2.0), (1.0, 1.0)]).unwrap());
        assert!(ok.validate(&geom, 0.0, 1.0).is_ok());
    }

    #[test]
    fn incompatible_pairs_name_both_sides() {
        let torus = Geometry::flat_torus(16, 1.0).unwrap();
        let err = FlowKind::ListExtended.validate(&torus, 0.0, 1.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("list-extended") && msg.contains("torus"), "{msg}");
        let circle = Geometry::flat_circle(16, 1.0).unwrap();
        assert!(FlowKind::Ricci.validate(&circle, 0.0, 1.0).is_err());
    }

    #[test]
    fn scalar_map_presence_is_checked() {
        let geom = Geometry::flat_circle(16, 1.0).unwrap();
        assert!(FlowState::new(0.0, geom.clone(), None, &FlowKind::ListExtended).is_err());
        let f = ScalarField::zeros(geom.grid());
        assert!(FlowState::new(0.0, geom, Some(f), &FlowKind::Static).is_err());
    }

    #[test]
    fn s_tensor_examples() {
        let torus = Geometry::flat_torus(16, 1.0).unwrap();
        let st = FlowState::new(0.0, torus, None, &FlowKind::Static).unwrap();
        assert_eq!(s_tensor(&st, &FlowKind::Static).unwrap().max_abs(), 0.0);
        assert_eq!(s_trace(&st, &FlowKind::Static).unwrap().linf(), 0.0);
        let scaled = FlowKind::ScaledIdentity(TimeFunction::constant(1.0));
        assert_eq!(s_tensor(&st, &scaled).unwrap(), st.geom.metric());
        assert!(s_trace(&st, &scaled).unwrap().values().iter().all(|&s| s == 2.0));

        let sphere = FlowState::new(0.0, Geometry::sphere(2, 1.0).unwrap(), None, &FlowKind::Ricci).unwrap();
        assert_eq!(s_trace(&sphere, &FlowKind::Ricci).unwrap().values(), &[2.0]);
    }

    #[test]
    fn harmonic_scalar_s_on_circle() {
        let alpha = 1.5;
        let kind = FlowKind::HarmonicScalar(TimeFunction::constant(alpha));
        let n = 128;
        let (st, kind) = circle_with_map(n, kind);
        let s = s_tensor(&st, &kind).unwrap();
        let tr = s_trace(&st, &kind).unwrap();
        let h = 1.0 / n as f64;
        for k in 0..n {
            let fx = TAU * (TAU * k as f64 * h).cos();
            assert!((s.at(k)[0] + alpha * fx * fx).abs() < 1e-2 * alpha * TAU * TAU);
            assert_eq!(tr.values()[k], s.at(k)[0]);
        }
        // List: S = R − 2|∇f|² = −2|∇f|²
        let (st, list) = circle_with_map(n, FlowKind::ListExtended);
        let tr = s_trace(&st, &list).unwrap();
        let grad_sq = st.geom.norm_sq(&st.geom.gradient(st.f.as_ref().unwrap()));
        assert!((&tr + &grad_sq.scale(2.0)).linf() < 1e-12);
    }

    #[test]
    fn static_step_only_advances_time() {
        let geom = Geometry::torus(ScalarField::from_fn(GridSpec::square(16, 1.0).unwrap(), |x, _| x.sin()))
            .unwrap();
        let st = FlowState::new(0.0, geom, None, &FlowKind::Static).unwrap();
        let next = step(&st, &FlowKind::Static, 0.1).unwrap();
        assert_eq!(next.geom, st.geom);
        assert!((next.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn scaled_identity_is_linear_in_time() {
        let lam = 0.7;
        let kind = FlowKind::ScaledIdentity(TimeFunction::constant(lam));
        let geom = Geometry::torus(ScalarField::from_fn(GridSpec::square(16, 1.0).unwrap(), |x, y| {
            0.1 * (TAU * x).cos() * y
        }))
        .unwrap();
        let w0 = match &geom {
            Geometry::ConformalTorus2D { w } => w.clone(),
            _ => unreachable!(),
        };
        let mut st = FlowState::new(0.0, geom, None, &kind).unwrap();
        for _ in 0..10 {
            st = step(&st, &kind, 0.05).unwrap();
        }
        let Geometry::ConformalTorus2D { w } = &st.geom else { unreachable!() };
        assert!((&(w - &w0) + &ScalarField::constant(*w.grid(), lam * st.t)).linf() < 1e-12);
    }

    #[test]
    fn shrinking_sphere_is_exact_and_extinction_is_reported() {
        let mut st = FlowState::new(0.0, Geometry::sphere(2, 1.0).unwrap(), None, &FlowKind::Ricci).unwrap();
        for _ in 0..40 {
            st = step(&st, &FlowKind::Ricci, 0.01).unwrap();
        }
        let Geometry::RoundSphere { r2, .. } = st.geom else { unreachable!() };
        assert!((r2 - (1.0 - 2.0 * st.t)).abs() < 1e-12);
        // the sphere dies at t = 1/2; a step across it must fail
        assert!(step(&st, &FlowKind::Ricci, 0.09).is_ok());
        let err = step(&st, &FlowKind::Ricci, 0.2).unwrap_err();
        assert!(matches!(err, GeoError::Extinction { t, .. } if t > 0.5), "{err}");
    }

    #[test]
    fn ricci_time_derivative_on_sphere() {
        // R(t) = 2/(1 − 2t) ⇒ ∂R/∂t = 4/r⁴
        let kind = FlowKind::Ricci;
        let dt = 1e-3;
        let mid = FlowState::new(0.1, Geometry::sphere(2, 0.8).unwrap(), None, &kind).unwrap();
        let prev = FlowState { t: 0.1 - dt, geom: Geometry::sphere(2, 0.8 + 2.0 * dt).unwrap(), f: None };
        let next = FlowState { t: 0.1 + dt, geom: Geometry::sphere(2, 0.8 - 2.0 * dt).unwrap(), f: None };
        let ds = s_time_derivative(&prev, &next, &kind).unwrap();
        assert!((ds.values()[0] - 4.0 / (0.8f64 * 0.8)).abs() < 1e-4);
        assert!(s_time_derivative(&next, &prev, &kind).is_err());
        let _ = mid;
    }

    #[test]
    fn minimal_bounds_examples() {
        let flat = FlowState::new(0.0, Geometry::flat_torus(16, 1.0).unwrap(), None, &FlowKind::Static).unwrap();
        assert_eq!(minimal_bounds(&flat, &FlowKind::Static).unwrap(), CurvatureBounds::default());
        let sphere = FlowState::new(0.0, Geometry::sphere(2, 1.0).unwrap(), None, &FlowKind::Ricci).unwrap();
        assert_eq!(
            minimal_bounds(&sphere, &FlowKind::Ricci).unwrap(),
            CurvatureBounds { k1: 0.0, k2: 0.0, k3: 1.0 }
        );
        let neg = FlowKind::ScaledIdentity(TimeFunction::constant(-1.0));
        let b = minimal_bounds(&flat, &neg).unwrap();
        assert_eq!((b.k2, b.k3), (1.0, 0.0));
    }

    #[test]
    fn cfl_guard_halves_the_step() {
        let g = GridSpec::square(16, 1.0).unwrap();
        let geom = Geometry::torus(ScalarField::from_fn(g, |x, _| 0.2 * (TAU * x).sin())).unwrap();
        let st = FlowState::new(0.0, geom, None, &FlowKind::Ricci).unwrap();
        let (next, report) = step_reported(&st, &FlowKind::Ricci, 0.01).unwrap();
        assert!(report.halvings > 0);
        assert_eq!(report.substeps, 1 << report.halvings);
        assert!((next.t - 0.01).abs() < 1e-14);
    }

    #[test]
    fn ricci_torus_run_satisfies_conformal_ode() {
        // ∂_t w + R/2 = 0, checked by a centred difference over one step pair.
        let n = 32;
        let g = GridSpec::square(n, 1.0).unwrap();
        let geom = Geometry::torus(ScalarField::from_fn(g, |x, y| {
            0.2 * (TAU * x).sin() * (TAU * y).sin()
        }))
        .unwrap();
        let kind = FlowKind::Ricci;
        let dt = 0.5 * stable_dt(&FlowState::new(0.0, geom.clone(), None, &kind).unwrap(), &kind);
        let residual = |dt: f64| {
            let s0 = FlowState::new(0.0, geom.clone(), None, &kind).unwrap();
            let s1 = step(&s0, &kind, dt).unwrap();
            let s2 = step(&s1, &kind, dt).unwrap();
            let (Geometry::ConformalTorus2D { w: w0 }, Geometry::ConformalTorus2D { w: w2 }) = (&s0.geom, &s2.geom)
            else {
                unreachable!()
            };
            let wt = w2.zip_map(w0, |a, b| (a - b) / (2.0 * dt));
            (&wt + &s1.geom.scalar_curvature().scale(0.5)).linf()
        };
        let (a, b) = (residual(dt), residual(dt / 2.0));
        assert!(a / b > 3.0, "{a} {b}");
    }

    #[test]
    fn heat_map_obeys_maximum_principle() {
        let kind = FlowKind::HarmonicScalar(TimeFunction::table(vec![(0.0, 1.0), (1.0, 0.5)]).unwrap());
        let (mut st, kind) = circle_with_map(64, kind);
        let dt = stable_dt(&st, &kind);
        let mut bounds = (st.f.as_ref().unwrap().max(), st.f.as_ref().unwrap().min());
        for _ in 0..200 {
            st = step(&st, &kind, dt).unwrap();
            let f = st.f.as_ref().unwrap();
            assert!(f.max() <= bounds.0 + 1e-8 && f.min() >= bounds.1 - 1e-8);
            bounds = (f.max(), f.min());
        }
        // the metric grows where f has slope: ∂_t φ² = 2α f_x² ≥ 0
        let Geometry::Circle1D { phi } = &st.geom else { unreachable!() };
        assert!(phi.min() >= 1.0);
    }

    #[test]
    fn trace_of_s_matches_s_trace_along_run() {
        let (mut st, kind) = circle_with_map(32, FlowKind::ListExtended);
        for _ in 0..5 {
            st = step(&st, &kind, 1e-4).unwrap();
            let s = s_tensor(&st, &kind).unwrap();
            let tr = s_trace(&st, &kind).unwrap();
            assert_eq!(st.geom.trace(&s), tr);
        }
    }
}
