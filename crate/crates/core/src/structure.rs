//! Structure quantities `I, H, D, E, E_b` of the tensor `S_ij` driving the
//! flow, and a sampled check of the sign hypotheses placed on them.
//!
//! All quantities are evaluated at the middle snapshot of a [`FlowTriple`];
//! `∂S/∂t` is the centred difference across the outer two.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, GeoError, Result};
use crate::flow::{minimal_bounds, s_tensor, s_time_derivative, s_trace, CurvatureBounds, FlowKind, FlowState};
use crate::grid::{ScalarField, SymTensorField, VectorField};
use crate::manifold::Geometry;

/// Three consecutive flow snapshots.
#[derive(Debug, Clone, Copy)]
pub struct FlowTriple<'a> {
    pub prev: &'a FlowState,
    pub mid: &'a FlowState,
    pub next: &'a FlowState,
}

impl<'a> FlowTriple<'a> {
    pub fn new(prev: &'a FlowState, mid: &'a FlowState, next: &'a FlowState) -> Result<Self> {
        if prev.geom.grid() != mid.geom.grid() || mid.geom.grid() != next.geom.grid() {
            return Err(GeoError::GridMismatch("snapshot triple spans several grids".into()));
        }
        if !(prev.t < mid.t && mid.t < next.t) {
            return Err(invalid("snapshot times must be strictly increasing"));
        }
        Ok(Self { prev, mid, next })
    }
}

/// `(R^{ij} − S^{ij}) X_i X_j`.
pub fn quantity_i(state: &FlowState, kind: &FlowKind, x: &VectorField) -> Result<ScalarField> {
    Ok(Parts::instant(state, kind)?.i(x))
}

/// `∂S/∂t + S/t − 2⟨∇S, X⟩ + 2S(X, X)`.
pub fn quantity_h(triple: FlowTriple, kind: &FlowKind, x: &VectorField) -> Result<ScalarField> {
    Parts::new(triple, kind)?.h(x)
}

/// `∂S/∂t − ΔS − 2|S_ij|²`.
pub fn quantity_d(triple: FlowTriple, kind: &FlowKind) -> Result<ScalarField> {
    Ok(Parts::new(triple, kind)?.d.clone())
}

/// The vector field dual to `2∇^i S_ij − ∇_j S` (zero on the sphere).
pub fn divergence_gap(state: &FlowState, kind: &FlowKind) -> Result<VectorField> {
    let geom = &state.geom;
    Ok(geom.raise(&gap_covector(geom, &s_tensor(state, kind)?, &s_trace(state, kind)?)))
}

/// `D(S) + 2I(S,X) + 2(2∇^i S_ij − ∇_j S)X^j`.
pub fn quantity_e(triple: FlowTriple, kind: &FlowKind, x: &VectorField) -> Result<ScalarField> {
    quantity_eb(triple, kind, x, 2.0)
}

/// `(b−1)D(S) + 2I(S,X) + b(2∇^i S_ij − ∇_j S)X^j`, defined for `b ≥ 2`.
pub fn quantity_eb(triple: FlowTriple, kind: &FlowKind, x: &VectorField, b: f64) -> Result<ScalarField> {
    Parts::new(triple, kind)?.eb(x, b)
}

fn gap_covector(geom: &Geometry, s: &SymTensorField, trace: &ScalarField) -> Vec<Vec<f64>> {
    let div = geom.tensor_divergence(s);
    let ds = geom.partials(trace);
    div.iter()
        .zip(&ds)
        .map(|(dv, d)| dv.iter().zip(d).map(|(a, b)| 2.0 * a - b).collect())
        .collect()
}

/// Everything the structure quantities need at one instant, computed once
/// and then contracted against any number of vector fields `X`.
pub(crate) struct Parts {
    pub(crate) geom: Geometry,
    pub(crate) t: f64,
    pub(crate) s_tensor: SymTensorField,
    pub(crate) s: ScalarField,
    pub(crate) s_t: ScalarField,
    pub(crate) d: ScalarField,
    ric_minus_s: SymTensorField,
    gap: Vec<Vec<f64>>,
}

impl Parts {
    fn instant(state: &FlowState, kind: &FlowKind) -> Result<Self> {
        let geom = state.geom.clone();
        let s_tensor = s_tensor(state, kind)?;
        let s = geom.trace(&s_tensor);
        let ric_minus_s = geom.ricci().zip_map(&s_tensor, |r, s| r - s);
        let gap = gap_covector(&geom, &s_tensor, &s);
        let zero = ScalarField::zeros(geom.grid());
        Ok(Self { t: state.t, s_tensor, s, s_t: zero.clone(), d: zero, ric_minus_s, gap, geom })
    }

    pub(crate) fn new(triple: FlowTriple, kind: &FlowKind) -> Result<Self> {
        let mut parts = Self::instant(triple.mid, kind)?;
        parts.s_t = s_time_derivative(triple.prev, triple.next, kind)?;
        let lap_s = parts.geom.laplacian(&parts.s);
        let norm = parts.geom.tensor_norm_sq(&parts.s_tensor);
        parts.d = parts.s_t.zip_map(&lap_s, |a, b| a - b).zip_map(&norm, |a, n| a - 2.0 * n);
        Ok(parts)
    }

    fn check(&self, x: &VectorField) {
        assert_eq!(*x.grid(), self.geom.grid(), "X does not live on the flow grid");
    }

    pub(crate) fn i(&self, x: &VectorField) -> ScalarField {
        self.check(x);
        self.geom.tensor_apply(&self.ric_minus_s, x, x)
    }

    fn gap_dot(&self, x: &VectorField) -> Vec<f64> {
        (0..self.geom.grid().node_count())
            .map(|k| x.at(k).iter().zip(&self.gap).map(|(xi, g)| xi * g[k]).sum())
            .collect()
    }

    pub(crate) fn h(&self, x: &VectorField) -> Result<ScalarField> {
        self.check(x);
        if self.t <= 0.0 {
            return Err(GeoError::DivisionByTime("H(S,X) contains S/t"));
        }
        let xs = self.geom.directional(x, &self.s);
        let sxx = self.geom.tensor_apply(&self.s_tensor, x, x);
        let t = self.t;
        let out = (0..self.s.len())
            .map(|k| {
                self.s_t.values()[k] + self.s.values()[k] / t - 2.0 * xs.values()[k]
                    + 2.0 * sxx.values()[k]
            })
            .collect();
        Ok(ScalarField::from_raw(self.geom.grid(), out))
    }

    pub(crate) fn eb(&self, x: &VectorField, b: f64) -> Result<ScalarField> {
        if !(b >= 2.0) {
            return Err(invalid(format!("E_b needs b ≥ 2, got {b}")));
        }
        let i = self.i(x);
        let gx = self.gap_dot(x);
        let out = (0..self.s.len())
            .map(|k| (b - 1.0) * self.d.values()[k] + 2.0 * i.values()[k] + b * gx[k])
            .collect();
        Ok(ScalarField::from_raw(self.geom.grid(), out))
    }
}

/// Which vector fields `X` the hypothesis check tries at every node.
///
/// The family is the union of `X = 0`, the unit coordinate directions, the
/// unit directions `±∇v` (when pressures are supplied) and `random_directions`
/// seeded unit directions, each scaled by every entry of `magnitudes`.
#[derive(Debug, Clone, PartialEq)]
pub struct XSampling {
    pub seed: u64,
    pub random_directions: usize,
    pub magnitudes: Vec<f64>,
}

impl Default for XSampling {
    fn default() -> Self {
        Self { seed: 0, random_directions: 4, magnitudes: vec![0.25, 1.0, 4.0] }
    }
}

impl XSampling {
    /// Unit-length (in the metric) direction fields, one per sampled family member.
    fn directions(&self, geom: &Geometry, v: Option<&ScalarField>, salt: u64) -> Vec<VectorField> {
        let grid = geom.grid();
        let d = grid.dim();
        if d == 0 {
            return Vec::new();
        }
        let a = geom.conformal_factor();
        let inv_len: Vec<f64> = a.values().iter().map(|a| 1.0 / a.sqrt()).collect();
        let mut dirs = Vec::new();
        for axis in 0..d {
            for sign in [1.0, -1.0] {
                let mut comps = vec![0.0; d * grid.node_count()];
                for (k, l) in inv_len.iter().enumerate() {
                    comps[k * d + axis] = sign * l;
                }
                dirs.push(VectorField::from_raw(grid, comps));
            }
        }
        if let Some(v) = v {
            let grad = geom.gradient(v);
            let norm = geom.norm_sq(&grad);
            let mut comps = grad.raw().to_vec();
            for (k, n) in norm.values().iter().enumerate() {
                let s = if *n > 0.0 { 1.0 / n.sqrt() } else { 0.0 };
                comps[k * d..(k + 1) * d].iter_mut().for_each(|c| *c *= s);
            }
            let unit = VectorField::from_raw(grid, comps);
            dirs.push(unit.scale(-1.0));
            dirs.push(unit);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        for _ in 0..self.random_directions {
            let mut comps = Vec::with_capacity(d * grid.node_count());
            for l in &inv_len {
                let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                if d == 1 {
                    comps.push(if theta < std::f64::consts::PI { *l } else { -*l });
                } else {
                    comps.extend([theta.cos() * l, theta.sin() * l]);
                }
            }
            dirs.push(VectorField::from_raw(grid, comps));
        }
        dirs
    }
}

/// Sampled minima of the structure quantities over a run.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub min_h: f64,
    /// Minimum of `E_b` at the requested `b` (`E` when `b = 2`).
    pub min_e: f64,
    pub min_d: f64,
    pub min_i: f64,
    pub min_s: f64,
    pub b: f64,
    pub bounds: CurvatureBounds,
    pub h_nonneg: bool,
    pub e_nonneg: bool,
    pub s_nonneg: bool,
    /// Node × X evaluations per quantity.
    pub samples: usize,
    /// Relative tolerance: a minimum passes when it is at least `−tolerance·scale`.
    pub tolerance: f64,
}

/// Relative tolerance of the hypothesis booleans.
pub const HYPOTHESIS_TOLERANCE: f64 = 1e-6;

impl HypothesisReport {
    /// The theorem hypotheses `E_b ≥ 0`, `H ≥ 0` and `S ≥ 0` all hold on the samples.
    pub fn all_hold(&self) -> bool {
        self.h_nonneg && self.e_nonneg && self.s_nonneg
    }
}

struct Extremes {
    min: f64,
    scale: f64,
}

impl Extremes {
    fn new() -> Self {
        Self { min: f64::INFINITY, scale: 1.0 }
    }

    fn add(&mut self, f: &ScalarField) {
        self.min = self.min.min(f.min());
        self.scale = self.scale.max(f.linf());
    }

    fn holds(&self) -> bool {
        self.min >= -HYPOTHESIS_TOLERANCE * self.scale
    }
}

/// Checks `E_b ≥ 0`, `H ≥ 0` and `S ≥ 0` at every interior snapshot of a
/// run, with `X` drawn from `sampling`. `pressures`, when given, must pair
/// one-to-one with `snapshots` and add the `±∇v` directions.
pub fn check_hypotheses(
    snapshots: &[FlowState],
    pressures: Option<&[ScalarField]>,
    kind: &FlowKind,
    b: f64,
    sampling: &XSampling,
) -> Result<HypothesisReport> {
    if snapshots.len() < 3 {
        return Err(invalid("hypothesis check needs at least three snapshots"));
    }
    if !(b >= 2.0) {
        return Err(invalid(format!("E_b needs b ≥ 2, got {b}")));
    }
    if let Some(p) = pressures {
        if p.len() != snapshots.len() {
            return Err(invalid("one pressure field per snapshot is required"));
        }
    }
    let (mut h, mut e, mut d, mut i, mut s) =
        (Extremes::new(), Extremes::new(), Extremes::new(), Extremes::new(), Extremes::new());
    let mut bounds = CurvatureBounds::default();
    let mut samples = 0;
    for st in snapshots {
        bounds = bounds.max(minimal_bounds(st, kind)?);
        s.add(&s_trace(st, kind)?);
    }
    for w in 1..snapshots.len() - 1 {
        let triple = FlowTriple::new(&snapshots[w - 1], &snapshots[w], &snapshots[w + 1])?;
        let parts = Parts::new(triple, kind)?;
        d.add(&parts.d);
        let grid = parts.geom.grid();
        let mut family = vec![VectorField::zeros(grid)];
        for dir in sampling.directions(&parts.geom, pressures.map(|p| &p[w]), w as u64) {
            family.extend(sampling.magnitudes.iter().map(|&m| dir.scale(m)));
        }
        for x in &family {
            h.add(&parts.h(x)?);
            e.add(&parts.eb(x, b)?);
            i.add(&parts.i(x));
            samples += grid.node_count();
        }
    }
    Ok(HypothesisReport {
        min_h: h.min,
        min_e: e.min,
        min_d: d.min,
        min_i: i.min,
        min_s: s.min,
        b,
        bounds,
        h_nonneg: h.holds(),
        e_nonneg: e.holds(),
        s_nonneg: s.holds(),
        samples,
        tolerance: HYPOTHESIS_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{step, TimeFunction};
    use crate::grid::GridSpec;
    use std::f64::consts::TAU;

    fn run(st: FlowState, kind: &FlowKind, dt: f64, n: usize) -> Vec<FlowState> {
        let mut out = vec![st];
        for _ in 0..n {
            let next = step(out.last().unwrap(), kind, dt).unwrap();
            out.push(next);
        }
        out
    }

    fn const_x(grid: GridSpec, x: [f64; 2]) -> VectorField {
        VectorField::from_fn(grid, |_, _| x)
    }

    #[test]
    fn static_kind_quantities() {
        let g = GridSpec::square(24, 1.0).unwrap();
        let geom = Geometry::torus(ScalarField::from_fn(g, |x, y| 0.2 * (TAU * x).sin() * (TAU * y).cos())).unwrap();
        let kind = FlowKind::Static;
        let snaps = run(FlowState::new(0.1, geom, None, &kind).unwrap(), &kind, 0.01, 2);
        let tr = FlowTriple::new(&snaps[0], &snaps[1], &snaps[2]).unwrap();
        let x = const_x(g, [0.3, -1.2]);
        assert_eq!(quantity_h(tr, &kind, &x).unwrap().linf(), 0.0);
        assert_eq!(quantity_d(tr, &kind).unwrap().linf(), 0.0);
        let ric = snaps[1].geom.ricci();
        assert_eq!(quantity_i(&snaps[1], &kind, &x).unwrap(), snaps[1].geom.tensor_apply(&ric, &x, &x));
    }

    #[test]
    fn scaled_identity_h_is_n_lambda_over_t() {
        let lam = 0.5;
        let kind = FlowKind::ScaledIdentity(TimeFunction::constant(lam));
        let g = GridSpec::square(16, 1.0).unwrap();
        let snaps = run(FlowState::new(0.2, Geometry::torus(ScalarField::zeros(g)).unwrap(), None, &kind).unwrap(), &kind, 0.01, 2);
        let tr = FlowTriple::new(&snaps[0], &snaps[1], &snaps[2]).unwrap();
        let h = quantity_h(tr, &kind, &VectorField::zeros(g)).unwrap();
        let expect = 2.0 * lam / snaps[1].t;
        assert!(h.values().iter().all(|v| (v - expect).abs() < 1e-9));
    }

    #[test]
    fn h_at_time_zero_is_an_error() {
        let kind = FlowKind::Static;
        let geom = Geometry::flat_torus(16, 1.0).unwrap();
        let st = FlowState::new(0.0, geom, None, &kind).unwrap();
        let parts = Parts::instant(&st, &kind).unwrap();
        assert!(matches!(parts.h(&VectorField::zeros(st.geom.grid())), Err(GeoError::DivisionByTime(_))));
    }

    #[test]
    fn shrinking_sphere_quantities() {
        let kind = FlowKind::Ricci;
        let snaps = run(FlowState::new(0.0, Geometry::sphere(2, 1.0).unwrap(), None, &kind).unwrap(), &kind, 1e-3, 101);
        let tr = FlowTriple::new(&snaps[99], &snaps[100], &snaps[101]).unwrap();
        let x = VectorField::zeros(GridSpec::homogeneous());
        let t = snaps[100].t;
        let r = 2.0 / (1.0 - 2.0 * t);
        let rt = 4.0 / (1.0 - 2.0 * t).powi(2);
        let h = quantity_h(tr, &kind, &x).unwrap().values()[0];
        assert!((h - (rt + r / t)).abs() < 1e-3 * rt, "{h}");
        assert!(quantity_d(tr, &kind).unwrap().linf() < 1e-3);
        assert!(quantity_e(tr, &kind, &x).unwrap().linf() < 1e-3);
        assert_eq!(quantity_i(&snaps[100], &kind, &x).unwrap().linf(), 0.0);
        assert_eq!(divergence_gap(&snaps[100], &kind).unwrap().raw().len(), 0);
    }

    #[test]
    fn eb_at_two_is_e_and_small_b_is_rejected() {
        let kind = FlowKind::ListExtended;
        let geom = Geometry::flat_circle(32, 1.0).unwrap();
        let f = ScalarField::from_fn(geom.grid(), |x, _| (TAU * x).sin());
        let snaps = run(FlowState::new(0.0, geom, Some(f), &kind).unwrap(), &kind, 1e-4, 2);
        let tr = FlowTriple::new(&snaps[0], &snaps[1], &snaps[2]).unwrap();
        let x = VectorField::from_fn(snaps[1].geom.grid(), |x, _| [x.cos(), 0.0]);
        assert_eq!(quantity_e(tr, &kind, &x).unwrap(), quantity_eb(tr, &kind, &x, 2.0).unwrap());
        assert!(quantity_eb(tr, &kind, &x, 1.5).is_err());
    }

    fn ricci_torus(n: usize) -> (Vec<FlowState>, FlowKind) {
        let kind = FlowKind::Ricci;
        let g = GridSpec::square(n, 1.0).unwrap();
        let geom = Geometry::torus(ScalarField::from_fn(g, |x, y| 0.2 * (TAU * x).sin() * (TAU * (x + y)).cos())).unwrap();
        let st = FlowState::new(0.05, geom, None, &kind).unwrap();
        let dt = 0.1 * (1.0 / n as f64).powi(2);
        (run(st, &kind, dt, 2), kind)
    }

    #[test]
    fn ricci_torus_structure_quantities_vanish_at_second_order() {
        let errs: Vec<[f64; 3]> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let (snaps, kind) = ricci_torus(n);
                let tr = FlowTriple::new(&snaps[0], &snaps[1], &snaps[2]).unwrap();
                let x = const_x(snaps[1].geom.grid(), [0.7, -0.4]);
                [
                    quantity_d(tr, &kind).unwrap().linf(),
                    quantity_e(tr, &kind, &x).unwrap().linf(),
                    divergence_gap(&snaps[1], &kind).unwrap().raw().iter().fold(0.0f64, |m, v| m.max(v.abs())),
                ]
            })
            .collect();
        for q in 0..3 {
            let order = (errs[1][q] / errs[2][q]).log2();
            assert!(order >= 1.8, "quantity {q}: {errs:?}");
        }
    }

    #[test]
    fn list_flow_closed_forms() {
        // D = 4(Δf)², gap = −4Δf∇f, E = 4(Δf − X f)² on a flat circle
        let n = 128;
        let kind = FlowKind::ListExtended;
        let geom = Geometry::flat_circle(n, 1.0).unwrap();
        let f = ScalarField::from_fn(geom.grid(), |x, _| 0.3 * (TAU * x).sin() + 0.1 * (2.0 * TAU * x).cos());
        let h = 1.0 / n as f64;
        let dt = 0.1 * h * h;
        let snaps = run(FlowState::new(0.0, geom, Some(f), &kind).unwrap(), &kind, dt, 2);
        let tr = FlowTriple::new(&snaps[0], &snaps[1], &snaps[2]).unwrap();
        let mid = &snaps[1];
        let fm = mid.f.as_ref().unwrap();
        let lap = mid.geom.laplacian(fm);
        let x = VectorField::from_fn(mid.geom.grid(), |x, _| [1.0 + 0.5 * (TAU * x).cos(), 0.0]);
        let d = quantity_d(tr, &kind).unwrap();
        let d_closed = lap.map(|l| 4.0 * l * l);
        assert!((&d - &d_closed).linf() < 1e-2 * d_closed.linf(), "{}", (&d - &d_closed).linf());
        let gap = divergence_gap(mid, &kind).unwrap();
        let grad = mid.geom.gradient(fm);
        for k in 0..n {
            let want = -4.0 * lap.values()[k] * grad.at(k)[0];
            assert!((gap.at(k)[0] - want).abs() < 1e-2 * 4.0 * lap.linf() * TAU);
        }
        let xf = mid.geom.directional(&x, fm);
        let e_closed = lap.zip_map(&xf, |l, d| 4.0 * (l - d).powi(2));
        let e = quantity_e(tr, &kind, &x).unwrap();
        assert!((&e - &e_closed).linf() < 1e-2 * e_closed.linf());
        let i = quantity_i(mid, &kind, &x).unwrap();
        assert!((&i - &xf.map(|d| 2.0 * d * d)).linf() < 1e-12);
    }

    #[test]
    fn harmonic_flow_e_closed_form() {
        let n = 128;
        let a0 = 2.0;
        let slope = -1.0;
        let kind = FlowKind::HarmonicScalar(TimeFunction::table(vec![(0.0, a0), (1.0, a0 + slope)]).unwrap());
        let geom = Geometry::flat_circle(n, 1.0).unwrap();
        let f = ScalarField::from_fn(geom.grid(), |x, _| 0.3 * (TAU * x).sin());
        let h = 1.0 / n as f64;
        let snaps = run(FlowState::new(0.1, geom, Some(f), &kind).unwrap(), &kind, 0.1 * h * h, 2);
        let tr = FlowTriple::new(&snaps[0], &snaps[1], &snaps[2]).unwrap();
        let mid = &snaps[1];
        let alpha = a0 + slope * mid.t;
        let fm = mid.f.as_ref().unwrap();
        let lap = mid.geom.laplacian(fm);
        let x = VectorField::from_fn(mid.geom.grid(), |_, _| [0.8, 0.0]);
        let xf = mid.geom.directional(&x, fm);
        let grad_sq = mid.geom.norm_sq(&mid.geom.gradient(fm));
        let closed: Vec<f64> = (0..n)
            .map(|k| 2.0 * alpha * (lap.values()[k] - xf.values()[k]).powi(2) - slope * grad_sq.values()[k])
            .collect();
        let e = quantity_e(tr, &kind, &x).unwrap();
        let scale = closed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            assert!((e.values()[k] - closed[k]).abs() < 1e-2 * scale);
        }
    }

    #[test]
    fn hypothesis_report_examples() {
        let kind = FlowKind::Static;
        let geom = Geometry::flat_torus(16, 1.0).unwrap();
        let snaps = run(FlowState::new(0.1, geom, None, &kind).unwrap(), &kind, 0.01, 3);
        let rep = check_hypotheses(&snaps, None, &kind, 2.0, &XSampling::default()).unwrap();
        assert!(rep.all_hold());
        assert_eq!(rep.bounds, CurvatureBounds::default());
        assert!(rep.samples > 0);

        let neg = FlowKind::ScaledIdentity(TimeFunction::constant(-1.0));
        let snaps = run(FlowState::new(0.1, Geometry::flat_torus(16, 1.0).unwrap(), None, &neg).unwrap(), &neg, 0.01, 3);
        let rep = check_hypotheses(&snaps, None, &neg, 2.0, &XSampling::default()).unwrap();
        assert!(!rep.s_nonneg);
        assert!((rep.min_s + 2.0).abs() < 1e-12);

        let ricci = FlowKind::Ricci;
        let snaps = run(FlowState::new(0.1, Geometry::sphere(2, 1.0).unwrap(), None, &ricci).unwrap(), &ricci, 0.01, 3);
        let rep = check_hypotheses(&snaps, None, &ricci, 2.0, &XSampling::default()).unwrap();
        assert!(rep.s_nonneg && rep.h_nonneg && rep.e_nonneg, "{rep:?}");
        assert!(rep.min_e.abs() < 1e-2);
        assert!(check_hypotheses(&snaps[..2], None, &ricci, 2.0, &XSampling::default()).is_err());
    }

    #[test]
    fn hypothesis_report_is_deterministic() {
        let kind = FlowKind::ListExtended;
        let geom = Geometry::flat_circle(32, 1.0).unwrap();
        let f = ScalarField::from_fn(geom.grid(), |x, _| (TAU * x).sin());
        let snaps = run(FlowState::new(0.0, geom, Some(f), &kind).unwrap(), &kind, 1e-4, 3);
        let s = XSampling { seed: 7, ..XSampling::default() };
        let a = check_hypotheses(&snaps, None, &kind, 3.0, &s).unwrap();
        let b = check_hypotheses(&snaps, None, &kind, 3.0, &s).unwrap();
        assert_eq!(a, b);
    }
}
