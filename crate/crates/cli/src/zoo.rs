//! Discrete structure quantities of each example flow against their closed
//! forms, on one short run per flow.

use std::f64::consts::TAU;

use geoflow_core::flow::step;
use geoflow_core::structure::{divergence_gap, quantity_d, quantity_e, quantity_h, quantity_i, FlowTriple};
use geoflow_core::{FlowKind, FlowState, Geometry, GridSpec, ScalarField, TimeFunction, VectorField};

use crate::output::ZooRow;
use crate::CliError;

/// A row is within tolerance when `gap ≤ ZOO_TOLERANCE·max(1, |closed form|, scale)`.
pub const ZOO_TOLERANCE: f64 = 1e-2;

const T0: f64 = 0.1;
const TORUS_N: usize = 128;

fn triple(st: FlowState, kind: &FlowKind, dt: f64) -> Result<[FlowState; 3], CliError> {
    let mid = step(&st, kind, dt)?;
    let next = step(&mid, kind, dt)?;
    Ok([st, mid, next])
}

fn row(kind: &str, quantity: &str, formula: &str, closed: &[f64], discrete: &[f64], scale: f64) -> ZooRow {
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let gap = closed.iter().zip(discrete).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let closed_form = norm(closed);
    ZooRow {
        kind: kind.into(),
        quantity: quantity.into(),
        formula: formula.into(),
        closed_form,
        discrete: norm(discrete),
        gap,
        scale,
        within_tolerance: gap <= ZOO_TOLERANCE * closed_form.max(scale).max(1.0),
    }
}

fn torus_x(g: GridSpec) -> VectorField {
    VectorField::from_fn(g, |x, y| [0.7 + 0.2 * (TAU * y).cos(), -0.4 + 0.3 * (TAU * x).sin()])
}

fn vanishing(name: &str, kind: &FlowKind, geom: Geometry, with_h: bool) -> Result<Vec<ZooRow>, CliError> {
    let g = geom.grid();
    let h = g.h_max();
    let s = triple(FlowState::new(T0, geom, None, kind)?, kind, 0.1 * h * h)?;
    let tr = FlowTriple::new(&s[0], &s[1], &s[2])?;
    let x = torus_x(g);
    let zeros = vec![0.0; g.node_count()];
    // the vanishing quantities are differences of terms of size R² and |∇R|
    let r = s[1].geom.scalar_curvature();
    let r_sq = r.linf().powi(2);
    let grad_r = s[1].geom.norm_sq(&s[1].geom.gradient(&r)).linf().sqrt();
    let mut rows = vec![row(name, "I", "0", &zeros, quantity_i(&s[1], kind, &x)?.values(), 0.0)];
    if with_h {
        rows.push(row(name, "H", "0", &zeros, quantity_h(tr, kind, &x)?.values(), r_sq));
    }
    rows.push(row(name, "D", "0", &zeros, quantity_d(tr, kind)?.values(), r_sq));
    rows.push(row(name, "E", "0", &zeros, quantity_e(tr, kind, &x)?.values(), r_sq.max(grad_r)));
    let gap = divergence_gap(&s[1], kind)?;
    rows.push(row(name, "divergence_gap", "0", &vec![0.0; gap.raw().len()], gap.raw(), grad_r));
    Ok(rows)
}

/// List-type flows on the flat circle with `S = Ric − α df⊗df`.
fn scalar_map(name: &str, kind: &FlowKind) -> Result<Vec<ZooRow>, CliError> {
    let n = 128;
    let geom = Geometry::flat_circle(n, 1.0)?;
    let g = geom.grid();
    let f = ScalarField::from_fn(g, |x, _| 0.3 * (TAU * x).sin() + 0.1 * (2.0 * TAU * x).cos());
    let h = g.h_max();
    let s = triple(FlowState::new(T0, geom, Some(f), kind)?, kind, 0.1 * h * h)?;
    let tr = FlowTriple::new(&s[0], &s[1], &s[2])?;
    let mid = &s[1];
    let t = mid.t;
    let (a, da) = (kind.alpha(t).unwrap_or(0.0), kind.alpha_derivative(t).unwrap_or(0.0));
    let fm = mid.f.as_ref().expect("scalar map present");
    let x = VectorField::from_fn(g, |x, _| [1.0 + 0.5 * (TAU * x).cos(), 0.0]);
    let lap = mid.geom.laplacian(fm);
    let xf = mid.geom.directional(&x, fm);
    let grad = mid.geom.gradient(fm);
    let grad_sq = mid.geom.norm_sq(&grad);
    let i: Vec<f64> = xf.values().iter().map(|d| a * d * d).collect();
    let d: Vec<f64> = (0..n).map(|k| 2.0 * a * lap.values()[k].powi(2) - da * grad_sq.values()[k]).collect();
    let e: Vec<f64> =
        (0..n).map(|k| 2.0 * a * (lap.values()[k] - xf.values()[k]).powi(2) - da * grad_sq.values()[k]).collect();
    let gap: Vec<f64> = (0..n).map(|k| -2.0 * a * lap.values()[k] * grad.at(k)[0]).collect();
    Ok(vec![
        row(name, "I", "α(∇_X f)²", &i, quantity_i(mid, kind, &x)?.values(), 0.0),
        row(name, "D", "2α(Δf)² − α′|∇f|²", &d, quantity_d(tr, kind)?.values(), 0.0),
        row(name, "E", "2α(Δf − ∇_X f)² − α′|∇f|²", &e, quantity_e(tr, kind, &x)?.values(), 0.0),
        row(name, "divergence_gap", "−2αΔf∇f", &gap, &divergence_gap(mid, kind)?.raw()[..n], 0.0),
    ])
}

/// The table over the four example flows.
pub fn flow_zoo() -> Result<Vec<ZooRow>, CliError> {
    let mut rows = vanishing("static", &FlowKind::Static, Geometry::flat_torus(TORUS_N, 1.0)?, true)?;
    let g = GridSpec::square(TORUS_N, 1.0)?;
    let w = ScalarField::from_fn(g, |x, y| 0.2 * (TAU * x).sin() * (TAU * (x + y)).cos());
    rows.extend(vanishing("ricci", &FlowKind::Ricci, Geometry::torus(w)?, false)?);
    rows.extend(scalar_map("list", &FlowKind::ListExtended)?);
    let alpha = TimeFunction::table(vec![(0.0, 2.0), (1.0, 1.0)])?;
    rows.extend(scalar_map("harmonic", &FlowKind::HarmonicScalar(alpha))?);
    Ok(rows)
}
