use std::f64::consts::TAU;

use geoflow_core::flow::{s_tensor, s_trace, step};
use geoflow_core::harnack::action::ActionLattice;
use geoflow_core::harnack::{harnack_f, proposition_rhs, theorem1_rhs};
use geoflow_core::identities::{Context, Identity, Residual};
use geoflow_core::pme::{pme_step, simulate, PressureView};
use geoflow_core::structure::{quantity_e, quantity_eb, quantity_i, FlowTriple};
use geoflow_core::{
    CurvatureBounds, FlowKind, FlowState, GeoError, Geometry, GridSpec, HarnackConfig, InitialData, PmeState,
    ScalarField, Schedule, TimeFunction, VectorField,
};
use proptest::prelude::*;

fn wavy(g: GridSpec, a: f64, b: f64, ph: f64) -> ScalarField {
    ScalarField::from_fn(g, |x, y| a * (TAU * x + ph).sin() * (TAU * y).cos() + b * (TAU * (x + 2.0 * y)).cos())
}

fn conformal_torus(n: usize, a: f64, b: f64, ph: f64) -> Geometry {
    Geometry::torus(wavy(GridSpec::square(n, 1.0).unwrap(), a, b, ph)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn laplacian_is_conservative(a in -0.3..0.3f64, b in -0.3..0.3f64, ph in 0.0..TAU, c in -5.0..5.0f64) {
        let geom = conformal_torus(16, a, b, ph);
        let g = geom.grid();
        prop_assert_eq!(geom.laplacian(&ScalarField::constant(g, c)).linf(), 0.0);
        let f = wavy(g, 1.0 + a, c, 2.0 * ph);
        let total = geom.integrate(&geom.laplacian(&f));
        prop_assert!(total.abs() <= 1e-12 * f.linf().max(1.0) * geom.laplacian(&f).linf().max(1.0));
    }

    #[test]
    fn conformal_ricci_is_half_scalar_times_metric(a in -0.3..0.3f64, b in -0.3..0.3f64, ph in 0.0..TAU) {
        let geom = conformal_torus(12, a, b, ph);
        let r = geom.scalar_curvature();
        let expected = geom.metric().scale_by(&r.map(|x| 0.5 * x));
        prop_assert_eq!(geom.ricci(), expected);
    }

    #[test]
    fn geodesic_distance_triangle_inequality(a in -0.3..0.3f64, ph in 0.0..TAU, i in 0usize..256, j in 0usize..256, k in 0usize..256) {
        let geom = conformal_torus(16, a, 0.1, ph);
        let h = geom.grid().h_max() * geom.conformal_factor().max().sqrt();
        let (di, dj) = (geom.geodesic_distance(i).unwrap(), geom.geodesic_distance(j).unwrap());
        prop_assert!(di.values()[k] <= di.values()[j] + dj.values()[k] + 2.0 * h);
        prop_assert!((di.values()[j] - dj.values()[i]).abs() < 1e-12);
    }

    #[test]
    fn s_tensor_trace_matches_s_trace(lam in -1.0..1.0f64, a in -0.2..0.2f64, ph in 0.0..TAU, pick in 0usize..3) {
        let kind = [FlowKind::Ricci, FlowKind::ScaledIdentity(TimeFunction::constant(lam)), FlowKind::Static][pick].clone();
        let mut st = FlowState::new(0.1, conformal_torus(16, a, 0.05, ph), None, &kind).unwrap();
        for _ in 0..3 {
            let tr = st.geom.trace(&s_tensor(&st, &kind).unwrap());
            prop_assert!((&tr - &s_trace(&st, &kind).unwrap()).linf() <= 1e-12 * tr.linf().max(1.0));
            st = step(&st, &kind, 1e-4).unwrap();
        }
    }

    #[test]
    fn list_flow_i_is_quadratic_and_eb_at_two_is_e(c in -4.0..4.0f64, amp in 0.05..0.5f64, ph in 0.0..TAU) {
        let kind = FlowKind::ListExtended;
        let geom = Geometry::flat_circle(32, 1.0).unwrap();
        let g = geom.grid();
        let f = ScalarField::from_fn(g, |x, _| amp * (TAU * x + ph).sin());
        let mut snaps = vec![FlowState::new(0.0, geom, Some(f), &kind).unwrap()];
        for _ in 0..2 {
            let next = step(snaps.last().unwrap(), &kind, 1e-4).unwrap();
            snaps.push(next);
        }
        let x = VectorField::from_fn(g, |x, _| [1.0 + (TAU * x).cos(), 0.0]);
        let i1 = quantity_i(&snaps[1], &kind, &x).unwrap();
        let ic = quantity_i(&snaps[1], &kind, &x.scale(c)).unwrap();
        prop_assert!((&ic - &i1.map(|v| c * c * v)).linf() <= 1e-12 * ic.linf().max(1.0));
        let tr = FlowTriple::new(&snaps[0], &snaps[1], &snaps[2]).unwrap();
        prop_assert_eq!(quantity_e(tr, &kind, &x).unwrap(), quantity_eb(tr, &kind, &x, 2.0).unwrap());
    }

    #[test]
    fn harnack_f_is_affine_in_b_and_d(v0 in 0.5..3.0f64, vt in -2.0..2.0f64, s0 in -1.0..1.0f64, t in 0.01..2.0f64, b in 2.0..9.0f64, d in 2.0..9.0f64) {
        let g = GridSpec::square(8, 1.0).unwrap();
        let geom = Geometry::flat_torus(8, 1.0).unwrap();
        let v = ScalarField::from_fn(g, |x, y| v0 + 0.2 * (TAU * x).sin() * (TAU * y).cos());
        let view = PressureView::new(&geom, v.clone(), ScalarField::constant(g, vt));
        let s = ScalarField::constant(g, s0);
        let f = harnack_f(&view, &s, b, d, t).unwrap();
        let base = harnack_f(&view, &s, 0.0, 0.0, t).unwrap();
        // coefficients −v_t/v − S/v in b and −1/t in d
        let expected = base.zip_map(&v, |f0, v| f0 + b * (-vt / v - s0 / v) - d / t);
        prop_assert!((&f - &expected).linf() <= 1e-12 * f.linf().max(1.0));
    }

    #[test]
    fn theorem_and_proposition_agree_at_b_two(p in 1.01..5.0f64, n in 1usize..4, v_max in 0.0..10.0f64, rho in 0.05..10.0f64,
                                               c1 in 0.1..3.0f64, c2 in 0.1..3.0f64, k1 in 0.0..3.0f64, k2 in 0.0..3.0f64, k3 in 0.0..3.0f64, d in 2.0..6.0f64) {
        let cfg = HarnackConfig { b: 2.0, d, rho, c: [c1, c2, c1, c2], ..HarnackConfig::default() };
        let bounds = CurvatureBounds { k1, k2, k3 };
        let a = theorem1_rhs(&cfg, p, n, v_max, bounds).unwrap();
        let b = proposition_rhs(&cfg, p, n, v_max, bounds).unwrap();
        prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
    }

    #[test]
    fn action_is_monotone_and_a_lower_bound(seed in 0u64..1000, amp in 0.0..3.0f64, extra in 0.0..2.0f64, x1 in 0usize..64, x2 in 0usize..64,
                                            wiggle in proptest::collection::vec(-2isize..=2, 5)) {
        let n = 64;
        let g = GridSpec::line(n, 1.0).unwrap();
        let ph = seed as f64 * 0.37;
        let base: Vec<ScalarField> = (0..7).map(|k| ScalarField::from_fn(g, |x, _| amp * (1.0 + (TAU * x + ph + k as f64).sin()))).collect();
        let more: Vec<ScalarField> = base.iter().map(|s| s.map(|v| v + extra)).collect();
        let geoms = vec![Geometry::flat_circle(n, 1.0).unwrap(); 7];
        let times: Vec<f64> = (0..7).map(|k| 0.1 + 0.05 * k as f64).collect();
        let lo = ActionLattice::new(times.clone(), geoms.clone(), base).unwrap();
        let hi = ActionLattice::new(times, geoms, more).unwrap();
        let best = lo.minimise(x1, x2, None).unwrap();
        prop_assert!(best.gamma <= hi.minimise(x1, x2, None).unwrap().gamma + 1e-12);
        // a path that stays within the lattice's move radius never beats the minimum
        let mut path = best.nodes.clone();
        for (k, w) in wiggle.iter().enumerate() {
            let node = path[k + 1] as isize + w;
            path[k + 1] = node.rem_euclid(n as isize) as usize;
        }
        let fits = path.windows(2).all(|w| {
            let d = (w[1] as isize - w[0] as isize).rem_euclid(n as isize);
            d.min(n as isize - d) as usize <= best.radius
        });
        if fits {
            prop_assert!(lo.path_action(&path).unwrap() >= best.gamma - 1e-12);
        }
    }

    #[test]
    fn pme_steps_keep_positivity_or_fail_loudly(seed in 0u64..500, floor in 0.01..0.5f64, dt in 1e-5..5e-2f64, lam in -40.0..0.0f64) {
        let kind = FlowKind::ScaledIdentity(TimeFunction::constant(lam));
        let geom = Geometry::flat_torus(12, 1.0).unwrap();
        let u = InitialData::RandomSmooth { seed, modes: 3, amplitude: 1.0, floor }.sample(geom.grid()).unwrap();
        let st = PmeState::new(FlowState::new(0.0, geom, None, &kind).unwrap(), u, 2.0).unwrap();
        match pme_step(&st, &kind, dt) {
            Ok(next) => prop_assert!(next.u().min() > 0.0),
            Err(e) => prop_assert!(matches!(e, GeoError::Positivity { .. }), "{}", e),
        }
    }

    #[test]
    fn mass_is_conserved(seed in 0u64..500, a in -0.2..0.2f64, ricci in proptest::bool::ANY) {
        let kind = if ricci { FlowKind::Ricci } else { FlowKind::Static };
        let geom = conformal_torus(16, a, 0.05, 1.0);
        let u = InitialData::RandomSmooth { seed, modes: 3, amplitude: 0.8, floor: 0.2 }.sample(geom.grid()).unwrap();
        let st = PmeState::new(FlowState::new(0.0, geom, None, &kind).unwrap(), u, 2.0).unwrap();
        let m0 = st.mass();
        let run = simulate(st, &kind, Schedule { dt: 2e-4, steps_per_snapshot: 50, count: 5 }).unwrap();
        for s in &run.snapshots {
            prop_assert!(((s.mass() - m0) / m0).abs() <= 1e-4);
        }
    }

    #[test]
    fn harmonic_flow_obeys_maximum_principle(amp in 0.05..1.0f64, ph in 0.0..TAU, a0 in 0.5..3.0f64) {
        let kind = FlowKind::HarmonicScalar(TimeFunction::constant(a0));
        let geom = Geometry::circle(ScalarField::from_fn(GridSpec::line(32, 1.0).unwrap(), |x, _| 1.0 + 0.2 * (TAU * x).cos())).unwrap();
        let f = ScalarField::from_fn(geom.grid(), |x, _| amp * (TAU * x + ph).sin() + 0.3 * amp * (2.0 * TAU * x).cos());
        let mut st = FlowState::new(0.0, geom, Some(f), &kind).unwrap();
        for _ in 0..20 {
            let next = step(&st, &kind, 1e-4).unwrap();
            let (f0, f1) = (st.f.as_ref().unwrap(), next.f.as_ref().unwrap());
            prop_assert!(f1.max() <= f0.max() + 1e-8 && f1.min() >= f0.min() - 1e-8);
            st = next;
        }
    }

    #[test]
    fn constant_data_under_static_flow_has_zero_residuals(c in 0.1..5.0f64, p in 1.1..4.0f64, b in 2.0..6.0f64, extra in 0.0..3.0f64) {
        let kind = FlowKind::Static;
        let geom = Geometry::flat_torus(8, 1.0).unwrap();
        let u = ScalarField::constant(geom.grid(), c);
        let st = PmeState::new(FlowState::new(0.3, geom, None, &kind).unwrap(), u, p).unwrap();
        let run = simulate(st, &kind, Schedule { dt: 1e-3, steps_per_snapshot: 2, count: 3 }).unwrap();
        let ctx = Context::from_run(&run, 1).unwrap();
        for id in Identity::ALL {
            let r = Residual::from_sides(id, 0.125, 1e-3, &ctx.sides(id, b, b + extra).unwrap());
            prop_assert!(r.linf <= 1e-10, "{}: {}", id, r.linf);
        }
    }
}

#[test]
fn hessian_trace_matches_laplacian() {
    // the stencils are built so the trace reproduces the discrete Laplacian
    for n in [16, 32, 64] {
        let geom = conformal_torus(n, 0.2, 0.1, 0.4);
        let f = wavy(geom.grid(), 1.0, 0.5, 1.3);
        let lap = geom.laplacian(&f);
        assert!((&geom.trace(&geom.hessian(&f)) - &lap).linf() <= 1e-12 * lap.linf());
    }
}

#[test]
fn lattice_refinement_does_not_raise_action_beyond_h() {
    let gamma = |n: usize| {
        let g = GridSpec::line(n, 1.0).unwrap();
        let s = vec![ScalarField::from_fn(g, |x, _| 1.0 + (TAU * x).sin()); 9];
        let times = (0..9).map(|k| 0.2 + 0.05 * k as f64).collect();
        ActionLattice::new(times, vec![Geometry::flat_circle(n, 1.0).unwrap(); 9], s)
            .unwrap()
            .minimise(0, n / 4, None)
            .unwrap()
            .gamma
    };
    let (coarse, fine) = (gamma(64), gamma(128));
    assert!(fine <= coarse + 2.0 / 64.0, "{coarse} {fine}");
}
