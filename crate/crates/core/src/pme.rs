//! The porous medium equation with potential, `u_t = Δu^p + S u`, advanced
//! together with the metric, and its pressure `v = p/(p−1)·u^{p−1}`.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, GeoError, Result};
use crate::flow::{self, halvings_for, s_trace, FlowKind, FlowState, StepReport, CFL};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::manifold::Geometry;

/// `v = p/(p−1)·u^{p−1}`.
pub fn to_pressure(u: &ScalarField, p: f64) -> Result<ScalarField> {
    check_exponent(p)?;
    check_positive(u, f64::NAN)?;
    let c = p / (p - 1.0);
    Ok(u.map(|u| c * u.powf(p - 1.0)))
}

fn check_exponent(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("the porous medium exponent needs p > 1, got {p}")))
    }
}

fn check_positive(u: &ScalarField, t: f64) -> Result<()> {
    match u.values().iter().position(|&x| !(x > 0.0)) {
        Some(node) => Err(GeoError::Positivity { node, t, value: u.values()[node] }),
        None => Ok(()),
    }
}

/// Solution and metric at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PmeSnapshot {
    pub flow: FlowState,
    pub u: ScalarField,
}

impl PmeSnapshot {
    pub fn t(&self) -> f64 {
        self.flow.t
    }

    pub fn mass(&self) -> f64 {
        self.flow.geom.integrate(&self.u)
    }
}

/// Grid extrema of `u` and of the pressure `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrema {
    pub v_min: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

fn extrema_of(u: &ScalarField, p: f64) -> Extrema {
    // v is increasing in u, so its extrema sit where u's do
    let c = p / (p - 1.0);
    let (u_min, u_max) = (u.min(), u.max());
    Extrema { v_min: c * u_min.powf(p - 1.0), v_max: c * u_max.powf(p - 1.0), u_min, u_max }
}

/// Current solution plus the last three accepted steps.
#[derive(Debug, Clone)]
pub struct PmeState {
    p: f64,
    now: PmeSnapshot,
    ring: VecDeque<PmeSnapshot>,
}

impl PmeState {
    pub fn new(flow: FlowState, u: ScalarField, p: f64) -> Result<Self> {
        check_exponent(p)?;
        if *u.grid() != flow.geom.grid() {
            return Err(GeoError::GridMismatch("u and the metric live on different grids".into()));
        }
        check_positive(&u, flow.t)?;
        let now = PmeSnapshot { flow, u };
        Ok(Self { p, ring: VecDeque::from([now.clone()]), now })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn t(&self) -> f64 {
        self.now.flow.t
    }

    pub fn u(&self) -> &ScalarField {
        &self.now.u
    }

    pub fn flow(&self) -> &FlowState {
        &self.now.flow
    }

    pub fn snapshot(&self) -> &PmeSnapshot {
        &self.now
    }

    /// Up to three most recent snapshots, oldest first (the last is current).
    pub fn ring(&self) -> &VecDeque<PmeSnapshot> {
        &self.ring
    }

    pub fn pressure(&self) -> ScalarField {
        to_pressure(&self.now.u, self.p).expect("state invariants")
    }

    /// `∫ u dμ` in the current metric.
    pub fn mass(&self) -> f64 {
        self.now.mass()
    }

    pub fn extrema(&self) -> Extrema {
        extrema_of(&self.now.u, self.p)
    }
}

/// Pressure and its derivatives at one snapshot.
#[derive(Debug, Clone)]
pub struct PressureView {
    pub v: ScalarField,
    pub v_t: ScalarField,
    pub grad: VectorField,
    pub grad_sq: ScalarField,
    pub lap: ScalarField,
}

impl PressureView {
    pub fn new(geom: &Geometry, v: ScalarField, v_t: ScalarField) -> Self {
        let grad = geom.gradient(&v);
        let grad_sq = geom.norm_sq(&grad);
        let lap = geom.laplacian(&v);
        Self { v, v_t, grad, grad_sq, lap }
    }
}

/// Time derivative at the middle of three equally spaced samples.
pub(crate) fn centred(prev: &ScalarField, next: &ScalarField, delta: f64) -> ScalarField {
    next.zip_map(prev, |b, a| (b - a) / (2.0 * delta))
}

/// Second-order one-sided derivative at `f0` from `f0, f1, f2` spaced by `delta`
/// (pass a negative `delta` for the backward stencil).
pub(crate) fn one_sided(f0: &ScalarField, f1: &ScalarField, f2: &ScalarField, delta: f64) -> ScalarField {
    let out = f0
        .values()
        .iter()
        .zip(f1.values())
        .zip(f2.values())
        .map(|((a, b), c)| (-3.0 * a + 4.0 * b - c) / (2.0 * delta))
        .collect();
    ScalarField::from_raw(*f0.grid(), out)
}

pub(crate) fn equally_spaced(ts: &[f64]) -> Result<f64> {
    let delta = ts[1] - ts[0];
    if !(delta > 0.0) {
        return Err(invalid("snapshot times must be strictly increasing"));
    }
    for w in ts.windows(2) {
        if ((w[1] - w[0]) - delta).abs() > 1e-9 * delta.max(w[1].abs()) {
            return Err(invalid(format!("mismatched snapshot spacing: {} vs {delta}", w[1] - w[0])));
        }
    }
    Ok(delta)
}

/// `v_t − (p−1)vΔv − |∇v|² − (p−1)Sv` at the middle of three equally spaced
/// snapshots.
pub fn v_form_residual_triple(snaps: [&PmeSnapshot; 3], kind: &FlowKind, p: f64) -> Result<ScalarField> {
    let delta = equally_spaced(&[snaps[0].t(), snaps[1].t(), snaps[2].t()])?;
    let v: Vec<ScalarField> = snaps.iter().map(|s| to_pressure(&s.u, p)).collect::<Result<_>>()?;
    let mid = snaps[1];
    let view = PressureView::new(&mid.flow.geom, v[1].clone(), centred(&v[0], &v[2], delta));
    let s = s_trace(&mid.flow, kind)?;
    let out = (0..view.v.len())
        .map(|k| {
            let (v, vt) = (view.v.values()[k], view.v_t.values()[k]);
            vt - (p - 1.0) * v * view.lap.values()[k] - view.grad_sq.values()[k] - (p - 1.0) * s.values()[k] * v
        })
        .collect();
    Ok(ScalarField::from_raw(mid.flow.geom.grid(), out))
}

/// Pressure-equation residual at the middle of the state's snapshot ring.
pub fn v_form_residual(state: &PmeState, kind: &FlowKind) -> Result<ScalarField> {
    if state.ring.len() < 3 {
        return Err(invalid("the pressure residual needs three stored steps"));
    }
    v_form_residual_triple([&state.ring[0], &state.ring[1], &state.ring[2]], kind, state.p)
}

/// Largest stable explicit step for `u_t = Δu^m + Su` coupled to the flow.
pub fn stable_dt(flow: &FlowState, kind: &FlowKind, u: &ScalarField, m: f64) -> f64 {
    let flow_dt = flow::stable_dt(flow, kind);
    let grid = flow.geom.grid();
    if grid.is_homogeneous() {
        return flow_dt;
    }
    let h = grid.h_max();
    let diffusivity = m * u.values().iter().fold(0.0f64, |acc, &x| acc.max(x.powf(m - 1.0)))
        / flow.geom.conformal_factor().min();
    flow_dt.min(CFL * h * h / diffusivity)
}

fn u_rate(flow: &FlowState, kind: &FlowKind, u: &ScalarField, m: f64) -> Result<Vec<f64>> {
    let s = s_trace(flow, kind)?;
    let um = if m == 1.0 { u.clone() } else { u.map(|x| x.powf(m)) };
    let lap = flow.geom.laplacian(&um);
    Ok(lap.values().iter().zip(s.values()).zip(u.values()).map(|((l, s), u)| l + s * u).collect())
}

fn apply_u(u: &ScalarField, rate: &[f64], dt: f64, t: f64) -> Result<ScalarField> {
    let out = ScalarField::from_raw(*u.grid(), u.values().iter().zip(rate).map(|(u, r)| u + dt * r).collect());
    check_positive(&out, t)?;
    Ok(out)
}

/// One Heun step of the coupled system, metric and `u` sharing both stages.
fn heun(snap: &PmeSnapshot, kind: &FlowKind, m: f64, dt: f64) -> Result<PmeSnapshot> {
    let t1 = snap.flow.t + dt;
    let kf1 = flow::tendency(&snap.flow, kind)?;
    let ku1 = u_rate(&snap.flow, kind, &snap.u, m)?;
    let flow1 = flow::apply(&snap.flow, &kf1, dt)?;
    let u1 = apply_u(&snap.u, &ku1, dt, t1)?;
    let kf2 = flow::tendency(&flow1, kind)?;
    let ku2 = u_rate(&flow1, kind, &u1, m)?;
    let avg: Vec<f64> = ku1.iter().zip(&ku2).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(PmeSnapshot { flow: flow::apply(&snap.flow, &kf1.average(&kf2), dt)?, u: apply_u(&snap.u, &avg, dt, t1)? })
}

fn advance(snap: &PmeSnapshot, kind: &FlowKind, m: f64, dt: f64) -> Result<(PmeSnapshot, StepReport)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let halvings = halvings_for(dt, stable_dt(&snap.flow, kind, &snap.u, m));
    let substeps = 1u32 << halvings;
    let sub = dt / substeps as f64;
    let mut cur = snap.clone();
    for _ in 0..substeps {
        cur = heun(&cur, kind, m, sub)?;
    }
    Ok((cur, StepReport { halvings, substeps }))
}

/// Advances `u` and the metric by `dt` (halving it as the stability bound
/// requires) and rotates the snapshot ring.
pub fn pme_step(state: &PmeState, kind: &FlowKind, dt: f64) -> Result<PmeState> {
    pme_step_reported(state, kind, dt).map(|(s, _)| s)
}

pub fn pme_step_reported(state: &PmeState, kind: &FlowKind, dt: f64) -> Result<(PmeState, StepReport)> {
    let (now, report) = advance(&state.now, kind, state.p, dt)?;
    let mut ring = state.ring.clone();
    ring.push_back(now.clone());
    while ring.len() > 3 {
        ring.pop_front();
    }
    Ok((PmeState { p: state.p, now, ring }, report))
}

/// The linear equation `u_t = Δu + Su` (the `p → 1` limit), same scheme.
pub fn linear_step(snap: &PmeSnapshot, kind: &FlowKind, dt: f64) -> Result<PmeSnapshot> {
    advance(snap, kind, 1.0, dt).map(|(s, _)| s)
}

/// Initial data for `u`, always bounded below by a positive floor.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Constant(f64),
    /// `floor + amplitude·Σ exp(−|x − c − image|²/(2σ²))` over the periodic
    /// images within two periods.
    GaussianBump { amplitude: f64, width: f64, center: [f64; 2], floor: f64 },
    /// `floor + amplitude·q` with `q ∈ [0, 1]` a random trigonometric
    /// polynomial with wavenumbers up to `modes`.
    RandomSmooth { seed: u64, modes: usize, amplitude: f64, floor: f64 },
}

impl InitialData {
    pub fn sample(&self, grid: GridSpec) -> Result<ScalarField> {
        let floor = match self {
            Self::Constant(c) => *c,
            Self::GaussianBump { floor, .. } | Self::RandomSmooth { floor, .. } => *floor,
        };
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(invalid(format!("initial data must stay positive, floor = {floor}")));
        }
        if grid.is_homogeneous() && !matches!(self, Self::Constant(_)) {
            return Err(invalid("homogeneous backends only take constant initial data"));
        }
        match self {
            Self::Constant(c) => Ok(ScalarField::constant(grid, *c)),
            Self::GaussianBump { amplitude, width, center, floor } => {
                if !(*width > 0.0) || *amplitude < 0.0 {
                    return Err(invalid("gaussian bump needs width > 0 and amplitude ≥ 0"));
                }
                let (lx, ly) = (grid.length(0), if grid.dim() == 2 { grid.length(1) } else { 0.0 });
                let inv = 1.0 / (2.0 * width * width);
                let images_y: &[i32] = if grid.dim() == 2 { &[-2, -1, 0, 1, 2] } else { &[0] };
                Ok(ScalarField::from_fn(grid, |x, y| {
                    let mut acc = 0.0;
                    for ix in -2..=2 {
                        for &iy in images_y {
                            let dx = x - center[0] - ix as f64 * lx;
                            let dy = if grid.dim() == 2 { y - center[1] - iy as f64 * ly } else { 0.0 };
                            acc += (-(dx * dx + dy * dy) * inv).exp();
                        }
                    }
                    floor + amplitude * acc
                }))
            }
            Self::RandomSmooth { seed, modes, amplitude, floor } => {
                if *modes == 0 || *amplitude < 0.0 {
                    return Err(invalid("random-smooth data needs modes ≥ 1 and amplitude ≥ 0"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let kmax = *modes as i64;
                let ky_range = if grid.dim() == 2 { -kmax..=kmax } else { 0..=0 };
                let mut terms = Vec::new();
                for kx in -kmax..=kmax {
                    for ky in ky_range.clone() {
                        if (kx, ky) == (0, 0) || kx * kx + ky * ky > kmax * kmax {
                            continue;
                        }
                        let a: f64 = rng.gen_range(-1.0..1.0);
                        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                        terms.push((kx as f64, ky as f64, a, phase));
                    }
                }
                let (lx, ly) = (grid.length(0), if grid.dim() == 2 { grid.length(1) } else { 1.0 });
                let tau = std::f64::consts::TAU;
                let raw = ScalarField::from_fn(grid, |x, y| {
                    terms.iter().map(|(kx, ky, a, ph)| a * (tau * (kx * x / lx + ky * y / ly) + ph).cos()).sum()
                });
                let (lo, hi) = (raw.min(), raw.max());
                let span = if hi > lo { hi - lo } else { 1.0 };
                Ok(raw.map(|r| floor + amplitude * (r - lo) / span))
            }
        }
    }
}

/// Snapshots of a run, equally spaced in time.
#[derive(Debug, Clone)]
pub struct Run {
    pub p: f64,
    pub kind: FlowKind,
    pub snapshots: Vec<PmeSnapshot>,
    /// Total CFL halvings over the run.
    pub halvings: u64,
}

/// Step sizes of a recorded run: `steps_per_snapshot` solver steps of `dt`
/// between consecutive snapshots, `count` snapshots in total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub dt: f64,
    pub steps_per_snapshot: usize,
    pub count: usize,
}

impl Schedule {
    pub fn spacing(&self) -> f64 {
        self.dt * self.steps_per_snapshot as f64
    }
}

/// Runs the coupled system from `state`, recording snapshots per `schedule`.
pub fn simulate(state: PmeState, kind: &FlowKind, schedule: Schedule) -> Result<Run> {
    if schedule.count == 0 || schedule.steps_per_snapshot == 0 {
        return Err(invalid("a run needs at least one snapshot and one step per snapshot"));
    }
    let p = state.p;
    let t0 = state.t();
    kind.validate(&state.now.flow.geom, t0, t0 + schedule.spacing() * (schedule.count - 1) as f64)?;
    let mut snapshots = vec![state.now.clone()];
    let mut cur = state.now;
    let mut halvings = 0;
    for i in 1..schedule.count {
        for _ in 0..schedule.steps_per_snapshot {
            let (next, rep) = advance(&cur, kind, p, schedule.dt)?;
            halvings += rep.halvings as u64;
            cur = next;
        }
        // pin the clock to the schedule so spacing stays exact
        cur.flow.t = t0 + schedule.spacing() * i as f64;
        snapshots.push(cur.clone());
    }
    Ok(Run { p, kind: kind.clone(), snapshots, halvings })
}

/// The linear equation on the same schedule.
pub fn simulate_linear(start: PmeSnapshot, kind: &FlowKind, schedule: Schedule) -> Result<Vec<PmeSnapshot>> {
    let t0 = start.t();
    let mut out = vec![start];
    for i in 1..schedule.count {
        let mut cur = out.last().unwrap().clone();
        for _ in 0..schedule.steps_per_snapshot {
            cur = linear_step(&cur, kind, schedule.dt)?;
        }
        cur.flow.t = t0 + schedule.spacing() * i as f64;
        out.push(cur);
    }
    Ok(out)
}

impl Run {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.snapshots[1].t() - self.snapshots[0].t()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t()).collect()
    }

    pub fn pressure(&self, i: usize) -> ScalarField {
        to_pressure(&self.snapshots[i].u, self.p).expect("run snapshots are positive")
    }

    pub fn pressures(&self) -> Vec<ScalarField> {
        (0..self.len()).map(|i| self.pressure(i)).collect()
    }

    pub fn flows(&self) -> Vec<FlowState> {
        self.snapshots.iter().map(|s| s.flow.clone()).collect()
    }

    /// Pressure view at snapshot `i`: centred `v_t` inside the run,
    /// one-sided second-order at its ends.
    pub fn pressure_view(&self, i: usize) -> Result<PressureView> {
        let n = self.len();
        if n < 3 {
            return Err(invalid("pressure time derivatives need three snapshots"));
        }
        let delta = equally_spaced(&self.times())?;
        let v = |k: usize| self.pressure(k);
        let v_t = if i == 0 {
            one_sided(&v(0), &v(1), &v(2), delta)
        } else if i == n - 1 {
            one_sided(&v(n - 1), &v(n - 2), &v(n - 3), -delta)
        } else {
            centred(&v(i - 1), &v(i + 1), delta)
        };
        Ok(PressureView::new(&self.snapshots[i].flow.geom, v(i), v_t))
    }

    pub fn extrema(&self, i: usize) -> Extrema {
        extrema_of(&self.snapshots[i].u, self.p)
    }

    /// Pressure-equation residual at interior snapshot `i`.
    pub fn v_form_residual(&self, i: usize) -> Result<ScalarField> {
        if i == 0 || i + 1 >= self.len() {
            return Err(invalid("residual needs an interior snapshot"));
        }
        let s = &self.snapshots;
        v_form_residual_triple([&s[i - 1], &s[i], &s[i + 1]], &self.kind, self.p)
    }
}
