//! Finite-difference residuals of the evolution identities satisfied by the
//! pressure `v` along the coupled flow, and convergence studies over
//! refinement ladders.
//!
//! Every residual is evaluated at the middle snapshot of an equally spaced
//! triple: time derivatives are centred differences across the outer
//! snapshots, spatial terms use the middle metric. `L = ∂_t − (p−1)vΔ`.
//!
//! The identity for `L(F)` is implemented in the form obtained by combining
//! the four operator identities below; it differs from some printed versions
//! in the coefficient of `∂_t S − 2⟨∇S,∇v⟩ + 2S(∇v,∇v)`, which is
//! `−((b−1)/v + p − 1)`, and has no `d/t` or `d|∇v|²/(tv)` terms beyond those
//! listed in [`harnack_rhs`].

use std::fmt;

use crate::error::{invalid, Result};
use crate::flow::{s_tensor, s_time_derivative, FlowKind, FlowState};
use crate::grid::{ScalarField, SymTensorField};
use crate::manifold::Geometry;
use crate::pme::{centred, equally_spaced, simulate, to_pressure, InitialData, PmeSnapshot, PmeState, PressureView, Run, Schedule};

/// The identities checked by the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Identity {
    /// `∂_t g_ij = −2S_ij`.
    MetricEvolution,
    /// `v_t = (p−1)vΔv + |∇v|² + (p−1)Sv`.
    PressureEquation,
    /// `∂_t(Δv) = 2⟨S, ∇²v⟩ + Δ(v_t) − g^{ij}∂_tΓ^k_ij ∇_k v`.
    LaplacianEvolution,
    /// `∂_t|∇v|² = 2S(∇v,∇v) + 2⟨∇v_t, ∇v⟩`.
    GradientEvolution,
    /// `g^{ij}∂_tΓ^k_ij = −g^{kl}(2∇^iS_il − ∇_lS)`.
    ConnectionEvolution,
    /// `L(Δv)`.
    LaplacianOperator,
    /// `L(|∇v|²)`.
    GradientOperator,
    /// `L(|∇v|²/v)`.
    GradientRatioOperator,
    /// `L(S/v)`.
    PotentialRatioOperator,
    /// `L(F)` for the Harnack quantity.
    HarnackOperator,
}

impl Identity {
    pub const ALL: [Identity; 10] = [
        Self::MetricEvolution,
        Self::PressureEquation,
        Self::LaplacianEvolution,
        Self::GradientEvolution,
        Self::ConnectionEvolution,
        Self::LaplacianOperator,
        Self::GradientOperator,
        Self::GradientRatioOperator,
        Self::PotentialRatioOperator,
        Self::HarnackOperator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::MetricEvolution => "metric-evolution",
            Self::PressureEquation => "pressure-equation",
            Self::LaplacianEvolution => "laplacian-evolution",
            Self::GradientEvolution => "gradient-evolution",
            Self::ConnectionEvolution => "connection-evolution",
            Self::LaplacianOperator => "L-laplacian",
            Self::GradientOperator => "L-gradient",
            Self::GradientRatioOperator => "L-gradient-ratio",
            Self::PotentialRatioOperator => "L-potential-ratio",
            Self::HarnackOperator => "L-harnack",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|i| i.name() == name)
    }

    /// Minimum acceptable convergence order. Identities whose discrete form
    /// composes stencils into third or fourth derivatives lose some order.
    pub fn order_threshold(self) -> f64 {
        match self {
            Self::LaplacianOperator
            | Self::GradientOperator
            | Self::GradientRatioOperator
            | Self::PotentialRatioOperator
            | Self::HarnackOperator => 1.5,
            _ => 1.8,
        }
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Left and right sides of an identity, flattened over nodes and components.
#[derive(Debug, Clone, PartialEq)]
pub struct Sides {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl Sides {
    fn scalar(lhs: ScalarField, rhs: ScalarField) -> Self {
        Self { lhs: lhs.into_values(), rhs: rhs.into_values() }
    }

    pub fn residual(&self) -> Vec<f64> {
        self.lhs.iter().zip(&self.rhs).map(|(a, b)| a - b).collect()
    }

    /// `max(‖lhs‖∞, ‖rhs‖∞, 1)`.
    pub fn scale(&self) -> f64 {
        linf(&self.lhs).max(linf(&self.rhs)).max(1.0)
    }
}

/// Residual of one identity at one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub identity: Identity,
    pub h: f64,
    /// Solver time step.
    pub dt: f64,
    pub linf: f64,
    /// Root mean square over nodes and components.
    pub l2: f64,
    pub scale: f64,
}

/// A level is at the floor when its residual is rounding noise.
pub const FLOOR: f64 = 1e-9;

impl Residual {
    pub fn from_sides(identity: Identity, h: f64, dt: f64, sides: &Sides) -> Self {
        let r = sides.residual();
        let l2 = if r.is_empty() { 0.0 } else { (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt() };
        Self { identity, h, dt, linf: linf(&r), l2, scale: sides.scale() }
    }

    pub fn at_floor(&self) -> bool {
        self.linf <= FLOOR * self.scale
    }
}

/// Everything the identities need at the middle of a snapshot triple.
pub struct Context<'a> {
    snaps: [&'a PmeSnapshot; 3],
    kind: &'a FlowKind,
    p: f64,
    delta: f64,
    t: f64,
    geom: &'a Geometry,
    v: [ScalarField; 3],
    view: PressureView,
    s_tensor: SymTensorField,
    s: ScalarField,
    s_t: ScalarField,
    hess: SymTensorField,
    ric: SymTensorField,
}

impl<'a> Context<'a> {
    pub fn new(snaps: [&'a PmeSnapshot; 3], kind: &'a FlowKind, p: f64) -> Result<Self> {
        let delta = equally_spaced(&[snaps[0].t(), snaps[1].t(), snaps[2].t()])?;
        let grid = snaps[1].flow.geom.grid();
        if snaps.iter().any(|s| s.flow.geom.grid() != grid) {
            return Err(invalid("triple spans several grids"));
        }
        let v = [to_pressure(&snaps[0].u, p)?, to_pressure(&snaps[1].u, p)?, to_pressure(&snaps[2].u, p)?];
        let geom = &snaps[1].flow.geom;
        let view = PressureView::new(geom, v[1].clone(), centred(&v[0], &v[2], delta));
        let s_tensor = s_tensor(&snaps[1].flow, kind)?;
        let s = geom.trace(&s_tensor);
        let s_t = s_time_derivative(&snaps[0].flow, &snaps[2].flow, kind)?;
        let hess = geom.hessian(&v[1]);
        let ric = geom.ricci();
        Ok(Self { snaps, kind, p, delta, t: snaps[1].t(), geom, v, view, s_tensor, s, s_t, hess, ric })
    }

    /// Context at interior snapshot `i` of a run.
    pub fn from_run(run: &'a Run, i: usize) -> Result<Self> {
        if i == 0 || i + 1 >= run.len() {
            return Err(invalid("identities need an interior snapshot"));
        }
        let s = &run.snapshots;
        Self::new([&s[i - 1], &s[i], &s[i + 1]], &run.kind, run.p)
    }

    fn geom_at(&self, k: usize) -> &Geometry {
        &self.snaps[k].flow.geom
    }

    /// `L(h) = ∂_t h − (p−1)vΔh` for `h` sampled at the three snapshots.
    pub fn op_l(&self, h: [&ScalarField; 3]) -> ScalarField {
        let ht = centred(h[0], h[2], self.delta);
        let lap = self.geom.laplacian(h[1]);
        let pm1 = self.p - 1.0;
        ht.zip_map(&(&self.view.v * &lap), |a, vl| a - pm1 * vl)
    }

    fn each(&self, f: impl Fn(&Geometry, &ScalarField) -> ScalarField) -> [ScalarField; 3] {
        [f(self.geom_at(0), &self.v[0]), f(self.geom_at(1), &self.v[1]), f(self.geom_at(2), &self.v[2])]
    }

    fn grad_dot_v(&self, f: &ScalarField) -> ScalarField {
        self.geom.grad_dot(f, &self.view.v)
    }

    /// `g^{ij}∂_tΓ^k_ij` as per-axis arrays (empty on the sphere).
    fn connection_rate(&self) -> Result<Vec<Vec<f64>>> {
        let grid = self.geom.grid();
        if self.geom.is_analytic() {
            return Ok(Vec::new());
        }
        let (g0, g2) = (self.geom_at(0).christoffel()?, self.geom_at(2).christoffel()?);
        let a = self.geom.conformal_factor();
        let d = grid.dim();
        let mut out = vec![vec![0.0; grid.node_count()]; d];
        for node in 0..grid.node_count() {
            for (k, row) in out.iter_mut().enumerate() {
                let tr: f64 = (0..d).map(|i| g2.get(node, k, i, i) - g0.get(node, k, i, i)).sum();
                row[node] = tr / (2.0 * self.delta * a.values()[node]);
            }
        }
        Ok(out)
    }

    /// `(2∇^iS_il − ∇_lS)∇^l v`.
    fn gap_dot_grad_v(&self) -> ScalarField {
        let div = self.geom.tensor_divergence(&self.s_tensor);
        let ds = self.geom.partials(&self.s);
        let grid = self.geom.grid();
        let out = (0..grid.node_count())
            .map(|k| {
                let gv = self.view.grad.at(k);
                (0..div.len()).map(|l| (2.0 * div[l][k] - ds[l][k]) * gv[l]).sum()
            })
            .collect();
        ScalarField::new(grid, out).expect("finite")
    }

    fn metric_evolution(&self) -> Sides {
        let (m0, m2) = (self.geom_at(0).metric(), self.geom_at(2).metric());
        let lhs: Vec<f64> = match (self.geom_at(0), self.geom, self.geom_at(2)) {
            (Geometry::RoundSphere { r2: a, .. }, Geometry::RoundSphere { r2: b, .. }, Geometry::RoundSphere { r2: c, .. }) => {
                // stored relative to g: ∂_t g = (∂_t r²/r²)·g
                vec![(c - a) / (2.0 * self.delta * b)]
            }
            _ => m0.raw().iter().zip(m2.raw()).map(|(a, c)| (c - a) / (2.0 * self.delta)).collect(),
        };
        Sides { lhs, rhs: self.s_tensor.raw().iter().map(|s| -2.0 * s).collect() }
    }

    fn pressure_equation(&self) -> Sides {
        let pm1 = self.p - 1.0;
        let v = &self.view;
        let rhs = (0..v.v.len())
            .map(|k| {
                let vk = v.v.values()[k];
                pm1 * vk * v.lap.values()[k] + v.grad_sq.values()[k] + pm1 * self.s.values()[k] * vk
            })
            .collect();
        Sides { lhs: v.v_t.values().to_vec(), rhs }
    }

    fn laplacian_evolution(&self) -> Result<Sides> {
        let laps = self.each(|g, v| g.laplacian(v));
        let lhs = centred(&laps[0], &laps[2], self.delta);
        let sh = self.geom.tensor_inner(&self.s_tensor, &self.hess);
        let lap_vt = self.geom.laplacian(&self.view.v_t);
        let rate = self.connection_rate()?;
        let dv = self.geom.partials(&self.view.v);
        let rhs = (0..lhs.len())
            .map(|k| {
                let corr: f64 = rate.iter().zip(&dv).map(|(c, d)| c[k] * d[k]).sum();
                2.0 * sh.values()[k] + lap_vt.values()[k] - corr
            })
            .collect();
        Ok(Sides { lhs: lhs.into_values(), rhs })
    }

    fn gradient_evolution(&self) -> Sides {
        let g = self.each(|g, v| g.norm_sq(&g.gradient(v)));
        let lhs = centred(&g[0], &g[2], self.delta);
        let svv = self.geom.tensor_apply(&self.s_tensor, &self.view.grad, &self.view.grad);
        let cross = self.grad_dot_v(&self.view.v_t);
        Sides::scalar(lhs, svv.zip_map(&cross, |a, b| 2.0 * a + 2.0 * b))
    }

    fn connection_evolution(&self) -> Result<Sides> {
        let rate = self.connection_rate()?;
        let div = self.geom.tensor_divergence(&self.s_tensor);
        let ds = self.geom.partials(&self.s);
        let a = self.geom.conformal_factor();
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        for node in 0..self.s.len() {
            for k in 0..rate.len() {
                lhs.push(rate[k][node]);
                rhs.push(-(2.0 * div[k][node] - ds[k][node]) / a.values()[node]);
            }
        }
        Ok(Sides { lhs, rhs })
    }

    /// Shared right-hand-side ingredients of the operator identities.
    fn terms(&self) -> Terms {
        let g = self.geom;
        let v = &self.view;
        Terms {
            gl: self.grad_dot_v(&v.lap),
            ga: self.grad_dot_v(&v.grad_sq.zip_map(&v.v, |a, v| a / v)),
            gsv: self.grad_dot_v(&self.s),
            gsv_ratio: self.grad_dot_v(&self.s.zip_map(&v.v, |s, v| s / v)),
            g_grad_sq: self.grad_dot_v(&v.grad_sq),
            h2: g.tensor_norm_sq(&self.hess),
            sh: g.tensor_inner(&self.s_tensor, &self.hess),
            svv: g.tensor_apply(&self.s_tensor, &v.grad, &v.grad),
            rvv: g.tensor_apply(&self.ric, &v.grad, &v.grad),
            ls: g.laplacian(&self.s),
            sn: g.tensor_norm_sq(&self.s_tensor),
            gap: self.gap_dot_grad_v(),
        }
    }

    fn laplacian_operator(&self, t: &Terms) -> Sides {
        let laps = self.each(|g, v| g.laplacian(v));
        let lhs = self.op_l([&laps[0], &laps[1], &laps[2]]);
        let rhs = self.pointwise(|c, k| {
            let (p, v, lv, s) = (self.p, c.v(k), c.lv(k), c.s(k));
            2.0 * p * t.gl.values()[k] + 2.0 * t.sh.values()[k] + (p - 1.0) * lv * lv + 2.0 * t.h2.values()[k]
                + 2.0 * t.rvv.values()[k]
                + (p - 1.0) * v * t.ls.values()[k]
                + 2.0 * (p - 1.0) * t.gsv.values()[k]
                + (p - 1.0) * s * lv
                + t.gap.values()[k]
        });
        Sides::scalar(lhs, rhs)
    }

    fn gradient_operator(&self, t: &Terms) -> Sides {
        let g = self.each(|g, v| g.norm_sq(&g.gradient(v)));
        let lhs = self.op_l([&g[0], &g[1], &g[2]]);
        let rhs = self.pointwise(|c, k| {
            let (p, v, gv, s) = (self.p, c.v(k), c.gv(k), c.s(k));
            2.0 * t.svv.values()[k] + 2.0 * (p - 1.0) * gv * c.lv(k) + 2.0 * t.g_grad_sq.values()[k]
                + 2.0 * (p - 1.0) * v * t.gsv.values()[k]
                + 2.0 * (p - 1.0) * s * gv
                - 2.0 * (p - 1.0) * v * t.h2.values()[k]
                - 2.0 * (p - 1.0) * v * t.rvv.values()[k]
        });
        Sides::scalar(lhs, rhs)
    }

    fn rhs_gradient_ratio(&self, t: &Terms) -> ScalarField {
        self.pointwise(|c, k| {
            let (p, v, gv, s) = (self.p, c.v(k), c.gv(k), c.s(k));
            2.0 * p * t.ga.values()[k] + 2.0 / v * t.svv.values()[k] + 2.0 * (p - 1.0) * gv / v * c.lv(k)
                + gv * gv / (v * v)
                + 2.0 * (p - 1.0) * t.gsv.values()[k]
                + (p - 1.0) * gv / v * s
                - 2.0 * (p - 1.0) * t.h2.values()[k]
                - 2.0 * (p - 1.0) * t.rvv.values()[k]
        })
    }

    fn gradient_ratio_operator(&self, t: &Terms) -> Sides {
        let a = self.each(|g, v| g.norm_sq(&g.gradient(v)).zip_map(v, |a, v| a / v));
        Sides::scalar(self.op_l([&a[0], &a[1], &a[2]]), self.rhs_gradient_ratio(t))
    }

    fn rhs_potential_ratio(&self, t: &Terms) -> ScalarField {
        self.pointwise(|c, k| {
            let (p, v, gv, s) = (self.p, c.v(k), c.gv(k), c.s(k));
            2.0 * p * t.gsv_ratio.values()[k] + gv / (v * v) * s - 2.0 / v * t.gsv.values()[k]
                + self.s_t.values()[k] / v
                - (p - 1.0) * s * s / v
                - (p - 1.0) * t.ls.values()[k]
        })
    }

    fn potential_ratio_operator(&self, t: &Terms) -> Result<Sides> {
        let mut ratio = Vec::with_capacity(3);
        for k in 0..3 {
            let s = crate::flow::s_trace(&self.snaps[k].flow, self.kind)?;
            ratio.push(s.zip_map(&self.v[k], |s, v| s / v));
        }
        Ok(Sides::scalar(self.op_l([&ratio[0], &ratio[1], &ratio[2]]), self.rhs_potential_ratio(t)))
    }

    /// `F + d/t` with `v_t` eliminated through the pressure equation:
    /// `(1−b)|∇v|²/v − b(p−1)Δv − b(p−1)S + (1−b)S/v`.
    fn harnack_spatial(&self, k: usize, b: f64) -> Result<ScalarField> {
        let g = self.geom_at(k);
        let v = &self.v[k];
        let s = crate::flow::s_trace(&self.snaps[k].flow, self.kind)?;
        let gv = g.norm_sq(&g.gradient(v));
        let lv = g.laplacian(v);
        let pm1 = self.p - 1.0;
        let out = (0..v.len())
            .map(|i| {
                let (vv, ss) = (v.values()[i], s.values()[i]);
                (1.0 - b) * gv.values()[i] / vv - b * pm1 * lv.values()[i] - b * pm1 * ss + (1.0 - b) * ss / vv
            })
            .collect();
        Ok(ScalarField::new(g.grid(), out).expect("finite"))
    }

    /// `F = |∇v|²/v − b·v_t/v + (1−b)S/v − d/t` at the middle snapshot.
    pub fn harnack_f(&self, b: f64, d: f64) -> Result<ScalarField> {
        crate::harnack::harnack_f(&self.view, &self.s, b, d, self.t)
    }

    /// `L(F)` with the explicit `−d/t` differentiated exactly.
    fn harnack_lhs(&self, b: f64, d: f64) -> Result<ScalarField> {
        if self.t <= 0.0 {
            return Err(crate::error::GeoError::DivisionByTime("L(F) contains d/t"));
        }
        let f = [self.harnack_spatial(0, b)?, self.harnack_spatial(1, b)?, self.harnack_spatial(2, b)?];
        let dt2 = d / (self.t * self.t);
        Ok(self.op_l([&f[0], &f[1], &f[2]]).map(|x| x + dt2))
    }

    /// Right side of the `L(F)` identity for a given `F` field.
    pub fn harnack_rhs(&self, t: &Terms, f: &ScalarField, b: f64, d: f64) -> ScalarField {
        let gf = self.grad_dot_v(f);
        let shifted = self.hess.zip_map(&self.s_tensor, |h, s| h + 0.5 * b * s);
        let completed = self.geom.tensor_norm_sq(&shifted);
        let time = self.t;
        self.pointwise(|c, k| {
            let (p, v, gv, s) = (self.p, c.v(k), c.gv(k), c.s(k));
            let pm1 = p - 1.0;
            let fk = f.values()[k];
            let st = self.s_t.values()[k];
            let hterm = st - 2.0 * t.gsv.values()[k] + 2.0 * t.svv.values()[k];
            let dterm = st - t.ls.values()[k] - 2.0 * t.sn.values()[k];
            2.0 * p * gf.values()[k] - ((b - 1.0) / v + pm1) * hterm
                - 2.0 * pm1 * (t.rvv.values()[k] - t.svv.values()[k])
                - 2.0 * pm1 * completed.values()[k]
                + 0.5 * (b - 2.0) * (b - 2.0) * pm1 * t.sn.values()[k]
                + pm1 * (1.0 - b) * dterm
                - fk * fk / b
                - (pm1 * s - 2.0 * (1.0 - b) * s / (b * v) + 2.0 * d / (b * time)) * fk
                - (1.0 - b) * (1.0 - b) * s * s / (b * v * v)
                + (1.0 - b) * gv * s / (v * v)
                + (1.0 - b) * gv * gv / (b * v * v)
                - d * d / (b * time * time)
                - d * pm1 * s / time
                + 2.0 * (1.0 - b) * d * s / (b * time * v)
                + d / (time * time)
                - b * pm1 * t.gap.values()[k]
        })
    }

    fn harnack_operator(&self, t: &Terms, b: f64, d: f64) -> Result<Sides> {
        let lhs = self.harnack_lhs(b, d)?;
        let f = self.harnack_f(b, d)?;
        Ok(Sides::scalar(lhs, self.harnack_rhs(t, &f, b, d)))
    }

    /// Largest pointwise gap between the `L(F)` right side (with `F` in its
    /// `v_t`-free form) and the same quantity assembled as
    /// `(1−b)L(|∇v|²/v) − b(p−1)L(Δv) − b(p−1)L(S) + (1−b)L(S/v) + d/t²`
    /// from the operator identities' right sides, relative to their size.
    pub fn harnack_route_gap(&self, b: f64, d: f64) -> Result<f64> {
        if self.t <= 0.0 {
            return Err(crate::error::GeoError::DivisionByTime("L(F) contains d/t"));
        }
        let t = self.terms();
        let f = self.harnack_spatial(1, b)?.map(|x| x - d / self.t);
        let direct = self.harnack_rhs(&t, &f, b, d);
        let r14 = self.laplacian_operator(&t).rhs;
        let r16 = self.rhs_gradient_ratio(&t);
        let r17 = self.rhs_potential_ratio(&t);
        let pm1 = self.p - 1.0;
        let time = self.t;
        let route = self.pointwise(|c, k| {
            let l_s = self.s_t.values()[k] - pm1 * c.v(k) * t.ls.values()[k];
            (1.0 - b) * r16.values()[k] - b * pm1 * r14[k] - b * pm1 * l_s + (1.0 - b) * r17.values()[k]
                + d / (time * time)
        });
        let scale = direct.linf().max(route.linf()).max(1.0);
        Ok((&direct - &route).linf() / scale)
    }

    fn pointwise(&self, f: impl Fn(&Self, usize) -> f64) -> ScalarField {
        let out = (0..self.view.v.len()).map(|k| f(self, k)).collect();
        ScalarField::new(self.geom.grid(), out).expect("finite identity term")
    }

    fn v(&self, k: usize) -> f64 {
        self.view.v.values()[k]
    }

    fn gv(&self, k: usize) -> f64 {
        self.view.grad_sq.values()[k]
    }

    fn lv(&self, k: usize) -> f64 {
        self.view.lap.values()[k]
    }

    fn s(&self, k: usize) -> f64 {
        self.s.values()[k]
    }

    /// Both sides of `identity`; `b, d` only matter for the Harnack operator.
    pub fn sides(&self, identity: Identity, b: f64, d: f64) -> Result<Sides> {
        Ok(match identity {
            Identity::MetricEvolution => self.metric_evolution(),
            Identity::PressureEquation => self.pressure_equation(),
            Identity::LaplacianEvolution => self.laplacian_evolution()?,
            Identity::GradientEvolution => self.gradient_evolution(),
            Identity::ConnectionEvolution => self.connection_evolution()?,
            Identity::LaplacianOperator => self.laplacian_operator(&self.terms()),
            Identity::GradientOperator => self.gradient_operator(&self.terms()),
            Identity::GradientRatioOperator => self.gradient_ratio_operator(&self.terms()),
            Identity::PotentialRatioOperator => self.potential_ratio_operator(&self.terms())?,
            Identity::HarnackOperator => self.harnack_operator(&self.terms(), b, d)?,
        })
    }
}

/// Pointwise ingredients shared by the operator identities.
pub struct Terms {
    gl: ScalarField,
    ga: ScalarField,
    gsv: ScalarField,
    gsv_ratio: ScalarField,
    g_grad_sq: ScalarField,
    h2: ScalarField,
    sh: ScalarField,
    svv: ScalarField,
    rvv: ScalarField,
    ls: ScalarField,
    sn: ScalarField,
    gap: ScalarField,
}

/// `L(h)` at the middle of three equally spaced snapshots.
pub fn op_l(snaps: [&PmeSnapshot; 3], h: [&ScalarField; 3], p: f64) -> Result<ScalarField> {
    let delta = equally_spaced(&[snaps[0].t(), snaps[1].t(), snaps[2].t()])?;
    let v = to_pressure(&snaps[1].u, p)?;
    let geom = &snaps[1].flow.geom;
    let lap = geom.laplacian(h[1]);
    let ht = centred(h[0], h[2], delta);
    Ok(ht.zip_map(&(&v * &lap), |a, b| a - (p - 1.0) * b))
}

/// Convergence of one identity along a refinement ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub identity: String,
    pub levels: Vec<Residual>,
    /// Least-squares slope of `log ‖r‖∞` against `log h` over the levels
    /// above the floor; `None` with fewer than two such levels.
    pub order: Option<f64>,
    /// Every level is at the rounding floor.
    pub at_floor: bool,
    /// Residuals decrease (or sit at the floor) under refinement.
    pub monotone: bool,
    pub threshold: f64,
}

impl ConvergenceReport {
    pub fn new(identity: impl Into<String>, threshold: f64, levels: Vec<Residual>) -> Self {
        let live: Vec<&Residual> = levels.iter().filter(|r| !r.at_floor()).collect();
        let order = if live.len() >= 2 {
            let pts: Vec<(f64, f64)> = live.iter().map(|r| (r.h.ln(), r.linf.ln())).collect();
            Some(least_squares_slope(&pts))
        } else {
            None
        };
        let mut sorted: Vec<&Residual> = levels.iter().collect();
        sorted.sort_by(|a, b| b.h.total_cmp(&a.h));
        let monotone = sorted.windows(2).all(|w| w[1].at_floor() || w[1].linf < w[0].linf);
        let at_floor = !levels.is_empty() && levels.iter().all(|r| r.at_floor());
        Self { identity: identity.into(), levels, order, at_floor, monotone, threshold }
    }

    /// At the floor everywhere, or converging at least at the threshold order.
    pub fn passes(&self) -> bool {
        self.at_floor || (self.monotone && self.order.is_some_and(|o| o >= self.threshold))
            || (self.order.is_none() && self.levels.iter().filter(|r| !r.at_floor()).count() <= 1 && self.levels.last().is_some_and(|r| r.at_floor()))
    }
}

/// Slope of the least-squares line through `(x, y)` points.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Convergence of `identity` over the runs of a ladder, each evaluated at
/// its middle snapshot.
pub fn convergence_study(identity: Identity, runs: &[(f64, f64, &Run)], b: f64, d: f64) -> Result<ConvergenceReport> {
    if runs.len() < 2 {
        return Err(invalid("a convergence study needs at least two levels"));
    }
    let levels = runs
        .iter()
        .map(|&(h, dt, run)| {
            let ctx = Context::from_run(run, run.len() / 2)?;
            Ok(Residual::from_sides(identity, h, dt, &ctx.sides(identity, b, d)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport::new(identity.name(), identity.order_threshold(), levels))
}

/// Bochner–Weitzenböck residual of `v` at the middle snapshot of each run:
/// the gate that the spatial kernels are consistent before any identity
/// is trusted.
pub fn bochner_gate(runs: &[(f64, f64, &Run)]) -> Result<ConvergenceReport> {
    let levels = runs
        .iter()
        .map(|&(h, dt, run)| {
            let mid = &run.snapshots[run.len() / 2];
            let v = to_pressure(&mid.u, run.p)?;
            let geom = &mid.flow.geom;
            let grad_sq = geom.norm_sq(&geom.gradient(&v));
            let r = geom.bochner_residual(&v);
            let scale = geom.laplacian(&grad_sq).linf().max(1.0);
            let l2 = (r.values().iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt();
            Ok(Residual { identity: Identity::GradientEvolution, h, dt, linf: r.linf(), l2, scale })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport::new("bochner", 1.5, levels))
}

/// Runs feeding the identity suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderPreset {
    /// Flat unit torus, `S = 0`, gaussian bump data.
    StaticFlat,
    /// Conformal unit torus under Ricci flow, gaussian `w` and bump data.
    Ricci2D,
}

impl LadderPreset {
    pub fn name(self) -> &'static str {
        match self {
            Self::StaticFlat => "static-flat",
            Self::Ricci2D => "ricci-2d",
        }
    }

    pub fn kind(self) -> FlowKind {
        match self {
            Self::StaticFlat => FlowKind::Static,
            Self::Ricci2D => FlowKind::Ricci,
        }
    }

    fn geometry(self, n: usize) -> Result<Geometry> {
        match self {
            Self::StaticFlat => Geometry::flat_torus(n, 1.0),
            Self::Ricci2D => {
                let grid = crate::grid::GridSpec::square(n, 1.0)?;
                let w = InitialData::GaussianBump { amplitude: 0.2, width: 0.35, center: [0.3, 0.3], floor: 1.0 };
                Geometry::torus(w.sample(grid)?.map(|x| x - 1.0))
            }
        }
    }
}

/// Refinement ladder: level `N` has `h = 1/N`, solver step `κh²` and
/// snapshot spacing `N/4` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityLadder {
    pub preset: LadderPreset,
    pub p: f64,
    pub b: f64,
    pub d: f64,
    pub levels: Vec<usize>,
    pub kappa: f64,
    pub t0: f64,
    pub data: InitialData,
}

impl IdentityLadder {
    pub fn new(preset: LadderPreset) -> Self {
        Self {
            preset,
            p: 2.0,
            b: 2.0,
            d: 2.0,
            levels: vec![32, 64, 128],
            kappa: 0.05,
            t0: 0.1,
            data: InitialData::GaussianBump { amplitude: 0.5, width: 0.35, center: [0.6, 0.55], floor: 1.0 },
        }
    }

    /// Three snapshots at level `n`: `(h, dt, run)`.
    pub fn run_level(&self, n: usize) -> Result<(f64, f64, Run)> {
        if n < 8 || n % 4 != 0 {
            return Err(invalid(format!("ladder level {n} must be a multiple of 4, at least 8")));
        }
        let geom = self.preset.geometry(n)?;
        let h = geom.grid().h_max();
        let dt = self.kappa * h * h;
        let kind = self.preset.kind();
        let u = self.data.sample(geom.grid())?;
        let state = PmeState::new(FlowState::new(self.t0, geom, None, &kind)?, u, self.p)?;
        let run = simulate(state, &kind, Schedule { dt, steps_per_snapshot: n / 4, count: 3 })?;
        Ok((h, dt, run))
    }

    /// All levels, computed concurrently.
    pub fn runs(&self) -> Result<Vec<(f64, f64, Run)>> {
        if self.levels.len() < 3 {
            return Err(invalid("a refinement ladder needs at least three levels"));
        }
        std::thread::scope(|scope| {
            let handles: Vec<_> = self.levels.iter().map(|&n| scope.spawn(move || self.run_level(n))).collect();
            handles.into_iter().map(|h| h.join().expect("ladder worker panicked")).collect()
        })
    }
}

/// Outcome of the identity suite on one ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub preset: LadderPreset,
    pub bochner: ConvergenceReport,
    pub identities: Vec<ConvergenceReport>,
    /// Largest relative gap of the `L(F)` route check over the levels.
    pub route_gap: f64,
}

/// Route-check tolerance, relative.
pub const ROUTE_TOLERANCE: f64 = 1e-9;

impl SuiteReport {
    /// Nothing passes unless the Bochner gate does.
    pub fn passes(&self) -> bool {
        self.bochner.passes() && self.route_gap <= ROUTE_TOLERANCE && self.identities.iter().all(|r| r.passes())
    }
}

/// Every identity over the ladder, gated by the Bochner check.
pub fn verify_identities(ladder: &IdentityLadder) -> Result<SuiteReport> {
    let runs = ladder.runs()?;
    let refs: Vec<(f64, f64, &Run)> = runs.iter().map(|(h, dt, r)| (*h, *dt, r)).collect();
    let bochner = bochner_gate(&refs)?;
    let identities = std::thread::scope(|scope| {
        let handles: Vec<_> = Identity::ALL
            .iter()
            .map(|&id| {
                let refs = &refs;
                scope.spawn(move || convergence_study(id, refs, ladder.b, ladder.d))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("identity worker panicked")).collect::<Result<Vec<_>>>()
    })?;
    let mut route_gap = 0.0f64;
    for (_, _, run) in &refs {
        route_gap = route_gap.max(Context::from_run(run, run.len() / 2)?.harnack_route_gap(ladder.b, ladder.d)?);
    }
    Ok(SuiteReport { preset: ladder.preset, bochner, identities, route_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::TimeFunction;
    use crate::grid::GridSpec;

    fn run_on(geom: Geometry, u: ScalarField, kind: FlowKind, t0: f64, schedule: Schedule) -> Run {
        let st = PmeState::new(FlowState::new(t0, geom, None, &kind).unwrap(), u, 2.0).unwrap();
        simulate(st, &kind, schedule).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for id in Identity::ALL {
            assert_eq!(Identity::from_name(id.name()), Some(id));
        }
    }

    #[test]
    fn constant_data_on_static_flat_is_exact() {
        let geom = Geometry::flat_torus(16, 1.0).unwrap();
        let u = ScalarField::constant(geom.grid(), 1.3);
        let run = run_on(geom, u, FlowKind::Static, 0.2, Schedule { dt: 1e-3, steps_per_snapshot: 4, count: 3 });
        let ctx = Context::from_run(&run, 1).unwrap();
        for id in Identity::ALL {
            let r = Residual::from_sides(id, 1.0 / 16.0, 1e-3, &ctx.sides(id, 2.5, 3.0).unwrap());
            assert!(r.linf <= 1e-10, "{id}: {}", r.linf);
        }
    }

    #[test]
    fn op_l_examples() {
        let geom = Geometry::flat_circle(16, 1.0).unwrap();
        let g = geom.grid();
        let u = ScalarField::from_fn(g, |x, _| 1.0 + 0.2 * (std::f64::consts::TAU * x).cos());
        let run = run_on(geom, u, FlowKind::Static, 0.0, Schedule { dt: 1e-4, steps_per_snapshot: 2, count: 3 });
        let s = &run.snapshots;
        let c = ScalarField::constant(g, 2.0);
        assert_eq!(op_l([&s[0], &s[1], &s[2]], [&c, &c, &c], 2.0).unwrap().linf(), 0.0);
        // h = slope·t, constant in x
        let h: Vec<ScalarField> = s.iter().map(|x| ScalarField::constant(g, 3.0 * x.t())).collect();
        let l = op_l([&s[0], &s[1], &s[2]], [&h[0], &h[1], &h[2]], 2.0).unwrap();
        assert!(l.values().iter().all(|x| (x - 3.0).abs() < 1e-9));
        let mut skewed = s[2].clone();
        skewed.flow.t += 1e-5;
        assert!(op_l([&s[0], &s[1], &skewed], [&c, &c, &c], 2.0).is_err());
    }

    #[test]
    fn scaled_identity_potential_ratio_reduces_to_ode() {
        // u(t) = e^{nλt}: S/v = nλ/(2e^{nλt}), L(S/v) = ∂_t(S/v)
        let lam = 0.4;
        let kind = FlowKind::ScaledIdentity(TimeFunction::constant(lam));
        let geom = Geometry::flat_torus(8, 1.0).unwrap();
        let u = ScalarField::constant(geom.grid(), 1.0);
        let run = run_on(geom, u, kind, 0.0, Schedule { dt: 1e-4, steps_per_snapshot: 10, count: 3 });
        let ctx = Context::from_run(&run, 1).unwrap();
        let sides = ctx.sides(Identity::PotentialRatioOperator, 2.0, 2.0).unwrap();
        let t = run.snapshots[1].t();
        let exact = -(2.0 * lam) * (2.0 * lam) / (2.0 * (2.0 * lam * t).exp());
        assert!((sides.lhs[0] - exact).abs() < 1e-6);
        assert!((sides.rhs[0] - exact).abs() < 1e-6);
        let metric = Residual::from_sides(Identity::MetricEvolution, 0.1, 1e-4, &ctx.sides(Identity::MetricEvolution, 2.0, 2.0).unwrap());
        assert!(metric.linf < 1e-6);
    }

    #[test]
    fn route_check_matches_assembled_identity() {
        let g = GridSpec::square(16, 1.0).unwrap();
        let tau = std::f64::consts::TAU;
        let geom = Geometry::torus(ScalarField::from_fn(g, |x, y| 0.1 * (tau * x).sin() * (tau * y).cos())).unwrap();
        let u = ScalarField::from_fn(g, |x, y| 1.0 + 0.3 * (tau * (x + y)).cos());
        let run = run_on(geom, u, FlowKind::Ricci, 0.2, Schedule { dt: 1e-5, steps_per_snapshot: 4, count: 3 });
        let ctx = Context::from_run(&run, 1).unwrap();
        for (b, d) in [(2.0, 2.0), (3.0, 4.5), (5.0, 5.0)] {
            assert!(ctx.harnack_route_gap(b, d).unwrap() < 1e-9);
        }
    }

    #[test]
    fn homogeneous_sphere_harnack_operator_is_an_ode_identity() {
        let kind = FlowKind::Ricci;
        let res = |dt: f64| {
            let geom = Geometry::sphere(2, 1.0).unwrap();
            let u = ScalarField::constant(GridSpec::homogeneous(), 1.0);
            let run = run_on(geom, u, kind.clone(), 0.1, Schedule { dt, steps_per_snapshot: 1, count: 3 });
            let ctx = Context::from_run(&run, 1).unwrap();
            Residual::from_sides(Identity::HarnackOperator, 0.0, dt, &ctx.sides(Identity::HarnackOperator, 2.0, 2.0).unwrap())
                .linf
        };
        let (a, b) = (res(2e-3), res(1e-3));
        assert!(a < 1e-3 && (a / b).log2() > 1.8, "{a} {b}");
    }

    #[test]
    fn least_squares_recovers_slope() {
        let pts: Vec<(f64, f64)> = [0.1f64, 0.05, 0.025].iter().map(|h| (h.ln(), (3.0 * h * h).ln())).collect();
        assert!((least_squares_slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn convergence_report_flags() {
        let lvl = |h: f64, linf: f64| Residual { identity: Identity::PressureEquation, h, dt: h * h, linf, l2: linf, scale: 1.0 };
        let good = ConvergenceReport::new("x", 1.8, vec![lvl(0.1, 4e-2), lvl(0.05, 1e-2), lvl(0.025, 2.5e-3)]);
        assert!(good.passes() && good.monotone);
        assert!((good.order.unwrap() - 2.0).abs() < 1e-12);
        let bumpy = ConvergenceReport::new("x", 1.8, vec![lvl(0.1, 1e-2), lvl(0.05, 4e-2), lvl(0.025, 1e-4)]);
        assert!(!bumpy.monotone && !bumpy.passes());
        let floor = ConvergenceReport::new("x", 1.8, vec![lvl(0.1, 1e-13), lvl(0.05, 1e-13)]);
        assert!(floor.at_floor && floor.order.is_none() && floor.passes());
    }
}
