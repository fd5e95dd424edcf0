//! Differential and integrated Harnack estimates for the pressure `v`.
//!
//! The differential estimate bounds
//! `F = |∇v|²/v − b·v_t/v + (1−b)·S/v − d/t` from above by an explicit
//! constant; the integrated estimate compares `v` at two space-time points
//! through the action `Γ` computed in [`action`].

pub mod action;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use action::{action_gamma, ActionLattice, ActionPath};

use crate::error::{invalid, GeoError, Result};
use crate::flow::{minimal_bounds, s_trace, CurvatureBounds};
use crate::grid::ScalarField;
use crate::pme::{PressureView, Run};
use crate::structure::{check_hypotheses, HypothesisReport, XSampling};

#[derive(Debug, Clone, PartialEq)]
pub struct HarnackConfig {
    pub b: f64,
    pub d: f64,
    /// Ball radius; `f64::INFINITY` selects the global (ρ → ∞) form.
    pub rho: f64,
    /// The unspecified absolute constants `c1..c4`.
    pub c: [f64; 4],
    /// Relative tolerance on margins.
    pub tolerance: f64,
    /// Start of the evaluation window; `F` contains `d/t`.
    pub t_start: f64,
    /// Ball centre in coordinates; defaults to the middle of the domain.
    pub center: Option<[f64; 2]>,
}

impl Default for HarnackConfig {
    fn default() -> Self {
        Self { b: 2.0, d: 2.0, rho: f64::INFINITY, c: [1.0; 4], tolerance: 1e-3, t_start: 0.1, center: None }
    }
}

impl HarnackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b >= 2.0 && self.b.is_finite()) {
            return Err(invalid(format!("b must lie in [2, ∞), got {}", self.b)));
        }
        if !(self.d >= self.b && self.d.is_finite()) {
            return Err(invalid(format!("d must satisfy d ≥ b = {}, got {}", self.b, self.d)));
        }
        if !(self.rho > 0.0) {
            return Err(invalid(format!("ρ must be positive, got {}", self.rho)));
        }
        if self.c.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(invalid("the constants c1..c4 must be positive"));
        }
        if !(self.tolerance >= 0.0) || !(self.t_start > 0.0) {
            return Err(invalid("tolerance must be ≥ 0 and t_start > 0"));
        }
        Ok(())
    }

    pub fn is_global(&self) -> bool {
        self.rho.is_infinite()
    }
}

/// `F = |∇v|²/v − b·v_t/v + (1−b)·S/v − d/t`.
pub fn harnack_f(view: &PressureView, s: &ScalarField, b: f64, d: f64, t: f64) -> Result<ScalarField> {
    if t <= 0.0 {
        return Err(GeoError::DivisionByTime("F contains d/t"));
    }
    let out = (0..view.v.len())
        .map(|k| {
            let v = view.v.values()[k];
            (view.grad_sq.values()[k] - b * view.v_t.values()[k] + (1.0 - b) * s.values()[k]) / v - d / t
        })
        .collect();
    Ok(ScalarField::new(*view.v.grid(), out).map_err(|_| invalid("F is not finite; v must be positive"))?)
}

/// `E·v_max/ρ²` for `E = (a + √k1·ρ/2)·c·(p−1)`, finite as `ρ → ∞`.
fn ball_term(a: f64, c: f64, p: f64, k1: f64, rho: f64, v_max: f64) -> f64 {
    if rho.is_infinite() {
        return 0.0;
    }
    (a * c * (p - 1.0) / (rho * rho) + 0.5 * k1.sqrt() * c * (p - 1.0) / rho) * v_max
}

fn check_common(p: f64, n: usize, v_max: f64) -> Result<()> {
    if !(p > 1.0) {
        return Err(invalid(format!("p must exceed 1, got {p}")));
    }
    if n == 0 || !(v_max >= 0.0) {
        return Err(invalid("dimension must be positive and v_max non-negative"));
    }
    Ok(())
}

/// `E2 = √c2·(k2 + k3)² + 1`.
pub fn e2(cfg: &HarnackConfig, bounds: CurvatureBounds) -> f64 {
    let k = bounds.k2 + bounds.k3;
    cfg.c[1].sqrt() * k * k + 1.0
}

/// `2n(p−1)/(1+n(p−1))·(E1·v_max/ρ² + E2)` with
/// `E1 = (p²n + √k1·ρ/2 + 9/4)·c1·(p−1)`.
pub fn theorem1_rhs(cfg: &HarnackConfig, p: f64, n: usize, v_max: f64, bounds: CurvatureBounds) -> Result<f64> {
    if !(cfg.rho > 0.0) {
        return Err(invalid(format!("ρ must be positive, got {}", cfg.rho)));
    }
    check_common(p, n, v_max)?;
    let nf = n as f64;
    let q = nf * (p - 1.0);
    let e1_term = ball_term(p * p * nf + 2.25, cfg.c[0], p, bounds.k1, cfg.rho, v_max);
    Ok(2.0 * q / (1.0 + q) * (e1_term + e2(cfg, bounds)))
}

/// Constants of the general-`b` estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropositionConstants {
    pub alpha: f64,
    /// `E4·v_max/ρ²` (zero in the global form).
    pub e4_term: f64,
    pub e5: f64,
    pub e6: f64,
}

pub fn proposition_constants(
    cfg: &HarnackConfig,
    p: f64,
    n: usize,
    v_max: f64,
    bounds: CurvatureBounds,
) -> Result<PropositionConstants> {
    cfg.validate()?;
    check_common(p, n, v_max)?;
    let (b, nf) = (cfg.b, n as f64);
    let k = bounds.k2 + bounds.k3;
    let alpha = b * nf * (p - 1.0) / (2.0 + b * nf * (p - 1.0));
    let e4_term = ball_term(b * b * p * p * nf / (4.0 * (b - 1.0)) + 2.25, cfg.c[2], p, bounds.k1, cfg.rho, v_max);
    let e5 = cfg.c[3].sqrt() * k * k + 2.0 * (b - 2.0) / b * k + 1.0;
    let e6 = nf * k * (b - 2.0) * (b * (p - 1.0) * alpha / 2.0).sqrt();
    Ok(PropositionConstants { alpha, e4_term, e5, e6 })
}

/// `b·α·(E4·v_max/ρ² + E5) + E6`.
pub fn proposition_rhs(cfg: &HarnackConfig, p: f64, n: usize, v_max: f64, bounds: CurvatureBounds) -> Result<f64> {
    let c = proposition_constants(cfg, p, n, v_max, bounds)?;
    Ok(cfg.b * c.alpha * (c.e4_term + c.e5) + c.e6)
}

/// Outcome of a check whose hypotheses may not hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// The sampled hypotheses failed, so the estimate claims nothing.
    NotApplicable,
}

impl Verdict {
    /// Whether an applicable check failed.
    pub fn is_failure(self) -> bool {
        self == Self::Fail
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::NotApplicable => "not-applicable",
        })
    }
}

/// `F` at one snapshot of the evaluation window.
#[derive(Debug, Clone)]
pub struct HarnackSlice {
    pub t: f64,
    pub f: ScalarField,
    /// Nodes inside the ball (all nodes in the global form).
    pub in_domain: Vec<bool>,
    pub max_f: f64,
    pub min_margin: f64,
}

#[derive(Debug, Clone)]
pub struct HarnackReport {
    pub slices: Vec<HarnackSlice>,
    pub rhs: f64,
    pub v_max: f64,
    pub bounds: CurvatureBounds,
    pub min_margin: f64,
    /// `(node, t)` of the smallest margin.
    pub argmin: (usize, f64),
    pub hypotheses: HypothesisReport,
    pub verdict: Verdict,
}

impl HarnackReport {
    /// Smallest multiple of the right-hand side that still bounds `F` over
    /// the window (0 when `F` never exceeds 0).
    pub fn empirical_constant(&self) -> f64 {
        let max_f = self.slices.iter().map(|s| s.max_f).fold(f64::NEG_INFINITY, f64::max);
        (max_f / self.rhs).max(0.0)
    }
}

/// Right-hand side for the configured `b` (the Theorem form at `b = 2`).
pub fn differential_rhs(cfg: &HarnackConfig, p: f64, n: usize, v_max: f64, bounds: CurvatureBounds) -> Result<f64> {
    if cfg.b == 2.0 {
        theorem1_rhs(cfg, p, n, v_max, bounds)
    } else {
        proposition_rhs(cfg, p, n, v_max, bounds)
    }
}

fn window(run: &Run, t_start: f64) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (0..run.len()).filter(|&i| run.snapshots[i].t() >= t_start - 1e-12).collect();
    if idx.is_empty() {
        return Err(invalid(format!("no snapshot at or after t_start = {t_start}")));
    }
    Ok(idx)
}

fn window_bounds(run: &Run, idx: &[usize]) -> Result<CurvatureBounds> {
    idx.iter().try_fold(CurvatureBounds::default(), |acc, &i| {
        Ok(acc.max(minimal_bounds(&run.snapshots[i].flow, &run.kind)?))
    })
}

/// Evaluates `F` over the window `[t_start, T]` of `run`, inside the ball
/// `B(x0, ρ)` or everywhere in the global form, against the configured
/// right-hand side.
pub fn check_differential_harnack(run: &Run, cfg: &HarnackConfig, sampling: &XSampling) -> Result<HarnackReport> {
    cfg.validate()?;
    let idx = window(run, cfg.t_start)?;
    let hypotheses = check_hypotheses(&run.flows(), Some(&run.pressures()), &run.kind, cfg.b, sampling)?;
    let bounds = window_bounds(run, &idx)?;
    let geom0 = &run.snapshots[0].flow.geom;
    let grid = geom0.grid();
    let n = geom0.dimension();
    let center = cfg.center.unwrap_or([0.5 * grid.length(0), 0.5 * grid.length(1)]);
    let x0 = grid.nearest_node(center);

    let mut masks = Vec::with_capacity(idx.len());
    let mut v_max = f64::NEG_INFINITY;
    for &i in &idx {
        let geom = &run.snapshots[i].flow.geom;
        let mask = if cfg.is_global() || geom.is_analytic() {
            vec![true; grid.node_count()]
        } else {
            geom.geodesic_distance(x0)?.values().iter().map(|&r| r <= cfg.rho).collect()
        };
        let v = run.pressure(i);
        v_max = v.values().iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| *v).fold(v_max, f64::max);
        masks.push(mask);
    }
    let rhs = differential_rhs(cfg, run.p, n, v_max, bounds)?;

    let mut slices = Vec::with_capacity(idx.len());
    let (mut min_margin, mut argmin) = (f64::INFINITY, (0, 0.0));
    for (&i, in_domain) in idx.iter().zip(masks) {
        let snap = &run.snapshots[i];
        let view = run.pressure_view(i)?;
        let f = harnack_f(&view, &s_trace(&snap.flow, &run.kind)?, cfg.b, cfg.d, snap.t())?;
        let mut max_f = f64::NEG_INFINITY;
        for (k, &val) in f.values().iter().enumerate() {
            if in_domain[k] {
                max_f = max_f.max(val);
                if rhs - val < min_margin {
                    min_margin = rhs - val;
                    argmin = (k, snap.t());
                }
            }
        }
        slices.push(HarnackSlice { t: snap.t(), f, in_domain, max_f, min_margin: rhs - max_f });
    }
    let verdict = if !hypotheses.all_hold() {
        Verdict::NotApplicable
    } else if min_margin >= -cfg.tolerance * rhs.abs() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(HarnackReport { slices, rhs, v_max, bounds, min_margin, argmin, hypotheses, verdict })
}

/// `empirical_constant` of the differential check.
pub fn empirical_constants(run: &Run, cfg: &HarnackConfig, sampling: &XSampling) -> Result<f64> {
    Ok(check_differential_harnack(run, cfg, sampling)?.empirical_constant())
}

/// Two space-time points given as `(node, snapshot index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HarnackPair {
    pub x1: usize,
    pub i1: usize,
    pub x2: usize,
    pub i2: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub pair: HarnackPair,
    pub t1: f64,
    pub t2: f64,
    pub v1: f64,
    pub v2: f64,
    pub gamma: f64,
    pub rhs: f64,
    /// `rhs / v1`; the inequality holds when it is at least 1.
    pub slack: f64,
}

#[derive(Debug, Clone)]
pub struct IntegratedReport {
    pub pairs: Vec<PairReport>,
    pub v_min: f64,
    pub e2: f64,
    pub hypotheses: HypothesisReport,
    pub verdict: Verdict,
}

/// `v2·(t2/t1)^{d/2}·exp(Γ/(2v_min) + n(p−1)/(1+n(p−1))·E2·(t2 − t1))`.
#[allow(clippy::too_many_arguments)]
pub fn integrated_rhs(v2: f64, t1: f64, t2: f64, gamma: f64, v_min: f64, d: f64, n: usize, p: f64, e2: f64) -> f64 {
    let q = n as f64 * (p - 1.0);
    v2 * (t2 / t1).powf(0.5 * d) * (gamma / (2.0 * v_min) + q / (1.0 + q) * e2 * (t2 - t1)).exp()
}

/// Checks the integrated estimate on each pair, `Γ` from the lattice DP and
/// `v_min` the run minimum.
pub fn check_integrated_harnack(
    run: &Run,
    cfg: &HarnackConfig,
    pairs: &[HarnackPair],
    sampling: &XSampling,
) -> Result<IntegratedReport> {
    cfg.validate()?;
    let hypotheses = check_hypotheses(&run.flows(), Some(&run.pressures()), &run.kind, cfg.b, sampling)?;
    let n = run.snapshots[0].flow.geom.dimension();
    let v_min = (0..run.len()).map(|i| run.extrema(i).v_min).fold(f64::INFINITY, f64::min);
    let mut reports = Vec::with_capacity(pairs.len());
    let mut worst_e2: f64 = 1.0;
    for &pair in pairs {
        if !(pair.i1 < pair.i2 && pair.i2 < run.len()) || run.snapshots[pair.i1].t() <= 0.0 {
            return Err(invalid(format!("pair {pair:?} needs 0 < t1 < t2 within the run")));
        }
        let bounds = window_bounds(run, &(pair.i1..=pair.i2).collect::<Vec<_>>())?;
        let e2 = e2(cfg, bounds);
        worst_e2 = worst_e2.max(e2);
        let gamma = ActionLattice::from_run(run, pair.i1, pair.i2)?.minimise(pair.x1, pair.x2, None)?.gamma;
        let (t1, t2) = (run.snapshots[pair.i1].t(), run.snapshots[pair.i2].t());
        let v1 = run.pressure(pair.i1).values()[pair.x1];
        let v2 = run.pressure(pair.i2).values()[pair.x2];
        let rhs = integrated_rhs(v2, t1, t2, gamma, v_min, cfg.d, n, run.p, e2);
        reports.push(PairReport { pair, t1, t2, v1, v2, gamma, rhs, slack: rhs / v1 });
    }
    let verdict = if !hypotheses.all_hold() {
        Verdict::NotApplicable
    } else if reports.iter().all(|r| r.slack >= 1.0 - cfg.tolerance) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(IntegratedReport { pairs: reports, v_min, e2: worst_e2, hypotheses, verdict })
}

/// `count` seeded pairs with both times in `[t_start, T]`; every other pair
/// uses the node diametrically opposite `x1`.
pub fn sample_pairs(run: &Run, count: usize, seed: u64, t_start: f64) -> Result<Vec<HarnackPair>> {
    let idx = window(run, t_start.max(f64::MIN_POSITIVE))?;
    if idx.len() < 2 {
        return Err(invalid("the window needs at least two snapshots to form pairs"));
    }
    let grid = run.snapshots[0].flow.geom.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|k| {
            let a = rng.gen_range(0..idx.len() - 1);
            let b = rng.gen_range(a + 1..idx.len());
            let x1 = rng.gen_range(0..grid.node_count());
            let x2 = if k % 2 == 0 {
                let (ix, iy) = grid.ij(x1);
                let half = |axis: usize| if axis < grid.dim() { grid.resolution(axis) / 2 } else { 0 };
                grid.offset(grid.index(ix, iy), half(0) as isize, half(1) as isize)
            } else {
                rng.gen_range(0..grid.node_count())
            };
            HarnackPair { x1, i1: idx[a], x2, i2: idx[b] }
        })
        .collect())
}
