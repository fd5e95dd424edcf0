//! Configuration-driven runs of the geoflow laboratory: parses a run
//! configuration, executes one mode and writes CSV tables, snapshot files
//! and a `key = value` summary into an output directory.

pub mod config;
pub mod output;
pub mod zoo;

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use geoflow_core::harnack::{check_differential_harnack, check_integrated_harnack, sample_pairs, HarnackReport, IntegratedReport};
use geoflow_core::identities::{convergence_study, verify_identities, ConvergenceReport};
use geoflow_core::pme::{self, simulate};
use geoflow_core::{FlowState, GeoError, HypothesisReport, PmeState, Run, ScalarField, Schedule, Verdict, XSampling};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{parse_config, Mode, RunConfig};
use output::{write_csv, MarginRow, PairRow, ResidualRow, Summary, TimeseriesRow};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "GEOFLOW_OUTPUT_ROOT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", config_message(*.line, .message))]
    Config { line: Option<usize>, message: String },
    #[error(transparent)]
    Solver(#[from] GeoError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn config_message(line: Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("config line {l}: {message}"),
        None => format!("config: {message}"),
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Overall result of a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Hypotheses failed; the estimates claim nothing.
    NotApplicable,
    /// Nothing to check (plain simulation).
    Done,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::NotApplicable => "not-applicable",
            Self::Done => "done",
        }
    }

    /// Process exit code: nonzero only when an applicable check failed.
    pub fn exit_code(self) -> i32 {
        if self == Self::Fail {
            1
        } else {
            0
        }
    }

    fn combine(self, other: Status) -> Status {
        use Status::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (NotApplicable, _) | (_, NotApplicable) => NotApplicable,
            (Pass, _) | (_, Pass) => Pass,
            _ => Done,
        }
    }
}

impl From<Verdict> for Status {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass => Status::Pass,
            Verdict::Fail => Status::Fail,
            Verdict::NotApplicable => Status::NotApplicable,
        }
    }
}

/// Seeds for every random draw of a run, all taken from one generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub pairs: u64,
    pub sampling: u64,
}

impl Seeds {
    pub fn new(master: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        Self { data: rng.gen(), pairs: rng.gen(), sampling: rng.gen() }
    }
}

/// Output directory: explicit choice, else the configured one, else
/// `$GEOFLOW_OUTPUT_ROOT/<mode>`, else `geoflow-out/<mode>`.
pub fn output_dir(cfg: &RunConfig, flag: Option<&Path>, env_root: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output {
        return p.clone();
    }
    env_root.unwrap_or_else(|| Path::new("geoflow-out")).join(cfg.mode.name())
}

/// Runs the configured mode, writing artifacts to `out`. Solver errors are
/// recorded in the summary before being returned.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<Status, CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut summary = Summary::default();
    summary.set("mode", cfg.mode.name());
    summary.set("seed", cfg.seed);
    let result = match cfg.mode {
        Mode::Simulate => run_simulate(cfg, out, &mut summary),
        Mode::CheckHarnack => run_harnack(cfg, out, &mut summary),
        Mode::VerifyIdentities => run_identities(cfg, out, &mut summary, true),
        Mode::Convergence => run_identities(cfg, out, &mut summary, false),
        Mode::FlowZoo => run_zoo(out, &mut summary),
    };
    match &result {
        Ok(status) => summary.set("status", status.name()),
        Err(e) => {
            summary.set("status", "error");
            summary.set("error", e);
        }
    }
    summary.write(&out.join("summary.txt"))?;
    result
}

fn initial_state(cfg: &RunConfig, seeds: Seeds) -> Result<PmeState, CliError> {
    let kind = cfg.flow_kind().map_err(|message| CliError::Config { line: None, message })?;
    let geom = cfg.geometry().map_err(|message| CliError::Config { line: None, message })?;
    let grid = geom.grid();
    let f = kind.needs_scalar_map().then(|| {
        let (a, len) = (cfg.flow.f_amplitude, cfg.backend.length);
        ScalarField::from_fn(grid, |x, _| a * (TAU * x / len).sin())
    });
    let u = cfg.initial_data(seeds.data).sample(grid)?;
    Ok(PmeState::new(FlowState::new(cfg.pme.t0, geom, f, &kind)?, u, cfg.pme.p)?)
}

/// Equal snapshot spacing with a whole number of solver steps each.
fn schedule(cfg: &RunConfig, state: &PmeState) -> Result<Schedule, CliError> {
    let kind = cfg.flow_kind().map_err(|message| CliError::Config { line: None, message })?;
    let spacing = cfg.pme.horizon / (cfg.pme.snapshots - 1) as f64;
    let dt_max = cfg.pme.dt.unwrap_or_else(|| pme::stable_dt(state.flow(), &kind, state.u(), state.p()));
    let steps = (spacing / dt_max).ceil().max(1.0) as usize;
    Ok(Schedule { dt: spacing / steps as f64, steps_per_snapshot: steps, count: cfg.pme.snapshots })
}

fn simulate_config(cfg: &RunConfig, seeds: Seeds, summary: &mut Summary) -> Result<Run, CliError> {
    let state = initial_state(cfg, seeds)?;
    let sched = schedule(cfg, &state)?;
    summary.set("dt", sched.dt);
    summary.set("steps_per_snapshot", sched.steps_per_snapshot);
    summary.set("backend", state.flow().geom.backend_name());
    summary.set("flow", cfg.flow_kind().map(|k| k.name()).unwrap_or("?"));
    let kind = cfg.flow_kind().map_err(|message| CliError::Config { line: None, message })?;
    log::info!("simulating {} snapshots, dt = {:e}", sched.count, sched.dt);
    let run = simulate(state, &kind, sched)?;
    summary.set("cfl_halvings", run.halvings);
    Ok(run)
}

fn timeseries(run: &Run) -> Vec<TimeseriesRow> {
    (0..run.len())
        .map(|i| {
            let e = run.extrema(i);
            let s = &run.snapshots[i];
            TimeseriesRow { t: s.t(), mass: s.mass(), u_min: e.u_min, u_max: e.u_max, v_min: e.v_min, v_max: e.v_max }
        })
        .collect()
}

fn write_snapshots(run: &Run, out: &Path) -> Result<(), CliError> {
    let dir = out.join("snapshots");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (i, s) in run.snapshots.iter().enumerate() {
        let extra = [
            ("field", "u".to_string()),
            ("kind", run.kind.name().to_string()),
            ("f", u8::from(s.flow.f.is_some()).to_string()),
            ("p", run.p.to_string()),
        ];
        let path = dir.join(format!("u_{i:04}.txt"));
        fs::write(&path, s.u.to_snapshot_text(s.t(), &extra)).map_err(io_err(&path))?;
    }
    Ok(())
}

fn run_simulate(cfg: &RunConfig, out: &Path, summary: &mut Summary) -> Result<Status, CliError> {
    let seeds = Seeds::new(cfg.seed);
    let run = simulate_config(cfg, seeds, summary)?;
    let rows = timeseries(&run);
    write_csv(&out.join("timeseries.csv"), &rows)?;
    write_snapshots(&run, out)?;
    let m0 = rows[0].mass;
    let drift = rows.iter().map(|r| ((r.mass - m0) / m0).abs()).fold(0.0, f64::max);
    summary.set("mass_drift", drift);
    summary.set("t_final", rows.last().map_or(0.0, |r| r.t));
    Ok(Status::Done)
}

fn record_hypotheses(summary: &mut Summary, prefix: &str, h: &HypothesisReport) {
    summary.set(format!("{prefix}.all_hold"), h.all_hold());
    summary.set(format!("{prefix}.h_nonneg"), h.h_nonneg);
    summary.set(format!("{prefix}.e_nonneg"), h.e_nonneg);
    summary.set(format!("{prefix}.s_nonneg"), h.s_nonneg);
    summary.set(format!("{prefix}.min_h"), h.min_h);
    summary.set(format!("{prefix}.min_e"), h.min_e);
    summary.set(format!("{prefix}.min_d"), h.min_d);
    summary.set(format!("{prefix}.min_i"), h.min_i);
    summary.set(format!("{prefix}.min_s"), h.min_s);
    summary.set(format!("{prefix}.k1"), h.bounds.k1);
    summary.set(format!("{prefix}.k2"), h.bounds.k2);
    summary.set(format!("{prefix}.k3"), h.bounds.k3);
    summary.set(format!("{prefix}.samples"), h.samples);
}

fn margins(rep: &HarnackReport) -> Vec<MarginRow> {
    rep.slices.iter().map(|s| MarginRow { t: s.t, max_f: s.max_f, min_margin: s.min_margin, rhs: rep.rhs }).collect()
}

fn pair_rows(rep: &IntegratedReport, run: &Run) -> Vec<PairRow> {
    rep.pairs
        .iter()
        .map(|p| {
            let grid = run.snapshots[0].flow.geom.grid();
            let c1 = grid.coords(p.pair.x1);
            let c2 = grid.coords(p.pair.x2);
            PairRow {
                x1: p.pair.x1,
                x1_x: c1[0],
                x1_y: c1[1],
                t1: p.t1,
                x2: p.pair.x2,
                x2_x: c2[0],
                x2_y: c2[1],
                t2: p.t2,
                v1: p.v1,
                v2: p.v2,
                gamma: p.gamma,
                rhs: p.rhs,
                slack: p.slack,
            }
        })
        .collect()
}

fn run_harnack(cfg: &RunConfig, out: &Path, summary: &mut Summary) -> Result<Status, CliError> {
    let seeds = Seeds::new(cfg.seed);
    let run = simulate_config(cfg, seeds, summary)?;
    write_csv(&out.join("timeseries.csv"), &timeseries(&run))?;
    let hcfg = cfg.harnack_config();
    let sampling = XSampling { seed: seeds.sampling, ..XSampling::default() };
    let diff = check_differential_harnack(&run, &hcfg, &sampling)?;
    write_csv(&out.join("margins.csv"), &margins(&diff))?;
    summary.set("differential.verdict", diff.verdict);
    summary.set("differential.rhs", diff.rhs);
    summary.set("differential.v_max", diff.v_max);
    summary.set("differential.min_margin", diff.min_margin);
    summary.set("differential.argmin_node", diff.argmin.0);
    summary.set("differential.argmin_t", diff.argmin.1);
    summary.set("differential.empirical_constant", diff.empirical_constant());
    record_hypotheses(summary, "hypotheses", &diff.hypotheses);
    let mut status = Status::from(diff.verdict);
    if cfg.harnack.pairs > 0 {
        let pairs = sample_pairs(&run, cfg.harnack.pairs, seeds.pairs, hcfg.t_start)?;
        let integ = check_integrated_harnack(&run, &hcfg, &pairs, &sampling)?;
        write_csv(&out.join("pairs.csv"), &pair_rows(&integ, &run))?;
        let min_slack = integ.pairs.iter().map(|p| p.slack).fold(f64::INFINITY, f64::min);
        summary.set("integrated.verdict", integ.verdict);
        summary.set("integrated.pairs", integ.pairs.len());
        summary.set("integrated.min_slack", min_slack);
        summary.set("integrated.v_min", integ.v_min);
        summary.set("integrated.e2", integ.e2);
        status = status.combine(integ.verdict.into());
    }
    summary.set("applicable", status != Status::NotApplicable);
    Ok(status)
}

fn residual_rows(ladder: &str, reports: &[&ConvergenceReport]) -> Vec<ResidualRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.levels.iter().map(move |l| ResidualRow {
                ladder: ladder.to_string(),
                identity: r.identity.clone(),
                h: l.h,
                dt: l.dt,
                linf: l.linf,
                l2: l.l2,
                order: r.order,
                at_floor: l.at_floor(),
                pass: r.passes(),
            })
        })
        .collect()
}

fn run_identities(cfg: &RunConfig, out: &Path, summary: &mut Summary, full: bool) -> Result<Status, CliError> {
    let mut rows = Vec::new();
    let mut ok = true;
    for ladder in cfg.ladders() {
        let name = ladder.preset.name();
        log::info!("identity ladder {name}: levels {:?}", ladder.levels);
        if full {
            let rep = verify_identities(&ladder)?;
            let mut all: Vec<&ConvergenceReport> = vec![&rep.bochner];
            all.extend(rep.identities.iter());
            rows.extend(residual_rows(name, &all));
            summary.set(format!("{name}.bochner_order"), opt(rep.bochner.order));
            summary.set(format!("{name}.route_gap"), rep.route_gap);
            summary.set(format!("{name}.pass"), rep.passes());
            ok &= rep.passes();
        } else {
            let runs = ladder.runs()?;
            let refs: Vec<_> = runs.iter().map(|(h, dt, r)| (*h, *dt, r)).collect();
            let reports = cfg
                .selected_identities()
                .into_iter()
                .map(|id| convergence_study(id, &refs, ladder.b, ladder.d))
                .collect::<Result<Vec<_>, _>>()?;
            let pass = reports.iter().all(|r| r.passes());
            rows.extend(residual_rows(name, &reports.iter().collect::<Vec<_>>()));
            summary.set(format!("{name}.pass"), pass);
            ok &= pass;
        }
    }
    write_csv(&out.join("residuals.csv"), &rows)?;
    Ok(if ok { Status::Pass } else { Status::Fail })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| v.to_string())
}

fn run_zoo(out: &Path, summary: &mut Summary) -> Result<Status, CliError> {
    let rows = zoo::flow_zoo()?;
    let ok = rows.iter().all(|r| r.within_tolerance);
    summary.set("zoo.rows", rows.len());
    summary.set("zoo.tolerance", zoo::ZOO_TOLERANCE);
    write_csv(&out.join("zoo.csv"), &rows)?;
    Ok(if ok { Status::Pass } else { Status::Fail })
}
