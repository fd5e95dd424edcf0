//! Minimisation of the space-time action `∫ (S + |γ′|²) dt` over lattice
//! paths by dynamic programming across time slices.

use crate::error::{invalid, GeoError, Result};
use crate::flow::s_trace;
use crate::grid::{GridSpec, ScalarField};
use crate::manifold::Geometry;
use crate::pme::Run;

/// Metric and potential `S` at a sequence of times.
#[derive(Debug, Clone)]
pub struct ActionLattice {
    times: Vec<f64>,
    geoms: Vec<Geometry>,
    s: Vec<ScalarField>,
}

/// A minimising lattice path and its action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPath {
    /// One node per time slice, from `x1` at `t1` to `x2` at `t2`.
    pub nodes: Vec<usize>,
    pub times: Vec<f64>,
    pub gamma: f64,
    /// Largest per-axis move (in cells) allowed between slices.
    pub radius: usize,
}

impl ActionLattice {
    pub fn new(times: Vec<f64>, geoms: Vec<Geometry>, s: Vec<ScalarField>) -> Result<Self> {
        if times.len() < 2 || geoms.len() != times.len() || s.len() != times.len() {
            return Err(invalid("an action lattice needs at least two matching slices"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("action slices must have increasing times"));
        }
        let grid = geoms[0].grid();
        if geoms.iter().any(|g| g.grid() != grid) || s.iter().any(|f| *f.grid() != grid) {
            return Err(GeoError::GridMismatch("action slices live on different grids".into()));
        }
        Ok(Self { times, geoms, s })
    }

    /// Slices `i1..=i2` of a recorded run.
    pub fn from_run(run: &Run, i1: usize, i2: usize) -> Result<Self> {
        if !(i1 < i2 && i2 < run.len()) {
            return Err(invalid(format!("need snapshot indices i1 < i2 < {}, got {i1}, {i2}", run.len())));
        }
        let snaps = &run.snapshots[i1..=i2];
        Self::new(
            snaps.iter().map(|s| s.t()).collect(),
            snaps.iter().map(|s| s.flow.geom.clone()).collect(),
            snaps.iter().map(|s| s_trace(&s.flow, &run.kind)).collect::<Result<_>>()?,
        )
    }

    pub fn grid(&self) -> GridSpec {
        self.geoms[0].grid()
    }

    pub fn slices(&self) -> usize {
        self.times.len()
    }

    fn step_cost(&self, k: usize, from: usize, dx: isize, dy: isize) -> f64 {
        let to = self.grid().offset(from, dx, dy);
        let dt = self.times[k + 1] - self.times[k];
        let len = 0.5 * (self.geoms[k].segment_length(from, dx, dy) + self.geoms[k + 1].segment_length(from, dx, dy));
        0.5 * (self.s[k].values()[from] + self.s[k + 1].values()[to]) * dt + len * len / dt
    }

    /// Action of an explicit path with one node per slice; consecutive nodes
    /// are joined by their shortest periodic offset.
    pub fn path_action(&self, nodes: &[usize]) -> Result<f64> {
        if nodes.len() != self.slices() {
            return Err(invalid("a path needs exactly one node per slice"));
        }
        let grid = self.grid();
        Ok(nodes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (dx, dy) = shortest_offset(grid, w[0], w[1]);
                self.step_cost(k, w[0], dx, dy)
            })
            .sum())
    }

    /// Per-axis move bound that lets a constant-speed path reach `x2`.
    pub fn default_radius(&self, x1: usize, x2: usize) -> usize {
        let grid = self.grid();
        if grid.dim() == 0 {
            return 0;
        }
        let (dx, dy) = shortest_offset(grid, x1, x2);
        let reach = dx.unsigned_abs().max(dy.unsigned_abs());
        let per_slice = reach.div_ceil(self.slices() - 1);
        (per_slice + 1).max(2).min(max_radius(grid))
    }

    /// Minimises the action over lattice paths from `x1` at the first slice
    /// to `x2` at the last, with moves of at most `radius` cells per axis
    /// between slices (default [`Self::default_radius`]).
    pub fn minimise(&self, x1: usize, x2: usize, radius: Option<usize>) -> Result<ActionPath> {
        let grid = self.grid();
        let nodes = grid.node_count();
        if x1 >= nodes || x2 >= nodes {
            return Err(invalid(format!("node index out of range (grid has {nodes} nodes)")));
        }
        let radius = radius.unwrap_or_else(|| self.default_radius(x1, x2)).min(max_radius(grid));
        let r = radius as isize;
        let offsets: Vec<(isize, isize)> = match grid.dim() {
            0 => vec![(0, 0)],
            1 => (-r..=r).map(|dx| (dx, 0)).collect(),
            _ => (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect(),
        };
        let mut value = vec![f64::INFINITY; nodes];
        value[x1] = 0.0;
        let mut parents: Vec<Vec<usize>> = Vec::with_capacity(self.slices() - 1);
        for k in 0..self.slices() - 1 {
            let mut next = vec![f64::INFINITY; nodes];
            let mut parent = vec![usize::MAX; nodes];
            for (from, &base) in value.iter().enumerate() {
                if !base.is_finite() {
                    continue;
                }
                for &(dx, dy) in &offsets {
                    let to = grid.offset(from, dx, dy);
                    let cand = base + self.step_cost(k, from, dx, dy);
                    if cand < next[to] {
                        next[to] = cand;
                        parent[to] = from;
                    }
                }
            }
            value = next;
            parents.push(parent);
        }
        if !value[x2].is_finite() {
            return Err(invalid(format!("node {x2} is unreachable with move radius {radius}")));
        }
        let mut path = vec![x2];
        for parent in parents.iter().rev() {
            path.push(parent[*path.last().unwrap()]);
        }
        path.reverse();
        Ok(ActionPath { nodes: path, times: self.times.clone(), gamma: value[x2], radius })
    }
}

fn max_radius(grid: GridSpec) -> usize {
    (0..grid.dim()).map(|a| grid.resolution(a) / 2).max().unwrap_or(0)
}

/// Shortest periodic cell offset from `a` to `b`.
pub(crate) fn shortest_offset(grid: GridSpec, a: usize, b: usize) -> (isize, isize) {
    let (ax, ay) = grid.ij(a);
    let (bx, by) = grid.ij(b);
    let wrap = |d: isize, n: usize| {
        let n = n as isize;
        let d = d.rem_euclid(n);
        if d > n / 2 {
            d - n
        } else {
            d
        }
    };
    let dx = if grid.dim() >= 1 { wrap(bx as isize - ax as isize, grid.resolution(0)) } else { 0 };
    let dy = if grid.dim() == 2 { wrap(by as isize - ay as isize, grid.resolution(1)) } else { 0 };
    (dx, dy)
}

/// Snapshot index whose time matches `t` (to a millionth of the spacing).
pub(crate) fn snapshot_index(run: &Run, t: f64) -> Result<usize> {
    let delta = run.spacing();
    run.snapshots
        .iter()
        .position(|s| (s.t() - t).abs() <= 1e-6 * delta)
        .ok_or_else(|| invalid(format!("t = {t} is not a snapshot time of the run")))
}

/// `Γ` between `(x1, t1)` and `(x2, t2)`, both times being snapshot times of `run`.
pub fn action_gamma(run: &Run, x1: usize, t1: f64, x2: usize, t2: f64) -> Result<ActionPath> {
    if !(t1 < t2) {
        return Err(invalid(format!("the action needs t1 < t2, got {t1} and {t2}")));
    }
    let (i1, i2) = (snapshot_index(run, t1)?, snapshot_index(run, t2)?);
    ActionLattice::from_run(run, i1, i2)?.minimise(x1, x2, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat_lattice(n: usize, slices: usize, horizon: f64, s: impl Fn(usize, f64, f64) -> f64) -> ActionLattice {
        let geom = Geometry::flat_circle(n, 1.0).unwrap();
        let times: Vec<f64> = (0..slices).map(|k| horizon * k as f64 / (slices - 1) as f64).collect();
        let s = (0..slices)
            .map(|k| ScalarField::from_fn(geom.grid(), |x, y| s(k, x, y)))
            .collect();
        ActionLattice::new(times, vec![geom; slices], s).unwrap()
    }

    #[test]
    fn stay_path_has_zero_action_without_potential() {
        let lat = flat_lattice(32, 6, 0.5, |_, _, _| 0.0);
        let path = lat.minimise(5, 5, None).unwrap();
        assert_eq!(path.gamma, 0.0);
        assert!(path.nodes.iter().all(|&x| x == 5));
    }

    #[test]
    fn constant_potential_stay_path() {
        let sigma = 0.8;
        let lat = flat_lattice(32, 6, 0.5, |_, _, _| sigma);
        let path = lat.minimise(9, 9, None).unwrap();
        assert!((path.gamma - sigma * 0.5).abs() < 1e-12);
    }

    #[test]
    fn antipodal_straight_line() {
        let lat = flat_lattice(128, 11, 0.5, |_, _, _| 0.0);
        let path = lat.minimise(0, 64, None).unwrap();
        assert!((path.gamma - 0.5).abs() <= 0.05 * 0.5, "{}", path.gamma);
        assert_eq!(*path.nodes.first().unwrap(), 0);
        assert_eq!(*path.nodes.last().unwrap(), 64);
        assert!((lat.path_action(&path.nodes).unwrap() - path.gamma).abs() < 1e-12);
    }

    #[test]
    fn larger_potential_never_lowers_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let phase: f64 = rng.gen_range(0.0..1.0);
            let bump: f64 = rng.gen_range(0.0..2.0);
            let base = move |k: usize, x: f64, _| 1.0 + (std::f64::consts::TAU * (x + phase + 0.1 * k as f64)).sin();
            let lo = flat_lattice(32, 5, 0.4, base);
            let hi = flat_lattice(32, 5, 0.4, move |k, x, y| base(k, x, y) + bump * x);
            let (a, b) = (rng.gen_range(0..32), rng.gen_range(0..32));
            assert!(hi.minimise(a, b, None).unwrap().gamma >= lo.minimise(a, b, None).unwrap().gamma - 1e-12);
        }
    }

    #[test]
    fn optimum_beats_random_paths() {
        let lat = flat_lattice(32, 6, 0.5, |k, x, _| 1.0 + 0.5 * (6.0 * x + k as f64).cos());
        let best = lat.minimise(3, 20, Some(16)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let mut nodes: Vec<usize> = (0..6).map(|_| rng.gen_range(0..32)).collect();
            nodes[0] = 3;
            nodes[5] = 20;
            assert!(lat.path_action(&nodes).unwrap() >= best.gamma - 1e-12);
        }
    }

    #[test]
    fn rejects_bad_queries() {
        let lat = flat_lattice(16, 3, 0.5, |_, _, _| 0.0);
        assert!(lat.minimise(0, 99, None).is_err());
        assert!(lat.minimise(0, 8, Some(1)).is_err());
        assert!(lat.path_action(&[0, 1]).is_err());
        assert!(ActionLattice::new(vec![0.0, 0.0], vec![], vec![]).is_err());
    }

    #[test]
    fn shortest_offsets_wrap() {
        let g = GridSpec::square(16, 1.0).unwrap();
        assert_eq!(shortest_offset(g, g.index(1, 1), g.index(15, 3)), (-2, 2));
        assert_eq!(shortest_offset(g, 0, g.index(8, 0)), (8, 0));
    }
}
