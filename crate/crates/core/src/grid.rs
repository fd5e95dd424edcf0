//! Periodic uniform grids and the fields sampled on them.
//!
//! Nodes are numbered row-major: `node = iy * nx + ix`. Every axis is
//! periodic, so all stencils wrap around. A zero-dimensional *homogeneous*
//! grid with a single node carries spatially constant quantities (used by the
//! analytic round-sphere backend).

use std::fmt::Write as _;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{GeoError, Result};

/// Minimum number of nodes per axis.
pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    res: [usize; 2],
    len: [f64; 2],
}

impl GridSpec {
    /// A periodic 1D grid (a circle of coordinate length `len`).
    pub fn line(n: usize, len: f64) -> Result<Self> {
        Self::validate(n, len)?;
        Ok(Self { dim: 1, res: [n, 1], len: [len, 0.0] })
    }

    /// A periodic 2D grid with `nx × ny` nodes.
    pub fn plane(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::validate(nx, lx)?;
        Self::validate(ny, ly)?;
        Ok(Self { dim: 2, res: [nx, ny], len: [lx, ly] })
    }

    pub fn square(n: usize, len: f64) -> Result<Self> {
        Self::plane(n, n, len, len)
    }

    /// Single-node carrier for spatially homogeneous data.
    pub fn homogeneous() -> Self {
        Self { dim: 0, res: [1, 1], len: [0.0, 0.0] }
    }

    fn validate(n: usize, len: f64) -> Result<()> {
        if n < MIN_RESOLUTION {
            return Err(GeoError::InvalidParameter(format!(
                "resolution {n} is below the minimum of {MIN_RESOLUTION}"
            )));
        }
        if !(len.is_finite() && len > 0.0) {
            return Err(GeoError::InvalidParameter(format!(
                "domain length must be positive, got {len}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_homogeneous(&self) -> bool {
        self.dim == 0
    }

    pub fn resolution(&self, axis: usize) -> usize {
        self.res[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.len[axis]
    }

    pub fn node_count(&self) -> usize {
        self.res[0] * self.res[1]
    }

    /// Grid spacing along `axis`.
    pub fn h(&self, axis: usize) -> f64 {
        self.len[axis] / self.res[axis] as f64
    }

    /// Largest spacing over the active axes (0 on the homogeneous grid).
    pub fn h_max(&self) -> f64 {
        (0..self.dim).map(|a| self.h(a)).fold(0.0, f64::max)
    }

    /// Coordinate volume of one cell (1 on the homogeneous grid).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.h(a)).product()
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.res[0] + ix
    }

    pub fn ij(&self, node: usize) -> (usize, usize) {
        (node % self.res[0], node / self.res[0])
    }

    /// Coordinates of a node.
    pub fn coords(&self, node: usize) -> [f64; 2] {
        let (ix, iy) = self.ij(node);
        [ix as f64 * self.h_or_zero(0), iy as f64 * self.h_or_zero(1)]
    }

    fn h_or_zero(&self, axis: usize) -> f64 {
        if axis < self.dim {
            self.h(axis)
        } else {
            0.0
        }
    }

    /// Periodic neighbour of `node` offset by `off` cells along `axis`.
    #[inline]
    pub fn shift(&self, node: usize, axis: usize, off: isize) -> usize {
        let (ix, iy) = self.ij(node);
        let n = self.res[axis] as isize;
        match axis {
            0 => self.index(((ix as isize + off).rem_euclid(n)) as usize, iy),
            _ => self.index(ix, ((iy as isize + off).rem_euclid(n)) as usize),
        }
    }

    /// Periodic neighbour offset along both axes.
    #[inline]
    pub fn offset(&self, node: usize, dx: isize, dy: isize) -> usize {
        let (ix, iy) = self.ij(node);
        let nx = self.res[0] as isize;
        let ny = self.res[1] as isize;
        self.index(
            (ix as isize + dx).rem_euclid(nx) as usize,
            (iy as isize + dy).rem_euclid(ny) as usize,
        )
    }

    /// Node closest to the given coordinates (wrapped into the domain).
    pub fn nearest_node(&self, x: [f64; 2]) -> usize {
        let mut idx = [0usize; 2];
        for a in 0..self.dim {
            let n = self.res[a] as f64;
            let k = (x[a] / self.h(a)).round().rem_euclid(n);
            idx[a] = k as usize % self.res[a];
        }
        self.index(idx[0], idx[1])
    }

    /// Centred first difference along `axis`.
    pub fn diff1(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let inv = 1.0 / (2.0 * self.h(axis));
        (0..f.len())
            .map(|k| (f[self.shift(k, axis, 1)] - f[self.shift(k, axis, -1)]) * inv)
            .collect()
    }

    /// Centred second difference along `axis`.
    pub fn diff2(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let h = self.h(axis);
        let inv = 1.0 / (h * h);
        (0..f.len())
            .map(|k| (f[self.shift(k, axis, 1)] - 2.0 * f[k] + f[self.shift(k, axis, -1)]) * inv)
            .collect()
    }

    /// Centred mixed difference ∂x∂y (four-point cross stencil).
    pub fn diff_xy(&self, f: &[f64]) -> Vec<f64> {
        let inv = 1.0 / (4.0 * self.h(0) * self.h(1));
        (0..f.len())
            .map(|k| {
                (f[self.offset(k, 1, 1)] - f[self.offset(k, 1, -1)] - f[self.offset(k, -1, 1)]
                    + f[self.offset(k, -1, -1)])
                    * inv
            })
            .collect()
    }

    /// Flat five-point (2D) or three-point (1D) Laplacian.
    pub fn flat_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for axis in 0..self.dim {
            for (o, d) in out.iter_mut().zip(self.diff2(f, axis)) {
                *o += d;
            }
        }
        out
    }

    fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(GeoError::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    fn header(&self) -> String {
        let res: Vec<String> = (0..self.dim).map(|a| self.res[a].to_string()).collect();
        let len: Vec<String> = (0..self.dim).map(|a| format!("{:e}", self.len[a])).collect();
        format!("dim={} res={} len={}", self.dim, res.join(","), len.join(","))
    }
}

/// Scalar function sampled at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(GeoError::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(GeoError::InvalidParameter(format!(
                "non-finite value {} at node {k}",
                values[k]
            )));
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values produced by our own kernels.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid, values }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.node_count()] }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x, y)` at the node coordinates.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|k| {
                let [x, y] = grid.coords(k);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "zip_map on different grids");
        Self::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn check_grid(&self, other: &ScalarField) -> Result<()> {
        self.grid.ensure_same(&other.grid)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        best
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = k;
            }
        }
        best
    }

    /// Maximum absolute value.
    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Writes the plain-text snapshot format: one header line, then one value
    /// per line in row-major order. `extra` appends `key=value` header tokens.
    pub fn to_snapshot_text(&self, t: f64, extra: &[(&str, String)]) -> String {
        let mut out = format!("{} t={:e}", self.grid.header(), t);
        for (k, v) in extra {
            let _ = write!(out, " {k}={v}");
        }
        out.push('\n');
        for v in &self.values {
            let _ = writeln!(out, "{v:e}");
        }
        out
    }

    /// Parses the snapshot format written by [`ScalarField::to_snapshot_text`].
    pub fn from_snapshot_text(text: &str) -> Result<Snapshot> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| GeoError::Format("empty snapshot".into()))?;
        let mut dim = None;
        let mut res = Vec::new();
        let mut len = Vec::new();
        let mut t = None;
        let mut extra = Vec::new();
        for token in header.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| GeoError::Format(format!("bad header token `{token}`")))?;
            match k {
                "dim" => dim = Some(parse_num::<usize>(v)?),
                "res" => res = parse_list::<usize>(v)?,
                "len" => len = parse_list::<f64>(v)?,
                "t" => t = Some(parse_num::<f64>(v)?),
                _ => extra.push((k.to_string(), v.to_string())),
            }
        }
        let dim = dim.ok_or_else(|| GeoError::Format("missing dim".into()))?;
        let t = t.ok_or_else(|| GeoError::Format("missing t".into()))?;
        if res.len() != dim || len.len() != dim {
            return Err(GeoError::Format("res/len do not match dim".into()));
        }
        let grid = match dim {
            0 => GridSpec::homogeneous(),
            1 => GridSpec::line(res[0], len[0])?,
            2 => GridSpec::plane(res[0], res[1], len[0], len[1])?,
            d => return Err(GeoError::Format(format!("unsupported dimension {d}"))),
        };
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| parse_num::<f64>(l.trim()))
            .collect::<Result<Vec<_>>>()?;
        let field = ScalarField::new(grid, values)?;
        Ok(Snapshot { field, t, extra })
    }
}

/// A parsed snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: ScalarField,
    pub t: f64,
    pub extra: Vec<(String, String)>,
}

impl Snapshot {
    pub fn extra(&self, key: &str) -> Option<&str> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| GeoError::Format(format!("cannot parse `{s}`")))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_num).collect()
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Mul<&ScalarField> for f64 {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        rhs.scale(self)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.map(|v| -v)
    }
}

/// Contravariant vector field `X^i`, stored with stride `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    comps: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: GridSpec, comps: Vec<f64>) -> Result<Self> {
        if comps.len() != grid.dim() * grid.node_count() {
            return Err(GeoError::GridMismatch(format!(
                "{} components for {} nodes of dimension {}",
                comps.len(),
                grid.node_count(),
                grid.dim()
            )));
        }
        if comps.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::InvalidParameter("non-finite vector component".into()));
        }
        Ok(Self { grid, comps })
    }

    pub(crate) fn from_raw(grid: GridSpec, comps: Vec<f64>) -> Self {
        debug_assert_eq!(comps.len(), grid.dim() * grid.node_count());
        Self { grid, comps }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_raw(grid, vec![0.0; grid.dim() * grid.node_count()])
    }

    /// Builds a field from per-node component closures `X^i(x, y)`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let dim = grid.dim();
        let mut comps = Vec::with_capacity(dim * grid.node_count());
        for k in 0..grid.node_count() {
            let [x, y] = grid.coords(k);
            let c = f(x, y);
            comps.extend_from_slice(&c[..dim]);
        }
        Self { grid, comps }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn at(&self, node: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.comps[node * d..(node + 1) * d]
    }

    /// Component `i` at every node.
    pub fn component(&self, i: usize) -> ScalarField {
        let d = self.grid.dim();
        ScalarField::from_raw(
            self.grid,
            (0..self.grid.node_count()).map(|k| self.comps[k * d + i]).collect(),
        )
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_raw(self.grid, self.comps.iter().map(|v| c * v).collect())
    }

    pub fn raw(&self) -> &[f64] {
        &self.comps
    }
}

/// Covariant symmetric 2-tensor `T_ij`.
///
/// Layout per node: `[T_11]` in 1D, `[T_11, T_12, T_22]` in 2D. On the
/// homogeneous grid the tensor is isotropic, `T = c·g`, and stores `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField {
    grid: GridSpec,
    comps: Vec<f64>,
}

impl SymTensorField {
    pub fn components_per_node(dim: usize) -> usize {
        match dim {
            2 => 3,
            _ => 1,
        }
    }

    pub fn new(grid: GridSpec, comps: Vec<f64>) -> Result<Self> {
        let per = Self::components_per_node(grid.dim());
        if comps.len() != per * grid.node_count() {
            return Err(GeoError::GridMismatch(format!(
                "{} tensor components for {} nodes",
                comps.len(),
                grid.node_count()
            )));
        }
        if comps.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::InvalidParameter("non-finite tensor component".into()));
        }
        Ok(Self { grid, comps })
    }

    pub(crate) fn from_raw(grid: GridSpec, comps: Vec<f64>) -> Self {
        debug_assert_eq!(comps.len(), Self::components_per_node(grid.dim()) * grid.node_count());
        Self { grid, comps }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let per = Self::components_per_node(grid.dim());
        Self::from_raw(grid, vec![0.0; per * grid.node_count()])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `T_ij` at a node. On the homogeneous grid returns the isotropic
    /// coefficient regardless of `i, j`.
    #[inline]
    pub fn get(&self, node: usize, i: usize, j: usize) -> f64 {
        match self.grid.dim() {
            2 => self.comps[3 * node + i + j],
            _ => self.comps[node],
        }
    }

    /// Raw per-node components (see the layout note on the type).
    #[inline]
    pub fn at(&self, node: usize) -> &[f64] {
        let per = Self::components_per_node(self.grid.dim());
        &self.comps[node * per..(node + 1) * per]
    }

    pub fn raw(&self) -> &[f64] {
        &self.comps
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_raw(self.grid, self.comps.iter().map(|v| c * v).collect())
    }

    pub fn zip_map(&self, other: &SymTensorField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "zip_map on different grids");
        Self::from_raw(
            self.grid,
            self.comps.iter().zip(&other.comps).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// Multiplies every node's tensor by the scalar at that node.
    pub fn scale_by(&self, s: &ScalarField) -> Self {
        let per = Self::components_per_node(self.grid.dim());
        Self::from_raw(
            self.grid,
            self.comps.iter().enumerate().map(|(i, &c)| c * s.values()[i / per]).collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
