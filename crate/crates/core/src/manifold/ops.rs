//! Differential operators, contractions and integration on a [`Geometry`].
//!
//! All grid kernels rely on `g_ij = a δ_ij`, so `g^{ij} = δ^{ij}/a` and
//! `√g = a^{n/2}`. Homogeneous (sphere) fields have vanishing derivatives.

use super::Geometry;
use crate::error::Result;
use crate::grid::{GridSpec, ScalarField, SymTensorField, VectorField};

/// Christoffel symbols `Γ^k_ij` at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    grid: GridSpec,
    data: Vec<f64>,
}

impl Connection {
    #[inline]
    pub fn get(&self, node: usize, k: usize, i: usize, j: usize) -> f64 {
        let d = self.grid.dim();
        self.data[node * d * d * d + k * d * d + i * d + j]
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Largest absolute symbol over all nodes and indices.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Geometry {
    fn same_grid(&self, g: &GridSpec) {
        assert_eq!(&self.grid(), g, "field does not live on this geometry's grid");
    }

    /// Coordinate partials `∂_i f` (centred), one vector per grid axis.
    pub fn partials(&self, f: &ScalarField) -> Vec<Vec<f64>> {
        self.same_grid(f.grid());
        let grid = self.grid();
        (0..grid.dim()).map(|a| grid.diff1(f.values(), a)).collect()
    }

    /// Connection coefficients from centred differences of the metric.
    pub fn christoffel(&self) -> Result<Connection> {
        self.require_grid("christoffel")?;
        let grid = self.grid();
        let d = grid.dim();
        let a = self.conformal_factor();
        let da = self.partials(&a);
        let mut data = vec![0.0; grid.node_count() * d * d * d];
        for node in 0..grid.node_count() {
            let inv2a = 0.5 / a.values()[node];
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        let mut v = 0.0;
                        if j == k {
                            v += da[i][node];
                        }
                        if i == k {
                            v += da[j][node];
                        }
                        if i == j {
                            v -= da[k][node];
                        }
                        data[node * d * d * d + k * d * d + i * d + j] = v * inv2a;
                    }
                }
            }
        }
        Ok(Connection { grid, data })
    }

    /// `X^i = g^{ij} ∂_j f`.
    pub fn gradient(&self, f: &ScalarField) -> VectorField {
        let grid = self.grid();
        let d = grid.dim();
        let a = self.conformal_factor();
        let df = self.partials(f);
        let mut comps = Vec::with_capacity(d * grid.node_count());
        for node in 0..grid.node_count() {
            for axis in df.iter() {
                comps.push(axis[node] / a.values()[node]);
            }
        }
        VectorField::from_raw(grid, comps)
    }

    /// Divergence-form Laplace–Beltrami operator
    /// `Δf = a^{-n/2} ∂_i(a^{n/2-1} ∂_i f)` with face coefficients averaged
    /// from the two adjacent nodes.
    pub fn laplacian(&self, f: &ScalarField) -> ScalarField {
        self.same_grid(f.grid());
        match self {
            Geometry::RoundSphere { .. } => ScalarField::zeros(GridSpec::homogeneous()),
            Geometry::ConformalTorus2D { w } => {
                let grid = self.grid();
                let lap0 = grid.flat_laplacian(f.values());
                ScalarField::from_raw(
                    grid,
                    lap0.iter().zip(w.values()).map(|(l, w)| l * (-2.0 * w).exp()).collect(),
                )
            }
            Geometry::Circle1D { phi } => {
                let grid = self.grid();
                let h = grid.h(0);
                let inv_h2 = 1.0 / (h * h);
                let fv = f.values();
                let pv = phi.values();
                let out = (0..grid.node_count())
                    .map(|k| {
                        let kp = grid.shift(k, 0, 1);
                        let km = grid.shift(k, 0, -1);
                        let cp = 0.5 * (1.0 / pv[k] + 1.0 / pv[kp]);
                        let cm = 0.5 * (1.0 / pv[k] + 1.0 / pv[km]);
                        (cp * (fv[kp] - fv[k]) - cm * (fv[k] - fv[km])) * inv_h2 / pv[k]
                    })
                    .collect();
                ScalarField::from_raw(grid, out)
            }
        }
    }

    /// Covariant Hessian `∇²f_ij = ∂_i∂_j f − Γ^k_ij ∂_k f`.
    pub fn hessian(&self, f: &ScalarField) -> SymTensorField {
        self.same_grid(f.grid());
        let grid = self.grid();
        if self.is_analytic() {
            return SymTensorField::zeros(grid);
        }
        let gamma = self.christoffel().expect("grid backend");
        let df = self.partials(f);
        let fv = f.values();
        match grid.dim() {
            1 => {
                let fxx = grid.diff2(fv, 0);
                let out = (0..grid.node_count())
                    .map(|k| fxx[k] - gamma.get(k, 0, 0, 0) * df[0][k])
                    .collect();
                SymTensorField::from_raw(grid, out)
            }
            _ => {
                let fxx = grid.diff2(fv, 0);
                let fyy = grid.diff2(fv, 1);
                let fxy = grid.diff_xy(fv);
                let mut out = Vec::with_capacity(3 * grid.node_count());
                for k in 0..grid.node_count() {
                    let second = [fxx[k], fxy[k], fyy[k]];
                    for (slot, (i, j)) in [(0, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                        let corr = gamma.get(k, 0, i, j) * df[0][k] + gamma.get(k, 1, i, j) * df[1][k];
                        out.push(second[slot] - corr);
                    }
                }
                SymTensorField::from_raw(grid, out)
            }
        }
    }

    /// Scalar curvature: 0 on the circle, `−2e^{−2w}Δ₀w` on the conformal
    /// torus, `n(n−1)/r²` on the sphere.
    pub fn scalar_curvature(&self) -> ScalarField {
        match self {
            Geometry::Circle1D { phi } => ScalarField::zeros(*phi.grid()),
            Geometry::ConformalTorus2D { w } => {
                let grid = *w.grid();
                let lap0 = grid.flat_laplacian(w.values());
                ScalarField::from_raw(
                    grid,
                    lap0.iter().zip(w.values()).map(|(l, w)| -2.0 * (-2.0 * w).exp() * l).collect(),
                )
            }
            Geometry::RoundSphere { n, r2 } => {
                ScalarField::constant(GridSpec::homogeneous(), (*n * (*n - 1)) as f64 / r2)
            }
        }
    }

    /// Ricci tensor. In 2D it is stored as exactly `(R/2) g`.
    pub fn ricci(&self) -> SymTensorField {
        match self {
            Geometry::Circle1D { phi } => SymTensorField::zeros(*phi.grid()),
            Geometry::ConformalTorus2D { .. } => {
                let half_r = self.scalar_curvature().scale(0.5);
                self.metric().scale_by(&half_r)
            }
            Geometry::RoundSphere { n, r2 } => SymTensorField::from_raw(
                GridSpec::homogeneous(),
                vec![(*n - 1) as f64 / r2],
            ),
        }
    }

    /// `∫ f dμ`. Homogeneous fields integrate to `f · vol(M)`.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        self.same_grid(f.grid());
        match self {
            Geometry::RoundSphere { .. } => f.values()[0] * self.volume(),
            _ => {
                let rho = self.volume_density();
                f.values().iter().zip(rho.values()).map(|(f, r)| f * r).sum::<f64>()
                    * self.grid().cell_volume()
            }
        }
    }

    /// `g^{ik} g^{jl} A_ij B_kl` pointwise.
    pub fn tensor_inner(&self, a: &SymTensorField, b: &SymTensorField) -> ScalarField {
        let grid = self.grid();
        self.same_grid(a.grid());
        self.same_grid(b.grid());
        let n = self.dimension() as f64;
        let fac = self.conformal_factor();
        let out = (0..grid.node_count())
            .map(|k| match grid.dim() {
                0 => n * a.at(k)[0] * b.at(k)[0],
                1 => a.at(k)[0] * b.at(k)[0] / (fac.values()[k] * fac.values()[k]),
                _ => {
                    let (x, y) = (a.at(k), b.at(k));
                    let f = fac.values()[k];
                    (x[0] * y[0] + 2.0 * x[1] * y[1] + x[2] * y[2]) / (f * f)
                }
            })
            .collect();
        ScalarField::from_raw(grid, out)
    }

    /// `|T|² = g^{ik} g^{jl} T_ij T_kl`.
    pub fn tensor_norm_sq(&self, t: &SymTensorField) -> ScalarField {
        self.tensor_inner(t, t)
    }

    /// `g^{ij} T_ij`.
    pub fn trace(&self, t: &SymTensorField) -> ScalarField {
        let grid = self.grid();
        self.same_grid(t.grid());
        let n = self.dimension() as f64;
        let fac = self.conformal_factor();
        let out = (0..grid.node_count())
            .map(|k| match grid.dim() {
                0 => n * t.at(k)[0],
                1 => t.at(k)[0] / fac.values()[k],
                _ => (t.at(k)[0] + t.at(k)[2]) / fac.values()[k],
            })
            .collect();
        ScalarField::from_raw(grid, out)
    }

    /// `T_ij X^i Y^j`.
    pub fn tensor_apply(&self, t: &SymTensorField, x: &VectorField, y: &VectorField) -> ScalarField {
        let grid = self.grid();
        let d = grid.dim();
        let out = (0..grid.node_count())
            .map(|k| {
                let (xv, yv) = (x.at(k), y.at(k));
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += t.get(k, i, j) * xv[i] * yv[j];
                    }
                }
                s
            })
            .collect();
        ScalarField::from_raw(grid, out)
    }

    /// `g(X, Y)`.
    pub fn inner(&self, x: &VectorField, y: &VectorField) -> ScalarField {
        let grid = self.grid();
        self.same_grid(x.grid());
        self.same_grid(y.grid());
        let fac = self.conformal_factor();
        let out = (0..grid.node_count())
            .map(|k| {
                let dot: f64 = x.at(k).iter().zip(y.at(k)).map(|(a, b)| a * b).sum();
                dot * fac.values()[k]
            })
            .collect();
        ScalarField::from_raw(grid, out)
    }

    pub fn norm_sq(&self, x: &VectorField) -> ScalarField {
        self.inner(x, x)
    }

    /// `⟨∇f, ∇h⟩ = g^{ij} ∂_i f ∂_j h`.
    pub fn grad_dot(&self, f: &ScalarField, h: &ScalarField) -> ScalarField {
        self.inner(&self.gradient(f), &self.gradient(h))
    }

    /// `X(f) = X^i ∂_i f`.
    pub fn directional(&self, x: &VectorField, f: &ScalarField) -> ScalarField {
        let grid = self.grid();
        let df = self.partials(f);
        let out = (0..grid.node_count())
            .map(|k| x.at(k).iter().enumerate().map(|(i, xi)| xi * df[i][k]).sum())
            .collect();
        ScalarField::from_raw(grid, out)
    }

    /// Raises a covector given as per-axis component arrays.
    pub fn raise(&self, cov: &[Vec<f64>]) -> VectorField {
        let grid = self.grid();
        let fac = self.conformal_factor();
        let mut comps = Vec::with_capacity(grid.dim() * grid.node_count());
        for k in 0..grid.node_count() {
            for axis in cov {
                comps.push(axis[k] / fac.values()[k]);
            }
        }
        VectorField::from_raw(grid, comps)
    }

    /// Divergence covector `g^{ik} ∇_k T_ij` of a symmetric tensor, with the
    /// covariant derivative built from [`Geometry::christoffel`].
    pub fn tensor_divergence(&self, t: &SymTensorField) -> Vec<Vec<f64>> {
        let grid = self.grid();
        let d = grid.dim();
        if self.is_analytic() {
            return Vec::new();
        }
        self.same_grid(t.grid());
        let gamma = self.christoffel().expect("grid backend");
        let fac = self.conformal_factor();
        let per = SymTensorField::components_per_node(d);
        // ∂_k of each stored component
        let dcomp: Vec<Vec<Vec<f64>>> = (0..per)
            .map(|c| {
                let vals: Vec<f64> = (0..grid.node_count()).map(|k| t.at(k)[c]).collect();
                (0..d).map(|a| grid.diff1(&vals, a)).collect()
            })
            .collect();
        let slot = |i: usize, j: usize| if d == 1 { 0 } else { i + j };
        let mut out = vec![vec![0.0; grid.node_count()]; d];
        for node in 0..grid.node_count() {
            let ginv = 1.0 / fac.values()[node];
            for j in 0..d {
                let mut acc = 0.0;
                for i in 0..d {
                    // g^{ik} = δ^{ik}/a, so only k = i contributes
                    let k = i;
                    let mut cov = dcomp[slot(i, j)][k][node];
                    for m in 0..d {
                        cov -= gamma.get(node, m, k, i) * t.get(node, m, j);
                        cov -= gamma.get(node, m, k, j) * t.get(node, i, m);
                    }
                    acc += ginv * cov;
                }
                out[j][node] = acc;
            }
        }
        out
    }

    /// Minimum and maximum over all nodes of the eigenvalues of `T`
    /// relative to `g`.
    pub fn relative_eigen_range(&self, t: &SymTensorField) -> (f64, f64) {
        let grid = self.grid();
        let fac = self.conformal_factor();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..grid.node_count() {
            let c = t.at(k);
            let (a, b) = match grid.dim() {
                0 => (c[0], c[0]),
                1 => {
                    let e = c[0] / fac.values()[k];
                    (e, e)
                }
                _ => {
                    let f = fac.values()[k];
                    let (xx, xy, yy) = (c[0] / f, c[1] / f, c[2] / f);
                    let mid = 0.5 * (xx + yy);
                    let rad = (0.25 * (xx - yy) * (xx - yy) + xy * xy).sqrt();
                    (mid - rad, mid + rad)
                }
            };
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo, hi)
    }

    /// Pointwise Bochner–Weitzenböck residual
    /// `½Δ|∇f|² − ⟨∇Δf, ∇f⟩ − |∇²f|² − Ric(∇f, ∇f)`.
    pub fn bochner_residual(&self, f: &ScalarField) -> ScalarField {
        let grad = self.gradient(f);
        let grad_sq = self.norm_sq(&grad);
        let lap = self.laplacian(f);
        let hess = self.hessian(f);
        let ric = self.ricci();
        let half_lap_grad_sq = self.laplacian(&grad_sq).scale(0.5);
        let cross = self.grad_dot(&lap, f);
        let hess_sq = self.tensor_norm_sq(&hess);
        let ric_ff = self.tensor_apply(&ric, &grad, &grad);
        &(&(&half_lap_grad_sq - &cross) - &hess_sq) - &ric_ff
    }
}
