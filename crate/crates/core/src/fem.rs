//! P1 finite elements on a [`Triangulation`]: geometry cache, degree-of-freedom
//! map, sparse assembly of the linearized systems and a Jacobi-preconditioned
//! conjugate gradient solver.

use std::collections::HashMap;

use thiserror::Error;

use crate::linearization::SchemeSpec;
use crate::mesh::{edge_key, Triangulation};
use crate::model::{DiffusionLaw, FeProblem};
use crate::par;

pub type Vec2 = [f64; 2];

#[inline]
pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Interior vertices are numbered consecutively; boundary vertices carry no
/// equation (homogeneous Dirichlet data).
#[derive(Clone, Debug)]
pub struct DofMap {
    equation: Vec<Option<usize>>,
    vertex_of: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Triangulation) -> Self {
        let boundary = mesh.boundary_vertices();
        let mut equation = vec![None; mesh.n_vertices()];
        let mut vertex_of = Vec::new();
        for (v, &on_boundary) in boundary.iter().enumerate() {
            if !on_boundary {
                equation[v] = Some(vertex_of.len());
                vertex_of.push(v);
            }
        }
        Self {
            equation,
            vertex_of,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.vertex_of.len()
    }

    pub fn equation(&self, vertex: usize) -> Option<usize> {
        self.equation[vertex]
    }

    pub fn vertex(&self, dof: usize) -> usize {
        self.vertex_of[dof]
    }

    pub fn is_boundary(&self, vertex: usize) -> bool {
        self.equation[vertex].is_none()
    }
}

/// Precomputed element geometry and connectivity for one mesh.
#[derive(Clone, Debug)]
pub struct FeSpace {
    mesh: Triangulation,
    dofs: DofMap,
    area: Vec<f64>,
    diameter: Vec<f64>,
    /// Gradients of the three local hat functions.
    hat_grads: Vec<[Vec2; 3]>,
    /// Neighbour across the edge opposite local vertex `k`.
    neighbors: Vec<[Option<usize>; 3]>,
    pattern: Pattern,
}

/// CSR sparsity of the interior-DOF stiffness matrix plus, for every element,
/// the slots of its local 3x3 block (`usize::MAX` for boundary rows/columns).
#[derive(Clone, Debug)]
struct Pattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    slots: Vec<[[usize; 3]; 3]>,
}

impl FeSpace {
    pub fn new(mesh: Triangulation) -> Self {
        let dofs = DofMap::new(&mesh);
        let nt = mesh.n_triangles();
        let mut area = Vec::with_capacity(nt);
        let mut diameter = Vec::with_capacity(nt);
        let mut hat_grads = Vec::with_capacity(nt);
        for t in 0..nt {
            let [p0, p1, p2] = mesh.corners(t);
            let a = mesh.area(t);
            let s = 0.5 / a;
            hat_grads.push([
                [(p1[1] - p2[1]) * s, (p2[0] - p1[0]) * s],
                [(p2[1] - p0[1]) * s, (p0[0] - p2[0]) * s],
                [(p0[1] - p1[1]) * s, (p1[0] - p0[0]) * s],
            ]);
            area.push(a);
            diameter.push(mesh.diameter(t));
        }

        let mut owner: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(2 * nt);
        let mut neighbors = vec![[None; 3]; nt];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for k in 0..3 {
                let e = edge_key(tri[(k + 1) % 3], tri[(k + 2) % 3]);
                if let Some((s, j)) = owner.remove(&e) {
                    neighbors[t][k] = Some(s);
                    neighbors[s][j] = Some(t);
                } else {
                    owner.insert(e, (t, k));
                }
            }
        }

        let pattern = Pattern::new(&mesh, &dofs);
        Self {
            mesh,
            dofs,
            area,
            diameter,
            hat_grads,
            neighbors,
            pattern,
        }
    }

    pub fn mesh(&self) -> &Triangulation {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs()
    }

    pub fn n_elements(&self) -> usize {
        self.area.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        self.area[t]
    }

    pub fn diameter(&self, t: usize) -> f64 {
        self.diameter[t]
    }

    pub fn hat_grads(&self, t: usize) -> &[Vec2; 3] {
        &self.hat_grads[t]
    }

    pub fn neighbors(&self, t: usize) -> &[Option<usize>; 3] {
        &self.neighbors[t]
    }

    /// Gradient of the P1 function with nodal values `values` on element `t`.
    #[inline]
    pub fn grad(&self, values: &[f64], t: usize) -> Vec2 {
        let tri = self.mesh.triangles()[t];
        let g = &self.hat_grads[t];
        let (u0, u1, u2) = (values[tri[0]], values[tri[1]], values[tri[2]]);
        [
            u0 * g[0][0] + u1 * g[1][0] + u2 * g[2][0],
            u0 * g[0][1] + u1 * g[1][1] + u2 * g[2][1],
        ]
    }

    /// All element gradients of a P1 function.
    pub fn grads(&self, u: &DiscreteFunction) -> Vec<Vec2> {
        par::map_indexed(self.n_elements(), |t| self.grad(u.values(), t))
    }

    /// `‖∇u‖_{L²}`, the norm of `X = H¹₀`.
    pub fn x_norm(&self, u: &DiscreteFunction) -> f64 {
        par::sum_indexed(self.n_elements(), |t| {
            let g = self.grad(u.values(), t);
            self.area[t] * dot(g, g)
        })
        .sqrt()
    }

    /// `‖∇(u - v)‖_{L²}`.
    pub fn x_distance(&self, u: &DiscreteFunction, v: &DiscreteFunction) -> f64 {
        par::sum_indexed(self.n_elements(), |t| {
            let a = self.grad(u.values(), t);
            let b = self.grad(v.values(), t);
            let d = [a[0] - b[0], a[1] - b[1]];
            self.area[t] * dot(d, d)
        })
        .sqrt()
    }

    /// Assemble `Σ_T A_T` over interior DOFs from per-element 3x3 blocks.
    pub fn assemble_matrix<F>(&self, local: F) -> CsrMatrix
    where
        F: Fn(usize) -> [[f64; 3]; 3] + Sync + Send,
    {
        let blocks = par::map_indexed(self.n_elements(), local);
        let mut values = vec![0.0; self.pattern.col_idx.len()];
        for (block, slots) in blocks.iter().zip(&self.pattern.slots) {
            for i in 0..3 {
                for j in 0..3 {
                    let s = slots[i][j];
                    if s != usize::MAX {
                        values[s] += block[i][j];
                    }
                }
            }
        }
        CsrMatrix {
            n: self.n_dofs(),
            row_ptr: self.pattern.row_ptr.clone(),
            col_idx: self.pattern.col_idx.clone(),
            values,
        }
    }

    /// Assemble a load vector over interior DOFs from per-element entries.
    pub fn assemble_vector<F>(&self, local: F) -> Vec<f64>
    where
        F: Fn(usize) -> [f64; 3] + Sync + Send,
    {
        let parts = par::map_indexed(self.n_elements(), local);
        let mut out = vec![0.0; self.n_dofs()];
        for (t, part) in parts.iter().enumerate() {
            for (k, &v) in self.mesh.triangles()[t].iter().enumerate() {
                if let Some(i) = self.dofs.equation(v) {
                    out[i] += part[k];
                }
            }
        }
        out
    }

    /// Stiffness matrix of the Laplacian, `K_ij = (∇φ_j, ∇φ_i)`.
    pub fn laplacian(&self) -> CsrMatrix {
        self.assemble_matrix(|t| {
            let g = &self.hat_grads[t];
            let a = self.area[t];
            let mut k = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    k[i][j] = a * dot(g[i], g[j]);
                }
            }
            k
        })
    }
}

impl Pattern {
    fn new(mesh: &Triangulation, dofs: &DofMap) -> Self {
        let n = dofs.n_dofs();
        let mut adj: Vec<Vec<usize>> = vec![Vec::with_capacity(7); n];
        for tri in mesh.triangles() {
            for &a in tri {
                if let Some(i) = dofs.equation(a) {
                    for &b in tri {
                        if let Some(j) = dofs.equation(b) {
                            adj[i].push(j);
                        }
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let slot = |i: usize, j: usize| {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            row_ptr[i]
                + cols
                    .binary_search(&j)
                    .expect("pattern contains element coupling")
        };
        let slots = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut s = [[usize::MAX; 3]; 3];
                for (a, &va) in tri.iter().enumerate() {
                    for (b, &vb) in tri.iter().enumerate() {
                        if let (Some(i), Some(j)) = (dofs.equation(va), dofs.equation(vb)) {
                            s[a][b] = slot(i, j);
                        }
                    }
                }
                s
            })
            .collect();
        Self {
            row_ptr,
            col_idx,
            slots,
        }
    }
}

/// A P1 function stored by its values at all mesh vertices; boundary values
/// are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteFunction {
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn zeros(space: &FeSpace) -> Self {
        Self {
            values: vec![0.0; space.mesh().n_vertices()],
        }
    }

    /// Nodal interpolant of `f`, with boundary values forced to zero.
    pub fn interpolate<F: Fn([f64; 2]) -> f64>(space: &FeSpace, f: F) -> Self {
        let values = space
            .mesh()
            .vertices()
            .iter()
            .enumerate()
            .map(|(v, &p)| {
                if space.dofs().is_boundary(v) {
                    0.0
                } else {
                    f(p)
                }
            })
            .collect();
        Self { values }
    }

    pub fn from_interior(space: &FeSpace, x: &[f64]) -> Self {
        assert_eq!(x.len(), space.n_dofs(), "coefficient vector length");
        let mut values = vec![0.0; space.mesh().n_vertices()];
        for (i, &xi) in x.iter().enumerate() {
            values[space.dofs().vertex(i)] = xi;
        }
        Self { values }
    }

    /// Wrap nodal values; boundary entries must already be zero.
    pub fn from_values(space: &FeSpace, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            space.mesh().n_vertices(),
            "nodal vector length"
        );
        debug_assert!(values
            .iter()
            .enumerate()
            .all(|(v, &x)| !space.dofs().is_boundary(v) || x == 0.0));
        Self { values }
    }

    #[cfg(test)]
    pub(crate) fn from_values_unchecked(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn interior(&self, space: &FeSpace) -> Vec<f64> {
        (0..space.n_dofs())
            .map(|i| self.values[space.dofs().vertex(i)])
            .collect()
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn matches(&self, space: &FeSpace) -> bool {
        self.values.len() == space.mesh().n_vertices()
    }
}

/// Square sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            assert_eq!(row.len(), n, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        par::fill_indexed(y, |i| self.row(i).map(|(j, a)| a * x[j]).sum());
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, a) in self.row(i) {
                row[j] = a;
            }
        }
        d
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    /// `xᵀ A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }
}

/// Linear system over interior DOFs whose solution is the next iterate.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("CG did not converge in {iterations} iterations (relative residual {relative_residual:.3e})")]
    NotConverged {
        iterations: usize,
        relative_residual: f64,
    },
    #[error("CG breakdown: non-positive curvature {curvature:.3e} at iteration {iteration}")]
    NotPositiveDefinite { iteration: usize, curvature: f64 },
    #[error("dimension mismatch: matrix {matrix}, vector {vector}")]
    Dimension { matrix: usize, vector: usize },
}

pub const CG_RTOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients started from `guess`.
///
/// Converged once the residual has dropped by [`CG_RTOL`] relative to the
/// initial residual `b - A·guess`; gives up after `10·n` iterations.
pub fn solve(sys: &SparseSystem, guess: &[f64]) -> Result<Vec<f64>, SolveError> {
    solve_with_stats(sys, guess).map(|(x, _)| x)
}

pub fn solve_with_stats(
    sys: &SparseSystem,
    guess: &[f64],
) -> Result<(Vec<f64>, CgStats), SolveError> {
    let a = &sys.matrix;
    let n = a.nrows();
    for len in [sys.rhs.len(), guess.len()] {
        if len != n {
            return Err(SolveError::Dimension {
                matrix: n,
                vector: len,
            });
        }
    }
    let mut x = guess.to_vec();
    let mut r: Vec<f64> = a.matvec(&x);
    for (ri, bi) in r.iter_mut().zip(&sys.rhs) {
        *ri = bi - *ri;
    }
    let r0 = dotv(&r, &r).sqrt();
    if r0 == 0.0 || n == 0 {
        return Ok((
            x,
            CgStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| 1.0 / d).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dotv(&r, &z);
    let max_iter = 10 * n;
    let mut rel = 1.0;
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        let curvature = dotv(&p, &ap);
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(SolveError::NotPositiveDefinite {
                iteration: it,
                curvature,
            });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dotv(&r, &r).sqrt() / r0;
        if rel <= CG_RTOL {
            return Ok((
                x,
                CgStats {
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dotv(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolveError::NotConverged {
        iterations: max_iter,
        relative_residual: rel,
    })
}

/// Coercivity and continuity constants `(α, β)` of the bilinear form
/// `a(u; ·, ·)` of a scheme, uniformly in `u`.
pub fn scheme_constants(scheme: &SchemeSpec, law: &DiffusionLaw) -> (f64, f64) {
    match *scheme {
        SchemeSpec::Zarantonello { delta } => (1.0 / delta, 1.0 / delta),
        SchemeSpec::Kacanov => (law.inf_mu(), law.sup_mu()),
        SchemeSpec::Newton { .. } => {
            let (m, big_m) = law.monotonicity_bounds();
            (law.inf_mu().min(m), law.sup_mu().max(big_m))
        }
    }
}

/// Linear system for one step of `scheme` from `u_n`; its solution is
/// `u^{n+1}`.
pub fn assemble(scheme: &SchemeSpec, fp: &FeProblem, u_n: &DiscreteFunction) -> SparseSystem {
    let space = fp.space();
    let law = fp.law();
    let u = u_n.values();
    match *scheme {
        SchemeSpec::Zarantonello { delta } => {
            let inv = 1.0 / delta;
            let matrix = space.assemble_matrix(|t| {
                let g = space.hat_grads(t);
                let a = space.area(t) * inv;
                let mut k = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        k[i][j] = a * dot(g[i], g[j]);
                    }
                }
                k
            });
            let rhs = space.assemble_vector(|t| {
                let g = space.hat_grads(t);
                let gu = space.grad(u, t);
                let a = space.area(t);
                let flux = law.flux(gu);
                let load = fp.load_flux(t);
                let mut out = [0.0; 3];
                for i in 0..3 {
                    let lift = a * inv * dot(gu, g[i]);
                    let residual = a * dot(flux, g[i]) - dot(load, g[i]);
                    out[i] = lift - residual;
                }
                out
            });
            SparseSystem { matrix, rhs }
        }
        SchemeSpec::Kacanov => {
            let matrix = space.assemble_matrix(|t| {
                let g = space.hat_grads(t);
                let gu = space.grad(u, t);
                let a = space.area(t) * law.mu(dot(gu, gu));
                let mut k = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        k[i][j] = a * dot(g[i], g[j]);
                    }
                }
                k
            });
            let rhs = fp.load_vector();
            SparseSystem { matrix, rhs }
        }
        SchemeSpec::Newton { delta } => {
            let local = |t: usize| {
                let g = space.hat_grads(t);
                let gu = space.grad(u, t);
                let s = dot(gu, gu);
                let a = space.area(t);
                let mu = law.mu(s);
                let two_dmu = 2.0 * law.mu_prime(s);
                let proj = [dot(gu, g[0]), dot(gu, g[1]), dot(gu, g[2])];
                let mut k = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        k[i][j] = a * (mu * dot(g[i], g[j]) + two_dmu * proj[i] * proj[j]);
                    }
                }
                k
            };
            let matrix = space.assemble_matrix(local);
            let rhs = space.assemble_vector(|t| {
                let tri = space.mesh().triangles()[t];
                let k = local(t);
                let g = space.hat_grads(t);
                let gu = space.grad(u, t);
                let flux = law.flux(gu);
                let load = fp.load_flux(t);
                let a = space.area(t);
                let mut out = [0.0; 3];
                for i in 0..3 {
                    let au: f64 = (0..3).map(|j| k[i][j] * u[tri[j]]).sum();
                    let residual = a * dot(flux, g[i]) - dot(load, g[i]);
                    out[i] = au - delta * residual;
                }
                out
            });
            SparseSystem { matrix, rhs }
        }
    }
}
