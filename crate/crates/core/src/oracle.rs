//! Reference solutions and checks of the iteration theory on recorded traces.
//!
//! The discrete solution `u⋆_N` is computed by a full Newton method whose
//! Jacobian and residual are assembled here, element by element, and solved
//! with a banded Cholesky factorization after reverse Cuthill-McKee ordering.
//! None of this goes through the CSR assembly or the CG solver used by the
//! linearization schemes.

use std::collections::VecDeque;
use std::fmt;

use crate::fem::{dot, DiscreteFunction, FeSpace};
use crate::linearization::{tail_constant, StepRecord, MIN_STEP_NORM};
use crate::model::FeProblem;
use crate::Error;

pub const ORACLE_MAX_DOFS: usize = 5000;
pub const ORACLE_RESIDUAL_TOL: f64 = 1e-13;
const ORACLE_MAX_NEWTON: usize = 100;

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub u: DiscreteFunction,
    /// Euclidean norm of the residual vector `(⟨F(u), φ_i⟩)_i`.
    pub residual_norm: f64,
    pub newton_iterations: usize,
}

/// Lower band of a symmetric positive definite matrix,
/// `entry(i, j)` for `i - bandwidth ≤ j ≤ i`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + (i - j)
    }

    /// Add `v` to entry `(i, j)` of the symmetric matrix.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// In-place Cholesky factorization `A = L Lᵀ`.
    pub fn factorize(mut self) -> Result<BandCholesky, Error> {
        let (n, bw) = (self.n, self.bandwidth);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = self.data[self.idx(i, j)];
                for k in klo..j {
                    s -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                let slot = self.idx(i, j);
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::OracleFailed(format!(
                            "Jacobian not positive definite at pivot {i} ({s:e})"
                        )));
                    }
                    self.data[slot] = s.sqrt();
                } else {
                    self.data[slot] = s / self.data[self.idx(j, j)];
                }
            }
        }
        Ok(BandCholesky { factor: self })
    }
}

pub struct BandCholesky {
    factor: BandMatrix,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let (n, bw) = (l.n, l.bandwidth);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= l.data[l.idx(i, k)] * y[k];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n.min(i + bw + 1) {
                s -= l.data[l.idx(k, i)] * y[k];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        y
    }
}

/// Reverse Cuthill-McKee permutation of the interior-DOF graph:
/// `perm[new] = old`.
fn rcm_order(space: &FeSpace) -> Vec<usize> {
    let n = space.n_dofs();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for tri in space.mesh().triangles() {
        for &a in tri {
            for &b in tri {
                if let (Some(i), Some(j)) = (space.dofs().equation(a), space.dofs().equation(b)) {
                    if i != j {
                        adj[i].push(j);
                    }
                }
            }
        }
    }
    for row in &mut adj {
        row.sort_unstable();
        row.dedup();
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (adj[i].len(), i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

struct NewtonSystem {
    jacobian: BandMatrix,
    residual: Vec<f64>,
}

/// Newton Jacobian `∫ μ ∇φ_j·∇φ_i + 2μ'(∇u·∇φ_j)(∇u·∇φ_i)` and residual
/// `⟨F(u), φ_i⟩`, both in permuted numbering.
fn newton_system(
    fp: &FeProblem,
    u: &DiscreteFunction,
    position: &[usize],
    bandwidth: usize,
) -> NewtonSystem {
    let space = fp.space();
    let law = fp.law();
    let n = space.n_dofs();
    let mut jacobian = BandMatrix::zeros(n, bandwidth);
    let mut residual = vec![0.0; n];
    for (t, tri) in space.mesh().triangles().iter().enumerate() {
        let g = space.hat_grads(t);
        let a = space.area(t);
        let gu = space.grad(u.values(), t);
        let s = dot(gu, gu);
        let mu = law.mu(s);
        let dmu = law.mu_prime(s);
        let load = fp.load_flux(t);
        for i in 0..3 {
            let Some(row) = space.dofs().equation(tri[i]) else {
                continue;
            };
            let pi = position[row];
            residual[pi] += a * mu * dot(gu, g[i]) - dot(load, g[i]);
            for j in 0..=i {
                let Some(col) = space.dofs().equation(tri[j]) else {
                    continue;
                };
                let pj = position[col];
                let v = a * (mu * dot(g[i], g[j]) + 2.0 * dmu * dot(gu, g[i]) * dot(gu, g[j]));
                jacobian.add(pi, pj, v);
                if i != j && pi == pj {
                    unreachable!("distinct local vertices share a DOF");
                }
            }
        }
    }
    NewtonSystem { jacobian, residual }
}

/// Solve `⟨F(u⋆_N), v⟩ = 0` for all `v ∈ X_N` by damped Newton from `u ≡ 0`.
pub fn oracle_solve(fp: &FeProblem) -> Result<OracleSolution, Error> {
    let space = fp.space();
    let n = space.n_dofs();
    if n > ORACLE_MAX_DOFS {
        return Err(Error::OracleFailed(format!(
            "{n} DOFs exceed the oracle limit of {ORACLE_MAX_DOFS}"
        )));
    }
    let perm = rcm_order(space);
    let mut position = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        position[old] = new;
    }
    let mut bandwidth = 0;
    for tri in space.mesh().triangles() {
        let p: Vec<usize> = tri
            .iter()
            .filter_map(|&v| space.dofs().equation(v))
            .map(|i| position[i])
            .collect();
        for &a in &p {
            for &b in &p {
                bandwidth = bandwidth.max(a.abs_diff(b));
            }
        }
    }

    let mut u = DiscreteFunction::zeros(space);
    for iteration in 0..=ORACLE_MAX_NEWTON {
        let sys = newton_system(fp, &u, &position, bandwidth);
        let residual_norm = sys.residual.iter().map(|r| r * r).sum::<f64>().sqrt();
        if residual_norm <= ORACLE_RESIDUAL_TOL {
            return Ok(OracleSolution {
                u,
                residual_norm,
                newton_iterations: iteration,
            });
        }
        if iteration == ORACLE_MAX_NEWTON {
            break;
        }
        let rhs: Vec<f64> = sys.residual.iter().map(|r| -r).collect();
        let dp = sys.jacobian.factorize()?.solve(&rhs);
        let d: Vec<f64> = (0..n).map(|i| dp[position[i]]).collect();
        let increment = DiscreteFunction::from_interior(space, &d);
        let mut scale = 1.0;
        let mut next = u.axpy(scale, &increment);
        for _ in 0..30 {
            if fp.energy_decrease(&u, &next) >= -1e-15 {
                break;
            }
            scale *= 0.5;
            next = u.axpy(scale, &increment);
        }
        u = next;
    }
    Err(Error::OracleFailed(format!(
        "Newton did not reach residual {ORACLE_RESIDUAL_TOL:e} in {ORACLE_MAX_NEWTON} steps"
    )))
}

/// One line of a verification report.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    /// Human-readable bound, e.g. `"<= 4.14"`.
    pub bound: String,
    pub measured: f64,
    pub passed: bool,
    pub violations: usize,
}

impl CheckReport {
    pub fn new(
        name: impl Into<String>,
        bound: impl Into<String>,
        measured: f64,
        violations: usize,
    ) -> Self {
        Self {
            name: name.into(),
            bound: bound.into(),
            measured,
            passed: violations == 0,
            violations,
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<52} bound {:<22} measured {:<12.5e} {}",
            self.name,
            self.bound,
            self.measured,
            if self.passed { "PASS" } else { "FAIL" }
        )?;
        if self.violations > 0 {
            write!(f, " ({} violations)", self.violations)?;
        }
        Ok(())
    }
}

/// `‖u⋆_N - u^n‖_X ≤ (1 + β/ν)‖u^n - u^{n-1}‖_X` for every `n ≥ 1` of the
/// iterate sequence `trace = [u^0, u^1, ...]`. Reports the largest ratio.
pub fn check_error_increment_bound(
    space: &FeSpace,
    trace: &[DiscreteFunction],
    oracle: &OracleSolution,
    nu: f64,
    beta: f64,
) -> CheckReport {
    let bound = 1.0 + beta / nu;
    let mut worst = 0.0f64;
    let mut violations = 0;
    for pair in trace.windows(2) {
        let step = space.x_distance(&pair[1], &pair[0]);
        if step < 1e-12 {
            continue;
        }
        let ratio = space.x_distance(&oracle.u, &pair[1]) / step;
        worst = worst.max(ratio);
        if ratio > bound {
            violations += 1;
        }
    }
    CheckReport::new(
        "discrete error vs. linearization increment",
        format!("<= {bound:.4}"),
        worst,
        violations,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SandwichSample {
    pub energy_gap: f64,
    pub lower: f64,
    pub upper: f64,
}

impl SandwichSample {
    pub fn holds(&self, rel_slack: f64) -> bool {
        let slack = rel_slack * self.upper.abs() + 1e-300;
        self.energy_gap >= self.lower - slack && self.energy_gap <= self.upper + slack
    }
}

/// `ν/2 ‖u⋆_N - u‖² ≤ H(u) - H(u⋆_N) ≤ L_F/2 ‖u⋆_N - u‖²` with `ν = m_μ`,
/// `L_F = 3M_μ`.
pub fn check_energy_sandwich(
    fp: &FeProblem,
    u: &DiscreteFunction,
    oracle: &OracleSolution,
) -> SandwichSample {
    let e2 = fp.space().x_distance(u, &oracle.u).powi(2);
    SandwichSample {
        energy_gap: fp.energy_decrease(u, &oracle.u),
        lower: 0.5 * fp.law().nu() * e2,
        upper: 0.5 * fp.law().lipschitz() * e2,
    }
}

pub const SANDWICH_REL_SLACK: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct TailReport {
    pub constant: f64,
    /// Largest `Σ_{j>k} ‖Δu^j‖² / (C ‖Δu^k‖²)`; at most 1 when the bound holds.
    pub worst_sum_ratio: f64,
    /// Largest `‖Δu^n‖² / (C (1 + 1/C)^{2-n} ‖Δu^1‖²)`.
    pub worst_geometric_ratio: f64,
    pub violations: usize,
    pub checked: usize,
}

/// Tail-sum and geometric-decay bounds of the contraction-like property on a
/// squared step-norm sequence `s[0] = ‖u^1 - u^0‖²`, `s[1] = ‖u^2 - u^1‖²`, …
pub fn check_tail_bounds(squared_steps: &[f64], constant: f64) -> TailReport {
    let admissible = MIN_STEP_NORM * MIN_STEP_NORM;
    let len = squared_steps
        .iter()
        .position(|&s| s <= admissible)
        .unwrap_or(squared_steps.len());
    let s = &squared_steps[..len];
    let mut violations = 0;
    let mut checked = 0;
    let mut worst_sum = 0.0f64;
    let mut worst_geo = 0.0f64;
    // suffix[k] = Σ_{j ≥ k} s[j]
    let mut suffix = vec![0.0; s.len() + 1];
    for k in (0..s.len()).rev() {
        suffix[k] = suffix[k + 1] + s[k];
    }
    for k in 0..s.len() {
        let ratio = suffix[k + 1] / (constant * s[k]);
        worst_sum = worst_sum.max(ratio);
        checked += 1;
        if ratio > 1.0 {
            violations += 1;
        }
    }
    let growth = 1.0 + 1.0 / constant;
    for (idx, &sn) in s.iter().enumerate().skip(1) {
        let n = idx as i32 + 1;
        let bound = constant * growth.powi(2 - n) * s[0];
        let ratio = sn / bound;
        worst_geo = worst_geo.max(ratio);
        checked += 1;
        if ratio > 1.0 {
            violations += 1;
        }
    }
    TailReport {
        constant,
        worst_sum_ratio: worst_sum,
        worst_geometric_ratio: worst_geo,
        violations,
        checked,
    }
}

/// Assemble `C = L_F (1+β/ν)² / (2 C_H)` for a trace and check its tail bounds.
pub fn check_trace_tail(
    records: &[StepRecord],
    lipschitz: f64,
    beta: f64,
    nu: f64,
) -> Option<TailReport> {
    let c_h = crate::linearization::estimate_ch(records)?;
    if c_h <= 0.0 {
        return None;
    }
    let constant = tail_constant(lipschitz, beta, nu, c_h);
    let squared: Vec<f64> = records.iter().map(|r| r.step_norm * r.step_norm).collect();
    Some(check_tail_bounds(&squared, constant))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_lshape_initial, MarkedSet};
    use crate::model::{smooth_problem, DiffusionLaw, ManufacturedProblem};

    #[test]
    fn band_cholesky_matches_dense() {
        // tridiagonal SPD system with known solution
        let n = 20;
        let mut a = BandMatrix::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 4.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| {
                4.0 * x[i]
                    - if i > 0 { x[i - 1] } else { 0.0 }
                    - if i + 1 < n { x[i + 1] } else { 0.0 }
            })
            .collect();
        let y = a.factorize().unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_law_converges_in_one_step() {
        let prob = ManufacturedProblem::smooth_with_law(DiffusionLaw::Constant(1.0));
        let fp = FeProblem::new(make_lshape_initial(), &prob);
        let sol = oracle_solve(&fp).unwrap();
        assert_eq!(sol.newton_iterations, 1);
        assert!(sol.residual_norm <= ORACLE_RESIDUAL_TOL);
    }

    #[test]
    fn oracle_residual_and_determinism() {
        let fp = FeProblem::new(make_lshape_initial(), &smooth_problem());
        let a = oracle_solve(&fp).unwrap();
        let b = oracle_solve(&fp).unwrap();
        assert!(a.residual_norm <= ORACLE_RESIDUAL_TOL);
        assert_eq!(a.u, b.u);
        // cross-check against the CSR residual assembly
        let r = fp.residual_vector(&a.u);
        assert!(r.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-12);
    }

    #[test]
    fn oracle_refuses_large_meshes() {
        let mut m = make_lshape_initial();
        while FeSpace::new(m.clone()).n_dofs() <= ORACLE_MAX_DOFS {
            m = m.refine(&MarkedSet::all(m.n_triangles())).unwrap().mesh;
        }
        let fp = FeProblem::new(m, &smooth_problem());
        assert!(oracle_solve(&fp).is_err());
    }

    #[test]
    fn sandwich_at_solution_is_zero() {
        let fp = FeProblem::new(make_lshape_initial(), &smooth_problem());
        let sol = oracle_solve(&fp).unwrap();
        let s = check_energy_sandwich(&fp, &sol.u, &sol);
        assert_eq!((s.lower, s.upper), (0.0, 0.0));
        assert!(s.energy_gap.abs() < 1e-15);
    }

    #[test]
    fn geometric_trace_is_tight() {
        let c: f64 = 5.0;
        let rho: f64 = 0.8;
        let s: Vec<f64> = (1..=200).map(|n| rho.powi(n)).collect();
        let rep = check_tail_bounds(&s, c);
        assert_eq!(rep.violations, 0);
        // Σ_{j>k} ρ^j = ρ^{k+1}/(1-ρ) = 4ρ^k
        assert!((rep.worst_sum_ratio - 0.8).abs() < 1e-12);
    }

    #[test]
    fn increasing_trace_is_flagged() {
        let s = vec![1.0, 0.5, 0.25, 4.0, 0.1, 0.05, 0.02, 0.01];
        let rep = check_tail_bounds(&s, 2.0);
        assert!(rep.violations > 0);
    }

    #[test]
    fn rcm_is_a_permutation_with_small_band() {
        let m = make_lshape_initial();
        let m = m.refine(&MarkedSet::all(m.n_triangles())).unwrap().mesh;
        let space = FeSpace::new(m);
        let mut perm = rcm_order(&space);
        assert_eq!(perm.len(), space.n_dofs());
        perm.sort_unstable();
        assert!(perm.iter().enumerate().all(|(i, &p)| i == p));
    }
}
