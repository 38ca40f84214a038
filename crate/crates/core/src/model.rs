//! The quasi-linear diffusion model `F(u) = -div(μ(|∇u|²)∇u) - g` with
//! homogeneous Dirichlet data, its potential `H`, and the two manufactured
//! benchmark problems on the L-shaped domain.

use std::f64::consts::PI;

use crate::fem::{dot, DiscreteFunction, FeSpace, Vec2};
use crate::mesh::{Point, Triangulation};
use crate::par;
use crate::quadrature::{self, QuadRule};

/// Scalar diffusion coefficient `t ↦ μ(t)`, evaluated at `t = |∇u|²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiffusionLaw {
    /// `μ ≡ c`; the problem is linear.
    Constant(f64),
    /// `μ(t) = 1/(t+1) + 1/2`.
    Reciprocal,
    /// `μ(t) = 1 + exp(-t)`.
    Exponential,
}

impl DiffusionLaw {
    #[inline]
    pub fn mu(&self, t: f64) -> f64 {
        match *self {
            Self::Constant(c) => c,
            Self::Reciprocal => 1.0 / (t + 1.0) + 0.5,
            Self::Exponential => 1.0 + (-t).exp(),
        }
    }

    #[inline]
    pub fn mu_prime(&self, t: f64) -> f64 {
        match *self {
            Self::Constant(_) => 0.0,
            Self::Reciprocal => -1.0 / ((t + 1.0) * (t + 1.0)),
            Self::Exponential => -(-t).exp(),
        }
    }

    /// `ψ(s) = ½∫₀ˢ μ(t) dt`.
    pub fn psi(&self, s: f64) -> f64 {
        match *self {
            Self::Constant(c) => 0.5 * c * s,
            Self::Reciprocal => 0.5 * s.ln_1p() + 0.25 * s,
            Self::Exponential => 0.5 * (s - (-s).exp_m1()),
        }
    }

    /// `ψ(s + ds) - ψ(s)` without cancellation for small `ds`.
    pub fn psi_increment(&self, s: f64, ds: f64) -> f64 {
        match *self {
            Self::Constant(c) => 0.5 * c * ds,
            Self::Reciprocal => 0.5 * (ds / (1.0 + s)).ln_1p() + 0.25 * ds,
            Self::Exponential => 0.5 * (ds - (-s).exp() * (-ds).exp_m1()),
        }
    }

    /// Flux `μ(|g|²) g` for a gradient `g`.
    #[inline]
    pub fn flux(&self, g: Vec2) -> Vec2 {
        let m = self.mu(dot(g, g));
        [m * g[0], m * g[1]]
    }

    /// Constants `(m_μ, M_μ)` with
    /// `m_μ(t-s) ≤ μ(t²)t - μ(s²)s ≤ M_μ(t-s)` for `t ≥ s ≥ 0`.
    ///
    /// They are the extrema of `d/dt[μ(t²)t] = μ(s) + 2sμ'(s)`, `s = t²`.
    pub fn monotonicity_bounds(&self) -> (f64, f64) {
        match *self {
            Self::Constant(c) => (c, c),
            // (1-s)/(1+s)² + 1/2, minimal at s = 3
            Self::Reciprocal => (3.0 / 8.0, 3.0 / 2.0),
            // 1 + (1-2s)e^{-s}, minimal at s = 3/2
            Self::Exponential => (1.0 - 2.0 * (-1.5f64).exp(), 2.0),
        }
    }

    /// Strong monotonicity constant `ν = m_μ` of `F`.
    pub fn nu(&self) -> f64 {
        self.monotonicity_bounds().0
    }

    /// Lipschitz constant `L_F = 3 M_μ` of `F`.
    pub fn lipschitz(&self) -> f64 {
        3.0 * self.monotonicity_bounds().1
    }

    /// `inf_t μ(t)`; all laws here are non-increasing.
    pub fn inf_mu(&self) -> f64 {
        match *self {
            Self::Constant(c) => c,
            Self::Reciprocal => 0.5,
            Self::Exponential => 1.0,
        }
    }

    /// `sup_t μ(t) = μ(0)`.
    pub fn sup_mu(&self) -> f64 {
        self.mu(0.0)
    }
}

/// Closed-form exact solutions on the L-shaped domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExactSolution {
    /// `u(x,y) = sin(πx) sin(πy)`.
    SinSin,
    /// `u = r^{2/3} sin(2φ/3) (1-x²)(1-y²) cos φ`, polar angle `φ ∈ [0, 3π/2]`.
    CornerSingularity,
    /// `u ≡ 0` with zero load.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedProblem {
    pub name: &'static str,
    pub law: DiffusionLaw,
    pub solution: ExactSolution,
}

pub fn smooth_problem() -> ManufacturedProblem {
    ManufacturedProblem {
        name: "smooth",
        law: DiffusionLaw::Reciprocal,
        solution: ExactSolution::SinSin,
    }
}

pub fn singular_problem() -> ManufacturedProblem {
    ManufacturedProblem {
        name: "singular",
        law: DiffusionLaw::Exponential,
        solution: ExactSolution::CornerSingularity,
    }
}

const ALPHA: f64 = 2.0 / 3.0;

fn polar_angle(p: Point) -> f64 {
    let phi = p[1].atan2(p[0]);
    if phi < 0.0 {
        phi + 2.0 * PI
    } else {
        phi
    }
}

impl ManufacturedProblem {
    pub fn smooth_with_law(law: DiffusionLaw) -> Self {
        Self {
            law,
            ..smooth_problem()
        }
    }

    /// Zero data: the discrete solution is exactly `u ≡ 0` on every mesh.
    pub fn trivial(law: DiffusionLaw) -> Self {
        Self {
            name: "zero",
            law,
            solution: ExactSolution::Zero,
        }
    }

    pub fn singular_with_law(law: DiffusionLaw) -> Self {
        Self {
            law,
            ..singular_problem()
        }
    }

    pub fn exact_u(&self, p: Point) -> f64 {
        let [x, y] = p;
        match self.solution {
            ExactSolution::SinSin => (PI * x).sin() * (PI * y).sin(),
            ExactSolution::Zero => 0.0,
            ExactSolution::CornerSingularity => {
                let r = x.hypot(y);
                if r == 0.0 {
                    return 0.0;
                }
                let phi = polar_angle(p);
                r.powf(ALPHA) * (ALPHA * phi).sin() * (1.0 - x * x) * (1.0 - y * y) * (x / r)
            }
        }
    }

    /// `∇u⋆(p)`, or `None` at the re-entrant corner where it is unbounded.
    pub fn exact_grad(&self, p: Point) -> Option<Vec2> {
        let [x, y] = p;
        match self.solution {
            ExactSolution::SinSin => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                Some([PI * cx * sy, PI * sx * cy])
            }
            ExactSolution::Zero => Some([0.0, 0.0]),
            ExactSolution::CornerSingularity => {
                let r = x.hypot(y);
                if r == 0.0 {
                    return None;
                }
                let phi = polar_angle(p);
                // u = S·P with S = r^α sin(αφ), P = (1-x²)(1-y²)·x/r
                let s = r.powf(ALPHA) * (ALPHA * phi).sin();
                let ds_scale = ALPHA * r.powf(ALPHA - 1.0);
                let ds = [
                    ds_scale * ((ALPHA - 1.0) * phi).sin(),
                    ds_scale * ((ALPHA - 1.0) * phi).cos(),
                ];
                let (qx, qy) = (1.0 - x * x, 1.0 - y * y);
                let c = x / r;
                let r3 = r * r * r;
                let pp = qx * qy * c;
                let dp = [
                    -2.0 * x * qy * c + qx * qy * y * y / r3,
                    -2.0 * y * qx * c - qx * qy * x * y / r3,
                ];
                Some([s * dp[0] + pp * ds[0], s * dp[1] + pp * ds[1]])
            }
        }
    }

    /// Exact flux `μ(|∇u⋆|²)∇u⋆`.
    pub fn exact_flux(&self, p: Point) -> Option<Vec2> {
        self.exact_grad(p).map(|g| self.law.flux(g))
    }

    /// Pointwise load `g = -div(μ(|∇u⋆|²)∇u⋆)`.
    ///
    /// Analytic for the smooth solution. For the corner singularity it is the
    /// central-difference divergence of the exact flux with step `1e-6·h`,
    /// where `h` is the local mesh size.
    pub fn load_density(&self, p: Point, h: f64) -> f64 {
        let [x, y] = p;
        match self.solution {
            ExactSolution::SinSin => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                let g = [PI * cx * sy, PI * sx * cy];
                let pi2 = PI * PI;
                let hess = [
                    [-pi2 * sx * sy, pi2 * cx * cy],
                    [pi2 * cx * cy, -pi2 * sx * sy],
                ];
                let lap = hess[0][0] + hess[1][1];
                let s = dot(g, g);
                let hg = [
                    hess[0][0] * g[0] + hess[0][1] * g[1],
                    hess[1][0] * g[0] + hess[1][1] * g[1],
                ];
                -self.law.mu(s) * lap - 2.0 * self.law.mu_prime(s) * dot(g, hg)
            }
            ExactSolution::CornerSingularity => {
                let step = 1e-6 * h;
                let f = |q: Point| {
                    self.exact_flux(q)
                        .expect("finite-difference stencil avoids the corner")
                };
                let dfx = f([x + step, y])[0] - f([x - step, y])[0];
                let dfy = f([x, y + step])[1] - f([x, y - step])[1];
                -(dfx + dfy) / (2.0 * step)
            }
            ExactSolution::Zero => 0.0,
        }
    }
}

/// A manufactured problem restricted to one mesh: the P1 space together with
/// the element load data that do not depend on the iterate.
///
/// The load is paired with test functions through the weak identity
/// `⟨g, v⟩ = ∫ μ(|∇u⋆|²)∇u⋆·∇v`, so only the element integrals of the exact
/// flux are needed. The pointwise `g` enters only the estimator's element
/// residual `h_T² ‖g‖²_T`, which is cached here as well.
#[derive(Clone, Debug)]
pub struct FeProblem {
    space: FeSpace,
    problem: ManufacturedProblem,
    load_flux: Vec<Vec2>,
    element_residual: Vec<f64>,
}

fn quad5() -> QuadRule {
    quadrature::rule(5).expect("degree-5 rule exists")
}

impl FeProblem {
    pub fn new(mesh: Triangulation, problem: &ManufacturedProblem) -> Self {
        Self::from_space(FeSpace::new(mesh), problem)
    }

    pub fn from_space(space: FeSpace, problem: &ManufacturedProblem) -> Self {
        let rule = quad5();
        let data = par::map_indexed(space.n_elements(), |t| {
            let corners = space.mesh().corners(t);
            let h = space.diameter(t);
            let mut flux = [0.0; 2];
            let mut g2 = 0.0;
            for (x, w) in rule.nodes_on(&corners) {
                let f = problem
                    .exact_flux(x)
                    .expect("quadrature nodes are interior");
                flux[0] += w * f[0];
                flux[1] += w * f[1];
                let g = problem.load_density(x, h);
                g2 += w * g * g;
            }
            (flux, h * h * g2)
        });
        let (load_flux, element_residual) = data.into_iter().unzip();
        Self {
            space,
            problem: *problem,
            load_flux,
            element_residual,
        }
    }

    pub fn space(&self) -> &FeSpace {
        &self.space
    }

    pub fn mesh(&self) -> &Triangulation {
        self.space.mesh()
    }

    pub fn problem(&self) -> &ManufacturedProblem {
        &self.problem
    }

    pub fn law(&self) -> &DiffusionLaw {
        &self.problem.law
    }

    pub fn into_space(self) -> FeSpace {
        self.space
    }

    /// `∫_T μ(|∇u⋆|²)∇u⋆ dx`.
    pub fn load_flux(&self, t: usize) -> Vec2 {
        self.load_flux[t]
    }

    /// `h_T² ‖g‖²_{L²(T)}`.
    pub fn element_residual(&self, t: usize) -> f64 {
        self.element_residual[t]
    }

    /// `(⟨g, φ_i⟩)_i` over interior hats.
    pub fn load_vector(&self) -> Vec<f64> {
        self.space.assemble_vector(|t| {
            let g = self.space.hat_grads(t);
            let l = self.load_flux[t];
            [dot(l, g[0]), dot(l, g[1]), dot(l, g[2])]
        })
    }

    /// `⟨g, v⟩`.
    pub fn load_pairing(&self, v: &DiscreteFunction) -> f64 {
        par::sum_indexed(self.space.n_elements(), |t| {
            dot(self.load_flux[t], self.space.grad(v.values(), t))
        })
    }

    /// `(⟨F(u), φ_i⟩)_i` over interior hats.
    pub fn residual_vector(&self, u: &DiscreteFunction) -> Vec<f64> {
        let law = self.problem.law;
        self.space.assemble_vector(|t| {
            let g = self.space.hat_grads(t);
            let a = self.space.area(t);
            let flux = law.flux(self.space.grad(u.values(), t));
            let l = self.load_flux[t];
            let mut out = [0.0; 3];
            for i in 0..3 {
                out[i] = a * dot(flux, g[i]) - dot(l, g[i]);
            }
            out
        })
    }

    /// `⟨F(u), v⟩ = ∫ μ(|∇u|²)∇u·∇v - ⟨g, v⟩`.
    pub fn residual_apply(
        &self,
        u: &DiscreteFunction,
        v: &DiscreteFunction,
    ) -> Result<f64, crate::Error> {
        if !u.matches(&self.space) || !v.matches(&self.space) {
            return Err(crate::Error::MeshMismatch);
        }
        let law = self.problem.law;
        Ok(par::sum_indexed(self.space.n_elements(), |t| {
            let gv = self.space.grad(v.values(), t);
            let flux = law.flux(self.space.grad(u.values(), t));
            self.space.area(t) * dot(flux, gv) - dot(self.load_flux[t], gv)
        }))
    }

    /// `H(u) = ∫ ψ(|∇u|²) - ⟨g, u⟩`.
    pub fn energy(&self, u: &DiscreteFunction) -> f64 {
        let law = self.problem.law;
        par::sum_indexed(self.space.n_elements(), |t| {
            let g = self.space.grad(u.values(), t);
            self.space.area(t) * law.psi(dot(g, g)) - dot(self.load_flux[t], g)
        })
    }

    /// `H(old) - H(new)`, evaluated elementwise from the increment so that it
    /// stays accurate when the two iterates are close.
    pub fn energy_decrease(&self, old: &DiscreteFunction, new: &DiscreteFunction) -> f64 {
        let law = self.problem.law;
        par::sum_indexed(self.space.n_elements(), |t| {
            let gn = self.space.grad(new.values(), t);
            // gradient of the nodal difference, not the difference of two
            // rounded gradients
            let tri = self.space.mesh().triangles()[t];
            let hat = self.space.hat_grads(t);
            let mut d = [0.0; 2];
            for (k, &v) in tri.iter().enumerate() {
                let dv = old.values()[v] - new.values()[v];
                d[0] += dv * hat[k][0];
                d[1] += dv * hat[k][1];
            }
            let go = [gn[0] + d[0], gn[1] + d[1]];
            // |go|² - |gn|² = d·(go + gn)
            let ds = dot(d, [go[0] + gn[0], go[1] + gn[1]]);
            self.space.area(t) * law.psi_increment(dot(gn, gn), ds) - dot(self.load_flux[t], d)
        })
    }

    /// `‖∇(u⋆ - u)‖_{L²(Ω)}` with the degree-5 rule on every element.
    pub fn h1_error(&self, u: &DiscreteFunction) -> f64 {
        let rule = quad5();
        par::sum_indexed(self.space.n_elements(), |t| {
            let gu = self.space.grad(u.values(), t);
            let corners = self.space.mesh().corners(t);
            rule.integrate_on(&corners, |x| {
                let g = self
                    .problem
                    .exact_grad(x)
                    .expect("quadrature nodes are interior");
                let d = [g[0] - gu[0], g[1] - gu[1]];
                dot(d, d)
            })
        })
        .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_lshape_initial, MarkedSet};

    fn laws() -> [DiffusionLaw; 2] {
        [DiffusionLaw::Reciprocal, DiffusionLaw::Exponential]
    }

    #[test]
    fn smooth_law_values() {
        let law = smooth_problem().law;
        assert_eq!(law.mu(0.0), 1.5);
        assert!((law.mu(1e12) - 0.5).abs() < 1e-11);
        assert_eq!(law.monotonicity_bounds(), (0.375, 1.5));
        assert_eq!(law.nu(), 0.375);
        assert_eq!(law.lipschitz(), 4.5);
    }

    #[test]
    fn singular_law_values() {
        let (m, big_m) = singular_problem().law.monotonicity_bounds();
        assert!((m - 0.55373).abs() < 1e-5);
        assert_eq!(big_m, 2.0);
    }

    #[test]
    fn monotonicity_on_grid() {
        for law in laws() {
            let (m, big_m) = law.monotonicity_bounds();
            let f = |t: f64| law.mu(t * t) * t;
            for i in 0..100 {
                for j in 0..100 {
                    let (a, b) = (i as f64 * 0.05, j as f64 * 0.05);
                    let (t, s) = if a >= b { (a, b) } else { (b, a) };
                    let diff = f(t) - f(s);
                    assert!(diff >= m * (t - s) - 1e-12, "{law:?} t={t} s={s}");
                    assert!(diff <= big_m * (t - s) + 1e-12, "{law:?} t={t} s={s}");
                }
            }
        }
    }

    #[test]
    fn psi_derivative_is_half_mu() {
        for law in laws() {
            assert_eq!(law.psi(0.0), 0.0);
            for i in 1..50 {
                let s = 0.2 * i as f64;
                let h = 1e-5;
                let fd = (law.psi(s + h) - law.psi(s - h)) / (2.0 * h);
                assert!((fd - 0.5 * law.mu(s)).abs() < 1e-8);
                let inc = law.psi_increment(s, 0.3);
                assert!((inc - (law.psi(s + 0.3) - law.psi(s))).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mu_prime_matches_fd() {
        for law in laws() {
            for i in 0..40 {
                let t = 0.25 * i as f64 + 0.1;
                let fd = (law.mu(t + 1e-6) - law.mu(t - 1e-6)) / 2e-6;
                assert!((fd - law.mu_prime(t)).abs() < 1e-8);
            }
        }
    }

    fn boundary_samples() -> Vec<Point> {
        let mut pts = Vec::new();
        for i in 0..=40 {
            let s = i as f64 / 40.0;
            pts.push([-1.0 + 2.0 * s, 1.0]);
            pts.push([-1.0, -1.0 + 2.0 * s]);
            pts.push([-s, -1.0]);
            pts.push([0.0, -s]);
            pts.push([s, 0.0]);
            pts.push([1.0, s]);
        }
        pts
    }

    #[test]
    fn exact_solutions_vanish_on_boundary() {
        for prob in [smooth_problem(), singular_problem()] {
            for p in boundary_samples() {
                assert!(prob.exact_u(p).abs() < 1e-12, "{} at {p:?}", prob.name);
            }
        }
    }

    fn random_interior(n: usize) -> Vec<Point> {
        // Deterministic low-discrepancy samples in the L-shape, away from the corner.
        let mut pts = Vec::with_capacity(n);
        let mut k = 0u32;
        while pts.len() < n {
            k += 1;
            let x = -1.0 + 2.0 * ((k as f64 * 0.618_033_988_749_895) % 1.0);
            let y = -1.0 + 2.0 * ((k as f64 * 0.754_877_666_246_692_7) % 1.0);
            let inside = x.abs() < 0.999 && y.abs() < 0.999 && !(x > -1e-3 && y < 1e-3);
            if inside && x.hypot(y) > 1e-2 {
                pts.push([x, y]);
            }
        }
        pts
    }

    #[test]
    fn exact_grad_matches_fd() {
        for prob in [smooth_problem(), singular_problem()] {
            let h = 1e-6;
            let mut worst = 0.0f64;
            for p in random_interior(100) {
                let g = prob.exact_grad(p).unwrap();
                let fx =
                    (prob.exact_u([p[0] + h, p[1]]) - prob.exact_u([p[0] - h, p[1]])) / (2.0 * h);
                let fy =
                    (prob.exact_u([p[0], p[1] + h]) - prob.exact_u([p[0], p[1] - h])) / (2.0 * h);
                let scale = g[0].hypot(g[1]).max(1.0);
                worst = worst
                    .max((fx - g[0]).abs() / scale)
                    .max((fy - g[1]).abs() / scale);
            }
            assert!(worst < 1e-6, "{}: {worst}", prob.name);
        }
    }

    #[test]
    fn corner_is_rejected() {
        assert!(singular_problem().exact_grad([0.0, 0.0]).is_none());
        assert_eq!(singular_problem().exact_u([0.0, 0.0]), 0.0);
    }

    #[test]
    fn smooth_load_matches_flux_divergence() {
        let prob = smooth_problem();
        let h = 1e-5;
        for p in random_interior(30) {
            let f = |q: Point| prob.exact_flux(q).unwrap();
            let div = (f([p[0] + h, p[1]])[0] - f([p[0] - h, p[1]])[0] + f([p[0], p[1] + h])[1]
                - f([p[0], p[1] - h])[1])
                / (2.0 * h);
            assert!((prob.load_density(p, 0.1) + div).abs() < 1e-6);
        }
    }

    #[test]
    fn residual_of_zero_test_function() {
        let fp = FeProblem::new(make_lshape_initial(), &smooth_problem());
        let u = DiscreteFunction::interpolate(fp.space(), |p| p[0] * p[1]);
        let v = DiscreteFunction::zeros(fp.space());
        assert_eq!(fp.residual_apply(&u, &v).unwrap(), 0.0);
    }

    #[test]
    fn residual_mesh_mismatch() {
        let m = make_lshape_initial();
        let fp = FeProblem::new(m.clone(), &smooth_problem());
        let fine = FeSpace::new(m.refine(&MarkedSet::new(vec![0])).unwrap().mesh);
        let u = DiscreteFunction::zeros(fp.space());
        let v = DiscreteFunction::zeros(&fine);
        assert!(fp.residual_apply(&u, &v).is_err());
    }

    #[test]
    fn residual_against_dense_quadrature() {
        // Independent oracle: integrate the exact flux against a hat function
        // with a composite midpoint rule on 4^6 sub-triangles per element.
        let prob = smooth_problem();
        let fp = FeProblem::new(make_lshape_initial(), &prob);
        let space = fp.space();
        let vertex = space.dofs().vertex(40);
        let v = DiscreteFunction::from_values(
            space,
            (0..space.mesh().n_vertices())
                .map(|i| if i == vertex { 1.0 } else { 0.0 })
                .collect(),
        );
        let zero = DiscreteFunction::zeros(space);
        let got = fp.residual_apply(&zero, &v).unwrap();

        fn subdivide(tri: [Point; 3], depth: u32, out: &mut Vec<[Point; 3]>) {
            if depth == 0 {
                out.push(tri);
                return;
            }
            let mid = |a: Point, b: Point| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let [a, b, c] = tri;
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            for t in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
                subdivide(t, depth - 1, out);
            }
        }
        let mut want = 0.0;
        for t in 0..space.n_elements() {
            if !space.mesh().triangles()[t].contains(&vertex) {
                continue;
            }
            let gv = space.grad(v.values(), t);
            let mut pieces = Vec::new();
            subdivide(space.mesh().corners(t), 6, &mut pieces);
            for [a, b, c] in pieces {
                let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
                let f = prob.exact_flux(centroid).unwrap();
                want -= crate::mesh::signed_area(a, b, c) * dot(f, gv);
            }
        }
        assert!(got.abs() > 1e-3);
        assert!((got - want).abs() < 1e-6 * want.abs(), "{got} vs {want}");
    }

    #[test]
    fn energy_of_zero_is_zero() {
        for prob in [smooth_problem(), singular_problem()] {
            let fp = FeProblem::new(make_lshape_initial(), &prob);
            assert_eq!(fp.energy(&DiscreteFunction::zeros(fp.space())), 0.0);
        }
    }

    #[test]
    fn energy_decrease_matches_difference() {
        for prob in [smooth_problem(), singular_problem()] {
            let fp = FeProblem::new(make_lshape_initial(), &prob);
            let a = DiscreteFunction::interpolate(fp.space(), |p| prob.exact_u(p));
            let b =
                DiscreteFunction::interpolate(fp.space(), |p| 0.5 * prob.exact_u(p) + p[0] * 0.1);
            let direct = fp.energy(&a) - fp.energy(&b);
            assert!((fp.energy_decrease(&a, &b) - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn energy_directional_derivative() {
        // (H(u + t v) - H(u)) / t -> <F(u), v> with first-order error in t
        for prob in [smooth_problem(), singular_problem()] {
            let fp = FeProblem::new(make_lshape_initial(), &prob);
            let u = DiscreteFunction::interpolate(fp.space(), |p| (2.0 * p[0]).sin() + p[1] * p[1]);
            let v = DiscreteFunction::interpolate(fp.space(), |p| (3.0 * p[1]).cos() * p[0]);
            let exact = fp.residual_apply(&u, &v).unwrap();
            let errs: Vec<f64> = [1e-3, 1e-4, 1e-5]
                .iter()
                .map(|&t| {
                    let fd = -fp.energy_decrease(&u, &u.axpy(t, &v)) / t;
                    (fd - exact).abs()
                })
                .collect();
            for w in errs.windows(2) {
                let ratio = w[0] / w[1];
                assert!((5.0..20.0).contains(&ratio), "{}: {errs:?}", prob.name);
            }
        }
    }

    #[test]
    fn strong_monotonicity_on_samples() {
        for prob in [smooth_problem(), singular_problem()] {
            let fp = FeProblem::new(make_lshape_initial(), &prob);
            let nu = prob.law.nu();
            for k in 1..10 {
                let s = k as f64;
                let u = DiscreteFunction::interpolate(fp.space(), |p| {
                    (s * p[0]).sin() * (p[1] + 0.3 * s)
                });
                let v = DiscreteFunction::interpolate(fp.space(), |p| {
                    s * p[0] * p[1] - (p[1] * s).cos()
                });
                let d = u.sub(&v);
                let lhs = fp.residual_apply(&u, &d).unwrap() - fp.residual_apply(&v, &d).unwrap();
                let rhs = nu * fp.space().x_norm(&d).powi(2);
                assert!(lhs >= rhs, "{}: {lhs} < {rhs}", prob.name);
            }
        }
    }

    #[test]
    fn interpolation_error_positive_and_first_order() {
        let prob = smooth_problem();
        let mut mesh = make_lshape_initial();
        let mut errs = Vec::new();
        for _ in 0..4 {
            let fp = FeProblem::new(mesh.clone(), &prob);
            let u = DiscreteFunction::interpolate(fp.space(), |p| prob.exact_u(p));
            errs.push(fp.h1_error(&u));
            mesh = mesh
                .refine(&MarkedSet::all(mesh.n_triangles()))
                .unwrap()
                .mesh;
            mesh = mesh
                .refine(&MarkedSet::all(mesh.n_triangles()))
                .unwrap()
                .mesh;
        }
        assert!(errs.iter().all(|&e| e > 0.0));
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.8..2.2).contains(&ratio), "{errs:?}");
        }
    }

    #[test]
    fn norm_of_exact_solution() {
        // ‖∇ sin(πx) sin(πy)‖² over the L-shape = 3 · π²/2 (each unit square
        // contributes π²/2 by symmetry of sin² and cos²).
        let prob = smooth_problem();
        let fp = FeProblem::new(make_lshape_initial(), &prob);
        let e = fp.h1_error(&DiscreteFunction::zeros(fp.space()));
        let want = (1.5 * PI * PI).sqrt();
        assert!((e - want).abs() < 1e-3, "{e} vs {want}");
    }
}
