//! The verification suite: kernel checks and checks of the iteration theory
//! against the reference solver, each reported as one [`CheckReport`] line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::estimator::{estimate, mark};
use crate::fem::{self, scheme_constants, DiscreteFunction, FeSpace};
use crate::linearization::{estimate_ch, iterate_fixed, SchemeSpec, StepRecord};
use crate::mesh::{make_lshape_initial, MarkedSet, Triangulation};
use crate::model::{singular_problem, smooth_problem, FeProblem, ManufacturedProblem};
use crate::oracle::{
    check_energy_sandwich, check_error_increment_bound, check_trace_tail, oracle_solve,
    CheckReport, OracleSolution, SANDWICH_REL_SLACK,
};
use crate::quadrature;
use crate::Error;

/// Zarantonello damping used for each model problem in the experiments.
pub fn zarantonello_delta(prob: &ManufacturedProblem) -> f64 {
    if prob.name == "singular" {
        0.5
    } else {
        0.85
    }
}

pub fn schemes_for(prob: &ManufacturedProblem) -> [SchemeSpec; 3] {
    [
        SchemeSpec::Zarantonello {
            delta: zarantonello_delta(prob),
        },
        SchemeSpec::Kacanov,
        SchemeSpec::Newton { delta: 1.0 },
    ]
}

/// The initial mesh refined uniformly `sweeps` times.
pub fn uniform_mesh(sweeps: usize) -> Triangulation {
    let mut mesh = make_lshape_initial();
    for _ in 0..sweeps {
        mesh = mesh
            .refine(&MarkedSet::all(mesh.n_triangles()))
            .expect("uniform refinement of a valid mesh")
            .mesh;
    }
    mesh
}

/// Dörfler-refine the initial mesh for `prob` using the reference solution,
/// stopping before the space exceeds `max_dofs`.
pub fn adaptive_mesh(prob: &ManufacturedProblem, max_dofs: usize) -> Result<Triangulation, Error> {
    let mut fp = FeProblem::new(make_lshape_initial(), prob);
    loop {
        let sol = oracle_solve(&fp)?;
        let marked = mark(&estimate(&fp, &sol.u), 0.5)?;
        let next = fp.mesh().refine(&marked)?.mesh;
        if FeSpace::new(next.clone()).n_dofs() > max_dofs {
            return Ok(fp.mesh().clone());
        }
        fp = FeProblem::new(next, prob);
    }
}

fn fail(name: &str, err: Error) -> CheckReport {
    CheckReport::new(name, format!("error: {err}"), f64::NAN, 1)
}

/// Quadrature exactness on the reference triangle: largest relative error
/// over all monomials `x^a y^b`, `a + b ≤ degree`.
pub fn quadrature_checks() -> Vec<CheckReport> {
    let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    [1u32, 2, 5]
        .iter()
        .map(|&degree| {
            let rule = quadrature::rule(degree).expect("supported degree");
            let mut worst = 0.0f64;
            for a in 0..=degree {
                for b in 0..=degree - a {
                    let exact = fact(a) * fact(b) / fact(a + b + 2);
                    let q =
                        rule.integrate_on(&corners, |p| p[0].powi(a as i32) * p[1].powi(b as i32));
                    worst = worst.max((q - exact).abs() / exact);
                }
            }
            CheckReport::new(
                format!("quadrature exact to degree {degree}"),
                "<= 1e-13",
                worst,
                usize::from(worst > 1e-13),
            )
        })
        .collect()
}

/// Ratios of consecutive first-order errors when `t` shrinks tenfold; first
/// order consistency shows ratios near 10.
fn first_order_ratios(mut err: impl FnMut(f64) -> f64) -> (f64, usize) {
    let errs: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&t| err(t)).collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let bad = ratios.iter().filter(|r| !(5.0..=20.0).contains(*r)).count();
    // report the ratio farthest from 10 on a log scale
    let worst = ratios
        .iter()
        .copied()
        .max_by(|a, b| (a / 10.0).ln().abs().total_cmp(&(b / 10.0).ln().abs()))
        .unwrap_or(f64::NAN);
    (worst, bad)
}

fn smooth_field(space: &FeSpace, k: f64) -> DiscreteFunction {
    DiscreteFunction::interpolate(space, |p| {
        (k * p[0]).sin() * (1.0 + p[1]) + 0.3 * p[0] * p[1]
    })
}

/// `(H(u+tv) - H(u))/t → ⟨F(u), v⟩` and
/// `(⟨F(u+tw), v⟩ - ⟨F(u), v⟩)/t → F'(u)(w, v)` with first-order error.
pub fn derivative_checks() -> Vec<CheckReport> {
    let mut out = Vec::new();
    for prob in [smooth_problem(), singular_problem()] {
        let fp = FeProblem::new(uniform_mesh(1), &prob);
        let space = fp.space();
        let u = smooth_field(space, 2.0);
        let v = smooth_field(space, 5.0);
        let w = DiscreteFunction::interpolate(space, |p| p[0] * p[0] - 0.5 * p[1]);

        let dh = fp.residual_apply(&u, &v).expect("same mesh");
        let (ratio, bad) = first_order_ratios(|t| {
            let ut = u.axpy(t, &v);
            (fp.energy_decrease(&ut, &u) / t - dh).abs()
        });
        out.push(CheckReport::new(
            format!("FD gradient of H vs <F(u),v> ({})", prob.name),
            "error ratio in [5, 20]",
            ratio,
            bad,
        ));

        let jac = fem::assemble(&SchemeSpec::Newton { delta: 1.0 }, &fp, &u).matrix;
        let exact = jac.form(&w.interior(space), &v.interior(space));
        let (ratio, bad) = first_order_ratios(|t| {
            let fd = (fp.residual_apply(&u.axpy(t, &w), &v).expect("same mesh") - dh) / t;
            (fd - exact).abs()
        });
        out.push(CheckReport::new(
            format!("FD Jacobian of the Newton form ({})", prob.name),
            "error ratio in [5, 20]",
            ratio,
            bad,
        ));
    }
    out
}

/// Random NVB refinement: conformity, minimal angle, area conservation.
pub fn mesh_checks(sweeps: usize, seed: u64) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mesh = make_lshape_initial();
    let area0 = mesh.total_area();
    let mut conformity_failures = 0;
    let mut min_angle = mesh.min_angle();
    let mut area_err = 0.0f64;
    for _ in 0..sweeps {
        let n = mesh.n_triangles();
        let mut marked: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.15)).collect();
        if marked.is_empty() {
            marked.push(rng.gen_range(0..n));
        }
        mesh = match mesh.refine(&MarkedSet::new(marked)) {
            Ok(r) => r.mesh,
            Err(e) => return vec![fail("NVB refinement", e.into())],
        };
        if mesh.check().is_err() {
            conformity_failures += 1;
        }
        min_angle = min_angle.min(mesh.min_angle());
        area_err = area_err.max((mesh.total_area() - area0).abs() / area0);
    }
    vec![
        CheckReport::new(
            format!(
                "NVB conformity over {sweeps} sweeps ({} elements)",
                mesh.n_triangles()
            ),
            "0 failures",
            conformity_failures as f64,
            conformity_failures,
        ),
        CheckReport::new(
            "NVB minimal angle",
            ">= 0.3 rad",
            min_angle,
            usize::from(min_angle < 0.3),
        ),
        CheckReport::new(
            "NVB area conservation (relative)",
            "<= 1e-12",
            area_err,
            usize::from(area_err > 1e-12),
        ),
    ]
}

/// Numerical kernel properties: quadrature, derivatives, refinement.
pub fn kernel_checks(sweeps: usize) -> Vec<CheckReport> {
    let mut out = quadrature_checks();
    out.extend(derivative_checks());
    out.extend(mesh_checks(sweeps, 0x5eed));
    out
}

struct FixedMeshCase {
    prob: ManufacturedProblem,
    fp: FeProblem,
    oracle: OracleSolution,
}

fn fixed_case(prob: ManufacturedProblem, mesh: Triangulation) -> Result<FixedMeshCase, Error> {
    let fp = FeProblem::new(mesh, &prob);
    let oracle = oracle_solve(&fp)?;
    Ok(FixedMeshCase { prob, fp, oracle })
}

/// Error vs. increment bound along fixed-mesh traces of every scheme.
pub fn error_increment_checks(steps: usize) -> Vec<CheckReport> {
    let mut out = Vec::new();
    for prob in [smooth_problem(), singular_problem()] {
        let case = match fixed_case(prob, uniform_mesh(1)) {
            Ok(c) => c,
            Err(e) => {
                out.push(fail("reference solve", e));
                continue;
            }
        };
        for scheme in schemes_for(&case.prob) {
            let name = format!("error/increment bound, {scheme}, {}", case.prob.name);
            match iterate_fixed(
                &scheme,
                &case.fp,
                DiscreteFunction::zeros(case.fp.space()),
                steps,
            ) {
                Ok((trace, _)) => {
                    let (_, beta) = scheme_constants(&scheme, case.fp.law());
                    let mut rep = check_error_increment_bound(
                        case.fp.space(),
                        &trace,
                        &case.oracle,
                        case.fp.law().nu(),
                        beta,
                    );
                    rep.name = name;
                    out.push(rep);
                }
                Err(e) => out.push(fail(&name, e)),
            }
        }
    }
    out
}

/// Energy decrease and empirical `C_H` along fixed-mesh traces, the energy
/// sandwich around the discrete solution, and the Zarantonello coercivity
/// bound.
pub fn energy_checks(steps: usize, samples: usize) -> Vec<CheckReport> {
    let mut out = Vec::new();
    for prob in [smooth_problem(), singular_problem()] {
        let case = match fixed_case(prob, uniform_mesh(1)) {
            Ok(c) => c,
            Err(e) => {
                out.push(fail("reference solve", e));
                continue;
            }
        };
        let space = case.fp.space();
        for scheme in schemes_for(&case.prob) {
            match iterate_fixed(&scheme, &case.fp, DiscreteFunction::zeros(space), steps) {
                Ok((_, records)) => out.extend(trace_energy_reports(
                    &records,
                    &format!("{scheme}, {}", case.prob.name),
                )),
                Err(e) => out.push(fail(&format!("energy trace {scheme}"), e)),
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let eps = [1e-3, 1e-2, 1e-1];
        let mut violations = 0;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..samples {
            let dir: Vec<f64> = (0..space.n_dofs())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let w = DiscreteFunction::from_interior(space, &dir);
            let w_norm = space.x_norm(&w);
            let u = case.oracle.u.axpy(eps[i % eps.len()] / w_norm, &w);
            let s = check_energy_sandwich(&case.fp, &u, &case.oracle);
            let e2 = space.x_distance(&u, &case.oracle.u).powi(2);
            lo = lo.min(s.energy_gap / e2);
            hi = hi.max(s.energy_gap / e2);
            if !s.holds(SANDWICH_REL_SLACK) {
                violations += 1;
            }
        }
        let law = case.fp.law();
        out.push(CheckReport::new(
            format!(
                "energy sandwich, {samples} perturbations, {}",
                case.prob.name
            ),
            format!(
                "gap/e^2 in [{:.4}, {:.4}]",
                law.nu() / 2.0,
                law.lipschitz() / 2.0
            ),
            if violations > 0 { lo.min(hi) } else { hi },
            violations,
        ));
    }

    let prob = smooth_problem();
    let fp = FeProblem::new(uniform_mesh(1), &prob);
    let delta = 0.3;
    let bound = 1.0 / delta - prob.law.lipschitz() / 2.0;
    let name = "Zarantonello(delta=0.3) C_H vs 1/delta - L_F/2";
    match iterate_fixed(
        &SchemeSpec::Zarantonello { delta },
        &fp,
        DiscreteFunction::zeros(fp.space()),
        steps,
    ) {
        Ok((_, records)) => {
            let c_h = estimate_ch(&records).unwrap_or(f64::NAN);
            out.push(CheckReport::new(
                name,
                format!(">= 0.8 * {bound:.4}"),
                c_h,
                usize::from(!(c_h >= 0.8 * bound)),
            ));
        }
        Err(e) => out.push(fail(name, e)),
    }
    out
}

/// Per-step energy decrease and positivity of the empirical `C_H` of a trace.
pub fn trace_energy_reports(records: &[StepRecord], label: &str) -> Vec<CheckReport> {
    let worst = records
        .iter()
        .map(|r| r.energy_decrease)
        .fold(f64::INFINITY, f64::min);
    let increases = records
        .iter()
        .filter(|r| r.energy_decrease < -1e-12)
        .count();
    let c_h = estimate_ch(records).unwrap_or(f64::NAN);
    vec![
        CheckReport::new(
            format!("energy decrease per step, {label}"),
            ">= -1e-12",
            worst,
            increases,
        ),
        CheckReport::new(
            format!("empirical C_H, {label}"),
            "> 0",
            c_h,
            usize::from(!(c_h > 0.0)),
        ),
    ]
}

/// Tail-sum and geometric bounds on fixed-mesh traces of the smooth problem.
pub fn tail_checks(steps: usize) -> Vec<CheckReport> {
    let prob = smooth_problem();
    let fp = FeProblem::new(uniform_mesh(1), &prob);
    let law = fp.law();
    let mut out = Vec::new();
    for scheme in schemes_for(&prob) {
        let name = format!("contraction-like tail bounds, {scheme}");
        let records = match iterate_fixed(&scheme, &fp, DiscreteFunction::zeros(fp.space()), steps)
        {
            Ok((_, r)) => r,
            Err(e) => {
                out.push(fail(&name, e));
                continue;
            }
        };
        let (_, beta) = scheme_constants(&scheme, law);
        match check_trace_tail(&records, law.lipschitz(), beta, law.nu()) {
            Some(rep) => out.push(CheckReport::new(
                format!(
                    "{name} ({} inequalities, C = {:.3e})",
                    rep.checked, rep.constant
                ),
                "worst ratio <= 1",
                rep.worst_sum_ratio.max(rep.worst_geometric_ratio),
                rep.violations,
            )),
            None => out.push(CheckReport::new(name, "C_H > 0", f64::NAN, 1)),
        }
    }
    out
}

/// Iterate a scheme on a fixed mesh until the increment is below `tol`.
pub fn fixed_mesh_limit(
    scheme: &SchemeSpec,
    fp: &FeProblem,
    tol: f64,
    max_steps: usize,
) -> Result<DiscreteFunction, Error> {
    let mut u = DiscreteFunction::zeros(fp.space());
    for _ in 0..max_steps {
        let next = crate::linearization::step(scheme, fp, &u)?.u_next;
        let d = fp.space().x_distance(&next, &u);
        u = next;
        if d < tol {
            return Ok(u);
        }
    }
    Ok(u)
}

/// Pairwise agreement of the three fixed-mesh limits and the reference
/// solution on `meshes` meshes: the initial mesh, a uniform refinement and an
/// adaptively graded mesh for the singular problem.
pub fn oracle_agreement_checks(meshes: usize) -> Vec<CheckReport> {
    let mut cases: Vec<(ManufacturedProblem, Result<Triangulation, Error>)> = vec![
        (smooth_problem(), Ok(make_lshape_initial())),
        (singular_problem(), Ok(uniform_mesh(1))),
        (singular_problem(), adaptive_mesh(&singular_problem(), 4000)),
    ];
    cases.truncate(meshes);
    let mut out = Vec::new();
    for (prob, mesh) in cases {
        let mesh = match mesh {
            Ok(m) => m,
            Err(e) => {
                out.push(fail("adaptive mesh", e));
                continue;
            }
        };
        let name = format!(
            "fixed-mesh limits vs reference, {} ({} elements)",
            prob.name,
            mesh.n_triangles()
        );
        let case = match fixed_case(prob, mesh) {
            Ok(c) => c,
            Err(e) => {
                out.push(fail(&name, e));
                continue;
            }
        };
        let mut sols = vec![case.oracle.u.clone()];
        let mut err = None;
        for scheme in schemes_for(&prob) {
            match fixed_mesh_limit(&scheme, &case.fp, 1e-12, 2000) {
                Ok(u) => sols.push(u),
                Err(e) => err = Some(e),
            }
        }
        if let Some(e) = err {
            out.push(fail(&name, e));
            continue;
        }
        let space = case.fp.space();
        let mut worst = 0.0f64;
        for i in 0..sols.len() {
            for j in i + 1..sols.len() {
                worst = worst.max(space.x_distance(&sols[i], &sols[j]));
            }
        }
        out.push(CheckReport::new(
            name,
            "<= 1e-8",
            worst,
            usize::from(worst > 1e-8),
        ));
    }
    out
}

/// Full suite; `quick` trims sweep counts, sample sizes and the mesh list.
pub fn suite(quick: bool) -> Vec<CheckReport> {
    let mut out = kernel_checks(if quick { 8 } else { 20 });
    out.extend(error_increment_checks(if quick { 15 } else { 30 }));
    out.extend(energy_checks(15, if quick { 30 } else { 100 }));
    out.extend(tail_checks(if quick { 12 } else { 20 }));
    out.extend(oracle_agreement_checks(if quick { 1 } else { 3 }));
    out
}
