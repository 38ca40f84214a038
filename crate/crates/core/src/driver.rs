//! The adaptive ILG loop: linearization steps on a fixed mesh until the
//! linearization increment is dominated by the estimator, then Dörfler
//! marking, newest-vertex bisection and nested prolongation.

use std::fmt::Write as _;

use crate::estimator::{estimate, mark};
use crate::fem::DiscreteFunction;
use crate::linearization::{step, SchemeSpec, StepRecord};
use crate::mesh::{make_lshape_initial, Triangulation};
use crate::model::{FeProblem, ManufacturedProblem};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IlgConfig {
    pub scheme: SchemeSpec,
    /// Adaptivity parameter `λ`: stop iterating once `Ξ ≤ λ Υ`.
    pub lambda: f64,
    /// Dörfler parameter; `0` refines every element.
    pub theta: f64,
    pub eps_tol: f64,
    /// Stop before solving on a mesh with more elements than this.
    pub max_elements: usize,
    pub max_linear_steps_per_level: usize,
}

pub const DEFAULT_MAX_ELEMENTS: usize = 200_000;

impl IlgConfig {
    pub fn new(scheme: SchemeSpec, lambda: f64, theta: f64) -> Self {
        Self {
            scheme,
            lambda,
            theta,
            eps_tol: 0.0,
            max_elements: DEFAULT_MAX_ELEMENTS,
            max_linear_steps_per_level: 500,
        }
    }

    pub fn with_max_elements(mut self, max_elements: usize) -> Self {
        self.max_elements = max_elements;
        self
    }

    pub fn with_tolerance(mut self, eps_tol: f64) -> Self {
        self.eps_tol = eps_tol;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.scheme.validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        if !(self.eps_tol >= 0.0) {
            return bad(format!(
                "eps_tol must be non-negative, got {}",
                self.eps_tol
            ));
        }
        if self.max_elements == 0 || self.max_linear_steps_per_level == 0 {
            return bad("budgets must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub n_elements: usize,
    pub n_dofs: usize,
    /// `#It(N)`.
    pub iterations: usize,
    /// Final `Ξ = ‖u^n - u^{n-1}‖_X`.
    pub xi: f64,
    /// Final `Υ = η_N(u^n)`, which is also `η_N(u_N)`.
    pub estimator: f64,
    /// `‖∇(u⋆ - u_N)‖_{L²}`.
    pub h1_error: f64,
    /// `H(u_N)`.
    pub energy: f64,
    pub steps: Vec<StepRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Tolerance,
    ElementBudget,
    /// The estimator vanished at loop exit: `u_N` is the exact solution.
    ExactSolution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub problem: &'static str,
    pub config: IlgConfig,
    pub levels: Vec<LevelRecord>,
    pub termination: Termination,
}

pub const CSV_HEADER: &str = "level,n_elements,n_dofs,iterations,estimator,h1_error,energy";

impl RunRecord {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.levels.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for l in &self.levels {
            writeln!(
                out,
                "{},{},{},{},{:e},{:e},{:e}",
                l.level, l.n_elements, l.n_dofs, l.iterations, l.estimator, l.h1_error, l.energy
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn n_elements(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.n_elements).collect()
    }

    pub fn iterations(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.iterations).collect()
    }
}

/// Run from the L-shape initial mesh with `u⁰₀ ≡ 0`.
pub fn run(cfg: &IlgConfig, prob: &ManufacturedProblem) -> Result<RunRecord, Error> {
    run_from(cfg, prob, make_lshape_initial(), |_, _, _| {})
}

/// Run from an arbitrary initial mesh, reporting every finished level to
/// `on_level` together with the level's problem and final iterate `u_N`.
pub fn run_from<F: FnMut(&LevelRecord, &FeProblem, &DiscreteFunction)>(
    cfg: &IlgConfig,
    prob: &ManufacturedProblem,
    initial: Triangulation,
    mut on_level: F,
) -> Result<RunRecord, Error> {
    cfg.validate()?;
    let mut fp = FeProblem::new(initial, prob);
    let mut u = DiscreteFunction::zeros(fp.space());
    let mut levels = Vec::new();

    let termination = loop {
        let level = levels.len();
        let mut xi = 1.0;
        let mut upsilon = 0.0;
        let mut indicators = None;
        let mut steps = Vec::new();
        while xi > cfg.lambda * upsilon {
            if steps.len() == cfg.max_linear_steps_per_level {
                return Err(Error::StepLimit {
                    level,
                    steps: steps.len(),
                });
            }
            let out = step(&cfg.scheme, &fp, &u)?;
            xi = fp.space().x_distance(&out.u_next, &u);
            let ind = estimate(&fp, &out.u_next);
            upsilon = ind.global();
            indicators = Some(ind);
            steps.push(StepRecord {
                energy: fp.energy(&out.u_next),
                energy_decrease: fp.energy_decrease(&u, &out.u_next),
                step_norm: xi,
                estimator: upsilon,
                delta_used: out.delta_used,
            });
            u = out.u_next;
        }
        let record = LevelRecord {
            level,
            n_elements: fp.space().n_elements(),
            n_dofs: fp.space().n_dofs(),
            iterations: steps.len(),
            xi,
            estimator: upsilon,
            h1_error: fp.h1_error(&u),
            energy: steps.last().map_or(f64::NAN, |s| s.energy),
            steps,
        };
        on_level(&record, &fp, &u);
        levels.push(record);

        if upsilon == 0.0 {
            break Termination::ExactSolution;
        }
        if upsilon < cfg.eps_tol {
            break Termination::Tolerance;
        }
        let indicators = indicators.expect("at least one step per level");
        let marked = mark(&indicators, cfg.theta)?;
        let refinement = fp.mesh().refine(&marked)?;
        if refinement.mesh.n_triangles() > cfg.max_elements {
            break Termination::ElementBudget;
        }
        let values = refinement.prolongate(u.values());
        fp = FeProblem::new(refinement.mesh, prob);
        u = DiscreteFunction::from_values(fp.space(), values);
    };

    Ok(RunRecord {
        problem: prob.name,
        config: *cfg,
        levels,
        termination,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Estimator,
    Error,
}

/// Least-squares line `y = slope·x + intercept` with coefficient of
/// determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

/// Fitted slope of `log(field)` against `log(#elements)` over levels whose
/// element count lies in `window`.
pub fn slope(record: &RunRecord, field: Field, window: (usize, usize)) -> Result<f64, Error> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = record
        .levels
        .iter()
        .filter(|l| (window.0..=window.1).contains(&l.n_elements))
        .map(|l| {
            let v = match field {
                Field::Estimator => l.estimator,
                Field::Error => l.h1_error,
            };
            ((l.n_elements as f64).ln(), v.ln())
        })
        .unzip();
    if xs.len() < 3 {
        return Err(Error::InsufficientLevels { found: xs.len() });
    }
    Ok(linear_fit(&xs, &ys).slope)
}
