//! One step of the unified linearization `a(u^n; u^{n+1}, v) = ⟨f(u^n), v⟩`
//! for the Zarantonello, Kačanov and damped Newton schemes.

use std::fmt;

use crate::fem::{self, DiscreteFunction};
use crate::model::FeProblem;
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SchemeSpec {
    /// `(u^{n+1}, v)_X = (u^n, v)_X - δ⟨F(u^n), v⟩`.
    Zarantonello { delta: f64 },
    /// `∫ μ(|∇u^n|²)∇u^{n+1}·∇v = ⟨g, v⟩`.
    Kacanov,
    /// `F'(u^n)u^{n+1} = F'(u^n)u^n - δ F(u^n)`; `delta` is the initial
    /// damping tried in every step.
    Newton { delta: f64 },
}

impl SchemeSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Zarantonello { .. } => "zarantonello",
            Self::Kacanov => "kacanov",
            Self::Newton { .. } => "newton",
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        match *self {
            Self::Zarantonello { delta } | Self::Newton { delta } if !(delta > 0.0) => {
                Err(Error::InvalidConfig(format!(
                    "{}: delta must be positive, got {delta}",
                    self.name()
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zarantonello { delta } => write!(f, "zarantonello(delta={delta})"),
            Self::Kacanov => write!(f, "kacanov"),
            Self::Newton { delta } => write!(f, "newton(delta={delta})"),
        }
    }
}

pub const MAX_HALVINGS: u32 = 10;

// Energy increases below this are round-off, not a failed step.
const ENERGY_SLACK: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub u_next: DiscreteFunction,
    pub delta_used: f64,
}

/// Perform one linearization step from `u_n`.
///
/// Newton steps are accepted only if they do not increase the energy; the
/// damping is halved up to [`MAX_HALVINGS`] times otherwise. The damped
/// iterate `u_n + (δ/δ₀)(u_full - u_n)` is exactly the solution of the
/// system assembled with damping `δ`, so no re-assembly is needed.
pub fn step(
    scheme: &SchemeSpec,
    fp: &FeProblem,
    u_n: &DiscreteFunction,
) -> Result<StepOutcome, Error> {
    if !u_n.matches(fp.space()) {
        return Err(Error::MeshMismatch);
    }
    let sys = fem::assemble(scheme, fp, u_n);
    let guess = u_n.interior(fp.space());
    let x = fem::solve(&sys, &guess)?;
    let full = DiscreteFunction::from_interior(fp.space(), &x);
    match *scheme {
        SchemeSpec::Zarantonello { delta } => Ok(StepOutcome {
            u_next: full,
            delta_used: delta,
        }),
        SchemeSpec::Kacanov => Ok(StepOutcome {
            u_next: full,
            delta_used: 1.0,
        }),
        SchemeSpec::Newton { delta } => {
            let increment = full.sub(u_n);
            let mut scale = 1.0;
            for _ in 0..=MAX_HALVINGS {
                let candidate = u_n.axpy(scale, &increment);
                if fp.energy_decrease(u_n, &candidate) >= -ENERGY_SLACK {
                    return Ok(StepOutcome {
                        u_next: candidate,
                        delta_used: delta * scale,
                    });
                }
                scale *= 0.5;
            }
            Err(Error::DampingCollapse {
                halvings: MAX_HALVINGS,
            })
        }
    }
}

/// Per-step bookkeeping of the iteration on one mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// `H(u^n)`.
    pub energy: f64,
    /// `H(u^{n-1}) - H(u^n)`, evaluated without cancellation.
    pub energy_decrease: f64,
    /// `‖u^n - u^{n-1}‖_X`.
    pub step_norm: f64,
    /// `η_N(u^n)`.
    pub estimator: f64,
    pub delta_used: f64,
}

/// Steps with a smaller norm carry no usable ratio information.
pub const MIN_STEP_NORM: f64 = 1e-13;

/// Empirical `C_H = min_n (H(u^{n-1}) - H(u^n)) / ‖u^n - u^{n-1}‖²_X` over the
/// admissible steps of a trace; `None` if there are none.
pub fn estimate_ch(trace: &[StepRecord]) -> Option<f64> {
    trace
        .iter()
        .filter(|s| s.step_norm > MIN_STEP_NORM)
        .map(|s| s.energy_decrease / (s.step_norm * s.step_norm))
        .reduce(f64::min)
}

/// Constant of the contraction-like tail bound,
/// `C = L_F (1 + β/ν)² / (2 C_H)`.
pub fn tail_constant(lipschitz: f64, beta: f64, nu: f64, c_h: f64) -> f64 {
    let r = 1.0 + beta / nu;
    lipschitz * r * r / (2.0 * c_h)
}

/// Iterate `scheme` on a fixed mesh for exactly `steps` steps from `u0`,
/// returning every iterate (including `u0`) and the step records.
pub fn iterate_fixed(
    scheme: &SchemeSpec,
    fp: &FeProblem,
    u0: DiscreteFunction,
    steps: usize,
) -> Result<(Vec<DiscreteFunction>, Vec<StepRecord>), Error> {
    let mut iterates = vec![u0];
    let mut records = Vec::with_capacity(steps);
    for _ in 0..steps {
        let u = iterates.last().expect("non-empty");
        let out = step(scheme, fp, u)?;
        records.push(StepRecord {
            energy: fp.energy(&out.u_next),
            energy_decrease: fp.energy_decrease(u, &out.u_next),
            step_norm: fp.space().x_distance(&out.u_next, u),
            estimator: f64::NAN,
            delta_used: out.delta_used,
        });
        iterates.push(out.u_next);
    }
    Ok((iterates, records))
}
