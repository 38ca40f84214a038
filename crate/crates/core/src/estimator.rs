//! Residual a posteriori error indicators and Dörfler marking.

use crate::fem::{dot, DiscreteFunction};
use crate::mesh::MarkedSet;
use crate::model::FeProblem;
use crate::par;
use crate::Error;

/// Squared local indicators `η_N(T, u)²` and their sum `η_N(u)²`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorField {
    squared: Vec<f64>,
    total_squared: f64,
}

impl IndicatorField {
    pub fn from_squared(squared: Vec<f64>) -> Self {
        let total_squared = squared.iter().sum();
        Self {
            squared,
            total_squared,
        }
    }

    pub fn squared(&self) -> &[f64] {
        &self.squared
    }

    pub fn len(&self) -> usize {
        self.squared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.squared.is_empty()
    }

    /// `η_N(u)`.
    pub fn global(&self) -> f64 {
        self.total_squared.sqrt()
    }
}

/// `η_N(T,u)² = h_T² ‖g‖²_T + h_T ‖⟦μ(|∇u|²)∇u⟧‖²_{∂T∖Γ}`.
///
/// The discrete flux is constant on each element, so the normal jump is
/// constant along every interior edge `e` and contributes `|e|·jump²`.
pub fn estimate(fp: &FeProblem, u: &DiscreteFunction) -> IndicatorField {
    let space = fp.space();
    let law = fp.law();
    let mesh = space.mesh();
    let fluxes = par::map_indexed(space.n_elements(), |t| law.flux(space.grad(u.values(), t)));
    let squared = par::map_indexed(space.n_elements(), |t| {
        let tri = mesh.triangles()[t];
        let mut jumps = 0.0;
        for (k, neighbor) in space.neighbors(t).iter().enumerate() {
            let Some(s) = *neighbor else { continue };
            let p = mesh.vertices()[tri[(k + 1) % 3]];
            let q = mesh.vertices()[tri[(k + 2) % 3]];
            // counter-clockwise edge p→q has outward normal (dy, -dx)/|e|
            let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
            let len = dx.hypot(dy);
            let normal = [dy / len, -dx / len];
            let jump = dot(
                [fluxes[t][0] - fluxes[s][0], fluxes[t][1] - fluxes[s][1]],
                normal,
            );
            jumps += len * jump * jump;
        }
        fp.element_residual(t) + space.diameter(t) * jumps
    });
    IndicatorField::from_squared(squared)
}

/// Dörfler marking: the shortest prefix of elements, sorted by decreasing
/// indicator (ties by index), that carries a `theta` fraction of `η²`.
/// `theta = 0` marks every element.
pub fn mark(ind: &IndicatorField, theta: f64) -> Result<MarkedSet, Error> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidConfig(format!(
            "marking parameter must lie in [0, 1], got {theta}"
        )));
    }
    if theta == 0.0 {
        return Ok(MarkedSet::all(ind.len()));
    }
    let eta = ind.squared();
    let mut order: Vec<usize> = (0..eta.len()).collect();
    order.sort_by(|&a, &b| eta[b].total_cmp(&eta[a]).then(a.cmp(&b)));
    // Reference total summed in the same order as the prefix sums so that
    // theta = 1 stops exactly at the last non-zero indicator.
    let total: f64 = order.iter().map(|&t| eta[t]).sum();
    let goal = theta * total;
    let mut acc = 0.0;
    let mut chosen = Vec::new();
    for &t in &order {
        if acc >= goal {
            break;
        }
        acc += eta[t];
        chosen.push(t);
    }
    Ok(MarkedSet::new(chosen))
}
