//! Symmetric quadrature rules on triangles, in barycentric form.

use thiserror::Error;

use crate::mesh::{Point, Triangulation};

#[derive(Debug, Error)]
#[error("no quadrature rule of degree {0} (available: 1, 2, 5)")]
pub struct UnsupportedDegree(pub u32);

#[derive(Clone, Debug)]
pub struct QuadRule {
    pub degree: u32,
    /// Barycentric coordinates of the nodes.
    pub points: Vec<[f64; 3]>,
    /// Weights relative to the element area; they sum to one.
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical nodes and area-scaled weights on the triangle `corners`.
    pub fn nodes_on(&self, corners: &[Point; 3]) -> impl Iterator<Item = (Point, f64)> + '_ {
        let [p, q, r] = *corners;
        let area = crate::mesh::signed_area(p, q, r);
        self.points.iter().zip(&self.weights).map(move |(b, &w)| {
            let x = b[0] * p[0] + b[1] * q[0] + b[2] * r[0];
            let y = b[0] * p[1] + b[1] * q[1] + b[2] * r[1];
            ([x, y], w * area)
        })
    }

    pub fn integrate_on<F: FnMut(Point) -> f64>(&self, corners: &[Point; 3], mut f: F) -> f64 {
        self.nodes_on(corners).map(|(x, w)| w * f(x)).sum()
    }
}

fn orbit3(a: f64, w: f64, points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>) {
    let b = 1.0 - 2.0 * a;
    for p in [[b, a, a], [a, b, a], [a, a, b]] {
        points.push(p);
        weights.push(w);
    }
}

/// Rule exact for polynomials of total degree `degree`: the centroid rule,
/// the edge-midpoint rule and the 7-point Radon rule.
pub fn rule(degree: u32) -> Result<QuadRule, UnsupportedDegree> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match degree {
        1 => {
            points.push([1.0 / 3.0; 3]);
            weights.push(1.0);
        }
        2 => orbit3(0.5, 1.0 / 3.0, &mut points, &mut weights),
        5 => {
            let s15 = 15f64.sqrt();
            points.push([1.0 / 3.0; 3]);
            weights.push(9.0 / 40.0);
            orbit3(
                (6.0 - s15) / 21.0,
                (155.0 - s15) / 1200.0,
                &mut points,
                &mut weights,
            );
            orbit3(
                (6.0 + s15) / 21.0,
                (155.0 + s15) / 1200.0,
                &mut points,
                &mut weights,
            );
        }
        d => return Err(UnsupportedDegree(d)),
    }
    Ok(QuadRule {
        degree,
        points,
        weights,
    })
}

/// Integrate `f` over element `element` of `mesh`.
pub fn integrate<F: FnMut(Point) -> f64>(
    mesh: &Triangulation,
    element: usize,
    f: F,
    rule: &QuadRule,
) -> f64 {
    rule.integrate_on(&mesh.corners(element), f)
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    // Exact integral of x^i y^j over the reference triangle: i! j! / (i+j+2)!
    fn monomial_exact(i: u32, j: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(i) * fact(j) / fact(i + j + 2)
    }

    #[test]
    fn exactness_by_enumeration() {
        for degree in [1, 2, 5] {
            let q = rule(degree).unwrap();
            for i in 0..=degree {
                for j in 0..=degree - i {
                    let got =
                        q.integrate_on(&REFERENCE, |p| p[0].powi(i as i32) * p[1].powi(j as i32));
                    let want = monomial_exact(i, j);
                    assert!(
                        ((got - want) / want).abs() < 1e-13,
                        "degree {degree}: x^{i} y^{j} gave {got}, want {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn x2y_is_one_sixtieth() {
        let q = rule(5).unwrap();
        let v = q.integrate_on(&REFERENCE, |p| p[0] * p[0] * p[1]);
        assert!((v - 1.0 / 60.0).abs() < 1e-16);
    }

    #[test]
    fn centroid_rule() {
        let q = rule(1).unwrap();
        assert_eq!(q.points, vec![[1.0 / 3.0; 3]]);
        assert_eq!(q.weights, vec![1.0]);
    }

    #[test]
    fn weights_and_nodes() {
        for degree in [1, 2, 5] {
            let q = rule(degree).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(q.weights.iter().all(|&w| w > 0.0));
            for b in &q.points {
                // only the degree-2 rule puts nodes on the boundary
                assert!(b.iter().all(|&c| c > 0.0 || (degree == 2 && c == 0.0)));
                assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_integrates_to_area() {
        let tri = [[0.3, -0.2], [1.7, 0.1], [0.5, 2.0]];
        let area = crate::mesh::signed_area(tri[0], tri[1], tri[2]);
        for degree in [1, 2, 5] {
            let v = rule(degree).unwrap().integrate_on(&tri, |_| 1.0);
            assert!((v - area).abs() < 1e-14 * area);
        }
    }

    #[test]
    fn through_mesh_element() {
        let mesh = Triangulation::new(REFERENCE.to_vec(), vec![[0, 1, 2]]).unwrap();
        let q = rule(5).unwrap();
        let v = integrate(&mesh, 0, |p| p[0] * p[0] * p[1], &q);
        assert!((v - 1.0 / 60.0).abs() < 1e-16);
    }

    #[test]
    fn unsupported_degree() {
        assert!(rule(3).is_err());
    }
}
