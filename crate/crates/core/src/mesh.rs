//! Conforming triangulations with newest-vertex bisection.
//!
//! Triangles are stored as vertex triples `[a, b, c]` in counter-clockwise
//! order. The edge opposite the first vertex, `(b, c)`, is the refinement
//! edge. Bisecting inserts the midpoint `m` of `(b, c)` and produces the
//! children `[m, a, b]` and `[m, c, a]`, so the new vertex is always the
//! first vertex of both children.

use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, Write};

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("marked set is empty")]
    EmptyMarking,
    #[error("marked element {index} out of range (mesh has {len} triangles)")]
    InvalidElement { index: usize, len: usize },
    #[error("triangle {0} has non-positive signed area")]
    Degenerate(usize),
    #[error("triangle {0} references a vertex that does not exist")]
    DanglingVertex(usize),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("hanging node at the midpoint of edge ({0}, {1})")]
    HangingNode(usize, usize),
    #[error("refinement closure did not terminate after {0} edge insertions")]
    ClosureDiverged(usize),
    #[error("malformed mesh dump: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[inline]
pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Signed area of the triangle `(p, q, r)`; positive for counter-clockwise order.
#[inline]
pub fn signed_area(p: Point, q: Point, r: Point) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triangulation {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<(usize, usize)>,
    generation: Vec<u32>,
}

/// Set of triangle indices selected for refinement.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MarkedSet {
    indices: Vec<usize>,
}

impl MarkedSet {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn all(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

/// Output of [`Triangulation::refine`].
///
/// Vertex `old_vertex_count + k` of the new mesh is the midpoint of
/// `midpoint_parents[k]`, which is what nested P1 prolongation needs.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub mesh: Triangulation,
    pub midpoint_parents: Vec<[usize; 2]>,
}

impl Refinement {
    /// Prolongate nodal values from the parent mesh by midpoint interpolation.
    pub fn prolongate(&self, coarse: &[f64]) -> Vec<f64> {
        let mut fine = Vec::with_capacity(coarse.len() + self.midpoint_parents.len());
        fine.extend_from_slice(coarse);
        for &[a, b] in &self.midpoint_parents {
            let v = 0.5 * (fine[a] + fine[b]);
            fine.push(v);
        }
        fine
    }
}

impl Triangulation {
    /// Build a triangulation, deriving boundary edges as the edges owned by a
    /// single triangle. Fails if any invariant is violated.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let generation = vec![0; triangles.len()];
        Self::with_generation(vertices, triangles, generation)
    }

    fn with_generation(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        generation: Vec<u32>,
    ) -> Result<Self, MeshError> {
        let nv = vertices.len();
        let mut counts: HashMap<(usize, usize), u8> = HashMap::with_capacity(triangles.len() * 2);
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(MeshError::DanglingVertex(t));
            }
            let [a, b, c] = *tri;
            if signed_area(vertices[a], vertices[b], vertices[c]) <= 0.0 {
                return Err(MeshError::Degenerate(t));
            }
            for (p, q) in [(b, c), (c, a), (a, b)] {
                let count = counts.entry(edge_key(p, q)).or_insert(0);
                *count += 1;
                if *count > 2 {
                    return Err(MeshError::NonManifoldEdge(p.min(q), p.max(q)));
                }
            }
        }
        let mut boundary_edges: Vec<_> = counts
            .into_iter()
            .filter_map(|(e, c)| (c == 1).then_some(e))
            .collect();
        boundary_edges.sort_unstable();
        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            generation,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[(usize, usize)] {
        &self.boundary_edges
    }

    pub fn generation(&self) -> &[u32] {
        &self.generation
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [p, q, r] = self.corners(t);
        signed_area(p, q, r)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    /// Longest edge length of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [p, q, r] = self.corners(t);
        dist(p, q).max(dist(q, r)).max(dist(r, p))
    }

    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut flags = vec![false; self.n_vertices()];
        for &(a, b) in &self.boundary_edges {
            flags[a] = true;
            flags[b] = true;
        }
        flags
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| {
                let [p, q, r] = self.corners(t);
                angle_at(p, q, r)
                    .min(angle_at(q, r, p))
                    .min(angle_at(r, p, q))
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Exhaustive audit of conformity and orientation.
    pub fn check(&self) -> Result<(), MeshError> {
        let rebuilt = Self::with_generation(
            self.vertices.clone(),
            self.triangles.clone(),
            self.generation.clone(),
        )?;
        // Under bisection a hanging node is always the midpoint of an edge
        // owned by a single triangle.
        let by_coord: HashSet<(u64, u64)> = self
            .vertices
            .iter()
            .map(|p| (p[0].to_bits(), p[1].to_bits()))
            .collect();
        for &(a, b) in &rebuilt.boundary_edges {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            if by_coord.contains(&(mid[0].to_bits(), mid[1].to_bits())) {
                return Err(MeshError::HangingNode(a, b));
            }
        }
        Ok(())
    }

    /// Newest-vertex bisection of every marked triangle, followed by the
    /// closure bisections needed to keep the mesh conforming.
    pub fn refine(&self, marked: &MarkedSet) -> Result<Refinement, MeshError> {
        if marked.is_empty() {
            return Err(MeshError::EmptyMarking);
        }
        let nt = self.n_triangles();
        if let Some(&index) = marked.indices().iter().find(|&&i| i >= nt) {
            return Err(MeshError::InvalidElement { index, len: nt });
        }

        let mut edge_tris: HashMap<(usize, usize), [usize; 2]> = HashMap::with_capacity(nt * 2);
        for (t, tri) in self.triangles.iter().enumerate() {
            for (p, q) in [(tri[1], tri[2]), (tri[2], tri[0]), (tri[0], tri[1])] {
                edge_tris
                    .entry(edge_key(p, q))
                    .and_modify(|slot| slot[1] = t)
                    .or_insert([t, usize::MAX]);
            }
        }

        let ref_edge = |t: usize| {
            let tri = self.triangles[t];
            edge_key(tri[1], tri[2])
        };

        let mut marked_edges: HashSet<(usize, usize)> = HashSet::new();
        let mut queue: Vec<(usize, usize)> = Vec::new();
        for &t in marked.indices() {
            let e = ref_edge(t);
            if marked_edges.insert(e) {
                queue.push(e);
            }
        }
        let limit = edge_tris.len();
        let mut insertions = queue.len();
        while let Some(e) = queue.pop() {
            for &t in edge_tris[&e].iter().filter(|&&t| t != usize::MAX) {
                let r = ref_edge(t);
                if marked_edges.insert(r) {
                    insertions += 1;
                    if insertions > limit {
                        return Err(MeshError::ClosureDiverged(insertions));
                    }
                    queue.push(r);
                }
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint_of: HashMap<(usize, usize), usize> =
            HashMap::with_capacity(marked_edges.len());
        let mut midpoint_parents = Vec::with_capacity(marked_edges.len());
        let mut triangles = Vec::with_capacity(nt + 2 * marked_edges.len());
        let mut generation = Vec::with_capacity(triangles.capacity());

        let mut stack: Vec<([usize; 3], u32)> = Vec::with_capacity(8);
        for (t, &tri) in self.triangles.iter().enumerate() {
            stack.push((tri, self.generation[t]));
            while let Some((tri, gen)) = stack.pop() {
                let [a, b, c] = tri;
                let e = edge_key(b, c);
                if !marked_edges.contains(&e) {
                    triangles.push(tri);
                    generation.push(gen);
                    continue;
                }
                let m = *midpoint_of.entry(e).or_insert_with(|| {
                    let (pb, pc) = (vertices[b], vertices[c]);
                    vertices.push([0.5 * (pb[0] + pc[0]), 0.5 * (pb[1] + pc[1])]);
                    midpoint_parents.push([e.0, e.1]);
                    vertices.len() - 1
                });
                // Pushed in reverse so that [m, a, b] is emitted first.
                stack.push(([m, c, a], gen + 1));
                stack.push(([m, a, b], gen + 1));
            }
        }

        let mesh = Self::with_generation(vertices, triangles, generation)?;
        Ok(Refinement {
            mesh,
            midpoint_parents,
        })
    }

    /// Plain-text dump: `nv nt`, vertex lines, triangle lines with the local
    /// index of the refinement edge (always 0 here), then boundary edges.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {}", self.n_vertices(), self.n_triangles())?;
        for p in &self.vertices {
            writeln!(out, "{:.17e} {:.17e}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(out, "{} {} {} 0", t[0], t[1], t[2])?;
        }
        for &(a, b) in &self.boundary_edges {
            writeln!(out, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(input: R) -> Result<Self, MeshError> {
        let mut lines = input.lines();
        let mut next = || -> Result<String, MeshError> {
            lines
                .next()
                .ok_or_else(|| MeshError::Parse("unexpected end of input".into()))?
                .map_err(MeshError::from)
        };
        let header = next()?;
        let counts: Vec<usize> = parse_fields(&header)?;
        let [nv, nt] = counts[..] else {
            return Err(MeshError::Parse(format!("bad header {header:?}")));
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = next()?;
            let xy: Vec<f64> = parse_fields(&line)?;
            let [x, y] = xy[..] else {
                return Err(MeshError::Parse(format!("bad vertex line {line:?}")));
            };
            vertices.push([x, y]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let line = next()?;
            let f: Vec<usize> = parse_fields(&line)?;
            let [i, j, k, r] = f[..] else {
                return Err(MeshError::Parse(format!("bad triangle line {line:?}")));
            };
            // Rotate so that the refinement edge is opposite the first vertex.
            let tri = match r {
                0 => [i, j, k],
                1 => [j, k, i],
                2 => [k, i, j],
                _ => return Err(MeshError::Parse(format!("bad refinement edge {r}"))),
            };
            triangles.push(tri);
        }
        Self::new(vertices, triangles)
    }
}

fn parse_fields<T: std::str::FromStr>(line: &str) -> Result<Vec<T>, MeshError> {
    line.split_whitespace()
        .map(|s| {
            s.parse()
                .map_err(|_| MeshError::Parse(format!("cannot parse {s:?}")))
        })
        .collect()
}

#[inline]
fn dist(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Interior angle at `p` in the triangle `(p, q, r)`.
fn angle_at(p: Point, q: Point, r: Point) -> f64 {
    let u = [q[0] - p[0], q[1] - p[1]];
    let v = [r[0] - p[0], r[1] - p[1]];
    let cross = u[0] * v[1] - u[1] * v[0];
    let dot = u[0] * v[0] + u[1] * v[1];
    cross.abs().atan2(dot)
}

/// Initial mesh of the L-shaped domain `(-1,1)^2 \ [0,1]x[-1,0]`.
///
/// An 8x8 grid of squares of side 0.25 with the lower-right quadrant removed;
/// each of the 48 remaining squares is split into four triangles through its
/// centre. The refinement edge of every triangle is its square side.
pub fn make_lshape_initial() -> Triangulation {
    const N: usize = 8;
    const H: f64 = 0.25;
    let coord = |i: usize| -1.0 + H * i as f64;
    let excluded_square = |i: usize, j: usize| i >= N / 2 && j < N / 2;
    let excluded_point = |i: usize, j: usize| i > N / 2 && j < N / 2;

    let mut index = vec![[usize::MAX; N + 1]; N + 1];
    let mut vertices = Vec::new();
    for j in 0..=N {
        for i in 0..=N {
            if !excluded_point(i, j) {
                index[i][j] = vertices.len();
                vertices.push([coord(i), coord(j)]);
            }
        }
    }

    let mut triangles = Vec::with_capacity(192);
    for j in 0..N {
        for i in 0..N {
            if excluded_square(i, j) {
                continue;
            }
            let c = vertices.len();
            vertices.push([coord(i) + 0.5 * H, coord(j) + 0.5 * H]);
            let ring = [
                index[i][j],
                index[i + 1][j],
                index[i + 1][j + 1],
                index[i][j + 1],
            ];
            for k in 0..4 {
                triangles.push([c, ring[k], ring[(k + 1) % 4]]);
            }
        }
    }
    Triangulation::new(vertices, triangles).expect("L-shape initial mesh is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn lshape_counts() {
        let m = make_lshape_initial();
        assert_eq!(m.n_triangles(), 192);
        assert_eq!(m.n_vertices(), 113);
        for t in 0..m.n_triangles() {
            assert!((m.area(t) - 0.015625).abs() < 1e-15);
        }
        assert!((m.total_area() - 3.0).abs() < 1e-12);
        // outer boundary 8 units long, sampled every 0.25
        assert_eq!(m.boundary_edges().len(), 32);
        m.check().unwrap();
    }

    #[test]
    fn lshape_min_angle() {
        let m = make_lshape_initial();
        assert!((m.min_angle() - FRAC_PI_4).abs() < 1e-14);
    }

    #[test]
    fn refinement_edge_is_longest() {
        let m = make_lshape_initial();
        for t in 0..m.n_triangles() {
            let [a, b, c] = m.corners(t);
            assert!((dist(b, c) - m.diameter(t)).abs() < 1e-15);
            assert!(dist(a, b) < dist(b, c));
        }
    }

    #[test]
    fn empty_marking_rejected() {
        let m = make_lshape_initial();
        assert!(matches!(
            m.refine(&MarkedSet::default()),
            Err(MeshError::EmptyMarking)
        ));
    }

    #[test]
    fn out_of_range_marking_rejected() {
        let m = make_lshape_initial();
        assert!(matches!(
            m.refine(&MarkedSet::new(vec![192])),
            Err(MeshError::InvalidElement { index: 192, .. })
        ));
    }

    #[test]
    fn uniform_sweeps_double() {
        let mut m = make_lshape_initial();
        for expected in [384, 768, 1536] {
            m = m.refine(&MarkedSet::all(m.n_triangles())).unwrap().mesh;
            assert_eq!(m.n_triangles(), expected);
            m.check().unwrap();
        }
    }

    #[test]
    fn single_interior_mark() {
        let m = make_lshape_initial();
        // a triangle in the middle of the upper-left block
        let t = (0..m.n_triangles())
            .find(|&t| {
                let [a, _, _] = m.corners(t);
                (a[0] + 0.375).abs() < 1e-12 && (a[1] - 0.375).abs() < 1e-12
            })
            .unwrap();
        let r = m.refine(&MarkedSet::new(vec![t])).unwrap();
        r.mesh.check().unwrap();
        // the marked triangle and its neighbour across the square side split
        assert_eq!(r.mesh.n_triangles(), 194);
        assert_eq!(r.midpoint_parents.len(), 1);
        // the children of the marked triangle carry generation 1
        assert_eq!(r.mesh.generation().iter().filter(|&&g| g == 1).count(), 4);
    }

    #[test]
    fn boundary_mark_splits_boundary_edge() {
        let m = make_lshape_initial();
        let nb = m.boundary_edges().len();
        let t = (0..m.n_triangles())
            .find(|&t| {
                let [_, b, c] = m.triangles()[t];
                m.boundary_edges().contains(&edge_key(b, c))
            })
            .unwrap();
        let r = m.refine(&MarkedSet::new(vec![t])).unwrap();
        assert_eq!(r.mesh.n_triangles(), 193);
        assert_eq!(r.mesh.boundary_edges().len(), nb + 1);
    }

    #[test]
    fn nested_vertices_and_prolongation() {
        let m = make_lshape_initial();
        let r = m.refine(&MarkedSet::new(vec![0, 50, 100])).unwrap();
        assert_eq!(&r.mesh.vertices()[..m.n_vertices()], m.vertices());
        // affine functions are reproduced exactly by midpoint prolongation
        let f = |p: Point| 2.0 * p[0] - 3.0 * p[1] + 0.5;
        let coarse: Vec<f64> = m.vertices().iter().map(|&p| f(p)).collect();
        let fine = r.prolongate(&coarse);
        for (p, v) in r.mesh.vertices().iter().zip(&fine) {
            assert!((f(*p) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn dump_roundtrip() {
        let m = make_lshape_initial()
            .refine(&MarkedSet::new(vec![3, 7]))
            .unwrap()
            .mesh;
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let back = Triangulation::read_dump(&buf[..]).unwrap();
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.boundary_edges(), m.boundary_edges());
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(matches!(
            Triangulation::new(v, vec![[0, 1, 2]]),
            Err(MeshError::Degenerate(0))
        ));
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            Triangulation::new(v, vec![[0, 2, 1]]),
            Err(MeshError::Degenerate(0))
        ));
    }
}
