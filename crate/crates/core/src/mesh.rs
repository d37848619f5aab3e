//! Conforming triangulations with newest-vertex bisection.
//!
//! Triangles are stored counter-clockwise. Local facet `i` of a triangle is
//! the edge opposite local vertex `i`. Every facet carries the outward unit
//! normal of its first (lowest-id) adjacent element; jumps across a facet are
//! always taken as `first - second`.

use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, Write};

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("triangle {0} is degenerate (area {1:e})")]
    Degenerate(usize, f64),
    #[error("triangle {0} references vertex {1}, but the mesh has {2} vertices")]
    BadVertex(usize, usize, usize),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifold(usize, usize),
    #[error("marked element {0} out of range ({1} elements)")]
    BadMark(usize, usize),
    #[error("structured mesh needs n >= 1 and a box of positive width and height")]
    EmptyBox,
    #[error("mesh dump line {0}: {1}")]
    Parse(usize, String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub facets: [usize; 3],
    /// Local index of the refinement edge (the facet opposite this vertex).
    pub refinement_edge: usize,
    pub area: f64,
    /// Longest edge length.
    pub diameter: f64,
}

#[derive(Clone, Debug)]
pub struct Facet {
    /// Endpoints, in the counter-clockwise order of the first element.
    pub vertices: [usize; 2],
    pub first: usize,
    pub second: Option<usize>,
    /// Outward unit normal of `first`.
    pub normal: Point,
    pub length: f64,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.second.is_none()
    }

    pub fn elements(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.first).chain(self.second)
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<Triangle>,
    pub facets: Vec<Facet>,
    pub generation: u32,
    boundary_vertex: Vec<bool>,
    corner_vertex: Vec<bool>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Local index of the longest edge's opposite vertex; ties go to the
/// smallest global vertex id.
fn longest_edge(verts: &[Point], tri: [usize; 3]) -> usize {
    let mut best = 0;
    let mut best_len = -1.0;
    for i in 0..3 {
        let len = dist(verts[tri[(i + 1) % 3]], verts[tri[(i + 2) % 3]]);
        let better = len > best_len * (1.0 + 1e-12)
            || (len >= best_len * (1.0 - 1e-12) && tri[i] < tri[best]);
        if better {
            best = i;
            best_len = best_len.max(len);
        }
    }
    best
}

impl Mesh {
    /// Builds a mesh from raw connectivity. Clockwise triangles are flipped.
    /// When `refinement_edges` is `None` the longest edge of each triangle
    /// is used.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        refinement_edges: Option<Vec<usize>>,
    ) -> Result<Mesh, MeshError> {
        let nv = vertices.len();
        let mut tris = Vec::with_capacity(triangles.len());
        for (t, &tv) in triangles.iter().enumerate() {
            for &v in &tv {
                if v >= nv {
                    return Err(MeshError::BadVertex(t, v, nv));
                }
            }
            let mut tv = tv;
            let mut r = match &refinement_edges {
                Some(r) => r[t] % 3,
                None => longest_edge(&vertices, tv),
            };
            let a = signed_area(vertices[tv[0]], vertices[tv[1]], vertices[tv[2]]);
            if a.abs() <= 1e-300 || !a.is_finite() {
                return Err(MeshError::Degenerate(t, a));
            }
            if a < 0.0 {
                tv.swap(1, 2);
                r = [0, 2, 1][r];
            }
            let diameter = (0..3)
                .map(|i| dist(vertices[tv[(i + 1) % 3]], vertices[tv[(i + 2) % 3]]))
                .fold(0.0, f64::max);
            tris.push(Triangle {
                vertices: tv,
                facets: [0; 3],
                refinement_edge: r,
                area: a.abs(),
                diameter,
            });
        }

        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut facets: Vec<Facet> = Vec::new();
        for t in 0..tris.len() {
            let tv = tris[t].vertices;
            for i in 0..3 {
                let a = tv[(i + 1) % 3];
                let b = tv[(i + 2) % 3];
                let key = edge_key(a, b);
                let f = match index.get(&key) {
                    Some(&f) => {
                        if facets[f].second.is_some() {
                            return Err(MeshError::NonManifold(key.0, key.1));
                        }
                        facets[f].second = Some(t);
                        f
                    }
                    None => {
                        let pa = vertices[a];
                        let pb = vertices[b];
                        let length = dist(pa, pb);
                        let normal = [(pb[1] - pa[1]) / length, -(pb[0] - pa[0]) / length];
                        facets.push(Facet {
                            vertices: [a, b],
                            first: t,
                            second: None,
                            normal,
                            length,
                        });
                        index.insert(key, facets.len() - 1);
                        facets.len() - 1
                    }
                };
                tris[t].facets[i] = f;
            }
        }

        let mut boundary_vertex = vec![false; nv];
        let mut boundary_dirs: Vec<Vec<Point>> = vec![Vec::new(); nv];
        for f in facets.iter().filter(|f| f.is_boundary()) {
            let [a, b] = f.vertices;
            boundary_vertex[a] = true;
            boundary_vertex[b] = true;
            let t = [
                (vertices[b][0] - vertices[a][0]) / f.length,
                (vertices[b][1] - vertices[a][1]) / f.length,
            ];
            boundary_dirs[a].push(t);
            boundary_dirs[b].push(t);
        }
        let corner_vertex = boundary_dirs
            .iter()
            .map(|d| d.len() >= 2 && d.iter().any(|t| (t[0] * d[0][1] - t[1] * d[0][0]).abs() > 1e-8))
            .collect();

        Ok(Mesh {
            vertices,
            triangles: tris,
            facets,
            generation: 0,
            boundary_vertex,
            corner_vertex,
        })
    }

    /// Box `[min, max]` split into `n x n` rectangles, each cut by the
    /// diagonal from its lower-left to its upper-right corner.
    pub fn structured_square(min: Point, max: Point, n: usize) -> Result<Mesh, MeshError> {
        if n == 0 || !(max[0] > min[0]) || !(max[1] > min[1]) {
            return Err(MeshError::EmptyBox);
        }
        let coord = |lo: f64, hi: f64, i: usize| {
            if i == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / n as f64
            }
        };
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([coord(min[0], max[0], i), coord(min[1], max[1], j)]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Mesh::new(vertices, triangles, None)
    }

    /// `(0, 1)^2` with `n x n` squares.
    pub fn unit_square(n: usize) -> Mesh {
        Mesh::structured_square([0.0, 0.0], [1.0, 1.0], n).expect("unit square is not degenerate")
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    /// Boundary vertex where the boundary changes direction.
    pub fn is_corner_vertex(&self, v: usize) -> bool {
        self.corner_vertex[v]
    }

    pub fn n_interior_vertices(&self) -> usize {
        self.boundary_vertex.iter().filter(|b| !**b).count()
    }

    /// Numbering of interior vertices, `None` on the boundary.
    pub fn interior_vertex_numbering(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.boundary_vertex
            .iter()
            .map(|&b| {
                if b {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    }

    pub fn element_points(&self, t: usize) -> [Point; 3] {
        let v = self.triangles[t].vertices;
        [self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]]]
    }

    /// `+1` if `t` is the first element of its local facet `k`, else `-1`.
    pub fn facet_sign(&self, t: usize, k: usize) -> f64 {
        if self.facets[self.triangles[t].facets[k]].first == t {
            1.0
        } else {
            -1.0
        }
    }

    pub fn max_shape_ratio(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| t.diameter * t.diameter / t.area)
            .fold(0.0, f64::max)
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_facets() as i64 + self.n_elements() as i64
    }

    pub fn total_area(&self) -> f64 {
        self.triangles.iter().map(|t| t.area).sum()
    }

    /// Newest-vertex bisection of the marked elements plus the closure
    /// needed to keep the mesh conforming.
    pub fn refine(&self, marked: &[usize]) -> Result<Mesh, MeshError> {
        let ne = self.n_elements();
        let ref_key = |t: usize| {
            let tr = &self.triangles[t];
            let r = tr.refinement_edge;
            edge_key(tr.vertices[(r + 1) % 3], tr.vertices[(r + 2) % 3])
        };

        let mut edge_facet: HashMap<(usize, usize), usize> = HashMap::with_capacity(self.n_facets());
        for (f, facet) in self.facets.iter().enumerate() {
            edge_facet.insert(edge_key(facet.vertices[0], facet.vertices[1]), f);
        }

        let mut split: HashSet<(usize, usize)> = HashSet::new();
        let mut work = Vec::new();
        for &t in marked {
            if t >= ne {
                return Err(MeshError::BadMark(t, ne));
            }
            let k = ref_key(t);
            if split.insert(k) {
                work.push(k);
            }
        }
        while let Some(e) = work.pop() {
            let facet = &self.facets[edge_facet[&e]];
            for t in facet.elements() {
                let k = ref_key(t);
                if split.insert(k) {
                    work.push(k);
                }
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(split.len());
        for t in 0..ne {
            let tv = self.triangles[t].vertices;
            for i in 0..3 {
                let k = edge_key(tv[(i + 1) % 3], tv[(i + 2) % 3]);
                if split.contains(&k) && !midpoint.contains_key(&k) {
                    let (a, b) = (vertices[k.0], vertices[k.1]);
                    vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                    midpoint.insert(k, vertices.len() - 1);
                }
            }
        }

        fn bisect(
            tri: [usize; 3],
            r: usize,
            midpoint: &HashMap<(usize, usize), usize>,
            out: &mut Vec<([usize; 3], usize)>,
        ) {
            let (p, a, b) = (tri[r], tri[(r + 1) % 3], tri[(r + 2) % 3]);
            match midpoint.get(&edge_key(a, b)) {
                Some(&m) => {
                    bisect([m, p, a], 0, midpoint, out);
                    bisect([m, b, p], 0, midpoint, out);
                }
                None => out.push((tri, r)),
            }
        }

        let mut out = Vec::with_capacity(ne + 2 * split.len());
        for t in &self.triangles {
            bisect(t.vertices, t.refinement_edge, &midpoint, &mut out);
        }
        let (tris, refs): (Vec<_>, Vec<_>) = out.into_iter().unzip();
        let mut mesh = Mesh::new(vertices, tris, Some(refs))?;
        mesh.generation = self.generation + 1;
        Ok(mesh)
    }

    /// `sweeps` rounds of bisecting every element.
    pub fn refine_uniform(&self, sweeps: usize) -> Mesh {
        let mut mesh = self.clone();
        for _ in 0..sweeps {
            let all: Vec<usize> = (0..mesh.n_elements()).collect();
            mesh = mesh.refine(&all).expect("uniform marking is valid");
        }
        mesh
    }

    /// Plain-text dump: `v x y` lines followed by `t i j k` lines (0-based).
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        for p in &self.vertices {
            writeln!(w, "v {:.16e} {:.16e}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "t {} {} {}", t.vertices[0], t.vertices[1], t.vertices[2])?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Mesh, MeshError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (no, line) in r.lines().enumerate() {
            let line = line?;
            let mut it = line.split_whitespace();
            let bad = |msg: &str| MeshError::Parse(no + 1, msg.to_string());
            match it.next() {
                None => continue,
                Some("v") => {
                    let c: Vec<f64> = it
                        .map(|s| s.parse::<f64>().map_err(|e| bad(&e.to_string())))
                        .collect::<Result<_, _>>()?;
                    if c.len() != 2 {
                        return Err(bad("expected two coordinates"));
                    }
                    vertices.push([c[0], c[1]]);
                }
                Some("t") => {
                    let c: Vec<usize> = it
                        .map(|s| s.parse::<usize>().map_err(|e| bad(&e.to_string())))
                        .collect::<Result<_, _>>()?;
                    if c.len() != 3 {
                        return Err(bad("expected three vertex ids"));
                    }
                    triangles.push([c[0], c[1], c[2]]);
                }
                Some(tag) => return Err(bad(&format!("unknown record `{tag}`"))),
            }
        }
        Mesh::new(vertices, triangles, None)
    }
}
