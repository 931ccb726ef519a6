//! Conforming triangular meshes: structured construction, red refinement for
//! the P1-iso-P2 macro/refined pair, corner correction and Gmsh import.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::geometry::{signed_area, Aabb, Triangle};
use crate::{Matrix, Point, Vector};

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("a structured mesh needs at least one subdivision per side")]
    ZeroSubdivisions,
    #[error("degenerate bounding box [{min:?}, {max:?}]")]
    DegenerateBox { min: Point, max: Point },
    #[error("triangle {0} references a vertex that does not exist")]
    BadVertexIndex(usize),
    #[error("triangle {0} has zero area")]
    DegenerateTriangle(usize),
    #[error("edge ({0}, {1}) is shared by {2} triangles")]
    NonConforming(usize, usize, usize),
    #[error("affine map is singular")]
    SingularMap,
    #[error("mesh is not recognizably structured: {0}")]
    NotStructured(String),
    #[error("corner triangle {0} cannot be corrected: its only neighbour is also a corner triangle")]
    DegenerateCorner(usize),
    #[error("unsupported MSH format version {0}")]
    UnsupportedVersion(String),
    #[error("unsupported element type {0}")]
    UnsupportedElement(u32),
    #[error("malformed MSH file at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Diagonal used to split each cell of a structured mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// South-west to north-east diagonal.
    Right,
    /// North-west to south-east diagonal.
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    /// Endpoints, ordered along the counter-clockwise traversal of the owning triangle.
    pub vertices: [usize; 2],
    pub tag: i32,
}

/// A conforming, counter-clockwise oriented 2D triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    bbox: Aabb,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    /// Builds a mesh, re-orienting clockwise triangles and deriving the
    /// boundary from edge incidence. All boundary edges get tag 1.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        Self::with_boundary_tags(vertices, triangles, &HashMap::new())
    }

    /// Like [`TriMesh::new`], taking boundary tags from `tags` where an
    /// incidence-derived boundary edge appears there (default 1).
    pub fn with_boundary_tags(
        vertices: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        tags: &HashMap<(usize, usize), i32>,
    ) -> Result<Self, MeshError> {
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(MeshError::BadVertexIndex(t));
            }
            let a = signed_area(&[vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]]);
            if a == 0.0 || !a.is_finite() {
                return Err(MeshError::DegenerateTriangle(t));
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut incidence: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len() / 2 + 8);
        for tri in &triangles {
            for k in 0..3 {
                *incidence.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        let mut boundary_edges = Vec::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                match incidence[&edge_key(a, b)] {
                    1 => boundary_edges.push(BoundaryEdge {
                        vertices: [a, b],
                        tag: tags.get(&edge_key(a, b)).copied().unwrap_or(1),
                    }),
                    2 => {}
                    c => {
                        let (a, b) = edge_key(a, b);
                        return Err(MeshError::NonConforming(a, b, c));
                    }
                }
            }
        }
        let bbox = Aabb::from_points(vertices.iter().copied());
        Ok(TriMesh { vertices, triangles, boundary_edges, bbox })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn bbox(&self) -> Aabb {
        self.bbox
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle(&self, t: usize) -> Triangle {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.triangle(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// `true` for every vertex lying on a boundary edge.
    pub fn boundary_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for e in &self.boundary_edges {
            mask[e.vertices[0]] = true;
            mask[e.vertices[1]] = true;
        }
        mask
    }

    /// Number of triangles sharing each undirected edge.
    pub fn edge_incidence(&self) -> HashMap<(usize, usize), usize> {
        let mut incidence = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *incidence.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        incidence
    }

    /// Number of boundary edges of each triangle.
    pub fn boundary_edge_counts(&self) -> Vec<usize> {
        let incidence = self.edge_incidence();
        self.triangles
            .iter()
            .map(|tri| (0..3).filter(|&k| incidence[&edge_key(tri[k], tri[(k + 1) % 3])] == 1).count())
            .collect()
    }

    /// Writes the mesh as ASCII MSH 2.2 (boundary lines then triangles).
    pub fn write_msh<W: Write>(&self, mut out: W) -> Result<(), MeshError> {
        let mut s = String::new();
        s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
        let _ = writeln!(s, "{}", self.vertices.len());
        for (i, p) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "{} {} {} 0", i + 1, p.x, p.y);
        }
        s.push_str("$EndNodes\n$Elements\n");
        let _ = writeln!(s, "{}", self.boundary_edges.len() + self.triangles.len());
        let mut id = 1;
        for e in &self.boundary_edges {
            let _ = writeln!(s, "{id} 1 2 {} 1 {} {}", e.tag, e.vertices[0] + 1, e.vertices[1] + 1);
            id += 1;
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{id} 2 2 1 1 {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
            id += 1;
        }
        s.push_str("$EndElements\n");
        out.write_all(s.as_bytes())?;
        Ok(())
    }
}

/// Structured `n × n` mesh of `bbox` with `2n²` triangles.
///
/// Vertices are numbered row by row from the south-west corner, so vertex
/// `(i, j)` has index `j (n + 1) + i`.
pub fn build_uniform(n: usize, orientation: Orientation, bbox: Aabb) -> Result<TriMesh, MeshError> {
    if n == 0 {
        return Err(MeshError::ZeroSubdivisions);
    }
    if !(bbox.max.x > bbox.min.x && bbox.max.y > bbox.min.y) {
        return Err(MeshError::DegenerateBox { min: bbox.min, max: bbox.max });
    }
    let coord = |lo: f64, hi: f64, i: usize| {
        if i == n {
            hi
        } else {
            lo + (hi - lo) * (i as f64) / (n as f64)
        }
    };
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        let y = coord(bbox.min.y, bbox.max.y, j);
        for i in 0..=n {
            vertices.push(Point::new(coord(bbox.min.x, bbox.max.x, i), y));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (sw, se, ne, nw) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            match orientation {
                Orientation::Right => {
                    triangles.push([sw, se, ne]);
                    triangles.push([sw, ne, nw]);
                }
                Orientation::Left => {
                    triangles.push([sw, se, nw]);
                    triangles.push([se, ne, nw]);
                }
            }
        }
    }
    TriMesh::new(vertices, triangles)
}

/// Pressure (coarse) mesh together with its red refinement (velocity mesh).
#[derive(Debug, Clone)]
pub struct MacroMeshPair {
    pub coarse: Arc<TriMesh>,
    pub fine: Arc<TriMesh>,
    /// Parent coarse triangle of every fine triangle; children of coarse
    /// triangle `t` are `4t .. 4t + 4`.
    pub parent: Vec<usize>,
}

/// Splits every triangle into four through its edge midpoints.
///
/// Coarse vertices keep their indices in the fine mesh; midpoints follow in
/// order of first appearance. Children of `[a, b, c]` are the three corner
/// triangles at `a`, `b`, `c` followed by the central one.
pub fn refine_red(coarse: &TriMesh) -> Result<MacroMeshPair, MeshError> {
    let mut vertices = coarse.vertices.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * coarse.triangles.len() / 2 + 8);
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        *midpoints.entry(edge_key(a, b)).or_insert_with(|| {
            let (pa, pb) = (vertices[a], vertices[b]);
            vertices.push(Point::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y)));
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(4 * coarse.triangles.len());
    let mut parent = Vec::with_capacity(4 * coarse.triangles.len());
    for (t, &[a, b, c]) in coarse.triangles.iter().enumerate() {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        parent.extend_from_slice(&[t; 4]);
    }
    let fine = TriMesh::new(vertices, triangles)?;
    Ok(MacroMeshPair { coarse: Arc::new(coarse.clone()), fine: Arc::new(fine), parent })
}

/// Exchanges the interior diagonal of every coarse triangle with two boundary
/// edges and regenerates the refined mesh.
pub fn corner_swap(pair: &MacroMeshPair) -> Result<MacroMeshPair, MeshError> {
    let coarse = &pair.coarse;
    let counts = coarse.boundary_edge_counts();
    if counts.iter().any(|&c| c > 2) {
        return Err(MeshError::NotStructured("a triangle has three boundary edges".into()));
    }
    let corners: Vec<usize> = (0..counts.len()).filter(|&t| counts[t] == 2).collect();
    if corners.is_empty() {
        return Ok(pair.clone());
    }

    let mut owners: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in coarse.triangles.iter().enumerate() {
        for k in 0..3 {
            owners.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default().push(t);
        }
    }

    let mut triangles = coarse.triangles.clone();
    let mut touched = vec![false; triangles.len()];
    for &t in &corners {
        let tri = triangles[t];
        // rotate so that the corner vertex comes first; the opposite edge is interior
        let k = (0..3)
            .find(|&k| owners[&edge_key(tri[(k + 1) % 3], tri[(k + 2) % 3])].len() == 2)
            .ok_or_else(|| MeshError::NotStructured(format!("corner triangle {t} has no interior edge")))?;
        let (c, a, b) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
        let nb = owners[&edge_key(a, b)].iter().copied().find(|&o| o != t).unwrap();
        if counts[nb] == 2 {
            return Err(MeshError::DegenerateCorner(t));
        }
        if touched[nb] || touched[t] {
            return Err(MeshError::NotStructured(format!("corner triangles {t} and {nb} overlap")));
        }
        let ntri = triangles[nb];
        let d = *ntri.iter().find(|&&v| v != a && v != b).unwrap();
        let first = [c, a, d];
        let second = [c, d, b];
        let v = &coarse.vertices;
        let area = |q: [usize; 3]| signed_area(&[v[q[0]], v[q[1]], v[q[2]]]);
        if area(first) <= 0.0 || area(second) <= 0.0 {
            return Err(MeshError::NotStructured(format!("quadrilateral around corner triangle {t} is not convex")));
        }
        triangles[t] = first;
        triangles[nb] = second;
        touched[t] = true;
        touched[nb] = true;
    }

    let swapped = TriMesh::new(coarse.vertices.clone(), triangles)?;
    if swapped.boundary_edge_counts().iter().any(|&c| c >= 2) {
        return Err(MeshError::NotStructured("corner triangles remain after diagonal exchange".into()));
    }
    refine_red(&swapped)
}

/// Maps every vertex by `x ↦ a x + b`; orientation is re-normalized when
/// `det a < 0`.
pub fn affine_map_mesh(mesh: &TriMesh, a: &Matrix, b: &Vector) -> Result<TriMesh, MeshError> {
    if a.determinant() == 0.0 {
        return Err(MeshError::SingularMap);
    }
    let vertices = mesh.vertices.iter().map(|p| Point::from(a * p.coords + b)).collect();
    let tags = mesh
        .boundary_edges
        .iter()
        .map(|e| (edge_key(e.vertices[0], e.vertices[1]), e.tag))
        .collect();
    TriMesh::with_boundary_tags(vertices, mesh.triangles.clone(), &tags)
}

/// Reads an ASCII MSH 2.2 file.
pub fn import_msh(path: impl AsRef<Path>) -> Result<TriMesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_msh(&text)
}

/// Parses ASCII MSH 2.2 text containing 3-node triangles and 2-node lines
/// (1-node point elements are ignored). Unreferenced nodes are dropped.
pub fn parse_msh(text: &str) -> Result<TriMesh, MeshError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let err = |line: usize, msg: &str| MeshError::Parse { line, msg: msg.to_string() };

    let mut nodes: Vec<(u64, Point)> = Vec::new();
    let mut tris: Vec<[u64; 3]> = Vec::new();
    let mut segs: Vec<([u64; 2], i32)> = Vec::new();
    let mut saw_format = false;

    while let Some((ln, line)) = lines.next() {
        match line {
            "$MeshFormat" => {
                let (ln, format) = lines.next().ok_or_else(|| err(ln, "missing format line"))?;
                let mut it = format.split_whitespace();
                let version = it.next().ok_or_else(|| err(ln, "missing version"))?;
                let file_type = it.next().ok_or_else(|| err(ln, "missing file type"))?;
                if version != "2.2" {
                    return Err(MeshError::UnsupportedVersion(version.to_string()));
                }
                if file_type != "0" {
                    return Err(MeshError::UnsupportedVersion(format!("{version} (binary)")));
                }
                saw_format = true;
            }
            "$Nodes" => {
                let (ln, count) = lines.next().ok_or_else(|| err(ln, "missing node count"))?;
                let count: usize = count.parse().map_err(|_| err(ln, "bad node count"))?;
                nodes.reserve(count);
                for _ in 0..count {
                    let (ln, l) = lines.next().ok_or_else(|| err(ln, "truncated $Nodes"))?;
                    let f: Vec<&str> = l.split_whitespace().collect();
                    if f.len() < 3 {
                        return Err(err(ln, "node line needs id x y"));
                    }
                    let id = f[0].parse().map_err(|_| err(ln, "bad node id"))?;
                    let x = f[1].parse().map_err(|_| err(ln, "bad x coordinate"))?;
                    let y = f[2].parse().map_err(|_| err(ln, "bad y coordinate"))?;
                    nodes.push((id, Point::new(x, y)));
                }
            }
            "$Elements" => {
                let (ln, count) = lines.next().ok_or_else(|| err(ln, "missing element count"))?;
                let count: usize = count.parse().map_err(|_| err(ln, "bad element count"))?;
                for _ in 0..count {
                    let (ln, l) = lines.next().ok_or_else(|| err(ln, "truncated $Elements"))?;
                    let f: Vec<u64> = l
                        .split_whitespace()
                        .map(|s| s.parse::<u64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err(ln, "bad element line"))?;
                    if f.len() < 3 {
                        return Err(err(ln, "element line too short"));
                    }
                    let etype = f[1] as u32;
                    let ntags = f[2] as usize;
                    let conn = f.get(3 + ntags..).ok_or_else(|| err(ln, "element line too short"))?;
                    let tag = if ntags > 0 { f[3] as i32 } else { 1 };
                    match (etype, conn.len()) {
                        (2, 3) => tris.push([conn[0], conn[1], conn[2]]),
                        (1, 2) => segs.push(([conn[0], conn[1]], tag)),
                        (15, 1) => {}
                        (2 | 1 | 15, _) => return Err(err(ln, "wrong node count for element type")),
                        (t, _) => return Err(MeshError::UnsupportedElement(t)),
                    }
                }
            }
            _ => {}
        }
    }
    if !saw_format {
        return Err(MeshError::UnsupportedVersion("missing $MeshFormat".into()));
    }

    let by_id: HashMap<u64, usize> = nodes.iter().enumerate().map(|(i, (id, _))| (*id, i)).collect();
    let mut referenced = vec![false; nodes.len()];
    let mut lookup = |id: u64| -> Result<usize, MeshError> {
        let i = *by_id.get(&id).ok_or_else(|| err(0, &format!("element references unknown node {id}")))?;
        referenced[i] = true;
        Ok(i)
    };
    let tris: Vec<[usize; 3]> =
        tris.iter().map(|t| Ok([lookup(t[0])?, lookup(t[1])?, lookup(t[2])?])).collect::<Result<_, MeshError>>()?;
    let mut compact = vec![usize::MAX; nodes.len()];
    let mut vertices = Vec::new();
    for (i, (_, p)) in nodes.iter().enumerate() {
        if referenced[i] {
            compact[i] = vertices.len();
            vertices.push(*p);
        }
    }
    let triangles = tris.iter().map(|t| [compact[t[0]], compact[t[1]], compact[t[2]]]).collect();
    let mut tags = HashMap::new();
    for (s, tag) in &segs {
        if let (Some(&a), Some(&b)) = (by_id.get(&s[0]), by_id.get(&s[1])) {
            if compact[a] != usize::MAX && compact[b] != usize::MAX {
                tags.insert(edge_key(compact[a], compact[b]), *tag);
            }
        }
    }
    TriMesh::with_boundary_tags(vertices, triangles, &tags)
}
