//! Geometric kernel: bounding boxes, convex clipping, fan triangulation,
//! point location and the overlay of mapped solid elements on the fluid mesh.

use crate::mesh::TriMesh;
use crate::spaces::DeformationMap;
use crate::Point;

/// Point location tolerance on barycentric coordinates.
pub const EPS_BARY: f64 = 1e-12;
/// Sliver threshold relative to the area of the enclosing bounding box.
pub const EPS_AREA_REL: f64 = 1e-14;
/// Relative area deficit above which a solid element counts as uncovered.
pub const COVERAGE_TOL: f64 = 1e-10;

const SIDE_TOL: f64 = 1e-13;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate triangle (area {0:e})")]
    DegenerateTriangle(f64),
    #[error("polygon with {0} vertices cannot be triangulated")]
    EmptyPolygon(usize),
    #[error("point ({x}, {y}) is outside the mesh")]
    PointNotFound { x: f64, y: f64 },
    #[error("solid triangle {triangle} is not covered by the fluid mesh (relative area deficit {deficit:e})")]
    Coverage { triangle: usize, deficit: f64 },
    #[error("solid triangle {0} is degenerate or inverted under the deformation map")]
    InvertedElement(usize),
}

pub type Triangle = [Point; 3];

/// Signed area, positive for counter-clockwise triangles.
pub fn signed_area(t: &Triangle) -> f64 {
    0.5 * cross(t[1] - t[0], t[2] - t[0])
}

#[inline]
fn cross(a: crate::Vector, b: crate::Vector) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Shoelace area of a closed vertex loop.
pub fn polygon_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    // fan from the first vertex keeps the products small
    let o = vertices[0];
    let mut s = 0.0;
    for i in 1..n - 1 {
        s += cross(vertices[i] - o, vertices[i + 1] - o);
    }
    0.5 * s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Aabb { min, max }
    }

    pub fn empty() -> Self {
        Aabb {
            min: Point::new(f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points(points: impl IntoIterator<Item = Point>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        b
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x && other.min.x <= self.max.x && self.min.y <= other.max.y && other.min.y <= self.max.y
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn inflate(&self, d: f64) -> Aabb {
        Aabb {
            min: Point::new(self.min.x - d, self.min.y - d),
            max: Point::new(self.max.x + d, self.max.y + d),
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: Point::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            max: Point::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        }
    }
}

/// Counter-clockwise convex polygon; empty or at least three vertices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexPolygon {
    pub vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn empty() -> Self {
        ConvexPolygon { vertices: Vec::new() }
    }

    pub fn from_triangle(t: &Triangle) -> Self {
        ConvexPolygon { vertices: t.to_vec() }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }

    /// Arithmetic mean of the vertices.
    pub fn vertex_centroid(&self) -> Point {
        let n = self.vertices.len() as f64;
        let (sx, sy) = self.vertices.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / n, sy / n)
    }
}

/// Clips `subject` against the convex CCW polygon `clip` one clip edge at a
/// time. Slivers of area below `eps_area` come back empty.
pub fn clip_convex(subject: &[Point], clip: &[Point], eps_area: f64) -> ConvexPolygon {
    let mut poly: Vec<Point> = subject.to_vec();
    let mut next_poly: Vec<Point> = Vec::with_capacity(subject.len() + clip.len());
    let m = clip.len();
    for e in 0..m {
        if poly.len() < 3 {
            return ConvexPolygon::empty();
        }
        let (p, q) = (clip[e], clip[(e + 1) % m]);
        let pq = q - p;
        let tol = SIDE_TOL * pq.norm_squared();
        let side = |x: Point| cross(pq, x - p);
        next_poly.clear();
        let n = poly.len();
        for i in 0..n {
            let (cur, next) = (poly[i], poly[(i + 1) % n]);
            let (sc, sn) = (side(cur), side(next));
            let cur_in = sc >= -tol;
            let next_in = sn >= -tol;
            if next_in {
                if !cur_in && sn > tol {
                    next_poly.push(intersect(cur, next, sc, sn));
                }
                next_poly.push(next);
            } else if cur_in && sc > tol {
                next_poly.push(intersect(cur, next, sc, sn));
            }
        }
        std::mem::swap(&mut poly, &mut next_poly);
    }
    cleanup(poly, eps_area)
}

fn intersect(a: Point, b: Point, sa: f64, sb: f64) -> Point {
    let t = sa / (sa - sb);
    a + (b - a) * t
}

fn cleanup(mut poly: Vec<Point>, eps_area: f64) -> ConvexPolygon {
    if poly.len() < 3 {
        return ConvexPolygon::empty();
    }
    let scale = Aabb::from_points(poly.iter().copied());
    let dtol = SIDE_TOL * (scale.width() + scale.height());
    // near-duplicate vertices
    let mut out: Vec<Point> = Vec::with_capacity(poly.len());
    for &p in &poly {
        if out.last().is_none_or(|&l: &Point| (p - l).norm() > dtol) {
            out.push(p);
        }
    }
    while out.len() > 1 && (out[0] - out[out.len() - 1]).norm() <= dtol {
        out.pop();
    }
    poly = out;
    // collinear vertices
    let mut changed = true;
    while changed && poly.len() >= 3 {
        changed = false;
        let n = poly.len();
        for i in 0..n {
            let (a, b, c) = (poly[(i + n - 1) % n], poly[i], poly[(i + 1) % n]);
            let (u, v) = (b - a, c - b);
            if cross(u, v).abs() <= SIDE_TOL * u.norm() * v.norm() {
                poly.remove(i);
                changed = true;
                break;
            }
        }
    }
    if poly.len() < 3 || polygon_area(&poly) < eps_area {
        return ConvexPolygon::empty();
    }
    ConvexPolygon { vertices: poly }
}

/// Intersection of two triangles with the sliver threshold scaled by their
/// joint bounding box.
pub fn clip_triangle_triangle(subject: &Triangle, clip: &Triangle) -> Result<ConvexPolygon, GeometryError> {
    let bbox = Aabb::from_points(subject.iter().chain(clip.iter()).copied());
    clip_triangle_triangle_eps(subject, clip, EPS_AREA_REL * bbox.area())
}

pub fn clip_triangle_triangle_eps(
    subject: &Triangle,
    clip: &Triangle,
    eps_area: f64,
) -> Result<ConvexPolygon, GeometryError> {
    for t in [subject, clip] {
        let a = signed_area(t);
        if a.abs() <= eps_area {
            return Err(GeometryError::DegenerateTriangle(a));
        }
    }
    let orient = |t: &Triangle| if signed_area(t) < 0.0 { [t[0], t[2], t[1]] } else { *t };
    Ok(clip_convex(&orient(subject), &orient(clip), eps_area))
}

/// Splits a convex polygon into triangles. A triangle is returned as is;
/// otherwise one triangle per edge around the vertex centroid.
pub fn fan_triangulate(poly: &ConvexPolygon) -> Result<Vec<Triangle>, GeometryError> {
    let v = &poly.vertices;
    match v.len() {
        0..=2 => Err(GeometryError::EmptyPolygon(v.len())),
        3 => Ok(vec![[v[0], v[1], v[2]]]),
        n => {
            let c = poly.vertex_centroid();
            Ok((0..n).map(|i| [c, v[i], v[(i + 1) % n]]).collect())
        }
    }
}

/// Barycentric coordinates of `p` with respect to `t`.
pub fn barycentric(t: &Triangle, p: Point) -> [f64; 3] {
    let d = cross(t[1] - t[0], t[2] - t[0]);
    let l1 = cross(p - t[0], t[2] - t[0]) / d;
    let l2 = cross(t[1] - t[0], p - t[0]) / d;
    [1.0 - l1 - l2, l1, l2]
}

/// Uniform bin grid over triangle bounding boxes.
#[derive(Debug, Clone)]
pub struct BoxIndex {
    bounds: Aabb,
    nx: usize,
    ny: usize,
    cell_w: f64,
    cell_h: f64,
    bins: Vec<Vec<usize>>,
    boxes: Vec<Aabb>,
}

impl BoxIndex {
    pub fn new(mesh: &TriMesh) -> Self {
        let tris: Vec<Triangle> = (0..mesh.num_triangles()).map(|t| mesh.triangle(t)).collect();
        Self::from_triangles(&tris)
    }

    pub fn from_triangles(tris: &[Triangle]) -> Self {
        let bounds = Aabb::from_points(tris.iter().flat_map(|t| t.iter().copied()));
        let pad = 1e-12 * (bounds.width() + bounds.height()).max(f64::MIN_POSITIVE);
        let boxes: Vec<Aabb> = tris.iter().map(|t| Aabb::from_points(t.iter().copied()).inflate(pad)).collect();
        let bounds = bounds.inflate(2.0 * pad);
        let side = ((tris.len() as f64).sqrt().ceil() as usize).max(1);
        let aspect = (bounds.width() / bounds.height()).clamp(1e-3, 1e3);
        let nx = ((side as f64 * aspect.sqrt()).round() as usize).max(1);
        let ny = ((side as f64 / aspect.sqrt()).round() as usize).max(1);
        let mut index = BoxIndex {
            bounds,
            nx,
            ny,
            cell_w: bounds.width() / nx as f64,
            cell_h: bounds.height() / ny as f64,
            bins: vec![Vec::new(); nx * ny],
            boxes,
        };
        for t in 0..index.boxes.len() {
            let (i0, i1, j0, j1) = index.bin_range(&index.boxes[t]);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    index.bins[j * nx + i].push(t);
                }
            }
        }
        index
    }

    fn bin_range(&self, b: &Aabb) -> (usize, usize, usize, usize) {
        let clamp_x = |x: f64| (((x - self.bounds.min.x) / self.cell_w).floor().max(0.0) as usize).min(self.nx - 1);
        let clamp_y = |y: f64| (((y - self.bounds.min.y) / self.cell_h).floor().max(0.0) as usize).min(self.ny - 1);
        (clamp_x(b.min.x), clamp_x(b.max.x), clamp_y(b.min.y), clamp_y(b.max.y))
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// Sorted indices of all triangles whose bounding box meets `b`.
    pub fn query(&self, b: &Aabb) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.bounds.intersects(b) {
            return out;
        }
        let (i0, i1, j0, j1) = self.bin_range(b);
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.extend(self.bins[j * self.nx + i].iter().copied().filter(|&t| self.boxes[t].intersects(b)));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn query_point(&self, p: Point) -> Vec<usize> {
        self.query(&Aabb::new(p, p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLocation {
    pub triangle: usize,
    pub bary: [f64; 3],
}

/// Finds the lowest-index triangle containing `p` up to [`EPS_BARY`];
/// coordinates are clamped to `[0, 1]` and renormalized.
pub fn locate_point(mesh: &TriMesh, index: &BoxIndex, p: Point) -> Result<PointLocation, GeometryError> {
    for t in index.query_point(p) {
        let b = barycentric(&mesh.triangle(t), p);
        if b.iter().all(|&l| l >= -EPS_BARY) {
            let c = b.map(|l| l.clamp(0.0, 1.0));
            let s = c[0] + c[1] + c[2];
            return Ok(PointLocation { triangle: t, bary: c.map(|l| l / s) });
        }
    }
    Err(GeometryError::PointNotFound { x: p.x, y: p.y })
}

/// Part of a mapped solid triangle lying in one fluid triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayCell {
    pub fluid_tri: usize,
    pub polygon: ConvexPolygon,
    pub sub_tris: Vec<Triangle>,
}

impl OverlayCell {
    pub fn area(&self) -> f64 {
        self.sub_tris.iter().map(signed_area).sum()
    }
}

/// Decomposition of every straight-edge image of a solid triangle into
/// pieces of fluid triangles, ordered by solid triangle index.
#[derive(Debug, Clone)]
pub struct Overlay {
    /// Image of each solid triangle under the vertex-interpolated map.
    pub mapped: Vec<Triangle>,
    pub cells: Vec<Vec<OverlayCell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayStats {
    pub solid_triangles: usize,
    pub cells: usize,
    pub sub_triangles: usize,
    pub mapped_area: f64,
    pub covered_area: f64,
    /// Largest relative area defect over solid triangles.
    pub max_defect: f64,
    pub max_cells_per_triangle: usize,
}

impl Overlay {
    pub fn cell_count(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    pub fn sub_triangle_count(&self) -> usize {
        self.cells.iter().flatten().map(|c| c.sub_tris.len()).sum()
    }

    pub fn stats(&self) -> OverlayStats {
        let mut max_defect: f64 = 0.0;
        let mut covered = 0.0;
        for (s, cells) in self.cells.iter().enumerate() {
            let a = signed_area(&self.mapped[s]);
            let c: f64 = cells.iter().map(OverlayCell::area).sum();
            covered += c;
            max_defect = max_defect.max((a - c).abs() / a);
        }
        OverlayStats {
            solid_triangles: self.mapped.len(),
            cells: self.cell_count(),
            sub_triangles: self.sub_triangle_count(),
            mapped_area: self.mapped.iter().map(signed_area).sum(),
            covered_area: covered,
            max_defect,
            max_cells_per_triangle: self.cells.iter().map(Vec::len).max().unwrap_or(0),
        }
    }
}

/// Images of the solid triangles under the straight-edge interpolant of `xbar`.
pub fn mapped_triangles(solid: &TriMesh, xbar: &DeformationMap) -> Result<Vec<Triangle>, GeometryError> {
    (0..solid.num_triangles())
        .map(|s| {
            let t = solid.triangle(s).map(|p| xbar.eval(p));
            if signed_area(&t) > 0.0 {
                Ok(t)
            } else {
                Err(GeometryError::InvertedElement(s))
            }
        })
        .collect()
}

pub fn build_overlay(solid: &TriMesh, xbar: &DeformationMap, fluid: &TriMesh) -> Result<Overlay, GeometryError> {
    build_overlay_with_index(solid, xbar, fluid, &BoxIndex::new(fluid))
}

pub fn build_overlay_with_index(
    solid: &TriMesh,
    xbar: &DeformationMap,
    fluid: &TriMesh,
    index: &BoxIndex,
) -> Result<Overlay, GeometryError> {
    let eps_area = EPS_AREA_REL * fluid.bbox().area();
    let mapped = mapped_triangles(solid, xbar)?;
    let mut cells = Vec::with_capacity(mapped.len());
    for (s, t) in mapped.iter().enumerate() {
        let bbox = Aabb::from_points(t.iter().copied());
        let mut list = Vec::new();
        for f in index.query(&bbox) {
            let poly = clip_convex(t, &fluid.triangle(f), eps_area);
            if poly.is_empty() {
                continue;
            }
            let sub_tris = fan_triangulate(&poly)?;
            list.push(OverlayCell { fluid_tri: f, polygon: poly, sub_tris });
        }
        let area = signed_area(t);
        let covered: f64 = list.iter().map(OverlayCell::area).sum();
        let deficit = (area - covered) / area;
        if deficit.abs() > COVERAGE_TOL {
            return Err(GeometryError::Coverage { triangle: s, deficit });
        }
        cells.push(list);
    }
    Ok(Overlay { mapped, cells })
}
