//! Finite element spaces, degree-of-freedom numbering and deformation maps.

use std::sync::Arc;

use crate::geometry::{barycentric, signed_area, Triangle};
use crate::mesh::{MacroMeshPair, TriMesh};
use crate::{Matrix, Point, Vector};

#[derive(Debug, thiserror::Error)]
pub enum SpaceError {
    #[error("triangle index {index} out of range ({count} triangles)")]
    TriangleOutOfRange { index: usize, count: usize },
    #[error("coefficient vector has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("element {0} is degenerate under the deformation map")]
    DegenerateElement(usize),
}

/// Map from the solid reference configuration to the current one.
#[derive(Debug, Clone, PartialEq)]
pub enum DeformationMap {
    Identity,
    Affine { a: Matrix, b: Vector },
    /// Square `[-1, 1]²` onto the unit disk.
    Disk,
}

impl DeformationMap {
    pub fn eval(&self, s: Point) -> Point {
        match self {
            DeformationMap::Identity => s,
            DeformationMap::Affine { a, b } => Point::from(a * s.coords + b),
            DeformationMap::Disk => {
                Point::new(s.x * (1.0 - 0.5 * s.y * s.y).sqrt(), s.y * (1.0 - 0.5 * s.x * s.x).sqrt())
            }
        }
    }

    pub fn jacobian(&self, s: Point) -> Matrix {
        match self {
            DeformationMap::Identity => Matrix::identity(),
            DeformationMap::Affine { a, .. } => *a,
            DeformationMap::Disk => {
                let (x, y) = (s.x, s.y);
                let ry = (1.0 - 0.5 * y * y).sqrt();
                let rx = (1.0 - 0.5 * x * x).sqrt();
                Matrix::new(ry, -0.5 * x * y / ry, -0.5 * x * y / rx, rx)
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, DeformationMap::Identity)
    }
}

/// Affine interpolant of a deformation map on one solid triangle, fixed by
/// the images of the three vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineElementMap {
    pub reference: Triangle,
    pub image: Triangle,
    pub jac: Matrix,
    pub det: f64,
}

impl AffineElementMap {
    pub fn new(reference: Triangle, image: Triangle) -> Option<Self> {
        let e = |t: &Triangle| Matrix::from_columns(&[t[1] - t[0], t[2] - t[0]]);
        let inv = e(&reference).try_inverse()?;
        let jac = e(&image) * inv;
        let det = jac.determinant();
        (det != 0.0 && det.is_finite()).then_some(AffineElementMap { reference, image, jac, det })
    }

    pub fn forward(&self, s: Point) -> Point {
        self.image[0] + self.jac * (s - self.reference[0])
    }

    /// Barycentric coordinates (shared by both triangles) of an image point.
    pub fn pullback_bary(&self, x: Point) -> [f64; 3] {
        barycentric(&self.image, x)
    }

    pub fn pullback(&self, x: Point) -> Point {
        let b = self.pullback_bary(x);
        let r = &self.reference;
        Point::new(
            b[0] * r[0].x + b[1] * r[1].x + b[2] * r[2].x,
            b[0] * r[0].y + b[1] * r[1].y + b[2] * r[2].y,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    P1Scalar,
    P1Vector,
    /// Vector P1 on the refined mesh of a macro pair.
    P1IsoP2Vector,
    /// Continuous P1 plus one constant per triangle, stored `[P1 | P0]`.
    P1PlusP0Scalar,
}

#[derive(Debug, Clone)]
pub struct FeSpace {
    pub kind: SpaceKind,
    pub mesh: Arc<TriMesh>,
    pub dof_count: usize,
    pub n_p1: usize,
    pub n_p0: usize,
    /// Sorted constrained DOFs (velocity only).
    pub dirichlet: Vec<usize>,
}

/// P1 basis data of one triangle at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeValues {
    pub vertices: [usize; 3],
    pub values: [f64; 3],
    pub grads: [Vector; 3],
    /// DOF of the element indicator for P1+P0, whose value is 1.
    pub p0_dof: Option<usize>,
}

/// Constant gradients of the three barycentric coordinates.
pub fn p1_gradients(t: &Triangle) -> [Vector; 3] {
    let area2 = 2.0 * signed_area(t);
    let g = |a: Point, b: Point| Vector::new(a.y - b.y, b.x - a.x) / area2;
    [g(t[1], t[2]), g(t[2], t[0]), g(t[0], t[1])]
}

impl FeSpace {
    pub fn p1_scalar(mesh: Arc<TriMesh>) -> Self {
        let n = mesh.num_vertices();
        FeSpace { kind: SpaceKind::P1Scalar, mesh, dof_count: n, n_p1: n, n_p0: 0, dirichlet: Vec::new() }
    }

    pub fn p1_vector(mesh: Arc<TriMesh>) -> Self {
        let n = mesh.num_vertices();
        FeSpace { kind: SpaceKind::P1Vector, mesh, dof_count: 2 * n, n_p1: n, n_p0: 0, dirichlet: Vec::new() }
    }

    /// Velocity space on the refined mesh, homogeneous Dirichlet on the
    /// whole boundary.
    pub fn p1_iso_p2(pair: &MacroMeshPair) -> Self {
        let mesh = pair.fine.clone();
        let n = mesh.num_vertices();
        let mask = mesh.boundary_vertex_mask();
        let dirichlet = (0..n).filter(|&v| mask[v]).flat_map(|v| [2 * v, 2 * v + 1]).collect();
        FeSpace { kind: SpaceKind::P1IsoP2Vector, mesh, dof_count: 2 * n, n_p1: n, n_p0: 0, dirichlet }
    }

    pub fn p1_plus_p0(coarse: Arc<TriMesh>) -> Self {
        let (nv, nt) = (coarse.num_vertices(), coarse.num_triangles());
        FeSpace {
            kind: SpaceKind::P1PlusP0Scalar,
            mesh: coarse,
            dof_count: nv + nt,
            n_p1: nv,
            n_p0: nt,
            dirichlet: Vec::new(),
        }
    }

    pub fn is_vector(&self) -> bool {
        matches!(self.kind, SpaceKind::P1Vector | SpaceKind::P1IsoP2Vector)
    }

    /// Interleaved vector numbering: component `c` of vertex `v`.
    #[inline]
    pub fn dof(v: usize, c: usize) -> usize {
        2 * v + c
    }

    pub fn dirichlet_dofs(&self) -> &[usize] {
        &self.dirichlet
    }

    pub fn dirichlet_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.dof_count];
        for &d in &self.dirichlet {
            m[d] = true;
        }
        m
    }

    pub fn eval_basis(&self, t: usize, bary: [f64; 3]) -> Result<ShapeValues, SpaceError> {
        let count = self.mesh.num_triangles();
        if t >= count {
            return Err(SpaceError::TriangleOutOfRange { index: t, count });
        }
        Ok(ShapeValues {
            vertices: self.mesh.triangles()[t],
            values: bary,
            grads: p1_gradients(&self.mesh.triangle(t)),
            p0_dof: (self.kind == SpaceKind::P1PlusP0Scalar).then_some(self.n_p1 + t),
        })
    }

    /// Nodal interpolant of a scalar field; P0 coefficients are zero.
    pub fn interpolate_scalar(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        let mut c: Vec<f64> = self.mesh.vertices().iter().map(|&p| f(p)).collect();
        c.resize(self.dof_count, 0.0);
        c
    }

    pub fn interpolate_vector(&self, f: impl Fn(Point) -> Vector) -> Vec<f64> {
        self.mesh.vertices().iter().flat_map(|&p| {
            let v = f(p);
            [v.x, v.y]
        })
        .collect()
    }

    fn check_len(&self, coeffs: &[f64]) -> Result<(), SpaceError> {
        if coeffs.len() != self.dof_count {
            return Err(SpaceError::LengthMismatch { got: coeffs.len(), expected: self.dof_count });
        }
        Ok(())
    }

    /// Value and gradient of a scalar field on triangle `t`.
    pub fn eval_scalar(&self, coeffs: &[f64], t: usize, bary: [f64; 3]) -> Result<(f64, Vector), SpaceError> {
        self.check_len(coeffs)?;
        let sv = self.eval_basis(t, bary)?;
        let mut v = 0.0;
        let mut g = Vector::zeros();
        for k in 0..3 {
            let c = coeffs[sv.vertices[k]];
            v += c * sv.values[k];
            g += c * sv.grads[k];
        }
        if let Some(d) = sv.p0_dof {
            v += coeffs[d];
        }
        Ok((v, g))
    }

    /// Value and gradient (row `c` holds ∇ of component `c`) of a vector field.
    pub fn eval_vector(&self, coeffs: &[f64], t: usize, bary: [f64; 3]) -> Result<(Vector, Matrix), SpaceError> {
        self.check_len(coeffs)?;
        let sv = self.eval_basis(t, bary)?;
        let mut v = Vector::zeros();
        let mut g = Matrix::zeros();
        for k in 0..3 {
            let c = Vector::new(coeffs[Self::dof(sv.vertices[k], 0)], coeffs[Self::dof(sv.vertices[k], 1)]);
            v += c * sv.values[k];
            g += c * sv.grads[k].transpose();
        }
        Ok((v, g))
    }
}
