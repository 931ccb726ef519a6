//! Blocks and right-hand sides of the coupled saddle-point system
//!
//! ```text
//! [ A_f  Bᵀ  0     C_fᵀ ] [u]   [f]
//! [ B    0   0     0    ] [p] = [0]
//! [ 0    0   A_s  -C_sᵀ ] [X]   [g]
//! [ C_f  0  -C_s   0    ] [λ]   [d]
//! ```

use std::sync::Arc;

use crate::geometry::{
    barycentric, build_overlay_with_index, locate_point, signed_area, BoxIndex, GeometryError, Overlay, Triangle,
    EPS_BARY,
};
use crate::mesh::{MacroMeshPair, TriMesh};
use crate::quadrature::{gauss_rule, high_order_rule, map_bary, QuadratureError, QuadratureRule};
use crate::spaces::{p1_gradients, AffineElementMap, DeformationMap, FeSpace, SpaceError, SpaceKind};
use crate::sparse::{SparseMatrix, TripletBuilder};
use crate::{Matrix, Point, Vector};

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error("velocity and pressure spaces do not belong to the same macro mesh pair")]
    MismatchedPair,
    #[error("solid and multiplier spaces live on different meshes")]
    MismatchedMeshes,
    #[error("expected a {expected} space, got {got:?}")]
    WrongSpace { expected: &'static str, got: SpaceKind },
    #[error("quadrature node of solid triangle {solid} lies outside fluid triangle {fluid} (min barycentric {min_bary:e})")]
    NodeOutsideCell { solid: usize, fluid: usize, min_bary: f64 },
    #[error("solid triangle {0} is degenerate under the deformation map")]
    DegenerateElement(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Inner product used for the coupling terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingForm {
    L2,
    H1,
}

/// Strategy for the fluid–solid interface matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingMethod {
    /// Composite quadrature on the mesh intersection.
    Intersect,
    /// Quadrature on solid elements with located nodes, order 2.
    NoIntQ2,
    /// Same with the order-3 rule.
    NoIntQ3,
}

impl CouplingMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CouplingMethod::Intersect => "intersect",
            CouplingMethod::NoIntQ2 => "noint-q2",
            CouplingMethod::NoIntQ3 => "noint-q3",
        }
    }
}

/// Manufactured fields needed by the right-hand sides. Fluid quantities are
/// evaluated in Ω, solid quantities in reference coordinates on 𝓑.
pub trait ProblemData {
    fn velocity(&self, x: Point) -> Vector;
    /// Row `c` is the gradient of component `c`.
    fn velocity_grad(&self, x: Point) -> Matrix;
    /// ∫_t p, exact up to quadrature of the smooth part.
    fn pressure_integral(&self, t: &Triangle) -> f64;
    /// Strong fluid force `-Δu + ∇p`, with ∇p taken piecewise away from any
    /// pressure jump.
    fn fluid_force(&self, x: Point) -> Vector;
    /// `∫_t (p - p_smooth)` for the piecewise-constant part of a jumping
    /// pressure; zero for smooth pressures.
    fn pressure_jump_integral(&self, _t: &Triangle) -> f64 {
        0.0
    }
    fn displacement(&self, s: Point) -> Vector;
    fn displacement_grad(&self, s: Point) -> Matrix;
    /// Strong solid force `-ΔX`.
    fn solid_force(&self, s: Point) -> Vector;
    fn multiplier(&self, s: Point) -> Vector;
    fn multiplier_grad(&self, s: Point) -> Matrix;
}

fn require(space: &FeSpace, kinds: &[SpaceKind], expected: &'static str) -> Result<(), AssemblyError> {
    if kinds.contains(&space.kind) {
        Ok(())
    } else {
        Err(AssemblyError::WrongSpace { expected, got: space.kind })
    }
}

/// Vector P1 stiffness (∇u, ∇v) without boundary conditions.
pub fn assemble_stiffness(space: &FeSpace) -> Result<SparseMatrix, AssemblyError> {
    require(space, &[SpaceKind::P1Vector, SpaceKind::P1IsoP2Vector], "vector P1")?;
    let mesh = &space.mesh;
    let mut b = TripletBuilder::with_capacity(space.dof_count, space.dof_count, 18 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let area = signed_area(&tri);
        let g = p1_gradients(&tri);
        let v = mesh.triangles()[t];
        for i in 0..3 {
            for j in 0..3 {
                let k = area * g[i].dot(&g[j]);
                for c in 0..2 {
                    b.add(FeSpace::dof(v[i], c), FeSpace::dof(v[j], c), k);
                }
            }
        }
    }
    Ok(b.build())
}

/// Vector P1 mass matrix.
pub fn assemble_mass(space: &FeSpace) -> Result<SparseMatrix, AssemblyError> {
    require(space, &[SpaceKind::P1Vector, SpaceKind::P1IsoP2Vector], "vector P1")?;
    let mesh = &space.mesh;
    let mut b = TripletBuilder::with_capacity(space.dof_count, space.dof_count, 18 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let area = mesh.area(t);
        let v = mesh.triangles()[t];
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { area / 6.0 } else { area / 12.0 };
                for c in 0..2 {
                    b.add(FeSpace::dof(v[i], c), FeSpace::dof(v[j], c), m);
                }
            }
        }
    }
    Ok(b.build())
}

/// Fluid stiffness on the refined mesh; boundary conditions are applied on
/// the global system.
pub fn assemble_af(velocity: &FeSpace) -> Result<SparseMatrix, AssemblyError> {
    require(velocity, &[SpaceKind::P1IsoP2Vector], "P1-iso-P2 velocity")?;
    assemble_stiffness(velocity)
}

pub fn assemble_as(solid: &FeSpace) -> Result<SparseMatrix, AssemblyError> {
    require(solid, &[SpaceKind::P1Vector], "vector P1")?;
    assemble_stiffness(solid)
}

pub fn assemble_cs(solid: &FeSpace, multiplier: &FeSpace, form: CouplingForm) -> Result<SparseMatrix, AssemblyError> {
    require(solid, &[SpaceKind::P1Vector], "vector P1")?;
    require(multiplier, &[SpaceKind::P1Vector], "vector P1")?;
    if !Arc::ptr_eq(&solid.mesh, &multiplier.mesh) && *solid.mesh != *multiplier.mesh {
        return Err(AssemblyError::MismatchedMeshes);
    }
    let mass = assemble_mass(multiplier)?;
    Ok(match form {
        CouplingForm::L2 => mass,
        CouplingForm::H1 => mass.add(&assemble_stiffness(multiplier)?),
    })
}

/// `B_{ki} = -(div φ_i, ψ_k)`, integrated child by child against the parent's
/// pressure basis.
pub fn assemble_b(pair: &MacroMeshPair, velocity: &FeSpace, pressure: &FeSpace) -> Result<SparseMatrix, AssemblyError> {
    require(velocity, &[SpaceKind::P1IsoP2Vector], "P1-iso-P2 velocity")?;
    require(pressure, &[SpaceKind::P1Scalar, SpaceKind::P1PlusP0Scalar], "scalar pressure")?;
    if !Arc::ptr_eq(&pair.fine, &velocity.mesh) || !Arc::ptr_eq(&pair.coarse, &pressure.mesh) {
        return Err(AssemblyError::MismatchedPair);
    }
    let fine = &pair.fine;
    let coarse = &pair.coarse;
    let enriched = pressure.kind == SpaceKind::P1PlusP0Scalar;
    let mut b = TripletBuilder::with_capacity(pressure.dof_count, velocity.dof_count, 24 * fine.num_triangles());
    for t in 0..fine.num_triangles() {
        let tri = fine.triangle(t);
        let area = signed_area(&tri);
        let g = p1_gradients(&tri);
        let v = fine.triangles()[t];
        let parent = pair.parent[t];
        let centroid = map_bary(&tri, &[1.0 / 3.0; 3]);
        let psi = barycentric(&coarse.triangle(parent), centroid);
        let pv = coarse.triangles()[parent];
        for j in 0..3 {
            for c in 0..2 {
                let col = FeSpace::dof(v[j], c);
                let div = g[j][c];
                for k in 0..3 {
                    b.add(pv[k], col, -area * psi[k] * div);
                }
                if enriched {
                    b.add(pressure.n_p1 + parent, col, -area * div);
                }
            }
        }
    }
    Ok(b.build())
}

/// Straight-edge element maps of every solid triangle.
pub fn element_maps(solid: &TriMesh, xbar: &DeformationMap) -> Result<Vec<AffineElementMap>, AssemblyError> {
    (0..solid.num_triangles())
        .map(|s| {
            let r = solid.triangle(s);
            let m = AffineElementMap::new(r, r.map(|p| xbar.eval(p))).ok_or(AssemblyError::DegenerateElement(s))?;
            if m.det <= 0.0 {
                return Err(AssemblyError::DegenerateElement(s));
            }
            Ok(m)
        })
        .collect()
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn add_coupling_block(
    b: &mut TripletBuilder,
    form: CouplingForm,
    w: f64,
    mu_vertices: &[usize; 3],
    mu_vals: &[f64; 3],
    mu_grads: &[Vector; 3],
    phi_vertices: &[usize; 3],
    phi_vals: &[f64; 3],
    phi_grads_s: &[Vector; 3],
) {
    for a in 0..3 {
        for j in 0..3 {
            let mut v = mu_vals[a] * phi_vals[j];
            if form == CouplingForm::H1 {
                v += mu_grads[a].dot(&phi_grads_s[j]);
            }
            let v = w * v;
            for c in 0..2 {
                b.add(FeSpace::dof(mu_vertices[a], c), FeSpace::dof(phi_vertices[j], c), v);
            }
        }
    }
}

fn clamp_bary(b: [f64; 3]) -> [f64; 3] {
    let c = b.map(|l| l.clamp(0.0, 1.0));
    let s = c[0] + c[1] + c[2];
    c.map(|l| l / s)
}

/// Interface matrix by composite quadrature over the overlay cells.
pub fn assemble_cf_intersection(
    overlay: &Overlay,
    multiplier: &FeSpace,
    velocity: &FeSpace,
    maps: &[AffineElementMap],
    form: CouplingForm,
    rule: &QuadratureRule,
) -> Result<SparseMatrix, AssemblyError> {
    require(multiplier, &[SpaceKind::P1Vector], "vector P1")?;
    let solid = &multiplier.mesh;
    let fluid = &velocity.mesh;
    let mut b = TripletBuilder::new(multiplier.dof_count, velocity.dof_count);
    for s in 0..solid.num_triangles() {
        let em = &maps[s];
        let mu_vertices = solid.triangles()[s];
        let mu_grads = p1_gradients(&em.reference);
        let inv_det = 1.0 / em.det.abs();
        for cell in &overlay.cells[s] {
            let ftri = fluid.triangle(cell.fluid_tri);
            let phi_vertices = fluid.triangles()[cell.fluid_tri];
            let phi_grads_s = p1_gradients(&ftri).map(|g| em.jac.transpose() * g);
            for sub in &cell.sub_tris {
                let area = signed_area(sub);
                for (x, wk) in rule.points(sub) {
                    let phi = barycentric(&ftri, x);
                    let min_bary = phi.iter().copied().fold(f64::INFINITY, f64::min);
                    if min_bary < -EPS_BARY {
                        return Err(AssemblyError::NodeOutsideCell { solid: s, fluid: cell.fluid_tri, min_bary });
                    }
                    let mu = em.pullback_bary(x);
                    add_coupling_block(
                        &mut b,
                        form,
                        area * wk * inv_det,
                        &mu_vertices,
                        &mu,
                        &mu_grads,
                        &phi_vertices,
                        &clamp_bary(phi),
                        &phi_grads_s,
                    );
                }
            }
        }
    }
    Ok(b.build())
}

/// Interface matrix by quadrature on each solid element, locating every
/// mapped node in the fluid mesh.
pub fn assemble_cf_nointersection(
    multiplier: &FeSpace,
    velocity: &FeSpace,
    index: &BoxIndex,
    maps: &[AffineElementMap],
    form: CouplingForm,
    order: u32,
) -> Result<SparseMatrix, AssemblyError> {
    require(multiplier, &[SpaceKind::P1Vector], "vector P1")?;
    let rule = gauss_rule(order)?;
    let solid = &multiplier.mesh;
    let fluid = &velocity.mesh;
    let mut b = TripletBuilder::new(multiplier.dof_count, velocity.dof_count);
    for s in 0..solid.num_triangles() {
        let em = &maps[s];
        let mu_vertices = solid.triangles()[s];
        let mu_grads = p1_gradients(&em.reference);
        let area = signed_area(&em.reference);
        for (node, &wk) in rule.nodes.iter().zip(&rule.weights) {
            let x = map_bary(&em.image, node);
            let loc = locate_point(fluid, index, x)?;
            let ftri = fluid.triangle(loc.triangle);
            let phi_grads_s = p1_gradients(&ftri).map(|g| em.jac.transpose() * g);
            add_coupling_block(
                &mut b,
                form,
                area * wk,
                &mu_vertices,
                node,
                &mu_grads,
                &fluid.triangles()[loc.triangle],
                &loc.bary,
                &phi_grads_s,
            );
        }
    }
    Ok(b.build())
}

/// Meshes, spaces and geometric data shared by every assembly step.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub pair: MacroMeshPair,
    pub velocity: FeSpace,
    pub pressure: FeSpace,
    /// Displacement and multiplier space.
    pub solid: FeSpace,
    pub xbar: DeformationMap,
    pub index: BoxIndex,
    pub overlay: Overlay,
    pub maps: Vec<AffineElementMap>,
}

impl Discretization {
    /// `enriched` selects P1+P0 pressure instead of P1.
    pub fn new(
        pair: MacroMeshPair,
        enriched: bool,
        solid_mesh: Arc<TriMesh>,
        xbar: DeformationMap,
    ) -> Result<Self, AssemblyError> {
        let velocity = FeSpace::p1_iso_p2(&pair);
        let pressure = if enriched {
            FeSpace::p1_plus_p0(pair.coarse.clone())
        } else {
            FeSpace::p1_scalar(pair.coarse.clone())
        };
        let solid = FeSpace::p1_vector(solid_mesh);
        let index = BoxIndex::new(&pair.fine);
        let maps = element_maps(&solid.mesh, &xbar)?;
        let overlay = build_overlay_with_index(&solid.mesh, &xbar, &pair.fine, &index)?;
        Ok(Discretization { pair, velocity, pressure, solid, xbar, index, overlay, maps })
    }

    pub fn cf(&self, method: CouplingMethod, form: CouplingForm) -> Result<SparseMatrix, AssemblyError> {
        match method {
            CouplingMethod::Intersect => {
                assemble_cf_intersection(&self.overlay, &self.solid, &self.velocity, &self.maps, form, &gauss_rule(2)?)
            }
            CouplingMethod::NoIntQ2 => {
                assemble_cf_nointersection(&self.solid, &self.velocity, &self.index, &self.maps, form, 2)
            }
            CouplingMethod::NoIntQ3 => {
                assemble_cf_nointersection(&self.solid, &self.velocity, &self.index, &self.maps, form, 3)
            }
        }
    }
}

/// How the volume data of `f` and `g` enter the loads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LoadKind {
    /// Strong forces interpolated in P1 and multiplied by the mass matrix;
    /// the Neumann trace of X on ∂𝓑 and pressure jumps are integrated exactly.
    #[default]
    Interpolated,
    /// Weak forms `(∇u, ∇φ) - (p, div φ)` and `(∇X, ∇χ)` by the degree-6 rule.
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RhsOptions {
    pub loads: LoadKind,
    /// Integrate `d` on the overlay sub-triangles instead of the solid elements.
    pub d_via_overlay: bool,
}

fn add_into(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

/// `(∇u, ∇φ) - (p, div φ)` by quadrature.
fn fluid_load_weak(disc: &Discretization, data: &dyn ProblemData) -> Vec<f64> {
    let fine = &disc.velocity.mesh;
    let rule = high_order_rule();
    let mut f = vec![0.0; disc.velocity.dof_count];
    for t in 0..fine.num_triangles() {
        let tri = fine.triangle(t);
        let area = signed_area(&tri);
        let g = p1_gradients(&tri);
        let v = fine.triangles()[t];
        let mut grad_int = Matrix::zeros();
        for (x, w) in rule.points(&tri) {
            grad_int += w * data.velocity_grad(x);
        }
        grad_int *= area;
        let p_int = data.pressure_integral(&tri);
        for j in 0..3 {
            for c in 0..2 {
                f[FeSpace::dof(v[j], c)] += grad_int.row(c).transpose().dot(&g[j]) - p_int * g[j][c];
            }
        }
    }
    f
}

/// `M I(-Δu + ∇p) - ∫ [p] div φ`.
fn fluid_load_interpolated(disc: &Discretization, data: &dyn ProblemData) -> Result<Vec<f64>, AssemblyError> {
    let fine = &disc.velocity.mesh;
    let mut f = assemble_mass(&disc.velocity)?.mul_vec(&disc.velocity.interpolate_vector(|x| data.fluid_force(x)));
    for t in 0..fine.num_triangles() {
        let tri = fine.triangle(t);
        let jump = data.pressure_jump_integral(&tri);
        if jump == 0.0 {
            continue;
        }
        let g = p1_gradients(&tri);
        let v = fine.triangles()[t];
        for j in 0..3 {
            for c in 0..2 {
                f[FeSpace::dof(v[j], c)] -= jump * g[j][c];
            }
        }
    }
    Ok(f)
}

/// `c(λ, φ∘X̄_h)` on the overlay.
fn coupling_load(disc: &Discretization, data: &dyn ProblemData, form: CouplingForm) -> Vec<f64> {
    let fine = &disc.velocity.mesh;
    let rule = high_order_rule();
    let mut f = vec![0.0; disc.velocity.dof_count];
    let solid = &disc.solid.mesh;
    for s in 0..solid.num_triangles() {
        let em = &disc.maps[s];
        let inv_det = 1.0 / em.det.abs();
        for cell in &disc.overlay.cells[s] {
            let ftri = fine.triangle(cell.fluid_tri);
            let v = fine.triangles()[cell.fluid_tri];
            let phi_grads_s = p1_gradients(&ftri).map(|g| em.jac.transpose() * g);
            for sub in &cell.sub_tris {
                let area = signed_area(sub);
                for (x, wk) in rule.points(sub) {
                    let w = area * wk * inv_det;
                    let sp = em.pullback(x);
                    let lam = data.multiplier(sp);
                    let glam = data.multiplier_grad(sp);
                    let phi = clamp_bary(barycentric(&ftri, x));
                    for j in 0..3 {
                        for c in 0..2 {
                            let mut val = lam[c] * phi[j];
                            if form == CouplingForm::H1 {
                                val += glam.row(c).transpose().dot(&phi_grads_s[j]);
                            }
                            f[FeSpace::dof(v[j], c)] += w * val;
                        }
                    }
                }
            }
        }
    }
    f
}

/// Fluid load: `(-Δu + ∇p, φ) + c(λ, φ∘X̄_h)`.
pub fn assemble_f(
    disc: &Discretization,
    data: &dyn ProblemData,
    form: CouplingForm,
    loads: LoadKind,
) -> Result<Vec<f64>, AssemblyError> {
    let mut f = match loads {
        LoadKind::Interpolated => fluid_load_interpolated(disc, data)?,
        LoadKind::Quadrature => fluid_load_weak(disc, data),
    };
    add_into(&mut f, &coupling_load(disc, data, form));
    Ok(f)
}

/// Five-point Gauss–Legendre rule on [0, 1].
const EDGE_RULE: [(f64, f64); 5] = [
    (0.046_910_077_030_668_0, 0.118_463_442_528_094_5),
    (0.230_765_344_947_158_5, 0.239_314_335_249_683_2),
    (0.5, 0.284_444_444_444_444_4),
    (0.769_234_655_052_841_5, 0.239_314_335_249_683_2),
    (0.953_089_922_969_332, 0.118_463_442_528_094_5),
];

/// `(∇X, ∇χ)` split as `M I(-ΔX) + ∫_∂𝓑 (∇X n)·χ`.
fn solid_load_interpolated(disc: &Discretization, data: &dyn ProblemData) -> Result<Vec<f64>, AssemblyError> {
    let mesh = &disc.solid.mesh;
    let mut g = assemble_mass(&disc.solid)?.mul_vec(&disc.solid.interpolate_vector(|s| data.solid_force(s)));
    for edge in mesh.boundary_edges() {
        let [a, b] = edge.vertices;
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let d = pb - pa;
        // counter-clockwise boundary traversal: outward normal on the right
        let normal = Vector::new(d.y, -d.x) / d.norm();
        for (t, w) in EDGE_RULE {
            let traction = data.displacement_grad(pa + d * t) * normal;
            for (v, chi) in [(a, 1.0 - t), (b, t)] {
                for c in 0..2 {
                    g[FeSpace::dof(v, c)] += d.norm() * w * traction[c] * chi;
                }
            }
        }
    }
    Ok(g)
}

/// Solid load: `(-ΔX, χ) + ((∇X) n, χ)_∂𝓑 - c(λ, χ)`.
pub fn assemble_g(
    disc: &Discretization,
    data: &dyn ProblemData,
    form: CouplingForm,
    loads: LoadKind,
) -> Result<Vec<f64>, AssemblyError> {
    let mesh = &disc.solid.mesh;
    let rule = high_order_rule();
    let mut g = match loads {
        LoadKind::Interpolated => solid_load_interpolated(disc, data)?,
        LoadKind::Quadrature => vec![0.0; disc.solid.dof_count],
    };
    for s in 0..mesh.num_triangles() {
        let tri = mesh.triangle(s);
        let area = signed_area(&tri);
        let grads = p1_gradients(&tri);
        let v = mesh.triangles()[s];
        for (node, &wk) in rule.nodes.iter().zip(&rule.weights) {
            let x = map_bary(&tri, node);
            let w = area * wk;
            let gx = data.displacement_grad(x);
            let lam = data.multiplier(x);
            let glam = data.multiplier_grad(x);
            for a in 0..3 {
                for c in 0..2 {
                    let mut val = -lam[c] * node[a];
                    if loads == LoadKind::Quadrature {
                        val += gx.row(c).transpose().dot(&grads[a]);
                    }
                    if form == CouplingForm::H1 {
                        val -= glam.row(c).transpose().dot(&grads[a]);
                    }
                    g[FeSpace::dof(v[a], c)] += w * val;
                }
            }
        }
    }
    Ok(g)
}

/// Constraint load: `c(ζ, u∘X̄_h - X)`.
pub fn assemble_d(
    disc: &Discretization,
    data: &dyn ProblemData,
    form: CouplingForm,
    via_overlay: bool,
) -> Vec<f64> {
    let mesh = &disc.solid.mesh;
    let rule = high_order_rule();
    let mut d = vec![0.0; disc.solid.dof_count];
    let mut add = |v: &[usize; 3], zeta: &[f64; 3], grads: &[Vector; 3], em: &AffineElementMap, s: Point, w: f64| {
        let x = em.forward(s);
        let diff = data.velocity(x) - data.displacement(s);
        let gdiff = data.velocity_grad(x) * em.jac - data.displacement_grad(s);
        for a in 0..3 {
            for c in 0..2 {
                let mut val = diff[c] * zeta[a];
                if form == CouplingForm::H1 {
                    val += gdiff.row(c).transpose().dot(&grads[a]);
                }
                d[FeSpace::dof(v[a], c)] += w * val;
            }
        }
    };
    for s in 0..mesh.num_triangles() {
        let em = &disc.maps[s];
        let v = mesh.triangles()[s];
        let grads = p1_gradients(&em.reference);
        if via_overlay {
            let inv_det = 1.0 / em.det.abs();
            for cell in &disc.overlay.cells[s] {
                for sub in &cell.sub_tris {
                    let area = signed_area(sub);
                    for (x, wk) in rule.points(sub) {
                        let zeta = em.pullback_bary(x);
                        add(&v, &zeta, &grads, em, em.pullback(x), area * wk * inv_det);
                    }
                }
            }
        } else {
            let area = signed_area(&em.reference);
            for (node, &wk) in rule.nodes.iter().zip(&rule.weights) {
                add(&v, node, &grads, em, map_bary(&em.reference, node), area * wk);
            }
        }
    }
    d
}

/// `∫_Ω ψ_k` for every pressure basis function.
pub fn pressure_weights(pressure: &FeSpace) -> Vec<f64> {
    let mesh = &pressure.mesh;
    let mut w = vec![0.0; pressure.dof_count];
    for t in 0..mesh.num_triangles() {
        let area = mesh.area(t);
        for &v in &mesh.triangles()[t] {
            w[v] += area / 3.0;
        }
        if pressure.kind == SpaceKind::P1PlusP0Scalar {
            w[pressure.n_p1 + t] = area;
        }
    }
    w
}

/// Assembled blocks, loads and field offsets.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub af: SparseMatrix,
    pub b: SparseMatrix,
    pub as_: SparseMatrix,
    pub cs: SparseMatrix,
    pub cf: SparseMatrix,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub d: Vec<f64>,
    /// Start of the u, p, X and λ unknowns in the global vector.
    pub offsets: [usize; 4],
    pub size: usize,
    pub dirichlet: Vec<usize>,
    /// Number of continuous pressure DOFs (the remainder are P0).
    pub n_p1: usize,
    /// Integral over Ω of every pressure basis function.
    pub pressure_weights: Vec<f64>,
    pub domain_area: f64,
}

impl CoupledSystem {
    pub fn assemble(
        disc: &Discretization,
        data: &dyn ProblemData,
        method: CouplingMethod,
        form: CouplingForm,
        opts: RhsOptions,
    ) -> Result<Self, AssemblyError> {
        let cf = disc.cf(method, form)?;
        Self::from_parts(disc, data, cf, form, opts)
    }

    /// Assembles everything except the interface matrix, which is supplied.
    pub fn from_parts(
        disc: &Discretization,
        data: &dyn ProblemData,
        cf: SparseMatrix,
        form: CouplingForm,
        opts: RhsOptions,
    ) -> Result<Self, AssemblyError> {
        let af = assemble_af(&disc.velocity)?;
        let b = assemble_b(&disc.pair, &disc.velocity, &disc.pressure)?;
        let as_ = assemble_as(&disc.solid)?;
        let cs = assemble_cs(&disc.solid, &disc.solid, form)?;
        let f = assemble_f(disc, data, form, opts.loads)?;
        let g = assemble_g(disc, data, form, opts.loads)?;
        let d = assemble_d(disc, data, form, opts.d_via_overlay);
        let nu = disc.velocity.dof_count;
        let np = disc.pressure.dof_count;
        let nx = disc.solid.dof_count;
        let offsets = [0, nu, nu + np, nu + np + nx];
        Ok(CoupledSystem {
            af,
            b,
            as_,
            cs,
            cf,
            f,
            g,
            d,
            offsets,
            size: nu + np + 2 * nx,
            dirichlet: disc.velocity.dirichlet.clone(),
            n_p1: disc.pressure.n_p1,
            pressure_weights: pressure_weights(&disc.pressure),
            domain_area: disc.pressure.mesh.total_area(),
        })
    }

    pub fn num_velocity(&self) -> usize {
        self.offsets[1]
    }

    pub fn num_pressure(&self) -> usize {
        self.offsets[2] - self.offsets[1]
    }

    pub fn num_solid(&self) -> usize {
        self.offsets[3] - self.offsets[2]
    }

    /// Global block matrix with Dirichlet rows and columns replaced by identity.
    pub fn matrix(&self) -> SparseMatrix {
        let mut fixed = vec![false; self.size];
        for &i in &self.dirichlet {
            fixed[i] = true;
        }
        let [ou, op, ox, ol] = self.offsets;
        let nnz = self.af.nnz() + 2 * self.b.nnz() + self.as_.nnz() + 2 * self.cs.nnz() + 2 * self.cf.nnz();
        let mut t = TripletBuilder::with_capacity(self.size, self.size, nnz);
        let mut put = |i: usize, j: usize, v: f64| {
            if !fixed[i] && !fixed[j] {
                t.add(i, j, v);
            }
        };
        for (i, j, v) in self.af.iter() {
            put(ou + i, ou + j, v);
        }
        for (i, j, v) in self.b.iter() {
            put(op + i, ou + j, v);
            put(ou + j, op + i, v);
        }
        for (i, j, v) in self.as_.iter() {
            put(ox + i, ox + j, v);
        }
        for (i, j, v) in self.cs.iter() {
            put(ol + i, ox + j, -v);
            put(ox + j, ol + i, -v);
        }
        for (i, j, v) in self.cf.iter() {
            put(ol + i, ou + j, v);
            put(ou + j, ol + i, v);
        }
        for &i in &self.dirichlet {
            t.add(i, i, 1.0);
        }
        t.build()
    }

    /// Global load with zeros on Dirichlet rows and the divergence rows.
    pub fn rhs(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.size];
        r[..self.offsets[1]].copy_from_slice(&self.f);
        r[self.offsets[2]..self.offsets[3]].copy_from_slice(&self.g);
        r[self.offsets[3]..].copy_from_slice(&self.d);
        for &i in &self.dirichlet {
            r[i] = 0.0;
        }
        r
    }
}
