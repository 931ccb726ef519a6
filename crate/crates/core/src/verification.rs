//! Manufactured solutions, the eight test configurations, error norms and
//! convergence tables.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use crate::assembly::{AssemblyError, CoupledSystem, CouplingForm, CouplingMethod, Discretization, ProblemData, RhsOptions};
use crate::geometry::{barycentric, clip_convex, fan_triangulate, signed_area, Aabb, Triangle};
use crate::mesh::{affine_map_mesh, build_uniform, corner_swap, import_msh, refine_red, MeshError, Orientation, TriMesh};
use crate::quadrature::high_order_rule;
use crate::solver::{solve, SolveOptions, SolveReport, Solution, SolverError};
use crate::spaces::{DeformationMap, FeSpace};
use crate::{Matrix, Point, Vector};

#[derive(Debug, thiserror::Error)]
pub enum VerificationError {
    #[error("unknown test {0} (expected 1..=8)")]
    UnknownTest(u32),
    #[error("fixture mesh not found: {}", .0.display())]
    MissingFixture(PathBuf),
    #[error("invalid levels: {0}")]
    BadLevels(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl VerificationError {
    pub fn is_internal(&self) -> bool {
        matches!(
            self,
            VerificationError::Solver(SolverError::Singular { .. })
                | VerificationError::Assembly(AssemblyError::NodeOutsideCell { .. })
        )
    }
}

/// Stream function factor `(4 - t²)²` and its derivatives.
fn a0(t: f64) -> f64 {
    let s = 4.0 - t * t;
    s * s
}

fn a1(t: f64) -> f64 {
    -4.0 * t * (4.0 - t * t)
}

fn a2(t: f64) -> f64 {
    12.0 * t * t - 16.0
}

#[derive(Debug, Clone, PartialEq)]
pub enum PressureField {
    /// `150 sin x`.
    Smooth,
    /// `150 sin x` plus `inside` on the solid square and `outside` elsewhere.
    Jump { region: Aabb, inside: f64, outside: f64 },
}

fn region_polygon(r: &Aabb) -> [Point; 4] {
    [r.min, Point::new(r.max.x, r.min.y), r.max, Point::new(r.min.x, r.max.y)]
}

/// Exact fields: `u = curl((4-x²)²(4-y²)²)`, `p = 150 sin x` (possibly with
/// a jump), `X = u` on 𝓑 and `λ = (eˣ, eʸ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub pressure: PressureField,
}

impl ExactSolution {
    pub fn u(&self, x: Point) -> Vector {
        Vector::new(a0(x.x) * a1(x.y), -a1(x.x) * a0(x.y))
    }

    pub fn grad_u(&self, x: Point) -> Matrix {
        Matrix::new(a1(x.x) * a1(x.y), a0(x.x) * a2(x.y), -a2(x.x) * a0(x.y), -a1(x.x) * a1(x.y))
    }

    pub fn laplace_u(&self, x: Point) -> Vector {
        let a3 = |t: f64| 24.0 * t;
        Vector::new(
            a2(x.x) * a1(x.y) + a0(x.x) * a3(x.y),
            -a3(x.x) * a0(x.y) - a1(x.x) * a2(x.y),
        )
    }

    fn p_smooth(x: Point) -> f64 {
        150.0 * x.x.sin()
    }

    pub fn p(&self, x: Point) -> f64 {
        match &self.pressure {
            PressureField::Smooth => Self::p_smooth(x),
            PressureField::Jump { region, inside, outside } => {
                Self::p_smooth(x) + if region.contains(x) { inside } else { outside }
            }
        }
    }

    pub fn lambda(&self, s: Point) -> Vector {
        Vector::new(s.x.exp(), s.y.exp())
    }

    pub fn grad_lambda(&self, s: Point) -> Matrix {
        Matrix::new(s.x.exp(), 0.0, 0.0, s.y.exp())
    }

    /// `∫_t q(p, x)` split along the jump interface so each side is smooth.
    fn split_integral(&self, t: &Triangle, q: impl Fn(f64, Point) -> f64) -> f64 {
        let rule = high_order_rule();
        let smooth = |tri: &Triangle, offset: f64| -> f64 {
            signed_area(tri) * rule.points(tri).map(|(x, w)| w * q(Self::p_smooth(x) + offset, x)).sum::<f64>()
        };
        match &self.pressure {
            PressureField::Smooth => smooth(t, 0.0),
            PressureField::Jump { region, inside, outside } => {
                let mut v = smooth(t, *outside);
                let poly = clip_convex(t, &region_polygon(region), 0.0);
                if !poly.is_empty() {
                    for sub in fan_triangulate(&poly).expect("non-empty polygon") {
                        v += smooth(&sub, *inside) - smooth(&sub, *outside);
                    }
                }
                v
            }
        }
    }
}

impl ProblemData for ExactSolution {
    fn velocity(&self, x: Point) -> Vector {
        self.u(x)
    }

    fn velocity_grad(&self, x: Point) -> Matrix {
        self.grad_u(x)
    }

    fn pressure_integral(&self, t: &Triangle) -> f64 {
        self.split_integral(t, |p, _| p)
    }

    fn fluid_force(&self, x: Point) -> Vector {
        -self.laplace_u(x) + Vector::new(150.0 * x.x.cos(), 0.0)
    }

    fn pressure_jump_integral(&self, t: &Triangle) -> f64 {
        match &self.pressure {
            PressureField::Smooth => 0.0,
            PressureField::Jump { region, inside, outside } => {
                let inner = clip_convex(t, &region_polygon(region), 0.0).area();
                outside * signed_area(t) + (inside - outside) * inner
            }
        }
    }

    fn displacement(&self, s: Point) -> Vector {
        self.u(s)
    }

    fn solid_force(&self, s: Point) -> Vector {
        -self.laplace_u(s)
    }

    fn displacement_grad(&self, s: Point) -> Matrix {
        self.grad_u(s)
    }

    fn multiplier(&self, s: Point) -> Vector {
        self.lambda(s)
    }

    fn multiplier_grad(&self, s: Point) -> Matrix {
        self.grad_lambda(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolidMeshKind {
    Uniform(Orientation),
    /// Gmsh fixture on the unit square, mapped onto 𝓑.
    Unstructured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PressureElement {
    /// P1-iso-P2 / P1.
    Bp,
    /// P1-iso-P2 / P1+P0 with corner correction.
    BpP0,
}

impl PressureElement {
    pub fn name(&self) -> &'static str {
        match self {
            PressureElement::Bp => "bp",
            PressureElement::BpP0 => "bp-p0",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub id: u32,
    pub omega: Aabb,
    /// Reference solid domain 𝓑.
    pub body: Aabb,
    pub xbar: DeformationMap,
    pub fluid_orientation: Orientation,
    pub solid_mesh: SolidMeshKind,
    pub exact: ExactSolution,
}

fn square(lo: f64, hi: f64) -> Aabb {
    Aabb::new(Point::new(lo, lo), Point::new(hi, hi))
}

pub fn make_test(id: u32) -> Result<TestCase, VerificationError> {
    let omega = square(-2.0, 2.0);
    let unit = square(-1.0, 1.0);
    let shifted = square(-0.62, 1.38);
    let left = SolidMeshKind::Uniform(Orientation::Left);
    let smooth = ExactSolution { pressure: PressureField::Smooth };
    let (body, xbar, solid_mesh, exact) = match id {
        1 => (unit, DeformationMap::Identity, SolidMeshKind::Uniform(Orientation::Right), smooth),
        2 => (unit, DeformationMap::Identity, left, smooth),
        3 => (shifted, DeformationMap::Identity, left, smooth),
        4 => (shifted, DeformationMap::Identity, SolidMeshKind::Unstructured, smooth),
        5 => (
            unit,
            DeformationMap::Identity,
            left,
            ExactSolution { pressure: PressureField::Jump { region: unit, inside: 50.0, outside: -50.0 / 3.0 } },
        ),
        6 => {
            let q = std::f64::consts::FRAC_PI_4;
            let k = std::f64::consts::PI * std::f64::consts::PI / 4.0;
            let region = square(-q, q);
            (
                region,
                DeformationMap::Identity,
                left,
                ExactSolution { pressure: PressureField::Jump { region, inside: 50.0, outside: 50.0 * k / (k - 16.0) } },
            )
        }
        7 => (unit, DeformationMap::Disk, left, smooth),
        8 => (
            square(0.0, 1.0),
            DeformationMap::Affine { a: Matrix::identity() * 2.0, b: Vector::new(-0.62, -0.62) },
            left,
            smooth,
        ),
        _ => return Err(VerificationError::UnknownTest(id)),
    };
    Ok(TestCase { id, omega, body, xbar, fluid_orientation: Orientation::Right, solid_mesh, exact })
}

/// Mesh resolution of one refinement level: the pressure (macro) mesh has
/// `fluid_n` subdivisions per side, velocity uses `2 fluid_n`, and the solid
/// mesh has `solid_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Level {
    pub fluid_n: usize,
    pub solid_n: usize,
}

impl Level {
    pub fn new(n: usize) -> Self {
        Level { fluid_n: n, solid_n: n }
    }

    /// Level whose pressure mesh on Ω = [-2,2]² has size `1/d`.
    pub fn from_fluid_denominator(d: usize) -> Self {
        Level::new(4 * d)
    }
}

/// Parses `a:b` (fluid mesh sizes `1/a` down to `1/b`, halving) into levels.
pub fn parse_levels(text: &str) -> Result<Vec<Level>, VerificationError> {
    let bad = || VerificationError::BadLevels(format!("expected `a:b` with powers of two, got `{text}`"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b < a || !a.is_power_of_two() || !b.is_power_of_two() || b > 1 << 12 {
        return Err(bad());
    }
    let mut out = Vec::new();
    let mut d = a;
    while d <= b {
        out.push(Level::from_fluid_denominator(d));
        d *= 2;
    }
    Ok(out)
}

pub fn fixture_dir() -> PathBuf {
    match std::env::var_os("FSI_FIXTURES") {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/meshes")),
    }
}

pub fn unstructured_fixture(solid_n: usize) -> PathBuf {
    fixture_dir().join(format!("unit_square_unstructured_h{}.msh", 1.0 / solid_n as f64))
}

impl TestCase {
    pub fn fluid_meshes(&self, n: usize, element: PressureElement) -> Result<crate::mesh::MacroMeshPair, VerificationError> {
        let coarse = build_uniform(n, self.fluid_orientation, self.omega)?;
        let pair = refine_red(&coarse)?;
        Ok(match element {
            PressureElement::Bp => pair,
            PressureElement::BpP0 => corner_swap(&pair)?,
        })
    }

    pub fn solid_mesh(&self, n: usize) -> Result<TriMesh, VerificationError> {
        match self.solid_mesh {
            SolidMeshKind::Uniform(o) => Ok(build_uniform(n, o, self.body)?),
            SolidMeshKind::Unstructured => {
                let path = unstructured_fixture(n);
                if !path.is_file() {
                    return Err(VerificationError::MissingFixture(path));
                }
                let unit = import_msh(&path)?;
                let a = Matrix::new(self.body.width(), 0.0, 0.0, self.body.height());
                Ok(affine_map_mesh(&unit, &a, &self.body.min.coords)?)
            }
        }
    }

    /// Pressure mesh size.
    pub fn h_fluid(&self, level: Level) -> f64 {
        self.omega.width() / level.fluid_n as f64
    }

    /// Nominal solid mesh size (side of 𝓑 over `solid_n`).
    pub fn h_solid(&self, level: Level) -> f64 {
        self.body.width() / level.solid_n as f64
    }

    pub fn discretize(&self, level: Level, element: PressureElement) -> Result<Discretization, VerificationError> {
        let pair = self.fluid_meshes(level.fluid_n, element)?;
        let solid = Arc::new(self.solid_mesh(level.solid_n)?);
        Ok(Discretization::new(pair, element == PressureElement::BpP0, solid, self.xbar.clone())?)
    }
}

/// Error norms of one solve. H1 entries are full norms; every entry is
/// relative to the corresponding norm of the exact field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSet {
    pub p_l2: f64,
    pub u_l2: f64,
    pub u_h1: f64,
    pub x_l2: f64,
    pub x_h1: f64,
    pub lam_l2: f64,
    pub lam_h1: f64,
}

pub const ERROR_NAMES: [&str; 7] = ["p_L2", "u_L2", "u_H1", "X_L2", "X_H1", "lam_L2", "lam_H1"];

impl ErrorSet {
    pub fn to_array(&self) -> [f64; 7] {
        [self.p_l2, self.u_l2, self.u_h1, self.x_l2, self.x_h1, self.lam_l2, self.lam_h1]
    }
}

/// Squared error and squared exact norms accumulated by quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormSquares {
    pub err_l2: f64,
    pub err_semi: f64,
    pub exact_l2: f64,
    pub exact_semi: f64,
}

impl NormSquares {
    pub fn relative_l2(&self) -> f64 {
        (self.err_l2 / self.exact_l2).sqrt()
    }

    pub fn relative_h1(&self) -> f64 {
        ((self.err_l2 + self.err_semi) / (self.exact_l2 + self.exact_semi)).sqrt()
    }
}

/// Raw quadrature sums behind an [`ErrorSet`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorComponents {
    pub p: NormSquares,
    pub u: NormSquares,
    pub x: NormSquares,
    pub lam: NormSquares,
}

impl ErrorComponents {
    pub fn errors(&self) -> ErrorSet {
        ErrorSet {
            p_l2: self.p.relative_l2(),
            u_l2: self.u.relative_l2(),
            u_h1: self.u.relative_h1(),
            x_l2: self.x.relative_l2(),
            x_h1: self.x.relative_h1(),
            lam_l2: self.lam.relative_l2(),
            lam_h1: self.lam.relative_h1(),
        }
    }
}

fn vector_norms(
    space: &FeSpace,
    coeffs: &[f64],
    exact: impl Fn(Point) -> (Vector, Matrix),
) -> Result<NormSquares, VerificationError> {
    let mesh = &space.mesh;
    let rule = high_order_rule();
    let mut n = NormSquares::default();
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let area = signed_area(&tri);
        for (node, &w) in rule.nodes.iter().zip(&rule.weights) {
            let x = crate::quadrature::map_bary(&tri, node);
            let (v, g) = exact(x);
            let (vh, gh) = space.eval_vector(coeffs, t, *node).map_err(AssemblyError::from)?;
            let w = w * area;
            n.err_l2 += w * (v - vh).norm_squared();
            n.err_semi += w * (g - gh).norm_squared();
            n.exact_l2 += w * v.norm_squared();
            n.exact_semi += w * g.norm_squared();
        }
    }
    Ok(n)
}

/// Pressure error after shifting both pressures to zero mean.
fn pressure_norms(space: &FeSpace, coeffs: &[f64], exact: &ExactSolution) -> Result<NormSquares, VerificationError> {
    let mesh = &space.mesh;
    let total: f64 = (0..mesh.num_triangles()).map(|t| exact.pressure_integral(&mesh.triangle(t))).sum();
    let exact_mean = total / mesh.total_area();
    let mut discrete = 0.0;
    for t in 0..mesh.num_triangles() {
        discrete += mesh.area(t) * space.eval_scalar(coeffs, t, [1.0 / 3.0; 3]).map_err(AssemblyError::from)?.0;
    }
    let discrete_mean = discrete / mesh.total_area();
    let mut n = NormSquares::default();
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let ph = |x: Point| -> f64 {
            let b = barycentric(&tri, x);
            space.eval_scalar(coeffs, t, b).map(|v| v.0).unwrap_or(f64::NAN) - discrete_mean
        };
        n.err_l2 += exact.split_integral(&tri, |p, x| {
            let e = p - exact_mean - ph(x);
            e * e
        });
        n.exact_l2 += exact.split_integral(&tri, |p, _| (p - exact_mean) * (p - exact_mean));
    }
    Ok(n)
}

pub fn compute_error_components(
    disc: &Discretization,
    sol: &Solution,
    exact: &ExactSolution,
) -> Result<ErrorComponents, VerificationError> {
    Ok(ErrorComponents {
        p: pressure_norms(&disc.pressure, &sol.p, exact)?,
        u: vector_norms(&disc.velocity, &sol.u, |x| (exact.u(x), exact.grad_u(x)))?,
        x: vector_norms(&disc.solid, &sol.x, |s| (exact.u(s), exact.grad_u(s)))?,
        lam: vector_norms(&disc.solid, &sol.lam, |s| (exact.lambda(s), exact.grad_lambda(s)))?,
    })
}

pub fn compute_errors(disc: &Discretization, sol: &Solution, exact: &ExactSolution) -> Result<ErrorSet, VerificationError> {
    Ok(compute_error_components(disc, sol, exact)?.errors())
}

/// `log2(e_h / e_{h/2})` between consecutive levels; absent when either
/// error is zero.
pub fn convergence_rates(errors: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|w| (w[0] > 0.0 && w[1] > 0.0).then(|| (w[0] / w[1]).log2()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub form: CouplingForm,
    pub rhs: RhsOptions,
    pub solve: SolveOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { form: CouplingForm::H1, rhs: RhsOptions::default(), solve: SolveOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct LevelResult {
    pub level: Level,
    pub h_fluid: f64,
    pub h_solid: f64,
    pub errors: ErrorSet,
    pub report: SolveReport,
}

pub fn solve_level(
    case: &TestCase,
    level: Level,
    element: PressureElement,
    method: CouplingMethod,
    opts: &RunOptions,
) -> Result<(Discretization, Solution), VerificationError> {
    let disc = case.discretize(level, element)?;
    let system = CoupledSystem::assemble(&disc, &case.exact, method, opts.form, opts.rhs)?;
    let sol = solve(&system, &opts.solve)?;
    Ok((disc, sol))
}

#[derive(Debug, Clone)]
pub struct ResultTable {
    pub test_id: u32,
    pub element: PressureElement,
    pub method: CouplingMethod,
    pub rows: Vec<LevelResult>,
}

/// Scientific notation with a signed two-digit exponent, e.g. `2.102e-02`.
pub fn format_sci(v: f64) -> String {
    let s = format!("{v:.3e}");
    match s.split_once('e') {
        Some((m, e)) => {
            let exp: i32 = e.parse().unwrap_or(0);
            format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
        }
        None => s,
    }
}

impl ResultTable {
    pub fn file_name(&self) -> String {
        format!("test{}_{}_{}.csv", self.test_id, self.element.name(), self.method.name())
    }

    /// Rates per error column, one entry per level (absent on the first).
    pub fn rates(&self) -> Vec<[Option<f64>; 7]> {
        let mut out = vec![[None; 7]; self.rows.len()];
        for k in 0..7 {
            let col: Vec<f64> = self.rows.iter().map(|r| r.errors.to_array()[k]).collect();
            for (i, r) in convergence_rates(&col).into_iter().enumerate() {
                out[i + 1][k] = r;
            }
        }
        out
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.errors.to_array()[k]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,h_fluid,h_solid");
        for n in ERROR_NAMES {
            let _ = write!(s, ",err_{n}");
        }
        for n in ERROR_NAMES {
            let _ = write!(s, ",rate_{n}");
        }
        s.push('\n');
        for (i, (row, rates)) in self.rows.iter().zip(self.rates()).enumerate() {
            let _ = write!(s, "{},{},{}", i, format_sci(row.h_fluid), format_sci(row.h_solid));
            for e in row.errors.to_array() {
                let _ = write!(s, ",{}", format_sci(e));
            }
            for r in rates {
                match r {
                    Some(r) => {
                        let _ = write!(s, ",{r:.4}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Human-readable table.
    pub fn to_text(&self) -> String {
        let mut s = format!("test {} | {} | {}\n", self.test_id, self.element.name(), self.method.name());
        let _ = write!(s, "{:>8} {:>8}", "h_f", "h_s");
        for n in ERROR_NAMES {
            let _ = write!(s, " {:>10} {:>5}", n, "rate");
        }
        s.push('\n');
        for (row, rates) in self.rows.iter().zip(self.rates()) {
            let _ = write!(s, "{:>8} {:>8}", fmt_h(row.h_fluid), fmt_h(row.h_solid));
            for (e, r) in row.errors.to_array().iter().zip(rates) {
                let r = r.map(|r| format!("{r:.2}")).unwrap_or_else(|| "-".into());
                let _ = write!(s, " {:>10.3e} {:>5}", e, r);
            }
            s.push('\n');
        }
        s
    }
}

/// `1/k` when `h` is the reciprocal of an integer, decimal otherwise.
fn fmt_h(h: f64) -> String {
    let k = (1.0 / h).round();
    if (k * h - 1.0).abs() < 1e-12 {
        format!("1/{k}")
    } else {
        format!("{h:.4}")
    }
}

pub fn run_test(
    id: u32,
    method: CouplingMethod,
    element: PressureElement,
    levels: &[Level],
    opts: &RunOptions,
) -> Result<ResultTable, VerificationError> {
    let case = make_test(id)?;
    if levels.is_empty() {
        return Err(VerificationError::BadLevels("no levels requested".into()));
    }
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let (disc, sol) = solve_level(&case, level, element, method, opts)?;
        let errors = compute_errors(&disc, &sol, &case.exact)?;
        rows.push(LevelResult {
            level,
            h_fluid: case.h_fluid(level),
            h_solid: case.h_solid(level),
            errors,
            report: sol.report.clone(),
        });
    }
    Ok(ResultTable { test_id: id, element, method, rows })
}
