//! Sparse direct solution of the coupled system with the pressure constants
//! removed by pinning and a zero-mean shift.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::prelude::*;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, CholeskySymbolicParams, SymmetricOrdering};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMat, Triplet};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::{Conj, Side};

use crate::assembly::CoupledSystem;
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Relative residual above which a factorization counts as failed.
const SINGULAR_RESIDUAL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("pinned pressure vertex {pin} out of range ({count} continuous pressure DOFs)")]
    BadPin { pin: usize, count: usize },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error(
        "system is singular beyond the pressure constants: relative residual {residual:e} \
         (blocks u {res_u:e}, p {res_p:e}, X {res_x:e}, λ {res_lam:e})"
    )]
    Singular { residual: f64, res_u: f64, res_p: f64, res_x: f64, res_lam: f64 },
}

/// Sparse direct factorization used for the pinned system. The symmetric
/// variants fall back to the next one (LDLᵀ, LBLᵀ, LU) when iterative
/// refinement does not reach a relative residual of 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Backend {
    /// Sign-regularized LDLᵀ with AMD ordering.
    #[default]
    Ldlt,
    /// Symmetric indefinite LBLᵀ with Bunch–Kaufman pivoting inside supernodes.
    Lblt,
    /// LU with partial pivoting and COLAMD ordering.
    Lu,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveOptions {
    /// Continuous pressure vertex fixed to zero during the factorization.
    pub pin_vertex: usize,
    /// P0 DOF fixed for the enriched pressure (triangle index).
    pub pin_triangle: usize,
    pub backend: Backend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// ‖A x − b‖ / ‖b‖ on the system without pinned rows.
    pub relative_residual: f64,
    /// Constant subtracted from the pressure to reach zero mean.
    pub mean_shift: f64,
    pub unknowns: usize,
    pub nnz: usize,
    /// Factorization that produced the solution.
    pub backend: Backend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    pub lam: Vec<f64>,
    pub report: SolveReport,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn pinned_dofs(system: &CoupledSystem, opts: &SolveOptions) -> Result<Vec<usize>, SolverError> {
    let op = system.offsets[1];
    if opts.pin_vertex >= system.n_p1 {
        return Err(SolverError::BadPin { pin: opts.pin_vertex, count: system.n_p1 });
    }
    let mut pins = vec![op + opts.pin_vertex];
    let n_p0 = system.num_pressure() - system.n_p1;
    if n_p0 > 0 {
        if opts.pin_triangle >= n_p0 {
            return Err(SolverError::BadPin { pin: opts.pin_triangle, count: n_p0 });
        }
        pins.push(op + system.n_p1 + opts.pin_triangle);
    }
    Ok(pins)
}

/// Expected pivot signs: positive on the u and X blocks and on pinned
/// rows, negative on the constraint blocks.
fn signs(system: &CoupledSystem, pins: &[usize]) -> Vec<i8> {
    let [_, op, ox, ol] = system.offsets;
    let mut s: Vec<i8> = (0..system.size).map(|i| if (op..ox).contains(&i) || i >= ol { -1 } else { 1 }).collect();
    for &p in pins {
        s[p] = 1;
    }
    s
}

fn pin(matrix: &SparseMatrix, pins: &[usize]) -> SparseMatrix {
    let mut fixed = vec![false; matrix.nrows()];
    for &p in pins {
        fixed[p] = true;
    }
    let mut b = TripletBuilder::with_capacity(matrix.nrows(), matrix.ncols(), matrix.nnz());
    for (i, j, v) in matrix.iter() {
        if !fixed[i] && !fixed[j] {
            b.add(i, j, v);
        }
    }
    for &p in pins {
        b.add(p, p, 1.0);
    }
    b.build()
}

fn to_faer(m: &SparseMatrix, lower_only: bool) -> Result<SparseColMat<usize, f64>, SolverError> {
    let triplets: Vec<Triplet<usize, usize, f64>> =
        m.iter().filter(|&(i, j, _)| !lower_only || i >= j).map(|(i, j, v)| Triplet::new(i, j, v)).collect();
    SparseColMat::try_new_from_triplets(m.nrows(), m.ncols(), &triplets)
        .map_err(|e| SolverError::Factorization(format!("{e:?}")))
}

fn to_mat(r: &[f64]) -> Mat<f64> {
    Mat::<f64>::from_fn(r.len(), 1, |i, _| r[i])
}

fn from_mat(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

/// Solves with up to `steps` rounds of iterative refinement against `a`.
fn refine(a: &SparseMatrix, b: &[f64], steps: usize, solve: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let scale = norm(b).max(f64::MIN_POSITIVE);
    let mut x = solve(b);
    for _ in 0..steps {
        let r: Vec<f64> = b.iter().zip(a.mul_vec(&x)).map(|(bi, ai)| bi - ai).collect();
        if norm(&r) <= 1e-15 * scale {
            break;
        }
        let dx = solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
    }
    x
}

fn solve_lu(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, SolverError> {
    let lu = to_faer(a, false)?.sp_lu().map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    Ok(refine(a, b, 2, |r| from_mat(&lu.solve(to_mat(r)))))
}

fn solve_lblt(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = a.nrows();
    let lower = to_faer(a, true)?;
    let params = CholeskySymbolicParams {
        supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
        ..Default::default()
    };
    let symbolic = factorize_symbolic_cholesky(lower.symbolic(), Side::Lower, SymmetricOrdering::Amd, params)
        .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    let mut values = vec![0.0; symbolic.len_val()];
    let mut subdiag = vec![0.0; n];
    let (mut fwd, mut inv) = (vec![0usize; n], vec![0usize; n]);
    let mut mem = MemBuffer::try_new(symbolic.factorize_numeric_intranode_lblt_scratch::<f64>(Par::Seq, Default::default()))
        .map_err(|_| SolverError::Factorization("out of memory".into()))?;
    let lblt = symbolic.factorize_numeric_intranode_lblt(
        &mut values,
        &mut subdiag,
        &mut fwd,
        &mut inv,
        lower.as_ref(),
        Side::Lower,
        Par::Seq,
        MemStack::new(&mut mem),
        Default::default(),
    );
    let mut solve_mem = MemBuffer::try_new(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq))
        .map_err(|_| SolverError::Factorization("out of memory".into()))?;
    let stack = std::cell::RefCell::new(&mut solve_mem);
    Ok(refine(a, b, 4, |r| {
        let mut x = to_mat(r);
        lblt.solve_in_place_with_conj(Conj::No, x.as_mut(), Par::Seq, MemStack::new(&mut stack.borrow_mut()));
        from_mat(&x)
    }))
}

/// LDLᵀ without pivoting; pivots of the wrong sign or below the threshold
/// are replaced by `±δ` and the perturbation is removed by refinement.
fn solve_ldlt_regularized(a: &SparseMatrix, b: &[f64], signs: &[i8]) -> Result<Vec<f64>, SolverError> {
    let n = a.nrows();
    let lower = to_faer(a, true)?;
    let params = CholeskySymbolicParams {
        supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
        ..Default::default()
    };
    let symbolic = factorize_symbolic_cholesky(lower.symbolic(), Side::Lower, SymmetricOrdering::Amd, params)
        .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    let mut values = vec![0.0; symbolic.len_val()];
    let scale = a.max_abs();
    let regularization = LdltRegularization {
        dynamic_regularization_signs: Some(signs),
        dynamic_regularization_delta: 1e-12 * scale,
        dynamic_regularization_epsilon: 1e-13 * scale,
    };
    let mut mem = MemBuffer::try_new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()))
        .map_err(|_| SolverError::Factorization("out of memory".into()))?;
    let ldlt = symbolic
        .factorize_numeric_ldlt(&mut values, lower.as_ref(), Side::Lower, regularization, Par::Seq, MemStack::new(&mut mem), Default::default())
        .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    let mut solve_mem = MemBuffer::try_new(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq))
        .map_err(|_| SolverError::Factorization("out of memory".into()))?;
    let stack = std::cell::RefCell::new(&mut solve_mem);
    debug_assert_eq!(signs.len(), n);
    Ok(refine(a, b, 20, |r| {
        let mut x = to_mat(r);
        ldlt.solve_in_place_with_conj(Conj::No, x.as_mut(), Par::Seq, MemStack::new(&mut stack.borrow_mut()));
        from_mat(&x)
    }))
}

fn pinned_residual(a: &SparseMatrix, b: &[f64], x: &[f64]) -> f64 {
    let r: Vec<f64> = b.iter().zip(a.mul_vec(x)).map(|(bi, ai)| bi - ai).collect();
    norm(&r) / norm(b).max(f64::MIN_POSITIVE)
}

pub fn solve(system: &CoupledSystem, opts: &SolveOptions) -> Result<Solution, SolverError> {
    let rhs = system.rhs();
    let pins = pinned_dofs(system, opts)?;
    let pinned = pin(&system.matrix(), &pins);
    let mut b = rhs.clone();
    for &p in &pins {
        b[p] = 0.0;
    }

    let chain: &[Backend] = match opts.backend {
        Backend::Ldlt => &[Backend::Ldlt, Backend::Lblt, Backend::Lu],
        Backend::Lblt => &[Backend::Lblt, Backend::Lu],
        Backend::Lu => &[Backend::Lu],
    };
    let signs = signs(system, &pins);
    let mut result = None;
    for &backend in chain {
        let x = match backend {
            Backend::Ldlt => solve_ldlt_regularized(&pinned, &b, &signs)?,
            Backend::Lblt => solve_lblt(&pinned, &b)?,
            Backend::Lu => solve_lu(&pinned, &b)?,
        };
        let good = x.iter().all(|v| v.is_finite()) && pinned_residual(&pinned, &b, &x) <= 1e-12;
        if good || backend == Backend::Lu {
            result = Some((x, backend));
            break;
        }
    }
    let (x, backend) = result.expect("LU ends every chain");
    drop(pinned);
    let full = system.matrix();

    let residual: Vec<f64> = full.mul_vec(&x).iter().zip(&rhs).map(|(ai, bi)| ai - bi).collect();
    let scale = norm(&rhs).max(f64::MIN_POSITIVE);
    let relative_residual = norm(&residual) / scale;
    let [ou, op, ox, ol] = system.offsets;
    if !relative_residual.is_finite() || relative_residual > SINGULAR_RESIDUAL {
        return Err(SolverError::Singular {
            residual: relative_residual,
            res_u: norm(&residual[ou..op]) / scale,
            res_p: norm(&residual[op..ox]) / scale,
            res_x: norm(&residual[ox..ol]) / scale,
            res_lam: norm(&residual[ol..]) / scale,
        });
    }

    let mut p = x[op..ox].to_vec();
    let integral: f64 = p.iter().zip(&system.pressure_weights).map(|(c, w)| c * w).sum();
    let mean_shift = integral / system.domain_area;
    p[..system.n_p1].iter_mut().for_each(|c| *c -= mean_shift);

    Ok(Solution {
        u: x[ou..op].to_vec(),
        p,
        x: x[ox..ol].to_vec(),
        lam: x[ol..].to_vec(),
        report: SolveReport { relative_residual, mean_shift, unknowns: system.size, nnz: full.nnz(), backend },
    })
}
