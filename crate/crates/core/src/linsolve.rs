//! Sparse linear solves for the assembled systems, which are nonsymmetric
//! whenever a drift is present.
//!
//! Two paths: a banded LU with partial pivoting and one step of iterative
//! refinement (lattice meshes have modest bandwidth under the natural vertex
//! numbering), and a BiCGStab iteration with optional diagonal or shifted
//! preconditioning. The shifted preconditioner factors the zero-order-shifted
//! operator, the same device the coercivity shift provides in the analysis.
//!
//! Every reported residual is recomputed from the original matrix, never the
//! iteration's internal estimate.

use crate::assembly::SparseMatrix;
use crate::error::{Error, Result};

/// Above this dimension the automatic method choice switches to Krylov.
const DIRECT_DIM_CUTOFF: usize = 20_000;

/// Band-storage budget for the direct path, in f64 entries (~128 MB).
const BAND_STORAGE_BUDGET: usize = 16_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Direct below `DIRECT_DIM_CUTOFF` (and within the band-storage budget),
    /// Krylov above.
    Auto,
    Direct,
    Krylov,
}

#[derive(Clone, Debug)]
pub enum Preconditioner {
    None,
    Diagonal,
    /// Factors matrix + gamma * diag(mass) once and applies it as the inner
    /// solve of the iteration.
    Shifted { gamma: f64, mass_diag: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub method: Method,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub precondition: Preconditioner,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: Method::Auto,
            rel_tol: 1e-11,
            max_iter: 20_000,
            precondition: Preconditioner::None,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::invalid(format!(
                "solver.rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::invalid("solver.max_iter must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum MethodUsed {
    Direct,
    Krylov,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// ||Ax - b|| / ||b||, recomputed after the solve.
    pub final_residual: f64,
    pub method_used: MethodUsed,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual_norm(matrix: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; b.len()];
    matrix.matvec(x, &mut ax);
    let mut acc = 0.0;
    for (av, bv) in ax.iter().zip(b) {
        let d = av - bv;
        acc += d * d;
    }
    acc.sqrt()
}

/// Banded LU factorization with partial pivoting (pivoting widens the upper
/// band by the lower bandwidth).
pub struct DirectFactor {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl DirectFactor {
    pub fn new(matrix: &SparseMatrix) -> Result<DirectFactor> {
        let n = matrix.dimension();
        let bw = matrix.bandwidth();
        let (kl, ku) = (bw, bw);
        let ldab = 2 * kl + ku + 1;
        let storage = n
            .checked_mul(ldab)
            .ok_or_else(|| Error::Resource("band storage size overflows".to_string()))?;
        if storage > BAND_STORAGE_BUDGET {
            return Err(Error::Resource(format!(
                "band factorization needs {storage} entries (budget {BAND_STORAGE_BUDGET}); use the Krylov path"
            )));
        }
        let kv = kl + ku;
        let mut ab = vec![0.0f64; storage];
        for r in 0..n {
            let (cols, vals) = matrix.row(r);
            for (c, v) in cols.iter().zip(vals) {
                ab[c * ldab + kv + r - c] = *v;
            }
        }
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // pivot search in column j, rows j..=j+km
            let mut p = 0usize;
            let mut best = ab[j * ldab + kv].abs();
            for q in 1..=km {
                let v = ab[j * ldab + kv + q].abs();
                if v > best {
                    best = v;
                    p = q;
                }
            }
            ipiv[j] = j + p;
            if best == 0.0 {
                return Err(Error::SingularMatrix { row: j });
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for col in j..=ju {
                    let a_idx = col * ldab + kv + j - col;
                    let b_idx = col * ldab + kv + (j + p) - col;
                    ab.swap(a_idx, b_idx);
                }
            }
            if km > 0 {
                let inv = 1.0 / ab[j * ldab + kv];
                for q in 1..=km {
                    ab[j * ldab + kv + q] *= inv;
                }
                for col in (j + 1)..=ju {
                    let uj = ab[col * ldab + kv + j - col];
                    if uj != 0.0 {
                        for q in 1..=km {
                            ab[col * ldab + kv + j + q - col] -= ab[j * ldab + kv + q] * uj;
                        }
                    }
                }
            }
        }
        Ok(DirectFactor {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku;
        let mut x = rhs.to_vec();
        if n == 0 {
            return x;
        }
        // forward elimination with the stored multipliers
        for j in 0..n - 1 {
            let km = kl.min(n - 1 - j);
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            for q in 1..=km {
                x[j + q] -= self.ab[j * ldab + kv + q] * x[j];
            }
        }
        // back substitution with U of bandwidth kl+ku
        for j in (0..n).rev() {
            x[j] /= self.ab[j * ldab + kv];
            let lo = j.saturating_sub(kl + ku);
            for i in lo..j {
                x[i] -= self.ab[j * ldab + kv + i - j] * x[j];
            }
        }
        x
    }
}

enum PrecondOp {
    Identity,
    Diagonal(Vec<f64>),
    Factored(DirectFactor),
}

impl PrecondOp {
    fn build(matrix: &SparseMatrix, precondition: &Preconditioner) -> Result<PrecondOp> {
        Ok(match precondition {
            Preconditioner::None => PrecondOp::Identity,
            Preconditioner::Diagonal => {
                let inv = matrix
                    .diagonal()
                    .into_iter()
                    .map(|d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
                    .collect();
                PrecondOp::Diagonal(inv)
            }
            Preconditioner::Shifted { gamma, mass_diag } => {
                if mass_diag.len() != matrix.dimension() {
                    return Err(Error::invalid(
                        "shifted preconditioner mass diagonal has wrong length",
                    ));
                }
                let shift: Vec<f64> = mass_diag.iter().map(|m| gamma * m).collect();
                let shifted = matrix.add_diagonal(&shift);
                PrecondOp::Factored(DirectFactor::new(&shifted)?)
            }
        })
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            PrecondOp::Identity => v.to_vec(),
            PrecondOp::Diagonal(inv) => v.iter().zip(inv).map(|(x, d)| x * d).collect(),
            PrecondOp::Factored(f) => f.solve(v),
        }
    }
}

/// Solve the square system, dispatching on the requested method.
pub fn solve(
    matrix: &SparseMatrix,
    rhs: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    opts.validate()?;
    let n = matrix.dimension();
    if rhs.len() != n {
        return Err(Error::invalid(format!(
            "matrix dimension {n} does not match rhs length {}",
            rhs.len()
        )));
    }
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                final_residual: 0.0,
                method_used: MethodUsed::Direct,
            },
        ));
    }
    let band_storage = n.saturating_mul(3 * matrix.bandwidth() + 1);
    let direct = match opts.method {
        Method::Direct => true,
        Method::Krylov => false,
        Method::Auto => n <= DIRECT_DIM_CUTOFF && band_storage <= BAND_STORAGE_BUDGET,
    };
    if direct {
        solve_direct(matrix, rhs, bnorm)
    } else {
        solve_bicgstab(matrix, rhs, bnorm, opts)
    }
}

fn solve_direct(matrix: &SparseMatrix, rhs: &[f64], bnorm: f64) -> Result<(Vec<f64>, SolveStats)> {
    let factor = DirectFactor::new(matrix)?;
    let mut x = factor.solve(rhs);
    // one step of iterative refinement
    let mut r = vec![0.0; rhs.len()];
    matrix.matvec(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let dx = factor.solve(&r);
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    let final_residual = residual_norm(matrix, &x, rhs) / bnorm;
    Ok((
        x,
        SolveStats {
            iterations: 1,
            final_residual,
            method_used: MethodUsed::Direct,
        },
    ))
}

fn solve_bicgstab(
    matrix: &SparseMatrix,
    rhs: &[f64],
    bnorm: f64,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = matrix.dimension();
    let precond = PrecondOp::build(matrix, &opts.precondition)?;
    let mut x = vec![0.0f64; n];
    let mut r = rhs.to_vec();
    let mut rhat = r.clone();
    let mut p = r.clone();
    let mut rho = dot(&rhat, &r);
    let mut v = vec![0.0f64; n];
    let mut t = vec![0.0f64; n];
    let mut best_x = x.clone();
    let mut best_res = f64::INFINITY;
    let tiny = f64::MIN_POSITIVE * 1e16;

    let check_true = |x: &[f64], best_x: &mut Vec<f64>, best_res: &mut f64| -> f64 {
        let res = residual_norm(matrix, x, rhs) / bnorm;
        if res < *best_res {
            *best_res = res;
            best_x.clone_from_slice(x);
        }
        res
    };

    for it in 1..=opts.max_iter {
        let phat = precond.apply(&p);
        matrix.matvec(&phat, &mut v);
        let denom = dot(&rhat, &v);
        if denom.abs() < tiny {
            // restart against the current residual direction
            rhat.clone_from_slice(&r);
            p.clone_from_slice(&r);
            rho = dot(&rhat, &r);
            if rho.abs() < tiny {
                break;
            }
            continue;
        }
        let alpha = rho / denom;
        // s = r - alpha v (reuse r)
        for (ri, vi) in r.iter_mut().zip(&v) {
            *ri -= alpha * vi;
        }
        if norm2(&r) / bnorm <= opts.rel_tol {
            for (xi, pi) in x.iter_mut().zip(&phat) {
                *xi += alpha * pi;
            }
            let res = check_true(&x, &mut best_x, &mut best_res);
            if res <= opts.rel_tol {
                return Ok((
                    x,
                    SolveStats {
                        iterations: it,
                        final_residual: res,
                        method_used: MethodUsed::Krylov,
                    },
                ));
            }
            // estimate drifted: rebuild the true residual and restart
            r = rhs.to_vec();
            let mut ax = vec![0.0; n];
            matrix.matvec(&x, &mut ax);
            for (ri, ai) in r.iter_mut().zip(&ax) {
                *ri -= ai;
            }
            rhat.clone_from_slice(&r);
            p.clone_from_slice(&r);
            rho = dot(&rhat, &r);
            continue;
        }
        let shat = precond.apply(&r);
        matrix.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt.abs() < tiny {
            break;
        }
        let omega = dot(&t, &r) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
        }
        for (ri, ti) in r.iter_mut().zip(&t) {
            *ri -= omega * ti;
        }
        let est = norm2(&r) / bnorm;
        if est <= opts.rel_tol || it % 200 == 0 {
            let res = check_true(&x, &mut best_x, &mut best_res);
            if res <= opts.rel_tol {
                return Ok((
                    x,
                    SolveStats {
                        iterations: it,
                        final_residual: res,
                        method_used: MethodUsed::Krylov,
                    },
                ));
            }
            if est <= opts.rel_tol {
                // false convergence: refresh the residual
                r = rhs.to_vec();
                let mut ax = vec![0.0; n];
                matrix.matvec(&x, &mut ax);
                for (ri, ai) in r.iter_mut().zip(&ax) {
                    *ri -= ai;
                }
                rhat.clone_from_slice(&r);
                p.clone_from_slice(&r);
                rho = dot(&rhat, &r);
                continue;
            }
        }
        let rho_next = dot(&rhat, &r);
        if rho_next.abs() < tiny || omega.abs() < tiny {
            rhat.clone_from_slice(&r);
            p.clone_from_slice(&r);
            rho = dot(&rhat, &r);
            continue;
        }
        let beta = (rho_next / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        rho = rho_next;
    }
    check_true(&x, &mut best_x, &mut best_res);
    Err(Error::SolverStagnation {
        iterations: opts.max_iter,
        residual: best_res,
        best: best_x,
    })
}
