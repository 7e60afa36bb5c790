//! P1 Galerkin assembly: stiffness, the two drift blocks, (lumped) mass,
//! load vectors, and Dirichlet elimination with boundary lifting.
//!
//! Every term is sampled with the single-point barycenter rule. Sharing one
//! rule between the two drift blocks keeps them exact transposes of each
//! other, and sharing it between the weight solve and the transform is what
//! turns the discrete divergence-free property into a solver-tolerance
//! identity instead of an O(h) statement.

use crate::error::{Error, Result};
use crate::fields::{MatrixField, ScalarField, VectorField};
use crate::mesh::Mesh;

/// Entries with magnitude at or below this are purged when compressing.
const PURGE_THRESHOLD: f64 = 1e-300;

/// Square sparse matrix in compressed row storage.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> SparseMatrix {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut iter = triplets.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v.abs() <= PURGE_THRESHOLD {
                continue;
            }
            row_ptr[r + 1] += 1;
            col.push(c);
            val.push(v);
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseMatrix {
            n,
            row_ptr,
            col,
            val,
        }
    }

    pub fn zeros(n: usize) -> SparseMatrix {
        SparseMatrix {
            n,
            row_ptr: vec![0; n + 1],
            col: Vec::new(),
            val: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> SparseMatrix {
        SparseMatrix {
            n,
            row_ptr: (0..=n).collect(),
            col: (0..n).collect(),
            val: vec![1.0; n],
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col[span.clone()], &self.val[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                triplets.push((*c, r, *v));
            }
        }
        SparseMatrix::from_triplets(self.n, triplets)
    }

    /// Entrywise sum of two matrices of the same dimension.
    pub fn add(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.n, other.n);
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for m in [self, other] {
            for r in 0..m.n {
                let (cols, vals) = m.row(r);
                for (c, v) in cols.iter().zip(vals) {
                    triplets.push((r, *c, *v));
                }
            }
        }
        SparseMatrix::from_triplets(self.n, triplets)
    }

    pub fn scaled(&self, factor: f64) -> SparseMatrix {
        let mut out = self.clone();
        for v in &mut out.val {
            *v *= factor;
        }
        out
    }

    /// Adds `shift[i]` to each diagonal entry.
    pub fn add_diagonal(&self, shift: &[f64]) -> SparseMatrix {
        assert_eq!(shift.len(), self.n);
        let diag = SparseMatrix {
            n: self.n,
            row_ptr: (0..=self.n).collect(),
            col: (0..self.n).collect(),
            val: shift.to_vec(),
        };
        self.add(&diag)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                sums[*c] += v;
            }
        }
        sums
    }

    /// Maximum |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0usize;
        for r in 0..self.n {
            for c in self.row(r).0 {
                bw = bw.max(r.abs_diff(*c));
            }
        }
        bw
    }

    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let mut acc = 0.0;
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            let mut row_acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                row_acc += v * y[*c];
            }
            acc += x[r] * row_acc;
        }
        acc
    }

    pub fn max_abs_difference(&self, other: &SparseMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        let mut max = 0.0f64;
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                max = max.max((v - other.get(r, *c)).abs());
            }
            let (cols, vals) = other.row(r);
            for (c, v) in cols.iter().zip(vals) {
                max = max.max((v - self.get(r, *c)).abs());
            }
        }
        max
    }
}

fn check_finite(v: f64, what: &str, mesh: &Mesh, elem: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteSample {
            context: what.to_string(),
            point: mesh.barycenter(elem)[..mesh.dim()].to_vec(),
            element: Some(elem),
        })
    }
}

/// Stiffness matrix: entry (i,j) = sum over elements of
/// vol * <A(bary) grad phi_j, grad phi_i>.
pub fn assemble_stiffness(mesh: &Mesh, a: &impl MatrixField) -> Result<SparseMatrix> {
    assemble_stiffness_weighted(mesh, a, None)
}

/// Stiffness with an optional per-element scalar weight (the elementwise
/// mean of the nodal weight in the transformed problem).
pub fn assemble_stiffness_weighted(
    mesh: &Mesh,
    a: &impl MatrixField,
    element_weights: Option<&[f64]>,
) -> Result<SparseMatrix> {
    let dim = mesh.dim();
    let nloc = dim + 1;
    let mut triplets = Vec::with_capacity(mesh.element_count() * nloc * nloc);
    for e in 0..mesh.element_count() {
        let b = mesh.barycenter(e);
        let mat = a.value(&b[..dim])?;
        for r in mat.iter().take(dim) {
            for v in r.iter().take(dim) {
                check_finite(*v, "matrix coefficient", mesh, e)?;
            }
        }
        let scale = element_weights.map_or(1.0, |w| w[e]);
        let (grads, vol) = mesh.p1_gradients(e);
        let verts = mesh.simplex(e);
        for i in 0..nloc {
            for j in 0..nloc {
                let mut acc = 0.0;
                for r in 0..dim {
                    let mut ag = 0.0;
                    for c in 0..dim {
                        ag += mat[r][c] * grads[j][c];
                    }
                    acc += grads[i][r] * ag;
                }
                triplets.push((verts[i], verts[j], scale * vol * acc));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(mesh.vertex_count(), triplets))
}

/// Drift paired with the test-function gradient:
/// entry (i,j) = sum over elements of vol * phi_j(bary) * <H, grad phi_i>
/// with phi_j(bary) = 1/(dim+1).
pub fn assemble_drift_on_test(mesh: &Mesh, h: &impl VectorField) -> Result<SparseMatrix> {
    assemble_drift(mesh, h, false)
}

/// Drift applied to the trial-function gradient:
/// entry (i,j) = sum over elements of vol * <H, grad phi_j> * phi_i(bary).
/// Exact transpose of `assemble_drift_on_test` under the shared rule.
pub fn assemble_drift_on_trial(mesh: &Mesh, h: &impl VectorField) -> Result<SparseMatrix> {
    assemble_drift(mesh, h, true)
}

fn assemble_drift(mesh: &Mesh, h: &impl VectorField, on_trial: bool) -> Result<SparseMatrix> {
    let dim = mesh.dim();
    let nloc = dim + 1;
    let mut triplets = Vec::with_capacity(mesh.element_count() * nloc * nloc);
    for e in 0..mesh.element_count() {
        let hv = h.element_value(mesh, e)?;
        for c in hv.iter().take(dim) {
            check_finite(*c, "drift coefficient", mesh, e)?;
        }
        let (grads, vol) = mesh.p1_gradients(e);
        let verts = mesh.simplex(e);
        let weight = vol / nloc as f64;
        for i in 0..nloc {
            let flux: f64 = (0..dim).map(|a| hv[a] * grads[i][a]).sum();
            for j in 0..nloc {
                if on_trial {
                    triplets.push((verts[j], verts[i], weight * flux));
                } else {
                    triplets.push((verts[i], verts[j], weight * flux));
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(mesh.vertex_count(), triplets))
}

/// Count and first instance of negative zero-order samples (allowed for
/// studies that probe the sign hypothesis, but worth reporting).
#[derive(Clone, Debug, Default)]
pub struct MassWarnings {
    pub negative_samples: usize,
    pub first: Option<(usize, f64)>,
}

/// Mass matrix, always diagonal: the lumped variant samples the coefficient
/// at barycenters, the "consistent" variant uses the vertex rule (which on
/// P1 is lumped-equivalent and keeps the matrix nonnegative for c >= 0).
pub fn assemble_mass(
    mesh: &Mesh,
    c: &impl ScalarField,
    lumped: bool,
    element_weights: Option<&[f64]>,
) -> Result<(SparseMatrix, MassWarnings)> {
    let dim = mesh.dim();
    let nloc = dim + 1;
    let mut diag = vec![0.0f64; mesh.vertex_count()];
    let mut warnings = MassWarnings::default();
    for e in 0..mesh.element_count() {
        let vol = mesh.element_volume(e);
        let scale = element_weights.map_or(1.0, |w| w[e]);
        let verts = mesh.simplex(e);
        if lumped {
            let b = mesh.barycenter(e);
            let cv = check_finite(c.value(&b[..dim])?, "zero-order coefficient", mesh, e)?;
            if cv < 0.0 {
                warnings.negative_samples += 1;
                warnings.first.get_or_insert((e, cv));
            }
            for &v in verts {
                diag[v] += scale * vol * cv / nloc as f64;
            }
        } else {
            for &v in verts {
                let cv =
                    check_finite(c.value(mesh.vertex(v))?, "zero-order coefficient", mesh, e)?;
                if cv < 0.0 {
                    warnings.negative_samples += 1;
                    warnings.first.get_or_insert((e, cv));
                }
                diag[v] += scale * vol * cv / nloc as f64;
            }
        }
    }
    let triplets = diag.into_iter().enumerate().map(|(i, v)| (i, i, v)).collect();
    Ok((
        SparseMatrix::from_triplets(mesh.vertex_count(), triplets),
        warnings,
    ))
}

/// Load vector: entry i = sum over elements of
/// vol * weight(bary) * f(bary) / (dim+1), with the optional nodal weight
/// averaged over the element.
pub fn assemble_load(
    mesh: &Mesh,
    f: &impl ScalarField,
    nodal_weight: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let dim = mesh.dim();
    let nloc = dim + 1;
    let mut load = vec![0.0f64; mesh.vertex_count()];
    for e in 0..mesh.element_count() {
        let b = mesh.barycenter(e);
        let fv = check_finite(f.value(&b[..dim])?, "load", mesh, e)?;
        let vol = mesh.element_volume(e);
        let verts = mesh.simplex(e);
        let wbar = nodal_weight.map_or(1.0, |w| {
            verts.iter().map(|&v| w[v]).sum::<f64>() / nloc as f64
        });
        for &v in verts {
            load[v] += vol * wbar * fv / nloc as f64;
        }
    }
    Ok(load)
}

/// A Dirichlet-eliminated linear system over the free (interior) vertices.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Boundary vertex -> prescribed value.
    pub fixed_values: Vec<(usize, f64)>,
    /// Vertex -> free row index (None for boundary vertices).
    pub free_index: Vec<Option<usize>>,
    pub free_to_vertex: Vec<usize>,
}

impl AssembledSystem {
    pub fn free_count(&self) -> usize {
        self.free_to_vertex.len()
    }

    /// Expand a free-dof solution to the full nodal vector, inserting the
    /// prescribed boundary values.
    pub fn expand(&self, free_solution: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.free_index.len()];
        for (row, &v) in self.free_to_vertex.iter().enumerate() {
            full[v] = free_solution[row];
        }
        for &(v, g) in &self.fixed_values {
            full[v] = g;
        }
        full
    }
}

/// Eliminate boundary rows/columns, moving their contribution to the right
/// side (lifting). With homogeneous data this is a plain restriction.
pub fn apply_dirichlet(
    matrix: &SparseMatrix,
    rhs: &[f64],
    mesh: &Mesh,
    boundary: &impl ScalarField,
) -> Result<AssembledSystem> {
    let nv = mesh.vertex_count();
    assert_eq!(matrix.dimension(), nv);
    assert_eq!(rhs.len(), nv);
    let mut free_index = vec![None; nv];
    let mut free_to_vertex = Vec::new();
    let mut fixed_values = Vec::new();
    let mut fixed = vec![0.0f64; nv];
    for v in 0..nv {
        if mesh.is_boundary(v) {
            let g = boundary.value(mesh.vertex(v))?;
            if !g.is_finite() {
                return Err(Error::NonFiniteSample {
                    context: "boundary data".to_string(),
                    point: mesh.vertex(v).to_vec(),
                    element: None,
                });
            }
            fixed[v] = g;
            fixed_values.push((v, g));
        } else {
            free_index[v] = Some(free_to_vertex.len());
            free_to_vertex.push(v);
        }
    }
    let nf = free_to_vertex.len();
    let mut triplets = Vec::new();
    let mut reduced_rhs = vec![0.0f64; nf];
    for (row, &v) in free_to_vertex.iter().enumerate() {
        reduced_rhs[row] = rhs[v];
        let (cols, vals) = matrix.row(v);
        for (c, val) in cols.iter().zip(vals) {
            match free_index[*c] {
                Some(fc) => triplets.push((row, fc, *val)),
                None => reduced_rhs[row] -= val * fixed[*c],
            }
        }
    }
    Ok(AssembledSystem {
        matrix: SparseMatrix::from_triplets(nf, triplets),
        rhs: reduced_rhs,
        fixed_values,
        free_index,
        free_to_vertex,
    })
}

/// Largest interior-hat residual of the declared weak divergence:
/// max over interior i of |int <H2, grad psi_i> + int div_h2 psi_i|.
pub fn weak_divergence_residual(
    mesh: &Mesh,
    h2: &impl VectorField,
    div_h2: &impl ScalarField,
) -> Result<f64> {
    let drift = assemble_drift_on_test(mesh, h2)?;
    let flux_rows = drift.row_sums();
    let mass_part = assemble_load(mesh, div_h2, None)?;
    let mut max = 0.0f64;
    for v in 0..mesh.vertex_count() {
        if !mesh.is_boundary(v) {
            max = max.max((flux_rows[v] + mass_part[v]).abs());
        }
    }
    Ok(max)
}
