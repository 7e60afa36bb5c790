//! End-to-end solver pipeline: build the positive weight on the container
//! domain, rewrite the drift through the divergence-free flux, solve the
//! transformed Dirichlet problem, and report every derived constant.
//!
//! The weight solves the adjoint problem with unit boundary data, lifted as
//! w = v + 1. The transform evaluates, per element, exactly the quantities
//! the weight solve assembled, so the interior-hat residuals of the flux
//! coincide with the adjoint system's residual rows: discretely divergence
//! free to solver tolerance, not merely O(h).

use std::sync::Arc;

use crate::assembly::{
    apply_dirichlet, assemble_drift_on_test, assemble_drift_on_trial, assemble_load,
    assemble_mass, assemble_stiffness_weighted, AssembledSystem, SparseMatrix,
};
use crate::error::{Error, Result};
use crate::fields::{
    form_bound, p1_gradient, p1_h10_seminorm, p1_lp_norm, poincare_constant, scalar_lp_norm,
    select_shift, shift_threshold, sobolev_constant, vector_lp_norm, DriftSpec, ElementField,
    MatrixField, MatrixFieldSpec, ScalarFieldSpec, Transposed, VectorField,
};
use crate::linsolve::{solve, Preconditioner, SolveOptions, SolveStats};
use crate::mesh::{build_mesh, container_mesh, DomainSpec, Mesh, RegionTag};
use crate::quadrature::{pairwise_sum, QuadratureRule};

/// Weight values at or below `POSITIVITY_FLOOR_FACTOR * max(w)` count as a
/// positivity failure: discretely, "strictly positive" needs a floor to be
/// distinguishable from "vanishing at this resolution".
const POSITIVITY_FLOOR_FACTOR: f64 = 1e-8;

/// Declared integrability class of the zero-order coefficient. The discrete
/// treatment is identical; the class records which continuum hypothesis the
/// inputs claim to satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum ZeroOrderClass {
    /// c in L^1 with a load in L^q, q > d/2.
    L1,
    /// c and f both in L^{2d/(d+2)}.
    EnergyExponent,
}

/// Full description of one Dirichlet problem.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub coeff: MatrixFieldSpec,
    pub drift: DriftSpec,
    pub zero_order: ScalarFieldSpec,
    pub zero_order_class: ZeroOrderClass,
    /// Declared constant lower bound of the zero-order coefficient.
    pub alpha: Option<f64>,
    pub load: ScalarFieldSpec,
    /// Declared integrability exponent q of the load.
    pub load_exponent: f64,
    /// Normalization point for the weight; defaults to the interior vertex
    /// nearest the domain centroid.
    pub normalization_point: Option<[f64; 3]>,
    pub mesh_n: usize,
    pub solver: SolveOptions,
}

impl ProblemSpec {
    /// A plain Poisson-type problem: identity coefficient, no drift, no
    /// zero-order term, unit load.
    pub fn laplace(domain: DomainSpec, mesh_n: usize) -> ProblemSpec {
        let dim = domain.dim;
        ProblemSpec {
            domain,
            coeff: MatrixFieldSpec::identity(),
            drift: DriftSpec::zero(),
            zero_order: ScalarFieldSpec::Constant(0.0),
            zero_order_class: ZeroOrderClass::L1,
            alpha: None,
            load: ScalarFieldSpec::Constant(1.0),
            load_exponent: dim as f64,
            normalization_point: None,
            mesh_n,
            solver: SolveOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.solver.validate()?;
        if self.mesh_n < 1 {
            return Err(Error::invalid("mesh_n must be >= 1"));
        }
        if let Some(alpha) = self.alpha {
            if !(alpha >= 0.0) {
                return Err(Error::invalid("alpha must be >= 0"));
            }
        }
        if self.zero_order_class == ZeroOrderClass::L1 {
            let d = self.domain.dim as f64;
            if !(self.load_exponent > d / 2.0) {
                return Err(Error::invalid(format!(
                    "load exponent q = {} must exceed d/2 = {} for the bounded-solution path",
                    self.load_exponent,
                    d / 2.0
                )));
            }
        }
        // bump drifts must keep their support strictly inside the container
        for field in [&self.drift.h1, &self.drift.h2] {
            if let crate::fields::VectorFieldSpec::GradientOf(scalar) = field {
                if let ScalarFieldSpec::Bump { center, radius, .. } = scalar.as_ref() {
                    crate::fields::bump_inside_container(&self.domain, center, *radius)?;
                }
            }
        }
        Ok(())
    }
}

/// The meshes a problem lives on, with the exact inner-to-container vertex
/// map and the resolved normalization vertex.
pub struct Discretization {
    pub inner: Arc<Mesh>,
    pub container: Arc<Mesh>,
    pub inner_to_container: Vec<usize>,
    pub x1_inner: usize,
    pub x1_container: usize,
    pub x1_point: [f64; 3],
}

impl Discretization {
    pub fn build(problem: &ProblemSpec) -> Result<Discretization> {
        problem.validate()?;
        let inner = Arc::new(build_mesh(&problem.domain, problem.mesh_n)?);
        let (container, map) = container_mesh(&problem.domain, problem.mesh_n)?;
        let container = Arc::new(container);
        let x1_inner = match &problem.normalization_point {
            Some(p) => {
                let v = inner.vertex_at(&p[..inner.dim()]).ok_or_else(|| {
                    Error::invalid(format!(
                        "normalization point {:?} is not a mesh vertex of the inner domain",
                        &p[..inner.dim()]
                    ))
                })?;
                if inner.is_boundary(v) {
                    return Err(Error::invalid(
                        "normalization point must be an interior vertex",
                    ));
                }
                v
            }
            None => {
                let centroid = problem.domain.centroid();
                let mut best = usize::MAX;
                let mut best_d = f64::INFINITY;
                for i in 0..inner.vertex_count() {
                    if inner.is_boundary(i) {
                        continue;
                    }
                    let x = inner.vertex(i);
                    let d: f64 = (0..inner.dim())
                        .map(|a| (x[a] - centroid[a]) * (x[a] - centroid[a]))
                        .sum();
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                }
                if best == usize::MAX {
                    return Err(Error::invalid(
                        "mesh has no interior vertex to normalize at; refine the mesh",
                    ));
                }
                best
            }
        };
        let mut x1_point = [0.0; 3];
        x1_point[..inner.dim()].copy_from_slice(inner.vertex(x1_inner));
        let x1_container = map[x1_inner];
        Ok(Discretization {
            inner,
            container,
            inner_to_container: map,
            x1_inner,
            x1_container,
            x1_point,
        })
    }

    /// Weight values restricted to the inner mesh.
    pub fn restrict(&self, container_nodal: &[f64]) -> Vec<f64> {
        self.inner_to_container
            .iter()
            .map(|&c| container_nodal[c])
            .collect()
    }
}

/// Output of the weight construction.
#[derive(Clone, Debug)]
pub struct WeightResult {
    /// Nodal weight on the container mesh, normalized to 1 at `x1`.
    pub rho: Vec<f64>,
    pub x1_point: [f64; 3],
    pub x1_container: usize,
    /// max/min of the weight over inner-domain vertices.
    pub harnack_ratio: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub stats: SolveStats,
}

/// Output of the divergence-free transformation on the inner mesh.
#[derive(Clone, Debug)]
pub struct TransformResult {
    /// Transformed drift per element: H + (1/rho) A^T grad rho.
    pub field_b: Vec<[f64; 3]>,
    /// Divergence-free flux per element: rho_bar * B.
    pub flux: Vec<[f64; 3]>,
    pub divfree_residual: f64,
}

/// A reported scalar: either the value or the reason it is absent.
#[derive(Clone, Debug, serde::Serialize)]
pub struct Reported {
    pub value: Option<f64>,
    pub reason: Option<String>,
}

impl Reported {
    pub fn ok(value: f64) -> Reported {
        Reported {
            value: Some(value),
            reason: None,
        }
    }

    pub fn missing(reason: impl Into<String>) -> Reported {
        Reported {
            value: None,
            reason: Some(reason.into()),
        }
    }

    pub fn from_result(r: Result<f64>) -> Reported {
        match r {
            Ok(v) => Reported::ok(v),
            Err(e) => Reported::missing(format!("{e}")),
        }
    }
}

/// Constants and empirical ratios attached to one run.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ConstantsReport {
    pub sobolev: Reported,
    pub poincare: Reported,
    /// Bilinear form bound dM + S_d ||H||_{L^d}.
    pub form_bound: Reported,
    pub drift_norm_critical: Reported,
    /// Tail samples (s, tail(s)) of the drift magnitude.
    pub tail_samples: Vec<(f64, f64)>,
    pub shift_threshold: Reported,
    pub shift_level: Reported,
    pub shift_gamma: Reported,
    pub harnack_ratio: f64,
    /// S_d * harnack_ratio / lambda: the energy-estimate constant this
    /// pipeline can certify.
    pub derived_k5: Reported,
    pub ratio_h10_vs_energy_data: Reported,
    pub ratio_linf_vs_lq: Reported,
    /// (theta, ||u||_theta * alpha / ||f||_theta) for each requested theta.
    pub contraction_ratios: Vec<(f64, Reported)>,
    pub negative_zero_order_samples: usize,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct SolutionNorms {
    pub h10_seminorm: f64,
    pub l2: f64,
    pub linf: f64,
    /// 2d/(d+2), the data exponent of the energy estimate.
    pub energy_exponent: f64,
    pub l_energy: f64,
    pub l1: f64,
}

/// Nodal solution of the transformed problem with recomputed norms.
#[derive(Clone, Debug)]
pub struct Solution {
    pub nodal: Vec<f64>,
    pub norms: SolutionNorms,
    pub stats: SolveStats,
    pub warnings: Vec<String>,
}

pub struct SolveOutput {
    pub solution: Solution,
    pub weight: WeightResult,
    pub transform: TransformResult,
    pub constants: ConstantsReport,
}

/// Construct the positive weight on the container domain.
pub fn construct_rho(problem: &ProblemSpec) -> Result<WeightResult> {
    let disc = Discretization::build(problem)?;
    construct_rho_with(problem, &disc)
}

pub fn construct_rho_with(problem: &ProblemSpec, disc: &Discretization) -> Result<WeightResult> {
    let mesh = &disc.container;
    let adjoint_diffusion = assemble_stiffness_weighted(mesh, &Transposed(&problem.coeff), None)?;
    let drift_block = assemble_drift_on_test(mesh, &problem.drift)?;
    let matrix = adjoint_diffusion.add(&drift_block);
    // lift of boundary value 1: rhs_i = -int <H, grad phi_i>, the row sums of
    // the drift block (stiffness row sums vanish identically)
    let rhs_full: Vec<f64> = drift_block.row_sums().iter().map(|v| -v).collect();
    let system = apply_dirichlet(&matrix, &rhs_full, mesh, &|_: &[f64]| 0.0)?;
    let opts = materialize_solver(problem, &system, mesh)?;
    let (v_free, stats) = solve(&system.matrix, &system.rhs, &opts)?;
    let v = system.expand(&v_free);
    let w: Vec<f64> = v.iter().map(|vi| vi + 1.0).collect();

    let max_w = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = POSITIVITY_FLOOR_FACTOR * max_w;
    let (argmin, min_w) = w
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, &v)| (i, v))
        .unwrap();
    if !(min_w > floor) {
        return Err(Error::PositivityFailure {
            vertex: argmin,
            point: mesh.vertex(argmin).to_vec(),
            value: min_w,
            floor,
        });
    }

    let w_x1 = w[disc.x1_container];
    let rho: Vec<f64> = w.iter().map(|wi| wi / w_x1).collect();
    let mut min_rho = f64::INFINITY;
    let mut max_rho = f64::NEG_INFINITY;
    for i in 0..mesh.vertex_count() {
        if mesh.region(i) == RegionTag::Inner {
            min_rho = min_rho.min(rho[i]);
            max_rho = max_rho.max(rho[i]);
        }
    }
    Ok(WeightResult {
        rho,
        x1_point: disc.x1_point,
        x1_container: disc.x1_container,
        harnack_ratio: max_rho / min_rho,
        min_rho,
        max_rho,
        stats,
    })
}

/// max/min of the weight over the inner-domain vertices named by the map.
pub fn harnack_ratio(weight: &WeightResult, inner_to_container: &[usize]) -> f64 {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &c in inner_to_container {
        min = min.min(weight.rho[c]);
        max = max.max(weight.rho[c]);
    }
    max / min
}

/// Form the transformed drift and its flux on the inner mesh.
pub fn divfree_transform(problem: &ProblemSpec, weight: &WeightResult) -> Result<TransformResult> {
    let disc = Discretization::build(problem)?;
    divfree_transform_with(problem, &disc, weight)
}

pub fn divfree_transform_with(
    problem: &ProblemSpec,
    disc: &Discretization,
    weight: &WeightResult,
) -> Result<TransformResult> {
    let mesh = &disc.inner;
    let dim = mesh.dim();
    let rho_inner = disc.restrict(&weight.rho);
    let mut field_b = Vec::with_capacity(mesh.element_count());
    let mut flux = Vec::with_capacity(mesh.element_count());
    for e in 0..mesh.element_count() {
        let verts = mesh.simplex(e);
        let rho_bar: f64 = verts.iter().map(|&v| rho_inner[v]).sum::<f64>() / (dim + 1) as f64;
        if !(rho_bar > 0.0) {
            let &worst = verts
                .iter()
                .min_by(|&&a, &&b| rho_inner[a].partial_cmp(&rho_inner[b]).unwrap())
                .unwrap();
            return Err(Error::PositivityFailure {
                vertex: worst,
                point: mesh.vertex(worst).to_vec(),
                value: rho_inner[worst],
                floor: 0.0,
            });
        }
        let grad_rho = p1_gradient(mesh, &rho_inner, e);
        let b = mesh.barycenter(e);
        let a = problem.coeff.value(&b[..dim])?;
        // A^T grad rho
        let mut at_grad = [0.0f64; 3];
        for i in 0..dim {
            for j in 0..dim {
                at_grad[i] += a[j][i] * grad_rho[j];
            }
        }
        let h = problem.drift.element_value(mesh, e)?;
        let mut fx = [0.0f64; 3];
        let mut bv = [0.0f64; 3];
        for i in 0..dim {
            fx[i] = rho_bar * h[i] + at_grad[i];
            bv[i] = fx[i] / rho_bar;
        }
        flux.push(fx);
        field_b.push(bv);
    }
    let residual = divfree_residual(mesh, &flux);
    Ok(TransformResult {
        field_b,
        flux,
        divfree_residual: residual,
    })
}

/// Largest interior-hat divergence residual of a per-element flux, relative
/// to the flux's L2 norm.
pub fn divfree_residual(mesh: &Mesh, flux: &[[f64; 3]]) -> f64 {
    let dim = mesh.dim();
    let mut acc = vec![0.0f64; mesh.vertex_count()];
    let mut norm_terms = Vec::with_capacity(mesh.element_count());
    for e in 0..mesh.element_count() {
        let (grads, vol) = mesh.p1_gradients(e);
        let f = flux[e];
        for (k, &v) in mesh.simplex(e).iter().enumerate() {
            let pairing: f64 = (0..dim).map(|a| f[a] * grads[k][a]).sum();
            acc[v] += vol * pairing;
        }
        norm_terms.push(vol * (0..dim).map(|a| f[a] * f[a]).sum::<f64>());
    }
    let flux_norm = pairwise_sum(&norm_terms).sqrt();
    let mut max = 0.0f64;
    for v in 0..mesh.vertex_count() {
        if !mesh.is_boundary(v) {
            max = max.max(acc[v].abs());
        }
    }
    max / (flux_norm + 1e-30)
}

/// Solve the full transformed problem.
pub fn solve_problem(problem: &ProblemSpec) -> Result<SolveOutput> {
    let disc = Discretization::build(problem)?;
    solve_problem_with(problem, &disc)
}

pub fn solve_problem_with(problem: &ProblemSpec, disc: &Discretization) -> Result<SolveOutput> {
    let weight = construct_rho_with(problem, disc)?;
    let transform = divfree_transform_with(problem, disc, &weight)?;
    let mesh = &disc.inner;
    let dim = mesh.dim();
    let rho_inner = disc.restrict(&weight.rho);
    let rho_bar: Vec<f64> = (0..mesh.element_count())
        .map(|e| mesh.simplex(e).iter().map(|&v| rho_inner[v]).sum::<f64>() / (dim + 1) as f64)
        .collect();

    let diffusion = assemble_stiffness_weighted(mesh, &problem.coeff, Some(&rho_bar))?;
    let drift_block = assemble_drift_on_trial(
        mesh,
        &ElementField {
            values: &transform.flux,
        },
    )?;
    let (mass, mass_warnings) = assemble_mass(mesh, &problem.zero_order, true, Some(&rho_bar))?;
    let matrix = diffusion.add(&drift_block).add(&mass);
    let rhs = assemble_load(mesh, &problem.load, Some(&rho_inner))?;
    let system = apply_dirichlet(&matrix, &rhs, mesh, &|_: &[f64]| 0.0)?;
    let opts = materialize_solver(problem, &system, mesh)?;
    let (u_free, stats) = solve(&system.matrix, &system.rhs, &opts)?;
    let nodal = system.expand(&u_free);

    let mut warnings = Vec::new();
    if mass_warnings.negative_samples > 0 {
        let (elem, value) = mass_warnings.first.unwrap();
        warnings.push(format!(
            "zero-order coefficient negative at {} element samples (first: element {elem}, value {value:.3e})",
            mass_warnings.negative_samples
        ));
    }
    let norms = solution_norms(mesh, &nodal);
    let solution = Solution {
        nodal,
        norms,
        stats,
        warnings,
    };
    let constants = constants_report_with(problem, disc, &weight, &solution)?;
    Ok(SolveOutput {
        solution,
        weight,
        transform,
        constants,
    })
}

/// Direct discretization of the untransformed problem (no weight), used by
/// the verification drivers and the equivalence study.
pub fn solve_untransformed(problem: &ProblemSpec) -> Result<(Vec<f64>, SolveStats)> {
    let disc = Discretization::build(problem)?;
    solve_untransformed_with(problem, &disc)
}

pub fn solve_untransformed_with(
    problem: &ProblemSpec,
    disc: &Discretization,
) -> Result<(Vec<f64>, SolveStats)> {
    let mesh = &disc.inner;
    let diffusion = assemble_stiffness_weighted(mesh, &problem.coeff, None)?;
    let drift_block = assemble_drift_on_trial(mesh, &problem.drift)?;
    let (mass, _) = assemble_mass(mesh, &problem.zero_order, true, None)?;
    let matrix = diffusion.add(&drift_block).add(&mass);
    let rhs = assemble_load(mesh, &problem.load, None)?;
    let system = apply_dirichlet(&matrix, &rhs, mesh, &|_: &[f64]| 0.0)?;
    let opts = materialize_solver(problem, &system, mesh)?;
    let (u_free, stats) = solve(&system.matrix, &system.rhs, &opts)?;
    Ok((system.expand(&u_free), stats))
}

/// Fill in the shifted preconditioner's data when the caller requested it
/// symbolically (empty mass diagonal): gamma from the tail-selected shift,
/// mass from the unit lumped mass on the free vertices.
fn materialize_solver(
    problem: &ProblemSpec,
    system: &AssembledSystem,
    mesh: &Mesh,
) -> Result<SolveOptions> {
    let mut opts = problem.solver.clone();
    if let Preconditioner::Shifted { gamma, mass_diag } = &opts.precondition {
        if mass_diag.is_empty() {
            let gamma = if gamma.is_finite() {
                *gamma
            } else if mesh.dim() >= 3 {
                select_shift(&problem.drift, mesh, problem.coeff.ellipticity)?.1
            } else {
                0.0
            };
            let (mass, _) = assemble_mass(mesh, &ScalarFieldSpec::Constant(1.0), true, None)?;
            let full_diag = mass.diagonal();
            let mass_diag: Vec<f64> = system
                .free_to_vertex
                .iter()
                .map(|&v| full_diag[v])
                .collect();
            opts.precondition = Preconditioner::Shifted { gamma, mass_diag };
        }
    }
    Ok(opts)
}

fn solution_norms(mesh: &Mesh, nodal: &[f64]) -> SolutionNorms {
    let d = mesh.dim() as f64;
    let energy_exponent = 2.0 * d / (d + 2.0);
    SolutionNorms {
        h10_seminorm: p1_h10_seminorm(mesh, nodal),
        l2: p1_lp_norm(mesh, nodal, 2.0, QuadratureRule::Degree2),
        linf: p1_lp_norm(mesh, nodal, f64::INFINITY, QuadratureRule::Degree2),
        energy_exponent,
        l_energy: p1_lp_norm(mesh, nodal, energy_exponent, QuadratureRule::Degree2),
        l1: p1_lp_norm(mesh, nodal, 1.0, QuadratureRule::Degree2),
    }
}

/// Assemble the constants report for a finished run.
pub fn constants_report(
    problem: &ProblemSpec,
    weight: &WeightResult,
    solution: &Solution,
) -> Result<ConstantsReport> {
    let disc = Discretization::build(problem)?;
    constants_report_with(problem, &disc, weight, solution)
}

pub fn constants_report_with(
    problem: &ProblemSpec,
    disc: &Discretization,
    weight: &WeightResult,
    solution: &Solution,
) -> Result<ConstantsReport> {
    let mesh = &disc.inner;
    let d = mesh.dim();
    let lambda = problem.coeff.ellipticity;
    let sobolev = Reported::from_result(sobolev_constant(d));
    let poincare = Reported::from_result(poincare_constant(d, mesh.volume()));
    let drift_norm = if d >= 3 {
        Reported::from_result(vector_lp_norm(
            &problem.drift,
            mesh,
            d as f64,
            QuadratureRule::Degree2,
        ))
    } else {
        Reported::missing("critical norm requires d >= 3")
    };
    let form = match &drift_norm.value {
        Some(h) => Reported::from_result(form_bound(d, problem.coeff.entry_bound, *h)),
        None => Reported::missing("requires the critical drift norm (d >= 3)"),
    };
    let threshold = Reported::from_result(shift_threshold(d, lambda));
    let (shift_level, shift_gamma, tail_samples) = if d >= 3 {
        let (n, gamma) = select_shift(&problem.drift, mesh, lambda)?;
        let mut samples = Vec::new();
        for s in [0.0, 0.5 * n, n, 2.0 * n.max(1.0)] {
            samples.push((s, crate::fields::drift_tail(&problem.drift, mesh, s)?));
        }
        (Reported::ok(n), Reported::ok(gamma), samples)
    } else {
        (
            Reported::missing("outside the d >= 3 regime"),
            Reported::missing("outside the d >= 3 regime"),
            Vec::new(),
        )
    };
    let derived_k5 = match &sobolev.value {
        Some(s) => Reported::ok(s * weight.harnack_ratio / lambda),
        None => Reported::missing("outside the d >= 3 regime"),
    };

    let energy_exponent = 2.0 * d as f64 / (d as f64 + 2.0);
    let f_energy = scalar_lp_norm(&problem.load, mesh, energy_exponent, QuadratureRule::Degree2)?;
    let ratio_h10 = if f_energy > 0.0 {
        Reported::ok(solution.norms.h10_seminorm / f_energy)
    } else {
        Reported::missing("zero load")
    };
    let f_q = scalar_lp_norm(
        &problem.load,
        mesh,
        problem.load_exponent.max(1.0),
        QuadratureRule::Degree2,
    )?;
    let ratio_linf = if f_q > 0.0 {
        Reported::ok(solution.norms.linf / f_q)
    } else {
        Reported::missing("zero load")
    };

    let mut contraction_ratios = Vec::new();
    if let Some(alpha) = problem.alpha.filter(|a| *a > 0.0) {
        for theta in [1.0, 2.0, f64::INFINITY] {
            let u_norm = p1_lp_norm(mesh, &solution.nodal, theta, QuadratureRule::Degree2);
            let f_norm = scalar_lp_norm(&problem.load, mesh, theta, QuadratureRule::Degree2)?;
            let r = if f_norm > 0.0 {
                Reported::ok(u_norm * alpha / f_norm)
            } else {
                Reported::missing("zero load")
            };
            contraction_ratios.push((theta, r));
        }
    }

    Ok(ConstantsReport {
        sobolev,
        poincare,
        form_bound: form,
        drift_norm_critical: drift_norm,
        tail_samples,
        shift_threshold: threshold,
        shift_level,
        shift_gamma,
        harnack_ratio: weight.harnack_ratio,
        derived_k5,
        ratio_h10_vs_energy_data: ratio_h10,
        ratio_linf_vs_lq: ratio_linf,
        contraction_ratios,
        negative_zero_order_samples: solution
            .warnings
            .iter()
            .filter(|w| w.contains("zero-order"))
            .count(),
    })
}

/// Adjoint-system residual rows against the normalized weight: the algebraic
/// oracle for the divergence-free identity.
pub fn adjoint_residual_rows(
    problem: &ProblemSpec,
    disc: &Discretization,
    weight: &WeightResult,
) -> Result<Vec<f64>> {
    let mesh = &disc.container;
    let adjoint_diffusion = assemble_stiffness_weighted(mesh, &Transposed(&problem.coeff), None)?;
    let drift_block = assemble_drift_on_test(mesh, &problem.drift)?;
    let matrix: SparseMatrix = adjoint_diffusion.add(&drift_block);
    Ok(matrix.apply(&weight.rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ScalarField;

    fn punctured_box(dim: usize) -> DomainSpec {
        DomainSpec::symmetric_box(dim, Some(0.5))
    }

    // the standard bump drift: oscillation ln 2 (weight ratio oracle = 2),
    // support radius 0.6 strictly inside the container [-0.25, 1.25]^2
    fn bump_drift_problem(n: usize) -> ProblemSpec {
        let mut p = ProblemSpec::laplace(DomainSpec::unit_box(2), n);
        p.drift = DriftSpec::gradient_bump([0.5, 0.5, 0.0], 0.6, std::f64::consts::LN_2);
        p
    }

    #[test]
    fn zero_drift_gives_unit_weight_exactly() {
        let problem = ProblemSpec::laplace(DomainSpec::unit_box(2), 8);
        let w = construct_rho(&problem).unwrap();
        assert!(w.rho.iter().all(|&r| r == 1.0));
        assert_eq!(w.harnack_ratio, 1.0);
        assert_eq!(w.min_rho, 1.0);
        assert_eq!(w.max_rho, 1.0);
    }

    #[test]
    fn weight_is_normalized_at_x1() {
        let problem = bump_drift_problem(8);
        let disc = Discretization::build(&problem).unwrap();
        let w = construct_rho_with(&problem, &disc).unwrap();
        assert_eq!(w.rho[disc.x1_container], 1.0);
        assert!(w.harnack_ratio >= 1.0);
        assert!(w.min_rho <= 1.0 && w.max_rho >= 1.0);
        assert_eq!(harnack_ratio(&w, &disc.inner_to_container), w.harnack_ratio);
    }

    #[test]
    fn divergence_free_skew_drift_gives_unit_weight_to_rounding() {
        let mut problem = ProblemSpec::laplace(punctured_box(2), 16);
        problem.drift = DriftSpec::skew();
        let w = construct_rho(&problem).unwrap();
        let dev = w.rho.iter().fold(0.0f64, |m, &r| m.max((r - 1.0).abs()));
        assert!(dev <= 1e-9, "max |rho - 1| = {dev:e}");
    }

    #[test]
    fn gradient_bump_weight_matches_closed_form() {
        // continuum weight for H = grad V with A = I: rho = e^{-V}/e^{-V(x1)}
        let problem = bump_drift_problem(16);
        let disc = Discretization::build(&problem).unwrap();
        let w = construct_rho_with(&problem, &disc).unwrap();
        let bump = ScalarFieldSpec::Bump {
            center: [0.5, 0.5, 0.0],
            radius: 0.6,
            amplitude: std::f64::consts::LN_2,
        };
        let v_x1 = bump.value(&w.x1_point[..2]).unwrap();
        let mut err = 0.0f64;
        for i in 0..disc.container.vertex_count() {
            let v = bump.value(disc.container.vertex(i)).unwrap();
            let oracle = (-v).exp() / (-v_x1).exp();
            err = err.max((w.rho[i] - oracle).abs());
        }
        assert!(err < 2e-2, "sup error {err}");
        // oscillation ln 2 drives the inner ratio toward 2
        assert!((w.harnack_ratio - 2.0).abs() < 0.02, "{}", w.harnack_ratio);
    }

    #[test]
    fn transform_vanishes_for_zero_drift() {
        let problem = ProblemSpec::laplace(DomainSpec::unit_box(2), 8);
        let disc = Discretization::build(&problem).unwrap();
        let w = construct_rho_with(&problem, &disc).unwrap();
        let t = divfree_transform_with(&problem, &disc, &w).unwrap();
        for b in &t.field_b {
            assert!(b.iter().all(|&c| c == 0.0));
        }
        assert!(t.divfree_residual == 0.0);
    }

    #[test]
    fn transform_cancels_gradient_drift_under_refinement() {
        // continuum B = H + e^V grad(e^{-V}) = 0. The per-element gradient of
        // the nodal weight is first-order accurate pointwise, so the discrete
        // field shrinks like O(h); measured 0.155 * sup|H| at n = 32 for the
        // standard bump.
        let mut sup_prev = f64::INFINITY;
        for n in [16usize, 32] {
            let problem = bump_drift_problem(n);
            let disc = Discretization::build(&problem).unwrap();
            let w = construct_rho_with(&problem, &disc).unwrap();
            let t = divfree_transform_with(&problem, &disc, &w).unwrap();
            let sup_b = t
                .field_b
                .iter()
                .map(|b| (b[0] * b[0] + b[1] * b[1]).sqrt())
                .fold(0.0f64, f64::max);
            let grad_sup = (0..disc.inner.element_count())
                .map(|e| {
                    let h = problem.drift.element_value(&disc.inner, e).unwrap();
                    (h[0] * h[0] + h[1] * h[1]).sqrt()
                })
                .fold(0.0f64, f64::max);
            assert!(sup_b < sup_prev);
            sup_prev = sup_b;
            if n == 32 {
                assert!(sup_b <= 0.25 * grad_sup, "{sup_b} vs {grad_sup}");
            }
        }
    }

    #[test]
    fn transform_reduces_to_skew_drift_when_weight_is_unit() {
        let mut problem = ProblemSpec::laplace(punctured_box(2), 16);
        problem.drift = DriftSpec::skew();
        let disc = Discretization::build(&problem).unwrap();
        let w = construct_rho_with(&problem, &disc).unwrap();
        let t = divfree_transform_with(&problem, &disc, &w).unwrap();
        let mut max_dev = 0.0f64;
        let mut max_h = 0.0f64;
        for e in 0..disc.inner.element_count() {
            let h = problem.drift.element_value(&disc.inner, e).unwrap();
            let b = t.field_b[e];
            for a in 0..2 {
                max_dev = max_dev.max((b[a] - h[a]).abs());
                max_h = max_h.max(h[a].abs());
            }
        }
        assert!(max_dev <= 1e-8 * max_h, "{max_dev} vs {max_h}");
    }

    #[test]
    fn flux_equals_weighted_field_entrywise() {
        let problem = bump_drift_problem(8);
        let disc = Discretization::build(&problem).unwrap();
        let w = construct_rho_with(&problem, &disc).unwrap();
        let t = divfree_transform_with(&problem, &disc, &w).unwrap();
        let rho_inner = disc.restrict(&w.rho);
        for e in 0..disc.inner.element_count() {
            let verts = disc.inner.simplex(e);
            let rho_bar: f64 = verts.iter().map(|&v| rho_inner[v]).sum::<f64>() / 3.0;
            for a in 0..2 {
                let expect = rho_bar * t.field_b[e][a];
                let got = t.flux[e][a];
                assert!(
                    (expect - got).abs() <= 1e-15 * got.abs().max(1e-300),
                    "{expect} vs {got}"
                );
            }
        }
    }

    #[test]
    fn divfree_residual_examples() {
        let mesh = build_mesh(&DomainSpec::unit_box(2), 4).unwrap();
        // constants are discretely divergence-free
        let constant = vec![[0.4, -0.9, 0.0]; mesh.element_count()];
        assert!(divfree_residual(&mesh, &constant) <= 1e-13);
        // the linear field (x_1, 0) has divergence 1: residual stays away
        // from zero under refinement
        for n in [4usize, 8, 16] {
            let m = build_mesh(&DomainSpec::unit_box(2), n).unwrap();
            let linear: Vec<[f64; 3]> = (0..m.element_count())
                .map(|e| [m.barycenter(e)[0], 0.0, 0.0])
                .collect();
            let r = divfree_residual(&m, &linear);
            assert!(r > 1e-3, "n={n}: {r}");
        }
    }

    #[test]
    fn transform_residual_matches_adjoint_rows_directly() {
        // expand the interior sums on a coarse mesh and compare with the
        // adjoint system residual rows
        let problem = bump_drift_problem(4);
        let disc = Discretization::build(&problem).unwrap();
        let w = construct_rho_with(&problem, &disc).unwrap();
        let t = divfree_transform_with(&problem, &disc, &w).unwrap();
        let adjoint_rows = adjoint_residual_rows(&problem, &disc, &w).unwrap();
        let mesh = &disc.inner;
        let mut acc = vec![0.0f64; mesh.vertex_count()];
        for e in 0..mesh.element_count() {
            let (grads, vol) = mesh.p1_gradients(e);
            for (k, &v) in mesh.simplex(e).iter().enumerate() {
                acc[v] += vol * (t.flux[e][0] * grads[k][0] + t.flux[e][1] * grads[k][1]);
            }
        }
        let scale = adjoint_rows
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1.0);
        for (i, &c) in disc.inner_to_container.iter().enumerate() {
            if !mesh.is_boundary(i) {
                assert!(
                    (acc[i] - adjoint_rows[c]).abs() <= 1e-10 * scale,
                    "vertex {i}: {} vs {}",
                    acc[i],
                    adjoint_rows[c]
                );
            }
        }
    }

    #[test]
    fn transform_residual_is_solver_small() {
        for (dim, n) in [(2usize, 8usize), (2, 16), (3, 4)] {
            let mut problem = ProblemSpec::laplace(DomainSpec::unit_box(dim), n);
            let mut center = [0.5; 3];
            if dim == 2 {
                center[2] = 0.0;
            }
            problem.drift = DriftSpec::gradient_bump(center, 0.4, 0.7);
            let out = solve_problem(&problem).unwrap();
            assert!(
                out.transform.divfree_residual <= 10.0 * problem.solver.rel_tol,
                "dim {dim} n {n}: {}",
                out.transform.divfree_residual
            );
        }
    }

    #[test]
    fn zero_load_gives_zero_solution_exactly() {
        let mut problem = bump_drift_problem(8);
        problem.load = ScalarFieldSpec::Constant(0.0);
        let out = solve_problem(&problem).unwrap();
        assert!(out.solution.nodal.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn solution_is_linear_in_the_load() {
        let mut problem = bump_drift_problem(8);
        problem.load = ScalarFieldSpec::Constant(1.0);
        let one = solve_problem(&problem).unwrap();
        problem.load = ScalarFieldSpec::Constant(2.0);
        let two = solve_problem(&problem).unwrap();
        let scale = one.solution.norms.linf;
        for (a, b) in one.solution.nodal.iter().zip(&two.solution.nodal) {
            assert!((2.0 * a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn boundary_values_are_exactly_zero() {
        let problem = bump_drift_problem(8);
        let disc = Discretization::build(&problem).unwrap();
        let out = solve_problem_with(&problem, &disc).unwrap();
        for v in 0..disc.inner.vertex_count() {
            if disc.inner.is_boundary(v) {
                assert_eq!(out.solution.nodal[v], 0.0);
            }
        }
    }

    #[test]
    fn manufactured_solution_is_accurate() {
        let mut problem = ProblemSpec::laplace(DomainSpec::unit_box(2), 16);
        problem.load = ScalarFieldSpec::SinLoad {
            drift: [0.0; 3],
            zero_order: 0.0,
        };
        let out = solve_problem(&problem).unwrap();
        let disc = Discretization::build(&problem).unwrap();
        let exact = ScalarFieldSpec::SinProduct;
        let mut sup = 0.0f64;
        for i in 0..disc.inner.vertex_count() {
            let e = exact.value(disc.inner.vertex(i)).unwrap();
            sup = sup.max((out.solution.nodal[i] - e).abs());
        }
        assert!(sup < 0.02, "sup error {sup}");
    }

    #[test]
    fn constants_report_echoes_shift_and_k5() {
        let mut problem = ProblemSpec::laplace(DomainSpec::unit_box(3), 8);
        problem.load = ScalarFieldSpec::SinLoad {
            drift: [0.0; 3],
            zero_order: 0.0,
        };
        let out = solve_problem(&problem).unwrap();
        let c = &out.constants;
        assert_eq!(c.sobolev.value, Some(4.0));
        assert_eq!(c.derived_k5.value, Some(4.0)); // ratio = 1, lambda = 1
        assert_eq!(c.shift_level.value, Some(0.0));
        assert_eq!(c.shift_gamma.value, Some(0.0));
        // measured energy ratio obeys the derived constant with 10% slack
        let ratio = c.ratio_h10_vs_energy_data.value.unwrap();
        assert!(ratio <= 4.0 * 1.1, "{ratio}");
        // tail sample at 0 equals the squared critical norm
        let h_norm = c.drift_norm_critical.value.unwrap();
        assert!((c.tail_samples[0].1 - h_norm * h_norm).abs() <= 1e-12);
    }

    #[test]
    fn equivalence_of_transformed_and_untransformed_formulations() {
        // smooth drift: the two discrete solutions agree within
        // 10 (h + tol) ||u|| and the agreement improves under refinement
        let mut prev_gap = f64::INFINITY;
        for n in [8usize, 16] {
            let problem = bump_drift_problem(n);
            let disc = Discretization::build(&problem).unwrap();
            let transformed = solve_problem_with(&problem, &disc).unwrap();
            let (direct, _) = solve_untransformed_with(&problem, &disc).unwrap();
            let mut gap = 0.0f64;
            for (a, b) in transformed.solution.nodal.iter().zip(&direct) {
                gap = gap.max((a - b).abs());
            }
            let u_norm = transformed.solution.norms.linf;
            let bound = 10.0 * (disc.inner.h() + problem.solver.rel_tol) * u_norm;
            assert!(gap <= bound, "n={n}: gap {gap} bound {bound}");
            assert!(gap <= prev_gap);
            prev_gap = gap;
        }
    }

    #[test]
    fn counterexample_drift_grows_or_fails_positivity() {
        // the radial counterexample drift on an unpunctured box straddling
        // the singularity: either the lifted solve dips under the floor
        // (reported as a positivity failure) or the weight peaks sharply
        let mut problem = ProblemSpec::laplace(DomainSpec::symmetric_box(2, None), 16);
        problem.drift = DriftSpec::counterexample(2);
        problem.normalization_point = Some([0.5, 0.5, 0.0]);
        match construct_rho(&problem) {
            Ok(w) => assert!(w.max_rho > 1.0, "{}", w.max_rho),
            Err(Error::PositivityFailure { value, floor, .. }) => assert!(value <= floor),
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }
}
