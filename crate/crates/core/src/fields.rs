//! Coefficient fields, their analytic presets, and the functional-analytic
//! quantities derived from them: Lp norms, the drift tail function and the
//! induced coercivity shift, embedding constants, mollification, and
//! admissible cover radii.
//!
//! Every preset carries closed-form derivatives, which is what the study
//! drivers use as oracles. There is deliberately no expression language:
//! a coefficient you cannot differentiate by hand here is a coefficient the
//! verification suite cannot check.

use std::f64::consts::LN_2;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::{pairwise_sum, rule_points, QuadratureRule};

/// Scalar coefficient field evaluable at points of its domain.
pub trait ScalarField {
    fn value(&self, x: &[f64]) -> Result<f64>;
}

/// Vector coefficient field. `element_value` is the assembly-facing sample;
/// the default is the barycenter value, overridden by fields that commit to
/// an elementwise discretization.
pub trait VectorField {
    fn value(&self, x: &[f64]) -> Result<[f64; 3]>;

    fn element_value(&self, mesh: &Mesh, elem: usize) -> Result<[f64; 3]> {
        let b = mesh.barycenter(elem);
        self.value(&b[..mesh.dim()])
    }
}

/// Matrix coefficient with declared entry bound and ellipticity constant.
pub trait MatrixField {
    fn value(&self, x: &[f64]) -> Result<[[f64; 3]; 3]>;
    fn entry_bound(&self) -> f64;
    fn ellipticity(&self) -> f64;
}

impl<F: Fn(&[f64]) -> f64> ScalarField for F {
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self(x))
    }
}

impl<F: Fn(&[f64]) -> [f64; 3]> VectorField for F {
    fn value(&self, x: &[f64]) -> Result<[f64; 3]> {
        Ok(self(x))
    }
}

/// Transpose view of a matrix field.
pub struct Transposed<'a, M: MatrixField>(pub &'a M);

impl<M: MatrixField> MatrixField for Transposed<'_, M> {
    fn value(&self, x: &[f64]) -> Result<[[f64; 3]; 3]> {
        let a = self.0.value(x)?;
        let mut t = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                t[i][j] = a[j][i];
            }
        }
        Ok(t)
    }
    fn entry_bound(&self) -> f64 {
        self.0.entry_bound()
    }
    fn ellipticity(&self) -> f64 {
        self.0.ellipticity()
    }
}

/// Per-element constant vector data (fluxes, mollified drifts restricted to
/// one mesh). Only meaningful through `element_value`.
pub struct ElementField<'a> {
    pub values: &'a [[f64; 3]],
}

impl VectorField for ElementField<'_> {
    fn value(&self, x: &[f64]) -> Result<[f64; 3]> {
        Err(Error::invalid(format!(
            "element-indexed field has no pointwise value (requested at {x:?})"
        )))
    }
    fn element_value(&self, _mesh: &Mesh, elem: usize) -> Result<[f64; 3]> {
        Ok(self.values[elem])
    }
}

// ---------------------------------------------------------------------------
// scalar presets
// ---------------------------------------------------------------------------

/// Scalar field presets.
#[derive(Clone, Debug)]
pub enum ScalarFieldSpec {
    Constant(f64),
    /// Smooth bump supported in the open ball: amplitude * exp(1 - 1/(1-s)),
    /// s = |x-center|^2/radius^2. Value is `amplitude` at the center.
    Bump {
        center: [f64; 3],
        radius: f64,
        amplitude: f64,
    },
    /// (1/ln 2) * ln(1 + 1/|x|): the positive weight that is singular at the
    /// origin; unit value on the unit sphere.
    CounterexampleWeight,
    /// ln ln(1 + 1/|x|): the potential whose skew gradient is the critical
    /// divergence-free drift example.
    SkewPotential,
    /// prod_a sin(pi x_a) on the unit box (manufactured solution).
    SinProduct,
    /// Load matching `SinProduct` for -div(grad u) + <drift, grad u> + c u.
    SinLoad {
        drift: [f64; 3],
        zero_order: f64,
    },
    /// Analytic Laplacian of `Bump` (the weak divergence of its gradient).
    BumpLaplacian {
        center: [f64; 3],
        radius: f64,
        amplitude: f64,
    },
    /// Nodal values on a mesh, P1-interpolated; zero outside the mesh.
    Gridded {
        mesh: Arc<Mesh>,
        values: Arc<Vec<f64>>,
    },
}

fn radius(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn counterexample_weight(r: f64) -> f64 {
    (1.0 + 1.0 / r).ln() / LN_2
}

/// d/dr of the counterexample weight: -(1/ln 2) / (r^2 + r).
fn counterexample_weight_prime(r: f64) -> f64 {
    -1.0 / (LN_2 * (r * r + r))
}

fn skew_potential(r: f64) -> f64 {
    (1.0 + 1.0 / r).ln().ln()
}

/// d/dr of the skew potential: -1 / ((r^2 + r) ln(1 + 1/r)).
fn skew_potential_prime(r: f64) -> f64 {
    -1.0 / ((r * r + r) * (1.0 + 1.0 / r).ln())
}

fn bump_value(x: &[f64], center: &[f64; 3], radius_: f64, amplitude: f64) -> f64 {
    let s: f64 = x
        .iter()
        .enumerate()
        .map(|(a, &c)| {
            let d = c - center[a];
            d * d
        })
        .sum::<f64>()
        / (radius_ * radius_);
    if s >= 1.0 {
        0.0
    } else {
        amplitude * (1.0 - 1.0 / (1.0 - s)).exp()
    }
}

fn bump_gradient(x: &[f64], center: &[f64; 3], radius_: f64, amplitude: f64) -> [f64; 3] {
    let r2 = radius_ * radius_;
    let s: f64 = x
        .iter()
        .enumerate()
        .map(|(a, &c)| {
            let d = c - center[a];
            d * d
        })
        .sum::<f64>()
        / r2;
    let mut g = [0.0; 3];
    if s >= 1.0 {
        return g;
    }
    let u = 1.0 / (1.0 - s);
    let gv = amplitude * (1.0 - u).exp();
    // dV/ds = -V * u^2; grad s = 2 (x - c) / R^2
    let factor = -gv * u * u * 2.0 / r2;
    for (a, &c) in x.iter().enumerate() {
        g[a] = factor * (c - center[a]);
    }
    g
}

fn bump_laplacian(x: &[f64], center: &[f64; 3], radius_: f64, amplitude: f64, dim: usize) -> f64 {
    let r2 = radius_ * radius_;
    let s: f64 = x
        .iter()
        .enumerate()
        .map(|(a, &c)| {
            let d = c - center[a];
            d * d
        })
        .sum::<f64>()
        / r2;
    if s >= 1.0 {
        return 0.0;
    }
    let u = 1.0 / (1.0 - s);
    let v = amplitude * (1.0 - u).exp();
    let d1 = -v * u * u; // dV/ds
    let d2 = v * (u * u * u * u - 2.0 * u * u * u); // d2V/ds2
    // |grad s|^2 = 4 s / R^2, lap s = 2 d / R^2
    d2 * 4.0 * s / r2 + d1 * 2.0 * dim as f64 / r2
}

impl ScalarField for ScalarFieldSpec {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let v = match self {
            ScalarFieldSpec::Constant(c) => *c,
            ScalarFieldSpec::Bump {
                center,
                radius,
                amplitude,
            } => bump_value(x, center, *radius, *amplitude),
            ScalarFieldSpec::CounterexampleWeight => counterexample_weight(radius(x)),
            ScalarFieldSpec::SkewPotential => skew_potential(radius(x)),
            ScalarFieldSpec::SinProduct => x.iter().map(|&c| (std::f64::consts::PI * c).sin()).product(),
            ScalarFieldSpec::SinLoad { drift, zero_order } => {
                let pi = std::f64::consts::PI;
                let d = x.len();
                let u: f64 = x.iter().map(|&c| (pi * c).sin()).product();
                let mut drift_term = 0.0;
                for a in 0..d {
                    let mut du = pi * (pi * x[a]).cos();
                    for (b, &c) in x.iter().enumerate() {
                        if b != a {
                            du *= (pi * c).sin();
                        }
                    }
                    drift_term += drift[a] * du;
                }
                d as f64 * pi * pi * u + drift_term + zero_order * u
            }
            ScalarFieldSpec::BumpLaplacian {
                center,
                radius,
                amplitude,
            } => bump_laplacian(x, center, *radius, *amplitude, x.len()),
            ScalarFieldSpec::Gridded { mesh, values } => match mesh.locate(x) {
                None => 0.0,
                Some((e, lambda)) => mesh
                    .simplex(e)
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| lambda[k] * values[v])
                    .sum(),
            },
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteSample {
                context: format!("scalar field {}", self.kind_name()),
                point: x.to_vec(),
                element: None,
            })
        }
    }
}

impl ScalarFieldSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ScalarFieldSpec::Constant(_) => "constant",
            ScalarFieldSpec::Bump { .. } => "bump",
            ScalarFieldSpec::CounterexampleWeight => "counterexample_w",
            ScalarFieldSpec::SkewPotential => "preset_phi",
            ScalarFieldSpec::SinProduct => "sin_product",
            ScalarFieldSpec::SinLoad { .. } => "sin_load",
            ScalarFieldSpec::BumpLaplacian { .. } => "bump_laplacian",
            ScalarFieldSpec::Gridded { .. } => "gridded",
        }
    }
}

// ---------------------------------------------------------------------------
// vector presets
// ---------------------------------------------------------------------------

/// Vector field presets.
#[derive(Clone, Debug)]
pub enum VectorFieldSpec {
    Zero,
    Constant([f64; 3]),
    /// Analytic gradient of a supported scalar preset.
    GradientOf(Box<ScalarFieldSpec>),
    /// -grad(ln V) for a supported positive scalar preset.
    NegGradLog(Box<ScalarFieldSpec>),
    /// (d_dim Phi, 0, ..., -d_1 Phi) for the skew potential. Pointwise values
    /// are analytic; the assembly-facing element value is the same skew
    /// pattern applied to the P1 gradient of the nodal potential, which makes
    /// the discrete weak divergence vanish identically (tangential gradients
    /// of a continuous interpolant match across faces).
    SkewExample,
    /// Per-element constant vectors on a mesh; zero outside.
    Gridded {
        mesh: Arc<Mesh>,
        values: Arc<Vec<[f64; 3]>>,
    },
}

fn analytic_gradient(scalar: &ScalarFieldSpec, x: &[f64]) -> Result<[f64; 3]> {
    match scalar {
        ScalarFieldSpec::Constant(_) => Ok([0.0; 3]),
        ScalarFieldSpec::Bump {
            center,
            radius,
            amplitude,
        } => Ok(bump_gradient(x, center, *radius, *amplitude)),
        ScalarFieldSpec::CounterexampleWeight => {
            let r = radius(x);
            let w1 = counterexample_weight_prime(r);
            let mut g = [0.0; 3];
            for (a, &c) in x.iter().enumerate() {
                g[a] = w1 * c / r;
            }
            Ok(g)
        }
        ScalarFieldSpec::SkewPotential => {
            let r = radius(x);
            let p1 = skew_potential_prime(r);
            let mut g = [0.0; 3];
            for (a, &c) in x.iter().enumerate() {
                g[a] = p1 * c / r;
            }
            Ok(g)
        }
        other => Err(Error::invalid(format!(
            "no analytic gradient for scalar preset '{}'",
            other.kind_name()
        ))),
    }
}

fn skew_from_gradient(g: [f64; 3], dim: usize) -> [f64; 3] {
    match dim {
        2 => [g[1], -g[0], 0.0],
        3 => [g[2], 0.0, -g[0]],
        _ => unreachable!(),
    }
}

impl VectorField for VectorFieldSpec {
    fn value(&self, x: &[f64]) -> Result<[f64; 3]> {
        let v = match self {
            VectorFieldSpec::Zero => [0.0; 3],
            VectorFieldSpec::Constant(v) => *v,
            VectorFieldSpec::GradientOf(s) => analytic_gradient(s, x)?,
            VectorFieldSpec::NegGradLog(s) => {
                let val = s.value(x)?;
                let g = analytic_gradient(s, x)?;
                let mut out = [0.0; 3];
                for a in 0..x.len() {
                    out[a] = -g[a] / val;
                }
                out
            }
            VectorFieldSpec::SkewExample => {
                let g = analytic_gradient(&ScalarFieldSpec::SkewPotential, x)?;
                skew_from_gradient(g, x.len())
            }
            VectorFieldSpec::Gridded { mesh, values } => match mesh.locate(x) {
                None => [0.0; 3],
                Some((e, _)) => values[e],
            },
        };
        if v.iter().all(|c| c.is_finite()) {
            Ok(v)
        } else {
            Err(Error::NonFiniteSample {
                context: format!("vector field {}", self.kind_name()),
                point: x.to_vec(),
                element: None,
            })
        }
    }

    fn element_value(&self, mesh: &Mesh, elem: usize) -> Result<[f64; 3]> {
        match self {
            VectorFieldSpec::SkewExample => {
                // P1 gradient of the nodal potential, then the skew pattern
                let (grads, _vol) = mesh.p1_gradients(elem);
                let mut g = [0.0; 3];
                for (k, &v) in mesh.simplex(elem).iter().enumerate() {
                    let phi = ScalarFieldSpec::SkewPotential.value(mesh.vertex(v))?;
                    for a in 0..mesh.dim() {
                        g[a] += phi * grads[k][a];
                    }
                }
                Ok(skew_from_gradient(g, mesh.dim()))
            }
            VectorFieldSpec::Gridded {
                mesh: own,
                values,
            } => {
                if own.same_lattice(mesh) {
                    Ok(values[elem])
                } else {
                    let b = mesh.barycenter(elem);
                    self.value(&b[..mesh.dim()])
                }
            }
            _ => {
                let b = mesh.barycenter(elem);
                self.value(&b[..mesh.dim()]).map_err(|e| match e {
                    Error::NonFiniteSample { context, point, .. } => Error::NonFiniteSample {
                        context,
                        point,
                        element: Some(elem),
                    },
                    other => other,
                })
            }
        }
    }
}

impl VectorFieldSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            VectorFieldSpec::Zero => "zero",
            VectorFieldSpec::Constant(_) => "constant",
            VectorFieldSpec::GradientOf(_) => "gradient_of",
            VectorFieldSpec::NegGradLog(_) => "neg_grad_log",
            VectorFieldSpec::SkewExample => "skew_example",
            VectorFieldSpec::Gridded { .. } => "gridded",
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, VectorFieldSpec::Zero)
    }
}

// ---------------------------------------------------------------------------
// matrix presets
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum MatrixKind {
    Identity,
    Constant([[f64; 3]; 3]),
    /// Two constant matrices alternating on a checkerboard of the given cell
    /// size (parity of the sum of cell indices).
    Checkerboard {
        even: [[f64; 3]; 3],
        odd: [[f64; 3]; 3],
        cell: f64,
    },
}

/// Matrix coefficient with declared entry bound M and ellipticity lambda.
#[derive(Clone, Debug)]
pub struct MatrixFieldSpec {
    pub kind: MatrixKind,
    pub entry_bound: f64,
    pub ellipticity: f64,
}

fn scaled_identity(s: f64) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for a in 0..3 {
        m[a][a] = s;
    }
    m
}

impl MatrixFieldSpec {
    pub fn identity() -> Self {
        MatrixFieldSpec {
            kind: MatrixKind::Identity,
            entry_bound: 1.0,
            ellipticity: 1.0,
        }
    }

    pub fn constant(matrix: [[f64; 3]; 3], entry_bound: f64, ellipticity: f64) -> Self {
        MatrixFieldSpec {
            kind: MatrixKind::Constant(matrix),
            entry_bound,
            ellipticity,
        }
    }

    /// Checkerboard of two scalar multiples of the identity.
    pub fn checkerboard_scalar(even: f64, odd: f64, cell: f64) -> Self {
        MatrixFieldSpec {
            kind: MatrixKind::Checkerboard {
                even: scaled_identity(even),
                odd: scaled_identity(odd),
                cell,
            },
            entry_bound: even.max(odd),
            ellipticity: even.min(odd),
        }
    }
}

impl MatrixField for MatrixFieldSpec {
    fn value(&self, x: &[f64]) -> Result<[[f64; 3]; 3]> {
        let m = match &self.kind {
            MatrixKind::Identity => scaled_identity(1.0),
            MatrixKind::Constant(m) => *m,
            MatrixKind::Checkerboard { even, odd, cell } => {
                let parity: i64 = x.iter().map(|&c| (c / cell).floor() as i64).sum();
                if parity.rem_euclid(2) == 0 {
                    *even
                } else {
                    *odd
                }
            }
        };
        if m.iter().flatten().all(|c| c.is_finite()) {
            Ok(m)
        } else {
            Err(Error::NonFiniteSample {
                context: "matrix field".to_string(),
                point: x.to_vec(),
                element: None,
            })
        }
    }

    fn entry_bound(&self) -> f64 {
        self.entry_bound
    }

    fn ellipticity(&self) -> f64 {
        self.ellipticity
    }
}

// ---------------------------------------------------------------------------
// drift decomposition
// ---------------------------------------------------------------------------

/// Drift decomposition H = H1 + H2 with declared exponents: H1 integrable
/// above the critical order (p > d), H2 critical with weak divergence
/// `div_h2` of declared exponent q_tilde > d/2.
#[derive(Clone, Debug)]
pub struct DriftSpec {
    pub h1: VectorFieldSpec,
    pub p: f64,
    pub h2: VectorFieldSpec,
    pub div_h2: ScalarFieldSpec,
    pub q_tilde: f64,
}

impl DriftSpec {
    pub fn zero() -> Self {
        DriftSpec {
            h1: VectorFieldSpec::Zero,
            p: 1.0e9,
            h2: VectorFieldSpec::Zero,
            div_h2: ScalarFieldSpec::Constant(0.0),
            q_tilde: 1.0e9,
        }
    }

    /// Constant drift (regular part only).
    pub fn constant(v: [f64; 3]) -> Self {
        DriftSpec {
            h1: VectorFieldSpec::Constant(v),
            p: 1.0e9,
            ..DriftSpec::zero()
        }
    }

    /// Regular-part drift from an arbitrary field with declared exponent.
    pub fn from_regular(h1: VectorFieldSpec, p: f64) -> Self {
        DriftSpec {
            h1,
            p,
            ..DriftSpec::zero()
        }
    }

    /// Gradient of a bump: H2 = grad V with weak divergence lap V, both
    /// analytic.
    pub fn gradient_bump(center: [f64; 3], radius: f64, amplitude: f64) -> Self {
        DriftSpec {
            h1: VectorFieldSpec::Zero,
            p: 1.0e9,
            h2: VectorFieldSpec::GradientOf(Box::new(ScalarFieldSpec::Bump {
                center,
                radius,
                amplitude,
            })),
            div_h2: ScalarFieldSpec::BumpLaplacian {
                center,
                radius,
                amplitude,
            },
            q_tilde: 1.0e9,
        }
    }

    /// The skew divergence-free critical drift (weak divergence zero).
    pub fn skew() -> Self {
        DriftSpec {
            h1: VectorFieldSpec::Zero,
            p: 1.0e9,
            h2: VectorFieldSpec::SkewExample,
            div_h2: ScalarFieldSpec::Constant(0.0),
            q_tilde: 1.0e9,
        }
    }

    /// The radial counterexample drift -grad ln w. Its divergence is only
    /// L^{d/2}-integrable, so the declared exponents intentionally violate
    /// the structural requirement; studies use it to exhibit blow-up.
    pub fn counterexample(dim: usize) -> Self {
        DriftSpec {
            h1: VectorFieldSpec::NegGradLog(Box::new(ScalarFieldSpec::CounterexampleWeight)),
            p: dim as f64,
            h2: VectorFieldSpec::Zero,
            div_h2: ScalarFieldSpec::Constant(0.0),
            q_tilde: dim as f64 / 2.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.h1.is_zero() && self.h2.is_zero()
    }
}

impl VectorField for DriftSpec {
    fn value(&self, x: &[f64]) -> Result<[f64; 3]> {
        let a = self.h1.value(x)?;
        let b = self.h2.value(x)?;
        Ok([a[0] + b[0], a[1] + b[1], a[2] + b[2]])
    }

    fn element_value(&self, mesh: &Mesh, elem: usize) -> Result<[f64; 3]> {
        let a = self.h1.element_value(mesh, elem)?;
        let b = self.h2.element_value(mesh, elem)?;
        Ok([a[0] + b[0], a[1] + b[1], a[2] + b[2]])
    }
}

// ---------------------------------------------------------------------------
// norms and tail quantities
// ---------------------------------------------------------------------------

fn magnitude(v: &[f64; 3], dim: usize) -> f64 {
    (0..dim).map(|a| v[a] * v[a]).sum::<f64>().sqrt()
}

fn lp_from_samples(samples: &[(f64, f64)], p: f64) -> f64 {
    if p.is_infinite() {
        return samples.iter().fold(0.0, |m, &(_, v)| m.max(v.abs()));
    }
    let terms: Vec<f64> = samples.iter().map(|&(w, v)| w * v.abs().powf(p)).collect();
    pairwise_sum(&terms).powf(1.0 / p)
}

/// Quadrature samples (weight, value) of a scalar field over the mesh.
fn scalar_samples(
    field: &impl ScalarField,
    mesh: &Mesh,
    rule: QuadratureRule,
) -> Result<Vec<(f64, f64)>> {
    let pts = rule_points(rule, mesh.dim());
    let mut out = Vec::with_capacity(mesh.element_count() * pts.len());
    for e in 0..mesh.element_count() {
        for (p, w) in mesh.quadrature(e, rule) {
            let v = field.value(&p[..mesh.dim()]).map_err(|err| attach_elem(err, e))?;
            out.push((w, v));
        }
    }
    Ok(out)
}

fn vector_samples(
    field: &impl VectorField,
    mesh: &Mesh,
    rule: QuadratureRule,
) -> Result<Vec<(f64, f64)>> {
    let pts = rule_points(rule, mesh.dim());
    let mut out = Vec::with_capacity(mesh.element_count() * pts.len());
    for e in 0..mesh.element_count() {
        for (p, w) in mesh.quadrature(e, rule) {
            let v = field.value(&p[..mesh.dim()]).map_err(|err| attach_elem(err, e))?;
            out.push((w, magnitude(&v, mesh.dim())));
        }
    }
    Ok(out)
}

fn attach_elem(err: Error, elem: usize) -> Error {
    match err {
        Error::NonFiniteSample { context, point, .. } => Error::NonFiniteSample {
            context,
            point,
            element: Some(elem),
        },
        other => other,
    }
}

/// Lp norm of a scalar field by quadrature (`p = inf` takes the max sample).
pub fn scalar_lp_norm(
    field: &impl ScalarField,
    mesh: &Mesh,
    p: f64,
    rule: QuadratureRule,
) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("Lp exponent must be >= 1, got {p}")));
    }
    Ok(lp_from_samples(&scalar_samples(field, mesh, rule)?, p))
}

/// Lp norm of a vector field (pointwise Euclidean magnitude) by quadrature.
pub fn vector_lp_norm(
    field: &impl VectorField,
    mesh: &Mesh,
    p: f64,
    rule: QuadratureRule,
) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("Lp exponent must be >= 1, got {p}")));
    }
    Ok(lp_from_samples(&vector_samples(field, mesh, rule)?, p))
}

/// Tail function of the drift: the 2/d power of the L^d mass carried by
/// samples with magnitude strictly above `s`. Nonincreasing in `s`;
/// at `s = 0` it equals the squared L^d norm under the same quadrature.
pub fn drift_tail(field: &impl VectorField, mesh: &Mesh, s: f64) -> Result<f64> {
    let d = require_d_at_least_3(mesh.dim())?;
    let samples = vector_samples(field, mesh, QuadratureRule::Degree2)?;
    Ok(tail_from_samples(&samples, s, d))
}

fn tail_from_samples(samples: &[(f64, f64)], s: f64, d: usize) -> f64 {
    let dd = d as f64;
    let terms: Vec<f64> = samples
        .iter()
        .filter(|&&(_, m)| m > s)
        .map(|&(w, m)| w * m.powi(d as i32))
        .collect();
    pairwise_sum(&terms).powf(2.0 / dd)
}

/// Threshold the tail must clear for the coercivity shift:
/// lambda^2/16 * ((d-2)/(d-1))^2.
pub fn shift_threshold(d: usize, lambda: f64) -> Result<f64> {
    let d = require_d_at_least_3(d)?;
    if !(lambda > 0.0) {
        return Err(Error::invalid("ellipticity constant must be positive"));
    }
    let ratio = (d as f64 - 2.0) / (d as f64 - 1.0);
    Ok(lambda * lambda / 16.0 * ratio * ratio)
}

/// Smallest magnitude level N (among 0 and the sampled magnitudes) whose
/// tail clears the threshold, and the induced zero-order shift N^2/lambda.
pub fn select_shift(field: &impl VectorField, mesh: &Mesh, lambda: f64) -> Result<(f64, f64)> {
    let d = require_d_at_least_3(mesh.dim())?;
    let threshold = shift_threshold(d, lambda)?;
    let samples = vector_samples(field, mesh, QuadratureRule::Degree2)?;
    let mut candidates: Vec<f64> = samples.iter().map(|&(_, m)| m).collect();
    candidates.push(0.0);
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    for &n in &candidates {
        if tail_from_samples(&samples, n, d) <= threshold {
            return Ok((n, n * n / lambda));
        }
    }
    // the largest sampled magnitude always has an empty strict tail
    unreachable!("tail vanishes above the maximum sampled magnitude");
}

fn require_d_at_least_3(d: usize) -> Result<usize> {
    if d < 3 {
        Err(Error::invalid(format!(
            "dimension {d} is outside the d >= 3 regime required by this quantity"
        )))
    } else {
        Ok(d)
    }
}

/// Sobolev embedding constant 2(d-1)/(d-2) (H^1_0 into L^{2d/(d-2)}).
pub fn sobolev_constant(d: usize) -> Result<f64> {
    let d = require_d_at_least_3(d)? as f64;
    Ok(2.0 * (d - 1.0) / (d - 2.0))
}

/// Poincare constant 2(d-1)/d * |U|^{1/d}.
pub fn poincare_constant(d: usize, volume: f64) -> Result<f64> {
    let d = require_d_at_least_3(d)? as f64;
    if !(volume > 0.0) {
        return Err(Error::invalid("domain volume must be positive"));
    }
    Ok(2.0 * (d - 1.0) / d * volume.powf(1.0 / d))
}

/// Bilinear form bound K = dM + 2(d-1)/(d-2) * ||H||_{L^d}.
pub fn form_bound(d: usize, entry_bound: f64, drift_norm_d: f64) -> Result<f64> {
    let dd = require_d_at_least_3(d)?;
    if !(entry_bound > 0.0) {
        return Err(Error::invalid("matrix entry bound must be positive"));
    }
    if !(drift_norm_d >= 0.0) {
        return Err(Error::invalid("drift norm must be nonnegative"));
    }
    Ok(d as f64 * entry_bound + sobolev_constant(dd)? * drift_norm_d)
}

// ---------------------------------------------------------------------------
// mollification
// ---------------------------------------------------------------------------

/// Scaled unit-mass mollification kernel: the canonical profile
/// exp(-1/(1 - |y|^2)) sampled on a symmetric midpoint lattice over the
/// support ball of radius 1/level, with weights normalized to unit sum.
#[derive(Clone, Copy, Debug)]
pub struct MollifierSpec {
    pub level: u32,
}

const KERNEL_SAMPLES_PER_AXIS: usize = 8;

impl MollifierSpec {
    pub fn new(level: u32) -> Result<Self> {
        if level == 0 {
            return Err(Error::invalid("mollifier level must be >= 1"));
        }
        Ok(MollifierSpec { level })
    }

    /// Discrete kernel: (offset, weight) pairs with offsets inside the ball
    /// of radius 1/level and weights summing to exactly 1.
    pub fn kernel(&self, dim: usize) -> Vec<([f64; 3], f64)> {
        let m = KERNEL_SAMPLES_PER_AXIS;
        let scale = 1.0 / self.level as f64;
        let mut pts: Vec<([f64; 3], f64)> = Vec::new();
        let total = m.pow(dim as u32);
        for lin in 0..total {
            let mut rem = lin;
            let mut y = [0.0f64; 3];
            for a in 0..dim {
                let j = rem % m;
                rem /= m;
                // midpoints of m cells over [-1, 1]; symmetric under negation
                y[a] = -1.0 + (2.0 * j as f64 + 1.0) / m as f64;
            }
            let r2: f64 = (0..dim).map(|a| y[a] * y[a]).sum();
            if r2 >= 1.0 {
                continue;
            }
            let w = (-1.0 / (1.0 - r2)).exp();
            let mut offset = [0.0f64; 3];
            for a in 0..dim {
                offset[a] = y[a] * scale;
            }
            pts.push((offset, w));
        }
        let mass: f64 = pts.iter().map(|&(_, w)| w).sum();
        for p in &mut pts {
            p.1 /= mass;
        }
        pts
    }
}

/// Discrete convolution of the zero-extended field with the scaled kernel,
/// sampled at target element barycenters. Points outside the target's meshed
/// region contribute zero (the zero extension).
pub fn mollify(
    field: &impl VectorField,
    level: u32,
    target: &Arc<Mesh>,
) -> Result<VectorFieldSpec> {
    let spec = MollifierSpec::new(level)?;
    let kernel = spec.kernel(target.dim());
    let dim = target.dim();
    let mut values = Vec::with_capacity(target.element_count());
    for e in 0..target.element_count() {
        let b = target.barycenter(e);
        let mut acc = [0.0f64; 3];
        for &(offset, w) in &kernel {
            let mut p = [0.0f64; 3];
            for a in 0..dim {
                p[a] = b[a] - offset[a];
            }
            if target.locate(&p[..dim]).is_none() {
                continue;
            }
            let v = field.value(&p[..dim]).map_err(|err| attach_elem(err, e))?;
            for a in 0..dim {
                acc[a] += w * v[a];
            }
        }
        values.push(acc);
    }
    Ok(VectorFieldSpec::Gridded {
        mesh: Arc::clone(target),
        values: Arc::new(values),
    })
}

// ---------------------------------------------------------------------------
// admissible cover radii
// ---------------------------------------------------------------------------

/// Largest dyadic radius r (from the domain diameter down to h) at which the
/// local critical norm of the drift is small against the ellipticity:
/// 2(d-1)/(d-2) * ||H||_{L^d(B_{2r}(x) cap domain)} <= lambda/4.
/// `satisfied = false` flags that even the smallest radius fails.
pub fn admissible_radius(
    field: &impl VectorField,
    mesh: &Mesh,
    x: &[f64],
    lambda: f64,
) -> Result<(f64, bool)> {
    let d = require_d_at_least_3(mesh.dim())?;
    let sobolev = sobolev_constant(d)?;
    let bound = lambda / 4.0;
    // samples with positions retained, norm rule
    let mut samples: Vec<([f64; 3], f64, f64)> = Vec::new();
    for e in 0..mesh.element_count() {
        for (p, w) in mesh.quadrature(e, QuadratureRule::Degree2) {
            let v = field.value(&p[..mesh.dim()]).map_err(|err| attach_elem(err, e))?;
            samples.push((p, w, magnitude(&v, mesh.dim())));
        }
    }
    // domain diameter from the mesh bounding box
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for i in 0..mesh.vertex_count() {
        let v = mesh.vertex(i);
        for a in 0..mesh.dim() {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    let diameter: f64 = (0..mesh.dim())
        .map(|a| (hi[a] - lo[a]) * (hi[a] - lo[a]))
        .sum::<f64>()
        .sqrt();

    let local_norm = |r: f64| -> f64 {
        let r2 = 2.0 * r;
        let terms: Vec<f64> = samples
            .iter()
            .filter(|(p, _, _)| {
                (0..mesh.dim())
                    .map(|a| (p[a] - x[a]) * (p[a] - x[a]))
                    .sum::<f64>()
                    .sqrt()
                    <= r2
            })
            .map(|&(_, w, m)| w * m.powi(d as i32))
            .collect();
        pairwise_sum(&terms).powf(1.0 / d as f64)
    };

    let mut r = diameter;
    while r >= mesh.h() {
        if sobolev * local_norm(r) <= bound {
            return Ok((r, true));
        }
        r *= 0.5;
    }
    Ok((mesh.h(), false))
}

// ---------------------------------------------------------------------------
// presets (paired fields with oracles)
// ---------------------------------------------------------------------------

/// The singular weight w and the drift -grad ln w it annihilates.
/// Meaningful for dim >= 3; dim 2 is admitted for studies but outside the
/// analytic regime the constants assume.
pub fn preset_counterexample(_dim: usize) -> (ScalarFieldSpec, VectorFieldSpec) {
    (
        ScalarFieldSpec::CounterexampleWeight,
        VectorFieldSpec::NegGradLog(Box::new(ScalarFieldSpec::CounterexampleWeight)),
    )
}

/// The log-log potential and its skew gradient (weakly divergence-free).
pub fn preset_skew_example(_dim: usize) -> (ScalarFieldSpec, VectorFieldSpec) {
    (ScalarFieldSpec::SkewPotential, VectorFieldSpec::SkewExample)
}

/// Compactly supported bump and its gradient drift.
pub fn preset_gradient_bump(
    center: [f64; 3],
    radius: f64,
    amplitude: f64,
) -> (ScalarFieldSpec, VectorFieldSpec) {
    let bump = ScalarFieldSpec::Bump {
        center,
        radius,
        amplitude,
    };
    (bump.clone(), VectorFieldSpec::GradientOf(Box::new(bump)))
}

/// Checks that a bump's support ball stays strictly inside the container box.
pub fn bump_inside_container(
    domain: &crate::mesh::DomainSpec,
    center: &[f64; 3],
    radius: f64,
) -> Result<()> {
    for (a, b) in domain.inner_box.iter().enumerate() {
        let pad = domain.container_padding * (b[1] - b[0]);
        let lo = b[0] - pad;
        let hi = b[1] + pad;
        if !(center[a] - radius > lo && center[a] + radius < hi) {
            return Err(Error::invalid(format!(
                "bump support [{}, {}] touches the container boundary [{lo}, {hi}] on axis {a}",
                center[a] - radius,
                center[a] + radius
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// P1 nodal norms
// ---------------------------------------------------------------------------

/// Lp norm of the P1 interpolant of nodal values (`p = inf`: max nodal).
pub fn p1_lp_norm(mesh: &Mesh, nodal: &[f64], p: f64, rule: QuadratureRule) -> f64 {
    assert_eq!(nodal.len(), mesh.vertex_count());
    if p.is_infinite() {
        return nodal.iter().fold(0.0, |m, &v| m.max(v.abs()));
    }
    let pts = rule_points(rule, mesh.dim());
    let mut terms = Vec::with_capacity(mesh.element_count() * pts.len());
    for e in 0..mesh.element_count() {
        let verts = mesh.simplex(e);
        let vol = mesh.element_volume(e);
        for (lambda, w) in &pts {
            let u: f64 = verts
                .iter()
                .enumerate()
                .map(|(k, &v)| lambda[k] * nodal[v])
                .sum();
            terms.push(w * vol * u.abs().powf(p));
        }
    }
    pairwise_sum(&terms).powf(1.0 / p)
}

/// H^1_0 seminorm (L2 norm of the elementwise gradient) of nodal values.
pub fn p1_h10_seminorm(mesh: &Mesh, nodal: &[f64]) -> f64 {
    assert_eq!(nodal.len(), mesh.vertex_count());
    let mut terms = Vec::with_capacity(mesh.element_count());
    for e in 0..mesh.element_count() {
        let (grads, vol) = mesh.p1_gradients(e);
        let mut g = [0.0f64; 3];
        for (k, &v) in mesh.simplex(e).iter().enumerate() {
            for a in 0..mesh.dim() {
                g[a] += nodal[v] * grads[k][a];
            }
        }
        terms.push(vol * (0..mesh.dim()).map(|a| g[a] * g[a]).sum::<f64>());
    }
    pairwise_sum(&terms).sqrt()
}

/// Elementwise P1 gradient of nodal values.
pub fn p1_gradient(mesh: &Mesh, nodal: &[f64], elem: usize) -> [f64; 3] {
    let (grads, _) = mesh.p1_gradients(elem);
    let mut g = [0.0f64; 3];
    for (k, &v) in mesh.simplex(elem).iter().enumerate() {
        for a in 0..mesh.dim() {
            g[a] += nodal[v] * grads[k][a];
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, DomainSpec};

    const TWO_LN_2_INV: f64 = 0.7213475204444817; // 1/(2 ln 2)

    #[test]
    fn counterexample_weight_values() {
        let (w, h) = preset_counterexample(3);
        assert!((w.value(&[1.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((w.value(&[1.0 / 3.0, 0.0, 0.0]).unwrap() - 2.0).abs() < 1e-14);
        let hv = h.value(&[1.0, 0.0, 0.0]).unwrap();
        let mag = (hv[0] * hv[0] + hv[1] * hv[1] + hv[2] * hv[2]).sqrt();
        assert!((mag - TWO_LN_2_INV).abs() < 1e-14, "{mag}");
        // radial direction, pointing outward (w decreases with r)
        assert!(hv[0] > 0.0 && hv[1].abs() < 1e-15);
        assert!(w.value(&[0.0, 0.0, 0.0]).is_err());
        assert!(h.value(&[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn skew_example_values() {
        let (phi, h2) = preset_skew_example(3);
        let v = phi.value(&[1.0, 0.0, 0.0]).unwrap();
        assert!((v - LN_2.ln()).abs() < 1e-15); // ln ln 2 ~ -0.36651
        assert!((v + 0.36651292058166435).abs() < 1e-14);
        let h = h2.value(&[1.0, 0.0, 0.0]).unwrap();
        assert!(h[0].abs() < 1e-15 && h[1].abs() < 1e-15);
        assert!((h[2] - TWO_LN_2_INV).abs() < 1e-14, "{:?}", h);
        // 2d pattern: (d_2 phi, -d_1 phi)
        let h = h2.value(&[0.0, 1.0]).unwrap();
        assert!((h[0] - skew_potential_prime(1.0)).abs() < 1e-15);
        assert!(h[1].abs() < 1e-15);
    }

    #[test]
    fn bump_is_compact_with_peak_at_center() {
        let (v, h) = preset_gradient_bump([0.5, 0.5, 0.0], 0.25, 2.0);
        assert!((v.value(&[0.5, 0.5]).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(v.value(&[0.8, 0.5]).unwrap(), 0.0);
        assert_eq!(h.value(&[0.8, 0.5]).unwrap(), [0.0; 3]);
        // gradient points downhill away from the peak
        let g = h.value(&[0.6, 0.5]).unwrap();
        assert!(g[0] < 0.0 && g[1].abs() < 1e-15);
        // finite-difference cross-check of the analytic gradient
        let eps = 1e-6;
        let fd = (v.value(&[0.6 + eps, 0.5]).unwrap() - v.value(&[0.6 - eps, 0.5]).unwrap())
            / (2.0 * eps);
        assert!((g[0] - fd).abs() < 1e-7 * g[0].abs().max(1.0));
    }

    #[test]
    fn bump_laplacian_matches_finite_differences() {
        let center = [0.5, 0.5, 0.0];
        let lap = ScalarFieldSpec::BumpLaplacian {
            center,
            radius: 0.3,
            amplitude: 1.5,
        };
        let v = ScalarFieldSpec::Bump {
            center,
            radius: 0.3,
            amplitude: 1.5,
        };
        let x = [0.58, 0.43];
        let eps = 1e-5;
        let mut fd = 0.0;
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += eps;
            xm[a] -= eps;
            fd += (v.value(&xp).unwrap() - 2.0 * v.value(&x).unwrap() + v.value(&xm).unwrap())
                / (eps * eps);
        }
        let an = lap.value(&x).unwrap();
        assert!((an - fd).abs() < 1e-4 * an.abs().max(1.0), "{an} vs {fd}");
    }

    #[test]
    fn lp_norm_of_unit_constants() {
        let cube = build_mesh(&DomainSpec::unit_box(3), 2).unwrap();
        let one = ScalarFieldSpec::Constant(1.0);
        let n = scalar_lp_norm(&one, &cube, 2.0, QuadratureRule::Degree2).unwrap();
        assert!((n - 1.0).abs() < 1e-13);
        let e1 = VectorFieldSpec::Constant([1.0, 0.0, 0.0]);
        let n = vector_lp_norm(&e1, &cube, 3.0, QuadratureRule::Degree2).unwrap();
        assert!((n - 1.0).abs() < 1e-13);
    }

    #[test]
    fn tail_examples_and_monotonicity() {
        let cube = build_mesh(&DomainSpec::unit_box(3), 2).unwrap();
        let zero = VectorFieldSpec::Zero;
        assert_eq!(drift_tail(&zero, &cube, 0.0).unwrap(), 0.0);
        let e1 = VectorFieldSpec::Constant([1.0, 0.0, 0.0]);
        assert_eq!(drift_tail(&e1, &cube, 2.0).unwrap(), 0.0);
        assert!((drift_tail(&e1, &cube, 0.5).unwrap() - 1.0).abs() < 1e-13);
        // nonincreasing in s, and tail(0) = norm^2 under the same rule
        let (_, h) = preset_counterexample(3);
        let domain = DomainSpec {
            dim: 3,
            inner_box: vec![[-1.0, 1.0]; 3],
            hole: Some(vec![[-1.0 / 3.0, 1.0 / 3.0]; 3]),
            container_padding: 0.25,
        };
        let annulus = build_mesh(&domain, 6).unwrap();
        let t0 = drift_tail(&h, &annulus, 0.0).unwrap();
        let norm = vector_lp_norm(&h, &annulus, 3.0, QuadratureRule::Degree2).unwrap();
        assert!((t0 - norm * norm).abs() <= 1e-12 * t0);
        let mut prev = t0;
        for s in [0.1, 0.3, 0.6, 1.0, 2.0] {
            let t = drift_tail(&h, &annulus, s).unwrap();
            assert!(t <= prev + 1e-15);
            prev = t;
        }
        // dim 2 rejected
        let sq = build_mesh(&DomainSpec::unit_box(2), 2).unwrap();
        assert!(drift_tail(&zero, &sq, 0.0).is_err());
    }

    #[test]
    fn shift_selection_examples() {
        assert!((shift_threshold(3, 1.0).unwrap() - 1.0 / 64.0).abs() < 1e-18);
        let cube = build_mesh(&DomainSpec::unit_box(3), 2).unwrap();
        let (n, gamma) = select_shift(&VectorFieldSpec::Zero, &cube, 1.0).unwrap();
        assert_eq!((n, gamma), (0.0, 0.0));
        let e1 = VectorFieldSpec::Constant([1.0, 0.0, 0.0]);
        let (n, gamma) = select_shift(&e1, &cube, 1.0).unwrap();
        assert!((n - 1.0).abs() < 1e-15, "strict tail at the sampled magnitude");
        assert!((gamma - 1.0).abs() < 1e-15);
        // algebraic identity gamma = N^2 / lambda
        let (n, gamma) = select_shift(&e1, &cube, 0.35).unwrap();
        assert_eq!(gamma, n * n / 0.35);
    }

    #[test]
    fn embedding_constants() {
        assert_eq!(sobolev_constant(3).unwrap(), 4.0);
        assert_eq!(sobolev_constant(4).unwrap(), 3.0);
        assert_eq!(sobolev_constant(6).unwrap(), 2.5);
        assert!(sobolev_constant(2).is_err());
        assert!((poincare_constant(3, 1.0).unwrap() - 4.0 / 3.0).abs() < 1e-16);
        assert!((poincare_constant(3, 8.0).unwrap() - 8.0 / 3.0).abs() < 1e-15);
        assert!((poincare_constant(5, 1.0).unwrap() - 8.0 / 5.0).abs() < 1e-16);
        assert!(poincare_constant(3, 0.0).is_err());
        assert_eq!(form_bound(3, 1.0, 0.0).unwrap(), 3.0);
        assert_eq!(form_bound(3, 1.0, 1.0).unwrap(), 7.0);
        assert_eq!(form_bound(4, 2.0, 3.0).unwrap(), 17.0);
        assert!(form_bound(2, 1.0, 0.0).is_err());
    }

    #[test]
    fn mollifier_kernel_is_normalized_and_supported() {
        for dim in [2usize, 3] {
            for level in [1u32, 2, 4, 8] {
                let kernel = MollifierSpec::new(level).unwrap().kernel(dim);
                let mass: f64 = kernel.iter().map(|&(_, w)| w).sum();
                assert!((mass - 1.0).abs() < 1e-8);
                let r_max = 1.0 / level as f64;
                for (offset, w) in kernel {
                    assert!(w > 0.0);
                    let r: f64 = (0..dim).map(|a| offset[a] * offset[a]).sum::<f64>().sqrt();
                    assert!(r < r_max);
                }
            }
        }
    }

    #[test]
    fn mollified_constant_far_from_boundary_is_exact() {
        let mesh = Arc::new(build_mesh(&DomainSpec::unit_box(2), 8).unwrap());
        let field = VectorFieldSpec::Constant([0.7, -0.3, 0.0]);
        let mollified = mollify(&field, 4, &mesh).unwrap();
        for e in 0..mesh.element_count() {
            let b = mesh.barycenter(e);
            let margin = 1.0 / 4.0;
            let inside = b[..2]
                .iter()
                .all(|&c| c > margin && c < 1.0 - margin);
            if inside {
                let v = mollified.element_value(&mesh, e).unwrap();
                assert!((v[0] - 0.7).abs() < 1e-10 && (v[1] + 0.3).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mollification_never_increases_critical_norm_on_nested_annuli() {
        // W = [-1,1]^3 minus [-1/4,1/4]^3, V = [-3/4,3/4]^3 minus [-1/2,1/2]^3
        let w_dom = DomainSpec {
            dim: 3,
            inner_box: vec![[-1.0, 1.0]; 3],
            hole: Some(vec![[-0.25, 0.25]; 3]),
            container_padding: 0.25,
        };
        let v_dom = DomainSpec {
            dim: 3,
            inner_box: vec![[-0.75, 0.75]; 3],
            hole: Some(vec![[-0.5, 0.5]; 3]),
            container_padding: 0.25,
        };
        let w_mesh = Arc::new(build_mesh(&w_dom, 8).unwrap());
        let v_mesh = build_mesh(&v_dom, 6).unwrap();
        let (_, h) = preset_counterexample(3);
        let w_norm = vector_lp_norm(&h, &w_mesh, 3.0, QuadratureRule::Degree2).unwrap();
        for level in [2u32, 4, 8] {
            let hn = mollify(&h, level, &w_mesh).unwrap();
            let v_norm = vector_lp_norm(&hn, &v_mesh, 3.0, QuadratureRule::Degree2).unwrap();
            assert!(
                v_norm <= w_norm + 1e-8,
                "level {level}: {v_norm} > {w_norm}"
            );
        }
    }

    #[test]
    fn admissible_radius_examples() {
        let domain = DomainSpec {
            dim: 3,
            inner_box: vec![[-1.0, 1.0]; 3],
            hole: Some(vec![[-1.0 / 3.0, 1.0 / 3.0]; 3]),
            container_padding: 0.25,
        };
        let mesh = build_mesh(&domain, 6).unwrap();
        // zero drift: condition holds at the largest dyadic radius
        let (r, ok) = admissible_radius(&VectorFieldSpec::Zero, &mesh, &[0.5, 0.5, 0.5], 1.0).unwrap();
        assert!(ok);
        assert!((r - 12.0f64.sqrt()).abs() < 1e-12);
        // tiny constant field whose global norm passes
        let eps = VectorFieldSpec::Constant([1e-4, 0.0, 0.0]);
        let (r2, ok2) = admissible_radius(&eps, &mesh, &[0.5, 0.5, 0.5], 1.0).unwrap();
        assert!(ok2 && (r2 - r).abs() < 1e-12);
        // the counterexample drift admits a smaller radius near the
        // singularity than far from it
        let (_, h) = preset_counterexample(3);
        let near = admissible_radius(&h, &mesh, &[0.5, 1.0 / 3.0 + 1e-9, 0.0], 1.0).unwrap();
        let far = admissible_radius(&h, &mesh, &[1.0, 1.0, 1.0], 1.0).unwrap();
        assert!(near.0 <= far.0, "near {near:?} vs far {far:?}");
    }

    #[test]
    fn p1_norms_of_simple_nodal_data() {
        let mesh = build_mesh(&DomainSpec::unit_box(2), 4).unwrap();
        let ones = vec![1.0; mesh.vertex_count()];
        assert!((p1_lp_norm(&mesh, &ones, 2.0, QuadratureRule::Degree2) - 1.0).abs() < 1e-13);
        assert_eq!(p1_lp_norm(&mesh, &ones, f64::INFINITY, QuadratureRule::Degree2), 1.0);
        assert!(p1_h10_seminorm(&mesh, &ones) < 1e-13);
        // nodal x-coordinate: gradient (1,0), seminorm 1
        let xs: Vec<f64> = (0..mesh.vertex_count()).map(|i| mesh.vertex(i)[0]).collect();
        assert!((p1_h10_seminorm(&mesh, &xs) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn norm_accumulation_is_reduction_order_stable() {
        let domain = DomainSpec {
            dim: 3,
            inner_box: vec![[-1.0, 1.0]; 3],
            hole: Some(vec![[-1.0 / 3.0, 1.0 / 3.0]; 3]),
            container_padding: 0.25,
        };
        let mesh = build_mesh(&domain, 6).unwrap();
        let (_, h) = preset_counterexample(3);
        let samples = vector_samples(&h, &mesh, QuadratureRule::Degree2).unwrap();
        let forward = lp_from_samples(&samples, 3.0);
        let mut rev = samples;
        rev.reverse();
        let backward = lp_from_samples(&rev, 3.0);
        assert!((forward - backward).abs() <= 1e-13 * forward);
    }
}
