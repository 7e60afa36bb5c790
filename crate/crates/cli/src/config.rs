//! JSON run configuration: a strict schema (unknown keys rejected) whose
//! coefficients are preset references only. Everything here converts into
//! the library's problem types; nothing in a config is executable.

use serde::{Deserialize, Serialize};

use driftfem::fields::{DriftSpec, MatrixFieldSpec, ScalarFieldSpec, VectorFieldSpec};
use driftfem::linsolve::{Method, Preconditioner, SolveOptions};
use driftfem::mesh::DomainSpec;
use driftfem::pipeline::{ProblemSpec, ZeroOrderClass};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional echo of the command; must match the invoked subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thetas: Vec<f64>,
    /// Requested resolution (snapped to the lattice where required).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            dim: None,
            levels: Vec::new(),
            epsilons: Vec::new(),
            thetas: Vec::new(),
            resolution: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainConfig,
    #[serde(default = "MatrixConfig::identity")]
    pub coefficient: MatrixConfig,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default = "ScalarConfig::zero")]
    pub zero_order: ScalarConfig,
    #[serde(default = "default_zero_order_class")]
    pub zero_order_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "ScalarConfig::one")]
    pub load: ScalarConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization_point: Option<Vec<f64>>,
    pub mesh_n: usize,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_zero_order_class() -> String {
    "l1".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub dim: usize,
    pub inner_box: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hole: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_padding")]
    pub container_padding: f64,
}

fn default_padding() -> f64 {
    0.25
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixConfig {
    Identity,
    Constant {
        matrix: Vec<Vec<f64>>,
        entry_bound: f64,
        ellipticity: f64,
    },
    Checkerboard {
        even: f64,
        odd: f64,
        cell: f64,
    },
}

impl MatrixConfig {
    fn identity() -> Self {
        MatrixConfig::Identity
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarConfig {
    Constant { value: f64 },
    Bump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    },
    CounterexampleW,
    PresetPhi,
    SinProduct,
    SinLoad {
        #[serde(default)]
        drift: Vec<f64>,
        #[serde(default)]
        zero_order: f64,
    },
    BumpLaplacian {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    },
}

impl ScalarConfig {
    fn zero() -> Self {
        ScalarConfig::Constant { value: 0.0 }
    }
    fn one() -> Self {
        ScalarConfig::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorConfig {
    Zero,
    Constant { value: Vec<f64> },
    GradientOf { scalar: Box<ScalarConfig> },
    NegGradLog { scalar: Box<ScalarConfig> },
    SkewExample,
}

/// Drift: either a named preset or the explicit split H = H1 + H2.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum DriftConfig {
    Preset(DriftPresetConfig),
    Split(DriftSplitConfig),
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig::Preset(DriftPresetConfig {
            preset: "zero".to_string(),
            center: None,
            radius: None,
            amplitude: None,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DriftPresetConfig {
    /// zero | skew | counterexample | gradient_bump | constant is spelled
    /// through the split form
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DriftSplitConfig {
    #[serde(default = "vector_zero")]
    pub h1: VectorConfig,
    #[serde(default = "default_exponent")]
    pub p: f64,
    #[serde(default = "vector_zero")]
    pub h2: VectorConfig,
    #[serde(default = "ScalarConfig::zero")]
    pub div_h2: ScalarConfig,
    #[serde(default = "default_exponent")]
    pub q_tilde: f64,
}

fn vector_zero() -> VectorConfig {
    VectorConfig::Zero
}

fn default_exponent() -> f64 {
    1e9
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_precondition")]
    pub precondition: String,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: default_method(),
            rel_tol: default_rel_tol(),
            max_iter: default_max_iter(),
            precondition: default_precondition(),
        }
    }
}

fn default_method() -> String {
    "auto".to_string()
}
fn default_rel_tol() -> f64 {
    1e-11
}
fn default_max_iter() -> usize {
    20_000
}
fn default_precondition() -> String {
    "none".to_string()
}

/// Errors during conversion are plain strings; the caller maps them to the
/// input-error exit code.
pub type ConfigResult<T> = Result<T, String>;

fn point3(v: &[f64], what: &str) -> ConfigResult<[f64; 3]> {
    if v.len() > 3 || v.is_empty() {
        return Err(format!("{what} must have 1..=3 components, got {}", v.len()));
    }
    let mut p = [0.0; 3];
    p[..v.len()].copy_from_slice(v);
    Ok(p)
}

impl ScalarConfig {
    pub fn build(&self) -> ConfigResult<ScalarFieldSpec> {
        Ok(match self {
            ScalarConfig::Constant { value } => ScalarFieldSpec::Constant(*value),
            ScalarConfig::Bump {
                center,
                radius,
                amplitude,
            } => ScalarFieldSpec::Bump {
                center: point3(center, "bump.center")?,
                radius: *radius,
                amplitude: *amplitude,
            },
            ScalarConfig::CounterexampleW => ScalarFieldSpec::CounterexampleWeight,
            ScalarConfig::PresetPhi => ScalarFieldSpec::SkewPotential,
            ScalarConfig::SinProduct => ScalarFieldSpec::SinProduct,
            ScalarConfig::SinLoad { drift, zero_order } => ScalarFieldSpec::SinLoad {
                drift: if drift.is_empty() {
                    [0.0; 3]
                } else {
                    point3(drift, "sin_load.drift")?
                },
                zero_order: *zero_order,
            },
            ScalarConfig::BumpLaplacian {
                center,
                radius,
                amplitude,
            } => ScalarFieldSpec::BumpLaplacian {
                center: point3(center, "bump_laplacian.center")?,
                radius: *radius,
                amplitude: *amplitude,
            },
        })
    }
}

impl VectorConfig {
    pub fn build(&self) -> ConfigResult<VectorFieldSpec> {
        Ok(match self {
            VectorConfig::Zero => VectorFieldSpec::Zero,
            VectorConfig::Constant { value } => {
                VectorFieldSpec::Constant(point3(value, "constant vector")?)
            }
            VectorConfig::GradientOf { scalar } => {
                VectorFieldSpec::GradientOf(Box::new(scalar.build()?))
            }
            VectorConfig::NegGradLog { scalar } => {
                VectorFieldSpec::NegGradLog(Box::new(scalar.build()?))
            }
            VectorConfig::SkewExample => VectorFieldSpec::SkewExample,
        })
    }
}

impl DriftConfig {
    pub fn build(&self, dim: usize) -> ConfigResult<DriftSpec> {
        match self {
            DriftConfig::Preset(p) => match p.preset.as_str() {
                "zero" => Ok(DriftSpec::zero()),
                "skew" => Ok(DriftSpec::skew()),
                "counterexample" => Ok(DriftSpec::counterexample(dim)),
                "gradient_bump" => {
                    let center = p
                        .center
                        .as_ref()
                        .ok_or("drift preset gradient_bump requires 'center'")?;
                    let radius = p.radius.ok_or("drift preset gradient_bump requires 'radius'")?;
                    let amplitude = p
                        .amplitude
                        .ok_or("drift preset gradient_bump requires 'amplitude'")?;
                    Ok(DriftSpec::gradient_bump(
                        point3(center, "drift.center")?,
                        radius,
                        amplitude,
                    ))
                }
                other => Err(format!(
                    "unknown drift preset '{other}' (expected zero | skew | counterexample | gradient_bump)"
                )),
            },
            DriftConfig::Split(s) => Ok(DriftSpec {
                h1: s.h1.build()?,
                p: s.p,
                h2: s.h2.build()?,
                div_h2: s.div_h2.build()?,
                q_tilde: s.q_tilde,
            }),
        }
    }
}

impl MatrixConfig {
    pub fn build(&self) -> ConfigResult<MatrixFieldSpec> {
        Ok(match self {
            MatrixConfig::Identity => MatrixFieldSpec::identity(),
            MatrixConfig::Constant {
                matrix,
                entry_bound,
                ellipticity,
            } => {
                let mut m = [[0.0; 3]; 3];
                if matrix.len() > 3 {
                    return Err("coefficient matrix has more than 3 rows".to_string());
                }
                for (i, row) in matrix.iter().enumerate() {
                    if row.len() != matrix.len() {
                        return Err("coefficient matrix must be square".to_string());
                    }
                    m[i][..row.len()].copy_from_slice(row);
                }
                MatrixFieldSpec::constant(m, *entry_bound, *ellipticity)
            }
            MatrixConfig::Checkerboard { even, odd, cell } => {
                MatrixFieldSpec::checkerboard_scalar(*even, *odd, *cell)
            }
        })
    }
}

impl SolverConfig {
    pub fn build(&self) -> ConfigResult<SolveOptions> {
        let method = match self.method.as_str() {
            "auto" => Method::Auto,
            "direct" => Method::Direct,
            "krylov" => Method::Krylov,
            other => return Err(format!("unknown solver.method '{other}'")),
        };
        let precondition = match self.precondition.as_str() {
            "none" => Preconditioner::None,
            "diagonal" => Preconditioner::Diagonal,
            // filled in by the pipeline: gamma from the tail-selected shift,
            // mass from the lumped unit mass
            "shifted" => Preconditioner::Shifted {
                gamma: f64::NAN,
                mass_diag: Vec::new(),
            },
            other => return Err(format!("unknown solver.precondition '{other}'")),
        };
        Ok(SolveOptions {
            method,
            rel_tol: self.rel_tol,
            max_iter: self.max_iter,
            precondition,
        })
    }
}

impl DomainConfig {
    pub fn build(&self) -> DomainSpec {
        DomainSpec {
            dim: self.dim,
            inner_box: self.inner_box.clone(),
            hole: self.hole.clone(),
            container_padding: self.container_padding,
        }
    }
}

impl ProblemConfig {
    pub fn build(&self) -> ConfigResult<ProblemSpec> {
        let domain = self.domain.build();
        let dim = domain.dim;
        let zero_order_class = match self.zero_order_class.as_str() {
            "l1" => ZeroOrderClass::L1,
            "energy" => ZeroOrderClass::EnergyExponent,
            other => {
                return Err(format!(
                    "unknown zero_order_class '{other}' (expected l1 | energy)"
                ))
            }
        };
        let normalization_point = match &self.normalization_point {
            None => None,
            Some(p) => Some(point3(p, "normalization_point")?),
        };
        Ok(ProblemSpec {
            coeff: self.coefficient.build()?,
            drift: self.drift.build(dim)?,
            zero_order: self.zero_order.build()?,
            zero_order_class,
            alpha: self.alpha,
            load: self.load.build()?,
            load_exponent: self.load_exponent.unwrap_or(dim as f64),
            normalization_point,
            mesh_n: self.mesh_n,
            solver: self.solver.build()?,
            domain,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_round_trips() {
        let text = r#"{
            "problem": {
                "domain": {"dim": 2, "inner_box": [[0.0, 1.0], [0.0, 1.0]]},
                "mesh_n": 8
            }
        }"#;
        let config: RunConfig = serde_json::from_str(text).unwrap();
        let json = serde_json::to_string(&config).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);
        let problem = config.problem.unwrap().build().unwrap();
        assert_eq!(problem.mesh_n, 8);
        assert_eq!(problem.load_exponent, 2.0);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let text = r#"{
            "problem": {
                "domain": {"dim": 2, "inner_box": [[0.0, 1.0], [0.0, 1.0]]},
                "mesh_n": 8,
                "mesh_m": 9
            }
        }"#;
        let err = serde_json::from_str::<RunConfig>(text).unwrap_err();
        assert!(err.to_string().contains("mesh_m"), "{err}");
    }

    #[test]
    fn drift_preset_and_split_forms_build() {
        let preset: DriftConfig =
            serde_json::from_str(r#"{"preset": "skew"}"#).unwrap();
        assert!(matches!(
            preset.build(2).unwrap().h2,
            VectorFieldSpec::SkewExample
        ));
        let split: DriftConfig = serde_json::from_str(
            r#"{"h1": {"kind": "constant", "value": [1.0, 0.0]}, "p": 4.0}"#,
        )
        .unwrap();
        let drift = split.build(2).unwrap();
        assert_eq!(drift.p, 4.0);
        let bad: DriftConfig = serde_json::from_str(r#"{"preset": "vortex"}"#).unwrap();
        assert!(bad.build(2).is_err());
    }
}
