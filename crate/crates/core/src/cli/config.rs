use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::report::{Node, Obj};
use super::CliError;
use crate::almost_analytic::{ExtensionConfig, DEFAULT_T0, DEFAULT_TRUNCATION};
use crate::cayley::CircleFunction;
use crate::function_model::{
    parse_expression, SmoothCompactFunction, DEFAULT_GRID_RESOLUTION, DEFAULT_MAX_ORDER,
};
use crate::hs_integrator::QuadratureSpec;
use crate::matrix_core::{
    synth_hermitian, synth_normal, synth_unitary, ComplexMatrix, SpectralDecomposition,
};

fn default_max_order() -> usize {
    DEFAULT_MAX_ORDER
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}

fn default_t0() -> f64 {
    DEFAULT_T0
}

fn default_grid() -> usize {
    DEFAULT_GRID_RESOLUTION
}

/// A function on the line (`expr`) or on the circle (`pullback_expr` on the
/// Cayley line, or `angle_expr` in the angle variable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    #[serde(default)]
    pub expr: Option<String>,
    #[serde(default)]
    pub pullback_expr: Option<String>,
    #[serde(default)]
    pub angle_expr: Option<String>,
    #[serde(default)]
    pub support: Option<[f64; 2]>,
    #[serde(default)]
    pub theta_support: Option<[f64; 2]>,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
}

impl FunctionSpec {
    fn line_expr(&self) -> Result<(&str, [f64; 2]), CliError> {
        let text = match (&self.expr, &self.pullback_expr, &self.angle_expr) {
            (Some(e), None, None) | (None, Some(e), None) => e,
            _ => {
                return Err(CliError::Config(
                    "function: give exactly one of `expr` or `pullback_expr` with `support`".into(),
                ))
            }
        };
        let support = self
            .support
            .ok_or_else(|| CliError::Config("function.support is required".into()))?;
        Ok((text, support))
    }

    /// Function on the real line.
    pub fn line_function(&self) -> Result<SmoothCompactFunction, CliError> {
        let (text, [a, b]) = self.line_expr()?;
        Ok(SmoothCompactFunction::parse(text, (a, b), self.max_order)?)
    }

    pub fn circle_function(&self) -> Result<CircleFunction, CliError> {
        if let Some(text) = &self.angle_expr {
            if self.expr.is_some() || self.pullback_expr.is_some() {
                return Err(CliError::Config(
                    "function: `angle_expr` excludes `expr` and `pullback_expr`".into(),
                ));
            }
            let [t1, t2] = self.theta_support.ok_or_else(|| {
                CliError::Config("function.theta_support is required with angle_expr".into())
            })?;
            return Ok(CircleFunction::from_angle(
                parse_expression(text).map_err(crate::function_model::FunctionError::from)?,
                (t1, t2),
                self.max_order,
            )?);
        }
        Ok(CircleFunction::from_pullback(self.line_function()?))
    }

    pub fn echo(&self) -> Node {
        Obj::new()
            .with("expr", self.expr.clone())
            .with("pullback_expr", self.pullback_expr.clone())
            .with("angle_expr", self.angle_expr.clone())
            .with("support", self.support.map(|s| s.to_vec()))
            .with("theta_support", self.theta_support.map(|s| s.to_vec()))
            .with("max_order", self.max_order)
            .into()
    }
}

/// Matrix file contents: row-major `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub n: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixFile {
    pub fn to_matrix(&self) -> Result<ComplexMatrix, CliError> {
        let data = self
            .entries
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        Ok(ComplexMatrix::new(self.n, data)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub values: Vec<f64>,
    /// Basis seed; the job seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Use the standard basis instead of a random one.
    #[serde(default)]
    pub identity_basis: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum MatrixSource {
    /// Path to a matrix file, relative to the config file.
    File(PathBuf),
    Inline(MatrixFile),
    /// Hermitian with the given eigenvalues.
    SynthHermitian(SynthSpec),
    /// Unitary with eigenvalues `e^{i theta}` for the given angles.
    SynthUnitary(SynthSpec),
}

/// A matrix plus its decomposition when it is known by construction.
pub struct LoadedMatrix {
    pub matrix: ComplexMatrix,
    pub decomposition: Option<SpectralDecomposition>,
}

impl MatrixSource {
    pub fn load(&self, base_dir: &Path, job_seed: u64) -> Result<LoadedMatrix, CliError> {
        let synth = |s: &SynthSpec, unitary: bool| {
            let seed = s.seed.unwrap_or(job_seed);
            if s.identity_basis {
                let eig: Vec<Complex64> = s
                    .values
                    .iter()
                    .map(|&v| {
                        if unitary {
                            Complex64::from_polar(1.0, v)
                        } else {
                            Complex64::new(v, 0.0)
                        }
                    })
                    .collect();
                synth_normal(&eig, ComplexMatrix::identity(eig.len()))
            } else if unitary {
                synth_unitary(&s.values, seed)
            } else {
                synth_hermitian(&s.values, seed)
            }
        };
        let (matrix, decomposition) = match self {
            MatrixSource::File(path) => {
                let path = base_dir.join(path);
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io {
                    path: path.clone(),
                    msg: e.to_string(),
                })?;
                let file: MatrixFile = parse_json(&text, &path.display().to_string())?;
                (file.to_matrix()?, None)
            }
            MatrixSource::Inline(file) => (file.to_matrix()?, None),
            MatrixSource::SynthHermitian(s) | MatrixSource::SynthUnitary(s) if s.values.is_empty() => {
                return Err(CliError::Config("matrix: synthesis needs at least one value".into()))
            }
            MatrixSource::SynthHermitian(s) => {
                let (m, d) = synth(s, false);
                (m, Some(d))
            }
            MatrixSource::SynthUnitary(s) => {
                let (m, d) = synth(s, true);
                (m, Some(d))
            }
        };
        Ok(LoadedMatrix {
            matrix,
            decomposition,
        })
    }

    pub fn echo(&self) -> Node {
        let synth = |kind: &str, s: &SynthSpec| -> Node {
            Obj::new()
                .with("kind", kind)
                .with("values", s.values.clone())
                .with("seed", s.seed)
                .with("identity_basis", s.identity_basis)
                .into()
        };
        match self {
            MatrixSource::File(p) => Obj::new()
                .with("kind", "file")
                .with("path", p.display().to_string())
                .into(),
            MatrixSource::Inline(f) => Obj::new().with("kind", "inline").with("n", f.n).into(),
            MatrixSource::SynthHermitian(s) => synth("synth_hermitian", s),
            MatrixSource::SynthUnitary(s) => synth("synth_unitary", s),
        }
    }
}

/// Built-in test integrands for `cauchy-check`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauchyTarget {
    /// `u(z) = z^2`.
    Square,
    /// `u = 1`.
    One,
    /// The almost-analytic extension of the configured function.
    Extension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauchySpec {
    pub target: CauchyTarget,
    /// `[x0, x1, y0, y1]`.
    pub rect: [f64; 4],
    pub xi: [f64; 2],
    #[serde(default = "default_nodes")]
    pub nodes_per_edge: usize,
    #[serde(default = "default_area_cells")]
    pub area_cells: usize,
}

fn default_nodes() -> usize {
    512
}

fn default_area_cells() -> usize {
    1024
}

/// Sampling grid for the `extend` field output; cell midpoints of an
/// `nx` by `ny` grid over `rect = [x0, x1, y0, y1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub rect: [f64; 4],
    #[serde(default = "default_field_nx")]
    pub nx: usize,
    #[serde(default = "default_field_ny")]
    pub ny: usize,
}

fn default_field_nx() -> usize {
    64
}

fn default_field_ny() -> usize {
    32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Scalar,
    Selfadjoint,
    Unitary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub problem: ProblemKind,
    /// Evaluation point for the scalar problem.
    #[serde(default)]
    pub xi: f64,
    #[serde(default)]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default)]
    pub cells: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default)]
    pub function: Option<FunctionSpec>,
    #[serde(default)]
    pub matrix: Option<MatrixSource>,
    #[serde(default)]
    pub spec: QuadratureSpec,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_grid")]
    pub grid_resolution: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Points `[x, y]` at which `extend` evaluates the extension.
    #[serde(default)]
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default)]
    pub cauchy: Option<CauchySpec>,
    #[serde(default)]
    pub convergence: Option<ConvergenceSpec>,
}

impl Default for JobConfig {
    fn default() -> Self {
        parse_json("{}", "<default>").expect("empty config is valid")
    }
}

impl JobConfig {
    pub fn extension_config(&self) -> ExtensionConfig {
        ExtensionConfig {
            truncation: self.truncation,
            t0: self.t0,
            grid_resolution: self.grid_resolution,
        }
    }

    pub fn function(&self) -> Result<&FunctionSpec, CliError> {
        self.function
            .as_ref()
            .ok_or_else(|| CliError::Config("`function` is required for this command".into()))
    }

    pub fn matrix(&self) -> Result<&MatrixSource, CliError> {
        self.matrix
            .as_ref()
            .ok_or_else(|| CliError::Config("`matrix` is required for this command".into()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        parse_json(&text, &path.display().to_string())
    }

    pub fn echo_knobs(&self) -> Obj {
        Obj::new()
            .with("truncation", self.truncation)
            .with("t0", self.t0)
            .with("grid_resolution", self.grid_resolution)
            .with(
                "spec",
                Obj::new()
                    .with("base_cells_x", self.spec.base_cells_x)
                    .with("base_cells_y", self.spec.base_cells_y)
                    .with("refinement_levels", self.spec.refinement_levels)
                    .with("epsilon", self.spec.epsilon),
            )
    }
}

/// Deserializes JSON, naming the offending field on schema errors.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Schema {
        origin: origin.to_string(),
        field: e.path().to_string(),
        msg: e.inner().to_string(),
    })
}
