//! The TOML scenario document and its conversion to and from [`Scenario`].
//!
//! Complex numbers are written as `[re, im]` pairs (a bare real number is also
//! accepted); matrices are row-major lists of rows.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::theta::{Quadrature, ThetaShape, ThetaSpec};
use super::{Coupling, InteractionMode, InteractionSpec, Scenario, ScenarioParts, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::{check_capacity, max_dimension, Operator, StateVector, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexDoc {
    Pair([f64; 2]),
    Real(f64),
}

impl ComplexDoc {
    pub fn value(&self) -> C64 {
        match *self {
            ComplexDoc::Pair([re, im]) => C64::new(re, im),
            ComplexDoc::Real(re) => C64::new(re, 0.0),
        }
    }
}

impl From<C64> for ComplexDoc {
    fn from(z: C64) -> Self {
        ComplexDoc::Pair([z.re, z.im])
    }
}

pub type MatrixDoc = Vec<Vec<ComplexDoc>>;
pub type VectorDoc = Vec<ComplexDoc>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl Default for ScalarOrList {
    fn default() -> Self {
        ScalarOrList::Scalar(1.0)
    }
}

impl ScalarOrList {
    fn expand(&self, field: &str, n: usize) -> Result<Vec<f64>> {
        match self {
            ScalarOrList::Scalar(v) => Ok(vec![*v; n]),
            ScalarOrList::List(vs) if vs.len() == n => Ok(vs.clone()),
            ScalarOrList::List(vs) => Err(Error::validation(field, format!("{} values for {n} qubits", vs.len()))),
        }
    }
}

fn default_hbar() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    pub system: SystemSection,
    pub environment: EnvironmentSection,
    pub interaction: InteractionSection,
    pub time: TimeSection,
    #[serde(default)]
    pub theta: ThetaSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub hamiltonian: MatrixDoc,
    pub initial_state: VectorDoc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BathInitial {
    /// `|0...0>`, the +1 eigenstate of every `sigma_z`.
    #[default]
    Zero,
    /// `|+...+>`, the +1 eigenstate of every `sigma_x`.
    Plus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentSection {
    /// One-dimensional environment (phase mode only).
    Trivial,
    Explicit {
        hamiltonian: MatrixDoc,
        initial_state: VectorDoc,
        /// Environment side `B` of the interaction; identity when omitted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        operator: Option<MatrixDoc>,
    },
    /// `h_eps = sum_k fields_k sigma_x^(k)`, `B = sum_k couplings_k sigma_z^(k)`.
    QubitBath {
        qubits: usize,
        #[serde(default)]
        fields: ScalarOrList,
        #[serde(default)]
        couplings: ScalarOrList,
        #[serde(default)]
        initial: BathInitial,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSection {
    pub mode: InteractionMode,
    pub system_operator: MatrixDoc,
    #[serde(default)]
    pub off_diagonal: f64,
    pub coupling: CouplingDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CouplingDoc {
    Constant { value: f64 },
    Piecewise { breakpoints: Vec<f64>, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    #[default]
    Uniform,
    Delta,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ThetaSection {
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default)]
    pub shape: ShapeKind,
    /// Node count for the uniform shape; automatic when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    /// Angle of the delta shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<VectorDoc>,
}

fn default_pairs() -> Vec<[f64; 2]> {
    vec![[0.0, FRAC_PI_2], [0.0, FRAC_PI_4]]
}

fn default_half_threshold() -> f64 {
    0.5
}

/// Knobs for the analysis commands. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// `(theta, theta')` pairs for the time-orthogonality table.
    #[serde(default = "default_pairs")]
    pub pairs: Vec<[f64; 2]>,
    /// Window lengths `T` measured from `t0`; empty means eight evenly spaced windows.
    #[serde(default)]
    pub windows: Vec<f64>,
    /// Times for the saddle-point comparison; empty means every grid node.
    #[serde(default)]
    pub saddle_times: Vec<f64>,
    /// Branch angle used for the mean-field error diagnostic.
    #[serde(default)]
    pub mean_field_theta: f64,
    /// Threshold on `|running average of r(t)|` that defines the measured decoherence time.
    #[serde(default = "default_half_threshold")]
    pub half_threshold: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            pairs: default_pairs(),
            windows: Vec::new(),
            saddle_times: Vec::new(),
            mean_field_theta: 0.0,
            half_threshold: default_half_threshold(),
        }
    }
}

/// Parameter grid for the sweep command. Each axis names a dotted document
/// path and the values substituted there; the grid is the Cartesian product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<toml::Value>,
}

fn vector(field: &str, doc: &VectorDoc) -> Result<DVector<C64>> {
    if doc.is_empty() {
        return Err(Error::validation(field, "vector must not be empty"));
    }
    Ok(DVector::from_iterator(doc.len(), doc.iter().map(ComplexDoc::value)))
}

fn state(field: &str, doc: &VectorDoc) -> Result<StateVector> {
    let v = vector(field, doc)?;
    StateVector::new(vec![v.len()], v).map_err(|e| retag(e, field))
}

fn matrix(field: &str, rows: &MatrixDoc) -> Result<Operator> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::validation(field, "matrix must not be empty"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::validation(
                format!("{field}[{i}]"),
                format!("row has {} entries, expected {n}", row.len()),
            ));
        }
    }
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j].value());
    Operator::from_matrix(m).map_err(|e| retag(e, field))
}

fn retag(e: Error, field: &str) -> Error {
    match e {
        Error::Validation { message, .. } => Error::validation(field, message),
        other => other,
    }
}

fn matrix_doc(op: &Operator) -> MatrixDoc {
    let m = op.matrix();
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| ComplexDoc::from(m[(i, j)])).collect())
        .collect()
}

fn vector_doc(psi: &StateVector) -> VectorDoc {
    psi.amplitudes().iter().map(|z| ComplexDoc::from(*z)).collect()
}

fn pauli_x() -> DMatrix<C64> {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    DMatrix::from_row_slice(2, 2, &[o, l, l, o])
}

fn pauli_z() -> DMatrix<C64> {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    DMatrix::from_row_slice(2, 2, &[l, o, o, -l])
}

/// `sum_k c_k P^(k)` over `n` qubits, qubit 0 being the most significant.
fn single_site_sum(n: usize, p: &DMatrix<C64>, coefficients: &[f64]) -> DMatrix<C64> {
    let d = 1usize << n;
    let mut out = DMatrix::<C64>::zeros(d, d);
    for (k, &c) in coefficients.iter().enumerate() {
        let left = DMatrix::<C64>::identity(1 << k, 1 << k);
        let right = DMatrix::<C64>::identity(1 << (n - k - 1), 1 << (n - k - 1));
        out += left.kronecker(p).kronecker(&right) * C64::new(c, 0.0);
    }
    out
}

struct Environment {
    hamiltonian: Operator,
    initial: StateVector,
    operator: Option<Operator>,
}

impl EnvironmentSection {
    fn build(&self) -> Result<Environment> {
        match self {
            EnvironmentSection::Trivial => Ok(Environment {
                hamiltonian: Operator::zeros(1),
                initial: StateVector::basis(1, 0),
                operator: None,
            }),
            EnvironmentSection::Explicit {
                hamiltonian,
                initial_state,
                operator,
            } => Ok(Environment {
                hamiltonian: matrix("environment.hamiltonian", hamiltonian)?,
                initial: state("environment.initial_state", initial_state)?,
                operator: operator
                    .as_ref()
                    .map(|m| matrix("environment.operator", m))
                    .transpose()?,
            }),
            EnvironmentSection::QubitBath {
                qubits,
                fields,
                couplings,
                initial,
            } => {
                let n = *qubits;
                if n == 0 {
                    return Err(Error::validation("environment.qubits", "need at least one qubit"));
                }
                if n > 40 {
                    return Err(Error::Capacity {
                        requested: usize::MAX,
                        limit: max_dimension(),
                    });
                }
                check_capacity(2 << n, max_dimension())?;
                let f = fields.expand("environment.fields", n)?;
                let c = couplings.expand("environment.couplings", n)?;
                let d = 1usize << n;
                let amps = match initial {
                    BathInitial::Zero => {
                        let mut v = DVector::zeros(d);
                        v[0] = C64::new(1.0, 0.0);
                        v
                    }
                    BathInitial::Plus => DVector::from_element(d, C64::new((d as f64).sqrt().recip(), 0.0)),
                };
                Ok(Environment {
                    hamiltonian: Operator::from_matrix(single_site_sum(n, &pauli_x(), &f))
                        .map_err(|e| retag(e, "environment.fields"))?,
                    initial: StateVector::new(vec![d], amps)?,
                    operator: Some(
                        Operator::from_matrix(single_site_sum(n, &pauli_z(), &c))
                            .map_err(|e| retag(e, "environment.couplings"))?,
                    ),
                })
            }
        }
    }
}

impl ThetaSection {
    fn to_spec(&self) -> Result<ThetaSpec> {
        let shape = match self.shape {
            ShapeKind::Uniform => ThetaShape::Uniform,
            ShapeKind::Delta => ThetaShape::Delta(
                self.theta
                    .ok_or_else(|| Error::validation("theta.theta", "delta shape needs an angle"))?,
            ),
            ShapeKind::Explicit => {
                let points = self
                    .points
                    .clone()
                    .ok_or_else(|| Error::validation("theta.points", "explicit shape needs points"))?;
                let amplitudes = self
                    .amplitudes
                    .as_ref()
                    .ok_or_else(|| Error::validation("theta.amplitudes", "explicit shape needs amplitudes"))?
                    .iter()
                    .map(ComplexDoc::value)
                    .collect();
                if self.quadrature != Quadrature::Trapezoid {
                    return Err(Error::validation(
                        "theta.quadrature",
                        "explicit points are integrated with the trapezoid rule",
                    ));
                }
                ThetaShape::Explicit { points, amplitudes }
            }
        };
        Ok(ThetaSpec {
            quadrature: self.quadrature,
            shape,
            nodes: self.nodes,
        })
    }

    fn from_spec(spec: &ThetaSpec) -> Self {
        let mut out = ThetaSection {
            quadrature: spec.quadrature,
            nodes: spec.nodes,
            ..Default::default()
        };
        match &spec.shape {
            ThetaShape::Uniform => out.shape = ShapeKind::Uniform,
            ThetaShape::Delta(t) => {
                out.shape = ShapeKind::Delta;
                out.theta = Some(*t);
            }
            ThetaShape::Explicit { points, amplitudes } => {
                out.shape = ShapeKind::Explicit;
                out.points = Some(points.clone());
                out.amplitudes = Some(amplitudes.iter().map(|z| ComplexDoc::from(*z)).collect());
            }
        }
        out
    }
}

impl ScenarioDocument {
    pub fn to_scenario(&self) -> Result<Scenario> {
        let env = self.environment.build()?;
        let d = env.hamiltonian.dim();
        let mode = self.interaction.mode;
        let environment_operator = match (mode, env.operator) {
            (InteractionMode::Phase, Some(op)) => {
                if crate::linalg::max_abs(&(op.matrix() - DMatrix::<C64>::identity(d, d))) > 0.0
                    && !matches!(self.environment, EnvironmentSection::QubitBath { .. })
                {
                    return Err(Error::validation("environment.operator", "phase mode requires the identity"));
                }
                Operator::identity(d)
            }
            (InteractionMode::Phase, None) => Operator::identity(d),
            (InteractionMode::Bath, Some(op)) => op,
            (InteractionMode::Bath, None) => {
                return Err(Error::validation(
                    "environment.operator",
                    "bath mode needs an environment operator",
                ))
            }
        };
        let coupling = match &self.interaction.coupling {
            CouplingDoc::Constant { value } => Coupling::Constant(*value),
            CouplingDoc::Piecewise { breakpoints, values } => Coupling::Piecewise {
                breakpoints: breakpoints.clone(),
                values: values.clone(),
            },
        };
        let parts = ScenarioParts {
            hbar: self.hbar,
            system_hamiltonian: matrix("system.hamiltonian", &self.system.hamiltonian)?,
            environment_hamiltonian: env.hamiltonian,
            interaction: InteractionSpec {
                mode,
                system_operator: matrix("interaction.system_operator", &self.interaction.system_operator)?,
                environment_operator,
                coupling,
                off_diagonal: self.interaction.off_diagonal,
            },
            time_grid: TimeGrid {
                t0: self.time.t0,
                t_end: self.time.t_end,
                steps: self.time.steps,
            },
            theta: self.theta.to_spec()?,
            initial_system: state("system.initial_state", &self.system.initial_state)?,
            initial_environment: env.initial,
            analysis: self.analysis.clone(),
            sweep: self.sweep.clone(),
        };
        Scenario::new(parts)
    }
}

impl Scenario {
    /// The scenario as an explicit document: generated environments are
    /// written out as matrices, and every default is filled in.
    pub fn to_document(&self) -> ScenarioDocument {
        let p = self.parts();
        let ia = &p.interaction;
        ScenarioDocument {
            hbar: p.hbar,
            system: SystemSection {
                hamiltonian: matrix_doc(&p.system_hamiltonian),
                initial_state: vector_doc(&p.initial_system),
            },
            environment: EnvironmentSection::Explicit {
                hamiltonian: matrix_doc(&p.environment_hamiltonian),
                initial_state: vector_doc(&p.initial_environment),
                operator: match ia.mode {
                    InteractionMode::Phase => None,
                    InteractionMode::Bath => Some(matrix_doc(&ia.environment_operator)),
                },
            },
            interaction: InteractionSection {
                mode: ia.mode,
                system_operator: matrix_doc(&ia.system_operator),
                off_diagonal: ia.off_diagonal,
                coupling: match &ia.coupling {
                    Coupling::Constant(value) => CouplingDoc::Constant { value: *value },
                    Coupling::Piecewise { breakpoints, values } => CouplingDoc::Piecewise {
                        breakpoints: breakpoints.clone(),
                        values: values.clone(),
                    },
                },
            },
            time: TimeSection {
                t0: p.time_grid.t0,
                t_end: p.time_grid.t_end,
                steps: p.time_grid.steps,
            },
            theta: ThetaSection::from_spec(&p.theta),
            analysis: p.analysis.clone(),
            sweep: p.sweep.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_document()).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl ScenarioDocument {
    /// Deserializes from a parsed TOML tree, reporting the path of the first
    /// schema violation.
    pub fn from_value(value: toml::Value) -> Result<Self> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path.is_empty() || path == "." {
                Error::Parse(inner.to_string())
            } else {
                Error::validation(path, inner.message().to_string())
            }
        })
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let value: toml::Value = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    ScenarioDocument::from_value(value)?.to_scenario()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
hamiltonian = [[[0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-0.5, 0.0]]]
initial_state = [[1.0, 0.0], [0.0, 0.0]]

[environment]
kind = "trivial"

[interaction]
mode = "phase"
system_operator = [[1.0, 0.0], [0.0, -1.0]]
coupling = { kind = "constant", value = 1.0 }

[time]
t_end = 2.0
steps = 20
"#;

    #[test]
    fn minimal_document_takes_defaults() {
        let s = load_scenario(MINIMAL).unwrap();
        assert_eq!(s.hbar(), 1.0);
        assert_eq!(s.interaction().off_diagonal, 0.0);
        assert_eq!(s.environment_dim(), 1);
        assert_eq!(s.theta(), &ThetaSpec::default());
        assert_eq!(s.analysis().half_threshold, 0.5);
    }

    #[test]
    fn unnormalized_state_names_field() {
        let text = MINIMAL.replace("initial_state = [[1.0, 0.0], [0.0, 0.0]]", "initial_state = [[0.5, 0.0], [0.0, 0.0]]");
        match load_scenario(&text) {
            Err(Error::Validation { field, message }) => {
                assert_eq!(field, "system.initial_state");
                assert!(message.contains("norm"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_reports_path() {
        let text = MINIMAL.replace("steps = 20", "");
        match load_scenario(&text) {
            Err(Error::Validation { field, message }) => {
                assert_eq!(field, "time");
                assert!(message.contains("steps"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace("steps = 20", "steps = 20\nstep_size = 0.1");
        assert!(matches!(load_scenario(&text), Err(Error::Validation { ref field, .. }) if field.starts_with("time")));
    }

    #[test]
    fn non_hermitian_matrix_rejected() {
        let text = MINIMAL.replace(
            "system_operator = [[1.0, 0.0], [0.0, -1.0]]",
            "system_operator = [[1.0, 0.5], [0.0, -1.0]]",
        );
        assert!(matches!(load_scenario(&text), Err(Error::Validation { ref field, .. }) if field == "interaction.system_operator"));
    }

    #[test]
    fn theta_outside_range_rejected() {
        let text = format!("{MINIMAL}\n[theta]\nshape = \"delta\"\ntheta = 2.0\n");
        assert!(matches!(load_scenario(&text), Err(Error::Validation { ref field, .. }) if field == "theta.theta"));
        let text = format!(
            "{MINIMAL}\n[theta]\nshape = \"explicit\"\nquadrature = \"trapezoid\"\npoints = [0.0, 1.6]\namplitudes = [1.0, 1.0]\n"
        );
        assert!(matches!(load_scenario(&text), Err(Error::Validation { ref field, .. }) if field == "theta.points[1]"));
    }

    #[test]
    fn qubit_bath_generates_operators() {
        let text = MINIMAL
            .replace("kind = \"trivial\"", "kind = \"qubit-bath\"\nqubits = 2\nfields = [1.0, 0.5]\ncouplings = 0.25")
            .replace("mode = \"phase\"", "mode = \"bath\"");
        let s = load_scenario(&text).unwrap();
        assert_eq!(s.environment_dim(), 4);
        let b = s.interaction().environment_operator.matrix();
        // diag of 0.25 (z ⊗ 1 + 1 ⊗ z) = 0.25 * (2, 0, 0, -2)
        assert!((b[(0, 0)].re - 0.5).abs() < 1e-15 && b[(1, 1)].re.abs() < 1e-15 && (b[(3, 3)].re + 0.5).abs() < 1e-15);
        let h = s.environment_hamiltonian().matrix();
        assert!((h[(0, 2)].re - 1.0).abs() < 1e-15 && (h[(0, 1)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn round_trip_preserves_scenario() {
        let s = load_scenario(MINIMAL).unwrap();
        let again = load_scenario(&s.to_toml().unwrap()).unwrap();
        assert_eq!(s, again);
    }
}
