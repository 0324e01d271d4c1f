//! Scenario description: subsystem Hamiltonians, the interaction, the coupling
//! profile, the time grid and the theta-weight profile.

mod document;
mod theta;

pub use document::{
    load_scenario, AnalysisSection, BathInitial, ComplexDoc, CouplingDoc, EnvironmentSection, InteractionSection,
    ScalarOrList, ScenarioDocument, SweepAxis, SweepSection, SystemSection, ThetaSection, TimeSection,
};
pub use theta::{auto_node_count, Quadrature, ThetaProfile, ThetaShape, ThetaSpec, MIN_AUTO_NODES, NORMALIZATION_TOL};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_capacity, max_dimension, Operator, StateVector, C64};

/// Tolerance on initial-state norms.
pub const STATE_NORM_TOL: f64 = 1e-9;

/// Residual below which the non-demolition conditions count as satisfied.
pub const NON_DEMOLITION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionMode {
    /// Environment side of the interaction is the identity.
    Phase,
    /// Environment side is a genuine bath operator.
    Bath,
}

/// Coupling strength `g(t)` in energy units. Piecewise profiles are
/// right-continuous: `values[i]` holds on `[breakpoints[i-1], breakpoints[i])`.
#[derive(Clone, Debug, PartialEq)]
pub enum Coupling {
    Constant(f64),
    Piecewise { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl Coupling {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Coupling::Constant(g) => *g,
            Coupling::Piecewise { breakpoints, values } => values[breakpoints.partition_point(|&b| b <= t)],
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Coupling::Constant(_) => true,
            Coupling::Piecewise { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }

    /// The value of largest magnitude, used as the representative strength.
    pub fn reference(&self) -> f64 {
        match self {
            Coupling::Constant(g) => *g,
            Coupling::Piecewise { values, .. } => values.iter().copied().fold(0.0, |a, v| if v.abs() > a.abs() { v } else { a }),
        }
    }

    /// Switching times strictly inside `(t0, t1)`.
    pub fn switches_within(&self, t0: f64, t1: f64) -> Vec<f64> {
        match self {
            Coupling::Constant(_) => Vec::new(),
            Coupling::Piecewise { breakpoints, .. } => breakpoints.iter().copied().filter(|&b| b > t0 && b < t1).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Coupling::Constant(g) if !g.is_finite() => Err(Error::validation("interaction.coupling.value", "must be finite")),
            Coupling::Constant(_) => Ok(()),
            Coupling::Piecewise { breakpoints, values } => {
                if values.len() != breakpoints.len() + 1 {
                    return Err(Error::validation(
                        "interaction.coupling.values",
                        format!("need {} values for {} breakpoints", breakpoints.len() + 1, breakpoints.len()),
                    ));
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1]) || breakpoints.iter().any(|b| !b.is_finite()) {
                    return Err(Error::validation(
                        "interaction.coupling.breakpoints",
                        "must be finite and strictly ascending",
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation("interaction.coupling.values", "must be finite"));
                }
                Ok(())
            }
        }
    }
}

/// `h_int(t) = g(t) A ⊗ B + off_diagonal · X ⊗ B` with `A` the system operator,
/// `B` the environment operator and `X = |up><down| + |down><up|`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionSpec {
    pub mode: InteractionMode,
    pub system_operator: Operator,
    pub environment_operator: Operator,
    pub coupling: Coupling,
    pub off_diagonal: f64,
}

/// Uniform grid `t_k = t0 + k (t_end - t0) / steps`, `k = 0..=steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, steps: usize) -> Result<Self> {
        let grid = Self { t0, t_end, steps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t0.is_finite() || !self.t_end.is_finite() || self.t_end <= self.t0 {
            return Err(Error::validation("time", "need finite t0 < t_end"));
        }
        if self.steps == 0 {
            return Err(Error::validation("time.steps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.steps as f64
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_end
        } else {
            self.t0 + (self.t_end - self.t0) * (k as f64 / self.steps as f64)
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Index of the grid node at time `t`.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        let x = (t - self.t0) / self.dt();
        let k = x.round();
        let tol = 1e-9 * self.t0.abs().max(self.t_end.abs()).max(1.0);
        if k < 0.0 || k > self.steps as f64 || (self.time(k as usize) - t).abs() > tol {
            return Err(Error::validation("t", format!("time {t} is not a node of the grid")));
        }
        Ok(k as usize)
    }
}

/// Eigenbasis `{|up>, |down>}` of the system Hamiltonian, ordered by descending
/// eigenvalue. Each vector's largest component is made real and positive.
#[derive(Clone, Debug, PartialEq)]
pub struct PointerBasis {
    pub up: DVector<C64>,
    pub down: DVector<C64>,
    pub energy_up: f64,
    pub energy_down: f64,
}

/// Relative eigenvalue gap below which the system Hamiltonian counts as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-12;

impl PointerBasis {
    pub fn of(h: &Operator) -> Result<Self> {
        if h.dim() != 2 {
            return Err(Error::validation("system.hamiltonian", "system must be two-dimensional"));
        }
        let spectrum = crate::linalg::Spectrum::of(h)?;
        let e = spectrum.energies();
        let (iu, id) = if e[0] >= e[1] { (0, 1) } else { (1, 0) };
        let scale = e[0].abs().max(e[1].abs()).max(1.0);
        if (e[iu] - e[id]) <= DEGENERACY_TOL * scale {
            return Err(Error::validation(
                "system.hamiltonian",
                "degenerate spectrum leaves the up/down basis ambiguous",
            ));
        }
        let fix = |v: DVector<C64>| {
            let max = v.iter().fold(0.0f64, |a, z| a.max(z.norm()));
            let pivot = v.iter().find(|z| z.norm() >= max - 1e-12).copied().unwrap_or(C64::new(1.0, 0.0));
            let phase = pivot.conj() / pivot.norm();
            v * phase
        };
        Ok(Self {
            up: fix(spectrum.vectors().column(iu).into_owned()),
            down: fix(spectrum.vectors().column(id).into_owned()),
            energy_up: e[iu],
            energy_down: e[id],
        })
    }

    /// Columns `|up>`, `|down>`.
    pub fn matrix(&self) -> DMatrix<C64> {
        DMatrix::from_columns(&[self.up.clone(), self.down.clone()])
    }

    /// `|up><down| + |down><up|`.
    pub fn flip(&self) -> Operator {
        let m = &self.up * self.down.adjoint() + &self.down * self.up.adjoint();
        Operator::from_matrix(m).expect("flip operator is finite")
    }

    /// `cos(theta) |up> + sin(theta) |down>`.
    pub fn theta_state(&self, theta: f64) -> StateVector {
        let v = &self.up * C64::new(theta.cos(), 0.0) + &self.down * C64::new(theta.sin(), 0.0);
        StateVector::new(vec![2], v).expect("theta state is finite")
    }

    /// `<i|A|j>` in the `{up, down}` basis.
    pub fn element(&self, a: &Operator, i: usize, j: usize) -> C64 {
        let v = |k| if k == 0 { &self.up } else { &self.down };
        v(i).dotc(&(a.matrix() * v(j)))
    }
}

/// Inputs for [`Scenario::new`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioParts {
    pub hbar: f64,
    pub system_hamiltonian: Operator,
    pub environment_hamiltonian: Operator,
    pub interaction: InteractionSpec,
    pub time_grid: TimeGrid,
    pub theta: ThetaSpec,
    pub initial_system: StateVector,
    pub initial_environment: StateVector,
    pub analysis: AnalysisSection,
    pub sweep: Option<SweepSection>,
}

/// A validated experiment description. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    parts: ScenarioParts,
}

fn check_state(field: &str, psi: &StateVector, dim: usize) -> Result<()> {
    if psi.dim() != dim {
        return Err(Error::validation(field, format!("expected dimension {dim}, found {}", psi.dim())));
    }
    if !psi.is_normalized(STATE_NORM_TOL) {
        return Err(Error::validation(field, format!("state has norm {}, expected 1", psi.norm())));
    }
    Ok(())
}

fn check_operator(field: &str, op: &Operator, dim: usize) -> Result<()> {
    if op.dim() != dim {
        return Err(Error::validation(field, format!("expected a {dim}x{dim} matrix, found {}x{}", op.dim(), op.dim())));
    }
    if !op.is_hermitian() {
        return Err(Error::validation(
            field,
            format!("matrix is not Hermitian (residual {:e})", op.hermitian_residual()),
        ));
    }
    Ok(())
}

impl Scenario {
    pub fn new(parts: ScenarioParts) -> Result<Self> {
        let p = &parts;
        if !(p.hbar > 0.0) || !p.hbar.is_finite() {
            return Err(Error::validation("hbar", "must be positive and finite"));
        }
        check_operator("system.hamiltonian", &p.system_hamiltonian, 2)?;
        let d = p.environment_hamiltonian.dim();
        check_capacity(2 * d, max_dimension())?;
        check_operator("environment.hamiltonian", &p.environment_hamiltonian, d)?;
        check_state("system.initial_state", &p.initial_system, 2)?;
        check_state("environment.initial_state", &p.initial_environment, d)?;

        let ia = &p.interaction;
        check_operator("interaction.system_operator", &ia.system_operator, 2)?;
        check_operator("environment.operator", &ia.environment_operator, d)?;
        let comm = p.system_hamiltonian.commutator(&ia.system_operator)?;
        let comm = crate::linalg::max_abs(&comm);
        let scale = p.system_hamiltonian.max_abs().max(1.0) * ia.system_operator.max_abs().max(1.0);
        if comm > NON_DEMOLITION_TOL * scale {
            return Err(Error::validation(
                "interaction.system_operator",
                format!("must be diagonal in the eigenbasis of the system Hamiltonian (commutator {comm:e})"),
            ));
        }
        if ia.mode == InteractionMode::Phase {
            let id = DMatrix::<C64>::identity(d, d);
            if crate::linalg::max_abs(&(ia.environment_operator.matrix() - id)) > 0.0 {
                return Err(Error::validation("environment.operator", "phase mode requires the identity"));
            }
        }
        if !(ia.off_diagonal >= 0.0) || !ia.off_diagonal.is_finite() {
            return Err(Error::validation("interaction.off_diagonal", "must be finite and non-negative"));
        }
        if ia.off_diagonal > 0.0 {
            PointerBasis::of(&p.system_hamiltonian).map_err(|e| match e {
                Error::Validation { message, .. } => Error::validation("interaction.off_diagonal", message),
                other => other,
            })?;
        }
        ia.coupling.validate()?;
        p.time_grid.validate()?;
        p.theta.validate()?;
        if !(p.analysis.half_threshold > 0.0 && p.analysis.half_threshold < 1.0) {
            return Err(Error::validation("analysis.half_threshold", "must lie in (0, 1)"));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&p.analysis.mean_field_theta) {
            return Err(Error::validation("analysis.mean_field_theta", "must lie in [0, pi/2]"));
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &ScenarioParts {
        &self.parts
    }

    pub fn into_parts(self) -> ScenarioParts {
        self.parts
    }

    pub fn hbar(&self) -> f64 {
        self.parts.hbar
    }

    pub fn system_hamiltonian(&self) -> &Operator {
        &self.parts.system_hamiltonian
    }

    pub fn environment_hamiltonian(&self) -> &Operator {
        &self.parts.environment_hamiltonian
    }

    pub fn interaction(&self) -> &InteractionSpec {
        &self.parts.interaction
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.parts.time_grid
    }

    pub fn theta(&self) -> &ThetaSpec {
        &self.parts.theta
    }

    pub fn initial_system(&self) -> &StateVector {
        &self.parts.initial_system
    }

    pub fn initial_environment(&self) -> &StateVector {
        &self.parts.initial_environment
    }

    pub fn analysis(&self) -> &AnalysisSection {
        &self.parts.analysis
    }

    pub fn sweep(&self) -> Option<&SweepSection> {
        self.parts.sweep.as_ref()
    }

    pub fn environment_dim(&self) -> usize {
        self.parts.environment_hamiltonian.dim()
    }

    /// `[2, d]`.
    pub fn total_dims(&self) -> Vec<usize> {
        vec![2, self.environment_dim()]
    }

    pub fn pointer_basis(&self) -> Result<PointerBasis> {
        PointerBasis::of(&self.parts.system_hamiltonian)
    }

    /// `|phi(t0)> ⊗ |eps(t0)>`.
    pub fn initial_product_state(&self) -> Result<StateVector> {
        self.parts.initial_system.kron(&self.parts.initial_environment)
    }

    /// `off_diagonal · X`, or `None` when the perturbation vanishes.
    pub(crate) fn perturbation(&self) -> Result<Option<Operator>> {
        let eps = self.parts.interaction.off_diagonal;
        if eps == 0.0 {
            return Ok(None);
        }
        Ok(Some(self.pointer_basis()?.flip().scaled(eps)))
    }

    /// System operator multiplying `B` at time `t`: `g(t) A + off_diagonal X`.
    pub fn system_coupling_operator(&self, t: f64) -> Result<Operator> {
        let ia = &self.parts.interaction;
        let base = ia.system_operator.scaled(ia.coupling.at(t));
        match self.perturbation()? {
            Some(x) => base.plus(&x),
            None => Ok(base),
        }
    }
}

/// `H(t) = h_phi ⊗ I + I ⊗ h_eps + g(t) A ⊗ B + off_diagonal X ⊗ B`.
pub fn build_total_hamiltonian(s: &Scenario, t: f64) -> Result<Operator> {
    let d = s.environment_dim();
    let sys = s.system_hamiltonian().kron(&Operator::identity(d))?;
    let env = Operator::identity(2).kron(s.environment_hamiltonian())?;
    let int = s.system_coupling_operator(t)?.kron(&s.interaction().environment_operator)?;
    let h = sys.plus(&env)?.plus(&int)?;
    if !h.is_hermitian() {
        return Err(Error::validation(
            "hamiltonian",
            format!("total Hamiltonian is not Hermitian (residual {:e})", h.hermitian_residual()),
        ));
    }
    Ok(h)
}

/// Residuals of the non-demolition conditions for the induced system operator
/// `V = <eps(t0)| h_int |eps(t0)>`, evaluated at the representative coupling.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonDemolitionReport {
    /// `max |[h_phi, V]|`.
    pub commutator_residual: f64,
    /// `|<up|V|down>|`.
    pub off_diagonal_up_down: f64,
    /// `|<down|V|up>|`.
    pub off_diagonal_down_up: f64,
    pub reference_coupling: f64,
    /// `<eps(t0)|B|eps(t0)>`.
    pub environment_expectation: f64,
    pub pass: bool,
}

pub fn validate_non_demolition(s: &Scenario) -> NonDemolitionReport {
    let ia = s.interaction();
    let g = ia.coupling.reference();
    let b = ia
        .environment_operator
        .expectation(s.initial_environment())
        .map(|z| z.re)
        .unwrap_or(f64::NAN);
    let mut v = ia.system_operator.scaled(g);
    if let Ok(Some(x)) = s.perturbation() {
        v = v.plus(&x).unwrap_or(v);
    }
    let v = v.scaled(b);
    let commutator_residual = s
        .system_hamiltonian()
        .commutator(&v)
        .map(|m| crate::linalg::max_abs(&m))
        .unwrap_or(f64::NAN);
    let basis = PointerBasis::of(s.system_hamiltonian())
        .or_else(|_| PointerBasis::of(&ia.system_operator))
        .unwrap_or_else(|_| PointerBasis {
            up: DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]),
            down: DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]),
            energy_up: 0.0,
            energy_down: 0.0,
        });
    let off_up_down = basis.element(&v, 0, 1).norm();
    let off_down_up = basis.element(&v, 1, 0).norm();
    let pass = [commutator_residual, off_up_down, off_down_up]
        .iter()
        .all(|r| *r <= NON_DEMOLITION_TOL);
    NonDemolitionReport {
        commutator_residual,
        off_diagonal_up_down: off_up_down,
        off_diagonal_down_up: off_down_up,
        reference_coupling: g,
        environment_expectation: b,
        pass,
    }
}
