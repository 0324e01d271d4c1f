//! Time evolution: free subsystem evolution, mean-field branches with their
//! accumulated action, and the exact propagator of the coupled system.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{inner_product, Operator, Spectrum, StateVector, C64};
use crate::model::{build_total_hamiltonian, PointerBasis, Scenario, TimeGrid, STATE_NORM_TOL};
use crate::quadrature::cumulative_trapezoid;

/// Accumulated action `Lambda(t) = int_{t0}^t <h_int> dt` on the grid nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionRecord {
    pub times: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl ActionRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> f64 {
        self.lambda.last().copied().unwrap_or(0.0)
    }

    /// Index of the node at time `t`.
    pub fn node(&self, t: f64) -> Result<usize> {
        node_of(&self.times, t)
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        Ok(self.lambda[self.node(t)?])
    }
}

pub(crate) fn node_of(times: &[f64], t: f64) -> Result<usize> {
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Err(Error::validation("t", "empty time grid"));
    };
    let tol = 1e-9 * (last - first).abs().max(1.0);
    let k = times.partition_point(|&x| x < t - tol);
    match times.get(k) {
        Some(&x) if (x - t).abs() <= tol => Ok(k),
        _ => Err(Error::validation(
            "t",
            format!("time {t} is not a node of the grid [{first}, {last}]"),
        )),
    }
}

/// Mean-field branch `|phi_theta(t)> ⊗ |eps(t)> exp(-i Lambda_theta(t) / hbar)`.
///
/// The environment trajectory does not depend on the branch and is shared
/// between all branches built from the same scenario.
#[derive(Clone, Debug)]
pub struct BranchTrajectory {
    pub theta: f64,
    pub action: ActionRecord,
    pub system_states: Vec<StateVector>,
    pub environment_states: Arc<Vec<StateVector>>,
    pub hbar: f64,
}

impl BranchTrajectory {
    pub fn len(&self) -> usize {
        self.action.len()
    }

    pub fn is_empty(&self) -> bool {
        self.action.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.action.times
    }

    /// `exp(-i Lambda(t_k) / hbar)`.
    pub fn phase(&self, k: usize) -> C64 {
        C64::from_polar(1.0, -self.action.lambda[k] / self.hbar)
    }

    /// Total product state at node `k`, phase included.
    pub fn state(&self, k: usize) -> Result<StateVector> {
        Ok(self.system_states[k].kron(&self.environment_states[k])?.scaled(self.phase(k)))
    }

    pub fn states(&self) -> Result<Vec<StateVector>> {
        (0..self.len()).map(|k| self.state(k)).collect()
    }

    /// `<Phi_self(t_k)|Phi_other(t_k)>` without forming the product states.
    pub fn overlap(&self, other: &BranchTrajectory, k: usize) -> Result<C64> {
        let sys = inner_product(&self.system_states[k], &other.system_states[k])?;
        let env = if Arc::ptr_eq(&self.environment_states, &other.environment_states) {
            C64::new(self.environment_states[k].norm().powi(2), 0.0)
        } else {
            inner_product(&self.environment_states[k], &other.environment_states[k])?
        };
        Ok(sys * env * self.phase(k).conj() * other.phase(k))
    }
}

#[derive(Clone, Debug)]
pub struct ExactTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
}

/// `states[k] = exp(-i h (t_k - t0) / hbar) psi0`.
pub fn evolve_subsystem(psi0: &StateVector, h: &Operator, grid: &TimeGrid, hbar: f64) -> Result<Vec<StateVector>> {
    grid.validate()?;
    let spectrum = Spectrum::of(h)?;
    let c = spectrum.coefficients(psi0)?;
    grid.times()
        .into_iter()
        .map(|t| StateVector::new(psi0.dims().to_vec(), spectrum.evolve_coefficients(&c, t - grid.t0, hbar)))
        .collect()
}

/// Pieces of the grid on which the coupling is constant. Each entry is
/// `(a, b, g)`; nodes on a switching time close the earlier piece.
fn coupling_segments(s: &Scenario, grid: &TimeGrid) -> Vec<(f64, f64, f64)> {
    let coupling = &s.interaction().coupling;
    let mut cuts = vec![grid.t0];
    cuts.extend(coupling.switches_within(grid.t0, grid.t_end));
    cuts.push(grid.t_end);
    cuts.windows(2)
        .map(|w| (w[0], w[1], coupling.at(0.5 * (w[0] + w[1]))))
        .collect()
}

/// Everything a mean-field branch needs that does not depend on its initial
/// system state: the free system spectrum, the shared environment trajectory
/// and `b(t) = <eps(t)|B|eps(t)>`.
#[derive(Clone, Debug)]
pub struct MeanFieldEngine {
    hbar: f64,
    grid: TimeGrid,
    times: Vec<f64>,
    basis: PointerBasis,
    system: Spectrum,
    environment: Spectrum,
    environment_coefficients: nalgebra::DVector<C64>,
    environment_states: Arc<Vec<StateVector>>,
    bath: Vec<f64>,
    system_operator: DMatrix<C64>,
    perturbation: DMatrix<C64>,
    segments: Vec<(f64, f64, f64)>,
    environment_operator: Operator,
}

impl MeanFieldEngine {
    pub fn new(s: &Scenario) -> Result<Self> {
        Self::on_grid(s, *s.time_grid())
    }

    /// Same scenario sampled on a different grid, used for refinement checks.
    pub fn on_grid(s: &Scenario, grid: TimeGrid) -> Result<Self> {
        grid.validate()?;
        let hbar = s.hbar();
        let basis = s.pointer_basis()?;
        let system = Spectrum::of(s.system_hamiltonian())?;
        let environment = Spectrum::of(s.environment_hamiltonian())?;
        let environment_coefficients = environment.coefficients(s.initial_environment())?;
        let times = grid.times();
        let b_op = s.interaction().environment_operator.clone();
        let mut environment_states = Vec::with_capacity(times.len());
        let mut bath = Vec::with_capacity(times.len());
        for &t in &times {
            let eps = StateVector::new(
                s.initial_environment().dims().to_vec(),
                environment.evolve_coefficients(&environment_coefficients, t - grid.t0, hbar),
            )?;
            bath.push(b_op.expectation(&eps)?.re);
            environment_states.push(eps);
        }
        let perturbation = match s.perturbation()? {
            Some(x) => x.matrix().clone(),
            None => DMatrix::zeros(2, 2),
        };
        Ok(Self {
            hbar,
            grid,
            times,
            basis,
            system,
            environment,
            environment_coefficients,
            environment_states: Arc::new(environment_states),
            bath,
            system_operator: s.interaction().system_operator.matrix().clone(),
            perturbation,
            segments: coupling_segments(s, &grid),
            environment_operator: b_op,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn basis(&self) -> &PointerBasis {
        &self.basis
    }

    pub fn environment_states(&self) -> &Arc<Vec<StateVector>> {
        &self.environment_states
    }

    /// `<eps(t_k)|B|eps(t_k)>` at every node.
    pub fn bath_expectations(&self) -> &[f64] {
        &self.bath
    }

    fn coupling_matrix(&self, g: f64) -> DMatrix<C64> {
        &self.system_operator * C64::new(g, 0.0) + &self.perturbation
    }

    fn system_at(&self, psi0: &StateVector, t: f64) -> Result<StateVector> {
        self.system.evolve(psi0, t - self.grid.t0, self.hbar)
    }

    fn bath_at(&self, t: f64) -> Result<f64> {
        let eps = StateVector::new(
            vec![self.environment_coefficients.len()],
            self.environment
                .evolve_coefficients(&self.environment_coefficients, t - self.grid.t0, self.hbar),
        )?;
        Ok(self.environment_operator.expectation(&eps)?.re)
    }

    /// Integrates `f(t) = <phi_l(t)| S |phi_r(t)> b(t)` node to node by the
    /// composite trapezoid rule. Intervals that contain a coupling switch are
    /// split there so each sub-piece sees a single `g`.
    fn integrate<F>(&self, left: &[StateVector], right: &[StateVector], left0: &StateVector, right0: &StateVector, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&StateVector, &StateVector, &DMatrix<C64>) -> f64,
    {
        let n = self.times.len();
        let single = self.segments.len() == 1;
        if single {
            let s = self.coupling_matrix(self.segments[0].2);
            let ys: Vec<f64> = (0..n).map(|k| f(&left[k], &right[k], &s) * self.bath[k]).collect();
            return Ok(cumulative_trapezoid(&self.times, &ys));
        }
        let mut out = Vec::with_capacity(n);
        let mut acc = 0.0;
        out.push(acc);
        for k in 1..n {
            let (a, b) = (self.times[k - 1], self.times[k]);
            let mut cuts = vec![a];
            cuts.extend(self.segments.iter().map(|seg| seg.1).filter(|&c| c > a && c < b));
            cuts.push(b);
            for w in cuts.windows(2) {
                let g = self
                    .segments
                    .iter()
                    .find(|seg| 0.5 * (w[0] + w[1]) >= seg.0 && 0.5 * (w[0] + w[1]) <= seg.1)
                    .map(|seg| seg.2)
                    .unwrap_or(self.segments[self.segments.len() - 1].2);
                let s = self.coupling_matrix(g);
                let value = |t: f64, idx: Option<usize>| -> Result<f64> {
                    match idx {
                        Some(j) => Ok(f(&left[j], &right[j], &s) * self.bath[j]),
                        None => Ok(f(&self.system_at(left0, t)?, &self.system_at(right0, t)?, &s) * self.bath_at(t)?),
                    }
                };
                let fa = value(w[0], (w[0] == a).then_some(k - 1))?;
                let fb = value(w[1], (w[1] == b).then_some(k))?;
                acc += 0.5 * (w[1] - w[0]) * (fa + fb);
            }
            out.push(acc);
        }
        Ok(out)
    }

    fn system_trajectory(&self, psi0: &StateVector) -> Result<Vec<StateVector>> {
        let c = self.system.coefficients(psi0)?;
        self.times
            .iter()
            .map(|&t| StateVector::new(psi0.dims().to_vec(), self.system.evolve_coefficients(&c, t - self.grid.t0, self.hbar)))
            .collect()
    }

    /// Branch started from `cos(theta)|up> + sin(theta)|down>`.
    pub fn branch(&self, theta: f64) -> Result<BranchTrajectory> {
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
            return Err(Error::validation("theta", format!("angle {theta} lies outside [0, pi/2]")));
        }
        let mut b = self.branch_from(&self.basis.theta_state(theta))?;
        b.theta = theta;
        Ok(b)
    }

    /// Branch started from an arbitrary normalized system state. The reported
    /// angle is `atan2(|<down|psi>|, |<up|psi>|)`.
    pub fn branch_from(&self, system0: &StateVector) -> Result<BranchTrajectory> {
        if system0.dim() != 2 {
            return Err(Error::validation("system.initial_state", "expected dimension 2"));
        }
        if !system0.is_normalized(STATE_NORM_TOL) {
            return Err(Error::validation("system.initial_state", format!("norm {} is not 1", system0.norm())));
        }
        let states = self.system_trajectory(system0)?;
        let lambda = self.integrate(&states, &states, system0, system0, |l, r, s| {
            l.amplitudes().dotc(&(s * r.amplitudes())).re
        })?;
        let up = self.basis.up.dotc(system0.amplitudes()).norm();
        let down = self.basis.down.dotc(system0.amplitudes()).norm();
        Ok(BranchTrajectory {
            theta: down.atan2(up),
            action: ActionRecord {
                times: self.times.clone(),
                lambda,
            },
            system_states: states,
            environment_states: Arc::clone(&self.environment_states),
            hbar: self.hbar,
        })
    }

    /// `d Lambda_theta / d theta` at every node. The derivative of the initial
    /// state is `|phi_{theta + pi/2}>` and evolves under the same propagator, so
    /// the integrand is `2 Re <phi_{theta+pi/2}(t)| S |phi_theta(t)> b(t)`.
    pub fn action_derivative(&self, theta: f64) -> Result<Vec<f64>> {
        let psi = self.basis.theta_state(theta);
        let dpsi = self.basis.theta_state(theta + std::f64::consts::FRAC_PI_2);
        let states = self.system_trajectory(&psi)?;
        let derivs = self.system_trajectory(&dpsi)?;
        self.integrate(&derivs, &states, &dpsi, &psi, |l, r, s| {
            2.0 * l.amplitudes().dotc(&(s * r.amplitudes())).re
        })
    }
}

pub fn evolve_mean_field(theta: f64, s: &Scenario) -> Result<BranchTrajectory> {
    MeanFieldEngine::new(s)?.branch(theta)
}

/// Mean-field branch from the scenario's own initial system state.
pub fn evolve_mean_field_from(system0: &StateVector, s: &Scenario) -> Result<BranchTrajectory> {
    MeanFieldEngine::new(s)?.branch_from(system0)
}

/// The action of the branch recomputed on a grid `factor` times finer, sampled
/// back at the original nodes.
pub fn refined_action(system0: &StateVector, s: &Scenario, factor: usize) -> Result<ActionRecord> {
    if factor == 0 {
        return Err(Error::validation("factor", "refinement factor must be positive"));
    }
    let g = s.time_grid();
    let fine = TimeGrid::new(g.t0, g.t_end, g.steps * factor)?;
    let branch = MeanFieldEngine::on_grid(s, fine)?.branch_from(system0)?;
    Ok(ActionRecord {
        times: g.times(),
        lambda: branch.action.lambda.iter().step_by(factor).copied().collect(),
    })
}

/// Full unitary evolution of a total-system state. The Hamiltonian is
/// diagonalized once per constant-coupling piece and every node is reached
/// from the start of its piece in a single exact step.
pub fn evolve_exact(phi0_total: &StateVector, s: &Scenario) -> Result<ExactTrajectory> {
    let dims = s.total_dims();
    if phi0_total.dim() != dims.iter().product::<usize>() {
        return Err(Error::validation(
            "state",
            format!("expected dimension {}, found {}", dims.iter().product::<usize>(), phi0_total.dim()),
        ));
    }
    if !phi0_total.is_normalized(STATE_NORM_TOL) {
        return Err(Error::validation("state", format!("norm {} is not 1", phi0_total.norm())));
    }
    let grid = s.time_grid();
    let times = grid.times();
    let hbar = s.hbar();
    let mut states = Vec::with_capacity(times.len());
    let mut start = phi0_total.with_dims(dims.clone())?;
    let mut next = 0;
    for (a, b, _) in coupling_segments(s, grid) {
        let h = build_total_hamiltonian(s, 0.5 * (a + b))?;
        let spectrum = Spectrum::of(&h)?;
        let c = spectrum.coefficients(&start)?;
        let tol = 1e-12 * (grid.t_end - grid.t0).abs().max(1.0);
        while next < times.len() && times[next] <= b + tol {
            states.push(StateVector::new(dims.clone(), spectrum.evolve_coefficients(&c, times[next] - a, hbar))?);
            next += 1;
        }
        start = StateVector::new(dims.clone(), spectrum.evolve_coefficients(&c, b - a, hbar))?;
    }
    Ok(ExactTrajectory { times, states })
}

/// `1 - |<Phi_exact(t_k)|Phi_mf(t_k)>|` for the branch at angle `theta`, both
/// started from the same product state.
pub fn mean_field_error(theta: f64, s: &Scenario) -> Result<Vec<f64>> {
    let branch = evolve_mean_field(theta, s)?;
    branch_error(&branch, s)
}

/// Mean-field error of an already computed branch.
pub fn branch_error(branch: &BranchTrajectory, s: &Scenario) -> Result<Vec<f64>> {
    let exact = evolve_exact(&branch.state(0)?, s)?;
    exact
        .states
        .iter()
        .enumerate()
        .map(|(k, psi)| Ok(1.0 - inner_product(psi, &branch.state(k)?)?.norm()))
        .collect()
}
