//! The theta family of mean-field branches and what is computed from it: the
//! action mixing law, the continuum superposition, stationary-phase selection
//! of pointer states and time-averaged overlaps.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Operator, StateVector, C64};
use crate::model::{auto_node_count, Scenario, ThetaProfile, TimeGrid};
use crate::propagators::{node_of, ActionRecord, BranchTrajectory, MeanFieldEngine};
use crate::quadrature::cumulative_trapezoid;

/// Largest action-phase change allowed between adjacent theta nodes.
pub const MAX_NODE_PHASE_STEP: f64 = FRAC_PI_4;

/// Branches at every node of a theta profile, plus the two pointer branches.
#[derive(Clone, Debug)]
pub struct BranchFamily {
    pub profile: ThetaProfile,
    pub branches: Vec<BranchTrajectory>,
    pub lambda_up: ActionRecord,
    pub lambda_down: ActionRecord,
    up: BranchTrajectory,
    down: BranchTrajectory,
    engine: MeanFieldEngine,
    scenario: Scenario,
}

impl BranchFamily {
    /// Builds the family for the scenario's own profile. The automatic node
    /// count is chosen from the largest pointer action gap on the grid.
    pub fn build(s: &Scenario) -> Result<Self> {
        let engine = MeanFieldEngine::new(s)?;
        let up = engine.branch(0.0)?;
        let down = engine.branch(FRAC_PI_2)?;
        let gap = max_gap(&up.action, &down.action);
        let profile = s.theta().resolve(gap, s.hbar())?;
        Self::assemble(s.clone(), engine, up, down, profile)
    }

    /// Builds the family on a caller-supplied profile.
    pub fn with_profile(s: &Scenario, profile: ThetaProfile) -> Result<Self> {
        let engine = MeanFieldEngine::new(s)?;
        let up = engine.branch(0.0)?;
        let down = engine.branch(FRAC_PI_2)?;
        Self::assemble(s.clone(), engine, up, down, profile)
    }

    fn assemble(
        scenario: Scenario,
        engine: MeanFieldEngine,
        up: BranchTrajectory,
        down: BranchTrajectory,
        profile: ThetaProfile,
    ) -> Result<Self> {
        let branches = profile
            .nodes()
            .par_iter()
            .map(|&theta| match theta {
                0.0 => Ok(up.clone()),
                t if t == FRAC_PI_2 => Ok(down.clone()),
                t => engine.branch(t),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            profile,
            branches,
            lambda_up: up.action.clone(),
            lambda_down: down.action.clone(),
            up,
            down,
            engine,
            scenario,
        })
    }

    pub fn times(&self) -> &[f64] {
        self.engine.times()
    }

    pub fn hbar(&self) -> f64 {
        self.engine.hbar()
    }

    pub fn engine(&self) -> &MeanFieldEngine {
        &self.engine
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn up(&self) -> &BranchTrajectory {
        &self.up
    }

    pub fn down(&self) -> &BranchTrajectory {
        &self.down
    }

    pub fn node(&self, t: f64) -> Result<usize> {
        node_of(self.times(), t)
    }

    /// `Lambda_up(t_k) - Lambda_down(t_k)`.
    pub fn delta_lambda(&self, k: usize) -> f64 {
        self.lambda_up.lambda[k] - self.lambda_down.lambda[k]
    }

    /// `max_k |Lambda_up - Lambda_down|` over the grid.
    pub fn max_delta_lambda(&self) -> f64 {
        max_gap(&self.lambda_up, &self.lambda_down)
    }
}

fn max_gap(up: &ActionRecord, down: &ActionRecord) -> f64 {
    up.lambda
        .iter()
        .zip(&down.lambda)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// `cos(theta)|up> + sin(theta)|down>` of the scenario's system Hamiltonian.
pub fn make_theta_state(theta: f64, s: &Scenario) -> Result<StateVector> {
    if !(0.0..=FRAC_PI_2).contains(&theta) {
        return Err(Error::validation("theta", format!("angle {theta} lies outside [0, pi/2]")));
    }
    Ok(s.pointer_basis()?.theta_state(theta))
}

/// `max_theta |Lambda_theta(t) - (cos^2 theta Lambda_up(t) + sin^2 theta Lambda_down(t))|`.
pub fn action_mixing_check(family: &BranchFamily, t: f64) -> Result<f64> {
    let k = family.node(t)?;
    let (lu, ld) = (family.lambda_up.lambda[k], family.lambda_down.lambda[k]);
    Ok(family.branches.iter().fold(0.0f64, |m, b| {
        let (c, s) = (b.theta.cos(), b.theta.sin());
        m.max((b.action.lambda[k] - (c * c * lu + s * s * ld)).abs())
    }))
}

/// Unnormalized continuum superposition and its norm.
#[derive(Clone, Debug)]
pub struct Superposition {
    pub state: StateVector,
    pub norm: f64,
}

/// Largest action-phase change between adjacent nodes at node `k`.
pub fn node_phase_step(family: &BranchFamily, k: usize) -> f64 {
    family
        .branches
        .windows(2)
        .map(|w| (w[1].action.lambda[k] - w[0].action.lambda[k]).abs() / family.hbar())
        .fold(0.0, f64::max)
}

/// `(2/pi) sum_k w_k C_k |Phi_{theta_k}(t)>`.
///
/// All branches share the environment factor, so the sum is carried out on
/// the two-dimensional system part before the product is formed.
pub fn superpose_branches(family: &BranchFamily, t: f64) -> Result<Superposition> {
    let k = family.node(t)?;
    let step = node_phase_step(family, k);
    if step > MAX_NODE_PHASE_STEP {
        let by_step = (family.branches.len() as f64 * step / MAX_NODE_PHASE_STEP).ceil() as usize + 1;
        return Err(Error::Resolution {
            max_phase_step: step,
            suggested_nodes: by_step.max(auto_node_count(family.max_delta_lambda(), family.hbar())),
        });
    }
    let profile = &family.profile;
    let mut system = StateVector::new(vec![2], nalgebra::DVector::zeros(2))?;
    for ((b, w), c) in family.branches.iter().zip(profile.weights()).zip(profile.amplitudes()) {
        system.accumulate(*c * (2.0 / PI * w) * b.phase(k), &b.system_states[k])?;
    }
    let state = system.kron(&family.up.environment_states[k])?;
    let norm = state.norm();
    Ok(Superposition { state, norm })
}

/// Phase convention for the stationary-phase prefactor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrefactorConvention {
    /// `sqrt(2 pi hbar / |L''|) exp(-i sgn(L'') pi/4)`, the Fresnel factor that
    /// matches the `exp(-i Lambda / hbar)` branch phase.
    #[default]
    Consistent,
    /// `sqrt(2 pi i hbar / L'')` on the principal branch, which belongs to the
    /// opposite sign of the branch phase.
    Literal,
}

/// Weight of a stationary point sitting on the end of the theta interval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryWeight {
    /// The full two-sided Gaussian integral.
    #[default]
    Full,
    /// Half of it, as for a one-sided endpoint contribution.
    Half,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SaddleOptions {
    pub convention: PrefactorConvention,
    pub boundary: BoundaryWeight,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryPoint {
    pub theta_star: f64,
    /// `d^2 Lambda_theta / d theta^2` at `theta_star`.
    pub lambda_second: f64,
    /// `C_{theta_star}`.
    pub amplitude: C64,
    /// `C sqrt(2 pi hbar / |L''|) exp(-i sgn(L'') pi/4)`.
    pub prefactor: C64,
    /// `C sqrt(2 pi i hbar / L'')`, principal branch.
    pub literal_prefactor: C64,
    /// Half of `prefactor`.
    pub half_weight_prefactor: C64,
}

impl StationaryPoint {
    pub fn prefactor_for(&self, options: SaddleOptions) -> C64 {
        let base = match options.convention {
            PrefactorConvention::Consistent => self.prefactor,
            PrefactorConvention::Literal => self.literal_prefactor,
        };
        match options.boundary {
            BoundaryWeight::Full => base,
            BoundaryWeight::Half => base * 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryPointReport {
    pub time: f64,
    pub delta_lambda: f64,
    pub points: Vec<StationaryPoint>,
}

fn stationary_point(theta_star: f64, lambda_second: f64, amplitude: C64, hbar: f64) -> StationaryPoint {
    let magnitude = (2.0 * PI * hbar / lambda_second.abs()).sqrt();
    let prefactor = amplitude * C64::from_polar(magnitude, -lambda_second.signum() * FRAC_PI_4);
    let literal_prefactor = amplitude * (C64::new(0.0, 2.0 * PI * hbar) / lambda_second).sqrt();
    StationaryPoint {
        theta_star,
        lambda_second,
        amplitude,
        prefactor,
        literal_prefactor,
        half_weight_prefactor: prefactor * 0.5,
    }
}

/// Stationary points of the mixing law `Lambda_theta = cos^2 Lambda_up + sin^2 Lambda_down`
/// on `[0, pi/2]`: the two ends, with `L''(0) = 2 (Lambda_down - Lambda_up)` and
/// `L''(pi/2) = 2 (Lambda_up - Lambda_down)`.
pub fn stationary_points(family: &BranchFamily, t: f64) -> Result<StationaryPointReport> {
    let k = family.node(t)?;
    let hbar = family.hbar();
    let delta = family.delta_lambda(k);
    if delta.abs() < 10.0 * hbar * f64::EPSILON {
        return Err(Error::Degeneracy { gap: delta.abs() });
    }
    let profile = &family.profile;
    Ok(StationaryPointReport {
        time: family.times()[k],
        delta_lambda: delta,
        points: vec![
            stationary_point(0.0, -2.0 * delta, profile.amplitude_at(0.0), hbar),
            stationary_point(FRAC_PI_2, 2.0 * delta, profile.amplitude_at(FRAC_PI_2), hbar),
        ],
    })
}

/// Roots of `d Lambda_theta / d theta` at time `t` found numerically, for
/// scenarios where the mixing law does not hold. The derivative is evaluated
/// exactly on a sampling of `[0, pi/2]`; sign changes are refined by bisection
/// to `tol` and ends of the interval are kept when the derivative vanishes there.
pub fn numeric_stationary_points(family: &BranchFamily, t: f64, tol: f64) -> Result<Vec<f64>> {
    const SAMPLES: usize = 128;
    let k = family.node(t)?;
    let engine = family.engine();
    let f = |theta: f64| -> Result<f64> { Ok(engine.action_derivative(theta)?[k]) };
    let grid: Vec<f64> = (0..=SAMPLES).map(|j| FRAC_PI_2 * j as f64 / SAMPLES as f64).collect();
    let values = grid.iter().map(|&th| f(th)).collect::<Result<Vec<_>>>()?;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale < 10.0 * family.hbar() * f64::EPSILON {
        return Err(Error::Degeneracy { gap: scale });
    }
    let vanishes = |v: f64| v.abs() <= 1e-9 * scale;
    let mut roots = Vec::new();
    if vanishes(values[0]) {
        roots.push(0.0);
    }
    for j in 0..SAMPLES {
        let (mut a, mut b) = (grid[j], grid[j + 1]);
        let (mut fa, fb) = (values[j], values[j + 1]);
        if vanishes(fa) || vanishes(fb) || fa.signum() == fb.signum() {
            if j > 0 && vanishes(fa) && !roots.contains(&a) {
                roots.push(a);
            }
            continue;
        }
        while b - a > tol {
            let m = 0.5 * (a + b);
            let fm = f(m)?;
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    if vanishes(values[SAMPLES]) {
        roots.push(FRAC_PI_2);
    }
    Ok(roots)
}

/// `(2/pi) sum_* C~_* |Phi_{theta_*}(t)>` over the two pointer branches, with
/// the default prefactor convention and full boundary weight.
pub fn saddle_point_state(family: &BranchFamily, t: f64) -> Result<StateVector> {
    saddle_point_state_with(family, t, SaddleOptions::default())
}

pub fn saddle_point_state_with(family: &BranchFamily, t: f64, options: SaddleOptions) -> Result<StateVector> {
    let report = stationary_points(family, t)?;
    let k = family.node(t)?;
    let mut system = StateVector::new(vec![2], nalgebra::DVector::zeros(2))?;
    for (point, branch) in report.points.iter().zip([family.up(), family.down()]) {
        let c = point.prefactor_for(options) * (2.0 / PI) * branch.phase(k);
        system.accumulate(c, &branch.system_states[k])?;
    }
    system.kron(&family.up().environment_states[k])
}

/// `|| S phi - <phi|S|phi> phi ||` for the branch system state at `theta` and
/// time `t`, `S` being the system side of the interaction.
pub fn pointer_eigen_residual(family: &BranchFamily, theta: f64, t: f64) -> Result<f64> {
    let k = family.node(t)?;
    let phi = family.engine().branch(theta)?.system_states.swap_remove(k);
    let s: Operator = family.scenario().system_coupling_operator(t)?;
    let applied = s.apply(&phi)?;
    let mean = s.expectation(&phi)?;
    Ok((applied.amplitudes() - phi.amplitudes() * mean).norm())
}

/// Window-averaged overlap with the Cauchy check at half the window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrthogonalityReport {
    /// `(1/T) int <Phi_a|Phi_b> dt` over the window.
    pub average: C64,
    /// The same average over the first half of the window.
    pub half_window_average: C64,
    /// `<Phi_a|Phi_b>` at the end of the window.
    pub instantaneous: C64,
    pub window_length: f64,
}

fn window_nodes(a: &BranchTrajectory, b: &BranchTrajectory, window: &TimeGrid) -> Result<(usize, usize)> {
    if a.times() != b.times() {
        return Err(Error::validation("window", "trajectories do not share a time grid"));
    }
    let i0 = node_of(a.times(), window.t0).map_err(|e| e.within("window.t0"))?;
    let i1 = node_of(a.times(), window.t_end).map_err(|e| e.within("window.t_end"))?;
    if i1 <= i0 {
        return Err(Error::validation("window", "window must span at least one step"));
    }
    Ok((i0, i1))
}

/// `(1/T) int_window <Phi_a(t)|Phi_b(t)> dt` by the trapezoid rule on the
/// trajectory nodes. The window's end points must be nodes; its step count is
/// not used.
pub fn time_orthogonality(a: &BranchTrajectory, b: &BranchTrajectory, window: &TimeGrid) -> Result<C64> {
    Ok(orthogonality_report(a, b, window)?.average)
}

pub fn orthogonality_report(a: &BranchTrajectory, b: &BranchTrajectory, window: &TimeGrid) -> Result<OrthogonalityReport> {
    let (i0, i1) = window_nodes(a, b, window)?;
    let times = &a.times()[i0..=i1];
    let overlaps = (i0..=i1).map(|k| a.overlap(b, k)).collect::<Result<Vec<_>>>()?;
    let integral = cumulative_trapezoid(times, &overlaps);
    let average_to = |j: usize| {
        if j == 0 {
            overlaps[0]
        } else {
            integral[j] / (times[j] - times[0])
        }
    };
    let mid = times.partition_point(|&t| t <= 0.5 * (times[0] + times[times.len() - 1])) - 1;
    Ok(OrthogonalityReport {
        average: average_to(times.len() - 1),
        half_window_average: average_to(mid),
        instantaneous: overlaps[overlaps.len() - 1],
        window_length: times[times.len() - 1] - times[0],
    })
}
