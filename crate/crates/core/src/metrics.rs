//! Decoherence observables: reduced density matrices, the decoherence factor
//! `r(t)`, running time averages, decoherence times and state fidelity.

use serde::Serialize;

use crate::branches::BranchFamily;
use crate::error::{Error, Result};
use crate::linalg::{reduce_pure, DensityMatrix, StateVector, C64};
use crate::model::Scenario;
use crate::propagators::evolve_exact;
use crate::quadrature::cumulative_trapezoid;

/// Default level of `|running average of r|` that defines the measured time.
pub const DEFAULT_HALF_THRESHOLD: f64 = 0.5;

/// Reduced system density matrix `Tr_eps |psi><psi|`. The state is normalized
/// first, so unnormalized superpositions are accepted.
pub fn reduced_density(state: &StateVector, s: &Scenario) -> Result<DensityMatrix> {
    let dims = s.total_dims();
    if state.dim() != dims.iter().product::<usize>() {
        return Err(Error::validation(
            "state",
            format!("dimension {} does not match the scenario ({:?})", state.dim(), dims),
        ));
    }
    reduce_pure(&state.normalized()?.with_dims(dims)?, 0)
}

/// `rho_{up,down}` in the pointer basis.
pub fn pointer_coherence(rho: &DensityMatrix, s: &Scenario) -> Result<C64> {
    Ok(rho.in_basis(&s.pointer_basis()?.matrix())?.element(0, 1))
}

/// `r(t) = exp(i (Lambda_up(t) - Lambda_down(t)) / hbar)`.
pub fn decoherence_factor(family: &BranchFamily, t: f64) -> Result<C64> {
    let k = family.node(t)?;
    Ok(factor_at(family, k))
}

fn factor_at(family: &BranchFamily, k: usize) -> C64 {
    C64::from_polar(1.0, family.delta_lambda(k) / family.hbar())
}

/// Running average `A(T) = (1/(T - t0)) int_{t0}^T v dt` by the trapezoid
/// rule. `A(t0)` is the limit `v(t0)`.
pub fn time_average(values: &[C64], times: &[f64]) -> Result<Vec<C64>> {
    if values.len() != times.len() {
        return Err(Error::validation("values", format!("{} values for {} times", values.len(), times.len())));
    }
    if times.len() < 2 {
        return Err(Error::validation("times", "need at least two nodes"));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation("times", "must be strictly ascending"));
    }
    let integral = cumulative_trapezoid(times, values);
    Ok(integral
        .iter()
        .zip(times)
        .enumerate()
        .map(|(k, (i, t))| if k == 0 { values[0] } else { i / (t - times[0]) })
        .collect())
}

/// First time at which `|a|` drops to `threshold`, linearly interpolated
/// between the bracketing nodes.
pub fn first_crossing(times: &[f64], magnitudes: &[f64], threshold: f64) -> Option<f64> {
    let k = magnitudes.iter().position(|&m| m <= threshold)?;
    if k == 0 {
        return Some(times[0]);
    }
    let (m0, m1) = (magnitudes[k - 1], magnitudes[k]);
    let s = if m0 == m1 { 1.0 } else { (m0 - threshold) / (m0 - m1) };
    Some(times[k - 1] + s * (times[k] - times[k - 1]))
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecoherenceTimes {
    /// Fitted `d Lambda_up / dt`.
    pub rate_up: f64,
    /// Fitted `d Lambda_down / dt`.
    pub rate_down: f64,
    /// `hbar / |rate_up - rate_down|`.
    pub tau_estimate: f64,
    /// First time the running average of `r` falls to the threshold, if it does on the grid.
    pub tau_measured: Option<f64>,
    /// `hbar / max(|rate_up|, |rate_down|)`, the single-rate estimate.
    pub tau_single_rate: f64,
    pub threshold: f64,
}

pub fn decoherence_time(family: &BranchFamily) -> Result<DecoherenceTimes> {
    decoherence_time_with(family, DEFAULT_HALF_THRESHOLD)
}

pub fn decoherence_time_with(family: &BranchFamily, threshold: f64) -> Result<DecoherenceTimes> {
    if !family.scenario().interaction().coupling.is_constant() {
        return Err(Error::UnsupportedProfile(
            "decoherence times need a constant coupling".into(),
        ));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::validation("analysis.half_threshold", "must lie in (0, 1)"));
    }
    let times = family.times();
    let rate_up = slope(times, &family.lambda_up.lambda);
    let rate_down = slope(times, &family.lambda_down.lambda);
    let gap = (rate_up - rate_down).abs();
    let hbar = family.hbar();
    if !(gap > 10.0 * f64::EPSILON * rate_up.abs().max(rate_down.abs()).max(hbar)) {
        return Err(Error::Degeneracy { gap });
    }
    let r: Vec<C64> = (0..times.len()).map(|k| factor_at(family, k)).collect();
    let magnitudes: Vec<f64> = time_average(&r, times)?.iter().map(|a| a.norm()).collect();
    Ok(DecoherenceTimes {
        rate_up,
        rate_down,
        tau_estimate: hbar / gap,
        tau_measured: first_crossing(times, &magnitudes, threshold),
        tau_single_rate: hbar / rate_up.abs().max(rate_down.abs()),
        threshold,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoherenceReport {
    pub times: Vec<f64>,
    /// `|rho_{up,down}(t)|` of the exactly evolved scenario initial state.
    pub coherence_magnitude: Vec<f64>,
    pub decoherence_factor: Vec<C64>,
    pub time_averaged_factor: Vec<C64>,
    pub tau_estimate: f64,
    pub tau_measured: Option<f64>,
    pub tau_single_rate: f64,
}

pub fn decoherence_report(family: &BranchFamily, threshold: f64) -> Result<DecoherenceReport> {
    let s = family.scenario();
    let times = family.times().to_vec();
    let r: Vec<C64> = (0..times.len()).map(|k| factor_at(family, k)).collect();
    let averaged = time_average(&r, &times)?;
    let taus = decoherence_time_with(family, threshold)?;
    let exact = evolve_exact(&s.initial_product_state()?, s)?;
    let coherence_magnitude = exact
        .states
        .iter()
        .map(|psi| Ok(pointer_coherence(&reduced_density(psi, s)?, s)?.norm()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DecoherenceReport {
        times,
        coherence_magnitude,
        decoherence_factor: r,
        time_averaged_factor: averaged,
        tau_estimate: taus.tau_estimate,
        tau_measured: taus.tau_measured,
        tau_single_rate: taus.tau_single_rate,
    })
}

/// `|<a|b>| / (||a|| ||b||)`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::validation("state", format!("dimensions {} and {} differ", a.dim(), b.dim())));
    }
    let (na, nb) = (a.norm(), b.norm());
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::validation("state", "fidelity of a zero vector"));
    }
    let ov = a.amplitudes().dotc(b.amplitudes());
    Ok((ov.norm() / (na * nb)).min(1.0))
}
