//! Weight profiles `C_theta` over the branch angle `theta in [0, pi/2]`.
//!
//! Normalization uses the continuum measure `(2/pi) int_0^{pi/2} |C_theta|^2 dtheta = 1`.
//! A discrete family with a single node is treated as the delta limit and
//! carries the whole measure `pi/2`, so the discrete rule `sum |C|^2 = 1` and the
//! continuum rule agree in that case.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::quadrature::{gauss_legendre_on, trapezoid_weights};

pub const NORMALIZATION_TOL: f64 = 1e-8;

/// Smallest node count the automatic rule will choose.
pub const MIN_AUTO_NODES: usize = 64;

/// Nodes needed so `exp(-i Lambda_theta / hbar)` is resolved when the action
/// spread across the family is `delta_lambda_max`: `max(64, ceil(8 dL / hbar))`.
pub fn auto_node_count(delta_lambda_max: f64, hbar: f64) -> usize {
    let wanted = (8.0 * delta_lambda_max.abs() / hbar).ceil();
    if wanted.is_finite() {
        (wanted as usize).max(MIN_AUTO_NODES)
    } else {
        MIN_AUTO_NODES
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    #[default]
    GaussLegendre,
    Trapezoid,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ThetaShape {
    /// `C_theta = 1` on the whole interval.
    Uniform,
    /// A single branch at the given angle.
    Delta(f64),
    /// Amplitudes at explicit ascending points, integrated by trapezoid.
    Explicit { points: Vec<f64>, amplitudes: Vec<C64> },
}

/// Declarative profile as written in a scenario. Node placement for the
/// uniform shape is deferred until the action spread is known.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaSpec {
    pub quadrature: Quadrature,
    pub shape: ThetaShape,
    /// Fixed node count; `None` selects [`auto_node_count`].
    pub nodes: Option<usize>,
}

impl Default for ThetaSpec {
    fn default() -> Self {
        Self {
            quadrature: Quadrature::GaussLegendre,
            shape: ThetaShape::Uniform,
            nodes: None,
        }
    }
}

fn check_angle(field: &str, theta: f64) -> Result<()> {
    if !(0.0..=FRAC_PI_2).contains(&theta) {
        return Err(Error::validation(field, format!("angle {theta} lies outside [0, pi/2]")));
    }
    Ok(())
}

impl ThetaSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.shape {
            ThetaShape::Uniform => {
                if let Some(n) = self.nodes {
                    let min = if self.quadrature == Quadrature::Trapezoid { 2 } else { 1 };
                    if n < min {
                        return Err(Error::validation("theta.nodes", format!("need at least {min} nodes")));
                    }
                }
                Ok(())
            }
            ThetaShape::Delta(theta) => check_angle("theta.theta", *theta),
            ThetaShape::Explicit { points, amplitudes } => {
                ThetaProfile::explicit(points.clone(), amplitudes.clone()).map(|_| ())
            }
        }
    }

    /// Places the nodes. `delta_lambda_max` is the largest `|Lambda_up - Lambda_down|`
    /// over the time grid and only matters for the automatic node count.
    pub fn resolve(&self, delta_lambda_max: f64, hbar: f64) -> Result<ThetaProfile> {
        match &self.shape {
            ThetaShape::Uniform => {
                let n = self.nodes.unwrap_or_else(|| auto_node_count(delta_lambda_max, hbar));
                ThetaProfile::uniform(n, self.quadrature)
            }
            ThetaShape::Delta(theta) => ThetaProfile::delta(*theta),
            ThetaShape::Explicit { points, amplitudes } => ThetaProfile::explicit(points.clone(), amplitudes.clone()),
        }
    }
}

/// A resolved profile: nodes, amplitudes `C_theta` at the nodes, and the
/// quadrature weights `w_k` of the declared rule.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaProfile {
    nodes: Vec<f64>,
    amplitudes: Vec<C64>,
    weights: Vec<f64>,
    quadrature: Quadrature,
    shape: ThetaShape,
}

impl ThetaProfile {
    fn checked(self) -> Result<Self> {
        for (k, &t) in self.nodes.iter().enumerate() {
            check_angle(&format!("theta.points[{k}]"), t)?;
        }
        if self.nodes.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::validation("theta.points", "nodes must be strictly ascending"));
        }
        let norm = self.norm_squared();
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::validation(
                "theta.amplitudes",
                format!("(2/pi) int |C_theta|^2 dtheta = {norm}, expected 1"),
            ));
        }
        Ok(self)
    }

    pub fn uniform(n: usize, quadrature: Quadrature) -> Result<Self> {
        let (nodes, weights) = match quadrature {
            Quadrature::GaussLegendre => {
                if n == 0 {
                    return Err(Error::validation("theta.nodes", "need at least one node"));
                }
                gauss_legendre_on(n, 0.0, FRAC_PI_2)
            }
            Quadrature::Trapezoid => {
                if n < 2 {
                    return Err(Error::validation("theta.nodes", "trapezoid rule needs at least 2 nodes"));
                }
                let nodes: Vec<f64> = (0..n).map(|k| FRAC_PI_2 * k as f64 / (n - 1) as f64).collect();
                let weights = trapezoid_weights(&nodes);
                (nodes, weights)
            }
        };
        let amplitudes = vec![C64::new(1.0, 0.0); nodes.len()];
        Self {
            nodes,
            amplitudes,
            weights,
            quadrature,
            shape: ThetaShape::Uniform,
        }
        .checked()
    }

    pub fn delta(theta: f64) -> Result<Self> {
        check_angle("theta.theta", theta)?;
        Self {
            nodes: vec![theta],
            amplitudes: vec![C64::new(1.0, 0.0)],
            weights: vec![FRAC_PI_2],
            quadrature: Quadrature::Trapezoid,
            shape: ThetaShape::Delta(theta),
        }
        .checked()
    }

    pub fn explicit(points: Vec<f64>, amplitudes: Vec<C64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation("theta.points", "at least one point is required"));
        }
        if points.len() != amplitudes.len() {
            return Err(Error::validation(
                "theta.amplitudes",
                format!("{} amplitudes for {} points", amplitudes.len(), points.len()),
            ));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::validation("theta.amplitudes", "amplitudes must be finite"));
        }
        let weights = if points.len() == 1 {
            vec![FRAC_PI_2]
        } else {
            trapezoid_weights(&points)
        };
        Self {
            shape: ThetaShape::Explicit {
                points: points.clone(),
                amplitudes: amplitudes.clone(),
            },
            nodes: points,
            amplitudes,
            weights,
            quadrature: Quadrature::Trapezoid,
        }
        .checked()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn shape(&self) -> &ThetaShape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(2/pi) sum_k w_k |C_k|^2`.
    pub fn norm_squared(&self) -> f64 {
        let s: f64 = self
            .weights
            .iter()
            .zip(&self.amplitudes)
            .map(|(w, c)| w * c.norm_sqr())
            .sum();
        2.0 / PI * s
    }

    /// `C_theta` at an arbitrary angle: exact for the uniform and delta shapes,
    /// linear interpolation for explicit points and zero outside their span.
    pub fn amplitude_at(&self, theta: f64) -> C64 {
        let zero = C64::new(0.0, 0.0);
        match &self.shape {
            ThetaShape::Uniform => {
                if (0.0..=FRAC_PI_2).contains(&theta) {
                    C64::new(1.0, 0.0)
                } else {
                    zero
                }
            }
            ThetaShape::Delta(at) => {
                if (theta - at).abs() <= 1e-12 {
                    C64::new(1.0, 0.0)
                } else {
                    zero
                }
            }
            ThetaShape::Explicit { points, amplitudes } => {
                if points.len() == 1 {
                    return if (theta - points[0]).abs() <= 1e-12 { amplitudes[0] } else { zero };
                }
                let last = points.len() - 1;
                if theta < points[0] - 1e-12 || theta > points[last] + 1e-12 {
                    return zero;
                }
                let k = points.partition_point(|&p| p <= theta).clamp(1, last);
                let (a, b) = (points[k - 1], points[k]);
                let s = ((theta - a) / (b - a)).clamp(0.0, 1.0);
                amplitudes[k - 1] * (1.0 - s) + amplitudes[k] * s
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn auto_rule() {
        assert_eq!(auto_node_count(0.0, 1.0), 64);
        assert_eq!(auto_node_count(160.0, 1.0), 1280);
        assert_eq!(auto_node_count(10.2, 1.0), 82);
        assert_eq!(auto_node_count(-20.0, 2.0), 80);
    }

    #[test]
    fn uniform_profiles_are_normalized() {
        for q in [Quadrature::GaussLegendre, Quadrature::Trapezoid] {
            let p = ThetaProfile::uniform(65, q).unwrap();
            assert!((p.norm_squared() - 1.0).abs() < 1e-12);
            assert_eq!(p.amplitude_at(0.0), C64::new(1.0, 0.0));
        }
    }

    #[test]
    fn delta_carries_whole_measure() {
        let p = ThetaProfile::delta(0.3).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p.norm_squared() - 1.0).abs() < 1e-15);
        assert_eq!(p.amplitude_at(0.3), C64::new(1.0, 0.0));
        assert_eq!(p.amplitude_at(0.0), C64::new(0.0, 0.0));
    }

    #[test]
    fn rejects_out_of_range_and_unnormalized() {
        assert!(ThetaProfile::delta(2.0).is_err());
        let err = ThetaProfile::explicit(vec![0.0, 1.0], vec![C64::new(1.0, 0.0); 2]).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "theta.amplitudes"));
        let err = ThetaProfile::explicit(vec![0.0, 1.7], vec![C64::new(1.0, 0.0); 2]).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "theta.points[1]"));
    }

    #[test]
    fn explicit_interpolates() {
        let c = C64::new(1.0, 0.0);
        let p = ThetaProfile::explicit(vec![0.0, FRAC_PI_2], vec![c, c]).unwrap();
        assert_eq!(p.amplitude_at(0.7), c);
        let half = ThetaProfile::explicit(
            vec![0.0, FRAC_PI_4, FRAC_PI_2],
            vec![C64::new(0.0, 0.0), C64::new(2f64.sqrt(), 0.0), C64::new(0.0, 0.0)],
        )
        .unwrap();
        assert!((half.amplitude_at(FRAC_PI_4 / 2.0).re - 2f64.sqrt() / 2.0).abs() < 1e-12);
    }
}
