//! Gaussian chance constraints for danger zones.
//!
//! A danger source sits at an uncertain position `x ~ N(mean, cov)`. The
//! probability that it lies within a disk around the robot has no closed
//! form, so the disk is replaced by the half-plane bounded by its tangent
//! line facing the source mean. The half-plane probability upper-bounds the
//! disk probability and reduces to a deterministic inequality through the
//! inverse error function:
//!
//! ```text
//! P(a^T w <= b) <= delta   <=>   a^T mu - b >= erf_inv(1 - 2 delta) * sqrt(2 a^T Sigma a)
//! ```
//!
//! The residual functions here return the left side minus the right side, so
//! a residual `>= 0` means the constraint holds.

mod erf;
mod mc;

use nalgebra::{Matrix2, SymmetricEigen, Vector2};

use crate::error::{Error, Result};

pub use erf::{erf, erf_inv};
pub use mc::{mc_disk_probability, mc_halfplane_probability, GaussianSampler, MC_BATCH};
pub(crate) use mc::batched_tally;

/// Tolerance used when checking symmetry and positive semi-definiteness.
const PSD_TOL: f64 = 1e-12;

/// A planar Gaussian position belief.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief2D {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl GaussianBelief2D {
    /// Builds a belief, checking that `cov` is symmetric PSD.
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Result<Self> {
        check_psd(&cov)?;
        Ok(Self { mean, cov })
    }

    /// Isotropic belief `N(mean, scale * I)`.
    pub fn isotropic(mean: Vector2<f64>, scale: f64) -> Result<Self> {
        Self::new(mean, Matrix2::identity() * scale)
    }
}

pub(crate) fn check_psd(cov: &Matrix2<f64>) -> Result<()> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPsd("non-finite entry".into()));
    }
    let scale = cov.amax().max(1.0);
    if (cov[(0, 1)] - cov[(1, 0)]).abs() > PSD_TOL * scale {
        return Err(Error::NotPsd(format!(
            "asymmetric off-diagonal {} vs {}",
            cov[(0, 1)],
            cov[(1, 0)]
        )));
    }
    let eig = SymmetricEigen::new(*cov);
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL * scale {
        return Err(Error::NotPsd(format!("minimum eigenvalue {min}")));
    }
    Ok(())
}

/// A sensing danger zone: the source disables sensors within `clearance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingZone {
    pub source: GaussianBelief2D,
    pub clearance: f64,
}

impl SensingZone {
    pub fn new(source: GaussianBelief2D, clearance: f64) -> Result<Self> {
        if !(clearance > 0.0 && clearance.is_finite()) {
            return Err(Error::Domain(format!(
                "sensing clearance must be positive, got {clearance}"
            )));
        }
        Ok(Self { source, clearance })
    }
}

/// A communication danger zone around a jamming source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommZone {
    pub source: GaussianBelief2D,
}

/// Risk levels for both zone kinds and the jamming distance-ratio threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskParams {
    pub eps1: f64,
    pub eps2: f64,
    pub delta2: f64,
}

impl RiskParams {
    pub fn new(eps1: f64, eps2: f64, delta2: f64) -> Result<Self> {
        check_risk_level("eps1", eps1)?;
        check_risk_level("eps2", eps2)?;
        if !(delta2 > 0.0 && delta2.is_finite()) {
            return Err(Error::Domain(format!("delta2 must be positive, got {delta2}")));
        }
        Ok(Self { eps1, eps2, delta2 })
    }
}

fn check_risk_level(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 0.5 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must lie in (0, 0.5), got {value}")))
    }
}

/// Deterministic form of `P(a^T (x - ref_point) <= b) <= delta`, where `a`
/// points from `ref_point` toward the belief mean.
///
/// The residual is `a^T (mu - ref) - b - erf_inv(1 - 2 delta) sqrt(2 a^T Sigma a)`.
/// `delta = 0.5` is accepted and drops the uncertainty term.
pub fn halfplane_residual(
    belief: &GaussianBelief2D,
    ref_point: &Vector2<f64>,
    b: f64,
    delta: f64,
) -> Result<f64> {
    let a = unit_direction(ref_point, &belief.mean)?;
    let margin = uncertainty_margin(&belief.cov, &a, delta)?;
    Ok(a.dot(&(belief.mean - ref_point)) - b - margin)
}

/// `erf_inv(1 - 2 delta) * sqrt(2 a^T Sigma a)` for a unit direction `a`.
pub fn uncertainty_margin(cov: &Matrix2<f64>, a: &Vector2<f64>, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::Domain(format!(
            "confidence level must lie in (0, 0.5], got {delta}"
        )));
    }
    let spread = a.dot(&(cov * a)).max(0.0);
    Ok(erf_inv(1.0 - 2.0 * delta)? * (2.0 * spread).sqrt())
}

fn unit_direction(from: &Vector2<f64>, to: &Vector2<f64>) -> Result<Vector2<f64>> {
    let d = to - from;
    let norm = d.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateDirection("danger source mean"));
    }
    Ok(d / norm)
}

/// Sensing residual `g(x)`: nonnegative when the linearized probability of
/// being within the zone's clearance is at most `eps1`.
pub fn sensing_residual(robot_pos: &Vector2<f64>, zone: &SensingZone, eps1: f64) -> Result<f64> {
    halfplane_residual(&zone.source, robot_pos, zone.clearance, eps1)
}

/// Largest distance from `robot_pos` to any neighbor, 0 without neighbors.
pub fn c_star(robot_pos: &Vector2<f64>, neighbor_positions: &[Vector2<f64>]) -> f64 {
    neighbor_positions
        .iter()
        .map(|n| (n - robot_pos).norm())
        .fold(0.0, f64::max)
}

/// Jamming residual `h(x)`: the sensing form with the clearance replaced by
/// `delta2 * c_star`.
pub fn comm_residual(
    robot_pos: &Vector2<f64>,
    zone: &CommZone,
    c_star: f64,
    delta2: f64,
    eps2: f64,
) -> Result<f64> {
    if !(c_star >= 0.0) {
        return Err(Error::Domain(format!("c_star must be nonnegative, got {c_star}")));
    }
    halfplane_residual(&zone.source, robot_pos, delta2 * c_star, eps2)
}
