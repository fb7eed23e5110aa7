//! Range/bearing sensing and the extended Kalman filter over target positions.
//!
//! Every robot measures range and bearing to every target. Measurement noise
//! grows with distance: the information (inverse variance) of each channel is
//! `a * exp(-lambda * d)`. Team-level matrices stack measurements target-major:
//! row pair `2 * (j * M + i)` holds robot `i`'s range and bearing of target `j`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub position: Vector2<f64>,
    /// Heading in (-pi, pi].
    pub orientation: f64,
}

impl RobotState {
    pub fn at(position: Vector2<f64>) -> Self {
        Self {
            position,
            orientation: 0.0,
        }
    }
}

/// Stacked estimate of all target positions, `[x_1, y_1, x_2, y_2, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl TargetBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n % 2 != 0 {
            return Err(Error::Dimension(format!("target mean length {n} is odd")));
        }
        if cov.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "covariance is {:?}, expected ({n}, {n})",
                cov.shape()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn num_targets(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn target_mean(&self, j: usize) -> Vector2<f64> {
        Vector2::new(self.mean[2 * j], self.mean[2 * j + 1])
    }

    pub fn trace(&self) -> f64 {
        self.cov.trace()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorParams {
    pub a_d: f64,
    pub lambda_d: f64,
    pub a_theta: f64,
    pub lambda_theta: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            a_d: 1.0,
            lambda_d: 0.05,
            a_theta: 1.0,
            lambda_theta: 0.05,
        }
    }
}

impl SensorParams {
    /// `(range, bearing)` information at distance `d`.
    pub fn information(&self, d: f64) -> (f64, f64) {
        (
            noise_information(d, self.a_d, self.lambda_d),
            noise_information(d, self.a_theta, self.lambda_theta),
        )
    }
}

/// Linear target process `z' = A z + w`, `w ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl TargetModel {
    /// `A = I`, `Q = q I` for `num_targets` planar targets.
    pub fn near_constant_position(num_targets: usize, q: f64) -> Self {
        let n = 2 * num_targets;
        Self {
            a: DMatrix::identity(n, n),
            q: DMatrix::identity(n, n) * q,
        }
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

fn offset(robot_pos: &Vector2<f64>, target_pos: &Vector2<f64>) -> Result<Vector2<f64>> {
    let d = target_pos - robot_pos;
    if d.norm_squared() == 0.0 {
        return Err(Error::Domain("robot and target positions coincide".into()));
    }
    Ok(d)
}

/// Range and heading-relative bearing from `robot` to `target_pos`.
pub fn range_bearing(robot: &RobotState, target_pos: &Vector2<f64>) -> Result<(f64, f64)> {
    let d = offset(&robot.position, target_pos)?;
    Ok((d.norm(), wrap_angle(d.y.atan2(d.x) - robot.orientation)))
}

/// Measurement information `a * exp(-lambda * distance)`.
pub fn noise_information(distance: f64, a: f64, lambda: f64) -> f64 {
    a * (-lambda * distance).exp()
}

/// Jacobian of `(range, bearing)` with respect to the target position.
///
/// With `p = robot - target`, the rows are `-p / |p|` and `J p / |p|^2`,
/// `J` the rotation by -pi/2.
pub fn target_jacobian(robot_pos: &Vector2<f64>, target_pos: &Vector2<f64>) -> Result<Matrix2<f64>> {
    let p = -offset(robot_pos, target_pos)?;
    let r2 = p.norm_squared();
    let r = r2.sqrt();
    // J p = (p_y, -p_x)
    Ok(Matrix2::new(-p.x / r, -p.y / r, p.y / r2, -p.x / r2))
}

/// Team measurement matrix `H` (2MN x 2N, block-diagonal over targets) and
/// the diagonal information matrix `R^-1` (2MN x 2MN), both evaluated at the
/// given target means.
pub fn team_matrices(
    robots: &[RobotState],
    target_means: &DVector<f64>,
    sensors: &SensorParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (m, n) = team_dims(robots.len(), target_means)?;
    let rows = 2 * m * n;
    let mut h = DMatrix::zeros(rows, 2 * n);
    let mut r_inv = DMatrix::zeros(rows, rows);
    for j in 0..n {
        let z = Vector2::new(target_means[2 * j], target_means[2 * j + 1]);
        for (i, robot) in robots.iter().enumerate() {
            let row = 2 * (j * m + i);
            let hij = target_jacobian(&robot.position, &z)?;
            h.view_mut((row, 2 * j), (2, 2)).copy_from(&hij);
            let (info_d, info_theta) = sensors.information((z - robot.position).norm());
            r_inv[(row, row)] = info_d;
            r_inv[(row + 1, row + 1)] = info_theta;
        }
    }
    Ok((h, r_inv))
}

fn team_dims(num_robots: usize, target_means: &DVector<f64>) -> Result<(usize, usize)> {
    if num_robots == 0 {
        return Err(Error::Dimension("at least one robot is required".into()));
    }
    if target_means.len() % 2 != 0 {
        return Err(Error::Dimension("target mean length is odd".into()));
    }
    Ok((num_robots, target_means.len() / 2))
}

/// `H^T R^-1 H` assembled block by block without forming `H`.
pub fn measurement_information(
    robot_positions: &[Vector2<f64>],
    target_means: &DVector<f64>,
    sensors: &SensorParams,
) -> Result<DMatrix<f64>> {
    let n = target_means.len() / 2;
    let mut info = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        let z = Vector2::new(target_means[2 * j], target_means[2 * j + 1]);
        let mut block = Matrix2::zeros();
        for x in robot_positions {
            let hij = target_jacobian(x, &z)?;
            let (info_d, info_theta) = sensors.information((z - x).norm());
            let w = Matrix2::new(info_d, 0.0, 0.0, info_theta);
            block += hij.transpose() * w * hij;
        }
        info.view_mut((2 * j, 2 * j), (2, 2)).copy_from(&block);
    }
    Ok(info)
}

/// EKF prediction `z' = A z`, `P' = A P A^T + Q`.
pub fn ekf_predict(belief: &TargetBelief, model: &TargetModel) -> Result<TargetBelief> {
    let n = belief.mean.len();
    if model.a.shape() != (n, n) || model.q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "target model is {:?}/{:?}, belief has dimension {n}",
            model.a.shape(),
            model.q.shape()
        )));
    }
    let mean = &model.a * &belief.mean;
    let cov = symmetrize(&model.a * &belief.cov * model.a.transpose() + &model.q);
    Ok(TargetBelief { mean, cov })
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn spd_inverse(m: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let chol = m.cholesky().ok_or(Error::Singular(what))?;
    Ok(symmetrize(chol.inverse()))
}

/// Precomputed prior information for repeated covariance updates against the
/// same predicted belief.
#[derive(Debug, Clone)]
pub struct CovarianceUpdater {
    prior_information: DMatrix<f64>,
    target_means: DVector<f64>,
    sensors: SensorParams,
}

impl CovarianceUpdater {
    pub fn new(pred: &TargetBelief, sensors: &SensorParams) -> Result<Self> {
        Ok(Self {
            prior_information: spd_inverse(pred.cov.clone(), "predicted covariance")?,
            target_means: pred.mean.clone(),
            sensors: *sensors,
        })
    }

    /// `(P^-1 + H^T R^-1 H)^-1` with `H` evaluated at `robot_positions`.
    pub fn updated_cov(&self, robot_positions: &[Vector2<f64>]) -> Result<DMatrix<f64>> {
        let info = measurement_information(robot_positions, &self.target_means, &self.sensors)?;
        spd_inverse(&self.prior_information + info, "posterior information")
    }

    pub fn trace(&self, robot_positions: &[Vector2<f64>]) -> Result<f64> {
        Ok(self.updated_cov(robot_positions)?.trace())
    }
}

/// Information-form covariance update `(P^-1 + H^T R^-1 H)^-1`.
pub fn ekf_update_cov(pred: &TargetBelief, robots: &[RobotState], sensors: &SensorParams) -> Result<DMatrix<f64>> {
    team_dims(robots.len(), &pred.mean)?;
    let positions: Vec<_> = robots.iter().map(|r| r.position).collect();
    CovarianceUpdater::new(pred, sensors)?.updated_cov(&positions)
}

/// Measurements predicted at the belief mean, in team row order.
pub fn predicted_measurements(robots: &[RobotState], target_means: &DVector<f64>) -> Result<Vec<(f64, f64)>> {
    let (_, n) = team_dims(robots.len(), target_means)?;
    let mut out = Vec::with_capacity(robots.len() * n);
    for j in 0..n {
        let z = Vector2::new(target_means[2 * j], target_means[2 * j + 1]);
        for robot in robots {
            out.push(range_bearing(robot, &z)?);
        }
    }
    Ok(out)
}

/// Full EKF update. `measurements[j * M + i]` is robot `i`'s `(range, bearing)`
/// of target `j`.
pub fn ekf_mean_update(
    pred: &TargetBelief,
    measurements: &[(f64, f64)],
    robots: &[RobotState],
    sensors: &SensorParams,
) -> Result<TargetBelief> {
    let (m, n) = team_dims(robots.len(), &pred.mean)?;
    if measurements.len() != m * n {
        return Err(Error::Dimension(format!(
            "expected {} measurements, got {}",
            m * n,
            measurements.len()
        )));
    }
    let cov = ekf_update_cov(pred, robots, sensors)?;
    let (h, r_inv) = team_matrices(robots, &pred.mean, sensors)?;
    let expected = predicted_measurements(robots, &pred.mean)?;
    let innovation = DVector::from_iterator(
        2 * m * n,
        measurements
            .iter()
            .zip(&expected)
            .flat_map(|(y, y_hat)| [y.0 - y_hat.0, wrap_angle(y.1 - y_hat.1)]),
    );
    // information-form gain K = P+ H^T R^-1
    let gain = &cov * h.transpose() * r_inv;
    let mean = &pred.mean + gain * innovation;
    Ok(TargetBelief { mean, cov })
}

/// Trace of the covariance after one imagined update with robots at
/// `candidate_positions`.
pub fn predicted_trace(candidate_positions: &[Vector2<f64>], pred: &TargetBelief, sensors: &SensorParams) -> Result<f64> {
    CovarianceUpdater::new(pred, sensors)?.trace(candidate_positions)
}
