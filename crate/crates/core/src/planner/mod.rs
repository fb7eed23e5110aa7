//! One-step risk-constrained planning.
//!
//! Each step chooses the stacked controls `u` of all robots to minimize
//!
//! ```text
//! w1 * Tr(P_{t+1}(x_{t+1})) + w2 * sum_i |u_i|
//! ```
//!
//! subject to `x_{t+1} = Phi x_t + Lambda u`, `|u_i| <= u_max`, and the
//! deterministic sensing and jamming residuals being nonnegative at every
//! robot's next position. When no feasible control exists from the current
//! state, [`escape_controls`] pushes offending robots straight away from the
//! danger source.

pub mod solver;

use nalgebra::{DMatrix, DVector, Vector2};

use crate::chance::{self, CommZone, RiskParams, SensingZone};
use crate::error::{Error, Result};
use crate::estimation::{CovarianceUpdater, SensorParams, TargetBelief};
use solver::{Program, SolverOptions};

/// Robots closer than this to a target mean are nudged before the trace is
/// evaluated.
const COINCIDENCE_NUDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    /// 2M x 2M state transition.
    pub phi: DMatrix<f64>,
    /// 2M x 2M control input matrix.
    pub lambda: DMatrix<f64>,
    pub u_max: f64,
    pub dt: f64,
}

impl DynamicsModel {
    /// `Phi = I`, `Lambda = dt I`.
    pub fn single_integrator(num_robots: usize, dt: f64, u_max: f64) -> Result<Self> {
        let n = 2 * num_robots;
        Self::new(DMatrix::identity(n, n), DMatrix::identity(n, n) * dt, u_max, dt)
    }

    pub fn new(phi: DMatrix<f64>, lambda: DMatrix<f64>, u_max: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(u_max > 0.0) {
            return Err(Error::Domain(format!("dt and u_max must be positive, got {dt} and {u_max}")));
        }
        let n = phi.nrows();
        if n % 2 != 0 || phi.shape() != (n, n) || lambda.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "Phi {:?} and Lambda {:?} must be square with even size",
                phi.shape(),
                lambda.shape()
            )));
        }
        Ok(Self { phi, lambda, u_max, dt })
    }

    pub fn num_robots(&self) -> usize {
        self.phi.nrows() / 2
    }

    /// `Phi x + Lambda u`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.phi.nrows();
        if x.len() != n || u.len() != n {
            return Err(Error::Dimension(format!(
                "state {} / control {} do not match dynamics of size {n}",
                x.len(),
                u.len()
            )));
        }
        Ok(&self.phi * x + &self.lambda * u)
    }

    /// Scales each robot's control into the disk of radius `u_max`.
    pub fn clamp_controls(&self, u: &mut DVector<f64>) {
        for i in 0..u.len() / 2 {
            let norm = (u[2 * i] * u[2 * i] + u[2 * i + 1] * u[2 * i + 1]).sqrt();
            if norm > self.u_max {
                let s = self.u_max / norm;
                u[2 * i] *= s;
                u[2 * i + 1] *= s;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerWeights {
    pub w1: f64,
    pub w2: f64,
}

impl PlannerWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        if !(w1 >= 0.0 && w2 >= 0.0 && w1 + w2 > 0.0) {
            return Err(Error::Domain(format!("weights must be nonnegative and not both zero, got {w1}, {w2}")));
        }
        Ok(Self { w1, w2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    /// Neither the warm start nor zero control is feasible.
    InfeasibleInput,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::InfeasibleInput => "infeasible_input",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub controls: DVector<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Objective at the point the solver started from.
    pub warm_start_objective: f64,
}

/// Everything the per-step program depends on besides the controls.
#[derive(Debug, Clone)]
pub struct WorldState {
    /// Current robot positions `x_t`.
    pub robot_positions: Vec<Vector2<f64>>,
    /// EKF-predicted target belief for `t + 1`.
    pub predicted: TargetBelief,
    pub sensors: SensorParams,
    pub sensing_zones: Vec<SensingZone>,
    pub comm_zones: Vec<CommZone>,
    /// Teammates farther than this do not count toward `c*`.
    pub comm_range: f64,
}

impl WorldState {
    fn stacked_positions(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.robot_positions.len(),
            self.robot_positions.iter().flat_map(|p| [p.x, p.y]),
        )
    }
}

fn unstack(x: &DVector<f64>) -> Vec<Vector2<f64>> {
    x.as_slice().chunks_exact(2).map(|c| Vector2::new(c[0], c[1])).collect()
}

/// Next positions `Phi x_t + Lambda u`, one per robot.
pub fn next_positions(u: &DVector<f64>, world: &WorldState, dynamics: &DynamicsModel) -> Result<Vec<Vector2<f64>>> {
    Ok(unstack(&dynamics.step(&world.stacked_positions(), u)?))
}

/// Positions of the robots within `comm_range` of robot `i`.
pub fn neighbors(positions: &[Vector2<f64>], i: usize, comm_range: f64) -> Vec<Vector2<f64>> {
    positions
        .iter()
        .enumerate()
        .filter(|&(k, p)| k != i && (p - positions[i]).norm() <= comm_range)
        .map(|(_, p)| *p)
        .collect()
}

/// Sensing residuals (robot-major) followed by jamming residuals
/// (robot-major) at the given positions.
pub fn residuals_at(positions: &[Vector2<f64>], world: &WorldState, risk: &RiskParams) -> Result<Vec<f64>> {
    residuals_with(positions, world, risk, |r, _| r)
}

fn residuals_with(
    positions: &[Vector2<f64>],
    world: &WorldState,
    risk: &RiskParams,
    on_degenerate: impl Fn(Result<f64>, f64) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(positions.len() * (world.sensing_zones.len() + world.comm_zones.len()));
    for x in positions {
        for zone in &world.sensing_zones {
            let r = chance::sensing_residual(x, zone, risk.eps1);
            out.push(on_degenerate(r, degenerate_limit(&zone.source.cov, zone.clearance, risk.eps1)?)?);
        }
    }
    for (i, x) in positions.iter().enumerate() {
        let c_star = chance::c_star(x, &neighbors(positions, i, world.comm_range));
        for zone in &world.comm_zones {
            let standoff = risk.delta2 * c_star;
            let r = chance::comm_residual(x, zone, c_star, risk.delta2, risk.eps2);
            out.push(on_degenerate(r, degenerate_limit(&zone.source.cov, standoff, risk.eps2)?)?);
        }
    }
    Ok(out)
}

/// Infimum of the residual as the robot approaches the source mean: the
/// distance term vanishes and the direction picks the widest spread.
fn degenerate_limit(cov: &nalgebra::Matrix2<f64>, standoff: f64, delta: f64) -> Result<f64> {
    let widest = nalgebra::SymmetricEigen::new(*cov).eigenvalues.max().max(0.0);
    Ok(-standoff - chance::erf_inv(1.0 - 2.0 * delta)? * (2.0 * widest).sqrt())
}

/// Residuals of every (robot, zone) pair at the post-dynamics positions.
/// Nonnegative everywhere exactly when `u` is feasible.
pub fn constraint_residuals(
    u: &DVector<f64>,
    world: &WorldState,
    dynamics: &DynamicsModel,
    risk: &RiskParams,
) -> Result<Vec<f64>> {
    residuals_at(&next_positions(u, world, dynamics)?, world, risk)
}

/// Per-step objective `w1 * trace + w2 * sum |u_i|`.
pub fn step_objective(
    u: &DVector<f64>,
    world: &WorldState,
    dynamics: &DynamicsModel,
    weights: &PlannerWeights,
) -> Result<f64> {
    let trace = if weights.w1 > 0.0 && world.predicted.num_targets() > 0 {
        let updater = CovarianceUpdater::new(&world.predicted, &world.sensors)?;
        let positions = nudge_off_targets(next_positions(u, world, dynamics)?, &world.predicted);
        updater.trace(&positions)?
    } else {
        0.0
    };
    Ok(weights.w1 * trace + weights.w2 * control_effort(u))
}

fn control_effort(u: &DVector<f64>) -> f64 {
    u.as_slice().chunks_exact(2).map(|c| c[0].hypot(c[1])).sum()
}

fn nudge_off_targets(mut positions: Vec<Vector2<f64>>, belief: &TargetBelief) -> Vec<Vector2<f64>> {
    for x in &mut positions {
        for j in 0..belief.num_targets() {
            if *x == belief.target_mean(j) {
                x.x += COINCIDENCE_NUDGE;
            }
        }
    }
    positions
}

/// The per-step program in the form the solver consumes.
struct StepProgram<'a> {
    world: &'a WorldState,
    dynamics: &'a DynamicsModel,
    risk: &'a RiskParams,
    weights: PlannerWeights,
    updater: Option<CovarianceUpdater>,
    x_t: DVector<f64>,
}

impl<'a> StepProgram<'a> {
    fn new(
        world: &'a WorldState,
        weights: &PlannerWeights,
        dynamics: &'a DynamicsModel,
        risk: &'a RiskParams,
    ) -> Result<Self> {
        let updater = if weights.w1 > 0.0 && world.predicted.num_targets() > 0 {
            Some(CovarianceUpdater::new(&world.predicted, &world.sensors)?)
        } else {
            None
        };
        Ok(Self {
            world,
            dynamics,
            risk,
            weights: *weights,
            updater,
            x_t: world.stacked_positions(),
        })
    }

    fn positions(&self, u: &DVector<f64>) -> Vec<Vector2<f64>> {
        unstack(&(&self.dynamics.phi * &self.x_t + &self.dynamics.lambda * u))
    }

    /// Residuals with a robot sitting on a source mean replaced by the
    /// limiting value, so the search never sees an error.
    fn search_residuals(&self, u: &DVector<f64>) -> Vec<f64> {
        residuals_with(&self.positions(u), self.world, self.risk, |r, limit| match r {
            Err(Error::DegenerateDirection(_)) => Ok(limit),
            other => other,
        })
        .expect("risk levels are validated before solving")
    }
}

impl Program for StepProgram<'_> {
    fn smooth_objective(&self, u: &DVector<f64>) -> f64 {
        match &self.updater {
            Some(updater) => updater
                .trace(&nudge_off_targets(self.positions(u), &self.world.predicted))
                .map_or(f64::INFINITY, |t| self.weights.w1 * t),
            None => 0.0,
        }
    }

    fn nonsmooth_objective(&self, u: &DVector<f64>) -> f64 {
        self.weights.w2 * control_effort(u)
    }

    fn constraints(&self, u: &DVector<f64>) -> Vec<f64> {
        self.search_residuals(u)
    }

    /// Per-robot shrinkage toward zero, then the speed limit.
    fn prox(&self, u: &mut DVector<f64>, step: f64) {
        let shrink = step * self.weights.w2;
        for c in u.as_mut_slice().chunks_exact_mut(2) {
            let norm = c[0].hypot(c[1]);
            let scale = if norm > shrink { 1.0 - shrink / norm } else { 0.0 };
            c[0] *= scale;
            c[1] *= scale;
        }
        self.dynamics.clamp_controls(u);
    }
}

/// Solves the per-step program from `warm_start`, falling back to zero
/// control when the warm start is infeasible.
///
/// The returned control never has a higher objective than the point the
/// solver started from: if the local search ends somewhere worse, the best
/// feasible point seen is returned instead.
pub fn solve_step(
    world: &WorldState,
    weights: &PlannerWeights,
    dynamics: &DynamicsModel,
    risk: &RiskParams,
    warm_start: Option<&DVector<f64>>,
    options: &SolverOptions,
) -> Result<SolveReport> {
    let m = world.robot_positions.len();
    if dynamics.num_robots() != m {
        return Err(Error::Dimension(format!(
            "dynamics sized for {} robots, world has {m}",
            dynamics.num_robots()
        )));
    }
    let program = StepProgram::new(world, weights, dynamics, risk)?;
    let tol = options.outer_tol;

    let zero = DVector::zeros(2 * m);
    let mut start = None;
    for candidate in warm_start.into_iter().chain(std::iter::once(&zero)) {
        let mut u = candidate.clone();
        dynamics.clamp_controls(&mut u);
        if solver::max_violation(&program.constraints(&u)) <= tol {
            start = Some(u);
            break;
        }
    }
    let Some(start) = start else {
        let c = program.constraints(&zero);
        let objective = program.objective(&zero);
        return Ok(SolveReport {
            controls: zero,
            objective,
            max_violation: solver::max_violation(&c),
            iterations: 0,
            status: SolveStatus::InfeasibleInput,
            warm_start_objective: objective,
        });
    };
    let start_objective = program.objective(&start);

    let outcome = solver::minimize(&program, &start, options);
    let (controls, objective, max_violation) =
        if outcome.max_violation <= tol && outcome.objective <= start_objective && outcome.objective.is_finite() {
            (outcome.x, outcome.objective, outcome.max_violation)
        } else {
            let violation = solver::max_violation(&program.constraints(&start));
            (start, start_objective, violation)
        };
    let status = if outcome.converged {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIter
    };
    Ok(SolveReport {
        controls,
        objective,
        max_violation,
        iterations: outcome.outer_iterations,
        status,
        warm_start_objective: start_objective,
    })
}

/// A danger source as seen by escape control: its mean and the robot's
/// current residual against it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeZone {
    pub mean: Vector2<f64>,
    pub residual: f64,
}

/// Full-speed control pointing from the mean of the most violated zone
/// toward the robot; `+x` when the robot sits exactly on that mean.
pub fn escape_control(robot_pos: &Vector2<f64>, zones: &[EscapeZone], u_max: f64) -> Vector2<f64> {
    let Some(worst) = zones.iter().min_by(|a, b| a.residual.total_cmp(&b.residual)) else {
        return Vector2::zeros();
    };
    let away = robot_pos - worst.mean;
    let norm = away.norm();
    if norm == 0.0 {
        Vector2::new(u_max, 0.0)
    } else {
        away * (u_max / norm)
    }
}

/// Escape controls for the whole team at its current positions: robots with
/// a violated (or degenerate) residual escape, the rest hold still.
pub fn escape_controls(world: &WorldState, dynamics: &DynamicsModel, risk: &RiskParams, tol: f64) -> Result<DVector<f64>> {
    let positions = &world.robot_positions;
    let mut u = DVector::zeros(2 * positions.len());
    for (i, x) in positions.iter().enumerate() {
        let c_star = chance::c_star(x, &neighbors(positions, i, world.comm_range));
        let mut zones = Vec::new();
        for zone in &world.sensing_zones {
            let residual = match chance::sensing_residual(x, zone, risk.eps1) {
                Err(Error::DegenerateDirection(_)) => f64::NEG_INFINITY,
                r => r?,
            };
            zones.push(EscapeZone {
                mean: zone.source.mean,
                residual,
            });
        }
        for zone in &world.comm_zones {
            let residual = match chance::comm_residual(x, zone, c_star, risk.delta2, risk.eps2) {
                Err(Error::DegenerateDirection(_)) => f64::NEG_INFINITY,
                r => r?,
            };
            zones.push(EscapeZone {
                mean: zone.source.mean,
                residual,
            });
        }
        zones.retain(|z| z.residual < -tol);
        let ui = escape_control(x, &zones, dynamics.u_max);
        u[2 * i] = ui.x;
        u[2 * i + 1] = ui.y;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chance::GaussianBelief2D;

    fn v(x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(x, y)
    }

    fn world(robots: Vec<Vector2<f64>>, targets: &[Vector2<f64>]) -> WorldState {
        let n = targets.len();
        WorldState {
            robot_positions: robots,
            predicted: TargetBelief::new(
                DVector::from_iterator(2 * n, targets.iter().flat_map(|t| [t.x, t.y])),
                DMatrix::identity(2 * n, 2 * n) * 0.5,
            )
            .unwrap(),
            sensors: SensorParams::default(),
            sensing_zones: vec![],
            comm_zones: vec![],
            comm_range: 10.0,
        }
    }

    fn risk() -> RiskParams {
        RiskParams::new(0.2, 0.1, 1.0).unwrap()
    }

    #[test]
    fn objective_examples() {
        let w = world(vec![v(0.0, 0.0), v(3.0, 1.0)], &[v(5.0, 5.0)]);
        let dynamics = DynamicsModel::single_integrator(2, 0.1, 2.0).unwrap();
        let u0 = DVector::zeros(4);
        let weights = PlannerWeights::new(2.0, 0.37).unwrap();
        let trace = crate::estimation::predicted_trace(&w.robot_positions, &w.predicted, &w.sensors).unwrap();
        assert!((step_objective(&u0, &w, &dynamics, &weights).unwrap() - 2.0 * trace).abs() < 1e-14);

        let only_effort = PlannerWeights::new(0.0, 0.5).unwrap();
        let u = DVector::from_vec(vec![0.3, 0.4, -1.0, 0.0]);
        assert!((step_objective(&u, &w, &dynamics, &only_effort).unwrap() - 0.75).abs() < 1e-14);
        assert_eq!(step_objective(&u0, &w, &dynamics, &only_effort).unwrap(), 0.0);
    }

    #[test]
    fn residual_examples() {
        let dynamics = DynamicsModel::single_integrator(1, 0.1, 2.0).unwrap();
        let mut w = world(vec![v(0.0, 0.0)], &[v(5.0, 5.0)]);
        let u = DVector::zeros(2);
        assert!(constraint_residuals(&u, &w, &dynamics, &risk()).unwrap().is_empty());

        w.sensing_zones
            .push(SensingZone::new(GaussianBelief2D::isotropic(v(10.0, 0.0), 0.0).unwrap(), 2.0).unwrap());
        assert_eq!(constraint_residuals(&u, &w, &dynamics, &risk()).unwrap(), vec![8.0]);
    }

    #[test]
    fn comm_residual_uses_next_step_teammates() {
        let dynamics = DynamicsModel::single_integrator(2, 0.1, 2.0).unwrap();
        let mut w = world(vec![v(0.0, 0.0), v(3.0, 0.0)], &[]);
        w.comm_zones.push(CommZone {
            source: GaussianBelief2D::isotropic(v(0.0, 8.0), 0.0).unwrap(),
        });
        // robot 1 moves 0.1 further away, so c* = 3.1 for both
        let u = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        let r = constraint_residuals(&u, &w, &dynamics, &risk()).unwrap();
        assert!((r[0] - (8.0 - 3.1)).abs() < 1e-12);
        assert!((r[1] - (v(3.1, 0.0) - v(0.0, 8.0)).norm() + 3.1).abs() < 1e-12);
    }

    #[test]
    fn degenerate_position_is_reported() {
        let dynamics = DynamicsModel::single_integrator(1, 0.1, 2.0).unwrap();
        let mut w = world(vec![v(1.0, 1.0)], &[]);
        w.sensing_zones
            .push(SensingZone::new(GaussianBelief2D::isotropic(v(1.0, 1.0), 0.1).unwrap(), 2.0).unwrap());
        assert!(matches!(
            constraint_residuals(&DVector::zeros(2), &w, &dynamics, &risk()),
            Err(Error::DegenerateDirection(_))
        ));
    }

    #[test]
    fn escape_examples() {
        let zone = |m| EscapeZone {
            mean: m,
            residual: -1.0,
        };
        assert_eq!(escape_control(&v(1.0, 0.0), &[zone(v(0.0, 0.0))], 2.0), v(2.0, 0.0));
        assert_eq!(escape_control(&v(0.0, 1.0), &[zone(v(0.0, 0.0))], 2.0), v(0.0, 2.0));
        assert_eq!(escape_control(&v(0.0, 0.0), &[zone(v(0.0, 0.0))], 2.0), v(2.0, 0.0));
        let worse = EscapeZone {
            mean: v(5.0, 0.0),
            residual: -3.0,
        };
        assert_eq!(escape_control(&v(4.0, 0.0), &[zone(v(0.0, 0.0)), worse], 1.0), v(-1.0, 0.0));
    }

    #[test]
    fn solve_moves_toward_target() {
        let w = world(vec![v(0.0, 0.0)], &[v(10.0, 0.0)]);
        let dynamics = DynamicsModel::single_integrator(1, 0.1, 2.0).unwrap();
        let weights = PlannerWeights::new(2.0, 1e-4).unwrap();
        let report = solve_step(&w, &weights, &dynamics, &risk(), None, &SolverOptions::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Converged, "{report:?}");
        assert!(report.controls[0] > 0.0);
        assert!(report.controls.norm() <= 2.0 + 1e-9);
        assert!(report.objective < report.warm_start_objective);
    }

    #[test]
    fn solve_respects_zone_between_robot_and_target() {
        let mut w = world(vec![v(0.0, 0.0)], &[v(6.0, 0.0)]);
        w.sensing_zones
            .push(SensingZone::new(GaussianBelief2D::isotropic(v(2.4, 0.0), 0.05).unwrap(), 2.0).unwrap());
        let dynamics = DynamicsModel::single_integrator(1, 0.1, 2.0).unwrap();
        let weights = PlannerWeights::new(2.0, 0.01).unwrap();
        let r = risk();
        let report = solve_step(&w, &weights, &dynamics, &r, None, &SolverOptions::default()).unwrap();
        assert_ne!(report.status, SolveStatus::InfeasibleInput);
        let g = constraint_residuals(&report.controls, &w, &dynamics, &r).unwrap();
        assert!(g[0] >= -1e-6, "residual {}", g[0]);
        assert!(report.objective <= report.warm_start_objective + 1e-12);
    }

    #[test]
    fn infeasible_start_is_reported() {
        let mut w = world(vec![v(0.0, 0.0)], &[v(6.0, 0.0)]);
        w.sensing_zones
            .push(SensingZone::new(GaussianBelief2D::isotropic(v(0.5, 0.0), 0.05).unwrap(), 2.0).unwrap());
        let dynamics = DynamicsModel::single_integrator(1, 0.1, 2.0).unwrap();
        let weights = PlannerWeights::new(2.0, 0.01).unwrap();
        let report = solve_step(&w, &weights, &dynamics, &risk(), None, &SolverOptions::default()).unwrap();
        assert_eq!(report.status, SolveStatus::InfeasibleInput);
        let u = escape_controls(&w, &dynamics, &risk(), 1e-6).unwrap();
        assert!((u - DVector::from_vec(vec![-2.0, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn solve_is_deterministic() {
        let mut w = world(vec![v(0.0, 0.0), v(1.0, -3.0)], &[v(6.0, 0.0), v(2.0, 4.0)]);
        w.sensing_zones
            .push(SensingZone::new(GaussianBelief2D::isotropic(v(3.0, 0.0), 0.05).unwrap(), 2.0).unwrap());
        let dynamics = DynamicsModel::single_integrator(2, 0.1, 2.0).unwrap();
        let weights = PlannerWeights::new(2.0, 0.01).unwrap();
        let a = solve_step(&w, &weights, &dynamics, &risk(), None, &SolverOptions::default()).unwrap();
        let b = solve_step(&w, &weights, &dynamics, &risk(), None, &SolverOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
