//! Closed-loop tracking simulation and sampled risk metrics.
//!
//! Per step: EKF predict, plan (or escape), move robots, advance targets,
//! sample noisy range/bearing measurements, EKF update, then estimate the
//! sensing-failure and jamming probabilities by sampling the danger sources.

use nalgebra::{DVector, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chance::{self, batched_tally, CommZone, GaussianSampler, SensingZone};
use crate::error::{Error, Result};
use crate::estimation::{self, RobotState, TargetBelief, TargetModel};
use crate::io::Scenario;
use crate::planner::{self, solver::SolverOptions, DynamicsModel, SolveStatus, WorldState};

/// Ground-truth target motion, evaluated in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetMotion {
    ConstantVelocity {
        start: Vector2<f64>,
        velocity: Vector2<f64>,
    },
    /// Counter-clockwise for positive `angular_rate`.
    Circular {
        center: Vector2<f64>,
        radius: f64,
        angular_rate: f64,
        phase: f64,
    },
}

/// Position of a target at time `t * dt`.
pub fn target_step(motion: &TargetMotion, t: usize, dt: f64) -> Vector2<f64> {
    let time = t as f64 * dt;
    match *motion {
        TargetMotion::ConstantVelocity { start, velocity } => start + velocity * time,
        TargetMotion::Circular {
            center,
            radius,
            angular_rate,
            phase,
        } => {
            let angle = phase + angular_rate * time;
            center + Vector2::new(angle.cos(), angle.sin()) * radius
        }
    }
}

/// `Phi x + Lambda u`.
pub fn robot_step(x: &DVector<f64>, u: &DVector<f64>, dynamics: &DynamicsModel) -> Result<DVector<f64>> {
    dynamics.step(x, u)
}

/// Average over robots of the fraction of sampled source positions that put
/// the robot within some zone's clearance.
pub fn mc_sensor_failure(robot_positions: &[Vector2<f64>], zones: &[SensingZone], n: usize, seed: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    if robot_positions.is_empty() || zones.is_empty() {
        return Ok(0.0);
    }
    let samplers = zones
        .iter()
        .map(|z| GaussianSampler::new(&z.source))
        .collect::<Result<Vec<_>>>()?;
    let hits = batched_tally(seed, n, robot_positions.len(), true, |rng, hits| {
        let sources: Vec<_> = samplers.iter().map(|s| s.sample(rng)).collect();
        for (i, x) in robot_positions.iter().enumerate() {
            let failed = sources
                .iter()
                .zip(zones)
                .any(|(s, z)| (s - x).norm() <= z.clearance);
            if failed {
                hits[i] += 1;
            }
        }
    });
    Ok(average_fraction(&hits, n))
}

/// Average over robots of the fraction of sampled jammer positions with
/// `a < delta2 * c*`, `c*` taken over teammates within `comm_range`.
pub fn mc_jamming(
    robot_positions: &[Vector2<f64>],
    zones: &[CommZone],
    delta2: f64,
    comm_range: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    if !(comm_range > 0.0) {
        return Err(Error::Domain(format!("comm_range must be positive, got {comm_range}")));
    }
    if robot_positions.is_empty() || zones.is_empty() {
        return Ok(0.0);
    }
    let reach: Vec<f64> = (0..robot_positions.len())
        .map(|i| delta2 * chance::c_star(&robot_positions[i], &planner::neighbors(robot_positions, i, comm_range)))
        .collect();
    let samplers = zones
        .iter()
        .map(|z| GaussianSampler::new(&z.source))
        .collect::<Result<Vec<_>>>()?;
    let hits = batched_tally(seed, n, robot_positions.len(), true, |rng, hits| {
        let sources: Vec<_> = samplers.iter().map(|s| s.sample(rng)).collect();
        for (i, x) in robot_positions.iter().enumerate() {
            if sources.iter().any(|s| (s - x).norm() < reach[i]) {
                hits[i] += 1;
            }
        }
    });
    Ok(average_fraction(&hits, n))
}

fn average_fraction(hits: &[u64], n: usize) -> f64 {
    hits.iter().map(|&h| h as f64 / n as f64).sum::<f64>() / hits.len() as f64
}

/// Seeds of the independent random streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub master: u64,
    pub measurement: u64,
    pub mc_sensing: u64,
    pub mc_jamming: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            measurement: derive_seed(master, "measurement"),
            mc_sensing: derive_seed(master, "mc_sensing"),
            mc_jamming: derive_seed(master, "mc_jamming"),
        }
    }
}

/// FNV-1a over `bytes`.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stream named `label`, derived from `master`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a(label.as_bytes()))
}

fn step_seed(stream: u64, t: usize) -> u64 {
    splitmix64(stream ^ splitmix64(t as u64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Step index; the record describes the state at time `t * dt`.
    pub t: usize,
    pub robot_positions: Vec<Vector2<f64>>,
    pub true_target_positions: Vec<Vector2<f64>>,
    pub estimate_mean: Vec<Vector2<f64>>,
    pub trace: f64,
    pub sensing_risk: f64,
    pub jamming_risk: f64,
    /// Smallest constraint residual at the new positions (`inf` without
    /// zones, `-inf` when a robot sits on a source mean).
    pub residual_min: f64,
    pub solver_status: SolveStatus,
    /// True when escape control replaced the planner this step.
    pub escaped: bool,
    pub controls: Vec<Vector2<f64>>,
    pub objective: f64,
    pub warm_start_objective: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub scenario_name: String,
    /// Hex digest of the resolved scenario.
    pub scenario_digest: String,
    pub seeds: Seeds,
    pub records: Vec<StepRecord>,
}

/// Runs the closed loop for `scenario.steps` steps.
pub fn run(scenario: &Scenario) -> Result<RunLog> {
    scenario.validate()?;
    let m = scenario.robots.len();
    let n = scenario.targets.len();
    let dt = scenario.dt;
    let seeds = Seeds::from_master(scenario.master_seed);
    let dynamics = DynamicsModel::single_integrator(m, dt, scenario.u_max)?;
    let model = TargetModel::near_constant_position(n, scenario.ekf.q);
    let options = SolverOptions::default();

    let mut x = DVector::from_iterator(2 * m, scenario.robots.iter().flat_map(|p| [p.x, p.y]));
    let mut belief = TargetBelief::new(
        DVector::from_iterator(2 * n, scenario.targets.iter().flat_map(|t| [t.initial_estimate.x, t.initial_estimate.y])),
        nalgebra::DMatrix::identity(2 * n, 2 * n) * scenario.ekf.p0,
    )?;
    let mut noise = ChaCha8Rng::seed_from_u64(seeds.measurement);
    let mut warm: Option<DVector<f64>> = None;
    let mut records = Vec::with_capacity(scenario.steps);

    for step in 1..=scenario.steps {
        let predicted = estimation::ekf_predict(&belief, &model)?;
        let world = WorldState {
            robot_positions: unstack(&x),
            predicted: predicted.clone(),
            sensors: scenario.sensors,
            sensing_zones: scenario.sensing_zones.clone(),
            comm_zones: scenario.comm_zones.clone(),
            comm_range: scenario.comm_range,
        };
        let report = planner::solve_step(&world, &scenario.weights, &dynamics, &scenario.risk, warm.as_ref(), &options)?;
        let escaped = report.status == SolveStatus::InfeasibleInput;
        let u = if escaped {
            warm = None;
            planner::escape_controls(&world, &dynamics, &scenario.risk, options.outer_tol)?
        } else {
            warm = Some(report.controls.clone());
            report.controls.clone()
        };

        x = robot_step(&x, &u, &dynamics)?;
        let positions = unstack(&x);
        let robots: Vec<_> = positions.iter().map(|p| RobotState::at(*p)).collect();
        let truth: Vec<_> = scenario.targets.iter().map(|t| target_step(&t.motion, step, dt)).collect();

        let mut measurements = Vec::with_capacity(m * n);
        for z in &truth {
            for robot in &robots {
                let (d, theta) = estimation::range_bearing(robot, &nudge(z, &robot.position))?;
                let (info_d, info_theta) = scenario.sensors.information(d);
                let nd: f64 = StandardNormal.sample(&mut noise);
                let nt: f64 = StandardNormal.sample(&mut noise);
                measurements.push((d + nd / info_d.sqrt(), theta + nt / info_theta.sqrt()));
            }
        }
        let estimate_robots: Vec<_> = robots
            .iter()
            .map(|r| {
                let mut p = r.position;
                for j in 0..n {
                    p = nudge(&p, &predicted.target_mean(j));
                }
                RobotState::at(p)
            })
            .collect();
        // a numerically singular update keeps the prediction for this step
        belief = match estimation::ekf_mean_update(&predicted, &measurements, &estimate_robots, &scenario.sensors) {
            Ok(b) => b,
            Err(Error::Singular(_)) => predicted,
            Err(e) => return Err(e),
        };

        let sensing_risk = mc_sensor_failure(
            &positions,
            &scenario.sensing_zones,
            scenario.mc_samples,
            step_seed(seeds.mc_sensing, step),
        )?;
        let jamming_risk = mc_jamming(
            &positions,
            &scenario.comm_zones,
            scenario.risk.delta2,
            scenario.comm_range,
            scenario.mc_samples,
            step_seed(seeds.mc_jamming, step),
        )?;
        let residual_min = match planner::residuals_at(&positions, &world, &scenario.risk) {
            Ok(r) => r.into_iter().fold(f64::INFINITY, f64::min),
            Err(Error::DegenerateDirection(_)) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };

        records.push(StepRecord {
            t: step,
            robot_positions: positions,
            true_target_positions: truth,
            estimate_mean: (0..n).map(|j| belief.target_mean(j)).collect(),
            trace: belief.trace(),
            sensing_risk,
            jamming_risk,
            residual_min,
            solver_status: report.status,
            escaped,
            controls: unstack(&u),
            objective: report.objective,
            warm_start_objective: report.warm_start_objective,
            max_violation: report.max_violation,
        });
    }

    Ok(RunLog {
        scenario_name: scenario.name.clone(),
        scenario_digest: scenario.digest(),
        seeds,
        records,
    })
}

fn unstack(x: &DVector<f64>) -> Vec<Vector2<f64>> {
    x.as_slice().chunks_exact(2).map(|c| Vector2::new(c[0], c[1])).collect()
}

// Keeps `p` off `other` so range/bearing stay defined.
fn nudge(p: &Vector2<f64>, other: &Vector2<f64>) -> Vector2<f64> {
    if p == other {
        p + Vector2::new(1e-9, 0.0)
    } else {
        *p
    }
}
