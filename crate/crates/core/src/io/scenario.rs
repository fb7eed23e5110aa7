//! Scenario configuration files.
//!
//! Scenarios are TOML documents. Every optional key has a documented default;
//! the defaults actually applied are reported by [`parse_scenario_with_defaults`]
//! so run metadata can echo them.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::chance::{CommZone, GaussianBelief2D, RiskParams, SensingZone};
use crate::error::{Error, Result};
use crate::estimation::SensorParams;
use crate::planner::PlannerWeights;
use crate::sim::{fnv1a, TargetMotion};

pub const FORMAT_VERSION: u32 = 1;

pub const DEFAULT_NAME: &str = "scenario";
pub const DEFAULT_MASTER_SEED: u64 = 0;
pub const DEFAULT_COMM_RANGE: f64 = 10.0;
pub const DEFAULT_MC_SAMPLES: usize = 1000;
pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_U_MAX: f64 = 2.0;
pub const DEFAULT_P0: f64 = 1.0;
pub const DEFAULT_Q: f64 = 1e-3;
/// Placeholder risk level for a zone kind the scenario does not contain.
pub const UNUSED_RISK_LEVEL: f64 = 0.1;
pub const UNUSED_DELTA2: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSpec {
    pub motion: TargetMotion,
    /// EKF initial mean for this target.
    pub initial_estimate: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfConfig {
    /// Initial covariance is `p0 * I`.
    pub p0: f64,
    /// Process noise `Q = q * I` per step.
    pub q: f64,
}

/// Per-variant overrides applied on top of the base scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    /// Replaces every zone's source covariance by `scale * I`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_cov_scale: Option<f64>,
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub master_seed: u64,
    pub robots: Vec<Vector2<f64>>,
    pub targets: Vec<TargetSpec>,
    pub sensing_zones: Vec<SensingZone>,
    pub comm_zones: Vec<CommZone>,
    pub weights: PlannerWeights,
    pub risk: RiskParams,
    pub sensors: SensorParams,
    pub dt: f64,
    pub steps: usize,
    pub u_max: f64,
    pub ekf: EkfConfig,
    pub comm_range: f64,
    pub mc_samples: usize,
    pub variants: Vec<Variant>,
}

// ---- file schema ----

type Point = [f64; 2];
type Cov = [[f64; 2]; 2];

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    format_version: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comm_range: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dynamics: Option<DynamicsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<WeightsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    risk: Option<RiskSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sensors: Option<SensorsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ekf: Option<EkfSection>,
    #[serde(default)]
    robots: Vec<RobotSection>,
    #[serde(default)]
    targets: Vec<TargetSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    sensing_zones: Vec<ZoneSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    comm_zones: Vec<ZoneSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    variants: Vec<Variant>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsSection {
    dt: Option<f64>,
    steps: Option<usize>,
    u_max: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsSection {
    w1: Option<f64>,
    w2: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RiskSection {
    eps1: Option<f64>,
    eps2: Option<f64>,
    delta2: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorsSection {
    a_d: Option<f64>,
    lambda_d: Option<f64>,
    a_theta: Option<f64>,
    lambda_theta: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EkfSection {
    p0: Option<f64>,
    q: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotSection {
    position: Point,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "motion", rename_all = "snake_case", deny_unknown_fields)]
enum TargetSection {
    ConstantVelocity {
        start: Point,
        velocity: Point,
        #[serde(skip_serializing_if = "Option::is_none")]
        estimate: Option<Point>,
    },
    Circular {
        center: Point,
        radius: f64,
        angular_rate: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        phase: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        estimate: Option<Point>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZoneSection {
    mean: Point,
    #[serde(skip_serializing_if = "Option::is_none")]
    cov: Option<Cov>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cov_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clearance: Option<f64>,
}

// ---- resolution ----

/// Records defaults as they are applied.
#[derive(Default)]
struct Resolver {
    applied: Vec<String>,
}

impl Resolver {
    fn or_default<T: std::fmt::Debug + Copy>(&mut self, value: Option<T>, path: &str, default: T) -> T {
        value.unwrap_or_else(|| {
            self.applied.push(format!("{path} = {default:?}"));
            default
        })
    }
}

fn required<T>(value: Option<T>, path: &str) -> Result<T> {
    value.ok_or_else(|| Error::validation(path, "required field is missing"))
}

fn vec2(p: Point) -> Vector2<f64> {
    Vector2::new(p[0], p[1])
}

fn zone_belief(zone: &ZoneSection, path: &str) -> Result<GaussianBelief2D> {
    let cov = match (zone.cov, zone.cov_scale) {
        (Some(c), None) => Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]),
        (None, Some(s)) => {
            if !(s >= 0.0) {
                return Err(Error::validation(format!("{path}.cov_scale"), "must be nonnegative"));
            }
            Matrix2::identity() * s
        }
        (Some(_), Some(_)) => {
            return Err(Error::validation(path, "give either `cov` or `cov_scale`, not both"));
        }
        (None, None) => return Err(Error::validation(format!("{path}.cov"), "required field is missing")),
    };
    GaussianBelief2D::new(vec2(zone.mean), cov).map_err(|e| Error::validation(format!("{path}.cov"), e.to_string()))
}

fn check(cond: bool, path: &str, message: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::validation(path, message))
    }
}

/// Parses and validates a scenario document, returning the defaults applied.
pub fn parse_scenario_with_defaults(text: &str) -> Result<(Scenario, Vec<String>)> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut r = Resolver::default();

    let version = r.or_default(file.format_version, "format_version", FORMAT_VERSION);
    check(version == FORMAT_VERSION, "format_version", "unsupported format version")?;

    let name = match file.name {
        Some(n) => n,
        None => {
            r.applied.push(format!("name = {DEFAULT_NAME:?}"));
            DEFAULT_NAME.to_string()
        }
    };
    let master_seed = r.or_default(file.master_seed, "master_seed", DEFAULT_MASTER_SEED);
    let comm_range = r.or_default(file.comm_range, "comm_range", DEFAULT_COMM_RANGE);
    let mc_samples = r.or_default(file.mc_samples, "mc_samples", DEFAULT_MC_SAMPLES);

    let dynamics = file.dynamics.unwrap_or_default();
    let dt = r.or_default(dynamics.dt, "dynamics.dt", DEFAULT_DT);
    let steps = r.or_default(dynamics.steps, "dynamics.steps", DEFAULT_STEPS);
    let u_max = r.or_default(dynamics.u_max, "dynamics.u_max", DEFAULT_U_MAX);

    let weights = file.weights.unwrap_or_default();
    let w1 = required(weights.w1, "weights.w1")?;
    let w2 = required(weights.w2, "weights.w2")?;
    let weights = PlannerWeights::new(w1, w2).map_err(|e| Error::validation("weights", e.to_string()))?;

    let risk = file.risk.unwrap_or_default();
    let eps1 = if file.sensing_zones.is_empty() {
        r.or_default(risk.eps1, "risk.eps1", UNUSED_RISK_LEVEL)
    } else {
        required(risk.eps1, "risk.eps1")?
    };
    let (eps2, delta2) = if file.comm_zones.is_empty() {
        (
            r.or_default(risk.eps2, "risk.eps2", UNUSED_RISK_LEVEL),
            r.or_default(risk.delta2, "risk.delta2", UNUSED_DELTA2),
        )
    } else {
        (required(risk.eps2, "risk.eps2")?, required(risk.delta2, "risk.delta2")?)
    };
    let risk = resolve_risk(eps1, eps2, delta2)?;

    let sensors = file.sensors.unwrap_or_default();
    let defaults = SensorParams::default();
    let sensors = SensorParams {
        a_d: r.or_default(sensors.a_d, "sensors.a_d", defaults.a_d),
        lambda_d: r.or_default(sensors.lambda_d, "sensors.lambda_d", defaults.lambda_d),
        a_theta: r.or_default(sensors.a_theta, "sensors.a_theta", defaults.a_theta),
        lambda_theta: r.or_default(sensors.lambda_theta, "sensors.lambda_theta", defaults.lambda_theta),
    };

    let ekf = file.ekf.unwrap_or_default();
    let ekf = EkfConfig {
        p0: r.or_default(ekf.p0, "ekf.p0", DEFAULT_P0),
        q: r.or_default(ekf.q, "ekf.q", DEFAULT_Q),
    };

    let robots = file.robots.iter().map(|s| vec2(s.position)).collect();

    let mut targets = Vec::with_capacity(file.targets.len());
    for (j, t) in file.targets.iter().enumerate() {
        let (motion, estimate) = match *t {
            TargetSection::ConstantVelocity { start, velocity, estimate } => (
                TargetMotion::ConstantVelocity {
                    start: vec2(start),
                    velocity: vec2(velocity),
                },
                estimate,
            ),
            TargetSection::Circular {
                center,
                radius,
                angular_rate,
                phase,
                estimate,
            } => (
                TargetMotion::Circular {
                    center: vec2(center),
                    radius,
                    angular_rate,
                    phase: r.or_default(phase, &format!("targets[{j}].phase"), 0.0),
                },
                estimate,
            ),
        };
        let initial_estimate = match estimate {
            Some(p) => vec2(p),
            None => {
                let p = crate::sim::target_step(&motion, 0, dt);
                r.applied.push(format!("targets[{j}].estimate = [{}, {}]", p.x, p.y));
                p
            }
        };
        targets.push(TargetSpec {
            motion,
            initial_estimate,
        });
    }

    let mut sensing_zones = Vec::with_capacity(file.sensing_zones.len());
    for (l, z) in file.sensing_zones.iter().enumerate() {
        let path = format!("sensing_zones[{l}]");
        let source = zone_belief(z, &path)?;
        let clearance = required(z.clearance, &format!("{path}.clearance"))?;
        let zone = SensingZone::new(source, clearance)
            .map_err(|e| Error::validation(format!("{path}.clearance"), e.to_string()))?;
        sensing_zones.push(zone);
    }
    let mut comm_zones = Vec::with_capacity(file.comm_zones.len());
    for (k, z) in file.comm_zones.iter().enumerate() {
        let path = format!("comm_zones[{k}]");
        check(z.clearance.is_none(), &format!("{path}.clearance"), "communication zones have no clearance")?;
        comm_zones.push(CommZone {
            source: zone_belief(z, &path)?,
        });
    }

    let scenario = Scenario {
        name,
        master_seed,
        robots,
        targets,
        sensing_zones,
        comm_zones,
        weights,
        risk,
        sensors,
        dt,
        steps,
        u_max,
        ekf,
        comm_range,
        mc_samples,
        variants: file.variants,
    };
    scenario.validate()?;
    for v in &scenario.variants {
        scenario.with_variant(&v.name)?;
    }
    Ok((scenario, r.applied))
}

fn resolve_risk(eps1: f64, eps2: f64, delta2: f64) -> Result<RiskParams> {
    check(eps1 > 0.0 && eps1 < 0.5, "risk.eps1", "must lie in (0, 0.5)")?;
    check(eps2 > 0.0 && eps2 < 0.5, "risk.eps2", "must lie in (0, 0.5)")?;
    check(delta2 > 0.0 && delta2.is_finite(), "risk.delta2", "must be positive")?;
    RiskParams::new(eps1, eps2, delta2)
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_scenario_with_defaults(text).map(|(s, _)| s)
}

impl Scenario {
    /// Checks every invariant a run relies on.
    pub fn validate(&self) -> Result<()> {
        check(!self.robots.is_empty(), "robots", "at least one robot is required")?;
        check(self.dt > 0.0 && self.dt.is_finite(), "dynamics.dt", "must be positive")?;
        check(self.steps >= 1, "dynamics.steps", "must be at least 1")?;
        check(self.u_max > 0.0 && self.u_max.is_finite(), "dynamics.u_max", "must be positive")?;
        check(self.comm_range > 0.0, "comm_range", "must be positive")?;
        check(self.mc_samples >= 1, "mc_samples", "must be at least 1")?;
        check(self.ekf.p0 > 0.0, "ekf.p0", "must be positive")?;
        check(self.ekf.q >= 0.0, "ekf.q", "must be nonnegative")?;
        let s = &self.sensors;
        for (v, path) in [
            (s.a_d, "sensors.a_d"),
            (s.lambda_d, "sensors.lambda_d"),
            (s.a_theta, "sensors.a_theta"),
            (s.lambda_theta, "sensors.lambda_theta"),
        ] {
            check(v > 0.0 && v.is_finite(), path, "must be positive")?;
        }
        for (j, t) in self.targets.iter().enumerate() {
            if let TargetMotion::Circular { radius, .. } = t.motion {
                check(radius > 0.0, &format!("targets[{j}].radius"), "must be positive")?;
            }
        }
        resolve_risk(self.risk.eps1, self.risk.eps2, self.risk.delta2)?;
        PlannerWeights::new(self.weights.w1, self.weights.w2).map_err(|e| Error::validation("weights", e.to_string()))?;
        Ok(())
    }

    /// The scenario with the named variant's overrides applied.
    pub fn with_variant(&self, name: &str) -> Result<Scenario> {
        let variant = self
            .variants
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::validation("variants", format!("no variant named `{name}`")))?;
        let mut s = self.clone();
        s.name = format!("{}/{}", self.name, variant.name);
        s.variants.clear();
        let eps1 = variant.eps1.unwrap_or(s.risk.eps1);
        let eps2 = variant.eps2.unwrap_or(s.risk.eps2);
        let delta2 = variant.delta2.unwrap_or(s.risk.delta2);
        s.risk = resolve_risk(eps1, eps2, delta2)
            .map_err(|e| Error::validation(format!("variants.{name}"), e.to_string()))?;
        if let Some(scale) = variant.source_cov_scale {
            check(scale >= 0.0, &format!("variants.{name}.source_cov_scale"), "must be nonnegative")?;
            for z in &mut s.sensing_zones {
                z.source.cov = Matrix2::identity() * scale;
            }
            for z in &mut s.comm_zones {
                z.source.cov = Matrix2::identity() * scale;
            }
        }
        Ok(s)
    }

    /// One scenario per variant, or the scenario itself when it has none.
    pub fn expand_variants(&self) -> Result<Vec<Scenario>> {
        if self.variants.is_empty() {
            return Ok(vec![self.clone()]);
        }
        self.variants.iter().map(|v| self.with_variant(&v.name)).collect()
    }

    /// Canonical TOML with every default written out.
    pub fn to_toml(&self) -> String {
        let point = |v: &Vector2<f64>| [v.x, v.y];
        let cov = |m: &Matrix2<f64>| [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]];
        let file = ScenarioFile {
            format_version: Some(FORMAT_VERSION),
            name: Some(self.name.clone()),
            master_seed: Some(self.master_seed),
            comm_range: Some(self.comm_range),
            mc_samples: Some(self.mc_samples),
            dynamics: Some(DynamicsSection {
                dt: Some(self.dt),
                steps: Some(self.steps),
                u_max: Some(self.u_max),
            }),
            weights: Some(WeightsSection {
                w1: Some(self.weights.w1),
                w2: Some(self.weights.w2),
            }),
            risk: Some(RiskSection {
                eps1: Some(self.risk.eps1),
                eps2: Some(self.risk.eps2),
                delta2: Some(self.risk.delta2),
            }),
            sensors: Some(SensorsSection {
                a_d: Some(self.sensors.a_d),
                lambda_d: Some(self.sensors.lambda_d),
                a_theta: Some(self.sensors.a_theta),
                lambda_theta: Some(self.sensors.lambda_theta),
            }),
            ekf: Some(EkfSection {
                p0: Some(self.ekf.p0),
                q: Some(self.ekf.q),
            }),
            robots: self.robots.iter().map(|p| RobotSection { position: point(p) }).collect(),
            targets: self
                .targets
                .iter()
                .map(|t| match t.motion {
                    TargetMotion::ConstantVelocity { start, velocity } => TargetSection::ConstantVelocity {
                        start: point(&start),
                        velocity: point(&velocity),
                        estimate: Some(point(&t.initial_estimate)),
                    },
                    TargetMotion::Circular {
                        center,
                        radius,
                        angular_rate,
                        phase,
                    } => TargetSection::Circular {
                        center: point(&center),
                        radius,
                        angular_rate,
                        phase: Some(phase),
                        estimate: Some(point(&t.initial_estimate)),
                    },
                })
                .collect(),
            sensing_zones: self
                .sensing_zones
                .iter()
                .map(|z| ZoneSection {
                    mean: point(&z.source.mean),
                    cov: Some(cov(&z.source.cov)),
                    cov_scale: None,
                    clearance: Some(z.clearance),
                })
                .collect(),
            comm_zones: self
                .comm_zones
                .iter()
                .map(|z| ZoneSection {
                    mean: point(&z.source.mean),
                    cov: Some(cov(&z.source.cov)),
                    cov_scale: None,
                    clearance: None,
                })
                .collect(),
            variants: self.variants.clone(),
        };
        toml::to_string(&file).expect("scenario fields are always serializable")
    }

    /// 64-bit FNV-1a digest of [`Scenario::to_toml`], in hex.
    pub fn digest(&self) -> String {
        format!("{:016x}", fnv1a(self.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [weights]
        w1 = 2.0
        w2 = 0.01

        [[robots]]
        position = [0.0, 0.0]

        [[targets]]
        motion = "constant_velocity"
        start = [3.0, 1.0]
        velocity = [0.5, 0.0]
    "#;

    #[test]
    fn minimal_document_gets_defaults() {
        let (s, applied) = parse_scenario_with_defaults(MINIMAL).unwrap();
        assert_eq!(s.dt, DEFAULT_DT);
        assert_eq!(s.steps, DEFAULT_STEPS);
        assert_eq!(s.comm_range, DEFAULT_COMM_RANGE);
        assert_eq!(s.mc_samples, DEFAULT_MC_SAMPLES);
        assert_eq!(s.sensors, SensorParams::default());
        assert_eq!(s.ekf, EkfConfig { p0: DEFAULT_P0, q: DEFAULT_Q });
        assert_eq!(s.targets[0].initial_estimate, Vector2::new(3.0, 1.0));
        assert!(applied.iter().any(|a| a.starts_with("dynamics.dt")));
        assert!(applied.iter().any(|a| a.starts_with("targets[0].estimate")));
        assert!(!applied.iter().any(|a| a.starts_with("weights")));
    }

    #[test]
    fn missing_eps1_with_sensing_zone_names_the_field() {
        let doc = format!(
            "{MINIMAL}\n[[sensing_zones]]\nmean = [5.0, 0.0]\ncov_scale = 0.05\nclearance = 2.0\n"
        );
        match parse_scenario(&doc) {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "risk.eps1"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let doc = format!("{MINIMAL}\nbogus = 1\n");
        assert!(matches!(parse_scenario(&doc), Err(Error::Parse(_))));
        let doc = MINIMAL.replace("w2 = 0.01", "w2 = 0.01\nw3 = 1.0");
        assert!(matches!(parse_scenario(&doc), Err(Error::Parse(_))));
    }

    #[test]
    fn invariant_violations_carry_paths() {
        let cases = [
            (MINIMAL.replace("w1 = 2.0", ""), "weights.w1"),
            (MINIMAL.replace("[[robots]]\n        position = [0.0, 0.0]", ""), "robots"),
            (format!("{MINIMAL}\n[dynamics]\ndt = -1.0\n"), "dynamics.dt"),
            (format!("{MINIMAL}\n[risk]\neps1 = 0.5\n"), "risk.eps1"),
            (
                format!("{MINIMAL}\n[[comm_zones]]\nmean = [0.0, 5.0]\ncov_scale = 0.1\n[risk]\neps2 = 0.1\n"),
                "risk.delta2",
            ),
            (
                format!("{MINIMAL}\n[[sensing_zones]]\nmean = [5.0, 0.0]\ncov = [[1.0, 2.0], [2.0, 1.0]]\nclearance = 2.0\n[risk]\neps1 = 0.2\n"),
                "sensing_zones[0].cov",
            ),
        ];
        for (doc, expected) in cases {
            match parse_scenario(&doc) {
                Err(Error::Validation { path, .. }) => assert_eq!(path, expected),
                other => panic!("expected validation error at {expected}, got {other:?}"),
            }
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let doc = format!(
            "{MINIMAL}\n[[sensing_zones]]\nmean = [5.0, 0.1]\ncov = [[0.05, 0.01], [0.01, 0.03]]\nclearance = 2.0\n\
             [[comm_zones]]\nmean = [0.0, 7.0]\ncov_scale = 0.1\n\
             [[targets]]\nmotion = \"circular\"\ncenter = [1.0, 2.0]\nradius = 1.5\nangular_rate = 0.3\n\
             [risk]\neps1 = 0.2\neps2 = 0.1\ndelta2 = 0.7\n\
             [[variants]]\nname = \"tight\"\neps2 = 0.02\n"
        );
        let s = parse_scenario(&doc).unwrap();
        let again = parse_scenario(&s.to_toml()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.digest(), again.digest());
        let (_, applied) = parse_scenario_with_defaults(&s.to_toml()).unwrap();
        assert!(applied.is_empty(), "{applied:?}");
    }

    #[test]
    fn variants_override_risk_and_spread() {
        let doc = format!(
            "{MINIMAL}\n[[comm_zones]]\nmean = [0.0, 7.0]\ncov_scale = 0.1\n\
             [risk]\neps2 = 0.1\ndelta2 = 0.7\n\
             [[variants]]\nname = \"wide\"\nsource_cov_scale = 0.3\n\
             [[variants]]\nname = \"strict\"\neps2 = 0.02\n"
        );
        let s = parse_scenario(&doc).unwrap();
        let all = s.expand_variants().unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].comm_zones[0].source.cov, Matrix2::identity() * 0.3);
        assert_eq!(all[1].risk.eps2, 0.02);
        assert_eq!(all[1].name, "scenario/strict");
        assert!(s.with_variant("missing").is_err());

        let bad = doc.replace("eps2 = 0.02", "eps2 = 0.7");
        assert!(matches!(parse_scenario(&bad), Err(Error::Validation { .. })));
    }
}
