#![allow(dead_code)]

use std::path::PathBuf;

use dztrack::io::{parse_scenario, Scenario};
use dztrack::sim::RunLog;
use nalgebra::Vector2;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.cfg"))
}

pub fn load(name: &str) -> Scenario {
    let text = std::fs::read_to_string(scenario_path(name)).unwrap();
    parse_scenario(&text).unwrap()
}

pub fn variant(name: &str, variant: &str) -> Scenario {
    load(name).with_variant(variant).unwrap()
}

/// Closest approach of any robot to `point` over the run.
pub fn min_distance_to(log: &RunLog, point: Vector2<f64>) -> f64 {
    log.records
        .iter()
        .flat_map(|r| r.robot_positions.iter().map(move |p| (p - point).norm()))
        .fold(f64::INFINITY, f64::min)
}

/// `eps` plus three binomial standard errors at `n` samples.
pub fn bound(eps: f64, n: usize) -> f64 {
    eps + 3.0 * (eps * (1.0 - eps) / n as f64).sqrt()
}
