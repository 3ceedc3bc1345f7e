#![allow(dead_code)]

use comm_energy::model::scenario_from_json;
use comm_energy::solver::{solve, SolverOptions};
use comm_energy::transcription::build_program;
use comm_energy::{Scenario, Solution};

pub fn fixture(name: &str) -> Scenario {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    scenario_from_json(&text).unwrap_or_else(|e| panic!("{path}: {e}"))
}

/// `fixture` on a coarser grid.
pub fn coarse(name: &str, knots: usize) -> Scenario {
    let mut cfg = fixture(name);
    cfg.knot_count = knots;
    cfg
}

pub fn solve_cfg(cfg: &Scenario) -> Solution {
    solve(&build_program(cfg).expect("scenario builds"), &SolverOptions::default())
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

use comm_energy::transcription::{Quantity, VariableLayout};
use comm_energy::Program;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A point strictly inside the bounds of `program`, near its start.
pub fn random_point(program: &Program, rng: &mut ChaCha8Rng, margin: f64) -> Vec<f64> {
    let layout = program.layout();
    let cfg = program.scenario();
    let x0 = program.initial_point();
    (0..program.free_count())
        .map(|i| {
            let (q, _) = layout.describe(layout.slot_of_free(i));
            match q {
                Quantity::Speed(id) => {
                    let n = cfg.node(id);
                    n.v_min + (n.v_max - n.v_min) * rng.gen_range(margin..1.0 - margin)
                }
                Quantity::Power(li) => cfg.node(layout.links()[li].from).p_max * rng.gen_range(margin..1.0 - margin),
                Quantity::Position(_) => x0[i] + rng.gen_range(-500.0..500.0) * VariableLayout::<f64>::scale(q),
                Quantity::Rate(_) | Quantity::Buffer(_) => x0[i] * rng.gen_range(0.5..1.5),
            }
        })
        .collect()
}
