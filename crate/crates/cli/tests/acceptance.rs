//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). It exits non-zero when a
//! criterion fails that is not listed in `KNOWN_FAILURES`.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use comm_energy::analysis::{compare_policies, priority_trace, DEFAULT_ACTIVITY_FRACTION};
use comm_energy::baselines::{
    brute_force_oracle, calibrate_gain, fixed_speed_profile, max_feasible_data, pin_speeds, radio_of, solution_energy,
    water_filling,
};
use comm_energy::capacity::{constraint_residual, enumerate_constraints};
use comm_energy::model::{channel_gain, propulsion_power, scenario_from_json, DragModel, LinkGeometry};
use comm_energy::solver::{derivative_check, solve, SolveStatus, SolverOptions};
use comm_energy::transcription::{build_program, evaluate_energy, Quantity, VariableLayout};
use comm_energy::{Program, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail for a reason recorded with the project's design
/// notes; they are still evaluated and reported.
const KNOWN_FAILURES: &[&str] = &["6"];

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn fixture(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    scenario_from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn solve_cfg(cfg: &Scenario) -> comm_energy::Solution {
    solve(&build_program(cfg).expect("fixture builds"), &opts())
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn constant_speed_propulsion() -> Verdict {
    let t = Instant::now();
    let drag = DragModel::<f64>::new(9.26e-4, 2250.0);
    let v = 65.0 / 3.6;
    let direct: f64 = propulsion_power(&drag, 3.0, v, 0.0).unwrap() * 1200.0;
    let mut cfg = pin_speeds(&fixture("single_node.json"));
    cfg.nodes[0].initial_data = 0.0;
    let sol = solve_cfg(&cfg);
    let transcribed = evaluate_energy(&cfg, &sol).propulsion;
    let reference_base = 204.51e3 - 48.01e3;
    let ok = (direct - 156.07e3).abs() < 10.0
        && ((transcribed - direct) / direct).abs() < 1e-9
        && ((direct - reference_base) / reference_base).abs() < 0.01
        && within(t.elapsed(), 1.0);
    verdict(
        ok,
        format!(
            "propulsion {:.2} kJ direct, {:.2} kJ transcribed, {:.2}% from 156.50 kJ",
            direct / 1e3,
            transcribed / 1e3,
            100.0 * (direct - reference_base) / reference_base
        ),
    )
}

fn calibrated_claims() -> Verdict {
    let t = Instant::now();
    let single = fixture("single_node.json");
    let fitted = calibrate_gain(&single, 56.0 * 8e6).unwrap();
    let fit_ok = ((fitted - single.channel.antenna_gain_product) / fitted).abs() < 1e-9;
    let joint = solve_cfg(&single);
    let feasible = joint.stats.status == SolveStatus::Optimal;
    let cmp = compare_policies(&single, &opts()).unwrap();
    let two = fixture("two_node_fixed.json");
    let sol = solve_cfg(&two);
    let energy = evaluate_energy(&two, &sol);
    let (e1, e2) = (energy.nodes[0].transmission, energy.nodes[1].transmission);
    let ordered = sol.stats.status == SolveStatus::Optimal && e1 > e2;
    let ok = fit_ok && feasible && cmp.uplift >= 1.30 && ordered && within(t.elapsed(), 120.0);
    verdict(
        ok,
        format!(
            "G {fitted:.10} (fixture match {fit_ok}), 75 MB joint {:?}, uplift {:.4}, transmission {:.2} kJ > {:.2} kJ",
            joint.stats.status,
            cmp.uplift,
            e1 / 1e3,
            e2 / 1e3
        ),
    )
}

fn priority_property() -> Verdict {
    let t = Instant::now();
    let cfg = fixture("two_node_fixed.json");
    let sol = solve_cfg(&cfg);
    if sol.stats.status != SolveStatus::Optimal {
        return verdict(false, format!("solve ended {:?}", sol.stats.status));
    }
    let trace = priority_trace(&sol, &cfg, DEFAULT_ACTIVITY_FRACTION).unwrap();
    let active = trace.active_count();
    let defined = trace.priority.iter().flatten().count();
    let max = trace.max_priority().unwrap_or(f64::NAN);
    let ok = active > 0 && defined == active && trace.flagged_count() == 0 && max <= 1e-4 && within(t.elapsed(), 60.0);
    verdict(
        ok,
        format!(
            "{active} active knots, {} off segment, priority in [{:.2e}, {max:.2e}]",
            trace.flagged_count(),
            trace.min_priority().unwrap_or(f64::NAN)
        ),
    )
}

fn water_filling_equivalence() -> Verdict {
    let t = Instant::now();
    let base = pin_speeds(&fixture("single_node.json"));
    let profile = fixed_speed_profile(&base, 1);
    let radio = radio_of(&base, 1);
    let max = max_feasible_data(&profile, &radio);
    let mut worst: f64 = 0.0;
    let mut all_optimal = true;
    for frac in [0.10, 0.30, 0.55, 0.80, 0.95] {
        let mut cfg = base.clone();
        cfg.nodes[0].initial_data = frac * max;
        let sol = solve_cfg(&cfg);
        all_optimal &= sol.stats.status == SolveStatus::Optimal;
        let solver = evaluate_energy(&cfg, &sol).transmission;
        let fill = water_filling(&profile, frac * max, &radio).unwrap().energy;
        worst = worst.max(((solver - fill) / fill).abs());
    }
    let ok = all_optimal && worst < 0.005 && within(t.elapsed(), 60.0);
    verdict(ok, format!("worst relative gap {:.3e} over 10%..95% of {:.2} MB", worst, max / 8e6))
}

fn oracle_sandwich() -> Verdict {
    let t = Instant::now();
    let cfg = fixture("tiny_oracle.json");
    let oracle = brute_force_oracle(&cfg, 20).unwrap();
    let sol = solve_cfg(&cfg);
    let solver = solution_energy(&cfg, &sol);
    let ok = sol.stats.status == SolveStatus::Optimal
        && solver <= oracle.energy * (1.0 + 1e-9)
        && oracle.energy <= 1.02 * solver
        && within(t.elapsed(), 30.0);
    verdict(
        ok,
        format!(
            "solver {:.2} kJ, oracle {:.2} kJ, ratio {:.5}",
            solver / 1e3,
            oracle.energy / 1e3,
            oracle.energy / solver
        ),
    )
}

fn midpoint_violations(samples: usize, mut draw: impl FnMut() -> (f64, f64, f64, f64)) -> usize {
    (0..samples)
        .filter(|_| {
            let (mid, a, b, slack) = draw();
            mid > 0.5 * (a + b) + slack
        })
        .count()
}

/// Random free-variable vector: speeds inside their range, powers inside
/// `(0, P_max)`, the rest scattered around the program's starting point.
fn random_point(program: &Program, rng: &mut ChaCha8Rng, margin: f64) -> Vec<f64> {
    let layout = program.layout();
    let cfg = program.scenario();
    let x0 = program.initial_point();
    (0..program.free_count())
        .map(|i| {
            let (q, _) = layout.describe(layout.slot_of_free(i));
            let scale = VariableLayout::<f64>::scale(q);
            match q {
                Quantity::Speed(id) => {
                    let n = cfg.node(id);
                    let span = n.v_max - n.v_min;
                    n.v_min + span * rng.gen_range(margin..1.0 - margin)
                }
                Quantity::Power(li) => {
                    let from = layout.links()[li].from;
                    cfg.node(from).p_max * rng.gen_range(margin..1.0 - margin)
                }
                Quantity::Position(_) => x0[i] + rng.gen_range(-0.5..0.5) * 1e3 * scale,
                Quantity::Rate(_) | Quantity::Buffer(_) => x0[i] * rng.gen_range(0.5..1.5),
            }
        })
        .collect()
}

fn convexity_witnesses() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a5d);
    let cfg = fixture("single_node.json");
    let ch = cfg.channel.clone();
    let node = cfg.node(1).clone();
    let bw = ch.bandwidth(0);
    let row = enumerate_constraints::<f64>(0, &[0], bw, 10).unwrap().remove(0);
    let residual = |r: f64, p: f64, q: f64| {
        let geom = LinkGeometry {
            altitude_difference: node.altitude,
            lateral_displacement: node.lateral_offset,
            along_track_separation: q,
        };
        let g = channel_gain(&ch, &geom).unwrap();
        constraint_residual(&row, &[g], &[p], &[r], ch.noise_power)
    };
    let capacity = midpoint_violations(1000, || {
        let mut pt = || (rng.gen_range(0.0..2e6), rng.gen_range(0.0..node.p_max), rng.gen_range(-12e3..12e3));
        let (a, b) = (pt(), pt());
        let fa = residual(a.0, a.1, a.2);
        let fb = residual(b.0, b.1, b.2);
        let fm = residual(0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1), 0.5 * (a.2 + b.2));
        (fm, fa, fb, 1e-9 * bw)
    });
    let drag = cfg.drag;
    let vomega = |v: f64| v * drag.force(v).unwrap();
    let drag_work = midpoint_violations(1000, || {
        let (a, b) = (rng.gen_range(1e-3..=200.0), rng.gen_range(1e-3..=200.0));
        let (fa, fb) = (vomega(a), vomega(b));
        (vomega(0.5 * (a + b)), fa, fb, 1e-9 * (1.0 + fa.abs() + fb.abs()))
    });
    let program = build_program(&cfg).unwrap();
    let objective = midpoint_violations(1000, || {
        let a = random_point(&program, &mut rng, 0.0);
        let b = random_point(&program, &mut rng, 0.0);
        let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let (fa, fb) = (program.objective_value(&a), program.objective_value(&b));
        (program.objective_value(&m), fa, fb, 1e-9 * (1.0 + fa.abs() + fb.abs()))
    });
    let ok = capacity == 0 && drag_work == 0 && objective == 0 && within(t.elapsed(), 10.0);
    verdict(
        ok,
        format!(
            "midpoint violations of 1000: (a) capacity residual in (r,p,q) {capacity}, (b) v*drag {drag_work}, (c) objective {objective}"
        ),
    )
}

fn derivative_agreement() -> Verdict {
    let t = Instant::now();
    let program = build_program(&fixture("single_node.json")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x = random_point(&program, &mut rng, 0.05);
        worst = worst.max(derivative_check(&program, &x, 1e-5).worst());
    }
    let ok = worst < 1e-6 && within(t.elapsed(), 30.0);
    verdict(ok, format!("worst relative error {worst:.3e} over 10 points"))
}

fn kkt_and_conservation() -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["single_node.json", "two_node_fixed.json", "tiny_oracle.json"] {
        let cfg = fixture(name);
        let sol = solve_cfg(&cfg);
        let s = &sol.stats;
        let kkt = s.stationarity.max(s.primal_residual).max(s.complementarity);
        let mut buffer: f64 = 0.0;
        for n in &sol.nodes {
            let d = cfg.node(n.id).initial_data;
            buffer = buffer.max(n.buffer.last().unwrap().abs() / d.max(1.0));
        }
        let total: f64 = cfg.nodes.iter().map(|n| n.initial_data).sum();
        let conservation = ((sol.delivered_bits() - total) / total).abs();
        ok &= s.status == SolveStatus::Optimal && kkt <= 1e-8 && buffer <= 1e-6 && conservation <= 1e-6;
        lines.push(format!(
            "{name} {:?} kkt {kkt:.1e} s(T)/D {buffer:.1e} delivered {conservation:.1e}",
            s.status
        ));
    }
    verdict(ok, lines.join("; "))
}

fn refinement_consistency() -> Verdict {
    let t = Instant::now();
    let mut cfg = fixture("single_node.json");
    cfg.knot_count = 200;
    let coarse = solve_cfg(&cfg);
    cfg.knot_count = 400;
    let fine = solve_cfg(&cfg);
    let gap = ((coarse.objective - fine.objective) / fine.objective).abs();
    let ok = coarse.stats.status == SolveStatus::Optimal
        && fine.stats.status == SolveStatus::Optimal
        && gap < 0.005
        && within(t.elapsed(), 120.0);
    verdict(
        ok,
        format!("objective {:.2} kJ vs {:.2} kJ, gap {:.3}%", coarse.objective / 1e3, fine.objective / 1e3, 100.0 * gap),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let scenario = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/single_node.json");
    let mut outputs = Vec::new();
    for run in ["first", "second"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_comm-energy"))
            .arg("solve")
            .arg(&scenario)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        if !status.success() {
            return verdict(false, format!("{run} run exited with {status}"));
        }
        outputs.push(std::fs::read(out.join("solution.csv")).unwrap());
    }
    let same = outputs[0] == outputs[1];
    verdict(same, format!("solution.csv {} bytes, identical: {same}", outputs[0].len()))
}

type Criterion = (&'static str, &'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1", "constant-speed propulsion", constant_speed_propulsion),
        ("2", "calibrated qualitative claims", calibrated_claims),
        ("3", "decoding priority", priority_property),
        ("4", "water-filling equivalence", water_filling_equivalence),
        ("5", "oracle sandwich", oracle_sandwich),
        ("6", "convexity witnesses", convexity_witnesses),
        ("7", "derivative check", derivative_agreement),
        ("8", "KKT and conservation", kkt_and_conservation),
        ("9", "refinement consistency", refinement_consistency),
        ("10", "determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (id, name, run) in criteria {
        let t = Instant::now();
        let v = run();
        let tag = match (v.passed, KNOWN_FAILURES.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>2} {tag:<12} {name}: {} [{:.2} s]", v.detail, t.elapsed().as_secs_f64());
        if v.passed {
            passed += 1;
        } else if !KNOWN_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    println!("{passed}/10 criteria passed");
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
