mod common;

use comm_energy::solver::ConstrainedProblem;
use comm_energy::transcription::{build_program, check_feasibility, evaluate_energy, BuildError, Quantity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mix(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect()
}

#[test]
fn objective_and_inequalities_are_convex_at_fixed_positions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in ["single_node.json", "two_node_fixed.json"] {
        let program = build_program(&common::coarse(name, 20)).unwrap();
        let m = program.inequality_count();
        let (mut ga, mut gb, mut gm) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for _ in 0..200 {
            let a = common::random_point(&program, &mut rng, 0.01);
            let mut b = common::random_point(&program, &mut rng, 0.01);
            for i in 0..b.len() {
                let layout = program.layout();
                if matches!(layout.describe(layout.slot_of_free(i)).0, Quantity::Position(_)) {
                    b[i] = a[i];
                }
            }
            let t = rng.gen_range(0.0..1.0);
            let x = mix(&a, &b, t);
            let (fa, fb, fx) = (program.objective(&a), program.objective(&b), program.objective(&x));
            let chord = (1.0 - t) * fa + t * fb;
            assert!(fx <= chord + 1e-10 * (1.0 + chord.abs()), "{name}: objective {fx} above chord {chord}");
            program.inequality_values(&a, &mut ga);
            program.inequality_values(&b, &mut gb);
            program.inequality_values(&x, &mut gm);
            for i in 0..m {
                let chord = (1.0 - t) * ga[i] + t * gb[i];
                assert!(gm[i] <= chord + 1e-10 * (1.0 + ga[i].abs() + gb[i].abs()), "{name}: inequality {i}");
            }
        }
    }
}

#[test]
fn equality_residuals_are_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let program = build_program(&common::coarse("two_node_fixed.json", 20)).unwrap();
    for _ in 0..50 {
        let a = common::random_point(&program, &mut rng, 0.01);
        let b = common::random_point(&program, &mut rng, 0.01);
        let t = rng.gen_range(-1.0..2.0);
        let x = mix(&a, &b, t);
        for row in program.equalities() {
            let expect = (1.0 - t) * row.residual(&a) + t * row.residual(&b);
            let scale = 1.0 + row.residual(&a).abs() + row.residual(&b).abs();
            assert!((row.residual(&x) - expect).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn start_satisfies_the_linear_constraints() {
    for name in ["single_node.json", "two_node_fixed.json"] {
        let program = build_program(&common::fixture(name)).unwrap();
        let x0 = program.initial_point();
        let worst = program.equalities().iter().map(|r| r.residual(x0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{name}: {worst:e}");
    }
}

#[test]
fn impossible_distance_is_a_build_error() {
    let mut cfg = common::fixture("single_node.json");
    cfg.nodes[0].q_final = cfg.nodes[0].q_init + 1.01 * cfg.horizon * cfg.nodes[0].v_max;
    assert!(matches!(build_program(&cfg), Err(BuildError::Kinematics { node: 1, .. })));
}

#[test]
fn solved_trajectories_conserve_data() {
    for name in ["single_node.json", "two_node_fixed.json"] {
        let cfg = common::coarse(name, 50);
        let sol = common::solve_cfg(&cfg);
        let offered: f64 = cfg.nodes.iter().map(|n| n.initial_data).sum();
        let left: f64 = sol.nodes.iter().map(|n| *n.buffer.last().unwrap()).sum();
        assert!(common::rel(sol.delivered_bits() + left, offered) < 1e-6, "{name}");
        let energy = evaluate_energy(&cfg, &sol);
        assert!(common::rel(energy.total, energy.transmission + energy.propulsion) < 1e-12);
    }
}

#[test]
fn feasibility_check_catches_tampering() {
    let cfg = common::coarse("two_node_fixed.json", 50);
    let sol = common::solve_cfg(&cfg);
    let clean = check_feasibility(&cfg, &sol, 1e-6);
    assert!(clean.passed, "{:?}", clean.violations.first());

    let mut leftover = sol.clone();
    *leftover.nodes[0].buffer.last_mut().unwrap() += 1.0;
    let report = check_feasibility(&cfg, &leftover, 1e-12);
    assert!(report.violations.iter().any(|v| v.constraint.starts_with("final buffer")));

    let mut greedy = sol.clone();
    let k = (0..sol.knot_times.len()).max_by(|&a, &b| sol.links[0].rate[a].total_cmp(&sol.links[0].rate[b])).unwrap();
    greedy.links[0].rate[k] *= 1.01;
    let report = check_feasibility(&cfg, &greedy, 1e-6);
    assert!(!report.passed);
    assert!(report.violations.iter().any(|v| v.constraint.starts_with("capacity") && v.knot == Some(k)));
}
