//! Post-solve interpretation: decoding-priority traces, the joint versus
//! fixed-speed comparison and extra propulsion energy.

use serde::Serialize;
use thiserror::Error;

use crate::baselines::pin_speeds;
use crate::capacity::{decoding_priority, two_user_corners, CapacityError};
use crate::model::{channel_gain, LinkGeometry, ScenarioConfig, ACCESS_POINT};
use crate::scalar::{lit, to_f64, Real};
use crate::solver::{find_interior_point, solve, SolveStatus, SolverOptions};
use crate::transcription::{build_program, evaluate_energy, BuildError, EnergyBreakdown, Solution};

/// Default activity threshold as a fraction of `P_max`.
pub const DEFAULT_ACTIVITY_FRACTION: f64 = 1e-4;
/// Allowed distance of a rate pair from the corner segment, relative to the
/// sum rate.
pub const SEGMENT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("the priority trace needs exactly two transmitters to the access point, found {0}")]
    NotTwoUser(usize),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// `ϱ(t)` for a two-transmitter solution: `ϱ = 1` decodes the first
/// transmitter last, `ϱ = 0` the second.
#[derive(Debug, Clone, Serialize)]
pub struct PriorityTrace<T> {
    pub transmitters: [usize; 2],
    pub knot_times: Vec<T>,
    /// Defined where both powers exceed the threshold and the rates sit on
    /// the corner segment.
    pub priority: Vec<Option<T>>,
    pub active: Vec<bool>,
    /// Relative distance from the segment where it exceeded the tolerance.
    pub off_segment: Vec<Option<f64>>,
}

impl<T: Real> PriorityTrace<T> {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Largest `ϱ` over the knots where it is defined.
    pub fn max_priority(&self) -> Option<T> {
        self.priority.iter().flatten().copied().reduce(T::max)
    }

    pub fn min_priority(&self) -> Option<T> {
        self.priority.iter().flatten().copied().reduce(T::min)
    }

    pub fn flagged_count(&self) -> usize {
        self.off_segment.iter().filter(|d| d.is_some()).count()
    }
}

/// Reconstructs the decoding priority at every knot from solved powers,
/// positions and rates. A knot is active when both powers exceed
/// `activity_fraction·P_max`.
pub fn priority_trace<T: Real>(
    solution: &Solution<T>,
    cfg: &ScenarioConfig<T>,
    activity_fraction: T,
) -> Result<PriorityTrace<T>, AnalysisError> {
    let tx = cfg.transmitters_to(ACCESS_POINT);
    if tx.len() != 2 {
        return Err(AnalysisError::NotTwoUser(tx.len()));
    }
    let links = [
        solution.link(tx[0], ACCESS_POINT).expect("topology link present"),
        solution.link(tx[1], ACCESS_POINT).expect("topology link present"),
    ];
    let knots = solution.knot_times.len();
    let mut trace = PriorityTrace {
        transmitters: [tx[0], tx[1]],
        knot_times: solution.knot_times.clone(),
        priority: vec![None; knots],
        active: vec![false; knots],
        off_segment: vec![None; knots],
    };
    let bw = cfg.channel.bandwidth(ACCESS_POINT);
    for k in 0..knots {
        let gain = |i: usize| {
            let node = cfg.node(tx[i]);
            let geometry = LinkGeometry {
                altitude_difference: node.altitude,
                lateral_displacement: node.lateral_offset,
                along_track_separation: solution.node(tx[i]).position[k],
            };
            channel_gain(&cfg.channel, &geometry).expect("geometry is non-singular")
        };
        let p = [links[0].power[k], links[1].power[k]];
        let on = (0..2).all(|i| p[i] > activity_fraction * cfg.node(tx[i]).p_max);
        trace.active[k] = on;
        if !on {
            continue;
        }
        let (r1, r2) = two_user_corners(gain(0), gain(1), p[0], p[1], cfg.channel.noise_power, bw);
        match decoding_priority(&r1, &r2, [links[0].rate[k], links[1].rate[k]], lit(SEGMENT_TOLERANCE)) {
            Ok(rho) => trace.priority[k] = Some(rho),
            Err(CapacityError::OffBoundary { distance }) => trace.off_segment[k] = Some(distance),
            Err(_) => trace.off_segment[k] = Some(f64::NAN),
        }
    }
    Ok(trace)
}

/// One policy in a [`PolicyComparison`].
#[derive(Debug, Clone, Serialize)]
pub struct PolicyOutcome<T> {
    pub status: SolveStatus,
    /// Present when the solve reached optimality.
    pub energy: Option<EnergyBreakdown<T>>,
    /// Largest total starting data (bits) that stays feasible when every
    /// node's share is scaled together.
    pub max_data_bits: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyComparison<T> {
    pub joint: PolicyOutcome<T>,
    pub fixed_speed: PolicyOutcome<T>,
    /// `joint.max_data_bits / fixed_speed.max_data_bits`.
    pub uplift: T,
}

fn with_total_data<T: Real>(cfg: &ScenarioConfig<T>, total: T) -> ScenarioConfig<T> {
    let sum: T = cfg.nodes.iter().map(|n| n.initial_data).sum();
    let mut out = cfg.clone();
    let share = T::one() / lit::<T>(cfg.nodes.len() as f64);
    for n in out.nodes.iter_mut() {
        let frac = if sum > T::zero() { n.initial_data / sum } else { share };
        n.initial_data = total * frac;
    }
    out
}

/// Largest total starting data for which the scenario stays feasible, by
/// bisection on a common scale of every node's data; relative accuracy
/// `rel_tol`.
pub fn max_deliverable_data<T: Real>(cfg: &ScenarioConfig<T>, opts: &SolverOptions, rel_tol: f64) -> Result<T, BuildError> {
    let feasible = |total: T| -> Result<bool, BuildError> {
        let program = build_program(&with_total_data(cfg, total))?;
        Ok(find_interior_point(&program, program.initial_point(), opts).point.is_some())
    };
    let two = lit::<T>(2.0);
    let start: T = cfg.nodes.iter().map(|n| n.initial_data).sum::<T>().max(lit(1e6));
    let (mut lo, mut hi) = (T::zero(), start);
    while feasible(hi)? {
        lo = hi;
        hi *= two;
        if to_f64(hi) > 1e18 {
            return Ok(hi);
        }
    }
    if lo == T::zero() {
        // The starting guess was already too much; shrink until feasible.
        let mut probe = hi / two;
        while probe > lit(1.0) && !feasible(probe)? {
            hi = probe;
            probe /= two;
        }
        lo = if probe > lit(1.0) { probe } else { T::zero() };
    }
    while hi - lo > lit::<T>(rel_tol) * hi {
        let mid = lo + (hi - lo) * lit(0.5);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn outcome<T: Real>(cfg: &ScenarioConfig<T>, opts: &SolverOptions) -> Result<PolicyOutcome<T>, BuildError> {
    let program = build_program(cfg)?;
    let solution = solve(&program, opts);
    let status = solution.stats.status;
    Ok(PolicyOutcome {
        status,
        energy: (status == SolveStatus::Optimal).then(|| evaluate_energy(cfg, &solution)),
        max_data_bits: max_deliverable_data(cfg, opts, 1e-4)?,
    })
}

/// Solves the joint problem and the fixed-speed problem (every node at its
/// mean speed) and compares energies and deliverable data.
pub fn compare_policies<T: Real>(cfg: &ScenarioConfig<T>, opts: &SolverOptions) -> Result<PolicyComparison<T>, BuildError> {
    let joint = outcome(cfg, opts)?;
    let fixed_speed = outcome(&pin_speeds(cfg), opts)?;
    let uplift = joint.max_data_bits / fixed_speed.max_data_bits;
    Ok(PolicyComparison {
        joint,
        fixed_speed,
        uplift,
    })
}

/// Propulsion spent beyond flying the same path at constant speed.
#[derive(Debug, Clone, Serialize)]
pub struct ExtraPropulsion<T> {
    pub node: usize,
    /// `T·v̄·Ω(v̄)`.
    pub baseline: T,
    /// `∫ vΩ(v) dt − baseline`; nonnegative since `vΩ(v)` is convex.
    pub drag_work_excess: T,
    /// `m/2·(v(T)² − v(0)²)`.
    pub kinetic_change: T,
    /// `drag_work_excess + kinetic_change`.
    pub extra: T,
}

pub fn energy_vs_baseline<T: Real>(solution: &Solution<T>, cfg: &ScenarioConfig<T>) -> Vec<ExtraPropulsion<T>> {
    evaluate_energy(cfg, solution)
        .nodes
        .into_iter()
        .map(|n| ExtraPropulsion {
            node: n.id,
            baseline: n.constant_speed_propulsion,
            drag_work_excess: n.drag_work - n.constant_speed_propulsion,
            kinetic_change: n.kinetic_change,
            extra: n.extra_propulsion,
        })
        .collect()
}
