//! Reference solutions that do not go through the interior-point code:
//! water-filling on a fixed trajectory, maximum deliverable data, gain
//! calibration and a brute-force oracle for tiny single-node instances.
//!
//! Water-filling minimizes `Σ w_k p_k` subject to
//! `Σ w_k B log2(1 + g_k p_k/σ²) = D` and `0 ≤ p_k ≤ P_max`. Stationarity of
//! the Lagrangian gives `w_k = λ w_k B g_k / (ln2 (σ² + g_k p_k))`, so the
//! quadrature weights cancel and `p_k = clamp(ν − σ²/g_k, 0, P_max)` with
//! water level `ν = λB/ln2`.

use serde::Serialize;
use thiserror::Error;

use crate::model::{channel_gain, LinkGeometry, ScenarioConfig, ACCESS_POINT};
use crate::scalar::{count, lit, log2_1p, to_f64, trapezoid_weights, uniform_knots, Real};
use crate::solver::{solve, SolverOptions};
use crate::transcription::{build_program, evaluate_energy, BuildError, Solution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("requested {requested:.6e} bits but at most {max:.6e} bits can be delivered")]
    Infeasible { requested: f64, max: f64 },
    #[error("gain calibration target {0:.6e} bits cannot be bracketed")]
    Unbracketable(f64),
    #[error("{0}")]
    Unsupported(String),
    #[error("no speed profile on the grid satisfies the boundary conditions")]
    EmptyGrid,
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// Channel gains of one link along a fixed trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct LinkProfile<T> {
    pub knot_times: Vec<T>,
    /// Dimensionless power gain `G·η` at each knot.
    pub gains: Vec<T>,
}

impl<T: Real> LinkProfile<T> {
    pub fn new(knot_times: Vec<T>, gains: Vec<T>) -> Self {
        assert_eq!(knot_times.len(), gains.len());
        LinkProfile { knot_times, gains }
    }
}

/// Radio limits shared by the water-filling helpers.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Radio<T> {
    pub p_max: T,
    pub noise_power: T,
    pub bandwidth: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct WaterFilling<T> {
    pub power: Vec<T>,
    /// bits/s at each knot.
    pub rate: Vec<T>,
    /// Water level `ν`, Watts.
    pub level: T,
    /// `Σ w_k p_k`, Joules.
    pub energy: T,
    pub delivered: T,
}

fn delivered<T: Real>(profile: &LinkProfile<T>, w: &[T], radio: &Radio<T>, power: &[T]) -> T {
    profile
        .gains
        .iter()
        .zip(power)
        .zip(w)
        .map(|((&g, &p), &wk)| wk * radio.bandwidth * log2_1p(g * p / radio.noise_power))
        .sum()
}

/// Trapezoidal data delivered at full power.
pub fn max_feasible_data<T: Real>(profile: &LinkProfile<T>, radio: &Radio<T>) -> T {
    let w = trapezoid_weights(&profile.knot_times);
    let full = vec![radio.p_max; profile.gains.len()];
    delivered(profile, &w, radio, &full)
}

/// Minimum-energy power profile delivering exactly `data` bits.
pub fn water_filling<T: Real>(
    profile: &LinkProfile<T>,
    data: T,
    radio: &Radio<T>,
) -> Result<WaterFilling<T>, BaselineError> {
    let w = trapezoid_weights(&profile.knot_times);
    let n = profile.gains.len();
    let fill = |level: T| -> Vec<T> {
        profile
            .gains
            .iter()
            .map(|&g| (level - radio.noise_power / g).max(T::zero()).min(radio.p_max))
            .collect()
    };
    let finish = |power: Vec<T>, level: T| {
        let rate: Vec<T> = profile
            .gains
            .iter()
            .zip(&power)
            .map(|(&g, &p)| radio.bandwidth * log2_1p(g * p / radio.noise_power))
            .collect();
        let energy = power.iter().zip(&w).map(|(&p, &wk)| p * wk).sum();
        let delivered = rate.iter().zip(&w).map(|(&r, &wk)| r * wk).sum();
        WaterFilling {
            power,
            rate,
            level,
            energy,
            delivered,
        }
    };
    let floor = profile
        .gains
        .iter()
        .map(|&g| radio.noise_power / g)
        .fold(T::infinity(), T::min);
    if data <= T::zero() || n == 0 {
        return Ok(finish(vec![T::zero(); n], floor.min(T::zero())));
    }
    let max = max_feasible_data(profile, radio);
    if data > max * (T::one() + lit(1e-12)) {
        return Err(BaselineError::Infeasible {
            requested: to_f64(data),
            max: to_f64(max),
        });
    }
    let ceiling = profile
        .gains
        .iter()
        .map(|&g| radio.noise_power / g)
        .fold(T::zero(), T::max)
        + radio.p_max;
    let (mut lo, mut hi) = (floor, ceiling);
    let tol = lit::<T>(1e-9) * data;
    for _ in 0..300 {
        let mid = lo + (hi - lo) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        let got = delivered(profile, &w, radio, &fill(mid));
        if got < data {
            lo = mid;
        } else {
            hi = mid;
            if got - data <= tol {
                break;
            }
        }
    }
    Ok(finish(fill(hi), hi))
}

/// Constant speed that covers a node's path in the horizon.
pub fn mean_speed<T: Real>(cfg: &ScenarioConfig<T>, node: usize) -> T {
    cfg.node(node).path_length() / cfg.horizon
}

/// Copy of `cfg` with every node flying its mean speed throughout.
pub fn pin_speeds<T: Real>(cfg: &ScenarioConfig<T>) -> ScenarioConfig<T> {
    let mut out = cfg.clone();
    for (i, node) in out.nodes.iter_mut().enumerate() {
        let v = mean_speed(cfg, i + 1);
        node.v_min = v;
        node.v_max = v;
        node.v_init = v;
    }
    out
}

/// Gains to the access point of `node` flying at its mean speed, on the
/// scenario's knot grid.
pub fn fixed_speed_profile<T: Real>(cfg: &ScenarioConfig<T>, node: usize) -> LinkProfile<T> {
    let params = cfg.node(node);
    let times = uniform_knots(cfg.horizon, cfg.knot_count);
    let v = mean_speed(cfg, node);
    let gains = times
        .iter()
        .map(|&t| {
            let geometry = LinkGeometry {
                altitude_difference: params.altitude,
                lateral_displacement: params.lateral_offset,
                along_track_separation: params.q_init + params.zeta() * v * t,
            };
            channel_gain(&cfg.channel, &geometry).expect("geometry is non-singular")
        })
        .collect();
    LinkProfile::new(times, gains)
}

/// Radio limits of `node` towards the access point.
pub fn radio_of<T: Real>(cfg: &ScenarioConfig<T>, node: usize) -> Radio<T> {
    Radio {
        p_max: cfg.node(node).p_max,
        noise_power: cfg.channel.noise_power,
        bandwidth: cfg.channel.bandwidth(ACCESS_POINT),
    }
}

/// Antenna gain product `G` for which node 1 at its mean speed can deliver
/// exactly `target_bits`.
pub fn calibrate_gain<T: Real>(cfg: &ScenarioConfig<T>, target_bits: T) -> Result<T, BaselineError> {
    if !(target_bits > T::zero()) {
        return Err(BaselineError::Unbracketable(to_f64(target_bits)));
    }
    let max_at = |g: T| {
        let mut c = cfg.clone();
        c.channel.antenna_gain_product = g;
        max_feasible_data(&fixed_speed_profile(&c, 1), &radio_of(&c, 1))
    };
    let two = lit::<T>(2.0);
    let (mut lo, mut hi) = (T::one(), T::one());
    let limit = lit::<T>(1e30);
    while max_at(hi) < target_bits {
        hi *= two;
        if hi > limit {
            return Err(BaselineError::Unbracketable(to_f64(target_bits)));
        }
    }
    while max_at(lo) > target_bits {
        lo /= two;
        if lo < T::one() / limit {
            return Err(BaselineError::Unbracketable(to_f64(target_bits)));
        }
    }
    for _ in 0..200 {
        let mid = (lo.ln() + (hi.ln() - lo.ln()) * lit(0.5)).exp();
        if mid <= lo || mid >= hi {
            break;
        }
        if max_at(mid) < target_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let at_lo = (max_at(lo) - target_bits).abs();
    let at_hi = (max_at(hi) - target_bits).abs();
    Ok(if at_lo < at_hi { lo } else { hi })
}

/// Transmission-only optimum with the speeds fixed: `v_min = v_max` is
/// required for every node.
pub fn fixed_speed_solution<T: Real>(cfg: &ScenarioConfig<T>, opts: &SolverOptions) -> Result<Solution<T>, BaselineError> {
    if let Some((i, _)) = cfg.nodes.iter().enumerate().find(|(_, n)| n.v_min != n.v_max) {
        return Err(BaselineError::Unsupported(format!(
            "node {} has a speed range; the fixed-speed baseline needs v_min = v_max",
            i + 1
        )));
    }
    let program = build_program(cfg)?;
    Ok(solve(&program, opts))
}

/// Best grid point found by [`brute_force_oracle`].
#[derive(Debug, Clone, Serialize)]
pub struct OracleResult<T> {
    /// Transmission plus `∫ vΩ dt` plus the kinetic-energy change, Joules.
    pub energy: T,
    pub transmission: T,
    pub propulsion: T,
    pub speeds: Vec<T>,
    pub power: Vec<T>,
    /// Speed profiles that met the boundary conditions.
    pub candidates: usize,
}

/// Largest interval count the oracle accepts.
pub const ORACLE_MAX_INTERVALS: usize = 4;
/// Largest speed grid the oracle accepts.
pub const ORACLE_MAX_GRID: usize = 50;

/// Exhaustive search over speed profiles for a single-node scenario with at
/// most four intervals.
///
/// `v(0)` is the initial speed, interior knots range over `speed_points`
/// evenly spaced speeds in `[v_min, v_max]` and the final speed is whatever
/// closes the distance; profiles whose final speed leaves the bounds are
/// dropped. Each profile's power comes from [`water_filling`].
pub fn brute_force_oracle<T: Real>(cfg: &ScenarioConfig<T>, speed_points: usize) -> Result<OracleResult<T>, BaselineError> {
    if cfg.node_count() != 1 {
        return Err(BaselineError::Unsupported("the oracle handles a single node only".into()));
    }
    let k = cfg.knot_count;
    if k > ORACLE_MAX_INTERVALS {
        return Err(BaselineError::Unsupported(format!(
            "the oracle handles at most {ORACLE_MAX_INTERVALS} intervals, got {k}"
        )));
    }
    if speed_points == 0 || speed_points > ORACLE_MAX_GRID {
        return Err(BaselineError::Unsupported(format!(
            "speed grid must have 1 to {ORACLE_MAX_GRID} points"
        )));
    }
    let node = cfg.node(1);
    let radio = radio_of(cfg, 1);
    let times = uniform_knots(cfg.horizon, k);
    let w = trapezoid_weights(&times);
    let grid: Vec<T> = if speed_points == 1 || node.v_min == node.v_max {
        vec![node.v_min]
    } else {
        (0..speed_points)
            .map(|i| node.v_min + (node.v_max - node.v_min) * count::<T>(i) / count::<T>(speed_points - 1))
            .collect()
    };
    let distance = node.path_length();
    let slack = lit::<T>(1e-9) * node.v_max.max(T::one());
    let interior = k - 1;
    let half = lit::<T>(0.5);
    let mut best: Option<OracleResult<T>> = None;
    let mut candidates = 0;
    let mut index = vec![0usize; interior];
    loop {
        let mut speeds = Vec::with_capacity(k + 1);
        speeds.push(node.v_init);
        speeds.extend(index.iter().map(|&i| grid[i]));
        let covered: T = speeds.iter().zip(&w).map(|(&v, &wk)| v * wk).sum();
        let last = (distance - covered) / w[k];
        if last >= node.v_min - slack && last <= node.v_max + slack {
            let last = last.max(node.v_min).min(node.v_max);
            speeds.push(last);
            let mut q = node.q_init;
            let mut gains = Vec::with_capacity(k + 1);
            for j in 0..=k {
                if j > 0 {
                    q += node.zeta() * (times[j] - times[j - 1]) * half * (speeds[j - 1] + speeds[j]);
                }
                let geometry = LinkGeometry {
                    altitude_difference: node.altitude,
                    lateral_displacement: node.lateral_offset,
                    along_track_separation: q,
                };
                gains.push(channel_gain(&cfg.channel, &geometry).expect("geometry is non-singular"));
            }
            let profile = LinkProfile::new(times.clone(), gains);
            if let Ok(fill) = water_filling(&profile, node.initial_data, &radio) {
                candidates += 1;
                let propulsion: T = speeds
                    .iter()
                    .zip(&w)
                    .map(|(&v, &wk)| wk * v * cfg.drag.force_unchecked(v))
                    .sum::<T>()
                    + half * node.mass * (last * last - node.v_init * node.v_init);
                let energy = fill.energy + propulsion;
                if best.as_ref().is_none_or(|b| energy < b.energy) {
                    best = Some(OracleResult {
                        energy,
                        transmission: fill.energy,
                        propulsion,
                        speeds,
                        power: fill.power,
                        candidates: 0,
                    });
                }
            }
        }
        // Odometer over the interior speeds.
        let mut pos = 0;
        loop {
            if pos == interior {
                let mut out = best.ok_or(BaselineError::EmptyGrid)?;
                out.candidates = candidates;
                return Ok(out);
            }
            index[pos] += 1;
            if index[pos] < grid.len() {
                break;
            }
            index[pos] = 0;
            pos += 1;
        }
    }
}

/// Total energy of a solver solution in the oracle's accounting.
pub fn solution_energy<T: Real>(cfg: &ScenarioConfig<T>, solution: &Solution<T>) -> T {
    evaluate_energy(cfg, solution).total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radio() -> Radio<f64> {
        Radio {
            p_max: 100.0,
            noise_power: 1e-10,
            bandwidth: 1e5,
        }
    }

    fn constant(g: f64, t: f64, k: usize) -> LinkProfile<f64> {
        LinkProfile::new(uniform_knots(t, k), vec![g; k + 1])
    }

    #[test]
    fn constant_gain_inverts_shannon() {
        let prof = constant(1e-9, 1200.0, 10);
        let d = 5e7;
        let wf = water_filling(&prof, d, &radio()).unwrap();
        let expected = (2f64.powf(d / (1e5 * 1200.0)) - 1.0) * 1e-10 / 1e-9;
        for p in &wf.power {
            assert!((p - expected).abs() < 1e-6 * expected);
        }
        assert!((wf.delivered - d).abs() <= 1e-6 * d);
    }

    #[test]
    fn zero_data_means_zero_power() {
        let wf = water_filling(&constant(1e-9, 10.0, 4), 0.0, &radio()).unwrap();
        assert!(wf.power.iter().all(|&p| p == 0.0));
        assert!(wf.level <= 1e-10 / 1e-9);
    }

    #[test]
    fn weak_knot_gets_nothing() {
        let prof = LinkProfile::new(vec![0.0, 1.0], vec![1e-9, 1e-13]);
        let wf = water_filling(&prof, 1e4, &radio()).unwrap();
        assert_eq!(wf.power[1], 0.0);
        assert!(wf.power[0] > 0.0);
    }

    #[test]
    fn max_data_closed_form() {
        let m = max_feasible_data(&constant(1e-9, 1200.0, 7), &radio());
        let expected = 1e5 * 1001f64.log2() * 1200.0;
        assert!((m - expected).abs() < 1e-6 * expected);
        assert!((expected / 8e6 - 149.5).abs() < 0.1);
        assert_eq!(max_feasible_data(&LinkProfile::new(vec![0.0], vec![1e-9]), &radio()), 0.0);
    }

    #[test]
    fn too_much_data_is_rejected() {
        let prof = constant(1e-9, 1200.0, 7);
        let m = max_feasible_data(&prof, &radio());
        assert!(matches!(
            water_filling(&prof, 1.5 * m, &radio()),
            Err(BaselineError::Infeasible { .. })
        ));
    }
}
