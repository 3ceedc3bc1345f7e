//! Physical and communication-theoretic primitives.
//!
//! Channel gains follow a free-space style power law in the node-to-receiver
//! distance, drag is the two-term parasitic plus induced model, and the
//! scenario types describe a full problem instance. All quantities are SI:
//! bits, seconds, meters, Watts and Newtons.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::{lit, Real};

/// Index of the access point in node numbering. Mobile nodes are `1..=N`.
pub const ACCESS_POINT: usize = 0;

/// Standard gravity used when deriving drag coefficients from an airframe.
pub const DEFAULT_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("singular link geometry: transmitter and receiver coincide")]
    SingularGeometry,
    #[error("speed {0} is negative; drag is infinite for reverse motion")]
    NegativeSpeed(f64),
    #[error("induced drag is singular at zero speed")]
    ZeroSpeed,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// Antenna, path-loss and receiver parameters shared by every link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams<T> {
    pub antenna_gain_product: T,
    pub path_loss_exponent: T,
    pub noise_power: T,
    /// Bandwidth of each receiver's band in Hz, indexed by receiver id
    /// (the AP first). A single entry applies to every receiver.
    pub bandwidth_per_receiver: Vec<T>,
}

impl<T: Real> ChannelParams<T> {
    pub fn bandwidth(&self, receiver: usize) -> T {
        if self.bandwidth_per_receiver.len() == 1 {
            self.bandwidth_per_receiver[0]
        } else {
            self.bandwidth_per_receiver[receiver]
        }
    }
}

/// Relative placement of a transmitter with respect to its receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry<T> {
    pub altitude_difference: T,
    pub lateral_displacement: T,
    /// Signed difference of along-track positions.
    pub along_track_separation: T,
}

impl<T: Real> LinkGeometry<T> {
    pub fn squared_distance(&self) -> T {
        self.altitude_difference * self.altitude_difference
            + self.lateral_displacement * self.lateral_displacement
            + self.along_track_separation * self.along_track_separation
    }
}

/// Channel gain `G / (a² + δ² + q²)^α`.
pub fn channel_gain<T: Real>(channel: &ChannelParams<T>, geom: &LinkGeometry<T>) -> Result<T, ModelError> {
    let d2 = geom.squared_distance();
    if d2 <= T::zero() {
        return Err(ModelError::SingularGeometry);
    }
    Ok(channel.antenna_gain_product * d2.powf(-channel.path_loss_exponent))
}

/// Gain and its first two derivatives with respect to the along-track
/// separation, for a link whose fixed cross-track offset is `offset_sq`
/// (`a² + δ²`, must be positive).
pub fn gain_and_derivatives<T: Real>(gain_product: T, exponent: T, offset_sq: T, separation: T) -> (T, T, T) {
    let two = lit::<T>(2.0);
    let base = offset_sq + separation * separation;
    let eta = gain_product * base.powf(-exponent);
    let eta_base = eta / base;
    let d1 = -two * exponent * separation * eta_base;
    let d2 = -two * exponent * eta_base
        + lit::<T>(4.0) * exponent * (exponent + T::one()) * separation * separation * eta_base / base;
    (eta, d1, d2)
}

/// Drag force `Ω(v) = C_D1 v² + C_D2 v⁻²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DragModel<T> {
    pub parasitic_coefficient: T,
    pub induced_coefficient: T,
}

impl<T: Real> DragModel<T> {
    pub fn new(parasitic: T, induced: T) -> Self {
        DragModel {
            parasitic_coefficient: parasitic,
            induced_coefficient: induced,
        }
    }

    fn check_speed(&self, v: T) -> Result<(), ModelError> {
        if v < T::zero() {
            return Err(ModelError::NegativeSpeed(crate::scalar::to_f64(v)));
        }
        if v == T::zero() && self.induced_coefficient > T::zero() {
            return Err(ModelError::ZeroSpeed);
        }
        Ok(())
    }

    /// Drag force in Newtons.
    pub fn force(&self, v: T) -> Result<T, ModelError> {
        self.check_speed(v)?;
        Ok(self.force_unchecked(v))
    }

    pub(crate) fn force_unchecked(&self, v: T) -> T {
        let v2 = v * v;
        if self.induced_coefficient == T::zero() {
            self.parasitic_coefficient * v2
        } else {
            self.parasitic_coefficient * v2 + self.induced_coefficient / v2
        }
    }

    /// Power needed to hold speed `v` against drag, `v·Ω(v)`.
    pub fn power(&self, v: T) -> Result<T, ModelError> {
        self.check_speed(v)?;
        Ok(v * self.force_unchecked(v))
    }

    /// `v·Ω(v)` with first and second derivatives. Caller guarantees `v > 0`.
    pub(crate) fn power_derivatives(&self, v: T) -> (T, T, T) {
        let c1 = self.parasitic_coefficient;
        let c2 = self.induced_coefficient;
        let v2 = v * v;
        let value = c1 * v2 * v + c2 / v;
        let d1 = lit::<T>(3.0) * c1 * v2 - c2 / v2;
        let d2 = lit::<T>(6.0) * c1 * v + lit::<T>(2.0) * c2 / (v2 * v);
        (value, d1, d2)
    }

    /// Speed minimizing the drag force, `(C_D2/C_D1)^(1/4)`.
    pub fn min_drag_speed(&self) -> T {
        (self.induced_coefficient / self.parasitic_coefficient).powf(lit(0.25))
    }

    /// Speed minimizing steady-flight power, `(C_D2/(3 C_D1))^(1/4)`.
    pub fn min_power_speed(&self) -> T {
        (self.induced_coefficient / (lit::<T>(3.0) * self.parasitic_coefficient)).powf(lit(0.25))
    }
}

/// Fixed-wing airframe description from which drag coefficients follow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Airframe<T> {
    pub air_density: T,
    pub base_drag_coefficient: T,
    pub wing_area: T,
    pub oswald_efficiency: T,
    pub aspect_ratio: T,
    pub mass: T,
    pub gravity: T,
}

/// Drag coefficients for level flight, where lift equals weight.
pub fn drag_from_physical<T: Real>(air: &Airframe<T>) -> Result<DragModel<T>, ModelError> {
    let fields = [
        ("air_density", air.air_density),
        ("base_drag_coefficient", air.base_drag_coefficient),
        ("wing_area", air.wing_area),
        ("oswald_efficiency", air.oswald_efficiency),
        ("aspect_ratio", air.aspect_ratio),
        ("mass", air.mass),
        ("gravity", air.gravity),
    ];
    for (name, value) in fields {
        if !(value > T::zero()) {
            return Err(ModelError::NonPositive {
                name,
                value: crate::scalar::to_f64(value),
            });
        }
    }
    let two = lit::<T>(2.0);
    let weight = air.mass * air.gravity;
    let parasitic = air.air_density * air.base_drag_coefficient * air.wing_area / two;
    let induced = two * weight * weight
        / (T::PI() * air.oswald_efficiency * air.aspect_ratio * air.air_density * air.wing_area);
    Ok(DragModel::new(parasitic, induced))
}

/// Propulsive power `v·(Ω(v) + m·v̇)`. Negative while braking harder than drag.
pub fn propulsion_power<T: Real>(drag: &DragModel<T>, mass: T, v: T, v_dot: T) -> Result<T, ModelError> {
    Ok(v * (drag.force(v)? + mass * v_dot))
}

/// Per-node physics, limits and boundary data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeParams<T> {
    pub mass: T,
    pub altitude: T,
    pub lateral_offset: T,
    /// Data to offload, bits.
    pub initial_data: T,
    /// Buffer size, bits.
    pub buffer_capacity: T,
    pub v_min: T,
    pub v_max: T,
    pub v_init: T,
    pub q_init: T,
    pub q_final: T,
    /// +1 when the along-track position increases with speed, -1 otherwise.
    pub direction: i8,
    pub p_max: T,
}

impl<T: Real> NodeParams<T> {
    pub fn zeta(&self) -> T {
        if self.direction < 0 {
            -T::one()
        } else {
            T::one()
        }
    }

    /// Along-track distance to cover.
    pub fn path_length(&self) -> T {
        (self.q_final - self.q_init).abs()
    }
}

/// Directed transmit link. `to == 0` is the access point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link {
    pub from: usize,
    pub to: usize,
}

/// A validated problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig<T> {
    /// Node `i` in this list has id `i + 1`.
    pub nodes: Vec<NodeParams<T>>,
    pub channel: ChannelParams<T>,
    pub drag: DragModel<T>,
    pub horizon: T,
    /// Number of grid intervals; the grid has `knot_count + 1` knots.
    pub knot_count: usize,
    pub topology: Vec<Link>,
    pub relaying_enabled: bool,
}

impl<T: Real> ScenarioConfig<T> {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Parameters of node `id` (1-based).
    pub fn node(&self, id: usize) -> &NodeParams<T> {
        &self.nodes[id - 1]
    }

    /// Cross-track offset `(a_nm, δ_nm)` between a transmitter and a receiver.
    pub fn link_offsets(&self, link: Link) -> (T, T) {
        let tx = self.node(link.from);
        if link.to == ACCESS_POINT {
            (tx.altitude, tx.lateral_offset)
        } else {
            let rx = self.node(link.to);
            (tx.altitude - rx.altitude, tx.lateral_offset - rx.lateral_offset)
        }
    }

    /// Receivers that have at least one incoming link, in ascending order.
    pub fn receivers(&self) -> Vec<usize> {
        self.topology.iter().map(|l| l.to).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Transmitters addressing `receiver`, ascending.
    pub fn transmitters_to(&self, receiver: usize) -> Vec<usize> {
        self.topology
            .iter()
            .filter(|l| l.to == receiver)
            .map(|l| l.from)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

impl<T: Real + Serialize> ScenarioConfig<T> {
    /// SHA-256 of the canonical JSON form. Stable across runs.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

// ---------------------------------------------------------------------------
// Raw (user-facing) scenario and validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChannel<T> {
    pub antenna_gain_product: Option<T>,
    pub path_loss_exponent: Option<T>,
    pub noise_power: Option<T>,
    pub bandwidth_per_receiver: Option<Vec<T>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAirframe<T> {
    pub air_density: Option<T>,
    pub base_drag_coefficient: Option<T>,
    pub wing_area: Option<T>,
    pub oswald_efficiency: Option<T>,
    pub aspect_ratio: Option<T>,
    pub mass: Option<T>,
    pub gravity: Option<T>,
}

/// Either the two coefficients directly or an airframe to derive them from.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDrag<T> {
    pub parasitic_coefficient: Option<T>,
    pub induced_coefficient: Option<T>,
    pub airframe: Option<RawAirframe<T>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNode<T> {
    pub mass: Option<T>,
    pub altitude: Option<T>,
    pub lateral_offset: Option<T>,
    pub initial_data: Option<T>,
    pub buffer_capacity: Option<T>,
    pub v_min: Option<T>,
    pub v_max: Option<T>,
    pub v_init: Option<T>,
    pub q_init: Option<T>,
    pub q_final: Option<T>,
    pub direction: Option<i8>,
    pub p_max: Option<T>,
}

/// Scenario as read from disk, before defaults and checks.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario<T> {
    pub nodes: Option<Vec<RawNode<T>>>,
    pub channel: Option<RawChannel<T>>,
    pub drag: Option<RawDrag<T>>,
    pub horizon: Option<T>,
    pub knot_count: Option<usize>,
    pub topology: Option<Vec<Link>>,
    pub relaying_enabled: Option<bool>,
}

/// Every problem found while validating a scenario.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario has {} problem(s):", self.issues.len())?;
        for issue in &self.issues {
            writeln!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

struct Checker {
    issues: Vec<String>,
}

impl Checker {
    fn require<T: Copy>(&mut self, value: Option<T>, path: &str) -> Option<T> {
        if value.is_none() {
            self.issues.push(format!("{path}: missing"));
        }
        value
    }

    fn positive<T: Real>(&mut self, value: Option<T>, path: &str) -> Option<T> {
        let v = self.require(value, path)?;
        if !(v > T::zero()) || !v.is_finite() {
            self.issues.push(format!("{path}: must be positive and finite, got {v}"));
            return None;
        }
        Some(v)
    }

    fn finite<T: Real>(&mut self, value: Option<T>, path: &str) -> Option<T> {
        let v = self.require(value, path)?;
        if !v.is_finite() {
            self.issues.push(format!("{path}: must be finite, got {v}"));
            return None;
        }
        Some(v)
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.issues.push(msg());
        }
    }
}

/// Number of grid intervals used when the scenario does not say.
pub const DEFAULT_KNOT_COUNT: usize = 200;

/// Validates a raw scenario and fills defaults.
///
/// Defaults: `antenna_gain_product = 1`, `knot_count = 200`,
/// `relaying_enabled = false`, topology every node to the AP,
/// `v_init = (v_min + v_max)/2`, `direction = +1` (or the sign of
/// `q_final - q_init` when both are given), and a path symmetric about
/// the AP, `q_final = -q_init = ζ·T·v_init/2`. An airframe's `gravity`
/// defaults to 9.81 m/s².
pub fn validate_scenario<T: Real>(raw: &RawScenario<T>) -> Result<ScenarioConfig<T>, ValidationReport> {
    let mut ck = Checker { issues: Vec::new() };

    let horizon = ck.positive(raw.horizon, "horizon");
    let knot_count = raw.knot_count.unwrap_or(DEFAULT_KNOT_COUNT);
    ck.check(knot_count >= 2, || format!("knot_count: must be at least 2, got {knot_count}"));

    // Channel.
    let empty_channel = RawChannel::default();
    let rc = raw.channel.as_ref().unwrap_or_else(|| {
        ck.issues.push("channel: missing".into());
        &empty_channel
    });
    let gain = ck.positive(Some(rc.antenna_gain_product.unwrap_or(T::one())), "channel.antenna_gain_product");
    let alpha = ck.finite(rc.path_loss_exponent, "channel.path_loss_exponent");
    if let Some(a) = alpha {
        ck.check(a >= T::one(), || format!("channel.path_loss_exponent: must be >= 1, got {a}"));
    }
    let noise = ck.positive(rc.noise_power, "channel.noise_power");
    let bandwidths = ck.require(rc.bandwidth_per_receiver.as_ref(), "channel.bandwidth_per_receiver").cloned();

    // Drag.
    let drag = match &raw.drag {
        None => {
            ck.issues.push("drag: missing".into());
            None
        }
        Some(d) => match (&d.airframe, d.parasitic_coefficient, d.induced_coefficient) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                ck.issues.push("drag: give either coefficients or an airframe, not both".into());
                None
            }
            (Some(af), None, None) => {
                let fields = [
                    ck.positive(af.air_density, "drag.airframe.air_density"),
                    ck.positive(af.base_drag_coefficient, "drag.airframe.base_drag_coefficient"),
                    ck.positive(af.wing_area, "drag.airframe.wing_area"),
                    ck.positive(af.oswald_efficiency, "drag.airframe.oswald_efficiency"),
                    ck.positive(af.aspect_ratio, "drag.airframe.aspect_ratio"),
                    ck.positive(af.mass, "drag.airframe.mass"),
                    ck.positive(Some(af.gravity.unwrap_or(lit(DEFAULT_GRAVITY))), "drag.airframe.gravity"),
                ];
                match fields {
                    [Some(air_density), Some(base_drag_coefficient), Some(wing_area), Some(oswald_efficiency), Some(aspect_ratio), Some(mass), Some(gravity)] => {
                        drag_from_physical(&Airframe {
                            air_density,
                            base_drag_coefficient,
                            wing_area,
                            oswald_efficiency,
                            aspect_ratio,
                            mass,
                            gravity,
                        })
                        .ok()
                    }
                    _ => None,
                }
            }
            (None, c1, c2) => {
                let c1 = ck.positive(c1, "drag.parasitic_coefficient");
                let c2 = ck.finite(c2, "drag.induced_coefficient");
                if let Some(c2) = c2 {
                    ck.check(c2 >= T::zero(), || format!("drag.induced_coefficient: must be >= 0, got {c2}"));
                }
                match (c1, c2) {
                    (Some(c1), Some(c2)) if c2 >= T::zero() => Some(DragModel::new(c1, c2)),
                    _ => None,
                }
            }
        },
    };

    // Nodes.
    let raw_nodes = ck.require(raw.nodes.as_ref(), "nodes").cloned().unwrap_or_default();
    if raw.nodes.is_some() && raw_nodes.is_empty() {
        ck.issues.push("nodes: at least one node is required".into());
    }
    let mut nodes = Vec::with_capacity(raw_nodes.len());
    for (i, rn) in raw_nodes.iter().enumerate() {
        let p = format!("nodes[{i}]");
        let mass = ck.positive(rn.mass, &format!("{p}.mass"));
        let altitude = ck.finite(rn.altitude, &format!("{p}.altitude"));
        let lateral = ck.finite(rn.lateral_offset, &format!("{p}.lateral_offset"));
        let data = ck.finite(rn.initial_data, &format!("{p}.initial_data"));
        let buffer = ck.positive(rn.buffer_capacity, &format!("{p}.buffer_capacity"));
        let v_min = ck.finite(rn.v_min, &format!("{p}.v_min"));
        let v_max = ck.finite(rn.v_max, &format!("{p}.v_max"));
        let p_max = ck.positive(rn.p_max, &format!("{p}.p_max"));
        if let Some(d) = data {
            ck.check(d >= T::zero(), || format!("{p}.initial_data: must be >= 0, got {d}"));
            if let Some(m) = buffer {
                ck.check(d <= m, || format!("{p}.initial_data: {d} exceeds buffer_capacity {m}"));
            }
        }
        if let Some(lo) = v_min {
            ck.check(lo >= T::zero(), || format!("{p}.v_min: must be >= 0, got {lo}"));
        }
        if let (Some(lo), Some(hi)) = (v_min, v_max) {
            ck.check(lo <= hi, || format!("{p}.v_min: {lo} exceeds v_max {hi}"));
        }
        let v_init = match (rn.v_init, v_min, v_max) {
            (Some(v), lo, hi) => {
                if let (Some(lo), Some(hi)) = (lo, hi) {
                    ck.check(v >= lo && v <= hi, || format!("{p}.v_init: {v} outside [{lo}, {hi}]"));
                }
                Some(v)
            }
            (None, Some(lo), Some(hi)) => Some((lo + hi) * lit(0.5)),
            _ => None,
        };
        if let Some(v) = v_init {
            if let Some(d) = &drag {
                ck.check(v > T::zero() || d.induced_coefficient == T::zero(), || {
                    format!("{p}.v_init: zero speed is singular for induced drag")
                });
            }
        }
        if let (Some(lo), Some(d)) = (v_min, &drag) {
            ck.check(lo > T::zero() || d.induced_coefficient == T::zero(), || {
                format!("{p}.v_min: zero speed is singular for induced drag")
            });
        }
        let direction = match (rn.direction, rn.q_init, rn.q_final) {
            (Some(z), _, _) => {
                ck.check(z == 1 || z == -1, || format!("{p}.direction: must be +1 or -1, got {z}"));
                z
            }
            (None, Some(a), Some(b)) if b < a => -1,
            _ => 1,
        };
        let zeta: T = if direction < 0 { -T::one() } else { T::one() };
        let (q_init, q_final) = match (rn.q_init, rn.q_final, horizon, v_init) {
            (Some(a), Some(b), _, _) => (Some(a), Some(b)),
            (None, None, Some(t), Some(v)) => {
                let half = zeta * t * v * lit(0.5);
                (Some(-half), Some(half))
            }
            (None, None, _, _) => (None, None),
            _ => {
                ck.issues.push(format!("{p}: give both q_init and q_final or neither"));
                (None, None)
            }
        };
        if let (Some(a), Some(b)) = (q_init, q_final) {
            ck.check(a.is_finite() && b.is_finite(), || format!("{p}: positions must be finite"));
            let step = b - a;
            ck.check(step == T::zero() || (step > T::zero()) == (zeta > T::zero()), || {
                format!("{p}.direction: {direction} disagrees with q_final - q_init = {step}")
            });
        }
        if let (Some(a), Some(l)) = (altitude, lateral) {
            ck.check(a * a + l * l > T::zero(), || {
                format!("{p}: altitude and lateral_offset both zero make the AP link singular")
            });
        }
        if let (
            Some(mass),
            Some(altitude),
            Some(lateral_offset),
            Some(initial_data),
            Some(buffer_capacity),
            Some(v_min),
            Some(v_max),
            Some(v_init),
            Some(q_init),
            Some(q_final),
            Some(p_max),
        ) = (mass, altitude, lateral, data, buffer, v_min, v_max, v_init, q_init, q_final, p_max)
        {
            nodes.push(NodeParams {
                mass,
                altitude,
                lateral_offset,
                initial_data,
                buffer_capacity,
                v_min,
                v_max,
                v_init,
                q_init,
                q_final,
                direction,
                p_max,
            });
        }
    }

    let n = raw_nodes.len();
    if let Some(bw) = &bandwidths {
        ck.check(bw.len() == 1 || bw.len() == n + 1, || {
            format!("channel.bandwidth_per_receiver: need 1 or {} entries, got {}", n + 1, bw.len())
        });
        for (i, b) in bw.iter().enumerate() {
            ck.check(*b > T::zero() && b.is_finite(), || {
                format!("channel.bandwidth_per_receiver[{i}]: must be positive, got {b}")
            });
        }
    }

    // Topology.
    let relaying_enabled = raw.relaying_enabled.unwrap_or(false);
    let mut topology = raw
        .topology
        .clone()
        .unwrap_or_else(|| (1..=n).map(|from| Link { from, to: ACCESS_POINT }).collect());
    let mut seen = BTreeSet::new();
    for link in &topology {
        let ok = link.from >= 1 && link.from <= n && link.to <= n && link.to != link.from;
        ck.check(ok, || format!("topology: invalid link {} -> {}", link.from, link.to));
        ck.check(seen.insert(*link), || format!("topology: duplicate link {} -> {}", link.from, link.to));
        if ok && link.to != ACCESS_POINT {
            ck.check(relaying_enabled, || {
                format!("topology: link {} -> {} needs relaying_enabled", link.from, link.to)
            });
            if nodes.len() == n {
                let (a, b) = (&nodes[link.from - 1], &nodes[link.to - 1]);
                let da = a.altitude - b.altitude;
                let dl = a.lateral_offset - b.lateral_offset;
                ck.check(da * da + dl * dl > T::zero(), || {
                    format!("topology: nodes {} and {} share a track; link gain would be singular", link.from, link.to)
                });
            }
        }
    }
    topology.sort();
    for id in 1..=n {
        ck.check(topology.iter().any(|l| l.from == id), || format!("topology: node {id} has no outgoing link"));
    }

    if !ck.issues.is_empty() {
        return Err(ValidationReport { issues: ck.issues });
    }
    Ok(ScenarioConfig {
        nodes,
        channel: ChannelParams {
            antenna_gain_product: gain.unwrap(),
            path_loss_exponent: alpha.unwrap(),
            noise_power: noise.unwrap(),
            bandwidth_per_receiver: bandwidths.unwrap(),
        },
        drag: drag.unwrap(),
        horizon: horizon.unwrap(),
        knot_count,
        topology,
        relaying_enabled,
    })
}

impl<T: Real> From<&ScenarioConfig<T>> for RawScenario<T> {
    fn from(cfg: &ScenarioConfig<T>) -> Self {
        RawScenario {
            nodes: Some(
                cfg.nodes
                    .iter()
                    .map(|n| RawNode {
                        mass: Some(n.mass),
                        altitude: Some(n.altitude),
                        lateral_offset: Some(n.lateral_offset),
                        initial_data: Some(n.initial_data),
                        buffer_capacity: Some(n.buffer_capacity),
                        v_min: Some(n.v_min),
                        v_max: Some(n.v_max),
                        v_init: Some(n.v_init),
                        q_init: Some(n.q_init),
                        q_final: Some(n.q_final),
                        direction: Some(n.direction),
                        p_max: Some(n.p_max),
                    })
                    .collect(),
            ),
            channel: Some(RawChannel {
                antenna_gain_product: Some(cfg.channel.antenna_gain_product),
                path_loss_exponent: Some(cfg.channel.path_loss_exponent),
                noise_power: Some(cfg.channel.noise_power),
                bandwidth_per_receiver: Some(cfg.channel.bandwidth_per_receiver.clone()),
            }),
            drag: Some(RawDrag {
                parasitic_coefficient: Some(cfg.drag.parasitic_coefficient),
                induced_coefficient: Some(cfg.drag.induced_coefficient),
                airframe: None,
            }),
            horizon: Some(cfg.horizon),
            knot_count: Some(cfg.knot_count),
            topology: Some(cfg.topology.clone()),
            relaying_enabled: Some(cfg.relaying_enabled),
        }
    }
}

/// Parses and validates a JSON scenario document.
pub fn scenario_from_json(text: &str) -> Result<ScenarioConfig<f64>, ValidationReport> {
    let raw: RawScenario<f64> = serde_json::from_str(text).map_err(|e| ValidationReport {
        issues: vec![format!("malformed scenario JSON: {e}")],
    })?;
    validate_scenario(&raw)
}
