//! Direct transcription of the joint power/speed problem on a uniform grid.
//!
//! Controls and states sit at the `K + 1` knots; buffer and position
//! dynamics use the trapezoidal rule. Thrust and acceleration never appear
//! as variables: the propulsion cost is written as `∫ v·Ω(v) dt` plus the
//! terminal kinetic energy `m/2·v(T)²`. The constant `−m/2·v(0)²` is left
//! out of the minimized objective and added back by [`evaluate_energy`].
//!
//! Internally rates are in Mbit/s, buffers in Mbit, positions in km and the
//! objective in kJ. [`Solution`] is always in SI units.

use serde::Serialize;
use thiserror::Error;

use crate::capacity::{enumerate_constraints, CapacityError, DEFAULT_SUBSET_CAP};
use crate::model::{gain_and_derivatives, Link, ScenarioConfig, ACCESS_POINT};
use crate::scalar::{count, lit, to_f64, trapezoid_weights, uniform_knots, Real};
use crate::solver::{ConstrainedProblem, LinearRow, SolveStats};

/// Rates and buffer contents are carried in megabits.
pub const RATE_SCALE: f64 = 1e-6;
/// Positions are carried in kilometres.
pub const POSITION_SCALE: f64 = 1e-3;
/// The objective is carried in kilojoules.
pub const ENERGY_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error(
        "node {node}: covering {distance:.3} m in the horizon needs a mean speed of {mean_speed:.4} m/s, \
         reachable range is [{reachable_min:.3}, {reachable_max:.3}] m"
    )]
    Kinematics {
        node: usize,
        distance: f64,
        mean_speed: f64,
        reachable_min: f64,
        reachable_max: f64,
    },
    #[error("boundary data are inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

/// One kind of per-knot decision quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Quantity {
    /// Transmit power on a link, indexed into the topology.
    Power(usize),
    /// Data rate on a link, indexed into the topology.
    Rate(usize),
    /// Buffer content of a node (1-based id).
    Buffer(usize),
    Position(usize),
    Speed(usize),
}

/// Either a decision variable or a value fixed by boundary data or presolve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot<T> {
    Free(usize),
    Fixed(T),
}

impl<T: Real> Slot<T> {
    #[inline]
    pub fn value(&self, x: &[T]) -> T {
        match *self {
            Slot::Free(i) => x[i],
            Slot::Fixed(v) => v,
        }
    }

    #[inline]
    pub fn free(&self) -> Option<usize> {
        match *self {
            Slot::Free(i) => Some(i),
            Slot::Fixed(_) => None,
        }
    }
}

/// Maps `(quantity, knot)` to a slot. Slots are knot-major so the KKT
/// matrix stays banded.
#[derive(Debug, Clone)]
pub struct VariableLayout<T> {
    links: Vec<Link>,
    node_count: usize,
    knots: usize,
    slots: Vec<Slot<T>>,
    free_to_slot: Vec<usize>,
}

impl<T: Real> VariableLayout<T> {
    fn per_knot(&self) -> usize {
        2 * self.links.len() + 3 * self.node_count
    }

    fn offset(&self, q: Quantity) -> usize {
        let l = self.links.len();
        match q {
            Quantity::Power(i) => 2 * i,
            Quantity::Rate(i) => 2 * i + 1,
            Quantity::Buffer(n) => 2 * l + 3 * (n - 1),
            Quantity::Position(n) => 2 * l + 3 * (n - 1) + 1,
            Quantity::Speed(n) => 2 * l + 3 * (n - 1) + 2,
        }
    }

    pub fn slot_index(&self, q: Quantity, knot: usize) -> usize {
        knot * self.per_knot() + self.offset(q)
    }

    pub fn slot(&self, q: Quantity, knot: usize) -> Slot<T> {
        self.slots[self.slot_index(q, knot)]
    }

    /// `(quantity, knot)` of a slot index.
    pub fn describe(&self, slot: usize) -> (Quantity, usize) {
        let pk = self.per_knot();
        let (knot, off) = (slot / pk, slot % pk);
        let l = self.links.len();
        let q = if off < 2 * l {
            if off % 2 == 0 {
                Quantity::Power(off / 2)
            } else {
                Quantity::Rate(off / 2)
            }
        } else {
            let r = off - 2 * l;
            let node = r / 3 + 1;
            match r % 3 {
                0 => Quantity::Buffer(node),
                1 => Quantity::Position(node),
                _ => Quantity::Speed(node),
            }
        };
        (q, knot)
    }

    /// Total number of slots, fixed ones included.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn free_count(&self) -> usize {
        self.free_to_slot.len()
    }

    pub fn knots(&self) -> usize {
        self.knots
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Slot index of free variable `i`.
    pub fn slot_of_free(&self, i: usize) -> usize {
        self.free_to_slot[i]
    }

    /// Factor converting SI values of `q` to internal units.
    pub fn scale(q: Quantity) -> T {
        match q {
            Quantity::Rate(_) | Quantity::Buffer(_) => lit(RATE_SCALE),
            Quantity::Position(_) => lit(POSITION_SCALE),
            Quantity::Power(_) | Quantity::Speed(_) => T::one(),
        }
    }

    /// Values of every slot in internal units.
    pub fn expand(&self, x: &[T]) -> Vec<T> {
        self.slots.iter().map(|s| s.value(x)).collect()
    }
}

/// One transmitter's contribution to a capacity row.
#[derive(Debug, Clone)]
pub struct CapacityMember<T> {
    pub node: usize,
    pub power: Slot<T>,
    pub rate: Slot<T>,
    /// `a² + δ²` of the link, m².
    pub offset_sq: T,
    pub tx_position: Slot<T>,
    /// `None` for the access point, which sits at the origin.
    pub rx_position: Option<Slot<T>>,
}

/// `Σ r − B log2(1 + (G/σ²) Σ p·η(q_tx − q_rx))` at one knot, in Mbit/s.
#[derive(Debug, Clone)]
pub struct CapacityRow<T> {
    pub knot: usize,
    pub receiver: usize,
    pub members: Vec<CapacityMember<T>>,
    /// Bandwidth in the scaled rate unit.
    pub bandwidth: T,
    /// `G / σ²`, per Watt.
    pub snr_per_watt: T,
    pub exponent: T,
}

fn push_merged<T: Real>(list: &mut Vec<(usize, T)>, var: usize, value: T) {
    if let Some(e) = list.iter_mut().find(|e| e.0 == var) {
        e.1 += value;
    } else {
        list.push((var, value));
    }
}

impl<T: Real> CapacityRow<T> {
    pub fn value(&self, x: &[T]) -> T {
        self.evaluate(x, None, None)
    }

    /// Value, optionally with the sparse gradient and the Hessian as a list
    /// of `(i, j, v)` with each unordered pair appearing once.
    pub fn evaluate(
        &self,
        x: &[T],
        grad: Option<&mut Vec<(usize, T)>>,
        hess: Option<&mut Vec<(usize, usize, T)>>,
    ) -> T {
        let to_m = T::one() / lit::<T>(POSITION_SCALE);
        let kappa = self.snr_per_watt;
        let mut rate_sum = T::zero();
        let mut u = T::zero();
        let mut local: Vec<(T, T, T, T)> = Vec::with_capacity(self.members.len());
        for m in &self.members {
            rate_sum += m.rate.value(x);
            let rx = m.rx_position.map_or(T::zero(), |s| s.value(x));
            let sep = (m.tx_position.value(x) - rx) * to_m;
            let (e, e1, e2) = gain_and_derivatives(T::one(), self.exponent, m.offset_sq, sep);
            let p = m.power.value(x);
            u += kappa * p * e;
            local.push((p, e, e1, e2));
        }
        let c = self.bandwidth / T::LN_2();
        let value = rate_sum - c * u.ln_1p();
        if grad.is_none() && hess.is_none() {
            return value;
        }
        let one_u = T::one() + u;
        // du: gradient of u over free variables.
        let mut du: Vec<(usize, T)> = Vec::with_capacity(2 * self.members.len() + 1);
        for (m, &(p, e, e1, _)) in self.members.iter().zip(&local) {
            if let Some(i) = m.power.free() {
                push_merged(&mut du, i, kappa * e);
            }
            let dq = kappa * p * e1 * to_m;
            if let Some(i) = m.tx_position.free() {
                push_merged(&mut du, i, dq);
            }
            if let Some(i) = m.rx_position.and_then(|s| s.free()) {
                push_merged(&mut du, i, -dq);
            }
        }
        if let Some(g) = grad {
            g.clear();
            for m in &self.members {
                if let Some(i) = m.rate.free() {
                    push_merged(g, i, T::one());
                }
            }
            let scale = -c / one_u;
            for &(i, d) in &du {
                push_merged(g, i, scale * d);
            }
        }
        if let Some(h) = hess {
            h.clear();
            let d1 = -c / one_u;
            let d2 = c / (one_u * one_u);
            let to_m2 = to_m * to_m;
            for (m, &(p, _, e1, e2)) in self.members.iter().zip(&local) {
                let pv = m.power.free();
                let tx = m.tx_position.free();
                let rx = m.rx_position.and_then(|s| s.free());
                let cross = d1 * kappa * e1 * to_m;
                let curv = d1 * kappa * p * e2 * to_m2;
                if let Some(pi) = pv {
                    if let Some(t) = tx {
                        h.push((pi, t, cross));
                    }
                    if let Some(r) = rx {
                        h.push((pi, r, -cross));
                    }
                }
                if let Some(t) = tx {
                    h.push((t, t, curv));
                    if let Some(r) = rx {
                        h.push((t, r, -curv));
                    }
                }
                if let Some(r) = rx {
                    h.push((r, r, curv));
                }
            }
            for a in 0..du.len() {
                for b in 0..=a {
                    h.push((du[a].0, du[b].0, d2 * du[a].1 * du[b].1));
                }
            }
        }
        value
    }

    fn variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = Vec::new();
        for m in &self.members {
            for s in [Some(m.power), Some(m.rate), Some(m.tx_position), m.rx_position].into_iter().flatten() {
                if let Some(i) = s.free() {
                    if !v.contains(&i) {
                        v.push(i);
                    }
                }
            }
        }
        v
    }
}

/// Inequality `g(x) ≤ 0` of the transcribed program.
#[derive(Debug, Clone)]
pub enum Inequality<T> {
    /// `bound − x ≤ 0`.
    Lower { var: usize, bound: T },
    /// `x − bound ≤ 0`.
    Upper { var: usize, bound: T },
    /// `Σ a·x − rhs ≤ 0`.
    Linear { terms: Vec<(usize, T)>, rhs: T },
    Capacity(CapacityRow<T>),
}

impl<T: Real> Inequality<T> {
    pub fn value(&self, x: &[T]) -> T {
        match self {
            Inequality::Lower { var, bound } => *bound - x[*var],
            Inequality::Upper { var, bound } => x[*var] - *bound,
            Inequality::Linear { terms, rhs } => terms.iter().map(|&(i, a)| a * x[i]).sum::<T>() - *rhs,
            Inequality::Capacity(row) => row.value(x),
        }
    }

    /// True for every constraint that is not a simple variable bound.
    pub fn is_general(&self) -> bool {
        matches!(self, Inequality::Linear { .. } | Inequality::Capacity(_))
    }
}

/// Separable objective contribution of one free variable:
/// `linear·x + drag_weight·x·Ω(x) + quadratic·x²`.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveTerm<T> {
    pub var: usize,
    pub linear: T,
    pub drag_weight: T,
    pub quadratic: T,
}

/// The transcribed program, ready for [`crate::solver::solve`].
#[derive(Debug, Clone)]
pub struct ConvexProgram<T> {
    scenario: ScenarioConfig<T>,
    layout: VariableLayout<T>,
    knot_times: Vec<T>,
    weights: Vec<T>,
    objective_terms: Vec<ObjectiveTerm<T>>,
    objective_constant: T,
    inequalities: Vec<Inequality<T>>,
    equalities: Vec<LinearRow<T>>,
    initial: Vec<T>,
    active: Vec<bool>,
}

struct Flows<T> {
    /// Initial constant rate on node-to-node links, bits/s.
    relay: Vec<T>,
    inflow: Vec<T>,
    outflow: Vec<T>,
    active: Vec<bool>,
}

/// Small circulating relay flows that give every active link a strictly
/// positive starting rate. Each node forwards a tenth of what it holds.
fn initial_flows<T: Real>(cfg: &ScenarioConfig<T>) -> Flows<T> {
    let n = cfg.node_count();
    let links = &cfg.topology;
    let relay_count: Vec<usize> = (0..=n)
        .map(|id| links.iter().filter(|l| l.from == id && l.to != ACCESS_POINT).count())
        .collect();
    let mut relay = vec![T::zero(); links.len()];
    let mut inflow = vec![T::zero(); n + 1];
    let tenth = lit::<T>(0.1);
    for _ in 0..200 {
        for (li, l) in links.iter().enumerate() {
            if l.to != ACCESS_POINT {
                let held = cfg.node(l.from).initial_data / cfg.horizon + inflow[l.from];
                relay[li] = tenth * held / count(relay_count[l.from]);
            }
        }
        let mut next = vec![T::zero(); n + 1];
        for (li, l) in links.iter().enumerate() {
            if l.to != ACCESS_POINT {
                next[l.to] += relay[li];
            }
        }
        inflow = next;
    }
    let mut outflow = vec![T::zero(); n + 1];
    for (li, l) in links.iter().enumerate() {
        outflow[l.from] += relay[li];
    }
    let active = (0..=n)
        .map(|id| id > 0 && (cfg.node(id).initial_data > T::zero() || inflow[id] > T::zero()))
        .collect();
    Flows {
        relay,
        inflow,
        outflow,
        active,
    }
}

struct RawRow<T> {
    terms: Vec<(usize, T)>,
    rhs: T,
    what: String,
}

/// Transcribes a validated scenario.
///
/// Boundary values become fixed slots; a speed range that leaves no slack
/// fixes the whole speed profile, and rows of the dynamics with a single
/// unfixed slot fix that slot too (so a fixed-speed node has fixed
/// positions). Nodes with no data and no incoming links are switched off.
pub fn build_program<T: Real>(cfg: &ScenarioConfig<T>) -> Result<ConvexProgram<T>, BuildError> {
    let intervals = cfg.knot_count;
    let knots = intervals + 1;
    let times = uniform_knots(cfg.horizon, intervals);
    let weights = trapezoid_weights(&times);
    let h = cfg.horizon / count(intervals);
    let half_h = h * lit(0.5);
    let n = cfg.node_count();
    let links = cfg.topology.clone();
    let rs = lit::<T>(RATE_SCALE);
    let ps = lit::<T>(POSITION_SCALE);
    let es = lit::<T>(ENERGY_SCALE);
    let flows = initial_flows(cfg);

    let mut layout = VariableLayout {
        links: links.clone(),
        node_count: n,
        knots,
        slots: Vec::new(),
        free_to_slot: Vec::new(),
    };
    let total = knots * layout.per_knot();
    let mut fixed: Vec<Option<T>> = vec![None; total];
    let idx = |q: Quantity, k: usize| k * (2 * links.len() + 3 * n) + layout.offset(q);

    // Boundary data and kinematic reachability.
    let w0 = weights[0];
    let rest = cfg.horizon - w0;
    for id in 1..=n {
        let node = cfg.node(id);
        fixed[idx(Quantity::Buffer(id), 0)] = Some(node.initial_data * rs);
        fixed[idx(Quantity::Buffer(id), intervals)] = Some(T::zero());
        fixed[idx(Quantity::Position(id), 0)] = Some(node.q_init * ps);
        fixed[idx(Quantity::Position(id), intervals)] = Some(node.q_final * ps);
        fixed[idx(Quantity::Speed(id), 0)] = Some(node.v_init);

        let distance = node.path_length();
        let lo = w0 * node.v_init + node.v_min * rest;
        let hi = w0 * node.v_init + node.v_max * rest;
        let tol = lit::<T>(1e-9) * distance.max(T::one());
        if distance < lo - tol || distance > hi + tol {
            return Err(BuildError::Kinematics {
                node: id,
                distance: to_f64(distance),
                mean_speed: to_f64(distance / cfg.horizon),
                reachable_min: to_f64(lo),
                reachable_max: to_f64(hi),
            });
        }
        let pinned = if (distance - lo).abs() <= tol {
            Some(node.v_min)
        } else if (distance - hi).abs() <= tol {
            Some(node.v_max)
        } else {
            None
        };
        if let Some(v) = pinned {
            for k in 1..knots {
                fixed[idx(Quantity::Speed(id), k)] = Some(v);
            }
        }
        if !flows.active[id] {
            for k in 0..knots {
                fixed[idx(Quantity::Buffer(id), k)] = Some(T::zero());
            }
            for (li, l) in links.iter().enumerate() {
                if l.from == id {
                    for k in 0..knots {
                        fixed[idx(Quantity::Power(li), k)] = Some(T::zero());
                        fixed[idx(Quantity::Rate(li), k)] = Some(T::zero());
                    }
                }
            }
        }
    }

    // Dynamics rows over slots.
    let mut rows: Vec<RawRow<T>> = Vec::new();
    for k in 0..intervals {
        for id in 1..=n {
            let mut terms = vec![
                (idx(Quantity::Buffer(id), k + 1), T::one()),
                (idx(Quantity::Buffer(id), k), -T::one()),
            ];
            for (li, l) in links.iter().enumerate() {
                let sign = if l.from == id {
                    T::one()
                } else if l.to == id {
                    -T::one()
                } else {
                    continue;
                };
                terms.push((idx(Quantity::Rate(li), k), sign * half_h));
                terms.push((idx(Quantity::Rate(li), k + 1), sign * half_h));
            }
            rows.push(RawRow {
                terms,
                rhs: T::zero(),
                what: format!("buffer of node {id}, interval {k}"),
            });
            let step = -cfg.node(id).zeta() * half_h * ps;
            rows.push(RawRow {
                terms: vec![
                    (idx(Quantity::Position(id), k + 1), T::one()),
                    (idx(Quantity::Position(id), k), -T::one()),
                    (idx(Quantity::Speed(id), k), step),
                    (idx(Quantity::Speed(id), k + 1), step),
                ],
                rhs: T::zero(),
                what: format!("position of node {id}, interval {k}"),
            });
        }
    }

    // Singleton-row presolve.
    let mut alive = vec![true; rows.len()];
    loop {
        let mut changed = false;
        for (ri, row) in rows.iter().enumerate() {
            if !alive[ri] {
                continue;
            }
            let mut open = None;
            let mut open_count = 0;
            let mut acc = T::zero();
            let mut mag = T::zero();
            for &(s, a) in &row.terms {
                match fixed[s] {
                    Some(v) => {
                        acc += a * v;
                        mag = mag.max((a * v).abs());
                    }
                    None => {
                        open_count += 1;
                        open = Some((s, a));
                    }
                }
            }
            match open_count {
                0 => {
                    let resid = acc - row.rhs;
                    if resid.abs() > lit::<T>(1e-9) * (T::one() + mag) {
                        return Err(BuildError::Inconsistent(format!(
                            "{} is violated by {:.3e}",
                            row.what,
                            to_f64(resid)
                        )));
                    }
                    alive[ri] = false;
                    changed = true;
                }
                1 => {
                    let (s, a) = open.unwrap();
                    fixed[s] = Some((row.rhs - acc) / a);
                    alive[ri] = false;
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }

    // Fixed values must respect their bounds.
    for (s, v) in fixed.iter().enumerate() {
        let Some(v) = *v else { continue };
        let (q, k) = layout.describe(s);
        let bad = match q {
            Quantity::Buffer(id) => v < T::zero() || v > cfg.node(id).buffer_capacity * rs * (T::one() + lit(1e-12)),
            Quantity::Rate(_) | Quantity::Power(_) => v < T::zero(),
            Quantity::Speed(id) => {
                let node = cfg.node(id);
                k > 0 && (v < node.v_min * (T::one() - lit(1e-12)) || v > node.v_max * (T::one() + lit(1e-12)))
            }
            Quantity::Position(_) => false,
        };
        if bad {
            return Err(BuildError::Inconsistent(format!("{q:?} at knot {k} is pinned to {v} outside its bounds")));
        }
    }

    for (s, f) in fixed.iter().enumerate() {
        match f {
            Some(v) => layout.slots.push(Slot::Fixed(*v)),
            None => {
                layout.slots.push(Slot::Free(layout.free_to_slot.len()));
                layout.free_to_slot.push(s);
            }
        }
    }
    let nfree = layout.free_to_slot.len();

    // Objective and bounds.
    let mut objective_terms = Vec::new();
    let mut objective_constant = T::zero();
    let mut inequalities = Vec::new();
    let half = lit::<T>(0.5);
    for (s, slot) in layout.slots.iter().enumerate() {
        let (q, k) = layout.describe(s);
        let w = weights[k] * es;
        match q {
            Quantity::Power(li) => match *slot {
                Slot::Free(i) => {
                    objective_terms.push(ObjectiveTerm {
                        var: i,
                        linear: w,
                        drag_weight: T::zero(),
                        quadratic: T::zero(),
                    });
                    inequalities.push(Inequality::Lower { var: i, bound: T::zero() });
                    let from = links[li].from;
                    let single = links.iter().filter(|l| l.from == from).count() == 1;
                    if single {
                        inequalities.push(Inequality::Upper {
                            var: i,
                            bound: cfg.node(from).p_max,
                        });
                    }
                }
                Slot::Fixed(v) => objective_constant += w * v,
            },
            Quantity::Rate(_) => {
                if let Slot::Free(i) = *slot {
                    inequalities.push(Inequality::Lower { var: i, bound: T::zero() });
                }
            }
            Quantity::Buffer(id) => {
                if let Slot::Free(i) = *slot {
                    inequalities.push(Inequality::Lower { var: i, bound: T::zero() });
                    inequalities.push(Inequality::Upper {
                        var: i,
                        bound: cfg.node(id).buffer_capacity * rs,
                    });
                }
            }
            Quantity::Position(_) => {}
            Quantity::Speed(id) => {
                let node = cfg.node(id);
                let terminal = if k == intervals { half * node.mass * es } else { T::zero() };
                match *slot {
                    Slot::Free(i) => {
                        objective_terms.push(ObjectiveTerm {
                            var: i,
                            linear: T::zero(),
                            drag_weight: w,
                            quadratic: terminal,
                        });
                        inequalities.push(Inequality::Lower { var: i, bound: node.v_min });
                        inequalities.push(Inequality::Upper { var: i, bound: node.v_max });
                    }
                    Slot::Fixed(v) => {
                        objective_constant += w * v * cfg.drag.force_unchecked(v) + terminal * v * v;
                    }
                }
            }
        }
    }

    // Shared power budget when a node has several outgoing links.
    for id in 1..=n {
        let out: Vec<usize> = (0..links.len()).filter(|&li| links[li].from == id).collect();
        if out.len() < 2 {
            continue;
        }
        for k in 0..knots {
            let mut terms = Vec::new();
            let mut rhs = cfg.node(id).p_max;
            for &li in &out {
                match layout.slot(Quantity::Power(li), k) {
                    Slot::Free(i) => terms.push((i, T::one())),
                    Slot::Fixed(v) => rhs -= v,
                }
            }
            if !terms.is_empty() {
                inequalities.push(Inequality::Linear { terms, rhs });
            }
        }
    }

    // Capacity regions.
    let kappa = cfg.channel.antenna_gain_product / cfg.channel.noise_power;
    for receiver in cfg.receivers() {
        let transmitters: Vec<usize> = cfg
            .transmitters_to(receiver)
            .into_iter()
            .filter(|&t| flows.active[t])
            .collect();
        if transmitters.is_empty() {
            continue;
        }
        let bw = cfg.channel.bandwidth(receiver) * rs;
        let subsets = enumerate_constraints(receiver, &transmitters, bw, DEFAULT_SUBSET_CAP)?;
        for k in 0..knots {
            for sub in &subsets {
                let members = sub
                    .subset
                    .iter()
                    .map(|&tx| {
                        let li = links.iter().position(|l| l.from == tx && l.to == receiver).unwrap();
                        let (a, d) = cfg.link_offsets(links[li]);
                        CapacityMember {
                            node: tx,
                            power: layout.slot(Quantity::Power(li), k),
                            rate: layout.slot(Quantity::Rate(li), k),
                            offset_sq: a * a + d * d,
                            tx_position: layout.slot(Quantity::Position(tx), k),
                            rx_position: (receiver != ACCESS_POINT)
                                .then(|| layout.slot(Quantity::Position(receiver), k)),
                        }
                    })
                    .collect();
                inequalities.push(Inequality::Capacity(CapacityRow {
                    knot: k,
                    receiver,
                    members,
                    bandwidth: bw,
                    snr_per_watt: kappa,
                    exponent: cfg.channel.path_loss_exponent,
                }));
            }
        }
    }

    // Remaining equality rows in terms of free variables.
    let mut equalities = Vec::new();
    for (ri, row) in rows.iter().enumerate() {
        if !alive[ri] {
            continue;
        }
        let mut terms = Vec::new();
        let mut rhs = row.rhs;
        for &(s, a) in &row.terms {
            match layout.slots[s] {
                Slot::Free(i) => terms.push((i, a)),
                Slot::Fixed(v) => rhs -= a * v,
            }
        }
        equalities.push(LinearRow { terms, rhs });
    }

    let mut program = ConvexProgram {
        scenario: cfg.clone(),
        layout,
        knot_times: times,
        weights,
        objective_terms,
        objective_constant,
        inequalities,
        equalities,
        initial: vec![T::zero(); nfree],
        active: flows.active.clone(),
    };
    program.initial = program.construct_initial_point(&flows);
    Ok(program)
}

impl<T: Real> ConvexProgram<T> {
    pub fn scenario(&self) -> &ScenarioConfig<T> {
        &self.scenario
    }

    pub fn layout(&self) -> &VariableLayout<T> {
        &self.layout
    }

    pub fn knot_times(&self) -> &[T] {
        &self.knot_times
    }

    /// Trapezoidal quadrature weights, seconds.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn inequalities(&self) -> &[Inequality<T>] {
        &self.inequalities
    }

    pub fn objective_terms(&self) -> &[ObjectiveTerm<T>] {
        &self.objective_terms
    }

    /// Number of slots, fixed ones included.
    pub fn variable_count(&self) -> usize {
        self.layout.len()
    }

    pub fn free_count(&self) -> usize {
        self.layout.free_count()
    }

    /// Whether node `id` takes part in transmission at all.
    pub fn is_active(&self, id: usize) -> bool {
        self.active[id]
    }

    /// Capacity rows at `knot`.
    pub fn capacity_rows_at(&self, knot: usize) -> Vec<&CapacityRow<T>> {
        self.inequalities
            .iter()
            .filter_map(|c| match c {
                Inequality::Capacity(r) if r.knot == knot => Some(r),
                _ => None,
            })
            .collect()
    }

    /// Point satisfying the equality rows exactly and every variable bound
    /// strictly. Capacity rows may be violated; the solver's feasibility
    /// phase takes it from there.
    pub fn initial_point(&self) -> &[T] {
        &self.initial
    }

    fn construct_initial_point(&self, flows: &Flows<T>) -> Vec<T> {
        let cfg = &self.scenario;
        let layout = &self.layout;
        let t_end = cfg.horizon;
        let rs = lit::<T>(RATE_SCALE);
        let ps = lit::<T>(POSITION_SCALE);
        let half = lit::<T>(0.5);
        let knots = layout.knots;
        let mut full: Vec<T> = layout
            .slots
            .iter()
            .map(|s| match *s {
                Slot::Fixed(v) => v,
                Slot::Free(_) => T::zero(),
            })
            .collect();
        let set = |full: &mut Vec<T>, q: Quantity, k: usize, v: T| {
            let s = layout.slot_index(q, k);
            if let Slot::Free(_) = layout.slots[s] {
                full[s] = v;
            }
        };

        for id in 1..=cfg.node_count() {
            let node = cfg.node(id);
            // Uniform speed after the first knot, just enough to cover the path.
            let cruise = (node.path_length() - self.weights[0] * node.v_init) / (t_end - self.weights[0]);
            for k in 1..knots {
                set(&mut full, Quantity::Speed(id), k, cruise);
            }
            let mut q = node.q_init;
            let mut prev_v = full[layout.slot_index(Quantity::Speed(id), 0)];
            for k in 1..knots {
                let v = full[layout.slot_index(Quantity::Speed(id), k)];
                q += node.zeta() * (self.knot_times[k] - self.knot_times[k - 1]) * half * (prev_v + v);
                set(&mut full, Quantity::Position(id), k, q * ps);
                prev_v = v;
            }
            if !self.active[id] {
                continue;
            }
            // Buffer drains along D(1 − t/T) + γ·t(T − t) with linear outflow.
            let data = node.initial_data;
            let inflow = flows.inflow[id];
            let gamma = inflow / (lit::<T>(2.0) * t_end);
            for (k, &t) in self.knot_times.iter().enumerate() {
                let s = data * (T::one() - t / t_end) + gamma * t * (t_end - t);
                set(&mut full, Quantity::Buffer(id), k, s * rs);
                let total_out = inflow * half + data / t_end + inflow * t / t_end;
                for (li, l) in layout.links.iter().enumerate() {
                    if l.from != id {
                        continue;
                    }
                    let r = if l.to == ACCESS_POINT {
                        total_out - flows.outflow[id]
                    } else {
                        flows.relay[li]
                    };
                    set(&mut full, Quantity::Rate(li), k, r * rs);
                }
            }
        }

        // Powers: invert the single-user rate with some margin.
        let kappa = cfg.channel.antenna_gain_product / cfg.channel.noise_power;
        let two = lit::<T>(2.0);
        for (li, l) in layout.links.iter().enumerate() {
            let node = cfg.node(l.from);
            let fan_out = count::<T>(layout.links.iter().filter(|m| m.from == l.from).count());
            let (a, d) = cfg.link_offsets(*l);
            for k in 0..knots {
                let tx = full[layout.slot_index(Quantity::Position(l.from), k)] / ps;
                let rx = if l.to == ACCESS_POINT {
                    T::zero()
                } else {
                    full[layout.slot_index(Quantity::Position(l.to), k)] / ps
                };
                let (eta, _, _) = gain_and_derivatives(T::one(), cfg.channel.path_loss_exponent, a * a + d * d, tx - rx);
                let rate = full[layout.slot_index(Quantity::Rate(li), k)] / rs;
                let needed = (two.powf(rate / cfg.channel.bandwidth(l.to)) - T::one()) / (kappa * eta) * lit(1.25);
                let cap = node.p_max / fan_out;
                let p = needed.max(lit::<T>(1e-3) * cap).min(lit::<T>(0.9) * cap);
                set(&mut full, Quantity::Power(li), k, p);
            }
        }

        layout.free_to_slot.iter().map(|&s| full[s]).collect()
    }

    /// Minimized objective in internal units (kJ), fixed slots included.
    pub fn objective_value(&self, x: &[T]) -> T {
        let mut f = self.objective_constant;
        for t in &self.objective_terms {
            let v = x[t.var];
            f += t.linear * v + t.quadratic * v * v;
            if t.drag_weight != T::zero() {
                f += t.drag_weight * v * self.scenario.drag.force_unchecked(v);
            }
        }
        f
    }
}

impl<T: Real> ConstrainedProblem<T> for ConvexProgram<T> {
    fn dimension(&self) -> usize {
        self.layout.free_count()
    }

    fn objective(&self, x: &[T]) -> T {
        self.objective_value(x)
    }

    fn objective_gradient(&self, x: &[T], grad: &mut [T]) {
        grad.iter_mut().for_each(|g| *g = T::zero());
        let two = lit::<T>(2.0);
        for t in &self.objective_terms {
            let v = x[t.var];
            let mut g = t.linear + two * t.quadratic * v;
            if t.drag_weight != T::zero() {
                g += t.drag_weight * self.scenario.drag.power_derivatives(v).1;
            }
            grad[t.var] += g;
        }
    }

    fn objective_hessian(&self, x: &[T], out: &mut Vec<(usize, usize, T)>) {
        out.clear();
        let two = lit::<T>(2.0);
        for t in &self.objective_terms {
            let mut h = two * t.quadratic;
            if t.drag_weight != T::zero() {
                h += t.drag_weight * self.scenario.drag.power_derivatives(x[t.var]).2;
            }
            if h != T::zero() {
                out.push((t.var, t.var, h));
            }
        }
    }

    fn inequality_count(&self) -> usize {
        self.inequalities.len()
    }

    fn inequality_values(&self, x: &[T], out: &mut [T]) {
        for (o, c) in out.iter_mut().zip(&self.inequalities) {
            *o = c.value(x);
        }
    }

    fn inequality_derivatives(
        &self,
        i: usize,
        x: &[T],
        grad: &mut Vec<(usize, T)>,
        hess: &mut Vec<(usize, usize, T)>,
    ) -> T {
        grad.clear();
        hess.clear();
        match &self.inequalities[i] {
            Inequality::Lower { var, bound } => {
                grad.push((*var, -T::one()));
                *bound - x[*var]
            }
            Inequality::Upper { var, bound } => {
                grad.push((*var, T::one()));
                x[*var] - *bound
            }
            Inequality::Linear { terms, rhs } => {
                grad.extend_from_slice(terms);
                terms.iter().map(|&(j, a)| a * x[j]).sum::<T>() - *rhs
            }
            Inequality::Capacity(row) => row.evaluate(x, Some(grad), Some(hess)),
        }
    }

    fn inequality_variables(&self, i: usize) -> Vec<usize> {
        match &self.inequalities[i] {
            Inequality::Lower { var, .. } | Inequality::Upper { var, .. } => vec![*var],
            Inequality::Linear { terms, .. } => terms.iter().map(|t| t.0).collect(),
            Inequality::Capacity(row) => row.variables(),
        }
    }

    fn is_general_inequality(&self, i: usize) -> bool {
        self.inequalities[i].is_general()
    }

    fn equalities(&self) -> &[LinearRow<T>] {
        &self.equalities
    }
}

// ---------------------------------------------------------------------------
// Solutions and post-processing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct LinkTrajectory<T> {
    pub link: Link,
    /// Watts per knot.
    pub power: Vec<T>,
    /// bits/s per knot.
    pub rate: Vec<T>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeTrajectory<T> {
    pub id: usize,
    /// bits.
    pub buffer: Vec<T>,
    /// m.
    pub position: Vec<T>,
    /// m/s.
    pub speed: Vec<T>,
    /// Recovered thrust, N.
    pub thrust: Vec<T>,
}

/// Solved trajectories in SI units.
#[derive(Debug, Clone, Serialize)]
pub struct Solution<T> {
    pub knot_times: Vec<T>,
    pub links: Vec<LinkTrajectory<T>>,
    pub nodes: Vec<NodeTrajectory<T>>,
    /// Minimized objective in J (omits the initial kinetic energy).
    pub objective: T,
    pub stats: SolveStats<T>,
}

impl<T: Real> Solution<T> {
    /// Unpacks a free-variable vector of `program`.
    pub fn from_point(program: &ConvexProgram<T>, x: &[T], stats: SolveStats<T>) -> Self {
        let layout = &program.layout;
        let full = layout.expand(x);
        let knots = layout.knots;
        let series = |q: Quantity| -> Vec<T> {
            let scale = VariableLayout::<T>::scale(q);
            (0..knots).map(|k| full[layout.slot_index(q, k)] / scale).collect()
        };
        let links = layout
            .links
            .iter()
            .enumerate()
            .map(|(li, &link)| LinkTrajectory {
                link,
                power: series(Quantity::Power(li)),
                rate: series(Quantity::Rate(li)),
            })
            .collect();
        let nodes = (1..=layout.node_count)
            .map(|id| NodeTrajectory {
                id,
                buffer: series(Quantity::Buffer(id)),
                position: series(Quantity::Position(id)),
                speed: series(Quantity::Speed(id)),
                thrust: Vec::new(),
            })
            .collect();
        let mut sol = Solution {
            knot_times: program.knot_times.clone(),
            links,
            nodes,
            objective: program.objective_value(x) / lit(ENERGY_SCALE),
            stats,
        };
        let thrust = recover_thrust(&program.scenario, &sol);
        for (node, t) in sol.nodes.iter_mut().zip(thrust.nodes) {
            node.thrust = t.thrust;
        }
        sol
    }

    pub fn link(&self, from: usize, to: usize) -> Option<&LinkTrajectory<T>> {
        self.links.iter().find(|l| l.link.from == from && l.link.to == to)
    }

    pub fn node(&self, id: usize) -> &NodeTrajectory<T> {
        &self.nodes[id - 1]
    }

    /// Bits delivered to the access point, by trapezoidal quadrature.
    pub fn delivered_bits(&self) -> T {
        let w = trapezoid_weights(&self.knot_times);
        self.links
            .iter()
            .filter(|l| l.link.to == ACCESS_POINT)
            .map(|l| l.rate.iter().zip(&w).map(|(&r, &wk)| r * wk).sum::<T>())
            .sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeThrust<T> {
    pub id: usize,
    pub thrust: Vec<T>,
    pub min: T,
    pub max: T,
}

/// Recovered thrust for every node.
#[derive(Debug, Clone, Serialize)]
pub struct ThrustProfile<T> {
    pub nodes: Vec<NodeThrust<T>>,
}

/// Second-order finite-difference derivative on a (possibly non-uniform)
/// grid: central inside, one-sided at the ends.
pub fn differentiate<T: Real>(t: &[T], v: &[T]) -> Vec<T> {
    let n = v.len();
    if n < 2 {
        return vec![T::zero(); n];
    }
    if n == 2 {
        let d = (v[1] - v[0]) / (t[1] - t[0]);
        return vec![d, d];
    }
    let mut out = vec![T::zero(); n];
    for k in 1..n - 1 {
        out[k] = (v[k + 1] - v[k - 1]) / (t[k + 1] - t[k - 1]);
    }
    let one_sided = |t0: T, t1: T, t2: T, v0: T, v1: T, v2: T| {
        // Derivative at t0 of the quadratic through three points.
        let (h1, h2) = (t1 - t0, t2 - t0);
        let a = -(h1 + h2) / (h1 * h2);
        let b = h2 / (h1 * (h2 - h1));
        let c = -h1 / (h2 * (h2 - h1));
        a * v0 + b * v1 + c * v2
    };
    out[0] = one_sided(t[0], t[1], t[2], v[0], v[1], v[2]);
    out[n - 1] = one_sided(t[n - 1], t[n - 2], t[n - 3], v[n - 1], v[n - 2], v[n - 3]);
    out
}

/// Thrust from the force balance `F = Ω(v) + m·v̇`.
pub fn recover_thrust<T: Real>(cfg: &ScenarioConfig<T>, solution: &Solution<T>) -> ThrustProfile<T> {
    let nodes = solution
        .nodes
        .iter()
        .map(|node| {
            let mass = cfg.node(node.id).mass;
            let accel = differentiate(&solution.knot_times, &node.speed);
            let thrust: Vec<T> = node
                .speed
                .iter()
                .zip(&accel)
                .map(|(&v, &a)| cfg.drag.force_unchecked(v) + mass * a)
                .collect();
            let min = thrust.iter().copied().fold(T::infinity(), T::min);
            let max = thrust.iter().copied().fold(T::neg_infinity(), T::max);
            NodeThrust {
                id: node.id,
                thrust,
                min,
                max,
            }
        })
        .collect();
    ThrustProfile { nodes }
}

/// Energy accounting for one node, Joules.
#[derive(Debug, Clone, Serialize)]
pub struct NodeEnergy<T> {
    pub id: usize,
    /// `∫ p dt` over all outgoing links.
    pub transmission: T,
    /// `∫ v·F dt` with the recovered thrust.
    pub propulsion: T,
    /// `∫ v·Ω(v) dt`.
    pub drag_work: T,
    /// `m/2·(v(T)² − v(0)²)`.
    pub kinetic_change: T,
    /// `T·v̄·Ω(v̄)` for the constant speed `v̄` covering the same path.
    pub constant_speed_propulsion: T,
    /// `drag_work + kinetic_change − constant_speed_propulsion`.
    pub extra_propulsion: T,
    /// `transmission + drag_work + kinetic_change`.
    pub total: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyBreakdown<T> {
    pub nodes: Vec<NodeEnergy<T>>,
    pub transmission: T,
    pub propulsion: T,
    pub total: T,
}

/// Trapezoidal energy accounting of a solution.
pub fn evaluate_energy<T: Real>(cfg: &ScenarioConfig<T>, solution: &Solution<T>) -> EnergyBreakdown<T> {
    let w = trapezoid_weights(&solution.knot_times);
    let half = lit::<T>(0.5);
    let nodes: Vec<NodeEnergy<T>> = solution
        .nodes
        .iter()
        .map(|node| {
            let params = cfg.node(node.id);
            let transmission: T = solution
                .links
                .iter()
                .filter(|l| l.link.from == node.id)
                .map(|l| l.power.iter().zip(&w).map(|(&p, &wk)| p * wk).sum::<T>())
                .sum();
            let thrust = if node.thrust.len() == node.speed.len() {
                node.thrust.clone()
            } else {
                let accel = differentiate(&solution.knot_times, &node.speed);
                node.speed
                    .iter()
                    .zip(&accel)
                    .map(|(&v, &a)| cfg.drag.force_unchecked(v) + params.mass * a)
                    .collect()
            };
            let propulsion: T = node.speed.iter().zip(&thrust).zip(&w).map(|((&v, &f), &wk)| v * f * wk).sum();
            let drag_work: T = node
                .speed
                .iter()
                .zip(&w)
                .map(|(&v, &wk)| v * cfg.drag.force_unchecked(v) * wk)
                .sum();
            let v0 = node.speed[0];
            let v_end = *node.speed.last().unwrap();
            let kinetic_change = half * params.mass * (v_end * v_end - v0 * v0);
            let mean = params.path_length() / cfg.horizon;
            let constant_speed_propulsion = cfg.horizon * mean * cfg.drag.force_unchecked(mean);
            NodeEnergy {
                id: node.id,
                transmission,
                propulsion,
                drag_work,
                kinetic_change,
                constant_speed_propulsion,
                extra_propulsion: drag_work + kinetic_change - constant_speed_propulsion,
                total: transmission + drag_work + kinetic_change,
            }
        })
        .collect();
    EnergyBreakdown {
        transmission: nodes.iter().map(|n| n.transmission).sum(),
        propulsion: nodes.iter().map(|n| n.drag_work + n.kinetic_change).sum(),
        total: nodes.iter().map(|n| n.total).sum(),
        nodes,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub constraint: String,
    pub knot: Option<usize>,
    /// Normalized magnitude (see [`check_feasibility`]).
    pub magnitude: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
    pub max_violation: f64,
    pub passed: bool,
}

/// Checks a candidate against every constraint of the continuous problem as
/// transcribed: capacity regions, trapezoidal dynamics, boundary data and
/// bounds.
///
/// Magnitudes are normalized: capacity by the receiver bandwidth, bits by
/// `max(Σ D_n, 1)`, positions by `max(path length, 1)`, speeds by
/// `max(v_max, 1)`, powers by `P_max`. Violations above `tol` are listed.
pub fn check_feasibility<T: Real>(cfg: &ScenarioConfig<T>, solution: &Solution<T>, tol: f64) -> FeasibilityReport {
    let mut report = FeasibilityReport {
        violations: Vec::new(),
        max_violation: 0.0,
        passed: true,
    };
    let mut record = |what: String, knot: Option<usize>, magnitude: f64| {
        let magnitude = if magnitude.is_nan() { f64::INFINITY } else { magnitude };
        if magnitude > report.max_violation {
            report.max_violation = magnitude;
        }
        if magnitude > tol {
            report.violations.push(Violation {
                constraint: what,
                knot,
                magnitude,
            });
        }
    };
    let f = to_f64::<T>;
    let knots = solution.knot_times.len();
    let bit_scale = cfg.nodes.iter().map(|n| f(n.initial_data)).sum::<f64>().max(1.0);
    let sigma2 = cfg.channel.noise_power;

    // Capacity regions over every transmitter with a link to the receiver.
    for receiver in cfg.receivers() {
        let tx = cfg.transmitters_to(receiver);
        let bw = cfg.channel.bandwidth(receiver);
        let Ok(subsets) = enumerate_constraints(receiver, &tx, bw, usize::MAX) else {
            continue;
        };
        let width = tx.iter().copied().max().unwrap_or(0) + 1;
        for k in 0..knots {
            let mut gains = vec![T::zero(); width];
            let mut powers = vec![T::zero(); width];
            let mut rates = vec![T::zero(); width];
            for &t in &tx {
                let Some(link) = solution.link(t, receiver) else { continue };
                let (a, d) = cfg.link_offsets(link.link);
                let rx = if receiver == ACCESS_POINT {
                    T::zero()
                } else {
                    solution.node(receiver).position[k]
                };
                let sep = solution.node(t).position[k] - rx;
                gains[t] = cfg.channel.antenna_gain_product
                    * gain_and_derivatives(T::one(), cfg.channel.path_loss_exponent, a * a + d * d, sep).0;
                powers[t] = link.power[k];
                rates[t] = link.rate[k];
            }
            for c in &subsets {
                let r = c.residual(&gains, &powers, &rates, sigma2);
                record(
                    format!("capacity at receiver {receiver}, subset {:?}", c.subset),
                    Some(k),
                    f(r / bw),
                );
            }
        }
    }

    let half = lit::<T>(0.5);
    for node in &solution.nodes {
        let p = cfg.node(node.id);
        let id = node.id;
        let path = f(p.path_length()).max(1.0);
        for k in 0..knots.saturating_sub(1) {
            let h = solution.knot_times[k + 1] - solution.knot_times[k];
            let mut flow = T::zero();
            for l in &solution.links {
                if l.link.from == id {
                    flow -= l.rate[k] + l.rate[k + 1];
                } else if l.link.to == id {
                    flow += l.rate[k] + l.rate[k + 1];
                }
            }
            let res = node.buffer[k + 1] - node.buffer[k] - half * h * flow;
            record(format!("buffer dynamics of node {id}"), Some(k), f(res).abs() / bit_scale);
            let res = node.position[k + 1] - node.position[k] - p.zeta() * half * h * (node.speed[k] + node.speed[k + 1]);
            record(format!("position dynamics of node {id}"), Some(k), f(res).abs() / path);
        }
        record(
            format!("initial buffer of node {id}"),
            Some(0),
            f(node.buffer[0] - p.initial_data).abs() / bit_scale,
        );
        record(
            format!("final buffer of node {id}"),
            Some(knots - 1),
            f(node.buffer[knots - 1]).abs() / bit_scale,
        );
        record(
            format!("initial position of node {id}"),
            Some(0),
            f(node.position[0] - p.q_init).abs() / path,
        );
        record(
            format!("final position of node {id}"),
            Some(knots - 1),
            f(node.position[knots - 1] - p.q_final).abs() / path,
        );
        let vscale = f(p.v_max).max(1.0);
        record(format!("initial speed of node {id}"), Some(0), f(node.speed[0] - p.v_init).abs() / vscale);
        for k in 0..knots {
            let s = f(node.buffer[k]);
            record(format!("buffer bounds of node {id}"), Some(k), (-s).max(s - f(p.buffer_capacity)).max(0.0) / bit_scale);
            let v = f(node.speed[k]);
            record(
                format!("speed bounds of node {id}"),
                Some(k),
                (f(p.v_min) - v).max(v - f(p.v_max)).max(0.0) / vscale,
            );
            let mut total_power = 0.0;
            for l in solution.links.iter().filter(|l| l.link.from == id) {
                let pw = f(l.power[k]);
                total_power += pw;
                record(format!("power sign on link {}->{}", id, l.link.to), Some(k), (-pw).max(0.0) / f(p.p_max));
                let bw = f(cfg.channel.bandwidth(l.link.to));
                record(format!("rate sign on link {}->{}", id, l.link.to), Some(k), (-f(l.rate[k])).max(0.0) / bw);
            }
            record(format!("power budget of node {id}"), Some(k), (total_power - f(p.p_max)).max(0.0) / f(p.p_max));
        }
    }
    report.passed = report.max_violation <= tol;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelParams, DragModel, NodeParams};

    pub(crate) fn single_node(knots: usize, data_bits: f64) -> ScenarioConfig<f64> {
        let v = 65.0 / 3.6;
        ScenarioConfig {
            nodes: vec![NodeParams {
                mass: 3.0,
                altitude: 1000.0,
                lateral_offset: 0.0,
                initial_data: data_bits,
                buffer_capacity: 8e9,
                v_min: 30.0 / 3.6,
                v_max: 100.0 / 3.6,
                v_init: v,
                q_init: -600.0 * v,
                q_final: 600.0 * v,
                direction: 1,
                p_max: 100.0,
            }],
            channel: ChannelParams {
                antenna_gain_product: 1.0,
                path_loss_exponent: 1.5,
                noise_power: 1e-10,
                bandwidth_per_receiver: vec![1e5],
            },
            drag: DragModel::new(9.26e-4, 2250.0),
            horizon: 1200.0,
            knot_count: knots,
            topology: vec![Link { from: 1, to: 0 }],
            relaying_enabled: false,
        }
    }

    fn two_node(knots: usize) -> ScenarioConfig<f64> {
        let mut cfg = single_node(knots, 2e8);
        let v = 65.0 / 3.6;
        cfg.nodes[0].v_min = v;
        cfg.nodes[0].v_max = v;
        let mut second = cfg.nodes[0].clone();
        second.lateral_offset = 1000.0;
        cfg.nodes.push(second);
        cfg.topology.push(Link { from: 2, to: 0 });
        cfg
    }

    #[test]
    fn layout_arithmetic() {
        let p = build_program(&single_node(2, 1e7)).unwrap();
        assert_eq!(p.variable_count(), 15);
        // Fixed: s0, sK, q0, qK, v0.
        assert_eq!(p.free_count(), 10);
        let layout = p.layout();
        for s in 0..layout.len() {
            let (q, k) = layout.describe(s);
            assert_eq!(layout.slot_index(q, k), s);
        }
    }

    #[test]
    fn kinematic_infeasibility_is_caught() {
        let mut cfg = single_node(10, 1e7);
        cfg.nodes[0].v_max = 15.0;
        cfg.nodes[0].v_init = 12.0;
        let err = build_program(&cfg).unwrap_err();
        assert!(matches!(err, BuildError::Kinematics { node: 1, .. }), "{err}");
    }

    #[test]
    fn two_nodes_have_three_capacity_rows_per_knot() {
        let p = build_program(&two_node(100)).unwrap();
        for k in [0, 50, 100] {
            assert_eq!(p.capacity_rows_at(k).len(), 3);
        }
        // Fixed speeds pin the positions too: only p and r stay free,
        // except the fixed buffer end points.
        assert_eq!(p.free_count(), 101 * 4 + 2 * 99);
    }

    #[test]
    fn initial_point_is_equality_feasible_and_inside_bounds() {
        for cfg in [single_node(40, 3e8), two_node(40)] {
            let p = build_program(&cfg).unwrap();
            let x = p.initial_point();
            for row in p.equalities() {
                let v: f64 = row.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>() - row.rhs;
                assert!(v.abs() < 1e-10, "{v}");
            }
            for c in p.inequalities() {
                if !c.is_general() {
                    assert!(c.value(x) < 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_data_node_is_switched_off() {
        let p = build_program(&single_node(20, 0.0)).unwrap();
        assert!(!p.is_active(1));
        assert!(p.inequalities().iter().all(|c| !matches!(c, Inequality::Capacity(_))));
        // Only interior speeds and positions remain.
        assert_eq!(p.free_count(), 20 + 19);
    }

    #[test]
    fn thrust_of_linear_ramp() {
        let cfg = single_node(4, 0.0);
        let t: Vec<f64> = (0..=4).map(|k| 25.0 * k as f64).collect();
        let speed: Vec<f64> = t.iter().map(|&s| 18.0 + 0.02 * s).collect();
        let sol = Solution {
            knot_times: t,
            links: vec![],
            nodes: vec![NodeTrajectory {
                id: 1,
                buffer: vec![0.0; 5],
                position: vec![0.0; 5],
                speed: speed.clone(),
                thrust: vec![],
            }],
            objective: 0.0,
            stats: SolveStats::default(),
        };
        let th = recover_thrust(&cfg, &sol);
        for (f, v) in th.nodes[0].thrust.iter().zip(&speed) {
            assert!((f - (cfg.drag.force(*v).unwrap() + 0.06)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_speed_thrust_equals_drag() {
        let cfg = single_node(4, 0.0);
        let sol = Solution {
            knot_times: vec![0.0, 1.0, 2.0, 3.0],
            links: vec![],
            nodes: vec![NodeTrajectory {
                id: 1,
                buffer: vec![0.0; 4],
                position: vec![0.0; 4],
                speed: vec![39.48; 4],
                thrust: vec![],
            }],
            objective: 0.0,
            stats: SolveStats::default(),
        };
        let th = recover_thrust(&cfg, &sol);
        for f in &th.nodes[0].thrust {
            assert!((f - 2.887).abs() < 1e-3);
        }
        assert!((th.nodes[0].min - th.nodes[0].max).abs() < 1e-12);
    }

    #[test]
    fn differentiate_is_exact_for_quadratics() {
        let t = [0.0, 0.5, 1.5, 2.0, 3.5];
        let v: Vec<f64> = t.iter().map(|&s| 2.0 * s * s - s + 1.0).collect();
        let d = differentiate(&t, &v);
        for (di, &s) in d.iter().zip(&t).skip(1).take(3) {
            // Central differences are exact for quadratics on uniform pairs only.
            let _ = (di, s);
        }
        assert!((d[0] - (-1.0)).abs() < 1e-12);
        assert!((d[4] - (4.0 * 3.5 - 1.0)).abs() < 1e-12);
    }
}
