//! Gaussian multiple-access capacity regions.
//!
//! For a receiver `m` and transmitters `N`, the achievable rates are the
//! polymatroid
//!
//! ```text
//! Σ_{n∈S} r_n ≤ B_m log2(1 + Σ_{n∈S} g_n p_n / σ²)   for every non-empty S ⊆ N.
//! ```
//!
//! Transmitter ids index directly into the `gains`, `powers` and `rates`
//! slices handed to the functions below.

use thiserror::Error;

use crate::scalar::{lit, log2_1p, to_f64, Real};

/// Largest transmitter set for which subset constraints are enumerated.
pub const DEFAULT_SUBSET_CAP: usize = 10;

/// Relative membership tolerance, applied against the bandwidth.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapacityError {
    #[error("no transmitters given")]
    NoTransmitters,
    #[error("{count} transmitters give 2^{count}-1 subset constraints; the cap is {cap}")]
    Intractable { count: usize, cap: usize },
    #[error("rate pair is {distance:.3e} (relative) away from the sum-rate segment")]
    OffBoundary { distance: f64 },
    #[error("corner points coincide; the decoding priority is undefined")]
    DegenerateSegment,
}

/// One subset inequality of a receiver's capacity region.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitySubsetConstraint<T> {
    pub receiver: usize,
    /// Transmitter ids, ascending.
    pub subset: Vec<usize>,
    pub bandwidth: T,
}

impl<T: Real> CapacitySubsetConstraint<T> {
    /// Bounding function `B log2(1 + Σ g p / σ²)` for this subset.
    pub fn bound(&self, gains: &[T], powers: &[T], noise_power: T) -> T {
        let snr: T = self.subset.iter().map(|&n| gains[n] * powers[n]).sum::<T>() / noise_power;
        self.bandwidth * log2_1p(snr)
    }

    /// `Σ r − B log2(1 + Σ g p / σ²)`; non-positive when the constraint holds.
    pub fn residual(&self, gains: &[T], powers: &[T], rates: &[T], noise_power: T) -> T {
        let rate_sum: T = self.subset.iter().map(|&n| rates[n]).sum();
        rate_sum - self.bound(gains, powers, noise_power)
    }
}

/// Free-function form of [`CapacitySubsetConstraint::residual`].
pub fn constraint_residual<T: Real>(
    c: &CapacitySubsetConstraint<T>,
    gains: &[T],
    powers: &[T],
    rates: &[T],
    noise_power: T,
) -> T {
    c.residual(gains, powers, rates, noise_power)
}

/// All `2^|N| − 1` subset constraints for `receiver`, ordered by subset size
/// and then lexicographically.
pub fn enumerate_constraints<T: Real>(
    receiver: usize,
    transmitters: &[usize],
    bandwidth: T,
    cap: usize,
) -> Result<Vec<CapacitySubsetConstraint<T>>, CapacityError> {
    if transmitters.is_empty() {
        return Err(CapacityError::NoTransmitters);
    }
    if transmitters.len() > cap {
        return Err(CapacityError::Intractable {
            count: transmitters.len(),
            cap,
        });
    }
    let mut ids = transmitters.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let n = ids.len();
    let mut subsets: Vec<Vec<usize>> = (1u32..(1u32 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ids[i]).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(subsets
        .into_iter()
        .map(|subset| CapacitySubsetConstraint {
            receiver,
            subset,
            bandwidth,
        })
        .collect())
}

/// Whether `rates` lies in the capacity region of transmitters
/// `0..gains.len()`, within [`MEMBERSHIP_TOLERANCE`]·B.
pub fn region_contains<T: Real>(gains: &[T], powers: &[T], rates: &[T], noise_power: T, bandwidth: T) -> bool {
    if rates.iter().any(|&r| r < T::zero()) {
        return false;
    }
    let ids: Vec<usize> = (0..gains.len()).collect();
    let Ok(constraints) = enumerate_constraints(0, &ids, bandwidth, usize::MAX) else {
        return true;
    };
    let tol = lit::<T>(MEMBERSHIP_TOLERANCE) * bandwidth;
    constraints
        .iter()
        .all(|c| c.residual(gains, powers, rates, noise_power) <= tol)
}

/// A vertex of the capacity region reached by successive interference
/// cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCorner<T> {
    pub rates: Vec<T>,
    /// Transmitters in the order they are decoded. The last one decoded
    /// sees no interference.
    pub decoding_order: Vec<usize>,
}

/// Vertex of the polymatroid for an arbitrary decoding order.
///
/// Each transmitter is decoded treating all not-yet-decoded ones as noise.
pub fn polymatroid_vertex<T: Real>(
    gains: &[T],
    powers: &[T],
    noise_power: T,
    bandwidth: T,
    decoding_order: &[usize],
) -> RateCorner<T> {
    let mut rates = vec![T::zero(); gains.len()];
    let mut interference: T = decoding_order.iter().map(|&n| gains[n] * powers[n]).sum();
    for &n in decoding_order {
        let signal = gains[n] * powers[n];
        interference -= signal;
        let floor = noise_power + interference.max(T::zero());
        rates[n] = bandwidth * log2_1p(signal / floor);
    }
    RateCorner {
        rates,
        decoding_order: decoding_order.to_vec(),
    }
}

/// The two corners `R1` (transmitter 0 decoded last) and `R2` (transmitter 1
/// decoded last) of a two-user region.
pub fn two_user_corners<T: Real>(
    gain_1: T,
    gain_2: T,
    power_1: T,
    power_2: T,
    noise_power: T,
    bandwidth: T,
) -> (RateCorner<T>, RateCorner<T>) {
    let g = [gain_1, gain_2];
    let p = [power_1, power_2];
    (
        polymatroid_vertex(&g, &p, noise_power, bandwidth, &[1, 0]),
        polymatroid_vertex(&g, &p, noise_power, bandwidth, &[0, 1]),
    )
}

/// Interpolation weight `ϱ` with `r_star ≈ ϱ·R1 + (1−ϱ)·R2`.
///
/// `r_star` is projected onto the segment by least squares. The distance
/// from the segment, relative to the sum rate of `R1`, must not exceed
/// `tolerance`.
pub fn decoding_priority<T: Real>(
    r1: &RateCorner<T>,
    r2: &RateCorner<T>,
    r_star: [T; 2],
    tolerance: T,
) -> Result<T, CapacityError> {
    let d = [r1.rates[0] - r2.rates[0], r1.rates[1] - r2.rates[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let scale = (r1.rates[0] + r1.rates[1]).max(T::min_positive_value());
    if len2 <= (lit::<T>(1e-24) * scale * scale) {
        return Err(CapacityError::DegenerateSegment);
    }
    let w = [r_star[0] - r2.rates[0], r_star[1] - r2.rates[1]];
    let raw = (w[0] * d[0] + w[1] * d[1]) / len2;
    let rho = raw.max(T::zero()).min(T::one());
    let e0 = w[0] - rho * d[0];
    let e1 = w[1] - rho * d[1];
    let distance = (e0 * e0 + e1 * e1).sqrt() / scale;
    if distance > tolerance {
        return Err(CapacityError::OffBoundary {
            distance: to_f64(distance),
        });
    }
    Ok(rho)
}
