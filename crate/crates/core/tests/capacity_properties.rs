use comm_energy::capacity::{
    decoding_priority, enumerate_constraints, region_contains, two_user_corners, CapacitySubsetConstraint,
    DEFAULT_SUBSET_CAP,
};
use proptest::collection::vec;
use proptest::prelude::*;

const NOISE: f64 = 1e-10;
const BW: f64 = 1e5;

fn bound(members: &[usize], gains: &[f64], powers: &[f64]) -> f64 {
    CapacitySubsetConstraint {
        receiver: 0,
        subset: members.to_vec(),
        bandwidth: BW,
    }
    .bound(gains, powers, NOISE)
}

proptest! {
    #[test]
    fn bounding_function_is_submodular(
        gains in vec(1e-12f64..1e-8, 5),
        powers in vec(0.0f64..100.0, 5),
        small in 0u32..32, extra in 0u32..32, i in 0usize..5,
    ) {
        let big = small | extra;
        let members = |mask: u32| (0..5).filter(|b| mask & (1 << b) != 0 && *b != i).collect::<Vec<_>>();
        let (s, t) = (members(small), members(big));
        let with = |m: &[usize]| { let mut v = m.to_vec(); v.push(i); v };
        let empty = |m: &[usize]| if m.is_empty() { 0.0 } else { bound(m, &gains, &powers) };
        let gain_s = bound(&with(&s), &gains, &powers) - empty(&s);
        let gain_t = bound(&with(&t), &gains, &powers) - empty(&t);
        prop_assert!(gain_s >= gain_t - 1e-9 * BW);
    }

    #[test]
    fn corners_are_achievable_and_tight(g1 in 1e-10f64..1e-8, g2 in 1e-10f64..1e-8, p1 in 1.0f64..100.0, p2 in 1.0f64..100.0) {
        let (r1, r2) = two_user_corners(g1, g2, p1, p2, NOISE, BW);
        for c in [&r1, &r2] {
            prop_assert!(region_contains(&[g1, g2], &[p1, p2], &c.rates, NOISE, BW));
            let over: Vec<f64> = c.rates.iter().map(|r| r * (1.0 + 1e-6)).collect();
            prop_assert!(!region_contains(&[g1, g2], &[p1, p2], &over, NOISE, BW));
        }
    }

    #[test]
    fn priority_is_invariant_under_bandwidth(
        g1 in 1e-12f64..1e-8, g2 in 1e-12f64..1e-8, p1 in 0.1f64..100.0, p2 in 0.1f64..100.0,
        rho in 0.0f64..=1.0, scale in 0.1f64..10.0,
    ) {
        let at = |bw: f64| {
            let (r1, r2) = two_user_corners(g1, g2, p1, p2, NOISE, bw);
            let star = [rho * r1.rates[0] + (1.0 - rho) * r2.rates[0], rho * r1.rates[1] + (1.0 - rho) * r2.rates[1]];
            decoding_priority(&r1, &r2, star, 1e-9)
        };
        if let (Ok(a), Ok(b)) = (at(BW), at(BW * scale)) {
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((a - rho).abs() < 1e-6);
        }
    }
}

#[test]
fn subset_count_is_two_to_the_n_minus_one() {
    for n in 1..=DEFAULT_SUBSET_CAP {
        let ids: Vec<usize> = (1..=n).collect();
        let cs = enumerate_constraints::<f64>(0, &ids, BW, DEFAULT_SUBSET_CAP).unwrap();
        assert_eq!(cs.len(), (1 << n) - 1);
    }
    assert!(enumerate_constraints::<f64>(0, &(1..=11).collect::<Vec<_>>(), BW, DEFAULT_SUBSET_CAP).is_err());
}

#[test]
fn scaled_sum_capacity_split_leaves_region() {
    let (g, p) = ([1e-9, 5e-10], [40.0, 60.0]);
    let sum = bound(&[0, 1], &g, &p);
    let inside = [0.5 * sum, 0.5 * sum];
    let outside = [0.505 * sum, 0.505 * sum];
    let single = [bound(&[0], &g, &p), bound(&[1], &g, &p)];
    if inside[0] <= single[0] && inside[1] <= single[1] {
        assert!(region_contains(&g, &p, &inside, NOISE, BW));
    }
    assert!(!region_contains(&g, &p, &outside, NOISE, BW));
    assert!(region_contains(&g, &p, &[0.0, 0.0], NOISE, BW));
}
