//! Max-min fair sharing (water-filling), one- and two-level.

use num::rational::BigRational;
use num::{BigInt, ToPrimitive, Zero};

use crate::scalar::Scalar;

/// Max-min fair split of `capacity` across `demands`.
///
/// Smallest demands are satisfied first; whatever is left is split evenly among
/// the rest. No grant exceeds its demand and the grants sum to
/// `min(capacity, sum(demands))`.
pub fn water_fill<S: Scalar>(demands: &[S], capacity: S) -> Vec<S> {
    let mut order: Vec<usize> = (0..demands.len()).collect();
    order.sort_by(|&a, &b| demands[a].partial_cmp(&demands[b]).expect("comparable demands"));
    let mut grants = vec![S::zero(); demands.len()];
    let mut remaining = S::max_of(capacity, S::zero());
    for (pos, &i) in order.iter().enumerate() {
        let left = S::from_usize(order.len() - pos).expect("count fits");
        let share = remaining.clone() / left;
        let d = S::max_of(demands[i].clone(), S::zero());
        let g = S::min_of(d, share);
        remaining = remaining - g.clone();
        grants[i] = g;
    }
    grants
}

/// Two-level water-filling: capacity is split across owners by their total
/// demand, then each owner's share across that owner's claimants.
pub fn fair_share<S: Scalar>(owners: &[Vec<S>], capacity: S) -> Vec<Vec<S>> {
    let totals: Vec<S> = owners.iter().map(|d| d.iter().cloned().fold(S::zero(), |a, b| a + b)).collect();
    let shares = water_fill(&totals, capacity);
    owners.iter().zip(shares).map(|(d, share)| water_fill(d, share)).collect()
}

/// Integral two-level fair share: exact water-filling at each level followed by
/// largest-remainder rounding. Remainder ties go to the lower index.
pub fn fair_share_integral(owners: &[Vec<u64>], capacity: u64) -> Vec<Vec<u64>> {
    let totals: Vec<u64> = owners.iter().map(|d| d.iter().sum()).collect();
    let shares = round_water_fill(&totals, capacity);
    owners.iter().zip(shares).map(|(d, share)| round_water_fill(d, share)).collect()
}

/// Single-level integral max-min share.
pub fn water_fill_integral(demands: &[u64], capacity: u64) -> Vec<u64> {
    round_water_fill(demands, capacity)
}

fn round_water_fill(demands: &[u64], capacity: u64) -> Vec<u64> {
    let exact: Vec<BigRational> = water_fill(
        &demands.iter().map(|d| BigRational::from_integer(BigInt::from(*d))).collect::<Vec<_>>(),
        BigRational::from_integer(BigInt::from(capacity)),
    );
    let target: u64 = capacity.min(demands.iter().sum());
    let mut grants: Vec<u64> = exact.iter().map(|g| g.floor().to_integer().to_u64().unwrap_or(0)).collect();
    let mut left = target - grants.iter().sum::<u64>();
    let mut frac: Vec<(BigRational, usize)> =
        exact.iter().enumerate().map(|(i, g)| (g - g.floor(), i)).filter(|(f, _)| !f.is_zero()).collect();
    // Largest fractional part first; stable on index for equal parts.
    frac.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, i) in frac {
        if left == 0 {
            break;
        }
        grants[i] += 1;
        left -= 1;
    }
    grants
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_split() {
        assert_eq!(water_fill(&[4.0, 4.0], 4.0), vec![2.0, 2.0]);
        assert_eq!(water_fill_integral(&[4, 4], 4), vec![2, 2]);
    }

    #[test]
    fn small_demand_saturates() {
        // Hand water-fill: level 3 would exceed demand 1, so 1 is met and 5 is left for the other.
        assert_eq!(water_fill(&[1.0, 10.0], 6.0), vec![1.0, 5.0]);
        assert_eq!(water_fill_integral(&[1, 10], 6), vec![1, 5]);
    }

    #[test]
    fn two_level_with_largest_remainder() {
        let owners = vec![vec![8u64], vec![2, 2]];
        let frac = fair_share(&[vec![8.0], vec![2.0, 2.0]], 6.0);
        assert_eq!(frac, vec![vec![3.0], vec![1.5, 1.5]]);
        assert_eq!(fair_share_integral(&owners, 6), vec![vec![3], vec![2, 1]]);
    }

    #[test]
    fn exact_and_float_agree() {
        let demands = [3.0, 7.0, 1.0, 9.0];
        let f = water_fill(&demands, 13.0);
        let r: Vec<BigRational> = water_fill(
            &demands.iter().map(|d| BigRational::from_float(*d).unwrap()).collect::<Vec<_>>(),
            BigRational::from_integer(13.into()),
        );
        for (a, b) in f.iter().zip(&r) {
            assert!((a - b.to_f64().unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_capacity_and_empty() {
        assert_eq!(water_fill_integral(&[3, 4], 0), vec![0, 0]);
        assert!(water_fill_integral(&[], 5).is_empty());
        assert_eq!(fair_share_integral(&[vec![], vec![2]], 5), vec![vec![], vec![2]]);
    }
}
