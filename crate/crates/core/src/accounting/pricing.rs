//! Per-VM prices under a set of active optimizations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hints::OptSet;
use crate::optimizers::{FrequencyLevel, OptimizationId};
use crate::scalar::Scalar;

/// Table of owner benefits, as decimal text so exact scalars stay exact.
pub const OWNER_BENEFITS: [(OptimizationId, &str); 10] = [
    (OptimizationId::HarvestVms, "0.91"),
    (OptimizationId::SpotVms, "0.85"),
    (OptimizationId::Rightsizing, "0.50"),
    (OptimizationId::Madc, "0.40"),
    (OptimizationId::RegionAgnostic, "0.22"),
    (OptimizationId::AutoScaling, "0.19"),
    (OptimizationId::Oversubscription, "0.15"),
    (OptimizationId::Overclocking, "0.11"),
    (OptimizationId::NonPreProvision, "0.02"),
    (OptimizationId::Underclocking, "0.01"),
];

pub fn owner_benefit<S: Scalar>(id: OptimizationId) -> S {
    OWNER_BENEFITS
        .iter()
        .find(|(o, _)| *o == id)
        .and_then(|(_, b)| S::from_decimal(b))
        .unwrap_or_else(S::zero)
}

/// Optimizations that compete for the same resource; a VM runs at most one of each.
pub const SPARE_COMPUTE_GROUP: [OptimizationId; 3] =
    [OptimizationId::SpotVms, OptimizationId::HarvestVms, OptimizationId::NonPreProvision];
pub const FREQUENCY_GROUP: [OptimizationId; 3] =
    [OptimizationId::Overclocking, OptimizationId::Underclocking, OptimizationId::Madc];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{group} group has more than one active member: {members}")]
pub struct IncompatibleSet {
    pub group: &'static str,
    pub members: OptSet,
}

pub fn groups() -> [(&'static str, OptSet); 2] {
    [
        ("spare-compute", SPARE_COMPUTE_GROUP.into_iter().collect()),
        ("frequency", FREQUENCY_GROUP.into_iter().collect()),
    ]
}

pub fn check_compatible(active: OptSet) -> Result<(), IncompatibleSet> {
    for (group, members) in groups() {
        let hit = active.intersection(members);
        if hit.len() > 1 {
            return Err(IncompatibleSet { group, members: hit });
        }
    }
    Ok(())
}

/// Keep the best-benefit member of each group; ties go to the lower priority number.
pub fn select_compatible(eligible: OptSet) -> OptSet {
    let mut out = eligible;
    for (_, members) in groups() {
        let hit: Vec<OptimizationId> = eligible.intersection(members).iter().collect();
        let best = hit.iter().copied().max_by(|a, b| {
            owner_benefit::<f64>(*a)
                .total_cmp(&owner_benefit::<f64>(*b))
                .then(b.builtin_priority().cmp(&a.builtin_priority()))
        });
        for id in hit {
            if Some(id) != best {
                out.remove(id);
            }
        }
    }
    out
}

/// Prices relative to a regular VM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBook<S> {
    pub base_per_core_hour: S,
    pub spot: S,
    pub madc: S,
    pub oversubscription: S,
    pub non_preprovision: S,
    pub underclocking: S,
}

impl<S: Scalar> PriceBook<S> {
    pub fn standard(base_per_core_hour: S) -> Self {
        let d = |t: &str| S::from_decimal(t).expect("literal");
        Self {
            base_per_core_hour,
            spot: d("0.15"),
            madc: d("0.60"),
            oversubscription: d("0.85"),
            non_preprovision: d("0.98"),
            underclocking: d("0.99"),
        }
    }

    /// Multiplier for the optimizations priced as a fraction of a regular VM.
    pub fn factor(&self, id: OptimizationId) -> Option<S> {
        match id {
            OptimizationId::SpotVms | OptimizationId::HarvestVms => Some(self.spot.clone()),
            OptimizationId::Madc => Some(self.madc.clone()),
            OptimizationId::Oversubscription => Some(self.oversubscription.clone()),
            OptimizationId::NonPreProvision => Some(self.non_preprovision.clone()),
            OptimizationId::Underclocking => Some(self.underclocking.clone()),
            _ => None,
        }
    }

    /// Surcharge per overclocked core-hour at `level`.
    pub fn overclock_surcharge(&self, level: FrequencyLevel) -> S {
        let mult = match level.level() {
            1 => "1.15",
            2 => "1.3",
            _ => "1",
        };
        let extra = S::from_decimal(mult).expect("literal") - S::one();
        self.base_per_core_hour.clone() * S::max_of(extra, S::zero())
    }
}

/// What a VM actually used over the billing period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord<S> {
    pub cores: u32,
    /// Hours the VM was running; auto-scaling acts through this.
    pub vm_hours: S,
    /// Size after rightsizing, if it was resized.
    pub resized_cores: Option<u32>,
    /// Price factor of the region the VM ran in.
    pub region_price_factor: S,
    pub harvested_core_hours: S,
    pub overclocked_core_hours: S,
    pub overclock_level: FrequencyLevel,
}

impl<S: Scalar> UsageRecord<S> {
    pub fn regular(cores: u32, vm_hours: S) -> Self {
        Self {
            cores,
            vm_hours,
            resized_cores: None,
            region_price_factor: S::one(),
            harvested_core_hours: S::zero(),
            overclocked_core_hours: S::zero(),
            overclock_level: FrequencyLevel::new(1).expect("valid"),
        }
    }
}

/// Cost of one VM: base x size x hours x product of active factors x region
/// factor, plus harvested and overclocked core-hours.
pub fn vm_price<S: Scalar>(book: &PriceBook<S>, active: OptSet, usage: &UsageRecord<S>) -> Result<S, IncompatibleSet> {
    check_compatible(active)?;
    let cores = match (active.contains(OptimizationId::Rightsizing), usage.resized_cores) {
        (true, Some(c)) => c,
        _ => usage.cores,
    };
    let mut price = book.base_per_core_hour.clone() * S::from_u64_exact(cores as u64) * usage.vm_hours.clone();
    for id in active.iter() {
        if let Some(f) = book.factor(id) {
            price = price * f;
        }
    }
    price = price * usage.region_price_factor.clone();
    if active.contains(OptimizationId::HarvestVms) {
        price = price
            + book.base_per_core_hour.clone()
                * book.spot.clone()
                * usage.harvested_core_hours.clone()
                * usage.region_price_factor.clone();
    }
    if active.contains(OptimizationId::Overclocking) {
        price = price + book.overclock_surcharge(usage.overclock_level) * usage.overclocked_core_hours.clone();
    }
    Ok(price)
}

#[cfg(test)]
mod tests {
    use num::rational::BigRational;

    use super::*;
    use crate::scalar::rational_from_decimal;
    use OptimizationId::*;

    fn q(s: &str) -> BigRational {
        rational_from_decimal(s).unwrap()
    }

    #[test]
    fn spot_only() {
        let book = PriceBook::standard(q("1"));
        let u = UsageRecord::regular(1, q("1"));
        assert_eq!(vm_price(&book, [SpotVms].into_iter().collect(), &u).unwrap(), q("0.15"));
        assert_eq!(vm_price(&book, OptSet::empty(), &u).unwrap(), q("1"));
    }

    #[test]
    fn factors_multiply() {
        let book = PriceBook::standard(q("1"));
        let u = UsageRecord::regular(1, q("1"));
        let got = vm_price(&book, [SpotVms, Madc, Oversubscription].into_iter().collect(), &u).unwrap();
        assert_eq!(got, q("0.15") * q("0.60") * q("0.85"));
        assert_eq!(got, q("0.0765"));
    }

    #[test]
    fn incompatible_rejected() {
        let book = PriceBook::standard(1.0);
        let u = UsageRecord::regular(1, 1.0);
        let e = vm_price(&book, [SpotVms, HarvestVms].into_iter().collect(), &u).unwrap_err();
        assert_eq!(e.group, "spare-compute");
        assert!(vm_price(&book, [Madc, Overclocking].into_iter().collect(), &u).is_err());
    }

    #[test]
    fn best_member_kept() {
        let s = select_compatible([SpotVms, HarvestVms, NonPreProvision, Madc, Underclocking].into_iter().collect());
        assert_eq!(s, [HarvestVms, Madc].into_iter().collect());
    }

    #[test]
    fn harvest_and_overclock_terms() {
        let book = PriceBook::standard(q("1"));
        let mut u = UsageRecord::regular(2, q("1"));
        u.harvested_core_hours = q("3");
        assert_eq!(vm_price(&book, [HarvestVms].into_iter().collect(), &u).unwrap(), q("0.30") + q("0.45"));
        u.overclocked_core_hours = q("2");
        let oc = vm_price(&book, [Overclocking].into_iter().collect(), &u).unwrap();
        assert_eq!(oc, q("2.30"));
    }

    #[test]
    fn rightsizing_and_region_act_on_size_and_place() {
        let book = PriceBook::standard(q("1"));
        let mut u = UsageRecord::regular(8, q("1"));
        u.resized_cores = Some(4);
        u.region_price_factor = q("0.9");
        assert_eq!(vm_price(&book, [Rightsizing].into_iter().collect(), &u).unwrap(), q("3.6"));
        assert_eq!(vm_price(&book, OptSet::empty(), &u).unwrap(), q("7.2"));
    }
}
