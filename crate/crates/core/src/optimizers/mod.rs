//! The ten cloud optimizations.
//!
//! Every operation here is a pure function of its inputs. Effects leave as
//! [`ResourceClaim`]s for the arbiter and [`PlatformNotification`](crate::hints::PlatformNotification)s
//! for the broker; nothing mutates shared state.

pub mod autoscale;
mod claims;
pub mod frequency;
pub mod harvest;
pub mod madc;
pub mod oversub;
pub mod preprovision;
pub mod region;
mod registry;
pub mod rightsize;
pub mod spot;
mod wiring;

pub use claims::{ClaimError, ClaimId, ClaimScope, FrequencyLevel, ResourceClaim, ResourceKind};
pub use registry::{OnboardError, OptimizationDescriptor, OptimizationId, OptimizationRegistry, PricingRule, Registration};
pub use wiring::{wiring, Channel, Consumed, Wiring};

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;
    use crate::hints::{NotificationKind, PlatformNotification, PreemptionPriority, ScalePreference};

    /// Modification lines per optimization, with "Same as Spot VMs" expanded.
    const TABLE: &[(OptimizationId, &[&str])] = &[
        (OptimizationId::AutoScaling, &["Consume deployment scale in/out hints."]),
        (
            OptimizationId::SpotVms,
            &[
                "Consume deployment preemptible hints.",
                "Consume runtime preemption priority.",
                "Publish runtime preemption notification.",
            ],
        ),
        (
            OptimizationId::HarvestVms,
            &[
                "Consume deployment preemptible hints.",
                "Consume runtime preemption priority.",
                "Publish runtime preemption notification.",
                "Consume runtime scale up/down priority.",
                "Publish runtime scale up/down notification.",
            ],
        ),
        (
            OptimizationId::Overclocking,
            &[
                "Consume deployment scale up/down hints.",
                "Consume runtime scale up priority.",
                "Publish runtime scale up notification.",
            ],
        ),
        (
            OptimizationId::Underclocking,
            &[
                "Consume deployment scale up/down hints.",
                "Consume runtime scale down priority.",
                "Publish runtime scale down notification.",
            ],
        ),
        (OptimizationId::NonPreProvision, &["Consume deployment deployment time hints."]),
        (OptimizationId::RegionAgnostic, &["Consume deployment locality hints."]),
        (
            OptimizationId::Oversubscription,
            &[
                "Consume deployment scale up/down hints.",
                "Consume deployment delay tolerance hints.",
                "Consume runtime scale down priority.",
            ],
        ),
        (
            OptimizationId::Rightsizing,
            &["Consume deployment scale up/down hints.", "Consume deployment delay tolerance hints."],
        ),
        (
            OptimizationId::Madc,
            &[
                "Consume deployment scale up/down hints.",
                "Consume deployment preemptible hints.",
                "Publish runtime scale down notification.",
                "Publish runtime preemption notification.",
            ],
        ),
    ];

    #[test]
    fn wiring_matches_modification_table() {
        assert_eq!(TABLE.len(), 10);
        for (id, lines) in TABLE {
            let want: BTreeSet<String> = lines.iter().map(|s| s.to_string()).collect();
            let got: BTreeSet<String> = wiring(*id).describe().into_iter().collect();
            assert_eq!(got, want, "{id}");
        }
    }

    fn assert_publishes(id: OptimizationId, notes: &[PlatformNotification]) {
        let w = wiring(id);
        for n in notes {
            assert!(w.may_publish(n.kind), "{id} published {:?}", n.kind);
        }
    }

    #[test]
    fn operations_only_publish_their_kinds() {
        use FrequencyLevel as F;
        let cands: Vec<_> = (0..4)
            .map(|i| spot::SpotCandidate {
                vm: format!("v{i}").into(),
                workload: "w".into(),
                cores: 4,
                priority: PreemptionPriority::Low,
                created_at_ms: i,
                eligible: true,
            })
            .collect();
        let plan = spot::reclaim(10, &cands, &BTreeMap::new(), 0, 30_000);
        assert!(!plan.notifications.is_empty());
        assert_publishes(OptimizationId::SpotVms, &plan.notifications);

        let hv = |vm: &str, h: u32| harvest::HarvestVm {
            vm: vm.into(),
            base_cores: 2,
            harvested: h,
            preference: ScalePreference::Neutral,
            max_harvest: None,
        };
        for spare in [-4, 0, 3, 9] {
            let a = harvest::rebalance(spare, &[hv("a", 2), hv("b", 0)], 0);
            assert_publishes(OptimizationId::HarvestVms, &a.notifications);
        }

        let boost = frequency::BoostCandidate {
            vm: "a".into(),
            owner: "w".into(),
            cores: 4,
            priority: PreemptionPriority::High,
            preference: ScalePreference::Neutral,
            requested: F::new(1).unwrap(),
            eligible: true,
        };
        let oc = frequency::overclock_decide(8, 8, &[boost], 0, 0);
        assert!(!oc.notifications.is_empty());
        assert_publishes(OptimizationId::Overclocking, &oc.notifications);

        let idle = frequency::UnderclockCandidate {
            vm: "a".into(),
            owner: "w".into(),
            cores: 4,
            util_pct: 1,
            current: F::NOMINAL,
            eligible: true,
        };
        let uc = frequency::underclock_decide(&Default::default(), &[idle], 0, 0);
        assert!(!uc.notifications.is_empty());
        assert_publishes(OptimizationId::Underclocking, &uc.notifications);

        let vms: Vec<_> = (0..3)
            .map(|i| madc::MadcVm {
                vm: format!("m{i}").into(),
                workload: "w".into(),
                cores: 4,
                level: F::NOMINAL,
                priority: PreemptionPriority::Normal,
                created_at_ms: 0,
                madc_eligible: i != 2,
                preemptible: true,
            })
            .collect();
        let budgets = BTreeMap::new();
        let ev = madc::PowerEvent {
            severity: 0.6,
            vms: &vms,
            budgets: &budgets,
            now_ms: 0,
            effective_at_ms: 60_000,
            notice_ms: 30_000,
            first_claim_id: 0,
        };
        let plan = madc::power_event(&ev).unwrap();
        let kinds: BTreeSet<NotificationKind> = plan.notifications.iter().map(|n| n.kind).collect();
        assert_eq!(kinds, BTreeSet::from([NotificationKind::ScaleDown, NotificationKind::Preemption]));
        assert_publishes(OptimizationId::Madc, &plan.notifications);
    }
}
