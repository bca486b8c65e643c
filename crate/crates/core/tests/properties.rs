use std::collections::BTreeMap;

use proptest::prelude::*;

use wi_core::accounting::{
    estimate_joint, savings_breakdown, vm_price, BenefitTable, JointConstraints, PriceBook, UsageRecord, UtilSpec,
    WorkloadProfile,
};
use wi_core::agent::{AgentConfig, NodeAgent};
use wi_core::arbiter::{resolve, ResourcePool};
use wi_core::broker::{replay, Broker, HintAggregate, HintView, Payload, Scope, VmPlacement};
use wi_core::hints::{
    conservative_default, consistency_check, merge, Consistency, EffectiveHints, EligibilityThresholds, FlapPolicy,
    HintSet, HintSource, HintUpdate, NotificationKind, OptSet, PlatformNotification, PreemptionPriority,
    RuntimeHint, RuntimeUpdate, ScalePreference, UtilBand,
};
use wi_core::ids::WorkloadId;
use wi_core::optimizers::harvest::{rebalance, HarvestVm};
use wi_core::optimizers::madc::{power_event, MadcVm, PowerEvent};
use wi_core::optimizers::spot::{reclaim, PreemptionBudget, SpotCandidate};
use wi_core::optimizers::{FrequencyLevel, OptimizationId, ResourceClaim, ResourceKind};

fn priority() -> impl Strategy<Value = PreemptionPriority> {
    prop_oneof![Just(PreemptionPriority::Low), Just(PreemptionPriority::Normal), Just(PreemptionPriority::High)]
}

fn preference() -> impl Strategy<Value = ScalePreference> {
    prop_oneof![Just(ScalePreference::PreferGrow), Just(ScalePreference::Neutral), Just(ScalePreference::PreferShrink)]
}

fn hint_set() -> impl Strategy<Value = HintSet> {
    (any::<bool>(), any::<bool>(), 0u64..200_000, 0u8..=5, 0u8..=100, 0u64..7_200_000, any::<bool>()).prop_map(
        |(sud, soi, deploy, nines, pre, delay, region)| HintSet {
            scale_up_down: sud,
            scale_out_in: soi,
            deploy_time_ms: deploy,
            availability_nines: nines,
            preemptibility_pct: pre,
            delay_tolerance_ms: delay,
            region_independent: region,
        },
    )
}

fn update() -> impl Strategy<Value = RuntimeUpdate> {
    prop_oneof![
        any::<bool>().prop_map(|v| RuntimeUpdate::Characteristic(HintUpdate::ScaleUpDown(v))),
        (0u8..=100).prop_map(|v| RuntimeUpdate::Characteristic(HintUpdate::PreemptibilityPct(v))),
        (0u8..=5).prop_map(|v| RuntimeUpdate::Characteristic(HintUpdate::AvailabilityNines(v))),
        (0u64..100_000).prop_map(|v| RuntimeUpdate::Characteristic(HintUpdate::DelayToleranceMs(v))),
        priority().prop_map(RuntimeUpdate::PreemptionPriority),
        preference().prop_map(RuntimeUpdate::ScalePreference),
    ]
}

/// Hints for VMs v0..v2 with non-decreasing timestamps.
fn hint_stream(max: usize) -> impl Strategy<Value = Vec<RuntimeHint>> {
    prop::collection::vec((0usize..3, update(), 0u64..500), 0..max).prop_map(|raw| {
        let mut t = 0;
        raw.into_iter()
            .map(|(vm, u, dt)| {
                t += dt;
                RuntimeHint::new(format!("v{vm}"), u, t, HintSource::InVm)
            })
            .collect()
    })
}

// Hints

proptest! {
    #[test]
    fn merge_without_runtime_hints_is_base(base in hint_set()) {
        prop_assert_eq!(merge(base, &[]).resolved(), base);
    }

    #[test]
    fn merge_ignores_repeated_hints(base in hint_set(), hints in hint_stream(20)) {
        let hints: Vec<RuntimeHint> = hints.into_iter().filter(|h| h.vm_id == "v0".into()).collect();
        let doubled: Vec<RuntimeHint> = hints.iter().flat_map(|h| [h.clone(), h.clone()]).collect();
        prop_assert_eq!(merge(base, &hints), merge(base, &doubled));
    }

    #[test]
    fn merge_is_last_writer_wins(base in hint_set(), hints in hint_stream(20)) {
        let hints: Vec<RuntimeHint> = hints.into_iter().filter(|h| h.vm_id == "v0".into()).collect();
        let all = merge(base, &hints);
        let mut step = EffectiveHints::from_base(base);
        for h in &hints {
            step.apply(h);
        }
        prop_assert_eq!(all, step);
    }

    #[test]
    fn first_hint_of_a_kind_is_accepted(hints in hint_stream(20), cand in update(), t in 0u64..100_000) {
        let candidate = RuntimeHint::new("fresh", cand, t, HintSource::InVm);
        prop_assert_eq!(consistency_check(&hints, &candidate, &FlapPolicy::default()), Consistency::Accept);
    }

    #[test]
    fn repeating_the_last_value_is_never_a_flip(hints in hint_stream(30)) {
        let Some(last) = hints.last().cloned() else { return Ok(()) };
        let mut again = last.clone();
        again.timestamp_ms += 1;
        prop_assert_eq!(consistency_check(&hints, &again, &FlapPolicy::default()), Consistency::Accept);
    }
}

// Broker

fn runtime_topic(vm: &str) -> String {
    format!("runtime-hints/r1/s1/{vm}")
}

proptest! {
    #[test]
    fn sequences_are_gapless_and_ordered(hints in hint_stream(40)) {
        let broker = Broker::default();
        let sub = broker.subscribe("runtime-hints/*").unwrap();
        for h in &hints {
            let topic = runtime_topic(h.vm_id.as_str());
            broker.publish("p", &topic, Payload::RuntimeHint(h.clone()), h.timestamp_ms).unwrap();
        }
        let events = sub.drain();
        prop_assert_eq!(events.len(), hints.len());
        let mut next: BTreeMap<String, u64> = BTreeMap::new();
        for (e, h) in events.iter().zip(&hints) {
            prop_assert_eq!(&e.payload, &Payload::RuntimeHint(h.clone()));
            let n = next.entry(e.topic.clone()).or_insert(e.sequence);
            prop_assert_eq!(e.sequence, *n);
            *n += 1;
        }
    }

    #[test]
    fn replay_matches_live_store(hints in hint_stream(40)) {
        let broker = Broker::default();
        for h in &hints {
            let _ = broker.publish("p", &runtime_topic(h.vm_id.as_str()), Payload::RuntimeHint(h.clone()), h.timestamp_ms);
        }
        let (store, damage) = replay(&broker.log_bytes());
        prop_assert!(damage.is_none());
        prop_assert_eq!(store.canonical_bytes(), broker.store().canonical_bytes());
    }

    #[test]
    fn aggregates_fold_vm_views(
        vms in prop::collection::vec((1u32..16, 0usize..2, hint_set()), 1..8),
        hints in hint_stream(20),
    ) {
        let broker = Broker::default();
        for (i, (cores, rack, hints)) in vms.iter().enumerate() {
            let vm = format!("v{i}");
            broker.register_vm(VmPlacement {
                vm: vm.as_str().into(),
                workload: "w".into(),
                server: format!("s{i}").as_str().into(),
                rack: format!("k{rack}").as_str().into(),
                region: "r1".into(),
                cores: *cores,
            });
            broker.set_deployment_hints(&"w".into(), &[vm.as_str().into()], *hints, 0).unwrap();
        }
        for h in &hints {
            let _ = broker.publish("p", &runtime_topic(h.vm_id.as_str()), Payload::RuntimeHint(h.clone()), h.timestamp_ms);
        }
        let mut by_hand = HintAggregate::default();
        let mut racks = HintAggregate::default();
        for (i, (cores, _, _)) in vms.iter().enumerate() {
            let vm = format!("v{i}").as_str().into();
            let HintView::Vm(eff) = broker.get(&Scope::Vm(vm)).unwrap() else { panic!("vm view") };
            by_hand = by_hand.merge(&HintAggregate::of_vm(*cores, &eff));
        }
        for rack in ["k0", "k1"] {
            if let Ok(HintView::Aggregate(a)) = broker.get(&Scope::Rack(rack.into())) {
                racks = racks.merge(&a);
            }
        }
        let HintView::Aggregate(region) = broker.get(&Scope::Region("r1".into())).unwrap() else { panic!("aggregate") };
        prop_assert_eq!(&region, &by_hand);
        prop_assert_eq!(&region, &racks);
    }
}

// Node agent

proptest! {
    #[test]
    fn collect_publishes_in_write_order(updates in prop::collection::vec(priority(), 1..10)) {
        let broker = Broker::default();
        let sub = broker.subscribe("runtime-hints/*").unwrap();
        let policy = FlapPolicy { max_flips: 100, window_ms: 1 };
        let mut agent = NodeAgent::new("s1", "r1", AgentConfig { flap: policy, ..AgentConfig::default() });
        agent.add_vm("v0");
        for (i, p) in updates.iter().enumerate() {
            agent.write_hint(RuntimeHint::new("v0", RuntimeUpdate::PreemptionPriority(*p), i as u64, HintSource::InVm)).unwrap();
        }
        let report = agent.collect(&broker, 1_000);
        prop_assert_eq!(report.published.len(), updates.len());
        let got: Vec<RuntimeUpdate> = sub
            .drain()
            .into_iter()
            .map(|e| match e.payload {
                Payload::RuntimeHint(h) => h.update,
                other => panic!("{other:?}"),
            })
            .collect();
        let want: Vec<RuntimeUpdate> = updates.iter().map(|p| RuntimeUpdate::PreemptionPriority(*p)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn delivered_removals_carry_the_notice(
        kind in prop_oneof![Just(NotificationKind::Eviction), Just(NotificationKind::Preemption), Just(NotificationKind::ScaleUp)],
        issued in 0u64..1_000_000,
        lead in 0u64..100_000,
    ) {
        let mut agent = NodeAgent::new("s1", "r1", AgentConfig::default());
        agent.add_vm("v0");
        let n = agent.deliver(PlatformNotification::new("v0", kind, issued, issued + lead)).unwrap();
        prop_assert!(n.effective_at_ms >= issued + lead);
        if kind.is_removal() {
            prop_assert!(n.notice_ms() >= agent.config.eviction_notice_ms);
        }
    }
}

// Spot

fn spot_candidates() -> impl Strategy<Value = Vec<SpotCandidate>> {
    prop::collection::vec((1u32..9, 0usize..3, priority(), 0u64..100, prop::bool::weighted(0.85)), 0..12).prop_map(
        |raw| {
            raw.into_iter()
                .enumerate()
                .map(|(i, (cores, w, priority, created, eligible))| SpotCandidate {
                    vm: format!("v{i:02}").as_str().into(),
                    workload: format!("w{w}").as_str().into(),
                    cores,
                    priority,
                    created_at_ms: created,
                    eligible,
                })
                .collect()
        },
    )
}

fn budgets() -> impl Strategy<Value = BTreeMap<WorkloadId, PreemptionBudget>> {
    prop::collection::vec((0u32..10, 0u8..=100, 0u32..3), 3).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(w, (vm_count, pct, in_flight))| {
                (format!("w{w}").as_str().into(), PreemptionBudget { vm_count, preemptibility_pct: pct, in_flight })
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn reclaim_is_minimal_and_within_budget(
        demanded in 0u64..40,
        cands in spot_candidates(),
        budgets in budgets(),
    ) {
        let plan = reclaim(demanded, &cands, &budgets, 1_000, 30_000);
        let by_vm: BTreeMap<_, _> = cands.iter().map(|c| (c.vm.clone(), c)).collect();
        let freed: u64 = plan.evictions.iter().map(|v| by_vm[v].cores as u64).sum();
        prop_assert_eq!(freed, plan.freed_cores);
        prop_assert!(plan.evictions.iter().all(|v| by_vm[v].eligible));
        let mut taken: BTreeMap<WorkloadId, u32> = BTreeMap::new();
        for v in &plan.evictions {
            *taken.entry(by_vm[v].workload.clone()).or_default() += 1;
        }
        for (w, n) in &taken {
            prop_assert!(*n <= budgets[w].available(), "{w}: {n} > {}", budgets[w].available());
        }
        match plan.shortfall {
            None => {
                prop_assert!(freed >= demanded);
                for v in &plan.evictions {
                    prop_assert!(freed - (by_vm[v].cores as u64) < demanded, "{v} was unnecessary");
                }
            }
            Some(s) => prop_assert_eq!(s, demanded - freed),
        }
        for n in &plan.notifications {
            prop_assert!(n.notice_ms() >= 30_000);
        }
    }
}

// Harvest

fn harvest_vms() -> impl Strategy<Value = Vec<HarvestVm>> {
    prop::collection::vec((1u32..8, 0u32..10, preference(), prop::option::of(0u32..12)), 0..6).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (base, harvested, preference, cap))| HarvestVm {
                vm: format!("h{i}").as_str().into(),
                base_cores: base,
                harvested: cap.map_or(harvested, |c| harvested.min(c)),
                preference,
                max_harvest: cap,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn harvest_conserves_cores(spare in -20i64..60, vms in harvest_vms()) {
        let acts = rebalance(spare, &vms, 0);
        let held: i64 = vms.iter().map(|v| v.harvested as i64).sum();
        let after = held + acts.net_change();
        prop_assert_eq!(after + acts.unused as i64, spare.max(0));
        prop_assert_eq!(acts.deficit, if spare < 0 { spare.unsigned_abs() } else { 0 });
        for (vm, d) in &acts.changes {
            let v = vms.iter().find(|v| &v.vm == vm).unwrap();
            let now = v.harvested as i64 + d;
            prop_assert!(now >= 0);
            if let Some(cap) = v.max_harvest {
                prop_assert!(now <= cap as i64);
            }
            if *d > 0 {
                prop_assert!(v.preference != ScalePreference::PreferShrink);
            }
        }
        prop_assert_eq!(acts.changes.len(), acts.notifications.len());
    }
}

// MADC

fn madc_vms() -> impl Strategy<Value = Vec<MadcVm>> {
    prop::collection::vec((1u32..16, -2i8..=2, priority(), any::<bool>(), any::<bool>(), 0usize..2), 0..10).prop_map(
        |raw| {
            raw.into_iter()
                .enumerate()
                .map(|(i, (cores, level, priority, madc, pre, w))| MadcVm {
                    vm: format!("m{i}").as_str().into(),
                    workload: format!("w{w}").as_str().into(),
                    cores,
                    level: FrequencyLevel::new(level).unwrap(),
                    priority,
                    created_at_ms: i as u64,
                    madc_eligible: madc,
                    preemptible: pre,
                })
                .collect()
        },
    )
}

proptest! {
    #[test]
    fn power_event_sheds_enough_or_reports_shortfall(
        severity in 0.0f64..1.0,
        vms in madc_vms(),
        budgets in budgets(),
    ) {
        let ev = PowerEvent {
            severity,
            vms: &vms,
            budgets: &budgets,
            now_ms: 0,
            effective_at_ms: 60_000,
            notice_ms: 30_000,
            first_claim_id: 0,
        };
        let total: f64 = vms.iter().map(MadcVm::power).sum();
        match power_event(&ev) {
            Ok(plan) => {
                prop_assert!(plan.shed_power + 1e-9 >= severity * total);
                for (vm, level) in &plan.throttles {
                    let v = vms.iter().find(|v| &v.vm == vm).unwrap();
                    prop_assert!(v.madc_eligible && *level < v.level);
                }
                for vm in &plan.evictions {
                    prop_assert!(vms.iter().any(|v| &v.vm == vm && v.preemptible));
                }
            }
            Err(short) => {
                prop_assert!(short.remaining > 0.0);
                prop_assert!((short.plan.shed_power + short.remaining - severity * total).abs() < 1e-6);
            }
        }
    }
}

// Arbiter

fn claims(kind: ResourceKind) -> impl Strategy<Value = Vec<ResourceClaim>> {
    prop::collection::vec((1u32..4, 1u64..9, 0u64..3, 0usize..3), 0..8).prop_map(move |raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (p, amount, ts, owner))| {
                ResourceClaim::new(i as u64, OptimizationId::Madc, kind, amount, format!("o{owner}"), ts)
                    .unwrap()
                    .with_priority(p)
            })
            .collect()
    })
}

fn kind() -> impl Strategy<Value = ResourceKind> {
    prop_oneof![Just(ResourceKind::CpuFrequency), Just(ResourceKind::SpareCompute)]
}

proptest! {
    #[test]
    fn arbiter_respects_capacity_and_priority(
        (kind, cs) in kind().prop_flat_map(|k| (Just(k), claims(k))),
        cap in 0u64..30,
        seed in any::<u64>(),
    ) {
        let pool = ResourcePool::new(kind, cap);
        let out = resolve(&pool, &cs, seed).unwrap();
        prop_assert_eq!(out.len(), cs.len());
        prop_assert!(out.iter().map(|a| a.granted).sum::<u64>() <= cap);
        for (a, c) in out.iter().zip(&cs) {
            prop_assert_eq!(a.claim, c.id);
            prop_assert!(a.granted <= c.amount);
            if !pool.compressible() {
                prop_assert!(a.granted == 0 || a.granted == c.amount);
            }
        }
        // A claim left short was crowded out by claims of equal or higher priority.
        for (i, c) in cs.iter().enumerate() {
            if out[i].granted < c.amount {
                let lower: u64 = cs.iter().zip(&out).filter(|(d, _)| d.priority > c.priority).map(|(_, a)| a.granted).sum();
                if pool.compressible() {
                    prop_assert_eq!(lower, 0);
                } else {
                    let ahead: u64 = cs
                        .iter()
                        .zip(&out)
                        .enumerate()
                        .filter(|(j, (d, _))| *j != i && d.priority <= c.priority)
                        .map(|(_, (_, a))| a.granted)
                        .sum();
                    prop_assert!(ahead + c.amount > cap);
                }
            }
        }
        prop_assert_eq!(resolve(&pool, &cs, seed).unwrap(), out);
    }
}

// Accounting

fn profile() -> impl Strategy<Value = WorkloadProfile> {
    (hint_set(), 1u64..64, 0usize..3).prop_map(|(hints, cores, band)| WorkloadProfile {
        id: "w".into(),
        cores,
        hints,
        util: UtilSpec::Band(UtilBand::ALL[band]),
        home_region: None,
    })
}

proptest! {
    #[test]
    fn savings_ignore_order_and_duplication(pop in prop::collection::vec(profile(), 1..20), rot in 0usize..20) {
        let t = EligibilityThresholds::default();
        let b = BenefitTable::<f64>::standard();
        let base = savings_breakdown(&pop, &b, &t);
        let mut rotated = pop.clone();
        rotated.rotate_left(rot % pop.len());
        rotated.reverse();
        let doubled: Vec<WorkloadProfile> = pop.iter().chain(&pop).cloned().collect();
        for other in [savings_breakdown(&rotated, &b, &t), savings_breakdown(&doubled, &b, &t)] {
            prop_assert!((other.total_pct - base.total_pct).abs() < 1e-9);
            for (x, y) in other.contributions.iter().zip(&base.contributions) {
                prop_assert_eq!(x.optimization, y.optimization);
                prop_assert!((x.points - y.points).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn contribution_bounded_by_benefit_and_reach(pop in prop::collection::vec(profile(), 1..20)) {
        let t = EligibilityThresholds::default();
        let b = BenefitTable::<f64>::standard();
        let report = savings_breakdown(&pop, &b, &t);
        let total: u64 = pop.iter().map(|w| w.cores).sum();
        for c in &report.contributions {
            let reach: u64 = pop.iter().filter(|w| w.active(&t).contains(c.optimization)).map(|w| w.cores).sum();
            let bound = 100.0 * b.get(c.optimization) * reach as f64 / total as f64;
            prop_assert!(c.points >= -1e-12 && c.points <= bound + 1e-9, "{:?}: {} > {}", c.optimization, c.points, bound);
        }
        prop_assert!(report.total_pct <= 100.0);
    }

    #[test]
    fn price_grows_with_hours_and_cores(
        bits in any::<u16>(),
        cores in 1u32..32,
        hours in 0.0f64..100.0,
        extra in 0.0f64..50.0,
    ) {
        let active = wi_core::accounting::select_compatible(OptSet::from_bits(bits).intersection(OptSet::all()));
        let book = PriceBook::standard(1.0);
        let p = |c: u32, h: f64| vm_price(&book, active, &UsageRecord::regular(c, h)).unwrap();
        prop_assert!(p(cores, hours) <= p(cores, hours + extra) + 1e-9);
        prop_assert!(p(cores, hours) <= p(cores + 1, hours) + 1e-9);
        prop_assert!(p(cores, hours) <= vm_price(&book, OptSet::empty(), &UsageRecord::regular(cores, hours)).unwrap() + 1e-9);
    }
}

// Joint estimation

fn marginal_only() -> impl Strategy<Value = JointConstraints<f64>> {
    let ids = [
        OptimizationId::SpotVms,
        OptimizationId::Madc,
        OptimizationId::RegionAgnostic,
        OptimizationId::AutoScaling,
    ];
    prop::collection::vec(0u32..=100, 1..=4).prop_map(move |ps| {
        let opts: Vec<OptimizationId> = ids[..ps.len()].to_vec();
        let mut c = JointConstraints::new(opts.clone());
        for (id, p) in opts.into_iter().zip(ps) {
            c.marginals.insert(id, p as f64 / 100.0);
        }
        c
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interval_contains_independence(c in marginal_only()) {
        let est = estimate_joint(&c).unwrap();
        let ind = est.independence.unwrap();
        prop_assert!(est.min.savings <= ind + 1e-9 && ind <= est.max.savings + 1e-9,
            "{} not in [{}, {}]", ind, est.min.savings, est.max.savings);
        for extreme in [&est.min, &est.max] {
            let mass: f64 = extreme.joint.iter().map(|m| m.mass).sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
            for (id, p) in &c.marginals {
                let got: f64 = extreme.joint.iter().filter(|m| m.set.contains(*id)).map(|m| m.mass).sum();
                prop_assert!((got - p).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn conservative_default_is_what_absent_hints_mean() {
    let broker = Broker::default();
    assert_eq!(broker.effective(&"nobody".into()).resolved(), conservative_default());
}
