//! The event loop: mailboxes, agents, broker, optimizers, arbiter, effects.

use std::collections::{BTreeMap, BTreeSet};

use crate::accounting::{select_compatible, vm_price, PriceBook, UsageRecord};
use crate::agent::{collect_all, notification_topic, NodeAgent};
use crate::arbiter::{resolve, ResourcePool};
use crate::broker::{Broker, HintStore, OptimizationEvent, Payload, RateLimitPolicy, VmPlacement};
use crate::hints::{
    EligibilityThresholds, HintSource, NotificationKind, NotificationPayload, OptSet, PlatformNotification,
    PreemptionPriority, RuntimeHint,
};
use crate::ids::{RackId, RegionId, VmId, WorkloadId};
use crate::optimizers::frequency::{
    boosted_cores, overclock_decide, underclock_decide, BoostCandidate, UnderclockCandidate, UnderclockSignal,
};
use crate::optimizers::harvest::{rebalance, HarvestVm};
use crate::optimizers::madc::{power_event, MadcVm, PowerEvent};
use crate::optimizers::rightsize::{recommend, Recommendation};
use crate::optimizers::spot::{reclaim, PreemptionBudget, SpotCandidate};
use crate::optimizers::{autoscale, region, FrequencyLevel, OptimizationId, ResourceKind};

use super::metrics::{BillingClass, MetricsReport, WorkloadMetrics};
use super::models::{self, StepOutput, VmView, WorkloadModel};
use super::scenario::{PricingClass, Scenario, ScenarioError, ScriptedEvent};
use super::trace::{notice_violations, Trace};

const MS_PER_HOUR: f64 = 3_600_000.0;

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: MetricsReport,
    pub trace: Trace,
    /// Broker event log, replayable with [`crate::broker::replay`].
    pub log: Vec<u8>,
    pub store: HintStore,
}

#[derive(Debug, Clone)]
enum Pending {
    CreateVm { workload: usize },
    Evict { vm: VmId },
    CrunchEnd { server: usize, cores: u32 },
    Scripted(usize),
    Frequency { vm: VmId, level: FrequencyLevel },
}

#[derive(Debug, Clone)]
struct Vm {
    id: VmId,
    workload: usize,
    server: usize,
    region: RegionId,
    /// Size at creation, what the regular price is computed on.
    cores: u32,
    base_cores: u32,
    harvested: u32,
    level: FrequencyLevel,
    /// Boost granted this tick: (level, cores running at it).
    boost: Option<(FrequencyLevel, u64)>,
    created_at_ms: u64,
    doomed: bool,
    priced: OptSet,
    class: BillingClass,
    resized: Option<u32>,
}

impl Vm {
    fn cores_now(&self) -> u32 {
        self.base_cores + self.harvested
    }

    fn speed(&self) -> f64 {
        match self.boost {
            Some((lvl, n)) if self.cores_now() > 0 => {
                let n = (n as f64).min(self.cores_now() as f64);
                let c = self.cores_now() as f64;
                (n * lvl.multiplier() + (c - n) * self.level.multiplier()) / c
            }
            _ => self.level.multiplier(),
        }
    }
}

struct Engine<'a> {
    sc: &'a Scenario,
    seq: u64,
    queue: BTreeMap<(u64, u64), Pending>,
    vms: BTreeMap<VmId, Vm>,
    reserved: Vec<u32>,
    agents: Vec<NodeAgent>,
    broker: Broker,
    models: Vec<Box<dyn WorkloadModel>>,
    counters: Vec<u32>,
    metrics: MetricsReport,
    trace: Trace,
    thresholds: EligibilityThresholds,
    book: PriceBook<f64>,
    next_claim: u64,
    util: BTreeMap<VmId, f64>,
    /// Priority each doomed VM had, by the workload's own account, when notified.
    notice_priority: BTreeMap<VmId, PreemptionPriority>,
    emergency: BTreeSet<VmId>,
    min_vms: Vec<Option<u32>>,
    /// Last frequency grant per VM; only changes reach the trace.
    last_grant: BTreeMap<VmId, u64>,
}

/// Run a scenario and, for batch workloads, an all-regular baseline to get slowdowns.
pub fn run(sc: &Scenario) -> Result<SimOutput, ScenarioError> {
    sc.validate()?;
    let mut out = run_once(sc);
    if sc.workloads.iter().any(|w| matches!(w.model, super::scenario::ModelSpec::Batch(_))) {
        let mut base = sc.clone();
        base.enabled = OptSet::empty();
        base.events.clear();
        let baseline = run_once(&base);
        for (id, m) in out.metrics.workloads.iter_mut() {
            let b = baseline.metrics.workloads.get(id).and_then(|b| b.makespan_ms);
            if let (Some(mine), Some(b)) = (m.makespan_ms, b) {
                m.slowdown = Some(if b == 0 { 1.0 } else { mine as f64 / b as f64 });
            }
        }
    }
    Ok(out)
}

/// One pass of the event loop, without the baseline comparison.
pub fn run_once(sc: &Scenario) -> SimOutput {
    let mut e = Engine::new(sc);
    e.execute();
    e.finish()
}

fn price_class(spec_class: PricingClass, applicable: OptSet, enabled: OptSet) -> OptSet {
    use OptimizationId::*;
    let mut set = applicable.intersection(enabled);
    match spec_class {
        PricingClass::Auto => {}
        PricingClass::Regular => {
            set.remove(SpotVms);
            set.remove(HarvestVms);
        }
        PricingClass::Spot => {
            set.remove(HarvestVms);
            set.remove(NonPreProvision);
            if enabled.contains(SpotVms) {
                set.insert(SpotVms);
            }
        }
        PricingClass::Harvest => {
            set.remove(SpotVms);
            set.remove(NonPreProvision);
            if enabled.contains(HarvestVms) {
                set.insert(HarvestVms);
            }
        }
    }
    select_compatible(set)
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario) -> Self {
        let broker = Broker::new(sc.rate_limit);
        broker.set_rate_policy("platform", RateLimitPolicy::per_second(1_000_000));
        for id in OptimizationId::TEN {
            broker.set_rate_policy(&format!("optimizer:{id}"), RateLimitPolicy::per_second(1_000_000));
        }
        let agents = sc.servers.iter().map(|s| NodeAgent::new(s.id.clone(), s.region_id.clone(), sc.agent)).collect();
        let models = sc
            .workloads
            .iter()
            .enumerate()
            .map(|(i, w)| models::build(&w.model, sc.seed.wrapping_add(i as u64)))
            .collect();
        let mut metrics = MetricsReport::default();
        for w in &sc.workloads {
            metrics.workloads.insert(w.id.clone(), WorkloadMetrics::default());
        }
        let mut e = Engine {
            sc,
            seq: 0,
            queue: BTreeMap::new(),
            vms: BTreeMap::new(),
            reserved: vec![0; sc.servers.len()],
            agents,
            broker,
            models,
            counters: vec![0; sc.workloads.len()],
            metrics,
            trace: Trace::default(),
            thresholds: EligibilityThresholds::default(),
            book: PriceBook::standard(1.0),
            next_claim: 0,
            util: BTreeMap::new(),
            notice_priority: BTreeMap::new(),
            emergency: BTreeSet::new(),
            min_vms: vec![None; sc.workloads.len()],
            last_grant: BTreeMap::new(),
        };
        for (i, w) in sc.workloads.iter().enumerate() {
            for k in 0..w.vms {
                e.schedule(k as u64 * w.stagger_ms, Pending::CreateVm { workload: i });
            }
        }
        for (i, ev) in sc.events.iter().enumerate() {
            e.schedule(ev.at_ms(), Pending::Scripted(i));
        }
        e
    }

    fn schedule(&mut self, at_ms: u64, p: Pending) {
        self.queue.insert((at_ms, self.seq), p);
        self.seq += 1;
    }

    fn note(&mut self, t: u64, entity: impl Into<String>, event: &str, detail: String) {
        *self.metrics.event_counts.entry(event.to_owned()).or_default() += 1;
        self.trace.push(t, entity, event, detail);
    }

    fn wm(&mut self, workload: usize) -> &mut WorkloadMetrics {
        let id = &self.sc.workloads[workload].id;
        self.metrics.workloads.get_mut(id).expect("registered")
    }

    fn used_cores(&self, server: usize) -> u32 {
        self.vms.values().filter(|v| v.server == server).map(Vm::cores_now).sum()
    }

    fn free_cores(&self, server: usize) -> i64 {
        self.sc.servers[server].cores as i64 - self.used_cores(server) as i64 - self.reserved[server] as i64
    }

    fn live_count(&self, workload: usize) -> u32 {
        self.vms.values().filter(|v| v.workload == workload).count() as u32
    }

    fn effective_hints(&self, vm: &VmId) -> crate::hints::HintSet {
        self.broker.effective(vm).resolved()
    }

    fn execute(&mut self) {
        let tick = self.sc.tick_ms;
        let mut t = 0;
        while t < self.sc.duration_ms {
            self.apply_due(t);
            self.dispatch(t);
            self.step_models(t, tick);
            self.collect(t);
            self.optimize(t);
            self.dispatch(t);
            self.account(t, tick);
            t += tick;
        }
        for (i, m) in self.models.iter().enumerate() {
            let (g, c, d) = m.requests();
            let id = self.sc.workloads[i].id.clone();
            let wm = self.metrics.workloads.get_mut(&id).expect("registered");
            wm.work_completed = m.work_completed();
            wm.makespan_ms = m.finished_at();
            wm.requests_generated = g;
            wm.requests_completed = c;
            wm.requests_dropped = d;
            wm.min_vms = self.min_vms[i].unwrap_or(wm.peak_vms);
        }
    }

    fn finish(mut self) -> SimOutput {
        self.metrics.notice_violations = notice_violations(&self.trace, self.sc.agent.eviction_notice_ms).len() as u64;
        self.metrics.rate_limited_hints =
            self.sc.servers.iter().map(|s| self.broker.rate_limited_count(&format!("agent:{}", s.id))).sum();
        self.metrics.total_cost = self.metrics.workloads.values().map(|w| w.cost).sum();
        self.metrics.regular_cost = self.metrics.workloads.values().map(|w| w.regular_cost).sum();
        self.metrics.trace_digest = self.trace.digest();
        SimOutput { metrics: self.metrics, trace: self.trace, log: self.broker.log_bytes(), store: self.broker.store() }
    }

    fn apply_due(&mut self, now: u64) {
        while let Some((&(at, seq), _)) = self.queue.iter().next() {
            if at > now {
                break;
            }
            let p = self.queue.remove(&(at, seq)).expect("present");
            match p {
                Pending::CreateVm { workload } => self.create_vm(workload, now),
                Pending::Evict { vm } => self.evict(&vm, now),
                Pending::CrunchEnd { server, cores } => {
                    self.reserved[server] = self.reserved[server].saturating_sub(cores);
                    self.note(now, self.sc.servers[server].id.to_string(), "crunch_end", format!("cores={cores}"));
                }
                Pending::Scripted(i) => self.scripted(i, now),
                Pending::Frequency { vm, level } => {
                    if let Some(v) = self.vms.get_mut(&vm) {
                        v.level = level;
                        self.note(now, vm.to_string(), "frequency", format!("level={}", level.level()));
                    }
                }
            }
        }
    }

    fn create_vm(&mut self, workload: usize, now: u64) {
        let w = &self.sc.workloads[workload];
        let util = w.util_band.representative();
        let applicable = crate::accounting::WorkloadProfile {
            id: w.id.clone(),
            cores: w.cores_per_vm as u64,
            hints: w.hints,
            util: crate::accounting::UtilSpec::Stats(util),
            home_region: None,
        }
        .applicable(&self.thresholds);
        let priced = price_class(w.class, applicable, self.sc.enabled);
        let target = if priced.contains(OptimizationId::RegionAgnostic) {
            region::place(&w.region_id, true, &self.sc.regions, 0.5).unwrap_or_else(|_| w.region_id.clone())
        } else {
            w.region_id.clone()
        };
        let cores = w.cores_per_vm;
        let fits = |e: &Self, s: usize| e.free_cores(s) >= cores as i64;
        let server = (0..self.sc.servers.len())
            .find(|&s| self.sc.servers[s].region_id == target && fits(self, s))
            .or_else(|| (0..self.sc.servers.len()).find(|&s| fits(self, s)));
        let n = self.counters[workload];
        self.counters[workload] += 1;
        let id = VmId::new(format!("{}-{n}", w.id));
        let Some(server) = server else {
            self.note(now, id.to_string(), "placement_failed", format!("cores={cores}"));
            return;
        };
        let class = if priced.contains(OptimizationId::SpotVms) {
            BillingClass::Spot
        } else if priced.contains(OptimizationId::HarvestVms) {
            BillingClass::Harvest
        } else {
            BillingClass::Regular
        };
        let srv = &self.sc.servers[server];
        let region = srv.region_id.clone();
        self.broker.register_vm(VmPlacement {
            vm: id.clone(),
            workload: w.id.clone(),
            server: srv.id.clone(),
            rack: RackId::new(srv.rack.clone().unwrap_or_else(|| srv.id.to_string())),
            region: region.clone(),
            cores,
        });
        if let Err(e) = self.broker.set_deployment_hints(&w.id, std::slice::from_ref(&id), w.hints, now) {
            ::log::warn!("deployment hints for {id}: {e}");
        }
        self.agents[server].add_vm(id.clone());
        self.models[workload].on_vm_added(&id, now);
        let detail = format!("server={} region={region} cores={cores} priced={priced} class={class:?}", srv.id);
        self.vms.insert(
            id.clone(),
            Vm {
                id: id.clone(),
                workload,
                server,
                region,
                cores,
                base_cores: cores,
                harvested: 0,
                level: FrequencyLevel::NOMINAL,
                boost: None,
                created_at_ms: now,
                doomed: false,
                priced,
                class,
                resized: None,
            },
        );
        self.note(now, id.to_string(), "created", detail);
        let live = self.live_count(workload);
        let wm = self.wm(workload);
        wm.peak_vms = wm.peak_vms.max(live);
    }

    /// Take a VM away. Evictions come from the platform, removals from the workload.
    fn destroy(&mut self, vm: &VmId, now: u64, event: &str) {
        let Some(v) = self.vms.remove(vm) else { return };
        self.agents[v.server].remove_vm(vm);
        self.broker.unregister_vm(vm);
        self.util.remove(vm);
        let mut out = StepOutput::default();
        self.models[v.workload].on_removed(vm, now, &mut out);
        self.drain_output(now, out);
        let emergency = self.emergency.remove(vm);
        self.note(now, vm.to_string(), event, format!("server={} emergency={emergency}", self.sc.servers[v.server].id));
        let live = self.live_count(v.workload);
        let m = self.min_vms[v.workload].get_or_insert(live);
        *m = (*m).min(live);
    }

    fn evict(&mut self, vm: &VmId, now: u64) {
        let Some(v) = self.vms.get(vm) else { return };
        let workload = v.workload;
        let emergency = self.emergency.contains(vm);
        let high = self.notice_priority.remove(vm) == Some(PreemptionPriority::High);
        self.destroy(vm, now, "evicted");
        let wm = self.wm(workload);
        wm.evictions += 1;
        if emergency {
            wm.emergency_evictions += 1;
        } else {
            wm.evictions_with_notice += 1;
        }
        if high {
            wm.high_priority_evictions += 1;
        }
    }

    fn publish_event(&mut self, opt: OptimizationId, server: usize, action: &str, scope: String, amount: i64, now: u64) {
        let topic = format!("optimization-events/{opt}/{}", self.sc.servers[server].id);
        let ev = OptimizationEvent { optimization: opt, action: action.to_owned(), scope: scope.clone(), amount };
        if let Err(e) = self.broker.publish(&format!("optimizer:{opt}"), &topic, Payload::OptimizationEvent(ev), now) {
            ::log::warn!("optimization event dropped: {e}");
        }
        self.note(now, format!("optimizer:{opt}"), "decision", format!("action={action} scope={scope} amount={amount}"));
    }

    /// Hand a notification to the VM's agent, publish it, and schedule the removal if any.
    fn notify(&mut self, n: PlatformNotification, now: u64) {
        let Some(v) = self.vms.get(&n.vm_id) else { return };
        let server = v.server;
        let workload = v.workload;
        let n = match self.agents[server].deliver(n) {
            Ok(n) => n,
            Err(e) => {
                ::log::warn!("{e}");
                return;
            }
        };
        let topic = notification_topic(&self.sc.servers[server].region_id, &self.sc.servers[server].id, &n.vm_id);
        if let Err(e) = self.broker.publish("platform", &topic, Payload::Notification(n.clone()), now) {
            ::log::warn!("notification dropped: {e}");
        }
        let payload = match &n.payload {
            NotificationPayload::None => String::new(),
            NotificationPayload::Cores(c) => format!(" cores={c}"),
            NotificationPayload::Frequency(l) => format!(" level={}", l.level()),
            NotificationPayload::Reason(_) => " reason=inconsistent".to_owned(),
        };
        self.note(
            now,
            n.vm_id.to_string(),
            "notification",
            format!("kind={:?} effective={} emergency={}{payload}", n.kind, n.effective_at_ms, n.emergency),
        );
        if n.kind.is_removal() {
            let vm = n.vm_id.clone();
            let prio = self.models[workload].priority(&vm, now);
            if let Some(v) = self.vms.get_mut(&vm) {
                if v.doomed {
                    return;
                }
                v.doomed = true;
            }
            self.notice_priority.insert(vm.clone(), prio);
            if n.emergency {
                self.emergency.insert(vm.clone());
            }
            self.schedule(n.effective_at_ms, Pending::Evict { vm });
        }
    }

    fn scripted(&mut self, i: usize, now: u64) {
        match self.sc.events[i].clone() {
            ScriptedEvent::CapacityCrunch { server, cores, until_ms, .. } => {
                let Some(s) = self.sc.servers.iter().position(|x| x.id == server) else { return };
                self.reserved[s] += cores;
                self.note(now, server.to_string(), "crunch", format!("cores={cores}"));
                if let Some(u) = until_ms {
                    self.schedule(u, Pending::CrunchEnd { server: s, cores });
                }
                if self.sc.enabled.contains(OptimizationId::HarvestVms) {
                    self.rebalance_harvest(s, now);
                }
                self.reclaim_spot(s, now);
            }
            ScriptedEvent::PowerEvent { server, severity, lead_ms, .. } => {
                let Some(s) = self.sc.servers.iter().position(|x| x.id == server) else { return };
                self.note(now, server.to_string(), "power_event", format!("severity={severity} lead={lead_ms}"));
                if self.sc.enabled.contains(OptimizationId::Madc) {
                    self.madc(s, severity, lead_ms, now);
                } else {
                    self.note(now, server.to_string(), "power_event_ignored", "madc=disabled".into());
                }
            }
        }
    }

    /// Cores the server is short once doomed VMs are gone.
    fn deficit(&self, server: usize) -> i64 {
        let committed: u32 = self.vms.values().filter(|v| v.server == server && !v.doomed).map(Vm::cores_now).sum();
        committed as i64 + self.reserved[server] as i64 - self.sc.servers[server].cores as i64
    }

    fn budgets(&self) -> BTreeMap<WorkloadId, PreemptionBudget> {
        let mut out = BTreeMap::new();
        for (i, w) in self.sc.workloads.iter().enumerate() {
            let mine: Vec<&Vm> = self.vms.values().filter(|v| v.workload == i).collect();
            let pct = mine.iter().map(|v| self.effective_hints(&v.id).preemptibility_pct).max().unwrap_or(0);
            let in_flight = mine.iter().filter(|v| v.doomed).count() as u32;
            out.insert(w.id.clone(), PreemptionBudget { vm_count: mine.len() as u32, preemptibility_pct: pct, in_flight });
        }
        out
    }

    fn preemptible(&self, v: &Vm) -> bool {
        matches!(v.class, BillingClass::Spot | BillingClass::Harvest)
            && self.effective_hints(&v.id).preemptibility_pct >= self.thresholds.min_preemptibility_pct
    }

    fn reclaim_spot(&mut self, server: usize, now: u64) {
        let deficit = self.deficit(server);
        if deficit <= 0 {
            return;
        }
        let sid = self.sc.servers[server].id.to_string();
        if !self.sc.enabled.contains(OptimizationId::SpotVms) {
            self.note(now, sid, "crunch_unmet", format!("cores={deficit}"));
            return;
        }
        let candidates: Vec<SpotCandidate> = self
            .vms
            .values()
            .filter(|v| v.server == server && !v.doomed)
            .map(|v| SpotCandidate {
                vm: v.id.clone(),
                workload: self.sc.workloads[v.workload].id.clone(),
                cores: v.cores_now(),
                priority: self.broker.effective(&v.id).preemption_priority,
                created_at_ms: v.created_at_ms,
                eligible: self.preemptible(v),
            })
            .collect();
        let plan = reclaim(deficit as u64, &candidates, &self.budgets(), now, self.sc.agent.eviction_notice_ms);
        self.publish_event(OptimizationId::SpotVms, server, "reclaim", sid.clone(), plan.freed_cores as i64, now);
        if let Some(short) = plan.shortfall {
            self.note(now, sid, "insufficient_capacity", format!("cores={short}"));
        }
        for n in plan.notifications {
            self.notify(n, now);
        }
    }

    fn rebalance_harvest(&mut self, server: usize, now: u64) {
        let base: u32 = self.vms.values().filter(|v| v.server == server && !v.doomed).map(|v| v.base_cores).sum();
        let other_harvest: u32 = self
            .vms
            .values()
            .filter(|v| v.server == server && !v.doomed && v.class != BillingClass::Harvest)
            .map(|v| v.harvested)
            .sum();
        let spare = self.sc.servers[server].cores as i64 - base as i64 - other_harvest as i64 - self.reserved[server] as i64;
        let hv: Vec<HarvestVm> = self
            .vms
            .values()
            .filter(|v| v.server == server && !v.doomed && v.class == BillingClass::Harvest)
            .map(|v| HarvestVm {
                vm: v.id.clone(),
                base_cores: v.base_cores,
                harvested: v.harvested,
                preference: self.broker.effective(&v.id).scale_preference,
                max_harvest: None,
            })
            .collect();
        if hv.is_empty() {
            return;
        }
        let actions = rebalance(spare, &hv, now);
        if actions.changes.is_empty() {
            return;
        }
        for (vm, d) in &actions.changes {
            if let Some(v) = self.vms.get_mut(vm) {
                v.harvested = (v.harvested as i64 + d).max(0) as u32;
            }
        }
        let net = actions.net_change();
        self.publish_event(OptimizationId::HarvestVms, server, "rebalance", self.sc.servers[server].id.to_string(), net, now);
        for n in actions.notifications {
            self.notify(n, now);
        }
    }

    fn madc(&mut self, server: usize, severity: f64, lead_ms: u64, now: u64) {
        let vms: Vec<MadcVm> = self
            .vms
            .values()
            .filter(|v| v.server == server && !v.doomed)
            .map(|v| MadcVm {
                vm: v.id.clone(),
                workload: self.sc.workloads[v.workload].id.clone(),
                cores: v.cores_now(),
                level: v.level,
                priority: self.broker.effective(&v.id).preemption_priority,
                created_at_ms: v.created_at_ms,
                madc_eligible: v.priced.contains(OptimizationId::Madc),
                preemptible: self.preemptible(v),
            })
            .collect();
        let budgets = self.budgets();
        let ev = PowerEvent {
            severity,
            vms: &vms,
            budgets: &budgets,
            now_ms: now,
            effective_at_ms: now + lead_ms,
            notice_ms: self.sc.agent.eviction_notice_ms,
            first_claim_id: self.next_claim,
        };
        let plan = match power_event(&ev) {
            Ok(p) => p,
            Err(short) => {
                let sid = self.sc.servers[server].id.to_string();
                self.note(now, sid, "power_shortfall", format!("remaining={:.3}", short.remaining));
                short.plan
            }
        };
        self.next_claim += plan.claims.len() as u64;
        let sid = self.sc.servers[server].id.to_string();
        self.publish_event(OptimizationId::Madc, server, "shed", sid, plan.shed_power.round() as i64, now);
        for (vm, level) in &plan.throttles {
            self.schedule(now + lead_ms, Pending::Frequency { vm: vm.clone(), level: *level });
        }
        for n in plan.notifications {
            self.notify(n, now);
        }
    }

    /// Read every VM's scheduled events and hand them to its workload.
    fn dispatch(&mut self, now: u64) {
        let mut outs = Vec::new();
        for a in 0..self.agents.len() {
            let vms: Vec<VmId> = self.agents[a].vms().cloned().collect();
            for vm in vms {
                let Ok(events) = self.agents[a].read_scheduled_events(&vm, now) else { continue };
                let Some(workload) = self.vms.get(&vm).map(|v| v.workload) else { continue };
                for ev in events {
                    let _ = self.agents[a].acknowledge(&vm, ev.event_id);
                    let mut out = StepOutput::default();
                    self.models[workload].on_notice(&vm, &ev.notification, now, &mut out);
                    outs.push(out);
                }
            }
            self.agents[a].expire(now);
        }
        for out in outs {
            self.drain_output(now, out);
        }
    }

    fn drain_output(&mut self, now: u64, out: StepOutput) {
        for (entity, event, detail) in out.trace {
            self.note(now, entity, event, detail);
        }
        for (vm, u) in out.util {
            self.util.insert(vm, u);
        }
        if self.sc.runtime_hints {
            for (vm, update) in out.hints {
                let Some(server) = self.vms.get(&vm).map(|v| v.server) else { continue };
                let _ = self.agents[server].write_hint(RuntimeHint::new(vm, update, now, HintSource::InVm));
            }
        }
    }

    fn step_models(&mut self, now: u64, tick: u64) {
        for w in 0..self.models.len() {
            let views: Vec<VmView> = self
                .vms
                .values()
                .filter(|v| v.workload == w)
                .map(|v| VmView {
                    id: v.id.clone(),
                    cores: v.cores_now(),
                    speed: v.speed(),
                    created_at_ms: v.created_at_ms,
                    doomed: v.doomed,
                })
                .collect();
            let mut out = StepOutput::default();
            self.models[w].step(now, tick, &views, &mut out);
            self.drain_output(now, out);
        }
    }

    fn collect(&mut self, now: u64) {
        let reports = collect_all(&mut self.agents, &self.broker, now, self.sc.parallel_agents);
        for r in reports {
            for (vm, seq) in r.published {
                self.note(now, vm.to_string(), "hint", format!("seq={seq}"));
            }
            for (vm, reason) in r.ignored {
                self.note(now, vm.to_string(), "hint_ignored", format!("reason={}", reason.replace(' ', "_")));
            }
            for vm in r.rate_limited {
                self.note(now, vm.to_string(), "hint_rate_limited", String::new());
            }
        }
    }

    fn optimize(&mut self, now: u64) {
        use OptimizationId::*;
        let enabled = self.sc.enabled;
        if enabled.contains(HarvestVms) {
            for s in 0..self.sc.servers.len() {
                self.rebalance_harvest(s, now);
            }
        }
        if enabled.contains(Overclocking) {
            self.overclock(now);
        }
        if enabled.contains(Underclocking) {
            self.underclock(now);
        }
        if enabled.contains(AutoScaling) {
            self.autoscale(now);
        }
        if enabled.contains(Rightsizing) {
            self.rightsize(now);
        }
    }

    fn overclock(&mut self, now: u64) {
        let plus_one = FrequencyLevel::new(1).expect("valid");
        for s in 0..self.sc.servers.len() {
            let cands: Vec<BoostCandidate> = self
                .vms
                .values()
                .filter(|v| v.server == s && !v.doomed && v.priced.contains(OptimizationId::Overclocking))
                .map(|v| {
                    let eff = self.broker.effective(&v.id);
                    BoostCandidate {
                        vm: v.id.clone(),
                        owner: self.sc.workloads[v.workload].id.clone(),
                        cores: v.cores_now(),
                        priority: eff.preemption_priority,
                        preference: eff.scale_preference,
                        requested: plus_one,
                        eligible: true,
                    }
                })
                .collect();
            let slots = self.sc.servers[s].power_budget_slots;
            let plan = overclock_decide(slots, slots, &cands, now, self.next_claim);
            self.next_claim += plan.claims.len() as u64;
            let pool = ResourcePool::new(ResourceKind::CpuFrequency, slots);
            let grants = resolve(&pool, &plan.claims, self.sc.seed ^ now).unwrap_or_default();
            let mut boosted: BTreeMap<VmId, (FrequencyLevel, u64)> = BTreeMap::new();
            for (c, g) in plan.claims.iter().zip(&grants) {
                let vm = c.scope.vms.first().cloned().unwrap_or_default();
                let level = c.target_level.unwrap_or(plus_one);
                if self.last_grant.insert(vm.clone(), g.granted) != Some(g.granted) {
                    self.note(now, vm.to_string(), "arbiter", format!("pool=cpu_frequency claim={} granted={}", c.id, g.granted));
                }
                let n = boosted_cores(g.granted, level);
                if n > 0 {
                    boosted.insert(vm, (level, n));
                }
            }
            let on_server: Vec<VmId> = self.vms.values().filter(|v| v.server == s).map(|v| v.id.clone()).collect();
            for vm in on_server {
                let new = boosted.get(&vm).copied();
                let old = self.vms[&vm].boost;
                if new == old {
                    continue;
                }
                self.vms.get_mut(&vm).expect("present").boost = new;
                if new.is_none() {
                    self.last_grant.remove(&vm);
                }
                let (kind, level) = match new {
                    Some((l, _)) => (NotificationKind::ScaleUp, l),
                    None => (NotificationKind::ScaleDown, FrequencyLevel::NOMINAL),
                };
                let n = PlatformNotification::new(vm.clone(), kind, now, now)
                    .with_payload(NotificationPayload::Frequency(level));
                self.notify(n, now);
                let amount = new.map_or(0, |(_, c)| c as i64);
                self.publish_event(OptimizationId::Overclocking, s, "boost", vm.to_string(), amount, now);
            }
        }
    }

    fn underclock(&mut self, now: u64) {
        let signal = UnderclockSignal::default();
        let cands: Vec<(usize, UnderclockCandidate)> = self
            .vms
            .values()
            .filter(|v| !v.doomed && v.priced.contains(OptimizationId::Underclocking) && v.level == FrequencyLevel::NOMINAL)
            .map(|v| {
                let util = self.util.get(&v.id).copied().unwrap_or(100.0);
                (
                    v.server,
                    UnderclockCandidate {
                        vm: v.id.clone(),
                        owner: self.sc.workloads[v.workload].id.clone(),
                        cores: v.cores_now(),
                        util_pct: util.round().clamp(0.0, 100.0) as u32,
                        current: v.level,
                        eligible: true,
                    },
                )
            })
            .collect();
        if cands.is_empty() {
            return;
        }
        let list: Vec<UnderclockCandidate> = cands.iter().map(|(_, c)| c.clone()).collect();
        let plan = underclock_decide(&signal, &list, now, self.next_claim);
        self.next_claim += plan.claims.len() as u64;
        for (c, n) in plan.claims.iter().zip(plan.notifications) {
            let vm = n.vm_id.clone();
            let server = self.vms[&vm].server;
            let level = c.target_level.unwrap_or(FrequencyLevel::NOMINAL);
            self.schedule(n.effective_at_ms, Pending::Frequency { vm: vm.clone(), level });
            self.notify(n, now);
            self.publish_event(OptimizationId::Underclocking, server, "underclock", vm.to_string(), level.level() as i64, now);
        }
        // Back to nominal once the VM is busy again.
        let busy: Vec<VmId> = self
            .vms
            .values()
            .filter(|v| v.level < FrequencyLevel::NOMINAL && self.util.get(&v.id).copied().unwrap_or(0.0) >= signal.idle_threshold_pct as f64)
            .map(|v| v.id.clone())
            .collect();
        for vm in busy {
            self.vms.get_mut(&vm).expect("present").level = FrequencyLevel::NOMINAL;
            let n = PlatformNotification::new(vm.clone(), NotificationKind::ScaleUp, now, now)
                .with_payload(NotificationPayload::Frequency(FrequencyLevel::NOMINAL));
            self.notify(n, now);
        }
    }

    fn autoscale(&mut self, now: u64) {
        for w in 0..self.sc.workloads.len() {
            let Some((policy, interval)) = self.models[w].scaling().map(|(p, i)| (p.clone(), i)) else { continue };
            if interval == 0 || now % interval != 0 || now == 0 {
                continue;
            }
            let mine: Vec<&Vm> = self.vms.values().filter(|v| v.workload == w && !v.doomed).collect();
            if mine.is_empty() || !mine.iter().all(|v| v.priced.contains(OptimizationId::AutoScaling)) {
                continue;
            }
            let load: Vec<f64> = mine.iter().map(|v| self.util.get(&v.id).copied().unwrap_or(0.0)).collect();
            let current = mine.len() as u32;
            let strict = self.sc.workloads[w].hints.deploy_time_ms < self.thresholds.non_strict_deploy_ms;
            let action = autoscale::tick(&load, &policy, current, now, strict);
            if action.target == current {
                continue;
            }
            let wid = self.sc.workloads[w].id.to_string();
            let server = mine[0].server;
            if action.target > current {
                for _ in current..action.target {
                    self.create_vm(w, now);
                }
            } else {
                let mut victims: Vec<(u64, VmId)> = mine.iter().map(|v| (v.created_at_ms, v.id.clone())).collect();
                victims.sort_by(|a, b| b.cmp(a));
                for (_, vm) in victims.into_iter().take((current - action.target) as usize) {
                    self.destroy(&vm, now, "removed");
                }
            }
            self.note(now, wid.clone(), "scale", format!("from={current} to={} pool={}", action.target, action.from_pool));
            self.publish_event(OptimizationId::AutoScaling, server, "scale", wid, action.target as i64 - current as i64, now);
        }
    }

    fn rightsize(&mut self, now: u64) {
        for w in 0..self.sc.workloads.len() {
            let Some((history, window)) = self.models[w].util_history().map(|(h, win)| (h.to_vec(), win)) else {
                continue;
            };
            if window == 0 || now % window != 0 || now == 0 {
                continue;
            }
            let ids: Vec<VmId> = self
                .vms
                .values()
                .filter(|v| v.workload == w && !v.doomed && v.priced.contains(OptimizationId::Rightsizing))
                .map(|v| v.id.clone())
                .collect();
            for vm in ids {
                let hints = self.effective_hints(&vm);
                let (cores, server) = (self.vms[&vm].base_cores, self.vms[&vm].server);
                let Ok(outcome) = recommend(cores, &history, window, &hints, &self.thresholds) else { continue };
                let Recommendation::Resize { new_cores } = outcome.recommendation else { continue };
                self.wm(w).rightsize_recommendations += 1;
                self.note(now, vm.to_string(), "rightsize", format!("from={cores} to={new_cores} automated={}", outcome.automated));
                if outcome.automated && new_cores < cores {
                    let v = self.vms.get_mut(&vm).expect("present");
                    v.base_cores = new_cores;
                    v.resized = Some(new_cores);
                    let n = PlatformNotification::new(vm.clone(), NotificationKind::ScaleDown, now, now)
                        .with_payload(NotificationPayload::Cores(new_cores));
                    self.notify(n, now);
                    self.publish_event(OptimizationId::Rightsizing, server, "resize", vm.to_string(), new_cores as i64 - cores as i64, now);
                }
            }
        }
    }

    fn account(&mut self, _now: u64, tick: u64) {
        let hours = tick as f64 / MS_PER_HOUR;
        let factor = |r: &RegionId| self.sc.regions.iter().find(|x| &x.region_id == r).map_or(1.0, |x| x.price_factor);
        let mut rows = Vec::new();
        for v in self.vms.values() {
            let w = &self.sc.workloads[v.workload];
            let home = factor(&w.region_id);
            let region_factor = if v.priced.contains(OptimizationId::RegionAgnostic) { factor(&v.region) } else { home };
            let (oc_level, oc_cores) = v.boost.unwrap_or((FrequencyLevel::new(1).expect("valid"), 0));
            let usage = UsageRecord {
                cores: v.cores,
                vm_hours: hours,
                resized_cores: v.resized,
                region_price_factor: region_factor,
                harvested_core_hours: v.harvested as f64 * hours,
                overclocked_core_hours: oc_cores as f64 * hours,
                overclock_level: oc_level,
            };
            let cost = vm_price(&self.book, v.priced, &usage).unwrap_or(0.0);
            let regular = vm_price(
                &self.book,
                OptSet::empty(),
                &UsageRecord { region_price_factor: home, ..UsageRecord::regular(v.cores, hours) },
            )
            .unwrap_or(0.0);
            let throttled = if v.level < FrequencyLevel::NOMINAL { tick as f64 / 1000.0 } else { 0.0 };
            rows.push((v.workload, v.class, v.region.clone(), v.cores_now(), cost, regular, throttled));
        }
        for (w, class, region, cores, cost, regular, throttled) in rows {
            *self.metrics.region_core_hours.entry(region).or_default() += cores as f64 * hours;
            let wm = self.wm(w);
            *wm.vm_hours.entry(class).or_default() += hours;
            wm.cost += cost;
            wm.regular_cost += regular;
            wm.throttle_seconds += throttled;
        }
    }
}
