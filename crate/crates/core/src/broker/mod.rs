//! The global hint manager: a pub/sub bus over an append-only log, with a
//! queryable hint store and per-publisher rate limits.
//!
//! Publishing is linearizable: one lock covers sequence assignment, the log
//! append, the store update and fan-out, so every subscriber sees each topic
//! in sequence order. Subscriptions are plain channels and may be moved to
//! other threads.

mod log;
mod payload;
mod rate_limit;
mod store;
mod topic;

use std::collections::BTreeMap;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Mutex, MutexGuard};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use log::{decode as decode_log, CorruptRecord, EventLog};
pub use payload::{EventEnvelope, OptimizationEvent, Payload};
pub use rate_limit::{RateLimitPolicy, RateLimiter};
pub use store::HintStore;
pub use topic::{Namespace, Topic, TopicFilter, MAX_TOPIC_BYTES};

use crate::hints::{conservative_default, EffectiveHints, HintSet, PreemptionPriority};
use crate::ids::{RackId, RegionId, ServerId, VmId, WorkloadId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BrokerError {
    #[error("malformed topic {0}")]
    MalformedTopic(String),
    #[error("malformed filter {0}")]
    MalformedFilter(String),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("publisher {publisher} is over its {namespace} rate")]
    RateLimited { publisher: String, namespace: Namespace },
    #[error("unknown vm {0}")]
    UnknownVm(VmId),
    #[error("unknown {0}")]
    UnknownScopeKey(String),
}

/// Where a VM lives and how big it is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VmPlacement {
    pub vm: VmId,
    pub workload: WorkloadId,
    pub server: ServerId,
    pub rack: RackId,
    pub region: RegionId,
    pub cores: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    Vm(VmId),
    Server(ServerId),
    Rack(RackId),
    Workload(WorkloadId),
    Region(RegionId),
}

/// Summary of the hints of a set of VMs. Merging is associative and
/// commutative with [`HintAggregate::default`] as identity.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HintAggregate {
    pub vms: u32,
    pub cores: u64,
    pub priority_counts: BTreeMap<PreemptionPriority, u32>,
    /// Cores of VMs with any preemptibility.
    pub preemptible_cores: u64,
    pub min_availability_nines: Option<u8>,
}

impl HintAggregate {
    pub fn of_vm(cores: u32, hints: &EffectiveHints) -> Self {
        let h = hints.resolved();
        Self {
            vms: 1,
            cores: cores as u64,
            priority_counts: BTreeMap::from([(hints.preemption_priority, 1)]),
            preemptible_cores: if h.preemptibility_pct > 0 { cores as u64 } else { 0 },
            min_availability_nines: Some(h.availability_nines),
        }
    }

    pub fn merge(mut self, other: &HintAggregate) -> Self {
        self.vms += other.vms;
        self.cores += other.cores;
        for (p, n) in &other.priority_counts {
            *self.priority_counts.entry(*p).or_default() += n;
        }
        self.preemptible_cores += other.preemptible_cores;
        self.min_availability_nines = match (self.min_availability_nines, other.min_availability_nines) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HintView {
    Vm(EffectiveHints),
    Aggregate(HintAggregate),
}

/// Receiving end of a subscription. Dropping it ends delivery.
#[derive(Debug)]
pub struct Subscription {
    pub id: u64,
    rx: Receiver<EventEnvelope>,
}

impl Subscription {
    /// Everything delivered so far, without blocking.
    pub fn drain(&self) -> Vec<EventEnvelope> {
        self.rx.try_iter().collect()
    }

    pub fn recv_timeout(&self, d: Duration) -> Option<EventEnvelope> {
        self.rx.recv_timeout(d).ok()
    }
}

struct Sub {
    filter: TopicFilter,
    tx: Sender<EventEnvelope>,
}

#[derive(Default)]
struct Inner {
    store: HintStore,
    log: EventLog,
    limiter: RateLimiter,
    subs: BTreeMap<u64, Sub>,
    next_sub: u64,
    topology: BTreeMap<VmId, VmPlacement>,
    rate_limited: BTreeMap<String, u64>,
}

pub struct Broker {
    inner: Mutex<Inner>,
}

impl Default for Broker {
    fn default() -> Self {
        Self::new(RateLimitPolicy::default())
    }
}

impl Broker {
    pub fn new(policy: RateLimitPolicy) -> Self {
        Self { inner: Mutex::new(Inner { limiter: RateLimiter::new(policy), ..Default::default() }) }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn set_rate_policy(&self, publisher: &str, policy: RateLimitPolicy) {
        self.lock().limiter.set_policy(publisher, policy);
    }

    pub fn register_vm(&self, placement: VmPlacement) {
        self.lock().topology.insert(placement.vm.clone(), placement);
    }

    pub fn unregister_vm(&self, vm: &VmId) {
        self.lock().topology.remove(vm);
    }

    pub fn placement(&self, vm: &VmId) -> Option<VmPlacement> {
        self.lock().topology.get(vm).cloned()
    }

    pub fn publish(&self, publisher: &str, topic: &str, payload: Payload, timestamp_ms: u64) -> Result<u64, BrokerError> {
        let topic = Topic::parse(topic)?;
        payload.check_for(&topic)?;
        let mut inner = self.lock();
        inner.publish_checked(publisher, &topic, payload, timestamp_ms)
    }

    /// Publish a JSON-encoded payload.
    pub fn publish_bytes(&self, publisher: &str, topic: &str, bytes: &[u8], timestamp_ms: u64) -> Result<u64, BrokerError> {
        self.publish(publisher, topic, Payload::decode(bytes)?, timestamp_ms)
    }

    pub fn subscribe(&self, filter: &str) -> Result<Subscription, BrokerError> {
        let filter = TopicFilter::parse(filter)?;
        let (tx, rx) = mpsc::channel();
        let mut inner = self.lock();
        let id = inner.next_sub;
        inner.next_sub += 1;
        inner.subs.insert(id, Sub { filter, tx });
        Ok(Subscription { id, rx })
    }

    /// Attach deployment hints to known VMs; all or nothing.
    pub fn set_deployment_hints(
        &self,
        workload: &WorkloadId,
        vms: &[VmId],
        hints: HintSet,
        timestamp_ms: u64,
    ) -> Result<u64, BrokerError> {
        hints.check().map_err(|e| BrokerError::MalformedPayload(e.to_string()))?;
        let mut inner = self.lock();
        if let Some(vm) = vms.iter().find(|v| !inner.topology.contains_key(*v)) {
            return Err(BrokerError::UnknownVm(vm.clone()));
        }
        let region = vms
            .first()
            .and_then(|v| inner.topology.get(v))
            .map_or_else(|| "global".to_owned(), |p| p.region.to_string());
        let topic = Topic::new(Namespace::DeploymentHints, [region, workload.to_string()])?;
        let payload = Payload::Deployment { workload: workload.clone(), vms: vms.to_vec(), hints };
        inner.publish_checked(&format!("owner:{workload}"), &topic, payload, timestamp_ms)
    }

    pub fn get(&self, scope: &Scope) -> Result<HintView, BrokerError> {
        let inner = self.lock();
        let view = |vm: &VmId| {
            inner
                .store
                .effective
                .get(vm)
                .cloned()
                .unwrap_or_else(|| EffectiveHints::from_base(conservative_default()))
        };
        let fold = |keep: &dyn Fn(&VmPlacement) -> bool, what: String| {
            let mut agg = HintAggregate::default();
            let mut any = false;
            for p in inner.topology.values().filter(|p| keep(p)) {
                any = true;
                agg = agg.merge(&HintAggregate::of_vm(p.cores, &view(&p.vm)));
            }
            if any {
                Ok(HintView::Aggregate(agg))
            } else {
                Err(BrokerError::UnknownScopeKey(what))
            }
        };
        match scope {
            Scope::Vm(vm) => {
                if inner.topology.contains_key(vm) || inner.store.effective.contains_key(vm) {
                    Ok(HintView::Vm(view(vm)))
                } else {
                    Err(BrokerError::UnknownScopeKey(format!("vm {vm}")))
                }
            }
            Scope::Server(s) => fold(&|p| &p.server == s, format!("server {s}")),
            Scope::Rack(r) => fold(&|p| &p.rack == r, format!("rack {r}")),
            Scope::Workload(w) => fold(&|p| &p.workload == w, format!("workload {w}")),
            Scope::Region(r) => fold(&|p| &p.region == r, format!("region {r}")),
        }
    }

    pub fn effective(&self, vm: &VmId) -> EffectiveHints {
        self.lock()
            .store
            .effective
            .get(vm)
            .cloned()
            .unwrap_or_else(|| EffectiveHints::from_base(conservative_default()))
    }

    pub fn store(&self) -> HintStore {
        self.lock().store.clone()
    }

    pub fn log_bytes(&self) -> Vec<u8> {
        self.lock().log.as_bytes().to_vec()
    }

    pub fn rate_limited_count(&self, publisher: &str) -> u64 {
        self.lock().rate_limited.get(publisher).copied().unwrap_or(0)
    }
}

impl Inner {
    fn publish_checked(
        &mut self,
        publisher: &str,
        topic: &Topic,
        payload: Payload,
        timestamp_ms: u64,
    ) -> Result<u64, BrokerError> {
        if !self.limiter.try_acquire(publisher, topic.namespace, timestamp_ms) {
            *self.rate_limited.entry(publisher.to_owned()).or_default() += 1;
            ::log::debug!("rate limited {publisher} on {topic}");
            return Err(BrokerError::RateLimited { publisher: publisher.to_owned(), namespace: topic.namespace });
        }
        let name = topic.to_string();
        let ev = EventEnvelope {
            sequence: self.store.next_sequence(&name),
            topic: name,
            publisher: publisher.to_owned(),
            timestamp_ms,
            payload,
        };
        self.log.append(&ev);
        self.store.apply(&ev);
        self.subs.retain(|_, s| !s.filter.matches(topic) || s.tx.send(ev.clone()).is_ok());
        Ok(ev.sequence)
    }
}

/// Rebuild the store from a log. Stops at the first damaged record.
pub fn replay(bytes: &[u8]) -> (HintStore, Option<CorruptRecord>) {
    let (events, err) = decode_log(bytes);
    let mut store = HintStore::default();
    for ev in &events {
        store.apply(ev);
    }
    (store, err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hints::{HintSource, RuntimeHint, RuntimeUpdate};

    fn place(vm: &str, server: &str, rack: &str, wl: &str, cores: u32) -> VmPlacement {
        VmPlacement {
            vm: vm.into(),
            workload: wl.into(),
            server: server.into(),
            rack: rack.into(),
            region: "r1".into(),
            cores,
        }
    }

    fn prio(vm: &str, p: PreemptionPriority, t: u64) -> Payload {
        Payload::RuntimeHint(RuntimeHint::new(vm, RuntimeUpdate::PreemptionPriority(p), t, HintSource::InVm))
    }

    #[test]
    fn sequences_and_fifo() {
        let b = Broker::default();
        let sub = b.subscribe("runtime-hints/r1/*").unwrap();
        let s0 = b.publish("a", "runtime-hints/r1/s/v", prio("v", PreemptionPriority::Low, 1), 1).unwrap();
        let s1 = b.publish("a", "runtime-hints/r1/s/v", prio("v", PreemptionPriority::High, 2), 2).unwrap();
        assert_eq!((s0, s1), (0, 1));
        let got: Vec<u64> = sub.drain().iter().map(|e| e.sequence).collect();
        assert_eq!(got, vec![0, 1]);
    }

    #[test]
    fn no_retroactive_delivery_and_fan_out() {
        let b = Broker::default();
        b.publish("a", "runtime-hints/r1/s/v", prio("v", PreemptionPriority::Low, 1), 1).unwrap();
        let x = b.subscribe("runtime-hints/*").unwrap();
        let y = b.subscribe("runtime-hints/*").unwrap();
        b.publish("a", "runtime-hints/r1/s/v", prio("v", PreemptionPriority::High, 2), 2).unwrap();
        assert_eq!(x.drain().len(), 1);
        assert_eq!(y.drain().len(), 1);
    }

    #[test]
    fn closed_subscription_is_dropped() {
        let b = Broker::default();
        let x = b.subscribe("runtime-hints/*").unwrap();
        drop(x);
        b.publish("a", "runtime-hints/r1/s/v", prio("v", PreemptionPriority::Low, 1), 1).unwrap();
        assert!(b.lock().subs.is_empty());
    }

    #[test]
    fn payload_must_fit_namespace() {
        let b = Broker::default();
        let r = b.publish("a", "platform-notifications/v", prio("v", PreemptionPriority::Low, 1), 1);
        assert!(matches!(r, Err(BrokerError::MalformedPayload(_))));
        assert!(matches!(b.publish_bytes("a", "runtime-hints/v", b"{nope", 1), Err(BrokerError::MalformedPayload(_))));
    }

    #[test]
    fn deployment_hints_all_or_nothing() {
        let b = Broker::default();
        for i in 0..3 {
            b.register_vm(place(&format!("v{i}"), "s", "k", "w", 4));
        }
        let vms: Vec<VmId> = (0..3).map(|i| format!("v{i}").into()).collect();
        let h = HintSet { preemptibility_pct: 100, ..conservative_default() };
        b.set_deployment_hints(&"w".into(), &vms, h, 0).unwrap();
        for v in &vms {
            assert_eq!(b.effective(v).resolved(), h);
        }
        let mut bad = vms.clone();
        bad.push("ghost".into());
        let h2 = HintSet { preemptibility_pct: 50, ..h };
        assert_eq!(b.set_deployment_hints(&"w".into(), &bad, h2, 1), Err(BrokerError::UnknownVm("ghost".into())));
        assert_eq!(b.effective(&vms[0]).resolved(), h);
        b.set_deployment_hints(&"w".into(), &vms, h2, 2).unwrap();
        assert_eq!(b.effective(&vms[0]).resolved(), h2);
        assert_eq!(decode_log(&b.log_bytes()).0.len(), 2);
    }

    #[test]
    fn aggregates() {
        let b = Broker::default();
        b.register_vm(place("a", "s1", "k", "w", 8));
        b.register_vm(place("b", "s1", "k", "w", 8));
        b.register_vm(place("c", "s1", "k", "w", 8));
        b.register_vm(place("d", "s2", "k", "w", 8));
        b.publish("x", "runtime-hints/r1/s1/a", prio("a", PreemptionPriority::High, 0), 0).unwrap();
        b.publish("x", "runtime-hints/r1/s1/b", prio("b", PreemptionPriority::Low, 0), 0).unwrap();
        b.publish("x", "runtime-hints/r1/s1/c", prio("c", PreemptionPriority::Low, 0), 0).unwrap();
        let HintView::Aggregate(s1) = b.get(&Scope::Server("s1".into())).unwrap() else { panic!() };
        assert_eq!(s1.priority_counts, BTreeMap::from([(PreemptionPriority::Low, 2), (PreemptionPriority::High, 1)]));
        let HintView::Aggregate(s2) = b.get(&Scope::Server("s2".into())).unwrap() else { panic!() };
        let HintView::Aggregate(rack) = b.get(&Scope::Rack("k".into())).unwrap() else { panic!() };
        assert_eq!(rack, s1.merge(&s2));
        assert!(matches!(b.get(&Scope::Server("nope".into())), Err(BrokerError::UnknownScopeKey(_))));
    }

    #[test]
    fn preemptible_cores_of_workload() {
        let b = Broker::default();
        let vms: Vec<VmId> = (0..15).map(|i| format!("w{i}").into()).collect();
        for v in &vms {
            b.register_vm(place(v.as_str(), "s", "k", "hadoop", 8));
        }
        let h = HintSet { preemptibility_pct: 100, ..conservative_default() };
        b.set_deployment_hints(&"hadoop".into(), &vms, h, 0).unwrap();
        let HintView::Aggregate(a) = b.get(&Scope::Workload("hadoop".into())).unwrap() else { panic!() };
        assert_eq!(a.preemptible_cores, 120);
    }

    #[test]
    fn replay_matches_live_and_stops_at_damage() {
        let b = Broker::default();
        for i in 0..5 {
            b.publish("a", "runtime-hints/r1/s/v", prio("v", PreemptionPriority::Low, i), i).unwrap();
        }
        let bytes = b.log_bytes();
        let (store, err) = replay(&bytes);
        assert!(err.is_none());
        assert_eq!(store.canonical_bytes(), b.store().canonical_bytes());
        assert_eq!(replay(&[]).0, HintStore::default());

        let (events, _) = decode_log(&bytes);
        let first_len = 8 + serde_json::to_vec(&events[0]).unwrap().len();
        let (partial, err) = replay(&bytes[..first_len * 2 + 3]);
        assert_eq!(err, Some(CorruptRecord { offset: first_len * 2 }));
        assert_eq!(partial.sequences["runtime-hints/r1/s/v"], 1);
    }

    #[test]
    fn rate_limits_are_per_publisher() {
        let b = Broker::new(RateLimitPolicy::per_second(10));
        let mut ok = 0;
        for i in 0..11 {
            if b.publish("a", "runtime-hints/r1/s/v", prio("v", PreemptionPriority::Low, i), i).is_ok() {
                ok += 1;
            }
        }
        assert_eq!(ok, 10);
        assert_eq!(b.rate_limited_count("a"), 1);
        assert!(b.publish("b", "runtime-hints/r1/s/w", prio("w", PreemptionPriority::Low, 5), 5).is_ok());
    }
}
