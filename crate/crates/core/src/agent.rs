//! Per-server local manager: polls VM mailboxes, forwards runtime hints to the
//! broker and hands platform notifications back to VMs as scheduled events.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broker::{Broker, BrokerError, Namespace, Payload, Topic};
use crate::hints::{
    consistency_check, Consistency, FlapPolicy, HintKind, NotificationKind, NotificationPayload, PlatformNotification,
    RuntimeHint,
};
use crate::ids::{RegionId, ServerId, VmId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub poll_interval_ms: u64,
    pub eviction_notice_ms: u64,
    pub flap: FlapPolicy,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { poll_interval_ms: 1_000, eviction_notice_ms: 30_000, flap: FlapPolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("vm {vm} is not on server {server}")]
    UnknownVm { vm: VmId, server: ServerId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub event_id: u64,
    pub notification: PlatformNotification,
}

#[derive(Debug, Clone, Default)]
pub struct VmMailbox {
    outgoing: VecDeque<RuntimeHint>,
    incoming: Vec<ScheduledEvent>,
}

/// Hints that passed the consistency check, ready to publish.
#[derive(Debug, Clone, Default)]
pub struct PreparedBatch {
    pub server: ServerId,
    pub accepted: Vec<(String, RuntimeHint)>,
    pub ignored: Vec<(VmId, String)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CollectReport {
    /// (vm, sequence) per published hint, in publish order.
    pub published: Vec<(VmId, u64)>,
    pub ignored: Vec<(VmId, String)>,
    pub rate_limited: Vec<VmId>,
}

#[derive(Debug, Clone)]
pub struct NodeAgent {
    pub server: ServerId,
    pub region: RegionId,
    pub config: AgentConfig,
    mailboxes: BTreeMap<VmId, VmMailbox>,
    accepted: BTreeMap<(VmId, HintKind), Vec<RuntimeHint>>,
    next_event: u64,
}

impl NodeAgent {
    pub fn new(server: impl Into<ServerId>, region: impl Into<RegionId>, config: AgentConfig) -> Self {
        Self {
            server: server.into(),
            region: region.into(),
            config,
            mailboxes: BTreeMap::new(),
            accepted: BTreeMap::new(),
            next_event: 0,
        }
    }

    pub fn add_vm(&mut self, vm: impl Into<VmId>) {
        self.mailboxes.entry(vm.into()).or_default();
    }

    /// Destroying a VM drops its mailbox and unread notifications.
    pub fn remove_vm(&mut self, vm: &VmId) {
        self.mailboxes.remove(vm);
        self.accepted.retain(|(v, _), _| v != vm);
    }

    pub fn hosts(&self, vm: &VmId) -> bool {
        self.mailboxes.contains_key(vm)
    }

    pub fn vms(&self) -> impl Iterator<Item = &VmId> {
        self.mailboxes.keys()
    }

    fn mailbox(&mut self, vm: &VmId) -> Result<&mut VmMailbox, AgentError> {
        let server = self.server.clone();
        self.mailboxes.get_mut(vm).ok_or(AgentError::UnknownVm { vm: vm.clone(), server })
    }

    /// Workload side: write a hint into the VM's outgoing queue.
    pub fn write_hint(&mut self, hint: RuntimeHint) -> Result<(), AgentError> {
        let vm = hint.vm_id.clone();
        self.mailbox(&vm)?.outgoing.push_back(hint);
        Ok(())
    }

    pub fn topic_for(&self, vm: &VmId) -> String {
        format!("{}/{}/{}/{}", Namespace::RuntimeHints, self.region, self.server, vm)
    }

    /// Drain mailboxes and run the consistency check. Touches only this agent,
    /// so agents may prepare in parallel.
    pub fn prepare(&mut self, now_ms: u64) -> PreparedBatch {
        let mut batch = PreparedBatch { server: self.server.clone(), ..Default::default() };
        let vms: Vec<VmId> = self.mailboxes.keys().cloned().collect();
        for vm in vms {
            let drained: Vec<RuntimeHint> = self.mailboxes.get_mut(&vm).unwrap().outgoing.drain(..).collect();
            for hint in drained {
                let key = (vm.clone(), hint.kind());
                let history = self.accepted.get(&key).map(Vec::as_slice).unwrap_or(&[]);
                let verdict =
                    if let Err(e) = hint.check() { Consistency::Ignore { reason: e.to_string() } } else {
                        consistency_check(history, &hint, &self.config.flap)
                    };
                match verdict {
                    Consistency::Accept => {
                        let hist = self.accepted.entry(key).or_default();
                        hist.push(hint.clone());
                        // Keep only what the flap window can still see.
                        let horizon = now_ms.saturating_sub(2 * self.config.flap.window_ms);
                        if hist.len() > 2 * self.config.flap.max_flips + 2 {
                            let keep_from = hist.iter().position(|h| h.timestamp_ms >= horizon).unwrap_or(hist.len());
                            hist.drain(..keep_from.saturating_sub(1));
                        }
                        batch.accepted.push((self.topic_for(&vm), hint));
                    }
                    Consistency::Ignore { reason } => {
                        let n = PlatformNotification::new(vm.clone(), NotificationKind::HintIgnored, now_ms, now_ms)
                            .with_payload(NotificationPayload::Reason(reason.clone()));
                        self.enqueue(&vm, n);
                        batch.ignored.push((vm.clone(), reason));
                    }
                }
            }
        }
        batch
    }

    /// Publish a prepared batch in order.
    pub fn commit(&self, batch: PreparedBatch, broker: &Broker, now_ms: u64) -> CollectReport {
        let mut report = CollectReport { ignored: batch.ignored, ..Default::default() };
        let publisher = format!("agent:{}", self.server);
        for (topic, hint) in batch.accepted {
            let vm = hint.vm_id.clone();
            match broker.publish(&publisher, &topic, Payload::RuntimeHint(hint), now_ms) {
                Ok(seq) => report.published.push((vm, seq)),
                Err(BrokerError::RateLimited { .. }) => report.rate_limited.push(vm),
                Err(e) => {
                    ::log::warn!("dropping hint from {vm}: {e}");
                    report.rate_limited.push(vm);
                }
            }
        }
        report
    }

    pub fn collect(&mut self, broker: &Broker, now_ms: u64) -> CollectReport {
        let batch = self.prepare(now_ms);
        self.commit(batch, broker, now_ms)
    }

    fn enqueue(&mut self, vm: &VmId, notification: PlatformNotification) -> u64 {
        let id = self.next_event;
        self.next_event += 1;
        if let Some(mb) = self.mailboxes.get_mut(vm) {
            mb.incoming.push(ScheduledEvent { event_id: id, notification });
        }
        id
    }

    /// Hand a notification to a VM. Removals without the emergency flag are
    /// pushed out so they carry at least the configured notice. Returns the
    /// notification as delivered.
    pub fn deliver(&mut self, mut n: PlatformNotification) -> Result<PlatformNotification, AgentError> {
        self.mailbox(&n.vm_id)?;
        if n.kind.is_removal() && !n.emergency {
            n.effective_at_ms = n.effective_at_ms.max(n.issued_at_ms + self.config.eviction_notice_ms);
        }
        let vm = n.vm_id.clone();
        self.enqueue(&vm, n.clone());
        Ok(n)
    }

    /// Unacknowledged notifications still ahead of `now_ms`, plus any
    /// unacknowledged removal even if its time has passed.
    pub fn read_scheduled_events(&self, vm: &VmId, now_ms: u64) -> Result<Vec<ScheduledEvent>, AgentError> {
        let mb = self.mailboxes.get(vm).ok_or(AgentError::UnknownVm { vm: vm.clone(), server: self.server.clone() })?;
        Ok(mb
            .incoming
            .iter()
            .filter(|e| e.notification.effective_at_ms >= now_ms || e.notification.kind.is_removal())
            .cloned()
            .collect())
    }

    pub fn acknowledge(&mut self, vm: &VmId, event_id: u64) -> Result<bool, AgentError> {
        let mb = self.mailbox(vm)?;
        let before = mb.incoming.len();
        mb.incoming.retain(|e| e.event_id != event_id);
        Ok(mb.incoming.len() != before)
    }

    /// Drop non-removal notifications whose time has passed and that nobody read.
    pub fn expire(&mut self, now_ms: u64) {
        for mb in self.mailboxes.values_mut() {
            mb.incoming.retain(|e| e.notification.kind.is_removal() || e.notification.effective_at_ms >= now_ms);
        }
    }
}

/// Collect from every agent. Preparation may run on threads; publishing is
/// always in agent order so both modes give the same broker log.
pub fn collect_all(agents: &mut [NodeAgent], broker: &Broker, now_ms: u64, parallel: bool) -> Vec<CollectReport> {
    let batches: Vec<PreparedBatch> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = agents.iter_mut().map(|a| s.spawn(move || a.prepare(now_ms))).collect();
            handles.into_iter().map(|h| h.join().expect("agent thread panicked")).collect()
        })
    } else {
        agents.iter_mut().map(|a| a.prepare(now_ms)).collect()
    };
    agents.iter().zip(batches).map(|(a, b)| a.commit(b, broker, now_ms)).collect()
}

/// Topic used for platform notifications to one VM.
pub fn notification_topic(region: &RegionId, server: &ServerId, vm: &VmId) -> String {
    Topic::new(Namespace::PlatformNotifications, [region.to_string(), server.to_string(), vm.to_string()])
        .map(|t| t.to_string())
        .unwrap_or_else(|_| format!("{}/{vm}", Namespace::PlatformNotifications))
}
