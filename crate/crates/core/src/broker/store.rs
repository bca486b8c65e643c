use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EventEnvelope, Payload};
use crate::hints::{conservative_default, EffectiveHints, HintSet};
use crate::ids::{VmId, WorkloadId};

/// Everything the broker knows about hints, as a pure fold over accepted events.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintStore {
    pub deployment: BTreeMap<WorkloadId, HintSet>,
    pub vm_workload: BTreeMap<VmId, WorkloadId>,
    pub effective: BTreeMap<VmId, EffectiveHints>,
    /// Last sequence assigned per topic.
    pub sequences: BTreeMap<String, u64>,
    pub notifications: u64,
    pub optimization_events: u64,
}

impl HintStore {
    pub fn apply(&mut self, ev: &EventEnvelope) {
        self.sequences.insert(ev.topic.clone(), ev.sequence);
        match &ev.payload {
            Payload::Deployment { workload, vms, hints } => {
                self.deployment.insert(workload.clone(), *hints);
                for vm in vms {
                    self.vm_workload.insert(vm.clone(), workload.clone());
                    self.effective
                        .entry(vm.clone())
                        .and_modify(|e| e.rebase(*hints))
                        .or_insert_with(|| EffectiveHints::from_base(*hints));
                }
            }
            Payload::RuntimeHint(h) => {
                self.effective
                    .entry(h.vm_id.clone())
                    .or_insert_with(|| EffectiveHints::from_base(conservative_default()))
                    .apply(h);
            }
            Payload::Notification(_) => self.notifications += 1,
            Payload::OptimizationEvent(_) => self.optimization_events += 1,
        }
    }

    pub fn next_sequence(&self, topic: &str) -> u64 {
        self.sequences.get(topic).map_or(0, |s| s + 1)
    }

    /// Canonical serialization used to compare stores byte for byte.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("store serializes")
    }
}
