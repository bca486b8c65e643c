use serde::{Deserialize, Serialize};

use super::{BrokerError, Namespace, Topic};
use crate::hints::{HintSet, PlatformNotification, RuntimeHint};
use crate::ids::{VmId, WorkloadId};
use crate::optimizers::OptimizationId;

/// A decision an optimization announces, kept for the record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizationEvent {
    pub optimization: OptimizationId,
    pub action: String,
    pub scope: String,
    pub amount: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Deployment { workload: WorkloadId, vms: Vec<VmId>, hints: HintSet },
    RuntimeHint(RuntimeHint),
    Notification(PlatformNotification),
    OptimizationEvent(OptimizationEvent),
}

impl Payload {
    pub fn namespace(&self) -> Namespace {
        match self {
            Payload::Deployment { .. } => Namespace::DeploymentHints,
            Payload::RuntimeHint(_) => Namespace::RuntimeHints,
            Payload::Notification(_) => Namespace::PlatformNotifications,
            Payload::OptimizationEvent(_) => Namespace::OptimizationEvents,
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, BrokerError> {
        serde_json::from_slice(bytes).map_err(|e| BrokerError::MalformedPayload(e.to_string()))
    }

    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("payloads always serialize")
    }

    /// The payload type must belong on the topic's namespace and be internally valid.
    pub fn check_for(&self, topic: &Topic) -> Result<(), BrokerError> {
        if self.namespace() != topic.namespace {
            return Err(BrokerError::MalformedPayload(format!(
                "{} payload on {} topic",
                self.namespace(),
                topic.namespace
            )));
        }
        match self {
            Payload::Deployment { hints, .. } => {
                hints.check().map_err(|e| BrokerError::MalformedPayload(e.to_string()))
            }
            Payload::RuntimeHint(h) => h.check().map_err(|e| BrokerError::MalformedPayload(e.to_string())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventEnvelope {
    pub topic: String,
    pub sequence: u64,
    pub publisher: String,
    pub timestamp_ms: u64,
    pub payload: Payload,
}
