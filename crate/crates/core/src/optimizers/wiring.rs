//! Which hints each optimization consumes and which notifications it publishes.

use super::OptimizationId;
use crate::hints::NotificationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Deployment,
    Runtime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consumed {
    ScaleInOut,
    Preemptible,
    PreemptionPriority,
    ScaleUpDown,
    ScaleUpDownPriority,
    ScaleUpPriority,
    ScaleDownPriority,
    DeploymentTime,
    Locality,
    DelayTolerance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wiring {
    pub consumes: Vec<(Channel, Consumed)>,
    pub publishes: Vec<NotificationKind>,
}

impl Wiring {
    pub fn may_publish(&self, kind: NotificationKind) -> bool {
        self.publishes.contains(&kind)
    }

    /// Human-readable lines, one per consumed or published item.
    pub fn describe(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .consumes
            .iter()
            .map(|(ch, c)| {
                let ch = match ch {
                    Channel::Deployment => "deployment",
                    Channel::Runtime => "runtime",
                };
                let what = match c {
                    Consumed::ScaleInOut => "scale in/out hints",
                    Consumed::Preemptible => "preemptible hints",
                    Consumed::PreemptionPriority => "preemption priority",
                    Consumed::ScaleUpDown => "scale up/down hints",
                    Consumed::ScaleUpDownPriority => "scale up/down priority",
                    Consumed::ScaleUpPriority => "scale up priority",
                    Consumed::ScaleDownPriority => "scale down priority",
                    Consumed::DeploymentTime => "deployment time hints",
                    Consumed::Locality => "locality hints",
                    Consumed::DelayTolerance => "delay tolerance hints",
                };
                format!("Consume {ch} {what}.")
            })
            .collect();
        let both = self.may_publish(NotificationKind::ScaleUp) && self.may_publish(NotificationKind::ScaleDown);
        for p in &self.publishes {
            let what = match p {
                NotificationKind::Preemption => "preemption",
                NotificationKind::ScaleUp if both => "scale up/down",
                NotificationKind::ScaleDown if both => continue,
                NotificationKind::ScaleUp => "scale up",
                NotificationKind::ScaleDown => "scale down",
                other => unreachable!("no optimization publishes {other:?}"),
            };
            lines.push(format!("Publish runtime {what} notification."));
        }
        lines
    }
}

pub fn wiring(id: OptimizationId) -> Wiring {
    use Channel::*;
    use Consumed::*;
    use NotificationKind as N;
    let spot_consumes = vec![(Deployment, Preemptible), (Runtime, PreemptionPriority)];
    let (consumes, publishes) = match id {
        OptimizationId::AutoScaling => (vec![(Deployment, ScaleInOut)], vec![]),
        OptimizationId::SpotVms => (spot_consumes, vec![N::Preemption]),
        OptimizationId::HarvestVms => {
            let mut c = spot_consumes;
            c.push((Runtime, ScaleUpDownPriority));
            (c, vec![N::Preemption, N::ScaleUp, N::ScaleDown])
        }
        OptimizationId::Overclocking => (vec![(Deployment, ScaleUpDown), (Runtime, ScaleUpPriority)], vec![N::ScaleUp]),
        OptimizationId::Underclocking => {
            (vec![(Deployment, ScaleUpDown), (Runtime, ScaleDownPriority)], vec![N::ScaleDown])
        }
        OptimizationId::NonPreProvision => (vec![(Deployment, DeploymentTime)], vec![]),
        OptimizationId::RegionAgnostic => (vec![(Deployment, Locality)], vec![]),
        OptimizationId::Oversubscription => (
            vec![(Deployment, ScaleUpDown), (Deployment, DelayTolerance), (Runtime, ScaleDownPriority)],
            vec![],
        ),
        OptimizationId::Rightsizing => (vec![(Deployment, ScaleUpDown), (Deployment, DelayTolerance)], vec![]),
        OptimizationId::Madc => {
            (vec![(Deployment, ScaleUpDown), (Deployment, Preemptible)], vec![N::ScaleDown, N::Preemption])
        }
        OptimizationId::OnDemand | OptimizationId::Extension(_) => (vec![], vec![]),
    };
    Wiring { consumes, publishes }
}
