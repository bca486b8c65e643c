//! Simplified workload behaviors standing in for real cluster frameworks.

mod batch;
mod conf;
mod fixed;
mod micro;

pub use batch::BatchModel;
pub use conf::ConfModel;
pub use fixed::StaticModel;
pub use micro::MicroModel;

use crate::hints::{PlatformNotification, PreemptionPriority, RuntimeUpdate};
use crate::ids::VmId;
use crate::optimizers::autoscale::ScalingPolicy;
use crate::optimizers::rightsize::UtilSample;

use super::scenario::ModelSpec;

/// What a model may see of one of its VMs.
#[derive(Debug, Clone)]
pub struct VmView {
    pub id: VmId,
    /// Base plus harvested cores.
    pub cores: u32,
    /// Frequency multiplier.
    pub speed: f64,
    pub created_at_ms: u64,
    /// A removal notice has been received.
    pub doomed: bool,
}

#[derive(Debug, Default)]
pub struct StepOutput {
    /// Runtime hints to write into VM mailboxes.
    pub hints: Vec<(VmId, RuntimeUpdate)>,
    /// Utilization in percent for each VM this tick.
    pub util: Vec<(VmId, f64)>,
    pub trace: Vec<(String, &'static str, String)>,
}

impl StepOutput {
    pub fn note(&mut self, entity: impl Into<String>, event: &'static str, detail: String) {
        self.trace.push((entity.into(), event, detail));
    }
}

pub trait WorkloadModel: Send {
    fn on_vm_added(&mut self, _vm: &VmId, _now_ms: u64) {}

    fn on_notice(&mut self, _vm: &VmId, _n: &PlatformNotification, _now_ms: u64, _out: &mut StepOutput) {}

    /// The VM is gone, by eviction or by the workload's own scale-in.
    fn on_removed(&mut self, _vm: &VmId, _now_ms: u64, _out: &mut StepOutput) {}

    fn step(&mut self, now_ms: u64, tick_ms: u64, vms: &[VmView], out: &mut StepOutput);

    /// The priority the workload itself would assign the VM right now.
    fn priority(&self, _vm: &VmId, _now_ms: u64) -> PreemptionPriority {
        PreemptionPriority::Normal
    }

    /// Time the workload finished, for models with a finite amount of work.
    fn finished_at(&self) -> Option<u64> {
        None
    }

    /// Core-seconds of work done so far.
    fn work_completed(&self) -> f64;

    /// (generated, completed, dropped) requests so far.
    fn requests(&self) -> (f64, f64, f64) {
        (0.0, 0.0, 0.0)
    }

    fn scaling(&self) -> Option<(&ScalingPolicy, u64)> {
        None
    }

    fn util_history(&self) -> Option<(&[UtilSample], u64)> {
        None
    }
}

pub fn build(spec: &ModelSpec, seed: u64) -> Box<dyn WorkloadModel> {
    match spec {
        ModelSpec::Batch(p) => Box::new(BatchModel::new(p.clone(), seed)),
        ModelSpec::Microservices(p) => Box::new(MicroModel::new(p.clone())),
        ModelSpec::VideoConference(p) => Box::new(ConfModel::new(p.clone())),
        ModelSpec::Static { util_pct } => Box::new(StaticModel::new(*util_pct)),
    }
}

/// 0 at the start of the cycle, 1 half way through.
pub(crate) fn diurnal(t_ms: u64, day_ms: u64) -> f64 {
    let phase = (t_ms % day_ms) as f64 / day_ms as f64;
    (1.0 - (2.0 * std::f64::consts::PI * phase).cos()) / 2.0
}
