//! Constant load and no runtime hints.

use super::{StepOutput, VmView, WorkloadModel};

pub struct StaticModel {
    util_pct: f64,
    work: f64,
}

impl StaticModel {
    pub fn new(util_pct: f64) -> Self {
        Self { util_pct, work: 0.0 }
    }
}

impl WorkloadModel for StaticModel {
    fn step(&mut self, _now_ms: u64, tick_ms: u64, vms: &[VmView], out: &mut StepOutput) {
        for v in vms {
            self.work += self.util_pct / 100.0 * v.cores as f64 * v.speed * tick_ms as f64 / 1000.0;
            out.util.push((v.id.clone(), self.util_pct));
        }
    }

    fn work_completed(&self) -> f64 {
        self.work
    }
}
