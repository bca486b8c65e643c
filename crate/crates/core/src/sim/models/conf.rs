//! Video conferencing: diurnal call load with spikes on the half hour.

use std::collections::{BTreeMap, VecDeque};

use super::{diurnal, StepOutput, VmView, WorkloadModel};
use crate::hints::{PreemptionPriority, ResourceUtil, RuntimeUpdate, ScalePreference};
use crate::ids::VmId;
use crate::optimizers::autoscale::ScalingPolicy;
use crate::optimizers::rightsize::UtilSample;
use crate::sim::scenario::ConfParams;

const HALF_HOUR_MS: u64 = 1_800_000;

pub struct ConfModel {
    p: ConfParams,
    util: BTreeMap<VmId, f64>,
    pref: BTreeMap<VmId, ScalePreference>,
    prio: BTreeMap<VmId, PreemptionPriority>,
    history: VecDeque<UtilSample>,
    history_buf: Vec<UtilSample>,
    generated: f64,
    completed: f64,
    work: f64,
}

impl ConfModel {
    pub fn new(p: ConfParams) -> Self {
        Self {
            p,
            util: BTreeMap::new(),
            pref: BTreeMap::new(),
            prio: BTreeMap::new(),
            history: VecDeque::new(),
            history_buf: Vec::new(),
            generated: 0.0,
            completed: 0.0,
            work: 0.0,
        }
    }

    pub fn calls(&self, t_ms: u64) -> f64 {
        let base = self.p.base_calls + (self.p.peak_calls - self.p.base_calls) * diurnal(t_ms, self.p.day_ms.max(1));
        let spike = if t_ms % HALF_HOUR_MS < self.p.spike_width_ms { self.p.spike_calls } else { 0.0 };
        base + spike
    }
}

impl WorkloadModel for ConfModel {
    fn on_removed(&mut self, vm: &VmId, _now_ms: u64, _out: &mut StepOutput) {
        self.util.remove(vm);
        self.pref.remove(vm);
        self.prio.remove(vm);
    }

    fn step(&mut self, now_ms: u64, tick_ms: u64, vms: &[VmView], out: &mut StepOutput) {
        let calls = self.calls(now_ms);
        let live: Vec<&VmView> = vms.iter().filter(|v| !v.doomed).collect();
        let capacity: f64 = live.iter().map(|v| self.p.calls_per_vm * v.speed).sum();
        let served = calls.min(capacity);
        let secs = tick_ms as f64 / 1000.0;
        self.generated += calls * secs;
        self.completed += served * secs;

        let share = if capacity > 0.0 { calls / capacity } else { 0.0 };
        let util = (100.0 * share).min(100.0);
        self.util.clear();
        for v in vms {
            let u = if v.doomed { 0.0 } else { util };
            self.util.insert(v.id.clone(), u);
            self.work += u / 100.0 * v.cores as f64 * secs;
            out.util.push((v.id.clone(), u));
            let pr = if u > self.p.high_util_pct { PreemptionPriority::High } else { PreemptionPriority::Normal };
            if self.prio.insert(v.id.clone(), pr) != Some(pr) {
                out.hints.push((v.id.clone(), RuntimeUpdate::PreemptionPriority(pr)));
            }
            let pref = if u > self.p.high_util_pct { ScalePreference::PreferGrow } else { ScalePreference::Neutral };
            if self.pref.insert(v.id.clone(), pref) != Some(pref) {
                out.hints.push((v.id.clone(), RuntimeUpdate::ScalePreference(pref)));
            }
        }

        self.history.push_back(UtilSample { t_ms: now_ms, util: ResourceUtil::uniform(util) });
        while self.history.front().is_some_and(|s| s.t_ms + 2 * self.p.rightsize_window_ms < now_ms) {
            self.history.pop_front();
        }
        self.history_buf.clear();
        self.history_buf.extend(self.history.iter().copied());
    }

    fn priority(&self, vm: &VmId, _now_ms: u64) -> PreemptionPriority {
        match self.util.get(vm) {
            Some(u) if *u > self.p.high_util_pct => PreemptionPriority::High,
            _ => PreemptionPriority::Normal,
        }
    }

    fn work_completed(&self) -> f64 {
        self.work
    }

    fn requests(&self) -> (f64, f64, f64) {
        (self.generated, self.completed, self.generated - self.completed)
    }

    fn scaling(&self) -> Option<(&ScalingPolicy, u64)> {
        Some((&self.p.scaling, self.p.scale_interval_ms))
    }

    fn util_history(&self) -> Option<(&[UtilSample], u64)> {
        Some((&self.history_buf, self.p.rightsize_window_ms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spikes_on_the_half_hour() {
        let m = ConfModel::new(ConfParams { base_calls: 10.0, peak_calls: 10.0, ..Default::default() });
        assert_eq!(m.calls(0), 110.0);
        assert_eq!(m.calls(HALF_HOUR_MS + 1000), 110.0);
        assert_eq!(m.calls(600_000), 10.0);
    }

    #[test]
    fn hot_vms_ask_for_priority() {
        let mut m = ConfModel::new(ConfParams { base_calls: 90.0, peak_calls: 90.0, spike_calls: 0.0, ..Default::default() });
        let vms: Vec<VmView> = (0..2)
            .map(|i| VmView { id: format!("c{i}").into(), cores: 4, speed: 1.0, created_at_ms: 0, doomed: false })
            .collect();
        let mut out = StepOutput::default();
        m.step(0, 1000, &vms, &mut out);
        assert_eq!(m.priority(&vms[0].id, 0), PreemptionPriority::High);
        assert!(out.hints.iter().any(|(_, u)| *u == RuntimeUpdate::ScalePreference(ScalePreference::PreferGrow)));
    }
}
