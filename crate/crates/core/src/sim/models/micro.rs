//! Microservices on a container orchestrator: pods spread over nodes, with
//! one anchor node that always keeps its pods.

use std::collections::BTreeMap;

use super::{diurnal, StepOutput, VmView, WorkloadModel};
use crate::hints::{HintUpdate, PlatformNotification, RuntimeUpdate, ScalePreference};
use crate::ids::VmId;
use crate::sim::scenario::MicroParams;

pub struct MicroModel {
    p: MicroParams,
    /// Nodes in arrival order; the first one is the anchor.
    nodes: Vec<VmId>,
    pods: BTreeMap<VmId, u32>,
    doomed: Vec<VmId>,
    last_pct: BTreeMap<VmId, u8>,
    last_pref: BTreeMap<VmId, ScalePreference>,
    last_rps: f64,
    generated: f64,
    completed: f64,
    work: f64,
}

impl MicroModel {
    pub fn new(p: MicroParams) -> Self {
        Self {
            p,
            nodes: Vec::new(),
            pods: BTreeMap::new(),
            doomed: Vec::new(),
            last_pct: BTreeMap::new(),
            last_pref: BTreeMap::new(),
            last_rps: 0.0,
            generated: 0.0,
            completed: 0.0,
            work: 0.0,
        }
    }

    pub fn rps(&self, t_ms: u64) -> f64 {
        self.p.base_rps + (self.p.peak_rps - self.p.base_rps) * diurnal(t_ms, self.p.day_ms.max(1))
    }

    pub fn pods_on(&self, vm: &VmId) -> u32 {
        self.pods.get(vm).copied().unwrap_or(0)
    }

    /// Anchor first, then nodes in order, each up to the pod cap.
    fn place(&mut self, wanted: u32, live: &[&VmId]) {
        self.pods.clear();
        let mut left = wanted;
        for vm in live {
            let n = left.min(self.p.pods_per_node);
            self.pods.insert((*vm).clone(), n);
            left -= n;
        }
    }
}

impl WorkloadModel for MicroModel {
    fn on_vm_added(&mut self, vm: &VmId, _now_ms: u64) {
        self.nodes.push(vm.clone());
    }

    fn on_notice(&mut self, vm: &VmId, n: &PlatformNotification, now_ms: u64, out: &mut StepOutput) {
        if n.kind.is_removal() && !self.doomed.contains(vm) {
            self.doomed.push(vm.clone());
            let moved = self.pods_on(vm);
            if moved > 0 {
                out.note(vm.to_string(), "drain", format!("pods={moved} at={now_ms}"));
            }
        }
    }

    fn on_removed(&mut self, vm: &VmId, _now_ms: u64, _out: &mut StepOutput) {
        self.nodes.retain(|v| v != vm);
        self.doomed.retain(|v| v != vm);
        self.pods.remove(vm);
        self.last_pct.remove(vm);
        self.last_pref.remove(vm);
    }

    fn step(&mut self, now_ms: u64, tick_ms: u64, vms: &[VmView], out: &mut StepOutput) {
        let view: BTreeMap<&VmId, &VmView> = vms.iter().map(|v| (&v.id, v)).collect();
        let live: Vec<VmId> =
            self.nodes.iter().filter(|v| view.contains_key(v) && !self.doomed.contains(v)).cloned().collect();
        let rps = self.rps(now_ms);
        let wanted = (rps / self.p.rps_per_pod).ceil().max(1.0) as u32;
        let refs: Vec<&VmId> = live.iter().collect();
        self.place(wanted, &refs);

        let secs = tick_ms as f64 / 1000.0;
        let capacity: f64 = live
            .iter()
            .map(|v| self.pods_on(v) as f64 * self.p.rps_per_pod * view[v].speed)
            .sum::<f64>()
            * secs;
        let generated = rps * secs;
        let done = generated.min(capacity);
        self.generated += generated;
        self.completed += done;

        let rising = rps > self.last_rps;
        self.last_rps = rps;
        for v in vms {
            let pods = self.pods_on(&v.id);
            let cap = self.p.pods_per_node;
            let busy = if cap == 0 { 0.0 } else { 100.0 * pods as f64 / cap as f64 };
            self.work += busy / 100.0 * v.cores as f64 * secs;
            out.util.push((v.id.clone(), busy));
            let anchor = live.first() == Some(&v.id);
            let pct = if anchor || pods >= cap { 0 } else { 100 };
            if self.last_pct.insert(v.id.clone(), pct) != Some(pct) {
                out.hints.push((v.id.clone(), RuntimeUpdate::Characteristic(HintUpdate::PreemptibilityPct(pct))));
            }
            let pref = if rising { ScalePreference::PreferGrow } else { ScalePreference::Neutral };
            if self.last_pref.insert(v.id.clone(), pref) != Some(pref) {
                out.hints.push((v.id.clone(), RuntimeUpdate::ScalePreference(pref)));
            }
        }
    }

    fn work_completed(&self) -> f64 {
        self.work
    }

    fn requests(&self) -> (f64, f64, f64) {
        (self.generated, self.completed, self.generated - self.completed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn views(n: usize) -> Vec<VmView> {
        (0..n)
            .map(|i| VmView { id: format!("n{i}").into(), cores: 4, speed: 1.0, created_at_ms: 0, doomed: false })
            .collect()
    }

    #[test]
    fn anchor_fills_first_and_stays_unpreemptible() {
        let p = MicroParams { base_rps: 600.0, peak_rps: 600.0, ..Default::default() };
        let mut m = MicroModel::new(p);
        let vms = views(3);
        for v in &vms {
            m.on_vm_added(&v.id, 0);
        }
        let mut out = StepOutput::default();
        m.step(0, 1000, &vms, &mut out);
        assert_eq!(m.pods_on(&vms[0].id), 10);
        assert_eq!(m.pods_on(&vms[1].id), 2);
        let pct: Vec<_> = out
            .hints
            .iter()
            .filter_map(|(v, u)| match u {
                RuntimeUpdate::Characteristic(HintUpdate::PreemptibilityPct(p)) => Some((v.as_str(), *p)),
                _ => None,
            })
            .collect();
        assert_eq!(pct, vec![("n0", 0), ("n1", 100), ("n2", 100)]);
        // Unchanged values are not written again.
        let mut again = StepOutput::default();
        m.step(1000, 1000, &vms, &mut again);
        assert!(again.hints.iter().all(|(_, u)| !matches!(u, RuntimeUpdate::Characteristic(_))));
    }

    #[test]
    fn requests_are_conserved() {
        let mut m = MicroModel::new(MicroParams::default());
        let vms = views(1);
        m.on_vm_added(&vms[0].id, 0);
        let mut out = StepOutput::default();
        for t in 0..600 {
            m.step(t * 10_000, 10_000, &vms, &mut out);
        }
        let (g, c, d) = m.requests();
        assert!(d > 0.0);
        assert!((g - c - d).abs() < 1e-9);
    }
}
