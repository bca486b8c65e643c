//! Big-data batch: jobs of tasks packed into VM slots, one master per job.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{StepOutput, VmView, WorkloadModel};
use crate::hints::{PlatformNotification, PreemptionPriority, RuntimeUpdate};
use crate::ids::VmId;
use crate::sim::scenario::BatchParams;

#[derive(Debug, Clone)]
struct Task {
    job: usize,
    duration_ms: f64,
    progress_ms: f64,
    vm: Option<VmId>,
    started_at_ms: u64,
    done_at_ms: Option<u64>,
}

pub struct BatchModel {
    p: BatchParams,
    tasks: Vec<Task>,
    queue: VecDeque<usize>,
    masters: Vec<Option<VmId>>,
    /// Scheduling order over VMs; new VMs land at a seeded random position.
    order: Vec<VmId>,
    doomed: BTreeSet<VmId>,
    rng: ChaCha8Rng,
    started: bool,
    work: f64,
}

impl BatchModel {
    pub fn new(p: BatchParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba7c);
        let mut tasks = Vec::new();
        for (j, job) in p.jobs.iter().enumerate() {
            for _ in 0..job.tasks {
                let d = rng.gen_range(job.min_duration_ms..=job.max_duration_ms);
                tasks.push(Task {
                    job: j,
                    duration_ms: d as f64,
                    progress_ms: 0.0,
                    vm: None,
                    started_at_ms: 0,
                    done_at_ms: None,
                });
            }
        }
        let queue = (0..tasks.len()).collect();
        let masters = vec![None; p.jobs.len()];
        Self { p, tasks, queue, masters, order: Vec::new(), doomed: BTreeSet::new(), rng, started: false, work: 0.0 }
    }

    fn job_done(&self, job: usize) -> bool {
        self.tasks.iter().filter(|t| t.job == job).all(|t| t.done_at_ms.is_some())
    }

    fn usable(&self) -> impl Iterator<Item = &VmId> {
        self.order.iter().filter(|v| !self.doomed.contains(*v))
    }

    fn first_usable(&self) -> Option<VmId> {
        self.usable().next().cloned()
    }

    /// Put a task back in the queue, keeping only checkpointed progress.
    fn requeue(&mut self, i: usize) {
        let t = &mut self.tasks[i];
        let cp = self.p.checkpoint_ms.max(1) as f64;
        t.progress_ms = (t.progress_ms / cp).floor() * cp;
        t.duration_ms += self.p.restart_penalty_ms as f64;
        t.vm = None;
        self.queue.push_back(i);
    }

    fn drain(&mut self, vm: &VmId, now_ms: u64, out: &mut StepOutput) {
        let running: Vec<usize> =
            (0..self.tasks.len()).filter(|&i| self.tasks[i].vm.as_ref() == Some(vm) && self.tasks[i].done_at_ms.is_none()).collect();
        for &i in &running {
            self.requeue(i);
        }
        let mut moved = 0;
        for j in 0..self.masters.len() {
            if self.masters[j].as_ref() == Some(vm) && !self.job_done(j) {
                let m = self.first_usable();
                self.masters[j] = m;
                moved += 1;
                // A restarted master costs every running task of its job a restart.
                for t in self.tasks.iter_mut().filter(|t| t.job == j && t.vm.is_some() && t.done_at_ms.is_none()) {
                    t.duration_ms += self.p.restart_penalty_ms as f64;
                }
            }
        }
        if !running.is_empty() || moved > 0 {
            out.note(vm.to_string(), "drain", format!("tasks={} masters={moved} at={now_ms}", running.len()));
        }
    }
}

impl WorkloadModel for BatchModel {
    fn on_vm_added(&mut self, vm: &VmId, _now_ms: u64) {
        let at = self.rng.gen_range(0..=self.order.len());
        self.order.insert(at, vm.clone());
    }

    fn on_notice(&mut self, vm: &VmId, n: &PlatformNotification, now_ms: u64, out: &mut StepOutput) {
        if n.kind.is_removal() && self.doomed.insert(vm.clone()) {
            self.drain(vm, now_ms, out);
        }
    }

    fn on_removed(&mut self, vm: &VmId, now_ms: u64, out: &mut StepOutput) {
        self.doomed.insert(vm.clone());
        self.drain(vm, now_ms, out);
        self.order.retain(|v| v != vm);
        self.doomed.remove(vm);
    }

    fn step(&mut self, now_ms: u64, tick_ms: u64, vms: &[VmView], out: &mut StepOutput) {
        let view: BTreeMap<&VmId, &VmView> = vms.iter().map(|v| (&v.id, v)).collect();

        // Progress during the tick that just ended.
        let mut finished_jobs = BTreeSet::new();
        for t in self.tasks.iter_mut().filter(|t| t.done_at_ms.is_none()) {
            let Some(vm) = &t.vm else { continue };
            let speed = view.get(vm).map_or(1.0, |v| v.speed);
            let step = tick_ms as f64 * speed;
            let left = (t.duration_ms - t.progress_ms).max(0.0);
            self.work += step.min(left) / 1000.0;
            t.progress_ms += step;
            if t.progress_ms + 1e-9 >= t.duration_ms {
                t.done_at_ms = Some(now_ms);
                t.vm = None;
                finished_jobs.insert(t.job);
            }
        }
        for j in finished_jobs {
            if self.job_done(j) {
                out.note(format!("job{j}"), "job_done", format!("at={now_ms}"));
            }
        }

        if now_ms >= self.p.start_ms {
            if !self.started {
                self.started = true;
                for j in 0..self.masters.len() {
                    let m = self.first_usable();
                self.masters[j] = m;
                }
            }
            // Slots shrink with harvest: push back the newest tasks first.
            for v in vms {
                let mut on: Vec<usize> =
                    (0..self.tasks.len()).filter(|&i| self.tasks[i].vm.as_ref() == Some(&v.id)).collect();
                on.sort_by_key(|&i| std::cmp::Reverse((self.tasks[i].started_at_ms, i)));
                while on.len() > v.cores as usize {
                    let i = on.remove(0);
                    self.requeue(i);
                }
            }
            let order: Vec<VmId> = self.usable().filter(|v| view.contains_key(v)).cloned().collect();
            for vm in order {
                let slots = view[&vm].cores as usize;
                let mut used = self.tasks.iter().filter(|t| t.vm.as_ref() == Some(&vm)).count();
                while used < slots {
                    let Some(i) = self.queue.pop_front() else { break };
                    self.tasks[i].vm = Some(vm.clone());
                    self.tasks[i].started_at_ms = now_ms;
                    used += 1;
                }
            }
        }

        for v in vms {
            let busy = self.tasks.iter().filter(|t| t.vm.as_ref() == Some(&v.id)).count();
            out.util.push((v.id.clone(), 100.0 * busy as f64 / v.cores.max(1) as f64));
            out.hints.push((v.id.clone(), RuntimeUpdate::PreemptionPriority(self.priority_at(&v.id, now_ms))));
        }
    }

    fn priority(&self, vm: &VmId, now_ms: u64) -> PreemptionPriority {
        self.priority_at(vm, now_ms)
    }

    fn finished_at(&self) -> Option<u64> {
        self.tasks.iter().map(|t| t.done_at_ms).collect::<Option<Vec<_>>>().map(|d| d.into_iter().max().unwrap_or(0))
    }

    fn work_completed(&self) -> f64 {
        self.work
    }
}

impl BatchModel {
    /// High for a job master or a container past the critical age, Low when empty.
    pub fn priority_at(&self, vm: &VmId, now_ms: u64) -> PreemptionPriority {
        let master = self.masters.iter().enumerate().any(|(j, m)| m.as_ref() == Some(vm) && !self.job_done(j));
        let mut running = self.tasks.iter().filter(|t| t.vm.as_ref() == Some(vm)).peekable();
        if master {
            return PreemptionPriority::High;
        }
        if running.peek().is_none() {
            return PreemptionPriority::Low;
        }
        if running.any(|t| now_ms.saturating_sub(t.started_at_ms) >= self.p.critical_age_ms) {
            PreemptionPriority::High
        } else {
            PreemptionPriority::Normal
        }
    }
}
