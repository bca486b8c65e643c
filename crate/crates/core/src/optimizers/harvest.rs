//! Growing and shrinking harvest VMs as a server's spare cores change.

use serde::{Deserialize, Serialize};

use crate::arbiter::water_fill_integral;
use crate::hints::{NotificationKind, NotificationPayload, PlatformNotification, ScalePreference};
use crate::ids::VmId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestVm {
    pub vm: VmId,
    pub base_cores: u32,
    /// Cores currently held above base.
    pub harvested: u32,
    pub preference: ScalePreference,
    /// Upper bound on harvested cores, if any.
    pub max_harvest: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HarvestActions {
    /// Signed core change per VM, only non-zero entries.
    pub changes: Vec<(VmId, i64)>,
    pub notifications: Vec<PlatformNotification>,
    /// Cores that must still come from evictions.
    pub deficit: u64,
    /// Spare cores no harvest VM could absorb.
    pub unused: u64,
}

impl HarvestActions {
    pub fn net_change(&self) -> i64 {
        self.changes.iter().map(|(_, d)| d).sum()
    }
}

fn class_rank(p: ScalePreference, growing: bool) -> u8 {
    match (p, growing) {
        (ScalePreference::PreferGrow, true) | (ScalePreference::PreferShrink, false) => 0,
        (ScalePreference::Neutral, _) => 1,
        _ => 2,
    }
}

/// Re-balance harvested cores so that they total the server's spare capacity.
///
/// `spare` is what is left after base allocations and may be negative when
/// on-demand demand exceeds it. Growth goes to PreferGrow VMs before Neutral
/// ones; PreferShrink VMs do not grow. Shrinking starts with PreferShrink.
pub fn rebalance(spare: i64, vms: &[HarvestVm], now_ms: u64) -> HarvestActions {
    let held: u64 = vms.iter().map(|v| v.harvested as u64).sum();
    let target = spare.max(0) as u64;
    let mut delta = vec![0i64; vms.len()];
    let mut out = HarvestActions::default();

    if target > held {
        let mut left = target - held;
        for rank in 0..2 {
            let members: Vec<usize> = (0..vms.len()).filter(|&i| class_rank(vms[i].preference, true) == rank).collect();
            let room: Vec<u64> = members
                .iter()
                .map(|&i| vms[i].max_harvest.map_or(left, |m| m.saturating_sub(vms[i].harvested) as u64))
                .collect();
            let grants = water_fill_integral(&room, left);
            for (&i, g) in members.iter().zip(grants) {
                delta[i] += g as i64;
                left -= g;
            }
        }
        out.unused = left;
    } else if target < held {
        let mut left = held - target;
        for rank in 0..3 {
            let members: Vec<usize> =
                (0..vms.len()).filter(|&i| class_rank(vms[i].preference, false) == rank).collect();
            // Shrink fairly: take from whoever holds the most, one core at a time.
            let mut holding: Vec<u64> = members.iter().map(|&i| vms[i].harvested as u64).collect();
            while left > 0 {
                let Some((k, _)) = holding.iter().enumerate().filter(|(_, h)| **h > 0).max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                else {
                    break;
                };
                holding[k] -= 1;
                delta[members[k]] -= 1;
                left -= 1;
            }
        }
    }
    if spare < 0 {
        out.deficit = spare.unsigned_abs();
    }
    for (v, d) in vms.iter().zip(delta) {
        if d == 0 {
            continue;
        }
        let kind = if d > 0 { NotificationKind::ScaleUp } else { NotificationKind::ScaleDown };
        let cores = (v.base_cores as i64 + v.harvested as i64 + d) as u32;
        out.notifications
            .push(PlatformNotification::new(v.vm.clone(), kind, now_ms, now_ms).with_payload(NotificationPayload::Cores(cores)));
        out.changes.push((v.vm.clone(), d));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ScalePreference::*;

    fn hv(vm: &str, harvested: u32, p: ScalePreference) -> HarvestVm {
        HarvestVm { vm: vm.into(), base_cores: 2, harvested, preference: p, max_harvest: None }
    }

    #[test]
    fn symmetric_growth() {
        let a = rebalance(6, &[hv("a", 0, PreferGrow), hv("b", 0, PreferGrow)], 0);
        assert_eq!(a.changes, vec![("a".into(), 3), ("b".into(), 3)]);
        assert_eq!(a.notifications[0].payload, NotificationPayload::Cores(5));
    }

    #[test]
    fn prefer_shrink_gives_up_first() {
        let a = rebalance(0, &[hv("s", 4, PreferShrink), hv("n", 0, Neutral)], 0);
        assert_eq!(a.changes, vec![("s".into(), -4)]);
        assert_eq!(a.notifications[0].kind, NotificationKind::ScaleDown);
    }

    #[test]
    fn neutral_gets_overflow_beyond_capped_growers() {
        let mut g = hv("g", 0, PreferGrow);
        g.max_harvest = Some(2);
        let a = rebalance(5, &[g, hv("n", 0, Neutral), hv("s", 0, PreferShrink)], 0);
        assert_eq!(a.changes, vec![("g".into(), 2), ("n".into(), 3)]);
    }

    #[test]
    fn deficit_escalates() {
        let a = rebalance(-3, &[hv("a", 2, Neutral)], 0);
        assert_eq!(a.changes, vec![("a".into(), -2)]);
        assert_eq!(a.deficit, 3);
    }

    #[test]
    fn no_harvest_vms_leaves_spare_unused() {
        let a = rebalance(4, &[], 0);
        assert_eq!(a.unused, 4);
        assert!(a.changes.is_empty());
    }
}
