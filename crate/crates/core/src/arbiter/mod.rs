//! Conflict resolution between optimizations competing for one resource pool.
//!
//! Claims are served strictly by priority class (lower number first). Inside a
//! class, a compressible pool is shared max-min fairly across owners and then
//! across each owner's claims; an incompressible pool grants whole claims in
//! order of request time, with a seeded shuffle among identical timestamps.
//! A claim that does not fit is skipped and later claims may still fit.

mod fair_share;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fair_share::{fair_share, fair_share_integral, water_fill, water_fill_integral};

use crate::ids::WorkloadId;
use crate::optimizers::{ClaimId, ResourceClaim, ResourceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourcePool {
    pub kind: ResourceKind,
    pub capacity: u64,
}

impl ResourcePool {
    pub fn new(kind: ResourceKind, capacity: u64) -> Self {
        Self { kind, capacity }
    }

    pub fn compressible(&self) -> bool {
        self.kind.compressible()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub claim: ClaimId,
    pub granted: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArbiterError {
    #[error("claim {claim} targets {found} but the pool is {pool}")]
    MixedResourceKinds { claim: ClaimId, pool: ResourceKind, found: ResourceKind },
}

/// Resolve `claims` against `pool`. Allocations come back in input order.
pub fn resolve(pool: &ResourcePool, claims: &[ResourceClaim], seed: u64) -> Result<Vec<Allocation>, ArbiterError> {
    if let Some(bad) = claims.iter().find(|c| c.resource != pool.kind) {
        return Err(ArbiterError::MixedResourceKinds { claim: bad.id, pool: pool.kind, found: bad.resource });
    }
    let mut granted = vec![0u64; claims.len()];
    let mut classes: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, c) in claims.iter().enumerate() {
        classes.entry(c.priority).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = pool.capacity;
    for members in classes.values() {
        if remaining == 0 {
            break;
        }
        if pool.compressible() {
            remaining -= share_class(claims, members, remaining, &mut granted);
        } else {
            for i in request_order(claims, members, &mut rng) {
                if claims[i].amount <= remaining {
                    granted[i] = claims[i].amount;
                    remaining -= claims[i].amount;
                }
            }
        }
    }
    Ok(claims.iter().zip(granted).map(|(c, g)| Allocation { claim: c.id, granted: g }).collect())
}

fn share_class(claims: &[ResourceClaim], members: &[usize], capacity: u64, granted: &mut [u64]) -> u64 {
    let mut by_owner: BTreeMap<&WorkloadId, Vec<usize>> = BTreeMap::new();
    for &i in members {
        by_owner.entry(&claims[i].owner).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = by_owner.into_values().collect();
    let demands: Vec<Vec<u64>> = groups.iter().map(|g| g.iter().map(|&i| claims[i].amount).collect()).collect();
    let shares = fair_share_integral(&demands, capacity);
    let mut used = 0;
    for (group, share) in groups.iter().zip(shares) {
        for (&i, g) in group.iter().zip(share) {
            granted[i] = g;
            used += g;
        }
    }
    used
}

/// Earliest request first; equal timestamps shuffled by the seeded generator.
fn request_order(claims: &[ResourceClaim], members: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut sorted = members.to_vec();
    sorted.sort_by_key(|&i| (claims[i].timestamp_ms, claims[i].id));
    let mut out = Vec::with_capacity(sorted.len());
    for tie in sorted.chunk_by(|&a, &b| claims[a].timestamp_ms == claims[b].timestamp_ms) {
        let mut tie = tie.to_vec();
        if tie.len() > 1 {
            tie.shuffle(rng);
        }
        out.extend(tie);
    }
    out
}
