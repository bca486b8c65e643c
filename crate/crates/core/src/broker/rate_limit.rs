//! Token buckets per (publisher, namespace), in integer milli-tokens over logical time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Namespace;

const MILLI: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateLimitPolicy {
    pub max_events_per_second: u64,
    /// Bucket depth in events.
    pub burst: u64,
}

impl RateLimitPolicy {
    /// Burst equal to the rate.
    pub fn per_second(rate: u64) -> Self {
        Self { max_events_per_second: rate, burst: rate }
    }
}

impl Default for RateLimitPolicy {
    fn default() -> Self {
        Self::per_second(100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Bucket {
    tokens: u64,
    last_ms: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RateLimiter {
    default: RateLimitPolicy,
    overrides: BTreeMap<String, RateLimitPolicy>,
    buckets: BTreeMap<(String, Namespace), Bucket>,
}

impl RateLimiter {
    pub fn new(default: RateLimitPolicy) -> Self {
        Self { default, ..Default::default() }
    }

    pub fn set_policy(&mut self, publisher: &str, policy: RateLimitPolicy) {
        self.overrides.insert(publisher.to_owned(), policy);
    }

    pub fn policy(&self, publisher: &str) -> RateLimitPolicy {
        self.overrides.get(publisher).copied().unwrap_or(self.default)
    }

    /// Take one token if available. Time never runs backwards for a bucket.
    pub fn try_acquire(&mut self, publisher: &str, ns: Namespace, now_ms: u64) -> bool {
        let p = self.policy(publisher);
        let cap = p.burst.max(1) * MILLI;
        let b = self
            .buckets
            .entry((publisher.to_owned(), ns))
            .or_insert(Bucket { tokens: cap, last_ms: now_ms });
        if now_ms > b.last_ms {
            // rate events/s is rate milli-tokens per ms
            let refill = (now_ms - b.last_ms).saturating_mul(p.max_events_per_second);
            b.tokens = b.tokens.saturating_add(refill).min(cap);
            b.last_ms = now_ms;
        }
        if b.tokens >= MILLI {
            b.tokens -= MILLI;
            true
        } else {
            false
        }
    }
}
