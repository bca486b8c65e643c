use std::fmt;

use serde::{Deserialize, Serialize};

use super::BrokerError;

pub const MAX_TOPIC_BYTES: usize = 256;

/// Top-level topic namespace; also the unit a deployment would shard on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Namespace {
    #[serde(rename = "deployment-hints")]
    DeploymentHints,
    #[serde(rename = "runtime-hints")]
    RuntimeHints,
    #[serde(rename = "platform-notifications")]
    PlatformNotifications,
    #[serde(rename = "optimization-events")]
    OptimizationEvents,
}

impl Namespace {
    pub const ALL: [Namespace; 4] = [
        Namespace::DeploymentHints,
        Namespace::RuntimeHints,
        Namespace::PlatformNotifications,
        Namespace::OptimizationEvents,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::DeploymentHints => "deployment-hints",
            Namespace::RuntimeHints => "runtime-hints",
            Namespace::PlatformNotifications => "platform-notifications",
            Namespace::OptimizationEvents => "optimization-events",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s)
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `namespace/seg/seg/...` with at least one non-empty scope segment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Topic {
    pub namespace: Namespace,
    pub segments: Vec<String>,
}

impl Topic {
    pub fn new<I, S>(namespace: Namespace, segments: I) -> Result<Self, BrokerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let t = Topic { namespace, segments: segments.into_iter().map(Into::into).collect() };
        Topic::parse(&t.to_string())
    }

    pub fn parse(s: &str) -> Result<Self, BrokerError> {
        let bad = |why: &str| BrokerError::MalformedTopic(format!("{s:?}: {why}"));
        if s.len() > MAX_TOPIC_BYTES {
            return Err(bad("longer than 256 bytes"));
        }
        let mut parts = s.split('/');
        let ns = parts.next().and_then(Namespace::parse).ok_or_else(|| bad("unknown namespace"))?;
        let segments: Vec<String> = parts.map(str::to_owned).collect();
        if segments.is_empty() {
            return Err(bad("no scope segments"));
        }
        if segments.iter().any(|p| p.is_empty()) {
            return Err(bad("empty segment"));
        }
        if segments.iter().any(|p| p.contains('*')) {
            return Err(bad("wildcards are only allowed in filters"));
        }
        Ok(Topic { namespace: ns, segments })
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.namespace.as_str())?;
        for s in &self.segments {
            write!(f, "/{s}")?;
        }
        Ok(())
    }
}

/// A topic or a prefix ending in `/*`, which matches one or more further segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicFilter {
    pub namespace: Namespace,
    pub prefix: Vec<String>,
    pub wildcard: bool,
}

impl TopicFilter {
    pub fn parse(s: &str) -> Result<Self, BrokerError> {
        let bad = |why: &str| BrokerError::MalformedFilter(format!("{s:?}: {why}"));
        if s.len() > MAX_TOPIC_BYTES {
            return Err(bad("longer than 256 bytes"));
        }
        let mut parts: Vec<&str> = s.split('/').collect();
        let ns = Namespace::parse(parts.remove(0)).ok_or_else(|| bad("unknown namespace"))?;
        let wildcard = parts.last() == Some(&"*");
        if wildcard {
            parts.pop();
        }
        if !wildcard && parts.is_empty() {
            return Err(bad("no scope segments"));
        }
        if parts.iter().any(|p| p.is_empty() || p.contains('*')) {
            return Err(bad("empty segment or non-trailing wildcard"));
        }
        Ok(TopicFilter { namespace: ns, prefix: parts.into_iter().map(str::to_owned).collect(), wildcard })
    }

    pub fn matches(&self, t: &Topic) -> bool {
        if t.namespace != self.namespace || !t.segments.starts_with(&self.prefix) {
            return false;
        }
        if self.wildcard {
            t.segments.len() > self.prefix.len()
        } else {
            t.segments.len() == self.prefix.len()
        }
    }
}
