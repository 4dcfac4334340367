use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::cost::{cost_usd, Pricing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageRole {
    Synthesis,
    Judging,
    Diagnostic,
}

impl UsageRole {
    pub const ALL: [UsageRole; 3] = [UsageRole::Synthesis, UsageRole::Judging, UsageRole::Diagnostic];

    fn slot(self) -> usize {
        match self {
            UsageRole::Synthesis => 0,
            UsageRole::Judging => 1,
            UsageRole::Diagnostic => 2,
        }
    }
}

/// Token usage of a single upstream call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallUsage {
    pub role: UsageRole,
    pub model: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Counts came from the length heuristic, not from the provider.
    pub estimated: bool,
}

/// Aggregated counters for one role.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsageRecord {
    pub role: Option<UsageRole>,
    pub request_count: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub estimated_requests: u64,
}

impl UsageRecord {
    pub fn cost(&self, pricing: &Pricing) -> f64 {
        cost_usd(self.input_tokens as f64, self.output_tokens as f64, pricing)
    }

    pub fn avg_input(&self) -> f64 {
        if self.request_count == 0 {
            0.0
        } else {
            self.input_tokens as f64 / self.request_count as f64
        }
    }

    pub fn avg_output(&self) -> f64 {
        if self.request_count == 0 {
            0.0
        } else {
            self.output_tokens as f64 / self.request_count as f64
        }
    }
}

#[derive(Default)]
struct Counters {
    requests: AtomicU64,
    input: AtomicU64,
    output: AtomicU64,
    estimated: AtomicU64,
}

/// Shared, thread-safe usage accounting. Counters only ever grow.
#[derive(Default)]
pub struct UsageMeter {
    per_role: [Counters; 3],
    log: Mutex<Vec<CallUsage>>,
}

impl std::fmt::Debug for UsageMeter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UsageMeter").field("total", &self.total()).finish()
    }
}

impl UsageMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, call: CallUsage) {
        let c = &self.per_role[call.role.slot()];
        c.requests.fetch_add(1, Ordering::Relaxed);
        c.input.fetch_add(call.input_tokens, Ordering::Relaxed);
        c.output.fetch_add(call.output_tokens, Ordering::Relaxed);
        if call.estimated {
            c.estimated.fetch_add(1, Ordering::Relaxed);
        }
        self.log.lock().expect("usage log poisoned").push(call);
    }

    pub fn snapshot(&self, role: UsageRole) -> UsageRecord {
        let c = &self.per_role[role.slot()];
        UsageRecord {
            role: Some(role),
            request_count: c.requests.load(Ordering::Relaxed),
            input_tokens: c.input.load(Ordering::Relaxed),
            output_tokens: c.output.load(Ordering::Relaxed),
            estimated_requests: c.estimated.load(Ordering::Relaxed),
        }
    }

    pub fn total(&self) -> UsageRecord {
        UsageRole::ALL.iter().fold(UsageRecord::default(), |mut acc, r| {
            let s = self.snapshot(*r);
            acc.request_count += s.request_count;
            acc.input_tokens += s.input_tokens;
            acc.output_tokens += s.output_tokens;
            acc.estimated_requests += s.estimated_requests;
            acc
        })
    }

    /// Every recorded call, in arrival order.
    pub fn calls(&self) -> Vec<CallUsage> {
        self.log.lock().expect("usage log poisoned").clone()
    }
}

/// Character-length token estimate used when a provider reports nothing.
pub(crate) fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn concurrent_records_reconcile_per_role() {
        let meter = Arc::new(UsageMeter::new());
        std::thread::scope(|s| {
            for t in 0..8u64 {
                let meter = meter.clone();
                s.spawn(move || {
                    for i in 0..250u64 {
                        let role = UsageRole::ALL[((t + i) % 3) as usize];
                        meter.record(CallUsage {
                            role,
                            model: "m".into(),
                            input_tokens: i,
                            output_tokens: t,
                            estimated: i % 7 == 0,
                        });
                    }
                });
            }
        });
        let calls = meter.calls();
        assert_eq!(calls.len(), 2000);
        for role in UsageRole::ALL {
            let snap = meter.snapshot(role);
            let mine: Vec<_> = calls.iter().filter(|c| c.role == role).collect();
            assert_eq!(snap.request_count, mine.len() as u64);
            assert_eq!(snap.input_tokens, mine.iter().map(|c| c.input_tokens).sum::<u64>());
            assert_eq!(snap.output_tokens, mine.iter().map(|c| c.output_tokens).sum::<u64>());
            assert_eq!(snap.estimated_requests, mine.iter().filter(|c| c.estimated).count() as u64);
        }
    }

    #[test]
    fn estimate_rounds_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcde"), 2);
    }
}
