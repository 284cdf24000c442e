//! Run counters and the metrics derived from them.

use std::fmt;

use crate::node::DropCause;
use crate::routing::message::ControlKind;
use crate::time::SimTime;

/// Raw counts for a run (or for one reporting interval).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub sent: u64,
    pub received_unique: u64,
    pub duplicates: u64,
    pub dropped_attacker: u64,
    pub dropped_ttl: u64,
    pub dropped_buffer: u64,
    pub dropped_no_route: u64,
    /// Transmissions of each control kind, one per hop.
    pub control: [u64; 4],
    pub delay_sum_us: u64,
    pub delay_samples: u64,
}

impl Counters {
    pub fn dropped(&self, cause: DropCause) -> u64 {
        match cause {
            DropCause::Attacker => self.dropped_attacker,
            DropCause::Ttl => self.dropped_ttl,
            DropCause::Buffer => self.dropped_buffer,
            DropCause::NoRoute => self.dropped_no_route,
        }
    }

    pub fn record_drop(&mut self, cause: DropCause) {
        match cause {
            DropCause::Attacker => self.dropped_attacker += 1,
            DropCause::Ttl => self.dropped_ttl += 1,
            DropCause::Buffer => self.dropped_buffer += 1,
            DropCause::NoRoute => self.dropped_no_route += 1,
        }
    }

    pub fn total_drops(&self) -> u64 {
        DropCause::ALL.iter().map(|&c| self.dropped(c)).sum()
    }

    pub fn record_control(&mut self, kind: ControlKind) {
        self.control[kind as usize] += 1;
    }

    pub fn control_sent(&self, kind: ControlKind) -> u64 {
        self.control[kind as usize]
    }

    pub fn routing_packets(&self) -> u64 {
        self.control.iter().sum()
    }

    pub fn record_delivery(&mut self, delay_us: u64) {
        self.received_unique += 1;
        self.delay_sum_us += delay_us;
        self.delay_samples += 1;
    }

    /// Packets neither delivered nor dropped.
    pub fn unaccounted(&self) -> i64 {
        self.sent as i64 - self.received_unique as i64 - self.total_drops() as i64
    }

    /// Field-wise `self - earlier`.
    pub fn since(&self, earlier: &Counters) -> Counters {
        let mut control = [0; 4];
        for (i, c) in control.iter_mut().enumerate() {
            *c = self.control[i] - earlier.control[i];
        }
        Counters {
            sent: self.sent - earlier.sent,
            received_unique: self.received_unique - earlier.received_unique,
            duplicates: self.duplicates - earlier.duplicates,
            dropped_attacker: self.dropped_attacker - earlier.dropped_attacker,
            dropped_ttl: self.dropped_ttl - earlier.dropped_ttl,
            dropped_buffer: self.dropped_buffer - earlier.dropped_buffer,
            dropped_no_route: self.dropped_no_route - earlier.dropped_no_route,
            control,
            delay_sum_us: self.delay_sum_us - earlier.delay_sum_us,
            delay_samples: self.delay_samples - earlier.delay_samples,
        }
    }
}

/// A metric that can be undefined for a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    /// Zero denominator; the string says which.
    Absent(&'static str),
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Absent(_) => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => write!(f, "{v:.6}"),
            Metric::Absent(_) => f.write_str("absent"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pdr {
    pub ratio: f64,
    /// Nothing was sent; the ratio is defined as 1.
    pub vacuous: bool,
}

pub fn pdr(c: &Counters) -> Pdr {
    if c.sent == 0 {
        Pdr { ratio: 1.0, vacuous: true }
    } else {
        Pdr {
            ratio: c.received_unique as f64 / c.sent as f64,
            vacuous: false,
        }
    }
}

/// Mean end-to-end delay in milliseconds.
pub fn avg_delay_ms(c: &Counters) -> Metric {
    if c.delay_samples == 0 {
        Metric::Absent("no_samples")
    } else {
        Metric::Value(c.delay_sum_us as f64 / c.delay_samples as f64 / 1000.0)
    }
}

/// Routing packets per delivered data packet.
pub fn nrl(c: &Counters) -> Metric {
    if c.received_unique == 0 {
        Metric::Absent("no_deliveries")
    } else {
        Metric::Value(c.routing_packets() as f64 / c.received_unique as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    pub packets_per_sec: f64,
    pub bytes_per_sec: f64,
}

pub fn throughput(c: &Counters, elapsed_secs: f64, payload_size: u32) -> Throughput {
    assert!(elapsed_secs > 0.0, "elapsed time must be positive");
    let pps = c.received_unique as f64 / elapsed_secs;
    Throughput {
        packets_per_sec: pps,
        bytes_per_sec: pps * f64::from(payload_size),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropBreakdown {
    pub total_pct: f64,
    pub by_cause: [(DropCause, f64); 4],
}

pub fn drop_pct(c: &Counters) -> DropBreakdown {
    let pct = |n: u64| if c.sent == 0 { 0.0 } else { 100.0 * n as f64 / c.sent as f64 };
    DropBreakdown {
        total_pct: pct(c.total_drops()),
        by_cause: DropCause::ALL.map(|cause| (cause, pct(c.dropped(cause)))),
    }
}

/// One reporting interval: the counts that accrued in it and the packets
/// still in flight at its end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: SimTime,
    pub end: SimTime,
    pub delta: Counters,
    pub cumulative: Counters,
    pub in_flight: u64,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsLedger {
    pub totals: Counters,
    /// Packets emitted and not yet delivered or dropped.
    pub in_flight: u64,
    pub stale_replies: u64,
    snapshots: Vec<(SimTime, Counters, u64)>,
}

impl MetricsLedger {
    pub fn record_sent(&mut self) {
        self.totals.sent += 1;
        self.in_flight += 1;
    }

    pub fn record_delivery(&mut self, delay_us: u64) {
        self.totals.record_delivery(delay_us);
        self.in_flight -= 1;
    }

    pub fn record_drop(&mut self, cause: DropCause) {
        self.totals.record_drop(cause);
        self.in_flight -= 1;
    }

    /// Closes the current reporting interval at `now`.
    pub fn snapshot(&mut self, now: SimTime) {
        self.snapshots.push((now, self.totals, self.in_flight));
    }

    pub fn intervals(&self) -> Vec<Interval> {
        let mut prev = (SimTime::ZERO, Counters::default());
        self.snapshots
            .iter()
            .map(|&(end, cum, in_flight)| {
                let iv = Interval {
                    start: prev.0,
                    end,
                    delta: cum.since(&prev.1),
                    cumulative: cum,
                    in_flight,
                };
                prev = (end, cum);
                iv
            })
            .collect()
    }
}
