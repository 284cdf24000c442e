//! Constant-bit-rate sources, the per-hop radio channel and destination sinks.

use std::collections::HashSet;
use std::fmt;

use crate::mobility::Adjacency;
use crate::rng::RngStream;
use crate::time::{SimDuration, SimTime};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbrFlow {
    pub source: NodeId,
    pub destination: NodeId,
    /// Packets per second.
    pub rate: f64,
    pub payload_size: u32,
    pub start: SimTime,
    pub stop: SimTime,
}

impl CbrFlow {
    /// Emission instant of packet `seq`: `start + seq / rate`, rounded to the
    /// microsecond from the index rather than accumulated, so spacing never drifts.
    pub fn emission_time(&self, seq: u32) -> SimTime {
        let offset = (f64::from(seq) * 1e6 / self.rate).round() as u64;
        self.start + SimDuration::from_micros(offset)
    }

    /// All emission instants in `[start, stop)`.
    pub fn emission_times(&self) -> impl Iterator<Item = SimTime> + '_ {
        (0u32..)
            .map(|seq| self.emission_time(seq))
            .take_while(|&t| t < self.stop)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PacketId {
    pub flow: u32,
    pub seq: u32,
}

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.flow, self.seq)
    }
}

impl std::str::FromStr for PacketId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (flow, seq) = s.split_once('.').ok_or_else(|| format!("bad packet id {s:?}"))?;
        Ok(PacketId {
            flow: flow.parse().map_err(|_| format!("bad packet id {s:?}"))?,
            seq: seq.parse().map_err(|_| format!("bad packet id {s:?}"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPacket {
    pub id: PacketId,
    pub source: NodeId,
    pub destination: NodeId,
    pub created_at: SimTime,
    /// Transmissions remaining.
    pub ttl: u32,
    /// Every node that has held the packet, in order.
    pub visited: Vec<NodeId>,
}

/// The per-hop link: reachability is the neighbour relation at send time,
/// latency is a constant plus a symmetric uniform jitter.
#[derive(Debug, Clone)]
pub struct Channel {
    latency: SimDuration,
    jitter_us: i64,
    rng: RngStream,
}

/// The intended receiver was out of range at send time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Undeliverable;

impl Channel {
    pub fn new(latency: SimDuration, jitter: SimDuration, rng: RngStream) -> Self {
        let jitter_us = jitter.as_micros().min(latency.as_micros()) as i64;
        Channel { latency, jitter_us, rng }
    }

    fn delay(&mut self) -> SimDuration {
        let us = self.latency.as_micros() as i64 + self.rng.symmetric(self.jitter_us);
        SimDuration::from_micros(us.max(1) as u64)
    }

    /// Arrival time of a unicast, or `Undeliverable` when `to` is not a neighbour of `from`.
    pub fn deliver(&mut self, from: NodeId, to: NodeId, adjacency: &Adjacency, now: SimTime) -> Result<SimTime, Undeliverable> {
        if adjacency.are_neighbors(from, to) {
            Ok(now + self.delay())
        } else {
            Err(Undeliverable)
        }
    }

    /// One arrival per current neighbour, in neighbour-id order.
    pub fn broadcast(&mut self, from: NodeId, adjacency: &Adjacency, now: SimTime) -> Vec<(NodeId, SimTime)> {
        adjacency
            .neighbors(from)
            .iter()
            .map(|&n| (n, now + self.delay()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkOutcome {
    Unique { delay: SimDuration },
    Duplicate,
}

/// Destination-side accounting; each packet id counts once.
#[derive(Debug, Default)]
pub struct Sink {
    seen: HashSet<PacketId>,
}

impl Sink {
    pub fn receive(&mut self, pkt: &DataPacket, now: SimTime) -> SinkOutcome {
        if self.seen.insert(pkt.id) {
            SinkOutcome::Unique {
                delay: now.saturating_since(pkt.created_at),
            }
        } else {
            SinkOutcome::Duplicate
        }
    }
}
