//! Per-node protocol state and the actions handlers hand back to the simulator.
//!
//! Handlers never touch the network directly: they mutate the node and push
//! [`Action`]s, which the simulator turns into transmissions, timers and
//! metrics. That keeps every routing rule testable without an event loop.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::adversary::AttackerProfile;
use crate::ids::Blacklist;
use crate::routing::message::ControlMessage;
use crate::routing::table::RoutingTable;
use crate::time::{SimDuration, SimTime};
use crate::traffic::DataPacket;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Normal,
    Blackhole,
    IdsMonitor,
}

/// Why a data packet left the network without being delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropCause {
    Attacker,
    Ttl,
    Buffer,
    NoRoute,
}

impl DropCause {
    pub const ALL: [DropCause; 4] = [DropCause::Attacker, DropCause::Ttl, DropCause::Buffer, DropCause::NoRoute];

    pub fn as_str(self) -> &'static str {
        match self {
            DropCause::Attacker => "attacker",
            DropCause::Ttl => "ttl",
            DropCause::Buffer => "buffer",
            DropCause::NoRoute => "no_route",
        }
    }
}

impl std::str::FromStr for DropCause {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DropCause::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown drop cause {s:?}"))
    }
}

/// Protocol constants shared by every node of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub discovery_timeout: SimDuration,
    /// Total route requests sent per discovery before giving up.
    pub retry_limit: u32,
    pub discovery_backoff: f64,
    pub data_ttl: u32,
    pub buffer_capacity: usize,
    pub active_route_lifetime: SimDuration,
    pub rreq_cache_lifetime: SimDuration,
    pub attacker: AttackerProfile,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            discovery_timeout: SimDuration::from_secs_f64(1.0),
            retry_limit: 3,
            discovery_backoff: 2.0,
            data_ttl: 32,
            buffer_capacity: 64,
            active_route_lifetime: SimDuration::from_secs_f64(10.0),
            rreq_cache_lifetime: SimDuration::from_secs_f64(10.0),
            attacker: AttackerProfile::default(),
        }
    }
}

impl ProtocolParams {
    /// Timeout for the `attempt`-th request (1-based) of a discovery.
    pub fn discovery_wait(&self, attempt: u32) -> SimDuration {
        let exp = attempt.saturating_sub(1) as i32;
        self.discovery_timeout.mul_f64(self.discovery_backoff.powi(exp))
    }
}

pub struct Ctx<'a> {
    pub now: SimTime,
    pub params: &'a ProtocolParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Broadcast(ControlMessage),
    Unicast(NodeId, ControlMessage),
    /// Transmit a data packet to a neighbour.
    Handoff(NodeId, DataPacket),
    /// The packet reached its destination (this node).
    Deliver(DataPacket),
    Drop(DataPacket, DropCause),
    ArmTimer { dest: NodeId, attempt: u32, after: SimDuration },
    DisarmTimer { dest: NodeId },
    DiscoveryFailed { dest: NodeId, attempts: u32 },
    /// A route reply could not be forwarded for lack of a reverse route.
    StaleReply,
    Blacklisted { subject: NodeId, detector: NodeId },
}

/// Per-flood duplicate-suppression record.
#[derive(Debug, Clone)]
pub(crate) struct SeenFlood {
    pub expires: SimTime,
    /// Smallest hop count this node has rebroadcast for the flood.
    pub best_hops: u32,
    /// At the target: hop count of the copy last answered, per neighbour.
    pub replied: BTreeMap<NodeId, u32>,
}

/// An in-progress route discovery and the packets waiting on it.
#[derive(Debug, Clone, Default)]
pub struct Discovery {
    pub attempts: u32,
    pub buffer: VecDeque<DataPacket>,
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub role: Role,
    pub table: RoutingTable,
    pub blacklist: Blacklist,
    pub own_seq: u32,
    pub(crate) next_broadcast_id: u32,
    pub(crate) seen: HashMap<(NodeId, u32), SeenFlood>,
    pub(crate) discoveries: BTreeMap<NodeId, Discovery>,
    /// Highest sequence number observed per destination (used by black holes).
    pub(crate) max_seen_seq: BTreeMap<NodeId, u32>,
}

impl NodeState {
    pub fn new(id: NodeId, role: Role) -> Self {
        NodeState {
            id,
            role,
            table: RoutingTable::default(),
            blacklist: Blacklist::default(),
            own_seq: 0,
            next_broadcast_id: 0,
            seen: HashMap::new(),
            discoveries: BTreeMap::new(),
            max_seen_seq: BTreeMap::new(),
        }
    }

    pub fn discovery(&self, dest: NodeId) -> Option<&Discovery> {
        self.discoveries.get(&dest)
    }

    pub fn discoveries(&self) -> impl Iterator<Item = (NodeId, &Discovery)> {
        self.discoveries.iter().map(|(&d, s)| (d, s))
    }

    /// Packets parked while waiting for routes.
    pub fn buffered(&self) -> usize {
        self.discoveries.values().map(|d| d.buffer.len()).sum()
    }

    pub(crate) fn take_broadcast_id(&mut self) -> u32 {
        let id = self.next_broadcast_id;
        self.next_broadcast_id += 1;
        id
    }

    /// Marks a flood as seen. Returns `true` the first time (or after expiry).
    pub(crate) fn mark_seen(&mut self, origin: NodeId, broadcast_id: u32, hops: u32, ctx: &Ctx) -> bool {
        if self.seen.len() > 4096 {
            let now = ctx.now;
            self.seen.retain(|_, s| s.expires > now);
        }
        let fresh = SeenFlood {
            expires: ctx.now + ctx.params.rreq_cache_lifetime,
            best_hops: hops,
            replied: BTreeMap::new(),
        };
        match self.seen.get_mut(&(origin, broadcast_id)) {
            Some(s) if s.expires > ctx.now => false,
            Some(s) => {
                *s = fresh;
                true
            }
            None => {
                self.seen.insert((origin, broadcast_id), fresh);
                true
            }
        }
    }

    pub(crate) fn note_seq(&mut self, node: NodeId, seq: u32) {
        let e = self.max_seen_seq.entry(node).or_insert(0);
        *e = (*e).max(seq);
    }
}
