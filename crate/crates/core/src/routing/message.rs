use std::fmt;

use crate::NodeId;

/// Route request. `hop_count` is the number of hops travelled when sent;
/// a receiver adds one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rreq {
    pub origin: NodeId,
    pub broadcast_id: u32,
    pub target: NodeId,
    pub hop_count: u32,
    pub origin_seq: u32,
    pub dest_seq: u32,
}

/// Route reply travelling back toward `origin` and advertising a route to `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rrep {
    pub origin: NodeId,
    pub target: NodeId,
    pub hop_count: u32,
    pub dest_seq: u32,
    /// Node that generated the reply (the destination, or whoever claims a route).
    pub responder: NodeId,
}

/// Destinations the sender can no longer reach.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rerr {
    pub unreachable: Vec<(NodeId, u32)>,
}

/// Network-wide notice that `subject` was caught dropping traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alert {
    pub origin: NodeId,
    pub broadcast_id: u32,
    pub subject: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlMessage {
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
    Alert(Alert),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControlKind {
    Rreq,
    Rrep,
    Rerr,
    Alert,
}

impl ControlMessage {
    pub fn kind(&self) -> ControlKind {
        match self {
            ControlMessage::Rreq(_) => ControlKind::Rreq,
            ControlMessage::Rrep(_) => ControlKind::Rrep,
            ControlMessage::Rerr(_) => ControlKind::Rerr,
            ControlMessage::Alert(_) => ControlKind::Alert,
        }
    }
}

impl ControlKind {
    pub const ALL: [ControlKind; 4] = [
        ControlKind::Rreq,
        ControlKind::Rrep,
        ControlKind::Rerr,
        ControlKind::Alert,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControlKind::Rreq => "RREQ",
            ControlKind::Rrep => "RREP",
            ControlKind::Rerr => "RERR",
            ControlKind::Alert => "ALERT",
        }
    }
}

impl fmt::Display for ControlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControlKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ControlKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown control kind {s:?}"))
    }
}
