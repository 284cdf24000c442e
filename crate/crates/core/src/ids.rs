//! Forwarding audit performed by dedicated monitor nodes.
//!
//! A monitor overhears data handoffs. Each handoff to a subject it can hear is
//! recorded as pending; if the monitor later hears the subject re-emit the same
//! packet the handoff is confirmed, otherwise it expires after the confirmation
//! window. A subject that has taken at least `min_packets` settled handoffs and
//! confirmed none of them is reported as a mismatch.
//!
//! The ledger is keyed by `(sender, next_hop, destination)`; an entry exists
//! only for hops over which data was actually handed off.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::mobility::Point;
use crate::time::{SimDuration, SimTime};
use crate::traffic::PacketId;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlacklistEntry {
    pub detected_at: SimTime,
    pub detector: NodeId,
}

/// Nodes known to drop traffic. Entries are never removed during a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blacklist {
    entries: BTreeMap<NodeId, BlacklistEntry>,
}

impl Blacklist {
    /// Returns `false` if `node` was already listed (the entry is left untouched).
    pub fn insert(&mut self, node: NodeId, detected_at: SimTime, detector: NodeId) -> bool {
        if self.entries.contains_key(&node) {
            return false;
        }
        self.entries.insert(node, BlacklistEntry { detected_at, detector });
        true
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.contains_key(&node)
    }

    pub fn get(&self, node: NodeId) -> Option<&BlacklistEntry> {
        self.entries.get(&node)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &BlacklistEntry)> {
        self.entries.iter().map(|(&n, e)| (n, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AuditKey {
    pub sender: NodeId,
    pub next_hop: NodeId,
    pub destination: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AuditCounts {
    pub handed_off: u32,
    pub confirmed: u32,
    /// Handoffs that passed the confirmation window unconfirmed.
    pub expired: u32,
    pub last_audit: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Consistent,
    Mismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditVerdict {
    pub subject: NodeId,
    pub verdict: Verdict,
    /// Settled handoffs (confirmed or expired).
    pub handed_off: u32,
    pub confirmed: u32,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    key: AuditKey,
    at: SimTime,
}

#[derive(Debug, Clone, Default)]
pub struct AuditLedger {
    entries: BTreeMap<AuditKey, AuditCounts>,
    pending: HashMap<PacketId, Pending>,
}

/// One data transmission as seen on the air.
#[derive(Debug, Clone, Copy)]
pub struct Handoff {
    pub packet: PacketId,
    pub destination: NodeId,
    pub sender: NodeId,
    pub sender_pos: Point,
    pub receiver: NodeId,
    pub receiver_pos: Point,
}

/// What a monitor can overhear.
#[derive(Debug, Clone, Copy)]
pub struct Vantage {
    pub monitor: NodeId,
    pub position: Point,
    pub range: f64,
    /// Sees every transmission regardless of distance.
    pub global: bool,
}

impl Vantage {
    pub fn hears(&self, node: NodeId, pos: Point) -> bool {
        self.global || node == self.monitor || pos.distance_sq(self.position) <= self.range * self.range
    }
}

impl AuditLedger {
    pub fn entries(&self) -> impl Iterator<Item = (&AuditKey, &AuditCounts)> {
        self.entries.iter()
    }

    pub fn get(&self, key: &AuditKey) -> Option<&AuditCounts> {
        self.entries.get(key)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    fn counts(&mut self, key: AuditKey) -> &mut AuditCounts {
        self.entries.entry(key).or_default()
    }

    /// Handoff bookkeeping for one overheard transmission.
    ///
    /// Confirms the sender's pending handoff for this packet if the sender is
    /// audible, then opens a new pending handoff for the receiver if the
    /// receiver is audible (so that its re-emission could be heard too).
    /// Handoffs to the packet's destination confirm immediately.
    pub fn observe_forwarding(&mut self, vantage: &Vantage, h: &Handoff, now: SimTime) {
        if vantage.hears(h.sender, h.sender_pos) {
            if let Some(p) = self.pending.get(&h.packet) {
                if p.key.next_hop == h.sender {
                    let key = p.key;
                    self.pending.remove(&h.packet);
                    self.counts(key).confirmed += 1;
                }
            }
        }
        // A monitor does not audit itself.
        if h.receiver == vantage.monitor || !vantage.hears(h.receiver, h.receiver_pos) {
            return;
        }
        let key = AuditKey {
            sender: h.sender,
            next_hop: h.receiver,
            destination: h.destination,
        };
        let c = self.counts(key);
        c.handed_off += 1;
        if h.receiver == h.destination {
            c.confirmed += 1;
        } else {
            self.pending.insert(h.packet, Pending { key, at: now });
        }
    }

    /// Expires pending handoffs older than `window`.
    pub fn settle(&mut self, now: SimTime, window: SimDuration) {
        let mut expired: Vec<(PacketId, AuditKey)> = self
            .pending
            .iter()
            .filter(|(_, p)| now.saturating_since(p.at) > window)
            .map(|(&id, p)| (id, p.key))
            .collect();
        expired.sort();
        for (id, key) in expired {
            self.pending.remove(&id);
            self.counts(key).expired += 1;
        }
    }

    /// Settled `(handed_off, confirmed)` totals for one subject across all keys.
    pub fn settled_for(&self, subject: NodeId) -> (u32, u32) {
        self.entries
            .iter()
            .filter(|(k, _)| k.next_hop == subject)
            .fold((0, 0), |(h, c), (_, v)| (h + v.confirmed + v.expired, c + v.confirmed))
    }

    pub fn subjects(&self) -> BTreeSet<NodeId> {
        self.entries.keys().map(|k| k.next_hop).collect()
    }

    /// Verdict for one subject, or `None` below the evidence threshold.
    pub fn audit_next_hop(&self, subject: NodeId, min_packets: u32) -> Option<AuditVerdict> {
        let (handed_off, confirmed) = self.settled_for(subject);
        if handed_off < min_packets.max(1) {
            return None;
        }
        let verdict = if confirmed == 0 {
            Verdict::Mismatch
        } else {
            Verdict::Consistent
        };
        Some(AuditVerdict {
            subject,
            verdict,
            handed_off,
            confirmed,
        })
    }

    /// Periodic audit: settle, then judge every subject that has enough evidence.
    pub fn audit(&mut self, now: SimTime, window: SimDuration, min_packets: u32) -> Vec<AuditVerdict> {
        self.settle(now, window);
        for c in self.entries.values_mut() {
            c.last_audit = now;
        }
        self.subjects()
            .into_iter()
            .filter_map(|s| self.audit_next_hop(s, min_packets))
            .collect()
    }
}
