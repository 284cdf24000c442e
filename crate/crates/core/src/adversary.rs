//! Black-hole behaviour: answer every route request with a forged short,
//! fresh route, never relay requests, and swallow all data that arrives.

use crate::node::{Action, Ctx, DropCause, NodeState};
use crate::routing::message::{ControlMessage, Rrep, Rreq};
use crate::traffic::DataPacket;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackerProfile {
    /// Hop count claimed in forged replies.
    pub fake_hop_count: u32,
    /// Added to the highest sequence number seen for the target.
    pub seq_inflation: u32,
}

impl Default for AttackerProfile {
    fn default() -> Self {
        AttackerProfile {
            fake_hop_count: 1,
            seq_inflation: 100,
        }
    }
}

/// Forged reply for a request, built from what the attacker has overheard.
pub fn forge_reply(node: &NodeState, profile: &AttackerProfile, rreq: &Rreq) -> Rrep {
    let seen = node.max_seen_seq.get(&rreq.target).copied().unwrap_or(0).max(rreq.dest_seq);
    Rrep {
        origin: rreq.origin,
        target: rreq.target,
        hop_count: profile.fake_hop_count,
        dest_seq: seen.saturating_add(profile.seq_inflation),
        responder: node.id,
    }
}

pub fn blackhole_control(node: &mut NodeState, ctx: &Ctx, from: NodeId, msg: ControlMessage, out: &mut Vec<Action>) {
    match msg {
        ControlMessage::Rreq(r) => blackhole_rreq(node, ctx, from, r, out),
        ControlMessage::Rrep(r) => node.note_seq(r.target, r.dest_seq),
        ControlMessage::Rerr(_) | ControlMessage::Alert(_) => {}
    }
}

/// Answers each flood once, to the neighbour that delivered the first copy.
pub fn blackhole_rreq(node: &mut NodeState, ctx: &Ctx, from: NodeId, rreq: Rreq, out: &mut Vec<Action>) {
    if rreq.origin == node.id {
        return;
    }
    node.note_seq(rreq.target, rreq.dest_seq);
    node.note_seq(rreq.origin, rreq.origin_seq);
    if !node.mark_seen(rreq.origin, rreq.broadcast_id, rreq.hop_count + 1, ctx) {
        return;
    }
    let reply = forge_reply(node, &ctx.params.attacker, &rreq);
    out.push(Action::Unicast(from, ControlMessage::Rrep(reply)));
}

pub fn blackhole_data(pkt: DataPacket, out: &mut Vec<Action>) {
    out.push(Action::Drop(pkt, DropCause::Attacker));
}
