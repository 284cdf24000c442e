//! Line-oriented event trace and an independent recount of it.
//!
//! Every line has six whitespace-separated columns:
//!
//! ```text
//! time kind node peer packet detail
//! ```
//!
//! Absent fields are written as `-`; a broadcast peer is `*`. Lines starting
//! with `#` are header comments carrying `key=value` run parameters.
//!
//! | kind | node | peer | packet | detail |
//! |------|------|------|--------|--------|
//! | `snd` | source | destination | id | - |
//! | `fwd` | sender | next hop | id | - |
//! | `rcv` | destination | last hop | id | delay in µs |
//! | `dup` | destination | last hop | id | - |
//! | `drp` | holder | - | id | cause |
//! | `ctl` | sender | receiver or `*` | - | message kind |
//! | `brk` | sender | lost neighbour | - | - |
//! | `dfl` | origin | destination | - | attempts |
//! | `det` | monitor | subject | - | `handed/confirmed` |
//! | `blk` | node | subject | - | detector |
//! | `end` | - | - | - | packets in flight |

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::metrics::Counters;
use crate::node::DropCause;
use crate::routing::message::ControlKind;
use crate::time::SimTime;
use crate::traffic::PacketId;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Send { node: NodeId, dest: NodeId, packet: PacketId },
    Forward { node: NodeId, next_hop: NodeId, packet: PacketId },
    Receive { node: NodeId, from: NodeId, packet: PacketId, delay_us: u64 },
    Duplicate { node: NodeId, from: NodeId, packet: PacketId },
    Drop { node: NodeId, packet: PacketId, cause: DropCause },
    Control { node: NodeId, to: Option<NodeId>, kind: ControlKind },
    LinkBreak { node: NodeId, peer: NodeId },
    DiscoveryFailed { node: NodeId, dest: NodeId, attempts: u32 },
    Detect { node: NodeId, subject: NodeId, handed: u32, confirmed: u32 },
    Blacklist { node: NodeId, subject: NodeId, detector: NodeId },
    End { in_flight: u64 },
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::Send { .. } => "snd",
            TraceEvent::Forward { .. } => "fwd",
            TraceEvent::Receive { .. } => "rcv",
            TraceEvent::Duplicate { .. } => "dup",
            TraceEvent::Drop { .. } => "drp",
            TraceEvent::Control { .. } => "ctl",
            TraceEvent::LinkBreak { .. } => "brk",
            TraceEvent::DiscoveryFailed { .. } => "dfl",
            TraceEvent::Detect { .. } => "det",
            TraceEvent::Blacklist { .. } => "blk",
            TraceEvent::End { .. } => "end",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub event: TraceEvent,
}

const NONE: &str = "-";

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use TraceEvent as E;
        let t = self.time;
        let k = self.event.kind();
        match self.event {
            E::Send { node, dest, packet } => write!(f, "{t} {k} {node} {dest} {packet} {NONE}"),
            E::Forward { node, next_hop, packet } => write!(f, "{t} {k} {node} {next_hop} {packet} {NONE}"),
            E::Receive { node, from, packet, delay_us } => write!(f, "{t} {k} {node} {from} {packet} {delay_us}"),
            E::Duplicate { node, from, packet } => write!(f, "{t} {k} {node} {from} {packet} {NONE}"),
            E::Drop { node, packet, cause } => write!(f, "{t} {k} {node} {NONE} {packet} {}", cause.as_str()),
            E::Control { node, to, kind } => match to {
                Some(to) => write!(f, "{t} {k} {node} {to} {NONE} {kind}"),
                None => write!(f, "{t} {k} {node} * {NONE} {kind}"),
            },
            E::LinkBreak { node, peer } => write!(f, "{t} {k} {node} {peer} {NONE} {NONE}"),
            E::DiscoveryFailed { node, dest, attempts } => write!(f, "{t} {k} {node} {dest} {NONE} {attempts}"),
            E::Detect {
                node,
                subject,
                handed,
                confirmed,
            } => write!(f, "{t} {k} {node} {subject} {NONE} {handed}/{confirmed}"),
            E::Blacklist { node, subject, detector } => write!(f, "{t} {k} {node} {subject} {NONE} {detector}"),
            E::End { in_flight } => write!(f, "{t} {k} {NONE} {NONE} {NONE} {in_flight}"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("trace line {line}: {reason}")]
pub struct TraceError {
    pub line: usize,
    pub reason: String,
}

fn field<T: FromStr>(s: &str, what: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("bad {what} {s:?}"))
}

impl FromStr for TraceRecord {
    type Err = String;
    fn from_str(line: &str) -> Result<Self, Self::Err> {
        use TraceEvent as E;
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [time, kind, node, peer, packet, detail] = cols[..] else {
            return Err(format!("expected 6 columns, found {}", cols.len()));
        };
        let time: SimTime = field(time, "time")?;
        let node_id = || field::<NodeId>(node, "node");
        let peer_id = || field::<NodeId>(peer, "peer");
        let packet_id = || field::<PacketId>(packet, "packet id");
        let event = match kind {
            "snd" => E::Send {
                node: node_id()?,
                dest: peer_id()?,
                packet: packet_id()?,
            },
            "fwd" => E::Forward {
                node: node_id()?,
                next_hop: peer_id()?,
                packet: packet_id()?,
            },
            "rcv" => E::Receive {
                node: node_id()?,
                from: peer_id()?,
                packet: packet_id()?,
                delay_us: field(detail, "delay")?,
            },
            "dup" => E::Duplicate {
                node: node_id()?,
                from: peer_id()?,
                packet: packet_id()?,
            },
            "drp" => E::Drop {
                node: node_id()?,
                packet: packet_id()?,
                cause: detail.parse()?,
            },
            "ctl" => E::Control {
                node: node_id()?,
                to: if peer == "*" { None } else { Some(peer_id()?) },
                kind: detail.parse()?,
            },
            "brk" => E::LinkBreak {
                node: node_id()?,
                peer: peer_id()?,
            },
            "dfl" => E::DiscoveryFailed {
                node: node_id()?,
                dest: peer_id()?,
                attempts: field(detail, "attempts")?,
            },
            "det" => {
                let (h, c) = detail.split_once('/').ok_or_else(|| format!("bad evidence {detail:?}"))?;
                E::Detect {
                    node: node_id()?,
                    subject: peer_id()?,
                    handed: field(h, "handed")?,
                    confirmed: field(c, "confirmed")?,
                }
            }
            "blk" => E::Blacklist {
                node: node_id()?,
                subject: peer_id()?,
                detector: field(detail, "detector")?,
            },
            "end" => E::End {
                in_flight: field(detail, "in-flight count")?,
            },
            other => return Err(format!("unknown event kind {other:?}")),
        };
        Ok(TraceRecord { time, event })
    }
}

/// Parses a `# key=value ...` header line into pairs.
pub fn header_pairs(line: &str) -> Option<Vec<(&str, &str)>> {
    let body = line.strip_prefix('#')?;
    Some(body.split_whitespace().filter_map(|tok| tok.split_once('=')).collect())
}

/// Buffered trace output that remembers the first I/O error.
pub struct TraceWriter {
    out: io::BufWriter<Box<dyn Write + Send>>,
    error: Option<io::Error>,
}

impl TraceWriter {
    pub fn new(out: Box<dyn Write + Send>) -> Self {
        TraceWriter {
            out: io::BufWriter::new(out),
            error: None,
        }
    }

    fn check(&mut self, r: io::Result<()>) {
        if let Err(e) = r {
            self.error.get_or_insert(e);
        }
    }

    pub fn header(&mut self, text: &str) {
        let r = writeln!(self.out, "# {text}");
        self.check(r);
    }

    pub fn record(&mut self, rec: &TraceRecord) {
        let r = writeln!(self.out, "{rec}");
        self.check(r);
    }

    pub fn finish(mut self) -> io::Result<()> {
        let r = self.out.flush();
        self.check(r);
        match self.error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Counters rebuilt from nothing but trace lines.
#[derive(Debug, Clone, Default)]
pub struct Recount {
    pub header: BTreeMap<String, String>,
    pub counters: Counters,
    /// From the `end` line, if present.
    pub in_flight: Option<u64>,
    pub detections: u64,
    lines: usize,
}

impl Recount {
    pub fn feed_line(&mut self, line: &str) -> Result<(), TraceError> {
        self.lines += 1;
        let line = line.trim_end();
        if line.is_empty() {
            return Ok(());
        }
        if let Some(pairs) = header_pairs(line) {
            for (k, v) in pairs {
                self.header.insert(k.to_string(), v.to_string());
            }
            return Ok(());
        }
        let rec: TraceRecord = line.parse().map_err(|reason| TraceError {
            line: self.lines,
            reason,
        })?;
        self.feed(&rec);
        Ok(())
    }

    pub fn feed(&mut self, rec: &TraceRecord) {
        let c = &mut self.counters;
        match rec.event {
            TraceEvent::Send { .. } => c.sent += 1,
            TraceEvent::Receive { delay_us, .. } => c.record_delivery(delay_us),
            TraceEvent::Duplicate { .. } => c.duplicates += 1,
            TraceEvent::Drop { cause, .. } => c.record_drop(cause),
            TraceEvent::Control { kind, .. } => c.record_control(kind),
            TraceEvent::Detect { .. } => self.detections += 1,
            TraceEvent::End { in_flight } => self.in_flight = Some(in_flight),
            _ => {}
        }
    }

    pub fn read(input: impl io::BufRead) -> Result<Recount, RecountError> {
        let mut r = Recount::default();
        for line in input.lines() {
            r.feed_line(&line?)?;
        }
        Ok(r)
    }

    pub fn header_value<T: FromStr>(&self, key: &str) -> Option<T> {
        self.header.get(key)?.parse().ok()
    }
}

#[derive(Debug, Error)]
pub enum RecountError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// A `Write` sink that hands each complete line to a callback, so a trace
/// can be analysed while it is produced without storing it.
pub struct LineTap<F: FnMut(&str)> {
    on_line: F,
    partial: Vec<u8>,
}

impl<F: FnMut(&str)> LineTap<F> {
    pub fn new(on_line: F) -> Self {
        LineTap {
            on_line,
            partial: Vec::new(),
        }
    }
}

impl<F: FnMut(&str)> Write for LineTap<F> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.partial.extend_from_slice(buf);
        let mut start = 0;
        while let Some(pos) = self.partial[start..].iter().position(|&b| b == b'\n') {
            let end = start + pos;
            let line = std::str::from_utf8(&self.partial[start..end]).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            (self.on_line)(line);
            start = end + 1;
        }
        self.partial.drain(..start);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}
