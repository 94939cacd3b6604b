//! The trace: an append-only record of everything that happened in a run,
//! written as JSON Lines with a header line. Traces are the simulation's
//! ground truth; every checker works from them and any run can be replayed
//! bit-exactly from its trace.

use crate::adversary::SignalKind;
use crate::network::Tick;
use crate::protocol::{MessageKind, NodeId, Timestamp, Value};
use crate::scenarios::ScenarioConfig;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

pub const TRACE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: u32,
    pub version: String,
    pub config_hash: String,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpLabel {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseLabel {
    /// Read phase end.
    Rp,
    /// Write phase start.
    Wp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSnap {
    pub id: NodeId,
    pub joined: bool,
    pub present: u64,
    pub members: u64,
    pub ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "k", rename_all = "kebab-case")]
pub enum Record {
    /// Initial membership; these nodes are joined at time zero.
    Setup { t: Tick, s0: Vec<NodeId> },
    /// An adversary signal (enter, leave, crash).
    Signal {
        t: Tick,
        #[serde(flatten)]
        sig: SignalKind,
    },
    /// A broadcast sent by `from`; `id` indexes the message registry.
    Bcast { t: Tick, id: u64, from: NodeId, msg: MessageKind },
    /// An actual delivery of broadcast `id` to `to`. Deliveries dropped by
    /// crash or halt never appear.
    Deliver { t: Tick, id: u64, to: NodeId },
    /// Node broadcast its joined message at `t`.
    Join { t: Tick, node: NodeId },
    /// Operation invocation; `val` is the value written, absent for reads.
    Invoke {
        t: Tick,
        node: NodeId,
        tag: u64,
        op: OpLabel,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        val: Option<u64>,
    },
    /// A phase boundary with its protocol timestamp: read-phase end or
    /// write-phase start.
    Phase { t: Tick, node: NodeId, tag: u64, phase: PhaseLabel, ts: Timestamp },
    /// Operation completion; `val` is the value returned (reads only;
    /// `null` is the unwritten initial value).
    Resp { t: Tick, node: NodeId, tag: u64, op: OpLabel, val: Value },
    /// Periodic model/node state sample.
    Snap { t: Tick, n: u64, crashed: u64, nodes: Vec<NodeSnap> },
}

impl Record {
    pub fn time(&self) -> Tick {
        match self {
            Record::Setup { t, .. }
            | Record::Signal { t, .. }
            | Record::Bcast { t, .. }
            | Record::Deliver { t, .. }
            | Record::Join { t, .. }
            | Record::Invoke { t, .. }
            | Record::Phase { t, .. }
            | Record::Resp { t, .. }
            | Record::Snap { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<Record>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {err}")]
    Parse { line: usize, err: serde_json::Error },
    #[error("empty trace file")]
    Empty,
    #[error("unsupported trace schema {0}")]
    Schema(u32),
    #[error("malformed trace: {0}")]
    Malformed(String),
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        out.push_str(&serde_json::to_string(&self.header).expect("header serializes"));
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        w.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut lines = r.lines();
        let header_line = lines.next().ok_or(TraceError::Empty)??;
        let header: TraceHeader = serde_json::from_str(&header_line)
            .map_err(|err| TraceError::Parse { line: 1, err })?;
        if header.schema != TRACE_SCHEMA {
            return Err(TraceError::Schema(header.schema));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line).map_err(|err| TraceError::Parse { line: i + 2, err })?,
            );
        }
        Ok(Trace { header, records })
    }

    /// Structural sanity: non-decreasing times, responses matched by
    /// invocations, joins preceded by enters (or initial membership).
    pub fn validate(&self) -> Result<(), TraceError> {
        let mut last = 0;
        let mut s0: Vec<NodeId> = Vec::new();
        let mut entered: std::collections::BTreeSet<NodeId> = Default::default();
        let mut invoked: std::collections::BTreeSet<(NodeId, u64)> = Default::default();
        for r in &self.records {
            let t = r.time();
            if t < last {
                return Err(TraceError::Malformed(format!(
                    "record time {t} precedes {last}"
                )));
            }
            last = t;
            match r {
                Record::Setup { s0: init, .. } => {
                    s0 = init.clone();
                    entered.extend(init.iter().copied());
                }
                Record::Signal { sig: SignalKind::Enter { node }, .. } => {
                    entered.insert(*node);
                }
                Record::Join { node, t } => {
                    if !entered.contains(node) {
                        return Err(TraceError::Malformed(format!(
                            "join of {node} at {t} without enter"
                        )));
                    }
                }
                Record::Invoke { node, tag, .. } => {
                    invoked.insert((*node, *tag));
                }
                Record::Resp { node, tag, t, .. } => {
                    if !invoked.contains(&(*node, *tag)) {
                        return Err(TraceError::Malformed(format!(
                            "response of {node} tag {tag} at {t} without invoke"
                        )));
                    }
                }
                _ => {}
            }
        }
        let _ = s0;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::presets;

    #[test]
    fn jsonl_round_trip() {
        let cfg = presets::calm(3);
        let header = TraceHeader {
            schema: TRACE_SCHEMA,
            version: "0.0.0".into(),
            config_hash: "abc".into(),
            config: cfg,
        };
        let records = vec![
            Record::Setup { t: 0, s0: vec![NodeId(0), NodeId(1)] },
            Record::Signal { t: 5, sig: SignalKind::Enter { node: NodeId(2) } },
            Record::Bcast { t: 5, id: 0, from: NodeId(2), msg: MessageKind::Enter },
            Record::Deliver { t: 17, id: 0, to: NodeId(0) },
            Record::Join { t: 30, node: NodeId(2) },
            Record::Invoke { t: 40, node: NodeId(0), tag: 1, op: OpLabel::Write, val: Some(7) },
            Record::Phase { t: 55, node: NodeId(0), tag: 1, phase: PhaseLabel::Rp, ts: Timestamp::INITIAL },
            Record::Resp { t: 90, node: NodeId(0), tag: 1, op: OpLabel::Write, val: None },
            Record::Snap {
                t: 100,
                n: 3,
                crashed: 0,
                nodes: vec![NodeSnap {
                    id: NodeId(0),
                    joined: true,
                    present: 3,
                    members: 3,
                    ts: Timestamp::new(1, NodeId(0)),
                }],
            },
        ];
        let trace = Trace { header, records };
        trace.validate().unwrap();
        let text = trace.to_jsonl();
        let parsed = Trace::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(parsed, trace);
        // Serialization is stable.
        assert_eq!(parsed.to_jsonl(), text);
    }

    #[test]
    fn validate_rejects_orphan_response() {
        let cfg = presets::calm(3);
        let header = TraceHeader {
            schema: TRACE_SCHEMA,
            version: "0.0.0".into(),
            config_hash: "abc".into(),
            config: cfg,
        };
        let trace = Trace {
            header,
            records: vec![Record::Resp {
                t: 1,
                node: NodeId(0),
                tag: 1,
                op: OpLabel::Read,
                val: None,
            }],
        };
        assert!(trace.validate().is_err());
    }
}
