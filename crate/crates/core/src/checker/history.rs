//! Projection of a trace to operation records.
//!
//! The checked set contains completed reads and every write that broadcast
//! its update (its write phase started), whether or not it completed.
//! Reads that never returned are dropped; writes that never reached their
//! write phase are dropped from the witness set but remain available to
//! the exhaustive oracle as optional pending writes.

use crate::network::Tick;
use crate::protocol::{NodeId, Timestamp, Value};
use crate::trace::{OpLabel, PhaseLabel, Record, Trace};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OpId {
    pub node: NodeId,
    pub tag: u64,
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.node, self.tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRecord {
    pub id: OpId,
    pub kind: OpLabel,
    /// The value written (writes) or returned (reads).
    pub value: Value,
    pub invoke: Tick,
    pub response: Option<Tick>,
    /// Timestamp at read-phase end.
    pub ts_rp: Option<Timestamp>,
    /// Timestamp at write-phase start; present iff the update was broadcast.
    pub ts_wp: Option<Timestamp>,
    /// When the read phase reached its quorum (the write phase starts at
    /// the same instant).
    pub rp_end_t: Option<Tick>,
}

impl OpRecord {
    pub fn completed(&self) -> bool {
        self.response.is_some()
    }

    pub fn is_read(&self) -> bool {
        self.kind == OpLabel::Read
    }

    /// The operation timestamp: read phase for reads, write phase for
    /// writes.
    pub fn ts(&self) -> Option<Timestamp> {
        match self.kind {
            OpLabel::Read => self.ts_rp,
            OpLabel::Write => self.ts_wp,
        }
    }

    /// Real-time precedence: `self` finished strictly before `other`
    /// started, or both ran at the same node (per-node program order).
    pub fn precedes(&self, other: &OpRecord) -> bool {
        if self.id.node == other.id.node {
            return self.id.tag < other.id.tag;
        }
        match self.response {
            Some(r) => r < other.invoke,
            None => false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct History {
    pub ops: Vec<OpRecord>,
}

impl History {
    /// Completed reads plus writes that broadcast their update.
    pub fn witness_set(&self) -> Vec<&OpRecord> {
        self.ops
            .iter()
            .filter(|op| match op.kind {
                OpLabel::Read => op.completed(),
                OpLabel::Write => op.ts_wp.is_some(),
            })
            .collect()
    }

    pub fn completed(&self) -> Vec<&OpRecord> {
        self.ops.iter().filter(|op| op.completed()).collect()
    }

    pub fn uncompleted_writes(&self) -> Vec<&OpRecord> {
        self.ops
            .iter()
            .filter(|op| op.kind == OpLabel::Write && !op.completed())
            .collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HistoryError {
    #[error("duplicate invocation {0}")]
    DuplicateInvoke(OpId),
    #[error("{kind} for unknown operation {id}", kind = .kind, id = .id)]
    Orphan { kind: &'static str, id: OpId },
    #[error("write {0} lacks a value")]
    WriteWithoutValue(OpId),
    #[error("operation {0} responded before it was invoked")]
    ResponseBeforeInvoke(OpId),
    #[error("write {id} has write-phase timestamp {got} but read phase saw {rp}")]
    BadWriteTimestamp { id: OpId, got: Timestamp, rp: Timestamp },
}

/// Builds the history from a trace, validating the per-operation record
/// structure as it goes.
pub fn extract_history(trace: &Trace) -> Result<History, HistoryError> {
    let mut ops: BTreeMap<OpId, OpRecord> = BTreeMap::new();
    for r in &trace.records {
        match r {
            Record::Invoke { t, node, tag, op, val } => {
                let id = OpId { node: *node, tag: *tag };
                if *op == OpLabel::Write && val.is_none() {
                    return Err(HistoryError::WriteWithoutValue(id));
                }
                let rec = OpRecord {
                    id,
                    kind: *op,
                    value: *val,
                    invoke: *t,
                    response: None,
                    ts_rp: None,
                    ts_wp: None,
                    rp_end_t: None,
                };
                if ops.insert(id, rec).is_some() {
                    return Err(HistoryError::DuplicateInvoke(id));
                }
            }
            Record::Phase { t, node, tag, phase, ts } => {
                let id = OpId { node: *node, tag: *tag };
                let op = ops
                    .get_mut(&id)
                    .ok_or(HistoryError::Orphan { kind: "phase record", id })?;
                match phase {
                    PhaseLabel::Rp => {
                        op.ts_rp = Some(*ts);
                        op.rp_end_t = Some(*t);
                    }
                    PhaseLabel::Wp => {
                        if op.kind == OpLabel::Write {
                            let rp = op.ts_rp.unwrap_or(Timestamp::INITIAL);
                            let expect = Timestamp::new(rp.seq + 1, id.node);
                            if *ts != expect {
                                return Err(HistoryError::BadWriteTimestamp {
                                    id,
                                    got: *ts,
                                    rp,
                                });
                            }
                        }
                        op.ts_wp = Some(*ts);
                    }
                }
            }
            Record::Resp { t, node, tag, val, .. } => {
                let id = OpId { node: *node, tag: *tag };
                let op = ops
                    .get_mut(&id)
                    .ok_or(HistoryError::Orphan { kind: "response", id })?;
                if *t < op.invoke {
                    return Err(HistoryError::ResponseBeforeInvoke(id));
                }
                op.response = Some(*t);
                if op.kind == OpLabel::Read {
                    op.value = *val;
                }
            }
            _ => {}
        }
    }
    Ok(History { ops: ops.into_values().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn op(
        node: u32,
        tag: u64,
        kind: OpLabel,
        value: Value,
        invoke: Tick,
        response: Option<Tick>,
        ts_rp: Option<Timestamp>,
        ts_wp: Option<Timestamp>,
    ) -> OpRecord {
        OpRecord {
            id: OpId { node: NodeId(node), tag },
            kind,
            value,
            invoke,
            response,
            ts_rp,
            ts_wp,
            rp_end_t: None,
        }
    }

    #[test]
    fn witness_set_selects_t() {
        // Three completed writes, one write that crashed before its update
        // broadcast, two completed reads, one unfinished read.
        let ts = |s, i| Some(Timestamp::new(s, NodeId(i)));
        let h = History {
            ops: vec![
                op(1, 1, OpLabel::Write, Some(10), 0, Some(5), Some(Timestamp::INITIAL), ts(1, 1)),
                op(2, 1, OpLabel::Write, Some(20), 1, Some(9), Some(Timestamp::new(1, NodeId(1))), ts(2, 2)),
                op(3, 1, OpLabel::Write, Some(30), 2, Some(12), Some(Timestamp::new(2, NodeId(2))), ts(3, 3)),
                op(4, 1, OpLabel::Write, Some(40), 3, None, None, None), // crashed early
                op(5, 1, OpLabel::Read, Some(30), 13, Some(15), ts(3, 3), ts(3, 3)),
                op(6, 1, OpLabel::Read, Some(30), 14, Some(16), ts(3, 3), ts(3, 3)),
                op(7, 1, OpLabel::Read, None, 15, None, None, None), // crashed mid-read
            ],
        };
        assert_eq!(h.witness_set().len(), 5);
        assert_eq!(h.uncompleted_writes().len(), 1);
        assert_eq!(h.completed().len(), 5);
    }

    #[test]
    fn precedence_uses_program_order_within_a_node() {
        let a = op(1, 1, OpLabel::Write, Some(1), 0, Some(10), None, None);
        let b = op(1, 2, OpLabel::Read, None, 10, Some(20), None, None);
        let c = op(2, 1, OpLabel::Read, None, 10, Some(11), None, None);
        // Same node, same tick boundary: program order still applies.
        assert!(a.precedes(&b));
        assert!(!b.precedes(&a));
        // Cross-node with touching times: concurrent.
        assert!(!a.precedes(&c));
        assert!(!c.precedes(&a));
        // Strictly later start: ordered.
        let d = op(3, 1, OpLabel::Read, None, 11, Some(12), None, None);
        assert!(a.precedes(&d));
    }
}
