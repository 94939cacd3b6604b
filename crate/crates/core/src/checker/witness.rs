//! Atomicity checking by reconstructing the total order implied by the
//! recorded phase timestamps.
//!
//! Writes are sorted by their unique write-phase timestamps. Reads with the
//! initial timestamp go first and must return the unwritten initial value;
//! every other read goes immediately after the write whose timestamp it
//! carries and must return that write's value. Reads between the same two
//! writes are ordered by start time. The constructed order is then verified
//! with no shortcuts: a full register walk (every read returns the latest
//! preceding write's value) and a full real-time sweep (no operation that
//! finished before another started is placed after it).

use super::history::{History, OpRecord};
use super::Verdict;
use crate::protocol::Timestamp;
use std::collections::BTreeMap;

pub fn check_atomicity_witness(h: &History) -> Verdict {
    let ops = h.witness_set();
    let mut writes: Vec<&OpRecord> = Vec::new();
    let mut reads: Vec<&OpRecord> = Vec::new();
    for op in ops {
        if op.ts().is_none() {
            return Verdict::fail(format!("operation {} lacks a phase timestamp", op.id));
        }
        if op.is_read() {
            reads.push(op);
        } else {
            writes.push(op);
        }
    }

    writes.sort_by_key(|w| (w.ts(), w.id));
    for pair in writes.windows(2) {
        if pair[0].ts() == pair[1].ts() {
            return Verdict::fail(format!(
                "writes {} and {} share timestamp {}",
                pair[0].id,
                pair[1].id,
                pair[0].ts().unwrap()
            ));
        }
    }

    let mut initial_reads: Vec<&OpRecord> = Vec::new();
    let mut buckets: BTreeMap<Timestamp, Vec<&OpRecord>> = BTreeMap::new();
    let known: BTreeMap<Timestamp, &OpRecord> =
        writes.iter().map(|w| (w.ts().unwrap(), *w)).collect();
    for r in reads {
        let ts = r.ts().unwrap();
        if ts == Timestamp::INITIAL {
            initial_reads.push(r);
        } else if known.contains_key(&ts) {
            buckets.entry(ts).or_default().push(r);
        } else {
            return Verdict::fail(format!(
                "read {} carries timestamp {} that matches no write",
                r.id, ts
            ));
        }
    }

    initial_reads.sort_by_key(|r| (r.invoke, r.id));
    let mut order: Vec<&OpRecord> = initial_reads;
    for w in &writes {
        order.push(w);
        if let Some(bucket) = buckets.get_mut(&w.ts().unwrap()) {
            bucket.sort_by_key(|r| (r.invoke, r.id));
            order.append(bucket);
        }
    }

    // Register walk.
    let mut state = None;
    for op in &order {
        if op.is_read() {
            if op.value != state {
                return Verdict::fail(format!(
                    "read {} returns {:?} but the latest preceding write holds {:?}",
                    op.id, op.value, state
                ));
            }
        } else {
            state = op.value;
        }
    }

    // Real-time sweep over every ordered pair.
    for i in 0..order.len() {
        for j in (i + 1)..order.len() {
            if order[j].precedes(order[i]) {
                return Verdict::fail(format!(
                    "real-time edge violated: {} (done@{}) precedes {} (start@{}) in real \
                     time but follows it in the constructed order",
                    order[j].id,
                    order[j].response.map(|t| t.to_string()).unwrap_or_else(|| "?".into()),
                    order[i].id,
                    order[i].invoke,
                ));
            }
        }
    }

    Verdict::Pass
}
