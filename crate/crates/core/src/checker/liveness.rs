//! Join liveness and operation liveness.
//!
//! Join liveness: every entrant still active two delay bounds after its
//! enter signal must have joined by then. Operation liveness: every
//! operation whose invoker stays active completes, with each phase inside
//! two delay bounds and the whole operation inside four. Entrants and
//! operations whose deadline falls past the end of the run are censored,
//! not failed.

use super::history::extract_history;
use super::Verdict;
use crate::adversary::SignalKind;
use crate::network::Tick;
use crate::protocol::NodeId;
use crate::trace::{Record, Trace};
use std::collections::BTreeMap;

struct NodeTimes {
    enters: BTreeMap<NodeId, Tick>,
    joins: BTreeMap<NodeId, Tick>,
    /// First crash or leave per node; absent means active to the end.
    departures: BTreeMap<NodeId, Tick>,
}

fn node_times(trace: &Trace) -> NodeTimes {
    let mut enters = BTreeMap::new();
    let mut joins = BTreeMap::new();
    let mut departures = BTreeMap::new();
    for r in &trace.records {
        match r {
            Record::Signal { t, sig } => match sig {
                SignalKind::Enter { node } => {
                    enters.entry(*node).or_insert(*t);
                }
                SignalKind::Crash { node } | SignalKind::Leave { node, .. } => {
                    departures.entry(*node).or_insert(*t);
                }
            },
            Record::Join { t, node } => {
                joins.entry(*node).or_insert(*t);
            }
            _ => {}
        }
    }
    NodeTimes { enters, joins, departures }
}

/// Every entrant still active at `t_e + 2D` has a join record by then.
pub fn check_join_liveness(trace: &Trace) -> Verdict {
    let d = trace.header.config.system.d_ticks;
    let duration = trace.header.config.duration_ticks;
    let times = node_times(trace);
    for (&node, &t_e) in &times.enters {
        let deadline = t_e + 2 * d;
        if deadline > duration {
            continue; // not observable within the run
        }
        if times.departures.get(&node).is_some_and(|&dep| dep <= deadline) {
            continue; // not active at the deadline
        }
        match times.joins.get(&node) {
            Some(&t_j) if t_j <= deadline => {}
            Some(&t_j) => {
                return Verdict::fail(format!(
                    "{node} entered at {t_e} and stayed active but joined at {t_j} > {deadline}"
                ));
            }
            None => {
                return Verdict::fail(format!(
                    "{node} entered at {t_e}, stayed active, and never joined by {deadline}"
                ));
            }
        }
    }
    Verdict::Pass
}

/// Every operation by a continuously active invoker completes; each phase
/// takes at most `2D` and the whole operation at most `4D`.
pub fn check_op_liveness(trace: &Trace) -> Verdict {
    let d = trace.header.config.system.d_ticks;
    let duration = trace.header.config.duration_ticks;
    let history = match extract_history(trace) {
        Ok(h) => h,
        Err(e) => return Verdict::fail(format!("malformed trace: {e}")),
    };
    let times = node_times(trace);

    for op in &history.ops {
        let node = op.id.node;
        match op.response {
            Some(resp) => {
                // Completed: the invoker was necessarily active throughout,
                // so the bounds must hold unconditionally.
                let rp_end = match op.rp_end_t {
                    Some(t) => t,
                    None => {
                        return Verdict::fail(format!(
                            "{} completed without a recorded read-phase end",
                            op.id
                        ))
                    }
                };
                if rp_end - op.invoke > 2 * d {
                    return Verdict::fail(format!(
                        "{} read phase took {} > 2D",
                        op.id,
                        rp_end - op.invoke
                    ));
                }
                if resp - rp_end > 2 * d {
                    return Verdict::fail(format!(
                        "{} write phase took {} > 2D",
                        op.id,
                        resp - rp_end
                    ));
                }
                if resp - op.invoke > 4 * d {
                    return Verdict::fail(format!(
                        "{} took {} > 4D end to end",
                        op.id,
                        resp - op.invoke
                    ));
                }
            }
            None => {
                let deadline = op.invoke + 4 * d;
                if deadline > duration {
                    continue; // censored at the end of the run
                }
                if times.departures.get(&node).is_some_and(|&dep| dep <= deadline) {
                    continue; // invoker did not remain active
                }
                return Verdict::fail(format!(
                    "{} invoked at {} by a continuously active node never completed by {}",
                    op.id, op.invoke, deadline
                ));
            }
        }
    }
    Verdict::Pass
}
