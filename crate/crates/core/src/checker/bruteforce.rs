//! Protocol-blind atomicity oracle: exhaustive search for a register
//! serialization.
//!
//! Given completed operations plus a set of uncompleted writes, the oracle
//! searches subsets of the uncompleted writes (smallest first) and, for
//! each, all orderings consistent with real-time precedence, looking for
//! one in which every read returns the latest preceding write's value.
//! Timestamps are ignored entirely.
//!
//! Long traces are split at quiescent cuts (instants with no operation in
//! flight) into fragments small enough to search. A fragment that is not
//! the first starts from an unknown register value: its reads-before-any-
//! write must merely agree with each other. Fragments above the cap are
//! reported as not checked, never silently passed.

use super::history::{History, OpRecord};
use super::Verdict;
use crate::protocol::Value;
use std::collections::HashSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// The register value at the start of the fragment is known (the run
    /// start: the unwritten initial value).
    Known(Value),
    /// Mid-run fragment: the carried value is some fixed but unknown v0.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum RegState {
    Exact(Value),
    Wild,
    WildFixed(Value),
}

fn apply(op: &OpRecord, state: RegState) -> Option<RegState> {
    if op.is_read() {
        match state {
            RegState::Exact(s) => (op.value == s).then_some(state),
            RegState::Wild => Some(RegState::WildFixed(op.value)),
            RegState::WildFixed(v) => (op.value == v).then_some(state),
        }
    } else {
        Some(RegState::Exact(op.value))
    }
}

fn exists_linearization(ops: &[&OpRecord], initial: InitialState) -> bool {
    let n = ops.len();
    debug_assert!(n <= 30);
    let mut preds = vec![0u32; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && ops[j].precedes(ops[i]) {
                preds[i] |= 1 << j;
            }
        }
    }
    let full: u32 = if n == 0 { 0 } else { (1u32 << n) - 1 };
    let init = match initial {
        InitialState::Known(v) => RegState::Exact(v),
        InitialState::Unknown => RegState::Wild,
    };
    let mut memo: HashSet<(u32, RegState)> = HashSet::new();

    fn rec(
        ops: &[&OpRecord],
        preds: &[u32],
        full: u32,
        done: u32,
        state: RegState,
        memo: &mut HashSet<(u32, RegState)>,
    ) -> bool {
        if done == full {
            return true;
        }
        if !memo.insert((done, state)) {
            return false;
        }
        for i in 0..ops.len() {
            let bit = 1u32 << i;
            if done & bit != 0 || preds[i] & !done != 0 {
                continue;
            }
            if let Some(next) = apply(ops[i], state) {
                if rec(ops, preds, full, done | bit, next, memo) {
                    return true;
                }
            }
        }
        false
    }

    rec(ops, &preds, full, 0, init, &mut memo)
}

/// The exhaustive check over one history fragment. `cap` bounds the total
/// number of operations considered (completed plus pending writes).
pub fn check_atomicity_bruteforce(
    completed: &[&OpRecord],
    pending_writes: &[&OpRecord],
    initial: InitialState,
    cap: usize,
) -> Verdict {
    let total = completed.len() + pending_writes.len();
    if total > cap {
        return Verdict::NotChecked {
            reason: format!("{total} operations exceed the search cap {cap}"),
        };
    }
    let p = pending_writes.len();
    let mut masks: Vec<u32> = (0..(1u32 << p)).collect();
    masks.sort_by_key(|m| m.count_ones());
    for mask in masks {
        let mut ops: Vec<&OpRecord> = completed.to_vec();
        for (i, w) in pending_writes.iter().enumerate() {
            if mask & (1 << i) != 0 {
                ops.push(w);
            }
        }
        if exists_linearization(&ops, initial) {
            return Verdict::Pass;
        }
    }
    let ids: Vec<String> = completed.iter().map(|o| o.id.to_string()).collect();
    Verdict::fail(format!(
        "no register serialization exists for operations [{}] with any subset of {} pending writes",
        ids.join(", "),
        p,
    ))
}

/// One quiescently-cut fragment of a history.
pub struct Fragment<'a> {
    pub completed: Vec<&'a OpRecord>,
    pub pending_writes: Vec<&'a OpRecord>,
    pub initial: InitialState,
}

/// Splits a history at quiescent cuts: a cut is an instant strictly after
/// every earlier operation's response and strictly before every later
/// operation's invocation, with nothing in flight across it. The first
/// fragment starts from the known initial value; later fragments start
/// unknown. An uncompleted write is never quiescent, so it forecloses all
/// later cuts.
pub fn decompose<'a>(h: &'a History) -> Vec<Fragment<'a>> {
    let mut ops: Vec<&OpRecord> = h
        .ops
        .iter()
        .filter(|op| op.completed() || !op.is_read())
        .collect();
    ops.sort_by_key(|op| (op.invoke, op.id));

    let mut fragments = Vec::new();
    let mut current: Vec<&OpRecord> = Vec::new();
    let mut horizon: Option<u64> = Some(0); // None once something pends forever
    let mut first = true;
    for op in ops {
        let quiescent = match horizon {
            Some(h) => !current.is_empty() && h < op.invoke,
            None => false,
        };
        if quiescent {
            fragments.push(make_fragment(std::mem::take(&mut current), first));
            first = false;
        }
        horizon = match (horizon, op.response) {
            (Some(h), Some(r)) => Some(h.max(r)),
            _ => None,
        };
        current.push(op);
    }
    if !current.is_empty() {
        fragments.push(make_fragment(current, first));
    }
    fragments
}

fn make_fragment(ops: Vec<&OpRecord>, first: bool) -> Fragment<'_> {
    let (completed, pending_writes): (Vec<&OpRecord>, Vec<&OpRecord>) =
        ops.into_iter().partition(|op| op.completed());
    Fragment {
        completed,
        pending_writes,
        initial: if first { InitialState::Known(None) } else { InitialState::Unknown },
    }
}

/// Runs the oracle over a trace history: whole when it fits the cap,
/// otherwise fragment by fragment. Returns the aggregate verdict plus how
/// many fragments were searched and skipped.
pub fn check_trace_fragments(h: &History, cap: usize) -> (Verdict, u64, u64) {
    let completed = h.completed();
    let pending = h.uncompleted_writes();
    if completed.len() + pending.len() <= cap {
        let v = check_atomicity_bruteforce(&completed, &pending, InitialState::Known(None), cap);
        return (v, 1, 0);
    }
    let mut checked = 0;
    let mut skipped = 0;
    for frag in decompose(h) {
        match check_atomicity_bruteforce(&frag.completed, &frag.pending_writes, frag.initial, cap)
        {
            Verdict::Pass => checked += 1,
            v @ Verdict::Fail { .. } => return (v, checked, skipped),
            Verdict::NotChecked { .. } => skipped += 1,
        }
    }
    let verdict = if skipped > 0 {
        Verdict::NotChecked { reason: format!("{skipped} fragments above the search cap") }
    } else {
        Verdict::Pass
    };
    (verdict, checked, skipped)
}
