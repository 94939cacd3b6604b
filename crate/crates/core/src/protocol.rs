//! The node state machine, written as a pure transition function:
//! `(state, input) -> (state, outputs)`.
//!
//! Each node runs three conceptual threads: membership code that maintains
//! the `Changes` set (enter/join/leave events it knows about), client code
//! that drives two-phase read/write operations, and server code that stores
//! a replica of the register. Handler execution is atomic per input event,
//! so the three threads collapse into one transition function here.
//!
//! A joining node counts enter-echo responses until its counter reaches
//! `join_bound = gamma * |Present|`, where `Present` is derived from
//! `Changes`. An operation's phase completes when `heard_from` reaches
//! `quorum_size = beta * |Members|`. Both bounds are kept as exact rationals
//! and compared without rounding.

use num_rational::Rational64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Totally ordered node identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Register value; `None` is the distinguished unwritten initial value.
pub type Value = Option<u64>;

/// `(seq, id)` pair ordered lexicographically. The initial timestamp is
/// `(0, None)`; `None` orders below every real id, so derived ordering on
/// the field pair is exactly the protocol order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct Timestamp {
    pub seq: u64,
    pub id: Option<NodeId>,
}

impl Timestamp {
    pub const INITIAL: Timestamp = Timestamp { seq: 0, id: None };

    pub fn new(seq: u64, id: NodeId) -> Self {
        Timestamp { seq, id: Some(id) }
    }

    pub fn is_initial(&self) -> bool {
        *self == Timestamp::INITIAL
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.id {
            Some(id) => write!(f, "({},{})", self.seq, id),
            None => write!(f, "({},_)", self.seq),
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Enter,
    Join,
    Leave,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ChangeEvent {
    pub node: NodeId,
    pub kind: ChangeKind,
}

pub fn enter(node: NodeId) -> ChangeEvent {
    ChangeEvent { node, kind: ChangeKind::Enter }
}
pub fn join(node: NodeId) -> ChangeEvent {
    ChangeEvent { node, kind: ChangeKind::Join }
}
pub fn leave(node: NodeId) -> ChangeEvent {
    ChangeEvent { node, kind: ChangeKind::Leave }
}

/// Grow-only set of enter/join/leave events with the two derived views.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChangesSet(pub BTreeSet<ChangeEvent>);

impl ChangesSet {
    pub fn insert(&mut self, ev: ChangeEvent) {
        self.0.insert(ev);
    }

    pub fn contains(&self, ev: &ChangeEvent) -> bool {
        self.0.contains(ev)
    }

    pub fn merge(&mut self, other: &ChangesSet) {
        for ev in &other.0 {
            self.0.insert(*ev);
        }
    }

    /// Nodes that entered and have not left, as far as this set knows.
    pub fn present(&self) -> BTreeSet<NodeId> {
        self.view(ChangeKind::Enter)
    }

    /// Nodes that joined and have not left, as far as this set knows.
    pub fn members(&self) -> BTreeSet<NodeId> {
        self.view(ChangeKind::Join)
    }

    fn view(&self, kind: ChangeKind) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        for ev in &self.0 {
            if ev.kind == kind {
                out.insert(ev.node);
            }
        }
        for ev in &self.0 {
            if ev.kind == ChangeKind::Leave {
                out.remove(&ev.node);
            }
        }
        out
    }

    pub fn present_count(&self) -> u64 {
        self.present().len() as u64
    }

    pub fn members_count(&self) -> u64 {
        self.members().len() as u64
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Protocol messages. Payloads carry exactly what the handlers broadcast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Enter { node: NodeId },
    EnterEcho { changes: Arc<ChangesSet>, val: Value, ts: Timestamp, joined: bool, dest: NodeId },
    Joined { node: NodeId },
    JoinedEcho { node: NodeId },
    Leave { node: NodeId },
    LeaveEcho { node: NodeId },
    Query { tag: u64, client: NodeId },
    Response { val: Value, ts: Timestamp, tag: u64, client: NodeId },
    Update { val: Value, ts: Timestamp, tag: u64, client: NodeId },
    Ack { tag: u64, client: NodeId },
    UpdateEcho { val: Value, ts: Timestamp },
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Enter { .. } => MessageKind::Enter,
            Message::EnterEcho { .. } => MessageKind::EnterEcho,
            Message::Joined { .. } => MessageKind::Joined,
            Message::JoinedEcho { .. } => MessageKind::JoinedEcho,
            Message::Leave { .. } => MessageKind::Leave,
            Message::LeaveEcho { .. } => MessageKind::LeaveEcho,
            Message::Query { .. } => MessageKind::Query,
            Message::Response { .. } => MessageKind::Response,
            Message::Update { .. } => MessageKind::Update,
            Message::Ack { .. } => MessageKind::Ack,
            Message::UpdateEcho { .. } => MessageKind::UpdateEcho,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    Enter,
    EnterEcho,
    Joined,
    JoinedEcho,
    Leave,
    LeaveEcho,
    Query,
    Response,
    Update,
    Ack,
    UpdateEcho,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    Read,
    Write(u64),
}

impl OpKind {
    pub fn is_read(&self) -> bool {
        matches!(self, OpKind::Read)
    }
}

/// Inputs a node can experience: adversary signals, operation invocations
/// from the user, and message deliveries from the network.
#[derive(Debug, Clone)]
pub enum Input {
    EnterSignal,
    /// `node == self` is a voluntary leave; otherwise a forced leave
    /// broadcast on behalf of a crashed node.
    LeaveSignal { node: NodeId },
    Invoke(OpKind),
    Deliver(Arc<Message>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    Broadcast(Message),
    OpResponse(OpOutcome),
    JoinedNotice,
    /// Read phase reached its quorum; carries the phase timestamp.
    ReadPhaseEnd(Timestamp),
    /// Write phase update was broadcast; carries the phase timestamp.
    WritePhaseStart(Timestamp),
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpOutcome {
    ReadReturn(Value),
    WriteAck,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("input delivered to a halted node")]
    Halted,
    #[error("operation invoked on a node that has not joined")]
    NotJoined,
    #[error("operation invoked while another operation is pending")]
    Busy,
}

/// Full per-node protocol state. Snapshots serialize to JSON for trace
/// debugging.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeState {
    pub me: NodeId,
    /// Join bound fraction; fixed for the run.
    pub gamma: Rational64,
    /// Quorum bound fraction; fixed for the run.
    pub beta: Rational64,

    pub is_joined: bool,
    pub join_counter: u64,
    /// Zero means "not yet computed".
    pub join_bound: Rational64,
    pub changes: ChangesSet,

    pub val: Value,
    pub ts: Timestamp,

    pub temp: Value,
    pub tag: u64,
    pub quorum_size: Rational64,
    pub heard_from: u64,
    pub rp_pending: bool,
    pub wp_pending: bool,
    pub read_pending: bool,
    pub write_pending: bool,

    pub halted: bool,
}

/// Builds the state a node starts with. Nodes in the initial set start
/// joined, with `Changes` holding enter and join events for the whole set:
/// a static system must be able to answer queries from time zero.
pub fn init_state(
    me: NodeId,
    in_s0: bool,
    s0: &BTreeSet<NodeId>,
    gamma: Rational64,
    beta: Rational64,
) -> NodeState {
    let mut changes = ChangesSet::default();
    if in_s0 {
        debug_assert!(s0.contains(&me));
        for &q in s0 {
            changes.insert(enter(q));
            changes.insert(join(q));
        }
    }
    NodeState {
        me,
        gamma,
        beta,
        is_joined: in_s0,
        join_counter: 0,
        join_bound: Rational64::zero(),
        changes,
        val: None,
        ts: Timestamp::INITIAL,
        temp: None,
        tag: 0,
        quorum_size: Rational64::zero(),
        heard_from: 0,
        rp_pending: false,
        wp_pending: false,
        read_pending: false,
        write_pending: false,
        halted: false,
    }
}

impl NodeState {
    /// Applies one input, mutating the state and returning the ordered
    /// outputs. Deterministic: identical (state, input) pairs produce
    /// identical successor states and outputs.
    pub fn apply(&mut self, input: &Input) -> Result<Vec<Output>, ProtocolError> {
        if self.halted {
            return Err(ProtocolError::Halted);
        }
        let mut out = Vec::new();
        match input {
            Input::EnterSignal => self.on_enter_signal(&mut out),
            Input::LeaveSignal { node } => self.on_leave_signal(*node, &mut out),
            Input::Invoke(op) => self.on_invoke(*op, &mut out)?,
            Input::Deliver(msg) => self.on_message(msg, &mut out),
        }
        Ok(out)
    }

    /// Pure-functional form of [`NodeState::apply`].
    pub fn step(&self, input: &Input) -> Result<(NodeState, Vec<Output>), ProtocolError> {
        let mut next = self.clone();
        let out = next.apply(input)?;
        Ok((next, out))
    }

    fn on_enter_signal(&mut self, out: &mut Vec<Output>) {
        self.changes.insert(enter(self.me));
        out.push(Output::Broadcast(Message::Enter { node: self.me }));
    }

    fn on_leave_signal(&mut self, node: NodeId, out: &mut Vec<Output>) {
        out.push(Output::Broadcast(Message::Leave { node }));
        if node == self.me {
            self.halted = true;
            out.push(Output::Halt);
        }
    }

    fn on_invoke(&mut self, op: OpKind, out: &mut Vec<Output>) -> Result<(), ProtocolError> {
        if !self.is_joined {
            return Err(ProtocolError::NotJoined);
        }
        if self.read_pending || self.write_pending {
            return Err(ProtocolError::Busy);
        }
        match op {
            OpKind::Read => self.read_pending = true,
            OpKind::Write(v) => {
                self.write_pending = true;
                self.temp = Some(v);
            }
        }
        self.begin_read_phase(out);
        Ok(())
    }

    fn begin_read_phase(&mut self, out: &mut Vec<Output>) {
        self.tag += 1;
        out.push(Output::Broadcast(Message::Query { tag: self.tag, client: self.me }));
        self.quorum_size = self.beta * Rational64::from_integer(self.changes.members_count() as i64);
        self.heard_from = 0;
        self.rp_pending = true;
    }

    fn begin_write_phase(&mut self, out: &mut Vec<Output>) {
        if self.write_pending {
            self.val = self.temp;
            self.ts = Timestamp::new(self.ts.seq + 1, self.me);
        }
        if self.read_pending {
            self.temp = self.val;
        }
        out.push(Output::WritePhaseStart(self.ts));
        out.push(Output::Broadcast(Message::Update {
            val: self.temp,
            ts: self.ts,
            tag: self.tag,
            client: self.me,
        }));
        self.quorum_size = self.beta * Rational64::from_integer(self.changes.members_count() as i64);
        self.heard_from = 0;
        self.wp_pending = true;
    }

    fn quorum_reached(&self) -> bool {
        Rational64::from_integer(self.heard_from as i64) >= self.quorum_size
    }

    fn adopt_if_newer(&mut self, val: Value, ts: Timestamp) {
        if ts > self.ts {
            self.val = val;
            self.ts = ts;
        }
    }

    fn on_message(&mut self, msg: &Message, out: &mut Vec<Output>) {
        match msg {
            Message::Enter { node } => {
                self.changes.insert(enter(*node));
                out.push(Output::Broadcast(Message::EnterEcho {
                    changes: Arc::new(self.changes.clone()),
                    val: self.val,
                    ts: self.ts,
                    joined: self.is_joined,
                    dest: *node,
                }));
            }
            Message::EnterEcho { changes, val, ts, joined, dest } => {
                self.adopt_if_newer(*val, *ts);
                self.changes.merge(changes);
                if !self.is_joined && *dest == self.me {
                    if *joined && self.join_bound.is_zero() {
                        self.join_bound = self.gamma
                            * Rational64::from_integer(self.changes.present_count() as i64);
                    }
                    self.join_counter += 1;
                    if !self.join_bound.is_zero()
                        && Rational64::from_integer(self.join_counter as i64) >= self.join_bound
                    {
                        self.is_joined = true;
                        self.changes.insert(join(self.me));
                        out.push(Output::Broadcast(Message::Joined { node: self.me }));
                        out.push(Output::JoinedNotice);
                    }
                }
            }
            Message::Joined { node } => {
                self.changes.insert(join(*node));
                self.changes.insert(enter(*node));
                out.push(Output::Broadcast(Message::JoinedEcho { node: *node }));
            }
            Message::JoinedEcho { node } => {
                self.changes.insert(join(*node));
                self.changes.insert(enter(*node));
            }
            Message::Leave { node } => {
                self.changes.insert(leave(*node));
                out.push(Output::Broadcast(Message::LeaveEcho { node: *node }));
            }
            Message::LeaveEcho { node } => {
                self.changes.insert(leave(*node));
            }
            Message::Query { tag, client } => {
                if self.is_joined {
                    out.push(Output::Broadcast(Message::Response {
                        val: self.val,
                        ts: self.ts,
                        tag: *tag,
                        client: *client,
                    }));
                }
            }
            Message::Response { val, ts, tag, client } => {
                if self.rp_pending && *tag == self.tag && *client == self.me {
                    self.adopt_if_newer(*val, *ts);
                    self.heard_from += 1;
                    if self.quorum_reached() {
                        self.rp_pending = false;
                        out.push(Output::ReadPhaseEnd(self.ts));
                        self.begin_write_phase(out);
                    }
                }
            }
            Message::Update { val, ts, tag, client } => {
                self.adopt_if_newer(*val, *ts);
                if self.is_joined {
                    out.push(Output::Broadcast(Message::Ack { tag: *tag, client: *client }));
                }
                out.push(Output::Broadcast(Message::UpdateEcho { val: self.val, ts: self.ts }));
            }
            Message::Ack { tag, client } => {
                if self.wp_pending && *tag == self.tag && *client == self.me {
                    self.heard_from += 1;
                    if self.quorum_reached() {
                        self.wp_pending = false;
                        if self.read_pending {
                            self.read_pending = false;
                            out.push(Output::OpResponse(OpOutcome::ReadReturn(self.temp)));
                        }
                        if self.write_pending {
                            self.write_pending = false;
                            out.push(Output::OpResponse(OpOutcome::WriteAck));
                        }
                    }
                }
            }
            Message::UpdateEcho { val, ts } => {
                self.adopt_if_newer(*val, *ts);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64 as R64;
    use proptest::prelude::*;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn ratio(num: i64, den: i64) -> R64 {
        R64::new(num, den)
    }

    fn fresh(me: u32) -> NodeState {
        init_state(n(me), false, &BTreeSet::new(), ratio(72, 100), ratio(737, 1000))
    }

    fn s0_state(me: u32, ids: &[u32]) -> NodeState {
        let s0: BTreeSet<NodeId> = ids.iter().map(|&i| n(i)).collect();
        init_state(n(me), true, &s0, ratio(72, 100), ratio(737, 1000))
    }

    fn deliver(state: &mut NodeState, msg: Message) -> Vec<Output> {
        state.apply(&Input::Deliver(Arc::new(msg))).unwrap()
    }

    fn broadcasts(outs: &[Output]) -> Vec<&Message> {
        outs.iter()
            .filter_map(|o| match o {
                Output::Broadcast(m) => Some(m),
                _ => None,
            })
            .collect()
    }

    fn echo_from(state: &NodeState, dest: NodeId, joined: bool) -> Message {
        Message::EnterEcho {
            changes: Arc::new(state.changes.clone()),
            val: state.val,
            ts: state.ts,
            joined,
            dest,
        }
    }

    #[test]
    fn timestamp_order_is_lexicographic_with_bottom_low() {
        assert!(Timestamp::INITIAL < Timestamp::new(1, n(3)));
        assert!(Timestamp::new(2, n(1)) < Timestamp::new(2, n(5)));
        assert!(Timestamp::new(3, n(1)) > Timestamp::new(2, n(9)));
        assert!(Timestamp { seq: 2, id: None } < Timestamp::new(2, n(0)));
    }

    #[test]
    fn init_state_seeds_initial_set() {
        let s = s0_state(1, &[1, 2, 3]);
        assert_eq!(s.changes.len(), 6);
        assert_eq!(s.changes.present_count(), 3);
        assert_eq!(s.changes.members_count(), 3);
        assert!(s.is_joined);
        assert_eq!(s.ts, Timestamp::INITIAL);
        assert_eq!(s.val, None);

        let s = fresh(9);
        assert!(s.changes.is_empty());
        assert!(!s.is_joined);
    }

    #[test]
    fn enter_signal_adds_and_broadcasts() {
        let mut s = fresh(9);
        let out = s.apply(&Input::EnterSignal).unwrap();
        assert!(s.changes.contains(&enter(n(9))));
        assert_eq!(s.changes.len(), 1);
        assert_eq!(broadcasts(&out), vec![&Message::Enter { node: n(9) }]);

        // Re-applying is idempotent on the set but still broadcasts.
        let out = s.apply(&Input::EnterSignal).unwrap();
        assert_eq!(s.changes.len(), 1);
        assert_eq!(broadcasts(&out).len(), 1);

        s.halted = true;
        assert_eq!(s.apply(&Input::EnterSignal), Err(ProtocolError::Halted));
    }

    #[test]
    fn enter_msg_echoes_state() {
        let mut s = s0_state(1, &[1, 2]);
        s.val = Some(9);
        s.ts = Timestamp::new(3, n(2));
        let out = deliver(&mut s, Message::Enter { node: n(9) });
        assert!(s.changes.contains(&enter(n(9))));
        match broadcasts(&out).as_slice() {
            [Message::EnterEcho { changes, val, ts, joined, dest }] => {
                assert!(changes.contains(&enter(n(9)))); // post-add set
                assert_eq!(*val, Some(9));
                assert_eq!(*ts, Timestamp::new(3, n(2)));
                assert!(*joined);
                assert_eq!(*dest, n(9));
            }
            other => panic!("unexpected outputs {other:?}"),
        }

        // An unjoined node echoes joined=false.
        let mut s = fresh(5);
        let out = deliver(&mut s, Message::Enter { node: n(9) });
        match broadcasts(&out).as_slice() {
            [Message::EnterEcho { joined, .. }] => assert!(!joined),
            other => panic!("unexpected outputs {other:?}"),
        }

        // Own enter via loopback: ordinary q = self merge.
        let mut s = fresh(5);
        s.apply(&Input::EnterSignal).unwrap();
        let before = s.changes.clone();
        let out = deliver(&mut s, Message::Enter { node: n(5) });
        assert_eq!(s.changes, before);
        assert_eq!(broadcasts(&out).len(), 1);
    }

    #[test]
    fn join_bound_set_on_first_joined_echo() {
        // gamma = 0.72, merged Present of 25 -> bound 18, one echo counted.
        let mut joiner = fresh(0);
        joiner.apply(&Input::EnterSignal).unwrap();

        let s0_ids: Vec<u32> = (1..=24).collect();
        let mut informer = s0_state(1, &s0_ids);
        informer.changes.insert(enter(n(0)));
        let echo = echo_from(&informer, n(0), true);
        let out = deliver(&mut joiner, echo);
        assert!(out.is_empty());
        // Present = {0} + {1..24} = 25 nodes.
        assert_eq!(joiner.changes.present_count(), 25);
        assert_eq!(joiner.join_bound, ratio(18, 1));
        assert_eq!(joiner.join_counter, 1);
        assert!(!joiner.is_joined);

        // 16 more qualifying echoes: counter 17, still below the bound.
        for _ in 0..16 {
            let echo = echo_from(&informer, n(0), false);
            deliver(&mut joiner, echo);
        }
        assert_eq!(joiner.join_counter, 17);
        assert!(!joiner.is_joined);

        // 18th qualifying echo crosses the bound.
        let echo = echo_from(&informer, n(0), false);
        let out = deliver(&mut joiner, echo);
        assert!(joiner.is_joined);
        assert!(joiner.changes.contains(&join(n(0))));
        assert!(out.contains(&Output::JoinedNotice));
        assert_eq!(broadcasts(&out), vec![&Message::Joined { node: n(0) }]);

        // Joined is emitted at most once: further echoes are merge-only.
        let echo = echo_from(&informer, n(0), false);
        let out = deliver(&mut joiner, echo);
        assert!(out.is_empty());
    }

    #[test]
    fn enter_echo_for_other_destination_merges_only() {
        let mut s = fresh(3);
        s.apply(&Input::EnterSignal).unwrap();
        s.val = Some(5);
        s.ts = Timestamp::new(3, n(9));

        let mut src = s0_state(1, &[1, 2]);
        src.val = Some(7);
        src.ts = Timestamp::new(4, n(7));
        let echo = echo_from(&src, n(8), true);
        deliver(&mut s, echo);
        assert_eq!(s.val, Some(7));
        assert_eq!(s.ts, Timestamp::new(4, n(7)));
        assert_eq!(s.join_counter, 0);
        assert!(s.join_bound.is_zero());
    }

    #[test]
    fn joined_and_joined_echo_handlers() {
        let mut s = fresh(1);
        let out = deliver(&mut s, Message::Joined { node: n(5) });
        assert!(s.changes.contains(&join(n(5))));
        assert!(s.changes.contains(&enter(n(5))));
        assert_eq!(broadcasts(&out), vec![&Message::JoinedEcho { node: n(5) }]);

        let mut s = fresh(1);
        let out = deliver(&mut s, Message::JoinedEcho { node: n(5) });
        assert!(s.changes.contains(&join(n(5))));
        assert!(s.changes.contains(&enter(n(5))));
        assert!(out.is_empty());

        // Duplicate joined: no-op on the set, echo still re-broadcast.
        let mut s = fresh(1);
        deliver(&mut s, Message::Joined { node: n(5) });
        let len = s.changes.len();
        let out = deliver(&mut s, Message::Joined { node: n(5) });
        assert_eq!(s.changes.len(), len);
        assert_eq!(broadcasts(&out).len(), 1);
    }

    #[test]
    fn leave_signal_halts_self_but_not_forced_broadcaster() {
        let mut s = s0_state(1, &[1, 2]);
        let out = s.apply(&Input::LeaveSignal { node: n(1) }).unwrap();
        assert!(s.halted);
        assert_eq!(out, vec![Output::Broadcast(Message::Leave { node: n(1) }), Output::Halt]);
        assert_eq!(s.apply(&Input::EnterSignal), Err(ProtocolError::Halted));

        let mut s = s0_state(1, &[1, 2, 4]);
        let out = s.apply(&Input::LeaveSignal { node: n(4) }).unwrap();
        assert!(!s.halted);
        assert_eq!(out, vec![Output::Broadcast(Message::Leave { node: n(4) })]);
    }

    #[test]
    fn leave_msg_updates_views() {
        let mut s = s0_state(1, &[1, 2, 4]);
        let out = deliver(&mut s, Message::Leave { node: n(4) });
        assert!(s.changes.contains(&leave(n(4))));
        assert!(!s.changes.present().contains(&n(4)));
        assert!(!s.changes.members().contains(&n(4)));
        assert_eq!(broadcasts(&out), vec![&Message::LeaveEcho { node: n(4) }]);

        let out = deliver(&mut s, Message::LeaveEcho { node: n(4) });
        assert!(out.is_empty());

        // leave for a never-entered node: recorded, Present unaffected,
        // and a later enter leaves the node out of Present.
        let mut s = fresh(1);
        deliver(&mut s, Message::Leave { node: n(7) });
        assert_eq!(s.changes.present_count(), 0);
        deliver(&mut s, Message::Enter { node: n(7) });
        assert!(!s.changes.present().contains(&n(7)));
    }

    #[test]
    fn invoke_starts_read_phase() {
        let ids: Vec<u32> = (1..=20).collect();
        let mut s = s0_state(1, &ids);
        let out = s.apply(&Input::Invoke(OpKind::Write(7))).unwrap();
        assert!(s.write_pending && s.rp_pending && !s.read_pending);
        assert_eq!(s.temp, Some(7));
        assert_eq!(s.tag, 1);
        assert_eq!(s.quorum_size, ratio(737 * 20, 1000)); // 14.74
        assert_eq!(broadcasts(&out), vec![&Message::Query { tag: 1, client: n(1) }]);

        // Busy node rejects a second invocation.
        assert_eq!(s.apply(&Input::Invoke(OpKind::Read)), Err(ProtocolError::Busy));

        // Unjoined node rejects invocations.
        let mut s = fresh(2);
        assert_eq!(s.apply(&Input::Invoke(OpKind::Read)), Err(ProtocolError::NotJoined));
    }

    #[test]
    fn single_member_quorum() {
        let mut s = init_state(
            n(1),
            true,
            &[n(1)].into_iter().collect(),
            ratio(72, 100),
            ratio(665, 1000),
        );
        s.apply(&Input::Invoke(OpKind::Read)).unwrap();
        assert_eq!(s.quorum_size, ratio(665, 1000));
        // One response suffices: 1 >= 0.665.
        let out = deliver(
            &mut s,
            Message::Response { val: None, ts: Timestamp::INITIAL, tag: 1, client: n(1) },
        );
        assert!(!s.rp_pending && s.wp_pending);
        assert!(out.iter().any(|o| matches!(o, Output::ReadPhaseEnd(_))));
    }

    fn run_read_phase(s: &mut NodeState, responses: u64, val: Value, ts: Timestamp) -> Vec<Output> {
        let mut last = Vec::new();
        for _ in 0..responses {
            last = deliver(s, Message::Response { val, ts, tag: s.tag, client: s.me });
        }
        last
    }

    #[test]
    fn write_phase_installs_fresh_timestamp() {
        let ids: Vec<u32> = (1..=20).collect();
        let mut s = s0_state(3, &ids);
        s.apply(&Input::Invoke(OpKind::Write(7))).unwrap();
        // Read phase sees max ts (5, n8); 15 responses reach 14.74.
        let out = run_read_phase(&mut s, 15, Some(42), Timestamp::new(5, n(8)));
        assert!(out.contains(&Output::ReadPhaseEnd(Timestamp::new(5, n(8)))));
        let update = broadcasts(&out)
            .into_iter()
            .find(|m| matches!(m, Message::Update { .. }))
            .unwrap()
            .clone();
        match update {
            Message::Update { val, ts, tag, client } => {
                assert_eq!(val, Some(7));
                assert_eq!(ts, Timestamp::new(6, n(3)));
                assert_eq!(tag, 1);
                assert_eq!(client, n(3));
            }
            _ => unreachable!(),
        }
        assert!(s.wp_pending);
        assert_eq!(s.heard_from, 0);
    }

    #[test]
    fn read_write_back_keeps_timestamp() {
        let ids: Vec<u32> = (1..=20).collect();
        let mut s = s0_state(3, &ids);
        s.apply(&Input::Invoke(OpKind::Read)).unwrap();
        let out = run_read_phase(&mut s, 15, Some(42), Timestamp::new(5, n(8)));
        let update = broadcasts(&out)
            .into_iter()
            .find(|m| matches!(m, Message::Update { .. }))
            .unwrap()
            .clone();
        match update {
            Message::Update { val, ts, .. } => {
                assert_eq!(val, Some(42)); // write-back of the value read
                assert_eq!(ts, Timestamp::new(5, n(8))); // timestamp kept
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn stale_and_foreign_responses_ignored() {
        let ids: Vec<u32> = (1..=20).collect();
        let mut s = s0_state(3, &ids);
        s.apply(&Input::Invoke(OpKind::Read)).unwrap();
        let before = s.clone();
        // Stale tag.
        deliver(&mut s, Message::Response { val: Some(1), ts: Timestamp::new(9, n(9)), tag: 0, client: n(3) });
        // Addressed to someone else.
        deliver(&mut s, Message::Response { val: Some(1), ts: Timestamp::new(9, n(9)), tag: 1, client: n(4) });
        assert_eq!(s, before);
    }

    #[test]
    fn ack_quorum_completes_operation() {
        let ids: Vec<u32> = (1..=20).collect();
        let mut s = s0_state(3, &ids);
        s.apply(&Input::Invoke(OpKind::Read)).unwrap();
        run_read_phase(&mut s, 15, Some(42), Timestamp::new(5, n(8)));

        // Acks while wp pending; 15th crosses 14.74.
        for i in 0..14 {
            let out = deliver(&mut s, Message::Ack { tag: 1, client: n(3) });
            assert!(out.is_empty(), "ack {i} should not complete");
        }
        let out = deliver(&mut s, Message::Ack { tag: 1, client: n(3) });
        assert_eq!(out, vec![Output::OpResponse(OpOutcome::ReadReturn(Some(42)))]);
        assert!(!s.wp_pending && !s.read_pending);

        // Acks after completion or for old tags are ignored.
        let before = s.clone();
        deliver(&mut s, Message::Ack { tag: 1, client: n(3) });
        deliver(&mut s, Message::Ack { tag: 0, client: n(3) });
        assert_eq!(s, before);
    }

    #[test]
    fn update_handler_acks_iff_joined() {
        // Unjoined server adopts but does not ack.
        let mut s = fresh(2);
        let out = deliver(
            &mut s,
            Message::Update { val: Some(9), ts: Timestamp::new(2, n(1)), tag: 4, client: n(1) },
        );
        assert_eq!(s.val, Some(9));
        assert_eq!(s.ts, Timestamp::new(2, n(1)));
        let bs = broadcasts(&out);
        assert_eq!(bs.len(), 1);
        assert_eq!(bs[0], &Message::UpdateEcho { val: Some(9), ts: Timestamp::new(2, n(1)) });

        // Joined server with an equal timestamp: no adoption, ack sent,
        // update-echo carries the local value.
        let mut s = s0_state(1, &[1, 2]);
        s.val = Some(5);
        s.ts = Timestamp::new(2, n(1));
        let out = deliver(
            &mut s,
            Message::Update { val: Some(9), ts: Timestamp::new(2, n(1)), tag: 4, client: n(7) },
        );
        assert_eq!(s.val, Some(5));
        let bs = broadcasts(&out);
        assert_eq!(bs[0], &Message::Ack { tag: 4, client: n(7) });
        assert_eq!(bs[1], &Message::UpdateEcho { val: Some(5), ts: Timestamp::new(2, n(1)) });

        // Lower incoming timestamp: no adoption, ack still sent.
        let out = deliver(
            &mut s,
            Message::Update { val: Some(1), ts: Timestamp::new(1, n(9)), tag: 5, client: n(7) },
        );
        assert_eq!(s.val, Some(5));
        assert!(broadcasts(&out).iter().any(|m| matches!(m, Message::Ack { .. })));
    }

    #[test]
    fn query_answered_only_by_joined() {
        let mut s = s0_state(1, &[1, 2]);
        s.val = Some(42);
        s.ts = Timestamp::new(5, n(8));
        let out = deliver(&mut s, Message::Query { tag: 3, client: n(2) });
        assert_eq!(
            broadcasts(&out),
            vec![&Message::Response { val: Some(42), ts: Timestamp::new(5, n(8)), tag: 3, client: n(2) }]
        );

        let mut s = fresh(4);
        let out = deliver(&mut s, Message::Query { tag: 3, client: n(2) });
        assert!(out.is_empty());
    }

    #[test]
    fn update_echo_adopts_only_strictly_newer() {
        let mut s = fresh(1);
        s.val = Some(3);
        s.ts = Timestamp::new(3, n(9));
        deliver(&mut s, Message::UpdateEcho { val: Some(7), ts: Timestamp::new(4, n(2)) });
        assert_eq!((s.val, s.ts), (Some(7), Timestamp::new(4, n(2))));

        deliver(&mut s, Message::UpdateEcho { val: Some(8), ts: Timestamp::new(4, n(2)) });
        assert_eq!(s.val, Some(7)); // equal: unchanged

        deliver(&mut s, Message::UpdateEcho { val: Some(1), ts: Timestamp::new(4, n(1)) });
        assert_eq!(s.val, Some(7)); // (4,n1) < (4,n2): unchanged
    }

    // Random-walk property: feed a state arbitrary (valid) inputs and check
    // the cross-cutting invariants after every step.
    fn arb_message() -> impl Strategy<Value = Message> {
        let node = (0u32..6).prop_map(NodeId);
        let ts = (0u64..4, prop::option::of(0u32..6)).prop_map(|(seq, id)| Timestamp {
            seq,
            id: id.map(NodeId),
        });
        let val = prop::option::of(0u64..50);
        let changes = prop::collection::btree_set(
            ((0u32..6), (0u8..3)).prop_map(|(i, k)| ChangeEvent {
                node: NodeId(i),
                kind: match k {
                    0 => ChangeKind::Enter,
                    1 => ChangeKind::Join,
                    _ => ChangeKind::Leave,
                },
            }),
            0..8,
        )
        .prop_map(|set| {
            // Close the set under join => enter so merges preserve the
            // closure invariant the real protocol maintains.
            let mut closed = set.clone();
            for ev in &set {
                if ev.kind == ChangeKind::Join {
                    closed.insert(enter(ev.node));
                }
            }
            Arc::new(ChangesSet(closed))
        });

        prop_oneof![
            node.clone().prop_map(|n| Message::Enter { node: n }),
            (changes, val.clone(), ts, any::<bool>(), (0u32..6).prop_map(NodeId)).prop_map(
                |(changes, val, ts, joined, dest)| Message::EnterEcho { changes, val, ts, joined, dest }
            ),
            node.clone().prop_map(|n| Message::Joined { node: n }),
            node.clone().prop_map(|n| Message::JoinedEcho { node: n }),
            node.clone().prop_map(|n| Message::Leave { node: n }),
            node.clone().prop_map(|n| Message::LeaveEcho { node: n }),
            (0u64..4, node.clone()).prop_map(|(tag, client)| Message::Query { tag, client }),
            (val.clone(), (0u64..4, prop::option::of(0u32..6)), 0u64..4, node.clone()).prop_map(
                |(val, (seq, id), tag, client)| Message::Response {
                    val,
                    ts: Timestamp { seq, id: id.map(NodeId) },
                    tag,
                    client,
                }
            ),
            (val.clone(), (0u64..4, prop::option::of(0u32..6)), 0u64..4, node.clone()).prop_map(
                |(val, (seq, id), tag, client)| Message::Update {
                    val,
                    ts: Timestamp { seq, id: id.map(NodeId) },
                    tag,
                    client,
                }
            ),
            (0u64..4, node.clone()).prop_map(|(tag, client)| Message::Ack { tag, client }),
            (val, (0u64..4, prop::option::of(0u32..6))).prop_map(|(val, (seq, id))| {
                Message::UpdateEcho { val, ts: Timestamp { seq, id: id.map(NodeId) } }
            }),
        ]
    }

    fn closure_holds(s: &NodeState) -> bool {
        s.changes
            .0
            .iter()
            .filter(|ev| ev.kind == ChangeKind::Join)
            .all(|ev| s.changes.contains(&enter(ev.node)))
    }

    proptest! {
        #[test]
        fn random_walk_preserves_invariants(
            start_joined in any::<bool>(),
            msgs in prop::collection::vec(arb_message(), 1..60),
        ) {
            let mut s = if start_joined {
                s0_state(0, &[0, 1, 2])
            } else {
                let mut s = fresh(0);
                s.apply(&Input::EnterSignal).unwrap();
                s
            };
            let mut joined_broadcasts = 0;
            for msg in msgs {
                let prev_ts = s.ts;
                let prev_len = s.changes.len();
                let prev_joined = s.is_joined;
                let input = Input::Deliver(Arc::new(msg));

                // Determinism: stepping a clone agrees with stepping in place.
                let (expect_state, expect_out) = s.step(&input).unwrap();
                let out = s.apply(&input).unwrap();
                prop_assert_eq!(&s, &expect_state);
                prop_assert_eq!(&out, &expect_out);

                prop_assert!(s.ts >= prev_ts, "timestamp regressed");
                prop_assert!(s.changes.len() >= prev_len, "changes shrank");
                prop_assert!(!(prev_joined && !s.is_joined), "is_joined unlatched");
                prop_assert!(!(s.rp_pending && s.wp_pending));
                prop_assert!(!(s.read_pending && s.write_pending));
                prop_assert!(closure_holds(&s), "join without enter");
                joined_broadcasts += out
                    .iter()
                    .filter(|o| matches!(o, Output::Broadcast(Message::Joined { .. })))
                    .count();
            }
            prop_assert!(joined_broadcasts <= 1, "joined broadcast more than once");
        }
    }
}
