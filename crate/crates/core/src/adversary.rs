//! Signal and workload generation under the model constraints, plus the
//! churn-schedule validity checks.
//!
//! The adversary owns three knobs: when nodes enter, when they leave
//! (voluntarily, or forced on behalf of a crashed node), and when they
//! crash. Every generated schedule keeps three invariants:
//!
//! * churn window: for every time `t`, the number of churn units in
//!   `[t, t+D]` is at most `alpha * N(t)`, where an enter counts one, a
//!   voluntary leave counts one, and all forced-leave signals for one
//!   crashed node count one in total;
//! * failure fraction: at every time, crashed-but-present nodes number at
//!   most `delta * N(t)`;
//! * size floor: `N(t) >= n_min` at all times.
//!
//! Counts are compared against the fractional bounds exactly; nothing is
//! rounded. The continuous "for every time t" quantifier reduces to
//! finitely many anchors because both the window count and `N` are
//! piecewise constant with breakpoints only at signal times.

use crate::network::Tick;
use crate::protocol::{NodeId, OpKind};
use num_rational::Rational64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "sig")]
pub enum SignalKind {
    Enter { node: NodeId },
    /// Delivered at `at`; `at == node` is a voluntary leave, anything else
    /// is a forced leave of the crashed `node`.
    Leave { node: NodeId, at: NodeId },
    Crash { node: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signal {
    pub t: Tick,
    #[serde(flatten)]
    pub kind: SignalKind,
}

/// The model-level ground truth about churn: ordered signals plus the
/// initial size. Everything else (`N(t)`, churn units, crashed counts) is
/// derived.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChurnSchedule {
    pub initial_size: u64,
    pub signals: Vec<Signal>,
}

/// One churn unit: an enter, or the first leave signal for a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChurnUnit {
    pub t: Tick,
    pub node: NodeId,
    pub is_enter: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleViolation {
    pub what: String,
    pub t: Tick,
    pub count: u64,
    pub bound: String,
}

impl ChurnSchedule {
    /// Enters plus first-leave-per-node, in time order.
    pub fn churn_units(&self) -> Vec<ChurnUnit> {
        let mut left: BTreeSet<NodeId> = BTreeSet::new();
        let mut units = Vec::new();
        for s in &self.signals {
            match s.kind {
                SignalKind::Enter { node } => {
                    units.push(ChurnUnit { t: s.t, node, is_enter: true })
                }
                SignalKind::Leave { node, .. } => {
                    if left.insert(node) {
                        units.push(ChurnUnit { t: s.t, node, is_enter: false });
                    }
                }
                SignalKind::Crash { .. } => {}
            }
        }
        units
    }

    /// `N` after applying every churn unit at each unit time, as a step
    /// function. `N` is right-continuous: a node is present at the instant
    /// of its enter signal and gone at the instant of its leave.
    pub fn n_steps(&self) -> Vec<(Tick, u64)> {
        let mut n = self.initial_size as i64;
        let mut steps = Vec::new();
        let units = self.churn_units();
        let mut i = 0;
        while i < units.len() {
            let t = units[i].t;
            while i < units.len() && units[i].t == t {
                n += if units[i].is_enter { 1 } else { -1 };
                i += 1;
            }
            steps.push((t, n.max(0) as u64));
        }
        steps
    }

    pub fn n_at(steps: &[(Tick, u64)], initial_size: u64, t: Tick) -> u64 {
        match steps.binary_search_by_key(&t, |&(tt, _)| tt) {
            Ok(i) => steps[i].1,
            Err(0) => initial_size,
            Err(i) => steps[i - 1].1,
        }
    }

    /// Validates the churn-window invariant at every breakpoint anchor.
    pub fn check_window(&self, alpha: &Rational64, d_ticks: u64) -> Result<(), ScheduleViolation> {
        let units = self.churn_units();
        let steps = self.n_steps();
        let times: Vec<Tick> = units.iter().map(|u| u.t).collect();
        let mut anchors: BTreeSet<Tick> = BTreeSet::new();
        anchors.insert(0);
        for &t in &times {
            anchors.insert(t);
            anchors.insert(t + 1);
            anchors.insert(t.saturating_sub(d_ticks));
        }
        for a in anchors {
            let lo = times.partition_point(|&t| t < a);
            let hi = times.partition_point(|&t| t <= a + d_ticks);
            let count = (hi - lo) as u64;
            let n = Self::n_at(&steps, self.initial_size, a);
            if Rational64::from_integer(count as i64) > alpha * Rational64::from_integer(n as i64)
            {
                return Err(ScheduleViolation {
                    what: "churn window".into(),
                    t: a,
                    count,
                    bound: format!(
                        "{} * {} = {}",
                        alpha,
                        n,
                        alpha * Rational64::from_integer(n as i64)
                    ),
                });
            }
        }
        Ok(())
    }

    /// Validates `crashed-present(t) <= delta * N(t)` at every signal time.
    pub fn check_delta(&self, delta: &Rational64) -> Result<(), ScheduleViolation> {
        let steps = self.n_steps();
        let mut crashed: BTreeSet<NodeId> = BTreeSet::new();
        let mut left: BTreeSet<NodeId> = BTreeSet::new();
        for s in &self.signals {
            match s.kind {
                SignalKind::Crash { node } => {
                    crashed.insert(node);
                }
                SignalKind::Leave { node, .. } => {
                    if left.insert(node) {
                        crashed.remove(&node);
                    }
                }
                SignalKind::Enter { .. } => {}
            }
            let n = Self::n_at(&steps, self.initial_size, s.t);
            let count = crashed.len() as u64;
            if Rational64::from_integer(count as i64) > delta * Rational64::from_integer(n as i64)
            {
                return Err(ScheduleViolation {
                    what: "failure fraction".into(),
                    t: s.t,
                    count,
                    bound: format!("{} * {}", delta, n),
                });
            }
        }
        Ok(())
    }

    /// Validates `N(t) >= n_min` at every churn time.
    pub fn check_floor(&self, n_min: u64) -> Result<(), ScheduleViolation> {
        if self.initial_size < n_min {
            return Err(ScheduleViolation {
                what: "size floor".into(),
                t: 0,
                count: self.initial_size,
                bound: n_min.to_string(),
            });
        }
        for (t, n) in self.n_steps() {
            if n < n_min {
                return Err(ScheduleViolation {
                    what: "size floor".into(),
                    t,
                    count: n,
                    bound: n_min.to_string(),
                });
            }
        }
        Ok(())
    }

    /// At most one enter, one crash, and one effective leave per node; no
    /// node enters twice or signals after leaving.
    pub fn check_node_uniqueness(&self) -> Result<(), ScheduleViolation> {
        let mut entered = BTreeSet::new();
        let mut crashed = BTreeSet::new();
        let mut left = BTreeSet::new();
        for s in &self.signals {
            let bad = |what: &str, t: Tick| {
                Err(ScheduleViolation { what: what.into(), t, count: 0, bound: String::new() })
            };
            match s.kind {
                SignalKind::Enter { node } => {
                    if !entered.insert(node) || left.contains(&node) {
                        return bad("duplicate or post-leave enter", s.t);
                    }
                }
                SignalKind::Crash { node } => {
                    if !crashed.insert(node) || left.contains(&node) {
                        return bad("duplicate or post-leave crash", s.t);
                    }
                }
                SignalKind::Leave { node, at } => {
                    // Forced leaves may repeat across recipients; dedup is
                    // handled by churn_units. A voluntary leave must be
                    // unique and the node must not have left already.
                    if at == node && left.contains(&node) {
                        return bad("duplicate voluntary leave", s.t);
                    }
                    left.insert(node);
                }
            }
        }
        Ok(())
    }
}

/// What the adversary is allowed to observe: model-level facts only, never
/// node-internal state.
#[derive(Debug, Clone)]
pub struct WorldView<'a> {
    pub t: Tick,
    /// Entered and not left.
    pub present: &'a BTreeSet<NodeId>,
    /// Crashed and still present.
    pub crashed_present: &'a BTreeSet<NodeId>,
    /// Joined, present, not crashed.
    pub joined_active: &'a BTreeSet<NodeId>,
    /// Nodes with an operation in flight.
    pub busy: &'a BTreeSet<NodeId>,
}

impl WorldView<'_> {
    pub fn n(&self) -> u64 {
        self.present.len() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ChurnMode {
    /// Greedily emit the largest admissible churn.
    MaxRate,
    /// No churn at all.
    Calm,
    /// Signals come from the scenario script; admission checks are skipped
    /// (scripts are for regression scenarios that deliberately break the
    /// assumptions).
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CrashMode {
    /// Crash whenever the failure fraction allows.
    MaxRate,
    None,
}

/// Generates admissible signals. Deterministic for a given seed.
pub struct Adversary {
    alpha: Rational64,
    delta: Rational64,
    n_min: u64,
    d_ticks: u64,
    churn_mode: ChurnMode,
    crash_mode: CrashMode,
    rng: ChaCha8Rng,
    next_node: u32,
    /// Trailing churn units, pruned below `t - d_ticks`.
    trailing: VecDeque<ChurnUnit>,
    /// N(t) step history covering at least the trailing window.
    n_history: VecDeque<(Tick, u64)>,
    initial_size: u64,
}

impl Adversary {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        seed: u64,
        alpha: Rational64,
        delta: Rational64,
        n_min: u64,
        d_ticks: u64,
        initial_size: u64,
        first_fresh_node: u32,
        churn_mode: ChurnMode,
        crash_mode: CrashMode,
    ) -> Self {
        Adversary {
            alpha,
            delta,
            n_min,
            d_ticks,
            churn_mode,
            crash_mode,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x61647665_72736172),
            next_node: first_fresh_node,
            trailing: VecDeque::new(),
            n_history: VecDeque::new(),
            initial_size,
        }
    }

    fn n_at(&self, t: Tick) -> u64 {
        let mut n = self.initial_size;
        for &(tt, nn) in &self.n_history {
            if tt <= t {
                n = nn;
            } else {
                break;
            }
        }
        n
    }

    /// Would adding one churn unit at `t` keep every window within the
    /// churn bound? Anchors swept: the window start, every trailing unit
    /// time, and the tick after each (the open-window variant). The
    /// system size is right-continuous, so the proposed unit's own effect
    /// on `N` (`delta` is +1 for an enter, -1 for a leave) already applies
    /// at the anchor `t` itself.
    fn churn_admissible(&self, t: Tick, delta: i64) -> bool {
        let lo_anchor = t.saturating_sub(self.d_ticks);
        let mut anchors: BTreeSet<Tick> = BTreeSet::new();
        anchors.insert(lo_anchor);
        anchors.insert(t);
        for u in &self.trailing {
            if u.t >= lo_anchor && u.t <= t {
                anchors.insert(u.t);
                if u.t + 1 <= t {
                    anchors.insert(u.t + 1);
                }
            }
        }
        for a in anchors {
            let count = 1 + self
                .trailing
                .iter()
                .filter(|u| u.t >= a && u.t <= a + self.d_ticks)
                .count() as u64;
            let n = self.n_at(a) as i64 + if a == t { delta } else { 0 };
            if n < 0
                || Rational64::from_integer(count as i64)
                    > self.alpha * Rational64::from_integer(n)
            {
                return false;
            }
        }
        true
    }

    fn record_churn(&mut self, t: Tick, node: NodeId, is_enter: bool, n_after: u64) {
        self.trailing.push_back(ChurnUnit { t, node, is_enter });
        while let Some(front) = self.trailing.front() {
            if front.t + self.d_ticks < t {
                self.trailing.pop_front();
            } else {
                break;
            }
        }
        self.n_history.push_back((t, n_after));
        while self.n_history.len() > 2 {
            let second = self.n_history[1].0;
            if second + self.d_ticks < t {
                self.n_history.pop_front();
            } else {
                break;
            }
        }
    }

    fn delta_ok(&self, crashed: u64, n: u64) -> bool {
        Rational64::from_integer(crashed as i64) <= self.delta * Rational64::from_integer(n as i64)
    }

    /// Proposes one crash if the failure fraction allows another. Crashes
    /// are not churn and need no window headroom.
    pub fn propose_crash(&mut self, world: &WorldView) -> Option<Signal> {
        if self.crash_mode == CrashMode::None {
            return None;
        }
        let crashed = world.crashed_present.len() as u64;
        if !self.delta_ok(crashed + 1, world.n()) {
            return None;
        }
        let candidates: Vec<NodeId> = world
            .present
            .iter()
            .filter(|q| !world.crashed_present.contains(q))
            .copied()
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let node = candidates[self.rng.random_range(0..candidates.len())];
        Some(Signal { t: world.t, kind: SignalKind::Crash { node } })
    }

    /// A forced leave for some crashed-present node, routed to an active
    /// recipient. Counts one churn unit no matter how many recipients get
    /// the signal.
    pub fn forced_leave(&mut self, world: &WorldView) -> Option<Signal> {
        let node = *world.crashed_present.iter().next()?;
        if world.n() <= self.n_min || !self.churn_admissible(world.t, -1) {
            return None;
        }
        let recipients: Vec<NodeId> = world
            .present
            .iter()
            .filter(|q| !world.crashed_present.contains(q) && **q != node)
            .copied()
            .collect();
        if recipients.is_empty() {
            return None;
        }
        let at = recipients[self.rng.random_range(0..recipients.len())];
        Some(Signal { t: world.t, kind: SignalKind::Leave { node, at } })
    }

    /// Proposes the next admissible churn signal, or nothing. Crashed
    /// nodes are flushed out first: while any crashed node is still
    /// present, leaves are forced leaves.
    pub fn propose_signal(&mut self, world: &WorldView) -> Option<Signal> {
        if self.churn_mode != ChurnMode::MaxRate {
            return None;
        }
        let want_leave = self.rng.random_bool(0.5);
        if want_leave && self.churn_admissible(world.t, -1) {
            if !world.crashed_present.is_empty() {
                if let Some(sig) = self.forced_leave(world) {
                    return Some(sig);
                }
            } else if world.n() > self.n_min
                && self.delta_ok(world.crashed_present.len() as u64, world.n() - 1)
            {
                let candidates: Vec<NodeId> = world
                    .present
                    .iter()
                    .filter(|q| !world.crashed_present.contains(q))
                    .copied()
                    .collect();
                if !candidates.is_empty() {
                    let node = candidates[self.rng.random_range(0..candidates.len())];
                    return Some(Signal {
                        t: world.t,
                        kind: SignalKind::Leave { node, at: node },
                    });
                }
            }
        }
        if !self.churn_admissible(world.t, 1) {
            return None;
        }
        let node = NodeId(self.next_node);
        self.next_node += 1;
        Some(Signal { t: world.t, kind: SignalKind::Enter { node } })
    }

    /// Tells the admission bookkeeping that a signal was actually applied.
    /// `n_after` is the system size right after it.
    pub fn committed(&mut self, sig: &Signal, n_after: u64, first_leave_for_node: bool) {
        match sig.kind {
            SignalKind::Enter { node } => self.record_churn(sig.t, node, true, n_after),
            SignalKind::Leave { node, .. } => {
                if first_leave_for_node {
                    self.record_churn(sig.t, node, false, n_after);
                }
            }
            SignalKind::Crash { .. } => {}
        }
    }
}

/// Read/write workload generation. Values are unique across the run:
/// writer id in the high bits, a per-writer counter in the low bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum WorkloadMode {
    None,
    /// Every joined, active, idle node invokes as soon as it can.
    Saturating { read_fraction: f64 },
    /// At every burst boundary, up to `concurrent` idle joined nodes
    /// invoke together; the gap leaves the system quiescent between
    /// bursts, which keeps history fragments small enough for the
    /// exhaustive checker.
    Bursts { concurrent: u32, period_ticks: u64, read_fraction: f64 },
    Scripted,
}

pub struct Workload {
    mode: WorkloadMode,
    rng: ChaCha8Rng,
    counters: BTreeMap<NodeId, u64>,
}

impl Workload {
    pub fn new(seed: u64, mode: WorkloadMode) -> Self {
        Workload {
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x776f726b_6c6f6164),
            counters: BTreeMap::new(),
        }
    }

    pub fn fresh_value(&mut self, node: NodeId) -> u64 {
        let c = self.counters.entry(node).or_insert(0);
        *c += 1;
        ((node.0 as u64) << 32) | *c
    }

    fn pick_op(&mut self, node: NodeId, read_fraction: f64) -> OpKind {
        if self.rng.random_bool(read_fraction) {
            OpKind::Read
        } else {
            OpKind::Write(self.fresh_value(node))
        }
    }

    /// Invocations to issue at `world.t`. Only joined, active, idle nodes
    /// are ever returned.
    pub fn invocations(&mut self, world: &WorldView) -> Vec<(NodeId, OpKind)> {
        let idle: Vec<NodeId> = world
            .joined_active
            .iter()
            .filter(|q| !world.busy.contains(q))
            .copied()
            .collect();
        match self.mode {
            WorkloadMode::None | WorkloadMode::Scripted => Vec::new(),
            WorkloadMode::Saturating { read_fraction } => idle
                .into_iter()
                .map(|node| {
                    let op = self.pick_op(node, read_fraction);
                    (node, op)
                })
                .collect(),
            WorkloadMode::Bursts { concurrent, period_ticks, read_fraction } => {
                if period_ticks == 0 || world.t % period_ticks != 0 {
                    return Vec::new();
                }
                idle.into_iter()
                    .take(concurrent as usize)
                    .map(|node| {
                        let op = self.pick_op(node, read_fraction);
                        (node, op)
                    })
                    .collect()
            }
        }
    }
}
