//! Simulated broadcast service.
//!
//! Every broadcast fans out into one pending delivery per eligible receiver
//! with a delay in `[1, d_ticks]`, so a receiver that stays active through
//! the whole window is guaranteed the message within the delay bound. Per
//! ordered link, delivery order equals send order: sampled delivery times
//! are clamped to be no earlier than the previous delivery on that link.
//!
//! The sender's own copy is delivered immediately (delay 0) so its server
//! thread answers its own queries; enter messages are the exception and are
//! never self-delivered. A config switch turns self-delivery off entirely.
//!
//! Nodes that enter while a broadcast is still in flight may receive it
//! before the window closes (`deliver_to_late_entrants`, on by default;
//! the adversarial mode turns it off). Nodes that enter after the window
//! closes never receive it directly.

use crate::protocol::{MessageKind, NodeId};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

pub type Tick = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DeliveryMode {
    /// Delays drawn uniformly from `[1, d_ticks]` per delivery.
    UniformRandom,
    /// Every ordered link is pinned to either 1 tick or the full bound,
    /// chosen by a per-link coin; late-entrant delivery is forced off.
    AdversarialExtremes,
    /// Group-structured schedule: messages inside a group travel in 1 tick,
    /// messages across groups take exactly the bound. Membership-related
    /// kinds split the groups around the informer node; everything else
    /// splits initial set vs entrants.
    ScriptedGroups { initial_size: u32, informer: u32, entrants: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryPolicy {
    #[serde(flatten)]
    pub mode: DeliveryMode,
    #[serde(default = "default_true")]
    pub self_delivery: bool,
    #[serde(default = "default_true")]
    pub deliver_to_late_entrants: bool,
}

fn default_true() -> bool {
    true
}

impl DeliveryPolicy {
    pub fn uniform() -> Self {
        DeliveryPolicy {
            mode: DeliveryMode::UniformRandom,
            self_delivery: true,
            deliver_to_late_entrants: true,
        }
    }

    pub fn adversarial() -> Self {
        DeliveryPolicy {
            mode: DeliveryMode::AdversarialExtremes,
            self_delivery: true,
            deliver_to_late_entrants: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingDelivery {
    pub broadcast_id: u64,
    pub receiver: NodeId,
    pub delivery_time: Tick,
}

#[derive(Debug, Clone)]
struct RecentBroadcast {
    id: u64,
    sender: NodeId,
    kind: MessageKind,
    sent_at: Tick,
}

/// Deterministic delivery scheduler. Owned by the engine; all pending
/// deliveries live in the engine's event queue, so crash/halt drops are
/// enforced there at pop time.
pub struct Network {
    d_ticks: u64,
    policy: DeliveryPolicy,
    rng: ChaCha8Rng,
    link_seed: u64,
    /// Last scheduled delivery time per ordered link, for FIFO clamping.
    fifo: BTreeMap<(NodeId, NodeId), Tick>,
    /// Broadcasts still inside their delivery window, for late entrants.
    recent: VecDeque<RecentBroadcast>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

const MEMBERSHIP_KINDS: [MessageKind; 4] =
    [MessageKind::Enter, MessageKind::EnterEcho, MessageKind::Joined, MessageKind::JoinedEcho];

impl Network {
    pub fn new(seed: u64, d_ticks: u64, policy: DeliveryPolicy) -> Self {
        Network {
            d_ticks,
            policy,
            rng: ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x6e65_7477_6f72_6b)),
            link_seed: splitmix64(seed ^ 0x6c69_6e6b),
            fifo: BTreeMap::new(),
            recent: VecDeque::new(),
        }
    }

    pub fn d_ticks(&self) -> u64 {
        self.d_ticks
    }

    /// Raw (unclamped) delay for one delivery, in `[1, d_ticks]`.
    fn sample_delay(&mut self, sender: NodeId, receiver: NodeId, kind: MessageKind) -> u64 {
        match &self.policy.mode {
            DeliveryMode::UniformRandom => self.rng.random_range(1..=self.d_ticks),
            DeliveryMode::AdversarialExtremes => {
                let coin = splitmix64(
                    self.link_seed ^ ((sender.0 as u64) << 32) ^ (receiver.0 as u64),
                );
                if coin & 1 == 0 {
                    1
                } else {
                    self.d_ticks
                }
            }
            DeliveryMode::ScriptedGroups { initial_size, informer, entrants } => {
                let is_initial = |n: NodeId| n.0 < *initial_size;
                let is_entrant =
                    |n: NodeId| n.0 >= *initial_size && n.0 < initial_size + entrants;
                let cross = if MEMBERSHIP_KINDS.contains(&kind) {
                    // Informer sides with the entrants for membership traffic.
                    let side = |n: NodeId| is_entrant(n) || n.0 == *informer;
                    side(sender) != side(receiver)
                } else {
                    is_initial(sender) != is_initial(receiver)
                };
                if cross {
                    self.d_ticks
                } else {
                    1
                }
            }
        }
    }

    fn clamp_fifo(&mut self, sender: NodeId, receiver: NodeId, time: Tick) -> Tick {
        let slot = self.fifo.entry((sender, receiver)).or_insert(0);
        let clamped = time.max(*slot);
        *slot = clamped;
        clamped
    }

    /// Schedules one broadcast. `receivers` must be the nodes present and
    /// not crashed/halted at time `t`, excluding the sender; the sender's
    /// own immediate copy is appended here when the policy allows it.
    pub fn schedule_broadcast(
        &mut self,
        id: u64,
        sender: NodeId,
        kind: MessageKind,
        t: Tick,
        receivers: &[NodeId],
        sender_active: bool,
    ) -> Vec<PendingDelivery> {
        let mut out = Vec::with_capacity(receivers.len() + 1);
        if self.policy.self_delivery && sender_active && kind != MessageKind::Enter {
            let time = self.clamp_fifo(sender, sender, t);
            out.push(PendingDelivery { broadcast_id: id, receiver: sender, delivery_time: time });
        }
        for &r in receivers {
            debug_assert_ne!(r, sender);
            let delay = self.sample_delay(sender, r, kind);
            let time = self.clamp_fifo(sender, r, t + delay);
            out.push(PendingDelivery { broadcast_id: id, receiver: r, delivery_time: time });
        }
        if self.policy.deliver_to_late_entrants {
            self.recent.push_back(RecentBroadcast { id, sender, kind, sent_at: t });
        }
        out
    }

    /// Deliveries owed to a node entering at `t`: broadcasts whose window
    /// is still open may reach it before the window closes.
    pub fn on_enter(&mut self, q: NodeId, t: Tick) -> Vec<PendingDelivery> {
        if !self.policy.deliver_to_late_entrants {
            return Vec::new();
        }
        while let Some(front) = self.recent.front() {
            if front.sent_at + self.d_ticks <= t {
                self.recent.pop_front();
            } else {
                break;
            }
        }
        let mut out = Vec::new();
        let recents: Vec<RecentBroadcast> = self.recent.iter().cloned().collect();
        for b in recents {
            if b.sender == q {
                continue;
            }
            let window_end = b.sent_at + self.d_ticks;
            debug_assert!(window_end > t);
            let lo = t + 1;
            let time = match &self.policy.mode {
                DeliveryMode::UniformRandom => self.rng.random_range(lo..=window_end),
                DeliveryMode::AdversarialExtremes => unreachable!("late entrants disabled"),
                DeliveryMode::ScriptedGroups { .. } => {
                    let delay = self.sample_delay(b.sender, q, b.kind);
                    if delay == 1 {
                        lo
                    } else {
                        window_end
                    }
                }
            };
            let time = self.clamp_fifo(b.sender, q, time);
            out.push(PendingDelivery { broadcast_id: b.id, receiver: q, delivery_time: time });
        }
        out
    }
}
