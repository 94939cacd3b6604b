//! Model-bound checks over a trace: the churn schedule itself, the derived
//! counting bounds, the always-alive witness, and the per-node view-size
//! bands.
//!
//! For a valid schedule with churn rate `alpha`, over any anchor `t` and
//! `i` delay windows: at most `((1+alpha)^i - 1) * N(t)` nodes enter in
//! `(t, t+Di]`, the size stays within `[(1-alpha)^i, (1+alpha)^i] * N(t)`,
//! and (while `(1-alpha)^i >= 1/2`) at most `(1 - (1-alpha)^i) * N(t)`
//! nodes leave. Some node stays active across every window of three delay
//! bounds. And every joined node's `Present` view sits within
//! `(1 +- alpha)^2 * N(t-2D)` while its `Members` view sits within
//! `(1 +- alpha)^4 * N(t-4D)`. All comparisons are exact.

use super::Verdict;
use crate::adversary::{ChurnSchedule, SignalKind};
use crate::network::Tick;
use crate::protocol::NodeId;
use crate::rational::{from_u64, to_ratio64};
use crate::trace::{Record, Trace};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone)]
pub struct ModelReport {
    pub schedule_window: Verdict,
    pub schedule_delta: Verdict,
    pub schedule_floor: Verdict,
    pub schedule_uniqueness: Verdict,
    pub counting_bounds: Verdict,
    pub active_witness: Verdict,
    pub view_bands: Verdict,
}

impl ModelReport {
    pub fn overall_pass(&self) -> bool {
        [
            &self.schedule_window,
            &self.schedule_delta,
            &self.schedule_floor,
            &self.schedule_uniqueness,
            &self.counting_bounds,
            &self.active_witness,
            &self.view_bands,
        ]
        .iter()
        .all(|v| v.is_pass())
    }
}

fn schedule_of(trace: &Trace) -> ChurnSchedule {
    let signals = trace
        .records
        .iter()
        .filter_map(|r| match r {
            Record::Signal { t, sig } => Some(crate::adversary::Signal { t: *t, kind: *sig }),
            _ => None,
        })
        .collect();
    ChurnSchedule { initial_size: trace.header.config.initial_size as u64, signals }
}

/// Bundles every model-bound verdict for one trace.
pub fn check_model(trace: &Trace) -> ModelReport {
    let cfg = &trace.header.config;
    let d = cfg.system.d_ticks;
    let duration = cfg.duration_ticks;
    let alpha = &cfg.system.alpha.0;
    let schedule = schedule_of(trace);

    let as_verdict = |r: Result<(), crate::adversary::ScheduleViolation>| match r {
        Ok(()) => Verdict::Pass,
        Err(v) => Verdict::fail(format!(
            "{} violated at t={} (count {}, bound {})",
            v.what, v.t, v.count, v.bound
        )),
    };

    let alpha64 = to_ratio64(alpha);
    let delta64 = to_ratio64(&cfg.system.delta.0);
    let schedule_window = match alpha64 {
        Some(a) => as_verdict(schedule.check_window(&a, d)),
        None => Verdict::NotChecked { reason: "alpha too large for exact window math".into() },
    };
    let schedule_delta = match delta64 {
        Some(dl) => as_verdict(schedule.check_delta(&dl)),
        None => Verdict::NotChecked { reason: "delta too large for exact math".into() },
    };
    let schedule_floor = as_verdict(schedule.check_floor(cfg.system.n_min));
    let schedule_uniqueness = as_verdict(schedule.check_node_uniqueness());

    ModelReport {
        schedule_window,
        schedule_delta,
        schedule_floor,
        schedule_uniqueness,
        counting_bounds: check_counting_bounds(&schedule, alpha, d, duration),
        active_witness: check_active_witness(trace, &schedule, d, duration),
        view_bands: check_view_bands(trace, &schedule, alpha, d),
    }
}

/// Entrant, leaver, and size bounds over every anchor and window count.
pub fn check_counting_bounds(
    schedule: &ChurnSchedule,
    alpha: &BigRational,
    d: u64,
    duration: u64,
) -> Verdict {
    let units = schedule.churn_units();
    let steps = schedule.n_steps();
    let enter_times: Vec<Tick> =
        units.iter().filter(|u| u.is_enter).map(|u| u.t).collect();
    let leave_times: Vec<Tick> =
        units.iter().filter(|u| !u.is_enter).map(|u| u.t).collect();
    let count_in = |times: &[Tick], lo_excl: Tick, hi_incl: Tick| -> u64 {
        let lo = times.partition_point(|&t| t <= lo_excl);
        let hi = times.partition_point(|&t| t <= hi_incl);
        (hi - lo) as u64
    };

    let one = BigRational::one();
    let op_base = &one + alpha;
    let om_base = &one - alpha;
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));

    let mut anchors: BTreeSet<Tick> = BTreeSet::new();
    anchors.insert(0);
    for u in &units {
        anchors.insert(u.t);
    }

    for &t in &anchors {
        let n_t = from_u64(ChurnSchedule::n_at(&steps, schedule.initial_size, t));
        let mut op_i = one.clone();
        let mut om_i = one.clone();
        let mut i = 0u64;
        while t + d * (i + 1) <= duration {
            i += 1;
            op_i *= &op_base;
            om_i *= &om_base;
            let hi = t + d * i;

            let entrants = count_in(&enter_times, t, hi);
            let bound = (&op_i - &one) * &n_t;
            if from_u64(entrants) > bound {
                return Verdict::fail(format!(
                    "entrants in ({t}, {hi}] = {entrants} exceed ((1+a)^{i} - 1) N({t})"
                ));
            }

            let n_then = from_u64(ChurnSchedule::n_at(&steps, schedule.initial_size, hi));
            if n_then > &op_i * &n_t || n_then < &om_i * &n_t {
                return Verdict::fail(format!(
                    "N({hi}) outside [(1-a)^{i}, (1+a)^{i}] N({t})"
                ));
            }

            if om_i >= half {
                let leavers = count_in(&leave_times, t, hi);
                let bound = (&one - &om_i) * &n_t;
                if from_u64(leavers) > bound {
                    return Verdict::fail(format!(
                        "leavers in ({t}, {hi}] = {leavers} exceed (1 - (1-a)^{i}) N({t})"
                    ));
                }
            }
        }
    }
    Verdict::Pass
}

fn activity_spans(trace: &Trace) -> BTreeMap<NodeId, (Tick, Tick)> {
    let mut spans: BTreeMap<NodeId, (Tick, Tick)> = BTreeMap::new();
    for r in &trace.records {
        match r {
            Record::Setup { s0, .. } => {
                for &n in s0 {
                    spans.insert(n, (0, Tick::MAX));
                }
            }
            Record::Signal { t, sig } => match sig {
                SignalKind::Enter { node } => {
                    spans.entry(*node).or_insert((*t, Tick::MAX));
                }
                SignalKind::Crash { node } | SignalKind::Leave { node, .. } => {
                    if let Some(span) = spans.get_mut(node) {
                        span.1 = span.1.min(*t);
                    }
                }
            },
            _ => {}
        }
    }
    spans
}

/// Some node is active throughout `[max(0, t-2D), t+D]` for every sampled
/// anchor `t > 0`.
pub fn check_active_witness(
    trace: &Trace,
    schedule: &ChurnSchedule,
    d: u64,
    duration: u64,
) -> Verdict {
    let spans: Vec<(Tick, Tick)> = activity_spans(trace).into_values().collect();
    let mut anchors: BTreeSet<Tick> = BTreeSet::new();
    for u in schedule.churn_units() {
        anchors.insert(u.t);
    }
    let mut t = d / 2;
    while t + d <= duration {
        anchors.insert(t);
        t += d / 2;
    }
    for &t in &anchors {
        if t == 0 || t + d > duration {
            continue;
        }
        let lo = t.saturating_sub(2 * d);
        let hi = t + d;
        // Active throughout [lo, hi]: entered by lo, neither crashed nor
        // left until strictly after hi.
        let found = spans.iter().any(|&(enter, gone)| enter <= lo && gone > hi);
        if !found {
            return Verdict::fail(format!(
                "no node is active throughout [{lo}, {hi}] (anchor {t})"
            ));
        }
    }
    Verdict::Pass
}

/// Present within `(1 +- alpha)^2 N(t-2D)` and Members within
/// `(1 +- alpha)^4 N(t-4D)` for every joined node in every snapshot.
pub fn check_view_bands(
    trace: &Trace,
    schedule: &ChurnSchedule,
    alpha: &BigRational,
    d: u64,
) -> Verdict {
    let steps = schedule.n_steps();
    let one = BigRational::one();
    let op2 = (&one + alpha) * (&one + alpha);
    let om2 = (&one - alpha) * (&one - alpha);
    let op4 = &op2 * &op2;
    let om4 = &om2 * &om2;

    let mut saw_snapshot = false;
    for r in &trace.records {
        let Record::Snap { t, nodes, .. } = r else { continue };
        saw_snapshot = true;
        let n2 = from_u64(ChurnSchedule::n_at(&steps, schedule.initial_size, t.saturating_sub(2 * d)));
        let n4 = from_u64(ChurnSchedule::n_at(&steps, schedule.initial_size, t.saturating_sub(4 * d)));
        for ns in nodes {
            if !ns.joined {
                continue;
            }
            let present = from_u64(ns.present);
            if present < &om2 * &n2 || present > &op2 * &n2 {
                return Verdict::fail(format!(
                    "at t={t} node {} sees {} present, outside (1+-a)^2 N({}) around {}",
                    ns.id,
                    ns.present,
                    t.saturating_sub(2 * d),
                    n2
                ));
            }
            let members = from_u64(ns.members);
            if members < &om4 * &n4 || members > &op4 * &n4 {
                return Verdict::fail(format!(
                    "at t={t} node {} sees {} members, outside (1+-a)^4 N({}) around {}",
                    ns.id,
                    ns.members,
                    t.saturating_sub(4 * d),
                    n4
                ));
            }
        }
    }
    if !saw_snapshot {
        return Verdict::NotChecked { reason: "no state snapshots recorded".into() };
    }
    Verdict::Pass
}

/// Convenience for tests and the report: the full model check as a single
/// verdict.
pub fn check_model_bounds(trace: &Trace) -> Verdict {
    let report = check_model(trace);
    for (name, v) in [
        ("window", &report.schedule_window),
        ("failure fraction", &report.schedule_delta),
        ("size floor", &report.schedule_floor),
        ("signal uniqueness", &report.schedule_uniqueness),
        ("counting bounds", &report.counting_bounds),
        ("active witness", &report.active_witness),
        ("view bands", &report.view_bands),
    ] {
        match v {
            Verdict::Pass => {}
            Verdict::Fail { witness } => {
                return Verdict::fail(format!("{name}: {witness}"));
            }
            Verdict::NotChecked { reason } => {
                return Verdict::NotChecked { reason: format!("{name}: {reason}") };
            }
        }
    }
    Verdict::Pass
}
