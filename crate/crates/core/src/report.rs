//! Per-run and aggregate reports. All latencies are reported in multiples
//! of the delay bound `D`, the model's only time scale.

use crate::adversary::{ChurnSchedule, SignalKind};
use crate::checker::CheckReport;
use crate::rational::to_ratio64;
use crate::trace::{Record, Trace};
use num_rational::Rational64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LatencyStats {
    pub count: u64,
    pub min_d: f64,
    pub median_d: f64,
    pub max_d: f64,
}

impl LatencyStats {
    pub fn from_samples(mut samples: Vec<f64>) -> LatencyStats {
        if samples.is_empty() {
            return LatencyStats::default();
        }
        samples.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let n = samples.len();
        let median = if n % 2 == 1 {
            samples[n / 2]
        } else {
            (samples[n / 2 - 1] + samples[n / 2]) / 2.0
        };
        LatencyStats { count: n as u64, min_d: samples[0], median_d: median, max_d: samples[n - 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RunCounts {
    pub entered: u64,
    pub joined_entrants: u64,
    pub left: u64,
    pub crashed: u64,
    pub ops_invoked: u64,
    pub ops_completed: u64,
    pub broadcasts: u64,
    pub deliveries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_hash: String,
    pub seed: u64,
    pub counts: RunCounts,
    pub join_latency: LatencyStats,
    pub read_phase_latency: LatencyStats,
    pub write_phase_latency: LatencyStats,
    pub op_latency: LatencyStats,
    /// Max observed window count over the churn bound; absent when the
    /// bound is zero everywhere (no churn possible).
    pub churn_utilization: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<CheckReport>,
}

/// Highest ratio of observed window count to the churn bound over all
/// breakpoint anchors.
fn churn_utilization(schedule: &ChurnSchedule, alpha: &Rational64, d: u64) -> Option<f64> {
    if alpha.numer() == &0 {
        return None;
    }
    let units = schedule.churn_units();
    if units.is_empty() {
        return Some(0.0);
    }
    let steps = schedule.n_steps();
    let times: Vec<u64> = units.iter().map(|u| u.t).collect();
    let mut best: f64 = 0.0;
    let mut anchors: std::collections::BTreeSet<u64> = Default::default();
    anchors.insert(0);
    for &t in &times {
        anchors.insert(t);
        anchors.insert(t + 1);
        anchors.insert(t.saturating_sub(d));
    }
    for a in anchors {
        let lo = times.partition_point(|&t| t < a);
        let hi = times.partition_point(|&t| t <= a + d);
        let count = (hi - lo) as f64;
        let n = ChurnSchedule::n_at(&steps, schedule.initial_size, a);
        let bound = alpha.to_f64().unwrap_or(f64::NAN) * n as f64;
        if bound > 0.0 {
            best = best.max(count / bound);
        }
    }
    Some(best)
}

pub fn build_report(trace: &Trace, checks: Option<CheckReport>) -> RunReport {
    let cfg = &trace.header.config;
    let d = cfg.system.d_ticks as f64;

    let mut counts = RunCounts::default();
    let mut enters: BTreeMap<_, u64> = BTreeMap::new();
    let mut joins: BTreeMap<_, u64> = BTreeMap::new();
    let mut invokes: BTreeMap<(_, u64), u64> = BTreeMap::new();
    let mut rp_ends: BTreeMap<(_, u64), u64> = BTreeMap::new();
    let mut left_nodes: std::collections::BTreeSet<_> = Default::default();
    let mut join_lat = Vec::new();
    let mut rp_lat = Vec::new();
    let mut wp_lat = Vec::new();
    let mut op_lat = Vec::new();

    for r in &trace.records {
        match r {
            Record::Signal { t, sig } => match sig {
                SignalKind::Enter { node } => {
                    counts.entered += 1;
                    enters.insert(*node, *t);
                }
                SignalKind::Leave { node, .. } => {
                    if left_nodes.insert(*node) {
                        counts.left += 1;
                    }
                }
                SignalKind::Crash { .. } => counts.crashed += 1,
            },
            Record::Join { t, node } => {
                if let Some(te) = enters.get(node) {
                    if !joins.contains_key(node) {
                        counts.joined_entrants += 1;
                        join_lat.push((*t - *te) as f64 / d);
                    }
                }
                joins.entry(*node).or_insert(*t);
            }
            Record::Invoke { t, node, tag, .. } => {
                counts.ops_invoked += 1;
                invokes.insert((*node, *tag), *t);
            }
            Record::Phase { t, node, tag, phase, .. } => {
                if *phase == crate::trace::PhaseLabel::Rp {
                    rp_ends.insert((*node, *tag), *t);
                    if let Some(ti) = invokes.get(&(*node, *tag)) {
                        rp_lat.push((*t - *ti) as f64 / d);
                    }
                }
            }
            Record::Resp { t, node, tag, .. } => {
                counts.ops_completed += 1;
                if let Some(tp) = rp_ends.get(&(*node, *tag)) {
                    wp_lat.push((*t - *tp) as f64 / d);
                }
                if let Some(ti) = invokes.get(&(*node, *tag)) {
                    op_lat.push((*t - *ti) as f64 / d);
                }
            }
            Record::Bcast { .. } => counts.broadcasts += 1,
            Record::Deliver { .. } => counts.deliveries += 1,
            _ => {}
        }
    }

    let schedule = ChurnSchedule {
        initial_size: cfg.initial_size as u64,
        signals: trace
            .records
            .iter()
            .filter_map(|r| match r {
                Record::Signal { t, sig } => {
                    Some(crate::adversary::Signal { t: *t, kind: *sig })
                }
                _ => None,
            })
            .collect(),
    };
    let utilization = to_ratio64(&cfg.system.alpha.0)
        .and_then(|a| churn_utilization(&schedule, &a, cfg.system.d_ticks));

    RunReport {
        scenario_hash: trace.header.config_hash.clone(),
        seed: cfg.seed,
        counts,
        join_latency: LatencyStats::from_samples(join_lat),
        read_phase_latency: LatencyStats::from_samples(rp_lat),
        write_phase_latency: LatencyStats::from_samples(wp_lat),
        op_latency: LatencyStats::from_samples(op_lat),
        churn_utilization: utilization,
        checks,
    }
}

/// Pooled summary over a batch of seeded runs of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub scenario_hash: String,
    pub runs: u64,
    pub counts: RunCounts,
    pub join_latency: LatencyStats,
    pub read_phase_latency: LatencyStats,
    pub write_phase_latency: LatencyStats,
    pub op_latency: LatencyStats,
    pub max_churn_utilization: Option<f64>,
    pub check_failures: u64,
    pub check_incomplete: u64,
}

pub fn aggregate(reports: &[RunReport]) -> Option<AggregateReport> {
    let first = reports.first()?;
    let mut counts = RunCounts::default();
    let mut join = Vec::new();
    let mut rp = Vec::new();
    let mut wp = Vec::new();
    let mut op = Vec::new();
    let mut util: Option<f64> = None;
    let mut failures = 0;
    let mut incomplete = 0;
    for r in reports {
        counts.entered += r.counts.entered;
        counts.joined_entrants += r.counts.joined_entrants;
        counts.left += r.counts.left;
        counts.crashed += r.counts.crashed;
        counts.ops_invoked += r.counts.ops_invoked;
        counts.ops_completed += r.counts.ops_completed;
        counts.broadcasts += r.counts.broadcasts;
        counts.deliveries += r.counts.deliveries;
        // Pool via the stats triple: exact pooling needs raw samples, so
        // the aggregate keeps min/max exact and medians as a median of
        // per-run medians.
        if r.join_latency.count > 0 {
            join.push(r.join_latency.clone());
        }
        if r.read_phase_latency.count > 0 {
            rp.push(r.read_phase_latency.clone());
        }
        if r.write_phase_latency.count > 0 {
            wp.push(r.write_phase_latency.clone());
        }
        if r.op_latency.count > 0 {
            op.push(r.op_latency.clone());
        }
        if let Some(u) = r.churn_utilization {
            util = Some(util.unwrap_or(0.0).max(u));
        }
        if let Some(checks) = &r.checks {
            match checks.overall() {
                crate::checker::Verdict::Pass => {}
                crate::checker::Verdict::Fail { .. } => failures += 1,
                crate::checker::Verdict::NotChecked { .. } => incomplete += 1,
            }
        }
    }
    let merge = |stats: Vec<LatencyStats>| -> LatencyStats {
        if stats.is_empty() {
            return LatencyStats::default();
        }
        let count = stats.iter().map(|s| s.count).sum();
        let min_d = stats.iter().map(|s| s.min_d).fold(f64::INFINITY, f64::min);
        let max_d = stats.iter().map(|s| s.max_d).fold(0.0, f64::max);
        let med = LatencyStats::from_samples(stats.iter().map(|s| s.median_d).collect());
        LatencyStats { count, min_d, median_d: med.median_d, max_d }
    };
    Some(AggregateReport {
        scenario_hash: first.scenario_hash.clone(),
        runs: reports.len() as u64,
        counts,
        join_latency: merge(join),
        read_phase_latency: merge(rp),
        write_phase_latency: merge(wp),
        op_latency: merge(op),
        max_churn_utilization: util,
        check_failures: failures,
        check_incomplete: incomplete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;
    use crate::scenarios::presets;

    #[test]
    fn report_counts_and_latencies() {
        let mut cfg = presets::maxchurn_row3(11);
        cfg.initial_size = 30;
        cfg.duration_ticks = 10_000;
        let trace = run(&cfg).unwrap();
        let report = build_report(&trace, None);
        assert!(report.counts.ops_invoked >= report.counts.ops_completed);
        assert!(report.counts.ops_completed > 0);
        assert!(report.op_latency.count > 0);
        // The guarantees: joins within 2D, phases within 2D, ops within 4D.
        assert!(report.join_latency.max_d <= 2.0 + 1e-9);
        assert!(report.read_phase_latency.max_d <= 2.0 + 1e-9);
        assert!(report.write_phase_latency.max_d <= 2.0 + 1e-9);
        assert!(report.op_latency.max_d <= 4.0 + 1e-9);
        let util = report.churn_utilization.unwrap();
        assert!(util > 0.0 && util <= 1.0, "utilization {util}");
        // Identical runs produce identical reports.
        let report2 = build_report(&run(&cfg).unwrap(), None);
        assert_eq!(report, report2);
    }

    #[test]
    fn aggregate_pools_runs() {
        let mut reports = Vec::new();
        for seed in 0..3 {
            let mut cfg = presets::calm(seed);
            cfg.duration_ticks = 15_000;
            let trace = run(&cfg).unwrap();
            reports.push(build_report(&trace, None));
        }
        let agg = aggregate(&reports).unwrap();
        assert_eq!(agg.runs, 3);
        assert_eq!(
            agg.counts.ops_invoked,
            reports.iter().map(|r| r.counts.ops_invoked).sum::<u64>()
        );
    }
}
