//! Offline verification of traces.
//!
//! Atomicity is checked two independent ways: a witness checker that
//! rebuilds the total order implied by the recorded phase timestamps and
//! verifies it read-by-read and edge-by-edge, and a protocol-blind
//! exhaustive search over small histories that knows nothing about
//! timestamps. The two must agree wherever the search is feasible; the
//! blind oracle guards against the witness checker inheriting a protocol
//! bug.
//!
//! Liveness checks assert the two guarantees the algorithm is supposed to
//! give: entrants that stay active join within two delay bounds, and every
//! operation by a continuously active node completes with each phase
//! inside two delay bounds. Model-bound checks validate the generated
//! churn schedule itself plus the derived counting bounds and each node's
//! view-size bands.

pub mod bruteforce;
pub mod history;
pub mod liveness;
pub mod model;
pub mod witness;

pub use bruteforce::{check_atomicity_bruteforce, decompose, InitialState};
pub use history::{extract_history, History, HistoryError, OpId, OpRecord};
pub use liveness::{check_join_liveness, check_op_liveness};
pub use model::check_model_bounds;
pub use witness::check_atomicity_witness;

use crate::trace::Trace;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail { witness: String },
    /// The check could not run to completion (for the exhaustive oracle:
    /// a fragment above the cap). Never a silent pass.
    NotChecked { reason: String },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }

    pub fn fail(witness: impl Into<String>) -> Verdict {
        Verdict::Fail { witness: witness.into() }
    }

    fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (f @ Verdict::Fail { .. }, _) => f,
            (_, f @ Verdict::Fail { .. }) => f,
            (n @ Verdict::NotChecked { .. }, _) => n,
            (_, n @ Verdict::NotChecked { .. }) => n,
            _ => Verdict::Pass,
        }
    }
}

/// Aggregated verdicts for one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub schedule_window: Verdict,
    pub schedule_delta: Verdict,
    pub schedule_floor: Verdict,
    pub schedule_uniqueness: Verdict,
    pub counting_bounds: Verdict,
    pub active_witness: Verdict,
    pub view_bands: Verdict,
    pub join_liveness: Verdict,
    pub op_liveness: Verdict,
    pub atomicity_witness: Verdict,
    pub atomicity_bruteforce: Verdict,
    pub bruteforce_fragments_checked: u64,
    pub bruteforce_fragments_skipped: u64,
}

impl CheckReport {
    pub fn overall(&self) -> Verdict {
        [
            &self.schedule_window,
            &self.schedule_delta,
            &self.schedule_floor,
            &self.schedule_uniqueness,
            &self.counting_bounds,
            &self.active_witness,
            &self.view_bands,
            &self.join_liveness,
            &self.op_liveness,
            &self.atomicity_witness,
            &self.atomicity_bruteforce,
        ]
        .into_iter()
        .fold(Verdict::Pass, |acc, v| acc.and(v.clone()))
    }

    /// Process exit code: 0 pass, 2 fail, 3 not fully checked.
    pub fn exit_code(&self) -> i32 {
        match self.overall() {
            Verdict::Pass => 0,
            Verdict::Fail { .. } => 2,
            Verdict::NotChecked { .. } => 3,
        }
    }
}

/// Runs every checker over a trace.
pub fn check_all(trace: &Trace, bruteforce_cap: usize) -> Result<CheckReport, HistoryError> {
    let history = extract_history(trace)?;
    let model = model::check_model(trace);
    let (bf, checked, skipped) = bruteforce::check_trace_fragments(&history, bruteforce_cap);
    Ok(CheckReport {
        schedule_window: model.schedule_window,
        schedule_delta: model.schedule_delta,
        schedule_floor: model.schedule_floor,
        schedule_uniqueness: model.schedule_uniqueness,
        counting_bounds: model.counting_bounds,
        active_witness: model.active_witness,
        view_bands: model.view_bands,
        join_liveness: check_join_liveness(trace),
        op_liveness: check_op_liveness(trace),
        atomicity_witness: check_atomicity_witness(&history),
        atomicity_bruteforce: bf,
        bruteforce_fragments_checked: checked,
        bruteforce_fragments_skipped: skipped,
    })
}
