use std::io::Read;

use serde::Serialize;

use crate::actuation::Output;
use crate::controller::{classify, fsm_step, ControllerConfig, FsmState};
use crate::datastore::{read_csv, CsvError, LogRow};
use crate::edge::AlertParam;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mismatch {
    pub line: u64,
    pub timestamp: f64,
    pub logged: String,
    pub expected: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub line: u64,
    pub timestamp: f64,
    pub params: Vec<AlertParam>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ReplayReport {
    pub rows: usize,
    pub mismatches: Vec<Mismatch>,
    pub violations: Vec<Violation>,
}

/// Re-runs classification and the FSM over logged readings and diffs the
/// recomputed outputs against the logged `wp`/`ap` columns.
pub fn replay_rows(rows: &[LogRow], cfg: &ControllerConfig) -> ReplayReport {
    let mut state = FsmState::default();
    let mut report = ReplayReport { rows: rows.len(), ..Default::default() };
    for (i, r) in rows.iter().enumerate() {
        let line = i as u64 + 2;
        let (next, expected) = fsm_step(state, classify(r.ph, r.dissolved_oxygen, cfg));
        state = next;
        let logged = Output::new(r.wp, r.ap);
        if logged != expected {
            report.mismatches.push(Mismatch {
                line,
                timestamp: r.timestamp,
                logged: logged.to_string(),
                expected: expected.to_string(),
            });
        }
        let mut params = Vec::new();
        if !cfg.ph_permissible.contains(r.ph) {
            params.push(AlertParam::Ph);
        }
        if !cfg.do_permissible.contains(r.dissolved_oxygen) {
            params.push(AlertParam::Do);
        }
        if !cfg.tds_permissible.contains(r.tds) {
            params.push(AlertParam::Tds);
        }
        if !params.is_empty() {
            report.violations.push(Violation { line, timestamp: r.timestamp, params });
        }
    }
    report
}

pub fn replay_csv<R: Read>(input: R, cfg: &ControllerConfig) -> Result<ReplayReport, CsvError> {
    Ok(replay_rows(&read_csv(input)?, cfg))
}
