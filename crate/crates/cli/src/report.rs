//! Per-run summaries: which cases succeeded, which failed and why.

use std::path::Path;

use modaprep_core::Result;
use serde::{Deserialize, Serialize};

/// A case that could not be processed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCase {
    /// Case identifier.
    pub case_id: String,
    /// Error message.
    pub error: String,
}

/// Machine-readable outcome of one command run. Case lists are sorted
/// by id so re-runs produce byte-identical files regardless of worker
/// count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// The subcommand that produced this report.
    pub command: String,
    /// Ids of the cases that completed.
    pub succeeded: Vec<String>,
    /// Cases that failed, with reasons.
    pub failed: Vec<FailedCase>,
}

impl RunReport {
    /// Assemble a report from per-case outcomes, sorting both lists.
    pub fn from_outcomes(
        command: &str,
        outcomes: Vec<(String, std::result::Result<(), String>)>,
    ) -> Self {
        let mut succeeded = Vec::new();
        let mut failed = Vec::new();
        for (case_id, outcome) in outcomes {
            match outcome {
                Ok(()) => succeeded.push(case_id),
                Err(error) => failed.push(FailedCase { case_id, error }),
            }
        }
        succeeded.sort_unstable();
        failed.sort_unstable_by(|a, b| a.case_id.cmp(&b.case_id));
        Self {
            command: command.to_string(),
            succeeded,
            failed,
        }
    }

    /// True when no case failed.
    pub fn all_ok(&self) -> bool {
        self.failed.is_empty()
    }

    /// Write the report as `report.json` into `dir`.
    pub fn save_into(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(dir.join("report.json"), json)?;
        Ok(())
    }

    /// One-line human summary, plus per-failure lines on stderr.
    pub fn print_summary(&self) {
        println!(
            "{}: {} case(s) ok, {} failed",
            self.command,
            self.succeeded.len(),
            self.failed.len()
        );
        for failure in &self.failed {
            eprintln!("  {}: {}", failure.case_id, failure.error);
        }
    }
}
