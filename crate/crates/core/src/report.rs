//! Text and JSON artifacts of a run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{CostBreakdown, DesignVector, ScheduleSolution};
use crate::mopf::ViolationReport;
use crate::orchestrator::{RunOutcome, RunStatus};
use crate::scenario::Scenario;
use crate::settings::Variant;

/// Largest gap between the objective row and the sum of the other rows
/// that rendering accepts, relative to the objective.
pub const BREAKDOWN_TOLERANCE: f64 = 1e-6;

/// `1234567.8` as `1,234,568`.
pub fn thousands(v: f64) -> String {
    let r = v.round();
    let digits = format!("{}", r.abs() as u128);
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    if r < 0.0 {
        format!("-{out}")
    } else {
        out
    }
}

/// Cost table, one row per line, incomes negative. Refuses a breakdown
/// whose objective disagrees with its rows.
pub fn render_breakdown(b: &CostBreakdown) -> Result<String> {
    let gap = (b.objective - b.row_sum()).abs();
    if gap > BREAKDOWN_TOLERANCE * b.objective.abs().max(1.0) {
        return Err(Error::Report(format!(
            "objective {:.6} differs from the row sum {:.6} by {gap:.3e}",
            b.objective,
            b.row_sum()
        )));
    }
    let rows = b.rows();
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let values: Vec<String> = rows.iter().map(|r| thousands(r.1)).collect();
    let vwidth = values.iter().map(|v| v.len()).max().unwrap_or(0);
    let mut out = String::new();
    for ((label, _), v) in rows.iter().zip(&values) {
        out.push_str(&format!("{label:<width$}  {v:>vwidth$}\n"));
    }
    Ok(out)
}

/// Machine-readable summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub scenario: String,
    pub variant: Variant,
    pub status: RunStatus,
    /// Objective of the returned solution, currency.
    pub objective: Option<f64>,
    /// Lowest NLP upper bound; equals `objective` except for milp-only runs.
    pub lub: Option<f64>,
    pub lub_iteration: Option<usize>,
    pub iterations: usize,
    pub nlp_solves: usize,
    pub elapsed_s: f64,
    pub design: Option<DesignVector>,
    pub design_summary: Vec<String>,
    pub pv_area_m2: Vec<f64>,
    pub breakdown: Option<CostBreakdown>,
    pub violations: Option<usize>,
}

impl ResultDocument {
    pub fn new(s: &Scenario, out: &RunOutcome) -> Self {
        let status = out.ledger.status.expect("finished run");
        ResultDocument {
            scenario: s.name.clone(),
            variant: out.ledger.variant,
            status,
            objective: out.best.as_ref().map(|b| b.objective),
            lub: out.ledger.lub(),
            lub_iteration: out.ledger.lub_iteration,
            iterations: out.ledger.iterations.len(),
            nlp_solves: out.ledger.total_nlp_solves(),
            elapsed_s: out.ledger.total_s,
            design: out.best.as_ref().map(|b| b.design.clone()),
            design_summary: out.best.as_ref().map(|b| b.design.describe(s)).unwrap_or_default(),
            pv_area_m2: out
                .best
                .as_ref()
                .map(|b| b.schedule.dwellings.iter().map(|d| d.pv_area_m2).collect())
                .unwrap_or_default(),
            breakdown: out.breakdown,
            violations: out.audit.as_ref().map(|a| a.violations.len()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))
    }
}

/// Paths of the files written by [`write_artifacts`].
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    pub result: PathBuf,
    pub ledger: PathBuf,
    pub trajectory: PathBuf,
    pub breakdown: Option<PathBuf>,
    pub violations: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the result document, ledger, trajectory and, when a solution
/// exists, its breakdown, violations and schedule into `dir`.
pub fn write_artifacts(dir: &Path, s: &Scenario, out: &RunOutcome) -> Result<ArtifactPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let doc = ResultDocument::new(s, out);
    let paths = ArtifactPaths {
        result: dir.join("result.json"),
        ledger: dir.join("ledger.jsonl"),
        trajectory: dir.join("trajectory.csv"),
        breakdown: out.breakdown.map(|_| dir.join("breakdown.txt")),
        violations: out.audit.as_ref().map(|_| dir.join("violations.csv")),
        schedule: out.best.as_ref().map(|_| dir.join("schedule.json")),
    };
    write_text(&paths.result, &doc.to_json()?)?;
    out.ledger.write_jsonl(create(&paths.ledger)?)?;
    out.ledger.write_trajectory_csv(create(&paths.trajectory)?)?;
    if let (Some(p), Some(b)) = (&paths.breakdown, &out.breakdown) {
        write_text(p, &render_breakdown(b)?)?;
    }
    if let (Some(p), Some(a)) = (&paths.violations, &out.audit) {
        a.write_csv(create(p)?)?;
    }
    if let (Some(p), Some(b)) = (&paths.schedule, &out.best) {
        write_schedule(p, &b.schedule)?;
    }
    Ok(paths)
}

pub fn write_schedule(path: &Path, schedule: &ScheduleSolution) -> Result<()> {
    let text = serde_json::to_string(schedule).map_err(|e| Error::Report(e.to_string()))?;
    write_text(path, &text)
}

pub fn read_schedule(path: &Path) -> Result<ScheduleSolution> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), None, "schedule", e.to_string()))
}

/// One-paragraph summary of an audit.
pub fn describe_audit(r: &ViolationReport) -> String {
    format!(
        "{} violations ({} v_max, {} v_min); magnitudes {:.4}..{:.4} pu; worst margin {:.2e} pu; oracle residual {:.1e} pu",
        r.violations.len(),
        r.count(crate::mopf::Quantity::VMax),
        r.count(crate::mopf::Quantity::VMin),
        r.v_min_seen,
        r.v_max_seen,
        r.worst_margin,
        r.max_residual
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_groups_digits() {
        assert_eq!(thousands(0.0), "0");
        assert_eq!(thousands(999.4), "999");
        assert_eq!(thousands(2477.0), "2,477");
        assert_eq!(thousands(-2477.2), "-2,477");
        assert_eq!(thousands(1234567.8), "1,234,568");
    }

    #[test]
    fn incomes_render_negative() {
        let mut b = CostBreakdown {
            electricity_purchase: 5000.0,
            export_income: 2477.0,
            ..Default::default()
        };
        b.objective = b.row_sum();
        let text = render_breakdown(&b).unwrap();
        let line = text.lines().find(|l| l.starts_with("Export income")).unwrap();
        assert!(line.ends_with("-2,477"), "{line}");
        assert!(text.lines().next().unwrap().starts_with("Objective value"));
    }

    #[test]
    fn all_zero_rows() {
        let text = render_breakdown(&CostBreakdown::default()).unwrap();
        assert_eq!(text.lines().count(), 12);
        assert!(text.lines().all(|l| l.ends_with(" 0")));
    }

    #[test]
    fn mismatch_is_refused() {
        let b = CostBreakdown {
            electricity_purchase: 100.0,
            objective: 90.0,
            ..Default::default()
        };
        assert!(matches!(render_breakdown(&b), Err(Error::Report(_))));
    }
}
