use std::io::Write;

use serde::{Deserialize, Serialize};

use super::RunStatus;
use crate::complementarity::Termination;
use crate::error::{Error, Result};
use crate::settings::Variant;

/// One iteration of the loop. Bounds are in currency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lb: f64,
    /// Absent when the NLP was skipped or did not meet complementarity.
    pub ub: Option<f64>,
    /// Incumbent after this iteration.
    pub lub: Option<f64>,
    pub termination: Option<Termination>,
    pub nlp_solves: usize,
    pub design: Vec<String>,
    pub milp_s: f64,
    pub nlp_s: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsLedger {
    pub variant: Variant,
    pub iterations: Vec<IterationRecord>,
    pub lub_iteration: Option<usize>,
    /// `None` while running.
    pub status: Option<RunStatus>,
    pub total_s: f64,
}

impl BoundsLedger {
    pub fn new(variant: Variant) -> Self {
        BoundsLedger {
            variant,
            iterations: Vec::new(),
            lub_iteration: None,
            status: None,
            total_s: 0.0,
        }
    }

    pub fn push(&mut self, rec: IterationRecord) {
        self.iterations.push(rec);
    }

    /// Lowest recorded upper bound.
    pub fn lub(&self) -> Option<f64> {
        self.iterations.iter().filter_map(|r| r.ub).min_by(f64::total_cmp)
    }

    pub fn last_lb(&self) -> Option<f64> {
        self.iterations.last().map(|r| r.lb)
    }

    pub fn total_nlp_solves(&self) -> usize {
        self.iterations.iter().map(|r| r.nlp_solves).sum()
    }

    /// Checks the bound relations with relative slack `tol`; returns the
    /// first broken one.
    pub fn check(&self, tol: f64) -> std::result::Result<(), String> {
        let slack = |v: f64| tol * v.abs().max(1.0);
        let mut lub: Option<f64> = None;
        for (k, r) in self.iterations.iter().enumerate() {
            if r.iteration != k + 1 {
                return Err(format!("record {k} carries iteration {}", r.iteration));
            }
            if k > 0 && r.lb < self.iterations[k - 1].lb - slack(r.lb) {
                return Err(format!("LB decreased at iteration {}", r.iteration));
            }
            if let Some(ub) = r.ub {
                if ub < r.lb - slack(r.lb) {
                    return Err(format!("UB {ub} below LB {} at iteration {}", r.lb, r.iteration));
                }
                lub = Some(lub.map_or(ub, |l| l.min(ub)));
            }
            if r.lub != lub {
                return Err(format!("LUB at iteration {} is {:?}, expected {lub:?}", r.iteration, r.lub));
            }
        }
        if self.status == Some(RunStatus::ConvergedBoundCrossing) {
            match (self.last_lb(), lub) {
                (Some(lb), Some(l)) if lb > l => {}
                _ => return Err("bound crossing claimed without LB > LUB".into()),
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.iterations {
            let line = serde_json::to_string(r).map_err(|e| Error::Report(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::Report(e.to_string()))?;
        }
        Ok(())
    }

    /// Bound trajectory for plotting: one row per iteration.
    pub fn write_trajectory_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Report(e.to_string());
        out.write_record(["iteration", "lb", "ub", "lub", "termination", "nlp_solves", "elapsed_s"]).map_err(err)?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        for r in &self.iterations {
            out.write_record([
                r.iteration.to_string(),
                format!("{:.6}", r.lb),
                opt(r.ub),
                opt(r.lub),
                r.termination.map(|t| t.to_string()).unwrap_or_default(),
                r.nlp_solves.to_string(),
                format!("{:.3}", r.elapsed_s),
            ])
            .map_err(err)?;
        }
        out.flush().map_err(|e| Error::Report(e.to_string()))
    }
}
