use highs::{HighsModelStatus, RowProblem, Sense};

use super::{MilpBackend, MilpOptions, MilpOutcome, MilpStatus};
use crate::model::{LinearModel, LinearRow, VarKind};

/// Adapter for the HiGHS branch-and-cut solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

impl MilpBackend for HighsBackend {
    fn solve(&self, model: &LinearModel, extra_rows: &[LinearRow], opts: &MilpOptions, warm_start: Option<&[f64]>) -> MilpOutcome {
        let mut pb = RowProblem::default();
        let cols: Vec<_> = model
            .vars
            .iter()
            .zip(&model.objective)
            .map(|(v, &c)| pb.add_column_with_integrality(c, v.lo..=v.hi, v.kind != VarKind::Continuous))
            .collect();
        for r in model.rows.iter().chain(extra_rows) {
            pb.add_row(r.lo..=r.hi, r.terms.iter().map(|&(v, c)| (cols[v.0], c)));
        }
        let mut m = pb.optimise(Sense::Minimise);
        m.make_quiet();
        m.set_option("mip_rel_gap", opts.mip_rel_gap);
        // Small objectives in model units: keep the absolute gap from dominating.
        m.set_option("mip_abs_gap", 1e-9);
        if let Some(t) = opts.time_limit_s {
            m.set_option("time_limit", t.max(1e-3));
        }
        if let Some(x) = warm_start {
            if m.try_set_solution(Some(x), None, None, None).is_err() {
                log::debug!("HiGHS rejected the warm start");
            }
        }
        let solved = match m.try_solve() {
            Ok(s) => s,
            Err(e) => {
                return MilpOutcome {
                    status: MilpStatus::Failed,
                    x: Vec::new(),
                    detail: format!("{e:?}"),
                }
            }
        };
        let status = match solved.status() {
            HighsModelStatus::Optimal => MilpStatus::Optimal,
            // The design model is bounded, so this can only mean infeasible.
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => MilpStatus::Infeasible,
            HighsModelStatus::ReachedTimeLimit => MilpStatus::TimeLimit,
            _ => MilpStatus::Failed,
        };
        let x = if status == MilpStatus::Optimal {
            solved.get_solution().columns().to_vec()
        } else {
            Vec::new()
        };
        MilpOutcome {
            status,
            x,
            detail: format!("{:?}", solved.status()),
        }
    }
}
