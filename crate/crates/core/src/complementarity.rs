//! Regularised buy/sell complementarity: `grid * sold <= eps`, tightened
//! solve by solve until the products vanish.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::milp::ScheduleSolution;
use crate::nlp::{IpmOptions, NlpHandle, NlpStatus};
use crate::settings::EpsilonSchedule;

/// Initial barrier parameter for solves restarted from an earlier optimum;
/// a large value would first pull the point back to the analytic centre.
pub const WARM_MU_INIT: f64 = 1e-4;

/// Complementarity residual of one pair: the product itself.
pub fn residual(a: f64, b: f64) -> f64 {
    a * b
}

pub fn is_satisfied(a: f64, b: f64, eps: f64) -> bool {
    residual(a, b) <= eps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// A locally optimal point with every product at most `eps_min`.
    ComplementarityMet,
    /// A relaxed objective exceeded the incumbent.
    HeuristicCutoff,
    /// Locally optimal points were found but never one meeting `eps_min`.
    EpsFloor,
    /// No solve reached local optimality.
    NotLocallyOptimal,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::ComplementarityMet => "complementarity-met",
            Termination::HeuristicCutoff => "heuristic-cutoff",
            Termination::EpsFloor => "eps-floor",
            Termination::NotLocallyOptimal => "not-locally-optimal",
        })
    }
}

/// One NLP solve of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrStep {
    pub epsilon: f64,
    pub status: NlpStatus,
    /// Currency.
    pub objective: f64,
    pub max_complementarity: f64,
    pub max_violation: f64,
    pub ipm_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrResult {
    /// Only present when complementarity was met.
    pub schedule: Option<ScheduleSolution>,
    /// Currency; only present when complementarity was met.
    pub ub: Option<f64>,
    pub final_eps: f64,
    pub termination: Termination,
    pub trace: Vec<CrStep>,
}

impl CrResult {
    /// Number of NLP solves.
    pub fn solves(&self) -> usize {
        self.trace.len()
    }
}

/// Algorithm CR. The handle's design is used as fixed; `warm` seeds the
/// first solve.
pub fn run_cr(h: &mut NlpHandle, schedule: &EpsilonSchedule, warm: Option<&ScheduleSolution>, opts: &IpmOptions) -> CrResult {
    run(h, schedule, warm, opts, None)
}

/// Algorithm CR-H: as [`run_cr`] but stops as soon as a locally optimal
/// relaxed objective exceeds `lub`. Failed solves never trigger the cutoff.
pub fn run_cr_h(
    h: &mut NlpHandle,
    schedule: &EpsilonSchedule,
    warm: Option<&ScheduleSolution>,
    opts: &IpmOptions,
    lub: Option<f64>,
) -> CrResult {
    run(h, schedule, warm, opts, lub)
}

fn run(h: &mut NlpHandle, sched: &EpsilonSchedule, warm: Option<&ScheduleSolution>, opts: &IpmOptions, lub: Option<f64>) -> CrResult {
    if let Some(w) = warm {
        h.warm_start(w);
    }
    let mut eps = sched.initial;
    let mut trace = Vec::new();
    let mut last_ok: Option<Vec<f64>> = None;
    let finish = |termination, eps, trace, hit: Option<(ScheduleSolution, f64)>| {
        let (schedule, ub) = hit.map_or((None, None), |(s, u)| (Some(s), Some(u)));
        CrResult {
            schedule,
            ub,
            final_eps: eps,
            termination,
            trace,
        }
    };
    for _ in 0..sched.max_iterations {
        if opts.deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        h.set_epsilon(eps);
        let mut o = *opts;
        if last_ok.is_some() {
            o.mu_init = o.mu_init.min(WARM_MU_INIT);
        }
        let out = h.solve(&o);
        let comp = h.max_complementarity(&out.x);
        let objective = h.currency(out.objective);
        log::debug!("CR eps {eps:.1e}: {} objective {objective:.4} complementarity {comp:.2e}", out.status);
        trace.push(CrStep {
            epsilon: eps,
            status: out.status,
            objective,
            max_complementarity: comp,
            max_violation: out.max_violation,
            ipm_iterations: out.iterations,
        });
        if out.status != NlpStatus::LocallyOptimal {
            eps *= sched.increase_factor;
            if let Some(x) = &last_ok {
                h.set_start(x);
            }
            continue;
        }
        if lub.is_some_and(|l| objective > l) {
            return finish(Termination::HeuristicCutoff, eps, trace, None);
        }
        if comp <= sched.min {
            let mut s = h.schedule(&out.x);
            s.objective = objective;
            return finish(Termination::ComplementarityMet, eps, trace, Some((s, objective)));
        }
        h.set_start(&out.x);
        last_ok = Some(out.x);
        eps = (eps * sched.reduction_factor).max(sched.min);
    }
    let termination = if last_ok.is_some() {
        Termination::EpsFloor
    } else {
        Termination::NotLocallyOptimal
    };
    finish(termination, eps, trace, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_residuals() {
        assert_eq!(residual(0.0, 3.2), 0.0);
        assert!(is_satisfied(0.0, 3.2, 0.0));
        assert_eq!(residual(0.5, 0.5), 0.25);
        assert!(!is_satisfied(0.5, 0.5, 0.1));
    }
}
