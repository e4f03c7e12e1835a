//! The decomposition loop: MILP for a design and a lower bound, the design
//! NLP for an upper bound, a no-good cut, repeat.

mod ledger;

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::complementarity::{run_cr, run_cr_h, CrResult};
use crate::error::{Error, Result};
use crate::milp::{
    build_milp, extract_breakdown, solve_milp, solve_milp_fixed, CostBreakdown, DesignLayout, DesignModel, DesignVector, HighsBackend,
    MilpBackend, MilpOptions, MilpStatus, ScheduleSolution,
};
use crate::mopf::{audit_solution, ViolationReport};
use crate::nlp::{build_nlp, IpmOptions};
use crate::scenario::Scenario;
use crate::settings::{AlgorithmSettings, Variant};

pub use ledger::{BoundsLedger, IterationRecord};

/// Excludes one assignment of the design binaries:
/// `sum(zeros) + sum(1 - ones) >= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerCut {
    pub iteration: usize,
    pub ones: Vec<usize>,
    pub zeros: Vec<usize>,
}

impl IntegerCut {
    /// Left-hand side at `z`.
    pub fn lhs(&self, z: &[bool]) -> usize {
        self.zeros.iter().filter(|&&j| z[j]).count() + self.ones.iter().filter(|&&j| !z[j]).count()
    }

    pub fn excludes(&self, z: &[bool]) -> bool {
        self.lhs(z) < 1
    }
}

pub fn make_cut(design: &DesignVector, layout: &DesignLayout, iteration: usize) -> IntegerCut {
    let z = design.to_binaries(layout);
    let (ones, zeros) = (0..z.len()).partition(|&j| z[j]);
    IntegerCut { iteration, ones, zeros }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    ConvergedBoundCrossing,
    ConvergedExhausted,
    TimeLimit,
    MaxIterations,
    /// The first MILP answer, taken as final by request.
    MilpOnly,
    /// The MILP backend failed.
    SolverFailure,
}

impl RunStatus {
    pub fn converged(self) -> bool {
        matches!(self, RunStatus::ConvergedBoundCrossing | RunStatus::ConvergedExhausted | RunStatus::MilpOnly)
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::ConvergedBoundCrossing => "converged-bound-crossing",
            RunStatus::ConvergedExhausted => "converged-exhausted",
            RunStatus::TimeLimit => "time-limit",
            RunStatus::MaxIterations => "max-iterations",
            RunStatus::MilpOnly => "milp-only",
            RunStatus::SolverFailure => "solver-failure",
        })
    }
}

/// Best solution found by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub iteration: usize,
    pub design: DesignVector,
    pub schedule: ScheduleSolution,
    /// Currency.
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub ledger: BoundsLedger,
    pub best: Option<Incumbent>,
    pub breakdown: Option<CostBreakdown>,
    /// Audit of the best schedule.
    pub audit: Option<ViolationReport>,
}

fn ipm_options(settings: &AlgorithmSettings, deadline: Option<Instant>) -> IpmOptions {
    IpmOptions {
        tol: settings.nlp_tolerance,
        max_iterations: settings.nlp_max_iterations,
        deadline,
        ..IpmOptions::default()
    }
}

/// Runs the scenario's algorithm with HiGHS and no iteration callback.
pub fn run(s: &Scenario) -> Result<RunOutcome> {
    run_with(s, &HighsBackend, &mut |_| {})
}

/// Runs the variant in `s.settings`, calling `on_iteration` after each
/// iteration is recorded.
pub fn run_with(s: &Scenario, backend: &dyn MilpBackend, on_iteration: &mut dyn FnMut(&IterationRecord)) -> Result<RunOutcome> {
    let set = &s.settings;
    set.validate()?;
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(set.time_limit_s);
    let dm = build_milp(s)?;
    let mut ledger = BoundsLedger::new(set.variant);
    let mut cuts: Vec<IntegerCut> = Vec::new();
    let mut best: Option<Incumbent> = None;
    let mut status = RunStatus::MaxIterations;

    for it in 1..=set.max_iterations {
        let remaining = deadline.saturating_duration_since(Instant::now()).as_secs_f64();
        if remaining <= 0.0 {
            status = RunStatus::TimeLimit;
            break;
        }
        let t0 = Instant::now();
        let milp = solve_milp(
            &dm,
            &s.catalog,
            &cuts,
            &MilpOptions {
                mip_rel_gap: set.mip_rel_gap,
                time_limit_s: Some(remaining),
            },
            backend,
        );
        let milp_s = t0.elapsed().as_secs_f64();
        match milp.status {
            MilpStatus::Optimal => {}
            MilpStatus::Infeasible => {
                status = RunStatus::ConvergedExhausted;
                break;
            }
            MilpStatus::TimeLimit => {
                status = RunStatus::TimeLimit;
                break;
            }
            MilpStatus::Failed => {
                status = RunStatus::SolverFailure;
                break;
            }
        }
        let (design, schedule, lb) = (milp.design.unwrap(), milp.schedule.unwrap(), milp.lb.unwrap());
        let mut rec = IterationRecord {
            iteration: it,
            lb,
            ub: None,
            lub: ledger.lub(),
            termination: None,
            nlp_solves: 0,
            design: design.describe(s),
            milp_s,
            nlp_s: 0.0,
            elapsed_s: 0.0,
        };

        if set.variant == Variant::MilpOnly {
            rec.elapsed_s = start.elapsed().as_secs_f64();
            ledger.push(rec);
            on_iteration(ledger.iterations.last().unwrap());
            best = Some(Incumbent {
                iteration: it,
                design,
                objective: schedule.objective,
                schedule,
            });
            status = RunStatus::MilpOnly;
            break;
        }

        if set.stop_on_bound_crossing && ledger.lub().is_some_and(|l| lb > l) {
            rec.elapsed_s = start.elapsed().as_secs_f64();
            ledger.push(rec);
            on_iteration(ledger.iterations.last().unwrap());
            status = RunStatus::ConvergedBoundCrossing;
            break;
        }

        let t1 = Instant::now();
        let cr = evaluate_design(s, &dm, &design, &schedule, set, Some(deadline), ledger.lub())?;
        rec.nlp_s = t1.elapsed().as_secs_f64();
        rec.termination = Some(cr.termination);
        rec.nlp_solves = cr.solves();
        rec.ub = cr.ub;
        if let (Some(ub), Some(sched)) = (cr.ub, cr.schedule) {
            if ledger.lub().map_or(true, |l| ub < l) {
                best = Some(Incumbent {
                    iteration: it,
                    design: design.clone(),
                    schedule: sched,
                    objective: ub,
                });
            }
        } else {
            log::info!("iteration {it}: no upper bound ({})", cr.termination);
        }
        cuts.push(make_cut(&design, &dm.layout, it));
        rec.lub = best.as_ref().map(|b| b.objective);
        rec.elapsed_s = start.elapsed().as_secs_f64();
        log::info!(
            "iteration {it}: LB {lb:.4} UB {} LUB {}",
            rec.ub.map_or("-".into(), |u| format!("{u:.4}")),
            rec.lub.map_or("-".into(), |u| format!("{u:.4}"))
        );
        ledger.push(rec);
        on_iteration(ledger.iterations.last().unwrap());
        if Instant::now() >= deadline {
            status = RunStatus::TimeLimit;
            break;
        }
    }

    ledger.status = Some(status);
    ledger.total_s = start.elapsed().as_secs_f64();
    ledger.lub_iteration = best.as_ref().map(|b| b.iteration);
    let (breakdown, audit) = match &best {
        Some(b) => (
            Some(extract_breakdown(s, &b.design, &b.schedule)),
            Some(audit_solution(s, &b.schedule)?.report),
        ),
        None => (None, None),
    };
    Ok(RunOutcome {
        ledger,
        best,
        breakdown,
        audit,
    })
}

/// One NLP evaluation of `design`, warm-started from `schedule`. CR-H is
/// used for the heuristic variant, with `lub` as the cutoff.
pub fn evaluate_design(
    s: &Scenario,
    dm: &DesignModel,
    design: &DesignVector,
    schedule: &ScheduleSolution,
    set: &AlgorithmSettings,
    deadline: Option<Instant>,
    lub: Option<f64>,
) -> Result<CrResult> {
    let mut h = build_nlp(s, dm, design, set.epsilon.initial)?;
    let opts = ipm_options(set, deadline);
    Ok(match set.variant {
        Variant::PaH => run_cr_h(&mut h, &set.epsilon, Some(schedule), &opts, lub),
        _ => run_cr(&mut h, &set.epsilon, Some(schedule), &opts),
    })
}

/// Best design by exhaustive enumeration, each design screened by a
/// fixed-design MILP and then evaluated with CR.
#[derive(Debug, Clone)]
pub struct BruteForce {
    pub best: Option<Incumbent>,
    /// `(design, UB)` of every design the MILP screen accepted.
    pub evaluated: Vec<(DesignVector, Option<f64>)>,
    pub combinations: usize,
}

pub fn brute_force_reference(s: &Scenario) -> Result<BruteForce> {
    let set = &s.settings;
    let dm = build_milp(s)?;
    let n = dm.layout.n_combinations();
    if n > set.brute_force_cap as u128 {
        return Err(Error::EnumerationCap {
            combinations: n,
            cap: set.brute_force_cap,
        });
    }
    let designs = DesignVector::enumerate(&dm.layout);
    let mut out = BruteForce {
        best: None,
        evaluated: Vec::new(),
        combinations: designs.len(),
    };
    let milp_opts = MilpOptions {
        mip_rel_gap: set.mip_rel_gap,
        time_limit_s: None,
    };
    for design in designs {
        let milp = solve_milp_fixed(&dm, &s.catalog, &design, &milp_opts, &HighsBackend);
        let Some(schedule) = milp.schedule else { continue };
        let cr = evaluate_design(s, &dm, &design, &schedule, &AlgorithmSettings { variant: Variant::Pa, ..*set }, None, None)?;
        log::debug!("{:?}: {} {:?}", design.describe(s), cr.termination, cr.ub);
        if let (Some(ub), Some(sched)) = (cr.ub, cr.schedule) {
            if out.best.as_ref().map_or(true, |b| ub < b.objective) {
                out.best = Some(Incumbent {
                    iteration: 0,
                    design: design.clone(),
                    schedule: sched,
                    objective: ub,
                });
            }
        }
        out.evaluated.push((design, cr.ub));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::DwellingDesign;

    #[test]
    fn cut_excludes_only_its_assignment() {
        let cut = IntegerCut {
            iteration: 1,
            ones: vec![0],
            zeros: vec![1],
        };
        for z in [[false, false], [false, true], [true, false], [true, true]] {
            assert_eq!(cut.excludes(&z), z == [true, false]);
        }
        let all_zero = IntegerCut {
            iteration: 2,
            ones: vec![],
            zeros: vec![0, 1, 2],
        };
        assert!(all_zero.excludes(&[false; 3]));
        assert_eq!(all_zero.lhs(&[true, false, true]), 2);
    }

    #[test]
    fn make_cut_partitions_binaries() {
        let layout = DesignLayout {
            n_dwellings: 1,
            pairs: vec![(0, 0)],
            n_batteries: 1,
            n_boilers: 1,
        };
        let d = DesignVector {
            dwellings: vec![DwellingDesign {
                ashp_tank: None,
                battery: Some(0),
                boiler: Some(0),
            }],
        };
        let cut = make_cut(&d, &layout, 3);
        let z = d.to_binaries(&layout);
        assert_eq!(cut.ones.len() + cut.zeros.len(), z.len());
        assert!(cut.excludes(&z));
        for other in DesignVector::enumerate(&layout).into_iter().filter(|o| *o != d) {
            assert!(!cut.excludes(&other.to_binaries(&layout)));
        }
    }
}
