//! Post-optimisation check of a schedule against the power-flow oracle.

use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{assemble_admittance, newton_from, AdmittanceModel, NetworkState};
use crate::error::{Error, Result};
use crate::milp::ScheduleSolution;
use crate::scenario::{Phase, Scenario};

/// Default margin beyond which band violations are reported, pu.
pub const AUDIT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    VMin,
    VMax,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::VMin => "v_min",
            Quantity::VMax => "v_max",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub season: String,
    pub step: usize,
    pub bus: String,
    pub phase: Phase,
    pub quantity: Quantity,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
    /// Smallest distance of any magnitude to its band, pu; negative when
    /// a bound is exceeded.
    pub worst_margin: f64,
    /// Largest oracle power mismatch over all steps, pu.
    pub max_residual: f64,
    /// Highest and lowest magnitude seen, pu.
    pub v_max_seen: f64,
    pub v_min_seen: f64,
}

impl ViolationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, q: Quantity) -> usize {
        self.violations.iter().filter(|v| v.quantity == q).count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let report = |e: csv::Error| Error::Report(e.to_string());
        out.write_record(["season", "step", "bus", "phase", "quantity", "value", "bound"]).map_err(report)?;
        for v in &self.violations {
            out.write_record([
                v.season.clone(),
                v.step.to_string(),
                v.bus.clone(),
                v.phase.to_string(),
                v.quantity.to_string(),
                format!("{:.6}", v.value),
                format!("{:.6}", v.bound),
            ])
            .map_err(report)?;
        }
        out.flush().map_err(|e| Error::Report(e.to_string()))
    }
}

/// Report plus the oracle states, `[season][step]`.
#[derive(Debug, Clone)]
pub struct AuditResult {
    pub report: ViolationReport,
    pub states: Vec<Vec<NetworkState>>,
}

impl AuditResult {
    /// Largest gap between oracle voltages and the schedule's own, pu.
    /// `None` when the schedule carries no voltages.
    pub fn voltage_mismatch(&self, model: &AdmittanceModel, schedule: &ScheduleSolution) -> Option<f64> {
        let v = schedule.voltages.as_ref()?;
        let free = model.free_nodes();
        let mut worst = 0f64;
        for (s, season) in v.iter().enumerate() {
            for (t, snap) in season.iter().enumerate() {
                let st = &self.states[s][t];
                for (&k, &(re, im)) in free.iter().zip(snap) {
                    worst = worst.max((st.voltages[k] - Complex64::new(re, im)).norm());
                }
            }
        }
        Some(worst)
    }
}

/// Nodal injections, pu, of every step of one season.
pub fn injections(s: &Scenario, model: &AdmittanceModel, schedule: &ScheduleSolution, season: usize, step: usize) -> Vec<Complex64> {
    let mut inj = vec![Complex64::default(); model.dim()];
    for (i, d) in s.dwellings.iter().enumerate() {
        let bus = s.bus_index(&d.bus).expect("validated");
        let k = model.node_index(bus, d.phase).expect("validated");
        let p = schedule.net_injection_kw(i, season, step) / model.s_base_kva;
        let tan_phi = d.power_factor.clamp(0.0, 1.0).acos().tan();
        inj[k] += Complex64::new(p, p * tan_phi);
    }
    inj
}

/// Runs the oracle at every step with the schedule's net injections and
/// collects band violations beyond the scenario's audit tolerance.
pub fn audit_solution(s: &Scenario, schedule: &ScheduleSolution) -> Result<AuditResult> {
    let tol = s.settings.audit_tolerance;
    let model = assemble_admittance(s)?;
    let start = model.no_load_voltages()?;
    let mut report = ViolationReport {
        worst_margin: f64::INFINITY,
        v_min_seen: f64::INFINITY,
        ..Default::default()
    };
    let mut states = Vec::with_capacity(s.seasons.len());
    for (si, season) in s.seasons.iter().enumerate() {
        let mut row = Vec::with_capacity(season.len());
        for t in 0..season.len() {
            let st = newton_from(&model, &injections(s, &model, schedule, si, t), &start)?;
            report.max_residual = report.max_residual.max(st.residual);
            for (k, node) in model.nodes.iter().enumerate() {
                let bus = &s.buses[node.bus];
                let m = st.magnitude(k);
                report.v_max_seen = report.v_max_seen.max(m);
                report.v_min_seen = report.v_min_seen.min(m);
                report.worst_margin = report.worst_margin.min(m - bus.v_min).min(bus.v_max - m);
                let mut push = |quantity, bound| {
                    report.violations.push(Violation {
                        season: season.id.clone(),
                        step: t,
                        bus: bus.id.clone(),
                        phase: node.phase,
                        quantity,
                        value: m,
                        bound,
                    })
                };
                if m > bus.v_max + tol {
                    push(Quantity::VMax, bus.v_max);
                } else if m < bus.v_min - tol {
                    push(Quantity::VMin, bus.v_min);
                }
            }
            row.push(st);
        }
        states.push(row);
    }
    if report.worst_margin == f64::INFINITY {
        report.worst_margin = 0.0;
        report.v_min_seen = 0.0;
    }
    Ok(AuditResult { report, states })
}
