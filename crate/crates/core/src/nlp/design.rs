//! The design NLP: the MILP's continuous model with the design fixed, the
//! buy/sell binaries replaced by a regularised complementarity and the
//! multiphase network added.

use num_complex::Complex64;

use super::{solve_problem, IpmOptions, NlpProblem, QuadRow, SolveOutcome};
use crate::error::{Error, Result};
use crate::milp::{DesignModel, DesignVector, ScheduleSolution, OBJECTIVE_SCALE};
use crate::model::{RowKind, VarKind};
use crate::mopf::{self, add_mopf_constraints, assemble_admittance, AdmittanceModel, InjectionExpr, MopfBlock};
use crate::scenario::Scenario;

/// Complementarity rows are written as `grid * sold / eps <= 1 - margin`
/// so that a solution accepted at the solver's feasibility tolerance still
/// has products no larger than `eps`.
pub const COMPLEMENTARITY_MARGIN: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct NlpParameters {
    /// Bound on every complementarity product, pu^2.
    pub epsilon: f64,
    pub design: DesignVector,
}

/// A built design NLP. Parameters can be changed between solves without
/// touching the constraint structure.
#[derive(Debug, Clone)]
pub struct NlpHandle<'a> {
    scenario: &'a Scenario,
    dm: &'a DesignModel,
    pub problem: NlpProblem,
    /// NLP column of each model variable; `None` for operational binaries.
    columns: Vec<Option<usize>>,
    design_columns: Vec<usize>,
    complementarity_rows: Vec<(usize, usize, usize)>,
    network: AdmittanceModel,
    /// `[season][step]`
    blocks: Vec<Vec<MopfBlock>>,
    params: NlpParameters,
}

fn check_design(s: &Scenario, design: &DesignVector) -> Result<()> {
    let cat = &s.catalog;
    if design.dwellings.len() != s.dwellings.len() {
        return Err(Error::DesignRejected(format!(
            "design covers {} dwellings, the scenario has {}",
            design.dwellings.len(),
            s.dwellings.len()
        )));
    }
    for (d, dw) in design.dwellings.iter().zip(&s.dwellings) {
        if let Some((p, k)) = d.ashp_tank {
            if p >= cat.ashps.len() || k >= cat.tanks.len() {
                return Err(Error::DesignRejected(format!("dwelling `{}` names an unknown heat pump or tank", dw.id)));
            }
            if cat.compatibility.cost(p, k).is_none() {
                return Err(Error::DesignRejected(format!(
                    "dwelling `{}`: tank {} cannot be paired with heat pump {}",
                    dw.id, cat.tanks[k].label, cat.ashps[p].label
                )));
            }
        }
        if d.battery.is_some_and(|c| c >= cat.batteries.len()) || d.boiler.is_some_and(|b| b >= cat.boilers.len()) {
            return Err(Error::DesignRejected(format!("dwelling `{}` names an unknown battery or boiler", dw.id)));
        }
    }
    Ok(())
}

/// Builds the NLP for `design` from the design model of `s`. Starts from
/// the no-load network state with every schedule variable at zero; use
/// [`NlpHandle::warm_start`] to start from a schedule.
pub fn build_nlp<'a>(s: &'a Scenario, dm: &'a DesignModel, design: &DesignVector, epsilon: f64) -> Result<NlpHandle<'a>> {
    check_design(s, design)?;
    let m = &dm.model;
    let mut p = NlpProblem::default();
    let mut columns = vec![None; m.n_vars()];
    for (j, v) in m.vars.iter().enumerate() {
        if v.kind == VarKind::Operational {
            continue;
        }
        let c = p.add_var(v.name.clone(), v.lo, v.hi, v.lo.max(0.0).min(v.hi));
        p.obj[c] = m.objective[j];
        columns[j] = Some(c);
    }
    p.obj_offset = m.objective_offset;
    let design_columns: Vec<usize> = dm.design_vars.iter().map(|v| columns[v.0].expect("design column")).collect();

    for r in m.rows.iter().filter(|r| r.kind == RowKind::Plain) {
        let scale = r.terms.iter().fold(0f64, |a, t| a.max(t.1.abs()));
        if scale == 0.0 {
            continue;
        }
        p.rows.push(QuadRow {
            name: r.name.clone(),
            lin: r.terms.iter().map(|&(v, c)| (columns[v.0].expect("plain rows use no binaries"), c / scale)).collect(),
            quad: Vec::new(),
            lo: r.lo / scale,
            hi: r.hi / scale,
        });
    }

    let mut complementarity_rows = Vec::new();
    let mut add_comp = |p: &mut NlpProblem, name: String, a: usize, b: usize| {
        complementarity_rows.push((p.rows.len(), a, b));
        p.rows.push(QuadRow {
            name,
            lin: Vec::new(),
            quad: vec![(a, b, 1.0)],
            lo: f64::NEG_INFINITY,
            hi: 1.0 - COMPLEMENTARITY_MARGIN,
        });
    };
    for (i, seasons) in dm.steps.iter().enumerate() {
        for (si, steps) in seasons.iter().enumerate() {
            for (t, sv) in steps.iter().enumerate() {
                let tag = format!("{},{},{}", s.dwellings[i].id, s.seasons[si].id, t + 1);
                let col = |v: crate::model::VarId| columns[v.0].expect("schedule column");
                add_comp(&mut p, format!("buy_sell[{tag}]"), col(sv.grid), col(sv.sold));
                if s.settings.battery_complementarity {
                    for (c, b) in s.catalog.batteries.iter().enumerate() {
                        add_comp(&mut p, format!("ch_dis_{}[{tag}]", b.label), col(sv.ch[c]), col(sv.dis[c]));
                    }
                }
            }
        }
    }

    let network = assemble_admittance(s)?;
    let start = network.no_load_voltages()?;
    let mut blocks = Vec::with_capacity(s.seasons.len());
    for (si, season) in s.seasons.iter().enumerate() {
        let mut row = Vec::with_capacity(season.len());
        for t in 0..season.len() {
            let injections: Vec<InjectionExpr> = s
                .dwellings
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let sv = &dm.steps[i][si][t];
                    let bus = s.bus_index(&d.bus).expect("validated");
                    InjectionExpr {
                        node: network.node_index(bus, d.phase).expect("validated"),
                        terms: vec![(columns[sv.sold.0].unwrap(), 1.0), (columns[sv.grid.0].unwrap(), -1.0)],
                        tan_phi: d.power_factor.clamp(0.0, 1.0).acos().tan(),
                    }
                })
                .collect();
            row.push(add_mopf_constraints(&mut p, &network, s, &format!("{},{}", season.id, t + 1), &injections, &start));
        }
        blocks.push(row);
    }

    let mut h = NlpHandle {
        scenario: s,
        dm,
        problem: p,
        columns,
        design_columns,
        complementarity_rows,
        network,
        blocks,
        params: NlpParameters {
            epsilon,
            design: design.clone(),
        },
    };
    h.apply_design();
    h.set_epsilon(epsilon);
    Ok(h)
}

impl<'a> NlpHandle<'a> {
    pub fn parameters(&self) -> &NlpParameters {
        &self.params
    }

    pub fn epsilon(&self) -> f64 {
        self.params.epsilon
    }

    pub fn network(&self) -> &AdmittanceModel {
        &self.network
    }

    /// Number of integer variables: always zero.
    pub fn n_binaries(&self) -> usize {
        0
    }

    pub fn set_epsilon(&mut self, eps: f64) {
        assert!(eps > 0.0, "epsilon must be positive");
        self.params.epsilon = eps;
        for &(r, _, _) in &self.complementarity_rows {
            self.problem.rows[r].quad[0].2 = 1.0 / eps;
        }
    }

    pub fn set_design(&mut self, design: &DesignVector) -> Result<()> {
        check_design(self.scenario, design)?;
        self.params.design = design.clone();
        self.apply_design();
        Ok(())
    }

    fn apply_design(&mut self) {
        let z = self.params.design.to_binaries(&self.dm.layout);
        for (&c, on) in self.design_columns.iter().zip(z) {
            let v = if on { 1.0 } else { 0.0 };
            self.problem.lo[c] = v;
            self.problem.hi[c] = v;
            self.problem.x0[c] = v;
        }
    }

    /// Starts the next solve from a schedule: operation from the schedule
    /// itself, voltages from the power-flow oracle at its injections (or
    /// the no-load state where the oracle fails).
    pub fn warm_start(&mut self, schedule: &ScheduleSolution) {
        let xm = self.dm.x_from_schedule(&self.params.design, schedule);
        for (j, c) in self.columns.iter().enumerate() {
            if let Some(c) = *c {
                if !self.design_columns.contains(&c) {
                    self.problem.x0[c] = xm[j];
                }
            }
        }
        let no_load = self.network.no_load_voltages().expect("checked at build");
        for (si, row) in self.blocks.iter().enumerate() {
            for (t, block) in row.iter().enumerate() {
                let inj = mopf::injections(self.scenario, &self.network, schedule, si, t);
                let v = mopf::newton_from(&self.network, &inj, &no_load).map(|st| st.voltages).unwrap_or_else(|_| no_load.clone());
                for (k, vv) in block.voltage_vars.iter().enumerate() {
                    if let Some((r, i)) = *vv {
                        self.problem.x0[r] = v[k].re;
                        self.problem.x0[i] = v[k].im;
                    }
                }
            }
        }
    }

    /// Starts the next solve from an earlier NLP point.
    pub fn set_start(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.problem.n());
        self.problem.x0.copy_from_slice(x);
        self.apply_design();
    }

    pub fn solve(&self, opts: &IpmOptions) -> SolveOutcome {
        solve_problem(&self.problem, opts)
    }

    /// Objective in currency.
    pub fn currency(&self, objective: f64) -> f64 {
        objective * OBJECTIVE_SCALE
    }

    /// Largest buy/sell (and, when enabled, charge/discharge) product, pu^2.
    pub fn max_complementarity(&self, x: &[f64]) -> f64 {
        self.complementarity_rows.iter().fold(0f64, |m, &(_, a, b)| m.max(x[a] * x[b]))
    }

    /// Physical schedule with network voltages at an NLP point.
    pub fn schedule(&self, x: &[f64]) -> ScheduleSolution {
        let mut xm = vec![0.0; self.columns.len()];
        for (j, c) in self.columns.iter().enumerate() {
            if let Some(c) = *c {
                xm[j] = x[c];
            }
        }
        let mut out = self.dm.schedule_from_x(&xm, &self.scenario.catalog, false);
        let free = self.network.free_nodes();
        out.voltages = Some(
            self.blocks
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|b| {
                            let v = b.voltages(&self.network, x);
                            free.iter().map(|&k| (v[k].re, v[k].im)).collect()
                        })
                        .collect()
                })
                .collect(),
        );
        out
    }

    /// Voltage phasors of one step at an NLP point.
    pub fn voltages(&self, x: &[f64], season: usize, step: usize) -> Vec<Complex64> {
        self.blocks[season][step].voltages(&self.network, x)
    }
}
