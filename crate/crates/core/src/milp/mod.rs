//! Mixed-integer design model: device selection, operation and costs.

mod breakdown;
mod build;
mod highs;

use serde::{Deserialize, Serialize};

use crate::catalog::TechnologyCatalog;
use crate::model::{LinearModel, LinearRow, RowKind, VarId};
use crate::orchestrator::IntegerCut;
use crate::scenario::Scenario;

pub use breakdown::{extract_breakdown, percentage_difference, CostBreakdown};
pub use build::{build_milp, design_costs, tariff_at, AshpTables, OBJECTIVE_SCALE, TANK_TEMPERATURE_OFFSET};
pub use highs::HighsBackend;

/// Order of the design binaries: per dwelling, feasible heat pump/tank
/// pairs, then batteries, then boilers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignLayout {
    pub n_dwellings: usize,
    pub pairs: Vec<(usize, usize)>,
    pub n_batteries: usize,
    pub n_boilers: usize,
}

impl DesignLayout {
    pub fn new(cat: &TechnologyCatalog, n_dwellings: usize) -> Self {
        DesignLayout {
            n_dwellings,
            pairs: cat.compatibility.pairs().map(|(p, k, _)| (p, k)).collect(),
            n_batteries: cat.batteries.len(),
            n_boilers: cat.boilers.len(),
        }
    }

    pub fn per_dwelling(&self) -> usize {
        self.pairs.len() + self.n_batteries + self.n_boilers
    }

    pub fn len(&self) -> usize {
        self.per_dwelling() * self.n_dwellings
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Assignments that satisfy the one-of-each-kind limits.
    pub fn n_combinations(&self) -> u128 {
        let per = (self.pairs.len() as u128 + 1) * (self.n_batteries as u128 + 1) * (self.n_boilers as u128 + 1);
        per.saturating_pow(self.n_dwellings as u32)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DwellingDesign {
    /// Catalog indices of the heat pump and tank.
    pub ashp_tank: Option<(usize, usize)>,
    pub battery: Option<usize>,
    pub boiler: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DesignVector {
    pub dwellings: Vec<DwellingDesign>,
}

impl DesignVector {
    pub fn empty(n: usize) -> Self {
        DesignVector {
            dwellings: vec![DwellingDesign::default(); n],
        }
    }

    pub fn to_binaries(&self, layout: &DesignLayout) -> Vec<bool> {
        let mut z = vec![false; layout.len()];
        let np = layout.pairs.len();
        for (i, d) in self.dwellings.iter().enumerate() {
            let base = i * layout.per_dwelling();
            if let Some(pk) = d.ashp_tank {
                if let Some(j) = layout.pairs.iter().position(|&q| q == pk) {
                    z[base + j] = true;
                }
            }
            if let Some(c) = d.battery {
                z[base + np + c] = true;
            }
            if let Some(b) = d.boiler {
                z[base + np + layout.n_batteries + b] = true;
            }
        }
        z
    }

    /// Inverse of `to_binaries`; `None` when a dwelling has two of a kind.
    pub fn from_binaries(layout: &DesignLayout, z: &[bool]) -> Option<Self> {
        let np = layout.pairs.len();
        let per = layout.per_dwelling();
        let pick = |s: &[bool]| -> Option<Option<usize>> {
            let on: Vec<_> = (0..s.len()).filter(|&i| s[i]).collect();
            match on.len() {
                0 => Some(None),
                1 => Some(Some(on[0])),
                _ => None,
            }
        };
        let mut dwellings = Vec::with_capacity(layout.n_dwellings);
        for i in 0..layout.n_dwellings {
            let s = &z[i * per..(i + 1) * per];
            dwellings.push(DwellingDesign {
                ashp_tank: pick(&s[..np])?.map(|j| layout.pairs[j]),
                battery: pick(&s[np..np + layout.n_batteries])?,
                boiler: pick(&s[np + layout.n_batteries..])?,
            });
        }
        Some(DesignVector { dwellings })
    }

    /// Every assignment permitted by the cardinality and compatibility rules.
    pub fn enumerate(layout: &DesignLayout) -> Vec<DesignVector> {
        let mut options = Vec::new();
        for pk in std::iter::once(None).chain(layout.pairs.iter().copied().map(Some)) {
            for c in std::iter::once(None).chain((0..layout.n_batteries).map(Some)) {
                for b in std::iter::once(None).chain((0..layout.n_boilers).map(Some)) {
                    options.push(DwellingDesign {
                        ashp_tank: pk,
                        battery: c,
                        boiler: b,
                    });
                }
            }
        }
        let mut out = vec![DesignVector::default()];
        for _ in 0..layout.n_dwellings {
            out = out
                .into_iter()
                .flat_map(|d| {
                    options.iter().map(move |o| {
                        let mut d = d.clone();
                        d.dwellings.push(*o);
                        d
                    })
                })
                .collect();
        }
        out
    }

    /// One line per dwelling with device labels.
    pub fn describe(&self, s: &Scenario) -> Vec<String> {
        let cat = &s.catalog;
        self.dwellings
            .iter()
            .zip(&s.dwellings)
            .map(|(d, dw)| {
                let hp = d
                    .ashp_tank
                    .map(|(p, k)| format!("{}+{}", cat.ashps[p].label, cat.tanks[k].label))
                    .unwrap_or_else(|| "-".into());
                let batt = d.battery.map(|c| cat.batteries[c].label.clone()).unwrap_or_else(|| "-".into());
                let boil = d.boiler.map(|b| cat.boilers[b].label.clone()).unwrap_or_else(|| "-".into());
                format!("{}: ashp/tank {hp}, battery {batt}, boiler {boil}", dw.id)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TankVars {
    pub k: usize,
    pub ch: VarId,
    pub dis: VarId,
    pub loss: VarId,
    pub temp: VarId,
}

/// Variables of one dwelling at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepVars {
    pub grid: VarId,
    pub sold: VarId,
    pub pv: VarId,
    /// Buy/sell indicator, 1 when selling.
    pub x: VarId,
    pub ch: Vec<VarId>,
    pub dis: Vec<VarId>,
    pub soc: Vec<VarId>,
    /// Aligned with `DesignLayout::pairs`.
    pub hp_heat: Vec<VarId>,
    /// (ashp index, electricity draw)
    pub hp_elec: Vec<(usize, VarId)>,
    pub tanks: Vec<TankVars>,
    pub boiler: Vec<VarId>,
}

#[derive(Debug, Clone)]
pub struct DesignModel {
    pub model: LinearModel,
    pub layout: DesignLayout,
    /// Design binaries in layout order.
    pub design_vars: Vec<VarId>,
    pub pv_area: Vec<VarId>,
    /// `[dwelling][season][step]`
    pub steps: Vec<Vec<Vec<StepVars>>>,
    /// Net feeder import per `[season][step]`.
    pub feeder: Vec<Vec<VarId>>,
    pub ashps_used: Vec<usize>,
    pub tanks_used: Vec<usize>,
}

/// Operation of one dwelling over one representative day. Power in kW,
/// stored energy in kWh, temperatures in degC. Device series are indexed
/// by catalog position and are all zero for devices not installed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeasonSchedule {
    pub grid: Vec<f64>,
    pub sold: Vec<f64>,
    pub pv: Vec<f64>,
    /// Buy/sell indicator; absent for schedules without operational binaries.
    pub buy_sell: Option<Vec<f64>>,
    pub battery_charge: Vec<Vec<f64>>,
    pub battery_discharge: Vec<Vec<f64>>,
    pub battery_energy: Vec<Vec<f64>>,
    /// Indexed like `DesignLayout::pairs`.
    pub hp_heat: Vec<Vec<f64>>,
    pub hp_elec: Vec<Vec<f64>>,
    pub tank_charge: Vec<Vec<f64>>,
    pub tank_discharge: Vec<Vec<f64>>,
    pub tank_loss: Vec<Vec<f64>>,
    pub tank_temp: Vec<Vec<f64>>,
    pub boiler_heat: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DwellingSchedule {
    pub pv_area_m2: f64,
    pub seasons: Vec<SeasonSchedule>,
}

/// Rectangular voltage components, pu, per bus-phase.
pub type VoltageSnapshot = Vec<(f64, f64)>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    pub dwellings: Vec<DwellingSchedule>,
    /// Net feeder import, kW, `[season][step]`.
    pub feeder_kw: Vec<Vec<f64>>,
    /// Non-slack voltages `[season][step]` when the network was modelled.
    pub voltages: Option<Vec<Vec<VoltageSnapshot>>>,
    /// Annualised cost in currency.
    pub objective: f64,
}

impl ScheduleSolution {
    /// Net active injection of dwelling `i`, kW: export minus purchase.
    pub fn net_injection_kw(&self, i: usize, s: usize, t: usize) -> f64 {
        let ss = &self.dwellings[i].seasons[s];
        ss.sold[t] - ss.grid[t]
    }

    /// Largest grid * sold product, in pu^2 for base `s_base_kva`.
    pub fn max_complementarity(&self, s_base_kva: f64) -> f64 {
        let mut worst = 0f64;
        for d in &self.dwellings {
            for ss in &d.seasons {
                for (g, s) in ss.grid.iter().zip(&ss.sold) {
                    worst = worst.max(g * s / (s_base_kva * s_base_kva));
                }
            }
        }
        worst
    }
}

impl DesignModel {
    pub fn design_from_x(&self, x: &[f64]) -> DesignVector {
        let z: Vec<bool> = self.design_vars.iter().map(|v| x[v.0] > 0.5).collect();
        DesignVector::from_binaries(&self.layout, &z).expect("solver respects cardinality rows")
    }

    /// Physical schedule from a point in scaled variables.
    pub fn schedule_from_x(&self, x: &[f64], cat: &TechnologyCatalog, with_indicator: bool) -> ScheduleSolution {
        let m = &self.model;
        let ph = |v: VarId| m.physical(v, x);
        let dwellings = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, seasons)| DwellingSchedule {
                pv_area_m2: ph(self.pv_area[i]),
                seasons: seasons
                    .iter()
                    .map(|steps| {
                        let series = |f: &dyn Fn(&StepVars) -> f64| steps.iter().map(f).collect::<Vec<f64>>();
                        let per = |n: usize, f: &dyn Fn(&StepVars, usize) -> Option<f64>| -> Vec<Vec<f64>> {
                            (0..n).map(|j| steps.iter().map(|sv| f(sv, j).unwrap_or(0.0)).collect()).collect()
                        };
                        let tank = |sv: &StepVars, k: usize, g: fn(&TankVars) -> VarId| sv.tanks.iter().find(|tv| tv.k == k).map(|tv| ph(g(tv)));
                        SeasonSchedule {
                            grid: series(&|sv| ph(sv.grid)),
                            sold: series(&|sv| ph(sv.sold)),
                            pv: series(&|sv| ph(sv.pv)),
                            buy_sell: with_indicator.then(|| series(&|sv| ph(sv.x))),
                            battery_charge: per(cat.batteries.len(), &|sv, c| Some(ph(sv.ch[c]))),
                            battery_discharge: per(cat.batteries.len(), &|sv, c| Some(ph(sv.dis[c]))),
                            battery_energy: per(cat.batteries.len(), &|sv, c| Some(ph(sv.soc[c]))),
                            hp_heat: per(self.layout.pairs.len(), &|sv, j| Some(ph(sv.hp_heat[j]))),
                            hp_elec: per(cat.ashps.len(), &|sv, p| sv.hp_elec.iter().find(|e| e.0 == p).map(|e| ph(e.1))),
                            tank_charge: per(cat.tanks.len(), &|sv, k| tank(sv, k, |t| t.ch)),
                            tank_discharge: per(cat.tanks.len(), &|sv, k| tank(sv, k, |t| t.dis)),
                            tank_loss: per(cat.tanks.len(), &|sv, k| tank(sv, k, |t| t.loss)),
                            tank_temp: per(cat.tanks.len(), &|sv, k| tank(sv, k, |t| t.temp)),
                            boiler_heat: per(cat.boilers.len(), &|sv, b| Some(ph(sv.boiler[b]))),
                        }
                    })
                    .collect(),
            })
            .collect();
        ScheduleSolution {
            dwellings,
            feeder_kw: self.feeder.iter().map(|row| row.iter().map(|&v| ph(v)).collect()).collect(),
            voltages: None,
            objective: m.objective_value(x),
        }
    }

    /// Scaled point reproducing `schedule` under `design`. The indicator is
    /// set from the sign of the net export.
    pub fn x_from_schedule(&self, design: &DesignVector, schedule: &ScheduleSolution) -> Vec<f64> {
        let m = &self.model;
        let mut x = vec![0.0; m.n_vars()];
        let mut put = |v: VarId, val: f64| x[v.0] = m.vars[v.0].to_scaled(val);
        for (v, on) in self.design_vars.iter().zip(design.to_binaries(&self.layout)) {
            put(*v, if on { 1.0 } else { 0.0 });
        }
        for (i, seasons) in self.steps.iter().enumerate() {
            let ds = &schedule.dwellings[i];
            put(self.pv_area[i], ds.pv_area_m2);
            for (si, steps) in seasons.iter().enumerate() {
                let ss = &ds.seasons[si];
                for (t, sv) in steps.iter().enumerate() {
                    put(sv.grid, ss.grid[t]);
                    put(sv.sold, ss.sold[t]);
                    put(sv.pv, ss.pv[t]);
                    put(sv.x, if ss.sold[t] > ss.grid[t] { 1.0 } else { 0.0 });
                    for c in 0..sv.ch.len() {
                        put(sv.ch[c], ss.battery_charge[c][t]);
                        put(sv.dis[c], ss.battery_discharge[c][t]);
                        put(sv.soc[c], ss.battery_energy[c][t]);
                    }
                    for j in 0..sv.hp_heat.len() {
                        put(sv.hp_heat[j], ss.hp_heat[j][t]);
                    }
                    for &(p, v) in &sv.hp_elec {
                        put(v, ss.hp_elec[p][t]);
                    }
                    for tv in &sv.tanks {
                        put(tv.ch, ss.tank_charge[tv.k][t]);
                        put(tv.dis, ss.tank_discharge[tv.k][t]);
                        put(tv.loss, ss.tank_loss[tv.k][t]);
                        put(tv.temp, ss.tank_temp[tv.k][t]);
                    }
                    for (b, &v) in sv.boiler.iter().enumerate() {
                        put(v, ss.boiler_heat[b][t]);
                    }
                }
            }
        }
        for (si, row) in self.feeder.iter().enumerate() {
            for (t, &v) in row.iter().enumerate() {
                put(v, schedule.feeder_kw[si][t]);
            }
        }
        x
    }

    /// No-good cut as a row over the design binaries.
    pub fn cut_row(&self, cut: &IntegerCut) -> LinearRow {
        let mut terms = Vec::with_capacity(self.design_vars.len());
        terms.extend(cut.zeros.iter().map(|&j| (self.design_vars[j], 1.0)));
        terms.extend(cut.ones.iter().map(|&j| (self.design_vars[j], -1.0)));
        LinearRow {
            name: format!("cut[{}]", cut.iteration),
            kind: RowKind::Plain,
            terms,
            lo: 1.0 - cut.ones.len() as f64,
            hi: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    TimeLimit,
    /// Backend failure or an unexpected solver state.
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilpOptions {
    pub mip_rel_gap: f64,
    pub time_limit_s: Option<f64>,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            mip_rel_gap: 1e-9,
            time_limit_s: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MilpOutcome {
    pub status: MilpStatus,
    /// Scaled primal values; empty unless a solution is available.
    pub x: Vec<f64>,
    pub detail: String,
}

/// Solver adapter. Implementations must never panic on solver failure.
pub trait MilpBackend {
    fn solve(&self, model: &LinearModel, extra_rows: &[LinearRow], opts: &MilpOptions, warm_start: Option<&[f64]>) -> MilpOutcome;
}

#[derive(Debug, Clone)]
pub struct MilpResult {
    pub status: MilpStatus,
    pub design: Option<DesignVector>,
    pub schedule: Option<ScheduleSolution>,
    /// Objective in currency when optimal.
    pub lb: Option<f64>,
}

pub fn solve_milp(dm: &DesignModel, cat: &TechnologyCatalog, cuts: &[IntegerCut], opts: &MilpOptions, backend: &dyn MilpBackend) -> MilpResult {
    let rows: Vec<LinearRow> = cuts.iter().map(|c| dm.cut_row(c)).collect();
    solve_with_rows(dm, cat, &rows, opts, backend)
}

/// Optimal operation of one fixed design.
pub fn solve_milp_fixed(dm: &DesignModel, cat: &TechnologyCatalog, design: &DesignVector, opts: &MilpOptions, backend: &dyn MilpBackend) -> MilpResult {
    let rows: Vec<LinearRow> = dm
        .design_vars
        .iter()
        .zip(design.to_binaries(&dm.layout))
        .map(|(&v, on)| {
            let b = if on { 1.0 } else { 0.0 };
            LinearRow {
                name: "fix".into(),
                kind: RowKind::Plain,
                terms: vec![(v, 1.0)],
                lo: b,
                hi: b,
            }
        })
        .collect();
    solve_with_rows(dm, cat, &rows, opts, backend)
}

fn solve_with_rows(dm: &DesignModel, cat: &TechnologyCatalog, rows: &[LinearRow], opts: &MilpOptions, backend: &dyn MilpBackend) -> MilpResult {
    let out = backend.solve(&dm.model, rows, opts, None);
    if out.status != MilpStatus::Optimal {
        log::debug!("MILP ended with {:?}: {}", out.status, out.detail);
        return MilpResult {
            status: out.status,
            design: None,
            schedule: None,
            lb: None,
        };
    }
    let schedule = dm.schedule_from_x(&out.x, cat, true);
    MilpResult {
        status: MilpStatus::Optimal,
        design: Some(dm.design_from_x(&out.x)),
        lb: Some(schedule.objective),
        schedule: Some(schedule),
    }
}
