//! Network, dwellings, weather and tariffs: the single input bundle of a run.

mod io;
mod profiles;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::catalog::{EconomicScalars, TechnologyCatalog};
use crate::error::{Error, Result};
use crate::settings::AlgorithmSettings;

pub use io::{parse_scenario, write_scenario};
pub use profiles::{default_season, DEFAULT_SEASONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Phase> {
        match c.to_ascii_lowercase() {
            'a' => Some(Phase::A),
            'b' => Some(Phase::B),
            'c' => Some(Phase::C),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        ['a', 'b', 'c'][self.index()]
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Parses strings such as `abc` or `b`. Phases come back sorted.
pub fn parse_phases(s: &str) -> Option<Vec<Phase>> {
    let mut set = BTreeSet::new();
    for c in s.trim().chars() {
        if !set.insert(Phase::from_char(c)?) {
            return None;
        }
    }
    (!set.is_empty()).then(|| set.into_iter().collect())
}

pub fn format_phases(phases: &[Phase]) -> String {
    phases.iter().map(|p| p.as_char()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub phases: Vec<Phase>,
    pub v_min: f64,
    pub v_max: f64,
    pub is_slack: bool,
}

/// Sequence impedances per km, used to build phase impedance matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineCode {
    pub id: String,
    pub r1_ohm_per_km: f64,
    pub x1_ohm_per_km: f64,
    pub r0_ohm_per_km: f64,
    pub x0_ohm_per_km: f64,
    /// Positive sequence shunt susceptance.
    #[serde(default)]
    pub b1_us_per_km: f64,
}

impl LineCode {
    /// Self and mutual phase impedance per km.
    pub fn phase_impedance_per_km(&self) -> (Complex64, Complex64) {
        let z1 = Complex64::new(self.r1_ohm_per_km, self.x1_ohm_per_km);
        let z0 = Complex64::new(self.r0_ohm_per_km, self.x0_ohm_per_km);
        ((2.0 * z1 + z0) / 3.0, (z0 - z1) / 3.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub phases: Vec<Phase>,
    pub linecode: String,
    pub length_m: f64,
    /// Row-major |phases| x |phases| series impedance, ohm.
    pub impedance: Vec<Complex64>,
    /// Total shunt susceptance per phase, siemens; split across both ends.
    pub shunt_susceptance_s: f64,
}

impl Line {
    pub fn n_phases(&self) -> usize {
        self.phases.len()
    }

    pub fn z(&self, i: usize, j: usize) -> Complex64 {
        self.impedance[i * self.phases.len() + j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformer {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub connection: String,
    pub phase_shift_deg: f64,
    /// Series impedance referred to the secondary.
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub rating_kva: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dwelling {
    pub id: String,
    pub bus: String,
    pub phase: Phase,
    pub peak_elec_kw: f64,
    pub peak_heat_kw: f64,
    pub max_pv_area_m2: f64,
    #[serde(default = "unity")]
    pub power_factor: f64,
}

fn unity() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonProfile {
    pub id: String,
    pub n_days: u32,
    pub timestep_h: f64,
    pub elec_scale: f64,
    pub heat_scale: f64,
    pub t_air: Vec<f64>,
    /// kW/m2
    pub irradiance: Vec<f64>,
    pub elec_shape: Vec<f64>,
    pub heat_shape: Vec<f64>,
}

impl SeasonProfile {
    pub fn len(&self) -> usize {
        self.t_air.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_air.is_empty()
    }

    /// Hour of day at the start of step `t`.
    pub fn hour(&self, t: usize) -> f64 {
        (t as f64 * self.timestep_h) % 24.0
    }
}

/// Per-unit bases and slack voltage of the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkBase {
    pub s_base_kva: f64,
    pub v_base_ll_v: f64,
    pub slack_voltage_pu: f64,
}

impl Default for NetworkBase {
    fn default() -> Self {
        NetworkBase {
            s_base_kva: 100.0,
            v_base_ll_v: 400.0,
            slack_voltage_pu: 1.0,
        }
    }
}

impl NetworkBase {
    /// Phase-to-neutral base impedance in ohm.
    pub fn z_base_ohm(&self) -> f64 {
        let v_ph = self.v_base_ll_v / 3f64.sqrt();
        v_ph * v_ph / (self.s_base_kva * 1000.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandSeries {
    pub elec: Vec<f64>,
    pub heat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub base: NetworkBase,
    pub buses: Vec<Bus>,
    pub linecodes: Vec<LineCode>,
    pub lines: Vec<Line>,
    pub transformers: Vec<Transformer>,
    pub dwellings: Vec<Dwelling>,
    pub seasons: Vec<SeasonProfile>,
    pub catalog: TechnologyCatalog,
    pub tariffs: EconomicScalars,
    pub settings: AlgorithmSettings,
    /// Materialised demand, indexed `[dwelling][season]`.
    pub demand: Vec<Vec<DemandSeries>>,
}

/// Demand of one dwelling in one season: peak times seasonal scale times shape.
pub fn synthesize_profiles(dwelling: &Dwelling, season: &SeasonProfile) -> DemandSeries {
    DemandSeries {
        elec: season
            .elec_shape
            .iter()
            .map(|s| dwelling.peak_elec_kw * season.elec_scale * s)
            .collect(),
        heat: season
            .heat_shape
            .iter()
            .map(|s| dwelling.peak_heat_kw * season.heat_scale * s)
            .collect(),
    }
}

impl Scenario {
    /// Validates cross references and materialises demand.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        base: NetworkBase,
        buses: Vec<Bus>,
        linecodes: Vec<LineCode>,
        lines: Vec<Line>,
        transformers: Vec<Transformer>,
        dwellings: Vec<Dwelling>,
        seasons: Vec<SeasonProfile>,
        catalog: TechnologyCatalog,
        tariffs: EconomicScalars,
        settings: AlgorithmSettings,
    ) -> Result<Self> {
        let mut s = Scenario {
            name,
            base,
            buses,
            linecodes,
            lines,
            transformers,
            dwellings,
            seasons,
            catalog,
            tariffs,
            settings,
            demand: Vec::new(),
        };
        s.validate()?;
        s.demand = s
            .dwellings
            .iter()
            .map(|d| s.seasons.iter().map(|season| synthesize_profiles(d, season)).collect())
            .collect();
        Ok(s)
    }

    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_index(&self) -> usize {
        self.buses.iter().position(|b| b.is_slack).expect("validated")
    }

    pub fn n_steps(&self) -> usize {
        self.seasons[0].len()
    }

    /// Sum of transformer ratings, or infinity without transformers.
    pub fn feeder_rating_kva(&self) -> f64 {
        if self.transformers.is_empty() {
            f64::INFINITY
        } else {
            self.transformers.iter().map(|t| t.rating_kva).sum()
        }
    }

    fn validate(&self) -> Result<()> {
        let slack = self.buses.iter().filter(|b| b.is_slack).count();
        if slack != 1 {
            return Err(Error::Invalid(format!("expected exactly one slack bus, found {slack}")));
        }
        let mut ids = BTreeSet::new();
        for b in &self.buses {
            if !ids.insert(&b.id) {
                return Err(Error::Invalid(format!("duplicate bus `{}`", b.id)));
            }
            if !(b.v_min > 0.0 && b.v_min < b.v_max) {
                return Err(Error::Invalid(format!("bus `{}` needs 0 < v_min < v_max", b.id)));
            }
        }
        if !(self.base.s_base_kva > 0.0 && self.base.v_base_ll_v > 0.0 && self.base.slack_voltage_pu > 0.0) {
            return Err(Error::Invalid("network bases must be positive".into()));
        }
        for l in &self.lines {
            let who = format!("line `{}`", l.id);
            for end in [&l.from_bus, &l.to_bus] {
                let bus = self.bus(end).ok_or_else(|| Error::DanglingReference {
                    kind: "bus",
                    id: end.clone(),
                    referenced_by: who.clone(),
                })?;
                if let Some(p) = l.phases.iter().find(|p| !bus.phases.contains(p)) {
                    return Err(Error::Invalid(format!("{who} uses phase {p} absent at bus `{end}`")));
                }
            }
            let n = l.n_phases();
            if l.impedance.len() != n * n {
                return Err(Error::Invalid(format!("{who} impedance has the wrong dimension")));
            }
            for i in 0..n {
                if !(l.z(i, i).re > 0.0) {
                    return Err(Error::Invalid(format!("{who} needs positive self resistance")));
                }
                for j in 0..n {
                    if (l.z(i, j) - l.z(j, i)).norm() > 1e-12 * l.z(i, i).norm() {
                        return Err(Error::Invalid(format!("{who} impedance is not symmetric")));
                    }
                }
            }
        }
        for t in &self.transformers {
            let who = format!("transformer `{}`", t.id);
            for end in [&t.from_bus, &t.to_bus] {
                let bus = self.bus(end).ok_or_else(|| Error::DanglingReference {
                    kind: "bus",
                    id: end.clone(),
                    referenced_by: who.clone(),
                })?;
                if bus.phases.len() != 3 {
                    return Err(Error::Invalid(format!("{who} needs three-phase bus `{end}`")));
                }
            }
            if !(t.rating_kva > 0.0) || !(t.r_ohm > 0.0 || t.x_ohm > 0.0) {
                return Err(Error::Invalid(format!("{who} needs a positive rating and impedance")));
            }
        }
        let mut dids = BTreeSet::new();
        for d in &self.dwellings {
            if !dids.insert(&d.id) {
                return Err(Error::Invalid(format!("duplicate dwelling `{}`", d.id)));
            }
            let bus = self.bus(&d.bus).ok_or_else(|| Error::DanglingReference {
                kind: "bus",
                id: d.bus.clone(),
                referenced_by: format!("dwelling `{}`", d.id),
            })?;
            if !bus.phases.contains(&d.phase) {
                return Err(Error::Invalid(format!(
                    "dwelling `{}` is on phase {} which bus `{}` lacks",
                    d.id, d.phase, d.bus
                )));
            }
            if bus.is_slack {
                return Err(Error::Invalid(format!("dwelling `{}` sits on the slack bus", d.id)));
            }
            if !(d.peak_elec_kw > 0.0 && d.peak_heat_kw > 0.0) {
                return Err(Error::Invalid(format!("dwelling `{}` needs positive peaks", d.id)));
            }
            if !(d.max_pv_area_m2 >= 0.0) {
                return Err(Error::Invalid(format!("dwelling `{}` needs max_pv_area_m2 >= 0", d.id)));
            }
            if !(d.power_factor > 0.0 && d.power_factor <= 1.0) {
                return Err(Error::Invalid(format!("dwelling `{}` power factor must lie in (0, 1]", d.id)));
            }
        }
        if self.seasons.is_empty() {
            return Err(Error::Invalid("at least one season is required".into()));
        }
        let days: u32 = self.seasons.iter().map(|s| s.n_days).sum();
        if days != 365 {
            return Err(Error::SeasonDays(days));
        }
        let len = self.seasons[0].len();
        for s in &self.seasons {
            let series = [&s.t_air, &s.irradiance, &s.elec_shape, &s.heat_shape];
            if len == 0 || series.iter().any(|v| v.len() != len) {
                return Err(Error::Invalid(format!("season `{}` series lengths differ", s.id)));
            }
            if !(s.timestep_h > 0.0) || !(s.elec_scale >= 0.0) || !(s.heat_scale >= 0.0) {
                return Err(Error::Invalid(format!("season `{}` needs a positive timestep and scales", s.id)));
            }
            for (name, shape) in [("elec_shape", &s.elec_shape), ("heat_shape", &s.heat_shape)] {
                let max = shape.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if shape.iter().any(|v| !(0.0..=1.0).contains(v)) || (max - 1.0).abs() > 1e-9 {
                    return Err(Error::Invalid(format!(
                        "season `{}` {name} must lie in [0, 1] and peak at 1",
                        s.id
                    )));
                }
            }
            if s.irradiance.iter().any(|v| !(*v >= 0.0)) || s.t_air.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("season `{}` weather must be finite, irradiance >= 0", s.id)));
            }
        }
        self.check_connected()
    }

    /// Every bus-phase must reach the slack through elements carrying that phase.
    fn check_connected(&self) -> Result<()> {
        let mut adj: BTreeMap<(&str, Phase), Vec<(&str, Phase)>> = BTreeMap::new();
        for l in &self.lines {
            for &p in &l.phases {
                adj.entry((&l.from_bus, p)).or_default().push((&l.to_bus, p));
                adj.entry((&l.to_bus, p)).or_default().push((&l.from_bus, p));
            }
        }
        for t in &self.transformers {
            for p in Phase::ALL {
                adj.entry((&t.from_bus, p)).or_default().push((&t.to_bus, p));
                adj.entry((&t.to_bus, p)).or_default().push((&t.from_bus, p));
            }
        }
        let slack = &self.buses[self.slack_index()];
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<_> = slack.phases.iter().map(|&p| (slack.id.as_str(), p)).collect();
        seen.extend(queue.iter().copied());
        while let Some(node) = queue.pop_front() {
            for &next in adj.get(&node).into_iter().flatten() {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        for b in &self.buses {
            for &p in &b.phases {
                if !seen.contains(&(b.id.as_str(), p)) {
                    return Err(Error::DisconnectedNetwork(format!(
                        "phase {p} of bus `{}` has no path to the slack bus",
                        b.id
                    )));
                }
            }
        }
        Ok(())
    }
}
