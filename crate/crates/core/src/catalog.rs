//! Discrete technology options and the fitted heat pump curves.
//!
//! The built-in dataset ships as `data/catalog.toml`; user catalogs use the
//! same format and go through the same parser.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../data/catalog.toml");

/// Ambient range over which curve positivity is checked.
pub const AMBIENT_RANGE_C: (f64, f64) = (-20.0, 40.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopCurve {
    pub l: f64,
    pub x0: f64,
    pub k: f64,
    pub b: f64,
}

/// Cubic heat output curve in kW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AshpOption {
    pub label: String,
    #[serde(default)]
    pub model: String,
    pub t_min_c: f64,
    pub unit_cost: f64,
    pub install_cost: f64,
    pub cop: CopCurve,
    pub capacity: CapacityCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TankOption {
    pub label: String,
    #[serde(default)]
    pub model: String,
    pub volume_m3: f64,
    pub eta_ch: f64,
    pub eta_disch: f64,
    pub t_min_c: f64,
    pub heat_loss_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoilerOption {
    pub label: String,
    #[serde(default)]
    pub model: String,
    pub h_max_kw: f64,
    pub efficiency: f64,
    pub unit_cost: f64,
    pub install_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryOption {
    pub label: String,
    #[serde(default)]
    pub model: String,
    pub capacity_kwh: f64,
    pub max_dod: f64,
    pub max_soc: f64,
    pub unit_cost: f64,
    pub annual_op_cost: f64,
    pub eta_ch: f64,
    pub eta_disch: f64,
    pub install_cost: f64,
    pub max_power_kw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicScalars {
    pub lifetime_years: f64,
    pub interest_rate: f64,
    /// GBP/kWh of gas burnt.
    pub gas_price: f64,
    pub day_tariff: f64,
    pub night_tariff: f64,
    pub export_tariff: f64,
    pub generation_tariff: f64,
    /// GBP per panel.
    pub pv_panel_cost: f64,
    pub pv_efficiency: f64,
    /// GBP per kW of installed capacity per year.
    pub pv_fixed_om: f64,
    pub panel_area_m2: f64,
    pub panel_capacity_kw: f64,
}

impl EconomicScalars {
    pub fn crf(&self) -> f64 {
        crf(self.interest_rate, self.lifetime_years)
    }

    /// Annualised PV capital cost per m2 of panel.
    pub fn pv_investment_per_m2(&self) -> f64 {
        self.crf() * self.pv_panel_cost / self.panel_area_m2
    }

    /// Fixed PV operating cost per m2 of panel per year.
    pub fn pv_operation_per_m2(&self) -> f64 {
        self.pv_fixed_om * self.panel_capacity_kw / self.panel_area_m2
    }

    fn validate(&self, file: &str) -> Result<()> {
        let prices = [
            ("gas_price", self.gas_price),
            ("day_tariff", self.day_tariff),
            ("night_tariff", self.night_tariff),
            ("export_tariff", self.export_tariff),
            ("generation_tariff", self.generation_tariff),
            ("pv_panel_cost", self.pv_panel_cost),
            ("pv_fixed_om", self.pv_fixed_om),
            ("interest_rate", self.interest_rate),
        ];
        for (field, v) in prices {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::schema(file, None, field, "must be a finite value >= 0"));
            }
        }
        if !(self.pv_efficiency > 0.0 && self.pv_efficiency < 1.0) {
            return Err(Error::schema(file, None, "pv_efficiency", "must lie in (0, 1)"));
        }
        if !(self.lifetime_years >= 1.0) {
            return Err(Error::schema(file, None, "lifetime_years", "must be >= 1"));
        }
        if !(self.panel_area_m2 > 0.0 && self.panel_capacity_kw > 0.0) {
            return Err(Error::schema(file, None, "panel_area_m2", "panel area and capacity must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterProperties {
    pub supply_temperature_c: f64,
    /// kJ/(kg K)
    pub specific_heat_kj_per_kg_k: f64,
    pub density_kg_per_m3: f64,
}

/// Heat pump to tank connection costs. Pairs absent from the map cannot be
/// installed together.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AshpTankCompatibility {
    costs: BTreeMap<(usize, usize), f64>,
}

impl AshpTankCompatibility {
    /// Tank cost for the pair, or `None` when the pair is infeasible.
    pub fn cost(&self, ashp: usize, tank: usize) -> Option<f64> {
        self.costs.get(&(ashp, tank)).copied()
    }

    pub fn is_feasible(&self, ashp: usize, tank: usize) -> bool {
        self.costs.contains_key(&(ashp, tank))
    }

    /// Feasible pairs in (ashp, tank) order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.costs.iter().map(|(&(p, k), &c)| (p, k, c))
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TechnologyCatalog {
    pub water: WaterProperties,
    pub ashps: Vec<AshpOption>,
    pub tanks: Vec<TankOption>,
    pub compatibility: AshpTankCompatibility,
    pub boilers: Vec<BoilerOption>,
    pub batteries: Vec<BatteryOption>,
    pub economics: EconomicScalars,
}

pub fn evaluate_cop(ashp: &AshpOption, t_air: f64) -> f64 {
    let CopCurve { l, x0, k, b } = ashp.cop;
    l / (1.0 + (-k * (t_air - x0)).exp()) + b
}

pub fn evaluate_capacity(ashp: &AshpOption, t_air: f64) -> f64 {
    let CapacityCurve { a, b, c, d } = ashp.capacity;
    ((a * t_air + b) * t_air + c) * t_air + d
}

/// Capital recovery factor for `rate` per year over `lifetime` years.
pub fn crf(rate: f64, lifetime: f64) -> f64 {
    if rate == 0.0 {
        return 1.0 / lifetime;
    }
    let g = (1.0 + rate).powf(lifetime);
    rate * g / (g - 1.0)
}

pub fn load_builtin_catalog() -> TechnologyCatalog {
    TechnologyCatalog::from_toml_str(BUILTIN, "<builtin catalog>")
        .expect("built-in catalog is valid")
}

// On-disk layout. Compatibility is keyed by labels so files stay readable.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    water: WaterProperties,
    #[serde(default)]
    ashp: Vec<AshpOption>,
    #[serde(default)]
    tank: Vec<TankOption>,
    #[serde(default)]
    compatibility: Vec<CompatibilityRow>,
    #[serde(default)]
    boiler: Vec<BoilerOption>,
    #[serde(default)]
    battery: Vec<BatteryOption>,
    economics: EconomicScalars,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompatibilityRow {
    ashp: String,
    costs: BTreeMap<String, f64>,
}

impl TechnologyCatalog {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn from_toml_str(text: &str, file: &str) -> Result<Self> {
        let raw: CatalogFile = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].lines().count().max(1));
            Error::schema(file, line, "catalog", e.message().to_string())
        })?;
        let mut compatibility = AshpTankCompatibility::default();
        for row in &raw.compatibility {
            let p = raw.ashp.iter().position(|a| a.label == row.ashp).ok_or_else(|| {
                Error::DanglingReference {
                    kind: "heat pump",
                    id: row.ashp.clone(),
                    referenced_by: format!("{file} compatibility"),
                }
            })?;
            for (tank, &cost) in &row.costs {
                let k = raw.tank.iter().position(|t| &t.label == tank).ok_or_else(|| {
                    Error::DanglingReference {
                        kind: "tank",
                        id: tank.clone(),
                        referenced_by: format!("{file} compatibility of {}", row.ashp),
                    }
                })?;
                if !(cost > 0.0 && cost.is_finite()) {
                    return Err(Error::schema(
                        file,
                        None,
                        format!("compatibility.{}.{}", row.ashp, tank),
                        "feasible pairs need a cost > 0",
                    ));
                }
                compatibility.costs.insert((p, k), cost);
            }
        }
        let catalog = TechnologyCatalog {
            water: raw.water,
            ashps: raw.ashp,
            tanks: raw.tank,
            compatibility,
            boilers: raw.boiler,
            batteries: raw.battery,
            economics: raw.economics,
        };
        catalog.validate(file)?;
        Ok(catalog)
    }

    pub fn to_toml_string(&self) -> String {
        let compatibility = self
            .ashps
            .iter()
            .enumerate()
            .filter_map(|(p, a)| {
                let costs: BTreeMap<_, _> = self
                    .compatibility
                    .pairs()
                    .filter(|&(pp, _, _)| pp == p)
                    .map(|(_, k, c)| (self.tanks[k].label.clone(), c))
                    .collect();
                (!costs.is_empty()).then(|| CompatibilityRow { ashp: a.label.clone(), costs })
            })
            .collect();
        let raw = CatalogFile {
            water: self.water,
            ashp: self.ashps.clone(),
            tank: self.tanks.clone(),
            compatibility,
            boiler: self.boilers.clone(),
            battery: self.batteries.clone(),
            economics: self.economics,
        };
        toml::to_string(&raw).expect("catalog serialises")
    }

    /// True when no device of any kind can be installed.
    pub fn is_empty(&self) -> bool {
        self.compatibility.is_empty() && self.boilers.is_empty() && self.batteries.is_empty()
    }

    pub fn ashp_index(&self, label: &str) -> Option<usize> {
        self.ashps.iter().position(|a| a.label == label)
    }

    pub fn tank_index(&self, label: &str) -> Option<usize> {
        self.tanks.iter().position(|t| t.label == label)
    }

    pub fn boiler_index(&self, label: &str) -> Option<usize> {
        self.boilers.iter().position(|b| b.label == label)
    }

    pub fn battery_index(&self, label: &str) -> Option<usize> {
        self.batteries.iter().position(|b| b.label == label)
    }

    fn validate(&self, file: &str) -> Result<()> {
        let bad = |field: String, msg: &str| Err(Error::schema(file, None, field, msg));
        let w = &self.water;
        if !(w.specific_heat_kj_per_kg_k > 0.0 && w.density_kg_per_m3 > 0.0) {
            return bad("water".into(), "specific heat and density must be > 0");
        }
        unique_labels(file, "ashp", self.ashps.iter().map(|a| &a.label))?;
        unique_labels(file, "tank", self.tanks.iter().map(|t| &t.label))?;
        unique_labels(file, "boiler", self.boilers.iter().map(|b| &b.label))?;
        unique_labels(file, "battery", self.batteries.iter().map(|b| &b.label))?;
        for a in &self.ashps {
            let f = |s: &str| format!("ashp.{}.{s}", a.label);
            if !(a.unit_cost > 0.0) {
                return bad(f("unit_cost"), "must be > 0");
            }
            if !(a.install_cost >= 0.0) {
                return bad(f("install_cost"), "must be >= 0");
            }
            let coefs = [a.cop.l, a.cop.x0, a.cop.k, a.cop.b, a.capacity.a, a.capacity.b, a.capacity.c, a.capacity.d];
            if coefs.iter().any(|v| !v.is_finite()) {
                return bad(f("cop"), "curve coefficients must be finite");
            }
            let (lo, hi) = AMBIENT_RANGE_C;
            for i in 0..=600 {
                let t = lo + (hi - lo) * i as f64 / 600.0;
                if !(evaluate_cop(a, t) > 0.0) {
                    return bad(f("cop"), "COP must stay positive over the ambient range");
                }
                // Below the cutoff the unit is off, so its capacity is never used.
                if t > a.t_min_c && !(evaluate_capacity(a, t) > 0.0) {
                    return bad(f("capacity"), "capacity must stay positive above the cutoff temperature");
                }
            }
        }
        for t in &self.tanks {
            let f = |s: &str| format!("tank.{}.{s}", t.label);
            if !(t.volume_m3 > 0.0) {
                return bad(f("volume_m3"), "must be > 0");
            }
            if !(t.eta_ch > 0.0 && t.eta_ch <= 1.0 && t.eta_disch > 0.0 && t.eta_disch <= 1.0) {
                return bad(f("eta_ch"), "efficiencies must lie in (0, 1]");
            }
            if !(t.t_min_c < w.supply_temperature_c) {
                return bad(f("t_min_c"), "must be below the supply temperature");
            }
            if !(t.heat_loss_kw >= 0.0) {
                return bad(f("heat_loss_kw"), "must be >= 0");
            }
        }
        for b in &self.boilers {
            let f = |s: &str| format!("boiler.{}.{s}", b.label);
            if !(b.h_max_kw > 0.0) {
                return bad(f("h_max_kw"), "must be > 0");
            }
            if !(b.efficiency > 0.0 && b.efficiency <= 1.0) {
                return bad(f("efficiency"), "must lie in (0, 1]");
            }
            if !(b.unit_cost >= 0.0 && b.install_cost >= 0.0) {
                return bad(f("unit_cost"), "costs must be >= 0");
            }
        }
        for c in &self.batteries {
            let f = |s: &str| format!("battery.{}.{s}", c.label);
            if !(c.capacity_kwh > 0.0) {
                return bad(f("capacity_kwh"), "must be > 0");
            }
            if !(c.max_dod > 0.0 && c.max_dod <= 1.0 && c.max_soc > 0.0 && c.max_soc <= 1.0) {
                return bad(f("max_dod"), "depth of discharge and state of charge must lie in (0, 1]");
            }
            if !(c.max_dod <= c.max_soc) {
                return bad(f("max_dod"), "must not exceed max_soc");
            }
            if !(c.max_power_kw > 0.0) {
                return bad(f("max_power_kw"), "must be > 0");
            }
            if !(c.eta_ch > 0.0 && c.eta_ch <= 1.0 && c.eta_disch > 0.0 && c.eta_disch <= 1.0) {
                return bad(f("eta_ch"), "efficiencies must lie in (0, 1]");
            }
        }
        self.economics.validate(file)
    }
}

fn unique_labels<'a>(file: &str, kind: &str, labels: impl Iterator<Item = &'a String>) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(Error::schema(file, None, format!("{kind}.{l}"), "duplicate label"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ashp<'a>(cat: &'a TechnologyCatalog, label: &str) -> &'a AshpOption {
        &cat.ashps[cat.ashp_index(label).unwrap()]
    }

    #[test]
    fn sigmoid_midpoint_and_asymptote() {
        let cat = load_builtin_catalog();
        let s1 = ashp(&cat, "S1");
        assert!((evaluate_cop(s1, 5.358) - (1.438 / 2.0 + 1.915)).abs() < 1e-12);
        assert!((evaluate_cop(s1, 5.358) - 2.634).abs() < 1e-3);
        assert!((evaluate_cop(s1, 1e4) - 3.353).abs() < 1e-9);
    }

    #[test]
    fn m1_cop_near_seven_degrees() {
        let cat = load_builtin_catalog();
        // 445.4 / (1 + exp(-0.00047 * 1032)) - 272.9, evaluated by hand.
        let expected = 445.4 / (1.0 + (-0.48504f64).exp()) - 272.9;
        assert!((evaluate_cop(ashp(&cat, "M1"), 7.0) - expected).abs() < 1e-9);
        assert!((expected - 2.77).abs() < 0.02);
    }

    #[test]
    fn capacity_intercepts() {
        let cat = load_builtin_catalog();
        assert_eq!(evaluate_capacity(ashp(&cat, "M2"), 0.0), 14.37);
        assert_eq!(evaluate_capacity(ashp(&cat, "S1"), 0.0), 5.5);
    }

    #[test]
    fn crf_values() {
        assert!((crf(0.075, 20.0) - 0.09809).abs() < 1e-5);
        assert!((crf(0.0, 10.0) - 0.1).abs() < 1e-15);
        assert!((crf(1.0, 1.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn builtin_compatibility() {
        let cat = load_builtin_catalog();
        let p = |l| cat.ashp_index(l).unwrap();
        let k = |l| cat.tank_index(l).unwrap();
        assert_eq!(cat.compatibility.cost(p("M2"), k("M")), Some(6319.0));
        assert_eq!(cat.compatibility.cost(p("S1"), k("L")), None);
        assert_eq!(cat.batteries[cat.battery_index("TP2").unwrap()].max_power_kw, 5.0);
    }

    #[test]
    fn toml_round_trip() {
        let cat = load_builtin_catalog();
        let back = TechnologyCatalog::from_toml_str(&cat.to_toml_string(), "rt").unwrap();
        assert_eq!(back, cat);
    }

    #[test]
    fn dangling_compatibility_rejected() {
        let text = BUILTIN.replace("ashp = \"M2\"", "ashp = \"M9\"");
        let err = TechnologyCatalog::from_toml_str(&text, "bad").unwrap_err();
        assert!(matches!(err, Error::DanglingReference { .. }), "{err}");
    }

    #[test]
    fn nonpositive_cost_rejected() {
        let text = BUILTIN.replace("costs = { M = 6319.0, L = 6595.0 }\n\n[[compatibility]]\nashp = \"L1\"", "costs = { M = 0.0 }\n\n[[compatibility]]\nashp = \"L1\"");
        assert!(TechnologyCatalog::from_toml_str(&text, "bad").is_err());
    }
}
