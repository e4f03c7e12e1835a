use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// MILP, then complementarity regularisation on each design.
    Pa,
    /// As `Pa` with the heuristic cutoff against the incumbent.
    PaH,
    /// The first MILP solution, never checked against the network model.
    MilpOnly,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Pa => "pa",
            Variant::PaH => "pa-h",
            Variant::MilpOnly => "milp-only",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pa" => Ok(Variant::Pa),
            "pa-h" => Ok(Variant::PaH),
            "milp-only" => Ok(Variant::MilpOnly),
            _ => Err(format!("unknown algorithm `{s}` (expected pa, pa-h or milp-only)")),
        }
    }
}

/// Regularisation schedule for the buy/sell complementarity, in pu^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub initial: f64,
    pub reduction_factor: f64,
    pub min: f64,
    pub increase_factor: f64,
    pub max_iterations: usize,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            initial: 1e-2,
            reduction_factor: 0.1,
            min: 1e-8,
            increase_factor: 10.0,
            max_iterations: 12,
        }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.min < self.initial) {
            return Err(Error::Invalid("epsilon schedule needs 0 < min < initial".into()));
        }
        if !(self.reduction_factor > 0.0 && self.reduction_factor < 1.0) {
            return Err(Error::Invalid("epsilon reduction factor must lie in (0, 1)".into()));
        }
        if !(self.increase_factor > 1.0) {
            return Err(Error::Invalid("epsilon increase factor must exceed 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Invalid("epsilon schedule needs at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSettings {
    pub variant: Variant,
    pub time_limit_s: f64,
    pub max_iterations: usize,
    pub mip_rel_gap: f64,
    pub epsilon: EpsilonSchedule,
    /// Convergence tolerance of the interior point solver.
    pub nlp_tolerance: f64,
    pub nlp_max_iterations: usize,
    /// Voltage band tolerance used by the audit, pu.
    pub audit_tolerance: f64,
    /// Drops the purchase limit that keeps batteries from charging off the grid.
    pub allow_grid_charging: bool,
    /// Adds charge * discharge <= eps for batteries in the NLP.
    pub battery_complementarity: bool,
    /// When false the loop ignores LB > LUB and runs until the cuts exhaust the designs.
    pub stop_on_bound_crossing: bool,
    pub brute_force_cap: usize,
}

impl Default for AlgorithmSettings {
    fn default() -> Self {
        AlgorithmSettings {
            variant: Variant::Pa,
            time_limit_s: 600.0,
            max_iterations: 50,
            mip_rel_gap: 1e-9,
            epsilon: EpsilonSchedule::default(),
            nlp_tolerance: 1e-8,
            nlp_max_iterations: 400,
            audit_tolerance: 1e-5,
            allow_grid_charging: false,
            battery_complementarity: false,
            stop_on_bound_crossing: true,
            brute_force_cap: 256,
        }
    }
}

impl AlgorithmSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_limit_s > 0.0) {
            return Err(Error::Invalid("time limit must be > 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Invalid("max iterations must be >= 1".into()));
        }
        if !(self.mip_rel_gap >= 0.0) {
            return Err(Error::Invalid("MILP gap must be >= 0".into()));
        }
        if !(self.nlp_tolerance > 0.0) || self.nlp_max_iterations == 0 {
            return Err(Error::Invalid("NLP tolerance and iteration limit must be positive".into()));
        }
        self.epsilon.validate()
    }
}
