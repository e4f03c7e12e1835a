use serde::{Deserialize, Serialize};

use super::build::tariff_at;
use super::{DesignVector, ScheduleSolution};
use crate::catalog::crf;
use crate::scenario::Scenario;

/// Annualised cost rows in currency per year. Incomes are stored as
/// positive amounts and subtracted in `objective`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub electricity_purchase: f64,
    pub pv_investment: f64,
    pub pv_operation: f64,
    pub boiler_investment: f64,
    pub boiler_operation: f64,
    pub battery_investment: f64,
    pub battery_operation: f64,
    pub ashp_investment: f64,
    pub tank_investment: f64,
    pub export_income: f64,
    pub generation_income: f64,
    pub objective: f64,
}

impl CostBreakdown {
    pub fn total_costs(&self) -> f64 {
        self.electricity_purchase
            + self.pv_investment
            + self.pv_operation
            + self.boiler_investment
            + self.boiler_operation
            + self.battery_investment
            + self.battery_operation
            + self.ashp_investment
            + self.tank_investment
    }

    pub fn total_incomes(&self) -> f64 {
        self.export_income + self.generation_income
    }

    /// Costs minus incomes, recomputed from the rows.
    pub fn row_sum(&self) -> f64 {
        self.total_costs() - self.total_incomes()
    }

    /// `(label, signed value)` in presentation order, incomes negative.
    pub fn rows(&self) -> [(&'static str, f64); 12] {
        [
            ("Objective value", self.objective),
            ("Electricity purchase", self.electricity_purchase),
            ("PV investment", self.pv_investment),
            ("PV operation", self.pv_operation),
            ("Boiler investment", self.boiler_investment),
            ("Boiler operation", self.boiler_operation),
            ("Battery investment", self.battery_investment),
            ("Battery operation", self.battery_operation),
            ("ASHP investment", self.ashp_investment),
            ("HW Tank investment", self.tank_investment),
            ("Export income", -self.export_income),
            ("Generation income", -self.generation_income),
        ]
    }
}

/// Cost rows priced from the schedule and catalog, independent of any solver.
pub fn extract_breakdown(s: &Scenario, design: &DesignVector, schedule: &ScheduleSolution) -> CostBreakdown {
    let cat = &s.catalog;
    let eco = &s.tariffs;
    let r = crf(eco.interest_rate, eco.lifetime_years);
    let mut b = CostBreakdown::default();
    for (d, ds) in design.dwellings.iter().zip(&schedule.dwellings) {
        b.pv_investment += ds.pv_area_m2 * eco.pv_investment_per_m2();
        b.pv_operation += ds.pv_area_m2 * eco.pv_operation_per_m2();
        if let Some((p, k)) = d.ashp_tank {
            let a = &cat.ashps[p];
            b.ashp_investment += r * (a.unit_cost + a.install_cost);
            b.tank_investment += r * cat.compatibility.cost(p, k).unwrap_or(0.0);
        }
        if let Some(c) = d.battery {
            let batt = &cat.batteries[c];
            b.battery_investment += r * (batt.unit_cost + batt.install_cost);
            b.battery_operation += batt.annual_op_cost;
        }
        if let Some(u) = d.boiler {
            let boil = &cat.boilers[u];
            b.boiler_investment += r * (boil.unit_cost + boil.install_cost);
        }
        for (season, ss) in s.seasons.iter().zip(&ds.seasons) {
            let w = season.n_days as f64 * season.timestep_h;
            for t in 0..season.len() {
                let tariff = tariff_at(season.hour(t), eco.day_tariff, eco.night_tariff);
                b.electricity_purchase += w * tariff * ss.grid[t];
                b.export_income += w * eco.export_tariff * ss.sold[t];
                b.generation_income += w * eco.generation_tariff * ss.pv[t];
                for (bi, boil) in cat.boilers.iter().enumerate() {
                    b.boiler_operation += w * eco.gas_price / boil.efficiency * ss.boiler_heat[bi][t];
                }
            }
        }
    }
    b.objective = b.row_sum();
    b
}

/// Relative change from `initial` to `final_`, in percent.
pub fn percentage_difference(final_: f64, initial: f64) -> f64 {
    100.0 * (final_ - initial) / initial
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentage_difference_matches_reported_rows() {
        assert_eq!(format!("{:.2}", percentage_difference(46488.0, 46431.0)), "0.12");
        assert_eq!(format!("{:.2}", percentage_difference(13572.0, 13492.0)), "0.59");
        assert_eq!(percentage_difference(5.0, 5.0), 0.0);
    }
}
