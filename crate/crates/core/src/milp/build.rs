use crate::catalog::{crf, evaluate_capacity, evaluate_cop};
use crate::error::{Error, Result};
use crate::model::{LinearModel, RowKind, VarId, VarKind};
use crate::scenario::Scenario;

use super::{DesignLayout, DesignModel, StepVars, TankVars};

/// Currency per objective unit: the model works in thousands.
pub const OBJECTIVE_SCALE: f64 = 1000.0;
/// Tank temperatures are stored relative to this value.
pub const TANK_TEMPERATURE_OFFSET: f64 = 45.0;

/// Tariff for an hour of day: Economy 7 night rate before 07:00.
pub fn tariff_at(hour: f64, day: f64, night: f64) -> f64 {
    if hour < 7.0 {
        night
    } else {
        day
    }
}

/// Heat pump performance data precomputed for every season and step.
#[derive(Debug, Clone)]
pub struct AshpTables {
    /// `[season][step][ashp]`
    pub cop: Vec<Vec<Vec<f64>>>,
    pub h_max: Vec<Vec<Vec<f64>>>,
}

impl AshpTables {
    pub fn new(s: &Scenario) -> Self {
        let tab = |f: fn(&crate::catalog::AshpOption, f64) -> f64| {
            s.seasons
                .iter()
                .map(|season| {
                    season
                        .t_air
                        .iter()
                        .map(|&t| s.catalog.ashps.iter().map(|a| f(a, t)).collect())
                        .collect()
                })
                .collect()
        };
        AshpTables {
            cop: tab(evaluate_cop),
            h_max: tab(evaluate_capacity),
        }
    }
}

/// Annualised cost of each design binary, in layout order within a dwelling.
pub fn design_costs(s: &Scenario, layout: &DesignLayout) -> Vec<f64> {
    let cat = &s.catalog;
    let r = crf(s.tariffs.interest_rate, s.tariffs.lifetime_years);
    let mut out = Vec::with_capacity(layout.per_dwelling());
    for &(p, k) in &layout.pairs {
        let a = &cat.ashps[p];
        let tank = cat.compatibility.cost(p, k).expect("layout pairs are feasible");
        out.push(r * (a.unit_cost + a.install_cost + tank));
    }
    for c in &cat.batteries {
        out.push(r * (c.unit_cost + c.install_cost) + c.annual_op_cost);
    }
    for b in &cat.boilers {
        out.push(r * (b.unit_cost + b.install_cost));
    }
    out
}

pub fn build_milp(s: &Scenario) -> Result<DesignModel> {
    let cat = &s.catalog;
    if cat.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let eco = &s.tariffs;
    let set = &s.settings;
    let layout = DesignLayout::new(cat, s.dwellings.len());
    let tables = AshpTables::new(s);
    let pw = s.base.s_base_kva;
    let mut m = LinearModel::new(OBJECTIVE_SCALE);

    let ashps_used: Vec<usize> = (0..cat.ashps.len()).filter(|&p| layout.pairs.iter().any(|q| q.0 == p)).collect();
    let tanks_used: Vec<usize> = (0..cat.tanks.len()).filter(|&k| layout.pairs.iter().any(|q| q.1 == k)).collect();

    // Big-M constants from scenario-wide extremes.
    let mut max_draw = 0f64;
    let mut max_hp_heat = 0f64;
    for (s_i, season) in s.seasons.iter().enumerate() {
        for t in 0..season.len() {
            for &p in &ashps_used {
                let h = tables.h_max[s_i][t][p];
                max_hp_heat = max_hp_heat.max(h);
                if season.t_air[t] > cat.ashps[p].t_min_c {
                    max_draw = max_draw.max(h / tables.cop[s_i][t][p]);
                }
            }
        }
    }
    let max_batt_power = cat.batteries.iter().map(|c| c.max_power_kw).fold(0.0, f64::max);
    let max_irr = s.seasons.iter().flat_map(|x| x.irradiance.iter()).cloned().fold(0.0, f64::max);

    let design_cost = design_costs(s, &layout);
    let mut design_vars = Vec::with_capacity(layout.len());
    let mut pv_area = Vec::new();
    let mut steps = Vec::new();
    for (i, d) in s.dwellings.iter().enumerate() {
        for (j, &(p, k)) in layout.pairs.iter().enumerate() {
            let v = m.add_var(format!("J[{},{},{}]", d.id, cat.ashps[p].label, cat.tanks[k].label), VarKind::Design, 0.0, 1.0, 1.0, 0.0);
            m.add_cost(v, design_cost[j]);
            design_vars.push(v);
        }
        for (c, batt) in cat.batteries.iter().enumerate() {
            let v = m.add_var(format!("W[{},{}]", d.id, batt.label), VarKind::Design, 0.0, 1.0, 1.0, 0.0);
            m.add_cost(v, design_cost[layout.pairs.len() + c]);
            design_vars.push(v);
        }
        for (b, boiler) in cat.boilers.iter().enumerate() {
            let v = m.add_var(format!("U[{},{}]", d.id, boiler.label), VarKind::Design, 0.0, 1.0, 1.0, 0.0);
            m.add_cost(v, design_cost[layout.pairs.len() + cat.batteries.len() + b]);
            design_vars.push(v);
        }
        let area = m.add_var(format!("pv_area[{}]", d.id), VarKind::Continuous, 0.0, d.max_pv_area_m2, 1.0, 0.0);
        m.add_cost(area, eco.pv_investment_per_m2() + eco.pv_operation_per_m2());
        pv_area.push(area);

        let dv = |idx: usize| design_vars[i * layout.per_dwelling() + idx];
        let j_of = |pred: &dyn Fn(usize, usize) -> bool| -> Vec<VarId> {
            layout.pairs.iter().enumerate().filter(|(_, &(p, k))| pred(p, k)).map(|(j, _)| dv(j)).collect()
        };
        let w_var = |c: usize| dv(layout.pairs.len() + c);
        let u_var = |b: usize| dv(layout.pairs.len() + cat.batteries.len() + b);

        let j_all = j_of(&|_, _| true);
        m.add_row(format!("one_ashp_tank[{}]", d.id), RowKind::Plain, &unit_terms(&j_all), f64::NEG_INFINITY, 1.0);
        let w_all: Vec<_> = (0..cat.batteries.len()).map(w_var).collect();
        m.add_row(format!("one_battery[{}]", d.id), RowKind::Plain, &unit_terms(&w_all), f64::NEG_INFINITY, 1.0);
        let u_all: Vec<_> = (0..cat.boilers.len()).map(u_var).collect();
        m.add_row(format!("one_boiler[{}]", d.id), RowKind::Plain, &unit_terms(&u_all), f64::NEG_INFINITY, 1.0);

        let peak_load = s.demand[i].iter().flat_map(|x| x.elec.iter()).cloned().fold(0.0, f64::max);
        let m_grid = peak_load + max_draw + if set.allow_grid_charging { max_batt_power } else { 0.0 };
        let m_sold = d.max_pv_area_m2 * eco.pv_efficiency * max_irr + max_batt_power;

        let mut dwelling_steps = Vec::new();
        for (si, season) in s.seasons.iter().enumerate() {
            let n = season.len();
            let dt = season.timestep_h;
            let weight = season.n_days as f64 * dt;
            let tag = |name: &str, t: usize| format!("{name}[{},{},{}]", d.id, season.id, t + 1);
            let mut season_steps: Vec<StepVars> = Vec::with_capacity(n);
            for t in 0..n {
                let load = s.demand[i][si].elec[t];
                let heat = s.demand[i][si].heat[t];
                let grid = m.add_var(tag("grid", t), VarKind::Continuous, 0.0, f64::INFINITY, pw, 0.0);
                let sold = m.add_var(tag("sold", t), VarKind::Continuous, 0.0, f64::INFINITY, pw, 0.0);
                let pv = m.add_var(tag("pv", t), VarKind::Continuous, 0.0, f64::INFINITY, pw, 0.0);
                let x = m.add_var(tag("X", t), VarKind::Operational, 0.0, 1.0, 1.0, 0.0);
                let tariff = tariff_at(season.hour(t), eco.day_tariff, eco.night_tariff);
                m.add_cost(grid, weight * tariff);
                m.add_cost(sold, -weight * eco.export_tariff);
                m.add_cost(pv, -weight * eco.generation_tariff);

                let ch: Vec<_> = cat.batteries.iter().map(|b| m.add_var(tag(&format!("ch_{}", b.label), t), VarKind::Continuous, 0.0, f64::INFINITY, pw, 0.0)).collect();
                let dis: Vec<_> = cat.batteries.iter().map(|b| m.add_var(tag(&format!("dis_{}", b.label), t), VarKind::Continuous, 0.0, f64::INFINITY, pw, 0.0)).collect();
                let soc: Vec<_> = cat.batteries.iter().map(|b| m.add_var(tag(&format!("soc_{}", b.label), t), VarKind::Continuous, 0.0, f64::INFINITY, pw, 0.0)).collect();
                let hp_heat: Vec<_> = layout
                    .pairs
                    .iter()
                    .map(|&(p, k)| {
                        let v = m.add_var(tag(&format!("hp_heat_{}_{}", cat.ashps[p].label, cat.tanks[k].label), t), VarKind::Continuous, 0.0, f64::INFINITY, pw, 0.0);
                        if season.t_air[t] <= cat.ashps[p].t_min_c {
                            m.cap_upper(v, 0.0);
                        }
                        v
                    })
                    .collect();
                let hp_elec: Vec<_> = ashps_used.iter().map(|&p| (p, m.add_var(tag(&format!("hp_elec_{}", cat.ashps[p].label), t), VarKind::Continuous, 0.0, f64::INFINITY, pw, 0.0))).collect();
                let tanks: Vec<_> = tanks_used
                    .iter()
                    .map(|&k| {
                        let l = &cat.tanks[k].label;
                        TankVars {
                            k,
                            ch: m.add_var(tag(&format!("tank_ch_{l}"), t), VarKind::Continuous, 0.0, f64::INFINITY, pw, 0.0),
                            dis: m.add_var(tag(&format!("tank_dis_{l}"), t), VarKind::Continuous, 0.0, f64::INFINITY, pw, 0.0),
                            loss: m.add_var(tag(&format!("tank_loss_{l}"), t), VarKind::Continuous, 0.0, f64::INFINITY, pw, 0.0),
                            temp: m.add_var(tag(&format!("tank_temp_{l}"), t), VarKind::Continuous, 0.0, cat.water.supply_temperature_c, 1.0, TANK_TEMPERATURE_OFFSET),
                        }
                    })
                    .collect();
                let boiler: Vec<_> = cat.boilers.iter().map(|b| m.add_var(tag(&format!("boiler_{}", b.label), t), VarKind::Continuous, 0.0, f64::INFINITY, pw, 0.0)).collect();
                for (b, &h) in boiler.iter().enumerate() {
                    m.add_cost(h, weight * eco.gas_price / cat.boilers[b].efficiency);
                }

                // Electricity balance with battery and export sinks.
                let mut terms = vec![(grid, 1.0), (pv, 1.0), (sold, -1.0)];
                terms.extend(dis.iter().map(|&v| (v, 1.0)));
                terms.extend(ch.iter().map(|&v| (v, -1.0)));
                terms.extend(hp_elec.iter().map(|&(_, v)| (v, -1.0)));
                m.add_row(tag("elec_balance", t), RowKind::Plain, &terms, load, load);

                // Purchases serve demand only. Given the balance this is the
                // same as exports (and charging, unless the grid may charge)
                // coming from PV or the battery; in that form a dark hour
                // without storage reduces to `sold <= 0`, which presolve
                // removes instead of leaving a degenerate active pair.
                let mut terms = vec![(sold, 1.0), (pv, -1.0)];
                terms.extend(dis.iter().map(|&v| (v, -1.0)));
                if !set.allow_grid_charging {
                    terms.extend(ch.iter().map(|&v| (v, 1.0)));
                }
                m.add_row(tag("grid_limit", t), RowKind::Plain, &terms, f64::NEG_INFINITY, 0.0);

                m.add_row(tag("buy_indicator", t), RowKind::BigM, &[(grid, 1.0), (x, m_grid)], f64::NEG_INFINITY, m_grid);
                m.add_row(tag("sell_indicator", t), RowKind::BigM, &[(sold, 1.0), (x, -m_sold)], f64::NEG_INFINITY, 0.0);

                let mut terms: Vec<_> = tanks.iter().map(|tv| (tv.dis, 1.0)).collect();
                terms.extend(boiler.iter().map(|&v| (v, 1.0)));
                m.add_row(tag("heat_balance", t), RowKind::Plain, &terms, heat, heat);

                for tv in &tanks {
                    let mut terms = vec![(tv.ch, 1.0)];
                    terms.extend(layout.pairs.iter().zip(&hp_heat).filter(|(q, _)| q.1 == tv.k).map(|(_, &v)| (v, -1.0)));
                    m.add_row(tag(&format!("tank_charge_{}", cat.tanks[tv.k].label), t), RowKind::Plain, &terms, 0.0, 0.0);
                }
                for &(p, e) in &hp_elec {
                    let cop = tables.cop[si][t][p];
                    let mut terms = vec![(e, 1.0)];
                    let mut cap = Vec::new();
                    for ((q, &v), j) in layout.pairs.iter().zip(&hp_heat).zip(0..) {
                        if q.0 == p {
                            terms.push((v, -1.0 / cop));
                            cap.push((v, 1.0));
                            cap.push((dv(j), -tables.h_max[si][t][p]));
                        }
                    }
                    let l = &cat.ashps[p].label;
                    m.add_row(tag(&format!("cop_{l}"), t), RowKind::Plain, &terms, 0.0, 0.0);
                    m.add_row(tag(&format!("hp_capacity_{l}"), t), RowKind::Plain, &cap, f64::NEG_INFINITY, 0.0);
                }

                for (c, batt) in cat.batteries.iter().enumerate() {
                    let l = &batt.label;
                    let w = w_var(c);
                    m.add_row(tag(&format!("ch_max_{l}"), t), RowKind::Plain, &[(ch[c], 1.0), (w, -batt.max_power_kw)], f64::NEG_INFINITY, 0.0);
                    m.add_row(tag(&format!("dis_max_{l}"), t), RowKind::Plain, &[(dis[c], 1.0), (w, -batt.max_power_kw)], f64::NEG_INFINITY, 0.0);
                    m.add_row(tag(&format!("soc_max_{l}"), t), RowKind::Plain, &[(soc[c], 1.0), (w, -batt.max_soc * batt.capacity_kwh)], f64::NEG_INFINITY, 0.0);
                    m.add_row(tag(&format!("soc_min_{l}"), t), RowKind::Plain, &[(soc[c], 1.0), (w, -(1.0 - batt.max_dod) * batt.capacity_kwh)], 0.0, f64::INFINITY);
                }

                for (b, boil) in cat.boilers.iter().enumerate() {
                    m.add_row(tag(&format!("boiler_max_{}", boil.label), t), RowKind::Plain, &[(boiler[b], 1.0), (u_var(b), -boil.h_max_kw)], f64::NEG_INFINITY, 0.0);
                }

                m.add_row(tag("pv_output", t), RowKind::Plain, &[(pv, 1.0), (area, -eco.pv_efficiency * season.irradiance[t])], 0.0, 0.0);

                for tv in &tanks {
                    let tank = &cat.tanks[tv.k];
                    let l = &tank.label;
                    let sel = j_of(&|_, k| k == tv.k);
                    let with = |v: VarId, c: f64, coef: f64| -> Vec<(VarId, f64)> {
                        let mut out = vec![(v, c)];
                        out.extend(sel.iter().map(|&j| (j, coef)));
                        out
                    };
                    m.add_row(tag(&format!("tank_loss_{l}"), t), RowKind::Plain, &with(tv.loss, 1.0, -tank.heat_loss_kw), 0.0, 0.0);
                    m.add_row(tag(&format!("tank_temp_max_{l}"), t), RowKind::Plain, &with(tv.temp, 1.0, -cat.water.supply_temperature_c), f64::NEG_INFINITY, 0.0);
                    m.add_row(tag(&format!("tank_temp_min_{l}"), t), RowKind::Plain, &with(tv.temp, 1.0, -tank.t_min_c), 0.0, f64::INFINITY);
                    m.add_row(tag(&format!("tank_ch_max_{l}"), t), RowKind::Plain, &with(tv.ch, 1.0, -max_hp_heat), f64::NEG_INFINITY, 0.0);
                    m.add_row(tag(&format!("tank_dis_max_{l}"), t), RowKind::Plain, &with(tv.dis, 1.0, -heat), f64::NEG_INFINITY, 0.0);
                }

                season_steps.push(StepVars {
                    grid,
                    sold,
                    pv,
                    x,
                    ch,
                    dis,
                    soc,
                    hp_heat,
                    hp_elec,
                    tanks,
                    boiler,
                });
            }

            // Inter-temporal rows: battery energy wraps around the day, tanks
            // start from ambient and return to their first temperature.
            for t in 0..n {
                let prev = if t == 0 { n - 1 } else { t - 1 };
                for (c, batt) in cat.batteries.iter().enumerate() {
                    let cur = &season_steps[t];
                    let terms = [
                        (cur.soc[c], 1.0),
                        (season_steps[prev].soc[c], -1.0),
                        (cur.ch[c], -batt.eta_ch * dt),
                        (cur.dis[c], dt / batt.eta_disch),
                    ];
                    m.add_row(tag(&format!("soc_dyn_{}", batt.label), t), RowKind::Plain, &terms, 0.0, 0.0);
                }
                for (ti, tv) in season_steps[t].tanks.iter().enumerate() {
                    let tank = &cat.tanks[tv.k];
                    let cap = cat.water.density_kg_per_m3 * cat.water.specific_heat_kj_per_kg_k * tank.volume_m3 / (dt * 3600.0);
                    let mut terms = vec![(tv.temp, cap), (tv.ch, -tank.eta_ch), (tv.dis, 1.0 / tank.eta_disch), (tv.loss, 1.0)];
                    if t == 0 {
                        let sel = j_of(&|_, k| k == tv.k);
                        terms.extend(sel.iter().map(|&j| (j, -cap * season.t_air[0])));
                    } else {
                        terms.push((season_steps[t - 1].tanks[ti].temp, -cap));
                    }
                    m.add_row(tag(&format!("tank_dyn_{}", tank.label), t), RowKind::Plain, &terms, 0.0, 0.0);
                }
            }
            for ti in 0..tanks_used.len() {
                let first = season_steps[0].tanks[ti].temp;
                let last = season_steps[n - 1].tanks[ti].temp;
                m.add_row(tag(&format!("tank_cyclic_{}", cat.tanks[tanks_used[ti]].label), 0), RowKind::Plain, &[(first, 1.0), (last, -1.0)], 0.0, 0.0);
            }
            dwelling_steps.push(season_steps);
        }
        steps.push(dwelling_steps);
    }

    let rating = s.feeder_rating_kva();
    let mut feeder = Vec::new();
    for (si, season) in s.seasons.iter().enumerate() {
        let mut row = Vec::new();
        for t in 0..season.len() {
            let f = m.add_var(format!("feeder[{},{}]", season.id, t + 1), VarKind::Continuous, -rating, rating, pw, 0.0);
            let mut terms = vec![(f, 1.0)];
            for dw in &steps {
                terms.push((dw[si][t].grid, -1.0));
                terms.push((dw[si][t].sold, 1.0));
            }
            m.add_row(format!("feeder_balance[{},{}]", season.id, t + 1), RowKind::Plain, &terms, 0.0, 0.0);
            row.push(f);
        }
        feeder.push(row);
    }

    Ok(DesignModel {
        model: m,
        layout,
        design_vars,
        pv_area,
        steps,
        feeder,
        ashps_used,
        tanks_used,
    })
}

fn unit_terms(vars: &[VarId]) -> Vec<(VarId, f64)> {
    vars.iter().map(|&v| (v, 1.0)).collect()
}
