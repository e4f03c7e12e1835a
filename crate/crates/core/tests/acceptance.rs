//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the verdicts are printed in order
//! whatever the capture settings, one criterion at a time so the timings
//! are not shared with the others. A criterion that cannot be met by a
//! faithful implementation prints FAIL with its analysis but does not fail
//! the target; anything else that goes wrong does.

use std::collections::BTreeSet;
use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use lvdes::catalog::{crf, evaluate_capacity, evaluate_cop, load_builtin_catalog};
use lvdes::complementarity::{run_cr, run_cr_h, CrResult, Termination};
use lvdes::milp::{
    build_milp, percentage_difference, solve_milp, solve_milp_fixed, DesignModel, DesignVector, DwellingDesign, HighsBackend,
    MilpOptions, MilpResult, MilpStatus, ScheduleSolution,
};
use lvdes::mopf::{audit_solution, newton_power_flow, AdmittanceModel, Branch, Node, Quantity};
use lvdes::nlp::{build_nlp, IpmOptions};
use lvdes::orchestrator::{brute_force_reference, make_cut, run, RunOutcome, RunStatus};
use lvdes::scenario::{parse_scenario, Phase, Scenario};
use lvdes::settings::Variant;
use nalgebra::DMatrix;
use num_complex::Complex64;

const LEDGER_TOLERANCE: f64 = 1e-6;

#[derive(Default)]
struct Verdict {
    /// Findings that make the criterion fail and the target fail.
    failures: Vec<String>,
    /// Criterion not met for a reason analysed in the message.
    known: Vec<String>,
    notes: Vec<String>,
}

impl Verdict {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }
}

fn fixture(name: &str) -> Scenario {
    let path = format!("{}/fixtures/{name}/manifest.toml", env!("CARGO_MANIFEST_DIR"));
    parse_scenario(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run_as(name: &str, variant: Variant) -> (Scenario, RunOutcome, f64) {
    let mut s = fixture(name);
    s.settings.variant = variant;
    let t = Instant::now();
    let out = run(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
    (s, out, t.elapsed().as_secs_f64())
}

fn ipm(s: &Scenario) -> IpmOptions {
    IpmOptions {
        tol: s.settings.nlp_tolerance,
        max_iterations: s.settings.nlp_max_iterations,
        ..IpmOptions::default()
    }
}

fn first_milp(s: &Scenario) -> (DesignModel, MilpResult) {
    let dm = build_milp(s).unwrap();
    let r = solve_milp(&dm, &s.catalog, &[], &MilpOptions::default(), &HighsBackend);
    assert_eq!(r.status, MilpStatus::Optimal, "{}: first MILP", s.name);
    (dm, r)
}

fn cr_of(s: &Scenario, dm: &DesignModel, design: &DesignVector, warm: &ScheduleSolution, lub: Option<Option<f64>>) -> CrResult {
    let mut h = build_nlp(s, dm, design, s.settings.epsilon.initial).unwrap();
    match lub {
        None => run_cr(&mut h, &s.settings.epsilon, Some(warm), &ipm(s)),
        Some(l) => run_cr_h(&mut h, &s.settings.epsilon, Some(warm), &ipm(s), l),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn bound_sandwich() -> Verdict {
    let mut v = Verdict::default();
    for name in ["feeder5", "feeder10"] {
        let (_, out, secs) = run_as(name, Variant::Pa);
        let l = &out.ledger;
        v.check(l.check(LEDGER_TOLERANCE).is_ok(), format!("{name}: {:?}", l.check(LEDGER_TOLERANCE)));
        v.check(l.status.is_some_and(RunStatus::converged), format!("{name}: status {:?}", l.status));
        v.check(secs <= 120.0, format!("{name}: {secs:.1} s"));
        for w in l.iterations.windows(2) {
            let (a, b) = (w[0].lub.unwrap_or(f64::INFINITY), w[1].lub.unwrap_or(f64::INFINITY));
            v.check(b <= a, format!("{name}: LUB rose at iteration {}", w[1].iteration));
        }
        v.note(format!("{name}: {} iterations, LUB {:?}, {secs:.1} s", l.iterations.len(), l.lub()));
    }
    v
}

fn oracle_equivalence() -> Verdict {
    let mut v = Verdict::default();
    let t = Instant::now();
    let (s, out, _) = run_as("small_catalog", Variant::Pa);
    let bf = brute_force_reference(&s).unwrap();
    let secs = t.elapsed().as_secs_f64();
    v.check(bf.combinations <= 64, format!("{} combinations", bf.combinations));
    v.check(out.ledger.status == Some(RunStatus::ConvergedExhausted), format!("status {:?}", out.ledger.status));
    match (out.ledger.lub(), bf.best.as_ref().map(|b| b.objective)) {
        (Some(lub), Some(best)) => {
            v.check(rel(lub, best) <= 1e-4, format!("LUB {lub} vs brute force {best}"));
            v.note(format!("LUB {lub:.4}, brute force {best:.4} over {} designs", bf.combinations));
        }
        other => v.check(false, format!("missing bound {other:?}")),
    }
    v.check(secs <= 600.0, format!("{secs:.1} s"));
    v
}

fn cut_correctness() -> Verdict {
    let mut v = Verdict::default();
    let s = fixture("small_catalog");
    let dm = build_milp(&s).unwrap();
    let opts = MilpOptions::default();
    let all = DesignVector::enumerate(&dm.layout);

    let mut cuts = Vec::new();
    let mut visited: Vec<DesignVector> = Vec::new();
    for it in 1..=all.len() + 1 {
        let r = solve_milp(&dm, &s.catalog, &cuts, &opts, &HighsBackend);
        if r.status == MilpStatus::Infeasible {
            break;
        }
        let Some(d) = r.design else {
            v.check(false, format!("iteration {it}: MILP status {:?}", r.status));
            return v;
        };
        v.check(!visited.contains(&d), format!("iteration {it} revisited {d:?}"));
        cuts.push(make_cut(&d, &dm.layout, it));
        visited.push(d);
    }

    let feasible: BTreeSet<DesignVector> = all
        .iter()
        .filter(|d| solve_milp_fixed(&dm, &s.catalog, d, &opts, &HighsBackend).status == MilpStatus::Optimal)
        .cloned()
        .collect();
    let seen: BTreeSet<DesignVector> = visited.iter().cloned().collect();
    v.check(seen == feasible, format!("visited {} designs, {} are feasible", seen.len(), feasible.len()));

    for (cut, own) in cuts.iter().zip(&visited) {
        for d in &all {
            let excluded = cut.excludes(&d.to_binaries(&dm.layout));
            v.check(excluded == (d == own), format!("cut {} on {d:?}", cut.iteration));
        }
    }
    v.note(format!("{} designs visited before the MILP became infeasible, {} enumerated", visited.len(), all.len()));
    v
}

fn complementarity() -> Verdict {
    let mut v = Verdict::default();
    let mut cutoff_seen = false;
    for name in ["feeder5", "feeder10", "pv_heavy", "export_premium"] {
        let s = fixture(name);
        let (dm, r) = first_milp(&s);
        let (design, warm) = (r.design.unwrap(), r.schedule.unwrap());
        let cr = cr_of(&s, &dm, &design, &warm, None);
        v.check(cr.termination == Termination::ComplementarityMet, format!("{name}: CR {}", cr.termination));
        if let Some(sch) = &cr.schedule {
            let c = sch.max_complementarity(s.base.s_base_kva);
            v.check(c <= 1e-8 * (1.0 + 1e-9), format!("{name}: products reach {c:.3e} pu^2"));
        }

        let same = |h: &CrResult| h.termination == cr.termination && h.ub == cr.ub && h.solves() == cr.solves();
        let none = cr_of(&s, &dm, &design, &warm, Some(None));
        v.check(same(&none), format!("{name}: CR-H without incumbent differs"));
        let top = cr.trace.iter().map(|t| t.objective).fold(f64::NEG_INFINITY, f64::max);
        let high = cr_of(&s, &dm, &design, &warm, Some(Some(top + 1.0)));
        v.check(same(&high), format!("{name}: CR-H above every relaxed objective differs"));

        // An incumbent between the first relaxed objective and the final
        // one makes the cutoff fire part-way through the schedule.
        if cr.solves() > 1 {
            let (first, last) = (cr.trace[0].objective, cr.ub.unwrap_or(top));
            let cut = cr_of(&s, &dm, &design, &warm, Some(Some(0.5 * (first + last))));
            v.check(cut.termination == Termination::HeuristicCutoff, format!("{name}: CR-H ended {}", cut.termination));
            v.check(cut.solves() < cr.solves(), format!("{name}: CR-H {} solves, CR {}", cut.solves(), cr.solves()));
            v.note(format!("{name}: CR {} solves, CR-H with a cutoff {}", cr.solves(), cut.solves()));
            cutoff_seen = true;
        } else {
            v.note(format!("{name}: CR met complementarity in one solve"));
        }
    }
    v.check(cutoff_seen, "no fixture needed more than one CR solve");

    // Whole runs: same incumbent, fewer NLP solves.
    let (_, pa, _) = run_as("small_catalog", Variant::Pa);
    let (_, pah, _) = run_as("small_catalog", Variant::PaH);
    match (pa.ledger.lub(), pah.ledger.lub()) {
        (Some(a), Some(b)) => v.check(rel(a, b) <= 1e-6, format!("PA {a} vs PA-H {b}")),
        other => v.check(false, format!("small_catalog bounds {other:?}")),
    }
    // Designs that meet complementarity at the first bound cost one solve
    // either way, so the run totals may tie.
    let (na, nh) = (pa.ledger.total_nlp_solves(), pah.ledger.total_nlp_solves());
    v.check(nh <= na, format!("PA-H {nh} NLP solves, PA {na}"));
    v.note(format!("small_catalog: PA {na} NLP solves in {:.1} s, PA-H {nh} in {:.1} s", pa.ledger.total_s, pah.ledger.total_s));
    v
}

fn two_bus(z: Complex64) -> AdmittanceModel {
    let y = Complex64::new(1.0, 0.0) / z;
    let y_bus = BTreeMap::from([((0, 0), y), ((0, 1), -y), ((1, 0), -y), ((1, 1), y)]);
    let one = |v| DMatrix::from_element(1, 1, v);
    AdmittanceModel {
        nodes: vec![Node { bus: 0, phase: Phase::A }, Node { bus: 1, phase: Phase::A }],
        y: y_bus,
        branches: vec![Branch {
            id: "line".into(),
            from: vec![0],
            to: vec![1],
            yff: one(y),
            yft: one(-y),
            ytf: one(-y),
            ytt: one(y),
        }],
        slack: vec![Some(Complex64::new(1.0, 0.0)), None],
        s_base_kva: 100.0,
        z_base_ohm: 1.0,
    }
}

fn power_flow() -> Verdict {
    let mut v = Verdict::default();
    for name in ["feeder5", "feeder10", "pv_heavy", "single_design", "small_catalog", "time_limit", "export_premium"] {
        let s = fixture(name);
        let (_, r) = first_milp(&s);
        let a = audit_solution(&s, r.schedule.as_ref().unwrap()).unwrap();
        v.check(a.report.max_residual <= 1e-8, format!("{name}: Newton residual {:.2e}", a.report.max_residual));
    }
    for name in ["feeder5", "feeder10", "pv_heavy", "single_design", "export_premium"] {
        let (s, out, _) = run_as(name, Variant::Pa);
        let Some(best) = &out.best else {
            v.check(false, format!("{name}: no NLP solution"));
            continue;
        };
        let a = audit_solution(&s, &best.schedule).unwrap();
        v.check(a.report.is_clean(), format!("{name}: {} violations at {:.0e} pu", a.report.violations.len(), s.settings.audit_tolerance));
        v.check(a.report.max_residual <= 1e-8, format!("{name}: Newton residual {:.2e}", a.report.max_residual));
        v.note(format!("{name}: NLP schedule voltages {:.4}..{:.4} pu", a.report.v_min_seen, a.report.v_max_seen));
    }

    let mut worst = 0f64;
    for (r, x) in [(0.01, 0.01), (0.05, 0.02), (0.02, 0.04)] {
        let z = Complex64::new(r, x);
        for (p, q) in [(0.1, 0.0), (0.3, 0.1), (-0.2, 0.05), (0.5, 0.2)] {
            let st = newton_power_flow(&two_bus(z), &[Complex64::default(), Complex64::new(-p, -q)]).unwrap();
            let a = 1.0 - 2.0 * (r * p + x * q);
            let exact = (a + (a * a - 4.0 * z.norm_sqr() * (p * p + q * q)).sqrt()) / 2.0;
            worst = worst.max((st.voltages[1].norm_sqr() - exact).abs());
        }
    }
    v.check(worst <= 1e-10, format!("two-bus |V|^2 off the quadratic by {worst:.2e}"));
    v.note(format!("two-bus oracle within {worst:.1e} of the closed form"));
    v
}

fn milp_violation() -> Verdict {
    let mut v = Verdict::default();
    let (_, milp, _) = run_as("pv_heavy", Variant::MilpOnly);
    let over = milp.audit.as_ref().map_or(0, |a| a.count(Quantity::VMax));
    v.check(over >= 1, "milp-only schedule passes the audit");
    v.note(format!("milp-only: {over} v_max violations"));
    for variant in [Variant::Pa, Variant::PaH] {
        let (_, out, _) = run_as("pv_heavy", variant);
        match &out.audit {
            Some(a) => v.check(a.is_clean(), format!("{variant}: {} violations", a.violations.len())),
            None => v.check(false, format!("{variant}: no solution")),
        }
    }
    v
}

fn catalog_fidelity() -> Verdict {
    let mut v = Verdict::default();
    let cat = load_builtin_catalog();
    let counts = (cat.ashps.len(), cat.tanks.len(), cat.boilers.len(), cat.batteries.len());
    v.check(counts == (4, 4, 4, 3), format!("counts {counts:?}"));
    let mut eq = |what: String, got: f64, want: f64| v.check(got == want, format!("{what}: {got} != {want}"));

    let ashps = [
        ("S1", -10.0, 2575.0, 1931.0, [1.438, 5.358, 0.8645, 1.915], [0.000409, 0.0, 0.06176, 5.5]),
        ("M1", -10.0, 3053.0, 2137.0, [445.4, -1025.0, 0.00047, -272.9], [0.000966, -0.0156, 0.02112, 7.49]),
        ("M2", -15.0, 4861.0, 3403.0, [2142.0, 300.8, 0.02195, -0.6586], [0.000598, -0.0014, -0.014, 14.37]),
        ("L1", -15.0, 9722.0, 6805.0, [2142.0, 300.8, 0.02195, -0.6586], [0.001195, -0.0028, -0.028, 28.75]),
    ];
    let mut l1_printed = Vec::new();
    for (a, (label, tmin, unit, inst, cop, capacity)) in cat.ashps.iter().zip(ashps) {
        eq(format!("{label} label"), (a.label == label) as u8 as f64, 1.0);
        eq(format!("{label} t_min"), a.t_min_c, tmin);
        eq(format!("{label} unit cost"), a.unit_cost, unit);
        eq(format!("{label} install cost"), a.install_cost, inst);
        for (got, want) in [a.cop.l, a.cop.x0, a.cop.k, a.cop.b].into_iter().zip(cop) {
            eq(format!("{label} COP coefficient"), got, want);
        }
        for (name, (got, want)) in ["a", "b", "c", "d"].into_iter().zip([a.capacity.a, a.capacity.b, a.capacity.c, a.capacity.d].into_iter().zip(capacity)) {
            if label == "L1" && got != want {
                l1_printed.push(format!("{name} {got} vs printed {want}"));
            } else {
                eq(format!("{label} capacity {name}"), got, want);
            }
        }
    }

    let tanks = [("V", 0.15, 0.048), ("S", 0.17, 0.051), ("M", 0.21, 0.064), ("L", 0.3, 0.087)];
    for (t, (label, vol, loss)) in cat.tanks.iter().zip(tanks) {
        eq(format!("{label} label"), (t.label == label) as u8 as f64, 1.0);
        eq(format!("{label} volume"), t.volume_m3, vol);
        eq(format!("{label} loss"), t.heat_loss_kw, loss);
        eq(format!("{label} eta_ch"), t.eta_ch, 0.9);
        eq(format!("{label} eta_disch"), t.eta_disch, 0.9);
        eq(format!("{label} t_min"), t.t_min_c, 45.0);
    }

    let compat: [[Option<f64>; 4]; 4] = [
        [Some(3924.0), Some(3979.0), Some(4033.0), None],
        [Some(4402.0), Some(4457.0), Some(4511.0), None],
        [None, None, Some(6319.0), Some(6595.0)],
        [None, None, Some(6319.0), Some(6595.0)],
    ];
    for (p, row) in compat.iter().enumerate() {
        for (k, want) in row.iter().enumerate() {
            let got = cat.compatibility.cost(p, k);
            v.check(got == *want, format!("compatibility {}/{}: {got:?} vs {want:?}", cat.ashps[p].label, cat.tanks[k].label));
        }
    }
    let mut eq = |what: String, got: f64, want: f64| v.check(got == want, format!("{what}: {got} != {want}"));

    let boilers = [
        ("IdealLogicCombi24", 24.0, 0.94, 792.0, 1500.0),
        ("PottertonCombiAssure25", 25.0, 0.93, 797.0, 1563.0),
        ("Vitodens050W", 29.0, 0.976, 742.0, 1813.0),
        ("Vitodens200W", 32.0, 0.98, 1702.0, 2000.0),
    ];
    for (b, (label, h, eff, unit, inst)) in cat.boilers.iter().zip(boilers) {
        eq(format!("{label} label"), (b.label == label) as u8 as f64, 1.0);
        eq(format!("{label} h_max"), b.h_max_kw, h);
        eq(format!("{label} efficiency"), b.efficiency, eff);
        eq(format!("{label} unit cost"), b.unit_cost, unit);
        eq(format!("{label} install cost"), b.install_cost, inst);
    }

    let batteries = [
        ("RESU6.5", [6.5, 0.9, 1.0, 3200.0, 160.0, 0.97, 0.97, 480.0, 4.2]),
        ("RESU3.3", [3.3, 0.87, 1.0, 2200.0, 110.0, 0.97, 0.97, 330.0, 3.0]),
        ("TP2", [14.0, 0.95, 1.0, 6000.0, 300.0, 0.95, 0.95, 2000.0, 5.0]),
    ];
    for (b, (label, want)) in cat.batteries.iter().zip(batteries) {
        eq(format!("{label} label"), (b.label == label) as u8 as f64, 1.0);
        let got = [b.capacity_kwh, b.max_dod, b.max_soc, b.unit_cost, b.annual_op_cost, b.eta_ch, b.eta_disch, b.install_cost, b.max_power_kw];
        for (i, (g, w)) in got.into_iter().zip(want).enumerate() {
            eq(format!("{label} field {i}"), g, w);
        }
    }

    let e = &cat.economics;
    let got = [
        e.lifetime_years,
        e.interest_rate,
        e.gas_price,
        e.day_tariff,
        e.night_tariff,
        e.export_tariff,
        e.generation_tariff,
        e.pv_panel_cost,
        e.pv_efficiency,
        e.pv_fixed_om,
        e.panel_area_m2,
        e.panel_capacity_kw,
    ];
    let want = [20.0, 0.075, 0.02514, 0.18, 0.08, 0.0503, 0.1, 450.0, 0.18, 12.5, 1.75, 0.25];
    for (i, (g, w)) in got.into_iter().zip(want).enumerate() {
        eq(format!("economics field {i}"), g, w);
    }

    let (m2, l1) = (&cat.ashps[2], &cat.ashps[3]);
    let worst = (0..100)
        .map(|i| -20.0 + 60.0 * i as f64 / 99.0)
        .map(|t| (evaluate_capacity(l1, t) - 2.0 * evaluate_capacity(m2, t)).abs())
        .fold(0.0, f64::max);
    v.check(worst <= 1e-12, format!("L1 capacity off 2 x M2 by {worst:.2e} kW"));

    // Independent evaluation of the logistic curve.
    let oracle = 445.4 / (1.0 + (-0.00047f64 * (7.0 + 1025.0)).exp()) - 272.9;
    let cop = evaluate_cop(&cat.ashps[1], 7.0);
    v.check((cop - oracle).abs() <= 1e-2, format!("COP(M1, 7) {cop} vs {oracle}"));
    let f = crf(0.075, 20.0);
    v.check((f - 0.09809).abs() <= 1e-5, format!("crf {f}"));
    v.note(format!("COP(M1, 7 C) {cop:.5}, crf {f:.6}, L1 = 2 x M2 within {worst:.0e} kW"));

    if !l1_printed.is_empty() {
        v.known.push(format!(
            "L1 capacity {} differ from the printed table in the last digit. The printed L1 row is not twice the M2 row \
             (2 x 0.000598 = 0.001196, 2 x 14.37 = 28.74), so no catalog can match both that row and the L1 = 2 x M2 check; \
             the doubled values are kept",
            l1_printed.join(", ")
        ));
    }
    v
}

fn zero(series: &[Vec<f64>], keep: Option<usize>) -> bool {
    series.iter().enumerate().filter(|(j, _)| Some(*j) != keep).all(|(_, s)| s.iter().all(|x| x.abs() <= 1e-7))
}

fn check_laws(v: &mut Verdict, what: &str, s: &Scenario, dm: &DesignModel, design: &DesignVector, sch: &ScheduleSolution, cold: &[usize]) {
    let cat = &s.catalog;
    for (i, (dd, ds)) in design.dwellings.iter().zip(&sch.dwellings).enumerate() {
        let pair = dd.ashp_tank.and_then(|pk| dm.layout.pairs.iter().position(|&q| q == pk));
        for (si, ss) in ds.seasons.iter().enumerate() {
            let tag = format!("{what}: dwelling {i} season {si}");
            v.check(zero(&ss.hp_heat, pair), format!("{tag}: unselected heat pump runs"));
            v.check(zero(&ss.hp_elec, dd.ashp_tank.map(|p| p.0)), format!("{tag}: unselected heat pump draws power"));
            let tank = dd.ashp_tank.map(|p| p.1);
            for series in [&ss.tank_charge, &ss.tank_discharge, &ss.tank_loss, &ss.tank_temp] {
                v.check(zero(series, tank), format!("{tag}: unselected tank active"));
            }
            for series in [&ss.battery_charge, &ss.battery_discharge, &ss.battery_energy] {
                v.check(zero(series, dd.battery), format!("{tag}: unselected battery active"));
            }
            v.check(zero(&ss.boiler_heat, dd.boiler), format!("{tag}: unselected boiler fires"));

            let n = ss.grid.len();
            if let (Some(j), Some((p, k))) = (pair, dd.ashp_tank) {
                for &t in cold {
                    if s.seasons[si].t_air[t] <= cat.ashps[p].t_min_c {
                        v.check(ss.hp_heat[j][t].abs() <= 1e-7, format!("{tag}: heat pump gives {} kW at {} C", ss.hp_heat[j][t], s.seasons[si].t_air[t]));
                    }
                }
                let temp = &ss.tank_temp[k];
                v.check((temp[0] - temp[n - 1]).abs() <= 1e-5, format!("{tag}: tank {} -> {} C", temp[0], temp[n - 1]));
            }
            if let Some(c) = dd.battery {
                let b = &cat.batteries[c];
                let dt = s.seasons[si].timestep_h;
                let e = &ss.battery_energy[c];
                for t in 0..n {
                    let prev = e[(t + n - 1) % n];
                    let want = prev + b.eta_ch * dt * ss.battery_charge[c][t] - dt / b.eta_disch * ss.battery_discharge[c][t];
                    v.check((e[t] - want).abs() <= 1e-5, format!("{tag}: battery energy breaks the daily cycle at step {t}"));
                }
            }
        }
    }
}

fn model_laws() -> Verdict {
    let mut v = Verdict::default();
    let mut s = fixture("feeder5");
    let cold: Vec<usize> = (2..7).collect();
    for season in &mut s.seasons {
        for &t in &cold {
            season.t_air[t] = -20.0;
        }
    }
    let cat = &s.catalog;
    let m2 = cat.ashp_index("M2").unwrap();
    let m = cat.tank_index("M").unwrap();
    let mut design = DesignVector::empty(s.dwellings.len());
    design.dwellings[0] = DwellingDesign {
        ashp_tank: Some((m2, m)),
        battery: Some(cat.battery_index("RESU6.5").unwrap()),
        boiler: Some(cat.boiler_index("Vitodens050W").unwrap()),
    };
    for d in design.dwellings.iter_mut().skip(1) {
        d.boiler = Some(0);
    }
    let dm = build_milp(&s).unwrap();
    let r = solve_milp_fixed(&dm, &s.catalog, &design, &MilpOptions::default(), &HighsBackend);
    let Some(sch) = r.schedule else {
        v.check(false, format!("fixed design MILP {:?}", r.status));
        return v;
    };
    check_laws(&mut v, "MILP", &s, &dm, &design, &sch, &cold);
    let cr = cr_of(&s, &dm, &design, &sch, None);
    match &cr.schedule {
        Some(nlp) => check_laws(&mut v, "NLP", &s, &dm, &design, nlp, &cold),
        None => v.check(false, format!("CR ended {}", cr.termination)),
    }

    let a = format!("{:.2}", percentage_difference(46488.0, 46431.0));
    v.check(a == "0.12", format!("(46488, 46431) -> {a}"));
    let b = percentage_difference(13572.0, 13492.0);
    if format!("{b:.2}") != "0.60" {
        v.known.push(format!(
            "(13572, 13492) gives {b:.4}%, printed as {b:.2} rather than 0.60. Relative to the final value it is \
             {:.4}%; neither base rounds to 0.60, so the printed figure presumably came from unrounded costs",
            100.0 * 80.0 / 13572.0
        ));
    }
    v
}

fn taxonomy() -> Verdict {
    let mut v = Verdict::default();
    for (name, want) in [
        ("feeder5", RunStatus::ConvergedBoundCrossing),
        ("single_design", RunStatus::ConvergedExhausted),
        ("time_limit", RunStatus::TimeLimit),
    ] {
        let (s, out, secs) = run_as(name, s_variant(name));
        let l = &out.ledger;
        v.check(l.status == Some(want), format!("{name}: {:?}, expected {want}", l.status));
        v.check(l.check(LEDGER_TOLERANCE).is_ok(), format!("{name}: {:?}", l.check(LEDGER_TOLERANCE)));
        let mut buf = Vec::new();
        l.write_jsonl(&mut buf).unwrap();
        let lines = String::from_utf8(buf).unwrap().lines().count();
        v.check(lines == l.iterations.len(), format!("{name}: {lines} ledger lines for {} iterations", l.iterations.len()));
        if want == RunStatus::TimeLimit {
            v.check(secs <= s.settings.time_limit_s + 5.0, format!("{name}: stopped after {secs:.1} s"));
        }
        v.note(format!("{name}: {want} after {} iterations, {secs:.1} s", l.iterations.len()));
    }
    v
}

fn s_variant(name: &str) -> Variant {
    fixture(name).settings.variant
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("bound sandwich", bound_sandwich),
        ("oracle equivalence", oracle_equivalence),
        ("cut correctness", cut_correctness),
        ("complementarity", complementarity),
        ("power-flow audit", power_flow),
        ("MILP-violation reproduction", milp_violation),
        ("catalog fidelity", catalog_fidelity),
        ("model laws", model_laws),
        ("convergence taxonomy", taxonomy),
    ];
    let mut unexpected = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let v = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict {
                failures: vec![format!("panicked: {msg}")],
                ..Verdict::default()
            }
        });
        let pass = v.failures.is_empty() && v.known.is_empty();
        println!("criterion {} ({name}): {}", i + 1, if pass { "PASS" } else { "FAIL" });
        for n in &v.notes {
            println!("    {n}");
        }
        for k in &v.known {
            println!("    not met: {k}");
        }
        for f in &v.failures {
            println!("    failed: {f}");
        }
        unexpected += v.failures.len();
    }
    if unexpected > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
