use std::collections::BTreeMap;

use lvdes::catalog::{crf, evaluate_capacity, evaluate_cop, load_builtin_catalog};
use lvdes::milp::{percentage_difference, DesignLayout, DesignVector};
use lvdes::mopf::{newton_power_flow, AdmittanceModel, Branch, Node};
use lvdes::orchestrator::{make_cut, BoundsLedger, IntegerCut, IterationRecord};
use lvdes::report::thousands;
use lvdes::scenario::Phase;
use lvdes::settings::Variant;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn layout() -> DesignLayout {
    DesignLayout::new(&load_builtin_catalog(), 2)
}

fn record(iteration: usize, lb: f64, ub: Option<f64>, lub: Option<f64>) -> IterationRecord {
    IterationRecord {
        iteration,
        lb,
        ub,
        lub,
        termination: None,
        nlp_solves: 1,
        design: Vec::new(),
        milp_s: 0.0,
        nlp_s: 0.0,
        elapsed_s: 0.0,
    }
}

/// Ledger from LB increments and UB offsets above the LB.
fn ledger(steps: &[(f64, Option<f64>)]) -> BoundsLedger {
    let mut l = BoundsLedger::new(Variant::Pa);
    let (mut lb, mut lub): (f64, Option<f64>) = (100.0, None);
    for (k, &(inc, gap)) in steps.iter().enumerate() {
        lb += inc;
        let ub = gap.map(|g| lb + g);
        if let Some(u) = ub {
            lub = Some(lub.map_or(u, |v| v.min(u)));
        }
        l.push(record(k + 1, lb, ub, lub));
    }
    l
}

proptest! {
    #[test]
    fn cut_excludes_exactly_its_design(z in prop::collection::vec(any::<bool>(), 1..24), flips in prop::collection::vec(any::<bool>(), 24)) {
        let (ones, zeros) = (0..z.len()).partition(|&j| z[j]);
        let cut = IntegerCut { iteration: 1, ones, zeros };
        let w: Vec<bool> = z.iter().zip(&flips).map(|(a, f)| a ^ f).collect();
        prop_assert_eq!(cut.excludes(&w), w == z);
        prop_assert_eq!(cut.lhs(&w), z.iter().zip(&w).filter(|(a, b)| a != b).count());
    }

    #[test]
    fn design_binaries_round_trip(i in 0usize..10_000) {
        let layout = layout();
        let all = DesignVector::enumerate(&layout);
        let d = &all[i % all.len()];
        let z = d.to_binaries(&layout);
        prop_assert_eq!(DesignVector::from_binaries(&layout, &z), Some(d.clone()));
        let cut = make_cut(d, &layout, 1);
        prop_assert!(cut.excludes(&z));
        let other = &all[(i + 1) % all.len()];
        prop_assert!(!cut.excludes(&other.to_binaries(&layout)));
    }

    #[test]
    fn crf_repays_the_capital(rate in 0.001f64..0.3, years in 1u32..60) {
        let f = crf(rate, years as f64);
        let pv: f64 = (1..=years).map(|k| f / (1.0 + rate).powi(k as i32)).sum();
        prop_assert!((pv - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cop_rises_with_temperature(t in -20.0f64..39.0, dt in 0.0f64..1.0) {
        for a in &load_builtin_catalog().ashps {
            prop_assert!(evaluate_cop(a, t + dt) >= evaluate_cop(a, t) - 1e-12);
            prop_assert!(evaluate_cop(a, t) > 0.0);
        }
    }

    #[test]
    fn large_heat_pump_doubles_medium(t in -20.0f64..40.0) {
        let cat = load_builtin_catalog();
        prop_assert_eq!(evaluate_capacity(&cat.ashps[3], t), 2.0 * evaluate_capacity(&cat.ashps[2], t));
    }

    #[test]
    fn percentage_difference_sign(a in 1.0f64..1e6, b in 1.0f64..1e6) {
        let p = percentage_difference(a, b);
        prop_assert_eq!(p > 0.0, a > b);
        prop_assert!((b * (1.0 + p / 100.0) - a).abs() <= 1e-9 * a.max(b));
    }

    #[test]
    fn thousands_keeps_the_rounded_value(v in -1e12f64..1e12) {
        let s = thousands(v);
        let back: f64 = s.replace(',', "").parse().unwrap();
        prop_assert_eq!(back, v.round());
        prop_assert!(s.trim_start_matches('-').split(',').skip(1).all(|g| g.len() == 3));
    }

    #[test]
    fn monotone_ledgers_check(steps in prop::collection::vec((0.0f64..50.0, prop::option::of(0.0f64..100.0)), 1..20)) {
        prop_assert!(ledger(&steps).check(0.0).is_ok());
    }

    #[test]
    fn falling_lower_bound_is_caught(steps in prop::collection::vec((0.0f64..50.0, prop::option::of(0.0f64..100.0)), 2..20), k in 1usize..20, drop in 1.0f64..10.0) {
        let mut l = ledger(&steps);
        let k = k % l.iterations.len();
        let k = k.max(1);
        l.iterations[k].lb = l.iterations[k - 1].lb - drop;
        prop_assert!(l.check(1e-9).is_err());
    }

    #[test]
    fn two_bus_matches_quadratic(r in 0.001f64..0.05, x in 0.001f64..0.05, p in -0.5f64..0.5, q in -0.2f64..0.2) {
        let z = Complex64::new(r, x);
        let y = Complex64::new(1.0, 0.0) / z;
        let one = |v| DMatrix::from_element(1, 1, v);
        let model = AdmittanceModel {
            nodes: vec![Node { bus: 0, phase: Phase::A }, Node { bus: 1, phase: Phase::A }],
            y: BTreeMap::from([((0, 0), y), ((0, 1), -y), ((1, 0), -y), ((1, 1), y)]),
            branches: vec![Branch { id: "l".into(), from: vec![0], to: vec![1], yff: one(y), yft: one(-y), ytf: one(-y), ytt: one(y) }],
            slack: vec![Some(Complex64::new(1.0, 0.0)), None],
            s_base_kva: 100.0,
            z_base_ohm: 1.0,
        };
        let st = newton_power_flow(&model, &[Complex64::default(), Complex64::new(-p, -q)]).unwrap();
        let a = 1.0 - 2.0 * (r * p + x * q);
        let exact = (a + (a * a - 4.0 * z.norm_sqr() * (p * p + q * q)).sqrt()) / 2.0;
        prop_assert!((st.voltages[1].norm_sqr() - exact).abs() < 1e-10);
        let total: Complex64 = st.power.iter().sum();
        prop_assert!((total - model.losses(&st.voltages)).norm() < 1e-10);
    }
}
