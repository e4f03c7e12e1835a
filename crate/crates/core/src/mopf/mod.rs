//! Multiphase network model: bus admittance assembly, a Newton power-flow
//! oracle and the rectangular power-balance block for the design NLP.

mod audit;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nlp::{NlpProblem, QuadRow};
use crate::scenario::{Phase, Scenario};

pub use audit::{audit_solution, injections, AuditResult, Quantity, Violation, ViolationReport, AUDIT_TOLERANCE};

/// One bus-phase of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub bus: usize,
    pub phase: Phase,
}

/// Two-port element: `[I_f; I_t] = [[yff, yft], [ytf, ytt]] [V_f; V_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    pub yff: DMatrix<Complex64>,
    pub yft: DMatrix<Complex64>,
    pub ytf: DMatrix<Complex64>,
    pub ytt: DMatrix<Complex64>,
}

impl Branch {
    /// Complex power lost in the element, pu.
    pub fn losses(&self, v: &[Complex64]) -> Complex64 {
        let vf = DVector::from_iterator(self.from.len(), self.from.iter().map(|&k| v[k]));
        let vt = DVector::from_iterator(self.to.len(), self.to.iter().map(|&k| v[k]));
        let i_f = &self.yff * &vf + &self.yft * &vt;
        let i_t = &self.ytf * &vf + &self.ytt * &vt;
        vf.iter().zip(i_f.iter()).map(|(v, i)| v * i.conj()).sum::<Complex64>()
            + vt.iter().zip(i_t.iter()).map(|(v, i)| v * i.conj()).sum::<Complex64>()
    }
}

/// Per-unit nodal admittance model with the slack phasors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceModel {
    pub nodes: Vec<Node>,
    /// Nonzero entries of Y, pu.
    pub y: BTreeMap<(usize, usize), Complex64>,
    pub branches: Vec<Branch>,
    /// Fixed voltage per node, `Some` at the slack.
    pub slack: Vec<Option<Complex64>>,
    pub s_base_kva: f64,
    pub z_base_ohm: f64,
}

/// Nominal phasor of a phase: unit magnitude, 120 degrees apart.
pub fn nominal_phasor(p: Phase) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI / 3.0 * p.index() as f64)
}

impl AdmittanceModel {
    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, bus: usize, phase: Phase) -> Option<usize> {
        self.nodes.iter().position(|n| n.bus == bus && n.phase == phase)
    }

    pub fn is_slack(&self, k: usize) -> bool {
        self.slack[k].is_some()
    }

    /// Non-slack node indices in order.
    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&k| !self.is_slack(k)).collect()
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.y.get(&(i, j)).copied().unwrap_or_default()
    }

    pub fn dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (&(i, j), &v) in &self.y {
            m[(i, j)] = v;
        }
        m
    }

    /// Nodal current injections `Y v`.
    pub fn currents(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.dim()];
        for (&(i, j), &y) in &self.y {
            out[i] += y * v[j];
        }
        out
    }

    /// Complex power injected at every node, pu.
    pub fn power(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.currents(v).iter().zip(v).map(|(i, v)| v * i.conj()).collect()
    }

    /// Voltages with every non-slack injection at zero.
    pub fn no_load_voltages(&self) -> Result<Vec<Complex64>> {
        let free = self.free_nodes();
        let n = free.len();
        let mut a = DMatrix::<Complex64>::zeros(n, n);
        let mut rhs = DVector::<Complex64>::zeros(n);
        let pos: BTreeMap<usize, usize> = free.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        for (&(i, j), &y) in &self.y {
            let Some(&r) = pos.get(&i) else { continue };
            match (pos.get(&j), self.slack[j]) {
                (Some(&c), _) => a[(r, c)] += y,
                (None, Some(vs)) => rhs[r] -= y * vs,
                (None, None) => unreachable!(),
            }
        }
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularTopology("nodal admittance matrix is singular".into()))?;
        let mut v: Vec<Complex64> = self.slack.iter().map(|s| s.unwrap_or_default()).collect();
        for (i, &k) in free.iter().enumerate() {
            v[k] = sol[i];
        }
        Ok(v)
    }

    /// Converged losses over all branches, pu.
    pub fn losses(&self, v: &[Complex64]) -> Complex64 {
        self.branches.iter().map(|b| b.losses(v)).sum()
    }
}

fn complex_matrix(n: usize, f: impl Fn(usize, usize) -> Complex64) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, f)
}

/// Builds the per-phase Y-bus with line pi-sections and phase-shifting
/// transformers. The slack bus is held at the nominal phasors times the
/// slack voltage.
pub fn assemble_admittance(s: &Scenario) -> Result<AdmittanceModel> {
    let mut nodes = Vec::new();
    for (bi, b) in s.buses.iter().enumerate() {
        for &p in &b.phases {
            nodes.push(Node { bus: bi, phase: p });
        }
    }
    let index: BTreeMap<(usize, Phase), usize> = nodes.iter().enumerate().map(|(k, n)| ((n.bus, n.phase), k)).collect();
    let zb = s.base.z_base_ohm();
    let mut y: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
    let mut branches = Vec::new();
    let mut stamp = |y: &mut BTreeMap<(usize, usize), Complex64>, br: Branch| {
        for (rows, cols, m) in [(&br.from, &br.from, &br.yff), (&br.from, &br.to, &br.yft), (&br.to, &br.from, &br.ytf), (&br.to, &br.to, &br.ytt)] {
            for (a, &i) in rows.iter().enumerate() {
                for (b, &j) in cols.iter().enumerate() {
                    if m[(a, b)] != Complex64::default() {
                        *y.entry((i, j)).or_default() += m[(a, b)];
                    }
                }
            }
        }
        branches.push(br);
    };

    for l in &s.lines {
        let fb = s.bus_index(&l.from_bus).expect("validated");
        let tb = s.bus_index(&l.to_bus).expect("validated");
        let n = l.n_phases();
        let z = complex_matrix(n, |i, j| l.z(i, j) / zb);
        let ys = z
            .try_inverse()
            .ok_or_else(|| Error::SingularTopology(format!("line `{}` has a singular impedance matrix", l.id)))?;
        let sh = Complex64::new(0.0, 0.5 * l.shunt_susceptance_s * zb);
        let shunt = DMatrix::from_diagonal_element(n, n, sh);
        branches_push_line(&mut stamp, &mut y, l.id.clone(), &index, fb, tb, &l.phases, ys, shunt);
    }
    for t in &s.transformers {
        let fb = s.bus_index(&t.from_bus).expect("validated");
        let tb = s.bus_index(&t.to_bus).expect("validated");
        let yt = Complex64::new(1.0, 0.0) / Complex64::new(t.r_ohm / zb, t.x_ohm / zb);
        let shift = Complex64::from_polar(1.0, t.phase_shift_deg.to_radians());
        let d = |v: Complex64| DMatrix::from_diagonal_element(3, 3, v);
        let br = Branch {
            id: t.id.clone(),
            from: Phase::ALL.iter().map(|&p| index[&(fb, p)]).collect(),
            to: Phase::ALL.iter().map(|&p| index[&(tb, p)]).collect(),
            yff: d(yt * shift.norm_sqr()),
            yft: d(-yt * shift.conj()),
            ytf: d(-yt * shift),
            ytt: d(yt),
        };
        stamp(&mut y, br);
    }

    let slack_bus = s.slack_index();
    let slack = nodes
        .iter()
        .map(|n| (n.bus == slack_bus).then(|| nominal_phasor(n.phase) * s.base.slack_voltage_pu))
        .collect::<Vec<_>>();
    for (k, n) in nodes.iter().enumerate() {
        if slack[k].is_none() && y.get(&(k, k)).map_or(true, |v| v.norm() == 0.0) {
            return Err(Error::SingularTopology(format!(
                "phase {} of bus `{}` is isolated",
                n.phase, s.buses[n.bus].id
            )));
        }
    }
    let model = AdmittanceModel {
        nodes,
        y,
        branches,
        slack,
        s_base_kva: s.base.s_base_kva,
        z_base_ohm: zb,
    };
    model.no_load_voltages()?;
    Ok(model)
}

#[allow(clippy::too_many_arguments)]
fn branches_push_line(
    stamp: &mut impl FnMut(&mut BTreeMap<(usize, usize), Complex64>, Branch),
    y: &mut BTreeMap<(usize, usize), Complex64>,
    id: String,
    index: &BTreeMap<(usize, Phase), usize>,
    fb: usize,
    tb: usize,
    phases: &[Phase],
    ys: DMatrix<Complex64>,
    shunt: DMatrix<Complex64>,
) {
    let br = Branch {
        id,
        from: phases.iter().map(|&p| index[&(fb, p)]).collect(),
        to: phases.iter().map(|&p| index[&(tb, p)]).collect(),
        yff: &ys + &shunt,
        yft: -&ys,
        ytf: -&ys,
        ytt: &ys + &shunt,
    };
    stamp(y, br);
}

/// Electrical state: voltages and the power injected at every node, pu.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub voltages: Vec<Complex64>,
    pub power: Vec<Complex64>,
    pub iterations: usize,
    /// Largest power mismatch at a non-slack node.
    pub residual: f64,
}

impl NetworkState {
    pub fn magnitude(&self, k: usize) -> f64 {
        self.voltages[k].norm()
    }
}

pub const NEWTON_TOLERANCE: f64 = 1e-10;
const NEWTON_MAX_ITERATIONS: usize = 30;

/// Solves the power flow for specified injections (pu, load negative) at
/// every non-slack node; slack entries are ignored. Starts from the
/// no-load voltages.
pub fn newton_power_flow(model: &AdmittanceModel, injections: &[Complex64]) -> Result<NetworkState> {
    newton_from(model, injections, &model.no_load_voltages()?)
}

pub fn newton_from(model: &AdmittanceModel, injections: &[Complex64], start: &[Complex64]) -> Result<NetworkState> {
    let free = model.free_nodes();
    let n = free.len();
    let pos: BTreeMap<usize, usize> = free.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let mut v = start.to_vec();
    for (k, s) in model.slack.iter().enumerate() {
        if let Some(s) = s {
            v[k] = *s;
        }
    }
    let mismatch = |v: &[Complex64]| -> (Vec<Complex64>, Vec<f64>, f64) {
        let i = model.currents(v);
        let mut f = vec![0.0; 2 * n];
        let mut worst = 0f64;
        for (r, &k) in free.iter().enumerate() {
            let s = v[k] * i[k].conj() - injections[k];
            f[2 * r] = s.re;
            f[2 * r + 1] = s.im;
            worst = worst.max(s.re.abs()).max(s.im.abs());
        }
        (i, f, worst)
    };
    let (mut cur, mut f, mut worst) = mismatch(&v);
    for it in 0..=NEWTON_MAX_ITERATIONS {
        if !worst.is_finite() {
            break;
        }
        if worst <= NEWTON_TOLERANCE {
            return Ok(NetworkState {
                power: model.power(&v),
                voltages: v,
                iterations: it,
                residual: worst,
            });
        }
        if it == NEWTON_MAX_ITERATIONS {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for (&(k, j), &y) in &model.y {
            let (Some(&r), Some(&c)) = (pos.get(&k), pos.get(&j)) else { continue };
            let (g, b) = (y.re, y.im);
            let (vr, vi) = (v[k].re, v[k].im);
            jac[(2 * r, 2 * c)] += vr * g + vi * b;
            jac[(2 * r, 2 * c + 1)] += -vr * b + vi * g;
            jac[(2 * r + 1, 2 * c)] += vi * g - vr * b;
            jac[(2 * r + 1, 2 * c + 1)] += -vi * b - vr * g;
        }
        for (r, &k) in free.iter().enumerate() {
            let i = cur[k];
            jac[(2 * r, 2 * r)] += i.re;
            jac[(2 * r, 2 * r + 1)] += i.im;
            jac[(2 * r + 1, 2 * r)] -= i.im;
            jac[(2 * r + 1, 2 * r + 1)] += i.re;
        }
        let rhs = DVector::from_iterator(2 * n, f.iter().map(|x| -x));
        let Some(dx) = jac.lu().solve(&rhs) else { break };
        for (r, &k) in free.iter().enumerate() {
            v[k] += Complex64::new(dx[2 * r], dx[2 * r + 1]);
        }
        (cur, f, worst) = mismatch(&v);
    }
    Err(Error::NonConvergence {
        iterations: NEWTON_MAX_ITERATIONS,
        residual: worst,
    })
}

/// Net injection at one node as an affine function of NLP variables, pu.
/// Reactive injection is `tan_phi` times the active one.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionExpr {
    pub node: usize,
    pub terms: Vec<(usize, f64)>,
    pub tan_phi: f64,
}

/// Voltage variables added to the NLP for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct MopfBlock {
    /// `(vr, vi)` variable per node; `None` at the slack.
    pub voltage_vars: Vec<Option<(usize, usize)>>,
    /// Row indices of the power balances and the voltage bands.
    pub rows: Vec<usize>,
}

impl MopfBlock {
    /// Voltage phasors at an NLP point, slack included.
    pub fn voltages(&self, model: &AdmittanceModel, x: &[f64]) -> Vec<Complex64> {
        self.voltage_vars
            .iter()
            .enumerate()
            .map(|(k, v)| match v {
                Some((r, i)) => Complex64::new(x[*r], x[*i]),
                None => model.slack[k].expect("slack node"),
            })
            .collect()
    }
}

/// Adds rectangular voltage variables, P and Q balances at every non-slack
/// node and the squared voltage band for one time step.
pub fn add_mopf_constraints(
    nlp: &mut NlpProblem,
    model: &AdmittanceModel,
    s: &Scenario,
    label: &str,
    injections: &[InjectionExpr],
    start: &[Complex64],
) -> MopfBlock {
    let mut voltage_vars = vec![None; model.dim()];
    for (k, node) in model.nodes.iter().enumerate() {
        if model.is_slack(k) {
            continue;
        }
        let name = format!("{}.{}", s.buses[node.bus].id, node.phase);
        let vr = nlp.add_var(format!("vr[{label},{name}]"), f64::NEG_INFINITY, f64::INFINITY, start[k].re);
        let vi = nlp.add_var(format!("vi[{label},{name}]"), f64::NEG_INFINITY, f64::INFINITY, start[k].im);
        voltage_vars[k] = Some((vr, vi));
    }
    let mut by_node: BTreeMap<usize, Vec<&InjectionExpr>> = BTreeMap::new();
    for inj in injections {
        by_node.entry(inj.node).or_default().push(inj);
    }
    let mut rows = Vec::new();
    for (k, node) in model.nodes.iter().enumerate() {
        let Some((vrk, vik)) = voltage_vars[k] else { continue };
        let name = format!("{}.{}", s.buses[node.bus].id, node.phase);
        let mut p = QuadRow {
            name: format!("p_balance[{label},{name}]"),
            lin: Vec::new(),
            quad: Vec::new(),
            lo: 0.0,
            hi: 0.0,
        };
        let mut q = QuadRow {
            name: format!("q_balance[{label},{name}]"),
            ..p.clone()
        };
        for (&(i, j), &y) in model.y.range((k, 0)..(k + 1, 0)) {
            debug_assert_eq!(i, k);
            let (g, b) = (y.re, y.im);
            match voltage_vars[j] {
                Some((vrj, vij)) => {
                    p.quad.extend([(vrk, vrj, g), (vrk, vij, -b), (vik, vrj, b), (vik, vij, g)]);
                    q.quad.extend([(vik, vrj, g), (vik, vij, -b), (vrk, vrj, -b), (vrk, vij, -g)]);
                }
                None => {
                    let vs = model.slack[j].expect("slack node");
                    // Current from the slack node is a constant.
                    let ir = g * vs.re - b * vs.im;
                    let ii = b * vs.re + g * vs.im;
                    p.lin.extend([(vrk, ir), (vik, ii)]);
                    q.lin.extend([(vik, ir), (vrk, -ii)]);
                }
            }
        }
        for inj in by_node.get(&k).into_iter().flatten() {
            for &(v, c) in &inj.terms {
                p.lin.push((v, -c));
                q.lin.push((v, -c * inj.tan_phi));
            }
        }
        let bus = &s.buses[node.bus];
        let band = QuadRow {
            name: format!("v_band[{label},{name}]"),
            lin: Vec::new(),
            quad: vec![(vrk, vrk, 1.0), (vik, vik, 1.0)],
            lo: bus.v_min * bus.v_min,
            hi: bus.v_max * bus.v_max,
        };
        for row in [p, q, band] {
            rows.push(nlp.rows.len());
            nlp.rows.push(row);
        }
    }
    MopfBlock { voltage_vars, rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus(z: Complex64, v0: f64) -> AdmittanceModel {
        let y = Complex64::new(1.0, 0.0) / z;
        let mut m = BTreeMap::new();
        m.insert((0, 0), y);
        m.insert((0, 1), -y);
        m.insert((1, 0), -y);
        m.insert((1, 1), y);
        let one = |v| DMatrix::from_element(1, 1, v);
        AdmittanceModel {
            nodes: vec![Node { bus: 0, phase: Phase::A }, Node { bus: 1, phase: Phase::A }],
            y: m,
            branches: vec![Branch {
                id: "l".into(),
                from: vec![0],
                to: vec![1],
                yff: one(y),
                yft: one(-y),
                ytf: one(-y),
                ytt: one(y),
            }],
            slack: vec![Some(Complex64::new(v0, 0.0)), None],
            s_base_kva: 100.0,
            z_base_ohm: 1.0,
        }
    }

    /// |V|^2 from the single-line quadratic for a load S = P + jQ.
    fn closed_form(z: Complex64, v0: f64, load: Complex64) -> f64 {
        let (r, x) = (z.re, z.im);
        let a = v0 * v0 - 2.0 * (r * load.re + x * load.im);
        let disc = a * a - 4.0 * z.norm_sqr() * load.norm_sqr();
        (a + disc.sqrt()) / 2.0
    }

    #[test]
    fn two_bus_matches_closed_form() {
        let z = Complex64::new(0.01, 0.01);
        for (p, q) in [(0.1, 0.0), (0.3, 0.1), (-0.2, 0.05)] {
            let model = two_bus(z, 1.0);
            let inj = [Complex64::default(), Complex64::new(-p, -q)];
            let st = newton_power_flow(&model, &inj).unwrap();
            let expected = closed_form(z, 1.0, Complex64::new(p, q));
            assert!((st.voltages[1].norm_sqr() - expected).abs() < 1e-10, "{p} {q}");
        }
    }

    #[test]
    fn zero_injection_is_no_load() {
        let model = two_bus(Complex64::new(0.02, 0.01), 1.03);
        let st = newton_power_flow(&model, &[Complex64::default(); 2]).unwrap();
        assert_eq!(st.iterations, 0);
        assert!((st.voltages[1] - Complex64::new(1.03, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn losses_balance_injections() {
        let model = two_bus(Complex64::new(0.05, 0.02), 1.0);
        let st = newton_power_flow(&model, &[Complex64::default(), Complex64::new(-0.4, -0.1)]).unwrap();
        let total: Complex64 = st.power.iter().sum();
        assert!((total - model.losses(&st.voltages)).norm() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let model = two_bus(Complex64::new(0.1, 0.1), 1.0);
        let err = newton_power_flow(&model, &[Complex64::default(), Complex64::new(-50.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }
}
