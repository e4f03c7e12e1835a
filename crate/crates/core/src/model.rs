//! Solver-neutral linear model with per-variable affine scaling.
//!
//! Builders write rows in physical units; each variable stores
//! `physical = offset + scale * x`, and the stored rows are in terms of `x`.

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    /// Design binary: one of J, W, U.
    Design,
    /// Operational binary: the buy/sell indicator.
    Operational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarInfo {
    pub name: String,
    pub kind: VarKind,
    /// Bounds on the scaled variable.
    pub lo: f64,
    pub hi: f64,
    pub scale: f64,
    pub offset: f64,
}

impl VarInfo {
    pub fn to_physical(&self, x: f64) -> f64 {
        self.offset + self.scale * x
    }

    pub fn to_scaled(&self, v: f64) -> f64 {
        (v - self.offset) / self.scale
    }
}

/// Tags rows the NLP conversion treats specially.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Plain,
    /// Rows involving operational binaries; dropped when those binaries are.
    BigM,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub name: String,
    pub kind: RowKind,
    pub terms: Vec<(VarId, f64)>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearModel {
    pub vars: Vec<VarInfo>,
    pub rows: Vec<LinearRow>,
    /// Objective coefficients on scaled variables.
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    /// Objective value in model units times this gives currency.
    pub objective_scale: f64,
}

impl LinearModel {
    pub fn new(objective_scale: f64) -> Self {
        LinearModel {
            objective_scale,
            ..Default::default()
        }
    }

    /// Adds a variable with physical bounds `[lo, hi]`.
    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lo: f64, hi: f64, scale: f64, offset: f64) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(VarInfo {
            name: name.into(),
            kind,
            lo: (lo - offset) / scale,
            hi: (hi - offset) / scale,
            scale,
            offset,
        });
        self.objective.push(0.0);
        id
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    /// Adds `lo <= sum(coef * physical) <= hi`, converted to scaled variables.
    pub fn add_row(&mut self, name: impl Into<String>, kind: RowKind, terms: &[(VarId, f64)], lo: f64, hi: f64) {
        let mut shift = 0.0;
        let mut scaled: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for &(v, c) in terms {
            if c == 0.0 {
                continue;
            }
            let info = &self.vars[v.0];
            shift += c * info.offset;
            match scaled.iter_mut().find(|(w, _)| *w == v) {
                Some(t) => t.1 += c * info.scale,
                None => scaled.push((v, c * info.scale)),
            }
        }
        self.rows.push(LinearRow {
            name: name.into(),
            kind,
            terms: scaled,
            lo: lo - shift,
            hi: hi - shift,
        });
    }

    /// Adds `coef * physical(v)` to the objective, in currency.
    pub fn add_cost(&mut self, v: VarId, coef: f64) {
        let info = &self.vars[v.0];
        let c = coef / self.objective_scale;
        self.objective[v.0] += c * info.scale;
        self.objective_offset += c * info.offset;
    }

    /// Tightens the physical upper bound of `v`.
    pub fn cap_upper(&mut self, v: VarId, hi: f64) {
        let info = &mut self.vars[v.0];
        info.hi = info.hi.min((hi - info.offset) / info.scale);
    }

    /// Objective in currency at scaled point `x`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let v: f64 = self.objective.iter().zip(x).map(|(c, x)| c * x).sum();
        (v + self.objective_offset) * self.objective_scale
    }

    pub fn physical(&self, v: VarId, x: &[f64]) -> f64 {
        self.vars[v.0].to_physical(x[v.0])
    }

    /// Largest bound or row violation at scaled point `x`, in scaled row units.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0f64;
        for (v, &xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lo - xi).max(xi - v.hi);
        }
        for r in &self.rows {
            let a: f64 = r.terms.iter().map(|(v, c)| c * x[v.0]).sum();
            worst = worst.max(r.lo - a).max(a - r.hi);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_stored_in_scaled_units() {
        let mut m = LinearModel::new(1000.0);
        let t = m.add_var("t", VarKind::Continuous, 45.0, 55.0, 1.0, 45.0);
        let p = m.add_var("p", VarKind::Continuous, 0.0, 50.0, 100.0, 0.0);
        assert_eq!(m.vars[t.0].lo, 0.0);
        assert_eq!(m.vars[p.0].hi, 0.5);
        // 2 T - p = 80 at T = 50, p = 20.
        m.add_row("r", RowKind::Plain, &[(t, 2.0), (p, -1.0)], 80.0, 80.0);
        let x = [5.0, 0.2];
        assert!(m.max_violation(&x) < 1e-12);
        m.add_cost(p, 10.0);
        m.add_cost(t, 1.0);
        assert!((m.objective_value(&x) - (200.0 + 50.0)).abs() < 1e-9);
    }
}
