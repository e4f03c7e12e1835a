//! Continuous nonlinear programs with linear objective and quadratic rows,
//! and the primal-dual interior-point solver used for the design NLP.

mod design;
mod ipm;
pub mod ldl;
mod presolve;

use serde::{Deserialize, Serialize};

pub use design::{build_nlp, NlpHandle, NlpParameters, COMPLEMENTARITY_MARGIN};
pub use ipm::IpmOptions;

/// `lo <= sum(lin) + sum(c * x_a * x_b) <= hi`
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRow {
    pub name: String,
    pub lin: Vec<(usize, f64)>,
    pub quad: Vec<(usize, usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

impl QuadRow {
    pub fn value(&self, x: &[f64]) -> f64 {
        let l: f64 = self.lin.iter().map(|&(j, c)| c * x[j]).sum();
        let q: f64 = self.quad.iter().map(|&(a, b, c)| c * x[a] * x[b]).sum();
        l + q
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.value(x);
        (self.lo - v).max(v - self.hi).max(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NlpProblem {
    pub names: Vec<String>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Starting point; projected into the bounds by the solver.
    pub x0: Vec<f64>,
    pub obj: Vec<f64>,
    pub obj_offset: f64,
    pub rows: Vec<QuadRow>,
}

impl NlpProblem {
    pub fn n(&self) -> usize {
        self.lo.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lo: f64, hi: f64, x0: f64) -> usize {
        self.names.push(name.into());
        self.lo.push(lo);
        self.hi.push(hi);
        self.x0.push(x0);
        self.obj.push(0.0);
        self.lo.len() - 1
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.obj_offset + self.obj.iter().zip(x).map(|(c, x)| c * x).sum::<f64>()
    }

    /// Largest bound or row violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let b = (0..self.n()).fold(0f64, |m, j| m.max(self.lo[j] - x[j]).max(x[j] - self.hi[j]));
        self.rows.iter().fold(b, |m, r| m.max(r.violation(x)))
    }

    /// Name of the row with the largest violation, if any is violated.
    pub fn worst_row(&self, x: &[f64]) -> Option<(&str, f64)> {
        self.rows
            .iter()
            .map(|r| (r.name.as_str(), r.violation(x)))
            .filter(|r| r.1 > 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NlpStatus {
    LocallyOptimal,
    Infeasible,
    IterationLimit,
    Error,
}

impl std::fmt::Display for NlpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NlpStatus::LocallyOptimal => "locally-optimal",
            NlpStatus::Infeasible => "infeasible",
            NlpStatus::IterationLimit => "iteration-limit",
            NlpStatus::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: NlpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub max_violation: f64,
    pub iterations: usize,
    pub message: String,
}

/// Presolves and solves `p` from `p.x0`.
pub fn solve_problem(p: &NlpProblem, opts: &IpmOptions) -> SolveOutcome {
    let reduced = match presolve::presolve(p) {
        Ok(r) => r,
        Err(msg) => {
            let x: Vec<f64> = (0..p.n()).map(|j| p.x0[j].clamp(p.lo[j], p.hi[j].max(p.lo[j]))).collect();
            return SolveOutcome {
                status: NlpStatus::Infeasible,
                objective: p.objective(&x),
                max_violation: p.max_violation(&x),
                x,
                iterations: 0,
                message: msg,
            };
        }
    };
    let inner = if reduced.problem.n() == 0 && reduced.problem.rows.is_empty() {
        ipm::IpmResult {
            status: NlpStatus::LocallyOptimal,
            x: Vec::new(),
            iterations: 0,
            message: "solved in presolve".into(),
        }
    } else {
        ipm::solve(&reduced.problem, opts)
    };
    let x = reduced.restore(&inner.x);
    let max_violation = p.max_violation(&x);
    let mut status = inner.status;
    let mut message = inner.message;
    if status == NlpStatus::LocallyOptimal && max_violation > opts.feasibility_tol {
        status = NlpStatus::Error;
        message = format!("converged with violation {max_violation:.3e}");
    }
    SolveOutcome {
        status,
        objective: p.objective(&x),
        x,
        max_violation,
        iterations: inner.iterations,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> IpmOptions {
        IpmOptions::default()
    }

    #[test]
    fn linear_program() {
        // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0  -> (1.6, 1.2)
        let mut p = NlpProblem::default();
        let x = p.add_var("x", 0.0, f64::INFINITY, 0.0);
        let y = p.add_var("y", 0.0, f64::INFINITY, 0.0);
        p.obj = vec![-1.0, -1.0];
        p.rows.push(QuadRow {
            name: "a".into(),
            lin: vec![(x, 1.0), (y, 2.0)],
            quad: vec![],
            lo: f64::NEG_INFINITY,
            hi: 4.0,
        });
        p.rows.push(QuadRow {
            name: "b".into(),
            lin: vec![(x, 3.0), (y, 1.0)],
            quad: vec![],
            lo: f64::NEG_INFINITY,
            hi: 6.0,
        });
        let out = solve_problem(&p, &opts());
        assert_eq!(out.status, NlpStatus::LocallyOptimal, "{}", out.message);
        assert!((out.x[0] - 1.6).abs() < 1e-6 && (out.x[1] - 1.2).abs() < 1e-6);
        assert!((out.objective + 2.8).abs() < 1e-7);
    }

    #[test]
    fn nonconvex_circle() {
        // min x  s.t. x^2 + y^2 = 1 -> x = -1
        let mut p = NlpProblem::default();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 0.5);
        let y = p.add_var("y", f64::NEG_INFINITY, f64::INFINITY, 0.5);
        p.obj[x] = 1.0;
        p.rows.push(QuadRow {
            name: "circle".into(),
            lin: vec![],
            quad: vec![(x, x, 1.0), (y, y, 1.0)],
            lo: 1.0,
            hi: 1.0,
        });
        let out = solve_problem(&p, &opts());
        assert_eq!(out.status, NlpStatus::LocallyOptimal, "{}", out.message);
        assert!((out.objective + 1.0).abs() < 1e-7, "{}", out.objective);
    }

    #[test]
    fn product_complementarity() {
        // min -(a + b) with a, b in [0, 1], a * b <= eps, a + b <= 1.5
        let eps = 1e-6;
        let mut p = NlpProblem::default();
        // A symmetric start would stay on the saddle a = b.
        let a = p.add_var("a", 0.0, 1.0, 0.6);
        let b = p.add_var("b", 0.0, 1.0, 0.4);
        p.obj = vec![-1.0, -1.0];
        p.rows.push(QuadRow {
            name: "comp".into(),
            lin: vec![],
            quad: vec![(a, b, 1.0)],
            lo: f64::NEG_INFINITY,
            hi: eps,
        });
        let out = solve_problem(&p, &opts());
        assert_eq!(out.status, NlpStatus::LocallyOptimal, "{}", out.message);
        assert!(out.x[a] * out.x[b] <= eps * (1.0 + 1e-7), "{:?}", out.x);
        assert!(out.objective < -0.99);
    }

    #[test]
    fn infeasible_is_detected() {
        let mut p = NlpProblem::default();
        let x = p.add_var("x", -1.0, 1.0, 0.5);
        let y = p.add_var("y", -1.0, 1.0, 0.5);
        p.rows.push(QuadRow {
            name: "far".into(),
            lin: vec![],
            quad: vec![(x, x, 1.0), (y, y, 1.0)],
            lo: 4.0,
            hi: f64::INFINITY,
        });
        let out = solve_problem(&p, &opts());
        assert_eq!(out.status, NlpStatus::Infeasible, "{}", out.message);
    }

    #[test]
    fn iteration_limit_reports_violation() {
        let mut p = NlpProblem::default();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 3.0);
        let y = p.add_var("y", f64::NEG_INFINITY, f64::INFINITY, 3.0);
        p.obj[x] = 1.0;
        p.rows.push(QuadRow {
            name: "circle".into(),
            lin: vec![],
            quad: vec![(x, x, 1.0), (y, y, 1.0)],
            lo: 1.0,
            hi: 1.0,
        });
        let out = solve_problem(
            &p,
            &IpmOptions {
                max_iterations: 1,
                ..opts()
            },
        );
        assert_eq!(out.status, NlpStatus::IterationLimit);
        assert!(out.max_violation > 0.0);
    }

    #[test]
    fn presolve_alone_can_solve() {
        let mut p = NlpProblem::default();
        let x = p.add_var("x", 2.0, 2.0, 0.0);
        let y = p.add_var("y", 0.0, 10.0, 0.0);
        p.rows.push(QuadRow {
            name: "link".into(),
            lin: vec![(y, 1.0)],
            quad: vec![(x, x, 1.0)],
            lo: 5.0,
            hi: 5.0,
        });
        let out = solve_problem(&p, &opts());
        assert_eq!(out.status, NlpStatus::LocallyOptimal);
        assert_eq!(out.x, vec![2.0, 1.0]);
    }
}
