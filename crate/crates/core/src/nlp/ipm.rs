//! Primal-dual interior-point method with a log barrier, inertia-corrected
//! Newton steps and a filter line search.
//!
//! Inequality rows get a slack `s` with `g(x) - s = 0`; all variables
//! `w = (x, s)` are kept strictly inside relaxed bounds.

use std::time::Instant;

use super::ldl::{sym_mul, Ldl};
use super::{NlpProblem, NlpStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    /// Scaled KKT error for convergence.
    pub tol: f64,
    pub acceptable_tol: f64,
    pub acceptable_iterations: usize,
    pub max_iterations: usize,
    /// Largest original-row violation accepted at a reported optimum.
    pub feasibility_tol: f64,
    pub mu_init: f64,
    pub deadline: Option<Instant>,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tol: 1e-8,
            acceptable_tol: 1e-6,
            acceptable_iterations: 15,
            max_iterations: 400,
            feasibility_tol: 1e-6,
            mu_init: 0.1,
            deadline: None,
        }
    }
}

pub(super) struct IpmResult {
    pub status: NlpStatus,
    pub x: Vec<f64>,
    pub iterations: usize,
    pub message: String,
}

const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const S_MAX: f64 = 100.0;
const ETA: f64 = 1e-4;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const KAPPA_SIGMA: f64 = 1e10;
const DELTA_C: f64 = 1e-8;

/// Evaluation structure shared by all iterations.
struct Compiled {
    n: usize,
    m: usize,
    /// Rows with a slack, in order; `slack_of[r]` is the slack index.
    slack_of: Vec<Option<usize>>,
    ineq_rows: Vec<usize>,
    row_lo: Vec<f64>,
    /// Jacobian pattern over x.
    jac_row: Vec<usize>,
    jac_col: Vec<usize>,
    jac_const: Vec<f64>,
    /// (row, a, b, coef, jac entry of a, jac entry of b, hessian entry)
    quad: Vec<(usize, usize, usize, f64, usize, usize, usize)>,
    hess: Vec<(usize, usize)>,
    grad: Vec<f64>,
}

impl Compiled {
    fn new(p: &NlpProblem, row_scale: &[f64], obj_scale: f64) -> Self {
        let n = p.n();
        let m = p.rows.len();
        let mut slack_of = vec![None; m];
        let mut ineq_rows = Vec::new();
        let mut row_lo = vec![0.0; m];
        for (r, row) in p.rows.iter().enumerate() {
            if row.lo == row.hi {
                row_lo[r] = row.lo * row_scale[r];
            } else {
                slack_of[r] = Some(ineq_rows.len());
                ineq_rows.push(r);
            }
        }
        let mut jac_row = Vec::new();
        let mut jac_col = Vec::new();
        let mut jac_const = Vec::new();
        let mut quad = Vec::new();
        let mut hess_index = std::collections::HashMap::new();
        let mut hess = Vec::new();
        for (r, row) in p.rows.iter().enumerate() {
            let mut local: Vec<(usize, usize)> = Vec::new();
            let mut entry = |j: usize, jr: &mut Vec<usize>, jc: &mut Vec<usize>, jk: &mut Vec<f64>| -> usize {
                if let Some(&(_, e)) = local.iter().find(|t| t.0 == j) {
                    return e;
                }
                let e = jr.len();
                jr.push(r);
                jc.push(j);
                jk.push(0.0);
                local.push((j, e));
                e
            };
            for &(j, c) in &row.lin {
                let e = entry(j, &mut jac_row, &mut jac_col, &mut jac_const);
                jac_const[e] += c * row_scale[r];
            }
            for &(a, b, c) in &row.quad {
                let ea = entry(a, &mut jac_row, &mut jac_col, &mut jac_const);
                let eb = entry(b, &mut jac_row, &mut jac_col, &mut jac_const);
                let key = (a.max(b), a.min(b));
                let h = *hess_index.entry(key).or_insert_with(|| {
                    hess.push(key);
                    hess.len() - 1
                });
                quad.push((r, a, b, c * row_scale[r], ea, eb, h));
            }
        }
        Compiled {
            n,
            m,
            slack_of,
            ineq_rows,
            row_lo,
            jac_row,
            jac_col,
            jac_const,
            quad,
            hess,
            grad: p.obj.iter().map(|c| c * obj_scale).collect(),
        }
    }

    fn nw(&self) -> usize {
        self.n + self.ineq_rows.len()
    }

    /// Scaled row values g(x).
    fn rows(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (e, &r) in self.jac_row.iter().enumerate() {
            out[r] += self.jac_const[e] * x[self.jac_col[e]];
        }
        for &(r, a, b, c, ..) in &self.quad {
            out[r] += c * x[a] * x[b];
        }
    }

    /// Equality residual c(w) for every row.
    fn residual(&self, w: &[f64], g: &mut [f64]) {
        self.rows(&w[..self.n], g);
        for r in 0..self.m {
            g[r] -= match self.slack_of[r] {
                Some(i) => w[self.n + i],
                None => self.row_lo[r],
            };
        }
    }

    fn jacobian(&self, x: &[f64], vals: &mut [f64]) {
        vals.copy_from_slice(&self.jac_const);
        for &(_, a, b, c, ea, eb, _) in &self.quad {
            vals[ea] += c * x[b];
            vals[eb] += c * x[a];
        }
    }

    /// Hessian of y' g(x).
    fn hessian(&self, y: &[f64], vals: &mut [f64]) {
        vals.iter_mut().for_each(|v| *v = 0.0);
        for &(r, a, b, c, _, _, h) in &self.quad {
            vals[h] += if a == b { 2.0 * y[r] * c } else { y[r] * c };
        }
    }

    /// out = J_w' y over w.
    fn jt_mul(&self, jac: &[f64], y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (e, &r) in self.jac_row.iter().enumerate() {
            out[self.jac_col[e]] += jac[e] * y[r];
        }
        for (i, &r) in self.ineq_rows.iter().enumerate() {
            out[self.n + i] -= y[r];
        }
    }
}

/// KKT matrix over `(w, y)` with a fixed pattern.
struct Kkt {
    entries: Vec<(usize, usize)>,
    vals: Vec<f64>,
    ldl: Ldl,
    /// Offsets of the blocks inside `vals`.
    diag_w: usize,
    hess: usize,
    jac: usize,
    slack_jac: usize,
    diag_y: usize,
    dim: usize,
}

impl Kkt {
    fn new(c: &Compiled) -> Self {
        let nw = c.nw();
        let mut entries = Vec::new();
        let diag_w = 0;
        entries.extend((0..nw).map(|j| (j, j)));
        let hess = entries.len();
        entries.extend(c.hess.iter().copied());
        let jac = entries.len();
        entries.extend(c.jac_row.iter().zip(&c.jac_col).map(|(&r, &j)| (nw + r, j)));
        let slack_jac = entries.len();
        entries.extend(c.ineq_rows.iter().enumerate().map(|(i, &r)| (nw + r, c.n + i)));
        let diag_y = entries.len();
        entries.extend((0..c.m).map(|r| (nw + r, nw + r)));
        let dim = nw + c.m;
        let ldl = Ldl::new(dim, &entries);
        Kkt {
            vals: vec![0.0; entries.len()],
            entries,
            ldl,
            diag_w,
            hess,
            jac,
            slack_jac,
            diag_y,
            dim,
        }
    }

    fn fill(&mut self, c: &Compiled, sigma: &[f64], hess: &[f64], jac: &[f64], dw: f64, dc: f64) {
        let nw = c.nw();
        for j in 0..nw {
            self.vals[self.diag_w + j] = sigma[j] + dw;
        }
        self.vals[self.hess..self.hess + hess.len()].copy_from_slice(hess);
        self.vals[self.jac..self.jac + jac.len()].copy_from_slice(jac);
        for i in 0..c.ineq_rows.len() {
            self.vals[self.slack_jac + i] = -1.0;
        }
        for r in 0..c.m {
            self.vals[self.diag_y + r] = -dc;
        }
    }

    /// Solves with the current factor as a preconditioner for GMRES on the
    /// matrix without the constraint regularisation. Plain refinement
    /// stalls on degenerate rows, where that regularisation dominates.
    fn solve(&mut self, c: &Compiled, rhs: &[f64]) -> Vec<f64> {
        let mut exact = self.vals.clone();
        for r in 0..c.m {
            exact[self.diag_y + r] = 0.0;
        }
        let entries = &self.entries;
        let ldl = &mut self.ldl;
        gmres(
            self.dim,
            rhs,
            |v, out| sym_mul(entries, &exact, v, out),
            |v| ldl.solve(v),
        )
    }
}

/// Right-preconditioned restarted GMRES started from `M^-1 b`.
fn gmres(dim: usize, b: &[f64], mut apply: impl FnMut(&[f64], &mut [f64]), mut precond: impl FnMut(&mut [f64])) -> Vec<f64> {
    const RESTART: usize = 30;
    const MAX_CYCLES: usize = 4;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let bnorm = norm(b);
    let mut x = b.to_vec();
    precond(&mut x);
    if bnorm == 0.0 {
        return x;
    }
    let target = 1e-13 * bnorm;
    let mut r = vec![0.0; dim];
    let mut av = vec![0.0; dim];
    for _ in 0..MAX_CYCLES {
        apply(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm(&r);
        if beta <= target || !beta.is_finite() {
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; RESTART]; RESTART + 1];
        let mut cs = vec![0.0; RESTART];
        let mut sn = vec![0.0; RESTART];
        let mut g = vec![0.0; RESTART + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..RESTART {
            let mut zk = v[k].clone();
            precond(&mut zk);
            apply(&zk, &mut av);
            let mut w = av.clone();
            for i in 0..=k {
                let hik: f64 = w.iter().zip(&v[i]).map(|(a, b)| a * b).sum();
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(&v[i]) {
                    *wj -= hik * vj;
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if d == 0.0 {
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            z.push(zk);
            k_used = k + 1;
            if g[k + 1].abs() <= target || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let mut yv = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * yv[j];
            }
            yv[i] = s / h[i][i];
        }
        for (j, zj) in z.iter().enumerate().take(k_used) {
            for (xi, zi) in x.iter_mut().zip(zj) {
                *xi += yv[j] * zi;
            }
        }
        if k_used == 0 || g[k_used].abs() <= target {
            break;
        }
    }
    x
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0f64, |m, x| m.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
    has_lo: Vec<bool>,
    has_hi: Vec<bool>,
}

impl Bounds {
    /// Largest step in (0, 1] keeping `v + a d` a fraction `tau` away from the bounds.
    fn max_step(&self, v: &[f64], d: &[f64], tau: f64) -> f64 {
        let mut a = 1f64;
        for j in 0..v.len() {
            if d[j] < 0.0 && self.has_lo[j] {
                a = a.min(-tau * (v[j] - self.lo[j]) / d[j]);
            }
            if d[j] > 0.0 && self.has_hi[j] {
                a = a.min(tau * (self.hi[j] - v[j]) / d[j]);
            }
        }
        a
    }

    fn barrier(&self, w: &[f64], mu: f64) -> f64 {
        let mut b = 0.0;
        for j in 0..w.len() {
            if self.has_lo[j] {
                b -= (w[j] - self.lo[j]).ln();
            }
            if self.has_hi[j] {
                b -= (self.hi[j] - w[j]).ln();
            }
        }
        mu * b
    }
}

fn max_step_z(z: &[f64], dz: &[f64], tau: f64) -> f64 {
    let mut a = 1f64;
    for j in 0..z.len() {
        if dz[j] < 0.0 {
            a = a.min(-tau * z[j] / dz[j]);
        }
    }
    a
}

pub(super) fn solve(p: &NlpProblem, opts: &IpmOptions) -> IpmResult {
    let n = p.n();

    // Gradient-based scaling at the starting point.
    let x_start: Vec<f64> = (0..n).map(|j| start_value(p.x0[j], p.lo[j], p.hi[j])).collect();
    let mut row_scale = vec![1.0; p.rows.len()];
    for (r, row) in p.rows.iter().enumerate() {
        let mut gmax = row.lin.iter().fold(0f64, |m, t| m.max(t.1.abs()));
        let mut dq = vec![0f64; 0];
        for &(a, b, c) in &row.quad {
            dq.push((c * x_start[b]).abs());
            dq.push((c * x_start[a]).abs());
        }
        gmax = dq.into_iter().fold(gmax, f64::max);
        if gmax > S_MAX {
            row_scale[r] = S_MAX / gmax;
        }
    }
    let gmax_obj = inf_norm(&p.obj);
    let obj_scale = if gmax_obj > S_MAX { S_MAX / gmax_obj } else { 1.0 };

    let c = Compiled::new(p, &row_scale, obj_scale);
    let nw = c.nw();
    let m = c.m;

    // Bounds on w, relaxed slightly so that active bounds stay interior.
    let relax = |v: f64, s: f64, floor: f64| v + s * 1e-8 * v.abs().max(floor);
    let mut b = Bounds {
        lo: vec![f64::NEG_INFINITY; nw],
        hi: vec![f64::INFINITY; nw],
        has_lo: vec![false; nw],
        has_hi: vec![false; nw],
    };
    for j in 0..n {
        b.lo[j] = p.lo[j];
        b.hi[j] = p.hi[j];
    }
    for (i, &r) in c.ineq_rows.iter().enumerate() {
        b.lo[n + i] = p.rows[r].lo * row_scale[r];
        b.hi[n + i] = p.rows[r].hi * row_scale[r];
    }
    for j in 0..nw {
        b.has_lo[j] = b.lo[j].is_finite();
        b.has_hi[j] = b.hi[j].is_finite();
        // Row bounds are relaxed only relative to their size, so small
        // bounds such as complementarity thresholds stay meaningful.
        let floor = if j < n { 1.0 } else { 0.0 };
        if b.has_lo[j] {
            b.lo[j] = relax(b.lo[j], -1.0, floor);
        }
        if b.has_hi[j] {
            b.hi[j] = relax(b.hi[j], 1.0, floor);
        }
    }

    let mut w = vec![0.0; nw];
    w[..n].copy_from_slice(&x_start);
    let mut g = vec![0.0; m];
    c.rows(&w[..n], &mut g);
    for (i, &r) in c.ineq_rows.iter().enumerate() {
        w[n + i] = start_value(g[r], b.lo[n + i], b.hi[n + i]);
    }
    let mut y = vec![0.0; m];
    let mut zl: Vec<f64> = b.has_lo.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
    let mut zu: Vec<f64> = b.has_hi.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
    let nz = b.has_lo.iter().chain(&b.has_hi).filter(|&&h| h).count();

    let mut mu = opts.mu_init;
    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut filter_mu = mu;
    let mut theta_max = f64::NAN;
    let mut theta_min = f64::NAN;
    let mut kkt = Kkt::new(&c);
    let mut jac = vec![0.0; c.jac_row.len()];
    let mut hess = vec![0.0; c.hess.len()];
    let mut grad_w = vec![0.0; nw];
    grad_w[..n].copy_from_slice(&c.grad);
    let mut jty = vec![0.0; nw];
    let mut cres = vec![0.0; m];
    let mut delta_w_last = 0.0f64;
    let mut acceptable = 0usize;
    let mut best_theta = f64::INFINITY;
    let mut stall = 0usize;
    let mut ls_failures = 0usize;

    let finish = |status: NlpStatus, w: &[f64], it: usize, msg: String| IpmResult {
        status,
        x: (0..n).map(|j| w[j].clamp(p.lo[j], p.hi[j])).collect(),
        iterations: it,
        message: msg,
    };

    for it in 0..=opts.max_iterations {
        c.residual(&w, &mut cres);
        c.jacobian(&w[..n], &mut jac);
        c.jt_mul(&jac, &y, &mut jty);
        let theta = inf_norm(&cres);
        if !theta.is_finite() {
            return finish(NlpStatus::Error, &w, it, "non-finite residual".into());
        }
        let mut dual = vec![0.0; nw];
        for j in 0..nw {
            dual[j] = grad_w[j] + jty[j] - zl[j] + zu[j];
        }
        let z1 = one_norm(&zl) + one_norm(&zu);
        let sd = ((one_norm(&y) + z1) / ((m + nz).max(1) as f64)).max(S_MAX) / S_MAX;
        let sc = (z1 / (nz.max(1) as f64)).max(S_MAX) / S_MAX;
        let compl = |target: f64| -> f64 {
            let mut e = 0f64;
            for j in 0..nw {
                if b.has_lo[j] {
                    e = e.max(((w[j] - b.lo[j]) * zl[j] - target).abs());
                }
                if b.has_hi[j] {
                    e = e.max(((b.hi[j] - w[j]) * zu[j] - target).abs());
                }
            }
            e
        };
        let dual_err = inf_norm(&dual) / sd;
        let e0 = dual_err.max(theta).max(compl(0.0) / sc);
        log::trace!("ipm {it:3} mu {mu:.1e} theta {theta:.3e} dual {dual_err:.3e} E {e0:.3e}");
        if log::log_enabled!(log::Level::Trace) {
            let worst = (0..m).max_by(|&a, &b| cres[a].abs().total_cmp(&cres[b].abs()));
            let wd = (0..nw).max_by(|&a, &b| dual[a].abs().total_cmp(&dual[b].abs()));
            if let (Some(r), Some(j)) = (worst, wd) {
                log::trace!("    worst row {} ({:.3e}), worst dual {} ({:.3e})", p.rows[r].name, cres[r], if j < n { p.names[j].clone() } else { format!("slack {}", p.rows[c.ineq_rows[j - n]].name) }, dual[j]);
            }
        }
        if e0 <= opts.tol {
            return finish(NlpStatus::LocallyOptimal, &w, it, "optimal".into());
        }
        if e0 <= opts.acceptable_tol {
            acceptable += 1;
            if acceptable >= opts.acceptable_iterations {
                return finish(NlpStatus::LocallyOptimal, &w, it, "acceptable".into());
            }
        } else {
            acceptable = 0;
        }
        if it == opts.max_iterations {
            return finish(NlpStatus::IterationLimit, &w, it, format!("iteration limit, KKT error {e0:.3e}"));
        }
        if opts.deadline.is_some_and(|d| Instant::now() >= d) {
            return finish(NlpStatus::IterationLimit, &w, it, "time limit".into());
        }
        // Stagnation away from feasibility.
        if theta < best_theta * (1.0 - 1e-3) {
            best_theta = theta;
            stall = 0;
        } else if theta > 1e-6 {
            stall += 1;
            if stall >= 40 {
                return finish(NlpStatus::Infeasible, &w, it, format!("stalled at infeasibility {theta:.3e}"));
            }
        }

        // Barrier parameter update.
        // One decrease per iteration: a long jump in mu makes the next
        // Newton step leave the region where the bilinear rows are modelled
        // well.
        let e_mu = dual_err.max(theta).max(compl(mu) / sc);
        if e_mu <= KAPPA_EPS * mu && mu > opts.tol / 10.0 {
            mu = (opts.tol / 10.0).max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
        }

        // Newton system.
        c.hessian(&y, &mut hess);
        let mut sigma = vec![0.0; nw];
        let mut rhs = vec![0.0; nw + m];
        for j in 0..nw {
            let mut gb = grad_w[j] + jty[j];
            if b.has_lo[j] {
                let d = w[j] - b.lo[j];
                sigma[j] += zl[j] / d;
                gb -= mu / d;
            }
            if b.has_hi[j] {
                let d = b.hi[j] - w[j];
                sigma[j] += zu[j] / d;
                gb += mu / d;
            }
            rhs[j] = -gb;
        }
        for r in 0..m {
            rhs[nw + r] = -cres[r];
        }

        // Raise the Hessian shift until the inertia is right; if that fails
        // the constraint block is numerically singular, so raise its
        // regularisation and start over.
        let mut delta_w = 0.0;
        let mut factored = false;
        let mut delta_c = DELTA_C;
        'rounds: for _ in 0..4 {
            delta_w = 0.0;
            for attempt in 0..60 {
                kkt.fill(&c, &sigma, &hess, &jac, delta_w, delta_c);
                if let Some(inertia) = kkt.ldl.factor(&kkt.vals) {
                    if inertia.positive == nw && inertia.negative == m {
                        factored = true;
                        break 'rounds;
                    }
                }
                delta_w = if attempt == 0 {
                    if delta_w_last == 0.0 {
                        1e-4
                    } else {
                        (delta_w_last / 3.0).max(1e-20)
                    }
                } else if delta_w_last == 0.0 {
                    delta_w * 100.0
                } else {
                    delta_w * 8.0
                };
                if delta_w > 1e12 {
                    break;
                }
            }
            delta_c *= 100.0;
        }
        if !factored {
            // Typically multipliers diverging against an unreachable row.
            let status = if theta > 1e-6 { NlpStatus::Infeasible } else { NlpStatus::Error };
            return finish(status, &w, it, format!("KKT matrix could not be regularised at infeasibility {theta:.3e}"));
        }
        if delta_w > 0.0 {
            delta_w_last = delta_w;
        }
        let sol = kkt.solve(&c, &rhs);
        let dw = &sol[..nw];
        let dy = &sol[nw..];
        let mut dzl = vec![0.0; nw];
        let mut dzu = vec![0.0; nw];
        for j in 0..nw {
            if b.has_lo[j] {
                let d = w[j] - b.lo[j];
                dzl[j] = mu / d - zl[j] - zl[j] / d * dw[j];
            }
            if b.has_hi[j] {
                let d = b.hi[j] - w[j];
                dzu[j] = mu / d - zu[j] + zu[j] / d * dw[j];
            }
        }
        let tau = (1.0 - mu).max(0.99);
        let alpha_max = b.max_step(&w, dw, tau);
        let alpha_z = max_step_z(&zl, &dzl, tau).min(max_step_z(&zu, &dzu, tau));

        // Filter line search on (constraint violation, barrier objective).
        let grad_phi: Vec<f64> = (0..nw)
            .map(|j| {
                let mut v = grad_w[j];
                if b.has_lo[j] {
                    v -= mu / (w[j] - b.lo[j]);
                }
                if b.has_hi[j] {
                    v += mu / (b.hi[j] - w[j]);
                }
                v
            })
            .collect();
        let gd: f64 = grad_phi.iter().zip(dw).map(|(a, b)| a * b).sum();
        let c1 = one_norm(&cres);
        if theta_max.is_nan() {
            theta_max = 1e4 * c1.max(1.0);
            theta_min = 1e-4 * c1.max(1.0);
        }
        if mu != filter_mu {
            filter.clear();
            filter_mu = mu;
        }
        let phi_of = |w: &[f64]| -> f64 {
            let f: f64 = grad_w[..n].iter().zip(&w[..n]).map(|(a, b)| a * b).sum();
            f + b.barrier(w, mu)
        };
        let phi0 = phi_of(&w);
        log::trace!("   gd {gd:.3e} c1 {c1:.3e} amax {alpha_max:.3e} dw {delta_w:.1e} |dy| {:.3e} filter {}", inf_norm(dy), filter.len());
        // Returns (accepted, objective-driven step).
        let judge = |alpha: f64, th: f64, ph: f64| -> (bool, bool) {
            if !ph.is_finite() || th >= theta_max || filter.iter().any(|&(ft, fp)| th >= ft && ph >= fp) {
                return (false, false);
            }
            let switching = gd < 0.0 && alpha * (-gd).powf(S_PHI) > c1.powf(S_THETA);
            // Objective-driven steps must stay nearly feasible: without a
            // restoration phase a jump in violation cannot be undone.
            if c1 <= theta_min && switching && th <= theta_min {
                (ph <= phi0 + ETA * alpha * gd, true)
            } else {
                (th <= (1.0 - GAMMA_THETA) * c1 || ph <= phi0 - GAMMA_PHI * c1, false)
            }
        };
        let alpha_min = if gd < 0.0 {
            let mut a = GAMMA_THETA.min(GAMMA_PHI * c1 / -gd);
            if c1 <= theta_min {
                a = a.min(c1.powf(S_THETA) / (-gd).powf(S_PHI));
            }
            (0.05 * a).max(1e-16)
        } else {
            0.05 * GAMMA_THETA
        };

        let mut alpha = alpha_max;
        // A primal step at rounding level cannot be judged by the line
        // search; take it whole so the multipliers can still move.
        let full_rel = (0..nw).fold(0f64, |m, j| m.max((alpha_max * dw[j]).abs() / (1.0 + w[j].abs())));
        let tiny = full_rel < 1e-14;
        let mut trial = vec![0.0; nw];
        let mut ctrial = vec![0.0; m];
        let mut accepted = tiny;
        let mut f_step = false;
        let mut soc_tried = false;
        let mut step = dw.to_vec();
        while !tiny && alpha >= alpha_min {
            for j in 0..nw {
                trial[j] = w[j] + alpha * step[j];
            }
            c.residual(&trial, &mut ctrial);
            let th = one_norm(&ctrial);
            let (ok, f) = judge(alpha, th, phi_of(&trial));
            if ok {
                accepted = true;
                f_step = f;
                break;
            }
            if !soc_tried && alpha == alpha_max && th >= c1 {
                soc_tried = true;
                // Second-order correction using the constraint values at the trial point.
                let mut rhs_soc = rhs.clone();
                for r in 0..m {
                    rhs_soc[nw + r] = -(alpha * cres[r] + ctrial[r]);
                }
                let s = kkt.solve(&c, &rhs_soc);
                let d_soc = &s[..nw];
                let a_soc = b.max_step(&w, d_soc, tau);
                let mut wsoc = vec![0.0; nw];
                for j in 0..nw {
                    wsoc[j] = w[j] + a_soc * d_soc[j];
                }
                let mut csoc = vec![0.0; m];
                c.residual(&wsoc, &mut csoc);
                let (ok, f) = judge(alpha, one_norm(&csoc), phi_of(&wsoc));
                if ok {
                    step = d_soc.to_vec();
                    alpha = a_soc;
                    accepted = true;
                    f_step = f;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if accepted && !tiny && !f_step {
            filter.push(((1.0 - GAMMA_THETA) * c1, phi0 - GAMMA_PHI * c1));
        }
        if !accepted {
            ls_failures += 1;
            if theta > 1e-6 && ls_failures >= 3 {
                return finish(NlpStatus::Infeasible, &w, it, format!("line search failed at infeasibility {theta:.3e}"));
            }
            if ls_failures >= 10 {
                return finish(NlpStatus::Error, &w, it, "line search failed".into());
            }
            // Take a short step and hope the barrier update unblocks progress.
            alpha = alpha_max.min(1e-3);
            step = dw.to_vec();
        } else {
            ls_failures = 0;
        }
        for j in 0..nw {
            w[j] += alpha * step[j];
        }
        for r in 0..m {
            y[r] += alpha * dy[r];
        }
        for j in 0..nw {
            if b.has_lo[j] {
                zl[j] += alpha_z * dzl[j];
                let d = w[j] - b.lo[j];
                zl[j] = zl[j].clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
            }
            if b.has_hi[j] {
                zu[j] += alpha_z * dzu[j];
                let d = b.hi[j] - w[j];
                zu[j] = zu[j].clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
            }
        }
        // Tiny steps mean the current barrier problem is solved as far as
        // precision allows.
        let rel = (0..nw).fold(0f64, |m, j| m.max((alpha * step[j]).abs() / (1.0 + w[j].abs())));
        if rel < 10.0 * f64::EPSILON && mu > opts.tol / 10.0 {
            mu = (opts.tol / 10.0).max(KAPPA_MU * mu);
        }
    }
    finish(NlpStatus::IterationLimit, &w, opts.max_iterations, "iteration limit".into())
}

/// Projects a start value strictly inside `[lo, hi]`.
fn start_value(x: f64, lo: f64, hi: f64) -> f64 {
    let k = 1e-4;
    let pl = if lo.is_finite() {
        let r = if hi.is_finite() { k * (hi - lo) } else { f64::INFINITY };
        (k * lo.abs().max(1.0)).min(r)
    } else {
        0.0
    };
    let pu = if hi.is_finite() {
        let r = if lo.is_finite() { k * (hi - lo) } else { f64::INFINITY };
        (k * hi.abs().max(1.0)).min(r)
    } else {
        0.0
    };
    let mut v = if x.is_finite() { x } else { 0.0 };
    if lo.is_finite() && hi.is_finite() && lo + pl >= hi - pu {
        return 0.5 * (lo + hi);
    }
    if lo.is_finite() {
        v = v.max(lo + pl);
    }
    if hi.is_finite() {
        v = v.min(hi - pu);
    }
    v
}
