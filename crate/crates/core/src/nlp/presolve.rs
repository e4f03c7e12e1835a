//! Removes fixed variables, empty rows and singleton rows before the
//! interior-point solve. Fixed variables cannot sit strictly inside their
//! bounds, so the barrier method needs them gone.

use super::{NlpProblem, QuadRow};

pub(super) struct Reduced {
    pub problem: NlpProblem,
    /// Original index of each reduced variable.
    keep: Vec<usize>,
    /// Value of each original variable removed by presolve.
    fixed: Vec<Option<f64>>,
}

impl Reduced {
    pub fn restore(&self, xr: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
        for (r, &j) in self.keep.iter().enumerate() {
            x[j] = xr.get(r).copied().unwrap_or(self.problem.x0[r]);
        }
        x
    }
}

fn tol(v: f64) -> f64 {
    1e-9 * v.abs().max(1.0)
}

struct Work {
    lin: Vec<(usize, f64)>,
    quad: Vec<(usize, usize, f64)>,
    lo: f64,
    hi: f64,
    alive: bool,
}

pub(super) fn presolve(p: &NlpProblem) -> Result<Reduced, String> {
    let n = p.n();
    let mut lo = p.lo.clone();
    let mut hi = p.hi.clone();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut rows: Vec<Work> = p
        .rows
        .iter()
        .map(|r| Work {
            lin: r.lin.clone(),
            quad: r.quad.clone(),
            lo: r.lo,
            hi: r.hi,
            alive: r.lo > f64::NEG_INFINITY || r.hi < f64::INFINITY,
        })
        .collect();

    loop {
        let mut changed = false;
        for j in 0..n {
            if fixed[j].is_some() {
                continue;
            }
            if lo[j] > hi[j] + tol(hi[j]) {
                return Err(format!("bounds of {} cross: [{}, {}]", p.names.get(j).map_or("?", |s| s), lo[j], hi[j]));
            }
            if lo[j].is_finite() && hi[j].is_finite() && hi[j] - lo[j] <= tol(lo[j]) {
                fixed[j] = Some(0.5 * (lo[j] + hi[j]));
                changed = true;
            }
        }
        for (ri, r) in rows.iter_mut().enumerate() {
            if !r.alive {
                continue;
            }
            let mut constant = 0.0;
            let mut lin: Vec<(usize, f64)> = Vec::with_capacity(r.lin.len());
            let push = |lin: &mut Vec<(usize, f64)>, j: usize, c: f64| match lin.iter_mut().find(|t| t.0 == j) {
                Some(t) => t.1 += c,
                None => lin.push((j, c)),
            };
            for &(j, c) in &r.lin {
                match fixed[j] {
                    Some(v) => constant += c * v,
                    None => push(&mut lin, j, c),
                }
            }
            let mut quad = Vec::with_capacity(r.quad.len());
            for &(a, b, c) in &r.quad {
                match (fixed[a], fixed[b]) {
                    (Some(va), Some(vb)) => constant += c * va * vb,
                    (Some(va), None) => push(&mut lin, b, c * va),
                    (None, Some(vb)) => push(&mut lin, a, c * vb),
                    (None, None) => quad.push((a, b, c)),
                }
            }
            lin.retain(|t| t.1 != 0.0);
            quad.retain(|t| t.2 != 0.0);
            if constant != 0.0 || lin.len() != r.lin.len() || quad.len() != r.quad.len() {
                changed = true;
            }
            r.lin = lin;
            r.quad = quad;
            r.lo -= constant;
            r.hi -= constant;
            if r.lin.is_empty() && r.quad.is_empty() {
                if r.lo > tol(r.lo) || r.hi < -tol(r.hi) {
                    return Err(format!("row {} cannot be satisfied", p.rows[ri].name));
                }
                r.alive = false;
                changed = true;
            } else if r.quad.is_empty() && r.lin.len() > 1 {
                // Forcing rows: when the activity bound meets the row bound,
                // every variable sits at the bound that attains it.
                let (mut amin, mut amax) = (0.0, 0.0);
                for &(j, a) in &r.lin {
                    let (l, h) = if a > 0.0 { (a * lo[j], a * hi[j]) } else { (a * hi[j], a * lo[j]) };
                    amin += l;
                    amax += h;
                }
                let at_min = amin.is_finite() && amin >= r.hi - tol(r.hi);
                let at_max = amax.is_finite() && amax <= r.lo + tol(r.lo);
                if (at_min && amin > r.hi + tol(r.hi)) || (at_max && amax < r.lo - tol(r.lo)) {
                    return Err(format!("row {} cannot be satisfied within the bounds", p.rows[ri].name));
                }
                if at_min || at_max {
                    for &(j, a) in &r.lin {
                        let v = if at_min == (a > 0.0) { lo[j] } else { hi[j] };
                        lo[j] = v;
                        hi[j] = v;
                    }
                    r.alive = false;
                    changed = true;
                }
            } else if r.quad.is_empty() && r.lin.len() == 1 {
                let (j, a) = r.lin[0];
                let (l, h) = if a > 0.0 { (r.lo / a, r.hi / a) } else { (r.hi / a, r.lo / a) };
                if l > lo[j] {
                    lo[j] = l;
                }
                if h < hi[j] {
                    hi[j] = h;
                }
                if lo[j] > hi[j] {
                    if lo[j] > hi[j] + tol(hi[j]) {
                        return Err(format!("row {} conflicts with the bounds of {}", p.rows[ri].name, p.names.get(j).map_or("?", |s| s)));
                    }
                    let m = 0.5 * (lo[j] + hi[j]);
                    lo[j] = m;
                    hi[j] = m;
                }
                r.alive = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // Columns that appear in no remaining row sit at their best bound.
    let mut used = vec![false; n];
    for r in rows.iter().filter(|r| r.alive) {
        for &(j, _) in &r.lin {
            used[j] = true;
        }
        for &(a, b, _) in &r.quad {
            used[a] = true;
            used[b] = true;
        }
    }
    for j in 0..n {
        if fixed[j].is_some() || used[j] {
            continue;
        }
        let c = p.obj[j];
        let v = if c > 0.0 {
            lo[j]
        } else if c < 0.0 {
            hi[j]
        } else {
            p.x0[j].clamp(lo[j], hi[j]).clamp(f64::MIN, f64::MAX)
        };
        if !v.is_finite() {
            return Err(format!("objective unbounded along {}", p.names.get(j).map_or("?", |s| s)));
        }
        fixed[j] = Some(v);
    }

    let keep: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
    let mut map = vec![usize::MAX; n];
    for (r, &j) in keep.iter().enumerate() {
        map[j] = r;
    }
    let mut out = NlpProblem {
        obj_offset: p.obj_offset + (0..n).filter_map(|j| fixed[j].map(|v| p.obj[j] * v)).sum::<f64>(),
        ..NlpProblem::default()
    };
    for &j in &keep {
        out.names.push(p.names.get(j).cloned().unwrap_or_default());
        out.lo.push(lo[j]);
        out.hi.push(hi[j]);
        out.x0.push(p.x0[j]);
        out.obj.push(p.obj[j]);
    }
    for (ri, r) in rows.into_iter().enumerate() {
        if !r.alive {
            continue;
        }
        out.rows.push(QuadRow {
            name: p.rows[ri].name.clone(),
            lin: r.lin.iter().map(|&(j, c)| (map[j], c)).collect(),
            quad: r.quad.iter().map(|&(a, b, c)| (map[a], map[b], c)).collect(),
            lo: r.lo,
            hi: r.hi,
        });
    }
    Ok(Reduced {
        problem: out,
        keep,
        fixed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cascade_of_fixings() {
        // w fixed at 0; x <= 5 w makes x fixed; y = x + 1 becomes a singleton.
        let mut p = NlpProblem::default();
        let w = p.add_var("w", 0.0, 0.0, 0.0);
        let x = p.add_var("x", 0.0, 10.0, 1.0);
        let y = p.add_var("y", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let z = p.add_var("z", 0.0, 1.0, 0.5);
        p.rows.push(QuadRow {
            name: "cap".into(),
            lin: vec![(x, 1.0), (w, -5.0)],
            quad: vec![],
            lo: f64::NEG_INFINITY,
            hi: 0.0,
        });
        p.rows.push(QuadRow {
            name: "link".into(),
            lin: vec![(y, 1.0), (x, -1.0)],
            quad: vec![],
            lo: 1.0,
            hi: 1.0,
        });
        p.rows.push(QuadRow {
            name: "nl".into(),
            lin: vec![],
            quad: vec![(z, z, 1.0), (z, y, 1.0)],
            lo: 0.0,
            hi: 0.5,
        });
        let r = presolve(&p).unwrap();
        assert_eq!(r.problem.n(), 1);
        assert_eq!(r.problem.rows.len(), 1);
        let x = r.restore(&[0.25]);
        assert_eq!(x, vec![0.0, 0.0, 1.0, 0.25]);
    }

    #[test]
    fn forcing_row_fixes_its_variables() {
        // a + b <= 0 with a, b >= 0 leaves no interior.
        let mut p = NlpProblem::default();
        let a = p.add_var("a", 0.0, 5.0, 1.0);
        let b = p.add_var("b", 0.0, 5.0, 1.0);
        let c = p.add_var("c", 0.0, 5.0, 1.0);
        p.rows.push(QuadRow {
            name: "force".into(),
            lin: vec![(a, 1.0), (b, 2.0)],
            quad: vec![],
            lo: f64::NEG_INFINITY,
            hi: 0.0,
        });
        p.rows.push(QuadRow {
            name: "keep".into(),
            lin: vec![],
            quad: vec![(a, c, 1.0), (c, c, 1.0)],
            lo: 1.0,
            hi: 1.0,
        });
        let r = presolve(&p).unwrap();
        assert_eq!(r.problem.n(), 1);
        assert_eq!(r.restore(&[1.0]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn conflicting_singletons_are_infeasible() {
        let mut p = NlpProblem::default();
        let x = p.add_var("x", 0.0, 1.0, 0.0);
        p.rows.push(QuadRow {
            name: "big".into(),
            lin: vec![(x, 2.0)],
            quad: vec![],
            lo: 3.0,
            hi: f64::INFINITY,
        });
        assert!(presolve(&p).is_err());
    }
}
