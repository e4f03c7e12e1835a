//! Sparse LDL^T without pivoting, for quasi-definite KKT systems.
//!
//! The pattern is fixed at construction and ordered with AMD; every
//! numeric factorisation refills the same structure.

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    // Permuted upper triangle in CSC.
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    /// Position in `ax` of every input entry.
    slot: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    // Work buffers.
    y_marker: Vec<bool>,
    y_vals: Vec<f64>,
    y_idx: Vec<usize>,
    elim: Vec<usize>,
    next_space: Vec<usize>,
    tmp: Vec<f64>,
}

impl Ldl {
    /// `entries` are (row, col) positions of a symmetric matrix, either
    /// triangle; duplicates are summed on refill. Diagonal entries are
    /// always present in the factor pattern.
    pub fn new(n: usize, entries: &[(usize, usize)]) -> Self {
        // Upper pattern in original numbering for the ordering.
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(j);
        }
        for &(i, j) in entries {
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            cols[c].push(r);
        }
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
        }
        let mut p0 = vec![0usize; n + 1];
        let mut i0 = Vec::new();
        for (j, c) in cols.iter().enumerate() {
            i0.extend_from_slice(c);
            p0[j + 1] = i0.len();
        }
        let perm: Vec<usize> = if n > 0 {
            match amd::order::<usize>(n, &p0, &i0, &amd::Control::default()) {
                Ok((p, _, _)) => p,
                Err(_) => (0..n).collect(),
            }
        } else {
            Vec::new()
        };
        let mut pinv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }

        // Permuted upper pattern.
        let mut pcols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (j, col) in cols.iter().enumerate() {
            for &i in col {
                let (a, b) = (pinv[i], pinv[j]);
                let (r, c) = if a <= b { (a, b) } else { (b, a) };
                pcols[c].push(r);
            }
        }
        for c in pcols.iter_mut() {
            c.sort_unstable();
            c.dedup();
        }
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::new();
        for (j, c) in pcols.iter().enumerate() {
            ai.extend_from_slice(c);
            ap[j + 1] = ai.len();
        }
        let find = |r: usize, c: usize| -> usize {
            let (r, c) = if r <= c { (r, c) } else { (c, r) };
            let lo = ap[c];
            lo + ai[lo..ap[c + 1]].binary_search(&r).expect("entry in pattern")
        };
        let slot: Vec<usize> = entries.iter().map(|&(i, j)| find(pinv[i], pinv[j])).collect();

        // Elimination tree and column counts.
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &r in &ai[ap[j]..ap[j + 1]] {
                let mut i = r;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let nnz_l = lp[n];
        let nnz = ai.len();
        Ldl {
            n,
            perm,
            ap,
            ai,
            ax: vec![0.0; nnz],
            slot,
            etree,
            lp,
            li: vec![0; nnz_l],
            lx: vec![0.0; nnz_l],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            y_marker: vec![false; n],
            y_vals: vec![0.0; n],
            y_idx: vec![0; n],
            elim: vec![0; n],
            next_space: vec![0; n],
            tmp: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Factorises the matrix whose entries (aligned with the constructor's
    /// `entries`) are `vals`. `None` when a pivot vanishes.
    pub fn factor(&mut self, vals: &[f64]) -> Option<Inertia> {
        self.ax.iter_mut().for_each(|v| *v = 0.0);
        for (&s, &v) in self.slot.iter().zip(vals) {
            self.ax[s] += v;
        }
        let n = self.n;
        let mut inertia = Inertia {
            positive: 0,
            negative: 0,
            zero: 0,
        };
        let scale = self.ax.iter().fold(0f64, |m, v| m.max(v.abs())).max(1.0);
        let tiny = scale * 1e-300f64.max(f64::EPSILON * 1e-10);
        for i in 0..n {
            self.next_space[i] = self.lp[i];
        }
        for k in 0..n {
            self.d[k] = 0.0;
            let mut nnz_y = 0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    self.d[k] = self.ax[p];
                    continue;
                }
                self.y_vals[b] = self.ax[p];
                if !self.y_marker[b] {
                    self.y_marker[b] = true;
                    self.elim[0] = b;
                    let mut n_e = 1;
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if self.y_marker[next] {
                            break;
                        }
                        self.y_marker[next] = true;
                        self.elim[n_e] = next;
                        n_e += 1;
                        next = self.etree[next];
                    }
                    while n_e > 0 {
                        n_e -= 1;
                        self.y_idx[nnz_y] = self.elim[n_e];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = self.y_idx[i];
                let end = self.next_space[c];
                let yc = self.y_vals[c];
                for j in self.lp[c]..end {
                    self.y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[end] = k;
                let l = yc * self.dinv[c];
                self.lx[end] = l;
                self.d[k] -= yc * l;
                self.next_space[c] += 1;
                self.y_vals[c] = 0.0;
                self.y_marker[c] = false;
            }
            let dk = self.d[k];
            if !dk.is_finite() || dk.abs() <= tiny {
                // Leave the work arrays clean for the next attempt.
                self.y_vals.iter_mut().for_each(|v| *v = 0.0);
                self.y_marker.iter_mut().for_each(|v| *v = false);
                return None;
            }
            if dk > 0.0 {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
            self.dinv[k] = 1.0 / dk;
        }
        Some(inertia)
    }

    /// Solves in place with the current factorisation.
    pub fn solve(&mut self, b: &mut [f64]) {
        let n = self.n;
        let x = &mut self.tmp;
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[j] * x[self.li[j]];
            }
            x[i] = xi;
        }
        for i in 0..n {
            b[self.perm[i]] = x[i];
        }
    }
}

/// y = A x for the symmetric matrix given by `entries`/`vals` (either
/// triangle, off-diagonals applied to both sides).
pub fn sym_mul(entries: &[(usize, usize)], vals: &[f64], x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for (&(i, j), &v) in entries.iter().zip(vals) {
        y[i] += v * x[j];
        if i != j {
            y[j] += v * x[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_quasidefinite_system() {
        // [[4, 1, 2], [1, 3, 0], [2, 0, -1]]
        let entries = [(0, 0), (1, 1), (2, 2), (0, 1), (2, 0)];
        let vals = [4.0, 3.0, -1.0, 1.0, 2.0];
        let mut ldl = Ldl::new(3, &entries);
        let inertia = ldl.factor(&vals).unwrap();
        assert_eq!((inertia.positive, inertia.negative), (2, 1));
        let x = [1.0, -2.0, 0.5];
        let mut b = [0.0; 3];
        sym_mul(&entries, &vals, &x, &mut b);
        ldl.solve(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_entries_are_summed() {
        let entries = [(0, 0), (0, 0), (1, 1)];
        let mut ldl = Ldl::new(2, &entries);
        ldl.factor(&[1.0, 1.0, 5.0]).unwrap();
        let mut b = [4.0, 10.0];
        ldl.solve(&mut b);
        assert_eq!(b, [2.0, 2.0]);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let entries = [(0, 0), (1, 1), (0, 1)];
        let mut ldl = Ldl::new(2, &entries);
        assert!(ldl.factor(&[1.0, 1.0, 1.0]).is_none());
        // The factor recovers after a failed attempt.
        assert!(ldl.factor(&[2.0, 1.0, 1.0]).is_some());
    }
}
