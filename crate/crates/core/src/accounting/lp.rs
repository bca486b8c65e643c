//! Dense two-phase simplex over equality constraints and nonnegative variables.
//!
//! Bland's rule throughout, so degenerate problems terminate. With an exact
//! scalar the pivot tolerance is zero and the answer is exact.

use std::fmt;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<S> {
    pub label: String,
    /// Dense coefficients, one per variable.
    pub coeffs: Vec<S>,
    pub rhs: S,
}

/// minimize c.x subject to A x = b, x >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<S> {
    pub objective: Vec<S>,
    pub rows: Vec<Constraint<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<S> {
    pub x: Vec<S>,
    pub objective: S,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome<S> {
    Optimal(LpSolution<S>),
    /// Labels of the rows that together cannot hold.
    Infeasible { certificate: Vec<String> },
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Minimize => "min",
            Sense::Maximize => "max",
        })
    }
}

fn pivot_eps<S: Scalar>() -> S {
    S::tolerance() * S::from_u64_exact(100)
}

struct Tableau<S> {
    /// m rows of width + 1 entries; the last is the right-hand side.
    t: Vec<Vec<S>>,
    /// Reduced costs, last entry is minus the objective value.
    d: Vec<S>,
    basis: Vec<usize>,
    width: usize,
}

impl<S: Scalar> Tableau<S> {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c].clone();
        for v in self.t[r].iter_mut() {
            *v = v.clone() / p.clone();
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v = v.clone() - f.clone() * pv.clone();
                }
            }
        }
        if !self.d[c].is_zero() {
            let f = self.d[c].clone();
            for (v, pv) in self.d.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v = v.clone() - f.clone() * pv.clone();
                }
            }
        }
        self.basis[r] = c;
    }

    /// Run Bland's rule over columns `0..cols`. Returns false when unbounded.
    fn optimize(&mut self, cols: usize) -> bool {
        let eps = pivot_eps::<S>();
        loop {
            let Some(c) = (0..cols).find(|&j| self.d[j] < -eps.clone()) else {
                return true;
            };
            let mut best: Option<(usize, S)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[c] > eps {
                    let ratio = row[self.width].clone() / row[c].clone();
                    let better = match &best {
                        None => true,
                        Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }
}

impl<S: Scalar> LinearProgram<S> {
    pub fn new(objective: Vec<S>) -> Self {
        Self { objective, rows: Vec::new() }
    }

    pub fn variables(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, label: impl Into<String>, coeffs: Vec<S>, rhs: S) {
        assert_eq!(coeffs.len(), self.objective.len(), "row width");
        self.rows.push(Constraint { label: label.into(), coeffs, rhs });
    }

    /// Largest |A x - b| over all rows, or the most negative component of x.
    pub fn max_violation(&self, x: &[S]) -> S {
        let mut worst = S::zero();
        for v in x {
            if *v < S::zero() {
                worst = S::max_of(worst, v.abs());
            }
        }
        for row in &self.rows {
            let lhs = row.coeffs.iter().zip(x).fold(S::zero(), |a, (c, v)| a + c.clone() * v.clone());
            worst = S::max_of(worst, (lhs - row.rhs.clone()).abs());
        }
        worst
    }

    pub fn solve(&self, sense: Sense) -> LpOutcome<S> {
        let n = self.variables();
        let m = self.rows.len();
        let eps = pivot_eps::<S>();
        let width = n + m;

        // Phase 1: one artificial per row, rows flipped so rhs >= 0.
        let mut t = Vec::with_capacity(m);
        for (i, row) in self.rows.iter().enumerate() {
            let neg = row.rhs < S::zero();
            let mut r: Vec<S> = Vec::with_capacity(width + 1);
            r.extend(row.coeffs.iter().map(|c| if neg { -c.clone() } else { c.clone() }));
            r.extend((0..m).map(|k| if k == i { S::one() } else { S::zero() }));
            r.push(if neg { -row.rhs.clone() } else { row.rhs.clone() });
            t.push(r);
        }
        let mut d = vec![S::zero(); width + 1];
        for r in &t {
            for j in (0..n).chain(std::iter::once(width)) {
                d[j] = d[j].clone() - r[j].clone();
            }
        }
        let mut tab = Tableau { t, d, basis: (n..n + m).collect(), width };
        tab.optimize(width);

        let infeasibility = -tab.d[width].clone();
        if infeasibility > eps {
            // Phase-1 duals: reduced cost of artificial i is 1 - y_i.
            let certificate = (0..m)
                .filter(|&i| !(S::one() - tab.d[n + i].clone()).is_negligible())
                .map(|i| self.rows[i].label.clone())
                .collect();
            return LpOutcome::Infeasible { certificate };
        }

        // Drive artificials out of the basis; rows that cannot be pivoted are redundant.
        let mut r = 0;
        while r < tab.t.len() {
            if tab.basis[r] >= n {
                match (0..n).find(|&j| tab.t[r][j].abs() > eps) {
                    Some(j) => tab.pivot(r, j),
                    None => {
                        tab.t.remove(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        for row in tab.t.iter_mut() {
            let rhs = row[width].clone();
            row.truncate(n);
            row.push(rhs);
        }
        tab.width = n;

        // Phase 2.
        let c: Vec<S> = match sense {
            Sense::Minimize => self.objective.clone(),
            Sense::Maximize => self.objective.iter().map(|v| -v.clone()).collect(),
        };
        let mut d: Vec<S> = c.clone();
        d.push(S::zero());
        for (row, &b) in tab.t.iter().zip(&tab.basis) {
            let cb = c[b].clone();
            if cb.is_zero() {
                continue;
            }
            for (v, tv) in d.iter_mut().zip(row) {
                *v = v.clone() - cb.clone() * tv.clone();
            }
        }
        tab.d = d;
        if !tab.optimize(n) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![S::zero(); n];
        for (row, &b) in tab.t.iter().zip(&tab.basis) {
            x[b] = row[n].clone();
        }
        let objective = self.objective.iter().zip(&x).fold(S::zero(), |a, (c, v)| a + c.clone() * v.clone());
        LpOutcome::Optimal(LpSolution { x, objective })
    }
}
