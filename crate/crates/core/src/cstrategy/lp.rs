//! Small dense linear programs solved with a two-phase tableau simplex.
//!
//! Entering and leaving variables follow Bland's rule, so the method cannot
//! cycle on degenerate problems. Problems here have a handful of variables;
//! nothing is sparse and nothing is reused between solves.

use thiserror::Error;

/// Pivot tolerance.
pub const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("linear program is unbounded below")]
    Unbounded,
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, LpError>;

/// minimize c·x  subject to  A_ub x ≤ b_ub,  A_eq x = b_eq,  x_j ≥ l_j
/// (or x_j free when its lower bound is `None`).
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub lower: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

impl LpProblem {
    /// `n` variables, all with lower bound 0, zero objective, no rows.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            lower: vec![Some(0.0); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn minimize(mut self, c: Vec<f64>) -> Self {
        self.objective = c;
        self
    }

    pub fn le(mut self, row: Vec<f64>, b: f64) -> Self {
        self.a_ub.push(row);
        self.b_ub.push(b);
        self
    }

    pub fn ge(self, row: Vec<f64>, b: f64) -> Self {
        let neg = row.into_iter().map(|v| -v).collect();
        self.le(neg, -b)
    }

    pub fn eq(mut self, row: Vec<f64>, b: f64) -> Self {
        self.a_eq.push(row);
        self.b_eq.push(b);
        self
    }

    pub fn free(mut self, j: usize) -> Self {
        self.lower[j] = None;
        self
    }

    pub fn lower_bound(mut self, j: usize, l: f64) -> Self {
        self.lower[j] = Some(l);
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if n == 0 {
            return Err(LpError::Malformed("no variables".into()));
        }
        if self.lower.len() != n {
            return Err(LpError::Malformed("bounds length mismatch".into()));
        }
        if self.a_ub.len() != self.b_ub.len() || self.a_eq.len() != self.b_eq.len() {
            return Err(LpError::Malformed("row/rhs count mismatch".into()));
        }
        let rows = self.a_ub.iter().chain(&self.a_eq);
        for r in rows {
            if r.len() != n {
                return Err(LpError::Malformed("row length mismatch".into()));
            }
        }
        let finite = self
            .objective
            .iter()
            .chain(self.a_ub.iter().flatten())
            .chain(self.a_eq.iter().flatten())
            .chain(&self.b_ub)
            .chain(&self.b_eq)
            .chain(self.lower.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(LpError::Malformed("non-finite coefficient".into()));
        }
        Ok(())
    }
}

struct Tableau {
    rows: usize,
    cols: usize,
    // rows × (cols + 1), last column is the right-hand side
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.t[pr * w + pc];
        for k in 0..w {
            self.t[pr * w + k] /= p;
        }
        for i in 0..self.rows {
            if i == pr {
                continue;
            }
            let f = self.t[i * w + pc];
            if f == 0.0 {
                continue;
            }
            for k in 0..w {
                self.t[i * w + k] -= f * self.t[pr * w + k];
            }
        }
        self.basis[pr] = pc;
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.cols + 1;
        self.t.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.rows -= 1;
    }

    /// Minimizes cost·x over the columns in `allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<()> {
        loop {
            // reduced costs, entering column by Bland's rule
            let mut entering = None;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j];
                for i in 0..self.rows {
                    rc -= cost[self.basis[i]] * self.at(i, j);
                }
                if rc < -PIVOT_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(pc) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-15
                                || (ratio <= best + 1e-15 && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(pr, pc);
        }
    }
}

/// Solves the LP to optimality.
pub fn simplex_min(lp: &LpProblem) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();

    // column layout: shifted/split structurals, slacks, artificials
    let mut map: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
    let mut ncols = 0;
    for l in &lp.lower {
        if l.is_some() {
            map.push((ncols, None));
            ncols += 1;
        } else {
            map.push((ncols, Some(ncols + 1)));
            ncols += 2;
        }
    }
    let n_struct = ncols;
    let m_ub = lp.a_ub.len();
    let m = m_ub + lp.a_eq.len();
    let slack0 = n_struct;
    let art0 = n_struct + m_ub;
    let cols = art0 + m;
    let w = cols + 1;

    let shift: Vec<f64> = lp.lower.iter().map(|l| l.unwrap_or(0.0)).collect();
    let mut t = vec![0.0; m * w];
    for (i, (row, b)) in lp
        .a_ub
        .iter()
        .zip(&lp.b_ub)
        .chain(lp.a_eq.iter().zip(&lp.b_eq))
        .enumerate()
    {
        let mut rhs = *b;
        for j in 0..n {
            rhs -= row[j] * shift[j];
            let (p, q) = map[j];
            t[i * w + p] = row[j];
            if let Some(q) = q {
                t[i * w + q] = -row[j];
            }
        }
        if i < m_ub {
            t[i * w + slack0 + i] = 1.0;
        }
        t[i * w + cols] = rhs;
        if rhs < 0.0 {
            for k in 0..w {
                t[i * w + k] = -t[i * w + k];
            }
        }
        t[i * w + art0 + i] = 1.0;
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        basis: (art0..art0 + m).collect(),
    };

    // phase one
    let mut cost1 = vec![0.0; cols];
    for c in cost1.iter_mut().skip(art0) {
        *c = 1.0;
    }
    let all = vec![true; cols];
    tab.optimize(&cost1, &all)?;
    let infeas: f64 = (0..tab.rows)
        .filter(|&i| tab.basis[i] >= art0)
        .map(|i| tab.rhs(i))
        .sum();
    let scale = 1.0
        + lp.b_ub
            .iter()
            .chain(&lp.b_eq)
            .fold(0.0f64, |a, b| a.max(b.abs()));
    if infeas > 1e-9 * scale {
        return Err(LpError::Infeasible(infeas));
    }
    // drive remaining artificials out, dropping redundant rows
    let mut i = 0;
    while i < tab.rows {
        if tab.basis[i] >= art0 {
            let col = (0..art0).find(|&j| tab.at(i, j).abs() > PIVOT_TOL);
            match col {
                Some(j) => {
                    tab.pivot(i, j);
                    i += 1;
                }
                None => tab.remove_row(i),
            }
        } else {
            i += 1;
        }
    }

    // phase two
    let mut cost2 = vec![0.0; cols];
    for j in 0..n {
        let (p, q) = map[j];
        cost2[p] = lp.objective[j];
        if let Some(q) = q {
            cost2[q] = -lp.objective[j];
        }
    }
    let allowed: Vec<bool> = (0..cols).map(|j| j < art0).collect();
    tab.optimize(&cost2, &allowed)?;

    let mut z = vec![0.0; cols];
    for i in 0..tab.rows {
        z[tab.basis[i]] = tab.rhs(i);
    }
    let x: Vec<f64> = (0..n)
        .map(|j| {
            let (p, q) = map[j];
            shift[j] + z[p] - q.map_or(0.0, |q| z[q])
        })
        .collect();
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { value, x })
}
