//! Small dense linear programs: minimize `c^T y` over a box intersected with
//! half-spaces `a^T y >= g`.
//!
//! Solved by a bounded-variable two-phase simplex. Problem sizes here are
//! tiny (tens of variables and constraints), so the basis matrix is
//! refactorized densely at every pivot.

use crate::error::{Error, Result};

/// Linear program data. Box bounds must be finite; constraint rows mean
/// `a . y >= g`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub point: Vec<f64>,
}

const FEAS_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 2000;

/// Dense LU with partial pivoting for the (tiny) basis matrix.
struct RealLu {
    n: usize,
    a: Vec<f64>,
    ipiv: Vec<usize>,
}

impl RealLu {
    fn factor(n: usize, data: &[f64]) -> Option<Self> {
        let mut a = data.to_vec();
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let mut jp = j;
            let mut best = a[j * n + j].abs();
            for i in (j + 1)..n {
                if a[i * n + j].abs() > best {
                    best = a[i * n + j].abs();
                    jp = i;
                }
            }
            if best < 1e-13 {
                return None;
            }
            ipiv[j] = jp;
            if jp != j {
                for c in 0..n {
                    a.swap(j * n + c, jp * n + c);
                }
            }
            let d = a[j * n + j];
            for i in (j + 1)..n {
                let l = a[i * n + j] / d;
                a[i * n + j] = l;
                for c in (j + 1)..n {
                    a[i * n + c] -= l * a[j * n + c];
                }
            }
        }
        Some(Self { n, a, ipiv })
    }

    // factor() swaps whole rows, so PB = LU: swaps first, then triangles.
    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let jp = self.ipiv[j];
            if jp != j {
                b.swap(j, jp);
            }
        }
        for j in 0..n {
            for i in (j + 1)..n {
                b[i] -= self.a[i * n + j] * b[j];
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.a[j * n + j];
            for i in 0..j {
                b[i] -= self.a[i * n + j] * b[j];
            }
        }
    }

    /// Solves `B^T x = b` (B^T = U^T L^T P, undo swaps last in reverse).
    fn solve_transpose(&self, b: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let mut acc = b[j];
            for i in 0..j {
                acc -= self.a[i * n + j] * b[i];
            }
            b[j] = acc / self.a[j * n + j];
        }
        for j in (0..n).rev() {
            let mut acc = b[j];
            for i in (j + 1)..n {
                acc -= self.a[i * n + j] * b[i];
            }
            b[j] = acc;
        }
        for j in (0..n).rev() {
            let jp = self.ipiv[j];
            if jp != j {
                b.swap(j, jp);
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum VarState {
    Basic(usize), // row in the basis
    AtLower,
    AtUpper,
}

/// Working tableau: columns are [y-vars | slacks | artificials].
struct Tableau {
    m: usize,
    ncols: usize,
    cols: Vec<Vec<f64>>, // column-major constraint matrix
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>, // column index per row
    rhs: Vec<f64>,
}

impl Tableau {
    fn basic_values(&self, lu: &RealLu) -> Vec<f64> {
        // x_B = B^{-1} (rhs - N x_N)
        let mut r = self.rhs.clone();
        for (j, st) in self.state.iter().enumerate() {
            let xj = match st {
                VarState::AtLower => self.lower[j],
                VarState::AtUpper => self.upper[j],
                VarState::Basic(_) => continue,
            };
            if xj != 0.0 {
                for i in 0..self.m {
                    r[i] -= self.cols[j][i] * xj;
                }
            }
        }
        lu.solve(&mut r);
        r
    }

    fn basis_lu(&self) -> Option<RealLu> {
        let m = self.m;
        let mut data = vec![0.0; m * m];
        for (col, &j) in self.basis.iter().enumerate() {
            for i in 0..m {
                data[i * m + col] = self.cols[j][i];
            }
        }
        RealLu::factor(m, &data)
    }

    /// One simplex pass on the current cost vector. Returns optimal cost.
    fn optimize(&mut self, bland_after: usize) -> Result<f64> {
        let m = self.m;
        let cost_scale = self.cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let dtol = COST_TOL * cost_scale;
        for pivot in 0..MAX_PIVOTS {
            let lu = self
                .basis_lu()
                .ok_or_else(|| Error::Invalid("singular simplex basis".into()))?;
            let xb = self.basic_values(&lu);

            // duals: B^T pi = c_B
            let mut pi = vec![0.0; m];
            for (row, &j) in self.basis.iter().enumerate() {
                pi[row] = self.cost[j];
            }
            lu.solve_transpose(&mut pi);

            // pricing
            let bland = pivot >= bland_after;
            let mut enter: Option<(usize, f64, bool)> = None; // (col, reduced cost, increase?)
            for j in 0..self.ncols {
                let (dir_increase, sign) = match self.state[j] {
                    VarState::Basic(_) => continue,
                    VarState::AtLower => (true, 1.0),
                    VarState::AtUpper => (false, -1.0),
                };
                if self.lower[j] == self.upper[j] {
                    continue; // fixed variable
                }
                let mut d = self.cost[j];
                for i in 0..m {
                    d -= pi[i] * self.cols[j][i];
                }
                // improving if d < 0 moving up from lower, or d > 0 moving down from upper
                if sign * d < -dtol {
                    match (&enter, bland) {
                        (_, true) => {
                            enter = Some((j, d, dir_increase));
                            break;
                        }
                        (None, false) => enter = Some((j, d, dir_increase)),
                        (Some((_, dbest, _)), false) => {
                            if d.abs() > dbest.abs() {
                                enter = Some((j, d, dir_increase));
                            }
                        }
                    }
                }
            }
            let Some((q, _, increase)) = enter else {
                // optimal: report objective
                let mut obj = 0.0;
                for j in 0..self.ncols {
                    let xj = match self.state[j] {
                        VarState::Basic(row) => xb[row],
                        VarState::AtLower => self.lower[j],
                        VarState::AtUpper => self.upper[j],
                    };
                    obj += self.cost[j] * xj;
                }
                return Ok(obj);
            };

            // direction of basic variables: B d = a_q; x_B[i] moves at rate -s*d[i]
            let mut d = self.cols[q].clone();
            lu.solve(&mut d);
            let s = if increase { 1.0 } else { -1.0 };

            let mut t_star = self.upper[q] - self.lower[q]; // own bound flip
            let mut leave: Option<(usize, bool)> = None; // (row, leaves at upper?)
            for i in 0..m {
                let rate = -s * d[i];
                let bj = self.basis[i];
                if rate > 1e-12 {
                    let t = (self.upper[bj] - xb[i]).max(0.0) / rate;
                    if t < t_star {
                        t_star = t;
                        leave = Some((i, true));
                    }
                } else if rate < -1e-12 {
                    let t = (xb[i] - self.lower[bj]).max(0.0) / (-rate);
                    if t < t_star {
                        t_star = t;
                        leave = Some((i, false));
                    }
                }
            }

            match leave {
                None => {
                    // bound flip of the entering variable
                    self.state[q] = if increase {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                }
                Some((row, at_upper)) => {
                    let out = self.basis[row];
                    self.state[out] = if at_upper {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.basis[row] = q;
                    self.state[q] = VarState::Basic(row);
                }
            }
        }
        Err(Error::Invalid("simplex pivot limit exceeded".into()))
    }

    fn extract(&self, nvars: usize) -> Result<Vec<f64>> {
        let lu = self
            .basis_lu()
            .ok_or_else(|| Error::Invalid("singular simplex basis".into()))?;
        let xb = self.basic_values(&lu);
        let mut y = vec![0.0; nvars];
        for j in 0..nvars {
            y[j] = match self.state[j] {
                VarState::Basic(row) => xb[row],
                VarState::AtLower => self.lower[j],
                VarState::AtUpper => self.upper[j],
            };
        }
        Ok(y)
    }
}

/// Global minimum of the linear objective over the box intersected with the
/// half-space constraints.
pub fn solve_lp(lp: &LpProblem) -> Result<LpSolution> {
    let nv = lp.objective.len();
    if lp.lower.len() != nv || lp.upper.len() != nv {
        return Err(Error::Dimension("LP bounds length mismatch".into()));
    }
    for j in 0..nv {
        if !lp.lower[j].is_finite() || !lp.upper[j].is_finite() {
            return Err(Error::Invalid("LP box bounds must be finite".into()));
        }
        if lp.lower[j] > lp.upper[j] {
            return Err(Error::LpInfeasible);
        }
    }
    for (a, _) in &lp.constraints {
        if a.len() != nv {
            return Err(Error::Dimension("LP constraint length mismatch".into()));
        }
    }
    let m = lp.constraints.len();

    // no constraints: minimize each coordinate independently
    if m == 0 {
        let mut y = vec![0.0; nv];
        let mut val = 0.0;
        for j in 0..nv {
            y[j] = if lp.objective[j] >= 0.0 {
                lp.lower[j]
            } else {
                lp.upper[j]
            };
            val += lp.objective[j] * y[j];
        }
        return Ok(LpSolution { value: val, point: y });
    }

    // columns: y vars, slacks (a.y - s = g), artificials as needed
    let ncols = nv + m + m;
    let mut cols = vec![vec![0.0; m]; ncols];
    for (i, (a, _)) in lp.constraints.iter().enumerate() {
        for j in 0..nv {
            cols[j][i] = a[j];
        }
        cols[nv + i][i] = -1.0;
    }
    let big = {
        // scale-aware bound for slack range
        let mut s = 1.0f64;
        for (a, g) in &lp.constraints {
            let mut reach = g.abs();
            for j in 0..nv {
                reach += a[j].abs() * lp.lower[j].abs().max(lp.upper[j].abs());
            }
            s = s.max(reach);
        }
        4.0 * s + 1.0
    };
    let mut lower = vec![0.0; ncols];
    let mut upper = vec![0.0; ncols];
    lower[..nv].copy_from_slice(&lp.lower);
    upper[..nv].copy_from_slice(&lp.upper);
    for i in 0..m {
        lower[nv + i] = 0.0;
        upper[nv + i] = big; // slack of a satisfied >= constraint stays bounded by `big`
    }

    // start: y at lower bounds, slacks basic where residual allows, artificials otherwise
    let mut state = vec![VarState::AtLower; ncols];
    let mut basis = Vec::with_capacity(m);
    let rhs: Vec<f64> = lp.constraints.iter().map(|(_, g)| *g).collect();
    let mut need_phase1 = false;
    for i in 0..m {
        let (a, g) = &lp.constraints[i];
        let r: f64 = a.iter().zip(&lp.lower).map(|(ai, yi)| ai * yi).sum::<f64>() - g;
        let art = nv + m + i;
        if r >= 0.0 {
            // slack = r >= 0 feasible, make it basic
            basis.push(nv + i);
            state[nv + i] = VarState::Basic(i);
            // artificial fixed at zero
            lower[art] = 0.0;
            upper[art] = 0.0;
            cols[art][i] = 1.0;
        } else {
            // violated: artificial carries the deficit g - a.y0 > 0
            cols[art][i] = 1.0;
            lower[art] = 0.0;
            upper[art] = big;
            basis.push(art);
            state[art] = VarState::Basic(i);
            need_phase1 = true;
        }
    }

    let mut tab = Tableau {
        m,
        ncols,
        cols,
        lower,
        upper,
        cost: vec![0.0; ncols],
        state,
        basis,
        rhs,
    };

    if need_phase1 {
        for i in 0..m {
            tab.cost[nv + m + i] = 1.0;
        }
        let infeas = tab.optimize(200)?;
        if infeas > FEAS_TOL * big {
            return Err(Error::LpInfeasible);
        }
        // pin artificials to zero for phase 2
        for i in 0..m {
            tab.upper[nv + m + i] = 0.0;
        }
    }

    tab.cost.fill(0.0);
    tab.cost[..nv].copy_from_slice(&lp.objective);
    let value = tab.optimize(200)?;
    let point = tab.extract(nv)?;
    Ok(LpSolution { value, point })
}
