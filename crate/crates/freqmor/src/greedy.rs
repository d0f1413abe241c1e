//! Weak greedy reduced-basis construction with a residual-based estimator.
//!
//! The basis holds orthonormal complex snapshot columns together with every
//! precomputed reduced quantity needed online: projected affine terms and
//! the Gram matrix of the residual components `{b_j} u {M_j phi_k}`. Online
//! evaluation (reduced solve plus residual norm) never touches full-order
//! arrays; the only exception is the cancellation fallback, which recomputes
//! a residual directly when the Gram expansion has lost too many digits.

use crate::dense::DenseLu;
use crate::error::{Error, Result};
use crate::fom::ParametricLti;
use crate::param::{ParameterGrid, ParameterPoint};
use crate::stability::StabilityModel;
use num_complex::Complex64;
use rayon::prelude::*;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative threshold below which the Gram-expanded residual is recomputed
/// by direct full-order assembly.
pub const CANCELLATION_GUARD: f64 = 1e-7;

/// Post-orthogonalization norm (relative to the snapshot) below which a
/// snapshot is rejected as redundant.
pub const REDUNDANCY_TOL: f64 = 1e-10;

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn dot_plain(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of an enrichment attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnrichOutcome {
    Added,
    /// The snapshot lies in the current span; the basis is unchanged.
    Redundant,
}

/// Orthonormal complex reduced basis with precomputed reduced operators.
pub struct ReducedBasis {
    model: Arc<ParametricLti>,
    phi: Vec<Vec<Complex64>>,
    m_red: Vec<Vec<Complex64>>, // per M-term, row-major r x r
    b_red: Vec<Vec<Complex64>>,
    c_red: Vec<Vec<Complex64>>,
    /// Residual components: b-term vectors, then `M_j phi_k` grouped by column.
    comps: Vec<Vec<Complex64>>,
    /// Hermitian Gram matrix of `comps`, stored as rows.
    gram: Vec<Vec<Complex64>>,
    selected: Vec<ParameterPoint>,
    fallbacks: AtomicU64,
}

impl ReducedBasis {
    /// Empty basis; the residual machinery already knows the b-components,
    /// so the empty-basis residual equals `||b(P)||`.
    pub fn new(model: Arc<ParametricLti>) -> Self {
        let comps: Vec<Vec<Complex64>> =
            model.b.terms().iter().map(|(_, v)| v.clone()).collect();
        let nb = comps.len();
        let mut gram = vec![vec![ZERO; nb]; nb];
        for i in 0..nb {
            for j in 0..nb {
                gram[i][j] = dot_conj(&comps[i], &comps[j]);
            }
        }
        let qm = model.m.term_count();
        let qb = model.b.term_count();
        let qc = model.c.term_count();
        Self {
            model,
            phi: Vec::new(),
            m_red: vec![Vec::new(); qm],
            b_red: vec![Vec::new(); qb],
            c_red: vec![Vec::new(); qc],
            comps,
            gram,
            selected: Vec::new(),
            fallbacks: AtomicU64::new(0),
        }
    }

    /// Builds a basis from given orthonormal columns (used to attach the
    /// residual machinery to an externally produced basis).
    pub fn from_columns(model: Arc<ParametricLti>, columns: &[Vec<Complex64>]) -> Result<Self> {
        let mut rb = Self::new(model);
        for col in columns {
            if rb.push_column(col)? == EnrichOutcome::Redundant {
                return Err(Error::Invalid(
                    "supplied basis columns are numerically dependent".into(),
                ));
            }
        }
        Ok(rb)
    }

    pub fn model(&self) -> &Arc<ParametricLti> {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    pub fn selected(&self) -> &[ParameterPoint] {
        &self.selected
    }

    pub fn columns(&self) -> &[Vec<Complex64>] {
        &self.phi
    }

    /// Number of full-order cancellation fallbacks taken so far.
    pub fn fallback_count(&self) -> u64 {
        self.fallbacks.load(Ordering::Relaxed)
    }

    /// Dense reduced solve `M~(P) w~ = b~(P)`; cost independent of n.
    pub fn reduced_solve(&self, pt: &ParameterPoint) -> Result<Vec<Complex64>> {
        let r = self.dim();
        if r == 0 {
            return Ok(Vec::new());
        }
        let th_m = self.model.m.coefficients(pt)?;
        let th_b = self.model.b.coefficients(pt)?;
        let mut mat = vec![ZERO; r * r];
        for (th, term) in th_m.iter().zip(&self.m_red) {
            if *th == 0.0 {
                continue;
            }
            for (mi, ti) in mat.iter_mut().zip(term) {
                *mi += ti * *th;
            }
        }
        let mut rhs = vec![ZERO; r];
        for (th, term) in th_b.iter().zip(&self.b_red) {
            if *th == 0.0 {
                continue;
            }
            for (ri, ti) in rhs.iter_mut().zip(term) {
                *ri += ti * *th;
            }
        }
        let lu = DenseLu::factor_slice(r, &mat).map_err(|_| Error::Solve {
            point: pt.to_string(),
            reason: "reduced system is singular".into(),
        })?;
        lu.solve(&mut rhs);
        Ok(rhs)
    }

    /// Reduced transfer value `c(p)^T Phi w~` evaluated with reduced data.
    pub fn reduced_transfer(&self, pt: &ParameterPoint, w_red: &[Complex64]) -> Result<Complex64> {
        let th_c = self.model.c.coefficients(pt)?;
        let mut h = ZERO;
        for (th, term) in th_c.iter().zip(&self.c_red) {
            if *th == 0.0 {
                continue;
            }
            h += dot_plain(term, w_red) * *th;
        }
        Ok(h)
    }

    /// Lifts a reduced solution back to the full space (`Phi w~`).
    pub fn reconstruct(&self, w_red: &[Complex64]) -> Vec<Complex64> {
        let n = self.model.n;
        let mut out = vec![ZERO; n];
        for (col, wk) in self.phi.iter().zip(w_red) {
            if *wk == ZERO {
                continue;
            }
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * wk;
            }
        }
        out
    }

    fn gamma(&self, th_m: &[f64], th_b: &[f64], w_red: &[Complex64]) -> Vec<Complex64> {
        let qm = th_m.len();
        let mut g = Vec::with_capacity(self.comps.len());
        for th in th_b {
            g.push(Complex64::new(*th, 0.0));
        }
        for wk in w_red {
            for th in th_m {
                g.push(-wk * *th);
            }
        }
        debug_assert_eq!(g.len(), th_b.len() + w_red.len() * qm);
        g
    }

    fn quadratic_form(&self, g: &[Complex64], limit: usize) -> f64 {
        let mut acc = ZERO;
        for i in 0..limit {
            if g[i] == ZERO {
                continue;
            }
            let row = &self.gram[i];
            let mut s = ZERO;
            for j in 0..limit {
                s += row[j] * g[j];
            }
            acc += g[i].conj() * s;
        }
        acc.re.max(0.0)
    }

    /// Norm of the full input vector `||b(P)||`, from the Gram data.
    pub fn input_norm(&self, pt: &ParameterPoint) -> Result<f64> {
        let th_b = self.model.b.coefficients(pt)?;
        let g: Vec<Complex64> = th_b.iter().map(|t| Complex64::new(*t, 0.0)).collect();
        Ok(self.quadratic_form(&g, g.len()).sqrt())
    }

    /// Residual norm `||b(P) - M(P) Phi w~||` via the precomputed Gram
    /// expansion, with a direct full-order fallback against cancellation.
    pub fn residual_norm(&self, pt: &ParameterPoint, w_red: &[Complex64]) -> Result<f64> {
        let th_m = self.model.m.coefficients(pt)?;
        let th_b = self.model.b.coefficients(pt)?;
        let g = self.gamma(&th_m, &th_b, w_red);
        let val = self.quadratic_form(&g, g.len());
        let bnorm2 = self.quadratic_form(&g, th_b.len());
        if val >= (CANCELLATION_GUARD * CANCELLATION_GUARD) * bnorm2 || self.dim() == 0 {
            return Ok(val.sqrt());
        }
        // Gram expansion has cancelled away; assemble directly
        self.fallbacks.fetch_add(1, Ordering::Relaxed);
        let x = self.reconstruct(w_red);
        let m = self.model.m.evaluate(pt)?;
        let b = self.model.b.evaluate(pt)?;
        let mx = m.apply(&x);
        let r: Vec<Complex64> = b.iter().zip(&mx).map(|(bi, mi)| bi - mi).collect();
        Ok(norm2(&r))
    }

    /// A posteriori error estimator `Delta(P) = ||r(P)|| / sigma_LB(P)`.
    pub fn error_estimator(&self, pt: &ParameterPoint, stability: &StabilityModel) -> Result<f64> {
        let sigma = stability.query(pt)?;
        self.estimator_with_sigma(pt, sigma)
    }

    /// Estimator with an externally cached stability lower bound.
    pub fn estimator_with_sigma(&self, pt: &ParameterPoint, sigma_lb: f64) -> Result<f64> {
        if !(sigma_lb > 0.0) {
            return Err(Error::NonPositiveStability {
                point: pt.to_string(),
            });
        }
        let w_red = self.reduced_solve(pt)?;
        Ok(self.residual_norm(pt, &w_red)? / sigma_lb)
    }

    /// Orthogonalizes and appends a raw column; shared by `enrich` and
    /// `from_columns`.
    fn push_column(&mut self, w: &[Complex64]) -> Result<EnrichOutcome> {
        if w.len() != self.model.n {
            return Err(Error::Dimension("snapshot length mismatch".into()));
        }
        let wnorm = norm2(w);
        if wnorm == 0.0 {
            return Ok(EnrichOutcome::Redundant);
        }
        let mut v = w.to_vec();
        for _ in 0..2 {
            for col in &self.phi {
                let h = dot_conj(col, &v);
                if h != ZERO {
                    for (vi, ci) in v.iter_mut().zip(col) {
                        *vi -= ci * h;
                    }
                }
            }
        }
        let vnorm = norm2(&v);
        if vnorm <= REDUNDANCY_TOL * wnorm {
            return Ok(EnrichOutcome::Redundant);
        }
        for vi in &mut v {
            *vi /= vnorm;
        }

        let r_old = self.phi.len();
        let qm = self.model.m.term_count();
        let qb = self.model.b.term_count();

        // new residual components M_j phi_new
        let new_comps: Vec<Vec<Complex64>> = (0..qm)
            .map(|j| self.model.m.term_matrix(j).apply(&v))
            .collect();

        // grow the reduced M terms: old rows x new col, new row, corner
        for (j, term) in self.m_red.iter_mut().enumerate() {
            let mut grown = vec![ZERO; (r_old + 1) * (r_old + 1)];
            for row in 0..r_old {
                for col in 0..r_old {
                    grown[row * (r_old + 1) + col] = term[row * r_old + col];
                }
            }
            for (row, phi_row) in self.phi.iter().enumerate() {
                grown[row * (r_old + 1) + r_old] = dot_conj(phi_row, &new_comps[j]);
            }
            for col in 0..r_old {
                let comp = &self.comps[qb + col * qm + j];
                grown[r_old * (r_old + 1) + col] = dot_conj(&v, comp);
            }
            grown[r_old * (r_old + 1) + r_old] = dot_conj(&v, &new_comps[j]);
            *term = grown;
        }
        for (j, term) in self.b_red.iter_mut().enumerate() {
            term.push(dot_conj(&v, &self.comps[j]));
        }
        for (j, term) in self.c_red.iter_mut().enumerate() {
            term.push(dot_plain(&self.model.c.terms()[j].1, &v));
        }

        // grow the Gram matrix
        let old_len = self.comps.len();
        for comp in new_comps {
            let mut row: Vec<Complex64> = self
                .comps
                .iter()
                .map(|existing| dot_conj(&comp, existing))
                .collect();
            row.push(dot_conj(&comp, &comp));
            for (i, existing_row) in self.gram.iter_mut().enumerate() {
                existing_row.push(row[i].conj());
            }
            self.gram.push(row);
            self.comps.push(comp);
        }
        debug_assert_eq!(self.comps.len(), old_len + qm);
        self.phi.push(v);
        Ok(EnrichOutcome::Added)
    }

    /// Full solve at a new point followed by Gram-Schmidt insertion, with
    /// incremental updates of every reduced quantity.
    pub fn enrich(&mut self, pt: &ParameterPoint) -> Result<EnrichOutcome> {
        if self.selected.iter().any(|s| s == pt) {
            return Err(Error::Invalid(format!("point {pt} already selected")));
        }
        let sol = self.model.solve_frequency(pt)?;
        let outcome = self.push_column(&sol.w)?;
        if outcome == EnrichOutcome::Added {
            self.selected.push(pt.clone());
        }
        Ok(outcome)
    }
}

/// Stopping rule and instrumentation for the greedy loop.
#[derive(Debug, Clone)]
pub struct GreedyOptions {
    pub max_basis: usize,
    pub tol: f64,
    /// Track max true errors over at most this many grid points (full solves).
    pub track_truth: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyStatus {
    /// Estimator fell below the tolerance.
    Converged,
    /// Basis size reached `max_basis`.
    MaxBasis,
    /// The argmax snapshot was numerically redundant.
    Stagnated,
}

#[derive(Debug, Clone)]
pub struct GreedyRecord {
    pub iteration: usize,
    pub point: ParameterPoint,
    pub max_estimator: f64,
    pub max_true_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GreedyTrace {
    pub records: Vec<GreedyRecord>,
    pub status: GreedyStatus,
    pub final_max_estimator: f64,
}

/// Estimator sweep over a grid with cached stability bounds; parallel and
/// deterministic.
pub fn estimator_sweep(
    rb: &ReducedBasis,
    grid: &ParameterGrid,
    sigma_lbs: &[f64],
) -> Result<Vec<f64>> {
    grid.points()
        .par_iter()
        .zip(sigma_lbs.par_iter())
        .map(|(pt, sig)| rb.estimator_with_sigma(pt, *sig))
        .collect()
}

/// Certified stability bounds cached over a grid.
pub fn stability_cache(stability: &StabilityModel, grid: &ParameterGrid) -> Result<Vec<f64>> {
    grid.points()
        .par_iter()
        .map(|pt| stability.query(pt))
        .collect()
}

fn argmax(values: &[f64]) -> (usize, f64) {
    let mut bi = 0;
    let mut bv = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > bv {
            bv = v;
            bi = i;
        }
    }
    (bi, bv)
}

/// Weak greedy loop: sweep the estimator, enrich at the argmax, stop on
/// tolerance, basis-size cap, or a redundant snapshot.
pub fn run_greedy(
    model: Arc<ParametricLti>,
    grid: &ParameterGrid,
    stability: &StabilityModel,
    opts: &GreedyOptions,
) -> Result<(ReducedBasis, GreedyTrace)> {
    for pt in grid.points() {
        model.in_domain(pt)?;
    }
    let sigma_lbs = stability_cache(stability, grid)?;
    for (pt, sig) in grid.points().iter().zip(&sigma_lbs) {
        if !(*sig > 0.0) {
            return Err(Error::NonPositiveStability {
                point: pt.to_string(),
            });
        }
    }
    let truth_idx: Vec<usize> = match opts.track_truth {
        Some(k) if k > 0 => {
            let stride = grid.len().div_ceil(k);
            (0..grid.len()).step_by(stride.max(1)).collect()
        }
        _ => Vec::new(),
    };

    let mut rb = ReducedBasis::new(model.clone());
    let mut records = Vec::new();
    let status;
    loop {
        let estimators = estimator_sweep(&rb, grid, &sigma_lbs)?;
        let (idx, max_est) = argmax(&estimators);
        let max_truth = if truth_idx.is_empty() {
            None
        } else {
            let errs: Vec<f64> = truth_idx
                .par_iter()
                .map(|&i| {
                    let pt = &grid.points()[i];
                    let w = model.solve_frequency(pt)?.w;
                    let w_red = rb.reduced_solve(pt)?;
                    let lifted = rb.reconstruct(&w_red);
                    let e: f64 = w
                        .iter()
                        .zip(&lifted)
                        .map(|(a, b)| (a - b).norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    Ok(e)
                })
                .collect::<Result<Vec<f64>>>()?;
            Some(errs.into_iter().fold(0.0f64, f64::max))
        };
        records.push(GreedyRecord {
            iteration: records.len(),
            point: grid.points()[idx].clone(),
            max_estimator: max_est,
            max_true_error: max_truth,
        });
        if max_est <= opts.tol {
            status = GreedyStatus::Converged;
            break;
        }
        if rb.dim() >= opts.max_basis {
            status = GreedyStatus::MaxBasis;
            break;
        }
        match rb.enrich(&grid.points()[idx])? {
            EnrichOutcome::Added => {}
            EnrichOutcome::Redundant => {
                status = GreedyStatus::Stagnated;
                break;
            }
        }
    }
    let final_max_estimator = records.last().map(|r| r.max_estimator).unwrap_or(0.0);
    Ok((
        rb,
        GreedyTrace {
            records,
            status,
            final_max_estimator,
        },
    ))
}
