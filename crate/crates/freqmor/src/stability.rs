//! Certified lower bounds on the stability factor `sigma_min(M(P))`.
//!
//! Two trainable back ends share one query interface:
//! the successive constraint method (SCM), which relaxes the Rayleigh
//! quotients of the affine cross terms into a box plus nearest-neighbor
//! constraints and solves a small LP per point, and its natural-norm variant
//! (NNSCM), which linearizes around greedily chosen anchor parameters and
//! certifies the ratio `beta(P, Pbar)` per frequency subdomain. An exact
//! dense oracle backend exists for testing.

use crate::affine::AffineMatrix;
use crate::dense::{hermitian_part, DirectSolver};
use crate::eig::{
    hermitian_smallest_structured, lanczos_extremes, product_hermitian_extremes, sigma_max,
    smallest_sigma, SigmaMode, WhichEnd, DENSE_EIG_CAP,
};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem};
use crate::param::{subdomain_index, ParameterGrid, ParameterPoint};
use crate::sparse::CscMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::sync::Arc;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Safety inflation on iterated largest singular values used as box bounds.
const SIGMA_MAX_INFLATION: f64 = 1.01;

#[derive(Debug, Clone)]
pub struct ScmOptions {
    /// Target relative gap.
    pub epsilon: f64,
    /// Nearest-neighbor constraint count (`usize::MAX` keeps every stored point).
    pub m_alpha: usize,
}

#[derive(Debug, Clone)]
pub struct NnscmOptions {
    /// Target relative gap on the stability factor.
    pub epsilon: f64,
    /// Target relative gap on beta inside the certified domain.
    pub epsilon_beta: f64,
    pub m_alpha: usize,
    /// Additionally enrich inside the certified domain.
    pub inside: bool,
    /// Certified-domain threshold: `D = { P : beta_LB(P) > phi }`.
    pub phi: f64,
}

impl Default for NnscmOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.8,
            epsilon_beta: 0.99,
            m_alpha: 20,
            inside: true,
            phi: 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// shared small kernels

fn norm2_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub(crate) fn pair_count(q: usize) -> usize {
    q * (q + 1) / 2
}

/// Coefficients of `J(P, y) = sum_{j<=m} (2 - delta_jm) theta_j theta_m y_jm`.
fn pair_objective(thetas: &[f64]) -> Vec<f64> {
    let q = thetas.len();
    let mut c = Vec::with_capacity(pair_count(q));
    for j in 0..q {
        for m in j..q {
            let w = if j == m { 1.0 } else { 2.0 };
            c.push(w * thetas[j] * thetas[m]);
        }
    }
    c
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rayleigh pair vector `y_jm(v) = Re<M_j v, M_m v> / ||v||^2`.
fn y_vector(matrix: &AffineMatrix, v: &[Complex64]) -> Vec<f64> {
    let q = matrix.term_count();
    let mv: Vec<Vec<Complex64>> = (0..q).map(|j| matrix.term_matrix(j).apply(v)).collect();
    let nrm2 = norm2_sq(v).max(f64::MIN_POSITIVE);
    let mut y = Vec::with_capacity(pair_count(q));
    for j in 0..q {
        for m in j..q {
            let d: Complex64 = mv[j].iter().zip(&mv[m]).map(|(a, b)| a.conj() * b).sum();
            y.push(d.re / nrm2);
        }
    }
    y
}

/// Natural-norm quotient vector `z_j(v) = Re<Mbar v, M_j v> / ||Mbar v||^2`.
fn z_vector(matrix: &AffineMatrix, v: &[Complex64], mbar_v: &[Complex64]) -> Vec<f64> {
    let q = matrix.term_count();
    let den = norm2_sq(mbar_v).max(f64::MIN_POSITIVE);
    (0..q)
        .map(|j| {
            let mjv = matrix.term_matrix(j).apply(v);
            let d: Complex64 = mbar_v.iter().zip(&mjv).map(|(a, b)| a.conj() * b).sum();
            d.re / den
        })
        .collect()
}

/// Indices of the `k` nearest stored points (Euclidean in raw coordinates),
/// ties broken by lower index.
fn nearest_indices(points: &[ParameterPoint], target: &ParameterPoint, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.distance2(target), i))
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    d.truncate(k.min(points.len()));
    d.into_iter().map(|(_, i)| i).collect()
}

/// Deterministic argmax: largest value, ties broken by lowest index; entries
/// listed in `skip` are not eligible.
fn argmax_skipping(values: &[f64], skip: &HashSet<usize>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if skip.contains(&i) || !v.is_finite() {
            continue;
        }
        match best {
            None => best = Some((i, v)),
            Some((_, bv)) if v > bv => best = Some((i, v)),
            _ => {}
        }
    }
    best
}

// ---------------------------------------------------------------------------
// standard SCM

/// Trained standard-SCM data. `constraint_rows[l]` caches the pair objective
/// of the stored point, so the per-query LP assembles without touching the
/// coefficient closures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScmState {
    pub m_alpha: usize,
    pub q: usize,
    pub points: Vec<ParameterPoint>,
    pub sigmas: Vec<f64>,
    pub y_vectors: Vec<Vec<f64>>,
    pub constraint_rows: Vec<Vec<f64>>,
    pub eig_lo: Vec<f64>,
    pub eig_hi: Vec<f64>,
    /// Relative-gap history, one entry per training iteration.
    pub gap_history: Vec<f64>,
}

impl ScmState {
    /// Squared upper bound `min_l J(P, y_l)`; `+inf` with no stored points.
    pub fn upper_squared(&self, obj: &[f64]) -> f64 {
        self.y_vectors
            .iter()
            .map(|y| dot(obj, y))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    /// Raw LP lower bound on `sigma_min^2` (may be negative).
    pub fn lower_squared(&self, pt: &ParameterPoint, obj: &[f64]) -> Result<f64> {
        let mut constraints = Vec::new();
        if !self.points.is_empty() {
            let k = self.m_alpha.min(self.points.len());
            for l in nearest_indices(&self.points, pt, k) {
                constraints.push((self.constraint_rows[l].clone(), self.sigmas[l].powi(2)));
            }
        }
        let lp = LpProblem {
            objective: obj.to_vec(),
            lower: self.eig_lo.clone(),
            upper: self.eig_hi.clone(),
            constraints,
        };
        Ok(solve_lp(&lp)?.value)
    }

    /// Relative gap `(UB^2 - LB~^2) / UB^2`; defined as 1 with no stored
    /// points and 0 when the upper bound vanishes.
    pub fn gap(&self, pt: &ParameterPoint, obj: &[f64]) -> Result<f64> {
        if self.points.is_empty() {
            return Ok(1.0);
        }
        let ub2 = self.upper_squared(obj);
        if ub2 == 0.0 {
            return Ok(0.0);
        }
        let lb2 = self.lower_squared(pt, obj)?;
        Ok((ub2 - lb2) / ub2)
    }
}

/// Upper bound `sigma_min^UB(P)` from the trained state.
pub fn scm_upper(state: &ScmState, matrix: &AffineMatrix, pt: &ParameterPoint) -> Result<f64> {
    let obj = pair_objective(&matrix.coefficients(pt)?);
    Ok(state.upper_squared(&obj).sqrt())
}

/// Certified lower bound `sigma_min^LB(P) = sqrt(max(0, LP value))`.
pub fn scm_lower(state: &ScmState, matrix: &AffineMatrix, pt: &ParameterPoint) -> Result<f64> {
    let obj = pair_objective(&matrix.coefficients(pt)?);
    Ok(state.lower_squared(pt, &obj)?.max(0.0).sqrt())
}

/// Greedy SCM training: enrich at the largest relative gap until it falls
/// below `epsilon`.
pub fn scm_train(
    matrix: Arc<AffineMatrix>,
    grid: &ParameterGrid,
    opts: &ScmOptions,
) -> Result<StabilityModel> {
    let q = matrix.term_count();
    let mut eig_lo = Vec::with_capacity(pair_count(q));
    let mut eig_hi = Vec::with_capacity(pair_count(q));
    for j in 0..q {
        for m in j..q {
            let (lo, hi) =
                product_hermitian_extremes(matrix.term_matrix(j), matrix.term_matrix(m))?;
            eig_lo.push(lo);
            eig_hi.push(hi);
        }
    }

    let objs: Vec<Vec<f64>> = grid
        .points()
        .iter()
        .map(|pt| Ok(pair_objective(&matrix.coefficients(pt)?)))
        .collect::<Result<_>>()?;

    let mut state = ScmState {
        m_alpha: opts.m_alpha,
        q,
        points: Vec::new(),
        sigmas: Vec::new(),
        y_vectors: Vec::new(),
        constraint_rows: Vec::new(),
        eig_lo,
        eig_hi,
        gap_history: Vec::new(),
    };

    let mut chosen: HashSet<usize> = HashSet::new();
    loop {
        let gaps: Vec<f64> = if state.points.is_empty() {
            vec![1.0; grid.len()]
        } else {
            grid.points()
                .par_iter()
                .zip(objs.par_iter())
                .map(|(pt, obj)| state.gap(pt, obj))
                .collect::<Result<_>>()?
        };
        let max_gap = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        state.gap_history.push(max_gap);
        if max_gap <= opts.epsilon {
            break;
        }
        let Some((idx, _)) = argmax_skipping(&gaps, &chosen) else {
            break; // every grid point already stored
        };
        if chosen.len() >= grid.len() {
            break;
        }
        let pt = &grid.points()[idx];
        let m_at = matrix.evaluate(pt)?;
        let (sigma, v) = smallest_sigma(&m_at, SigmaMode::Auto)?;
        state.points.push(pt.clone());
        state.sigmas.push(sigma);
        state.y_vectors.push(y_vector(&matrix, &v));
        state.constraint_rows.push(objs[idx].clone());
        chosen.insert(idx);
    }

    Ok(StabilityModel::Scm { matrix, state })
}

// ---------------------------------------------------------------------------
// natural-norm SCM

/// One trained anchor: exact stability factor, Rayleigh data of its singular
/// vector, and the greedily grown subsample set certifying `beta` nearby.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorState {
    pub anchor: ParameterPoint,
    pub sigma: f64,
    pub y_anchor: Vec<f64>,
    pub z_box: Vec<f64>,
    pub samples: Vec<ParameterPoint>,
    pub betas: Vec<f64>,
    pub z_vectors: Vec<Vec<f64>>,
    /// theta rows of the samples, cached for LP assembly.
    pub sample_thetas: Vec<Vec<f64>>,
}

impl AnchorState {
    /// `beta^UB(P) = min_l J_NN(P, z_l)`; may be negative.
    pub fn beta_upper(&self, thetas: &[f64]) -> f64 {
        self.z_vectors
            .iter()
            .map(|z| dot(thetas, z))
            .fold(f64::INFINITY, f64::min)
    }

    /// `beta^LB(P)` from the box/neighbor LP; may be negative.
    pub fn beta_lower(&self, pt: &ParameterPoint, thetas: &[f64], m_alpha: usize) -> Result<f64> {
        let k = m_alpha.min(self.samples.len());
        let mut constraints = Vec::with_capacity(k);
        for l in nearest_indices(&self.samples, pt, k) {
            constraints.push((self.sample_thetas[l].clone(), self.betas[l]));
        }
        let lp = LpProblem {
            objective: thetas.to_vec(),
            lower: self.z_box.iter().map(|b| -b).collect(),
            upper: self.z_box.clone(),
            constraints,
        };
        Ok(solve_lp(&lp)?.value)
    }
}

/// Per-subdomain NNSCM state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NnscmState {
    pub m_alpha: usize,
    pub q: usize,
    pub anchors: Vec<AnchorState>,
    pub gap_history: Vec<f64>,
}

impl NnscmState {
    /// Certified lower bound (floored at zero).
    pub fn lower(&self, pt: &ParameterPoint, thetas: &[f64]) -> Result<f64> {
        let mut best = 0.0f64;
        for a in &self.anchors {
            let lb = a.beta_lower(pt, thetas, self.m_alpha)?;
            best = best.max(lb * a.sigma);
        }
        Ok(best)
    }

    /// Upper bound from stored anchor singular vectors.
    pub fn upper(&self, obj_pairs: &[f64]) -> f64 {
        self.anchors
            .iter()
            .map(|a| dot(obj_pairs, &a.y_anchor))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
            .sqrt()
    }
}

/// Factorization context for one anchor, reused across beta subsamples.
struct AnchorContext<'a> {
    matrix: &'a AffineMatrix,
    mbar: CscMatrix,
    lu: DirectSolver,
    /// Dense inverse of `Mbar` when the dimension allows.
    x_inv: Option<Array2<Complex64>>,
}

impl<'a> AnchorContext<'a> {
    fn new(matrix: &'a AffineMatrix, anchor: &ParameterPoint) -> Result<Self> {
        let mbar = matrix.evaluate(anchor)?;
        let lu = DirectSolver::factor(&mbar)?;
        let n = mbar.nrows();
        let x_inv = if n <= DENSE_EIG_CAP {
            let mut x = Array2::zeros((n, n));
            let mut col = vec![ZERO; n];
            for j in 0..n {
                col.fill(ZERO);
                col[j] = Complex64::new(1.0, 0.0);
                lu.solve(&mut col);
                for i in 0..n {
                    x[(i, j)] = col[i];
                }
            }
            Some(x)
        } else {
            None
        };
        Ok(Self {
            matrix,
            mbar,
            lu,
            x_inv,
        })
    }

    /// Exact `beta(P, Pbar)` with its quotient vector `z`, via the smallest
    /// eigenvalue of the Hermitian part of `M(P) Mbar^{-1}`.
    fn beta_exact(&self, pt: &ParameterPoint) -> Result<(f64, Vec<f64>)> {
        let mp = self.matrix.evaluate(pt)?;
        let n = mp.nrows();
        let (beta, u) = if let Some(x) = &self.x_inv {
            let mut c = Array2::zeros((n, n));
            let mut col = vec![ZERO; n];
            for j in 0..n {
                for (i, ci) in col.iter_mut().enumerate() {
                    *ci = x[(i, j)];
                }
                let y = mp.apply(&col);
                for i in 0..n {
                    c[(i, j)] = y[i];
                }
            }
            let h = hermitian_part(&c);
            hermitian_smallest_structured(&h)?
        } else {
            let op = |v: &[Complex64], out: &mut [Complex64]| {
                // (M_P Mbar^{-1} + Mbar^{-H} M_P^H) v / 2
                let mut t1 = v.to_vec();
                self.lu.solve(&mut t1);
                let t1 = mp.apply(&t1);
                let mut t2 = vec![ZERO; n];
                mp.matvec_conj_transpose(v, &mut t2);
                self.lu.solve_conj_transpose(&mut t2);
                for ((o, a), b) in out.iter_mut().zip(&t1).zip(&t2) {
                    *o = (a + b) * 0.5;
                }
            };
            let res = lanczos_extremes(&op, n, WhichEnd::Smallest, 1e-9, 600, 0xBE7A)?;
            (res.lo.value, res.lo.vector)
        };
        let v = self.lu.solve_vec(&u);
        let mbar_v = self.mbar.apply(&v);
        let z = z_vector(self.matrix, &v, &mbar_v);
        Ok((beta, z))
    }
}

/// Exact `beta(P, Pbar)` and its z-vector (one-off convenience wrapper).
pub fn beta_exact(
    matrix: &AffineMatrix,
    anchor: &ParameterPoint,
    pt: &ParameterPoint,
) -> Result<(f64, Vec<f64>)> {
    AnchorContext::new(matrix, anchor)?.beta_exact(pt)
}

fn train_subdomain(
    matrix: &AffineMatrix,
    pts: &[ParameterPoint],
    sigma_max_terms: &[f64],
    opts: &NnscmOptions,
) -> Result<NnscmState> {
    let q = matrix.term_count();
    let npts = pts.len();
    let thetas: Vec<Vec<f64>> = pts
        .iter()
        .map(|pt| matrix.coefficients(pt))
        .collect::<Result<_>>()?;
    let objs: Vec<Vec<f64>> = thetas.iter().map(|t| pair_objective(t)).collect();

    let mut state = NnscmState {
        m_alpha: opts.m_alpha,
        q,
        anchors: Vec::new(),
        gap_history: Vec::new(),
    };
    // grid-aligned caches, one row per trained anchor
    let mut cache_beta_lb: Vec<Vec<f64>> = Vec::new();
    let mut cache_ub2: Vec<Vec<f64>> = Vec::new();
    let mut anchor_idx: HashSet<usize> = HashSet::new();

    loop {
        // outer selection
        let anchor_i = if state.anchors.is_empty() {
            let norms: Vec<f64> = thetas
                .iter()
                .map(|t| t.iter().map(|x| x * x).sum::<f64>())
                .collect();
            argmax_skipping(&norms, &HashSet::new())
                .ok_or_else(|| Error::Invalid("empty subdomain grid".into()))?
                .0
        } else {
            let gaps: Vec<f64> = (0..npts)
                .map(|i| {
                    let ub2 = cache_ub2
                        .iter()
                        .map(|row| row[i])
                        .fold(f64::INFINITY, f64::min);
                    let lb = cache_beta_lb
                        .iter()
                        .zip(&state.anchors)
                        .map(|(row, a)| row[i] * a.sigma)
                        .fold(0.0f64, f64::max);
                    if ub2 <= 0.0 {
                        0.0
                    } else {
                        (ub2 - lb * lb) / ub2
                    }
                })
                .collect();
            let max_gap = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            state.gap_history.push(max_gap);
            if max_gap <= opts.epsilon {
                break;
            }
            match argmax_skipping(&gaps, &anchor_idx) {
                Some((i, _)) => i,
                None => break,
            }
        };
        if state.anchors.len() >= npts {
            return Err(Error::Invalid(
                "NNSCM anchor count reached the grid size without certifying".into(),
            ));
        }
        anchor_idx.insert(anchor_i);
        let anchor_pt = pts[anchor_i].clone();

        // exact data at the anchor
        let ctx = AnchorContext::new(matrix, &anchor_pt)?;
        let (sigma, vbar) = smallest_sigma(&ctx.mbar, SigmaMode::Auto)?;
        if !(sigma > 0.0) {
            return Err(Error::Eigen(format!(
                "anchor {anchor_pt} is numerically singular"
            )));
        }
        let y_anchor = y_vector(matrix, &vbar);
        let mbar_v = ctx.mbar.apply(&vbar);
        let z_anchor = z_vector(matrix, &vbar, &mbar_v);
        let mut anchor = AnchorState {
            anchor: anchor_pt.clone(),
            sigma,
            y_anchor,
            z_box: sigma_max_terms.iter().map(|s| s / sigma).collect(),
            samples: vec![anchor_pt.clone()],
            betas: vec![1.0],
            z_vectors: vec![z_anchor],
            sample_thetas: vec![thetas[anchor_i].clone()],
        };
        let mut sample_idx: HashSet<usize> = HashSet::new();
        sample_idx.insert(anchor_i);

        // inner enrichment around the anchor
        let mut d_prev = vec![false; npts];
        let inner_cap = 2 * npts + 4;
        for _ in 0..inner_cap {
            let bounds: Vec<(f64, f64)> = (0..npts)
                .into_par_iter()
                .map(|i| {
                    let ub = anchor.beta_upper(&thetas[i]);
                    let lb = anchor.beta_lower(&pts[i], &thetas[i], opts.m_alpha)?;
                    Ok((lb, ub))
                })
                .collect::<Result<_>>()?;
            let d: Vec<bool> = bounds.iter().map(|(lb, _)| *lb > opts.phi).collect();
            let gaps: Vec<f64> = bounds
                .iter()
                .map(|(lb, ub)| if *ub == 0.0 { 0.0 } else { (ub - lb) / ub })
                .collect();
            let grew = d.iter().zip(&d_prev).any(|(now, before)| *now && !*before);
            let max_in_d = gaps
                .iter()
                .zip(&d)
                .filter(|(_, inside)| **inside)
                .map(|(g, _)| *g)
                .fold(f64::NEG_INFINITY, f64::max);
            if !grew && max_in_d < opts.epsilon_beta {
                break;
            }

            let mut added = false;
            if let Some((i1, g1)) = argmax_skipping(&gaps, &sample_idx) {
                if g1 > 0.0 {
                    let (beta, z) = ctx.beta_exact(&pts[i1])?;
                    anchor.samples.push(pts[i1].clone());
                    anchor.betas.push(beta);
                    anchor.z_vectors.push(z);
                    anchor.sample_thetas.push(thetas[i1].clone());
                    sample_idx.insert(i1);
                    added = true;
                }
            }
            if opts.inside {
                let inside_gaps: Vec<f64> = gaps
                    .iter()
                    .zip(&d)
                    .map(|(g, inside)| if *inside { *g } else { f64::NEG_INFINITY })
                    .collect();
                if let Some((i2, g2)) = argmax_skipping(&inside_gaps, &sample_idx) {
                    if g2 > opts.epsilon_beta {
                        let (beta, z) = ctx.beta_exact(&pts[i2])?;
                        anchor.samples.push(pts[i2].clone());
                        anchor.betas.push(beta);
                        anchor.z_vectors.push(z);
                        anchor.sample_thetas.push(thetas[i2].clone());
                        sample_idx.insert(i2);
                        added = true;
                    }
                }
            }
            if !added && !grew {
                break; // nothing enrichable left near this anchor
            }
            d_prev = d;
        }
        if anchor.samples.len() > npts {
            return Err(Error::Invalid(
                "NNSCM subsample count exceeded the grid size".into(),
            ));
        }

        // final caches for the outer gap
        let beta_lb_row: Vec<f64> = (0..npts)
            .into_par_iter()
            .map(|i| anchor.beta_lower(&pts[i], &thetas[i], opts.m_alpha))
            .collect::<Result<_>>()?;
        let ub2_row: Vec<f64> = objs
            .iter()
            .map(|obj| dot(obj, &anchor.y_anchor).max(0.0))
            .collect();
        cache_beta_lb.push(beta_lb_row);
        cache_ub2.push(ub2_row);
        state.anchors.push(anchor);
    }

    Ok(state)
}

/// Trains one NNSCM per frequency subdomain of the grid.
pub fn nnscm_train(
    matrix: Arc<AffineMatrix>,
    grid: &ParameterGrid,
    opts: &NnscmOptions,
) -> Result<StabilityModel> {
    let edges = grid
        .frequency_edges()
        .ok_or_else(|| Error::Invalid("NNSCM needs a frequency partition on the grid".into()))?
        .to_vec();
    let nsub = edges.len() - 1;
    let mut sub_pts: Vec<Vec<ParameterPoint>> = vec![Vec::new(); nsub];
    for pt in grid.points() {
        sub_pts[subdomain_index(&edges, pt.omega)?].push(pt.clone());
    }
    let q = matrix.term_count();
    let mut sigma_max_terms = Vec::with_capacity(q);
    for j in 0..q {
        sigma_max_terms.push(sigma_max(matrix.term_matrix(j))? * SIGMA_MAX_INFLATION);
    }
    let mut states = Vec::with_capacity(nsub);
    for pts in &sub_pts {
        if pts.is_empty() {
            states.push(None);
        } else {
            states.push(Some(train_subdomain(&matrix, pts, &sigma_max_terms, opts)?));
        }
    }
    Ok(StabilityModel::Nnscm {
        matrix,
        edges,
        states,
        sigma_max_terms,
    })
}

// ---------------------------------------------------------------------------
// unified query interface

/// A trained (or exact) provider of certified stability-factor lower bounds.
pub enum StabilityModel {
    Scm {
        matrix: Arc<AffineMatrix>,
        state: ScmState,
    },
    Nnscm {
        matrix: Arc<AffineMatrix>,
        edges: Vec<f64>,
        states: Vec<Option<NnscmState>>,
        sigma_max_terms: Vec<f64>,
    },
    /// Dense exact evaluation, for testing.
    Exact { matrix: Arc<AffineMatrix> },
}

impl StabilityModel {
    pub fn exact(matrix: Arc<AffineMatrix>) -> Self {
        Self::Exact { matrix }
    }

    /// Certified lower bound `sigma_min^LB(P) >= 0`.
    pub fn query(&self, pt: &ParameterPoint) -> Result<f64> {
        match self {
            Self::Exact { matrix } => {
                let m = matrix.evaluate(pt)?;
                Ok(smallest_sigma(&m, SigmaMode::Auto)?.0)
            }
            Self::Scm { matrix, state } => scm_lower(state, matrix, pt),
            Self::Nnscm {
                matrix,
                edges,
                states,
                ..
            } => {
                let j = subdomain_index(edges, pt.omega)?;
                let st = states[j].as_ref().ok_or_else(|| {
                    Error::Domain(format!(
                        "frequency subdomain {j} has no trained NNSCM (omega = {})",
                        pt.omega
                    ))
                })?;
                let thetas = matrix.coefficients(pt)?;
                st.lower(pt, &thetas)
            }
        }
    }

    /// Upper bound counterpart (exact value for the oracle backend).
    pub fn upper(&self, pt: &ParameterPoint) -> Result<f64> {
        match self {
            Self::Exact { matrix } => {
                let m = matrix.evaluate(pt)?;
                Ok(smallest_sigma(&m, SigmaMode::Auto)?.0)
            }
            Self::Scm { matrix, state } => scm_upper(state, matrix, pt),
            Self::Nnscm {
                matrix,
                edges,
                states,
                ..
            } => {
                let j = subdomain_index(edges, pt.omega)?;
                let st = states[j].as_ref().ok_or_else(|| {
                    Error::Domain(format!("frequency subdomain {j} has no trained NNSCM"))
                })?;
                let obj = pair_objective(&matrix.coefficients(pt)?);
                Ok(st.upper(&obj))
            }
        }
    }

    pub fn matrix(&self) -> &Arc<AffineMatrix> {
        match self {
            Self::Scm { matrix, .. } | Self::Nnscm { matrix, .. } | Self::Exact { matrix } => {
                matrix
            }
        }
    }

    /// Training gap history (empty for the oracle).
    pub fn gap_history(&self) -> Vec<f64> {
        match self {
            Self::Scm { state, .. } => state.gap_history.clone(),
            Self::Nnscm { states, .. } => states
                .iter()
                .flatten()
                .flat_map(|s| s.gap_history.clone())
                .collect(),
            Self::Exact { .. } => Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// serialization

const STABILITY_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SavedStability {
    version: u32,
    kind: String,
    fingerprint: (usize, usize, usize, u64),
    scm: Option<ScmState>,
    edges: Option<Vec<f64>>,
    nnscm: Option<Vec<Option<NnscmState>>>,
    sigma_max_terms: Option<Vec<f64>>,
}

impl StabilityModel {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let saved = match self {
            Self::Scm { matrix, state } => SavedStability {
                version: STABILITY_FORMAT_VERSION,
                kind: "scm".into(),
                fingerprint: matrix.fingerprint(),
                scm: Some(state.clone()),
                edges: None,
                nnscm: None,
                sigma_max_terms: None,
            },
            Self::Nnscm {
                matrix,
                edges,
                states,
                sigma_max_terms,
            } => SavedStability {
                version: STABILITY_FORMAT_VERSION,
                kind: "nnscm".into(),
                fingerprint: matrix.fingerprint(),
                scm: None,
                edges: Some(edges.clone()),
                nnscm: Some(states.clone()),
                sigma_max_terms: Some(sigma_max_terms.clone()),
            },
            Self::Exact { .. } => {
                return Err(Error::Serialization(
                    "the exact oracle backend is not serializable".into(),
                ))
            }
        };
        let bytes = bincode::serialize(&saved).map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path, matrix: Arc<AffineMatrix>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let saved: SavedStability =
            bincode::deserialize(&bytes).map_err(|e| Error::Serialization(e.to_string()))?;
        if saved.version != STABILITY_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported stability file version {}",
                saved.version
            )));
        }
        if saved.fingerprint != matrix.fingerprint() {
            return Err(Error::Serialization(
                "stability file does not match the model operator".into(),
            ));
        }
        match saved.kind.as_str() {
            "scm" => Ok(Self::Scm {
                matrix,
                state: saved
                    .scm
                    .ok_or_else(|| Error::Serialization("missing SCM payload".into()))?,
            }),
            "nnscm" => Ok(Self::Nnscm {
                matrix,
                edges: saved
                    .edges
                    .ok_or_else(|| Error::Serialization("missing edge list".into()))?,
                states: saved
                    .nnscm
                    .ok_or_else(|| Error::Serialization("missing NNSCM payload".into()))?,
                sigma_max_terms: saved
                    .sigma_max_terms
                    .ok_or_else(|| Error::Serialization("missing sigma_max data".into()))?,
            }),
            other => Err(Error::Serialization(format!(
                "unknown stability kind '{other}'"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::CoefficientFn;
    use crate::eig::dense_sigma_oracle;
    use crate::fom::make_heat_symmetric;
    use crate::param::{linspace, tensor_grid};

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// M(P) = (1 + p0) * M1 for a fixed well-conditioned M1.
    fn single_term_matrix() -> Arc<AffineMatrix> {
        let m1 = CscMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, c64(2.0, 1.0)),
                (1, 1, c64(-1.0, 3.0)),
                (2, 2, c64(0.5, -0.25)),
                (0, 2, c64(0.3, 0.0)),
            ],
        )
        .unwrap();
        Arc::new(
            AffineMatrix::new(vec![(
                CoefficientFn::new("1+p[0]", |pt: &ParameterPoint| 1.0 + pt.p[0]),
                m1,
            )])
            .unwrap(),
        )
    }

    fn heat_matrix(grid_n: usize) -> Arc<AffineMatrix> {
        Arc::new(make_heat_symmetric(grid_n).unwrap().m)
    }

    fn heat_grid(nf: usize, np: usize) -> ParameterGrid {
        tensor_grid(
            &crate::param::logspace(1e-2, 1e3, nf),
            &[linspace(0.1, 4.0, np), linspace(0.0, 2.0, np)],
        )
        .unwrap()
    }

    #[test]
    fn single_term_scm_is_exact() {
        let matrix = single_term_matrix();
        let grid = tensor_grid(&[0.0], &[linspace(0.0, 3.0, 7)]).unwrap();
        let model = scm_train(
            matrix.clone(),
            &grid,
            &ScmOptions {
                epsilon: 1e-12,
                m_alpha: 20,
            },
        )
        .unwrap();
        let StabilityModel::Scm { state, .. } = &model else {
            panic!()
        };
        // one exact solve certifies everything: J factorizes through theta^2
        assert_eq!(state.points.len(), 1);
        for pt in grid.points() {
            let lb = scm_lower(state, &matrix, pt).unwrap();
            let ub = scm_upper(state, &matrix, pt).unwrap();
            let truth = dense_sigma_oracle(&matrix.evaluate(pt).unwrap()).unwrap();
            assert!((lb - truth).abs() <= 1e-8 * truth, "{lb} vs {truth}");
            assert!((ub - truth).abs() <= 1e-8 * truth, "{ub} vs {truth}");
        }
    }

    #[test]
    fn scm_with_loose_epsilon_trains_nothing() {
        let matrix = single_term_matrix();
        let grid = tensor_grid(&[0.0], &[linspace(0.0, 3.0, 5)]).unwrap();
        let model = scm_train(
            matrix,
            &grid,
            &ScmOptions {
                epsilon: 1.0,
                m_alpha: 20,
            },
        )
        .unwrap();
        let StabilityModel::Scm { state, .. } = &model else {
            panic!()
        };
        assert!(state.points.is_empty());
    }

    #[test]
    fn empty_state_lower_is_box_minimum() {
        let matrix = single_term_matrix();
        let state = ScmState {
            m_alpha: 20,
            q: 1,
            points: vec![],
            sigmas: vec![],
            y_vectors: vec![],
            constraint_rows: vec![],
            eig_lo: vec![2.0],
            eig_hi: vec![5.0],
            gap_history: vec![],
        };
        let pt = ParameterPoint::new(0.0, vec![1.0]); // theta = 2, obj = 4
        let lb2 = state
            .lower_squared(&pt, &pair_objective(&matrix.coefficients(&pt).unwrap()))
            .unwrap();
        assert!((lb2 - 8.0).abs() < 1e-12); // 4 * box-lower 2
    }

    #[test]
    fn scm_sandwich_on_heat_model() {
        let matrix = heat_matrix(5); // n = 25, tiny
        let grid = heat_grid(5, 4);
        let model = scm_train(
            matrix.clone(),
            &grid,
            &ScmOptions {
                epsilon: 0.8,
                m_alpha: 20,
            },
        )
        .unwrap();
        let StabilityModel::Scm { state, .. } = &model else {
            panic!()
        };
        assert!(*state.gap_history.last().unwrap() <= 0.8);
        for pt in grid.points() {
            let truth = dense_sigma_oracle(&matrix.evaluate(pt).unwrap()).unwrap();
            let lb = model.query(pt).unwrap();
            let ub = model.upper(pt).unwrap();
            assert!(lb <= truth * (1.0 + 1e-8), "lb {lb} vs sigma {truth} at {pt}");
            assert!(ub >= truth * (1.0 - 1e-8), "ub {ub} vs sigma {truth} at {pt}");
        }
    }

    #[test]
    fn scm_monotone_with_all_constraints() {
        // adding a stored point never decreases the lower bound when every
        // constraint is kept
        let matrix = heat_matrix(4);
        let grid = heat_grid(4, 3);
        let model = scm_train(
            matrix.clone(),
            &grid,
            &ScmOptions {
                epsilon: 0.3,
                m_alpha: usize::MAX,
            },
        )
        .unwrap();
        let StabilityModel::Scm { state, .. } = &model else {
            panic!()
        };
        let probe = &grid.points()[grid.len() / 2];
        let obj = pair_objective(&matrix.coefficients(probe).unwrap());
        let mut partial = state.clone();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=state.points.len() {
            partial.points = state.points[..k].to_vec();
            partial.sigmas = state.sigmas[..k].to_vec();
            partial.y_vectors = state.y_vectors[..k].to_vec();
            partial.constraint_rows = state.constraint_rows[..k].to_vec();
            let lb = partial.lower_squared(probe, &obj).unwrap();
            assert!(lb >= prev - 1e-9 * lb.abs().max(1.0), "k={k}: {lb} < {prev}");
            prev = lb;
        }
    }

    #[test]
    fn beta_identity_at_anchor() {
        let matrix = heat_matrix(4);
        let anchor = ParameterPoint::new(3.0, vec![1.7, 0.4]);
        let (beta, z) = beta_exact(&matrix, &anchor, &anchor).unwrap();
        assert!((beta - 1.0).abs() <= 1e-10, "beta {beta}");
        // J_NN(anchor, z) == 1 for any quotient vector at the anchor
        let th = matrix.coefficients(&anchor).unwrap();
        assert!((dot(&th, &z) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn beta_scales_with_positive_multiple() {
        // M(P) = (1 + p0) M1: beta(P, Pbar) = (1 + p0) / (1 + p0bar)
        let matrix = single_term_matrix();
        let anchor = ParameterPoint::new(0.0, vec![0.0]);
        let pt = ParameterPoint::new(0.0, vec![1.0]);
        let (beta, _) = beta_exact(&matrix, &anchor, &pt).unwrap();
        assert!((beta - 2.0).abs() <= 1e-9, "beta {beta}");
    }

    #[test]
    fn beta_certifies_lower_bound() {
        let matrix = heat_matrix(4);
        let anchor = ParameterPoint::new(1.0, vec![2.0, 1.0]);
        let sbar = dense_sigma_oracle(&matrix.evaluate(&anchor).unwrap()).unwrap();
        for pt in [
            ParameterPoint::new(1.5, vec![2.0, 1.0]),
            ParameterPoint::new(0.5, vec![1.0, 0.5]),
            ParameterPoint::new(2.0, vec![3.0, 2.0]),
        ] {
            let (beta, _) = beta_exact(&matrix, &anchor, &pt).unwrap();
            let truth = dense_sigma_oracle(&matrix.evaluate(&pt).unwrap()).unwrap();
            assert!(
                beta * sbar <= truth * (1.0 + 1e-9),
                "{} * {} !<= {}",
                beta,
                sbar,
                truth
            );
        }
    }

    #[test]
    fn nnscm_single_point_grid() {
        let matrix = heat_matrix(4);
        let grid = tensor_grid(&[1.0], &[vec![1.0], vec![1.0]])
            .unwrap()
            .with_frequency_edges(vec![0.0, 10.0])
            .unwrap();
        let model = nnscm_train(matrix.clone(), &grid, &NnscmOptions::default()).unwrap();
        let pt = &grid.points()[0];
        let truth = dense_sigma_oracle(&matrix.evaluate(pt).unwrap()).unwrap();
        let lb = model.query(pt).unwrap();
        assert!((lb - truth).abs() <= 1e-8 * truth, "{lb} vs {truth}");
        let StabilityModel::Nnscm { states, .. } = &model else {
            panic!()
        };
        assert_eq!(states.iter().flatten().count(), 1);
        assert_eq!(states[0].as_ref().unwrap().anchors.len(), 1);
    }

    #[test]
    fn nnscm_sandwich_on_heat_model() {
        let matrix = heat_matrix(5);
        let edges = crate::param::log_frequency_partition(1e-1, 1e2, 3).unwrap();
        let freqs: Vec<f64> = edges
            .windows(2)
            .flat_map(|w| linspace(w[0], w[1], 3))
            .collect();
        let grid = tensor_grid(&freqs, &[linspace(0.1, 4.0, 3), linspace(0.0, 2.0, 3)])
            .unwrap()
            .with_frequency_edges(edges)
            .unwrap();
        let opts = NnscmOptions {
            epsilon: 0.8,
            epsilon_beta: 0.99,
            ..Default::default()
        };
        let model = nnscm_train(matrix.clone(), &grid, &opts).unwrap();
        for pt in grid.points() {
            let truth = dense_sigma_oracle(&matrix.evaluate(pt).unwrap()).unwrap();
            let lb = model.query(pt).unwrap();
            let ub = model.upper(pt).unwrap();
            assert!(lb >= 0.0);
            assert!(lb <= truth * (1.0 + 1e-8), "lb {lb} vs {truth} at {pt}");
            assert!(ub >= truth * (1.0 - 1e-8), "ub {ub} vs {truth} at {pt}");
            // trained to gap 0.8: certified points carry positive bounds
            let gap = if ub > 0.0 {
                (ub * ub - lb * lb) / (ub * ub)
            } else {
                0.0
            };
            assert!(gap <= 0.8 + 1e-9, "gap {gap} at {pt}");
        }
    }

    #[test]
    fn beta_bounds_bracket_exact_value() {
        let matrix = heat_matrix(4);
        let edges = vec![0.0, 10.0];
        let grid = tensor_grid(&linspace(0.5, 8.0, 4), &[linspace(0.5, 3.5, 3), vec![1.0]])
            .unwrap()
            .with_frequency_edges(edges)
            .unwrap();
        let model = nnscm_train(matrix.clone(), &grid, &NnscmOptions::default()).unwrap();
        let StabilityModel::Nnscm { states, .. } = &model else {
            panic!()
        };
        let st = states[0].as_ref().unwrap();
        let a = &st.anchors[0];
        for pt in grid.points() {
            let th = matrix.coefficients(pt).unwrap();
            let ub = a.beta_upper(&th);
            let lb = a.beta_lower(pt, &th, st.m_alpha).unwrap();
            let (truth, _) = beta_exact(&matrix, &a.anchor, pt).unwrap();
            assert!(lb <= truth + 1e-8 * truth.abs().max(1.0), "{lb} vs {truth}");
            assert!(ub >= truth - 1e-8 * truth.abs().max(1.0), "{ub} vs {truth}");
        }
    }

    #[test]
    fn query_is_never_negative() {
        let matrix = heat_matrix(4);
        let grid = heat_grid(4, 3);
        let model = scm_train(
            matrix,
            &grid,
            &ScmOptions {
                epsilon: 0.9,
                m_alpha: 5,
            },
        )
        .unwrap();
        for pt in grid.points() {
            assert!(model.query(pt).unwrap() >= 0.0);
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let matrix = heat_matrix(4);
        let grid = heat_grid(3, 3);
        let model = scm_train(
            matrix.clone(),
            &grid,
            &ScmOptions {
                epsilon: 0.8,
                m_alpha: 20,
            },
        )
        .unwrap();
        let dir = std::env::temp_dir().join("freqmor_stab_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("scm_model.bin");
        model.save(&path).unwrap();
        let loaded = StabilityModel::load(&path, matrix.clone()).unwrap();
        for pt in grid.points().iter().take(10) {
            assert_eq!(model.query(pt).unwrap(), loaded.query(pt).unwrap());
        }
        // fingerprint mismatch is rejected
        let other = heat_matrix(5);
        assert!(StabilityModel::load(&path, other).is_err());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn stored_betas_match_rayleigh_identity() {
        // J_NN evaluated at a sample's own theta and z reproduces beta
        let matrix = heat_matrix(4);
        let edges = vec![0.0, 20.0];
        let grid = tensor_grid(&linspace(1.0, 15.0, 5), &[linspace(0.2, 3.0, 3), vec![0.5]])
            .unwrap()
            .with_frequency_edges(edges)
            .unwrap();
        let model = nnscm_train(matrix.clone(), &grid, &NnscmOptions::default()).unwrap();
        let StabilityModel::Nnscm { states, .. } = &model else {
            panic!()
        };
        for st in states.iter().flatten() {
            for a in &st.anchors {
                for ((pt, beta), z) in a.samples.iter().zip(&a.betas).zip(&a.z_vectors) {
                    let th = matrix.coefficients(pt).unwrap();
                    let rayleigh = dot(&th, z);
                    assert!(
                        (rayleigh - beta).abs() <= 1e-8 * beta.abs().max(1.0),
                        "{rayleigh} vs {beta}"
                    );
                }
            }
        }
    }
}
