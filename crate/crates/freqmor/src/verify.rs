//! Reduced-model verification: Bode-error grids, a discrete H-infinity
//! surrogate, Crank-Nicolson time stepping of full and reduced systems, and
//! the output-error bound linking the frequency-domain estimator to
//! time-domain error.

use crate::dense::DirectSolver;
use crate::error::{Error, Result};
use crate::fom::ParametricLti;
use crate::greedy::ReducedBasis;
use crate::param::{ParameterGrid, ParameterPoint};
use crate::realify::ReducedLti;
use crate::sparse::CscMatrix;
use crate::stability::StabilityModel;
use num_complex::Complex64;
use rayon::prelude::*;
use std::sync::Arc;

pub use crate::eig::dense_sigma_oracle;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Either flavor of reduced model, for transfer-function comparisons.
pub enum Rom<'a> {
    Complex(&'a ReducedBasis),
    Real(&'a ReducedLti),
}

impl Rom<'_> {
    pub fn transfer(&self, pt: &ParameterPoint) -> Result<Complex64> {
        match self {
            Rom::Complex(rb) => {
                let w = rb.reduced_solve(pt)?;
                rb.reduced_transfer(pt, &w)
            }
            Rom::Real(rom) => rom.transfer(pt),
        }
    }
}

/// Transfer values of full and reduced model over a grid with elementwise
/// relative errors. Where `|H| = 0` the error is stored as an absolute value
/// and flagged.
pub struct BodeGrid {
    pub grid: ParameterGrid,
    pub h_full: Vec<Complex64>,
    pub h_reduced: Vec<Complex64>,
    pub rel_err: Vec<f64>,
    pub absolute_flag: Vec<bool>,
}

impl BodeGrid {
    pub fn max_rel_err(&self) -> f64 {
        self.rel_err.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn bode_error(model: &ParametricLti, rom: &Rom<'_>, grid: &ParameterGrid) -> Result<BodeGrid> {
    let pairs: Vec<(Complex64, Complex64)> = grid
        .points()
        .par_iter()
        .map(|pt| {
            let h = model.solve_frequency(pt)?.h;
            let hr = rom.transfer(pt)?;
            Ok((h, hr))
        })
        .collect::<Result<_>>()?;
    let mut h_full = Vec::with_capacity(pairs.len());
    let mut h_reduced = Vec::with_capacity(pairs.len());
    let mut rel_err = Vec::with_capacity(pairs.len());
    let mut absolute_flag = Vec::with_capacity(pairs.len());
    for (h, hr) in pairs {
        let diff = (h - hr).norm();
        if h.norm() > 0.0 {
            rel_err.push(diff / h.norm());
            absolute_flag.push(false);
        } else {
            rel_err.push(diff);
            absolute_flag.push(true);
        }
        h_full.push(h);
        h_reduced.push(hr);
    }
    Ok(BodeGrid {
        grid: grid.clone(),
        h_full,
        h_reduced,
        rel_err,
        absolute_flag,
    })
}

/// Discrete surrogate of the H-infinity error: max over the frequency grid
/// of `|H - H~|` at fixed model parameters.
pub fn hinf_error_estimate(
    model: &ParametricLti,
    rom: &Rom<'_>,
    p: &[f64],
    omega_grid: &[f64],
) -> Result<f64> {
    let vals: Vec<f64> = omega_grid
        .par_iter()
        .map(|&w| {
            let pt = ParameterPoint::new(w, p.to_vec());
            let h = model.solve_frequency(&pt)?.h;
            let hr = rom.transfer(&pt)?;
            Ok((h - hr).norm())
        })
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// time stepping

/// Real LTI system in simulation form.
pub struct LtiSystem {
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl LtiSystem {
    /// Full-order system at fixed parameters (requires real data).
    pub fn from_full(model: &ParametricLti, pt: &ParameterPoint) -> Result<Self> {
        if !model.a.is_real() || !model.b.is_real() || !model.c.is_real() {
            return Err(Error::Invalid(
                "time simulation requires a real full-order system".into(),
            ));
        }
        let a = model.a.evaluate(pt)?;
        let b = model.b.evaluate(pt)?.iter().map(|z| z.re).collect();
        let c = model.c.evaluate(pt)?.iter().map(|z| z.re).collect();
        Ok(Self { a, b, c })
    }

    /// Reduced system at fixed parameters.
    pub fn from_reduced(rom: &ReducedLti, pt: &ParameterPoint) -> Result<Self> {
        let a_dense = rom.evaluate_a(pt)?;
        let r = a_dense.nrows();
        let mut trips = Vec::new();
        for ((i, j), v) in a_dense.indexed_iter() {
            if *v != 0.0 {
                trips.push((i, j, Complex64::new(*v, 0.0)));
            }
        }
        Ok(Self {
            a: CscMatrix::from_triplets(r, r, &trips)?,
            b: rom.evaluate_b(pt)?.to_vec(),
            c: rom.evaluate_c(pt)?.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Euclidean norm of the output row.
    pub fn output_norm(&self) -> f64 {
        self.c.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Output trajectory of a time simulation on a uniform grid.
pub struct SimResult {
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub scheme: String,
    pub dt: f64,
}

/// Crank-Nicolson integration of `x' = A x + b u(t)`, `y = c^T x`, from
/// `x(0) = 0`; second-order accurate and A-stable.
pub fn simulate(
    sys: &LtiSystem,
    u: &dyn Fn(f64) -> f64,
    t_end: f64,
    dt: f64,
) -> Result<SimResult> {
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(Error::Invalid("need positive dt and t_end".into()));
    }
    let n = sys.dim();
    let steps = (t_end / dt).ceil() as usize;
    // assemble I -/+ dt/2 A
    let half = 0.5 * dt;
    let mut lhs_trips: Vec<(usize, usize, Complex64)> = Vec::with_capacity(sys.a.nnz() + n);
    let mut rhs_trips: Vec<(usize, usize, Complex64)> = Vec::with_capacity(sys.a.nnz() + n);
    for (i, j, v) in sys.a.iter() {
        lhs_trips.push((i, j, -v * half));
        rhs_trips.push((i, j, v * half));
    }
    for i in 0..n {
        lhs_trips.push((i, i, Complex64::new(1.0, 0.0)));
        rhs_trips.push((i, i, Complex64::new(1.0, 0.0)));
    }
    let lhs = CscMatrix::from_triplets(n, n, &lhs_trips)?;
    let rhs = CscMatrix::from_triplets(n, n, &rhs_trips)?;
    let lu = DirectSolver::factor(&lhs)?;

    let mut x = vec![ZERO; n];
    let mut times = Vec::with_capacity(steps + 1);
    let mut y = Vec::with_capacity(steps + 1);
    let out = |x: &[Complex64]| -> f64 {
        sys.c.iter().zip(x).map(|(ci, xi)| ci * xi.re).sum()
    };
    times.push(0.0);
    y.push(out(&x));
    let mut work = vec![ZERO; n];
    for k in 0..steps {
        let t0 = k as f64 * dt;
        let t1 = t0 + dt;
        rhs.matvec(&x, &mut work);
        let force = half * (u(t0) + u(t1));
        for (wi, bi) in work.iter_mut().zip(&sys.b) {
            *wi += Complex64::new(force * bi, 0.0);
        }
        lu.solve(&mut work);
        x.copy_from_slice(&work);
        times.push(t1);
        y.push(out(&x));
    }
    Ok(SimResult {
        times,
        y,
        scheme: "crank-nicolson".into(),
        dt,
    })
}

/// Trapezoid-rule `L^2(0, T)` norm of uniformly sampled values.
pub fn l2_norm(times: &[f64], values: &[f64]) -> f64 {
    assert_eq!(times.len(), values.len());
    if times.len() < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        acc += 0.5 * dt * (values[k] * values[k] + values[k + 1] * values[k + 1]);
    }
    acc.sqrt()
}

// ---------------------------------------------------------------------------
// output-error bound

/// Both sides of the output-error bound, with the estimator evaluated for
/// the greedy complex basis and for the realified basis actually simulated.
pub struct BoundReport {
    /// `||y - y~||_{L2(0,T)}` between full and realified reduced output.
    pub lhs: f64,
    pub epsilon_greedy: f64,
    pub epsilon_real_basis: f64,
    pub rhs_greedy: f64,
    pub rhs_real_basis: f64,
    pub u_norm: f64,
    pub c_norm: f64,
}

/// Simulates the full model against the realified reduced model and compares
/// the output error to `eps * ||c(p)|| * ||u||` for both estimator readings.
#[allow(clippy::too_many_arguments)]
pub fn check_output_bound(
    model: &Arc<ParametricLti>,
    rom: &ReducedLti,
    rb: &ReducedBasis,
    stability: &StabilityModel,
    grid: &ParameterGrid,
    p: &[f64],
    u: &dyn Fn(f64) -> f64,
    t_end: f64,
    dt: f64,
) -> Result<BoundReport> {
    // estimator maxima over the certification grid
    let sigma = crate::greedy::stability_cache(stability, grid)?;
    let eps_greedy = crate::greedy::estimator_sweep(rb, grid, &sigma)?
        .into_iter()
        .fold(0.0f64, f64::max);
    let real_cols: Vec<Vec<Complex64>> = (0..rom.basis.r)
        .map(|j| {
            (0..rom.basis.n())
                .map(|i| Complex64::new(rom.basis.phi[(i, j)], 0.0))
                .collect()
        })
        .collect();
    let rb_real = ReducedBasis::from_columns(model.clone(), &real_cols)?;
    let eps_real = crate::greedy::estimator_sweep(&rb_real, grid, &sigma)?
        .into_iter()
        .fold(0.0f64, f64::max);

    let pt = ParameterPoint::new(0.0, p.to_vec());
    let full = LtiSystem::from_full(model, &pt)?;
    let red = LtiSystem::from_reduced(rom, &pt)?;
    let sim_full = simulate(&full, u, t_end, dt)?;
    let sim_red = simulate(&red, u, t_end, dt)?;
    let diff: Vec<f64> = sim_full
        .y
        .iter()
        .zip(&sim_red.y)
        .map(|(a, b)| a - b)
        .collect();
    let lhs = l2_norm(&sim_full.times, &diff);
    let u_samples: Vec<f64> = sim_full.times.iter().map(|&t| u(t)).collect();
    let u_norm = l2_norm(&sim_full.times, &u_samples);
    let c_norm = full.output_norm();

    Ok(BoundReport {
        lhs,
        epsilon_greedy: eps_greedy,
        epsilon_real_basis: eps_real,
        rhs_greedy: eps_greedy * c_norm * u_norm,
        rhs_real_basis: eps_real * c_norm * u_norm,
        u_norm,
        c_norm,
    })
}
