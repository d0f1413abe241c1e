//! Parameter points, grids, and frequency-subdomain partitions.
//!
//! A point bundles the frequency `omega` (the complex frequency is `s = i*omega`,
//! only the imaginary axis is supported) with the model parameter vector `p`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// One sample `(omega, p)` of the concatenated parameter domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub omega: f64,
    pub p: Vec<f64>,
}

impl ParameterPoint {
    pub fn new(omega: f64, p: Vec<f64>) -> Self {
        Self { omega, p }
    }

    /// Total coordinate dimension (frequency plus model parameters).
    pub fn dim(&self) -> usize {
        1 + self.p.len()
    }

    /// Concatenated coordinates, frequency first.
    pub fn coords(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.dim());
        c.push(self.omega);
        c.extend_from_slice(&self.p);
        c
    }

    /// Squared Euclidean distance in raw `(omega, p)` coordinates.
    pub fn distance2(&self, other: &Self) -> f64 {
        let mut d = (self.omega - other.omega).powi(2);
        for (a, b) in self.p.iter().zip(&other.p) {
            d += (a - b).powi(2);
        }
        d
    }

    pub fn is_finite(&self) -> bool {
        self.omega.is_finite() && self.p.iter().all(|v| v.is_finite())
    }
}

impl fmt::Display for ParameterPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(omega={:.6e}, p=[", self.omega)?;
        for (i, v) in self.p.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.6e}")?;
        }
        write!(f, "])")
    }
}

fn bits_key(point: &ParameterPoint) -> Vec<u64> {
    let mut k = Vec::with_capacity(point.dim());
    k.push(point.omega.to_bits());
    k.extend(point.p.iter().map(|v| v.to_bits()));
    k
}

/// Finite list of parameter points with an optional frequency partition
/// `{omega_0, ..., omega_M}` splitting the frequency range into subdomains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterGrid {
    points: Vec<ParameterPoint>,
    frequency_edges: Option<Vec<f64>>,
}

impl ParameterGrid {
    /// Builds a grid from a point list; duplicate points are dropped silently
    /// (first occurrence wins, order otherwise preserved).
    pub fn new(points: Vec<ParameterPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("parameter grid is empty".into()));
        }
        let dim = points[0].dim();
        let mut seen = std::collections::HashSet::new();
        let mut unique = Vec::with_capacity(points.len());
        for pt in points {
            if pt.dim() != dim {
                return Err(Error::Dimension(
                    "grid points have inconsistent dimension".into(),
                ));
            }
            if !pt.is_finite() {
                return Err(Error::Invalid(format!("non-finite grid point {pt}")));
            }
            if seen.insert(bits_key(&pt)) {
                unique.push(pt);
            }
        }
        Ok(Self {
            points: unique,
            frequency_edges: None,
        })
    }

    /// Attaches a frequency partition. Edges must be strictly increasing and
    /// cover every point's frequency.
    pub fn with_frequency_edges(mut self, edges: Vec<f64>) -> Result<Self> {
        validate_edges(&edges)?;
        let lo = edges[0];
        let hi = *edges.last().unwrap();
        for pt in &self.points {
            if pt.omega < lo || pt.omega > hi {
                return Err(Error::Domain(format!(
                    "grid point {pt} outside frequency range [{lo}, {hi}]"
                )));
            }
        }
        self.frequency_edges = Some(edges);
        Ok(self)
    }

    pub fn points(&self) -> &[ParameterPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn frequency_edges(&self) -> Option<&[f64]> {
        self.frequency_edges.as_deref()
    }

    /// Number of frequency subdomains, if a partition is attached.
    pub fn subdomain_count(&self) -> Option<usize> {
        self.frequency_edges.as_ref().map(|e| e.len() - 1)
    }

    /// Index `j` of the subdomain `[omega_j, omega_{j+1})` containing `omega`.
    /// The final edge is treated as inclusive so the upper endpoint stays in
    /// the last subdomain.
    pub fn subdomain_index(&self, omega: f64) -> Result<usize> {
        let edges = self
            .frequency_edges
            .as_ref()
            .ok_or_else(|| Error::Invalid("grid has no frequency partition".into()))?;
        subdomain_index(edges, omega)
    }
}

/// Subdomain lookup against an explicit edge list.
pub fn subdomain_index(edges: &[f64], omega: f64) -> Result<usize> {
    let m = edges.len() - 1;
    if omega < edges[0] || omega > edges[m] {
        return Err(Error::Domain(format!(
            "frequency {omega} outside partition [{}, {}]",
            edges[0], edges[m]
        )));
    }
    if omega == edges[m] {
        return Ok(m - 1);
    }
    // edges sorted; binary search for the half-open interval
    match edges.binary_search_by(|e| e.partial_cmp(&omega).unwrap()) {
        Ok(j) => Ok(j.min(m - 1)),
        Err(j) => Ok(j - 1),
    }
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::Invalid("frequency partition needs >= 2 edges".into()));
    }
    for w in edges.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Invalid(format!(
                "frequency edges not strictly increasing: {} !< {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// `{0, omega_lo, ..., omega_hi}` with `m - 1` interior edges logarithmically
/// spaced between `omega_lo` and `omega_hi` inclusive; `m + 1` edges total.
pub fn log_frequency_partition(omega_lo: f64, omega_hi: f64, m: usize) -> Result<Vec<f64>> {
    if !(omega_lo > 0.0) || !(omega_lo < omega_hi) {
        return Err(Error::Invalid(format!(
            "need 0 < omega_lo < omega_hi, got ({omega_lo}, {omega_hi})"
        )));
    }
    if m < 2 {
        return Err(Error::Invalid(format!("need m >= 2 subdomains, got {m}")));
    }
    let mut edges = Vec::with_capacity(m + 1);
    edges.push(0.0);
    edges.extend(logspace(omega_lo, omega_hi, m));
    validate_edges(&edges)?;
    Ok(edges)
}

/// `n` linearly spaced values on `[a, b]`, endpoints inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// `n` logarithmically spaced values on `[a, b]`, endpoints inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    let mut v: Vec<f64> = (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect();
    // pin endpoints exactly
    v[0] = a;
    v[n - 1] = b;
    v
}

/// Cartesian product of a frequency axis with model-parameter axes,
/// frequency slowest-varying. Duplicates are dropped silently.
pub fn tensor_grid(freq_values: &[f64], param_axes: &[Vec<f64>]) -> Result<ParameterGrid> {
    if freq_values.is_empty() || param_axes.iter().any(|a| a.is_empty()) {
        return Err(Error::Invalid("tensor grid axis is empty".into()));
    }
    let dims: Vec<usize> = param_axes.iter().map(|a| a.len()).collect();
    let npar: usize = dims.iter().product();
    let mut points = Vec::with_capacity(freq_values.len() * npar);
    for &w in freq_values {
        for lin in 0..npar {
            let mut rem = lin;
            let mut p = vec![0.0; dims.len()];
            for k in (0..dims.len()).rev() {
                p[k] = param_axes[k][rem % dims[k]];
                rem /= dims[k];
            }
            points.push(ParameterPoint::new(w, p));
        }
    }
    ParameterGrid::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_matches_decade_list() {
        let edges = log_frequency_partition(1e-2, 1e3, 6).unwrap();
        let expected = [0.0, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];
        assert_eq!(edges.len(), expected.len());
        for (e, x) in edges.iter().zip(expected) {
            assert!((e - x).abs() <= 1e-12 * x.max(1.0), "{e} vs {x}");
        }
    }

    #[test]
    fn partition_small_case() {
        let edges = log_frequency_partition(1.0, 100.0, 3).unwrap();
        assert_eq!(edges.len(), 4);
        assert_eq!(edges[0], 0.0);
        assert!((edges[1] - 1.0).abs() < 1e-14);
        assert!((edges[2] - 10.0).abs() < 1e-12);
        assert!((edges[3] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn partition_strictly_increasing() {
        for &(lo, hi, m) in &[(1e-3, 1e4, 9), (0.5, 2.0, 2), (1e-2, 1e3, 19)] {
            let edges = log_frequency_partition(lo, hi, m).unwrap();
            assert_eq!(edges.len(), m + 1);
            for w in edges.windows(2) {
                assert!(w[0] < w[1]);
            }
        }
        assert!(log_frequency_partition(1.0, 0.5, 3).is_err());
        assert!(log_frequency_partition(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn tensor_grid_counts() {
        let freqs = logspace(1e-2, 1e3, 50);
        let p1 = linspace(0.1, 4.0, 20);
        let p2 = linspace(0.0, 2.0, 20);
        let grid = tensor_grid(&freqs, &[p1, p2]).unwrap();
        assert_eq!(grid.len(), 20_000);

        let single = tensor_grid(&[1.0], &[vec![2.0]]).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.points()[0], ParameterPoint::new(1.0, vec![2.0]));

        let freqs5 = linspace(0.0, 1.0, 5);
        let ax = linspace(-20.0, 20.0, 9);
        let g = tensor_grid(&freqs5, &[ax.clone(), ax.clone(), ax]).unwrap();
        assert_eq!(g.len(), 3645);
    }

    #[test]
    fn tensor_grid_dedupes_silently() {
        let g = tensor_grid(&[1.0, 1.0], &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn subdomains_cover_each_point_once() {
        let edges = log_frequency_partition(1e-2, 1e3, 6).unwrap();
        let freqs = logspace(1e-2, 1e3, 37);
        let grid = tensor_grid(&freqs, &[vec![0.0]])
            .unwrap()
            .with_frequency_edges(edges.clone())
            .unwrap();
        for pt in grid.points() {
            let j = grid.subdomain_index(pt.omega).unwrap();
            assert!(j < edges.len() - 1);
            assert!(edges[j] <= pt.omega);
            if pt.omega < *edges.last().unwrap() {
                assert!(pt.omega < edges[j + 1]);
            } else {
                assert_eq!(j, edges.len() - 2);
            }
        }
        assert!(grid.subdomain_index(2e3).is_err());
        assert!(grid.subdomain_index(-1.0).is_err());
    }

    #[test]
    fn grid_ordering_is_frequency_major() {
        let g = tensor_grid(&[1.0, 2.0], &[vec![10.0, 20.0]]).unwrap();
        let pts = g.points();
        assert_eq!(pts[0], ParameterPoint::new(1.0, vec![10.0]));
        assert_eq!(pts[1], ParameterPoint::new(1.0, vec![20.0]));
        assert_eq!(pts[2], ParameterPoint::new(2.0, vec![10.0]));
        assert_eq!(pts[3], ParameterPoint::new(2.0, vec![20.0]));
    }
}
