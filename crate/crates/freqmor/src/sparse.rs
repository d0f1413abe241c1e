//! Compressed-column complex sparse matrices.
//!
//! Kept deliberately small: construction from triplets, matrix-vector
//! products (plain and conjugate-transposed), dense conversion, and a
//! precomputed union pattern for fast affine summation.

use crate::error::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;

/// Complex sparse matrix in compressed-column storage.
#[derive(Debug, Clone)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl CscMatrix {
    /// Builds from (row, col, value) triplets; duplicate entries are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, Complex64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Dimension(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
        }
        let mut per_col: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); ncols];
        for &(r, c, v) in triplets {
            per_col[c].push((r, v));
        }
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        for col in per_col.iter_mut() {
            col.sort_by_key(|&(r, _)| r);
            let mut i = 0;
            while i < col.len() {
                let r = col[i].0;
                let mut v = col[i].1;
                let mut j = i + 1;
                while j < col.len() && col[j].0 == r {
                    v += col[j].1;
                    j += 1;
                }
                row_idx.push(r);
                values.push(v);
                i = j;
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    /// Identity scaled by a complex factor.
    pub fn scaled_identity(n: usize, z: Complex64) -> Self {
        let mut m = Self::identity(n);
        for v in &mut m.values {
            *v = z;
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// True if every stored value has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn scale(&mut self, z: Complex64) {
        for v in &mut self.values {
            *v *= z;
        }
    }

    /// Iterates stored entries as (row, col, value).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.ncols).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1])
                .map(move |k| (self.row_idx[k], c, self.values[k]))
        })
    }

    /// y = A x
    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        y.fill(Complex64::new(0.0, 0.0));
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * xc;
            }
        }
    }

    /// y = A^H x (conjugate transpose)
    pub fn matvec_conj_transpose(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        for c in 0..self.ncols {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc += self.values[k].conj() * x[self.row_idx[k]];
            }
            y[c] = acc;
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> Array2<Complex64> {
        let mut d = Array2::zeros((self.nrows, self.ncols));
        for (r, c, v) in self.iter() {
            d[(r, c)] += v;
        }
        d
    }

    /// Lower and upper bandwidths of the stored pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0usize;
        let mut ku = 0usize;
        for (r, c, _) in self.iter() {
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
        (kl, ku)
    }

    /// Connected components of the symmetrized sparsity pattern, as a map
    /// from index to component label plus the member lists.
    pub fn pattern_components(&self) -> Vec<Vec<usize>> {
        assert!(self.is_square());
        let n = self.nrows;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for (r, c, v) in self.iter() {
            if v != Complex64::new(0.0, 0.0) && r != c {
                let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let mut groups: std::collections::HashMap<usize, Vec<usize>> =
            std::collections::HashMap::new();
        for i in 0..n {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(i);
        }
        let mut comps: Vec<Vec<usize>> = groups.into_values().collect();
        comps.sort_by_key(|c| c[0]);
        comps
    }
}

/// Union sparsity pattern over a family of equally shaped matrices, with a
/// per-term scatter map from term entries into union slots. Built once,
/// evaluated many times.
#[derive(Debug, Clone)]
pub struct UnionPattern {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    maps: Vec<Vec<usize>>,
}

impl UnionPattern {
    pub fn build(terms: &[&CscMatrix]) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Invalid("union pattern over no terms".into()));
        }
        let (nrows, ncols) = (terms[0].nrows, terms[0].ncols);
        for t in terms {
            if t.nrows != nrows || t.ncols != ncols {
                return Err(Error::Dimension("affine terms differ in shape".into()));
            }
        }
        // union of patterns, column by column
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); ncols];
        for t in terms {
            for c in 0..ncols {
                col_rows[c].extend(&t.row_idx[t.col_ptr[c]..t.col_ptr[c + 1]]);
            }
        }
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for rows in col_rows.iter_mut() {
            rows.sort_unstable();
            rows.dedup();
            row_idx.extend_from_slice(rows);
            col_ptr.push(row_idx.len());
        }
        // scatter maps
        let mut maps = Vec::with_capacity(terms.len());
        for t in terms {
            let mut map = Vec::with_capacity(t.nnz());
            for c in 0..ncols {
                let urows = &row_idx[col_ptr[c]..col_ptr[c + 1]];
                for k in t.col_ptr[c]..t.col_ptr[c + 1] {
                    let r = t.row_idx[k];
                    let off = urows.binary_search(&r).expect("row in union");
                    map.push(col_ptr[c] + off);
                }
            }
            maps.push(map);
        }
        Ok(Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            maps,
        })
    }

    /// Evaluates `sum_k coeff[k] * terms[k]` onto the union pattern.
    pub fn combine(&self, coeffs: &[f64], terms: &[&CscMatrix]) -> CscMatrix {
        assert_eq!(coeffs.len(), terms.len());
        assert_eq!(self.maps.len(), terms.len());
        let mut values = vec![Complex64::new(0.0, 0.0); self.row_idx.len()];
        for ((&th, t), map) in coeffs.iter().zip(terms).zip(&self.maps) {
            if th == 0.0 {
                continue;
            }
            for (k, &slot) in map.iter().enumerate() {
                values[slot] += t.values[k] * th;
            }
        }
        CscMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            col_ptr: self.col_ptr.clone(),
            row_idx: self.row_idx.clone(),
            values,
        }
    }
}
