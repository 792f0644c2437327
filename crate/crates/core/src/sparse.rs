//! Compressed sparse row storage and a sparse LU solve for real systems.

use std::ops::{AddAssign, Mul};

use num_complex::Complex64;
use rsparse::data::Sprs;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinSolveError {
    #[error("matrix is singular (pivot {pivot} of {n})")]
    Singular { pivot: usize, n: usize },
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<T>,
}

impl<T> CsrMatrix<T>
where
    T: Copy + Default + AddAssign + PartialEq,
{
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![T::default(); triplets.len()];
        for &(r, c, v) in triplets {
            let p = next[r];
            cols[p] = c;
            vals[p] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for r in 0..nrows {
            let mut row: Vec<(usize, T)> = (counts[r]..counts[r + 1]).map(|p| (cols[p], vals[p])).collect();
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                match indices.last() {
                    Some(&last) if last == c && indices.len() > indptr[r] => {
                        *data.last_mut().expect("entry exists") += v;
                    }
                    _ => {
                        indices.push(c);
                        data.push(v);
                    }
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows, ncols, indptr, indices, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |p| (self.indices[p], self.data[p]))
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match span.binary_search(&c) {
            Ok(k) => self.data[self.indptr[r] + k],
            Err(_) => T::default(),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::default(); self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            out[r][c] = v;
        }
        out
    }

    pub fn mul_vec<U>(&self, x: &[U]) -> Vec<U>
    where
        T: Mul<U, Output = U>,
        U: Copy + Default + AddAssign,
    {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                let mut acc = U::default();
                for (c, v) in self.row(r) {
                    acc += v * x[c];
                }
                acc
            })
            .collect()
    }
}

pub type ComplexCsr = CsrMatrix<Complex64>;
pub type RealCsr = CsrMatrix<f64>;

/// LU factors of a real sparse matrix (fill-reducing column order, partial pivoting).
pub struct SparseLu {
    n: usize,
    l: Sprs<f64>,
    u: Sprs<f64>,
    pinv: Vec<isize>,
    q: Option<Vec<isize>>,
}

impl SparseLu {
    pub fn factor(a: &RealCsr) -> Result<Self, LinSolveError> {
        Self::factor_with_threshold(a, 1e-14)
    }

    /// Factors, rejecting pivots below `rel` times the largest entry.
    pub fn factor_with_threshold(a: &RealCsr, rel: f64) -> Result<Self, LinSolveError> {
        if a.nrows != a.ncols {
            return Err(LinSolveError::NotSquare(a.nrows, a.ncols));
        }
        let n = a.nrows;
        let csc = to_csc(a);
        let mut symbolic = rsparse::sqr(&csc, 1, false);
        let num = rsparse::lu(&csc, &mut symbolic, 1.0).map_err(|_| LinSolveError::Singular { pivot: 0, n })?;
        let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        // U is column compressed with the diagonal last in each column
        for k in 0..n {
            let end = num.u.p[k + 1] as usize;
            let diag = if end > 0 { num.u.x[end - 1] } else { 0.0 };
            if !(diag.abs() > rel * scale) {
                return Err(LinSolveError::Singular { pivot: k, n });
            }
        }
        Ok(SparseLu { n, l: num.l, u: num.u, pinv: num.pinv.expect("lu sets pivots"), q: symbolic.q })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut x = vec![0.0; self.n];
        for k in 0..self.n {
            x[self.pinv[k] as usize] = b[k];
        }
        rsparse::lsolve(&self.l, &mut x);
        rsparse::usolve(&self.u, &mut x);
        match &self.q {
            Some(q) => {
                for k in 0..self.n {
                    b[q[k] as usize] = x[k];
                }
            }
            None => b.copy_from_slice(&x),
        }
    }
}

fn to_csc(a: &RealCsr) -> Sprs<f64> {
    let mut counts = vec![0isize; a.ncols + 1];
    for &c in &a.indices {
        counts[c + 1] += 1;
    }
    for j in 0..a.ncols {
        counts[j + 1] += counts[j];
    }
    let nnz = a.nnz();
    let mut next = counts.clone();
    let mut rows = vec![0usize; nnz];
    let mut vals = vec![0.0; nnz];
    for r in 0..a.nrows {
        for p in a.indptr[r]..a.indptr[r + 1] {
            let c = a.indices[p];
            let dst = next[c] as usize;
            rows[dst] = r;
            vals[dst] = a.data[p];
            next[c] += 1;
        }
    }
    Sprs { nzmax: nnz, m: a.nrows, n: a.ncols, p: counts, i: rows, x: vals }
}
