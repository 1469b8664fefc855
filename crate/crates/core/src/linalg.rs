//! Sparse and banded linear algebra used by every solver in the crate.
//!
//! Two back ends are provided:
//!
//! * [`CsrMatrix`] with a Jacobi-preconditioned conjugate gradient ([`pcg`]) for
//!   symmetric positive (semi)definite systems such as the periodic cell
//!   problems and Poisson solves. Reductions are sequential, so results do not
//!   depend on thread scheduling.
//! * [`BandedLu`], a partial-pivoting LU factorization in band storage, for the
//!   nonsymmetric drift-diffusion and Newton systems on structured grids.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix of order `n` from `(row, col, value)` triplets.
    /// Duplicate entries are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut raw = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            raw[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..n {
            let row = &mut raw[counts[r]..counts[r + 1]];
            row.sort_by_key(|e| e.0);
            let start = cols.len();
            for &(c, v) in row.iter() {
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).find(|&(c, _)| c == i).map_or(0.0, |e| e.1))
            .collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// Half bandwidths `(lower, upper)` of the sparsity pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (c, _) in self.row(i) {
                if c < i {
                    kl = kl.max(i - c);
                } else {
                    ku = ku.max(c - i);
                }
            }
        }
        (kl, ku)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Null-space description for a positive semidefinite operator whose kernel is
/// spanned by the indicator vectors of disjoint index groups.
#[derive(Debug, Clone, Default)]
pub struct ConstantKernel {
    /// Group label per unknown; `None` marks unknowns outside every kernel vector.
    pub label: Vec<Option<usize>>,
    pub groups: usize,
}

impl ConstantKernel {
    /// Removes the per-group mean from `v`.
    pub fn project(&self, v: &mut [f64]) {
        if self.groups == 0 {
            return;
        }
        let mut sum = vec![0.0; self.groups];
        let mut cnt = vec![0usize; self.groups];
        for (x, l) in v.iter().zip(&self.label) {
            if let Some(g) = *l {
                sum[g] += *x;
                cnt[g] += 1;
            }
        }
        for (x, l) in v.iter_mut().zip(&self.label) {
            if let Some(g) = *l {
                *x -= sum[g] / cnt[g] as f64;
            }
        }
    }

    /// Largest absolute group mean of `v`.
    pub fn max_mean(&self, v: &[f64]) -> f64 {
        let mut sum = vec![0.0; self.groups];
        let mut cnt = vec![0usize; self.groups];
        for (x, l) in v.iter().zip(&self.label) {
            if let Some(g) = *l {
                sum[g] += *x;
                cnt[g] += 1;
            }
        }
        sum.iter()
            .zip(&cnt)
            .map(|(s, &c)| (s / c.max(1) as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient for `A x = b`.
///
/// `x` holds the initial guess on entry. When `kernel` is given, the residual
/// and iterate are kept orthogonal to it, which makes consistent singular
/// systems (pure Neumann, periodic) solvable.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    kernel: Option<&ConstantKernel>,
) -> Result<SolveStats> {
    let n = a.order();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();

    let mut r = a.matvec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if let Some(k) = kernel {
        k.project(&mut r);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    if let Some(k) = kernel {
        k.project(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm2(&r) / bnorm;
    if res <= tol {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: res,
        });
    }
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Singular(format!(
                "non-positive curvature {pap:e} in conjugate gradient"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if let Some(k) = kernel {
            k.project(&mut r);
        }
        res = norm2(&r) / bnorm;
        if res <= tol {
            // Confirm against the true residual to guard against drift.
            let mut tr = a.matvec(x);
            for i in 0..n {
                tr[i] = b[i] - tr[i];
            }
            if let Some(k) = kernel {
                k.project(&mut tr);
            }
            let true_res = norm2(&tr) / bnorm;
            if true_res <= tol * 10.0 {
                return Ok(SolveStats {
                    iterations: it,
                    relative_residual: true_res,
                });
            }
            r = tr;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        if let Some(k) = kernel {
            k.project(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        solver: "conjugate gradient",
        iterations: max_iter,
        residual: res,
    })
}

/// LU factorization with partial pivoting of a banded matrix.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        // column offset relative to i - kl
        i * self.width + (j + self.kl - i)
    }

    /// Factorizes `a`. Fails on an exactly singular pivot.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.order();
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            piv: vec![0; n],
        };
        for i in 0..n {
            for (j, v) in a.row(i) {
                let k = lu.idx(i, j);
                lu.data[k] += v;
            }
        }
        let span = kl + ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.data[lu.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = lu.data[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            lu.piv[k] = p;
            let jmax = (k + span).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a1 = lu.idx(k, j);
                    let a2 = lu.idx(p, j);
                    lu.data.swap(a1, a2);
                }
            }
            let pivot = lu.data[lu.idx(k, k)];
            for i in k + 1..=last {
                let ik = lu.idx(i, k);
                let l = lu.data[ik] / pivot;
                lu.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let kj = lu.data[lu.idx(k, j)];
                        let ij = lu.idx(i, j);
                        lu.data[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.data[self.idx(i, k)] * bk;
                }
            }
        }
        let span = self.kl + self.ku;
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + span).min(n - 1) {
                s -= self.data[self.idx(k, j)] * b[j];
            }
            b[k] = s / self.data[self.idx(k, k)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Direct solve of a general banded sparse system.
pub fn solve_banded(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(BandedLu::factor(a)?.solve(b))
}
