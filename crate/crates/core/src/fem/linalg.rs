//! Sparse symmetric linear algebra for the finite-element systems.

use std::collections::hash_map::DefaultHasher;
use std::collections::VecDeque;
use std::hash::{Hash, Hasher};

use crate::{Error, Result};

/// Symmetric matrix stored in full CSR form (both triangles).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the sparsity pattern from per-row column sets; values start at zero.
    pub fn from_pattern(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Position of entry `(i, j)` in `values`.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            y[i] = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Hash of the exact bit patterns of structure and values.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.n.hash(&mut h);
        self.row_ptr.hash(&mut h);
        self.col_idx.hash(&mut h);
        for v in &self.values {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    fn adjacency(&self) -> Vec<&[usize]> {
        (0..self.n).map(|i| self.row(i).0).collect()
    }
}

/// Reverse Cuthill-McKee ordering; returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let adj = a.adjacency();
    let n = a.dim();
    let degree: Vec<usize> = adj.iter().map(|r| r.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        // start each component from a minimum-degree node
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope structure of a permuted symmetric matrix plus the scatter map from CSR.
#[derive(Debug, Clone)]
pub struct SkylineSymbolic {
    perm: Vec<usize>,
    inv: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    /// For each CSR entry in the lower triangle (after permutation) its envelope index.
    scatter: Vec<Option<usize>>,
}

impl SkylineSymbolic {
    pub fn new(a: &CsrMatrix) -> Self {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old_i in 0..n {
            let i = inv[old_i];
            for &old_j in a.row(old_i).0 {
                let j = inv[old_j];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut scatter = vec![None; a.nnz()];
        for old_i in 0..n {
            let i = inv[old_i];
            for k in a.row_ptr[old_i]..a.row_ptr[old_i + 1] {
                let j = inv[a.col_idx[k]];
                if j <= i {
                    scatter[k] = Some(offset[i] + (j - first[i]));
                }
            }
        }
        Self {
            perm,
            inv,
            first,
            offset,
            scatter,
        }
    }

    pub fn envelope_size(&self) -> usize {
        *self.offset.last().unwrap()
    }
}

/// Envelope Cholesky factor `L` of `P·A·Pᵀ`.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(sym: &SkylineSymbolic, a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let mut data = vec![0.0; sym.envelope_size()];
        for (k, slot) in sym.scatter.iter().enumerate() {
            if let Some(p) = slot {
                data[*p] = a.values[k];
            }
        }
        let first = &sym.first;
        let off = &sym.offset;
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[off[i] + (j - fi)];
                let ri = &data[off[i] + (lo - fi)..off[i] + (j - fi)];
                let rj = &data[off[j] + (lo - fj)..off[j] + (j - fj)];
                s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
                data[off[i] + (j - fi)] = s / data[off[j] + (j - fj)];
            }
            let row = &data[off[i]..off[i] + (i - fi)];
            let d = data[off[i] + (i - fi)] - row.iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "tangent matrix not positive definite (pivot {d:.3e} at row {})",
                    sym.perm[i]
                )));
            }
            data[off[i] + (i - fi)] = d.sqrt();
        }
        Ok(Self { data })
    }

    pub fn solve(&self, sym: &SkylineSymbolic, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let first = &sym.first;
        let off = &sym.offset;
        let mut x: Vec<f64> = sym.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = first[i];
            let row = &self.data[off[i]..off[i] + (i - fi)];
            let s: f64 = row.iter().zip(&x[fi..i]).map(|(l, v)| l * v).sum();
            x[i] = (x[i] - s) / self.data[off[i] + (i - fi)];
        }
        for i in (0..n).rev() {
            let fi = first[i];
            x[i] /= self.data[off[i] + (i - fi)];
            let xi = x[i];
            for (k, j) in (fi..i).enumerate() {
                x[j] -= self.data[off[i] + k] * xi;
            }
        }
        let mut out = vec![0.0; n];
        for (new, v) in x.into_iter().enumerate() {
            out[sym.perm[new]] = v;
        }
        let _ = &sym.inv;
        out
    }
}

/// Outcome of a preconditioned conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgOutcome)> {
    let n = a.dim();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((
            x,
            CgOutcome {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Numerical(format!(
                "conjugate gradients broke down (pᵀAp = {pap:.3e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bnorm;
        if rel <= tol {
            return Ok((
                x,
                CgOutcome {
                    iterations: it,
                    relative_residual: rel,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Numerical(format!(
        "conjugate gradients did not reach {tol:.1e} in {max_iter} iterations"
    )))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
