//! Triplet/CSC sparse matrices and a left-looking sparse LU.
//!
//! Everything the solvers factor is real: complex systems are assembled in
//! real-split form (each complex unknown occupies an adjacent (re, im) pair,
//! a complex coefficient `g + jb` stamps the 2x2 block `[[g,-b],[b,g]]`).
//! One scalar factorization therefore serves both the linear steady-state
//! solves and the Newton steps.
//!
//! The factorization is the classic left-looking (Gilbert–Peierls) scheme:
//! for each column, a depth-first search over the pattern of the already
//! computed L yields the set of prior columns to apply in topological order,
//! the column is eliminated in a dense workspace, and the largest remaining
//! entry is chosen as pivot (ties broken by lowest row index, which keeps
//! factorizations bit-reproducible). No column preordering is applied; the
//! augmented systems here are small and nearly banded, so fill stays modest.

use thiserror::Error;

/// Row/column/value accumulator. Duplicate coordinates sum on conversion,
/// which is exactly what independent element stamps need.
#[derive(Debug, Clone)]
pub struct Triplets {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

/// Compressed-sparse-column matrix.
#[derive(Debug, Clone)]
pub struct Csc {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub rows: Vec<usize>,
    pub vals: Vec<f64>,
}

/// LU factors with row pivoting. `L` is unit lower triangular; both factors
/// are stored column-wise in elimination numbering.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    l_ptr: Vec<usize>,
    l_rows: Vec<usize>,
    l_vals: Vec<f64>,
    u_ptr: Vec<usize>,
    u_rows: Vec<usize>,
    u_vals: Vec<f64>,
    u_diag: Vec<f64>,
    /// original row -> elimination step at which it became pivotal
    pinv: Vec<usize>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LuError {
    /// No usable pivot in this column (structurally or numerically singular).
    #[error("matrix is singular at column {col}")]
    Singular { col: usize },
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n && col < self.n, "stamp ({row},{col}) outside {0}x{0}", self.n);
        if val != 0.0 {
            self.entries.push((row, col, val));
        }
    }

    /// Stamp that records the position even when the value is zero. Used for
    /// blocks whose sparsity pattern must not depend on the current iterate
    /// or on parameter values.
    #[inline]
    pub fn push_structural(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n && col < self.n, "stamp ({row},{col}) outside {0}x{0}", self.n);
        self.entries.push((row, col, val));
    }

    /// Number of raw (pre-merge) stamps; used by structural tests.
    pub fn raw_len(&self) -> usize {
        self.entries.len()
    }

    /// Drops stamps appended after a checkpoint taken with [`Self::raw_len`].
    /// Entry order is otherwise untouched, so removing appended stamps
    /// restores the previous matrix bit-for-bit.
    pub fn truncate(&mut self, len: usize) {
        self.entries.truncate(len);
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize, f64)> {
        self.entries.iter()
    }

    pub fn extend_from(&mut self, other: &Triplets) {
        debug_assert_eq!(self.n, other.n);
        self.entries.extend_from_slice(&other.entries);
    }

    pub fn to_csc(&self) -> Csc {
        let n = self.n;
        let mut count = vec![0usize; n];
        for &(_, c, _) in &self.entries {
            count[c] += 1;
        }
        let mut col_ptr = vec![0usize; n + 1];
        for c in 0..n {
            col_ptr[c + 1] = col_ptr[c] + count[c];
        }
        let mut rows = vec![0usize; self.entries.len()];
        let mut vals = vec![0.0; self.entries.len()];
        let mut next = col_ptr.clone();
        for &(r, c, v) in &self.entries {
            let p = next[c];
            rows[p] = r;
            vals[p] = v;
            next[c] += 1;
        }
        // Sort each column by row and merge duplicates in place.
        let mut out_rows = Vec::with_capacity(rows.len());
        let mut out_vals = Vec::with_capacity(vals.len());
        let mut out_ptr = vec![0usize; n + 1];
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for c in 0..n {
            scratch.clear();
            scratch.extend(
                rows[col_ptr[c]..col_ptr[c + 1]]
                    .iter()
                    .copied()
                    .zip(vals[col_ptr[c]..col_ptr[c + 1]].iter().copied()),
            );
            scratch.sort_unstable_by_key(|&(r, _)| r);
            let mut i = 0;
            while i < scratch.len() {
                let r = scratch[i].0;
                let mut v = scratch[i].1;
                let mut j = i + 1;
                while j < scratch.len() && scratch[j].0 == r {
                    v += scratch[j].1;
                    j += 1;
                }
                out_rows.push(r);
                out_vals.push(v);
                i = j;
            }
            out_ptr[c + 1] = out_rows.len();
        }
        Csc { n, col_ptr: out_ptr, rows: out_rows, vals: out_vals }
    }
}

impl Csc {
    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.rows[p]] += self.vals[p] * xc;
            }
        }
        y
    }

    pub fn factor(&self) -> Result<SparseLu, LuError> {
        const NONE: usize = usize::MAX;
        let n = self.n;
        let mut pinv = vec![NONE; n];
        let mut pivrow = vec![NONE; n];

        let mut l_ptr = vec![0usize];
        let mut l_rows: Vec<usize> = Vec::new();
        let mut l_vals: Vec<f64> = Vec::new();
        let mut u_ptr = vec![0usize];
        let mut u_rows: Vec<usize> = Vec::new();
        let mut u_vals: Vec<f64> = Vec::new();
        let mut u_diag = vec![0.0; n];

        // Dense workspace with stamp-based clearing.
        let mut w = vec![0.0f64; n];
        let mut stamp = vec![usize::MAX; n];
        let mut pattern: Vec<usize> = Vec::new();
        // DFS state over columns.
        let mut visited = vec![usize::MAX; n];
        let mut topo: Vec<usize> = Vec::new();
        let mut dfs_stack: Vec<(usize, usize)> = Vec::new();

        for j in 0..n {
            pattern.clear();
            topo.clear();

            // Symbolic: reach of A(:,j) through the column graph of L.
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let r = self.rows[p];
                let k = pinv[r];
                if k != NONE && visited[k] != j {
                    // Iterative DFS collecting postorder.
                    dfs_stack.push((k, l_ptr[k]));
                    visited[k] = j;
                    while let Some(&mut (col, ref mut pos)) = dfs_stack.last_mut() {
                        let end = l_ptr[col + 1];
                        let mut descended = false;
                        while *pos < end {
                            let rr = l_rows[*pos];
                            *pos += 1;
                            let kk = pinv[rr];
                            if kk != NONE && visited[kk] != j {
                                visited[kk] = j;
                                dfs_stack.push((kk, l_ptr[kk]));
                                descended = true;
                                break;
                            }
                        }
                        if !descended {
                            topo.push(col);
                            dfs_stack.pop();
                        }
                    }
                }
            }
            // Reverse postorder = topological order of eliminations to apply.
            topo.reverse();

            // Numeric: scatter A(:,j) and eliminate.
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let r = self.rows[p];
                if stamp[r] != j {
                    stamp[r] = j;
                    w[r] = 0.0;
                    pattern.push(r);
                }
                w[r] += self.vals[p];
            }
            for &k in &topo {
                let pr = pivrow[k];
                if stamp[pr] != j {
                    // Nothing flowed into this pivot row; column contributes 0.
                    continue;
                }
                let xk = w[pr];
                if xk == 0.0 {
                    continue;
                }
                for p in l_ptr[k]..l_ptr[k + 1] {
                    let r = l_rows[p];
                    if stamp[r] != j {
                        stamp[r] = j;
                        w[r] = 0.0;
                        pattern.push(r);
                    }
                    w[r] -= l_vals[p] * xk;
                }
            }

            // Pivot: largest magnitude among non-pivotal rows, lowest index on ties.
            let mut piv = NONE;
            let mut best = 0.0f64;
            let mut col_max = 0.0f64;
            for &r in &pattern {
                let m = w[r].abs();
                col_max = col_max.max(m);
                if pinv[r] == NONE && (m > best || (m == best && piv != NONE && r < piv)) && m > 0.0 {
                    best = m;
                    piv = r;
                }
            }
            if piv == NONE || best < 1e-13 * col_max.max(1e-300) || best == 0.0 {
                return Err(LuError::Singular { col: j });
            }

            // Harvest U (pivotal rows) and L (remaining rows, scaled).
            for &r in &pattern {
                let k = pinv[r];
                if k != NONE {
                    u_rows.push(k);
                    u_vals.push(w[r]);
                }
            }
            let diag = w[piv];
            u_diag[j] = diag;
            for &r in &pattern {
                if pinv[r] == NONE && r != piv {
                    let l = w[r] / diag;
                    if l != 0.0 {
                        l_rows.push(r);
                        l_vals.push(l);
                    }
                }
            }
            pinv[piv] = j;
            pivrow[j] = piv;
            l_ptr.push(l_rows.len());
            u_ptr.push(u_rows.len());
        }

        // Remap L's row indices into elimination numbering for the solves.
        for r in l_rows.iter_mut() {
            *r = pinv[*r];
        }

        Ok(SparseLu { n, l_ptr, l_rows, l_vals, u_ptr, u_rows, u_vals, u_diag, pinv })
    }
}

impl SparseLu {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` using the stored factors.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let mut x = vec![0.0; self.n];
        // Apply the row permutation: x = P b.
        for (r, &br) in b.iter().enumerate() {
            x[self.pinv[r]] = br;
        }
        // Forward substitution with unit-diagonal L.
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                x[self.l_rows[p]] -= self.l_vals[p] * xj;
            }
        }
        // Back substitution with U.
        for j in (0..self.n).rev() {
            let xj = x[j] / self.u_diag[j];
            x[j] = xj;
            if xj == 0.0 {
                continue;
            }
            for p in self.u_ptr[j]..self.u_ptr[j + 1] {
                x[self.u_rows[p]] -= self.u_vals[p] * xj;
            }
        }
        x
    }
}
