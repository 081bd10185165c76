//! Sparse symmetric matrices in CSR form, Jacobi-preconditioned conjugate gradients and a
//! shift-invert subspace iteration for the smallest eigenpair of a symmetric pencil.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default relative residual tolerance of [`cg_solve`].
pub const CG_TOL: f64 = 1e-10;
/// Default residual tolerance of [`smallest_eig_pencil`].
pub const EIG_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("CG did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },
    #[error("CG encountered non-positive curvature {0:e}; matrix is not positive definite")]
    NotPositiveDefinite(f64),
    #[error("eigensolver did not converge in {iterations} iterations (residual {residual:e})")]
    EigNotConverged { iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(
        "Newton iteration did not converge in {iterations} iterations (residual {residual:e})"
    )]
    NewtonNotConverged { iterations: usize, residual: f64 },
    #[error("Newton line search reached the damping floor (residual {residual:e})")]
    DampingFloor { residual: f64 },
}

/// Symmetric sparse matrix in compressed sparse row format with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Assembles from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(
                i < n && j < n,
                "triplet ({i}, {j}) out of bounds for n = {n}"
            );
            if last == Some((i, j)) {
                *vals.last_mut().expect("previous entry exists") += v;
            } else {
                col_idx.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self::from_triplets(
            d.len(),
            d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect(),
        )
    }

    /// Dense row-major input; zeros are dropped.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "dense input must be square");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Iterates the stored entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &SparseSym, b: f64) -> Self {
        assert_eq!(self.n, other.n);
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            t.extend(self.row(i).map(|(j, v)| (i, j, a * v)));
            t.extend(other.row(i).map(|(j, v)| (i, j, b * v)));
        }
        Self::from_triplets(self.n, t)
    }

    /// Whether the stored values are symmetric to relative tolerance `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self
            .vals
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        (0..self.n).all(|i| {
            self.row(i)
                .all(|(j, v)| (v - self.get(j, i)).abs() <= tol * scale)
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Result of a converged CG solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD `a`, stopping when
/// `|b - a x| <= tol |b|`. `maxit = None` uses `10 n`.
pub fn cg_solve(
    a: &SparseSym,
    b: &[f64],
    tol: f64,
    maxit: Option<usize>,
) -> Result<Vec<f64>, SolverError> {
    cg_solve_from(a, b, None, tol, maxit).map(|o| o.x)
}

/// [`cg_solve`] with an optional initial guess and iteration statistics.
pub fn cg_solve_from(
    a: &SparseSym,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    maxit: Option<usize>,
) -> Result<CgOutcome, SolverError> {
    let n = a.dim();
    if b.len() != n {
        return Err(SolverError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let maxit = maxit.unwrap_or(10 * n.max(1));
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = a.matvec(&x);
        axpy(-1.0, &ax, &mut r);
    }
    let mut rnorm = norm2(&r);
    if rnorm <= tol * bnorm {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relative_residual: rnorm / bnorm,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=maxit {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(SolverError::NotPositiveDefinite(pap));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        rnorm = norm2(&r);
        if rnorm <= tol * bnorm {
            return Ok(CgOutcome {
                x,
                iterations: it,
                relative_residual: rnorm / bnorm,
            });
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(SolverError::CgNotConverged {
        iterations: maxit,
        residual: rnorm / bnorm,
    })
}

/// Smallest eigenpair of the pencil `S v = mu M v`.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalue: f64,
    /// M-normalized eigenvector.
    pub eigenvector: Vec<f64>,
    pub iterations: usize,
    /// `|S v - mu M v|_2 / |v|_2`.
    pub residual: f64,
}

/// Lower bound for the spectrum of the pencil `(s, m)`.
///
/// Gershgorin discs of `D^{-1/2} S D^{-1/2}` with `D = diag(M)` bound the pencil
/// `(S, D)`. The result is mapped to `(S, M)` through Gershgorin bounds on
/// `D^{-1/2} M D^{-1/2}`; when that lower disc bound is not positive the factor 1/2 is
/// used, which holds for diagonal matrices and for assembled P1 mass matrices
/// (each element mass matrix dominates half its diagonal).
pub fn gershgorin_lower(s: &SparseSym, m: &SparseSym) -> f64 {
    let d = m.diagonal();
    let disc_lower = |a: &SparseSym| {
        (0..a.dim())
            .map(|i| {
                let mut centre = 0.0;
                let mut radius = 0.0;
                for (j, v) in a.row(i) {
                    let scaled = v / (d[i] * d[j]).sqrt();
                    if i == j {
                        centre = scaled;
                    } else {
                        radius += scaled.abs();
                    }
                }
                (centre - radius, centre + radius)
            })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (l, h)| {
                (lo.min(l), hi.max(h))
            })
    };
    let (s_lo, _) = disc_lower(s);
    let (m_lo, m_hi) = disc_lower(m);
    if s_lo >= 0.0 {
        s_lo / m_hi
    } else {
        s_lo / if m_lo > 0.0 { m_lo.min(1.0) } else { 0.5 }
    }
}

/// Options for [`smallest_eig_pencil`].
#[derive(Debug, Clone)]
pub struct EigOptions {
    pub tol: f64,
    /// `None` means `max(10 n, 1000)`.
    pub maxit: Option<usize>,
    /// Block size of the subspace iteration (clamped to `n`).
    pub block: usize,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            tol: EIG_TOL,
            maxit: None,
            block: 4,
            seed: 0x5eed,
        }
    }
}

/// Smallest eigenpair of `S v = mu M v` by shift-invert subspace iteration with
/// Rayleigh-Ritz extraction.
///
/// The shift is placed below [`gershgorin_lower`], so `S - sigma M` is SPD and the inner
/// solves use [`cg_solve_from`] with tolerance `1e-4 * tol`. If the inner solver detects
/// indefiniteness the shift is lowered and the iteration restarts.
pub fn smallest_eig_pencil(
    s: &SparseSym,
    m: &SparseSym,
    opts: &EigOptions,
    initial: Option<&[f64]>,
) -> Result<EigenResult, SolverError> {
    let n = s.dim();
    if m.dim() != n {
        return Err(SolverError::DimensionMismatch {
            expected: n,
            got: m.dim(),
        });
    }
    let maxit = opts.maxit.unwrap_or((10 * n).max(1000));
    let glo = gershgorin_lower(s, m);
    let scale = s
        .diagonal()
        .iter()
        .zip(m.diagonal())
        .map(|(a, b)| (a / b).abs())
        .fold(0.0, f64::max);
    let mut sigma = glo - 0.05 * (glo.abs() + scale) - f64::EPSILON;
    let mut last_err = None;
    for _ in 0..8 {
        match subspace_iteration(s, m, sigma, opts, maxit, initial) {
            Err(SolverError::NotPositiveDefinite(c)) => {
                last_err = Some(SolverError::NotPositiveDefinite(c));
                sigma -= sigma.abs() + scale + 1.0;
            }
            other => return other,
        }
    }
    Err(last_err.expect("loop ran at least once"))
}

fn subspace_iteration(
    s: &SparseSym,
    m: &SparseSym,
    sigma: f64,
    opts: &EigOptions,
    maxit: usize,
    initial: Option<&[f64]>,
) -> Result<EigenResult, SolverError> {
    let n = s.dim();
    let b = opts.block.clamp(1, n.max(1));
    let shifted = s.lin_comb(1.0, m, -sigma);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random_vec =
        |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };

    let mut block: Vec<Vec<f64>> = Vec::with_capacity(b);
    if let Some(v0) = initial.filter(|v| v.len() == n && norm2(v) > 0.0) {
        block.push(v0.to_vec());
    }
    while block.len() < b {
        block.push(random_vec(&mut rng));
    }
    let mut ritz = vec![0.0; b];
    let inner_tol = 1e-4 * opts.tol;
    let mut residual = f64::INFINITY;
    for it in 1..=maxit {
        // Apply (S - sigma M)^{-1} M to each block vector, warm-started from the
        // current Ritz estimate.
        let mut next = Vec::with_capacity(b);
        for (j, x) in block.iter().enumerate() {
            let rhs = m.matvec(x);
            let guess: Option<Vec<f64>> = (it > 1).then(|| {
                let f = 1.0 / (ritz[j] - sigma);
                x.iter().map(|v| v * f).collect()
            });
            let out = cg_solve_from(
                &shifted,
                &rhs,
                guess.as_deref(),
                inner_tol,
                Some(20 * n.max(50)),
            )?;
            next.push(out.x);
        }
        let basis = m_orthonormalize(next, m, &mut rng, &mut random_vec);
        // Rayleigh-Ritz on the M-orthonormal basis.
        let sb: Vec<Vec<f64>> = basis.iter().map(|v| s.matvec(v)).collect();
        let k = basis.len();
        let mut h = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                h[i][j] = dot(&basis[i], &sb[j]);
            }
        }
        for i in 0..k {
            for j in 0..i {
                let avg = 0.5 * (h[i][j] + h[j][i]);
                h[i][j] = avg;
                h[j][i] = avg;
            }
        }
        let (vals, vecs) = jacobi_eigen(h);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &c| vals[a].total_cmp(&vals[c]));
        block = order
            .iter()
            .map(|&col| {
                let mut v = vec![0.0; n];
                for (i, bv) in basis.iter().enumerate() {
                    axpy(vecs[i][col], bv, &mut v);
                }
                v
            })
            .collect();
        ritz = order.iter().map(|&c| vals[c]).collect();

        let v = &block[0];
        let mu = ritz[0];
        let mut r = s.matvec(v);
        axpy(-mu, &m.matvec(v), &mut r);
        residual = norm2(&r) / norm2(v);
        if residual <= opts.tol {
            let mut v = v.clone();
            let mnorm = m.bilinear(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= mnorm);
            // Deterministic sign: largest-magnitude component positive.
            let imax = (0..n)
                .max_by(|&a, &c| v[a].abs().total_cmp(&v[c].abs()))
                .unwrap_or(0);
            if v.get(imax).is_some_and(|&x| x < 0.0) {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            return Ok(EigenResult {
                eigenvalue: mu,
                eigenvector: v,
                iterations: it,
                residual,
            });
        }
    }
    Err(SolverError::EigNotConverged {
        iterations: maxit,
        residual,
    })
}

fn m_orthonormalize(
    mut vs: Vec<Vec<f64>>,
    m: &SparseSym,
    rng: &mut ChaCha8Rng,
    random_vec: &mut impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    let mut out_m: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    let target = vs.len();
    let mut attempts = 0;
    while out.len() < target && attempts < 4 * target + 8 {
        attempts += 1;
        let mut v = if vs.is_empty() {
            random_vec(rng)
        } else {
            vs.remove(0)
        };
        let n0 = m.bilinear(&v, &v).sqrt();
        // Two passes of modified Gram-Schmidt in the M inner product.
        for _ in 0..2 {
            for (q, mq) in out.iter().zip(&out_m) {
                let c = dot(&v, mq);
                axpy(-c, q, &mut v);
            }
        }
        let mv = m.matvec(&v);
        let nrm = dot(&v, &mv).sqrt();
        if !(nrm > 1e-10 * n0) || !nrm.is_finite() {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nrm);
        out_m.push(mv.into_iter().map(|x| x / nrm).collect());
        out.push(v);
    }
    out
}

/// Cyclic Jacobi eigenvalue method for a small dense symmetric matrix.
/// Returns eigenvalues and the eigenvector matrix (eigenvectors in columns).
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let total: f64 = a.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - sn * akq;
                    a[k][q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - sn * aqk;
                    a[q][k] = sn * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - sn * vkq;
                    row[q] = sn * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}
