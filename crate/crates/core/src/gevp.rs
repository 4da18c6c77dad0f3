//! Generalized symmetric-definite eigenproblem A x = lambda B x.
//!
//! The dense path reduces to the standard problem C = L^-1 A L^-T, brings C
//! to tridiagonal form with Householder reflectors, finds eigenvalues by the
//! implicit-shift QL iteration and eigenvectors by inverse iteration on the
//! tridiagonal matrix. The shift-invert path runs block subspace iteration
//! on (A - sigma B)^-1 B with Rayleigh–Ritz extraction.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SymmetricPair;
use crate::linalg::{
    axpy, backward_substitute_transpose, cholesky, dot, forward_substitute, norm2, CsrMatrix, DenseMatrix,
    EnvelopeCholesky,
};

/// Largest system handled by the dense path.
pub const DENSE_LIMIT: usize = 4096;
/// Certification threshold on residuals and B-orthonormality.
pub const CERTIFY_TOL: f64 = 1e-10;
/// QL sweeps allowed per eigenvalue.
pub const QL_MAX_SWEEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// B-normalized coefficient vector over the free DOFs.
    pub vector: Vec<f64>,
    /// ||A x - lambda B x||_2 / ||A||_F.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dense,
    ShiftInvert,
    /// Dense for small systems or wide windows, shift-invert otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub k: usize,
    pub method: Method,
    /// Shift sigma of the shift-invert path.
    pub shift: f64,
    pub seed: u64,
}

impl SolveOptions {
    pub fn new(k: usize) -> Self {
        SolveOptions {
            k,
            method: Method::Auto,
            shift: 0.0,
            seed: 0x5eed_1e55,
        }
    }

    pub fn method(mut self, m: Method) -> Self {
        self.method = m;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSolution {
    pub pairs: Vec<EigenPair>,
    /// Path actually used (never `Auto`).
    pub method: Method,
    pub iterations: usize,
    pub max_residual: f64,
    /// max |x_i^T B x_j - delta_ij|.
    pub orthogonality: f64,
}

impl EigenSolution {
    pub fn lambdas(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }
}

/// k smallest certified eigenpairs with the automatic path choice.
pub fn solve_gevp(pair: &SymmetricPair, k: usize) -> Result<Vec<EigenPair>> {
    Ok(solve_gevp_with(pair, &SolveOptions::new(k))?.pairs)
}

fn choose(n: usize, k: usize, method: Method) -> Method {
    match method {
        Method::Auto => {
            if n <= 1200 || 8 * k > n {
                Method::Dense
            } else {
                Method::ShiftInvert
            }
        }
        m => m,
    }
}

pub fn solve_gevp_with(pair: &SymmetricPair, opts: &SolveOptions) -> Result<EigenSolution> {
    let n = pair.n_free();
    let k = opts.k;
    if k > n {
        return Err(Error::Study(format!("requested {k} eigenpairs of a system with {n} free DOFs")));
    }
    let method = choose(n, k, opts.method);
    if method == Method::Dense && n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            size: n,
            limit: DENSE_LIMIT,
        });
    }
    let (mut pairs, iterations) = match method {
        Method::Dense => (dense_pairs(pair, k)?, 0),
        _ => shift_invert_pairs(pair, k, opts.shift, opts.seed)?,
    };
    for p in &mut pairs {
        normalize_sign(&mut p.vector);
    }
    rayleigh_refine(pair, &mut pairs);
    let (max_residual, orthogonality) = certify(pair, &mut pairs)?;
    Ok(EigenSolution {
        pairs,
        method,
        iterations,
        max_residual,
        orthogonality,
    })
}

/// Replaces each eigenvalue by the Rayleigh quotient of its vector. The tridiagonal
/// route carries an absolute error near eps * lambda_max; the quotient error is
/// quadratic in the vector error and far below that floor for the low modes.
fn rayleigh_refine(pair: &SymmetricPair, pairs: &mut [EigenPair]) {
    for p in pairs.iter_mut() {
        let ax = pair.a.matvec(&p.vector);
        let bx = pair.b.matvec(&p.vector);
        let den = dot(&p.vector, &bx);
        if den > 0.0 {
            p.lambda = dot(&p.vector, &ax) / den;
        }
    }
    pairs.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
}

/// Largest-magnitude component made positive (first index on ties).
fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn certify(pair: &SymmetricPair, pairs: &mut [EigenPair]) -> Result<(f64, f64)> {
    let anorm = pair.a.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut max_res: f64 = 0.0;
    let bx: Vec<Vec<f64>> = pairs.iter().map(|p| pair.b.matvec(&p.vector)).collect();
    for (p, bxi) in pairs.iter_mut().zip(&bx) {
        let mut r = pair.a.matvec(&p.vector);
        axpy(-p.lambda, bxi, &mut r);
        p.residual = norm2(&r) / anorm;
        max_res = max_res.max(p.residual);
    }
    let mut orth: f64 = 0.0;
    for i in 0..pairs.len() {
        for j in 0..=i {
            let g = dot(&pairs[i].vector, &bx[j]);
            let want = if i == j { 1.0 } else { 0.0 };
            orth = orth.max((g - want).abs());
        }
    }
    if !(max_res <= CERTIFY_TOL) {
        return Err(Error::Certification(format!("residual {max_res:.3e} exceeds {CERTIFY_TOL:e}")));
    }
    if !(orth <= CERTIFY_TOL) {
        return Err(Error::Certification(format!("B-orthonormality defect {orth:.3e} exceeds {CERTIFY_TOL:e}")));
    }
    Ok((max_res, orth))
}

/// C = L^-1 A L^-T with L the Cholesky factor of B.
fn reduce_to_standard(a: &DenseMatrix, l: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    // X = L^-1 A, column by column via rows of A (A symmetric).
    let mut x = DenseMatrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.copy_from_slice(a.row(j));
        forward_substitute(l, &mut col);
        for i in 0..n {
            x[(j, i)] = col[i];
        }
    }
    // x now holds (L^-1 A)^T = A L^-T; C = L^-1 (A L^-T).
    let mut c = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            col[i] = x[(i, j)];
        }
        forward_substitute(l, &mut col);
        for i in 0..n {
            c[(i, j)] = col[i];
        }
    }
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = s;
            c[(j, i)] = s;
        }
    }
    c
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    /// sub[i] couples rows i and i+1.
    pub sub: Vec<f64>,
    /// Unit reflector vectors; reflector k acts on indices k+1..n.
    reflectors: Vec<Vec<f64>>,
}

impl Tridiagonal {
    pub fn reduce(c: &DenseMatrix) -> Self {
        let n = c.rows();
        let mut a = c.clone();
        let mut diag = vec![0.0; n];
        let mut sub = vec![0.0; n.saturating_sub(1)];
        let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
        let mut p = vec![0.0; n];
        for k in 0..n.saturating_sub(2) {
            let m = n - k - 1;
            let mut v: Vec<f64> = (0..m).map(|i| a[(k + 1 + i, k)]).collect();
            let xnorm = norm2(&v);
            let alpha = if v[0] > 0.0 { -xnorm } else { xnorm };
            v[0] -= alpha;
            let vnorm = norm2(&v);
            diag[k] = a[(k, k)];
            if xnorm == 0.0 || vnorm == 0.0 {
                sub[k] = 0.0;
                reflectors.push(vec![0.0; m]);
                continue;
            }
            for x in v.iter_mut() {
                *x /= vnorm;
            }
            sub[k] = alpha;
            // p = A' v on the trailing block, K = v^T p, w = p - K v
            let off = k + 1;
            for i in 0..m {
                let row = &a.row(off + i)[off..];
                p[i] = dot(row, &v);
            }
            let kk = dot(&p[..m], &v);
            for i in 0..m {
                p[i] -= kk * v[i];
            }
            for i in 0..m {
                let (vi, wi) = (v[i], p[i]);
                let row = &mut a.row_mut(off + i)[off..];
                for j in 0..m {
                    row[j] -= 2.0 * (vi * p[j] + wi * v[j]);
                }
            }
            reflectors.push(v);
        }
        if n >= 2 {
            diag[n - 2] = a[(n - 2, n - 2)];
            sub[n - 2] = a[(n - 1, n - 2)];
        }
        if n >= 1 {
            diag[n - 1] = a[(n - 1, n - 1)];
        }
        Tridiagonal { diag, sub, reflectors }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn norm(&self) -> f64 {
        let n = self.n();
        let mut m: f64 = 0.0;
        for i in 0..n {
            let mut s = self.diag[i].abs();
            if i > 0 {
                s += self.sub[i - 1].abs();
            }
            if i + 1 < n {
                s += self.sub[i].abs();
            }
            m = m.max(s);
        }
        m
    }

    /// Q y for the accumulated orthogonal transform Q (C = Q T Q^T).
    pub fn back_transform(&self, y: &mut [f64]) {
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            let seg = &mut y[k + 1..];
            let s = 2.0 * dot(v, seg);
            if s != 0.0 {
                axpy(-s, v, seg);
            }
        }
    }

    /// All eigenvalues, ascending, by the implicit-shift QL iteration.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut d = self.diag.clone();
        let mut e = self.sub.clone();
        e.push(0.0);
        tql_values(&mut d, &mut e)?;
        d.sort_by(f64::total_cmp);
        Ok(d)
    }

    /// Eigenvectors of T for ascending eigenvalues `lambdas` by inverse
    /// iteration with reorthogonalization inside clusters.
    pub fn eigenvectors(&self, lambdas: &[f64], seed: u64) -> Vec<Vec<f64>> {
        let n = self.n();
        let tnorm = self.norm().max(f64::MIN_POSITIVE);
        let eps = f64::EPSILON;
        let ortol = 1e-3 * tnorm;
        let sep = 10.0 * eps * tnorm;
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(lambdas.len());
        let mut cluster_start = 0;
        let mut prev_shift = f64::NEG_INFINITY;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for (i, &lam) in lambdas.iter().enumerate() {
            if i > 0 && lam - lambdas[i - 1] > ortol {
                cluster_start = i;
            }
            let mut shift = lam;
            if i > 0 && shift - prev_shift < sep {
                shift = prev_shift + sep;
            }
            prev_shift = shift;
            let lu = TridiagLu::factor(&self.diag, &self.sub, shift, eps * tnorm);
            let mut y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for _ in 0..5 {
                let s = norm2(&y);
                for v in y.iter_mut() {
                    *v /= s;
                }
                lu.solve(&mut y);
                for prev in &out[cluster_start..i] {
                    let c = dot(prev, &y);
                    axpy(-c, prev, &mut y);
                }
            }
            for prev in &out[cluster_start..i] {
                let c = dot(prev, &y);
                axpy(-c, prev, &mut y);
            }
            let s = norm2(&y);
            for v in y.iter_mut() {
                *v /= s;
            }
            out.push(y);
        }
        out
    }
}

/// Implicit QL on (d, e) in place; eigenvalues only.
fn tql_values(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > QL_MAX_SWEEPS {
                return Err(Error::NoConvergence(format!("QL exceeded {QL_MAX_SWEEPS} sweeps at index {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// LU factorization with partial pivoting of T - shift I.
struct TridiagLu {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(diag: &[f64], sub: &[f64], shift: f64, tiny: f64) -> Self {
        let n = diag.len();
        let mut a: Vec<f64> = diag.iter().map(|d| d - shift).collect();
        let mut c: Vec<f64> = sub.to_vec();
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        let mut mult = vec![0.0; n];
        let mut swapped = vec![false; n];
        let mut u0 = vec![0.0; n];
        let mut next_c = 0.0;
        for k in 0..n {
            if k + 1 == n {
                u0[k] = a[k];
                break;
            }
            let b = sub[k];
            // row k: (a[k], c[k], next_c) ; row k+1: (b, a[k+1], c[k+1])
            let ck1 = if k + 1 < n - 1 { c[k + 1] } else { 0.0 };
            if a[k].abs() >= b.abs() {
                let piv = if a[k] == 0.0 { tiny } else { a[k] };
                u0[k] = piv;
                u1[k] = c[k];
                u2[k] = next_c;
                let m = b / piv;
                mult[k] = m;
                a[k + 1] -= m * c[k];
                next_c = 0.0;
                if k + 1 < n - 1 {
                    c[k + 1] = ck1;
                }
            } else {
                swapped[k] = true;
                u0[k] = b;
                u1[k] = a[k + 1];
                u2[k] = ck1;
                let m = a[k] / b;
                mult[k] = m;
                a[k + 1] = c[k] - m * a[k + 1];
                if k + 1 < n - 1 {
                    c[k + 1] = next_c - m * ck1;
                }
                next_c = 0.0;
            }
        }
        for v in u0.iter_mut() {
            if v.abs() < tiny {
                *v = tiny.copysign(if *v == 0.0 { 1.0 } else { *v });
            }
        }
        TridiagLu {
            u0,
            u1,
            u2,
            mult,
            swapped,
        }
    }

    fn solve(&self, y: &mut [f64]) {
        let n = y.len();
        for k in 0..n.saturating_sub(1) {
            if self.swapped[k] {
                y.swap(k, k + 1);
            }
            y[k + 1] -= self.mult[k] * y[k];
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            if k + 1 < n {
                s -= self.u1[k] * y[k + 1];
            }
            if k + 2 < n {
                s -= self.u2[k] * y[k + 2];
            }
            y[k] = s / self.u0[k];
        }
    }
}

/// All eigenvalues and the first `k` eigenvectors of a dense symmetric matrix.
pub fn symmetric_eigen(c: &DenseMatrix, k: usize, seed: u64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let t = Tridiagonal::reduce(c);
    let vals = t.eigenvalues()?;
    let mut vecs = t.eigenvectors(&vals[..k], seed);
    for v in &mut vecs {
        t.back_transform(v);
    }
    Ok((vals, vecs))
}

fn dense_pairs(pair: &SymmetricPair, k: usize) -> Result<Vec<EigenPair>> {
    let l = cholesky(&pair.b.to_dense())?;
    let c = reduce_to_standard(&pair.a.to_dense(), &l);
    let (vals, vecs) = symmetric_eigen(&c, k, 0x7d1a)?;
    Ok(vals
        .iter()
        .zip(vecs)
        .map(|(&lambda, mut z)| {
            backward_substitute_transpose(&l, &mut z);
            EigenPair {
                lambda,
                vector: z,
                residual: f64::NAN,
            }
        })
        .collect())
}

/// Every eigenvalue of (A, B), ascending (dense path, no vectors).
pub fn all_eigenvalues(pair: &SymmetricPair) -> Result<Vec<f64>> {
    let n = pair.n_free();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            size: n,
            limit: DENSE_LIMIT,
        });
    }
    let l = cholesky(&pair.b.to_dense())?;
    Tridiagonal::reduce(&reduce_to_standard(&pair.a.to_dense(), &l)).eigenvalues()
}

/// |sum of eigenvalues - trace(C)| / |trace(C)|.
pub fn trace_check(pair: &SymmetricPair) -> Result<f64> {
    let l = cholesky(&pair.b.to_dense())?;
    let c = reduce_to_standard(&pair.a.to_dense(), &l);
    let vals = Tridiagonal::reduce(&c).eigenvalues()?;
    let tr = c.trace();
    Ok((vals.iter().sum::<f64>() - tr).abs() / tr.abs().max(f64::MIN_POSITIVE))
}

fn b_orthonormalize(b: &CsrMatrix, block: &mut [Vec<f64>]) -> Result<()> {
    for j in 0..block.len() {
        for _ in 0..2 {
            let bj = b.matvec(&block[j]);
            let (done, rest) = block.split_at_mut(j);
            let yj = &mut rest[0];
            for yi in done.iter() {
                let c = dot(yi, &bj);
                axpy(-c, yi, yj);
            }
        }
        let nb = dot(&block[j], &b.matvec(&block[j])).sqrt();
        if !(nb > 0.0) || !nb.is_finite() {
            return Err(Error::NoConvergence("subspace block lost rank".into()));
        }
        for v in block[j].iter_mut() {
            *v /= nb;
        }
    }
    Ok(())
}

const SUBSPACE_MAX_ITERS: usize = 2000;
const SUBSPACE_RES_TOL: f64 = 1e-12;
/// Ritz values carry a rounding floor near eps * lambda_max / lambda.
const SUBSPACE_THETA_TOL: f64 = 1e-9;

fn shift_invert_pairs(pair: &SymmetricPair, k: usize, sigma: f64, seed: u64) -> Result<(Vec<EigenPair>, usize)> {
    let n = pair.n_free();
    if k == 0 {
        return Ok((Vec::new(), 0));
    }
    let p = (2 * k + 10).min(n);
    let kmat = pair.a.shifted(sigma, &pair.b);
    let fac = EnvelopeCholesky::factor(&kmat)?;
    let anorm = pair.a.frobenius_norm();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut prev_theta = vec![f64::INFINITY; k];
    let mut stable = 0;
    for it in 1..=SUBSPACE_MAX_ITERS {
        let mut y: Vec<Vec<f64>> = x
            .iter()
            .map(|xi| {
                let mut v = pair.b.matvec(xi);
                fac.solve(&mut v);
                v
            })
            .collect();
        b_orthonormalize(&pair.b, &mut y)?;
        let ay: Vec<Vec<f64>> = y.iter().map(|v| pair.a.matvec(v)).collect();
        let mut red = DenseMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..=i {
                let v = 0.5 * (dot(&y[i], &ay[j]) + dot(&y[j], &ay[i]));
                red[(i, j)] = v;
                red[(j, i)] = v;
            }
        }
        let (theta, w) = symmetric_eigen(&red, p, 0x3c1b)?;
        x = w
            .iter()
            .map(|wi| {
                let mut v = vec![0.0; n];
                for (c, yj) in wi.iter().zip(&y) {
                    axpy(*c, yj, &mut v);
                }
                v
            })
            .collect();
        let mut max_res: f64 = 0.0;
        for i in 0..k {
            let mut r = pair.a.matvec(&x[i]);
            axpy(-theta[i], &pair.b.matvec(&x[i]), &mut r);
            max_res = max_res.max(norm2(&r) / anorm);
        }
        let dtheta = (0..k)
            .map(|i| ((theta[i] - prev_theta[i]) / theta[i].abs().max(f64::MIN_POSITIVE)).abs())
            .fold(0.0, f64::max);
        prev_theta.copy_from_slice(&theta[..k]);
        if dtheta <= SUBSPACE_THETA_TOL {
            stable += 1;
        } else {
            stable = 0;
        }
        if max_res <= SUBSPACE_RES_TOL && stable >= 2 {
            let pairs = (0..k)
                .map(|i| EigenPair {
                    lambda: theta[i],
                    vector: x[i].clone(),
                    residual: f64::NAN,
                })
                .collect();
            return Ok((pairs, it));
        }
    }
    Err(Error::NoConvergence(format!(
        "subspace iteration did not converge in {SUBSPACE_MAX_ITERS} iterations"
    )))
}
