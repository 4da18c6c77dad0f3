//! Broken-norm error measurement, eigenpair matching and rate fitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{ElementPoly, Family, FeFunction, FeSpace};
use crate::field::ScalarField;
use crate::gevp::EigenPair;
use crate::mesh::Mesh;
use crate::polyspace::{index_sets, indices_of_order, project_local, LocalSpace, MultiIndex, ProjectionNorm};
use crate::quadrature::OVERSAMPLED_POINTS;
use crate::spectra::ExactEigenpair;

/// A function given by one polynomial per element.
#[derive(Debug, Clone)]
pub struct PiecewisePoly {
    pub pieces: Vec<ElementPoly>,
}

impl PiecewisePoly {
    pub fn from_fe(u: &FeFunction<'_>) -> Self {
        PiecewisePoly {
            pieces: (0..u.space.mesh.len()).map(|e| u.local(e)).collect(),
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for p in &mut self.pieces {
            for c in &mut p.coeffs {
                *c *= s;
            }
        }
        self
    }
}

/// Elementwise best approximation from `space` in the given norm.
pub fn best_approximation(mesh: &Mesh, space: &LocalSpace, u: &dyn ScalarField, norm: ProjectionNorm) -> Result<PiecewisePoly> {
    let npts = space.max_degree() + 1 + OVERSAMPLED_POINTS;
    let pieces = mesh
        .elements
        .par_iter()
        .map(|el| {
            let poly = project_local(&el.shape, space, u, npts, norm)?;
            let (monos, coeffs): (Vec<_>, Vec<_>) = poly.coeffs.into_iter().unzip();
            Ok(ElementPoly {
                frame: el.shape.frame(),
                monos,
                coeffs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PiecewisePoly { pieces })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Omega,
    G,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weighting {
    None,
    /// (sum_K h_K^{p(j-r)} ||e||_{j,p,K}^p)^{1/p}.
    Local { r: usize },
    /// (sum_K h_K^{p((j-r) + n(1/p - 1/q))} ||e||_{j,q,K}^p)^{1/p}.
    Mixed { r: usize, q: f64 },
}

fn multinomial(gamma: MultiIndex) -> f64 {
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    (0..gamma.dim()).fold(fact(gamma.order()), |acc, d| acc / fact(gamma.get(d)))
}

/// Per-element ||e||_{j,p,K}^p (or the max for p = inf) of e = u - v.
fn element_norm(
    mesh: &Mesh,
    e: usize,
    u: &dyn ScalarField,
    v: &ElementPoly,
    j: usize,
    p: f64,
    npts: usize,
    orders: &[Vec<MultiIndex>],
) -> Result<f64> {
    let quad = mesh.elements[e].shape.quadrature(npts)?;
    let mut acc = 0.0;
    for (x, w) in &quad {
        for gs in orders.iter().take(j + 1) {
            let mut s = 0.0;
            for g in gs {
                let d = u.derivative(*x, *g) - v.derivative(*x, *g);
                s += multinomial(*g) * d * d;
            }
            let mag = s.sqrt();
            if p.is_infinite() {
                acc = f64::max(acc, mag);
            } else {
                acc += w * mag.powf(p);
            }
        }
    }
    Ok(acc)
}

/// Broken Sobolev norm of u - v over Omega or G, optionally weighted by element size.
pub fn broken_error(
    mesh: &Mesh,
    u: &dyn ScalarField,
    v: &PiecewisePoly,
    j: usize,
    p: f64,
    region: Region,
    weighting: Weighting,
) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(Error::Norm(format!("exponent p = {p} must be at least 2")));
    }
    if let Weighting::Mixed { q, .. } = weighting {
        if !(q >= p) || p.is_infinite() {
            return Err(Error::Norm(format!("mixed form needs 2 <= p < inf and p <= q, got p = {p}, q = {q}")));
        }
    }
    if j > u.max_order() {
        return Err(Error::DerivativeOrder {
            requested: j,
            supported: u.max_order(),
        });
    }
    let degree = v.pieces.iter().flat_map(|pc| pc.monos.iter().map(|m| m.order())).max().unwrap_or(0);
    let npts = degree + 1 + OVERSAMPLED_POINTS;
    let orders: Vec<Vec<MultiIndex>> = (0..=j).map(|k| indices_of_order(mesh.dim, k)).collect();
    let n = mesh.dim as f64;
    let terms = mesh
        .elements
        .par_iter()
        .filter(|el| region == Region::Omega || el.in_g)
        .map(|el| {
            let e = el.id;
            let pc = &v.pieces[e];
            match weighting {
                Weighting::None => element_norm(mesh, e, u, pc, j, p, npts, &orders),
                Weighting::Local { r } => {
                    let w = el.diameter.powf(p * (j as f64 - r as f64));
                    Ok(w * element_norm(mesh, e, u, pc, j, p, npts, &orders)?)
                }
                Weighting::Mixed { r, q } => {
                    let expo = p * ((j as f64 - r as f64) + n * (1.0 / p - 1.0 / q));
                    let nq = element_norm(mesh, e, u, pc, j, q, npts, &orders)?;
                    let nq = if q.is_infinite() { nq } else { nq.powf(1.0 / q) };
                    Ok(el.diameter.powf(expo) * nq.powf(p))
                }
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    if p.is_infinite() {
        Ok(terms.into_iter().fold(0.0, f64::max))
    } else {
        Ok(terms.into_iter().sum::<f64>().powf(1.0 / p))
    }
}

/// L2 inner product (u, v) over the mesh.
pub fn l2_inner(mesh: &Mesh, u: &dyn ScalarField, v: &PiecewisePoly) -> Result<f64> {
    let degree = v.pieces.iter().flat_map(|pc| pc.monos.iter().map(|m| m.order())).max().unwrap_or(0);
    let npts = degree + 1 + OVERSAMPLED_POINTS;
    let terms = mesh
        .elements
        .par_iter()
        .map(|el| {
            let quad = el.shape.quadrature(npts)?;
            Ok(quad.iter().map(|(x, w)| w * u.value(*x) * v.pieces[el.id].value(*x)).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.into_iter().sum())
}

/// An exact eigenpair paired with discrete eigenpairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    /// Position of the exact eigenvalue in the distinct list.
    pub exact_index: usize,
    pub lambda: f64,
    /// 0-based positions of the discrete eigenpairs in the sorted window.
    pub positions: Vec<usize>,
    pub lambda_h: Vec<f64>,
    pub multiplicity: usize,
}

/// Matches the `index`-th distinct exact eigenvalue (0-based) to the discrete
/// eigenvalues at the same positions counted with multiplicity.
pub fn match_eigenpair(discrete: &[f64], exact: &[ExactEigenpair], index: usize) -> Result<MatchedPair> {
    let ex = exact
        .get(index)
        .ok_or_else(|| Error::Matching(format!("exact index {index} beyond the {} reference values", exact.len())))?;
    let start: usize = exact[..index].iter().map(|e| e.multiplicity).sum();
    let end = start + ex.multiplicity;
    if start >= discrete.len() {
        return Err(Error::Matching(format!(
            "index {index} starts at position {start}, beyond the {} computed eigenpairs",
            discrete.len()
        )));
    }
    if end > discrete.len() {
        return Err(Error::Matching(format!(
            "cluster at positions {start}..{end} straddles the computed window of {}",
            discrete.len()
        )));
    }
    Ok(MatchedPair {
        exact_index: index,
        lambda: ex.lambda,
        positions: (start..end).collect(),
        lambda_h: discrete[start..end].to_vec(),
        multiplicity: ex.multiplicity,
    })
}

/// Discrete approximation to one exact eigenfunction: the L2 projection of
/// `u` onto the span of the matched discrete eigenvectors, rescaled to unit
/// mass norm. For a simple pair this is the sign-aligned u_h.
pub fn aligned_approximation<'a>(
    space: &'a FeSpace,
    pairs: &[EigenPair],
    matched: &MatchedPair,
    u: &dyn ScalarField,
) -> Result<FeFunction<'a>> {
    let members = matched
        .positions
        .iter()
        .map(|&i| FeFunction::from_free(space, &pairs[i].vector))
        .collect::<Result<Vec<_>>>()?;
    let coeffs = members
        .iter()
        .map(|m| l2_inner(&space.mesh, u, &PiecewisePoly::from_fe(m)))
        .collect::<Result<Vec<f64>>>()?;
    let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
    let weights: Vec<f64> = if norm > 0.0 {
        coeffs.iter().map(|c| c / norm).collect()
    } else {
        let mut w = vec![0.0; coeffs.len()];
        w[0] = 1.0;
        w
    };
    let mut out = FeFunction::zeros(space);
    for (m, w) in members.iter().zip(&weights) {
        for (o, v) in out.values.iter_mut().zip(&m.values) {
            *o += w * v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    /// Indices [first, last] of the levels used.
    pub window: [usize; 2],
    pub pairwise: Vec<f64>,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    (slope, intercept, (rss / n).sqrt())
}

fn log_fit(xs: &[f64], ys: &[f64], what: &str) -> Result<RateFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Fit(format!("{what}: need at least 3 paired points, got {} and {}", xs.len(), ys.len())));
    }
    if let Some(bad) = ys.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::Fit(format!("{what}: non-positive error {bad:e}, measurement at the noise floor")));
    }
    if xs.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Fit(format!("{what}: abscissae must be positive")));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (slope, intercept, residual) = least_squares(&lx, &ly);
    let pairwise = lx.windows(2).zip(ly.windows(2)).map(|(x, y)| (y[0] - y[1]) / (x[0] - x[1])).collect();
    Ok(RateFit {
        slope,
        intercept,
        residual,
        window: [0, xs.len() - 1],
        pairwise,
    })
}

/// Least-squares slope of log e against log h.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<RateFit> {
    if hs.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Fit("mesh sizes must be strictly decreasing".into()));
    }
    log_fit(hs, errors, "eoc")
}

/// Slope of log e against log lambda at a fixed mesh size; every lambda h^2
/// must stay under `cap`.
pub fn lambda_scaling(errors: &[f64], lambdas: &[f64], h: f64, cap: f64) -> Result<RateFit> {
    if let Some(l) = lambdas.iter().find(|l| **l * h * h > cap) {
        return Err(Error::Window {
            value: l * h * h,
            cap,
        });
    }
    log_fit(lambdas, errors, "lambda scaling")
}

/// e / (h^{r-j} lambda^{r/(2m)}).
pub fn bound_ratio(error: f64, h: f64, lambda: f64, r: usize, j: usize, m: usize) -> f64 {
    error / (h.powi(r as i32 - j as i32) * lambda.powf(r as f64 / (2 * m) as f64))
}

/// Right-hand side of the anisotropic projection bound on a tensor mesh:
/// (sum_K sum_gamma h_K^{p(gamma - alpha)} ||D^gamma u||_{0,p,K}^p)^{1/p} over
/// gamma in the rest set and |gamma| = r + 1.
pub fn rhs_seminorm(u: &dyn ScalarField, mesh: &Mesh, family: Family, alpha: MultiIndex, p: f64) -> Result<f64> {
    if !mesh.is_tensor() {
        return Err(Error::Mesh("anisotropic bound needs a tensor-product mesh".into()));
    }
    let sets = index_sets(&family.space(mesh.dim))?;
    let mut gammas: Vec<MultiIndex> = sets.rest.iter().copied().collect();
    gammas.extend(indices_of_order(mesh.dim, sets.r + 1));
    let npts = sets.r + 2 + OVERSAMPLED_POINTS;
    let terms = mesh
        .elements
        .par_iter()
        .map(|el| {
            let quad = el.shape.quadrature(npts)?;
            let mut s = 0.0;
            for g in &gammas {
                let mut w = 1.0;
                for d in 0..mesh.dim {
                    w *= el.sizes[d].powf(p * (g.get(d) as f64 - alpha.get(d) as f64));
                }
                let integral: f64 = quad.iter().map(|(x, wq)| wq * u.derivative(*x, *g).abs().powf(p)).sum();
                s += w * integral;
            }
            Ok(s)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.into_iter().sum::<f64>().powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceMode {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityLevel {
    pub n: usize,
    pub window: usize,
    pub j_star: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub tolerance: f64,
    pub mode: ToleranceMode,
    pub levels: Vec<ReliabilityLevel>,
    /// Fitted exponent of j* against N, absent when some j* is zero.
    pub exponent: Option<f64>,
    /// 1 - exponent: the loss against a count proportional to N.
    pub theta: Option<f64>,
}

/// Largest j such that every discrete eigenvalue with index <= j meets the tolerance.
pub fn reliable_count(discrete: &[f64], exact: &[f64], tolerance: f64, mode: ToleranceMode) -> usize {
    discrete
        .iter()
        .zip(exact)
        .take_while(|(lh, l)| {
            let err = (*lh - *l).abs();
            match mode {
                ToleranceMode::Relative => err <= tolerance * l.abs(),
                ToleranceMode::Absolute => err <= tolerance,
            }
        })
        .count()
}

/// Reliable-eigenvalue counts across meshes; `spectra` holds (N, ascending discrete eigenvalues).
pub fn reliability(spectra: &[(usize, Vec<f64>)], exact: &[f64], tolerance: f64, mode: ToleranceMode) -> Result<ReliabilityReport> {
    if spectra.len() < 3 {
        return Err(Error::Fit(format!("reliability needs at least 3 meshes, got {}", spectra.len())));
    }
    if !(tolerance > 0.0) {
        return Err(Error::Fit(format!("tolerance must be positive, got {tolerance}")));
    }
    let levels: Vec<ReliabilityLevel> = spectra
        .iter()
        .map(|(n, vals)| {
            let j = reliable_count(vals, exact, tolerance, mode);
            ReliabilityLevel {
                n: *n,
                window: vals.len().min(exact.len()),
                j_star: j,
                ratio: j as f64 / *n as f64,
            }
        })
        .collect();
    let exponent = if levels.iter().all(|l| l.j_star > 0) {
        let ns: Vec<f64> = levels.iter().map(|l| l.n as f64).collect();
        let js: Vec<f64> = levels.iter().map(|l| l.j_star as f64).collect();
        Some(log_fit(&ns, &js, "reliability")?.slope)
    } else {
        None
    };
    Ok(ReliabilityReport {
        tolerance,
        mode,
        levels,
        exponent,
        theta: exponent.map(|e| 1.0 - e),
    })
}
