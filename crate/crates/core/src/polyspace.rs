//! Multi-indices, polynomial calculus in element-local scaled coordinates,
//! the local spaces of the element families and local L2/H1 projections.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{ElementShape, LocalFrame};
use crate::linalg::{cholesky, cholesky_solve, inverse_with_condition, DenseMatrix};

/// Gram matrices whose condition estimate reaches this value are rejected.
pub const GRAM_CONDITION_LIMIT: f64 = 1e6;

/// alpha in N^n for n in {1, 2}.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<u32>", try_from = "Vec<u32>")]
pub struct MultiIndex {
    dim: u8,
    alpha: [u32; 2],
}

impl MultiIndex {
    pub fn new1(a: usize) -> Self {
        MultiIndex {
            dim: 1,
            alpha: [a as u32, 0],
        }
    }

    pub fn new2(a: usize, b: usize) -> Self {
        MultiIndex {
            dim: 2,
            alpha: [a as u32, b as u32],
        }
    }

    pub fn from_slice(alpha: &[usize]) -> Result<Self> {
        match alpha {
            [a] => Ok(Self::new1(*a)),
            [a, b] => Ok(Self::new2(*a, *b)),
            _ => Err(Error::UnsupportedDimension(alpha.len())),
        }
    }

    pub fn zero(dim: usize) -> Self {
        if dim == 1 {
            Self::new1(0)
        } else {
            Self::new2(0, 0)
        }
    }

    /// The unit index e_d in dimension `dim`.
    pub fn unit(dim: usize, d: usize) -> Self {
        let mut m = Self::zero(dim);
        m.alpha[d] = 1;
        m
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn get(&self, d: usize) -> usize {
        self.alpha[d] as usize
    }

    pub fn as_array(&self) -> [usize; 2] {
        [self.alpha[0] as usize, self.alpha[1] as usize]
    }

    /// |alpha|.
    pub fn order(&self) -> usize {
        (self.alpha[0] + self.alpha[1]) as usize
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex {
            dim: self.dim,
            alpha: [self.alpha[0] + other.alpha[0], self.alpha[1] + other.alpha[1]],
        }
    }

    /// alpha - gamma when componentwise non-negative.
    pub fn checked_sub(&self, gamma: &MultiIndex) -> Option<MultiIndex> {
        Some(MultiIndex {
            dim: self.dim,
            alpha: [
                self.alpha[0].checked_sub(gamma.alpha[0])?,
                self.alpha[1].checked_sub(gamma.alpha[1])?,
            ],
        })
    }

    pub fn max_component(&self) -> usize {
        self.alpha[0].max(self.alpha[1]) as usize
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dim == 1 {
            write!(f, "({})", self.alpha[0])
        } else {
            write!(f, "({},{})", self.alpha[0], self.alpha[1])
        }
    }
}

impl From<MultiIndex> for Vec<u32> {
    fn from(m: MultiIndex) -> Self {
        m.alpha[..m.dim()].to_vec()
    }
}

impl TryFrom<Vec<u32>> for MultiIndex {
    type Error = String;
    fn try_from(v: Vec<u32>) -> std::result::Result<Self, String> {
        match v.as_slice() {
            [a] => Ok(MultiIndex::new1(*a as usize)),
            [a, b] => Ok(MultiIndex::new2(*a as usize, *b as usize)),
            _ => Err(format!("multi-index of length {} (expected 1 or 2)", v.len())),
        }
    }
}

/// A finite set of multi-indices of a common dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiIndexSet {
    pub dim: usize,
    pub members: BTreeSet<MultiIndex>,
}

impl MultiIndexSet {
    pub fn empty(dim: usize) -> Self {
        MultiIndexSet {
            dim,
            members: BTreeSet::new(),
        }
    }

    pub fn from_filter(dim: usize, bound: usize, keep: impl Fn(MultiIndex) -> bool) -> Self {
        let mut s = Self::empty(dim);
        let ybound = if dim == 1 { 0 } else { bound };
        for a in 0..=bound {
            for b in 0..=ybound {
                let m = if dim == 1 {
                    MultiIndex::new1(a)
                } else {
                    MultiIndex::new2(a, b)
                };
                if keep(m) {
                    s.members.insert(m);
                }
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, m: &MultiIndex) -> bool {
        self.members.contains(m)
    }

    pub fn is_subset(&self, other: &MultiIndexSet) -> bool {
        self.members.is_subset(&other.members)
    }

    pub fn difference(&self, other: &MultiIndexSet) -> MultiIndexSet {
        MultiIndexSet {
            dim: self.dim,
            members: self.members.difference(&other.members).copied().collect(),
        }
    }

    pub fn intersection(&self, other: &MultiIndexSet) -> MultiIndexSet {
        MultiIndexSet {
            dim: self.dim,
            members: self.members.intersection(&other.members).copied().collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> {
        self.members.iter()
    }

    /// Members of total order exactly `k`.
    pub fn of_order(&self, k: usize) -> Vec<MultiIndex> {
        self.members.iter().copied().filter(|m| m.order() == k).collect()
    }
}

/// Ind_r = {alpha : |alpha| <= r}.
pub fn enumerate_indices(dim: usize, r: usize) -> Result<MultiIndexSet> {
    if dim != 1 && dim != 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    Ok(MultiIndexSet::from_filter(dim, r, |m| m.order() <= r))
}

/// All multi-indices of order exactly `k` in dimension `dim`.
pub fn indices_of_order(dim: usize, k: usize) -> Vec<MultiIndex> {
    MultiIndexSet::from_filter(dim, k, |m| m.order() == k)
        .members
        .into_iter()
        .collect()
}

/// Monomial coefficients over element-local scaled coordinates xi in [-1, 1]^n.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPolynomial {
    pub dim: usize,
    pub coeffs: BTreeMap<MultiIndex, f64>,
}

impl LocalPolynomial {
    pub fn zero(dim: usize) -> Self {
        LocalPolynomial {
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn monomial(alpha: MultiIndex, c: f64) -> Self {
        let mut p = Self::zero(alpha.dim());
        p.add_term(alpha, c);
        p
    }

    pub fn add_term(&mut self, alpha: MultiIndex, c: f64) {
        if c != 0.0 {
            *self.coeffs.entry(alpha).or_insert(0.0) += c;
        }
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> f64 {
        self.coeffs.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        LocalPolynomial {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v * s)).collect(),
        }
    }

    pub fn add(&self, other: &LocalPolynomial) -> Self {
        let mut out = self.clone();
        for (k, v) in &other.coeffs {
            out.add_term(*k, *v);
        }
        out
    }

    pub fn mul(&self, other: &LocalPolynomial) -> Self {
        let mut out = Self::zero(self.dim);
        for (a, ca) in &self.coeffs {
            for (b, cb) in &other.coeffs {
                out.add_term(a.add(b), ca * cb);
            }
        }
        out
    }

    pub fn eval(&self, xi: [f64; 2]) -> f64 {
        self.coeffs
            .iter()
            .map(|(a, c)| c * xi[0].powi(a.get(0) as i32) * xi[1].powi(a.get(1) as i32))
            .sum()
    }

    /// D^gamma in local coordinates.
    pub fn differentiate(&self, gamma: &MultiIndex) -> Self {
        let mut out = Self::zero(self.dim);
        for (a, c) in &self.coeffs {
            if let Some(rest) = a.checked_sub(gamma) {
                let mut f = *c;
                for d in 0..2 {
                    f *= ((rest.get(d) + 1)..=a.get(d)).map(|i| i as f64).product::<f64>();
                }
                out.add_term(rest, f);
            }
        }
        out
    }

    pub fn laplacian(&self) -> Self {
        let mut out = Self::zero(self.dim);
        for d in 0..self.dim {
            let mut g = MultiIndex::zero(self.dim);
            g.alpha[d] = 2;
            out = out.add(&self.differentiate(&g));
        }
        out
    }

    /// Monomials carrying a coefficient above `tol`.
    pub fn support(&self, tol: f64) -> MultiIndexSet {
        MultiIndexSet {
            dim: self.dim,
            members: self
                .coeffs
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(k, _)| *k)
                .collect(),
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.max_abs_coeff() <= tol
    }

    pub fn degree(&self) -> usize {
        self.coeffs.keys().map(|k| k.order()).max().unwrap_or(0)
    }

    /// Value of D_x^gamma at the physical point `x` through `frame`.
    pub fn eval_physical(&self, frame: &LocalFrame, x: [f64; 2], gamma: &MultiIndex) -> f64 {
        let xi = frame.to_local(x);
        self.differentiate(gamma).eval(xi) * frame.derivative_scale(gamma.as_array())
    }
}

/// Monomial coefficients of the Legendre polynomial P_k.
pub fn legendre_coefficients(k: usize) -> Vec<f64> {
    let mut p0 = vec![1.0];
    if k == 0 {
        return p0;
    }
    let mut p1 = vec![0.0, 1.0];
    for n in 1..k {
        let nf = n as f64;
        let mut p2 = vec![0.0; n + 2];
        for (i, c) in p1.iter().enumerate() {
            p2[i + 1] += (2.0 * nf + 1.0) * c / (nf + 1.0);
        }
        for (i, c) in p0.iter().enumerate() {
            p2[i] -= nf * c / (nf + 1.0);
        }
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// P_{a}(xi) P_{b}(eta) as a local polynomial.
pub fn legendre_product(alpha: MultiIndex) -> LocalPolynomial {
    let dim = alpha.dim();
    let mut out = LocalPolynomial::zero(dim);
    let cx = legendre_coefficients(alpha.get(0));
    let cy = if dim == 2 {
        legendre_coefficients(alpha.get(1))
    } else {
        vec![1.0]
    };
    for (i, a) in cx.iter().enumerate() {
        for (j, b) in cy.iter().enumerate() {
            let m = if dim == 1 {
                MultiIndex::new1(i)
            } else {
                MultiIndex::new2(i, j)
            };
            out.add_term(m, a * b);
        }
    }
    out
}

/// Local polynomial spaces of the element families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalSpace {
    /// P_k: total degree <= k.
    Total { dim: usize, degree: usize },
    /// Q_k on boxes: degree <= k in each variable.
    Tensor { dim: usize, degree: usize },
    /// S_r = P_{r-1} + span{x^{r-1} y, x y^{r-1}}.
    Serendipity { r: usize },
    /// P_total intersected with Q_tensor.
    Intermediate { total: usize, tensor: usize },
    /// P_1 + span{x^2 - y^2}.
    RotatedQ1,
}

impl LocalSpace {
    pub fn dim(&self) -> usize {
        match *self {
            LocalSpace::Total { dim, .. } | LocalSpace::Tensor { dim, .. } => dim,
            _ => 2,
        }
    }

    /// Largest monomial lower set contained in the space (Ind_used).
    pub fn monomial_indices(&self) -> MultiIndexSet {
        match *self {
            LocalSpace::Total { dim, degree } => {
                MultiIndexSet::from_filter(dim, degree, |m| m.order() <= degree)
            }
            LocalSpace::Tensor { dim, degree } => {
                MultiIndexSet::from_filter(dim, degree, |m| m.max_component() <= degree)
            }
            LocalSpace::Serendipity { r } => {
                let extra = [MultiIndex::new2(r - 1, 1), MultiIndex::new2(1, r - 1)];
                MultiIndexSet::from_filter(2, r, |m| m.order() < r || extra.contains(&m))
            }
            LocalSpace::Intermediate { total, tensor } => MultiIndexSet::from_filter(2, total, |m| {
                m.order() <= total && m.max_component() <= tensor
            }),
            LocalSpace::RotatedQ1 => MultiIndexSet::from_filter(2, 1, |m| m.order() <= 1),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            LocalSpace::RotatedQ1 => 4,
            _ => self.monomial_indices().len(),
        }
    }

    /// Highest total degree of any member.
    pub fn max_degree(&self) -> usize {
        match self {
            LocalSpace::RotatedQ1 => 2,
            _ => self.monomial_indices().iter().map(|m| m.order()).max().unwrap_or(0),
        }
    }

    /// Spanning set of Legendre products in the local coordinates of `frame`.
    pub fn generators(&self, frame: &LocalFrame) -> Vec<LocalPolynomial> {
        let mut g: Vec<LocalPolynomial> = self
            .monomial_indices()
            .iter()
            .map(|m| legendre_product(*m))
            .collect();
        if let LocalSpace::RotatedQ1 = self {
            // physical x^2 - y^2 up to additive constants: rho_1^2 P_2(xi) - rho_2^2 P_2(eta)
            let hmax = frame.half[0].max(frame.half[1]);
            let r0 = (frame.half[0] / hmax).powi(2);
            let r1 = (frame.half[1] / hmax).powi(2);
            let q = legendre_product(MultiIndex::new2(2, 0))
                .scaled(r0)
                .add(&legendre_product(MultiIndex::new2(0, 2)).scaled(-r1));
            g.push(q);
        }
        g
    }
}

/// Ind_used, r, Ind_{r,rest} and Ind_{r,used} = Ind_r cap Ind_used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSets {
    pub used: MultiIndexSet,
    pub r: usize,
    pub rest: MultiIndexSet,
    pub r_used: MultiIndexSet,
}

pub fn index_sets(space: &LocalSpace) -> Result<IndexSets> {
    let used = space.monomial_indices();
    let dim = space.dim();
    for r in 0..=space.max_degree() + 1 {
        let ind = enumerate_indices(dim, r)?;
        if !ind.is_subset(&used) {
            return Ok(IndexSets {
                rest: ind.difference(&used),
                r_used: ind.intersection(&used),
                used,
                r,
            });
        }
    }
    Err(Error::Space(format!("no finite r for {space:?}")))
}

/// Splits r = m i + 2 m l with i in {0, 1}.
pub fn operator_split(r: usize, m: usize) -> Result<(usize, usize)> {
    if m == 0 {
        return Err(Error::OperatorDecomposition { r, m });
    }
    if r.is_multiple_of(2 * m) {
        Ok((0, r / (2 * m)))
    } else if r >= m && (r - m).is_multiple_of(2 * m) {
        Ok((1, (r - m) / (2 * m)))
    } else {
        Err(Error::OperatorDecomposition { r, m })
    }
}

/// All components of nabla^{m i} Delta^{m l} p.
pub fn apply_operator(p: &LocalPolynomial, m: usize, i: usize, l: usize) -> Vec<LocalPolynomial> {
    let mut q = p.clone();
    for _ in 0..m * l {
        q = q.laplacian();
    }
    indices_of_order(p.dim, m * i)
        .iter()
        .map(|g| q.differentiate(g))
        .collect()
}

/// True iff nabla^{m i} Delta^{m l} (r = m i + 2 m l) annihilates the local
/// space, checked symbolically on the reference frame.
pub fn annihilation_check(space: &LocalSpace, m: usize, r: usize) -> Result<bool> {
    let (i, l) = operator_split(r, m)?;
    let frame = LocalFrame::reference(space.dim());
    Ok(space.generators(&frame).iter().all(|g| {
        let scale = g.max_abs_coeff().max(1.0);
        apply_operator(g, m, i, l)
            .iter()
            .all(|c| c.is_zero(1e-12 * scale))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionNorm {
    L2,
    H1,
}

/// Orthogonal projection of `target` onto `space` on element `shape` in the
/// L2(K) or full H1(K) inner product. The quadrature uses at least
/// `max_degree + 1` points per direction.
pub fn project_local(
    shape: &ElementShape,
    space: &LocalSpace,
    target: &dyn ScalarField,
    npts: usize,
    norm: ProjectionNorm,
) -> Result<LocalPolynomial> {
    let frame = shape.frame();
    let gens = space.generators(&frame);
    let n = gens.len();
    let dim = space.dim();
    let quad = shape.quadrature(npts.max(space.max_degree() + 1))?;
    let grads: Vec<Vec<LocalPolynomial>> = gens
        .iter()
        .map(|g| (0..dim).map(|d| g.differentiate(&MultiIndex::unit(dim, d))).collect())
        .collect();

    let mut gram = DenseMatrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    let mut vals = vec![0.0; n];
    let mut dvals = vec![[0.0; 2]; n];
    for (x, w) in &quad {
        let xi = frame.to_local(*x);
        for k in 0..n {
            vals[k] = gens[k].eval(xi);
            if norm == ProjectionNorm::H1 {
                for d in 0..dim {
                    dvals[k][d] = grads[k][d].eval(xi) / frame.half[d];
                }
            }
        }
        let f = target.value(*x);
        let df: [f64; 2] = match norm {
            ProjectionNorm::L2 => [0.0; 2],
            ProjectionNorm::H1 => {
                let mut g = [0.0; 2];
                for (d, gd) in g.iter_mut().enumerate().take(dim) {
                    *gd = target.derivative(*x, MultiIndex::unit(dim, d));
                }
                g
            }
        };
        for a in 0..n {
            let mut ra = f * vals[a];
            for d in 0..dim {
                ra += df[d] * dvals[a][d];
            }
            rhs[a] += w * ra;
            for b in 0..=a {
                let mut v = vals[a] * vals[b];
                if norm == ProjectionNorm::H1 {
                    for d in 0..dim {
                        v += dvals[a][d] * dvals[b][d];
                    }
                }
                gram[(a, b)] += w * v;
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    let cond = match inverse_with_condition(&gram) {
        Ok((_, c)) => c,
        Err(_) => f64::INFINITY,
    };
    if !(cond < GRAM_CONDITION_LIMIT) {
        return Err(Error::SingularGram(cond));
    }
    let l = cholesky(&gram).map_err(|_| Error::SingularGram(cond))?;
    cholesky_solve(&l, &mut rhs);
    let mut p = LocalPolynomial::zero(dim);
    for (c, g) in rhs.iter().zip(&gens) {
        p = p.add(&g.scaled(*c));
    }
    Ok(p)
}

/// Wraps a local polynomial on a frame as a [`ScalarField`] in physical
/// coordinates.
#[derive(Debug, Clone)]
pub struct LocalField {
    pub poly: LocalPolynomial,
    pub frame: LocalFrame,
}

impl ScalarField for LocalField {
    fn dim(&self) -> usize {
        self.poly.dim
    }

    fn derivative(&self, x: [f64; 2], gamma: MultiIndex) -> f64 {
        self.poly.eval_physical(&self.frame, x, &gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FnField, Monomial};
    use proptest::prelude::*;

    fn set(dim: usize, v: &[[usize; 2]]) -> BTreeSet<MultiIndex> {
        v.iter()
            .map(|a| {
                if dim == 1 {
                    MultiIndex::new1(a[0])
                } else {
                    MultiIndex::new2(a[0], a[1])
                }
            })
            .collect()
    }

    #[test]
    fn enumerate_small_sets() {
        let s = enumerate_indices(2, 1).unwrap();
        assert_eq!(s.members, set(2, &[[0, 0], [1, 0], [0, 1]]));
        let s = enumerate_indices(1, 3).unwrap();
        assert_eq!(s.members, set(1, &[[0, 0], [1, 0], [2, 0], [3, 0]]));
        assert!(enumerate_indices(3, 1).is_err());
    }

    #[test]
    fn enumerate_cardinality_matches_binomial() {
        let binom = |n: usize, k: usize| (1..=k).fold(1usize, |acc, i| acc * (n + 1 - i) / i);
        for dim in 1..=2 {
            for r in 0..8 {
                // brute count over a box
                let mut count = 0;
                for a in 0..=r {
                    for b in 0..=(if dim == 2 { r } else { 0 }) {
                        if a + b <= r {
                            count += 1;
                        }
                    }
                }
                let s = enumerate_indices(dim, r).unwrap();
                assert_eq!(s.len(), count);
                assert_eq!(s.len(), binom(dim + r, dim));
            }
        }
        assert_eq!(enumerate_indices(2, 3).unwrap().len(), 10);
    }

    #[test]
    fn index_sets_of_rectangle_families() {
        let q2 = index_sets(&LocalSpace::Tensor { dim: 2, degree: 2 }).unwrap();
        assert_eq!(q2.r, 3);
        assert_eq!(q2.rest.members, set(2, &[[3, 0], [0, 3]]));
        let inter = index_sets(&LocalSpace::Intermediate { total: 5, tensor: 3 }).unwrap();
        assert_eq!(inter.r, 4);
        assert_eq!(inter.rest.members, set(2, &[[4, 0], [0, 4]]));
        let s3 = index_sets(&LocalSpace::Serendipity { r: 3 }).unwrap();
        assert_eq!(s3.r, 3);
        assert_eq!(s3.rest.members, set(2, &[[3, 0], [0, 3]]));
        let p1 = index_sets(&LocalSpace::Total { dim: 2, degree: 1 }).unwrap();
        assert_eq!(p1.r, 2);
        assert_eq!(p1.rest.len(), 3);
    }

    #[test]
    fn index_set_partition_invariants() {
        let spaces = [
            LocalSpace::Total { dim: 1, degree: 1 },
            LocalSpace::Total { dim: 1, degree: 3 },
            LocalSpace::Total { dim: 2, degree: 2 },
            LocalSpace::Tensor { dim: 2, degree: 1 },
            LocalSpace::Tensor { dim: 2, degree: 2 },
            LocalSpace::Serendipity { r: 3 },
            LocalSpace::Intermediate { total: 5, tensor: 3 },
            LocalSpace::RotatedQ1,
        ];
        for s in spaces {
            let ix = index_sets(&s).unwrap();
            assert!(ix.rest.intersection(&ix.used).is_empty());
            assert!(!ix.rest.is_empty());
            let ind_r = enumerate_indices(s.dim(), ix.r).unwrap();
            let mut union = ix.rest.members.clone();
            union.extend(ix.r_used.members.iter().copied());
            assert_eq!(union, ind_r.members);
            assert!(enumerate_indices(s.dim(), ix.r - 1).unwrap().is_subset(&ix.used));
        }
    }

    #[test]
    fn differentiate_examples() {
        let p = LocalPolynomial::monomial(MultiIndex::new2(2, 1), 1.0);
        let d = p.differentiate(&MultiIndex::new2(1, 0));
        assert_eq!(d.coeffs.len(), 1);
        assert_eq!(d.coeff(&MultiIndex::new2(1, 1)), 2.0);
        let p = LocalPolynomial::monomial(MultiIndex::new2(2, 2), 1.0);
        assert_eq!(p.differentiate(&MultiIndex::new2(2, 2)).coeff(&MultiIndex::new2(0, 0)), 4.0);
        let c = LocalPolynomial::monomial(MultiIndex::new1(0), 3.0);
        assert!(c.differentiate(&MultiIndex::new1(1)).is_zero(0.0));
    }

    #[test]
    fn legendre_coefficients_match_recurrence_values() {
        for k in 0..8 {
            let c = legendre_coefficients(k);
            for &x in &[-0.9, -0.2, 0.0, 0.37, 1.0] {
                let v: f64 = c.iter().enumerate().map(|(i, a)| a * f64::powi(x, i as i32)).sum();
                let (p, _) = crate::quadrature::legendre_with_derivative(k, x);
                assert!((v - p).abs() < 1e-13, "k={k} x={x}");
            }
        }
    }

    #[test]
    fn operator_split_cases() {
        assert_eq!(operator_split(2, 1).unwrap(), (0, 1));
        assert_eq!(operator_split(3, 1).unwrap(), (1, 1));
        assert_eq!(operator_split(4, 2).unwrap(), (0, 1));
        assert_eq!(operator_split(2, 2).unwrap(), (1, 0));
        assert!(operator_split(3, 2).is_err());
        assert!(operator_split(1, 0).is_err());
    }

    #[test]
    fn annihilation_examples() {
        assert!(annihilation_check(&LocalSpace::Tensor { dim: 2, degree: 1 }, 1, 2).unwrap());
        assert!(annihilation_check(&LocalSpace::Total { dim: 2, degree: 2 }, 1, 3).unwrap());
        assert!(!annihilation_check(&LocalSpace::Tensor { dim: 2, degree: 2 }, 1, 3).unwrap());
        assert!(annihilation_check(&LocalSpace::RotatedQ1, 1, 2).unwrap());
        assert!(annihilation_check(&LocalSpace::Total { dim: 1, degree: 3 }, 2, 4).unwrap());
        assert!(annihilation_check(&LocalSpace::Total { dim: 2, degree: 3 }, 1, 4).unwrap());
    }

    /// Central differences are exact for per-variable degree <= 3 up to
    /// rounding, which covers every generator above.
    fn fd_operator(p: &LocalPolynomial, m: usize, i: usize, l: usize, x: [f64; 2]) -> f64 {
        let h = 0.25;
        let dim = p.dim;
        // derivative along one axis by repeated central differences
        fn diff(f: &dyn Fn([f64; 2]) -> f64, d: usize, h: f64, x: [f64; 2]) -> f64 {
            let mut a = x;
            let mut b = x;
            a[d] += h;
            b[d] -= h;
            (f(a) - f(b)) / (2.0 * h)
        }
        let base: Box<dyn Fn([f64; 2]) -> f64 + '_> = Box::new(move |y| p.eval(y));
        let mut cur = base;
        for _ in 0..m * l {
            let prev = cur;
            cur = Box::new(move |y| {
                (0..dim)
                    .map(|d| diff(&|z| diff(&*prev, d, h, z), d, h, y))
                    .sum()
            });
        }
        let mut total: f64 = 0.0;
        for g in indices_of_order(dim, m * i) {
            let mut f: Box<dyn Fn([f64; 2]) -> f64 + '_> = Box::new(&cur);
            for d in 0..dim {
                for _ in 0..g.get(d) {
                    let prev = f;
                    f = Box::new(move |y| diff(&*prev, d, h, y));
                }
            }
            total = total.max(f(x).abs());
        }
        total
    }

    #[test]
    fn annihilation_agrees_with_finite_differences() {
        let cases = [
            (LocalSpace::Total { dim: 1, degree: 1 }, 1, 2),
            (LocalSpace::Total { dim: 2, degree: 2 }, 1, 3),
            (LocalSpace::Tensor { dim: 2, degree: 1 }, 1, 2),
            (LocalSpace::Tensor { dim: 2, degree: 2 }, 1, 3),
            (LocalSpace::Serendipity { r: 3 }, 1, 3),
            (LocalSpace::RotatedQ1, 1, 2),
            (LocalSpace::Total { dim: 1, degree: 3 }, 2, 4),
        ];
        let pts = [[0.1, -0.3], [0.7, 0.2], [-0.45, 0.6]];
        for (s, m, r) in cases {
            let (i, l) = operator_split(r, m).unwrap();
            let symbolic = annihilation_check(&s, m, r).unwrap();
            let brute = s.generators(&LocalFrame::reference(s.dim())).iter().all(|g| {
                pts.iter().all(|x| fd_operator(g, m, i, l, *x) < 1e-8)
            });
            assert_eq!(symbolic, brute, "{s:?}");
        }
    }

    #[test]
    fn rotated_q1_generator_is_physical_x2_minus_y2() {
        let shape = ElementShape::rectangle([0.0, 0.0], [0.5, 0.25]);
        let frame = shape.frame();
        let g = LocalSpace::RotatedQ1.generators(&frame);
        let q = &g[3];
        // Laplacian in physical coordinates vanishes.
        let lap = q.differentiate(&MultiIndex::new2(2, 0)).eval([0.0; 2]) / 0.0625
            + q.differentiate(&MultiIndex::new2(0, 2)).eval([0.0; 2]) / 0.015625;
        assert!(lap.abs() < 1e-12);
    }

    #[test]
    fn projection_of_space_member_is_identity() {
        let shape = ElementShape::rectangle([0.25, 0.5], [0.5, 0.625]);
        let space = LocalSpace::Tensor { dim: 2, degree: 2 };
        let target = Monomial {
            alpha: MultiIndex::new2(2, 1),
            coeff: 3.0,
        };
        let p = project_local(&shape, &space, &target, 4, ProjectionNorm::L2).unwrap();
        let field = LocalField {
            poly: p,
            frame: shape.frame(),
        };
        for x in [[0.3, 0.55], [0.45, 0.6], [0.25, 0.5]] {
            assert!((field.value(x) - target.value(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_of_cubic_onto_q2_reference() {
        let shape = ElementShape::rectangle([-1.0, -1.0], [1.0, 1.0]);
        let p = project_local(
            &shape,
            &LocalSpace::Tensor { dim: 2, degree: 2 },
            &Monomial::new(MultiIndex::new2(3, 0)),
            4,
            ProjectionNorm::L2,
        )
        .unwrap();
        assert!((p.coeff(&MultiIndex::new2(1, 0)) - 0.6).abs() < 1e-13);
        let others: f64 = p
            .coeffs
            .iter()
            .filter(|(k, _)| **k != MultiIndex::new2(1, 0))
            .map(|(_, v)| v.abs())
            .sum();
        assert!(others < 1e-13);
    }

    #[test]
    fn projection_matches_normal_equation_oracle() {
        let h = 0.25;
        let shape = ElementShape::interval(0.0, h);
        let f = FnField {
            dim: 1,
            f: |x: [f64; 2]| (std::f64::consts::PI * x[0]).sin(),
        };
        let p = project_local(&shape, &LocalSpace::Total { dim: 1, degree: 1 }, &f, 12, ProjectionNorm::L2)
            .unwrap();
        // oracle: raw monomial basis {1, x} with 50-point quadrature
        let q = shape.quadrature(20).unwrap();
        let mut g = [[0.0; 2]; 2];
        let mut b = [0.0; 2];
        for (x, w) in &q {
            let phi = [1.0, x[0]];
            for i in 0..2 {
                b[i] += w * phi[i] * f.value(*x);
                for j in 0..2 {
                    g[i][j] += w * phi[i] * phi[j];
                }
            }
        }
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let c0 = (b[0] * g[1][1] - b[1] * g[0][1]) / det;
        let c1 = (g[0][0] * b[1] - g[1][0] * b[0]) / det;
        let field = LocalField {
            poly: p,
            frame: shape.frame(),
        };
        assert!((field.value([0.0, 0.0]) - c0).abs() < 1e-10);
        let slope = field.derivative([0.1, 0.0], MultiIndex::new1(1));
        assert!((slope - c1).abs() < 1e-10);
    }

    #[test]
    fn projection_residual_is_orthogonal() {
        let shape = ElementShape::triangle([0.0, 0.0], [0.25, 0.0], [0.0, 0.25]);
        let space = LocalSpace::Total { dim: 2, degree: 2 };
        let f = FnField {
            dim: 2,
            f: |x: [f64; 2]| (3.0 * x[0]).exp() * (x[1] + 0.2).sin(),
        };
        let p = project_local(&shape, &space, &f, 8, ProjectionNorm::L2).unwrap();
        let frame = shape.frame();
        let q = shape.quadrature(8).unwrap();
        let scale: f64 = q.iter().map(|(x, w)| w * f.value(*x).abs()).sum();
        for g in space.generators(&frame) {
            let r: f64 = q
                .iter()
                .map(|(x, w)| {
                    let xi = frame.to_local(*x);
                    w * (f.value(*x) - p.eval(xi)) * g.eval(xi)
                })
                .sum();
            assert!(r.abs() < 1e-10 * scale);
        }
    }

    fn l2_dist(shape: &ElementShape, f: &dyn ScalarField, p: &LocalPolynomial) -> f64 {
        let frame = shape.frame();
        shape
            .quadrature(10)
            .unwrap()
            .iter()
            .map(|(x, w)| w * (f.value(*x) - p.eval(frame.to_local(*x))).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn projection_idempotent(a in 0.5f64..4.0, b in -1.0f64..1.0, k in 0usize..4) {
            let spaces = [
                LocalSpace::Tensor { dim: 2, degree: 2 },
                LocalSpace::Serendipity { r: 3 },
                LocalSpace::Intermediate { total: 5, tensor: 3 },
                LocalSpace::RotatedQ1,
            ];
            let space = spaces[k];
            let shape = ElementShape::rectangle([0.0, 0.0], [0.2, 0.1]);
            let f = FnField { dim: 2, f: move |x: [f64; 2]| (a * x[0] + b * x[1]).sin() * (x[1] * a).exp() };
            let p = project_local(&shape, &space, &f, 8, ProjectionNorm::L2).unwrap();
            let field = LocalField { poly: p.clone(), frame: shape.frame() };
            let pp = project_local(&shape, &space, &field, 8, ProjectionNorm::L2).unwrap();
            let d = p.add(&pp.scaled(-1.0)).max_abs_coeff();
            prop_assert!(d < 1e-12 * p.max_abs_coeff().max(1.0));
        }

        #[test]
        fn projection_is_optimal(a in 0.5f64..4.0, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let shape = ElementShape::triangle([0.0, 0.0], [0.3, 0.05], [0.1, 0.2]);
            let space = LocalSpace::Total { dim: 2, degree: 2 };
            let f = FnField { dim: 2, f: move |x: [f64; 2]| (a * x[0]).cos() + x[1].powi(4) };
            let p = project_local(&shape, &space, &f, 8, ProjectionNorm::L2).unwrap();
            let best = l2_dist(&shape, &f, &p);
            let gens = space.generators(&shape.frame());
            for _ in 0..20 {
                let mut q = p.clone();
                for g in &gens {
                    q = q.add(&g.scaled(rng.gen_range(-1e-3..1e-3)));
                }
                prop_assert!(best <= l2_dist(&shape, &f, &q) * (1.0 + 1e-12));
            }
        }
    }
}
