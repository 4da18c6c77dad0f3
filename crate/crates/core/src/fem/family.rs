//! Element family registry: local spaces, DOF functionals and nodal bases.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{CellKind, ElementShape, LocalFrame};
use crate::linalg::inverse_with_condition;
use crate::linalg::DenseMatrix;
use crate::polyspace::{index_sets, LocalPolynomial, LocalSpace, MultiIndex};

/// Vandermonde matrices of DOF functionals at or above this condition
/// estimate are rejected.
pub const UNISOLVENCE_CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    P1,
    P2,
    P3,
    Q1,
    Q2,
    S3,
    /// P5 intersected with Q3 on rectangles.
    Intermediate,
    /// Crouzeix–Raviart: P1 on triangles with edge-mean DOFs.
    Cr,
    /// Rannacher–Turek rotated Q1 with edge-mean DOFs.
    Q1Rot,
    /// 1D cubic Hermite (values and slopes at nodes).
    Hermite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conformity {
    Conforming,
    Nonconforming,
}

pub const ALL_FAMILIES: [Family; 10] = [
    Family::P1,
    Family::P2,
    Family::P3,
    Family::Q1,
    Family::Q2,
    Family::S3,
    Family::Intermediate,
    Family::Cr,
    Family::Q1Rot,
    Family::Hermite,
];

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::P1 => "p1",
            Family::P2 => "p2",
            Family::P3 => "p3",
            Family::Q1 => "q1",
            Family::Q2 => "q2",
            Family::S3 => "s3",
            Family::Intermediate => "intermediate",
            Family::Cr => "cr",
            Family::Q1Rot => "q1-rot",
            Family::Hermite => "hermite",
        }
    }

    /// Cell kinds the family is defined on.
    pub fn cells(self) -> &'static [CellKind] {
        match self {
            Family::P1 | Family::P2 | Family::P3 => &[CellKind::Interval, CellKind::Triangle],
            Family::Q1 | Family::Q2 | Family::S3 | Family::Intermediate | Family::Q1Rot => &[CellKind::Rectangle],
            Family::Cr => &[CellKind::Triangle],
            Family::Hermite => &[CellKind::Interval],
        }
    }

    pub fn supports(self, kind: CellKind) -> bool {
        self.cells().contains(&kind)
    }

    pub fn conformity(self) -> Conformity {
        match self {
            Family::Cr | Family::Q1Rot => Conformity::Nonconforming,
            _ => Conformity::Conforming,
        }
    }

    /// Highest operator order m the family is conforming for (and the
    /// highest derivative order served by basis evaluation).
    pub fn m_max(self) -> usize {
        match self {
            Family::Hermite => 2,
            _ => 1,
        }
    }

    pub fn space(self, dim: usize) -> LocalSpace {
        match self {
            Family::P1 => LocalSpace::Total { dim, degree: 1 },
            Family::P2 => LocalSpace::Total { dim, degree: 2 },
            Family::P3 => LocalSpace::Total { dim, degree: 3 },
            Family::Q1 => LocalSpace::Tensor { dim: 2, degree: 1 },
            Family::Q2 => LocalSpace::Tensor { dim: 2, degree: 2 },
            Family::S3 => LocalSpace::Serendipity { r: 3 },
            Family::Intermediate => LocalSpace::Intermediate { total: 5, tensor: 3 },
            Family::Cr => LocalSpace::Total { dim: 2, degree: 1 },
            Family::Q1Rot => LocalSpace::RotatedQ1,
            Family::Hermite => LocalSpace::Total { dim: 1, degree: 3 },
        }
    }

    /// Natural dimension when the family lives on one kind of cell only.
    pub fn default_dim(self) -> usize {
        match self {
            Family::P1 | Family::P2 | Family::P3 | Family::Hermite => 1,
            _ => 2,
        }
    }

    /// Approximation order parameter r of the local space.
    pub fn r(self, dim: usize) -> usize {
        index_sets(&self.space(dim)).map(|ix| ix.r).unwrap_or(0)
    }

    /// Local DOFs in local order for an element of the given shape.
    pub fn local_dofs(self, shape: &ElementShape) -> Result<Vec<LocalDof>> {
        if !self.supports(shape.kind) {
            return Err(Error::Incompatible {
                family: self.name().into(),
                what: format!("{:?} cells", shape.kind),
            });
        }
        let v = &shape.vertices;
        let mut out = Vec::new();
        let vertex_values = |out: &mut Vec<LocalDof>| {
            for (i, p) in v.iter().enumerate() {
                out.push(LocalDof::point(*p, Entity::Vertex { local: i, slot: 0 }));
            }
        };
        let edge_points = |out: &mut Vec<LocalDof>, ts: &[f64]| {
            for (f, [a, b]) in shape.kind.facets().iter().enumerate() {
                for &t in ts {
                    let x = lerp(v[*a], v[*b], t);
                    out.push(LocalDof::point(x, Entity::Edge { facet: f, t }));
                }
            }
        };
        let edge_means = |out: &mut Vec<LocalDof>| {
            for f in 0..shape.kind.facets().len() {
                out.push(LocalDof {
                    functional: Functional::EdgeMean(f),
                    entity: Entity::Edge { facet: f, t: -1.0 },
                    order: 0,
                });
            }
        };
        match (self, shape.kind) {
            (Family::P1, _) | (Family::Q1, _) => vertex_values(&mut out),
            (Family::P2, CellKind::Interval) => {
                vertex_values(&mut out);
                out.push(LocalDof::point(lerp(v[0], v[1], 0.5), Entity::Interior { slot: 0 }));
            }
            (Family::P3, CellKind::Interval) => {
                vertex_values(&mut out);
                for (s, t) in [1.0 / 3.0, 2.0 / 3.0].iter().enumerate() {
                    out.push(LocalDof::point(lerp(v[0], v[1], *t), Entity::Interior { slot: s }));
                }
            }
            (Family::P2, _) | (Family::S3, _) => {
                vertex_values(&mut out);
                edge_points(&mut out, &[0.5]);
            }
            (Family::P3, _) => {
                vertex_values(&mut out);
                edge_points(&mut out, &[1.0 / 3.0, 2.0 / 3.0]);
                out.push(LocalDof::point(shape.centroid(), Entity::Interior { slot: 0 }));
            }
            (Family::Q2, _) => {
                vertex_values(&mut out);
                edge_points(&mut out, &[0.5]);
                out.push(LocalDof::point(shape.centroid(), Entity::Interior { slot: 0 }));
            }
            (Family::Intermediate, _) => {
                vertex_values(&mut out);
                edge_points(&mut out, &[1.0 / 3.0, 2.0 / 3.0]);
                let frame = shape.frame();
                for (s, xi) in [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]].iter().enumerate() {
                    out.push(LocalDof::point(frame.to_physical(*xi), Entity::Interior { slot: s }));
                }
            }
            (Family::Cr, _) | (Family::Q1Rot, _) => edge_means(&mut out),
            (Family::Hermite, _) => {
                for (i, p) in v.iter().enumerate() {
                    out.push(LocalDof::point(*p, Entity::Vertex { local: i, slot: 0 }));
                    out.push(LocalDof {
                        functional: Functional::Slope(*p),
                        entity: Entity::Vertex { local: i, slot: 1 },
                        order: 1,
                    });
                }
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match key.as_str() {
            "p1" => Family::P1,
            "p2" => Family::P2,
            "p3" => Family::P3,
            "q1" => Family::Q1,
            "q2" => Family::Q2,
            "s3" | "serendipity" => Family::S3,
            "intermediate" | "p5q3" => Family::Intermediate,
            "cr" | "crouzeix-raviart" => Family::Cr,
            "q1-rot" | "q1rot" | "rannacher-turek" => Family::Q1Rot,
            "hermite" | "hermite-cubic" => Family::Hermite,
            _ => return Err(Error::Study(format!("unknown element family '{s}'"))),
        })
    }
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// A linear functional on the local space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// v(x).
    PointValue([f64; 2]),
    /// Mean of v over the local facet.
    EdgeMean(usize),
    /// dv/dx at x (1D).
    Slope([f64; 2]),
}

/// Geometric entity a DOF is attached to; decides sharing between elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entity {
    Vertex { local: usize, slot: u8 },
    /// Point at parameter t from the facet's first local vertex; t < 0
    /// marks a facet-mean DOF.
    Edge { facet: usize, t: f64 },
    Interior { slot: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalDof {
    pub functional: Functional,
    pub entity: Entity,
    /// Derivative order of the functional.
    pub order: usize,
}

impl LocalDof {
    fn point(x: [f64; 2], entity: Entity) -> Self {
        LocalDof {
            functional: Functional::PointValue(x),
            entity,
            order: 0,
        }
    }
}

const EDGE_MEAN_POINTS: usize = 4;

/// Applies a DOF functional to a physical-coordinate field on `shape`.
pub fn apply_functional(functional: &Functional, shape: &ElementShape, f: &dyn ScalarField) -> Result<f64> {
    Ok(match functional {
        Functional::PointValue(x) => f.value(*x),
        Functional::Slope(x) => f.derivative(*x, MultiIndex::new1(1)),
        Functional::EdgeMean(facet) => {
            let q = shape.facet_quadrature(*facet, EDGE_MEAN_POINTS)?;
            let len = shape.facet_length(*facet);
            q.iter().map(|(x, w)| w * f.value(*x)).sum::<f64>() / len
        }
    })
}

/// Polynomial in a local frame with dense monomial coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementPoly {
    pub frame: LocalFrame,
    pub monos: Vec<MultiIndex>,
    pub coeffs: Vec<f64>,
}

fn falling(a: usize, k: usize) -> f64 {
    ((a - k + 1)..=a).map(|i| i as f64).product()
}

/// D_x^gamma of every monomial xi^a at the physical point `x`.
fn monomial_derivatives(frame: &LocalFrame, monos: &[MultiIndex], x: [f64; 2], gamma: &MultiIndex, out: &mut Vec<f64>) {
    let xi = frame.to_local(x);
    let scale = frame.derivative_scale(gamma.as_array());
    out.clear();
    for a in monos {
        let mut v = scale;
        for d in 0..a.dim() {
            let (p, k) = (a.get(d), gamma.get(d));
            if k > p {
                v = 0.0;
                break;
            }
            v *= falling(p, k) * xi[d].powi((p - k) as i32);
        }
        out.push(v);
    }
}

impl ElementPoly {
    pub fn to_local_polynomial(&self) -> LocalPolynomial {
        let mut p = LocalPolynomial::zero(self.frame.dim);
        for (m, c) in self.monos.iter().zip(&self.coeffs) {
            p.add_term(*m, *c);
        }
        p
    }
}

impl ScalarField for ElementPoly {
    fn dim(&self) -> usize {
        self.frame.dim
    }

    fn derivative(&self, x: [f64; 2], gamma: MultiIndex) -> f64 {
        let mut buf = Vec::with_capacity(self.monos.len());
        monomial_derivatives(&self.frame, &self.monos, x, &gamma, &mut buf);
        buf.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }
}

/// Nodal basis of one element: phi_k with functional_i(phi_k) = delta_ik.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBasis {
    pub frame: LocalFrame,
    pub monos: Vec<MultiIndex>,
    /// coeffs[k][m]: coefficient of monomial m in basis function k.
    pub coeffs: Vec<Vec<f64>>,
    pub dofs: Vec<LocalDof>,
    /// Condition estimate of the functional Vandermonde.
    pub condition: f64,
    pub m_max: usize,
}

impl LocalBasis {
    pub fn new(family: Family, shape: &ElementShape) -> Result<Self> {
        let dofs = family.local_dofs(shape)?;
        let frame = shape.frame();
        let space = family.space(shape.dim());
        let gens = space.generators(&frame);
        if gens.len() != dofs.len() {
            return Err(Error::Space(format!(
                "{family}: {} functionals for a space of dimension {}",
                dofs.len(),
                gens.len()
            )));
        }
        let mut set = std::collections::BTreeSet::new();
        for g in &gens {
            set.extend(g.coeffs.keys().copied());
        }
        let monos: Vec<MultiIndex> = set.into_iter().collect();
        let n = gens.len();
        let gen_polys: Vec<ElementPoly> = gens
            .iter()
            .map(|g| ElementPoly {
                frame,
                monos: monos.clone(),
                coeffs: monos.iter().map(|m| g.coeff(m)).collect(),
            })
            .collect();
        let mut v = DenseMatrix::zeros(n, n);
        for (i, dof) in dofs.iter().enumerate() {
            for (j, g) in gen_polys.iter().enumerate() {
                v[(i, j)] = apply_functional(&dof.functional, shape, g)?;
            }
        }
        let (inv, cond) = match inverse_with_condition(&v) {
            Ok(x) => x,
            Err(_) => {
                return Err(Error::NotUnisolvent {
                    family: family.name().into(),
                    cond: f64::INFINITY,
                })
            }
        };
        if !(cond < UNISOLVENCE_CONDITION_LIMIT) {
            return Err(Error::NotUnisolvent {
                family: family.name().into(),
                cond,
            });
        }
        let coeffs = (0..n)
            .map(|k| {
                (0..monos.len())
                    .map(|m| (0..n).map(|j| inv[(j, k)] * gen_polys[j].coeffs[m]).sum())
                    .collect()
            })
            .collect();
        Ok(LocalBasis {
            frame,
            monos,
            coeffs,
            dofs,
            condition: cond,
            m_max: family.m_max(),
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// D^gamma phi_k(x) for every local basis function.
    pub fn eval(&self, x: [f64; 2], gamma: &MultiIndex) -> Result<Vec<f64>> {
        if gamma.order() > self.m_max {
            return Err(Error::DerivativeOrder {
                requested: gamma.order(),
                supported: self.m_max,
            });
        }
        Ok(self.eval_unchecked(x, gamma))
    }

    pub(crate) fn eval_unchecked(&self, x: [f64; 2], gamma: &MultiIndex) -> Vec<f64> {
        let mut buf = Vec::with_capacity(self.monos.len());
        monomial_derivatives(&self.frame, &self.monos, x, gamma, &mut buf);
        self.coeffs
            .iter()
            .map(|c| c.iter().zip(&buf).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// sum_k u_k phi_k as a single polynomial.
    pub fn combine(&self, u: &[f64]) -> ElementPoly {
        let mut coeffs = vec![0.0; self.monos.len()];
        for (uk, ck) in u.iter().zip(&self.coeffs) {
            for (c, v) in coeffs.iter_mut().zip(ck) {
                *c += uk * v;
            }
        }
        ElementPoly {
            frame: self.frame,
            monos: self.monos.clone(),
            coeffs,
        }
    }
}

/// Basis values (derivative order gamma) of `family` on `shape` at `x`.
pub fn eval_basis(family: Family, shape: &ElementShape, x: [f64; 2], gamma: &MultiIndex) -> Result<Vec<f64>> {
    if !shape.contains(x, 1e-10 * shape.diameter()) {
        return Err(Error::PointOutside(x[0], x[1]));
    }
    LocalBasis::new(family, shape)?.eval(x, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn shape_for(f: Family) -> ElementShape {
        match f.cells()[0] {
            CellKind::Interval => ElementShape::interval(0.25, 0.5),
            CellKind::Rectangle => ElementShape::rectangle([0.25, 0.5], [0.5, 0.625]),
            CellKind::Triangle => ElementShape::triangle([0.25, 0.5], [0.5, 0.5], [0.5, 0.75]),
        }
    }

    #[test]
    fn every_family_is_unisolvent_and_dual() {
        for f in ALL_FAMILIES {
            for &kind in f.cells() {
                let shape = match kind {
                    CellKind::Interval => ElementShape::interval(0.25, 0.5),
                    CellKind::Rectangle => ElementShape::rectangle([0.25, 0.5], [0.5, 0.625]),
                    CellKind::Triangle => ElementShape::triangle([0.25, 0.5], [0.5, 0.5], [0.5, 0.75]),
                };
                let b = LocalBasis::new(f, &shape).unwrap();
                assert_eq!(b.len(), f.space(kind.dim()).dimension(), "{f}");
                assert!(b.condition < UNISOLVENCE_CONDITION_LIMIT);
                for k in 0..b.len() {
                    let phi = b.combine(&(0..b.len()).map(|i| (i == k) as u8 as f64).collect::<Vec<_>>());
                    for (i, dof) in b.dofs.iter().enumerate() {
                        let v = apply_functional(&dof.functional, &shape, &phi).unwrap();
                        let want = if i == k { 1.0 } else { 0.0 };
                        assert!((v - want).abs() < 1e-9, "{f} {kind:?} k={k} i={i} v={v}");
                    }
                }
            }
        }
    }

    #[test]
    fn p1_triangle_vertex_pattern() {
        let t = ElementShape::triangle([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]);
        let v = eval_basis(Family::P1, &t, [1.0, 0.0], &MultiIndex::new2(0, 0)).unwrap();
        assert!((v[0]).abs() < 1e-14 && (v[1] - 1.0).abs() < 1e-14 && v[2].abs() < 1e-14);
        assert!(eval_basis(Family::P1, &t, [1.0, 1.0], &MultiIndex::new2(0, 0)).is_err());
        assert!(matches!(
            eval_basis(Family::P1, &t, [0.2, 0.2], &MultiIndex::new2(2, 0)),
            Err(Error::DerivativeOrder { .. })
        ));
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for f in [Family::Q1, Family::P2, Family::Q2, Family::P3, Family::S3, Family::Intermediate] {
            let shape = shape_for(f);
            let b = LocalBasis::new(f, &shape).unwrap();
            let (lo, hi) = shape.bounding_box();
            let mut n = 0;
            while n < 20 {
                let x = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..=hi[1])];
                if !shape.contains(x, 0.0) {
                    continue;
                }
                let s: f64 = b.eval(x, &MultiIndex::zero(shape.dim())).unwrap().iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "{f}");
                n += 1;
            }
        }
    }

    #[test]
    fn hermite_duality() {
        let h = 0.2;
        let shape = ElementShape::interval(0.0, h);
        let b = LocalBasis::new(Family::Hermite, &shape).unwrap();
        let v = b.eval([0.0, 0.0], &MultiIndex::new1(0)).unwrap();
        let s = b.eval([0.0, 0.0], &MultiIndex::new1(1)).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-13 && s[0].abs() < 1e-12);
        assert!(v[1].abs() < 1e-13 && (s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incompatible_cells_rejected() {
        let r = ElementShape::rectangle([0.0; 2], [1.0; 2]);
        assert!(matches!(LocalBasis::new(Family::Cr, &r), Err(Error::Incompatible { .. })));
        assert!("nope".parse::<Family>().is_err());
        for f in ALL_FAMILIES {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
    }

    #[test]
    fn r_parameters() {
        assert_eq!(Family::P1.r(1), 2);
        assert_eq!(Family::P2.r(2), 3);
        assert_eq!(Family::P3.r(2), 4);
        assert_eq!(Family::Q1.r(2), 2);
        assert_eq!(Family::Q2.r(2), 3);
        assert_eq!(Family::S3.r(2), 3);
        assert_eq!(Family::Intermediate.r(2), 4);
        assert_eq!(Family::Cr.r(2), 2);
        assert_eq!(Family::Q1Rot.r(2), 2);
        assert_eq!(Family::Hermite.r(1), 4);
    }
}
