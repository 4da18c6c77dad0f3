//! Global DOF numbering, Dirichlet elimination, assembly of the stiffness
//! and mass forms, and finite-element functions.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::{apply_functional, ElementPoly, Entity, Family, Functional, LocalBasis};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::linalg::CsrMatrix;
use crate::mesh::Mesh;
use crate::polyspace::{indices_of_order, MultiIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum DofKey {
    Vertex(usize, u8),
    Edge(usize, i64),
    Interior(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofMap {
    /// Total DOF count N before elimination.
    pub n_total: usize,
    pub local_to_global: Vec<Vec<usize>>,
    /// Global ids of DOFs sited on the boundary and eliminated.
    pub boundary: Vec<usize>,
    /// Free index of each global DOF (None when eliminated).
    pub free_index: Vec<Option<usize>>,
    pub free_to_global: Vec<usize>,
    /// First (element, local index) that references each global DOF.
    pub owner: Vec<(usize, usize)>,
}

impl DofMap {
    pub fn n_free(&self) -> usize {
        self.free_to_global.len()
    }
}

/// Numbers DOFs in first-seen order over elements and local DOFs and
/// eliminates those on the boundary whose derivative order is below `m`.
pub fn build_dofmap(mesh: &Mesh, family: Family, m: usize) -> Result<DofMap> {
    if !family.supports(mesh.kind) {
        return Err(Error::Incompatible {
            family: family.name().into(),
            what: format!("{:?} meshes", mesh.kind),
        });
    }
    let mut keys: HashMap<DofKey, usize> = HashMap::new();
    let mut local_to_global = Vec::with_capacity(mesh.len());
    let mut on_boundary: Vec<bool> = Vec::new();
    let mut order: Vec<usize> = Vec::new();
    let mut owner = Vec::new();
    for el in &mesh.elements {
        let dofs = family.local_dofs(&el.shape)?;
        let mut l2g = Vec::with_capacity(dofs.len());
        for (li, dof) in dofs.iter().enumerate() {
            let (key, bnd) = match dof.entity {
                Entity::Vertex { local, slot } => {
                    let g = el.vertices[local];
                    (DofKey::Vertex(g, slot), mesh.vertex_on_boundary[g])
                }
                Entity::Edge { facet, t } => {
                    let gf = mesh.element_facets[el.id][facet];
                    let f = &mesh.facets[gf];
                    let [a, _] = el.kind.facets()[facet];
                    let tq = if t < 0.0 {
                        -1
                    } else {
                        let tg = if el.vertices[a] == f.vertices[0] { t } else { 1.0 - t };
                        (tg * 1e6).round() as i64
                    };
                    (DofKey::Edge(gf, tq), f.boundary)
                }
                Entity::Interior { slot } => (DofKey::Interior(el.id, slot), false),
            };
            let next = keys.len();
            let g = *keys.entry(key).or_insert(next);
            if g == next {
                on_boundary.push(bnd);
                order.push(dof.order);
                owner.push((el.id, li));
            }
            l2g.push(g);
        }
        local_to_global.push(l2g);
    }
    let n_total = keys.len();
    let mut free_index = vec![None; n_total];
    let mut free_to_global = Vec::new();
    let mut boundary = Vec::new();
    for g in 0..n_total {
        if on_boundary[g] && order[g] < m {
            boundary.push(g);
        } else {
            free_index[g] = Some(free_to_global.len());
            free_to_global.push(g);
        }
    }
    Ok(DofMap {
        n_total,
        local_to_global,
        boundary,
        free_index,
        free_to_global,
        owner,
    })
}

/// Mesh, family, operator order and DOF map with cached local bases.
#[derive(Debug, Clone)]
pub struct FeSpace {
    pub mesh: Mesh,
    pub family: Family,
    pub m: usize,
    pub dofmap: DofMap,
    pub bases: Vec<LocalBasis>,
}

impl FeSpace {
    pub fn new(mesh: Mesh, family: Family, m: usize) -> Result<Self> {
        if m == 0 || m > family.m_max() {
            return Err(Error::Incompatible {
                family: family.name().into(),
                what: format!("operator order m = {m}"),
            });
        }
        let dofmap = build_dofmap(&mesh, family, m)?;
        let bases = mesh
            .elements
            .iter()
            .map(|e| LocalBasis::new(family, &e.shape))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeSpace {
            mesh,
            family,
            m,
            dofmap,
            bases,
        })
    }

    pub fn n_free(&self) -> usize {
        self.dofmap.n_free()
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    /// Gauss points per direction exact for products of two local functions.
    pub fn quadrature_points(&self) -> usize {
        self.family.space(self.dim()).max_degree() + 1
    }
}

/// Stiffness and mass matrices restricted to the free DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricPair {
    pub a: CsrMatrix,
    pub b: CsrMatrix,
}

impl SymmetricPair {
    pub fn n_free(&self) -> usize {
        self.a.n()
    }
}

type ElementMatrices = (Vec<f64>, Vec<f64>);

fn element_matrices(space: &FeSpace, e: usize) -> Result<ElementMatrices> {
    let basis = &space.bases[e];
    let shape = &space.mesh.elements[e].shape;
    let n = basis.len();
    let dim = space.dim();
    let gammas: Vec<(MultiIndex, f64)> = indices_of_order(dim, space.m)
        .into_iter()
        .map(|g| {
            let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
            let w = fact(g.order()) / (0..dim).map(|d| fact(g.get(d))).product::<f64>();
            (g, w)
        })
        .collect();
    let mut ka = vec![0.0; n * n];
    let mut kb = vec![0.0; n * n];
    let zero = MultiIndex::zero(dim);
    for (x, w) in shape.quadrature(space.quadrature_points())? {
        let v = basis.eval_unchecked(x, &zero);
        for i in 0..n {
            for j in 0..n {
                kb[i * n + j] += w * v[i] * v[j];
            }
        }
        for (g, mult) in &gammas {
            let d = basis.eval_unchecked(x, g);
            for i in 0..n {
                for j in 0..n {
                    ka[i * n + j] += w * mult * d[i] * d[j];
                }
            }
        }
    }
    Ok((ka, kb))
}

fn all_element_matrices(space: &FeSpace, parallel: bool) -> Result<Vec<ElementMatrices>> {
    let ne = space.mesh.len();
    if parallel {
        (0..ne).into_par_iter().map(|e| element_matrices(space, e)).collect()
    } else {
        (0..ne).map(|e| element_matrices(space, e)).collect()
    }
}

/// Assembles a_h and the L2 form on the free DOFs. Element matrices may be
/// computed in parallel; accumulation is always in element order, so the
/// result does not depend on `parallel`.
pub fn assemble(space: &FeSpace, parallel: bool) -> Result<SymmetricPair> {
    let mats = all_element_matrices(space, parallel)?;
    let dm = &space.dofmap;
    let nf = dm.n_free();
    let mut ta = Vec::new();
    let mut tb = Vec::new();
    for (e, (ka, kb)) in mats.iter().enumerate() {
        let l2g = &dm.local_to_global[e];
        let n = l2g.len();
        for i in 0..n {
            let Some(fi) = dm.free_index[l2g[i]] else { continue };
            for j in 0..n {
                let Some(fj) = dm.free_index[l2g[j]] else { continue };
                ta.push((fi, fj, ka[i * n + j]));
                tb.push((fi, fj, kb[i * n + j]));
            }
        }
    }
    let pair = SymmetricPair {
        a: CsrMatrix::from_triplets(nf, ta),
        b: CsrMatrix::from_triplets(nf, tb),
    };
    if let Some((row, d)) = pair.b.diagonal().iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::NotSpd { row, pivot: *d });
    }
    Ok(pair)
}

/// Stiffness and mass over all DOFs, before elimination.
pub fn assemble_full(space: &FeSpace) -> Result<(CsrMatrix, CsrMatrix)> {
    let mats = all_element_matrices(space, false)?;
    let dm = &space.dofmap;
    let mut ta = Vec::new();
    let mut tb = Vec::new();
    for (e, (ka, kb)) in mats.iter().enumerate() {
        let l2g = &dm.local_to_global[e];
        let n = l2g.len();
        for i in 0..n {
            for j in 0..n {
                ta.push((l2g[i], l2g[j], ka[i * n + j]));
                tb.push((l2g[i], l2g[j], kb[i * n + j]));
            }
        }
    }
    Ok((CsrMatrix::from_triplets(dm.n_total, ta), CsrMatrix::from_triplets(dm.n_total, tb)))
}

/// A finite-element function: coefficients for every global DOF.
#[derive(Debug, Clone)]
pub struct FeFunction<'a> {
    pub space: &'a FeSpace,
    pub values: Vec<f64>,
}

impl<'a> FeFunction<'a> {
    pub fn zeros(space: &'a FeSpace) -> Self {
        FeFunction {
            space,
            values: vec![0.0; space.dofmap.n_total],
        }
    }

    /// Coefficients on the free DOFs, zero on eliminated ones.
    pub fn from_free(space: &'a FeSpace, free: &[f64]) -> Result<Self> {
        if free.len() != space.n_free() {
            return Err(Error::Space(format!(
                "coefficient vector of length {} for {} free DOFs",
                free.len(),
                space.n_free()
            )));
        }
        let mut f = Self::zeros(space);
        for (k, &g) in space.dofmap.free_to_global.iter().enumerate() {
            f.values[g] = free[k];
        }
        Ok(f)
    }

    /// Canonical interpolant: every DOF functional applied to `f`.
    pub fn interpolate(space: &'a FeSpace, f: &dyn ScalarField) -> Result<Self> {
        let mut out = Self::zeros(space);
        for (g, &(e, li)) in space.dofmap.owner.iter().enumerate() {
            let dof = &space.bases[e].dofs[li];
            let shape = &space.mesh.elements[e].shape;
            out.values[g] = apply_functional(&dof.functional, shape, f)?;
        }
        Ok(out)
    }

    pub fn free_values(&self) -> Vec<f64> {
        self.space.dofmap.free_to_global.iter().map(|&g| self.values[g]).collect()
    }

    pub fn local_coefficients(&self, e: usize) -> Vec<f64> {
        self.space.dofmap.local_to_global[e].iter().map(|&g| self.values[g]).collect()
    }

    /// The restriction u_h|_K as a polynomial.
    pub fn local(&self, e: usize) -> ElementPoly {
        self.space.bases[e].combine(&self.local_coefficients(e))
    }

    pub fn eval(&self, x: [f64; 2], gamma: &MultiIndex) -> Result<f64> {
        eval_fe(self, x, gamma)
    }
}

/// D^gamma u_h(x), evaluated on the element containing `x`.
pub fn eval_fe(u: &FeFunction<'_>, x: [f64; 2], gamma: &MultiIndex) -> Result<f64> {
    let e = u.space.mesh.locate(x).ok_or(Error::PointOutside(x[0], x[1]))?;
    let vals = u.space.bases[e].eval(x, gamma)?;
    Ok(vals.iter().zip(u.local_coefficients(e)).map(|(a, b)| a * b).sum())
}

/// Location of each global DOF's functional (facet midpoint for means).
pub fn dof_locations(space: &FeSpace) -> Vec<[f64; 2]> {
    space
        .dofmap
        .owner
        .iter()
        .map(|&(e, li)| match space.bases[e].dofs[li].functional {
            Functional::PointValue(x) | Functional::Slope(x) => x,
            Functional::EdgeMean(f) => {
                let shape = &space.mesh.elements[e].shape;
                let [a, b] = shape.kind.facets()[f];
                let (p, q) = (shape.vertices[a], shape.vertices[b]);
                [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FnField, Monomial};
    use crate::geometry::CellKind;
    use crate::mesh::{interval_mesh, rect_mesh, tri_mesh_from_rect, unit_mesh, SplitRule};

    #[test]
    fn dof_counts() {
        let s = FeSpace::new(interval_mesh(0.0, 1.0, 4, 1.0).unwrap(), Family::P1, 1).unwrap();
        assert_eq!(s.dofmap.n_total, 5);
        assert_eq!(s.n_free(), 3);
        let two = tri_mesh_from_rect(&rect_mesh(1, 1, [0.0; 2], [1.0; 2], [1.0; 2]).unwrap(), SplitRule::Fixed).unwrap();
        let s = FeSpace::new(two, Family::Cr, 1).unwrap();
        assert_eq!(s.dofmap.n_total, 5);
        assert_eq!(s.n_free(), 1);
        let s = FeSpace::new(interval_mesh(0.0, 1.0, 4, 1.0).unwrap(), Family::Hermite, 2).unwrap();
        assert_eq!(s.dofmap.n_total, 10);
        assert_eq!(s.n_free(), 6);
        let p3 = FeSpace::new(unit_mesh(2, CellKind::Triangle, 4).unwrap(), Family::P3, 1).unwrap();
        // (3n+1)^2 nodes
        assert_eq!(p3.dofmap.n_total, 169);
        assert_eq!(p3.n_free(), 121);
        let alt = tri_mesh_from_rect(&rect_mesh(4, 4, [0.0; 2], [1.0; 2], [1.0; 2]).unwrap(), SplitRule::Alternating).unwrap();
        assert_eq!(FeSpace::new(alt, Family::P2, 1).unwrap().n_free(), 49);
        let q = FeSpace::new(unit_mesh(2, CellKind::Rectangle, 4).unwrap(), Family::Intermediate, 1).unwrap();
        // vertices 25 + 2 per edge * 40 edges + 3 per cell * 16
        assert_eq!(q.dofmap.n_total, 25 + 80 + 48);
        assert!(FeSpace::new(unit_mesh(2, CellKind::Rectangle, 2).unwrap(), Family::Cr, 1).is_err());
        assert!(FeSpace::new(unit_mesh(1, CellKind::Interval, 2).unwrap(), Family::P1, 2).is_err());
    }

    #[test]
    fn p1_interval_stencils() {
        let h = 0.125;
        let s = FeSpace::new(interval_mesh(0.0, 1.0, 8, 1.0).unwrap(), Family::P1, 1).unwrap();
        let p = assemble(&s, false).unwrap();
        // free DOF 3 is an interior node with both neighbours free
        let row = 3;
        let (a, b) = (&p.a, &p.b);
        assert!((a.get(row, row) - 2.0 / h).abs() < 1e-14 * 2.0 / h);
        assert!((a.get(row, row - 1) + 1.0 / h).abs() < 1e-14 / h);
        assert!((a.get(row, row + 1) + 1.0 / h).abs() < 1e-14 / h);
        assert!((b.get(row, row) - 2.0 * h / 3.0).abs() < 1e-15);
        assert!((b.get(row, row + 1) - h / 6.0).abs() < 1e-15);
        assert!(a.max_asymmetry() <= 1e-12 * a.max_abs());
    }

    #[test]
    fn q1_single_cell_has_no_free_dofs() {
        let s = FeSpace::new(unit_mesh(2, CellKind::Rectangle, 1).unwrap(), Family::Q1, 1).unwrap();
        assert_eq!(s.n_free(), 0);
        assert_eq!(assemble(&s, false).unwrap().n_free(), 0);
    }

    #[test]
    fn hermite_stiffness_diagonal() {
        let n = 8;
        let h = 1.0 / n as f64;
        let s = FeSpace::new(interval_mesh(0.0, 1.0, n, 1.0).unwrap(), Family::Hermite, 2).unwrap();
        let p = assemble(&s, false).unwrap();
        let g = s.dofmap.local_to_global[2][0];
        let f = s.dofmap.free_index[g].unwrap();
        let want = 24.0 / h.powi(3);
        assert!((p.a.get(f, f) - want).abs() < 1e-10 * want);
    }

    #[test]
    fn parallel_assembly_is_bitwise_identical() {
        let s = FeSpace::new(unit_mesh(2, CellKind::Triangle, 6).unwrap(), Family::P2, 1).unwrap();
        assert_eq!(assemble(&s, false).unwrap(), assemble(&s, true).unwrap());
    }

    #[test]
    fn mass_sums_to_domain_measure() {
        for (mesh, fam) in [
            (unit_mesh(2, CellKind::Triangle, 3).unwrap(), Family::P2),
            (unit_mesh(2, CellKind::Rectangle, 3).unwrap(), Family::Q2),
            (rect_mesh(3, 2, [0.0; 2], [2.0, 1.0], [1.5, 1.0]).unwrap(), Family::Q1),
            (interval_mesh(0.0, 1.0, 5, 1.0).unwrap(), Family::P3),
        ] {
            let area = mesh.domain_measure();
            let s = FeSpace::new(mesh, fam, 1).unwrap();
            let (_, b) = assemble_full(&s).unwrap();
            let total: f64 = (0..b.n()).flat_map(|i| b.row_entries(i).map(|(_, v)| v).collect::<Vec<_>>()).sum();
            assert!((total - area).abs() < 1e-12 * area, "{fam}");
        }
    }

    #[test]
    fn linears_are_discretely_harmonic() {
        for (mesh, fam) in [
            (unit_mesh(2, CellKind::Triangle, 4).unwrap(), Family::P1),
            (unit_mesh(2, CellKind::Triangle, 3).unwrap(), Family::P3),
            (unit_mesh(2, CellKind::Rectangle, 3).unwrap(), Family::Q2),
            (unit_mesh(2, CellKind::Rectangle, 3).unwrap(), Family::S3),
            (unit_mesh(2, CellKind::Rectangle, 3).unwrap(), Family::Intermediate),
        ] {
            let s = FeSpace::new(mesh, fam, 1).unwrap();
            let f = FnField {
                dim: 2,
                f: |x: [f64; 2]| 0.3 + 2.0 * x[0] - 1.5 * x[1],
            };
            let u = FeFunction::interpolate(&s, &f).unwrap();
            let (a, _) = assemble_full(&s).unwrap();
            let r = a.matvec(&u.values);
            for &g in &s.dofmap.free_to_global {
                assert!(r[g].abs() < 1e-10, "{fam}: {}", r[g]);
            }
        }
    }

    #[test]
    fn fe_function_evaluation() {
        let s = FeSpace::new(interval_mesh(0.0, 1.0, 7, 1.0).unwrap(), Family::P1, 1).unwrap();
        let z = FeFunction::zeros(&s);
        assert_eq!(z.eval([0.3, 0.0], &MultiIndex::new1(0)).unwrap(), 0.0);
        let u = FeFunction::interpolate(&s, &Monomial::new(MultiIndex::new1(1))).unwrap();
        for k in 0..20 {
            let x = (k as f64 + 0.37) / 20.0;
            assert!((u.eval([x, 0.0], &MultiIndex::new1(0)).unwrap() - x).abs() < 1e-14);
        }
        assert!(matches!(u.eval([1.5, 0.0], &MultiIndex::new1(0)), Err(Error::PointOutside(..))));
        let free = u.free_values();
        assert_eq!(FeFunction::from_free(&s, &free).unwrap().free_values(), free);
    }

    #[test]
    fn cr_jump_has_zero_mean() {
        let s = FeSpace::new(unit_mesh(2, CellKind::Triangle, 3).unwrap(), Family::Cr, 1).unwrap();
        let free: Vec<f64> = (0..s.n_free()).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let u = FeFunction::from_free(&s, &free).unwrap();
        let mut checked = 0;
        for f in s.mesh.facets.iter().filter(|f| !f.boundary) {
            let (e1, l1) = f.neighbors[0];
            let (e2, _) = f.neighbors[1];
            let q = s.mesh.elements[e1].shape.facet_quadrature(l1, 3).unwrap();
            let (p1, p2) = (u.local(e1), u.local(e2));
            let jump: f64 = q.iter().map(|(x, w)| w * (p1.value(*x) - p2.value(*x))).sum();
            let pointwise = q.iter().map(|(x, _)| (p1.value(*x) - p2.value(*x)).abs()).fold(0.0, f64::max);
            assert!(jump.abs() < 1e-14);
            if pointwise > 1e-6 {
                checked += 1;
            }
        }
        // nonconforming: some jumps are pointwise nonzero
        assert!(checked > 0);
    }
}
