//! Lattice-generated interval, rectangle and triangle meshes with facet
//! connectivity, interior-subdomain tags and regularity metrics.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CellKind, ElementShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: usize,
    pub kind: CellKind,
    /// Global vertex ids in local order.
    pub vertices: Vec<usize>,
    pub shape: ElementShape,
    /// h_{K,i}: bounding-box extents.
    pub sizes: [f64; 2],
    /// h_K.
    pub diameter: f64,
    /// tau_K.
    pub inscribed: f64,
    /// Lattice cell (i, j) the element was generated from.
    pub cell: [usize; 2],
    /// Element lies entirely inside the interior subdomain G.
    pub in_g: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub id: usize,
    /// Endpoint vertex ids, ascending (both equal in 1D).
    pub vertices: [usize; 2],
    /// (element id, local facet index) for each adjacent element.
    pub neighbors: Vec<(usize, usize)>,
    pub boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRule {
    /// Every rectangle cut along the (x0,y0)-(x1,y1) diagonal.
    Fixed,
    /// Checkerboard alternation of the two diagonals.
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub dim: usize,
    pub kind: CellKind,
    pub vertices: Vec<[f64; 2]>,
    pub vertex_on_boundary: Vec<bool>,
    pub elements: Vec<Element>,
    pub facets: Vec<Facet>,
    /// Global facet id of each local facet, per element.
    pub element_facets: Vec<Vec<usize>>,
    pub domain: ([f64; 2], [f64; 2]),
    /// The interior subdomain G = [1/4, 3/4]^n scaled to the domain.
    pub subdomain: ([f64; 2], [f64; 2]),
    /// Lattice node coordinates per direction.
    pub grid: [Vec<f64>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// min_K h_K / tau_K.
    pub sigma: f64,
    /// max_K h_K / tau_K.
    pub max_aspect: f64,
    /// max_K h / h_K.
    pub beta: f64,
    /// h = max_K h_K.
    pub h: f64,
}

fn graded_nodes(a: f64, b: f64, n: usize, g: f64) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let t = if g == 1.0 { t } else { t.powf(g) };
            if i == n {
                b
            } else {
                a + (b - a) * t
            }
        })
        .collect()
}

fn quarter_box(lo: [f64; 2], hi: [f64; 2], dim: usize) -> ([f64; 2], [f64; 2]) {
    let mut glo = [0.0; 2];
    let mut ghi = [0.0; 2];
    for d in 0..dim {
        glo[d] = lo[d] + 0.25 * (hi[d] - lo[d]);
        ghi[d] = lo[d] + 0.75 * (hi[d] - lo[d]);
    }
    (glo, ghi)
}

fn make_element(id: usize, kind: CellKind, verts: Vec<usize>, coords: &[[f64; 2]], cell: [usize; 2]) -> Element {
    let pts: Vec<[f64; 2]> = verts.iter().map(|&v| coords[v]).collect();
    let shape = match kind {
        CellKind::Interval => ElementShape::interval(pts[0][0], pts[1][0]),
        CellKind::Rectangle => ElementShape::rectangle(pts[0], pts[2]),
        CellKind::Triangle => ElementShape::triangle(pts[0], pts[1], pts[2]),
    };
    Element {
        id,
        kind,
        sizes: shape.sizes(),
        diameter: shape.diameter(),
        inscribed: shape.inscribed_diameter(),
        shape,
        vertices: verts,
        cell,
        in_g: false,
    }
}

impl Mesh {
    fn finish(mut self) -> Self {
        let mut map: HashMap<[usize; 2], usize> = HashMap::new();
        let mut facets: Vec<Facet> = Vec::new();
        let mut element_facets = Vec::with_capacity(self.elements.len());
        for el in &self.elements {
            let mut ef = Vec::new();
            for (lf, [a, b]) in el.kind.facets().iter().enumerate() {
                let (va, vb) = (el.vertices[*a], el.vertices[*b]);
                let key = [va.min(vb), va.max(vb)];
                let id = *map.entry(key).or_insert_with(|| {
                    facets.push(Facet {
                        id: facets.len(),
                        vertices: key,
                        neighbors: Vec::new(),
                        boundary: false,
                    });
                    facets.len() - 1
                });
                facets[id].neighbors.push((el.id, lf));
                ef.push(id);
            }
            element_facets.push(ef);
        }
        let mut on_bnd = vec![false; self.vertices.len()];
        for f in &mut facets {
            f.boundary = f.neighbors.len() == 1;
            if f.boundary {
                on_bnd[f.vertices[0]] = true;
                on_bnd[f.vertices[1]] = true;
            }
        }
        let (glo, ghi) = self.subdomain;
        let dim = self.dim;
        for el in &mut self.elements {
            let (lo, hi) = el.shape.bounding_box();
            el.in_g = (0..dim).all(|d| {
                let tol = 1e-12 * (self.domain.1[d] - self.domain.0[d]);
                lo[d] >= glo[d] - tol && hi[d] <= ghi[d] + tol
            });
        }
        self.facets = facets;
        self.element_facets = element_facets;
        self.vertex_on_boundary = on_bnd;
        self
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Global mesh size h = max h_K.
    pub fn h(&self) -> f64 {
        self.elements.iter().map(|e| e.diameter).fold(0.0, f64::max)
    }

    /// Largest per-direction size max_K h_{K,i}.
    pub fn h_dir(&self, d: usize) -> f64 {
        self.elements.iter().map(|e| e.sizes[d]).fold(0.0, f64::max)
    }

    pub fn measure(&self) -> f64 {
        self.elements.iter().map(|e| e.shape.measure()).sum()
    }

    pub fn domain_measure(&self) -> f64 {
        let (lo, hi) = self.domain;
        (0..self.dim).map(|d| hi[d] - lo[d]).product()
    }

    pub fn is_tensor(&self) -> bool {
        matches!(self.kind, CellKind::Interval | CellKind::Rectangle)
    }

    pub fn cells_per_direction(&self) -> [usize; 2] {
        [
            self.grid[0].len().saturating_sub(1),
            self.grid[1].len().saturating_sub(1).max(if self.dim == 1 { 1 } else { 0 }),
        ]
    }

    pub fn regularity(&self) -> RegularityReport {
        let h = self.h();
        let mut sigma = f64::INFINITY;
        let mut max_aspect: f64 = 0.0;
        let mut hmin = f64::INFINITY;
        for e in &self.elements {
            let ratio = e.diameter / e.inscribed;
            sigma = sigma.min(ratio);
            max_aspect = max_aspect.max(ratio);
            hmin = hmin.min(e.diameter);
        }
        RegularityReport {
            sigma,
            max_aspect,
            beta: h / hmin,
            h,
        }
    }

    /// Element containing `x`; points on shared facets go to one of the
    /// adjacent elements.
    pub fn locate(&self, x: [f64; 2]) -> Option<usize> {
        let cell_of = |nodes: &[f64], v: f64| -> Option<usize> {
            let n = nodes.len() - 1;
            let tol = 1e-12 * (nodes[n] - nodes[0]);
            if v < nodes[0] - tol || v > nodes[n] + tol {
                return None;
            }
            let idx = nodes.partition_point(|&t| t <= v);
            Some(idx.saturating_sub(1).min(n - 1))
        };
        let i = cell_of(&self.grid[0], x[0])?;
        match self.kind {
            CellKind::Interval => Some(i),
            CellKind::Rectangle | CellKind::Triangle => {
                let j = cell_of(&self.grid[1], x[1])?;
                let nx = self.grid[0].len() - 1;
                let rect = j * nx + i;
                if self.kind == CellKind::Rectangle {
                    return Some(rect);
                }
                let (a, b) = (2 * rect, 2 * rect + 1);
                if self.elements[a].shape.contains(x, 1e-12) {
                    Some(a)
                } else {
                    Some(b)
                }
            }
        }
    }

    /// Serializable view: vertices, cells and G tags.
    pub fn dump(&self) -> MeshDump {
        MeshDump {
            dim: self.dim,
            kind: self.kind,
            vertices: self.vertices.iter().map(|v| v[..self.dim].to_vec()).collect(),
            cells: self.elements.iter().map(|e| e.vertices.clone()).collect(),
            in_g: self.elements.iter().map(|e| e.in_g).collect(),
            boundary_facets: self.facets.iter().filter(|f| f.boundary).map(|f| f.vertices).collect(),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.dump())?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDump {
    pub dim: usize,
    pub kind: CellKind,
    pub vertices: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
    pub in_g: Vec<bool>,
    pub boundary_facets: Vec<[usize; 2]>,
}

/// Interval mesh with nodes a + (b - a)(i / cells)^g.
pub fn interval_mesh(a: f64, b: f64, cells: usize, grading: f64) -> Result<Mesh> {
    if cells == 0 {
        return Err(Error::Mesh("interval mesh needs at least one cell".into()));
    }
    if !(b > a) || !(grading > 0.0) {
        return Err(Error::Mesh(format!("invalid interval ({a}, {b}) or grading {grading}")));
    }
    let xs = graded_nodes(a, b, cells, grading);
    let coords: Vec<[f64; 2]> = xs.iter().map(|&x| [x, 0.0]).collect();
    let elements = (0..cells)
        .map(|i| make_element(i, CellKind::Interval, vec![i, i + 1], &coords, [i, 0]))
        .collect();
    Ok(Mesh {
        dim: 1,
        kind: CellKind::Interval,
        vertices: coords,
        vertex_on_boundary: Vec::new(),
        elements,
        facets: Vec::new(),
        element_facets: Vec::new(),
        domain: ([a, 0.0], [b, 0.0]),
        subdomain: quarter_box([a, 0.0], [b, 0.0], 1),
        grid: [xs, vec![0.0]],
    }
    .finish())
}

/// nx x ny axis-aligned rectangles on [lo, hi] with per-direction grading.
pub fn rect_mesh(nx: usize, ny: usize, lo: [f64; 2], hi: [f64; 2], grading: [f64; 2]) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::Mesh(format!("rectangle mesh needs nx, ny >= 1 (got {nx} x {ny})")));
    }
    if !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return Err(Error::Mesh(format!("degenerate box {lo:?} - {hi:?}")));
    }
    if !(grading[0] > 0.0 && grading[1] > 0.0) {
        return Err(Error::Mesh(format!("invalid grading {grading:?}")));
    }
    let xs = graded_nodes(lo[0], hi[0], nx, grading[0]);
    let ys = graded_nodes(lo[1], hi[1], ny, grading[1]);
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    for y in &ys {
        for x in &xs {
            coords.push([*x, *y]);
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let verts = vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)];
            elements.push(make_element(elements.len(), CellKind::Rectangle, verts, &coords, [i, j]));
        }
    }
    Ok(Mesh {
        dim: 2,
        kind: CellKind::Rectangle,
        vertices: coords,
        vertex_on_boundary: Vec::new(),
        elements,
        facets: Vec::new(),
        element_facets: Vec::new(),
        domain: (lo, hi),
        subdomain: quarter_box(lo, hi, 2),
        grid: [xs, ys],
    }
    .finish())
}

/// Uniform mesh of the unit square (or interval) with `n` cells per direction.
pub fn unit_mesh(dim: usize, kind: CellKind, n: usize) -> Result<Mesh> {
    match (dim, kind) {
        (1, CellKind::Interval) => interval_mesh(0.0, 1.0, n, 1.0),
        (2, CellKind::Rectangle) => rect_mesh(n, n, [0.0; 2], [1.0; 2], [1.0; 2]),
        (2, CellKind::Triangle) => tri_mesh_from_rect(&rect_mesh(n, n, [0.0; 2], [1.0; 2], [1.0; 2])?, SplitRule::Fixed),
        _ => Err(Error::Mesh(format!("no {kind:?} cells in dimension {dim}"))),
    }
}

/// Splits each rectangle into two triangles.
pub fn tri_mesh_from_rect(rect: &Mesh, rule: SplitRule) -> Result<Mesh> {
    if rect.kind != CellKind::Rectangle {
        return Err(Error::Mesh("triangulation requires a rectangle mesh".into()));
    }
    let mut elements = Vec::with_capacity(2 * rect.len());
    for r in &rect.elements {
        let [v0, v1, v2, v3] = [r.vertices[0], r.vertices[1], r.vertices[2], r.vertices[3]];
        let anti = rule == SplitRule::Alternating && (r.cell[0] + r.cell[1]) % 2 == 1;
        let (t0, t1) = if anti {
            (vec![v0, v1, v3], vec![v1, v2, v3])
        } else {
            (vec![v0, v1, v2], vec![v0, v2, v3])
        };
        for t in [t0, t1] {
            elements.push(make_element(elements.len(), CellKind::Triangle, t, &rect.vertices, r.cell));
        }
    }
    Ok(Mesh {
        dim: 2,
        kind: CellKind::Triangle,
        vertices: rect.vertices.clone(),
        vertex_on_boundary: Vec::new(),
        elements,
        facets: Vec::new(),
        element_facets: Vec::new(),
        domain: rect.domain,
        subdomain: rect.subdomain,
        grid: rect.grid.clone(),
    }
    .finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_interval() {
        let m = interval_mesh(0.0, 1.0, 4, 1.0).unwrap();
        assert_eq!(m.len(), 4);
        for e in &m.elements {
            assert_eq!(e.sizes[0], 0.25);
        }
        assert_eq!(m.facets.len(), 5);
        assert_eq!(m.facets.iter().filter(|f| f.boundary).count(), 2);
        assert!(interval_mesh(0.0, 1.0, 0, 1.0).is_err());
    }

    #[test]
    fn graded_interval() {
        let m = interval_mesh(0.0, 1.0, 2, 2.0).unwrap();
        assert_eq!(m.grid[0], vec![0.0, 0.25, 1.0]);
        assert_eq!(m.elements[1].sizes[0], 0.75);
        let r = m.regularity();
        assert!((r.beta - 3.0).abs() < 1e-15);
        assert_eq!(r.h, 0.75);
        let total: f64 = interval_mesh(0.0, 1.0, 37, 1.7).unwrap().elements.iter().map(|e| e.sizes[0]).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert_eq!(interval_mesh(0.0, 1.0, 64, 1.0).unwrap().regularity().beta, 1.0);
    }

    #[test]
    fn rect_meshes() {
        let m = rect_mesh(4, 4, [0.0; 2], [1.0; 2], [1.0; 2]).unwrap();
        assert_eq!(m.len(), 16);
        assert!(m.elements.iter().all(|e| e.sizes == [0.25, 0.25]));
        let a = rect_mesh(8, 2, [0.0; 2], [1.0; 2], [1.0; 2]).unwrap();
        assert!(a.elements.iter().all(|e| e.sizes == [0.125, 0.5]));
        let r = m.regularity();
        assert!((r.sigma - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(rect_mesh(8, 8, [0.0; 2], [1.0; 2], [1.0; 2]).unwrap().regularity().beta, 1.0);
        assert!(rect_mesh(2, 2, [0.0; 2], [0.0, 1.0], [1.0; 2]).is_err());
        // G tags: 4x4 mesh has the central 2x2 block inside [1/4, 3/4]^2
        assert_eq!(m.elements.iter().filter(|e| e.in_g).count(), 4);
    }

    #[test]
    fn triangulations() {
        let one = tri_mesh_from_rect(&rect_mesh(1, 1, [0.0; 2], [1.0; 2], [1.0; 2]).unwrap(), SplitRule::Fixed).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(one.facets.len(), 5);
        let m = unit_mesh(2, CellKind::Triangle, 4).unwrap();
        assert_eq!(m.len(), 32);
        assert_eq!(m.facets.iter().filter(|f| f.boundary).count(), 16);
        for e in &m.elements {
            assert!((e.diameter / e.inscribed - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        }
        let alt = tri_mesh_from_rect(&rect_mesh(4, 4, [0.0; 2], [1.0; 2], [1.0; 2]).unwrap(), SplitRule::Alternating).unwrap();
        assert_eq!(alt.facets.iter().filter(|f| f.boundary).count(), 16);
        assert_eq!(alt.facets.len(), 56);
    }

    #[test]
    fn facet_neighbors_symmetric_and_measure_consistent() {
        for m in [
            unit_mesh(2, CellKind::Triangle, 5).unwrap(),
            rect_mesh(3, 7, [0.0, -1.0], [2.0, 1.0], [1.3, 1.0]).unwrap(),
            interval_mesh(-1.0, 2.0, 9, 1.5).unwrap(),
        ] {
            for f in &m.facets {
                assert!(f.neighbors.len() == 1 || f.neighbors.len() == 2);
                for &(e, lf) in &f.neighbors {
                    assert_eq!(m.element_facets[e][lf], f.id);
                }
            }
            for (e, ef) in m.element_facets.iter().enumerate() {
                for (lf, &f) in ef.iter().enumerate() {
                    assert!(m.facets[f].neighbors.contains(&(e, lf)));
                }
            }
            assert!((m.measure() - m.domain_measure()).abs() <= 1e-12 * m.domain_measure());
        }
    }

    #[test]
    fn refinement_is_nested_bitwise() {
        let c = rect_mesh(4, 4, [0.0; 2], [1.0; 2], [1.0; 2]).unwrap();
        let f = rect_mesh(8, 8, [0.0; 2], [1.0; 2], [1.0; 2]).unwrap();
        for (i, x) in c.grid[0].iter().enumerate() {
            assert_eq!(*x, f.grid[0][2 * i]);
        }
        assert_eq!(c.elements[0].sizes[0] / 2.0, f.elements[0].sizes[0]);
        let g = interval_mesh(0.0, 1.0, 6, 2.0).unwrap();
        let g2 = interval_mesh(0.0, 1.0, 12, 2.0).unwrap();
        for (i, x) in g.grid[0].iter().enumerate() {
            assert_eq!(*x, g2.grid[0][2 * i]);
        }
    }

    #[test]
    fn locate_points() {
        let m = unit_mesh(2, CellKind::Triangle, 4).unwrap();
        for x in [[0.1, 0.05], [0.1, 0.2], [0.99, 0.99], [0.0, 0.0], [1.0, 0.5]] {
            let e = m.locate(x).unwrap();
            assert!(m.elements[e].shape.contains(x, 1e-12));
        }
        assert!(m.locate([1.5, 0.5]).is_none());
        let i = interval_mesh(0.0, 1.0, 4, 1.0).unwrap();
        assert_eq!(i.locate([0.3, 0.0]), Some(1));
        assert_eq!(i.locate([1.0, 0.0]), Some(3));
    }

    #[test]
    fn json_dump_roundtrip() {
        let m = unit_mesh(2, CellKind::Rectangle, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mesh.json");
        m.write_json(&p).unwrap();
        let back: MeshDump = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(back, m.dump());
        assert_eq!(back.cells.len(), 4);
    }
}
