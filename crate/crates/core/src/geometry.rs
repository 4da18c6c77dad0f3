//! Element shapes, their local scaled frames and physical quadrature.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Interval,
    Rectangle,
    Triangle,
}

impl CellKind {
    pub fn dim(self) -> usize {
        match self {
            CellKind::Interval => 1,
            _ => 2,
        }
    }

    pub fn vertex_count(self) -> usize {
        match self {
            CellKind::Interval => 2,
            CellKind::Rectangle => 4,
            CellKind::Triangle => 3,
        }
    }

    /// Local facets as pairs of local vertex indices. Interval facets are
    /// single points (second entry repeated).
    pub fn facets(self) -> &'static [[usize; 2]] {
        match self {
            CellKind::Interval => &[[0, 0], [1, 1]],
            CellKind::Rectangle => &[[0, 1], [1, 2], [2, 3], [3, 0]],
            CellKind::Triangle => &[[0, 1], [1, 2], [2, 0]],
        }
    }
}

/// Per-element affine map to scaled coordinates: each coordinate of the
/// bounding box is mapped to [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub dim: usize,
    pub center: [f64; 2],
    pub half: [f64; 2],
}

impl LocalFrame {
    /// The reference frame: identity map on [-1, 1]^dim.
    pub fn reference(dim: usize) -> Self {
        LocalFrame {
            dim,
            center: [0.0; 2],
            half: [1.0, 1.0],
        }
    }

    pub fn to_local(&self, x: [f64; 2]) -> [f64; 2] {
        let mut xi = [0.0; 2];
        for d in 0..self.dim {
            xi[d] = (x[d] - self.center[d]) / self.half[d];
        }
        xi
    }

    pub fn to_physical(&self, xi: [f64; 2]) -> [f64; 2] {
        let mut x = [0.0; 2];
        for d in 0..self.dim {
            x[d] = self.center[d] + self.half[d] * xi[d];
        }
        x
    }

    /// Chain-rule factor turning a local derivative D_xi^gamma into the
    /// physical derivative D_x^gamma.
    pub fn derivative_scale(&self, gamma: [usize; 2]) -> f64 {
        let mut s = 1.0;
        for d in 0..self.dim {
            s /= self.half[d].powi(gamma[d] as i32);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementShape {
    pub kind: CellKind,
    pub vertices: Vec<[f64; 2]>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl ElementShape {
    pub fn interval(a: f64, b: f64) -> Self {
        ElementShape {
            kind: CellKind::Interval,
            vertices: vec![[a, 0.0], [b, 0.0]],
        }
    }

    pub fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> Self {
        ElementShape {
            kind: CellKind::Rectangle,
            vertices: vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]],
        }
    }

    pub fn triangle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Self {
        ElementShape {
            kind: CellKind::Triangle,
            vertices: vec![a, b, c],
        }
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        (lo, hi)
    }

    pub fn frame(&self) -> LocalFrame {
        let (lo, hi) = self.bounding_box();
        let dim = self.dim();
        let mut frame = LocalFrame {
            dim,
            center: [0.0; 2],
            half: [1.0; 2],
        };
        for d in 0..dim {
            frame.center[d] = 0.5 * (lo[d] + hi[d]);
            frame.half[d] = 0.5 * (hi[d] - lo[d]);
        }
        frame
    }

    /// Per-direction sizes h_{K,i} (bounding-box extents).
    pub fn sizes(&self) -> [f64; 2] {
        let (lo, hi) = self.bounding_box();
        match self.dim() {
            1 => [hi[0] - lo[0], 0.0],
            _ => [hi[0] - lo[0], hi[1] - lo[1]],
        }
    }

    /// h_K: maximum pairwise vertex distance.
    pub fn diameter(&self) -> f64 {
        let mut h: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                h = h.max(dist(*a, *b));
            }
        }
        h
    }

    /// tau_K: diameter of the largest inscribed ball.
    pub fn inscribed_diameter(&self) -> f64 {
        match self.kind {
            CellKind::Interval => self.diameter(),
            CellKind::Rectangle => {
                let s = self.sizes();
                s[0].min(s[1])
            }
            CellKind::Triangle => {
                let v = &self.vertices;
                let perimeter = dist(v[0], v[1]) + dist(v[1], v[2]) + dist(v[2], v[0]);
                4.0 * self.measure() / perimeter
            }
        }
    }

    pub fn measure(&self) -> f64 {
        match self.kind {
            CellKind::Interval | CellKind::Rectangle => {
                let s = self.sizes();
                if self.dim() == 1 {
                    s[0]
                } else {
                    s[0] * s[1]
                }
            }
            CellKind::Triangle => 0.5 * self.triangle_jacobian().abs(),
        }
    }

    fn triangle_jacobian(&self) -> f64 {
        let v = &self.vertices;
        (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.vertices.len() as f64;
        let mut c = [0.0; 2];
        for v in &self.vertices {
            c[0] += v[0] / n;
            c[1] += v[1] / n;
        }
        c
    }

    pub fn contains(&self, x: [f64; 2], tol: f64) -> bool {
        match self.kind {
            CellKind::Interval | CellKind::Rectangle => {
                let (lo, hi) = self.bounding_box();
                (0..self.dim()).all(|d| x[d] >= lo[d] - tol && x[d] <= hi[d] + tol)
            }
            CellKind::Triangle => {
                let [l0, l1, l2] = self.barycentric(x);
                l0 >= -tol && l1 >= -tol && l2 >= -tol
            }
        }
    }

    /// Barycentric coordinates of `x` (triangles only).
    pub fn barycentric(&self, x: [f64; 2]) -> [f64; 3] {
        let v = &self.vertices;
        let det = self.triangle_jacobian();
        let l1 = ((x[0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (x[1] - v[0][1])) / det;
        let l2 = ((v[1][0] - v[0][0]) * (x[1] - v[0][1]) - (x[0] - v[0][0]) * (v[1][1] - v[0][1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Physical quadrature points and weights. Boxes use `npts` Gauss points
    /// per direction; triangles use the collapsed rule with the same
    /// exactness 2 npts - 1.
    pub fn quadrature(&self, npts: usize) -> Result<Vec<([f64; 2], f64)>> {
        Ok(match self.kind {
            CellKind::Interval => {
                let g = quadrature::gauss_legendre(npts)?;
                let frame = self.frame();
                g.points
                    .iter()
                    .zip(&g.weights)
                    .map(|(p, w)| (frame.to_physical(*p), w * frame.half[0]))
                    .collect()
            }
            CellKind::Rectangle => {
                let g = quadrature::gauss_square(npts)?;
                let frame = self.frame();
                let jac = frame.half[0] * frame.half[1];
                g.points
                    .iter()
                    .zip(&g.weights)
                    .map(|(p, w)| (frame.to_physical(*p), w * jac))
                    .collect()
            }
            CellKind::Triangle => {
                let g = quadrature::triangle_collapsed(npts)?;
                let v = &self.vertices;
                let jac = self.triangle_jacobian().abs();
                g.points
                    .iter()
                    .zip(&g.weights)
                    .map(|(p, w)| {
                        let x = [
                            v[0][0] + (v[1][0] - v[0][0]) * p[0] + (v[2][0] - v[0][0]) * p[1],
                            v[0][1] + (v[1][1] - v[0][1]) * p[0] + (v[2][1] - v[0][1]) * p[1],
                        ];
                        (x, w * jac)
                    })
                    .collect()
            }
        })
    }

    /// Gauss points and weights along a local facet (length-weighted).
    /// For intervals the facet is a point with unit weight.
    pub fn facet_quadrature(&self, facet: usize, npts: usize) -> Result<Vec<([f64; 2], f64)>> {
        let [a, b] = self.kind.facets()[facet];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        if self.kind == CellKind::Interval {
            return Ok(vec![(pa, 1.0)]);
        }
        let len = dist(pa, pb);
        let g = quadrature::gauss_legendre(npts)?;
        Ok(g.points
            .iter()
            .zip(&g.weights)
            .map(|(p, w)| {
                let t = 0.5 * (p[0] + 1.0);
                (
                    [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])],
                    0.5 * w * len,
                )
            })
            .collect())
    }

    pub fn facet_length(&self, facet: usize) -> f64 {
        let [a, b] = self.kind.facets()[facet];
        dist(self.vertices[a], self.vertices[b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_ratio_is_sqrt2() {
        let s = ElementShape::rectangle([0.0, 0.0], [0.25, 0.25]);
        let ratio = s.diameter() / s.inscribed_diameter();
        assert!((ratio - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn right_isoceles_triangle_ratio() {
        let t = ElementShape::triangle([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]);
        // inradius (a + b - c) / 2 for legs a = b = 1, hypotenuse c = sqrt 2
        let tau = 2.0 * (2.0 - 2f64.sqrt()) / 2.0;
        assert!((t.inscribed_diameter() - tau).abs() < 1e-15);
        assert!((t.diameter() / t.inscribed_diameter() - (1.0 + 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn quadrature_measures() {
        let t = ElementShape::triangle([0.0, 0.0], [0.5, 0.0], [0.5, 0.25]);
        let q = t.quadrature(3).unwrap();
        let area: f64 = q.iter().map(|(_, w)| w).sum();
        assert!((area - t.measure()).abs() < 1e-15);
        let r = ElementShape::rectangle([1.0, 2.0], [1.5, 2.25]);
        let q = r.quadrature(2).unwrap();
        let m: f64 = q.iter().map(|(x, w)| w * x[0] * x[1]).sum();
        // int x dx over [1,1.5] = 0.625, int y dy over [2,2.25] = 0.53125
        assert!((m - 0.625 * 0.53125).abs() < 1e-14);
    }

    #[test]
    fn frame_roundtrip() {
        let r = ElementShape::rectangle([0.25, 0.5], [0.75, 0.625]);
        let f = r.frame();
        let x = [0.3, 0.55];
        let back = f.to_physical(f.to_local(x));
        assert!((back[0] - x[0]).abs() < 1e-15 && (back[1] - x[1]).abs() < 1e-15);
        assert_eq!(f.to_local([0.25, 0.5]), [-1.0, -1.0]);
    }
}
