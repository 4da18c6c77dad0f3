//! Gauss–Legendre rules on [-1, 1], tensor-product rules on [-1, 1]^2 and
//! positive-weight rules on the reference triangle {x, y >= 0, x + y <= 1}.

use crate::error::{Error, Result};

/// Largest supported number of Gauss–Legendre points.
pub const MAX_GAUSS_POINTS: usize = 20;

/// Largest polynomial degree served by [`triangle_rule`].
pub const MAX_TRIANGLE_DEGREE: usize = 10;

/// Points per direction per element used when integrating errors against
/// trigonometric exact eigenfunctions.
pub const OVERSAMPLED_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// 1 for the interval, 2 for the square and the triangle.
    pub dim: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Every polynomial of total degree <= `exact_degree` (per-direction
    /// degree for tensor rules) is integrated exactly.
    pub exact_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Legendre polynomial P_n(x) and its derivative by the three-term recurrence.
pub(crate) fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        // P_n'(+-1) = (+-1)^(n+1) n(n+1)/2
        let s = if x > 0.0 || n % 2 == 1 { 1.0 } else { -1.0 };
        s * nf * (nf + 1.0) / 2.0
    } else {
        nf * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

/// Gauss–Legendre rule with `npts` nodes, computed by Newton iteration on
/// P_npts.
pub fn gauss_legendre(npts: usize) -> Result<QuadratureRule> {
    if npts == 0 || npts > MAX_GAUSS_POINTS {
        return Err(Error::Quadrature(format!(
            "Gauss-Legendre point count {npts} outside 1..={MAX_GAUSS_POINTS}"
        )));
    }
    let n = npts;
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, descending from +1.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        xs[n - 1 - i] = x;
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        xs[n / 2] = 0.0;
    }
    Ok(QuadratureRule {
        dim: 1,
        points: xs.into_iter().map(|x| [x, 0.0]).collect(),
        weights: ws,
        exact_degree: 2 * n - 1,
    })
}

/// Tensor product of two 1D rules on [-1, 1]^2.
pub fn tensor_rule(rule_x: &QuadratureRule, rule_y: &QuadratureRule) -> QuadratureRule {
    let mut points = Vec::with_capacity(rule_x.len() * rule_y.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for (py, wy) in rule_y.points.iter().zip(&rule_y.weights) {
        for (px, wx) in rule_x.points.iter().zip(&rule_x.weights) {
            points.push([px[0], py[0]]);
            weights.push(wx * wy);
        }
    }
    QuadratureRule {
        dim: 2,
        points,
        weights,
        exact_degree: rule_x.exact_degree.min(rule_y.exact_degree),
    }
}

/// Tensor Gauss rule on [-1, 1]^2 with `npts` points per direction.
pub fn gauss_square(npts: usize) -> Result<QuadratureRule> {
    let g = gauss_legendre(npts)?;
    Ok(tensor_rule(&g, &g))
}

/// Collapsed (Duffy) rule on the reference triangle: Gauss in the collapsed
/// direction with `npts + 1` points and `npts` points along the fibres.
/// Exact for total degree `2 npts - 1`.
pub fn triangle_collapsed(npts: usize) -> Result<QuadratureRule> {
    let gs = gauss_legendre(npts + 1)?;
    let gt = gauss_legendre(npts)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (ps, ws) in gs.points.iter().zip(&gs.weights) {
        let s = 0.5 * (ps[0] + 1.0);
        for (pt, wt) in gt.points.iter().zip(&gt.weights) {
            let t = 0.5 * (pt[0] + 1.0);
            points.push([s, t * (1.0 - s)]);
            weights.push(0.25 * ws * wt * (1.0 - s));
        }
    }
    Ok(QuadratureRule {
        dim: 2,
        points,
        weights,
        exact_degree: 2 * npts - 1,
    })
}

/// Positive-weight rule on the reference triangle exact for all monomials of
/// total degree <= `degree`.
pub fn triangle_rule(degree: usize) -> Result<QuadratureRule> {
    match degree {
        0 | 1 => Ok(QuadratureRule {
            dim: 2,
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            exact_degree: 1,
        }),
        2 => Ok(QuadratureRule {
            dim: 2,
            points: vec![[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]],
            weights: vec![1.0 / 6.0; 3],
            exact_degree: 2,
        }),
        d if d <= MAX_TRIANGLE_DEGREE => {
            let mut rule = triangle_collapsed((d + 2) / 2)?;
            rule.exact_degree = d.max(rule.exact_degree);
            Ok(rule)
        }
        d => Err(Error::Quadrature(format!(
            "triangle rule of degree {d} exceeds {MAX_TRIANGLE_DEGREE}"
        ))),
    }
}

/// Closed-form moment of x^a y^b over the reference triangle: a! b! / (a+b+2)!.
pub fn triangle_moment(a: usize, b: usize) -> f64 {
    let fact = |k: usize| (1..=k).fold(1.0, |acc, i| acc * i as f64);
    fact(a) * fact(b) / fact(a + b + 2)
}

/// Moment of x^k over [-1, 1].
pub fn interval_moment(k: usize) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        2.0 / (k as f64 + 1.0)
    }
}
