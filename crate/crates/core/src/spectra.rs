//! Closed-form reference spectra and asymptotic eigenvalue estimators.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{sine_derivative, ScalarField, SineProduct};
use crate::polyspace::{indices_of_order, operator_split, MultiIndex};
use crate::quadrature::gauss_legendre;

/// An exact eigenfunction with analytic derivatives of every order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Eigenfunction {
    /// scale * prod sin(k_d pi x_d).
    Sine { dim: usize, modes: [usize; 2], scale: f64 },
    Beam(BeamMode),
}

impl ScalarField for Eigenfunction {
    fn dim(&self) -> usize {
        match self {
            Eigenfunction::Sine { dim, .. } => *dim,
            Eigenfunction::Beam(_) => 1,
        }
    }

    fn derivative(&self, x: [f64; 2], gamma: MultiIndex) -> f64 {
        match *self {
            Eigenfunction::Sine { dim, modes, scale } => SineProduct { dim, modes, scale }.derivative(x, gamma),
            Eigenfunction::Beam(b) => b.derivative_1d(x[0], gamma.get(0)),
        }
    }
}

/// Clamped-beam mode in the overflow-free exponential form
/// scale * (a e^{k(x-1)} + c e^{-kx} - cos kx + s sin kx).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamMode {
    pub kappa: f64,
    a: f64,
    c: f64,
    s: f64,
    scale: f64,
}

impl BeamMode {
    fn new(kappa: f64) -> Self {
        let em = (-kappa).exp();
        let (sk, ck) = kappa.sin_cos();
        let d = 1.0 - em * em - 2.0 * sk * em;
        let s = (1.0 + em * em - 2.0 * ck * em) / d;
        let a = (ck - sk - em) / d;
        let c = 0.5 * (1.0 + s);
        let mut mode = BeamMode {
            kappa,
            a,
            c,
            s,
            scale: 1.0,
        };
        let norm2 = oversampled_integral_1d(|x| mode.derivative_1d(x, 0).powi(2));
        mode.scale = 1.0 / norm2.sqrt();
        mode
    }

    pub fn derivative_1d(&self, x: f64, n: usize) -> f64 {
        let k = self.kappa;
        let kn = k.powi(n as i32);
        let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        let cos_n = kn * (k * x + (n % 4) as f64 * std::f64::consts::FRAC_PI_2).cos();
        let v = self.a * kn * (k * (x - 1.0)).exp() + self.c * sign * kn * (-k * x).exp() - cos_n
            + self.s * sine_derivative(k, n, x);
        self.scale * v
    }
}

/// Composite Gauss integral over (0,1) with 64 panels of 12 points.
fn oversampled_integral_1d(f: impl Fn(f64) -> f64) -> f64 {
    let rule = gauss_legendre(12).expect("12-point rule");
    let panels = 64;
    let h = 1.0 / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let c = (p as f64 + 0.5) * h;
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            s += 0.5 * h * w * f(c + 0.5 * h * x[0]);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactEigenpair {
    pub lambda: f64,
    pub multiplicity: usize,
    /// Mode labels, one per member of the eigenspace.
    pub modes: Vec<Vec<usize>>,
    /// Orthonormal eigenfunctions spanning the eigenspace.
    pub functions: Vec<Eigenfunction>,
    /// Order of the operator: 1 for the Laplacian, 2 for the biharmonic.
    pub m: usize,
}

impl ExactEigenpair {
    pub fn function(&self) -> &Eigenfunction {
        &self.functions[0]
    }
}

/// lambda_k = k^2 pi^2, u_k = sqrt(2) sin(k pi x) on (0,1).
pub fn laplace_interval(count: usize) -> Vec<ExactEigenpair> {
    (1..=count)
        .map(|k| ExactEigenpair {
            lambda: (k * k) as f64 * PI * PI,
            multiplicity: 1,
            modes: vec![vec![k]],
            functions: vec![Eigenfunction::Sine {
                dim: 1,
                modes: [k, 0],
                scale: 2f64.sqrt(),
            }],
            m: 1,
        })
        .collect()
}

/// The first `count` distinct eigenvalues pi^2 (k^2 + l^2) of the unit
/// square, with degenerate values merged.
pub fn laplace_square(count: usize) -> Vec<ExactEigenpair> {
    let mut groups: BTreeMap<usize, Vec<[usize; 2]>> = BTreeMap::new();
    for k in 1..=count.max(1) {
        for l in 1..=count.max(1) {
            groups.entry(k * k + l * l).or_default().push([k, l]);
        }
    }
    groups
        .into_iter()
        .take(count)
        .map(|(s, modes)| ExactEigenpair {
            lambda: s as f64 * PI * PI,
            multiplicity: modes.len(),
            functions: modes
                .iter()
                .map(|&m| Eigenfunction::Sine {
                    dim: 2,
                    modes: m,
                    scale: 2.0,
                })
                .collect(),
            modes: modes.iter().map(|m| m.to_vec()).collect(),
            m: 1,
        })
        .collect()
}

/// The first `count` square eigenvalues repeated by multiplicity.
pub fn square_eigenvalues(count: usize) -> Vec<f64> {
    let mut vals = Vec::with_capacity(count * count);
    for k in 1..=count {
        for l in 1..=count {
            vals.push(k * k + l * l);
        }
    }
    vals.sort_unstable();
    vals.truncate(count);
    vals.into_iter().map(|s| s as f64 * PI * PI).collect()
}

/// Root of cos k cosh k = 1 near (j + 1/2) pi, by bisection on cos k - sech k.
pub fn beam_root(j: usize) -> Result<f64> {
    let f = |k: f64| k.cos() - 1.0 / k.cosh();
    let centre = (j as f64 + 0.5) * PI;
    let (mut lo, mut hi) = (centre - 0.3, centre + 0.3);
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo * fhi > 0.0 {
        return Err(Error::Bracket(j));
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Clamped beam u'''' = lambda u on (0,1), lambda_j = kappa_j^4.
pub fn beam_clamped(count: usize) -> Result<Vec<ExactEigenpair>> {
    (1..=count)
        .map(|j| {
            let kappa = beam_root(j)?;
            Ok(ExactEigenpair {
                lambda: kappa.powi(4),
                multiplicity: 1,
                modes: vec![vec![j]],
                functions: vec![Eigenfunction::Beam(BeamMode::new(kappa))],
                m: 2,
            })
        })
        .collect()
}

/// Gamma(1 + n/2) by the half-integer recursion.
fn gamma_half_step(n: usize) -> f64 {
    let (mut x, mut g) = if n.is_multiple_of(2) { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    let target = 1.0 + n as f64 / 2.0;
    while x < target - 0.25 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Volume of the unit ball in R^n.
pub fn omega_n(n: usize) -> f64 {
    PI.powf(n as f64 / 2.0) / gamma_half_step(n)
}

/// 4 pi^2 (j / (omega_n |Omega|))^{2/n}.
pub fn weyl_estimate(j: usize, n: usize, volume: f64) -> f64 {
    4.0 * PI * PI * (j as f64 / (omega_n(n) * volume)).powf(2.0 / n as f64)
}

/// 16 pi^4 (j / (omega_n |Omega|))^{4/n}.
pub fn pleijel_estimate(j: usize, n: usize, volume: f64) -> f64 {
    16.0 * PI.powi(4) * (j as f64 / (omega_n(n) * volume)).powf(4.0 / n as f64)
}

fn multinomial(gamma: MultiIndex) -> f64 {
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    let mut den = 1.0;
    for d in 0..gamma.dim() {
        den *= fact(gamma.get(d));
    }
    fact(gamma.order()) / den
}

/// D^gamma Delta^ell f at x.
pub fn laplacian_power_derivative(f: &dyn ScalarField, x: [f64; 2], gamma: MultiIndex, ell: usize) -> f64 {
    let dim = f.dim();
    let mut s = 0.0;
    if dim == 1 {
        return f.derivative(x, gamma.add(&MultiIndex::new1(2 * ell)));
    }
    let binom = |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    for a in 0..=ell {
        let shift = MultiIndex::new2(2 * a, 2 * (ell - a));
        s += binom(ell, a) * f.derivative(x, gamma.add(&shift));
    }
    s
}

/// Pointwise |nabla^k w| with w = Delta^ell f (Frobenius norm of the tensor).
fn tensor_norm(f: &dyn ScalarField, x: [f64; 2], k: usize, ell: usize) -> f64 {
    let mut s = 0.0;
    for g in indices_of_order(f.dim(), k) {
        let v = laplacian_power_derivative(f, x, g, ell);
        s += multinomial(g) * v * v;
    }
    s.sqrt()
}

/// ||f||_{0,p,G} style integral of a pointwise quantity over a box.
fn box_p_norm(dim: usize, lo: [f64; 2], hi: [f64; 2], p: f64, q: impl Fn([f64; 2]) -> f64) -> Result<f64> {
    let rule = gauss_legendre(10)?;
    let panels = 16;
    let mut acc = 0.0;
    let mut sup: f64 = 0.0;
    let hx = (hi[0] - lo[0]) / panels as f64;
    let hy = if dim == 2 { (hi[1] - lo[1]) / panels as f64 } else { 1.0 };
    let ny = if dim == 2 { panels } else { 1 };
    let nq = if dim == 2 { rule.len() } else { 1 };
    for i in 0..panels {
        for j in 0..ny {
            for (xa, wa) in rule.points.iter().zip(&rule.weights) {
                for b in 0..nq {
                    let (yb, wb) = if dim == 2 { (rule.points[b][0], rule.weights[b]) } else { (0.0, 2.0) };
                    let x = [
                        lo[0] + (i as f64 + 0.5 * (1.0 + xa[0])) * hx,
                        if dim == 2 { lo[1] + (j as f64 + 0.5 * (1.0 + yb)) * hy } else { 0.0 },
                    ];
                    let w = 0.25 * wa * wb * hx * hy;
                    let v = q(x).abs();
                    if p.is_infinite() {
                        sup = sup.max(v);
                    } else {
                        acc += w * v.powf(p);
                    }
                }
            }
        }
    }
    Ok(if p.is_infinite() { sup } else { acc.powf(1.0 / p) })
}

/// |LHS - RHS| / RHS for ||nabla^{mi} Delta^{m ell} u||_{0,p,G} = lambda^ell ||nabla^{mi} u||_{0,p,G},
/// with (i, ell) determined by r = m i + 2 m ell.
pub fn eigen_identity_check(pair: &ExactEigenpair, r: usize, m: usize, g: ([f64; 2], [f64; 2]), p: f64) -> Result<f64> {
    let (i, ell) = operator_split(r, m)?;
    let f = pair.function();
    if r > f.max_order() {
        return Err(Error::DerivativeOrder {
            requested: r,
            supported: f.max_order(),
        });
    }
    let dim = f.dim();
    let lhs = box_p_norm(dim, g.0, g.1, p, |x| tensor_norm(f, x, m * i, m * ell))?;
    let rhs = pair.lambda.powi(ell as i32) * box_p_norm(dim, g.0, g.1, p, |x| tensor_norm(f, x, m * i, 0))?;
    Ok((lhs - rhs).abs() / rhs)
}

/// ||u||_{0,Omega} on the unit interval or square by oversampled quadrature.
pub fn l2_norm_unit(f: &dyn ScalarField) -> Result<f64> {
    box_p_norm(f.dim(), [0.0, 0.0], [1.0, 1.0], 2.0, |x| f.value(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_values_and_orthogonality() {
        let e = laplace_interval(5);
        assert!((e[0].lambda - 9.8696044).abs() < 1e-7);
        assert_eq!(e[2].lambda, 9.0 * PI * PI);
        for a in &e {
            for b in &e {
                let ip = oversampled_integral_1d(|x| a.function().value([x, 0.0]) * b.function().value([x, 0.0]));
                let want = if a.modes == b.modes { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn square_multiplicities_and_counting() {
        let s = laplace_square(10);
        assert_eq!(s[0].multiplicity, 1);
        assert!((s[0].lambda - 2.0 * PI * PI).abs() < 1e-12);
        assert_eq!(s[1].multiplicity, 2);
        assert_eq!(s[1].modes, vec![vec![1, 2], vec![2, 1]]);
        // brute-force lattice count below 100 pi^2
        let brute = (1..20).flat_map(|k| (1..20).map(move |l| k * k + l * l)).filter(|&s| s <= 100).count();
        let total: usize = laplace_square(200).iter().filter(|e| e.lambda <= 100.0 * PI * PI * (1.0 + 1e-14)).map(|e| e.multiplicity).sum();
        assert_eq!(total, brute);
        let vals = square_eigenvalues(5);
        assert_eq!(vals.len(), 5);
        assert_eq!(vals[1], vals[2]);
        for e in laplace_square(4) {
            for f in &e.functions {
                assert!((l2_norm_unit(f).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn beam_roots() {
        let k1 = beam_root(1).unwrap();
        assert!((k1 - 4.7300407448627).abs() < 1e-11);
        assert!((k1.powi(4) - 500.5639).abs() < 1e-3);
        let mut prev = f64::INFINITY;
        for j in 1..=10 {
            let k = beam_root(j).unwrap();
            assert!((k.cos() * k.cosh() - 1.0).abs() <= 1e-9 * k.cosh());
            let gap = (k - (j as f64 + 0.5) * PI).abs();
            assert!(gap < prev);
            prev = gap;
        }
    }

    #[test]
    fn beam_modes_satisfy_clamped_conditions() {
        for e in beam_clamped(6).unwrap() {
            let Eigenfunction::Beam(b) = e.functions[0] else { panic!() };
            for x in [0.0, 1.0] {
                assert!(b.derivative_1d(x, 0).abs() < 1e-10);
                assert!(b.derivative_1d(x, 1).abs() < 1e-9 * b.kappa);
            }
            assert!((l2_norm_unit(&e.functions[0]).unwrap() - 1.0).abs() < 1e-12);
            // u'''' = lambda u pointwise
            for x in [0.1, 0.37, 0.8] {
                let lhs = b.derivative_1d(x, 4);
                assert!((lhs - e.lambda * b.derivative_1d(x, 0)).abs() < 1e-9 * e.lambda);
            }
        }
    }

    #[test]
    fn weyl_and_pleijel_examples() {
        assert!((omega_n(1) - 2.0).abs() < 1e-15);
        assert!((omega_n(2) - PI).abs() < 1e-15);
        assert!((omega_n(3) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((weyl_estimate(100, 2, 1.0) - 400.0 * PI).abs() < 1e-9);
        assert!((weyl_estimate(5, 1, 1.0) - 25.0 * PI * PI).abs() < 1e-12);
        assert!((pleijel_estimate(10, 1, 1.0) - 1e4 * PI.powi(4)).abs() < 1e-6);
        assert!((pleijel_estimate(1, 2, 1.0) - 16.0 * PI * PI).abs() < 1e-10);
        let exact = beam_root(100).unwrap().powi(4);
        let ratio = exact / pleijel_estimate(100, 1, 1.0);
        assert!((ratio - (100.5f64 / 100.0).powi(4)).abs() < 1e-3);
    }

    #[test]
    fn identity_checks() {
        let g = ([0.25, 0.25], [0.75, 0.75]);
        let sq = &laplace_square(1)[0];
        assert!(eigen_identity_check(sq, 2, 1, g, 2.0).unwrap() < 1e-12);
        let iv = &laplace_interval(2)[1];
        assert!(eigen_identity_check(iv, 3, 1, g, 2.0).unwrap() < 1e-12);
        let beam = &beam_clamped(1).unwrap()[0];
        assert!(eigen_identity_check(beam, 4, 2, g, 2.0).unwrap() < 1e-9);
        assert!(eigen_identity_check(beam, 2, 2, g, f64::INFINITY).unwrap() < 1e-15);
        assert!(eigen_identity_check(iv, 3, 2, g, 2.0).is_err());
    }
}
