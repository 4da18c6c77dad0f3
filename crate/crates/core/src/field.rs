//! Scalar functions with derivative access, evaluated in physical coordinates.

use crate::polyspace::MultiIndex;

/// A smooth target function f: Omega -> R with partial derivatives.
pub trait ScalarField: Sync {
    fn dim(&self) -> usize;

    /// D^gamma f at the physical point `x`.
    fn derivative(&self, x: [f64; 2], gamma: MultiIndex) -> f64;

    fn value(&self, x: [f64; 2]) -> f64 {
        self.derivative(x, MultiIndex::zero(self.dim()))
    }

    /// Highest derivative order available.
    fn max_order(&self) -> usize {
        usize::MAX
    }
}

/// c * x^a * y^b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub alpha: MultiIndex,
    pub coeff: f64,
}

impl Monomial {
    pub fn new(alpha: MultiIndex) -> Self {
        Monomial { alpha, coeff: 1.0 }
    }
}

/// d^k/dx^k x^a evaluated at x.
pub(crate) fn power_derivative(a: usize, k: usize, x: f64) -> f64 {
    if k > a {
        return 0.0;
    }
    let falling: f64 = ((a - k + 1)..=a).map(|i| i as f64).product();
    falling * x.powi((a - k) as i32)
}

impl ScalarField for Monomial {
    fn dim(&self) -> usize {
        self.alpha.dim()
    }

    fn derivative(&self, x: [f64; 2], gamma: MultiIndex) -> f64 {
        let mut v = self.coeff;
        for d in 0..self.dim() {
            v *= power_derivative(self.alpha.get(d), gamma.get(d), x[d]);
        }
        v
    }
}

/// Product of 1D sines, sin(k pi x) [sin(l pi y)], times `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineProduct {
    pub dim: usize,
    pub modes: [usize; 2],
    pub scale: f64,
}

/// d^n/dx^n sin(w x) = w^n sin(w x + n pi / 2).
pub(crate) fn sine_derivative(w: f64, n: usize, x: f64) -> f64 {
    let phase = (n % 4) as f64 * std::f64::consts::FRAC_PI_2;
    w.powi(n as i32) * (w * x + phase).sin()
}

impl ScalarField for SineProduct {
    fn dim(&self) -> usize {
        self.dim
    }

    fn derivative(&self, x: [f64; 2], gamma: MultiIndex) -> f64 {
        let pi = std::f64::consts::PI;
        let mut v = self.scale;
        for d in 0..self.dim {
            v *= sine_derivative(self.modes[d] as f64 * pi, gamma.get(d), x[d]);
        }
        v
    }
}

/// Wraps a closure that only provides values (derivative order 0).
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn([f64; 2]) -> f64 + Sync> ScalarField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn derivative(&self, x: [f64; 2], gamma: MultiIndex) -> f64 {
        assert_eq!(gamma.order(), 0, "FnField provides values only");
        (self.f)(x)
    }

    fn max_order(&self) -> usize {
        0
    }
}

/// The zero function.
#[derive(Debug, Clone, Copy)]
pub struct Zero(pub usize);

impl ScalarField for Zero {
    fn dim(&self) -> usize {
        self.0
    }

    fn derivative(&self, _x: [f64; 2], _gamma: MultiIndex) -> f64 {
        0.0
    }
}
