//! Classical fixed-step fourth-order Runge–Kutta.

use crate::element::{ElementVector, ELEMENTS};
use crate::error::{Result, WuxingError};

/// One RK4 step on a five-element state.
#[inline]
pub(crate) fn rk4_step<F>(y: &[f64; ELEMENTS], h: f64, f: F) -> [f64; ELEMENTS]
where
    F: Fn(&[f64; ELEMENTS]) -> [f64; ELEMENTS],
{
    let k1 = f(y);
    let y2 = std::array::from_fn(|i| y[i] + 0.5 * h * k1[i]);
    let k2 = f(&y2);
    let y3 = std::array::from_fn(|i| y[i] + 0.5 * h * k2[i]);
    let k3 = f(&y3);
    let y4 = std::array::from_fn(|i| y[i] + h * k3[i]);
    let k4 = f(&y4);
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Advances `e` by `h` under `deriv`.
pub fn integrate_step<F>(deriv: F, e: &ElementVector, h: f64) -> Result<ElementVector>
where
    F: Fn(&ElementVector) -> Result<ElementVector>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(WuxingError::InvalidParameter(format!(
            "step must be positive and finite, got {h}"
        )));
    }
    let k1 = deriv(e)?;
    let k2 = deriv(&e.zip_map(&k1, |y, k| y + 0.5 * h * k))?;
    let k3 = deriv(&e.zip_map(&k2, |y, k| y + 0.5 * h * k))?;
    let k4 = deriv(&e.zip_map(&k3, |y, k| y + h * k))?;
    let out: [f64; ELEMENTS] = std::array::from_fn(|i| {
        e[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    });
    ElementVector::new(out).map_err(|_| WuxingError::Divergence {
        neuron: 0,
        time: h,
    })
}

/// A first-order system `dy/dt = f(y)` over a flat state vector.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn derivative(&self, y: &[f64], dy: &mut [f64]);
}

/// RK4 stepper with reusable stage buffers for large coupled systems.
#[derive(Debug, Clone, Default)]
pub struct Rk4 {
    stage: Vec<f64>,
    k: Vec<f64>,
    acc: Vec<f64>,
}

impl Rk4 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step<S: OdeSystem + ?Sized>(&mut self, system: &S, h: f64, y: &mut [f64]) {
        let n = system.dim();
        debug_assert_eq!(y.len(), n);
        self.stage.resize(n, 0.0);
        self.k.resize(n, 0.0);
        self.acc.resize(n, 0.0);

        system.derivative(y, &mut self.k);
        for i in 0..n {
            self.acc[i] = self.k[i];
            self.stage[i] = y[i] + 0.5 * h * self.k[i];
        }
        system.derivative(&self.stage, &mut self.k);
        for i in 0..n {
            self.acc[i] += 2.0 * self.k[i];
            self.stage[i] = y[i] + 0.5 * h * self.k[i];
        }
        system.derivative(&self.stage, &mut self.k);
        for i in 0..n {
            self.acc[i] += 2.0 * self.k[i];
            self.stage[i] = y[i] + h * self.k[i];
        }
        system.derivative(&self.stage, &mut self.k);
        for i in 0..n {
            y[i] += h / 6.0 * (self.acc[i] + self.k[i]);
        }
    }
}
