//! Single-neuron dynamics.
//!
//! Forward system, element `i`:
//!
//! ```text
//! dE_i/dt = k1_i E_{i-1} - k2_i E_i - k3_i E_i E_{i-2} + input_i
//! ```
//!
//! Inverse system, used when signals travel against the forward direction.
//! The coupling parameters move with the links they sit on:
//!
//! ```text
//! dE_i/dt = k1_{i+1} E_{i+1} - k2_i E_i - k3_{i+2} E_i E_{i+2} + input_i
//! ```

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::element::{cyc, ElementVector, NeuronParams, ELEMENTS};
use crate::error::{Result, WuxingError};
use crate::integrate::rk4_step;

/// Which of the two mirror-image systems to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

#[inline]
pub(crate) fn forward_kernel(
    e: &[f64; ELEMENTS],
    p: &NeuronParams,
    input: &[f64; ELEMENTS],
) -> [f64; ELEMENTS] {
    std::array::from_fn(|i| {
        let prev = e[cyc(i, -1)];
        let prev2 = e[cyc(i, -2)];
        p.k1[i] * prev - p.k2[i] * e[i] - p.k3[i] * e[i] * prev2 + input[i]
    })
}

#[inline]
pub(crate) fn inverse_kernel(
    e: &[f64; ELEMENTS],
    p: &NeuronParams,
    input: &[f64; ELEMENTS],
) -> [f64; ELEMENTS] {
    std::array::from_fn(|i| {
        let n1 = cyc(i, 1);
        let n2 = cyc(i, 2);
        p.k1[n1] * e[n1] - p.k2[i] * e[i] - p.k3[n2] * e[i] * e[n2] + input[i]
    })
}

#[inline]
pub(crate) fn kernel(
    dir: Direction,
    e: &[f64; ELEMENTS],
    p: &NeuronParams,
    input: &[f64; ELEMENTS],
) -> [f64; ELEMENTS] {
    match dir {
        Direction::Forward => forward_kernel(e, p, input),
        Direction::Inverse => inverse_kernel(e, p, input),
    }
}

fn checked(out: [f64; ELEMENTS]) -> Result<ElementVector> {
    ElementVector::new(out).map_err(|_| WuxingError::NonFinite("derivative"))
}

pub fn forward_derivative(
    e: &ElementVector,
    p: &NeuronParams,
    input: &ElementVector,
) -> Result<ElementVector> {
    checked(forward_kernel(e.as_array(), p, input.as_array()))
}

pub fn inverse_derivative(
    e: &ElementVector,
    p: &NeuronParams,
    input: &ElementVector,
) -> Result<ElementVector> {
    checked(inverse_kernel(e.as_array(), p, input.as_array()))
}

pub fn derivative(
    dir: Direction,
    e: &ElementVector,
    p: &NeuronParams,
    input: &ElementVector,
) -> Result<ElementVector> {
    checked(kernel(dir, e.as_array(), p, input.as_array()))
}

/// Equilibrium of a neuron whose parameter sets are each uniform: `(k1 - k2) / k3`.
pub fn analytic_fixed_point(k1: f64, k2: f64, k3: f64) -> Result<f64> {
    if k3 == 0.0 {
        return Err(WuxingError::SingularParameter);
    }
    let b = (k1 - k2) / k3;
    if b.is_finite() {
        Ok(b)
    } else {
        Err(WuxingError::NonFinite("analytic fixed point"))
    }
}

/// Per-element analogue of the uniform formula; exact when `p` is uniform and
/// the starting guess for relaxation otherwise.
pub fn analytic_guess(dir: Direction, p: &NeuronParams) -> Result<ElementVector> {
    let mut out = [0.0; ELEMENTS];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = match dir {
            Direction::Forward => analytic_fixed_point(p.k1[i], p.k2[i], p.k3[i])?,
            Direction::Inverse => {
                analytic_fixed_point(p.k1[cyc(i, 1)], p.k2[i], p.k3[cyc(i, 2)])?
            }
        };
    }
    ElementVector::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub b0: ElementVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    /// Max-norm of the unforced derivative that counts as settled.
    pub tol: f64,
    /// Relaxation step budget.
    pub max_iter: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

/// Result of a settle, with the residual actually reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settled {
    pub point: FixedPoint,
    pub residual: f64,
    pub iterations: usize,
    /// Every Jacobian eigenvalue has a negative real part.
    pub attracting: bool,
}

fn jacobian(dir: Direction, e: &[f64; ELEMENTS], p: &NeuronParams) -> Matrix5<f64> {
    let mut j = Matrix5::zeros();
    for i in 0..ELEMENTS {
        match dir {
            Direction::Forward => {
                let (a, b) = (cyc(i, -1), cyc(i, -2));
                j[(i, a)] += p.k1[i];
                j[(i, i)] += -p.k2[i] - p.k3[i] * e[b];
                j[(i, b)] += -p.k3[i] * e[i];
            }
            Direction::Inverse => {
                let (a, b) = (cyc(i, 1), cyc(i, 2));
                j[(i, a)] += p.k1[a];
                j[(i, i)] += -p.k2[i] - p.k3[b] * e[b];
                j[(i, b)] += -p.k3[b] * e[i];
            }
        }
    }
    j
}

fn residual(dir: Direction, e: &[f64; ELEMENTS], p: &NeuronParams) -> f64 {
    kernel(dir, e, p, &[0.0; ELEMENTS])
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Max-norm of the unforced derivative at `e`; zero exactly at an equilibrium.
pub fn residual_norm(dir: Direction, e: &ElementVector, p: &NeuronParams) -> f64 {
    residual(dir, e.as_array(), p)
}

/// Largest real part among the Jacobian eigenvalues at `e`.
pub fn spectral_abscissa(dir: Direction, e: &ElementVector, p: &NeuronParams) -> f64 {
    jacobian(dir, e.as_array(), p)
        .complex_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |m, z| m.max(z.re))
}

const NEWTON_SWITCH: f64 = 1e-4;

/// Newton iterations on the unforced derivative, kept only while they reduce
/// the residual. Returns the final residual.
fn newton_polish(dir: Direction, p: &NeuronParams, e: &mut [f64; ELEMENTS], mut res: f64) -> f64 {
    let zero = [0.0; ELEMENTS];
    for _ in 0..8 {
        if res == 0.0 {
            break;
        }
        let f = Vector5::from_column_slice(&kernel(dir, e, p, &zero));
        let Some(delta) = jacobian(dir, e, p).lu().solve(&f) else {
            break;
        };
        let cand: [f64; ELEMENTS] = std::array::from_fn(|i| e[i] - delta[i]);
        let cand_res = residual(dir, &cand, p);
        if !(cand_res < res) {
            break;
        }
        *e = cand;
        res = cand_res;
    }
    res
}

/// Relaxes the unforced system from `start` until the derivative max-norm
/// drops below `cfg.tol`, then polishes with Newton steps while they keep
/// reducing the residual. Relaxation cannot approach a repelling
/// equilibrium, but one hit directly (for example from the exact analytic
/// seed) is returned with `attracting = false`.
pub fn settle(
    dir: Direction,
    p: &NeuronParams,
    start: &ElementVector,
    cfg: &FixedPointConfig,
) -> Result<Settled> {
    if !(cfg.tol > 0.0) {
        return Err(WuxingError::InvalidParameter(format!(
            "fixed-point tolerance must be positive, got {}",
            cfg.tol
        )));
    }
    p.check_positive()?;
    let zero = [0.0; ELEMENTS];
    let mut e = start.to_array();
    let mut res = residual(dir, &e, p);
    let mut iterations = 0;
    let mut polished_at = f64::INFINITY;

    loop {
        // Close to an equilibrium Newton converges quadratically; only retry
        // it once relaxation has made real progress since the last attempt.
        if res < NEWTON_SWITCH && res < 0.5 * polished_at {
            polished_at = res;
            res = newton_polish(dir, p, &mut e, res);
        }
        if res < cfg.tol {
            break;
        }
        if iterations >= cfg.max_iter {
            return Err(WuxingError::FixedPointDivergence {
                iterations,
                residual: res,
                reason: "relaxation budget exhausted",
            });
        }
        let scale = e.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let rate = p.k1.max_abs() + p.k2.max_abs() + 2.0 * p.k3.max_abs() * scale;
        let h = (1.0 / rate).min(0.5);
        e = rk4_step(&e, h, |y| kernel(dir, y, p, &zero));
        iterations += 1;
        if !e.iter().all(|v| v.is_finite()) {
            return Err(WuxingError::FixedPointDivergence {
                iterations,
                residual: f64::INFINITY,
                reason: "relaxation left the finite range",
            });
        }
        res = residual(dir, &e, p);
    }
    res = newton_polish(dir, p, &mut e, res);

    let b0 = ElementVector::new(e)?;
    Ok(Settled {
        attracting: spectral_abscissa(dir, &b0, p) < 0.0,
        point: FixedPoint { b0 },
        residual: res,
        iterations,
    })
}

/// [`settle`] restricted to locally attracting equilibria, the only ones a
/// network can rest at.
pub fn settle_attracting(
    dir: Direction,
    p: &NeuronParams,
    start: &ElementVector,
    cfg: &FixedPointConfig,
) -> Result<Settled> {
    let s = settle(dir, p, start, cfg)?;
    if !s.attracting {
        return Err(WuxingError::FixedPointDivergence {
            iterations: s.iterations,
            residual: s.residual,
            reason: "equilibrium is not attracting",
        });
    }
    Ok(s)
}

/// Settled unforced state of the forward system, seeded by the per-element
/// analytic estimate.
pub fn numeric_fixed_point(
    p: &NeuronParams,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint> {
    let cfg = FixedPointConfig { tol, max_iter };
    settle(Direction::Forward, p, &analytic_guess(Direction::Forward, p)?, &cfg).map(|s| s.point)
}

/// As [`numeric_fixed_point`] for the inverse system.
pub fn numeric_inverse_fixed_point(
    p: &NeuronParams,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint> {
    let cfg = FixedPointConfig { tol, max_iter };
    settle(Direction::Inverse, p, &analytic_guess(Direction::Inverse, p)?, &cfg).map(|s| s.point)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationSignal {
    pub d: ElementVector,
}

pub fn deviation(e: &ElementVector, b0: &FixedPoint) -> DeviationSignal {
    DeviationSignal { d: *e - b0.b0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ev(v: [f64; 5]) -> ElementVector {
        ElementVector::new(v).unwrap()
    }

    // Written out term by term rather than through the cyclic helper.
    fn forward_by_hand(e: [f64; 5], k1: [f64; 5], k2: [f64; 5], k3: [f64; 5]) -> [f64; 5] {
        let [j, s, m, h, t] = e;
        [
            k1[0] * t - k2[0] * j - k3[0] * j * h,
            k1[1] * j - k2[1] * s - k3[1] * s * t,
            k1[2] * s - k2[2] * m - k3[2] * m * j,
            k1[3] * m - k2[3] * h - k3[3] * h * s,
            k1[4] * h - k2[4] * t - k3[4] * t * m,
        ]
    }

    #[test]
    fn forward_vanishes_at_fixed_point_and_origin() {
        let p = NeuronParams::uniform(1.0, 0.5, 0.5).unwrap();
        let b = analytic_fixed_point(1.0, 0.5, 0.5).unwrap();
        let zero = ElementVector::zeros();
        let d = forward_derivative(&ElementVector::splat(b), &p, &zero).unwrap();
        assert_eq!(d.max_abs(), 0.0);
        let q = NeuronParams::uniform(3.0, 0.2, 7.0).unwrap();
        assert_eq!(forward_derivative(&zero, &q, &zero).unwrap(), zero);
        assert_eq!(inverse_derivative(&zero, &q, &zero).unwrap(), zero);
    }

    #[test]
    fn ones_under_default_params_is_stationary() {
        let p = NeuronParams::uniform(1.0, 0.5, 0.5).unwrap();
        let d = forward_derivative(&ElementVector::splat(1.0), &p, &ElementVector::zeros()).unwrap();
        assert_eq!(d.to_array(), [0.0; 5]);
        let by_hand = forward_by_hand([1.0; 5], [1.0; 5], [0.5; 5], [0.5; 5]);
        assert_eq!(by_hand, [0.0; 5]);
    }

    #[test]
    fn forward_matches_hand_expansion() {
        let e = [0.3, -1.2, 2.0, 0.7, 1.1];
        let k1 = [1.0, 1.5, 0.7, 2.0, 0.9];
        let k2 = [0.5, 0.4, 0.3, 0.8, 0.6];
        let k3 = [0.2, 0.9, 1.1, 0.5, 0.4];
        let p = NeuronParams::new(ev(k1), ev(k2), ev(k3)).unwrap();
        let input = ev([0.1, 0.0, 0.0, -0.2, 0.0]);
        let got = forward_derivative(&ev(e), &p, &input).unwrap();
        let mut want = forward_by_hand(e, k1, k2, k3);
        want[0] += 0.1;
        want[3] -= 0.2;
        for i in 0..5 {
            assert_abs_diff_eq!(got[i], want[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn inverse_is_mirrored_forward() {
        let p = NeuronParams::new(
            ev([1.0, 1.5, 0.7, 2.0, 0.9]),
            ev([0.5, 0.4, 0.3, 0.8, 0.6]),
            ev([0.2, 0.9, 1.1, 0.5, 0.4]),
        )
        .unwrap();
        let e = ev([0.3, -1.2, 2.0, 0.7, 1.1]);
        let input = ev([0.0, 0.4, 0.0, 0.0, 0.1]);
        let inv = inverse_derivative(&e, &p, &input).unwrap();
        let via_forward = forward_derivative(&e.mirrored(), &p.mirrored_for_inverse(), &input.mirrored())
            .unwrap()
            .mirrored();
        for i in 0..5 {
            assert_abs_diff_eq!(inv[i], via_forward[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let p = NeuronParams::default();
        let huge = ElementVector::splat(1e200);
        let err = forward_derivative(&huge, &p, &ElementVector::zeros()).unwrap_err();
        assert!(matches!(err, WuxingError::NonFinite(_)));
    }

    #[test]
    fn analytic_fixed_point_values() {
        assert_eq!(analytic_fixed_point(1.0, 0.5, 0.5).unwrap(), 1.0);
        assert_eq!(analytic_fixed_point(2.0, 0.5, 0.5).unwrap(), 3.0);
        assert_eq!(analytic_fixed_point(0.7, 0.7, 3.0).unwrap(), 0.0);
        assert!(matches!(
            analytic_fixed_point(1.0, 0.5, 0.0),
            Err(WuxingError::SingularParameter)
        ));
    }

    #[test]
    fn numeric_fixed_point_uniform() {
        let p = NeuronParams::uniform(1.0, 0.5, 0.5).unwrap();
        let fp = numeric_fixed_point(&p, 1e-8, 100_000).unwrap();
        for v in fp.b0.iter() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-8);
        }
        let q = NeuronParams::uniform(0.8, 0.8, 0.3).unwrap();
        let fp = numeric_fixed_point(&q, 1e-8, 100_000).unwrap();
        assert_eq!(fp.b0.max_abs(), 0.0);
    }

    #[test]
    fn numeric_fixed_point_perturbed_k3() {
        let mut p = NeuronParams::uniform(1.0, 0.5, 0.5).unwrap();
        p.k3[2] *= 1.01;
        let fp = numeric_fixed_point(&p, 1e-8, 100_000).unwrap();
        let r = forward_derivative(&fp.b0, &p, &ElementVector::zeros()).unwrap();
        assert!(r.max_abs() < 1e-8);
        // Regression snapshot (matches an independent DOP853 relaxation to
        // ~1e-13); the residual check above is the real oracle.
        let snapshot = [
            0.999_753_317_317_908_8,
            1.000_969_917_745_822_7,
            0.996_113_441_127_523_9,
            0.995_630_601_233_313_7,
            0.997_569_156_862_069_2,
        ];
        for (got, want) in fp.b0.iter().zip(snapshot) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn inverse_fixed_point_matches_forward_for_uniform() {
        let p = NeuronParams::uniform(1.7, 0.4, 0.9).unwrap();
        let f = numeric_fixed_point(&p, 1e-8, 100_000).unwrap();
        let b = numeric_inverse_fixed_point(&p, 1e-8, 100_000).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(f.b0[i], b.b0[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn relaxation_budget_exhaustion_is_reported() {
        let mut p = NeuronParams::uniform(1.0, 0.5, 0.5).unwrap();
        p.k3[0] = 0.9;
        let err = numeric_fixed_point(&p, 1e-8, 3).unwrap_err();
        assert!(matches!(err, WuxingError::FixedPointDivergence { .. }));
    }

    #[test]
    fn oscillatory_regime_is_not_a_settled_state() {
        // k1 well above ~6.9 k2 destabilises the uniform equilibrium.
        let p = NeuronParams::uniform(10.0, 0.5, 0.5).unwrap();
        assert!(spectral_abscissa(Direction::Forward, &ElementVector::splat(19.0), &p) > 0.0);
        let cfg = FixedPointConfig { tol: 1e-8, max_iter: 2_000 };
        let exact = settle(Direction::Forward, &p, &ElementVector::splat(19.0), &cfg).unwrap();
        assert!(!exact.attracting);
        assert_eq!(exact.point.b0, ElementVector::splat(19.0));
        assert!(settle_attracting(Direction::Forward, &p, &ElementVector::splat(19.0), &cfg).is_err());
        let nudged = ElementVector::new([19.1, 19.0, 19.0, 19.0, 19.0]).unwrap();
        assert!(settle(Direction::Forward, &p, &nudged, &cfg).is_err());
    }

    #[test]
    fn deviation_is_state_minus_b0() {
        let b0 = FixedPoint { b0: ev([1.0, 2.0, 3.0, 4.0, 5.0]) };
        assert_eq!(deviation(&b0.b0, &b0).d, ElementVector::zeros());
        let e = b0.b0 + ElementVector::unit(0);
        assert_eq!(deviation(&e, &b0).d, ElementVector::unit(0));
        let e = ev([0.1, -3.0, 7.5, 2.0, 0.0]);
        let once = deviation(&e, &b0);
        let twice = deviation(&(once.d + b0.b0), &b0);
        assert_eq!(once, twice);
    }
}
