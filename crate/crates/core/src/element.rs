//! Per-neuron quantities indexed by the five cyclic elements.
//!
//! Element `i` is coupled to `i - 1` (generative) and `i - 2` (inhibitory) in
//! the forward direction; all index arithmetic is taken mod [`ELEMENTS`].

use std::ops::{Add, Index, IndexMut, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Result, WuxingError};

/// Number of elements per neuron (J, S, M, H, T).
pub const ELEMENTS: usize = 5;

/// Cyclic index `i + offset` mod 5.
#[inline]
pub fn cyc(i: usize, offset: isize) -> usize {
    (i as isize + offset).rem_euclid(ELEMENTS as isize) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "[f64; ELEMENTS]", into = "[f64; ELEMENTS]")]
pub struct ElementVector([f64; ELEMENTS]);

impl ElementVector {
    pub fn new(values: [f64; ELEMENTS]) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(WuxingError::NonFinite("element vector"))
        }
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; ELEMENTS] = values.try_into().map_err(|_| {
            WuxingError::Dimension(format!(
                "element vector needs {ELEMENTS} values, got {}",
                values.len()
            ))
        })?;
        Self::new(arr)
    }

    /// Wraps raw values without the finiteness check. Used on hot paths where
    /// finiteness is checked in bulk afterwards.
    #[inline]
    pub(crate) const fn raw(values: [f64; ELEMENTS]) -> Self {
        Self(values)
    }

    pub const fn zeros() -> Self {
        Self([0.0; ELEMENTS])
    }

    pub fn splat(v: f64) -> Self {
        Self([v; ELEMENTS])
    }

    /// Unit vector at element `i`.
    pub fn unit(i: usize) -> Self {
        let mut v = [0.0; ELEMENTS];
        v[i % ELEMENTS] = 1.0;
        Self(v)
    }

    #[inline]
    pub fn as_array(&self) -> &[f64; ELEMENTS] {
        &self.0
    }

    #[inline]
    pub fn to_array(self) -> [f64; ELEMENTS] {
        self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Element `j` of the result is element `-j` of `self`: the mirror
    /// relabeling that maps the forward ring onto the inverse ring.
    pub fn mirrored(&self) -> Self {
        Self(std::array::from_fn(|j| self.0[cyc(0, -(j as isize))]))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.map(f))
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self(std::array::from_fn(|i| f(self.0[i], other.0[i])))
    }
}

impl Index<usize> for ElementVector {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ElementVector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for ElementVector {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip_map(&rhs, |a, b| a + b)
    }
}

impl Sub for ElementVector {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip_map(&rhs, |a, b| a - b)
    }
}

impl TryFrom<[f64; ELEMENTS]> for ElementVector {
    type Error = WuxingError;
    fn try_from(v: [f64; ELEMENTS]) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ElementVector> for [f64; ELEMENTS] {
    fn from(v: ElementVector) -> Self {
        v.0
    }
}

/// Inclusive clamp range applied to every K entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self { min: 1e-3, max: 1e3 }
    }
}

impl ParamBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.min.is_finite() && self.max.is_finite() && self.min <= self.max)
        {
            return Err(WuxingError::InvalidParameter(format!(
                "clamp bounds must satisfy 0 < min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// The three trainable parameter sets of one neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub k1: ElementVector,
    pub k2: ElementVector,
    pub k3: ElementVector,
}

impl NeuronParams {
    pub fn new(k1: ElementVector, k2: ElementVector, k3: ElementVector) -> Result<Self> {
        let p = Self { k1, k2, k3 };
        p.check_positive()?;
        Ok(p)
    }

    /// Every entry of each set equal.
    pub fn uniform(k1: f64, k2: f64, k3: f64) -> Result<Self> {
        Self::new(
            ElementVector::new([k1; ELEMENTS])?,
            ElementVector::new([k2; ELEMENTS])?,
            ElementVector::new([k3; ELEMENTS])?,
        )
    }

    pub fn check_positive(&self) -> Result<()> {
        for (name, set) in [("k1", &self.k1), ("k2", &self.k2), ("k3", &self.k3)] {
            if let Some(v) = set.iter().find(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(WuxingError::InvalidParameter(format!(
                    "{name} entries must be finite and strictly positive, found {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn validate(&self, bounds: &ParamBounds) -> Result<()> {
        self.check_positive()?;
        for (name, set) in [("k1", &self.k1), ("k2", &self.k2), ("k3", &self.k3)] {
            if let Some(v) = set.iter().find(|v| !bounds.contains(*v)) {
                return Err(WuxingError::InvalidParameter(format!(
                    "{name} entry {v} outside [{}, {}]",
                    bounds.min, bounds.max
                )));
            }
        }
        Ok(())
    }

    pub fn is_uniform(&self) -> bool {
        [&self.k1, &self.k2, &self.k3]
            .iter()
            .all(|set| set.iter().all(|v| v == set[0]))
    }

    /// Parameters of the forward system that, under [`ElementVector::mirrored`],
    /// reproduce the inverse dynamics of `self`.
    pub fn mirrored_for_inverse(&self) -> Self {
        Self {
            k1: ElementVector::raw(std::array::from_fn(|j| self.k1[cyc(0, 1 - j as isize)])),
            k2: ElementVector::raw(std::array::from_fn(|j| self.k2[cyc(0, -(j as isize))])),
            k3: ElementVector::raw(std::array::from_fn(|j| self.k3[cyc(0, 2 - j as isize)])),
        }
    }
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            k1: ElementVector::splat(1.0),
            k2: ElementVector::splat(0.5),
            k3: ElementVector::splat(0.5),
        }
    }
}
