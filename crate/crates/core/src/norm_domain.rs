//! Truncated power series in `t0, t1, t2` with coefficients in `[0, ∞]`.
//!
//! A series tracks coefficients for multi-indices with `δ0 ≤ r0` and
//! `δ1 + δ2 ≤ r`; everything outside that region reads as infinity.
//! Infinity is a tagged value rather than an IEEE float so that `0·∞ = ∞`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul};

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Shape, Shape),
    #[error("geometric inverse undefined: a = {a} but constant term is {x0}")]
    InverseDomain { a: f64, x0: NormCoeff },
    #[error("e_j undefined: constant term {x0} is not below M^-j = {bound}")]
    EjDomain { x0: NormCoeff, bound: f64 },
    #[error("negative or NaN coefficient {0}")]
    BadCoefficient(f64),
}

/// A value in `[0, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormCoeff {
    Finite(f64),
    Infinity,
}

impl NormCoeff {
    pub const ZERO: NormCoeff = NormCoeff::Finite(0.0);
    pub const ONE: NormCoeff = NormCoeff::Finite(1.0);

    pub fn finite(v: f64) -> Result<Self, NormError> {
        if v.is_nan() || v < 0.0 {
            Err(NormError::BadCoefficient(v))
        } else if v.is_infinite() {
            Ok(NormCoeff::Infinity)
        } else {
            Ok(NormCoeff::Finite(v))
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, NormCoeff::Infinity)
    }

    pub fn value(self) -> Option<f64> {
        match self {
            NormCoeff::Finite(v) => Some(v),
            NormCoeff::Infinity => None,
        }
    }

    /// Maps infinity to `f64::INFINITY`, for reporting only.
    pub fn to_f64(self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }

    pub fn scale(self, c: f64) -> Self {
        debug_assert!(c >= 0.0);
        match self {
            NormCoeff::Finite(v) => NormCoeff::Finite(v * c),
            NormCoeff::Infinity => NormCoeff::Infinity,
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }
}

impl Add for NormCoeff {
    type Output = NormCoeff;
    fn add(self, rhs: Self) -> Self {
        match (self, rhs) {
            (NormCoeff::Finite(a), NormCoeff::Finite(b)) => NormCoeff::Finite(a + b),
            _ => NormCoeff::Infinity,
        }
    }
}

impl Mul for NormCoeff {
    type Output = NormCoeff;
    /// `0·∞ = ∞`.
    fn mul(self, rhs: Self) -> Self {
        match (self, rhs) {
            (NormCoeff::Finite(a), NormCoeff::Finite(b)) => NormCoeff::Finite(a * b),
            _ => NormCoeff::Infinity,
        }
    }
}

impl PartialOrd for NormCoeff {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (NormCoeff::Finite(a), NormCoeff::Finite(b)) => a.partial_cmp(b),
            (NormCoeff::Finite(_), NormCoeff::Infinity) => Some(Ordering::Less),
            (NormCoeff::Infinity, NormCoeff::Finite(_)) => Some(Ordering::Greater),
            (NormCoeff::Infinity, NormCoeff::Infinity) => Some(Ordering::Equal),
        }
    }
}

impl fmt::Display for NormCoeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormCoeff::Finite(v) => write!(f, "{v:e}"),
            NormCoeff::Infinity => write!(f, "inf"),
        }
    }
}

impl Serialize for NormCoeff {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            NormCoeff::Finite(v) => s.serialize_f64(*v),
            NormCoeff::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for NormCoeff {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => NormCoeff::finite(v).map_err(de::Error::custom),
            Raw::Str(s) if s == "inf" => Ok(NormCoeff::Infinity),
            Raw::Str(s) => Err(de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

/// Multi-index `(δ0, δ1, δ2)`; `δ0` is the temporal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub [u32; 3]);

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex([0, 0, 0]);

    pub fn temporal(self) -> u32 {
        self.0[0]
    }

    /// `|δ⃗| = δ1 + δ2`.
    pub fn spatial(self) -> u32 {
        self.0[1] + self.0[2]
    }

    /// `δ0 + |δ⃗|`.
    pub fn total(self) -> u32 {
        self.0.iter().sum()
    }

    /// Product of component factorials.
    pub fn factorial(self) -> f64 {
        self.0
            .iter()
            .map(|&d| (1..=d).map(f64::from).product::<f64>())
            .product()
    }

    pub fn checked_sub(self, other: MultiIndex) -> Option<MultiIndex> {
        Some(MultiIndex([
            self.0[0].checked_sub(other.0[0])?,
            self.0[1].checked_sub(other.0[1])?,
            self.0[2].checked_sub(other.0[2])?,
        ]))
    }

    pub fn bump(self, axis: usize) -> MultiIndex {
        let mut d = self.0;
        d[axis] += 1;
        MultiIndex(d)
    }
}

impl Add for MultiIndex {
    type Output = MultiIndex;
    fn add(self, rhs: Self) -> Self {
        MultiIndex([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1], self.0[2] + rhs.0[2]])
    }
}

/// Truncation region: `δ0 ≤ r0` and `δ1 + δ2 ≤ r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub r: u32,
    pub r0: u32,
}

impl Default for Shape {
    fn default() -> Self {
        Shape { r: 2, r0: 1 }
    }
}

impl Shape {
    pub fn new(r: u32, r0: u32) -> Self {
        Shape { r, r0 }
    }

    pub fn contains(self, d: MultiIndex) -> bool {
        d.temporal() <= self.r0 && d.spatial() <= self.r
    }

    /// Tracked multi-indices in a fixed order (δ0 major, then δ1, then δ2).
    pub fn indices(self) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for d0 in 0..=self.r0 {
            for d1 in 0..=self.r {
                for d2 in 0..=(self.r - d1) {
                    out.push(MultiIndex([d0, d1, d2]));
                }
            }
        }
        out
    }

    pub fn len(self) -> usize {
        let spatial = ((self.r + 1) * (self.r + 2) / 2) as usize;
        (self.r0 as usize + 1) * spatial
    }

    pub fn is_empty(self) -> bool {
        false
    }

    fn position(self, d: MultiIndex) -> Option<usize> {
        if !self.contains(d) {
            return None;
        }
        let spatial = ((self.r + 1) * (self.r + 2) / 2) as usize;
        // offset of (d1, ·) rows inside one temporal block
        let d1 = d.0[1];
        let row_start: u32 = (0..d1).map(|a| self.r - a + 1).sum();
        Some(d.0[0] as usize * spatial + (row_start + d.0[2]) as usize)
    }
}

/// Element of the norm domain.
#[derive(Debug, Clone, PartialEq)]
pub struct NormSeries {
    shape: Shape,
    coeffs: Vec<NormCoeff>,
}

impl NormSeries {
    pub fn zero(shape: Shape) -> Self {
        NormSeries { shape, coeffs: vec![NormCoeff::ZERO; shape.len()] }
    }

    /// The scalar series `c`.
    pub fn constant(shape: Shape, c: NormCoeff) -> Self {
        let mut s = Self::zero(shape);
        s.coeffs[0] = c;
        s
    }

    pub fn one(shape: Shape) -> Self {
        Self::constant(shape, NormCoeff::ONE)
    }

    /// Constant term `c`, every other tracked coefficient infinite.
    pub fn constant_unresolved(shape: Shape, c: NormCoeff) -> Self {
        let mut s = NormSeries { shape, coeffs: vec![NormCoeff::Infinity; shape.len()] };
        s.coeffs[0] = c;
        s
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(MultiIndex) -> NormCoeff) -> Self {
        let coeffs = shape.indices().into_iter().map(&mut f).collect();
        NormSeries { shape, coeffs }
    }

    /// `c · t^δ`; reads as all-infinite if δ is outside the region.
    pub fn monomial(shape: Shape, d: MultiIndex, c: NormCoeff) -> Self {
        match shape.position(d) {
            Some(p) => {
                let mut s = Self::zero(shape);
                s.coeffs[p] = c;
                s
            }
            None => Self::zero(shape),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Coefficient at δ; infinity outside the tracked region.
    pub fn get(&self, d: MultiIndex) -> NormCoeff {
        self.shape.position(d).map_or(NormCoeff::Infinity, |p| self.coeffs[p])
    }

    pub fn set(&mut self, d: MultiIndex, c: NormCoeff) {
        if let Some(p) = self.shape.position(d) {
            self.coeffs[p] = c;
        }
    }

    pub fn constant_term(&self) -> NormCoeff {
        self.coeffs[0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (MultiIndex, NormCoeff)> + '_ {
        self.shape.indices().into_iter().zip(self.coeffs.iter().copied())
    }

    fn check(&self, other: &NormSeries) -> Result<(), NormError> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(NormError::ShapeMismatch(self.shape, other.shape))
        }
    }

    pub fn add(&self, other: &NormSeries) -> Result<NormSeries, NormError> {
        self.check(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| a + b).collect();
        Ok(NormSeries { shape: self.shape, coeffs })
    }

    /// Cauchy product restricted to the tracked region.
    pub fn mul(&self, other: &NormSeries) -> Result<NormSeries, NormError> {
        self.check(other)?;
        let idx = self.shape.indices();
        let coeffs = idx
            .iter()
            .map(|&d| {
                let mut acc = NormCoeff::ZERO;
                for (&b, &xb) in idx.iter().zip(&self.coeffs) {
                    if let Some(g) = d.checked_sub(b) {
                        acc = acc + xb * other.get(g);
                    }
                }
                acc
            })
            .collect();
        Ok(NormSeries { shape: self.shape, coeffs })
    }

    pub fn scale(&self, c: f64) -> NormSeries {
        NormSeries { shape: self.shape, coeffs: self.coeffs.iter().map(|x| x.scale(c)).collect() }
    }

    /// Componentwise `≤`, with infinity maximal.
    pub fn leq(&self, other: &NormSeries) -> Result<bool, NormError> {
        self.check(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).all(|(a, b)| a <= b))
    }

    pub fn max(&self, other: &NormSeries) -> Result<NormSeries, NormError> {
        self.check(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| a.max(b)).collect();
        Ok(NormSeries { shape: self.shape, coeffs })
    }

    pub fn min(&self, other: &NormSeries) -> Result<NormSeries, NormError> {
        self.check(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| a.min(b)).collect();
        Ok(NormSeries { shape: self.shape, coeffs })
    }

    /// `(a − X)^{-1} = (a − X0)^{-1} Σ_n ((X − X0)/(a − X0))^n`.
    ///
    /// `X − X0` has no constant term, so powers beyond `r + r0` vanish on
    /// the tracked region (apart from infinities, which persist correctly).
    pub fn geom_inverse(a: f64, x: &NormSeries) -> Result<NormSeries, NormError> {
        let x0 = x.constant_term();
        let inv = match x0 {
            NormCoeff::Finite(v) if a - v > 0.0 => 1.0 / (a - v),
            _ => return Err(NormError::InverseDomain { a, x0 }),
        };
        let mut y = x.scale(inv);
        y.coeffs[0] = NormCoeff::ZERO;
        let shape = x.shape;
        let mut sum = NormSeries::one(shape);
        let mut power = NormSeries::one(shape);
        for _ in 0..(shape.r + shape.r0) {
            power = power.mul(&y)?;
            sum = sum.add(&power)?;
        }
        Ok(sum.scale(inv))
    }

    /// Formal derivative `∂/∂t_axis`; reads beyond the region become infinite.
    pub fn partial(&self, axis: usize) -> NormSeries {
        assert!(axis < 3, "axis must be 0, 1 or 2");
        NormSeries::from_fn(self.shape, |d| {
            let up = d.bump(axis);
            self.get(up).scale(f64::from(d.0[axis] + 1))
        })
    }

    /// `𝔠_j`: coefficient `M^{j(δ0+|δ⃗|)}` on the tracked region.
    pub fn c_j(j: i32, m: f64, shape: Shape) -> NormSeries {
        NormSeries::from_fn(shape, |d| NormCoeff::Finite(m.powf(f64::from(j) * f64::from(d.total()))))
    }

    /// `𝔢_j(X) = 𝔠_j / (1 − M^j X)`, defined for `X0 < M^{-j}`.
    pub fn e_j(j: i32, m: f64, x: &NormSeries) -> Result<NormSeries, NormError> {
        let mj = m.powi(j);
        let bound = 1.0 / mj;
        match x.constant_term() {
            NormCoeff::Finite(v) if v < bound => {}
            x0 => return Err(NormError::EjDomain { x0, bound }),
        }
        let inv = NormSeries::geom_inverse(1.0, &x.scale(mj))?;
        NormSeries::c_j(j, m, x.shape).mul(&inv)
    }
}

impl fmt::Display for NormSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (d, c) in self.iter() {
            if c == NormCoeff::ZERO {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}·t^{:?}", d.0)?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CoeffEntry {
    delta: [u32; 3],
    value: NormCoeff,
}

#[derive(Serialize, Deserialize)]
struct SeriesWire {
    shape: Shape,
    coeffs: Vec<CoeffEntry>,
}

impl Serialize for NormSeries {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SeriesWire {
            shape: self.shape,
            coeffs: self.iter().map(|(d, value)| CoeffEntry { delta: d.0, value }).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NormSeries {
    /// Missing tracked entries read as zero; entries outside the region are rejected.
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = SeriesWire::deserialize(d)?;
        let mut s = NormSeries::zero(wire.shape);
        for e in wire.coeffs {
            let idx = MultiIndex(e.delta);
            if !wire.shape.contains(idx) {
                return Err(de::Error::custom(format!("delta {:?} outside shape", e.delta)));
            }
            s.set(idx, e.value);
        }
        Ok(s)
    }
}
