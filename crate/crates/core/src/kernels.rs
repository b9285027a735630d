//! Translation-invariant kernels on a discrete space-time torus.
//!
//! Position space is `n0 × n × n` sites with spacings `h0` (time) and `h`
//! (space); integrals are cell-volume-weighted sums and the dual lattice is
//! periodic, so every Fourier identity here is an exact finite sum. A kernel
//! stores one representative per translation orbit: the first leg sits at
//! the origin.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, SectorPartition};
use crate::norm_domain::{MultiIndex, NormCoeff, NormSeries, Shape};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("operation requires a translation-invariant kernel")]
    NotTranslationInvariant,
    #[error("leg arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("decay operator pairs a leg with itself ({0})")]
    SelfPair(usize),
    #[error("leg index {0} out of range")]
    LegRange(usize),
    #[error("kernel is spin dependent: off-diagonal block of size {0:e}")]
    SpinDependent(f64),
    #[error("kernels live on different tori")]
    TorusMismatch,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Discrete torus `ℤ_{n0} × ℤ_n × ℤ_n` with spacings `h0`, `h` and `spins` spin states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Torus {
    pub n0: usize,
    pub n: usize,
    pub h0: f64,
    pub h: f64,
    pub spins: u8,
}

impl Default for Torus {
    fn default() -> Self {
        Torus { n0: 8, n: 8, h0: 1.0, h: 1.0, spins: 2 }
    }
}

impl Torus {
    pub fn sites(&self) -> usize {
        self.n0 * self.n * self.n
    }

    pub fn cell(&self) -> f64 {
        self.h0 * self.h * self.h
    }

    pub fn volume(&self) -> f64 {
        self.cell() * self.sites() as f64
    }

    pub fn coords(&self, site: u32) -> [usize; 3] {
        let s = site as usize;
        [s / (self.n * self.n), (s / self.n) % self.n, s % self.n]
    }

    pub fn site(&self, c: [usize; 3]) -> u32 {
        ((c[0] % self.n0) * self.n * self.n + (c[1] % self.n) * self.n + (c[2] % self.n)) as u32
    }

    fn dims(&self) -> [usize; 3] {
        [self.n0, self.n, self.n]
    }

    /// `a − b` on the torus.
    pub fn sub(&self, a: u32, b: u32) -> u32 {
        let (ca, cb, d) = (self.coords(a), self.coords(b), self.dims());
        self.site([(ca[0] + d[0] - cb[0]) % d[0], (ca[1] + d[1] - cb[1]) % d[1], (ca[2] + d[2] - cb[2]) % d[2]])
    }

    pub fn add(&self, a: u32, b: u32) -> u32 {
        let (ca, cb) = (self.coords(a), self.coords(b));
        self.site([ca[0] + cb[0], ca[1] + cb[1], ca[2] + cb[2]])
    }

    /// Position with coordinates in `[0, n·h)`.
    pub fn position(&self, site: u32) -> [f64; 3] {
        let c = self.coords(site);
        [c[0] as f64 * self.h0, c[1] as f64 * self.h, c[2] as f64 * self.h]
    }

    /// Minimal-image difference `x_a − x_b`.
    pub fn min_image(&self, a: u32, b: u32) -> [f64; 3] {
        let c = self.coords(self.sub(a, b));
        let d = self.dims();
        let sp = [self.h0, self.h, self.h];
        let mut out = [0.0; 3];
        for ax in 0..3 {
            let signed = if c[ax] * 2 > d[ax] { c[ax] as i64 - d[ax] as i64 } else { c[ax] as i64 };
            out[ax] = signed as f64 * sp[ax];
        }
        out
    }

    /// Dual-lattice momentum for index `mi` (same layout as sites), components in `(-π/h, π/h]`.
    pub fn momentum(&self, mi: u32) -> [f64; 3] {
        let c = self.coords(mi);
        let d = self.dims();
        let sp = [self.h0, self.h, self.h];
        let mut out = [0.0; 3];
        for ax in 0..3 {
            let signed = if c[ax] * 2 > d[ax] { c[ax] as i64 - d[ax] as i64 } else { c[ax] as i64 };
            out[ax] = 2.0 * PI * signed as f64 / (d[ax] as f64 * sp[ax]);
        }
        out
    }

    /// Index of `−k`.
    pub fn neg_momentum(&self, mi: u32) -> u32 {
        self.sub(0, mi)
    }

    /// `⟨k, x⟩_- = −k0 x0 + k·x`.
    pub fn pairing(&self, mi: u32, site: u32) -> f64 {
        let k = self.momentum(mi);
        let x = self.position(site);
        -k[0] * x[0] + k[1] * x[1] + k[2] * x[2]
    }
}

/// One kernel argument: a torus site, spin, creation/annihilation bit and optional sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Leg {
    pub site: u32,
    pub spin: u8,
    pub a: u8,
    pub sector: Option<u32>,
}

impl Leg {
    pub fn new(site: u32, spin: u8, a: u8) -> Self {
        Leg { site, spin, a, sector: None }
    }

    pub fn with_sector(self, s: u32) -> Self {
        Leg { sector: Some(s), ..self }
    }

    /// The non-positional part `(σ, a, s)`.
    pub fn label(&self) -> (u8, u8, Option<u32>) {
        (self.spin, self.a, self.sector)
    }
}

/// A function on `ℬ^m × (ℬ × Σ)^n`; the first `m` legs are external.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorizedKernel {
    pub torus: Torus,
    pub j: i32,
    pub m: usize,
    pub n: usize,
    pub translation_invariant: bool,
    pub antisym_external: bool,
    pub antisym_internal: bool,
    entries: BTreeMap<Vec<Leg>, Complex64>,
}

impl SectorizedKernel {
    pub fn new(torus: Torus, j: i32, m: usize, n: usize) -> Self {
        SectorizedKernel {
            torus,
            j,
            m,
            n,
            translation_invariant: true,
            antisym_external: false,
            antisym_internal: false,
            entries: BTreeMap::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.m + self.n
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|v| v.norm() == 0.0)
    }

    fn canonical(&self, legs: &[Leg]) -> Vec<Leg> {
        if !self.translation_invariant || legs.is_empty() {
            return legs.to_vec();
        }
        let origin = legs[0].site;
        legs.iter().map(|l| Leg { site: self.torus.sub(l.site, origin), ..*l }).collect()
    }

    pub fn get(&self, legs: &[Leg]) -> Complex64 {
        self.entries.get(&self.canonical(legs)).copied().unwrap_or_default()
    }

    /// Adds `v` to the entry (orbit) of `legs`.
    pub fn add_to(&mut self, legs: &[Leg], v: Complex64) -> Result<(), KernelError> {
        if legs.len() != self.arity() {
            return Err(KernelError::Arity { expected: self.arity(), got: legs.len() });
        }
        if v == Complex64::default() {
            return Ok(());
        }
        let key = self.canonical(legs);
        let e = self.entries.entry(key).or_default();
        *e += v;
        Ok(())
    }

    pub fn set(&mut self, legs: &[Leg], v: Complex64) -> Result<(), KernelError> {
        if legs.len() != self.arity() {
            return Err(KernelError::Arity { expected: self.arity(), got: legs.len() });
        }
        let key = self.canonical(legs);
        self.entries.insert(key, v);
        Ok(())
    }

    /// Orbit representatives and values.
    pub fn entries(&self) -> impl Iterator<Item = (&Vec<Leg>, &Complex64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prune(&mut self, tol: f64) {
        self.entries.retain(|_, v| v.norm() > tol);
    }

    pub fn scale(&self, c: Complex64) -> SectorizedKernel {
        let mut out = self.clone();
        for v in out.entries.values_mut() {
            *v *= c;
        }
        out
    }

    pub fn add(&self, other: &SectorizedKernel) -> Result<SectorizedKernel, KernelError> {
        if self.torus != other.torus {
            return Err(KernelError::TorusMismatch);
        }
        let mut out = self.clone();
        for (k, v) in &other.entries {
            out.add_to(k, *v)?;
        }
        Ok(out)
    }

    /// Largest entrywise difference.
    pub fn max_diff(&self, other: &SectorizedKernel) -> f64 {
        let mut d: f64 = 0.0;
        for (k, v) in &self.entries {
            d = d.max((v - other.get(k)).norm());
        }
        for (k, v) in &other.entries {
            d = d.max((v - self.get(k)).norm());
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Translation-invariant two-legged kernel with `f̌((k,σ,1),(k,σ,0)) = c(k)`.
    ///
    /// `f((x,σ,1),(x',σ,0)) = (1/Vol) Σ_k e^{-i⟨k, x'−x⟩_-} c(k)` and
    /// antisymmetry fixes the `(0,1)` block.
    pub fn from_multiplier(torus: Torus, j: i32, c: impl Fn([f64; 3]) -> Complex64) -> SectorizedKernel {
        let mut out = SectorizedKernel::new(torus, j, 0, 2);
        out.antisym_internal = true;
        let v = torus.sites() as u32;
        let cs: Vec<Complex64> = (0..v).map(|mi| c(torus.momentum(mi))).collect();
        for y in 0..v {
            let mut g = Complex64::default();
            for (mi, ck) in cs.iter().enumerate() {
                g += Complex64::from_polar(1.0, -torus.pairing(mi as u32, y)) * ck;
            }
            g /= torus.volume();
            for spin in 0..torus.spins {
                let _ = out.add_to(&[Leg::new(0, spin, 1), Leg::new(y, spin, 0)], g);
                let _ = out.add_to(&[Leg::new(torus.sub(0, y), spin, 0), Leg::new(0, spin, 1)], -g);
            }
        }
        out.prune(1e-300);
        out
    }
}

/// Labels `(creation bit, spin, sector)` of one leg.
pub type Label = (u8, u8, Option<u32>);

/// Per-leg labels of a momentum-space entry.
pub type Labels = Vec<Label>;

/// A translation-invariant kernel in momentum space: values at
/// `(labels of all legs, momenta of legs 2..n)`; leg 1's momentum is fixed by
/// `Σ (−1)^{a_i} k_i = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumKernel {
    pub torus: Torus,
    pub j: i32,
    pub m: usize,
    pub n: usize,
    pub entries: BTreeMap<(Labels, Vec<u32>), Complex64>,
}

impl MomentumKernel {
    pub fn get(&self, labels: &[(u8, u8, Option<u32>)], moms: &[u32]) -> Complex64 {
        self.entries.get(&(labels.to_vec(), moms.to_vec())).copied().unwrap_or_default()
    }

    /// Momentum index carried by leg 1.
    pub fn first_momentum(&self, labels: &[(u8, u8, Option<u32>)], moms: &[u32]) -> u32 {
        let t = &self.torus;
        // (−1)^{a_1} k_1 = −Σ_{i≥2} (−1)^{a_i} k_i
        let mut acc = 0u32;
        for (lab, &mi) in labels[1..].iter().zip(moms) {
            let signed = if lab.1 == 0 { mi } else { t.neg_momentum(mi) };
            acc = t.add(acc, signed);
        }
        let minus = t.neg_momentum(acc);
        if labels[0].1 == 0 {
            minus
        } else {
            t.neg_momentum(minus)
        }
    }

    /// Inverse transform back to a position-space kernel.
    pub fn inverse(&self) -> SectorizedKernel {
        let t = self.torus;
        let arity = self.m + self.n;
        let mut out = SectorizedKernel::new(t, self.j, self.m, self.n);
        let v = t.sites() as u32;
        let norm = t.volume().powi(arity as i32 - 1);
        let mut grouped: BTreeMap<&Labels, Vec<(&Vec<u32>, Complex64)>> = BTreeMap::new();
        for ((labels, moms), val) in &self.entries {
            grouped.entry(labels).or_default().push((moms, *val));
        }
        for (labels, list) in grouped {
            for_each_tuple(v, arity - 1, |ys| {
                let mut acc = Complex64::default();
                for (moms, val) in &list {
                    let mut phase = 0.0;
                    for ((lab, &mi), &y) in labels[1..].iter().zip(moms.iter()).zip(ys) {
                        phase -= sign_a(lab.1) * t.pairing(mi, y);
                    }
                    acc += Complex64::from_polar(1.0, phase) * val;
                }
                acc /= norm;
                if acc.norm() > 1e-300 {
                    let mut legs = vec![Leg { site: 0, spin: labels[0].0, a: labels[0].1, sector: labels[0].2 }];
                    for (lab, &y) in labels[1..].iter().zip(ys) {
                        legs.push(Leg { site: y, spin: lab.0, a: lab.1, sector: lab.2 });
                    }
                    let _ = out.add_to(&legs, acc);
                }
            });
        }
        out
    }
}

fn sign_a(a: u8) -> f64 {
    if a == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Calls `f` on every tuple in `0..base` of length `len`.
fn for_each_tuple(base: u32, len: usize, mut f: impl FnMut(&[u32])) {
    let mut t = vec![0u32; len];
    loop {
        f(&t);
        let mut i = 0;
        loop {
            if i == len {
                return;
            }
            t[i] += 1;
            if t[i] < base {
                break;
            }
            t[i] = 0;
            i += 1;
        }
    }
}

/// Total Fourier transform with the `E_+` character convention.
pub fn fourier_total(f: &SectorizedKernel) -> Result<MomentumKernel, KernelError> {
    if !f.translation_invariant {
        return Err(KernelError::NotTranslationInvariant);
    }
    let t = f.torus;
    let arity = f.arity();
    let v = t.sites() as u32;
    let weight = t.cell().powi(arity as i32 - 1);
    let mut grouped: BTreeMap<Labels, Vec<(Vec<u32>, Complex64)>> = BTreeMap::new();
    for (legs, val) in &f.entries {
        let labels: Vec<_> = legs.iter().map(Leg::label).collect();
        let sites: Vec<u32> = legs[1..].iter().map(|l| l.site).collect();
        grouped.entry(labels).or_default().push((sites, *val));
    }
    let mut out = MomentumKernel { torus: t, j: f.j, m: f.m, n: f.n, entries: BTreeMap::new() };
    for (labels, reps) in grouped {
        for_each_tuple(v, arity - 1, |moms| {
            let mut acc = Complex64::default();
            for (ys, val) in &reps {
                let mut phase = 0.0;
                for ((lab, &mi), &y) in labels[1..].iter().zip(moms).zip(ys) {
                    phase += sign_a(lab.1) * t.pairing(mi, y);
                }
                acc += Complex64::from_polar(1.0, phase) * val;
            }
            acc *= weight;
            if acc.norm() > 1e-300 {
                out.entries.insert((labels.clone(), moms.to_vec()), acc);
            }
        });
    }
    Ok(out)
}

/// `ǔ(k) = Σ_{s,s'} ǔ((k,σ,1,s),(k,σ,0,s'))` on every torus momentum, after
/// checking spin independence and that opposite-spin blocks vanish.
pub fn check_u(u: &SectorizedKernel) -> Result<Vec<Complex64>, KernelError> {
    if u.m != 0 || u.n != 2 {
        return Err(KernelError::Arity { expected: 2, got: u.arity() });
    }
    let mk = fourier_total(u)?;
    let t = u.torus;
    let v = t.sites();
    let mut per_spin = vec![vec![Complex64::default(); v]; t.spins as usize];
    let mut off: f64 = 0.0;
    for ((labels, moms), val) in &mk.entries {
        let (l1, l2) = (labels[0], labels[1]);
        if l1.0 != l2.0 {
            off = off.max(val.norm());
            continue;
        }
        if l1.1 == 1 && l2.1 == 0 {
            per_spin[l1.0 as usize][moms[0] as usize] += val;
        }
    }
    if off > 1e-12 {
        return Err(KernelError::SpinDependent(off));
    }
    for s in 1..per_spin.len() {
        let d = per_spin[s].iter().zip(&per_spin[0]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if d > 1e-12 {
            return Err(KernelError::SpinDependent(d));
        }
    }
    Ok(per_spin.swap_remove(0))
}

/// Multiplies the momentum-space kernel of a two-legged `u` by `μ(k)`.
pub fn conv_nu(u: &SectorizedKernel, mu: impl Fn([f64; 3]) -> f64) -> Result<SectorizedKernel, KernelError> {
    if u.n + u.m != 2 {
        return Err(KernelError::Arity { expected: 2, got: u.arity() });
    }
    let mut mk = fourier_total(u)?;
    let t = u.torus;
    for ((_, moms), val) in mk.entries.iter_mut() {
        // both legs carry the same |k|; μ is evaluated at leg 2's momentum k.
        *val *= mu(t.momentum(moms[0]));
    }
    let mut out = mk.inverse();
    out.antisym_internal = u.antisym_internal;
    out.antisym_external = u.antisym_external;
    Ok(out)
}

/// `(ξ_u − ξ_v)^δ` factors; legs are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecayFactor {
    pub delta: MultiIndex,
    pub u: usize,
    pub v: usize,
}

fn decay_weight(t: &Torus, legs: &[Leg], ops: &[DecayFactor]) -> f64 {
    let mut w = 1.0;
    for op in ops {
        let d = t.min_image(legs[op.u].site, legs[op.v].site);
        for (x, e) in d.iter().zip(op.delta.0) {
            w *= x.powi(e as i32);
        }
    }
    w
}

/// Pointwise multiplication by `Π (ξ_u − ξ_v)^δ` with minimal-image differences.
pub fn decay_apply(ops: &[DecayFactor], f: &SectorizedKernel) -> Result<SectorizedKernel, KernelError> {
    for op in ops {
        if op.u == op.v {
            return Err(KernelError::SelfPair(op.u));
        }
        if op.u >= f.arity() || op.v >= f.arity() {
            return Err(KernelError::LegRange(op.u.max(op.v)));
        }
    }
    let mut out = f.clone();
    for (legs, v) in out.entries.iter_mut() {
        *v *= decay_weight(&f.torus, legs, ops);
    }
    Ok(out)
}

/// Total order of a decay operator.
pub fn decay_order(ops: &[DecayFactor]) -> MultiIndex {
    ops.iter().fold(MultiIndex::ZERO, |acc, op| acc + op.delta)
}

/// `|||f|||_{1,∞}` of the entries accepted by `filter`, with extra weights.
fn l1linf_weighted(f: &SectorizedKernel, weight: impl Fn(&[Leg]) -> f64, filter: impl Fn(&[Leg]) -> bool) -> f64 {
    let t = &f.torus;
    let cell = t.cell();
    if f.m == 0 {
        if f.n == 0 {
            return f.entries.values().map(|v| v.norm()).sum();
        }
        // pinned leg p: for translation-invariant kernels the sup over its
        // position is trivial, so only its non-positional label is grouped on.
        let mut best: f64 = 0.0;
        for p in 0..f.n {
            let mut sums: BTreeMap<(Option<u32>, Label), f64> = BTreeMap::new();
            for (legs, v) in &f.entries {
                if !filter(legs) {
                    continue;
                }
                let site = (!f.translation_invariant).then_some(legs[p].site);
                *sums.entry((site, legs[p].label())).or_default() += v.norm() * weight(legs).abs();
            }
            best = best.max(sums.values().copied().fold(0.0, f64::max));
        }
        best * cell.powi(f.n as i32 - 1)
    } else {
        // sup over the external legs: group by their full coordinates relative to leg 1.
        let mut sums: BTreeMap<Vec<Leg>, f64> = BTreeMap::new();
        for (legs, v) in &f.entries {
            if !filter(legs) {
                continue;
            }
            *sums.entry(legs[..f.m].to_vec()).or_default() += v.norm() * weight(legs).abs();
        }
        sums.values().copied().fold(0.0, f64::max) * cell.powi(f.n as i32)
    }
}

/// Scalar `L¹–L∞` norm.
pub fn norm_l1linf(f: &SectorizedKernel) -> f64 {
    l1linf_weighted(f, |_| 1.0, |_| true)
}

/// Every way to spread the total order `δ` over the given leg pairs.
pub fn decay_operators(delta: MultiIndex, pairs: &[(usize, usize)]) -> Vec<Vec<DecayFactor>> {
    fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
        if parts == 1 {
            return vec![vec![total]];
        }
        let mut out = Vec::new();
        for first in 0..=total {
            for mut rest in compositions(total - first, parts - 1) {
                rest.insert(0, first);
                out.push(rest);
            }
        }
        out
    }
    if pairs.is_empty() {
        return if delta == MultiIndex::ZERO { vec![vec![]] } else { vec![] };
    }
    let per_axis: Vec<Vec<Vec<u32>>> = (0..3).map(|ax| compositions(delta.0[ax], pairs.len())).collect();
    let mut out = Vec::new();
    for c0 in &per_axis[0] {
        for c1 in &per_axis[1] {
            for c2 in &per_axis[2] {
                let ops: Vec<DecayFactor> = pairs
                    .iter()
                    .enumerate()
                    .map(|(i, &(u, v))| DecayFactor { delta: MultiIndex([c0[i], c1[i], c2[i]]), u, v })
                    .filter(|op| op.delta != MultiIndex::ZERO)
                    .collect();
                out.push(ops);
            }
        }
    }
    out
}

fn leg_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            out.push((u, v));
        }
    }
    out
}

fn deriv_norm_filtered(f: &SectorizedKernel, shape: Shape, filter: &dyn Fn(&[Leg]) -> bool) -> NormSeries {
    if f.m != 0 {
        let c = l1linf_weighted(f, |_| 1.0, filter);
        return NormSeries::constant(shape, NormCoeff::Finite(c));
    }
    let pairs = leg_pairs(f.n);
    NormSeries::from_fn(shape, |d| {
        let best = decay_operators(d, &pairs)
            .iter()
            .map(|ops| l1linf_weighted(f, |legs| decay_weight(&f.torus, legs, ops), filter))
            .fold(0.0, f64::max);
        NormCoeff::Finite(best / d.factorial())
    })
}

/// `‖f‖_{1,∞}`: per δ, max over decay operators of total order δ, divided by δ!.
pub fn norm_deriv_l1linf(f: &SectorizedKernel, shape: Shape) -> NormSeries {
    deriv_norm_filtered(f, shape, &|_| true)
}

/// `|φ|_{p,Σ}`.
pub fn norm_p_sigma(f: &SectorizedKernel, p: usize, shape: Shape) -> NormSeries {
    let zero = NormSeries::zero(shape);
    if (f.m >= 1 && p >= 2) || (f.m == 0 && p > f.n) || p == 0 {
        return zero;
    }
    let internal = f.m..f.arity();
    let mut tuples: BTreeMap<Vec<Option<u32>>, ()> = BTreeMap::new();
    for legs in f.entries.keys() {
        tuples.insert(legs[internal.clone()].iter().map(|l| l.sector).collect(), ());
    }
    let per_tuple: Vec<(Vec<Option<u32>>, NormSeries)> = tuples
        .into_keys()
        .map(|tup| {
            let key = tup.clone();
            let m = f.m;
            let filt = move |legs: &[Leg]| legs[m..].iter().map(|l| l.sector).eq(key.iter().copied());
            let ns = deriv_norm_filtered(f, shape, &filt);
            (tup, ns)
        })
        .collect();
    if f.m >= 1 {
        return per_tuple.iter().fold(zero, |acc, (_, ns)| acc.add(ns).expect("same shape"));
    }
    let mut best = zero.clone();
    for pinned in combinations(f.n, p) {
        let mut sums: BTreeMap<Vec<Option<u32>>, NormSeries> = BTreeMap::new();
        for (tup, ns) in &per_tuple {
            let key: Vec<Option<u32>> = pinned.iter().map(|&i| tup[i]).collect();
            let e = sums.entry(key).or_insert_with(|| zero.clone());
            *e = e.add(ns).expect("same shape");
        }
        for ns in sums.values() {
            best = best.max(ns).expect("same shape");
        }
    }
    best
}

fn combinations(n: usize, p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for rest in combinations(n, p - 1) {
            if rest.first().is_none_or(|&r| r > first) {
                let mut c = vec![first];
                c.extend(rest);
                out.push(c);
            }
        }
    }
    out
}

/// `λ0`, `υ` and the constant `B` used by the weighted norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelNormConfig {
    pub lambda0: f64,
    pub upsilon: f64,
    pub b_const: f64,
}

impl Default for KernelNormConfig {
    fn default() -> Self {
        KernelNormConfig { lambda0: 1e-3, upsilon: 0.1, b_const: 1.0 }
    }
}

impl KernelNormConfig {
    /// `ρ_{m;n}(λ) = λ^{-(1−υ) max{m+n−2, 2}/2}`.
    pub fn rho(&self, lambda: f64, m: usize, n: usize) -> f64 {
        let e = ((m + n) as f64 - 2.0).max(2.0) / 2.0;
        lambda.powf(-(1.0 - self.upsilon) * e)
    }

    /// `ρ^{(j)}_{m;n}`: `ρ_{m;n}(λ0)` times `⁴√(𝔩_j M^j)` when `m > 0`.
    pub fn rho_j(&self, m: usize, n: usize, l_j: f64, mj: f64) -> f64 {
        let base = self.rho(self.lambda0, m, n);
        if m > 0 {
            base * (l_j * mj).powf(0.25)
        } else {
            base
        }
    }
}

/// `|φ|_j`.
pub fn norm_j(f: &SectorizedKernel, shape: Shape, cfg: &KernelNormConfig, l_j: f64, mj: f64) -> NormSeries {
    let rho = cfg.rho_j(f.m, f.n, l_j, mj);
    if f.m == 0 {
        let n1 = norm_p_sigma(f, 1, shape);
        let n3 = norm_p_sigma(f, 3, shape).scale(1.0 / l_j);
        let n5 = norm_p_sigma(f, 5, shape).scale(1.0 / (l_j * l_j));
        n1.add(&n3).and_then(|x| x.add(&n5)).expect("same shape").scale(rho)
    } else {
        norm_p_sigma(f, 1, shape).scale(rho * l_j / (mj * mj))
    }
}

/// `χ_s(k)` on every torus momentum, as `(sector, value)` lists.
pub fn chi_table(t: &Torus, part: &SectorPartition<'_>) -> Result<Vec<Vec<(usize, f64)>>, KernelError> {
    (0..t.sites() as u32).map(|mi| Ok(part.chi(t.momentum(mi))?)).collect()
}

/// Resectorization onto the partition's sectorization: every internal leg is
/// multiplied in momentum space by `χ_s` of its new sector after summing the old
/// sector labels. Exact on the torus.
pub fn resectorize(f: &SectorizedKernel, part: &SectorPartition<'_>) -> Result<SectorizedKernel, KernelError> {
    if !f.translation_invariant {
        return Err(KernelError::NotTranslationInvariant);
    }
    let t = f.torus;
    let chi = chi_table(&t, part)?;
    let mk = fourier_total(f)?;
    let mut summed: BTreeMap<(Labels, Vec<u32>), Complex64> = BTreeMap::new();
    for ((labels, moms), val) in &mk.entries {
        let stripped: Vec<_> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| if i >= f.m { (l.0, l.1, None) } else { *l })
            .collect();
        *summed.entry((stripped, moms.clone())).or_default() += val;
    }
    let mut out = MomentumKernel { torus: t, j: part.j(), m: f.m, n: f.n, entries: BTreeMap::new() };
    for ((labels, moms), val) in summed {
        let k1 = mk_first(&t, &labels, &moms);
        let leg_moms: Vec<u32> = std::iter::once(k1).chain(moms.iter().copied()).collect();
        let mut partial: Vec<(Labels, Complex64)> = vec![(Vec::new(), val)];
        for (i, lab) in labels.iter().enumerate() {
            let mut next = Vec::new();
            for (prefix, v) in &partial {
                if i < f.m {
                    let mut p = prefix.clone();
                    p.push(*lab);
                    next.push((p, *v));
                } else {
                    for &(s, c) in &chi[leg_moms[i] as usize] {
                        let mut p = prefix.clone();
                        p.push((lab.0, lab.1, Some(s as u32)));
                        next.push((p, v * c));
                    }
                }
            }
            partial = next;
        }
        for (labs, v) in partial {
            *out.entries.entry((labs, moms.clone())).or_default() += v;
        }
    }
    let mut res = out.inverse();
    res.antisym_external = f.antisym_external;
    res.antisym_internal = f.antisym_internal;
    Ok(res)
}

fn mk_first(t: &Torus, labels: &[(u8, u8, Option<u32>)], moms: &[u32]) -> u32 {
    let probe = MomentumKernel { torus: *t, j: 0, m: 0, n: 0, entries: BTreeMap::new() };
    probe.first_momentum(labels, moms)
}

/// Which legs an antisymmetrization permutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntisymMode {
    External,
    Internal,
    FourLegged,
}

/// All permutations of `0..n` with their signs.
pub fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out.into_iter()
        .map(|p| {
            let mut inv = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if p[i] > p[j] {
                        inv += 1;
                    }
                }
            }
            let sign = if inv % 2 == 0 { 1.0 } else { -1.0 };
            (p, sign)
        })
        .collect()
}

/// Projection onto the antisymmetric subspace of the selected legs.
pub fn antisymmetrize(f: &SectorizedKernel, mode: AntisymMode) -> Result<SectorizedKernel, KernelError> {
    let range = match mode {
        AntisymMode::External => 0..f.m,
        AntisymMode::Internal => f.m..f.arity(),
        AntisymMode::FourLegged => {
            if f.arity() != 4 {
                return Err(KernelError::Arity { expected: 4, got: f.arity() });
            }
            0..4
        }
    };
    let perms = permutations(range.len());
    let norm = perms.len() as f64;
    let mut out = SectorizedKernel { entries: BTreeMap::new(), ..f.clone() };
    for (legs, v) in &f.entries {
        for (p, sign) in &perms {
            // (Ant f)(x) = 1/k! Σ_π sgn(π) f(x_π); we scatter f(x) to every x' with x'_π = x.
            let mut new_legs = legs.clone();
            for (i, &pi) in p.iter().enumerate() {
                new_legs[range.start + pi] = legs[range.start + i];
            }
            out.add_to(&new_legs, v * (sign / norm))?;
        }
    }
    out.prune(1e-300);
    match mode {
        AntisymMode::External => out.antisym_external = true,
        AntisymMode::Internal => out.antisym_internal = true,
        AntisymMode::FourLegged => {
            out.antisym_external = true;
            out.antisym_internal = true;
        }
    }
    Ok(out)
}

/// Header of the kernel interchange format; the coefficient table is written
/// alongside as CSV rows from [`SectorizedKernel::rows`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelHeader {
    pub j: i32,
    pub m: usize,
    pub n: usize,
    pub translation_invariant: bool,
    pub antisym_external: bool,
    pub antisym_internal: bool,
    pub torus: Torus,
}

/// One coefficient row: an orbit key `site:spin:a:sector|…` and the complex value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub key: String,
    pub re: f64,
    pub im: f64,
}

impl SectorizedKernel {
    pub fn header(&self) -> KernelHeader {
        KernelHeader {
            j: self.j,
            m: self.m,
            n: self.n,
            translation_invariant: self.translation_invariant,
            antisym_external: self.antisym_external,
            antisym_internal: self.antisym_internal,
            torus: self.torus,
        }
    }

    pub fn rows(&self) -> Vec<KernelRow> {
        self.entries
            .iter()
            .map(|(legs, v)| KernelRow {
                key: legs
                    .iter()
                    .map(|l| match l.sector {
                        Some(s) => format!("{}:{}:{}:{}", l.site, l.spin, l.a, s),
                        None => format!("{}:{}:{}:-", l.site, l.spin, l.a),
                    })
                    .collect::<Vec<_>>()
                    .join("|"),
                re: v.re,
                im: v.im,
            })
            .collect()
    }

    pub fn from_rows(header: &KernelHeader, rows: &[KernelRow]) -> Result<SectorizedKernel, String> {
        let mut k = SectorizedKernel::new(header.torus, header.j, header.m, header.n);
        k.translation_invariant = header.translation_invariant;
        k.antisym_external = header.antisym_external;
        k.antisym_internal = header.antisym_internal;
        for r in rows {
            let legs = r
                .key
                .split('|')
                .map(|p| {
                    let f: Vec<&str> = p.split(':').collect();
                    if f.len() != 4 {
                        return Err(format!("bad leg {p:?}"));
                    }
                    let num = |s: &str| s.parse::<u32>().map_err(|e| format!("{s:?}: {e}"));
                    Ok(Leg {
                        site: num(f[0])?,
                        spin: num(f[1])? as u8,
                        a: num(f[2])? as u8,
                        sector: if f[3] == "-" { None } else { Some(num(f[3])?) },
                    })
                })
                .collect::<Result<Vec<Leg>, String>>()?;
            k.set(&legs, Complex64::new(r.re, r.im)).map_err(|e| e.to_string())?;
        }
        Ok(k)
    }
}
