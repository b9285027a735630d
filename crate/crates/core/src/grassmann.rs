//! Exact Grassmann algebra on at most 64 (by default 16) generators.
//!
//! Elements are sparse maps from generator subsets (bit masks) to complex
//! coefficients; a mask stands for the product of its generators in
//! increasing index order. Gaussian convolution is `exp(Δ)` with
//! `Δ = ½ Σ C_ij ∂_j ∂_i` built from left derivatives, so that
//! `∫ ζ_1 ζ_2 dμ_C = C_12`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{KernelNormConfig, Leg, SectorizedKernel, Torus};
use crate::norm_domain::{NormError, NormSeries};

pub const DEFAULT_CAP: usize = 16;

#[derive(Debug, Error)]
pub enum GrassmannError {
    #[error("generator count {count} exceeds the cap {cap}")]
    Budget { count: usize, cap: usize },
    #[error("generator sets differ ({0} vs {1} generators)")]
    Mismatch(usize, usize),
    #[error("duplicate generator label at index {0}")]
    DuplicateLabel(usize),
    #[error("logarithm of an element with vanishing scalar part")]
    ZeroScalar,
    #[error("covariance is {rows}x{cols}, expected {n}x{n}")]
    CovarianceShape { rows: usize, cols: usize, n: usize },
    #[error(transparent)]
    Norm(#[from] NormError),
}

/// Sign of moving the generators of `b` to the right of those of `a`
/// (both sorted): `(−1)^{#{(i,j): i∈a, j∈b, i>j}}`.
fn merge_sign(a: u64, b: u64) -> f64 {
    let mut count = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        rest &= rest - 1;
        count += (a >> j >> 1).count_ones();
    }
    if count.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `(−1)^{#generators of mask below i}`.
fn prefix_sign(mask: u64, i: usize) -> f64 {
    if (mask & ((1u64 << i) - 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grassmann {
    n: usize,
    terms: BTreeMap<u64, Complex64>,
}

impl Grassmann {
    pub fn zero(n: usize) -> Self {
        assert!(n <= 64, "at most 64 generators");
        Grassmann { n, terms: BTreeMap::new() }
    }

    pub fn scalar(n: usize, c: Complex64) -> Self {
        let mut g = Grassmann::zero(n);
        if c != Complex64::default() {
            g.terms.insert(0, c);
        }
        g
    }

    pub fn one(n: usize) -> Self {
        Grassmann::scalar(n, Complex64::new(1.0, 0.0))
    }

    pub fn generator(n: usize, i: usize) -> Self {
        let mut g = Grassmann::zero(n);
        g.terms.insert(1u64 << i, Complex64::new(1.0, 0.0));
        g
    }

    /// `c · g_{i_1} g_{i_2} ⋯` in the given (not necessarily sorted) order.
    pub fn monomial(n: usize, idx: &[usize], c: Complex64) -> Self {
        let mut mask = 0u64;
        let mut sign = 1.0;
        for &i in idx {
            let bit = 1u64 << i;
            if mask & bit != 0 {
                return Grassmann::zero(n);
            }
            sign *= merge_sign(mask, bit);
            mask |= bit;
        }
        let mut g = Grassmann::zero(n);
        g.terms.insert(mask, c * sign);
        g
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (u64, Complex64)>) -> Self {
        let mut g = Grassmann::zero(n);
        for (m, c) in terms {
            g.add_term(m, c);
        }
        g
    }

    pub fn generators(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (u64, Complex64)> + '_ {
        self.terms.iter().map(|(m, c)| (*m, *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, mask: u64) -> Complex64 {
        self.terms.get(&mask).copied().unwrap_or_default()
    }

    pub fn add_term(&mut self, mask: u64, c: Complex64) {
        if c == Complex64::default() {
            return;
        }
        let e = self.terms.entry(mask).or_default();
        *e += c;
        if *e == Complex64::default() {
            self.terms.remove(&mask);
        }
    }

    pub fn scalar_part(&self) -> Complex64 {
        self.coeff(0)
    }

    pub fn is_even(&self) -> bool {
        self.terms.keys().all(|m| m.count_ones() % 2 == 0)
    }

    fn check(&self, other: &Grassmann) -> Result<(), GrassmannError> {
        if self.n != other.n {
            return Err(GrassmannError::Mismatch(self.n, other.n));
        }
        Ok(())
    }

    pub fn add(&self, other: &Grassmann) -> Result<Grassmann, GrassmannError> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(*m, *c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Grassmann) -> Result<Grassmann, GrassmannError> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> Grassmann {
        let mut out = Grassmann::zero(self.n);
        for (m, v) in &self.terms {
            out.add_term(*m, v * c);
        }
        out
    }

    pub fn mul(&self, other: &Grassmann) -> Result<Grassmann, GrassmannError> {
        self.check(other)?;
        let mut out = Grassmann::zero(self.n);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                if a & b == 0 {
                    out.add_term(a | b, ca * cb * merge_sign(*a, *b));
                }
            }
        }
        Ok(out)
    }

    /// Drops coefficients below `tol` in modulus.
    pub fn prune(&mut self, tol: f64) {
        self.terms.retain(|_, c| c.norm() > tol);
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_diff(&self, other: &Grassmann) -> f64 {
        self.sub(other).map(|d| d.max_abs()).unwrap_or(f64::INFINITY)
    }

    /// Terms whose mask satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(u64) -> bool) -> Grassmann {
        Grassmann { n: self.n, terms: self.terms.iter().filter(|(m, _)| keep(**m)).map(|(m, c)| (*m, *c)).collect() }
    }

    /// Sets the generators in `mask` to zero.
    pub fn set_zero(&self, mask: u64) -> Grassmann {
        self.filter(|m| m & mask == 0)
    }

    /// Left derivative `∂/∂g_i`.
    pub fn derivative(&self, i: usize) -> Grassmann {
        let bit = 1u64 << i;
        let mut out = Grassmann::zero(self.n);
        for (m, c) in &self.terms {
            if m & bit != 0 {
                out.add_term(m & !bit, c * prefix_sign(*m, i));
            }
        }
        out
    }

    /// `exp(X)` for even `X`; finite by nilpotency.
    pub fn exp(&self) -> Grassmann {
        let c = self.scalar_part();
        let nil = self.filter(|m| m != 0);
        let mut out = Grassmann::one(self.n);
        let mut power = Grassmann::one(self.n);
        for k in 1..=self.n / 2 + 1 {
            power = power.mul(&nil).expect("same generators").scale(Complex64::new(1.0 / k as f64, 0.0));
            if power.is_empty() {
                break;
            }
            out = out.add(&power).expect("same generators");
        }
        out.scale(c.exp())
    }

    /// `log(c + N) = log c + Σ (−1)^{k+1} (N/c)^k / k` for even `N`.
    pub fn log(&self) -> Result<Grassmann, GrassmannError> {
        let c = self.scalar_part();
        if c.norm() == 0.0 {
            return Err(GrassmannError::ZeroScalar);
        }
        let x = self.filter(|m| m != 0).scale(c.inv());
        let mut out = Grassmann::scalar(self.n, c.ln());
        let mut power = Grassmann::one(self.n);
        for k in 1..=self.n / 2 + 1 {
            power = power.mul(&x)?;
            if power.is_empty() {
                break;
            }
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            out = out.add(&power.scale(Complex64::new(sign / k as f64, 0.0)))?;
        }
        Ok(out)
    }

    /// `Δ X` with `Δ = Σ_{i<j} C_ij ∂_j ∂_i`.
    pub fn laplacian(&self, c: &Covariance) -> Grassmann {
        let mut out = Grassmann::zero(self.n);
        for (m, v) in &self.terms {
            for &(i, j, cij) in &c.pairs {
                let (bi, bj) = (1u64 << i, 1u64 << j);
                if m & bi == 0 || m & bj == 0 {
                    continue;
                }
                let s1 = prefix_sign(*m, i);
                let rest = m & !bi;
                let s2 = prefix_sign(rest, j);
                out.add_term(rest & !bj, v * cij * (s1 * s2));
            }
        }
        out
    }

    /// `∫ X(ψ + ζ) dμ_C(ζ) = exp(Δ_C) X`.
    pub fn convolve(&self, c: &Covariance) -> Result<Grassmann, GrassmannError> {
        c.check(self.n)?;
        let mut out = self.clone();
        let mut term = self.clone();
        for k in 1..=self.n / 2 {
            term = term.laplacian(c).scale(Complex64::new(1.0 / k as f64, 0.0));
            if term.is_empty() {
                break;
            }
            out = out.add(&term)?;
        }
        Ok(out)
    }

    /// `:X:_C`, i.e. convolution with `−C`.
    pub fn wick_order(&self, c: &Covariance) -> Result<Grassmann, GrassmannError> {
        self.convolve(&c.negated())
    }

    /// Integrates out the generators in `zeta` against `dμ_C`; `C` must
    /// only pair generators inside `zeta`.
    pub fn integrate(&self, c: &Covariance, zeta: u64) -> Result<Grassmann, GrassmannError> {
        Ok(self.convolve(c)?.set_zero(zeta))
    }
}

/// Antisymmetric pairing matrix, stored as its upper-triangular nonzeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Covariance {
    pub n: usize,
    pairs: Vec<(usize, usize, Complex64)>,
}

impl Covariance {
    pub fn zero(n: usize) -> Self {
        Covariance { n, pairs: Vec::new() }
    }

    /// From a dense matrix; only the strict upper triangle is read.
    pub fn from_matrix(m: &[Vec<Complex64>]) -> Result<Self, GrassmannError> {
        let n = m.len();
        let mut c = Covariance::zero(n);
        for (i, row) in m.iter().enumerate() {
            if row.len() != n {
                return Err(GrassmannError::CovarianceShape { rows: n, cols: row.len(), n });
            }
            for (j, v) in row.iter().enumerate().skip(i + 1) {
                c.set(i, j, *v);
            }
        }
        Ok(c)
    }

    /// `C(i, j) = v` and `C(j, i) = −v`.
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        let (a, b, v) = if i < j { (i, j, v) } else { (j, i, -v) };
        self.pairs.retain(|(x, y, _)| !(*x == a && *y == b));
        if v != Complex64::default() {
            self.pairs.push((a, b, v));
            self.pairs.sort_by_key(|p| (p.0, p.1));
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if i == j {
            return Complex64::default();
        }
        let (a, b, s) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        self.pairs.iter().find(|p| p.0 == a && p.1 == b).map_or(Complex64::default(), |p| p.2 * s)
    }

    pub fn pairs(&self) -> &[(usize, usize, Complex64)] {
        &self.pairs
    }

    pub fn negated(&self) -> Covariance {
        Covariance { n: self.n, pairs: self.pairs.iter().map(|&(i, j, v)| (i, j, -v)).collect() }
    }

    pub fn add(&self, other: &Covariance) -> Covariance {
        let mut out = self.clone();
        for &(i, j, v) in &other.pairs {
            let cur = out.get(i, j);
            out.set(i, j, cur + v);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Covariance {
        Covariance { n: self.n, pairs: self.pairs.iter().map(|&(i, j, v)| (i, j, v * s)).collect() }
    }

    fn check(&self, n: usize) -> Result<(), GrassmannError> {
        if self.n != n {
            return Err(GrassmannError::CovarianceShape { rows: self.n, cols: self.n, n });
        }
        Ok(())
    }
}

/// How `Ω̃` normalizes the logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZNorm {
    /// Divide by `Z(0)`: the result has zero scalar part.
    #[default]
    Zero,
    /// Divide by `Z(φ)`: the result has no pure-`φ` part.
    Phi,
}

/// `φJζ = Σ φ(i,σ,a) ζ(i,σ,1−a)` as `(φ generator, ζ generator)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Source {
    pub pairs: Vec<(usize, usize)>,
}

impl Source {
    pub fn none() -> Self {
        Source::default()
    }

    pub fn phi_mask(&self) -> u64 {
        self.pairs.iter().fold(0, |m, p| m | (1u64 << p.0))
    }

    /// The even element `Σ φ_p ψ_q` on `n` generators.
    pub fn bilinear(&self, n: usize) -> Grassmann {
        let mut g = Grassmann::zero(n);
        for &(p, q) in &self.pairs {
            g = g.add(&Grassmann::monomial(n, &[p, q], Complex64::new(1.0, 0.0))).expect("same generators");
        }
        g
    }
}

/// `log (1/Z) ∫ e^{φJζ} e^{W(φ, ψ+ζ)} dμ_C(ζ)`.
///
/// Uses `∫ e^{φJζ} F(ψ+ζ) dμ = e^{−φJψ} exp(Δ)[e^{φJψ} F]`, valid because
/// `φJψ` is even and bilinear.
pub fn omega_tilde(w: &Grassmann, c: &Covariance, source: &Source, norm: ZNorm) -> Result<Grassmann, GrassmannError> {
    let n = w.generators();
    let f = w.exp();
    let integrated = if source.pairs.is_empty() {
        f.convolve(c)?
    } else {
        let s = source.bilinear(n);
        let plus = s.exp();
        let minus = s.scale(Complex64::new(-1.0, 0.0)).exp();
        minus.mul(&plus.mul(&f)?.convolve(c)?)?
    };
    let l = integrated.log()?;
    Ok(match norm {
        ZNorm::Zero => {
            let z0 = l.scalar_part();
            l.sub(&Grassmann::scalar(n, z0))?
        }
        ZNorm::Phi => {
            let phi = source.phi_mask();
            l.filter(|m| m & !phi != 0)
        }
    })
}

/// Which fields a generator carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Phi,
    Psi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GenLabel {
    pub field: Field,
    pub site: u32,
    pub spin: u8,
    pub a: u8,
    pub sector: Option<u32>,
}

impl GenLabel {
    pub fn leg(&self) -> Leg {
        Leg { site: self.site, spin: self.spin, a: self.a, sector: self.sector }
    }
}

/// Labelled generators; index in the list is the generator index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSet {
    pub labels: Vec<GenLabel>,
}

impl GeneratorSet {
    pub fn new(labels: Vec<GenLabel>, cap: usize) -> Result<Self, GrassmannError> {
        if labels.len() > cap.min(64) {
            return Err(GrassmannError::Budget { count: labels.len(), cap });
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(GrassmannError::DuplicateLabel(i));
            }
        }
        Ok(GeneratorSet { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, l: &GenLabel) -> Option<usize> {
        self.labels.iter().position(|x| x == l)
    }

    pub fn mask(&self, field: Field) -> u64 {
        self.labels.iter().enumerate().filter(|(_, l)| l.field == field).fold(0, |m, (i, _)| m | (1u64 << i))
    }

    /// `φJψ` pairing every `φ(i,σ,a)` with `ψ(i,σ,1−a)` when present.
    pub fn source(&self) -> Source {
        let mut pairs = Vec::new();
        for (p, l) in self.labels.iter().enumerate() {
            if l.field != Field::Phi {
                continue;
            }
            let partner = GenLabel { field: Field::Psi, a: 1 - l.a, sector: None, ..*l };
            if let Some(q) = self.labels.iter().position(|x| GenLabel { sector: None, ..*x } == partner) {
                pairs.push((p, q));
            }
        }
        Source { pairs }
    }
}

/// Splits a sorted mask into (φ generators, ψ generators) and returns the
/// sign of reordering the monomial into `φ⋯φ ψ⋯ψ`.
fn block_order(mask: u64, phi: u64) -> (Vec<usize>, Vec<usize>, f64) {
    let p = mask & phi;
    let q = mask & !phi;
    let bits = |mut m: u64| {
        let mut v = Vec::new();
        while m != 0 {
            v.push(m.trailing_zeros() as usize);
            m &= m - 1;
        }
        v
    };
    // sorted(mask) = merge of p and q; φ-block-first order has sign merge_sign(p, q)
    (bits(p), bits(q), merge_sign(p, q))
}

/// The antisymmetric kernel `w_{m,n}` with `W = Σ w_{m,n}(η⃗, ξ⃗) φ(η_1)⋯φ(η_m) ψ(ξ_1)⋯ψ(ξ_n)`
/// summed over all ordered tuples.
pub fn extract_wmn(w: &Grassmann, gens: &GeneratorSet, m: usize, n: usize, torus: Torus, j: i32) -> SectorizedKernel {
    let phi = gens.mask(Field::Phi);
    let mut out = SectorizedKernel::new(torus, j, m, n);
    out.translation_invariant = false;
    out.antisym_external = true;
    out.antisym_internal = true;
    let perms_m = crate::kernels::permutations(m);
    let perms_n = crate::kernels::permutations(n);
    let norm = (perms_m.len() * perms_n.len()) as f64;
    for (mask, c) in w.terms() {
        let (ps, qs, sign) = block_order(mask, phi);
        if ps.len() != m || qs.len() != n {
            continue;
        }
        for (pm, sm) in &perms_m {
            for (pn, sn) in &perms_n {
                let legs: Vec<Leg> = pm
                    .iter()
                    .map(|&i| gens.labels[ps[i]].leg())
                    .chain(pn.iter().map(|&i| gens.labels[qs[i]].leg()))
                    .collect();
                let _ = out.add_to(&legs, c * (sign * sm * sn / norm));
            }
        }
    }
    out
}

/// Inverse of [`extract_wmn`] summed over the given blocks.
pub fn rebuild(blocks: &[SectorizedKernel], gens: &GeneratorSet) -> Grassmann {
    let n = gens.len();
    let mut out = Grassmann::zero(n);
    for b in blocks {
        for (legs, v) in b.entries() {
            let idx: Option<Vec<usize>> = legs
                .iter()
                .enumerate()
                .map(|(k, l)| {
                    let field = if k < b.m { Field::Phi } else { Field::Psi };
                    gens.index_of(&GenLabel { field, site: l.site, spin: l.spin, a: l.a, sector: l.sector })
                })
                .collect();
            if let Some(idx) = idx {
                out = out.add(&Grassmann::monomial(n, &idx, *v)).expect("same generators");
            }
        }
    }
    out
}

/// All `(m, n)` degree blocks present in `w`.
pub fn degrees(w: &Grassmann, gens: &GeneratorSet) -> Vec<(usize, usize)> {
    let phi = gens.mask(Field::Phi);
    let mut out: Vec<(usize, usize)> =
        w.terms().map(|(m, _)| ((m & phi).count_ones() as usize, (m & !phi).count_ones() as usize)).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Scale data entering `N_j`: `M`, `𝔩_j` and the scale `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleWeights {
    pub m: f64,
    pub j: i32,
    pub l_j: f64,
}

impl ScaleWeights {
    pub fn mj(&self) -> f64 {
        self.m.powi(self.j)
    }
}

/// `N_j(w, α, X) = (M^{2j}/𝔩_j) 𝔢_j(X) Σ_{m,n} α^n (𝔩_j B/M^j)^{n/2} |w_{m,n}|_j`.
pub fn nj_norm(
    w: &Grassmann,
    gens: &GeneratorSet,
    torus: Torus,
    sw: ScaleWeights,
    alpha: f64,
    x: &NormSeries,
    cfg: &KernelNormConfig,
) -> Result<NormSeries, GrassmannError> {
    let shape = x.shape();
    let mj = sw.mj();
    let mut total = NormSeries::zero(shape);
    for (m, n) in degrees(w, gens) {
        let k = extract_wmn(w, gens, m, n, torus, sw.j);
        let weight = alpha.powi(n as i32) * (sw.l_j * cfg.b_const / mj).powf(n as f64 / 2.0);
        let nk = crate::kernels::norm_j(&k, shape, cfg, sw.l_j, mj).scale(weight);
        total = total.add(&nk)?;
    }
    let ej = NormSeries::e_j(sw.j, sw.m, x)?;
    Ok(total.mul(&ej)?.scale(mj * mj / sw.l_j))
}

/// `N(G) = Σ_{m>0} λ0^{−(1−υ) max{m−2,2}/2} |||G_m|||_∞` with `|||G_m|||_∞` the
/// largest kernel entry.
pub fn n_norm(g: &Grassmann, gens: &GeneratorSet, torus: Torus, cfg: &KernelNormConfig) -> f64 {
    let mut total = 0.0;
    for (m, n) in degrees(g, gens) {
        if m == 0 || n != 0 {
            continue;
        }
        let k = extract_wmn(g, gens, m, 0, torus, 0);
        let e = ((m as f64 - 2.0).max(2.0)) / 2.0;
        total += cfg.lambda0.powf(-(1.0 - cfg.upsilon) * e) * k.max_abs();
    }
    total
}

/// Wire format: generator labels plus `(mask, re, im)` terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrassmannDoc {
    pub generators: GeneratorSet,
    pub terms: Vec<(u64, f64, f64)>,
}

impl GrassmannDoc {
    pub fn new(gens: &GeneratorSet, w: &Grassmann) -> Self {
        GrassmannDoc { generators: gens.clone(), terms: w.terms().map(|(m, c)| (m, c.re, c.im)).collect() }
    }

    pub fn element(&self) -> Grassmann {
        Grassmann::from_terms(self.generators.len(), self.terms.iter().map(|&(m, re, im)| (m, Complex64::new(re, im))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn anticommutation_and_nilpotence() {
        let p1 = Grassmann::generator(3, 0);
        let p2 = Grassmann::generator(3, 1);
        let a = p1.mul(&p2).unwrap();
        let b = p2.mul(&p1).unwrap();
        assert_eq!(a, b.scale(c(-1.0)));
        assert!(p1.mul(&p1).unwrap().is_empty());
    }

    #[test]
    fn single_pairing() {
        let mut cov = Covariance::zero(2);
        cov.set(0, 1, c(0.7));
        let w = Grassmann::monomial(2, &[0, 1], c(1.0));
        let got = w.integrate(&cov, 0b11).unwrap();
        assert_eq!(got.scalar_part(), c(0.7));
        let rev = Grassmann::monomial(2, &[1, 0], c(1.0)).integrate(&cov, 0b11).unwrap();
        assert_eq!(rev.scalar_part(), c(-0.7));
    }
}
