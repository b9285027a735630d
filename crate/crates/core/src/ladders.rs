//! Four-legged kernel algebra over a finite measure space `𝔛 × S`.
//!
//! `𝔛` is a finite set with point weights; `S` is a finite label set with
//! counting measure. For the particle-particle / particle-hole machinery `𝔛`
//! is directed: point `x = 2u + b` carries the undirected part `u` and the
//! creation/annihilation bit `b`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Dispersion, FermiCurve, GeometryError, ScaleParams};

#[derive(Debug, Error)]
pub enum LadderError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("ladder needs {rungs} rungs for {bubbles} bubbles")]
    Length { rungs: usize, bubbles: usize },
    #[error("ell must be at least 1")]
    EllZero,
    #[error("directed space needs paired points with equal weights")]
    NotDirected,
    #[error("missing input for scale {0}")]
    MissingInput(i32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Point weights of `𝔛` and the size of `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Space {
    pub weights: Vec<f64>,
    pub ns: usize,
}

impl Space {
    pub fn uniform(nx: usize, w: f64, ns: usize) -> Self {
        Space { weights: vec![w; nx], ns }
    }

    pub fn nx(&self) -> usize {
        self.weights.len()
    }

    /// Points of `𝔛 × S`.
    pub fn nz(&self) -> usize {
        self.nx() * self.ns
    }

    /// The undirected space `𝔛^↕` of a directed `𝔛`.
    pub fn undirected(&self) -> Result<Space, LadderError> {
        if !self.nx().is_multiple_of(2) || self.weights.chunks(2).any(|c| c[0] != c[1]) {
            return Err(LadderError::NotDirected);
        }
        Ok(Space { weights: self.weights.iter().step_by(2).copied().collect(), ns: self.ns })
    }
}

/// `A(x, x')` over `𝔛`.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl Propagator {
    pub fn zero(n: usize) -> Self {
        Propagator { n, data: vec![Complex64::default(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut p = Propagator::zero(n);
        for i in 0..n {
            p.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        p
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        Propagator { n, data: (0..n * n).map(|i| f(i / n, i % n)).collect() }
    }

    pub fn at(&self, x: usize, y: usize) -> Complex64 {
        self.data[x * self.n + y]
    }

    pub fn add(&self, o: &Propagator) -> Propagator {
        Propagator { n: self.n, data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect() }
    }

    pub fn scale(&self, c: Complex64) -> Propagator {
        Propagator { n: self.n, data: self.data.iter().map(|a| a * c).collect() }
    }
}

/// `P(x1, x2; x3, x4)` over `𝔛`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bubble {
    pub n: usize,
    pub data: Vec<Complex64>,
}

fn idx4(n: usize, a: usize, b: usize, c: usize, d: usize) -> usize {
    ((a * n + b) * n + c) * n + d
}

impl Bubble {
    pub fn zero(n: usize) -> Self {
        Bubble { n, data: vec![Complex64::default(); n.pow(4)] }
    }

    pub fn at(&self, a: usize, b: usize, c: usize, d: usize) -> Complex64 {
        self.data[idx4(self.n, a, b, c, d)]
    }

    pub fn add(&self, o: &Bubble) -> Bubble {
        Bubble { n: self.n, data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// `A ⊗ B (x1,x2,x3,x4) = A(x1,x3) B(x2,x4)`.
pub fn tensor_prod(a: &Propagator, b: &Propagator) -> Result<Bubble, LadderError> {
    if a.n != b.n {
        return Err(LadderError::Dimension(format!("propagators over {} and {} points", a.n, b.n)));
    }
    let n = a.n;
    let mut p = Bubble::zero(n);
    for x1 in 0..n {
        for x2 in 0..n {
            for x3 in 0..n {
                for x4 in 0..n {
                    p.data[idx4(n, x1, x2, x3, x4)] = a.at(x1, x3) * b.at(x2, x4);
                }
            }
        }
    }
    Ok(p)
}

/// `𝒞(A, B) = A⊗A + A⊗B + B⊗A`.
#[allow(non_snake_case)]
pub fn cC(a: &Propagator, b: &Propagator) -> Result<Bubble, LadderError> {
    Ok(tensor_prod(a, a)?.add(&tensor_prod(a, b)?).add(&tensor_prod(b, a)?))
}

/// A function on `(𝔛×S)^4` (four-legged kernel) or `(𝔛×S)^2 × 𝔛^2` (after `f • P`).
#[derive(Debug, Clone, PartialEq)]
pub struct FourLegged {
    pub space: Space,
    pub data: Vec<Complex64>,
}

impl FourLegged {
    pub fn zero(space: Space) -> Self {
        let nz = space.nz();
        FourLegged { space, data: vec![Complex64::default(); nz.pow(4)] }
    }

    pub fn from_fn(space: Space, f: impl Fn([usize; 4]) -> Complex64) -> Self {
        let nz = space.nz();
        let mut out = FourLegged::zero(space);
        for (i, v) in out.data.iter_mut().enumerate() {
            *v = f([i / (nz * nz * nz), (i / (nz * nz)) % nz, (i / nz) % nz, i % nz]);
        }
        out
    }

    /// Index of `(x, s)` in `𝔛 × S`.
    pub fn z(&self, x: usize, s: usize) -> usize {
        x * self.space.ns + s
    }

    pub fn at(&self, z: [usize; 4]) -> Complex64 {
        self.data[idx4(self.space.nz(), z[0], z[1], z[2], z[3])]
    }

    pub fn set(&mut self, z: [usize; 4], v: Complex64) {
        let nz = self.space.nz();
        self.data[idx4(nz, z[0], z[1], z[2], z[3])] = v;
    }

    pub fn add(&self, o: &FourLegged) -> FourLegged {
        FourLegged { space: self.space.clone(), data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect() }
    }

    pub fn scale(&self, c: Complex64) -> FourLegged {
        FourLegged { space: self.space.clone(), data: self.data.iter().map(|a| a * c).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_diff(&self, o: &FourLegged) -> f64 {
        self.data.iter().zip(&o.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `(Ant F)(z) = 1/4! Σ_π sgn(π) F(z_π)`.
    pub fn antisymmetrize(&self) -> FourLegged {
        let perms = crate::kernels::permutations(4);
        let nz = self.space.nz();
        let mut out = FourLegged::zero(self.space.clone());
        for i in 0..self.data.len() {
            let z = [i / (nz * nz * nz), (i / (nz * nz)) % nz, (i / nz) % nz, i % nz];
            let mut acc = Complex64::default();
            for (p, sign) in &perms {
                acc += self.at([z[p[0]], z[p[1]], z[p[2]], z[p[3]]]) * sign;
            }
            out.data[i] = acc / 24.0;
        }
        out
    }

    /// Maximal violation of antisymmetry in the first two and in the last two arguments.
    pub fn pair_antisymmetry_defect(&self) -> f64 {
        let nz = self.space.nz();
        let mut d: f64 = 0.0;
        for i in 0..self.data.len() {
            let z = [i / (nz * nz * nz), (i / (nz * nz)) % nz, (i / nz) % nz, i % nz];
            d = d.max((self.at(z) + self.at([z[1], z[0], z[2], z[3]])).norm());
            d = d.max((self.at(z) + self.at([z[0], z[1], z[3], z[2]])).norm());
        }
        d
    }
}

/// `(f • P)(z1, z2; x3, x4)`, stored as a function on `(𝔛×S)^2 × 𝔛^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfLadder {
    pub space: Space,
    pub data: Vec<Complex64>,
}

impl HalfLadder {
    fn index(&self, z1: usize, z2: usize, x3: usize, x4: usize) -> usize {
        let (nz, nx) = (self.space.nz(), self.space.nx());
        ((z1 * nz + z2) * nx + x3) * nx + x4
    }

    pub fn at(&self, z1: usize, z2: usize, x3: usize, x4: usize) -> Complex64 {
        self.data[self.index(z1, z2, x3, x4)]
    }
}

/// `(f•P)((x1,s1),(x2,s2);x3,x4) = Σ_{s'} ∫dx' f(…,(x1',s1'),(x2',s2')) P(x1',x2';x3,x4)`.
pub fn bullet(f: &FourLegged, p: &Bubble) -> Result<HalfLadder, LadderError> {
    let sp = &f.space;
    if p.n != sp.nx() {
        return Err(LadderError::Dimension(format!("bubble over {} points, kernel over {}", p.n, sp.nx())));
    }
    let (nx, ns, nz) = (sp.nx(), sp.ns, sp.nz());
    let mut out = HalfLadder { space: sp.clone(), data: vec![Complex64::default(); nz * nz * nx * nx] };
    for z1 in 0..nz {
        for z2 in 0..nz {
            // g(x1', x2') = Σ_{s'} f(z1, z2, (x1',s1'), (x2',s2')) w(x1') w(x2')
            let mut g = vec![Complex64::default(); nx * nx];
            for x1 in 0..nx {
                for x2 in 0..nx {
                    let mut acc = Complex64::default();
                    for s1 in 0..ns {
                        for s2 in 0..ns {
                            acc += f.at([z1, z2, x1 * ns + s1, x2 * ns + s2]);
                        }
                    }
                    g[x1 * nx + x2] = acc * sp.weights[x1] * sp.weights[x2];
                }
            }
            for x3 in 0..nx {
                for x4 in 0..nx {
                    let mut acc = Complex64::default();
                    for x1 in 0..nx {
                        for x2 in 0..nx {
                            acc += g[x1 * nx + x2] * p.at(x1, x2, x3, x4);
                        }
                    }
                    let i = out.index(z1, z2, x3, x4);
                    out.data[i] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// `(F•f)(z1..z4) = Σ_{s'} ∫dx' F(z1,z2;x1',x2') f((x1',s1'),(x2',s2'),z3,z4)`.
pub fn bullet2(h: &HalfLadder, f: &FourLegged) -> Result<FourLegged, LadderError> {
    if h.space != f.space {
        return Err(LadderError::Dimension("half ladder and kernel live on different spaces".into()));
    }
    let sp = &f.space;
    let (nx, ns, nz) = (sp.nx(), sp.ns, sp.nz());
    let mut out = FourLegged::zero(sp.clone());
    for z3 in 0..nz {
        for z4 in 0..nz {
            let mut g = vec![Complex64::default(); nx * nx];
            for x1 in 0..nx {
                for x2 in 0..nx {
                    let mut acc = Complex64::default();
                    for s1 in 0..ns {
                        for s2 in 0..ns {
                            acc += f.at([x1 * ns + s1, x2 * ns + s2, z3, z4]);
                        }
                    }
                    g[x1 * nx + x2] = acc * sp.weights[x1] * sp.weights[x2];
                }
            }
            for z1 in 0..nz {
                for z2 in 0..nz {
                    let mut acc = Complex64::default();
                    for x1 in 0..nx {
                        for x2 in 0..nx {
                            acc += h.at(z1, z2, x1, x2) * g[x1 * nx + x2];
                        }
                    }
                    out.set([z1, z2, z3, z4], acc);
                }
            }
        }
    }
    Ok(out)
}

/// `r1 • P1 • r2 • ⋯ • P_ℓ • r_{ℓ+1}`.
pub fn ladder(rungs: &[FourLegged], bubbles: &[Bubble]) -> Result<FourLegged, LadderError> {
    if bubbles.is_empty() || rungs.len() != bubbles.len() + 1 {
        return Err(LadderError::Length { rungs: rungs.len(), bubbles: bubbles.len() });
    }
    let mut acc = rungs[0].clone();
    for (p, r) in bubbles.iter().zip(&rungs[1..]) {
        acc = bullet2(&bullet(&acc, p)?, r)?;
    }
    Ok(acc)
}

/// `L_ℓ(r; A, B)`: `ℓ+1` rungs `r` and `ℓ` bubbles `𝒞(A, B)`.
#[allow(non_snake_case)]
pub fn L_ell(r: &FourLegged, a: &Propagator, b: &Propagator, ell: usize) -> Result<FourLegged, LadderError> {
    if ell == 0 {
        return Err(LadderError::EllZero);
    }
    let c = cC(a, b)?;
    let mut acc = r.clone();
    for _ in 0..ell {
        acc = bullet2(&bullet(&acc, &c)?, r)?;
    }
    Ok(acc)
}

fn iota(u: usize, b: usize) -> usize {
    2 * u + b
}

/// Slices `f` over directed `𝔛×S` at bit pattern `bits` into a kernel over `𝔛^↕×S`.
fn reduce(f: &FourLegged, bits: [usize; 4]) -> Result<FourLegged, LadderError> {
    let half = f.space.undirected()?;
    let ns = half.ns;
    let nz = half.nz();
    let mut out = FourLegged::zero(half);
    for i in 0..nz.pow(4) {
        let zp = [i / (nz * nz * nz), (i / (nz * nz)) % nz, (i / nz) % nz, i % nz];
        let z: Vec<usize> = (0..4).map(|k| iota(zp[k] / ns, bits[k]) * ns + zp[k] % ns).collect();
        out.data[i] = f.at([z[0], z[1], z[2], z[3]]);
    }
    Ok(out)
}

/// `f^{pp}(z') = f(ι0 z1', ι0 z2', ι1 z3', ι1 z4')`.
pub fn reduce_pp(f: &FourLegged) -> Result<FourLegged, LadderError> {
    reduce(f, [0, 0, 1, 1])
}

/// `f^{ph}(z') = f(ι0 z1', ι1 z2', ι1 z3', ι0 z4')`.
pub fn reduce_ph(f: &FourLegged) -> Result<FourLegged, LadderError> {
    reduce(f, [0, 1, 1, 0])
}

fn reduce_bubble(p: &Bubble, bits: [usize; 4]) -> Result<Bubble, LadderError> {
    if !p.n.is_multiple_of(2) {
        return Err(LadderError::NotDirected);
    }
    let h = p.n / 2;
    let mut out = Bubble::zero(h);
    for a in 0..h {
        for b in 0..h {
            for c in 0..h {
                for d in 0..h {
                    out.data[idx4(h, a, b, c, d)] =
                        p.at(iota(a, bits[0]), iota(b, bits[1]), iota(c, bits[2]), iota(d, bits[3]));
                }
            }
        }
    }
    Ok(out)
}

/// `^{pp}P = P(ι1, ι1, ι0, ι0)`.
pub fn bubble_pp(p: &Bubble) -> Result<Bubble, LadderError> {
    reduce_bubble(p, [1, 1, 0, 0])
}

/// `^{ph}P = P(ι1, ι0, ι0, ι1)`.
pub fn bubble_ph(p: &Bubble) -> Result<Bubble, LadderError> {
    reduce_bubble(p, [1, 0, 0, 1])
}

/// Directed space with `𝔛 = 𝔛^↕ × {0,1}`.
fn directed(half: &Space) -> Space {
    Space { weights: half.weights.iter().flat_map(|&w| [w, w]).collect(), ns: half.ns }
}

fn embed(fp: &FourLegged, terms: &[([usize; 4], [usize; 4], f64)]) -> FourLegged {
    let half = &fp.space;
    let ns = half.ns;
    let full = directed(half);
    let nzh = half.nz();
    let mut out = FourLegged::zero(full);
    for i in 0..nzh.pow(4) {
        let u = [i / (nzh * nzh * nzh), (i / (nzh * nzh)) % nzh, (i / nzh) % nzh, i % nzh];
        for (bits, order, sign) in terms {
            let z: Vec<usize> = (0..4).map(|k| iota(u[k] / ns, bits[k]) * ns + u[k] % ns).collect();
            let v = fp.at([u[order[0]], u[order[1]], u[order[2]], u[order[3]]]) * *sign;
            let cur = out.at([z[0], z[1], z[2], z[3]]);
            out.set([z[0], z[1], z[2], z[3]], cur + v);
        }
    }
    out
}

/// Particle-particle value of a kernel over `𝔛^↕×S`.
pub fn v_pp(fp: &FourLegged) -> FourLegged {
    embed(fp, &[([0, 0, 1, 1], [0, 1, 2, 3], 1.0), ([1, 1, 0, 0], [2, 3, 0, 1], 1.0)])
}

/// Particle-hole value of a kernel over `𝔛^↕×S`.
pub fn v_ph(fp: &FourLegged) -> FourLegged {
    embed(
        fp,
        &[
            ([0, 1, 1, 0], [0, 1, 2, 3], 1.0),
            ([1, 0, 0, 1], [1, 0, 3, 2], 1.0),
            ([1, 0, 1, 0], [1, 0, 2, 3], -1.0),
            ([0, 1, 0, 1], [0, 1, 3, 2], -1.0),
        ],
    )
}

/// Residual of `f = V_pp(f^{pp}) + V_ph(f^{ph})` plus hypothesis defects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecomposeReport {
    pub residual: f64,
    pub antisymmetry_defect: f64,
    pub particle_number_defect: f64,
}

impl DecomposeReport {
    pub fn hypotheses_hold(&self, tol: f64) -> bool {
        self.antisymmetry_defect <= tol && self.particle_number_defect <= tol
    }
}

/// Largest entry of `f` at bit patterns with other than two creation and two annihilation legs.
pub fn particle_number_defect(f: &FourLegged) -> f64 {
    let ns = f.space.ns;
    let nz = f.space.nz();
    let mut d: f64 = 0.0;
    for i in 0..f.data.len() {
        let z = [i / (nz * nz * nz), (i / (nz * nz)) % nz, (i / nz) % nz, i % nz];
        let ones: usize = z.iter().map(|&zz| (zz / ns) % 2).sum();
        if ones != 2 {
            d = d.max(f.data[i].norm());
        }
    }
    d
}

pub fn decompose_check(f: &FourLegged) -> Result<DecomposeReport, LadderError> {
    let rebuilt = v_pp(&reduce_pp(f)?).add(&v_ph(&reduce_ph(f)?));
    Ok(DecomposeReport {
        residual: f.max_diff(&rebuilt),
        antisymmetry_defect: f.max_diff(&f.antisymmetrize()),
        particle_number_defect: particle_number_defect(f),
    })
}

/// Coefficient `2 (−1)^ℓ 12^{ℓ+1}` of the ℓ-th ladder in the iterated recursion.
pub fn ph_series_coefficient(ell: usize) -> f64 {
    let sign = if ell.is_multiple_of(2) { 1.0 } else { -1.0 };
    2.0 * sign * 12f64.powi(ell as i32 + 1)
}

/// Supplies `C^{(j)}_u` and `C^{(≥j+1)}_u` as propagators over the directed `𝔛`.
pub trait PropagatorProvider {
    fn pair(&self, j: i32, u: &Propagator) -> Result<(Propagator, Propagator), LadderError>;
}

/// Iterated particle-hole ladder at scale `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PHLadderState {
    pub j: i32,
    pub value: FourLegged,
    /// Largest entry of the last kept term of each ℓ-series, per scale.
    pub tails: Vec<(i32, f64)>,
}

/// `ℒ^{(j)}(p⃗, F⃗)` with each ℓ-series truncated at `ell_max`.
///
/// `p_list[i]` and `f_list[i]` hold `p^{(i+2)}` and `F^{(i+2)}`; `F` lives over
/// the directed space, `p` is a propagator over it. Resectorization is the
/// identity on the fixed label set `S`.
pub fn iterated_ph_ladder(
    p_list: &[Propagator],
    f_list: &[FourLegged],
    j: i32,
    ell_max: usize,
    provider: &dyn PropagatorProvider,
    space: &Space,
) -> Result<PHLadderState, LadderError> {
    if ell_max == 0 {
        return Err(LadderError::EllZero);
    }
    let half = space.undirected()?;
    let mut l = FourLegged::zero(half);
    let mut tails = Vec::new();
    // ℒ^{(0)} = ℒ^{(1)} = ℒ^{(2)} = 0
    for jj in 2..j {
        // w_jj = Σ_{i=2}^{jj} F^{(i)} + (1/8) Ant V_ph(ℒ^{(jj)})
        let mut w = v_ph(&l).antisymmetrize().scale(Complex64::new(0.125, 0.0));
        for i in 2..=jj {
            let f = f_list.get((i - 2) as usize).ok_or(LadderError::MissingInput(i))?;
            w = w.add(f);
        }
        // u_jj = Σ_{i=2}^{jj-1} p^{(i)}
        let mut u = Propagator::zero(space.nx());
        for i in 2..jj {
            let p = p_list.get((i - 2) as usize).ok_or(LadderError::MissingInput(i))?;
            u = u.add(p);
        }
        let (a, b) = provider.pair(jj, &u)?;
        let mut add = FourLegged::zero(l.space.clone());
        let mut last = 0.0;
        if w.max_abs() > 0.0 {
            for ell in 1..=ell_max {
                let term = reduce_ph(&L_ell(&w, &a, &b, ell)?)?.scale(Complex64::new(ph_series_coefficient(ell), 0.0));
                last = term.max_abs();
                add = add.add(&term);
            }
        }
        tails.push((jj, last));
        l = l.add(&add);
    }
    Ok(PHLadderState { j, value: l, tails })
}

/// One row of the particle-particle suppression scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub j: i32,
    pub ell: usize,
    pub norm_pp: f64,
    pub norm_full: f64,
    pub dispersion: String,
}

/// Quadrature resolution for the bubble integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BubbleQuadrature {
    /// Arc-length samples along the Fermi curve.
    pub n_arc: usize,
    /// Samples per unit of the finest shell radius in the normal and frequency directions.
    pub per_shell: f64,
    /// Scales below `j` kept in the second propagator.
    pub depth: i32,
    /// Total-momentum samples on the parallel-tangent family.
    pub n_family: usize,
}

impl Default for BubbleQuadrature {
    fn default() -> Self {
        BubbleQuadrature { n_arc: 1024, per_shell: 2.0, depth: 1, n_family: 12 }
    }
}

/// Bubble integrals of free scale-`j` propagators for a contact rung.
pub struct BubbleProbe<'a> {
    pub disp: &'a Dispersion,
    pub curve: &'a FermiCurve,
    pub params: &'a ScaleParams,
    pub quad: BubbleQuadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    Pp,
    Ph,
}

impl<'a> BubbleProbe<'a> {
    fn prop(&self, lo: i32, hi: i32, k: [f64; 3]) -> Complex64 {
        // ν^{[lo, hi)}(k) / (ik0 − e(k))
        let e = self.disp.eval([k[1], k[2]]);
        let z2 = k[0] * k[0] + e * e;
        let nu = self.params.nu_ge_z2(lo, z2) - self.params.nu_ge_z2(hi, z2);
        if nu == 0.0 {
            return Complex64::default();
        }
        Complex64::new(-e, k[0]).inv() * nu
    }

    /// `∫ d³p/(2π)³ [A(p)A(q) + A(p)B(q) + B(p)A(q)]` with `q = Q − p` (pp) or `q = p + Q` (ph),
    /// `A = C^{(j)}`, `B = C^{[j+1, j+1+depth)}`, zero frequency transfer.
    fn bubble(&self, j: i32, q_vec: [f64; 2], ch: Channel) -> f64 {
        let (_, outer) = self.params.shell(j);
        let finest = self.params.shell(j + self.quad.depth).0;
        let step = finest / self.quad.per_shell;
        let n_perp = ((2.0 * outer / step).ceil() as usize).max(8);
        let h = 2.0 * outer / n_perp as f64;
        let ds = self.curve.length / self.quad.n_arc as f64;
        let jb = j + 1 + self.quad.depth;
        let mut acc = Complex64::default();
        for is in 0..self.quad.n_arc {
            let s = (is as f64 + 0.5) * ds;
            let x = self.curve.point_at(s);
            let t = self.curve.tangent_at(s);
            let n = [t[1], -t[0]];
            let g = self.disp.gradient(x);
            let gn = (g[0] * n[0] + g[1] * n[1]).abs().max(1e-9);
            let reach = 1.5 * outer / gn;
            // prune arcs where the partner momentum is far from the curve
            let partner = |p: [f64; 2]| match ch {
                Channel::Pp => [q_vec[0] - p[0], q_vec[1] - p[1]],
                Channel::Ph => [p[0] + q_vec[0], p[1] + q_vec[1]],
            };
            let qx = partner(x);
            let gq = self.disp.gradient(qx);
            let slack = (gq[0] * gq[0] + gq[1] * gq[1]).sqrt() * reach + outer;
            if self.disp.eval(qx).abs() > 2.0 * slack {
                continue;
            }
            let n_t = ((2.0 * reach / h).ceil() as usize).max(8);
            let ht = 2.0 * reach / n_t as f64;
            for it in 0..n_t {
                let tt = -reach + (it as f64 + 0.5) * ht;
                let p = [x[0] + tt * n[0], x[1] + tt * n[1]];
                let q = partner(p);
                for i0 in 0..n_perp {
                    let p0 = -outer + (i0 as f64 + 0.5) * h;
                    let q0 = match ch {
                        Channel::Pp => -p0,
                        Channel::Ph => p0,
                    };
                    let kp = [p0, p[0], p[1]];
                    let kq = [q0, q[0], q[1]];
                    let ap = self.prop(j, j + 1, kp);
                    let bp = self.prop(j + 1, jb, kp);
                    if ap == Complex64::default() && bp == Complex64::default() {
                        continue;
                    }
                    let aq = self.prop(j, j + 1, kq);
                    let bq = self.prop(j + 1, jb, kq);
                    acc += (ap * aq + ap * bq + bp * aq) * (ds * ht * h);
                }
            }
        }
        acc.norm() / (2.0 * PI).powi(3)
    }

    /// Total momenta `x(s) + x(s*)` for points with opposite normals, plus `0`.
    fn pp_family(&self) -> Vec<[f64; 2]> {
        let mut out = vec![[0.0, 0.0]];
        for (a, b) in self.opposite_pairs() {
            out.push([a[0] + b[0], a[1] + b[1]]);
        }
        out
    }

    /// Transfers `x(s*) − x(s)` for points with opposite normals, plus `0`.
    fn ph_family(&self) -> Vec<[f64; 2]> {
        let mut out = vec![[0.0, 0.0]];
        for (a, b) in self.opposite_pairs() {
            out.push([b[0] - a[0], b[1] - a[1]]);
        }
        out
    }

    fn opposite_pairs(&self) -> Vec<([f64; 2], [f64; 2])> {
        let n = self.quad.n_family;
        let fine = 4096;
        let len = self.curve.length;
        let tangents: Vec<[f64; 2]> = (0..fine).map(|i| self.curve.tangent_at(len * i as f64 / fine as f64)).collect();
        (0..n)
            .map(|i| {
                let s = len * (i as f64 + 0.25) / n as f64;
                let t = self.curve.tangent_at(s);
                let best = (0..fine)
                    .min_by(|&a, &b| {
                        let da = t[0] * tangents[a][0] + t[1] * tangents[a][1];
                        let db = t[0] * tangents[b][0] + t[1] * tangents[b][1];
                        da.total_cmp(&db)
                    })
                    .unwrap_or(0);
                (self.curve.point_at(s), self.curve.point_at(len * best as f64 / fine as f64))
            })
            .collect()
    }

    /// `(sup_Q |I_pp(Q)|, sup_t |I_ph(t)|)` at scale `j`.
    pub fn sup_bubbles(&self, j: i32) -> (f64, f64) {
        let pp = self.pp_family().into_iter().map(|q| self.bubble(j, q, Channel::Pp)).fold(0.0, f64::max);
        let ph = self.ph_family().into_iter().map(|q| self.bubble(j, q, Channel::Ph)).fold(0.0, f64::max);
        (pp, ph)
    }
}

/// Per-scale sizes of the pp part and of the full ladder `L_ℓ` for a contact
/// rung of strength `f`: `|f|^{ℓ+1} sup|I_pp|^ℓ` and
/// `|f|^{ℓ+1} (sup|I_pp| + sup|I_ph|)^ℓ`.
pub fn pp_suppression_scan(
    f: f64,
    js: &[i32],
    ell_max: usize,
    probes: &[(&str, &BubbleProbe<'_>)],
) -> Vec<ScanRow> {
    let mut rows = Vec::new();
    for (tag, probe) in probes {
        for &j in js {
            let (pp, ph) = if f == 0.0 { (0.0, 0.0) } else { probe.sup_bubbles(j) };
            for ell in 1..=ell_max {
                let pref = f.abs().powi(ell as i32 + 1);
                rows.push(ScanRow {
                    j,
                    ell,
                    norm_pp: pref * pp.powi(ell as i32),
                    norm_full: pref * (pp + ph).powi(ell as i32),
                    dispersion: tag.to_string(),
                });
            }
        }
    }
    rows
}

/// `-log_M` of successive ratios of a column: the fitted per-scale decay exponents.
pub fn decay_exponents(column: &[f64], m: f64) -> Vec<f64> {
    column.windows(2).map(|w| -(w[1] / w[0]).ln() / m.ln()).collect()
}
