//! Dispersion relations, scale cutoffs, the Fermi curve and its sectorizations.
//!
//! The cutoff is `ν^{(≥j)}(k) = φ(M^{2j}(k0² + e(k)²))` with `φ = 1` on
//! `[0, M]`, `φ = 0` on `[2M, ∞)` and a C² cosine ramp in between. With
//! this choice `ν^{(j)} = ν^{(≥j)} − ν^{(≥j+1)}` lives exactly on the shell
//! `1/(√M M^j) ≤ |ik0 − e| ≤ √(2M)/M^j`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("no zero crossing of the dispersion inside the box")]
    NoZeroCrossing,
    #[error("zero level set leaves the box (open curve)")]
    OpenCurve,
    #[error("zero level set has {0} components; expected one closed curve")]
    MultipleComponents(usize),
    #[error("point ({0}, {1}) is {2} away from the Fermi curve, outside the projection tube {3}")]
    OutsideTube(f64, f64, f64, f64),
    #[error("sector length {l} is not below half the curve length {length}")]
    SectorTooLong { l: f64, length: f64 },
    #[error("no admissible sector count for length {l} on a curve of length {length}: need N in [{lo}, {hi}]")]
    NoAdmissibleCount { l: f64, length: f64, lo: f64, hi: f64 },
    #[error("tabulated dispersion needs at least 2x2 values, got {0}x{1}")]
    BadTable(usize, usize),
    #[error("invalid scale parameters: {0}")]
    BadParams(String),
}

/// `e(k)` for spatial momenta `k = (k1, k2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dispersion {
    /// `k1² + k2² − 1`.
    Circle,
    /// `k1² + k2² − 1 + cubic·k1³`.
    Asymmetric { cubic: f64 },
    /// Bilinear interpolation of `values[i][j]` at `(k1, k2) = (-extent + i·h, -extent + j·h)`.
    Tabulated { extent: f64, values: Vec<Vec<f64>> },
}

impl Default for Dispersion {
    fn default() -> Self {
        Dispersion::Asymmetric { cubic: 0.3 }
    }
}

impl Dispersion {
    pub fn symmetric_control() -> Self {
        Dispersion::Circle
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Dispersion::Circle => "symmetric",
            Dispersion::Asymmetric { .. } => "asymmetric",
            Dispersion::Tabulated { .. } => "tabulated",
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if let Dispersion::Tabulated { values, .. } = self {
            let rows = values.len();
            let cols = values.first().map_or(0, Vec::len);
            if rows < 2 || cols < 2 || values.iter().any(|r| r.len() != cols) {
                return Err(GeometryError::BadTable(rows, cols));
            }
        }
        Ok(())
    }

    pub fn eval(&self, k: [f64; 2]) -> f64 {
        let [k1, k2] = k;
        match self {
            Dispersion::Circle => k1 * k1 + k2 * k2 - 1.0,
            Dispersion::Asymmetric { cubic } => k1 * k1 + k2 * k2 - 1.0 + cubic * k1 * k1 * k1,
            Dispersion::Tabulated { extent, values } => {
                let n1 = values.len();
                let n2 = values[0].len();
                let h1 = 2.0 * extent / (n1 - 1) as f64;
                let h2 = 2.0 * extent / (n2 - 1) as f64;
                let u = ((k1 + extent) / h1).clamp(0.0, (n1 - 1) as f64);
                let v = ((k2 + extent) / h2).clamp(0.0, (n2 - 1) as f64);
                let i = (u.floor() as usize).min(n1 - 2);
                let j = (v.floor() as usize).min(n2 - 2);
                let (fu, fv) = (u - i as f64, v - j as f64);
                values[i][j] * (1.0 - fu) * (1.0 - fv)
                    + values[i + 1][j] * fu * (1.0 - fv)
                    + values[i][j + 1] * (1.0 - fu) * fv
                    + values[i + 1][j + 1] * fu * fv
            }
        }
    }

    /// Central-difference gradient.
    pub fn gradient(&self, k: [f64; 2]) -> [f64; 2] {
        match self {
            Dispersion::Circle => [2.0 * k[0], 2.0 * k[1]],
            Dispersion::Asymmetric { cubic } => [2.0 * k[0] + 3.0 * cubic * k[0] * k[0], 2.0 * k[1]],
            Dispersion::Tabulated { .. } => {
                let h = 1e-6;
                [
                    (self.eval([k[0] + h, k[1]]) - self.eval([k[0] - h, k[1]])) / (2.0 * h),
                    (self.eval([k[0], k[1] + h]) - self.eval([k[0], k[1] - h])) / (2.0 * h),
                ]
            }
        }
    }
}

/// `|ik0 − e(k)|²` for a space-time momentum `(k0, k1, k2)`.
pub fn z_squared(disp: &Dispersion, k: [f64; 3]) -> f64 {
    let e = disp.eval([k[1], k[2]]);
    k[0] * k[0] + e * e
}

/// Scale parameters `M`, `ℵ`, `j0`, `ȷ̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleParams {
    pub m: f64,
    pub aleph: f64,
    pub j0: i32,
    pub jbar: i32,
}

impl Default for ScaleParams {
    fn default() -> Self {
        ScaleParams { m: 4.0, aleph: 0.6, j0: 2, jbar: 9 }
    }
}

impl ScaleParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
        if !(self.m * self.m >= 2.0) {
            return Err(GeometryError::BadParams(format!("M = {} must satisfy M^2 >= 2", self.m)));
        }
        if !(self.aleph > 0.5 && self.aleph < 2.0 / 3.0) {
            return Err(GeometryError::BadParams(format!("aleph = {} must lie in (1/2, 2/3)", self.aleph)));
        }
        if self.j0 < 2 {
            return Err(GeometryError::BadParams(format!("j0 = {} must be at least 2", self.j0)));
        }
        Ok(())
    }

    /// Sector length `𝔩_j = M^{-ℵ j}`.
    pub fn sector_length(&self, j: i32) -> f64 {
        self.m.powf(-self.aleph * f64::from(j))
    }

    /// The profile `φ(t)`.
    pub fn ramp(&self, t: f64) -> f64 {
        let m = self.m;
        if t <= m {
            1.0
        } else if t >= 2.0 * m {
            0.0
        } else {
            1.0 - smoothstep((t - m) / m)
        }
    }

    /// `ν^{(≥j)}` as a function of `|ik0 − e|²`.
    pub fn nu_ge_z2(&self, j: i32, z2: f64) -> f64 {
        self.ramp(self.m.powi(2 * j) * z2)
    }

    /// `ν^{(j)} = ν^{(≥j)} − ν^{(≥j+1)}` as a function of `|ik0 − e|²`.
    pub fn nu_z2(&self, j: i32, z2: f64) -> f64 {
        self.nu_ge_z2(j, z2) - self.nu_ge_z2(j + 1, z2)
    }

    pub fn nu_ge(&self, j: i32, disp: &Dispersion, k: [f64; 3]) -> f64 {
        self.nu_ge_z2(j, z_squared(disp, k))
    }

    pub fn nu(&self, j: i32, disp: &Dispersion, k: [f64; 3]) -> f64 {
        self.nu_z2(j, z_squared(disp, k))
    }

    /// Inner and outer radius of the shell carrying `ν^{(j)}`.
    pub fn shell(&self, j: i32) -> (f64, f64) {
        let mj = self.m.powi(j);
        (1.0 / (self.m.sqrt() * mj), (2.0 * self.m).sqrt() / mj)
    }

    /// The scale `j` whose shell midpoint (geometric) is closest to `|z|`.
    pub fn scale_of(&self, z: f64) -> i32 {
        // shell j spans |z| M^j in [M^{-1/2}, (2M)^{1/2}]; its geometric middle is 2^{1/4}.
        let x = (2f64.powf(0.25) / z).ln() / self.m.ln();
        x.round() as i32
    }
}

/// `s − sin(2πs)/(2π)`: C² monotone ramp from 0 to 1 on `[0, 1]`.
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s - (2.0 * PI * s).sin() / (2.0 * PI)
}

/// Uniform, origin-symmetric box grid in `(k0, k1, k2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumGrid {
    pub extent: [f64; 3],
    pub n: usize,
}

impl MomentumGrid {
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let e = self.extent[axis];
        -e + 2.0 * e * i as f64 / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        let n = self.n;
        (0..n * n * n).map(move |idx| {
            let (i0, rest) = (idx / (n * n), idx % (n * n));
            [self.coord(0, i0), self.coord(1, rest / n), self.coord(2, rest % n)]
        })
    }
}

/// Closed, arc-length parametrized polyline approximating `{e = 0}`.
#[derive(Debug, Clone)]
pub struct FermiCurve {
    pub points: Vec<[f64; 2]>,
    /// `arc[i]` is the arc length from `points[0]` to `points[i]`.
    pub arc: Vec<f64>,
    pub length: f64,
    buckets: Buckets,
    pub tube: f64,
}

#[derive(Debug, Clone)]
struct Buckets {
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    segs: Vec<Vec<usize>>,
}

/// Nearest point on the Fermi curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: [f64; 2],
    pub arc: f64,
    pub distance: f64,
}

impl FermiCurve {
    /// Marching squares on an `n × n` grid over `[-extent, extent]²`, crossings
    /// refined by bisection on the cell edges.
    pub fn trace(disp: &Dispersion, extent: f64, n: usize, tube: f64) -> Result<FermiCurve, GeometryError> {
        disp.validate()?;
        let h = 2.0 * extent / (n - 1) as f64;
        let at = |i: usize, j: usize| [-extent + i as f64 * h, -extent + j as f64 * h];
        let vals: Vec<f64> = (0..n * n).map(|idx| disp.eval(at(idx / n, idx % n))).collect();
        let v = |i: usize, j: usize| vals[i * n + j];
        let neg = |x: f64| x < 0.0;

        // Edge ids: horizontal (i,j)-(i+1,j) -> 2*(i*n+j); vertical (i,j)-(i,j+1) -> 2*(i*n+j)+1.
        let crossing = |a: [f64; 2], b: [f64; 2]| -> [f64; 2] {
            let (mut lo, mut hi) = (a, b);
            let flo = disp.eval(lo);
            for _ in 0..60 {
                let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
                if neg(disp.eval(mid)) == neg(flo) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0]
        };

        let mut any_neg = false;
        let mut any_pos = false;
        for &x in &vals {
            if neg(x) {
                any_neg = true;
            } else {
                any_pos = true;
            }
        }
        if !(any_neg && any_pos) {
            return Err(GeometryError::NoZeroCrossing);
        }
        // A crossing on the boundary means the level set leaves the box.
        let boundary = (0..n).flat_map(|i| [v(i, 0), v(i, n - 1), v(0, i), v(n - 1, i)]);
        let (mut b_neg, mut b_pos) = (false, false);
        for x in boundary {
            if neg(x) {
                b_neg = true;
            } else {
                b_pos = true;
            }
        }
        if b_neg && b_pos {
            return Err(GeometryError::OpenCurve);
        }

        let mut segments: Vec<(usize, usize)> = Vec::new();
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                let c = [v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)];
                let code = c.iter().enumerate().fold(0u8, |acc, (b, &x)| acc | ((neg(x) as u8) << b));
                if code == 0 || code == 15 {
                    continue;
                }
                // edges: 0 bottom (i,j)-(i+1,j), 1 right (i+1,j)-(i+1,j+1), 2 top (i,j+1)-(i+1,j+1), 3 left (i,j)-(i,j+1)
                let eid = [2 * (i * n + j), 2 * ((i + 1) * n + j) + 1, 2 * (i * n + j + 1), 2 * (i * n + j) + 1];
                let cut = |e: usize| {
                    let (p, q) = match e {
                        0 => (0, 1),
                        1 => (1, 2),
                        2 => (3, 2),
                        _ => (0, 3),
                    };
                    neg(c[p]) != neg(c[q])
                };
                let cuts: Vec<usize> = (0..4).filter(|&e| cut(e)).collect();
                if cuts.len() == 2 {
                    segments.push((eid[cuts[0]], eid[cuts[1]]));
                } else {
                    // saddle: decide with the cell centre
                    let centre = (c[0] + c[1] + c[2] + c[3]) / 4.0;
                    if neg(centre) == neg(c[0]) {
                        segments.push((eid[0], eid[1]));
                        segments.push((eid[2], eid[3]));
                    } else {
                        segments.push((eid[0], eid[3]));
                        segments.push((eid[1], eid[2]));
                    }
                }
            }
        }

        let mut by_edge: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
        for (s, &(a, b)) in segments.iter().enumerate() {
            by_edge.entry(a).or_default().push(s);
            by_edge.entry(b).or_default().push(s);
        }
        let mut used = vec![false; segments.len()];
        let mut loops: Vec<Vec<usize>> = Vec::new();
        for start in 0..segments.len() {
            if used[start] {
                continue;
            }
            let mut edges = vec![segments[start].0];
            let mut cur_edge = segments[start].1;
            used[start] = true;
            loop {
                edges.push(cur_edge);
                let next = by_edge[&cur_edge].iter().copied().find(|&s| !used[s]);
                match next {
                    Some(s) => {
                        used[s] = true;
                        let (a, b) = segments[s];
                        cur_edge = if a == cur_edge { b } else { a };
                    }
                    None => break,
                }
            }
            if edges.first() != edges.last() {
                return Err(GeometryError::OpenCurve);
            }
            edges.pop();
            loops.push(edges);
        }
        if loops.len() != 1 {
            return Err(GeometryError::MultipleComponents(loops.len()));
        }
        let points: Vec<[f64; 2]> = loops[0]
            .iter()
            .map(|&e| {
                let node = e / 2;
                let (i, j) = (node / n, node % n);
                if e % 2 == 0 {
                    crossing(at(i, j), at(i + 1, j))
                } else {
                    crossing(at(i, j), at(i, j + 1))
                }
            })
            .collect();
        Ok(Self::from_points(points, tube))
    }

    pub fn from_points(points: Vec<[f64; 2]>, tube: f64) -> FermiCurve {
        let mut arc = Vec::with_capacity(points.len());
        let mut s = 0.0;
        for i in 0..points.len() {
            arc.push(s);
            let (a, b) = (points[i], points[(i + 1) % points.len()]);
            s += ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        }
        let buckets = Buckets::build(&points, tube.max(1e-3));
        FermiCurve { points, arc, length: s, buckets, tube }
    }

    pub fn segment_count(&self) -> usize {
        self.points.len()
    }

    /// Point at arc length `s` (taken modulo the length).
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let s = s.rem_euclid(self.length);
        let i = match self.arc.binary_search_by(|a| a.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let (a, b) = (self.points[i], self.points[(i + 1) % self.points.len()]);
        let seg = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let t = if seg > 0.0 { (s - self.arc[i]) / seg } else { 0.0 };
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Unit tangent at arc length `s`.
    pub fn tangent_at(&self, s: f64) -> [f64; 2] {
        let s = s.rem_euclid(self.length);
        let i = match self.arc.binary_search_by(|a| a.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let (a, b) = (self.points[i], self.points[(i + 1) % self.points.len()]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let norm = d[0].hypot(d[1]);
        [d[0] / norm, d[1] / norm]
    }

    /// Nearest-point projection `π_F`; errors outside the tube.
    pub fn project(&self, k: [f64; 2]) -> Result<Projection, GeometryError> {
        let best = self.nearest(k, self.tube);
        match best {
            Some(p) if p.distance <= self.tube => Ok(p),
            Some(p) => Err(GeometryError::OutsideTube(k[0], k[1], p.distance, self.tube)),
            None => Err(GeometryError::OutsideTube(k[0], k[1], f64::INFINITY, self.tube)),
        }
    }

    fn nearest(&self, k: [f64; 2], radius: f64) -> Option<Projection> {
        let mut best: Option<Projection> = None;
        let npts = self.points.len();
        for s in self.buckets.near(k, radius) {
            let (a, b) = (self.points[s], self.points[(s + 1) % npts]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let t = if len2 > 0.0 {
                (((k[0] - a[0]) * d[0] + (k[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let p = [a[0] + t * d[0], a[1] + t * d[1]];
            let dist = (k[0] - p[0]).hypot(k[1] - p[1]);
            if best.is_none_or(|b| dist < b.distance) {
                let arc = (self.arc[s] + t * len2.sqrt()).rem_euclid(self.length);
                best = Some(Projection { point: p, arc, distance: dist });
            }
        }
        best
    }
}

impl Buckets {
    fn build(points: &[[f64; 2]], cell: f64) -> Buckets {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let origin = [lo[0] - cell, lo[1] - cell];
        let dims = [
            ((hi[0] - origin[0]) / cell).ceil() as usize + 2,
            ((hi[1] - origin[1]) / cell).ceil() as usize + 2,
        ];
        let mut segs = vec![Vec::new(); dims[0] * dims[1]];
        let n = points.len();
        for s in 0..n {
            let (a, b) = (points[s], points[(s + 1) % n]);
            let mut cells = vec![];
            for p in [a, b, [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]] {
                let c = [((p[0] - origin[0]) / cell) as usize, ((p[1] - origin[1]) / cell) as usize];
                let id = c[0] * dims[1] + c[1];
                if !cells.contains(&id) {
                    cells.push(id);
                }
            }
            for id in cells {
                segs[id].push(s);
            }
        }
        Buckets { origin, cell, dims, segs }
    }

    /// Segments in buckets within `radius` of `k` (a superset of those that matter).
    fn near(&self, k: [f64; 2], radius: f64) -> impl Iterator<Item = usize> + '_ {
        let reach = (radius / self.cell).ceil() as i64 + 1;
        let c = [((k[0] - self.origin[0]) / self.cell).floor() as i64, ((k[1] - self.origin[1]) / self.cell).floor() as i64];
        let dims = self.dims;
        let mut ids = Vec::new();
        for x in (c[0] - reach).max(0)..=(c[0] + reach).min(dims[0] as i64 - 1) {
            for y in (c[1] - reach).max(0)..=(c[1] + reach).min(dims[1] as i64 - 1) {
                ids.push(x as usize * dims[1] + y as usize);
            }
        }
        let mut out: Vec<usize> = ids.into_iter().flat_map(|id| self.segs[id].iter().copied()).collect();
        out.sort_unstable();
        out.dedup();
        out.into_iter()
    }
}

/// One arc interval `[start, start + length]` (cyclic) on the Fermi curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub j: i32,
    pub start: f64,
    pub length: f64,
}

/// Cyclic chain of equal-length sectors with a uniform overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sectorization {
    pub j: i32,
    pub sector_length: f64,
    pub overlap: f64,
    pub curve_length: f64,
    pub sectors: Vec<Sector>,
}

impl Sectorization {
    /// Smallest sector count whose uniform overlap lies in `[𝔩/16, 𝔩/8]`.
    pub fn build(j: i32, curve_length: f64, l: f64) -> Result<Sectorization, GeometryError> {
        if l >= curve_length / 2.0 {
            return Err(GeometryError::SectorTooLong { l, length: curve_length });
        }
        // overlap o = l − L/N must satisfy l/16 ≤ o ≤ l/8
        let lo = 16.0 * curve_length / (15.0 * l);
        let hi = 8.0 * curve_length / (7.0 * l);
        let n = (lo.ceil() as usize).max(3);
        if (n as f64) > hi {
            return Err(GeometryError::NoAdmissibleCount { l, length: curve_length, lo, hi });
        }
        let step = curve_length / n as f64;
        let overlap = l - step;
        let sectors = (0..n).map(|i| Sector { j, start: i as f64 * step, length: l }).collect();
        Ok(Sectorization { j, sector_length: l, overlap, curve_length, sectors })
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    /// Offset of arc position `s` from the start of sector `i`, in `[0, L)`.
    fn offset(&self, i: usize, s: f64) -> f64 {
        (s - self.sectors[i].start).rem_euclid(self.curve_length)
    }

    pub fn contains(&self, i: usize, s: f64) -> bool {
        self.offset(i, s) <= self.sector_length
    }

    /// Length of `s_i ∩ s_{i+1}` along the curve.
    pub fn overlap_with_next(&self, i: usize) -> f64 {
        let next = (i + 1) % self.len();
        let gap = (self.sectors[next].start - self.sectors[i].start).rem_euclid(self.curve_length);
        self.sector_length - gap
    }

    /// Sectors whose arc contains `s` (one or two of them).
    pub fn sectors_at(&self, s: f64) -> Vec<usize> {
        let step = self.curve_length / self.len() as f64;
        let k = (s.rem_euclid(self.curve_length) / step).floor() as usize % self.len();
        let prev = (k + self.len() - 1) % self.len();
        let mut out: Vec<usize> = [prev, k].into_iter().filter(|&i| self.contains(i, s)).collect();
        out.dedup();
        out
    }

    /// Arc weight `a_i(s)`: complementary C² ramps on the overlaps.
    pub fn arc_weight(&self, i: usize, s: f64) -> f64 {
        let off = self.offset(i, s);
        let (l, o) = (self.sector_length, self.overlap);
        if off > l {
            0.0
        } else if off < o {
            smoothstep(off / o)
        } else if off > l - o {
            // complement of the next sector's rising ramp, evaluated identically
            let next = (i + 1) % self.len();
            let on = self.offset(next, s);
            1.0 - if on > l { 0.0 } else { smoothstep(on.min(o) / o) }
        } else {
            1.0
        }
    }

    /// Nonzero arc weights at `s`.
    pub fn arc_weights(&self, s: f64) -> Vec<(usize, f64)> {
        self.sectors_at(s)
            .into_iter()
            .map(|i| (i, self.arc_weight(i, s)))
            .filter(|&(_, w)| w > 0.0)
            .collect()
    }
}

/// Sector partition functions `χ_s(k) = a_s(π_F(k)) ν^{(≥j−1)}(k)`.
#[derive(Debug, Clone)]
pub struct SectorPartition<'a> {
    pub sectorization: Sectorization,
    pub curve: &'a FermiCurve,
    pub disp: &'a Dispersion,
    pub params: &'a ScaleParams,
}

impl<'a> SectorPartition<'a> {
    pub fn new(sectorization: Sectorization, curve: &'a FermiCurve, disp: &'a Dispersion, params: &'a ScaleParams) -> Self {
        SectorPartition { sectorization, curve, disp, params }
    }

    pub fn j(&self) -> i32 {
        self.sectorization.j
    }

    /// All nonzero `(s, χ_s(k))`.
    pub fn chi(&self, k: [f64; 3]) -> Result<Vec<(usize, f64)>, GeometryError> {
        let radial = self.params.nu_ge(self.j() - 1, self.disp, k);
        if radial == 0.0 {
            return Ok(Vec::new());
        }
        let p = self.curve.project([k[1], k[2]])?;
        Ok(self
            .sectorization
            .arc_weights(p.arc)
            .into_iter()
            .map(|(s, w)| (s, w * radial))
            .collect())
    }

    pub fn chi_sum(&self, k: [f64; 3]) -> Result<f64, GeometryError> {
        Ok(self.chi(k)?.iter().map(|(_, w)| w).sum())
    }

    /// `χ` values on a grid as `(point index, sector, value)` triples.
    pub fn sample(&self, grid: &MomentumGrid) -> Result<Vec<(usize, usize, f64)>, GeometryError> {
        let mut out = Vec::new();
        for (idx, k) in grid.points().enumerate() {
            for (s, w) in self.chi(k)? {
                out.push((idx, s, w));
            }
        }
        Ok(out)
    }
}

/// Largest `|e(−k)|` over the curve points: zero iff the antipode map preserves `F`.
pub fn antipodal_defect(disp: &Dispersion, curve: &FermiCurve) -> f64 {
    curve
        .points
        .iter()
        .map(|p| disp.eval([-p[0], -p[1]]).abs())
        .fold(0.0, f64::max)
}
