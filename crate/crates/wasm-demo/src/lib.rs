//! Three browser entry points over the core engine. Each takes plain numbers,
//! returns a JSON string and reports failures as a thrown string.

use fermi_rg::geometry::{Dispersion, FermiCurve, ScaleParams, SectorPartition, Sectorization};
use fermi_rg::ladders::{decay_exponents, pp_suppression_scan, BubbleProbe, BubbleQuadrature, ScanRow};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const EXTENT: f64 = 1.6;
const TUBE: f64 = 0.6;

fn dispersion(cubic: f64) -> Dispersion {
    if cubic == 0.0 {
        Dispersion::Circle
    } else {
        Dispersion::Asymmetric { cubic }
    }
}

fn params(m: f64, aleph: f64) -> Result<ScaleParams, String> {
    let p = ScaleParams { m, aleph, ..ScaleParams::default() };
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
pub struct SectorView {
    pub j: i32,
    pub length: f64,
    pub curve_length: f64,
    /// `[k1, k2]` polyline, closed.
    pub curve: Vec<[f64; 2]>,
    /// Start arc of every sector.
    pub starts: Vec<f64>,
    pub arc: Vec<f64>,
    /// Curve point at each `arc[i]`.
    pub at: Vec<[f64; 2]>,
    /// `chi[s][i]` at `arc[i]` on the curve.
    pub chi: Vec<Vec<f64>>,
}

pub fn sector_view(cubic: f64, m: f64, aleph: f64, j: i32, samples: usize) -> Result<SectorView, String> {
    let p = params(m, aleph)?;
    let disp = dispersion(cubic);
    let curve = FermiCurve::trace(&disp, EXTENT, 256, TUBE).map_err(|e| e.to_string())?;
    let sz = Sectorization::build(j, curve.length, p.sector_length(j)).map_err(|e| e.to_string())?;
    let starts = sz.sectors.iter().map(|s| s.start).collect();
    let n = sz.len();
    let length = sz.sectors.first().map_or(0.0, |s| s.length);
    let part = SectorPartition::new(sz, &curve, &disp, &p);
    let arc: Vec<f64> = (0..samples).map(|i| curve.length * (i as f64 + 0.5) / samples as f64).collect();
    let at: Vec<[f64; 2]> = arc.iter().map(|&s| curve.point_at(s)).collect();
    let mut chi = vec![vec![0.0; samples]; n];
    for (i, pt) in at.iter().enumerate() {
        for (sector, w) in part.chi([0.0, pt[0], pt[1]]).map_err(|e| e.to_string())? {
            chi[sector][i] = w;
        }
    }
    let mut poly = curve.points.clone();
    poly.extend(curve.points.first().copied());
    Ok(SectorView { j, length, curve_length: curve.length, curve: poly, starts, arc, at, chi })
}

#[derive(Serialize)]
pub struct ShellProfiles {
    pub abs_z: Vec<f64>,
    /// `nu[k]` is the shell function of scale `j_from + k`.
    pub nu: Vec<Vec<f64>>,
    pub js: Vec<i32>,
}

pub fn shell_profiles(m: f64, j_from: i32, j_to: i32, samples: usize) -> Result<ShellProfiles, String> {
    let p = params(m, ScaleParams::default().aleph)?;
    if j_to < j_from || samples < 2 {
        return Err("need j_from <= j_to and at least 2 samples".into());
    }
    let lo = m.powi(-(j_to + 2)).ln();
    let hi = 2f64.ln();
    let abs_z: Vec<f64> = (0..samples).map(|i| (lo + (hi - lo) * i as f64 / (samples - 1) as f64).exp()).collect();
    let js: Vec<i32> = (j_from..=j_to).collect();
    let nu = js.iter().map(|&j| abs_z.iter().map(|z| p.nu_z2(j, z * z)).collect()).collect();
    Ok(ShellProfiles { abs_z, nu, js })
}

#[derive(Serialize)]
pub struct PpTrend {
    pub rows: Vec<ScanRow>,
    /// Per dispersion: one-rung pp and full decay exponents between consecutive scales.
    pub exponents: Vec<(String, Vec<f64>, Vec<f64>)>,
}

/// Sup of the one-rung pp and full bubbles over scales, for the given dispersion
/// and the circle as a control. Coarse quadrature keeps it interactive.
pub fn pp_trend(cubic: f64, j_from: i32, j_to: i32, n_arc: usize) -> Result<PpTrend, String> {
    let p = params(4.0, ScaleParams::default().aleph)?;
    if j_to <= j_from || j_from < p.j0 {
        return Err(format!("need {} <= j_from < j_to", p.j0));
    }
    let quad = BubbleQuadrature { n_arc, per_shell: 1.0, depth: 1, n_family: 6 };
    let disp = dispersion(cubic);
    let circle = Dispersion::Circle;
    let trace = |d: &Dispersion| FermiCurve::trace(d, EXTENT, 256, TUBE).map_err(|e| e.to_string());
    let (c_main, c_circle) = (trace(&disp)?, trace(&circle)?);
    let main = BubbleProbe { disp: &disp, curve: &c_main, params: &p, quad };
    let control = BubbleProbe { disp: &circle, curve: &c_circle, params: &p, quad };
    let mut probes = vec![(disp.tag(), &main)];
    if disp != circle {
        probes.push((circle.tag(), &control));
    }
    let js: Vec<i32> = (j_from..=j_to).collect();
    let rows = pp_suppression_scan(1.0, &js, 1, &probes);
    let exponents = probes
        .iter()
        .map(|(tag, _)| {
            let mine: Vec<&ScanRow> = rows.iter().filter(|r| r.dispersion == *tag).collect();
            let pp: Vec<f64> = mine.iter().map(|r| r.norm_pp).collect();
            let full: Vec<f64> = mine.iter().map(|r| r.norm_full).collect();
            (tag.to_string(), decay_exponents(&pp, p.m), decay_exponents(&full, p.m))
        })
        .collect();
    Ok(PpTrend { rows, exponents })
}

#[wasm_bindgen(js_name = sectorView)]
pub fn sector_view_js(cubic: f64, m: f64, aleph: f64, j: i32, samples: usize) -> Result<String, JsValue> {
    sector_view(cubic, m, aleph, j, samples).and_then(|v| to_json(&v)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = shellProfiles)]
pub fn shell_profiles_js(m: f64, j_from: i32, j_to: i32, samples: usize) -> Result<String, JsValue> {
    shell_profiles(m, j_from, j_to, samples).and_then(|v| to_json(&v)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = ppTrend)]
pub fn pp_trend_js(cubic: f64, j_from: i32, j_to: i32, n_arc: usize) -> Result<String, JsValue> {
    pp_trend(cubic, j_from, j_to, n_arc).and_then(|v| to_json(&v)).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sectors_partition_the_curve() {
        let v = sector_view(0.3, 4.0, 0.6, 3, 200).unwrap();
        for i in 0..v.arc.len() {
            let sum: f64 = v.chi.iter().map(|c| c[i]).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert_eq!(v.curve.first(), v.curve.last());
    }

    #[test]
    fn shell_profiles_telescope() {
        let v = shell_profiles(4.0, 2, 5, 100).unwrap();
        assert_eq!(v.nu.len(), 4);
        assert!(v.nu.iter().flatten().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn pp_trend_decays_only_off_the_circle() {
        let t = pp_trend(0.3, 2, 3, 96).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert!(t.exponents[0].1[0] > 0.1, "{:?}", t.exponents);
        assert!(t.exponents[1].1[0] < 0.1, "{:?}", t.exponents);
    }

    #[test]
    fn bad_parameters_are_reported() {
        assert!(sector_view(0.3, 4.0, 0.9, 3, 10).is_err());
        assert!(pp_trend(0.3, 3, 3, 64).is_err());
    }
}
