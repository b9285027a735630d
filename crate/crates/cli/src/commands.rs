use anyhow::{anyhow, Context, Result};
use fermi_rg::config::{CheckLevel, RunConfig, ValidationReport};
use fermi_rg::geometry::{z_squared, Dispersion, FermiCurve, SectorPartition, Sectorization};
use fermi_rg::ladders::{self, decay_exponents, pp_suppression_scan, BubbleProbe, ScanRow};
use fermi_rg::rgflow::{lambda_scaling, AuditLine, DriverOptions, FlowModel, FlowTrace, QuadrupleDoc, StepDoc, Verdict};
use num_complex::Complex64;
use serde::Serialize;

use crate::artifacts::{num, Artifacts};
use crate::fixtures;

/// Rng streams of the seeded suites.
const LADDER_STREAM: u64 = 4;

pub fn print_report(report: &ValidationReport) {
    for c in &report.checks {
        let level = match c.level {
            CheckLevel::Ok => "ok",
            CheckLevel::Warning => "warning",
            CheckLevel::Error => "error",
        };
        println!("{level:<8} {:<14} {}", c.name, c.message);
    }
    println!("{}", if report.accepted() { "accepted" } else { "rejected" });
}

pub fn validate(cfg: &RunConfig, out: Option<&std::path::Path>) -> Result<bool> {
    let report = cfg.validate();
    print_report(&report);
    if let Some(dir) = out {
        let mut a = Artifacts::create(dir, "validate", cfg.seed)?;
        a.json("validation.json", "Every configuration check with its level and the constraint in words", &report)?;
        a.finish()?;
    }
    Ok(report.accepted())
}

fn write_config(a: &mut Artifacts, cfg: &RunConfig) -> Result<()> {
    a.text("config.toml", "Effective configuration after command-line overrides", &cfg.to_toml())
}

// ---------------------------------------------------------------- geometry

#[derive(Serialize)]
struct ScaleGeometry {
    j: i32,
    sector_length: f64,
    sectors: usize,
    sector_bound: f64,
    overlap: f64,
    overlap_window: [f64; 2],
    neighbourhood_points: usize,
    partition_residual: f64,
    telescoping_residual: f64,
}

pub fn geometry(cfg: &RunConfig, a: &mut Artifacts) -> Result<()> {
    write_config(a, cfg)?;
    let disp = &cfg.dispersion;
    let p = &cfg.scale;
    let curve = FermiCurve::trace(disp, cfg.curve.extent, cfg.curve.n, cfg.curve.tube).context("tracing the Fermi curve")?;
    a.csv(
        "curve.csv",
        "Fermi curve polyline: arc length and spatial momentum of each vertex",
        &["index", "arc", "k1", "k2"],
        curve.points.iter().zip(&curve.arc).enumerate().map(|(i, (pt, s))| vec![i.to_string(), num(*s), num(pt[0]), num(pt[1])]),
    )?;

    let js = &cfg.geometry.js;
    let deepest = js.iter().copied().max().unwrap_or(p.j0);
    let lo = p.m.powi(-(deepest + 2)).ln();
    let hi = 2f64.ln();
    let n_prof = 400;
    let mut header = vec!["abs_z".to_string()];
    header.extend(js.iter().map(|j| format!("nu_ge_{j}")));
    header.extend(js.iter().map(|j| format!("nu_{j}")));
    let rows = (0..n_prof).map(|i| {
        let z = (lo + (hi - lo) * i as f64 / (n_prof - 1) as f64).exp();
        let mut row = vec![num(z)];
        row.extend(js.iter().map(|&j| num(p.nu_ge_z2(j, z * z))));
        row.extend(js.iter().map(|&j| num(p.nu_z2(j, z * z))));
        row
    });
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    a.csv("nu-profile.csv", "Cutoff functions nu^(>=j) and shell functions nu^(j) against |ik0 - e(k)| on a log grid", &hdr, rows)?;

    let grid = &cfg.geometry.grid;
    let mut checks = Vec::new();
    for &j in js {
        let l = p.sector_length(j);
        let sz = Sectorization::build(j, curve.length, l).with_context(|| format!("sectorizing at scale {j}"))?;
        let n = sz.len();
        a.csv(
            &format!("sectors-j{j:02}.csv"),
            "Sectors of the scale-j sectorization: start arc, length and overlap with the next sector",
            &["sector", "start", "length", "overlap_next"],
            sz.sectors.iter().enumerate().map(|(i, s)| vec![i.to_string(), num(s.start), num(s.length), num(sz.overlap_with_next(i))]),
        )?;
        let overlap = sz.overlap;
        let part = SectorPartition::new(sz, &curve, disp, p);
        let samples = 4 * n;
        let mut chi_rows = Vec::with_capacity(samples);
        for i in 0..samples {
            let s = curve.length * (i as f64 + 0.5) / samples as f64;
            let pt = curve.point_at(s);
            let mut chi = vec![0.0; n];
            for (sector, w) in part.chi([0.0, pt[0], pt[1]])? {
                chi[sector] = w;
            }
            let mut row = vec![num(s), num(pt[0]), num(pt[1])];
            row.extend(chi.into_iter().map(num));
            chi_rows.push(row);
        }
        let mut header = vec!["arc".to_string(), "k1".into(), "k2".into()];
        header.extend((0..n).map(|i| format!("chi_{i}")));
        let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
        a.csv(&format!("chi-j{j:02}.csv"), "Sector partition functions chi_s on the Fermi curve (k0 = 0), one column per sector", &hdr, chi_rows)?;

        let (mut points, mut pou, mut tele) = (0usize, 0.0f64, 0.0f64);
        for k in grid.points() {
            let z2 = z_squared(disp, k);
            let sum: f64 = (j..p.jbar).map(|i| p.nu_z2(i, z2)).sum::<f64>() + p.nu_ge_z2(p.jbar, z2);
            tele = tele.max((sum - p.nu_ge_z2(j, z2)).abs());
            if p.nu_ge_z2(j, z2) > 0.0 {
                points += 1;
                pou = pou.max((part.chi_sum(k)? - 1.0).abs());
            }
        }
        checks.push(ScaleGeometry {
            j,
            sector_length: l,
            sectors: n,
            sector_bound: 2.0 * curve.length / l,
            overlap,
            overlap_window: [l / 16.0, l / 8.0],
            neighbourhood_points: points,
            partition_residual: pou,
            telescoping_residual: tele,
        });
    }
    a.json("geometry-checks.json", "Per-scale sector counts, overlaps, partition-of-unity and telescoping residuals on the momentum grid", &checks)?;
    Ok(())
}

// ---------------------------------------------------------------- ladders

#[derive(Serialize)]
struct DecayRow {
    dispersion: String,
    ell: usize,
    pp_exponents: Vec<f64>,
    full_exponents: Vec<f64>,
}

pub fn ladders(cfg: &RunConfig, a: &mut Artifacts) -> Result<()> {
    write_config(a, cfg)?;
    let mut rng = cfg.rng(LADDER_STREAM);
    let n = cfg.ladders.samples;
    let mut dec_rows = Vec::with_capacity(n);
    let mut id_rows = Vec::with_capacity(2 * n);
    for i in 0..n {
        let sp = fixtures::space(&mut rng);
        let f = fixtures::antisymmetric(&sp, &mut rng);
        let rep = ladders::decompose_check(&f)?;
        dec_rows.push(vec![
            i.to_string(),
            sp.nx().to_string(),
            sp.ns.to_string(),
            num(rep.residual),
            num(rep.antisymmetry_defect),
            num(rep.particle_number_defect),
        ]);
        let ell = 1 + i % 2;
        let sp = fixtures::space(&mut rng);
        let rungs: Vec<_> = (0..=ell).map(|_| fixtures::rung(&sp, &mut rng)).collect();
        let bubbles = (0..ell)
            .map(|_| ladders::cC(&fixtures::propagator(sp.nx(), &mut rng), &fixtures::propagator(sp.nx(), &mut rng)))
            .collect::<Result<Vec<_>, _>>()?;
        let full = ladders::ladder(&rungs, &bubbles)?;
        let lhs = ladders::reduce_pp(&full)?;
        let rr = rungs.iter().map(ladders::reduce_pp).collect::<Result<Vec<_>, _>>()?;
        let bb = bubbles.iter().map(ladders::bubble_pp).collect::<Result<Vec<_>, _>>()?;
        let pp = lhs.max_diff(&ladders::ladder(&rr, &bb)?);
        id_rows.push(vec![i.to_string(), "pp".into(), ell.to_string(), num(pp), num(lhs.max_abs())]);
        let lhs = ladders::reduce_ph(&full)?;
        let rr = rungs.iter().map(ladders::reduce_ph).collect::<Result<Vec<_>, _>>()?;
        let bb = bubbles.iter().map(ladders::bubble_ph).collect::<Result<Vec<_>, _>>()?;
        let rhs = ladders::ladder(&rr, &bb)?.scale(Complex64::new(2f64.powi(ell as i32), 0.0));
        id_rows.push(vec![i.to_string(), "ph".into(), ell.to_string(), num(lhs.max_diff(&rhs)), num(lhs.max_abs())]);
    }
    a.csv(
        "decompose.csv",
        "Residual of f = V_pp(f^pp) + V_ph(f^ph) on seeded antisymmetric particle-number-conserving kernels",
        &["sample", "points", "spins", "residual", "antisymmetry_defect", "particle_number_defect"],
        dec_rows,
    )?;
    a.csv(
        "ladder-identities.csv",
        "Residuals of the pp and ph reductions of a ladder (ph carries the factor 2^ell) on seeded rungs and bubbles",
        &["sample", "channel", "ell", "residual", "max_abs"],
        id_rows,
    )?;

    let p = &cfg.scale;
    let sym = Dispersion::symmetric_control();
    let curve = |d: &Dispersion| FermiCurve::trace(d, cfg.curve.extent, cfg.curve.n, cfg.curve.tube).context("tracing the Fermi curve");
    let (c_main, c_sym) = (curve(&cfg.dispersion)?, curve(&sym)?);
    let quad = cfg.ladders.quadrature;
    let main = BubbleProbe { disp: &cfg.dispersion, curve: &c_main, params: p, quad };
    let control = BubbleProbe { disp: &sym, curve: &c_sym, params: p, quad };
    let mut probes = vec![(cfg.dispersion.tag(), &main)];
    if cfg.dispersion != sym {
        probes.push((sym.tag(), &control));
    }
    let rows = pp_suppression_scan(cfg.ladders.rung, &cfg.ladders.js, cfg.rg.ell_max, &probes);
    a.csv(
        "scan.csv",
        "Per-scale size of the particle-particle part and of the full ladder for a contact rung",
        &["j", "ell", "norm_pp", "norm_full", "dispersion"],
        rows.iter().map(|r| vec![r.j.to_string(), r.ell.to_string(), num(r.norm_pp), num(r.norm_full), r.dispersion.clone()]),
    )?;
    let mut decay = Vec::new();
    for (tag, _) in &probes {
        for ell in 1..=cfg.rg.ell_max {
            let col: Vec<&ScanRow> = rows.iter().filter(|r| r.dispersion == *tag && r.ell == ell).collect();
            let pp: Vec<f64> = col.iter().map(|r| r.norm_pp).collect();
            let full: Vec<f64> = col.iter().map(|r| r.norm_full).collect();
            decay.push(DecayRow { dispersion: tag.to_string(), ell, pp_exponents: decay_exponents(&pp, p.m), full_exponents: decay_exponents(&full, p.m) });
        }
    }
    a.json("decay-exponents.json", "Fitted per-scale decay exponents (-log_M of successive ratios) of the scan columns", &decay)?;
    Ok(())
}

// ---------------------------------------------------------------- flow

#[derive(Serialize)]
struct RenEntry {
    j: i32,
    values: Vec<Complex64>,
}

#[derive(Serialize)]
struct RenChain {
    j0: i32,
    j_max: i32,
    steps: Vec<StepDoc>,
    /// `ren_{j, j_max}(0)` for every `j`.
    to_j_max: Vec<RenEntry>,
}

fn run_flow(cfg: &RunConfig) -> Result<(FlowModel, FlowTrace)> {
    let model = FlowModel::toy(&cfg.dispersion, &cfg.scale, &cfg.rg).context("building the toy flow model")?;
    let trace = model.run(cfg.flow.j_max, DriverOptions { derivatives: true }).context("running the flow")?;
    Ok((model, trace))
}

pub fn flow(cfg: &RunConfig, a: &mut Artifacts) -> Result<()> {
    write_config(a, cfg)?;
    let (model, trace) = run_flow(cfg)?;
    for rec in &trace.scales {
        let j = rec.j;
        a.json(&format!("step-{j:02}/quadruple.json"), "Output interaction quadruple (W, G, u, p) and F list at this scale, at K = 0", &QuadrupleDoc::new(&rec.output))?;
        if let Some(input) = &rec.input {
            a.json(&format!("step-{j:02}/input.json"), "Input quadruple at this scale after the renormalization step, at K = 0", &QuadrupleDoc::new(input))?;
        }
        a.json(&format!("step-{j:02}/audits.json"), "Norm and identity audits of the quadruples at this scale", &rec.audits)?;
    }
    let zero = model.zero_k();
    let chain = RenChain {
        j0: trace.j0,
        j_max: trace.j_max,
        steps: trace.scales.iter().filter_map(|r| r.step.as_ref()).map(StepDoc::new).collect(),
        to_j_max: (trace.j0..=trace.j_max)
            .map(|j| Ok(RenEntry { j, values: model.ren(j, trace.j_max, &zero)?.values }))
            .collect::<Result<Vec<_>, fermi_rg::rgflow::FlowError>>()?,
    };
    a.json("flow/ren-chain.json", "Renormalization steps: re-Wick fixed point, counterterm increments, and ren_{j,j_max}(0)", &chain)?;

    let mut header = vec!["point".to_string(), "k1".into(), "k2".into()];
    header.extend((trace.j0..=trace.j_max).map(|j| format!("re_delta_e_{j}")));
    header.extend((trace.j0..=trace.j_max).map(|j| format!("im_delta_e_{j}")));
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = model.modes.spatial.iter().enumerate().map(|(i, k)| {
        let mut row = vec![i.to_string(), num(k[0]), num(k[1])];
        row.extend(trace.delta_e.iter().map(|de| num(de.values[i].re)));
        row.extend(trace.delta_e.iter().map(|de| num(de.values[i].im)));
        row
    });
    a.csv("flow/delta-e.csv", "Counterterm delta e_j(0) at each spatial sample: real parts, then imaginary parts, one column per scale", &hdr, rows)?;
    a.csv(
        "flow/cauchy.csv",
        "Sup difference of consecutive counterterms delta e_{j+1}(0) - delta e_j(0)",
        &["j", "difference"],
        trace.cauchy.iter().enumerate().map(|(n, d)| vec![(trace.j0 + n as i32).to_string(), num(*d)]),
    )?;
    let fix_rows = trace.scales.iter().filter_map(|r| r.step.as_ref()).flat_map(|s| {
        s.trace.diffs.iter().enumerate().map(move |(n, d)| {
            let ratio = if n == 0 { String::new() } else { num(s.trace.ratios[n - 1]) };
            vec![s.j.to_string(), (n + 1).to_string(), num(*d), ratio]
        })
    });
    a.csv("flow/fixpoint.csv", "Re-Wick fixed-point iteration: successive differences and their ratios per scale", &["j", "step", "difference", "ratio"], fix_rows)?;
    a.json("flow/projective.json", "Projective-system identities of the renormalization maps and the counterterm limit", &trace.projective)?;
    a.json("flow/step-checks.json", "Per-step bounds on the renormalization step, with proxy and constant caveats", &trace.step_checks)?;
    let fails = trace.scales.iter().map(|r| r.audits.failures().len()).sum::<usize>() + trace.projective.failures().len() + trace.step_checks.failures().len();
    println!("flow j = {}..{}: {} audit lines FAIL (see audits.json files)", trace.j0, trace.j_max, fails);
    Ok(())
}

// ---------------------------------------------------------------- audit

#[derive(Serialize, Default)]
struct AuditSummary {
    pass: usize,
    fail: usize,
    inconclusive: usize,
    alpha_in_window: bool,
    failing: Vec<String>,
}

pub fn audit(cfg: &RunConfig, a: &mut Artifacts) -> Result<()> {
    write_config(a, cfg)?;
    let (model, trace) = run_flow(cfg)?;
    let mut lines: Vec<(String, &AuditLine)> = Vec::new();
    for rec in &trace.scales {
        lines.extend(rec.audits.lines.iter().map(|l| (format!("scale {}", rec.j), l)));
    }
    lines.extend(trace.projective.lines.iter().map(|l| ("projective".to_string(), l)));
    lines.extend(trace.step_checks.lines.iter().map(|l| ("step".to_string(), l)));
    let verdict = |v: Verdict| match v {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Inconclusive => "INCONCLUSIVE(const)",
    };
    let opt = |v: f64| if v.is_nan() { String::new() } else { num(v) };
    a.csv(
        "lines.csv",
        "Every audit line of the flow: measured left side, bound, verdict and caveat",
        &["scope", "name", "lhs", "rhs", "verdict", "note"],
        lines.iter().map(|(scope, l)| vec![scope.clone(), l.name.clone(), opt(l.lhs), opt(l.rhs), verdict(l.verdict).into(), l.note.clone()]),
    )?;

    let scaling = lambda_scaling(&cfg.dispersion, &cfg.scale, &cfg.rg, &cfg.flow.lambdas).context("coupling-scaling diagnostic")?;
    let rows = scaling.iter().flat_map(|r| {
        r.lambdas.iter().zip(&r.magnitudes).map(move |(l, m)| vec![r.m.to_string(), r.n.to_string(), num(*l), num(*m), num(r.slope), num(r.v_min)])
    });
    a.csv(
        "lambda-scaling.csv",
        "Size of the (m,n) blocks of the bare effective action against the coupling, with the fitted log-log slope and the power-counting minimum",
        &["m", "n", "lambda", "magnitude", "slope", "v_min"],
        rows,
    )?;

    let j = cfg.scale.j0 + 1;
    let rem = cfg.flow.lambdas.iter().map(|&l| model.ladder_remainder(j, l)).collect::<Result<Vec<_>, _>>().context("ladder remainder")?;
    a.csv(
        "ladder-remainder.csv",
        "Quartic change of one integration step and what remains after subtracting the first and second ladders",
        &["j", "lambda", "change", "after_first", "after_second"],
        rem.iter().map(|r| vec![j.to_string(), num(r.lambda), num(r.change), num(r.after_first), num(r.after_second)]),
    )?;

    let mut s = AuditSummary { alpha_in_window: cfg.validate().checks.iter().any(|c| c.name == "alpha_window" && c.level == CheckLevel::Ok), ..AuditSummary::default() };
    for (scope, l) in &lines {
        match l.verdict {
            Verdict::Pass => s.pass += 1,
            Verdict::Fail => {
                s.fail += 1;
                s.failing.push(format!("{scope}: {}", l.name));
            }
            Verdict::Inconclusive => s.inconclusive += 1,
        }
    }
    a.json("summary.json", "Counts of audit verdicts and the failing lines", &s)?;
    println!("audit: {} PASS, {} FAIL, {} INCONCLUSIVE(const)", s.pass, s.fail, s.inconclusive);
    if !s.alpha_in_window && s.fail > 0 {
        println!("alpha lies outside its window, so norm-proxy bounds are diagnostic only");
    }
    for r in &scaling {
        println!("lambda scaling ({},{}): slope {:.3}, power-counting minimum {:.1}", r.m, r.n, r.slope, r.v_min);
    }
    Ok(())
}

pub fn require_valid(cfg: &RunConfig) -> Result<()> {
    let report = cfg.validate();
    for c in report.checks.iter().filter(|c| c.level == CheckLevel::Warning) {
        eprintln!("warning: {}: {}", c.name, c.message);
    }
    if !report.accepted() {
        return Err(anyhow!("invalid configuration: {}", report.errors().join("; ")));
    }
    Ok(())
}
