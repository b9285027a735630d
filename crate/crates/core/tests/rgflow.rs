use fermi_rg::config::RGConfig;
use fermi_rg::geometry::{Dispersion, ScaleParams};
use fermi_rg::grassmann::Grassmann;
use fermi_rg::rgflow::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn toy(coupling: f64) -> FlowModel {
    let rg = RGConfig { coupling: Some(coupling), ..RGConfig::default() };
    FlowModel::toy(&Dispersion::default(), &ScaleParams::default(), &rg).unwrap()
}

fn z(model: &FlowModel, k: [f64; 3]) -> Complex64 {
    c(-model.disp.eval([k[1], k[2]]), k[0])
}

#[test]
fn toy_modes_sit_in_their_shells() {
    let m = toy(1e-3);
    for mode in &m.modes.modes {
        assert_eq!(m.params.nu(mode.scale, &m.disp, mode.k), 1.0, "{mode:?}");
        assert_eq!(m.params.nu(mode.scale + 1, &m.disp, mode.k), 0.0);
        assert_eq!(m.params.nu(mode.scale - 1, &m.disp, mode.k), 0.0);
    }
    assert_eq!(m.modes.reversal_pairs(), vec![(5, 6)]);
    assert_eq!(m.n_gens(), 16);
}

#[test]
fn zero_interaction_gives_zero_counterterms() {
    let m = toy(0.0);
    let trace = m.run(5, DriverOptions { derivatives: false }).unwrap();
    for de in &trace.delta_e {
        assert_eq!(de.norm(), 0.0);
    }
    for rec in &trace.scales {
        assert!(rec.output.w.is_empty());
        assert!(rec.audits.failures().is_empty(), "{:?}", rec.audits.failures());
    }
    // The Cauchy differences all vanish, so "strictly decreasing" is the one line that fails.
    let fails: Vec<_> = trace.projective.failures().iter().map(|l| l.name.clone()).collect();
    assert_eq!(fails, vec!["Cauchy differences strictly decreasing".to_string()]);
}

#[test]
fn e_vanishes_without_counterterm_or_shift() {
    let m = toy(1e-3);
    let u: Vec<Complex64> = (0..m.modes.len()).map(|i| c(1e-5 * i as f64, -2e-6)).collect();
    let k = m.zero_k();
    let e = m.ewick_e(3, &u, &k, &u, &k).unwrap();
    assert!(e.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn d_at_zero_counterterm_is_the_upper_covariance() {
    let m = toy(1e-3);
    for mode in &m.modes.modes {
        for j in 2..7 {
            let u = c(3e-5, 1e-5);
            let d = m.cov_value(CovKind::D(j), mode.k, u, c(0.0, 0.0)).unwrap();
            let ge = m.cov_value(CovKind::AtLeast(j + 1), mode.k, u, c(0.0, 0.0)).unwrap();
            assert_eq!(d, ge);
        }
    }
}

#[test]
fn vanishing_denominator_is_reported() {
    let m = toy(1e-3);
    let k = m.modes.modes[1].k;
    let err = m.cov_value(CovKind::AtLeast(3), k, z(&m, k), c(0.0, 0.0)).unwrap_err();
    assert!(matches!(err, FlowError::Denominator { .. }));
}

#[test]
fn gaussian_step_adds_the_source_pairing() {
    // With W = 0 the step integrates e^{φ0 ζ(0,1) + φ1 ζ(0,0)} against C^{(j)}:
    // log of 1 + φ0 φ1 ∫ζ(0,0)ζ(0,1) = C^{(j)}(k_0) φ0 φ1.
    let m = toy(1e-3);
    let n = m.n_gens();
    let j = 2;
    let zero = m.zero_field();
    let input = Quadruple {
        j,
        k: m.zero_k(),
        w: Grassmann::zero(n),
        g: Grassmann::zero(n),
        u: zero.clone(),
        p: vec![],
        du: zero,
        f: vec![Grassmann::zero(n)],
    };
    let out = m.omega_j(&input).unwrap();
    let k0 = m.modes.modes[0].k;
    let expected = m.params.nu(j, &m.disp, k0) / z(&m, k0);
    assert!(out.w.is_empty());
    assert_eq!(out.g.len(), 1);
    assert!((out.g.coeff(0b11 << 14) - expected).norm() < 1e-12 * expected.norm());
}

#[test]
fn first_iterate_is_the_tadpole() {
    // At K' = 0 and q = 0 the re-Wick covariance vanishes, so q^{(1)} is the
    // quadratic part of Ω̃_{C^{(≤j0)}}(V). To first order in λ only n_0 is
    // contracted: q^{(1)}_k = −2λ s_0 s_k C(k_0) for k ≠ 0.
    let lambda = 1e-6;
    let m = toy(lambda);
    let step = m.o_step(2, &m.zero_k()).unwrap();
    let k0 = m.modes.modes[0].k;
    let c0 = 1.0 / z(&m, k0);
    let scale = m.params.m.powi(4);
    let s = |i: usize| (z(&m, m.modes.modes[i].k).norm_sqr() * scale).min(1.0).powi(2);
    let out = m.output(2, &m.zero_k()).unwrap();
    let q1 = m.diagonal_quadratic(&out.w);
    let mut largest: f64 = 0.0;
    for (k, q) in q1.iter().enumerate().skip(1) {
        let oracle = -2.0 * lambda * s(0) * s(k) * c0;
        assert!((q - oracle).norm() <= 1e-3 * oracle.norm() + 1e-18, "mode {k}: {q} vs {oracle}");
        largest = largest.max(q.norm());
    }
    assert!((step.trace.diffs[0] - largest).abs() <= 1e-12 * largest);
}

#[test]
fn fixpoint_converges_and_cancels_the_quadratic_part() {
    let m = toy(1e-3);
    for j in 2..5 {
        let step = m.o_step(j, &m.zero_k()).unwrap();
        assert!(step.trace.iterations() <= 20);
        assert!(step.trace.residual <= 1e-8);
        assert!(step.w02_residual <= 1e-10);
        assert!(step.trace.max_ratio_from(3) < 1.0);
    }
}

#[test]
fn strong_coupling_is_not_contracting() {
    let m = toy(0.5);
    match m.o_step(2, &m.zero_k()) {
        Err(FlowError::Step { j: 2, source }) => {
            assert!(matches!(*source, FlowError::NonContraction { .. } | FlowError::NoConvergence { .. } | FlowError::Denominator { .. }), "{source}");
        }
        other => panic!("expected a failed step, got {:?}", other.map(|s| s.trace.clone())),
    }
}

#[test]
fn e_is_a_difference_of_single_fractions() {
    // E = ν^{(≥j+1)}/(z − V̌) − ν^{(≥j+1)}/(z − v̌), V̌ = u' + K' ν^{(≥j+3)},
    // v̌ = u + K ν^{(≥j+2)}, and V̌ − v̌ is fixed by the flow's choice of u', K.
    let m = toy(1e-3);
    let j = 2;
    let kp = m.sample_k(j + 1);
    let step = m.o_step(j, &kp).unwrap();
    let out = m.output(j, &step.ren).unwrap();
    let u_prime = &step.input.u;
    let e = m.ewick_e(j, u_prime, &kp, &out.u, &step.ren).unwrap();
    let kp_ext = m.k_ext(&kp);
    let k_ext = m.k_ext(&step.ren);
    for (i, mode) in m.modes.modes.iter().enumerate() {
        let nu = |l: i32| m.params.nu_ge(l, &m.disp, mode.k);
        let zz = z(&m, mode.k);
        let big = u_prime[i] + kp_ext[i] * nu(j + 3);
        let small = out.u[i] + k_ext[i] * nu(j + 2);
        let oracle = nu(j + 1) / (zz - big) - nu(j + 1) / (zz - small);
        assert!((e[i] - oracle).norm() <= 1e-12 * (1.0 + oracle.norm()), "mode {i}");
        let s = m.modes.static_mode(mode.spatial);
        let q = step.q0[i] * nu(j + 1) - step.q0[s] * m.nu_ge(j + 1, s) * nu(j + 2);
        let predicted = q - kp_ext[i] * (nu(j + 2) - nu(j + 3));
        assert!((big - small - predicted).norm() <= 1e-15, "mode {i}");
    }
}

#[test]
fn e_responds_linearly_to_the_shift() {
    // dE/dε at q = εδ equals ν^{(≥j+1)}² δ/(z − u)² on modes where only u' moves.
    let m = toy(1e-3);
    let j = 3;
    let u = m.zero_field();
    let k = m.zero_k();
    let delta: Vec<Complex64> = (0..m.modes.len()).map(|i| c(1.0, 0.5 * i as f64)).collect();
    let h = 1e-9;
    let shifted = |s: f64| -> Vec<Complex64> { (0..m.modes.len()).map(|i| delta[i] * s * m.nu_ge(j + 1, i)).collect() };
    let ep = m.ewick_e(j, &shifted(h), &k, &u, &k).unwrap();
    let em = m.ewick_e(j, &shifted(-h), &k, &u, &k).unwrap();
    for (i, mode) in m.modes.modes.iter().enumerate() {
        let nu = m.nu_ge(j + 1, i);
        let zz = z(&m, mode.k);
        let oracle = nu * nu * delta[i] / (zz * zz);
        let fd = (ep[i] - em[i]) / (2.0 * h);
        assert!((fd - oracle).norm() <= 1e-5 * (1.0 + oracle.norm()), "mode {i}: {fd} vs {oracle}");
    }
}

#[test]
fn frak_k_conditions() {
    let m = toy(1e-3);
    let j = 2;
    assert!(m.check_frak_k(&m.zero_k(), j).failures().is_empty());
    let bound = 1e-3f64.powf(0.9) * m.params.sector_length(j + 1) / m.params.m.powi(j + 1);
    let mut at_bound = m.zero_k();
    at_bound.values[1] = c(bound, 0.0);
    let r = m.check_frak_k(&at_bound, j);
    assert_eq!(r.failures().len(), 1);
    assert!(r.failures()[0].name.starts_with("K-space 2 norm"));
    let mut inside = m.zero_k();
    inside.values[1] = c(0.5 * bound, 0.0);
    assert!(m.check_frak_k(&inside, j).failures().is_empty());
    // Spatial point 0 carries the scale-2 mode, outside supp ν^{(≥3)}((0,k)).
    let mut outside = m.zero_k();
    outside.values[0] = c(1e-9, 0.0);
    let r = m.check_frak_k(&outside, j);
    assert_eq!(r.failures().len(), 1);
    assert!(r.failures()[0].name.starts_with("K-space 2 support"));
}

#[test]
fn input_with_quadratic_part_fails_exactly_that_line() {
    let m = toy(0.0);
    let mut q = m.input(3, &m.zero_k()).unwrap();
    assert!(m.check_quadruple_static(&q, DataMode::Input).unwrap().failures().is_empty());
    q.w = q.w.add(&m.two_legged(&[c(0.0, 0.0), c(1e-6, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])).unwrap();
    let r = m.check_quadruple_static(&q, DataMode::Input).unwrap();
    let names: Vec<_> = r.failures().iter().map(|l| l.name.clone()).collect();
    assert!(names.contains(&"in.w w_02 = 0".to_string()), "{names:?}");
}

#[test]
fn quartic_excess_fails_only_the_new_f_line() {
    let m = toy(0.0);
    let mut q = (*m.output(2, &m.zero_k()).unwrap()).clone();
    q.w = Grassmann::monomial(m.n_gens(), &[3, 2, 5, 4], c(1e-8, 0.0));
    let r = m.check_quadruple_static(&q, DataMode::Output).unwrap();
    let names: Vec<_> = r.failures().iter().map(|l| l.name.clone()).collect();
    assert_eq!(names.len(), 1, "{names:?}");
    assert!(names[0].starts_with("out.F |dF^(3)|"), "{names:?}");
}

#[test]
fn projective_identities_hold() {
    let m = toy(1e-3);
    let trace = m.run(5, DriverOptions { derivatives: false }).unwrap();
    assert!(trace.projective.failures().is_empty(), "{:?}", trace.projective.failures());
    for w in trace.cauchy.windows(2) {
        assert!(w[1] < w[0]);
    }
    // δe_i ∘ ren_{i,j} = δe_j, checked directly at a non-zero K.
    let k = m.sample_k(5);
    let de5 = m.delta_e(5, &k).unwrap();
    for i in 2..5 {
        let via = m.delta_e(i, &m.ren(i, 5, &k).unwrap()).unwrap();
        assert!(via.max_diff(&de5) <= 1e-15);
    }
}

#[test]
fn quadruple_invariants_along_the_flow() {
    let m = toy(1e-3);
    let k = m.sample_k(4);
    for j in 3..=4 {
        let q = m.input(j, &k).unwrap();
        assert!(m.decomposition_defect(&q) <= 1e-15);
        assert!(m.p_static_defect(&q) <= 1e-10);
        assert_eq!(q.p.len(), (j - 2) as usize);
        assert!(m.reversal_defect(&q.u) <= 1e-15);
        assert_eq!(q.g.scalar_part(), c(0.0, 0.0));
        assert!(q.w.terms().all(|(mask, _)| mask & m.phi_mask() != mask));
    }
}

#[test]
fn ladder_remainder_is_third_order() {
    let m = toy(1e-3);
    let a = m.ladder_remainder(3, 1e-3).unwrap();
    let b = m.ladder_remainder(3, 1e-2).unwrap();
    let slope = |x: f64, y: f64| (y / x).log10();
    let s_change = slope(a.change, b.change);
    let s_first = slope(a.after_first, b.after_first);
    assert!((s_change - 2.0).abs() < 0.1, "change slope {s_change}");
    assert!((s_first - 3.0).abs() < 0.1, "remainder slope {s_first}");
    assert!(b.after_second <= b.after_first);
}

#[test]
fn lambda_scaling_is_first_order() {
    let rows = lambda_scaling(&Dispersion::default(), &ScaleParams::default(), &RGConfig::default(), &[1e-6, 1e-5]).unwrap();
    for r in rows {
        assert!((r.slope - r.v_min).abs() < 0.01, "{r:?}");
    }
}

#[test]
fn loglog_slope_recovers_powers() {
    let x = [1e-4, 1e-3, 1e-2];
    let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
    assert!((loglog_slope(&x, &y) - 1.5).abs() < 1e-12);
}

#[test]
fn quadruple_doc_roundtrips() {
    let m = toy(1e-3);
    let q = m.input(3, &m.zero_k()).unwrap();
    let doc = QuadrupleDoc::new(&q);
    let text = serde_json::to_string(&doc).unwrap();
    let back: QuadrupleDoc = serde_json::from_str(&text).unwrap();
    assert_eq!(back, doc);
}

#[test]
fn signed_zero_counterterms_share_a_cache_entry() {
    let m = toy(1e-3);
    let mut a = m.zero_k();
    a.values[1] = c(1e-9, 0.0);
    let mut b = a.clone();
    b.values[1] = c(1e-9, -0.0);
    m.o_step(3, &a).unwrap();
    let before = m.cached_steps();
    m.o_step(3, &b).unwrap();
    assert_eq!(m.cached_steps(), before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn covariance_additivity(
        k0 in -0.05f64..0.05, k1 in -1.3f64..1.3, k2 in -1.3f64..1.3,
        ur in -1e-3f64..1e-3, ui in -1e-3f64..1e-3, kr in -1e-3f64..1e-3, j in 2i32..6,
    ) {
        let m = toy(1e-3);
        let k = [k0, k1, k2];
        let (u, kk) = (c(ur, ui), c(kr, 0.0));
        let nu = |l: i32| m.params.nu_ge(l, &m.disp, k);
        let zz = z(&m, k);
        let cj = m.cov_value(CovKind::C(j), k, u, kk).unwrap();
        let oracle = if nu(j) == 0.0 { c(0.0, 0.0) } else { nu(j) / (zz - u - kk * nu(j + 2)) };
        prop_assert!((cj - oracle).norm() <= 1e-12 * (1.0 + oracle.norm()));
        let jbar = m.params.jbar;
        let ir = m.cov_value(CovKind::Infrared, k, u, kk).unwrap();
        let split = m.cov_value(CovKind::AtMost(2), k, u, kk).unwrap() + m.cov_value(CovKind::Bridge(2), k, u, kk).unwrap();
        prop_assert!((ir - split).norm() <= 1e-12 * (1.0 + ir.norm()));
        let oracle_ir = if nu(jbar) == 1.0 { c(0.0, 0.0) } else { (1.0 - nu(jbar)) / (zz - u * (1.0 - nu(jbar))) };
        prop_assert!((ir - oracle_ir).norm() <= 1e-12 * (1.0 + ir.norm()));
    }
}
