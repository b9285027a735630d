use std::f64::consts::PI;

use fermi_rg::geometry::{Dispersion, FermiCurve, ScaleParams, SectorPartition, Sectorization};
use fermi_rg::kernels::*;
use fermi_rg::norm_domain::{MultiIndex, Shape};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> Torus {
    Torus { n0: 2, n: 4, h0: PI, h: PI, spins: 1 }
}

fn random_kernel(t: Torus, n: usize, fill: usize, seed: u64) -> SectorizedKernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = SectorizedKernel::new(t, 2, 0, n);
    for _ in 0..fill {
        let legs: Vec<Leg> = (0..n)
            .map(|_| Leg::new(rng.gen_range(0..t.sites() as u32), rng.gen_range(0..t.spins), rng.gen_range(0..2)))
            .collect();
        k.add_to(&legs, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).unwrap();
    }
    k
}

#[test]
fn fourier_round_trip() {
    for (n, seed) in [(2, 1), (3, 2)] {
        let f = random_kernel(tiny(), n, 20, seed);
        let back = fourier_total(&f).unwrap().inverse();
        assert!(f.max_diff(&back) < 1e-12, "n = {n}");
    }
}

#[test]
fn fourier_matches_direct_sum() {
    // f̌ with the first leg unpinned: Σ_{x1,x2} cell² e^{i(<k1,x1> (−1)^{a1} + <k2,x2>(−1)^{a2})} f / Vol
    let t = tiny();
    let f = random_kernel(t, 2, 10, 3);
    let mk = fourier_total(&f).unwrap();
    let labels = [(0u8, 1u8, None), (0u8, 0u8, None)];
    for k2 in [0u32, 5, 17] {
        let k1 = mk.first_momentum(&labels, &[k2]);
        let mut acc = Complex64::default();
        for x1 in 0..t.sites() as u32 {
            for x2 in 0..t.sites() as u32 {
                let v = f.get(&[Leg::new(x1, 0, 1), Leg::new(x2, 0, 0)]);
                let ph = -t.pairing(k1, x1) + t.pairing(k2, x2);
                acc += Complex64::from_polar(t.cell() * t.cell(), ph) * v;
            }
        }
        acc /= t.volume();
        assert!((acc - mk.get(&labels, &[k2])).norm() < 1e-12);
    }
}

#[test]
fn multiplier_is_recovered_by_check_u() {
    let t = Torus { n0: 4, n: 4, h0: 0.5 * PI, h: PI, spins: 2 };
    let c = |k: [f64; 3]| Complex64::new(k[1] * k[1] + 0.5 * k[2], k[0]);
    let u = SectorizedKernel::from_multiplier(t, 2, c);
    let got = check_u(&u).unwrap();
    for (mi, v) in got.iter().enumerate() {
        assert!((v - c(t.momentum(mi as u32))).norm() < 1e-12);
    }
}

#[test]
fn conv_nu_multiplies_symbols() {
    let t = Torus { n0: 2, n: 4, h0: PI, h: PI, spins: 1 };
    let c = |k: [f64; 3]| Complex64::new(1.0 + k[1], 0.3 * k[2]);
    let mu = |k: [f64; 3]| (k[1] * k[1] + k[2] * k[2]).cos();
    let u = SectorizedKernel::from_multiplier(t, 2, c);
    let lhs = conv_nu(&u, mu).unwrap();
    let rhs = SectorizedKernel::from_multiplier(t, 2, |k| c(k) * mu(k));
    assert!(lhs.max_diff(&rhs) < 1e-12);
}

fn partition_fixture() -> (Dispersion, FermiCurve, ScaleParams) {
    let disp = Dispersion::Circle;
    let curve = FermiCurve::trace(&disp, 2.0, 200, 0.6).unwrap();
    (disp, curve, ScaleParams::default())
}

#[test]
fn resectorize_matches_position_space_definition() {
    let t = Torus { n0: 2, n: 4, h0: PI, h: PI, spins: 1 };
    let (disp, curve, params) = partition_fixture();
    let sect = Sectorization::build(2, curve.length, params.sector_length(2)).unwrap();
    let part = SectorPartition::new(sect, &curve, &disp, &params);
    let f = random_kernel(t, 2, 12, 7);
    let g = resectorize(&f, &part).unwrap();

    // χ̂_s(x', x) for a leg with bit a: (1/Vol) Σ_k e^{(−1)^a i<k, x'−x>} χ_s(k)
    let chi = chi_table(&t, &part).unwrap();
    let v = t.sites() as u32;
    let chi_hat = |s: usize, a: u8, d: u32| {
        let sign = if a == 0 { 1.0 } else { -1.0 };
        let mut acc = Complex64::default();
        for mi in 0..v {
            if let Some(&(_, w)) = chi[mi as usize].iter().find(|(ss, _)| *ss == s) {
                acc += Complex64::from_polar(w, sign * t.pairing(mi, d));
            }
        }
        acc / t.volume()
    };
    let mut checked = 0;
    for (legs, val) in g.entries().take(12) {
        let (s1, s2) = (legs[0].sector.unwrap() as usize, legs[1].sector.unwrap() as usize);
        let mut acc = Complex64::default();
        for x1 in 0..v {
            for x2 in 0..v {
                let old = f.get(&[Leg::new(x1, legs[0].spin, legs[0].a), Leg::new(x2, legs[1].spin, legs[1].a)]);
                if old.norm() == 0.0 {
                    continue;
                }
                let c1 = chi_hat(s1, legs[0].a, t.sub(x1, legs[0].site));
                let c2 = chi_hat(s2, legs[1].a, t.sub(x2, legs[1].site));
                acc += old * c1 * c2 * t.cell() * t.cell();
            }
        }
        assert!((acc - val).norm() < 1e-10, "{acc} vs {val}");
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn resectorized_sector_sum_is_chi_sum_times_symbol() {
    let t = Torus { n0: 2, n: 4, h0: PI, h: PI, spins: 1 };
    let (disp, curve, params) = partition_fixture();
    let sect = Sectorization::build(2, curve.length, params.sector_length(2)).unwrap();
    let part = SectorPartition::new(sect, &curve, &disp, &params);
    let c = |k: [f64; 3]| Complex64::new(1.0 + k[1] * k[2], k[0]);
    let u = SectorizedKernel::from_multiplier(t, 2, c);
    let us = resectorize(&u, &part).unwrap();
    let mk = fourier_total(&us).unwrap();
    for mi in 0..t.sites() as u32 {
        let mut total = Complex64::default();
        for ((labels, moms), v) in &mk.entries {
            if labels[0].1 == 1 && labels[1].1 == 0 && moms[0] == mi {
                total += v;
            }
        }
        let k = t.momentum(mi);
        let s = part.chi_sum(k).unwrap();
        assert!((total - c(k) * s * s).norm() < 1e-12, "k = {k:?}");
    }
}

#[test]
fn decay_norms_by_hand() {
    // f((0,1),(y,0)) = 1 at y = e1, 2 at y = 2 e1 (minimal image −2 e1 on n=4 stays at distance 2)
    let t = Torus { n0: 1, n: 4, h0: 1.0, h: 1.0, spins: 1 };
    let mut f = SectorizedKernel::new(t, 2, 0, 2);
    let e1 = t.site([0, 1, 0]);
    let e2 = t.site([0, 2, 0]);
    f.add_to(&[Leg::new(0, 0, 1), Leg::new(e1, 0, 0)], Complex64::new(1.0, 0.0)).unwrap();
    f.add_to(&[Leg::new(0, 0, 1), Leg::new(e2, 0, 0)], Complex64::new(2.0, 0.0)).unwrap();
    let shape = Shape::new(2, 1);
    let ns = norm_deriv_l1linf(&f, shape);
    assert_eq!(ns.constant_term().to_f64(), 3.0);
    // δ = (0,1,0): 1·1 + 2·2 = 5
    assert_eq!(ns.get(MultiIndex([0, 1, 0])).to_f64(), 5.0);
    // δ = (0,2,0): (1 + 2·4)/2!
    assert_eq!(ns.get(MultiIndex([0, 2, 0])).to_f64(), 4.5);
    assert_eq!(ns.get(MultiIndex([0, 0, 1])).to_f64(), 0.0);
    assert_eq!(norm_l1linf(&f), 3.0);
}

#[test]
fn decay_operator_enumeration_counts() {
    let pairs = [(0, 1), (0, 2), (1, 2)];
    // C(2+2, 2) distributions of a second-order spatial index over 3 pairs
    assert_eq!(decay_operators(MultiIndex([0, 2, 0]), &pairs).len(), 6);
    assert_eq!(decay_operators(MultiIndex([1, 1, 0]), &pairs).len(), 9);
    assert_eq!(decay_operators(MultiIndex::ZERO, &[]).len(), 1);
    assert!(decay_operators(MultiIndex([1, 0, 0]), &[]).is_empty());
}

#[test]
fn decay_apply_rejects_self_pair() {
    let f = random_kernel(tiny(), 2, 3, 9);
    let op = DecayFactor { delta: MultiIndex([0, 1, 0]), u: 1, v: 1 };
    assert!(matches!(decay_apply(&[op], &f), Err(KernelError::SelfPair(1))));
}

#[test]
fn sector_norms_by_hand() {
    let t = Torus { n0: 1, n: 2, h0: 1.0, h: 1.0, spins: 1 };
    let mut f = SectorizedKernel::new(t, 2, 0, 2);
    let put = |f: &mut SectorizedKernel, s1: u32, s2: u32, v: f64| {
        f.add_to(&[Leg::new(0, 0, 1).with_sector(s1), Leg::new(0, 0, 0).with_sector(s2)], Complex64::new(v, 0.0))
            .unwrap();
    };
    put(&mut f, 0, 0, 1.0);
    put(&mut f, 0, 1, 2.0);
    put(&mut f, 1, 1, 4.0);
    let shape = Shape::new(0, 0);
    // p = 1: pin leg 1 at sector 0 → 1 + 2; at 1 → 4; pin leg 2 at 1 → 2 + 4
    assert_eq!(norm_p_sigma(&f, 1, shape).constant_term().to_f64(), 6.0);
    // p = 2: max single tuple
    assert_eq!(norm_p_sigma(&f, 2, shape).constant_term().to_f64(), 4.0);
    assert_eq!(norm_p_sigma(&f, 3, shape).constant_term().to_f64(), 0.0);
    let cfg = KernelNormConfig::default();
    let (l, mj) = (0.25, 16.0);
    let nj = norm_j(&f, shape, &cfg, l, mj);
    let expect = cfg.rho(cfg.lambda0, 0, 2) * 6.0;
    assert!((nj.constant_term().to_f64() - expect).abs() < 1e-9 * expect);
}

#[test]
fn external_sector_norm_sums_all_sectors() {
    let t = Torus { n0: 1, n: 2, h0: 1.0, h: 1.0, spins: 1 };
    let mut f = SectorizedKernel::new(t, 2, 1, 1);
    f.add_to(&[Leg::new(0, 0, 0), Leg::new(0, 0, 1).with_sector(0)], Complex64::new(1.0, 0.0)).unwrap();
    f.add_to(&[Leg::new(0, 0, 0), Leg::new(1, 0, 1).with_sector(1)], Complex64::new(3.0, 0.0)).unwrap();
    let shape = Shape::default();
    let n1 = norm_p_sigma(&f, 1, shape);
    assert_eq!(n1.constant_term().to_f64(), 4.0);
    assert_eq!(norm_p_sigma(&f, 2, shape).constant_term().to_f64(), 0.0);
}

#[test]
fn interchange_round_trip() {
    let mut f = random_kernel(tiny(), 3, 15, 11);
    f.add_to(&[Leg::new(1, 0, 0).with_sector(3), Leg::new(2, 0, 1), Leg::new(0, 0, 1)], Complex64::new(0.5, -0.25))
        .unwrap();
    let header = f.header();
    let json = serde_json::to_string(&header).unwrap();
    let back = SectorizedKernel::from_rows(&serde_json::from_str(&json).unwrap(), &f.rows()).unwrap();
    assert_eq!(f, back);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn antisymmetrize_is_idempotent(seed in 0u64..1000, n in 2usize..4) {
        let f = random_kernel(tiny(), n, 6, seed);
        let a = antisymmetrize(&f, AntisymMode::Internal).unwrap();
        let aa = antisymmetrize(&a, AntisymMode::Internal).unwrap();
        prop_assert!(a.max_diff(&aa) < 1e-12);
        // swapping two legs flips the sign
        for (legs, v) in a.entries() {
            let mut sw = legs.clone();
            sw.swap(0, 1);
            prop_assert!((a.get(&sw) + v).norm() < 1e-12);
        }
    }

    #[test]
    fn fourier_is_linear(seed in 0u64..1000, c in -2.0f64..2.0) {
        let f = random_kernel(tiny(), 2, 5, seed);
        let g = random_kernel(tiny(), 2, 5, seed + 1);
        let lhs = fourier_total(&f.add(&g.scale(Complex64::new(c, 0.0))).unwrap()).unwrap().inverse();
        let rhs = f.add(&g.scale(Complex64::new(c, 0.0))).unwrap();
        prop_assert!(lhs.max_diff(&rhs) < 1e-12);
    }

    #[test]
    fn norm_is_subadditive(seed in 0u64..1000) {
        let f = random_kernel(tiny(), 2, 6, seed);
        let g = random_kernel(tiny(), 2, 6, seed + 7);
        let shape = Shape::new(1, 1);
        let lhs = norm_deriv_l1linf(&f.add(&g).unwrap(), shape);
        let rhs = norm_deriv_l1linf(&f, shape).add(&norm_deriv_l1linf(&g, shape)).unwrap();
        prop_assert!(lhs.iter().zip(rhs.iter()).all(|((_, a), (_, b))| a.to_f64() <= b.to_f64() + 1e-12));
    }
}
