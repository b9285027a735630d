use fermi_rg::grassmann::*;
use fermi_rg::kernels::{KernelNormConfig, Torus};
use fermi_rg::norm_domain::{NormCoeff, NormSeries, Shape};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn rc(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn random_cov(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Covariance {
    let mut cov = Covariance::zero(n);
    for i in 0..n {
        for j in i + 1..n {
            cov.set(i, j, rc(rng) * scale);
        }
    }
    cov
}

fn random_even(n: usize, max_deg: u32, scale: f64, rng: &mut ChaCha8Rng) -> Grassmann {
    let mut w = Grassmann::zero(n);
    for mask in 1u64..(1 << n) {
        let d = mask.count_ones();
        if d % 2 == 0 && d <= max_deg && rng.gen_bool(0.5) {
            w.add_term(mask, rc(rng) * scale);
        }
    }
    w
}

fn random_element(n: usize, rng: &mut ChaCha8Rng) -> Grassmann {
    let mut w = Grassmann::zero(n);
    for m in 0u64..(1 << n) {
        if rng.gen_bool(0.3) {
            w.add_term(m, rc(rng));
        }
    }
    w
}

/// Pairing enumeration: `∫ζ_{a_1}⋯ζ_{a_2k} = Σ_k (−1)^k C(a_1, a_k) ∫(rest)`.
fn pairing_oracle(idx: &[usize], cov: &Covariance) -> Complex64 {
    if idx.is_empty() {
        return c(1.0);
    }
    if idx.len() % 2 == 1 {
        return Complex64::default();
    }
    let mut acc = Complex64::default();
    for k in 1..idx.len() {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let rest: Vec<usize> = idx[1..].iter().enumerate().filter(|(i, _)| i + 1 != k).map(|(_, &v)| v).collect();
        acc += cov.get(idx[0], idx[k]) * sign * pairing_oracle(&rest, cov);
    }
    acc
}

fn bits(mut m: u64) -> Vec<usize> {
    let mut v = Vec::new();
    while m != 0 {
        v.push(m.trailing_zeros() as usize);
        m &= m - 1;
    }
    v
}

#[test]
fn hand_expansion_of_product() {
    let a = Grassmann::one(4).add(&Grassmann::monomial(4, &[0, 1], c(1.0))).unwrap();
    let b = Grassmann::one(4).add(&Grassmann::monomial(4, &[2, 3], c(1.0))).unwrap();
    let p = a.mul(&b).unwrap();
    let expect = Grassmann::from_terms(4, [(0, c(1.0)), (0b0011, c(1.0)), (0b1100, c(1.0)), (0b1111, c(1.0))]);
    assert_eq!(p, expect);
}

#[test]
fn four_point_pairing_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cov = random_cov(4, 1.0, &mut rng);
    let got = Grassmann::monomial(4, &[0, 1, 2, 3], c(1.0)).integrate(&cov, 0b1111).unwrap().scalar_part();
    let g = |i, j| cov.get(i, j);
    let expect = g(0, 1) * g(2, 3) - g(0, 2) * g(1, 3) + g(0, 3) * g(1, 2);
    assert!((got - expect).norm() < 1e-14);
}

#[test]
fn gaussian_integral_matches_pairing_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 8;
    let cov = random_cov(n, 1.0, &mut rng);
    for mask in 0u64..(1 << n) {
        if mask.count_ones() > 6 {
            continue;
        }
        let got = Grassmann::from_terms(n, [(mask, c(1.0))]).integrate(&cov, (1 << n) - 1).unwrap().scalar_part();
        let expect = pairing_oracle(&bits(mask), &cov);
        assert!((got - expect).norm() < 1e-12, "mask {mask:b}");
    }
}

/// `∫ W(ψ+ζ) dμ_C(ζ)` by explicit substitution in a doubled algebra and the pairing oracle.
fn substitution_oracle(w: &Grassmann, cov: &Covariance) -> Grassmann {
    let n = w.generators();
    let big = 2 * n;
    let mut doubled = Grassmann::zero(big);
    for (mask, v) in w.terms() {
        let mut prod = Grassmann::scalar(big, v);
        for i in bits(mask) {
            let shifted = Grassmann::generator(big, i).add(&Grassmann::generator(big, n + i)).unwrap();
            prod = prod.mul(&shifted).unwrap();
        }
        doubled = doubled.add(&prod).unwrap();
    }
    let mut zeta_cov = Covariance::zero(n);
    for &(i, j, v) in cov.pairs() {
        zeta_cov.set(i, j, v);
    }
    let psi_mask = (1u64 << n) - 1;
    let mut out = Grassmann::zero(n);
    for (mask, v) in doubled.terms() {
        let p = mask & psi_mask;
        let z = mask >> n;
        // mask order is ψ-part then ζ-part already (ψ indices < ζ indices)
        let val = pairing_oracle(&bits(z), &zeta_cov);
        out.add_term(p, v * val);
    }
    out
}

#[test]
fn convolution_matches_substitution() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let n = 6;
        let cov = random_cov(n, 0.8, &mut rng);
        let w = random_even(n, 6, 1.0, &mut rng);
        let got = w.convolve(&cov).unwrap();
        assert!(got.max_diff(&substitution_oracle(&w, &cov)) < 1e-12);
    }
}

#[test]
fn two_term_convolution() {
    let mut cov = Covariance::zero(2);
    cov.set(0, 1, c(0.3));
    let w = Grassmann::monomial(2, &[0, 1], c(1.0));
    let got = w.convolve(&cov).unwrap();
    assert_eq!(got, w.add(&Grassmann::scalar(2, c(0.3))).unwrap());
    let wick = w.wick_order(&cov).unwrap();
    assert_eq!(wick, w.add(&Grassmann::scalar(2, c(-0.3))).unwrap());
}

#[test]
fn log_fixture_by_hand() {
    // log(1 + aψ1ψ2 + bψ3ψ4) = aψ1ψ2 + bψ3ψ4 − ab ψ1ψ2ψ3ψ4
    let (a, b) = (c(0.5), Complex64::new(0.0, 2.0));
    let x = Grassmann::from_terms(4, [(0, c(1.0)), (0b0011, a), (0b1100, b)]);
    let expect = Grassmann::from_terms(4, [(0b0011, a), (0b1100, b), (0b1111, -a * b)]);
    assert!(x.log().unwrap().max_diff(&expect) < 1e-15);
    assert!(Grassmann::one(4).log().unwrap().is_empty());
    assert!(matches!(Grassmann::zero(4).log(), Err(GrassmannError::ZeroScalar)));
}

#[test]
fn quadratic_closed_form() {
    let (lambda, c12) = (0.37, 0.61);
    let mut cov = Covariance::zero(2);
    cov.set(0, 1, c(c12));
    let w = Grassmann::monomial(2, &[0, 1], c(lambda));
    let l = w.exp().convolve(&cov).unwrap().log().unwrap();
    assert!((l.scalar_part() - c((1.0 + lambda * c12).ln())).norm() < 1e-15);
    let norm = omega_tilde(&w, &cov, &Source::none(), ZNorm::Zero).unwrap();
    assert_eq!(norm.scalar_part(), Complex64::default());
}

#[test]
fn zero_input_gives_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cov = random_cov(4, 1.0, &mut rng);
    assert!(omega_tilde(&Grassmann::zero(4), &cov, &Source::none(), ZNorm::Zero).unwrap().is_empty());
}

fn source_gens() -> GeneratorSet {
    let psi = |site, a| GenLabel { field: Field::Psi, site, spin: 0, a, sector: None };
    let phi = |site, a| GenLabel { field: Field::Phi, site, spin: 0, a, sector: None };
    GeneratorSet::new(vec![psi(0, 0), psi(0, 1), psi(1, 0), psi(1, 1), psi(2, 0), psi(2, 1), phi(0, 0), phi(0, 1)], 16)
        .unwrap()
}

#[test]
fn linear_source_gaussian() {
    // ∫ e^{Σ η_a ζ_a} dμ_C = exp(−½ Σ η_a C_ab η_b), η_a the φ partner of ζ_a
    let gens = source_gens();
    let src = gens.source();
    assert_eq!(src.pairs, vec![(6, 1), (7, 0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cov = Covariance::zero(8);
    for i in 0..6 {
        for j in i + 1..6 {
            cov.set(i, j, rc(&mut rng));
        }
    }
    let got = omega_tilde(&Grassmann::zero(8), &cov, &src, ZNorm::Zero).unwrap();
    let mut expect = Grassmann::zero(8);
    for &(pa, za) in &src.pairs {
        for &(pb, zb) in &src.pairs {
            let term = Grassmann::monomial(8, &[pa, pb], cov.get(za, zb) * -0.5);
            expect = expect.add(&term).unwrap();
        }
    }
    assert!(got.max_diff(&expect) < 1e-14);
    // Z(φ) normalization removes the pure-φ part entirely
    assert!(omega_tilde(&Grassmann::zero(8), &cov, &src, ZNorm::Phi).unwrap().is_empty());
}

#[test]
fn semigroup_with_source() {
    let gens = source_gens();
    let src = gens.source();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10 {
        let mut c1 = Covariance::zero(8);
        let mut c2 = Covariance::zero(8);
        for i in 0..6 {
            for j in i + 1..6 {
                c1.set(i, j, rc(&mut rng) * 0.5);
                c2.set(i, j, rc(&mut rng) * 0.5);
            }
        }
        let w = random_even(8, 4, 0.3, &mut rng).filter(|m| m & 0b1100_0000 == 0);
        for norm in [ZNorm::Zero, ZNorm::Phi] {
            let once = omega_tilde(&w, &c1.add(&c2), &src, norm).unwrap();
            let twice = omega_tilde(&omega_tilde(&w, &c1, &src, norm).unwrap(), &c2, &src, norm).unwrap();
            assert!(once.max_diff(&twice) < 1e-10, "{norm:?}");
        }
    }
}

#[test]
fn extract_phi_pair() {
    let gens = source_gens();
    let torus = Torus { n0: 1, n: 4, h0: 1.0, h: 1.0, spins: 1 };
    let w = Grassmann::monomial(8, &[6, 7], c(1.0));
    let k = extract_wmn(&w, &gens, 2, 0, torus, 2);
    let l6 = gens.labels[6].leg();
    let l7 = gens.labels[7].leg();
    assert_eq!(k.get(&[l6, l7]), c(0.5));
    assert_eq!(k.get(&[l7, l6]), c(-0.5));
    assert!(extract_wmn(&w, &gens, 0, 2, torus, 2).is_empty());
    assert_eq!(rebuild(&[k], &gens), w);
}

#[test]
fn extract_rebuild_round_trip() {
    let gens = source_gens();
    let torus = Torus { n0: 1, n: 4, h0: 1.0, h: 1.0, spins: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let w = random_element(8, &mut rng);
    let blocks: Vec<_> = degrees(&w, &gens).into_iter().map(|(m, n)| extract_wmn(&w, &gens, m, n, torus, 2)).collect();
    assert!(rebuild(&blocks, &gens).max_diff(&w) < 1e-13);
}

#[test]
fn nj_single_block_by_hand() {
    let gens = source_gens();
    let torus = Torus { n0: 1, n: 4, h0: 1.0, h: 1.0, spins: 1 };
    let cfg = KernelNormConfig::default();
    let sw = ScaleWeights { m: 4.0, j: 2, l_j: 4f64.powf(-1.2) };
    // w = 0.8 ψ(0,0)ψ(0,1): kernel entries ±0.4, one entry per pinned label, no sectors
    let w = Grassmann::monomial(8, &[0, 1], c(0.8));
    let shape = Shape::new(0, 0);
    let x = NormSeries::constant(shape, NormCoeff::ZERO);
    let got = nj_norm(&w, &gens, torus, sw, 10.0, &x, &cfg).unwrap().constant_term().to_f64();
    let mj = 16.0;
    let ej = NormSeries::e_j(2, 4.0, &x).unwrap().constant_term().to_f64();
    let expect = mj * mj / sw.l_j * ej * 100.0 * (sw.l_j * cfg.b_const / mj) * cfg.rho(cfg.lambda0, 0, 2) * 0.4;
    assert!((got - expect).abs() < 1e-9 * expect, "{got} vs {expect}");
    assert_eq!(nj_norm(&Grassmann::zero(8), &gens, torus, sw, 10.0, &x, &cfg).unwrap().constant_term().to_f64(), 0.0);
}

#[test]
fn phi_part_bounded_by_weighted_norm() {
    let gens = source_gens();
    let torus = Torus { n0: 1, n: 4, h0: 1.0, h: 1.0, spins: 1 };
    let cfg = KernelNormConfig::default();
    let sw = ScaleWeights { m: 4.0, j: 3, l_j: 4f64.powf(-1.8) };
    let x = NormSeries::constant(Shape::new(0, 0), NormCoeff::ZERO);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let w = random_even(8, 4, 1.0, &mut rng);
        let phi_only = w.set_zero(gens.mask(Field::Psi));
        let lhs = n_norm(&phi_only, &gens, torus, &cfg);
        let rhs = nj_norm(&w, &gens, torus, sw, 10.0, &x, &cfg).unwrap().constant_term().to_f64()
            / (sw.l_j * sw.mj()).powf(0.25);
        assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }
}

#[test]
fn json_round_trip() {
    let gens = source_gens();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let w = random_element(8, &mut rng);
    let doc = GrassmannDoc::new(&gens, &w);
    let back: GrassmannDoc = serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
    assert_eq!(back.element(), w);
}

#[test]
fn budget_is_enforced() {
    let labels: Vec<GenLabel> =
        (0..17).map(|i| GenLabel { field: Field::Psi, site: i, spin: 0, a: 0, sector: None }).collect();
    assert!(matches!(GeneratorSet::new(labels, DEFAULT_CAP), Err(GrassmannError::Budget { count: 17, cap: 16 })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_is_associative(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, d) = (random_element(5, &mut rng), random_element(5, &mut rng), random_element(5, &mut rng));
        let l = a.mul(&b).unwrap().mul(&d).unwrap();
        let r = a.mul(&b.mul(&d).unwrap()).unwrap();
        prop_assert!(l.max_diff(&r) < 1e-12);
    }

    #[test]
    fn odd_generators_anticommute(i in 0usize..5, j in 0usize..5) {
        let gi = Grassmann::generator(5, i);
        let gj = Grassmann::generator(5, j);
        let s = gi.mul(&gj).unwrap().add(&gj.mul(&gi).unwrap()).unwrap();
        prop_assert!(s.is_empty());
    }

    #[test]
    fn wick_order_inverts_convolution(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov = random_cov(6, 1.0, &mut rng);
        let w = random_even(6, 6, 1.0, &mut rng);
        let back = w.convolve(&cov).unwrap().wick_order(&cov).unwrap();
        prop_assert!(back.max_diff(&w) < 1e-12);
    }

    #[test]
    fn log_inverts_exp(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_even(6, 6, 1.0, &mut rng);
        prop_assert!(w.exp().log().unwrap().max_diff(&w) < 1e-11);
    }

    #[test]
    fn semigroup_without_source(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c1 = random_cov(8, 0.5, &mut rng);
        let c2 = random_cov(8, 0.5, &mut rng);
        let w = random_even(8, 4, 0.3, &mut rng);
        let once = omega_tilde(&w, &c1.add(&c2), &Source::none(), ZNorm::Zero).unwrap();
        let twice = omega_tilde(&omega_tilde(&w, &c1, &Source::none(), ZNorm::Zero).unwrap(), &c2, &Source::none(), ZNorm::Zero).unwrap();
        prop_assert!(once.max_diff(&twice) < 1e-10);
    }
}
