use fermi_rg::norm_domain::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SHAPE: Shape = Shape { r: 2, r0: 2 };

/// Dyadic coefficients (`k/8`, `k < 64`) so sums and products of a few series are exact.
fn raw_dyadic(rng: &mut ChaCha8Rng, p_inf: f64) -> NormSeries {
    NormSeries::from_fn(SHAPE, |_| {
        if rng.gen_bool(p_inf) {
            NormCoeff::Infinity
        } else {
            NormCoeff::Finite(f64::from(rng.gen_range(0u32..64)) / 8.0)
        }
    })
}

/// Marks every `δ ≥ β` infinite whenever `X_β` is.
fn upward_closure(x: &NormSeries) -> NormSeries {
    let inf: Vec<MultiIndex> = x.iter().filter(|(_, c)| c.is_infinite()).map(|(d, _)| d).collect();
    NormSeries::from_fn(SHAPE, |d| if inf.iter().any(|&b| d.checked_sub(b).is_some()) { NormCoeff::Infinity } else { x.get(d) })
}

/// With `0·∞ = ∞` the scalar `1` is a unit exactly on series whose infinite
/// coefficients are closed upward, so the axioms are drawn from that class.
fn dyadic(rng: &mut ChaCha8Rng, p_inf: f64) -> NormSeries {
    upward_closure(&raw_dyadic(rng, p_inf))
}

fn small(rng: &mut ChaCha8Rng, x0_max: f64) -> NormSeries {
    let mut x = NormSeries::from_fn(SHAPE, |_| NormCoeff::Finite(rng.gen_range(0.0..1.0)));
    x.set(MultiIndex([0, 0, 0]), NormCoeff::Finite(rng.gen_range(0.0..x0_max)));
    x
}

/// Coefficients of `(a − X)^{-1}` by back substitution: `(a − X0) Y_d = δ_{d,0} + Σ_{0<b≤d} X_b Y_{d−b}`.
fn inverse_oracle(a: f64, x: &NormSeries) -> Vec<(MultiIndex, f64)> {
    let x0 = x.constant_term().value().unwrap();
    let mut y: Vec<(MultiIndex, f64)> = Vec::new();
    let mut idx = SHAPE.indices();
    idx.sort_by_key(|d| d.total());
    for d in idx {
        let mut acc = if d.total() == 0 { 1.0 } else { 0.0 };
        for &(g, yg) in &y {
            if let Some(b) = d.checked_sub(g) {
                if b.total() > 0 {
                    acc += x.get(b).value().unwrap() * yg;
                }
            }
        }
        y.push((d, acc / (a - x0)));
    }
    y
}

#[test]
fn shape_enumerates_the_tracked_region() {
    let idx = SHAPE.indices();
    assert_eq!(idx.len(), 18);
    assert!(idx.iter().all(|d| d.temporal() <= 2 && d.spatial() <= 2));
    let x = NormSeries::one(SHAPE);
    assert_eq!(x.get(MultiIndex([3, 0, 0])), NormCoeff::Infinity);
}

#[test]
fn zero_does_not_annihilate_infinity() {
    let mut x = NormSeries::zero(SHAPE);
    x.set(MultiIndex([0, 1, 0]), NormCoeff::Infinity);
    let p = NormSeries::zero(SHAPE).mul(&x).unwrap();
    assert_eq!(p.get(MultiIndex([0, 1, 0])), NormCoeff::Infinity);
    assert_eq!(p.get(MultiIndex([1, 1, 0])), NormCoeff::Infinity);
    assert_eq!(p.get(MultiIndex([0, 0, 0])), NormCoeff::ZERO);
}

#[test]
fn product_by_hand() {
    // (1 + t1)(2 + t0) = 2 + t0 + 2 t1 + t0 t1
    let a = NormSeries::from_fn(SHAPE, |d| NormCoeff::Finite(if d.0 == [0, 0, 0] || d.0 == [0, 1, 0] { 1.0 } else { 0.0 }));
    let b = NormSeries::from_fn(SHAPE, |d| {
        NormCoeff::Finite(match d.0 {
            [0, 0, 0] => 2.0,
            [1, 0, 0] => 1.0,
            _ => 0.0,
        })
    });
    let p = a.mul(&b).unwrap();
    for (d, c) in p.iter() {
        let expect = match d.0 {
            [0, 0, 0] => 2.0,
            [1, 0, 0] => 1.0,
            [0, 1, 0] => 2.0,
            [1, 1, 0] => 1.0,
            _ => 0.0,
        };
        assert_eq!(c, NormCoeff::Finite(expect), "{d:?}");
    }
}

#[test]
fn inverse_outside_domain_is_an_error() {
    let x = NormSeries::constant(SHAPE, NormCoeff::Finite(2.0));
    assert!(matches!(NormSeries::geom_inverse(1.0, &x), Err(NormError::InverseDomain { .. })));
    assert!(matches!(NormSeries::e_j(2, 4.0, &x), Err(NormError::EjDomain { .. })));
}

#[test]
fn shape_mismatch_is_an_error() {
    let a = NormSeries::one(SHAPE);
    let b = NormSeries::one(Shape::new(2, 1));
    assert!(matches!(a.add(&b), Err(NormError::ShapeMismatch(..))));
}

#[test]
fn json_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = dyadic(&mut rng, 0.2);
    let back: NormSeries = serde_json::from_str(&serde_json::to_string(&x).unwrap()).unwrap();
    assert_eq!(back, x);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn semiring_axioms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y, z) = (dyadic(&mut rng, 0.05), dyadic(&mut rng, 0.05), dyadic(&mut rng, 0.05));
        let zero = NormSeries::zero(SHAPE);
        let one = NormSeries::one(SHAPE);
        prop_assert_eq!(x.add(&y).unwrap(), y.add(&x).unwrap());
        prop_assert_eq!(x.add(&y).unwrap().add(&z).unwrap(), x.add(&y.add(&z).unwrap()).unwrap());
        prop_assert_eq!(x.add(&zero).unwrap(), x.clone());
        prop_assert_eq!(x.mul(&y).unwrap(), y.mul(&x).unwrap());
        prop_assert_eq!(x.mul(&y).unwrap().mul(&z).unwrap(), x.mul(&y.mul(&z).unwrap()).unwrap());
        prop_assert_eq!(x.mul(&one).unwrap(), x.clone());
        prop_assert_eq!(x.mul(&y.add(&z).unwrap()).unwrap(), x.mul(&y).unwrap().add(&x.mul(&z).unwrap()).unwrap());
    }

    #[test]
    fn unit_closes_infinities_upward(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = raw_dyadic(&mut rng, 0.1);
        prop_assert_eq!(x.mul(&NormSeries::one(SHAPE)).unwrap(), upward_closure(&x));
    }

    #[test]
    fn order_is_compatible(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, d, z) = (dyadic(&mut rng, 0.05), dyadic(&mut rng, 0.05), dyadic(&mut rng, 0.05));
        let y = x.add(&d).unwrap();
        prop_assert!(x.leq(&y).unwrap());
        prop_assert!(x.add(&z).unwrap().leq(&y.add(&z).unwrap()).unwrap());
        prop_assert!(x.mul(&z).unwrap().leq(&y.mul(&z).unwrap()).unwrap());
    }

    #[test]
    fn geometric_inverse_inverts(seed in any::<u64>(), a in 0.5f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = small(&mut rng, 0.9 * a);
        let y = NormSeries::geom_inverse(a, &x).unwrap();
        // (a − X) Y = 1, with the subtraction done on tracked coefficients
        let ay = y.scale(a);
        let xy = x.mul(&y).unwrap();
        for d in SHAPE.indices() {
            let (l, r) = (ay.get(d).value().unwrap(), xy.get(d).value().unwrap());
            let expect = if d.total() == 0 { 1.0 } else { 0.0 };
            prop_assert!((l - r - expect).abs() < 1e-12 * l.max(1.0), "{:?}: {} - {}", d, l, r);
        }
        for (d, v) in inverse_oracle(a, &x) {
            let got = y.get(d).value().unwrap();
            prop_assert!((got - v).abs() < 1e-12 * v.max(1.0));
        }
    }

    #[test]
    fn e_j_is_monotone(seed in any::<u64>(), j in 1i32..5) {
        let m: f64 = 4.0;
        let bound = m.powi(-(j + 1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = small(&mut rng, 0.45 * bound).scale(0.01);
        let d = small(&mut rng, 0.45 * bound).scale(0.01);
        let y = x.add(&d).unwrap();
        let (ex, ey) = (NormSeries::e_j(j, m, &x).unwrap(), NormSeries::e_j(j, m, &y).unwrap());
        prop_assert!(ex.leq(&ey).unwrap());
        // and monotone in the scale
        prop_assert!(ex.leq(&NormSeries::e_j(j + 1, m, &x).unwrap()).unwrap());
    }
}
