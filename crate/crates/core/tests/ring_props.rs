use std::sync::Arc;

use hybagg::ring::{RingContext, RingElement};
use hybagg::sampling::{sample_uniform, Seed};
use proptest::prelude::*;

mod common;
use common::schoolbook;

fn element(ctx: &Arc<RingContext>, seed: u64, tag: &[u8]) -> RingElement {
    sample_uniform(ctx, &Seed::from_u64(seed), tag)
}

fn assert_matches_schoolbook(a: &RingElement, b: &RingElement) {
    let ctx = a.context();
    let prod = a.mul(b).unwrap();
    for (k, m) in ctx.moduli().iter().enumerate() {
        assert_eq!(prod.residues(k), schoolbook(a.residues(k), b.residues(k), m.value()), "modulus {k}");
    }
}

#[test]
fn oracle_hand_case() {
    // (1 + X)(1 + X^3) = 1 + X + X^3 + X^4 = X + X^3 (mod X^4 + 1)
    assert_eq!(schoolbook(&[1, 1, 0, 0], &[1, 0, 0, 1], 17), vec![0, 1, 0, 1]);
    assert_eq!(schoolbook(&[0, 0, 0, 1], &[0, 1, 0, 0], 17), vec![16, 0, 0, 0]);
}

#[test]
fn ntt_matches_schoolbook_for_tiny_rings() {
    for n in [2, 4, 8, 16] {
        let ctx = RingContext::new(n, 110).unwrap();
        for t in 0..200u64 {
            assert_matches_schoolbook(&element(&ctx, t, b"a"), &element(&ctx, t, b"b"));
        }
    }
}

#[test]
fn ntt_matches_schoolbook_at_moderate_degree() {
    let ctx = RingContext::new(256, 72).unwrap();
    for t in 0..5u64 {
        assert_matches_schoolbook(&element(&ctx, t, b"a"), &element(&ctx, t, b"b"));
    }
}

fn ring_laws(ctx: &Arc<RingContext>, seed: u64) -> Result<(), TestCaseError> {
    let a = element(ctx, seed, b"a");
    let b = element(ctx, seed, b"b");
    let c = element(ctx, seed, b"c");
    prop_assert_eq!(a.add(&b)?.add(&c)?, a.add(&b.add(&c)?)?);
    prop_assert_eq!(a.add(&b)?, b.add(&a)?);
    prop_assert_eq!(a.mul(&b)?, b.mul(&a)?);
    prop_assert_eq!(a.mul(&b.add(&c)?)?, a.mul(&b)?.add(&a.mul(&c)?)?);
    prop_assert!(a.sub(&a)?.is_zero());
    prop_assert!(a.add(&a.neg())?.is_zero());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ring_laws_degree_8(seed in any::<u64>()) {
        let ctx = RingContext::new(8, 110).unwrap();
        ring_laws(&ctx, seed)?;
    }

    #[test]
    fn ring_laws_degree_1024(seed in any::<u64>()) {
        let ctx = RingContext::new(1024, 110).unwrap();
        ring_laws(&ctx, seed)?;
    }

    #[test]
    fn mul_associates(seed in any::<u64>()) {
        let ctx = RingContext::new(8, 110).unwrap();
        let (a, b, c) = (element(&ctx, seed, b"a"), element(&ctx, seed, b"b"), element(&ctx, seed, b"c"));
        prop_assert_eq!(a.mul(&b)?.mul(&c)?, a.mul(&b.mul(&c)?)?);
    }

    #[test]
    fn signed_lift_roundtrips(coeffs in prop::collection::vec(any::<i64>(), 16)) {
        let ctx = RingContext::new(16, 110).unwrap();
        let e = RingElement::from_i64(&ctx, &coeffs)?;
        let back: Vec<i64> = e.to_signed().iter().map(|c| i64::try_from(c).unwrap()).collect();
        prop_assert_eq!(back, coeffs);
    }
}
