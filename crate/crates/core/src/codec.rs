//! Fixed-point coefficient packing: `m(X) = Σ ⌊x_j Δ⌋ X^j`.

use std::sync::Arc;

use num_traits::ToPrimitive;
use thiserror::Error;

use crate::ring::{RingContext, RingElement};

/// Minimum scaling exponent.
pub const MIN_DELTA_BITS: u32 = 20;
/// Bits of the modulus kept free above `Δ`.
pub const GUARD_BITS: u32 = 20;
/// Encoded magnitudes must stay below `Q / (ENCODE_MARGIN * max_cohort)`.
pub const ENCODE_MARGIN: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("scaling factor 2^{delta_bits} outside [2^{MIN_DELTA_BITS}, 2^{max_bits}]")]
    DeltaOutOfRange { delta_bits: u32, max_bits: u32 },
    #[error("dimension {d} exceeds ring capacity {capacity}")]
    OverCapacity { d: usize, capacity: usize },
    #[error("declared cohort size must be at least 1")]
    EmptyCohort,
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("value {value} at index {index} overflows the encoding range (|x| < {limit})")]
    Overflow { index: usize, value: f64, limit: f64 },
}

/// Scaling factor `Δ = 2^delta_bits`, packed dimension `d`, and the largest
/// cohort whose sum must still fit under `Q/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ScaleParams {
    delta_bits: u32,
    d: usize,
    max_cohort: usize,
}

impl ScaleParams {
    pub fn new(ctx: &RingContext, delta_bits: u32, d: usize, max_cohort: usize) -> Result<Self, CodecError> {
        let max_bits = (ctx.log2_modulus().floor() as u32).saturating_sub(GUARD_BITS);
        if delta_bits < MIN_DELTA_BITS || delta_bits > max_bits {
            return Err(CodecError::DeltaOutOfRange { delta_bits, max_bits });
        }
        if d > ctx.capacity() {
            return Err(CodecError::OverCapacity { d, capacity: ctx.capacity() });
        }
        if max_cohort == 0 {
            return Err(CodecError::EmptyCohort);
        }
        Ok(Self { delta_bits, d, max_cohort })
    }

    pub fn delta_bits(&self) -> u32 {
        self.delta_bits
    }

    pub fn delta(&self) -> f64 {
        2f64.powi(self.delta_bits as i32)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn max_cohort(&self) -> usize {
        self.max_cohort
    }

    /// Largest `|x_j|` that `encode` accepts.
    pub fn value_limit(&self, ctx: &RingContext) -> f64 {
        let q = 2f64.powf(ctx.log2_modulus());
        q / (ENCODE_MARGIN * self.max_cohort as f64) / self.delta()
    }
}

/// Packs `x` into the first `d` coefficients, flooring toward `-∞`.
pub fn encode(x: &[f64], sp: &ScaleParams, ctx: &Arc<RingContext>) -> Result<RingElement, CodecError> {
    if x.len() != sp.d {
        return Err(CodecError::DimensionMismatch { expected: sp.d, got: x.len() });
    }
    let limit = sp.value_limit(ctx);
    let delta = sp.delta();
    let coeffs = x
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if !value.is_finite() || value.abs() >= limit {
                return Err(CodecError::Overflow { index, value, limit });
            }
            // power-of-two Δ: the product is exact, so the floor is too
            (value * delta).floor().to_i128().ok_or(CodecError::Overflow { index, value, limit })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RingElement::from_i128(ctx, &coeffs).expect("d <= n checked by ScaleParams"))
}

/// Centered lift of the first `d` coefficients divided by `Δ`.
pub fn decode(m: &RingElement, sp: &ScaleParams) -> Vec<f64> {
    let delta = sp.delta();
    (0..sp.d.min(m.context().n()))
        .map(|j| m.coeff_signed(j).to_f64().unwrap_or(f64::NAN) / delta)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn ctx() -> Arc<RingContext> {
        RingContext::new(64, 70).unwrap()
    }

    #[test]
    fn zero_vector_encodes_to_zero() {
        let ctx = ctx();
        let sp = ScaleParams::new(&ctx, 40, 16, 10).unwrap();
        assert!(encode(&[0.0; 16], &sp, &ctx).unwrap().is_zero());
        assert_eq!(decode(&RingElement::zero(&ctx), &sp), vec![0.0; 16]);
    }

    #[test]
    fn small_delta_hand_example() {
        // Δ below the production floor, so build params by hand
        let ctx = ctx();
        let sp = ScaleParams { delta_bits: 10, d: 2, max_cohort: 1 };
        let m = encode(&[1.5, -0.25], &sp, &ctx).unwrap();
        assert_eq!(m.coeff_signed(0), BigInt::from(1536));
        assert_eq!(m.coeff_signed(1), BigInt::from(-256));
        assert_eq!(decode(&m, &sp), vec![1.5, -0.25]);
        // floor goes toward -inf
        let m = encode(&[-0.0001, 0.0001], &sp, &ctx).unwrap();
        assert_eq!(m.coeff_signed(0), BigInt::from(-1));
        assert_eq!(m.coeff_signed(1), BigInt::from(0));
    }

    #[test]
    fn param_validation() {
        let ctx = ctx();
        assert!(matches!(ScaleParams::new(&ctx, 19, 8, 1), Err(CodecError::DeltaOutOfRange { .. })));
        assert!(matches!(ScaleParams::new(&ctx, ctx.log2_modulus() as u32 - GUARD_BITS + 1, 8, 1), Err(CodecError::DeltaOutOfRange { .. })));
        assert!(matches!(ScaleParams::new(&ctx, 40, 65, 1), Err(CodecError::OverCapacity { .. })));
        assert!(ScaleParams::new(&ctx, 40, 64, 1).is_ok());
    }

    #[test]
    fn overflow_names_the_index() {
        let ctx = ctx();
        let sp = ScaleParams::new(&ctx, 40, 3, 1000).unwrap();
        let big = sp.value_limit(&ctx) * 1.01;
        let err = encode(&[0.0, 1.0, -big], &sp, &ctx).unwrap_err();
        assert!(matches!(err, CodecError::Overflow { index: 2, .. }));
        assert!(matches!(encode(&[0.0, f64::NAN, 0.0], &sp, &ctx), Err(CodecError::Overflow { index: 1, .. })));
        assert!(matches!(encode(&[0.0], &sp, &ctx), Err(CodecError::DimensionMismatch { .. })));
    }

    proptest! {
        #[test]
        fn roundtrip_within_one_ulp_of_delta(x in prop::collection::vec(-1.0f64..1.0, 32)) {
            let ctx = ctx();
            let sp = ScaleParams::new(&ctx, 40, 32, 100).unwrap();
            let back = decode(&encode(&x, &sp, &ctx).unwrap(), &sp);
            for (a, b) in x.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1.0 / sp.delta());
            }
        }

        #[test]
        fn encoding_is_linear_up_to_one_unit(
            x in prop::collection::vec(-1.0f64..1.0, 32),
            y in prop::collection::vec(-1.0f64..1.0, 32),
        ) {
            let ctx = ctx();
            let sp = ScaleParams::new(&ctx, 40, 32, 100).unwrap();
            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let lhs = encode(&x, &sp, &ctx).unwrap().add(&encode(&y, &sp, &ctx).unwrap()).unwrap();
            let rhs = encode(&sum, &sp, &ctx).unwrap();
            let diff = lhs.sub(&rhs).unwrap();
            for j in 0..32 {
                let c = diff.coeff_signed(j);
                prop_assert!(c == BigInt::from(0) || c == BigInt::from(-1));
            }
            let dec = decode(&lhs, &sp);
            for (s, v) in sum.iter().zip(&dec) {
                prop_assert!((s - v).abs() <= 2.0 / sp.delta());
            }
        }
    }

    #[test]
    fn decode_is_exact_on_integer_multiples() {
        let ctx = ctx();
        let sp = ScaleParams::new(&ctx, 40, 4, 1).unwrap();
        let coeffs = [3i128 << 40, -(7i128 << 40), 1 << 39, 0];
        let m = RingElement::from_i128(&ctx, &coeffs).unwrap();
        assert_eq!(decode(&m, &sp), vec![3.0, -7.0, 0.5, 0.0]);
    }
}
