use std::sync::Arc;

use crate::codec::{ScaleParams, GUARD_BITS};
use crate::mkckks::{noise_budget_check, BudgetInputs, NoiseBudget};
use crate::ring::{RingContext, MAX_DEGREE};
use crate::sampling::NoiseSpec;

use super::ProtocolError;

/// Largest total modulus size (bits) per ring degree at 128-bit security,
/// from the homomorphic encryption security standard tables. Degrees past
/// 32768 reuse the 32768 entry, which is a lower bound.
const SECURITY_128: &[(usize, u32)] = &[
    (1024, 27),
    (2048, 54),
    (4096, 109),
    (8192, 218),
    (16384, 438),
    (32768, 881),
    (65536, 881),
    (131072, 881),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SecurityLevel {
    /// 128-bit classical security per the standard tables.
    Bits128,
    /// Hand-built ring with no security claim (tests, toy experiments).
    Unchecked,
}

impl SecurityLevel {
    pub fn code(self) -> u16 {
        match self {
            SecurityLevel::Bits128 => 128,
            SecurityLevel::Unchecked => 0,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        match code {
            128 => Some(SecurityLevel::Bits128),
            0 => Some(SecurityLevel::Unchecked),
            _ => None,
        }
    }

    /// Largest modulus (bits) admissible at degree `n`.
    pub fn max_modulus_bits(self, n: usize) -> Option<u32> {
        match self {
            SecurityLevel::Bits128 => SECURITY_128.iter().find(|&&(deg, _)| deg == n).map(|&(_, b)| b),
            SecurityLevel::Unchecked => Some(u32::MAX),
        }
    }
}

/// What the caller asks for; [`ParamSet::select`] derives the ring from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRequest {
    pub d: usize,
    pub max_cohort: usize,
    pub delta_bits: u32,
    pub noise: NoiseSpec,
    /// Largest `|x_j|` a client may submit.
    pub value_bound: f64,
}

impl ParamRequest {
    pub fn new(d: usize) -> Self {
        Self { d, ..Self::default() }
    }
}

impl Default for ParamRequest {
    fn default() -> Self {
        Self { d: 1, max_cohort: 1000, delta_bits: 40, noise: NoiseSpec::default(), value_bound: 1.0 }
    }
}

/// Everything the server publishes about the cryptosystem.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    ring: Arc<RingContext>,
    scale: ScaleParams,
    noise: NoiseSpec,
    security: SecurityLevel,
    value_bound: f64,
}

/// Modulus bits needed so `N·Δ·max|x|` sits `ENCODE_MARGIN` below `Q` with
/// `GUARD_BITS` to spare above `Δ`.
pub fn required_modulus_bits(delta_bits: u32, max_cohort: usize, value_bound: f64) -> u32 {
    let cohort_bits = (max_cohort.max(1) as f64).log2().ceil() as u32;
    let value_bits = value_bound.max(1.0).log2().ceil() as u32;
    delta_bits + cohort_bits + value_bits + 2 + GUARD_BITS
}

impl ParamSet {
    /// Picks the smallest power-of-two `n` with `n >= d` whose 128-bit
    /// modulus allowance covers the required modulus size.
    pub fn select(req: ParamRequest) -> Result<Self, ProtocolError> {
        if req.d == 0 {
            return Err(ProtocolError::InvalidParams("dimension must be positive".into()));
        }
        let bits = required_modulus_bits(req.delta_bits, req.max_cohort, req.value_bound);
        let mut n = req.d.next_power_of_two().max(SECURITY_128[0].0);
        loop {
            if n > MAX_DEGREE {
                return Err(ProtocolError::InvalidParams(format!(
                    "no ring degree up to {MAX_DEGREE} fits d = {} with {bits} modulus bits",
                    req.d
                )));
            }
            let allowed = SecurityLevel::Bits128.max_modulus_bits(n).unwrap_or(0);
            if bits <= allowed {
                let ring = RingContext::new(n, bits)?;
                if ring.log2_modulus() <= allowed as f64 {
                    return Self::from_parts(ring, req, SecurityLevel::Bits128);
                }
            }
            n *= 2;
        }
    }

    /// Uses an explicit ring, checking security only for `Bits128`.
    pub fn from_parts(
        ring: Arc<RingContext>,
        req: ParamRequest,
        security: SecurityLevel,
    ) -> Result<Self, ProtocolError> {
        if !(req.value_bound.is_finite() && req.value_bound > 0.0) {
            return Err(ProtocolError::InvalidParams("value bound must be positive".into()));
        }
        if let Some(allowed) = security.max_modulus_bits(ring.n()) {
            if ring.log2_modulus() > allowed as f64 {
                return Err(ProtocolError::InvalidParams(format!(
                    "{:.1}-bit modulus exceeds the {allowed}-bit allowance at n = {}",
                    ring.log2_modulus(),
                    ring.n()
                )));
            }
        } else {
            return Err(ProtocolError::InvalidParams(format!("n = {} not in the security table", ring.n())));
        }
        let scale = ScaleParams::new(&ring, req.delta_bits, req.d, req.max_cohort)?;
        if scale.value_limit(&ring) < req.value_bound {
            return Err(ProtocolError::InvalidParams(format!(
                "values up to {} overflow the encoding limit {}",
                req.value_bound,
                scale.value_limit(&ring)
            )));
        }
        let params = Self { ring, scale, noise: req.noise, security, value_bound: req.value_bound };
        let budget = params.noise_budget(req.max_cohort);
        if !budget.passes {
            return Err(ProtocolError::NoiseBudget(budget));
        }
        Ok(params)
    }

    pub fn ring(&self) -> &Arc<RingContext> {
        &self.ring
    }

    pub fn scale(&self) -> &ScaleParams {
        &self.scale
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn security(&self) -> SecurityLevel {
        self.security
    }

    pub fn value_bound(&self) -> f64 {
        self.value_bound
    }

    pub fn n(&self) -> usize {
        self.ring.n()
    }

    pub fn d(&self) -> usize {
        self.scale.d()
    }

    pub fn delta(&self) -> f64 {
        self.scale.delta()
    }

    pub fn max_cohort(&self) -> usize {
        self.scale.max_cohort()
    }

    pub fn request(&self) -> ParamRequest {
        ParamRequest {
            d: self.d(),
            max_cohort: self.max_cohort(),
            delta_bits: self.scale.delta_bits(),
            noise: self.noise,
            value_bound: self.value_bound,
        }
    }

    pub fn noise_budget(&self, clients: usize) -> NoiseBudget {
        noise_budget_check(
            &BudgetInputs {
                n: self.n(),
                log2_modulus: self.ring.log2_modulus(),
                delta_bits: self.scale.delta_bits(),
                noise: self.noise,
                value_bound: self.value_bound,
            },
            clients,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_steps_with_dimension() {
        let mut last = 0;
        for d in [1, 8, 1000, 4096, 4097, 8192, 8193, 20000, 65536] {
            let p = ParamSet::select(ParamRequest::new(d)).unwrap();
            assert!(p.n() >= d && p.n() >= last);
            assert!(p.ring().log2_modulus() <= 109.0 || p.n() > 4096);
            last = p.n();
        }
        assert_eq!(ParamSet::select(ParamRequest::new(8)).unwrap().n(), 4096);
        assert_eq!(ParamSet::select(ParamRequest::new(4097)).unwrap().n(), 8192);
    }

    #[test]
    fn defaults_use_two_primes() {
        let p = ParamSet::select(ParamRequest::new(8192)).unwrap();
        assert_eq!(p.ring().chain_len(), 2);
        assert!(p.noise_budget(p.max_cohort()).passes);
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(ParamSet::select(ParamRequest::new(0)).is_err());
        assert!(ParamSet::select(ParamRequest::new(MAX_DEGREE + 1)).is_err());
        let insecure = RingContext::new(1024, 80).unwrap();
        assert!(ParamSet::from_parts(insecure.clone(), ParamRequest::new(8), SecurityLevel::Bits128).is_err());
        assert!(ParamSet::from_parts(insecure, ParamRequest::new(8), SecurityLevel::Unchecked).is_ok());
    }
}
