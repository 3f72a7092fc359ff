//! Additive multi-key CKKS.
//!
//! Every client shares the uniform CRS element `a` and holds its own key
//! `(s_i, b_i = -s_i·a + e_i)`. A ciphertext `(c0, c1)` decrypts as
//! `c0 + c1·s_i`; the client ships the decryption share `μ_i = c1·s_i + e*`
//! instead of `c1`, so `Σ c0 + Σ μ` recovers `Σ m` without any secret key.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::ring::{RingContext, RingElement, RingError};
use crate::sampling::{sample_gaussian, sample_smudging, sample_uniform, NoiseSpec, Seed, TAIL_CUT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeError {
    #[error("nothing to aggregate")]
    Empty,
    #[error("{c0} ciphertext halves but {shares} decryption shares")]
    LengthMismatch { c0: usize, shares: usize },
    #[error(transparent)]
    Ring(#[from] RingError),
}

/// The common reference string: a uniform element regenerable from its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonRef {
    a: RingElement,
    seed: Seed,
}

impl CommonRef {
    pub fn a(&self) -> &RingElement {
        &self.a
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    pub fn context(&self) -> &Arc<RingContext> {
        self.a.context()
    }
}

pub fn crs_generate(ctx: &Arc<RingContext>, seed: &Seed) -> CommonRef {
    CommonRef { a: sample_uniform(ctx, seed, b"CRS"), seed: *seed }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeKeyPair {
    s: RingElement,
    b: RingElement,
}

impl HeKeyPair {
    pub fn public(&self) -> &RingElement {
        &self.b
    }

    pub fn secret(&self) -> &RingElement {
        &self.s
    }
}

/// `s ← χ`, `e ← ψ`, `b = -s·a + e`.
pub fn he_keygen<R: Rng + ?Sized>(crs: &CommonRef, spec: &NoiseSpec, rng: &mut R) -> HeKeyPair {
    let ctx = crs.context();
    let s = sample_gaussian(ctx, spec.sigma_secret(), rng);
    let e = sample_gaussian(ctx, spec.sigma_err(), rng);
    let mut b = s.mul(&crs.a).expect("same context").neg();
    b.add_assign(&e).expect("same context");
    HeKeyPair { s, b }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    pub c0: RingElement,
    pub c1: RingElement,
}

/// `v ← χ`, `e0, e1 ← ψ`; `c0 = v·b + m + e0`, `c1 = v·a + e1`.
pub fn encrypt<R: Rng + ?Sized>(
    crs: &CommonRef,
    b: &RingElement,
    m: &RingElement,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<Ciphertext, HeError> {
    let ctx = crs.context();
    let v = sample_gaussian(ctx, spec.sigma_secret(), rng);
    let e0 = sample_gaussian(ctx, spec.sigma_err(), rng);
    let e1 = sample_gaussian(ctx, spec.sigma_err(), rng);
    let mut c0 = v.mul(b)?;
    c0.add_assign(m)?;
    c0.add_assign(&e0)?;
    let mut c1 = v.mul(&crs.a)?;
    c1.add_assign(&e1)?;
    Ok(Ciphertext { c0, c1 })
}

/// A client's partial decryption `μ = c1·s + e*`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialShare {
    pub mu: RingElement,
}

pub fn partial_share<R: Rng + ?Sized>(
    ct: &Ciphertext,
    kp: &HeKeyPair,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<PartialShare, HeError> {
    let mut mu = ct.c1.mul(&kp.s)?;
    mu.add_assign(&sample_smudging(mu.context(), spec, rng))?;
    Ok(PartialShare { mu })
}

/// `Σ c0 + Σ shares (mod q)`; the caller decodes.
pub fn aggregate(c0_list: &[RingElement], share_list: &[RingElement]) -> Result<RingElement, HeError> {
    if c0_list.len() != share_list.len() {
        return Err(HeError::LengthMismatch { c0: c0_list.len(), shares: share_list.len() });
    }
    let (first, rest) = c0_list.split_first().ok_or(HeError::Empty)?;
    let mut acc = first.clone();
    for c0 in rest {
        acc.add_assign(c0)?;
    }
    for mu in share_list {
        acc.add_assign(mu)?;
    }
    Ok(acc)
}

/// Inputs of the analytic noise bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetInputs {
    pub n: usize,
    pub log2_modulus: f64,
    pub delta_bits: u32,
    pub noise: NoiseSpec,
    /// Largest `|x_j|` any client may submit.
    pub value_bound: f64,
}

/// Worst-case post-aggregation noise against the decoding thresholds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NoiseBudget {
    pub clients: usize,
    /// Per-ciphertext bound `6σ_e(1 + 2·6σ_s·√n)` on `v·e + e0 + e1·s`.
    pub b_enc: f64,
    /// `N · (b_enc + 6σ_smudge)`.
    pub b_total: f64,
    pub delta: f64,
    /// `N · Δ · max|x|`.
    pub message_bound: f64,
    pub half_modulus: f64,
    pub passes: bool,
}

/// Product coefficients of two Gaussian elements are taken to be at most
/// `√n` times the product of their tail cuts.
pub fn noise_budget_check(inputs: &BudgetInputs, clients: usize) -> NoiseBudget {
    let cut_err = TAIL_CUT * inputs.noise.sigma_err();
    let cut_secret = TAIL_CUT * inputs.noise.sigma_secret();
    let b_enc = cut_err * (1.0 + 2.0 * cut_secret * (inputs.n as f64).sqrt());
    let n_clients = clients as f64;
    let b_total = n_clients * (b_enc + TAIL_CUT * inputs.noise.sigma_smudge());
    let delta = 2f64.powi(inputs.delta_bits as i32);
    let message_bound = n_clients * delta * inputs.value_bound;
    let half_modulus = 2f64.powf(inputs.log2_modulus - 1.0);
    NoiseBudget {
        clients,
        b_enc,
        b_total,
        delta,
        message_bound,
        half_modulus,
        passes: b_total < delta / 2.0 && message_bound < half_modulus,
    }
}

/// Helpers that need a secret key; only test harnesses use them.
#[cfg(any(test, feature = "test-utils"))]
pub mod harness {
    use super::*;

    /// `c0 + c1·s`.
    pub fn reference_decrypt(ct: &Ciphertext, kp: &HeKeyPair) -> RingElement {
        let mut m = ct.c1.mul(&kp.s).expect("same context");
        m.add_assign(&ct.c0).expect("same context");
        m
    }

    /// `b + s·a`, which must be the small key error.
    pub fn key_error(kp: &HeKeyPair, crs: &CommonRef) -> RingElement {
        let mut e = kp.s.mul(crs.a()).expect("same context");
        e.add_assign(&kp.b).expect("same context");
        e
    }
}
