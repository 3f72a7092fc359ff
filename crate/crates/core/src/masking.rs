//! Pairwise additive masks.
//!
//! Clients agree on a pair secret `K_ij` by X25519-style Diffie–Hellman on
//! Curve25519's Montgomery form, expand it per round into a uniform ring
//! element `p_ij` with ChaCha20, and combine
//! `r_i = Σ_{j>i} p_ij − Σ_{j<i} p_ji`. Over a full cohort the `r_i` sum to
//! exactly zero.

use std::fmt;
use std::sync::Arc;

use curve25519_dalek::constants::ED25519_BASEPOINT_TABLE;
use curve25519_dalek::edwards::EdwardsPoint;
use curve25519_dalek::montgomery::MontgomeryPoint;
use curve25519_dalek::scalar::Scalar;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mkckks::PartialShare;
use crate::ring::{RingContext, RingElement, RingError};
use crate::sampling::uniform_from_stream;

pub const PAIR_TAG: &[u8] = b"HYBAGG-PAIR";
pub const MASK_TAG: &[u8] = b"HYBAGG-MASK";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskError {
    #[error("public key is not a canonical curve point encoding")]
    InvalidPoint,
    #[error("public key yields a degenerate shared secret")]
    DegenerateSecret,
    #[error("a client cannot pair with itself (id {0})")]
    SelfPair(u32),
    #[error("client {client} is missing the mask shared with {missing}")]
    MissingPair { client: u32, missing: u32 },
    #[error("mask for pair {pair:?} does not involve client {client}")]
    ForeignPair { client: u32, pair: (u32, u32) },
    #[error("pair {0:?} supplied twice")]
    DuplicatePair((u32, u32)),
    #[error("masks from rounds {0} and {1} mixed")]
    MixedRounds(u32, u32),
    #[error(transparent)]
    Ring(#[from] RingError),
}

/// A 32-byte Montgomery u-coordinate, guaranteed canonical (`u < 2^255 − 19`)
/// and on the curve rather than its twist. The Edwards form is decoded once
/// at parse time.
#[derive(Clone, Copy)]
pub struct EcdhPublicKey {
    bytes: [u8; 32],
    point: EdwardsPoint,
}

impl PartialEq for EcdhPublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.bytes == other.bytes
    }
}

impl Eq for EcdhPublicKey {}

impl std::hash::Hash for EcdhPublicKey {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.bytes.hash(state);
    }
}

impl fmt::Debug for EcdhPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EcdhPublicKey(")?;
        for b in &self.bytes[..6] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

impl EcdhPublicKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Result<Self, MaskError> {
        if !is_canonical_field_element(&bytes) {
            return Err(MaskError::InvalidPoint);
        }
        let point = MontgomeryPoint(bytes).to_edwards(0).ok_or(MaskError::InvalidPoint)?;
        Ok(Self { bytes, point })
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.bytes
    }
}

// little-endian u < p = 2^255 - 19
fn is_canonical_field_element(bytes: &[u8; 32]) -> bool {
    if bytes[31] & 0x80 != 0 {
        return false;
    }
    // values >= p are exactly 2^255-19 ..= 2^255-1: top byte 0x7f, middle all 0xff, low byte >= 0xed
    !(bytes[31] == 0x7f && bytes[1..31].iter().all(|&b| b == 0xff) && bytes[0] >= 0xed)
}

#[derive(Clone)]
pub struct EcdhKeyPair {
    sk: Scalar,
    pk: EcdhPublicKey,
}

impl fmt::Debug for EcdhKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EcdhKeyPair").field("pk", &self.pk).finish_non_exhaustive()
    }
}

impl EcdhKeyPair {
    pub fn public(&self) -> &EcdhPublicKey {
        &self.pk
    }

    /// Canonical little-endian encoding of the scalar, `< ℓ`.
    pub fn secret_bytes(&self) -> [u8; 32] {
        self.sk.to_bytes()
    }

    /// Rebuilds a key pair from a canonical scalar.
    pub fn from_secret_bytes(bytes: [u8; 32]) -> Option<Self> {
        let sk = Option::<Scalar>::from(Scalar::from_canonical_bytes(bytes))?;
        if sk == Scalar::ZERO {
            return None;
        }
        Some(Self::from_scalar(sk))
    }

    fn from_scalar(sk: Scalar) -> Self {
        let point = ED25519_BASEPOINT_TABLE * &sk;
        let pk = EcdhPublicKey { bytes: point.to_montgomery().to_bytes(), point };
        Self { sk, pk }
    }
}

/// Uniform nonzero scalar mod ℓ and `pk = sk · G`.
pub fn ecdh_keygen<R: RngCore + ?Sized>(rng: &mut R) -> EcdhKeyPair {
    loop {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        let sk = Scalar::from_bytes_mod_order_wide(&wide);
        if sk != Scalar::ZERO {
            return EcdhKeyPair::from_scalar(sk);
        }
    }
}

/// Hashed Diffie–Hellman secret for an unordered pair of client ids.
#[derive(Clone, PartialEq, Eq)]
pub struct PairSecret {
    k: [u8; 32],
    pair: (u32, u32),
}

impl fmt::Debug for PairSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PairSecret").field("pair", &self.pair).finish_non_exhaustive()
    }
}

impl PairSecret {
    /// `(low, high)` client ids.
    pub fn pair(&self) -> (u32, u32) {
        self.pair
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.k
    }
}

fn sorted(i: u32, j: u32) -> (u32, u32) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// `K = SHA-256(tag ‖ lo ‖ hi ‖ u(sk · pk_peer))`; identical from either side.
pub fn derive_pair_secret(
    my: &EcdhKeyPair,
    their_pk: &EcdhPublicKey,
    pair_ids: (u32, u32),
) -> Result<PairSecret, MaskError> {
    let (i, j) = pair_ids;
    if i == j {
        return Err(MaskError::SelfPair(i));
    }
    let pair = sorted(i, j);
    let shared = (their_pk.point * my.sk).to_montgomery().to_bytes();
    if shared.iter().all(|&b| b == 0) {
        return Err(MaskError::DegenerateSecret);
    }
    let mut h = Sha256::new();
    h.update(PAIR_TAG);
    h.update(pair.0.to_le_bytes());
    h.update(pair.1.to_le_bytes());
    h.update(shared);
    Ok(PairSecret { k: h.finalize().into(), pair })
}

/// The shared polynomial `p_ij` for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPoly {
    pub p: RingElement,
    pub pair: (u32, u32),
    pub round: u32,
}

/// ChaCha20 keyed by `SHA-256(K ‖ round ‖ "HYBAGG-MASK")`, rejection-sampled per residue.
pub fn expand_mask(ks: &PairSecret, round: u32, ctx: &Arc<RingContext>) -> MaskPoly {
    let mut h = Sha256::new();
    h.update(ks.k);
    h.update(round.to_le_bytes());
    h.update(MASK_TAG);
    let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
    MaskPoly { p: uniform_from_stream(ctx, &mut rng), pair: ks.pair, round }
}

/// Streaming form of [`net_mask`]: folds masks in one at a time.
#[derive(Debug, Clone)]
pub struct MaskAccumulator {
    client: u32,
    round: u32,
    seen: Vec<bool>,
    r: RingElement,
}

impl MaskAccumulator {
    pub fn new(client: u32, cohort: u32, round: u32, ctx: &Arc<RingContext>) -> Self {
        Self { client, round, seen: vec![false; cohort as usize], r: RingElement::zero(ctx) }
    }

    pub fn push(&mut self, m: &MaskPoly) -> Result<(), MaskError> {
        let i = self.client;
        if m.round != self.round {
            return Err(MaskError::MixedRounds(self.round, m.round));
        }
        let peer = match m.pair {
            (a, b) if a == i && b != i => b,
            (a, b) if b == i && a != i => a,
            pair => return Err(MaskError::ForeignPair { client: i, pair }),
        };
        let slot = self.seen.get_mut(peer as usize).ok_or(MaskError::ForeignPair { client: i, pair: m.pair })?;
        if std::mem::replace(slot, true) {
            return Err(MaskError::DuplicatePair(m.pair));
        }
        if peer > i {
            self.r.add_assign(&m.p)?;
        } else {
            self.r.sub_assign(&m.p)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<RingElement, MaskError> {
        let i = self.client;
        match (0..self.seen.len() as u32).find(|&j| j != i && !self.seen[j as usize]) {
            Some(missing) => Err(MaskError::MissingPair { client: i, missing }),
            None => Ok(self.r),
        }
    }
}

/// `r_i = Σ_{j>i} p_ij − Σ_{j<i} p_ji`, requiring exactly one mask per peer.
pub fn net_mask(i: u32, masks: &[MaskPoly], cohort: u32) -> Result<RingElement, MaskError> {
    let first = masks.first().ok_or(MaskError::MissingPair { client: i, missing: if i == 0 { 1 } else { 0 } })?;
    let mut acc = MaskAccumulator::new(i, cohort, first.round, first.p.context());
    for m in masks {
        acc.push(m)?;
    }
    acc.finish()
}

/// `μ̃ = μ + r`.
pub fn mask_share(mu: &PartialShare, r: &RingElement) -> Result<RingElement, MaskError> {
    Ok(mu.mu.add(r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Seed;
    use std::collections::HashSet;

    fn keys(count: usize, seed: u64) -> Vec<EcdhKeyPair> {
        let mut rng = Seed::from_u64(seed).rng();
        (0..count).map(|_| ecdh_keygen(&mut rng)).collect()
    }

    fn masks_for(i: u32, keys: &[EcdhKeyPair], round: u32, ctx: &Arc<RingContext>) -> Vec<MaskPoly> {
        (0..keys.len() as u32)
            .filter(|&j| j != i)
            .map(|j| {
                let k = derive_pair_secret(&keys[i as usize], keys[j as usize].public(), (i, j)).unwrap();
                expand_mask(&k, round, ctx)
            })
            .collect()
    }

    #[test]
    fn keygen_basics() {
        let ks = keys(2, 1);
        assert_ne!(ks[0].public(), ks[1].public());
        let rebuilt = EcdhKeyPair::from_secret_bytes(ks[0].secret_bytes()).unwrap();
        assert_eq!(rebuilt.public(), ks[0].public());
        // canonical scalar encoding means sk < ℓ
        assert!(bool::from(Scalar::from_canonical_bytes(ks[0].secret_bytes()).is_some()));
    }

    #[test]
    fn dh_symmetry_and_normalization() {
        let ks = keys(2, 2);
        let a = derive_pair_secret(&ks[0], ks[1].public(), (0, 1)).unwrap();
        let b = derive_pair_secret(&ks[1], ks[0].public(), (1, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pair(), (0, 1));
        assert_eq!(derive_pair_secret(&ks[0], ks[1].public(), (1, 0)).unwrap(), a);
        assert_eq!(derive_pair_secret(&ks[0], ks[1].public(), (0, 0)), Err(MaskError::SelfPair(0)));
    }

    #[test]
    fn distinct_pairs_have_distinct_secrets() {
        let mut seen = HashSet::new();
        for t in 0..100 {
            let ks = keys(3, 100 + t);
            for (i, j) in [(0u32, 1u32), (0, 2), (1, 2)] {
                let k = derive_pair_secret(&ks[i as usize], ks[j as usize].public(), (i, j)).unwrap();
                assert!(seen.insert(*k.as_bytes()));
            }
        }
    }

    #[test]
    fn non_canonical_points_rejected() {
        let mut p = [0xffu8; 32];
        p[31] = 0x7f;
        assert_eq!(EcdhPublicKey::from_bytes(p), Err(MaskError::InvalidPoint));
        p[0] = 0xec; // p - 1 is canonical but has no Edwards image
        assert_eq!(EcdhPublicKey::from_bytes(p), Err(MaskError::InvalidPoint));
        let mut nine = [0u8; 32];
        nine[0] = 9;
        assert!(EcdhPublicKey::from_bytes(nine).is_ok());
        let mut high = [0u8; 32];
        high[31] = 0x80;
        assert_eq!(EcdhPublicKey::from_bytes(high), Err(MaskError::InvalidPoint));
        // u = 0 is a low-order point
        let ks = keys(1, 3);
        let zero = EcdhPublicKey::from_bytes([0; 32]).unwrap();
        assert_eq!(derive_pair_secret(&ks[0], &zero, (0, 1)), Err(MaskError::DegenerateSecret));
    }

    #[test]
    fn twist_points_rejected() {
        let twist = (2u8..=255)
            .map(|u| {
                let mut b = [0u8; 32];
                b[0] = u;
                b
            })
            .find(|b| MontgomeryPoint(*b).to_edwards(0).is_none())
            .unwrap();
        assert_eq!(EcdhPublicKey::from_bytes(twist), Err(MaskError::InvalidPoint));
    }

    #[test]
    fn agreement_matches_the_montgomery_ladder() {
        let ks = keys(6, 5);
        for a in &ks {
            assert_eq!(MontgomeryPoint::mul_base(&a.sk).to_bytes(), *a.public().as_bytes());
            for b in &ks {
                let ladder = (MontgomeryPoint(*b.public().as_bytes()) * a.sk).to_bytes();
                let edwards = (b.public().point * a.sk).to_montgomery().to_bytes();
                assert_eq!(ladder, edwards);
            }
        }
    }

    #[test]
    fn mask_expansion_is_deterministic_and_round_bound() {
        let ctx = RingContext::new(256, 70).unwrap();
        let ks = keys(2, 4);
        let k = derive_pair_secret(&ks[0], ks[1].public(), (0, 1)).unwrap();
        assert_eq!(expand_mask(&k, 7, &ctx), expand_mask(&k, 7, &ctx));
        assert_ne!(expand_mask(&k, 7, &ctx).p, expand_mask(&k, 8, &ctx).p);
    }

    #[test]
    fn two_party_masks_are_opposite() {
        let ctx = RingContext::new(64, 70).unwrap();
        let ks = keys(2, 5);
        let r0 = net_mask(0, &masks_for(0, &ks, 1, &ctx), 2).unwrap();
        let r1 = net_mask(1, &masks_for(1, &ks, 1, &ctx), 2).unwrap();
        assert_eq!(r0, masks_for(0, &ks, 1, &ctx)[0].p);
        assert_eq!(r1, r0.neg());
        assert!(r0.add(&r1).unwrap().is_zero());
    }

    #[test]
    fn five_party_masks_cancel_and_dropout_breaks_it() {
        let ctx = RingContext::new(128, 70).unwrap();
        let ks = keys(5, 6);
        let rs: Vec<RingElement> =
            (0..5).map(|i| net_mask(i, &masks_for(i, &ks, 3, &ctx), 5).unwrap()).collect();
        let mut total = RingElement::zero(&ctx);
        for r in &rs {
            total.add_assign(r).unwrap();
        }
        assert!(total.is_zero());
        // leaving out one client's mask
        let mut partial = RingElement::zero(&ctx);
        for r in &rs[..4] {
            partial.add_assign(r).unwrap();
        }
        assert!(!partial.is_zero());
        assert_eq!(partial, rs[4].neg());
    }

    #[test]
    fn net_mask_validation() {
        let ctx = RingContext::new(64, 70).unwrap();
        let ks = keys(3, 7);
        let mut ms = masks_for(0, &ks, 1, &ctx);
        assert!(matches!(net_mask(0, &ms[..1], 3), Err(MaskError::MissingPair { client: 0, missing: 2 })));
        let mut mixed = ms.clone();
        mixed[1].round = 2;
        assert_eq!(net_mask(0, &mixed, 3), Err(MaskError::MixedRounds(1, 2)));
        ms.push(ms[0].clone());
        assert!(matches!(net_mask(0, &ms, 3), Err(MaskError::DuplicatePair(_))));
        let foreign = masks_for(1, &ks, 1, &ctx);
        assert!(matches!(net_mask(0, &foreign, 3), Err(MaskError::ForeignPair { .. })));
    }

    #[test]
    fn masking_a_share() {
        let ctx = RingContext::new(64, 70).unwrap();
        let mu = PartialShare { mu: crate::sampling::sample_uniform(&ctx, &Seed::from_u64(1), b"mu") };
        assert_eq!(mask_share(&mu, &RingElement::zero(&ctx)).unwrap(), mu.mu);
        let r = crate::sampling::sample_uniform(&ctx, &Seed::from_u64(2), b"r");
        assert_eq!(mask_share(&mu, &r).unwrap().sub(&r).unwrap(), mu.mu);
    }
}
