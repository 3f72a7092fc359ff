//! One-shot aggregation rounds.
//!
//! Setup publishes a [`PublicDirectory`] (parameters, the common reference
//! polynomial, and every client's HE and ECDH public keys). In each round a
//! client sends a single [`ClientUpload`] `(c0, μ̃)` and the server returns
//! the decoded sum. No client talks to another and nothing else crosses the
//! wire.

mod params;
mod wire;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::codec::{decode, encode, CodecError};
use crate::masking::{derive_pair_secret, ecdh_keygen, expand_mask, EcdhKeyPair, EcdhPublicKey, MaskAccumulator, MaskError};
use crate::mkckks::{crs_generate, encrypt, he_keygen, partial_share, CommonRef, HeError, HeKeyPair, NoiseBudget};
use crate::ring::{RingElement, RingError};
use crate::sampling::Seed;

pub use params::{required_modulus_bits, ParamRequest, ParamSet, SecurityLevel};
pub use wire::{MessageType, WireError, HEADER_LEN, MAGIC, WIRE_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("noise budget fails: total noise {:.3e} vs Δ/2 = {:.3e}", .0.b_total, .0.delta / 2.0)]
    NoiseBudget(NoiseBudget),
    #[error("cohort of {clients} clients outside [2, {max}]")]
    CohortSize { clients: usize, max: usize },
    #[error("client {0} is not in the directory")]
    UnknownClient(u32),
    #[error("keyring of client {0} does not match its directory entry")]
    KeyringMismatch(u32),
    #[error("value {value} at index {index} exceeds the declared bound {bound}")]
    ValueOutOfBound { index: usize, value: f64, bound: f64 },
    #[error("no uploads to aggregate")]
    NoUploads,
    #[error("client {id} uploaded for round {got}, expected round {expected}")]
    RoundMismatch { id: u32, expected: u32, got: u32 },
    #[error("client {0} uploaded twice")]
    DuplicateUpload(u32),
    #[error("no upload from client {0}")]
    MissingUpload(u32),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// One client's long-term secrets.
#[derive(Debug, Clone)]
pub struct ClientKeyring {
    id: u32,
    he: HeKeyPair,
    ecdh: EcdhKeyPair,
    round_seed: Seed,
}

impl ClientKeyring {
    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn he(&self) -> &HeKeyPair {
        &self.he
    }

    pub fn ecdh(&self) -> &EcdhKeyPair {
        &self.ecdh
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectoryEntry {
    pub b: RingElement,
    pub ecdh: EcdhPublicKey,
}

/// Public state every party holds after setup.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicDirectory {
    params: ParamSet,
    crs: CommonRef,
    entries: Vec<DirectoryEntry>,
}

impl PublicDirectory {
    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn crs(&self) -> &CommonRef {
        &self.crs
    }

    pub fn entries(&self) -> &[DirectoryEntry] {
        &self.entries
    }

    pub fn clients(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, id: u32) -> Result<&DirectoryEntry, ProtocolError> {
        self.entries.get(id as usize).ok_or(ProtocolError::UnknownClient(id))
    }
}

/// The only message a client sends in a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpload {
    pub round: u32,
    pub id: u32,
    pub c0: RingElement,
    pub mu_tilde: RingElement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub round: u32,
    pub clients: usize,
    pub sum: Vec<f64>,
    pub recovered: RingElement,
}

impl AggregateResult {
    pub fn downlink(&self) -> DownlinkMessage {
        DownlinkMessage { round: self.round, sum: self.sum.clone() }
    }
}

/// What the server broadcasts back.
#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkMessage {
    pub round: u32,
    pub sum: Vec<f64>,
}

/// `Unmasked` sends the bare partial share; it exists only as a negative
/// control for leakage experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskMode {
    #[default]
    Masked,
    Unmasked,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClientTimings {
    pub encode: Duration,
    pub encrypt: Duration,
    pub share: Duration,
    pub mask: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ServerTimings {
    pub aggregate: Duration,
    pub decode: Duration,
    pub total: Duration,
}

/// Generates the CRS and every client's keys from `master`.
pub fn setup(
    params: &ParamSet,
    clients: usize,
    master: &Seed,
) -> Result<(PublicDirectory, Vec<ClientKeyring>), ProtocolError> {
    if clients < 2 || clients > params.max_cohort() || clients > u32::MAX as usize {
        return Err(ProtocolError::CohortSize { clients, max: params.max_cohort() });
    }
    let crs = crs_generate(params.ring(), &master.derive(b"crs", 0));
    let mut entries = Vec::with_capacity(clients);
    let mut keyrings = Vec::with_capacity(clients);
    for id in 0..clients as u32 {
        let mut rng = master.derive(b"client", id as u64).rng();
        let he = he_keygen(&crs, params.noise(), &mut rng);
        let ecdh = ecdh_keygen(&mut rng);
        let round_seed = Seed::random(&mut rng);
        entries.push(DirectoryEntry { b: he.public().clone(), ecdh: *ecdh.public() });
        keyrings.push(ClientKeyring { id, he, ecdh, round_seed });
    }
    Ok((PublicDirectory { params: params.clone(), crs, entries }, keyrings))
}

pub fn client_round(
    keyring: &ClientKeyring,
    dir: &PublicDirectory,
    x: &[f64],
    round: u32,
) -> Result<ClientUpload, ProtocolError> {
    client_round_timed(keyring, dir, x, round, MaskMode::Masked).map(|(u, _)| u)
}

pub fn client_round_timed(
    keyring: &ClientKeyring,
    dir: &PublicDirectory,
    x: &[f64],
    round: u32,
    mode: MaskMode,
) -> Result<(ClientUpload, ClientTimings), ProtocolError> {
    let params = dir.params();
    let ctx = params.ring();
    let id = keyring.id;
    let entry = dir.entry(id)?;
    if entry.b != *keyring.he.public() || entry.ecdh != *keyring.ecdh.public() {
        return Err(ProtocolError::KeyringMismatch(id));
    }
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !(v.abs() <= params.value_bound())) {
        return Err(ProtocolError::ValueOutOfBound { index, value, bound: params.value_bound() });
    }
    let mut rng = keyring.round_seed.derive(b"round", round as u64).rng();
    let mut t = ClientTimings::default();
    let start = Instant::now();

    let m = encode(x, params.scale(), ctx)?;
    let t_encode = Instant::now();
    t.encode = t_encode - start;

    let ct = encrypt(dir.crs(), &entry.b, &m, params.noise(), &mut rng)?;
    let t_encrypt = Instant::now();
    t.encrypt = t_encrypt - t_encode;

    let share = partial_share(&ct, &keyring.he, params.noise(), &mut rng)?;
    let t_share = Instant::now();
    t.share = t_share - t_encrypt;

    let mu_tilde = match mode {
        MaskMode::Masked => {
            let r = pairwise_mask(keyring, dir, round)?;
            share.mu.add(&r)?
        }
        MaskMode::Unmasked => share.mu,
    };
    let end = Instant::now();
    t.mask = end - t_share;
    t.total = end - start;
    Ok((ClientUpload { round, id, c0: ct.c0, mu_tilde }, t))
}

/// `r_i` for this client and round, streamed one peer at a time.
pub fn pairwise_mask(keyring: &ClientKeyring, dir: &PublicDirectory, round: u32) -> Result<RingElement, ProtocolError> {
    let ctx = dir.params().ring();
    let cohort = dir.clients() as u32;
    let mut acc = MaskAccumulator::new(keyring.id, cohort, round, ctx);
    for (j, peer) in dir.entries().iter().enumerate() {
        let j = j as u32;
        if j == keyring.id {
            continue;
        }
        let ks = derive_pair_secret(&keyring.ecdh, &peer.ecdh, (keyring.id, j))?;
        acc.push(&expand_mask(&ks, round, ctx))?;
    }
    Ok(acc.finish()?)
}

pub fn server_round(uploads: &[ClientUpload], dir: &PublicDirectory) -> Result<AggregateResult, ProtocolError> {
    server_round_timed(uploads, dir).map(|(r, _)| r)
}

/// Requires exactly one upload per directory entry, all for the same round.
pub fn server_round_timed(
    uploads: &[ClientUpload],
    dir: &PublicDirectory,
) -> Result<(AggregateResult, ServerTimings), ProtocolError> {
    let first = uploads.first().ok_or(ProtocolError::NoUploads)?;
    let round = first.round;
    let mut by_id: BTreeMap<u32, &ClientUpload> = BTreeMap::new();
    for u in uploads {
        if u.round != round {
            return Err(ProtocolError::RoundMismatch { id: u.id, expected: round, got: u.round });
        }
        if u.id as usize >= dir.clients() {
            return Err(ProtocolError::UnknownClient(u.id));
        }
        if by_id.insert(u.id, u).is_some() {
            return Err(ProtocolError::DuplicateUpload(u.id));
        }
    }
    if let Some(missing) = (0..dir.clients() as u32).find(|j| !by_id.contains_key(j)) {
        return Err(ProtocolError::MissingUpload(missing));
    }

    let start = Instant::now();
    let mut acc = RingElement::zero(dir.params().ring());
    for u in uploads {
        acc.add_assign(&u.c0)?;
        acc.add_assign(&u.mu_tilde)?;
    }
    let t_agg = Instant::now();
    let sum = decode(&acc, dir.params().scale());
    let end = Instant::now();
    let timings = ServerTimings { aggregate: t_agg - start, decode: end - t_agg, total: end - start };
    Ok((AggregateResult { round, clients: uploads.len(), sum, recovered: acc }, timings))
}

/// Byte counts for one round, taken from the serialized layouts.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PayloadReport {
    pub clients: usize,
    pub d: usize,
    pub n: usize,
    pub chain_len: usize,
    pub client_uplink_bytes: usize,
    pub server_inbound_bytes: usize,
    pub downlink_bytes: usize,
    pub setup_bytes: usize,
    /// `d · 8`: the same vector as raw `f64`s.
    pub plaintext_bytes: usize,
    pub expansion_factor: f64,
}

pub fn payload_accounting(params: &ParamSet, clients: usize) -> PayloadReport {
    let n = params.n();
    let k = params.ring().chain_len();
    let d = params.d();
    let up = wire::upload_len(n, k);
    let plain = d * 8;
    PayloadReport {
        clients,
        d,
        n,
        chain_len: k,
        client_uplink_bytes: up,
        server_inbound_bytes: up * clients,
        downlink_bytes: wire::downlink_len(d),
        setup_bytes: wire::directory_len(n, k, clients),
        plaintext_bytes: plain,
        expansion_factor: up as f64 / plain as f64,
    }
}
