//! Byte layouts.
//!
//! Every message starts with a 19-byte header:
//!
//! ```text
//! "HAGG" | version u8 | type u8 | round u32 | id u32 | n u32 | chain u8
//! ```
//!
//! Integers are little-endian. Ring elements follow as `chain` arrays of `n`
//! residues, one `u64` each, modulus by modulus.

use std::sync::Arc;

use thiserror::Error;

use crate::masking::EcdhPublicKey;
use crate::mkckks::crs_generate;
use crate::ring::{RingContext, RingElement};
use crate::sampling::{NoiseSpec, Seed};

use super::{
    ClientUpload, DirectoryEntry, DownlinkMessage, ParamRequest, ParamSet, ProtocolError, PublicDirectory,
    SecurityLevel,
};

pub const MAGIC: [u8; 4] = *b"HAGG";
pub const WIRE_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 19;

/// Fixed part of a directory body after the moduli.
const DIRECTORY_FIXED: usize = 1 + 2 + 4 + 4 + 4 * 8 + 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    ClientUpload = 1,
    PublicDirectory = 2,
    Downlink = 3,
}

impl MessageType {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::ClientUpload),
            2 => Some(Self::PublicDirectory),
            3 => Some(Self::Downlink),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported wire version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("expected a {expected:?} message, got {got:?}")]
    WrongType { expected: MessageType, got: MessageType },
    #[error("message truncated: need {needed} bytes, have {got}")]
    Truncated { needed: usize, got: usize },
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("header says n = {n} with {chain} moduli, ring has n = {ring_n} with {ring_chain}")]
    ShapeMismatch { n: usize, chain: usize, ring_n: usize, ring_chain: usize },
    #[error("residue {value} at slot {index} is not below its modulus {modulus}")]
    NonCanonical { index: usize, value: u64, modulus: u64 },
    #[error("malformed field: {0}")]
    Malformed(String),
}

pub(super) fn upload_len(n: usize, chain: usize) -> usize {
    HEADER_LEN + 2 * chain * n * 8
}

pub(super) fn downlink_len(d: usize) -> usize {
    HEADER_LEN + d * 8
}

pub(super) fn directory_len(n: usize, chain: usize, clients: usize) -> usize {
    HEADER_LEN + chain * 8 + DIRECTORY_FIXED + clients * (chain * n * 8 + 32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Header {
    kind: MessageType,
    round: u32,
    id: u32,
    n: u32,
    chain: u8,
}

impl Header {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.push(WIRE_VERSION);
        out.push(self.kind as u8);
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&self.id.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.push(self.chain);
    }

    fn read(r: &mut Reader<'_>, expected: MessageType) -> Result<Self, WireError> {
        r.need(HEADER_LEN)?;
        if r.take(4)? != MAGIC {
            return Err(WireError::BadMagic);
        }
        let version = r.u8()?;
        if version != WIRE_VERSION {
            return Err(WireError::UnsupportedVersion(version));
        }
        let raw = r.u8()?;
        let kind = MessageType::from_u8(raw).ok_or(WireError::UnknownType(raw))?;
        if kind != expected {
            return Err(WireError::WrongType { expected, got: kind });
        }
        Ok(Self { kind, round: r.u32()?, id: r.u32()?, n: r.u32()?, chain: r.u8()? })
    }

    fn for_ring(kind: MessageType, round: u32, id: u32, ctx: &RingContext) -> Self {
        Self { kind, round, id, n: ctx.n() as u32, chain: ctx.chain_len() as u8 }
    }

    fn check_ring(&self, ctx: &RingContext) -> Result<(), WireError> {
        if self.n as usize != ctx.n() || self.chain as usize != ctx.chain_len() {
            return Err(WireError::ShapeMismatch {
                n: self.n as usize,
                chain: self.chain as usize,
                ring_n: ctx.n(),
                ring_chain: ctx.chain_len(),
            });
        }
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn need(&self, len: usize) -> Result<(), WireError> {
        let needed = self.pos.saturating_add(len);
        if needed > self.buf.len() {
            return Err(WireError::Truncated { needed, got: self.buf.len() });
        }
        Ok(())
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], WireError> {
        self.need(len)?;
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn array<const L: usize>(&mut self) -> Result<[u8; L], WireError> {
        Ok(self.take(L)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn ring_element(&mut self, ctx: &Arc<RingContext>) -> Result<RingElement, WireError> {
        let n = ctx.n();
        let bytes = self.take(ctx.chain_len() * n * 8)?;
        let data: Vec<u64> = bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        for (index, &value) in data.iter().enumerate() {
            let modulus = ctx.moduli()[index / n].value();
            if value >= modulus {
                return Err(WireError::NonCanonical { index, value, modulus });
            }
        }
        Ok(RingElement::from_residues(ctx, data).expect("validated above"))
    }

    fn finish(self) -> Result<(), WireError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            extra => Err(WireError::TrailingBytes(extra)),
        }
    }
}

fn write_element(out: &mut Vec<u8>, e: &RingElement) {
    for &r in e.as_raw() {
        out.extend_from_slice(&r.to_le_bytes());
    }
}

fn to_u32(value: usize, what: &str) -> u32 {
    u32::try_from(value).unwrap_or_else(|_| panic!("{what} {value} does not fit in u32"))
}

impl ClientUpload {
    pub fn to_bytes(&self) -> Vec<u8> {
        let ctx = self.c0.context();
        let mut out = Vec::with_capacity(upload_len(ctx.n(), ctx.chain_len()));
        Header::for_ring(MessageType::ClientUpload, self.round, self.id, ctx).write(&mut out);
        write_element(&mut out, &self.c0);
        write_element(&mut out, &self.mu_tilde);
        out
    }

    pub fn from_bytes(bytes: &[u8], ctx: &Arc<RingContext>) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let h = Header::read(&mut r, MessageType::ClientUpload)?;
        h.check_ring(ctx)?;
        let c0 = r.ring_element(ctx)?;
        let mu_tilde = r.ring_element(ctx)?;
        r.finish()?;
        Ok(Self { round: h.round, id: h.id, c0, mu_tilde })
    }
}

impl DownlinkMessage {
    /// The header's `id` field carries the vector length; `n` and `chain` are zero.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(downlink_len(self.sum.len()));
        let id = to_u32(self.sum.len(), "dimension");
        Header { kind: MessageType::Downlink, round: self.round, id, n: 0, chain: 0 }.write(&mut out);
        for v in &self.sum {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let h = Header::read(&mut r, MessageType::Downlink)?;
        let d = h.id as usize;
        r.need(d.saturating_mul(8))?;
        let sum = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(Self { round: h.round, sum })
    }
}

impl PublicDirectory {
    /// Self-contained: carries the moduli and every parameter needed to
    /// rebuild the ring, so [`PublicDirectory::from_bytes`] needs no context.
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let ctx = p.ring();
        let mut out = Vec::with_capacity(directory_len(ctx.n(), ctx.chain_len(), self.clients()));
        let id = to_u32(self.clients(), "cohort");
        Header::for_ring(MessageType::PublicDirectory, 0, id, ctx).write(&mut out);
        for m in ctx.moduli() {
            out.extend_from_slice(&m.value().to_le_bytes());
        }
        out.push(p.scale().delta_bits() as u8);
        out.extend_from_slice(&p.security().code().to_le_bytes());
        out.extend_from_slice(&to_u32(p.d(), "dimension").to_le_bytes());
        out.extend_from_slice(&to_u32(p.max_cohort(), "cohort bound").to_le_bytes());
        for v in [p.value_bound(), p.noise().sigma_err(), p.noise().sigma_secret(), p.noise().sigma_smudge()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(self.crs.seed().as_bytes());
        for e in &self.entries {
            write_element(&mut out, &e.b);
            out.extend_from_slice(e.ecdh.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader::new(bytes);
        let h = Header::read(&mut r, MessageType::PublicDirectory)?;
        let moduli = (0..h.chain).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
        let ring = RingContext::with_moduli(h.n as usize, &moduli)?;
        let delta_bits = r.u8()? as u32;
        let code = r.u16()?;
        let security =
            SecurityLevel::from_code(code).ok_or_else(|| WireError::Malformed(format!("security level {code}")))?;
        let d = r.u32()? as usize;
        let max_cohort = r.u32()? as usize;
        let value_bound = r.f64()?;
        let noise = NoiseSpec::new(r.f64()?, r.f64()?, r.f64()?)
            .map_err(|e| WireError::Malformed(format!("noise: {e}")))?;
        let seed = Seed::from_bytes(r.array()?);
        let req = ParamRequest { d, max_cohort, delta_bits, noise, value_bound };
        let params = ParamSet::from_parts(ring.clone(), req, security)?;
        let clients = h.id as usize;
        if clients < 2 || clients > max_cohort {
            return Err(ProtocolError::CohortSize { clients, max: max_cohort });
        }
        r.need(clients.saturating_mul(ring.chain_len() * ring.n() * 8 + 32))?;
        let mut entries = Vec::with_capacity(clients);
        for _ in 0..clients {
            let b = r.ring_element(&ring)?;
            let ecdh = EcdhPublicKey::from_bytes(r.array()?)?;
            entries.push(DirectoryEntry { b, ecdh });
        }
        r.finish()?;
        let crs = crs_generate(&ring, &seed);
        Ok(Self { params, crs, entries })
    }
}
