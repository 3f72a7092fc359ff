//! The negacyclic ring `R_q = Z_q[X]/(X^n + 1)` over an RNS modulus chain.
//!
//! A [`RingElement`] stores one residue array per modulus (modulus-major,
//! coefficient of `X^j` at index `j`). All arithmetic is exact; products go
//! through a per-modulus negacyclic NTT.

mod modulus;
mod ntt;

use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};
use thiserror::Error;

pub use modulus::{is_prime, Modulus, MAX_MODULUS_BITS};
pub use ntt::NttTable;

/// Smallest and largest supported ring degree.
pub const MIN_DEGREE: usize = 2;
pub const MAX_DEGREE: usize = 1 << 17;
/// At most this many primes in a chain, each of at most this many bits.
pub const MAX_CHAIN_LEN: usize = 4;
pub const MAX_PRIME_BITS: u32 = 60;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RingError {
    #[error("ring degree {0} must be a power of two in [{MIN_DEGREE}, {MAX_DEGREE}]")]
    InvalidDegree(usize),
    #[error("invalid modulus {value}: {reason}")]
    InvalidModulus { value: u64, reason: &'static str },
    #[error("no primitive 2n-th root of unity mod {modulus} for n = {n}")]
    NoRootOfUnity { modulus: u64, n: usize },
    #[error("no chain of at most {MAX_CHAIN_LEN} primes of at most {MAX_PRIME_BITS} bits reaches {bits} bits for n = {n}")]
    NoSuitablePrimes { n: usize, bits: u32 },
    #[error("modulus chain must hold 1 to {MAX_CHAIN_LEN} distinct primes, got {0}")]
    BadChain(usize),
    #[error("ring elements belong to different contexts")]
    ContextMismatch,
    #[error("expected {expected} residues, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("residue {value} at index {index} is not reduced modulo {modulus}")]
    NonCanonical { index: usize, value: u64, modulus: u64 },
}

/// Degree, modulus chain and precomputed NTT / CRT data. Immutable once built.
pub struct RingContext {
    n: usize,
    moduli: Vec<Modulus>,
    tables: Vec<NttTable>,
    modulus_product: BigUint,
    // (Q / q_k) * ((Q / q_k)^-1 mod q_k), reduced mod Q
    crt_basis: Vec<BigUint>,
}

impl fmt::Debug for RingContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RingContext")
            .field("n", &self.n)
            .field("moduli", &self.moduli_values())
            .finish()
    }
}

impl PartialEq for RingContext {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.moduli == other.moduli
    }
}

impl Eq for RingContext {}

impl RingContext {
    /// Builds a context whose modulus product is at least `2^bit_budget`,
    /// using the fewest primes `≡ 1 (mod 2n)` of at most 60 bits.
    pub fn new(n: usize, bit_budget: u32) -> Result<Arc<Self>, RingError> {
        check_degree(n)?;
        if bit_budget == 0 {
            return Err(RingError::NoSuitablePrimes { n, bits: bit_budget });
        }
        let target = BigUint::one() << bit_budget as usize;
        let first_k = (bit_budget as usize).div_ceil(MAX_PRIME_BITS as usize);
        for k in first_k.max(1)..=MAX_CHAIN_LEN {
            let even = bit_budget.div_ceil(k as u32);
            // primes just below 2^b fall a hair short of 2^(k*b), so allow one extra bit
            for bits in [even, even + 1] {
                if bits > MAX_PRIME_BITS || bits < 2 {
                    continue;
                }
                let primes = modulus::ntt_primes_below(bits, n, k);
                if primes.len() < k {
                    continue;
                }
                let product = primes.iter().fold(BigUint::one(), |acc, &p| acc * p);
                if product >= target {
                    return Self::with_moduli(n, &primes);
                }
            }
        }
        Err(RingError::NoSuitablePrimes { n, bits: bit_budget })
    }

    /// Builds a context over an explicit chain of primes.
    pub fn with_moduli(n: usize, moduli: &[u64]) -> Result<Arc<Self>, RingError> {
        check_degree(n)?;
        if moduli.is_empty() || moduli.len() > MAX_CHAIN_LEN {
            return Err(RingError::BadChain(moduli.len()));
        }
        for (i, a) in moduli.iter().enumerate() {
            if moduli[..i].contains(a) {
                return Err(RingError::BadChain(moduli.len()));
            }
        }
        let moduli = moduli
            .iter()
            .map(|&q| Modulus::new(q, n))
            .collect::<Result<Vec<_>, _>>()?;
        let tables = moduli
            .iter()
            .map(|&m| NttTable::new(m, n))
            .collect::<Result<Vec<_>, _>>()?;

        let modulus_product = moduli.iter().fold(BigUint::one(), |acc, m| acc * m.value());
        let crt_basis = moduli
            .iter()
            .map(|m| {
                let q = m.value();
                let cofactor = &modulus_product / q;
                let residue = (&cofactor % q).iter_u64_digits().next().unwrap_or(0);
                (cofactor * m.inv(residue)) % &modulus_product
            })
            .collect();
        Ok(Arc::new(Self { n, moduli, tables, modulus_product, crt_basis }))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn moduli(&self) -> &[Modulus] {
        &self.moduli
    }

    pub fn moduli_values(&self) -> Vec<u64> {
        self.moduli.iter().map(Modulus::value).collect()
    }

    pub fn chain_len(&self) -> usize {
        self.moduli.len()
    }

    pub fn ntt_tables(&self) -> &[NttTable] {
        &self.tables
    }

    /// `Q`, the product of the chain.
    pub fn modulus_product(&self) -> &BigUint {
        &self.modulus_product
    }

    /// `log2(Q)` as a float.
    pub fn log2_modulus(&self) -> f64 {
        self.moduli.iter().map(|m| (m.value() as f64).log2()).sum()
    }

    /// Number of reals one plaintext polynomial carries (coefficient packing).
    pub fn capacity(&self) -> usize {
        self.n
    }
}

fn check_degree(n: usize) -> Result<(), RingError> {
    if !n.is_power_of_two() || !(MIN_DEGREE..=MAX_DEGREE).contains(&n) {
        return Err(RingError::InvalidDegree(n));
    }
    Ok(())
}

/// A polynomial in `R_q`, stored as residues modulo each prime of the chain.
#[derive(Clone)]
pub struct RingElement {
    ctx: Arc<RingContext>,
    data: Vec<u64>,
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown = self.data.len().min(8);
        f.debug_struct("RingElement")
            .field("n", &self.ctx.n)
            .field("chain_len", &self.ctx.chain_len())
            .field("head", &&self.data[..shown])
            .finish()
    }
}

impl PartialEq for RingElement {
    fn eq(&self, other: &Self) -> bool {
        self.same_ring(other) && self.data == other.data
    }
}

impl Eq for RingElement {}

impl RingElement {
    pub fn zero(ctx: &Arc<RingContext>) -> Self {
        Self { ctx: Arc::clone(ctx), data: vec![0; ctx.n * ctx.chain_len()] }
    }

    /// The constant polynomial 1.
    pub fn one(ctx: &Arc<RingContext>) -> Self {
        Self::monomial(ctx, 0)
    }

    /// `X^degree` for `degree < n`.
    pub fn monomial(ctx: &Arc<RingContext>, degree: usize) -> Self {
        assert!(degree < ctx.n, "monomial degree {degree} out of range");
        let mut out = Self::zero(ctx);
        for k in 0..ctx.chain_len() {
            out.data[k * ctx.n + degree] = 1;
        }
        out
    }

    /// Wraps raw modulus-major residues, rejecting anything not fully reduced.
    pub fn from_residues(ctx: &Arc<RingContext>, data: Vec<u64>) -> Result<Self, RingError> {
        let expected = ctx.n * ctx.chain_len();
        if data.len() != expected {
            return Err(RingError::LengthMismatch { expected, got: data.len() });
        }
        for (k, m) in ctx.moduli.iter().enumerate() {
            let q = m.value();
            if let Some(j) = data[k * ctx.n..(k + 1) * ctx.n].iter().position(|&r| r >= q) {
                let index = k * ctx.n + j;
                return Err(RingError::NonCanonical { index, value: data[index], modulus: q });
            }
        }
        Ok(Self { ctx: Arc::clone(ctx), data })
    }

    /// Builds an element from small signed coefficients (missing tail is zero).
    pub fn from_i64(ctx: &Arc<RingContext>, coeffs: &[i64]) -> Result<Self, RingError> {
        if coeffs.len() > ctx.n {
            return Err(RingError::LengthMismatch { expected: ctx.n, got: coeffs.len() });
        }
        let mut out = Self::zero(ctx);
        for (k, m) in ctx.moduli.iter().enumerate() {
            let row = &mut out.data[k * ctx.n..(k + 1) * ctx.n];
            for (r, &c) in row.iter_mut().zip(coeffs) {
                *r = m.reduce_i128(c as i128);
            }
        }
        Ok(out)
    }

    /// Like [`from_i64`](Self::from_i64) for wider integers.
    pub fn from_i128(ctx: &Arc<RingContext>, coeffs: &[i128]) -> Result<Self, RingError> {
        if coeffs.len() > ctx.n {
            return Err(RingError::LengthMismatch { expected: ctx.n, got: coeffs.len() });
        }
        let mut out = Self::zero(ctx);
        for (k, m) in ctx.moduli.iter().enumerate() {
            let row = &mut out.data[k * ctx.n..(k + 1) * ctx.n];
            for (r, &c) in row.iter_mut().zip(coeffs) {
                *r = m.reduce_i128(c);
            }
        }
        Ok(out)
    }

    /// Inverse of [`to_signed`](Self::to_signed): arbitrary integers reduced into `R_q`.
    pub fn from_signed(ctx: &Arc<RingContext>, coeffs: &[BigInt]) -> Result<Self, RingError> {
        if coeffs.len() > ctx.n {
            return Err(RingError::LengthMismatch { expected: ctx.n, got: coeffs.len() });
        }
        let mut out = Self::zero(ctx);
        for (k, m) in ctx.moduli.iter().enumerate() {
            let q = BigInt::from(m.value());
            let row = &mut out.data[k * ctx.n..(k + 1) * ctx.n];
            for (r, c) in row.iter_mut().zip(coeffs) {
                let mut v = c % &q;
                if v.sign() == Sign::Minus {
                    v += &q;
                }
                *r = v.iter_u64_digits().next().unwrap_or(0);
            }
        }
        Ok(out)
    }

    pub fn context(&self) -> &Arc<RingContext> {
        &self.ctx
    }

    /// Residues of every coefficient modulo the `k`-th prime.
    pub fn residues(&self, k: usize) -> &[u64] {
        &self.data[k * self.ctx.n..(k + 1) * self.ctx.n]
    }

    /// All residues, modulus-major.
    pub fn as_raw(&self) -> &[u64] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&r| r == 0)
    }

    pub fn same_ring(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.ctx, &other.ctx) || *self.ctx == *other.ctx
    }

    fn check(&self, other: &Self) -> Result<(), RingError> {
        if self.same_ring(other) {
            Ok(())
        } else {
            Err(RingError::ContextMismatch)
        }
    }

    fn zip_rows(&mut self, other: &Self, op: impl Fn(&Modulus, u64, u64) -> u64) {
        let n = self.ctx.n;
        for (k, m) in self.ctx.moduli.iter().enumerate() {
            let dst = &mut self.data[k * n..(k + 1) * n];
            let src = &other.data[k * n..(k + 1) * n];
            for (a, &b) in dst.iter_mut().zip(src) {
                *a = op(m, *a, b);
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<(), RingError> {
        self.check(other)?;
        self.zip_rows(other, Modulus::add);
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &Self) -> Result<(), RingError> {
        self.check(other)?;
        self.zip_rows(other, Modulus::sub);
        Ok(())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(&self, other: &Self) -> Result<Self, RingError> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(&self, other: &Self) -> Result<Self, RingError> {
        let mut out = self.clone();
        out.sub_assign(other)?;
        Ok(out)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(&self) -> Self {
        let n = self.ctx.n;
        let mut out = self.clone();
        for (k, m) in self.ctx.moduli.iter().enumerate() {
            for r in &mut out.data[k * n..(k + 1) * n] {
                *r = m.neg(*r);
            }
        }
        out
    }

    /// Negacyclic product: forward NTT, pointwise product, inverse NTT per modulus.
    #[allow(clippy::should_implement_trait)]
    pub fn mul(&self, other: &Self) -> Result<Self, RingError> {
        self.check(other)?;
        let n = self.ctx.n;
        let mut out = self.clone();
        let mut scratch = vec![0u64; n];
        for (k, table) in self.ctx.tables.iter().enumerate() {
            let m = table.modulus();
            let a = &mut out.data[k * n..(k + 1) * n];
            scratch.copy_from_slice(&other.data[k * n..(k + 1) * n]);
            table.forward(a);
            table.forward(&mut scratch);
            for (x, &y) in a.iter_mut().zip(&scratch) {
                *x = m.mul(*x, y);
            }
            table.inverse(a);
        }
        Ok(out)
    }

    /// CRT-reconstructs coefficient `j` into `[0, Q)`.
    pub fn coeff_unsigned(&self, j: usize) -> BigUint {
        let n = self.ctx.n;
        if self.ctx.chain_len() == 1 {
            return BigUint::from(self.data[j]);
        }
        let acc = self
            .ctx
            .crt_basis
            .iter()
            .enumerate()
            .fold(BigUint::zero(), |acc, (k, basis)| acc + basis * self.data[k * n + j]);
        acc % &self.ctx.modulus_product
    }

    /// Centered lift of coefficient `j` into `(-Q/2, Q/2]`.
    pub fn coeff_signed(&self, j: usize) -> BigInt {
        let q = &self.ctx.modulus_product;
        let v = self.coeff_unsigned(j);
        if &v + &v > *q {
            BigInt::from_biguint(Sign::Plus, v) - BigInt::from_biguint(Sign::Plus, q.clone())
        } else {
            BigInt::from_biguint(Sign::Plus, v)
        }
    }

    /// Centered lift of every coefficient.
    pub fn to_signed(&self) -> Vec<BigInt> {
        (0..self.ctx.n).map(|j| self.coeff_signed(j)).collect()
    }

    /// Largest `|c|` over the centered coefficients.
    pub fn inf_norm(&self) -> BigUint {
        (0..self.ctx.n)
            .map(|j| self.coeff_signed(j).magnitude().clone())
            .max()
            .unwrap_or_default()
    }
}
