//! Seeded randomness for ring elements.
//!
//! Uniform elements are expanded from ChaCha20 keyed by a SHA-256 derived
//! seed and rejection-sampled per residue ring, so an element is a pure
//! function of its seed. Gaussian elements are rounded continuous Gaussians
//! with a hard cut at six standard deviations.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ring::{RingContext, RingElement};

/// Default width of the key and error distributions.
pub const DEFAULT_SIGMA: f64 = 3.2;
/// Default smudging width is `2^DEFAULT_SMUDGE_BITS * sigma_err`.
pub const DEFAULT_SMUDGE_BITS: u32 = 11;
/// Smudging must be at least `2^SMUDGE_FLOOR_BITS * sigma_err`.
pub const SMUDGE_FLOOR_BITS: u32 = 10;
/// Gaussian samples are cut at this many standard deviations.
pub const TAIL_CUT: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("standard deviation {name} = {value} must be positive and finite")]
    NonPositive { name: &'static str, value: f64 },
    #[error("smudging width {smudge} is below the floor 2^{SMUDGE_FLOOR_BITS} * {err}")]
    SmudgeBelowFloor { smudge: f64, err: f64 },
}

/// Widths of the secret (χ), error (ψ) and smudging (φ) distributions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    sigma_err: f64,
    sigma_secret: f64,
    sigma_smudge: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::with_smudge_bits(DEFAULT_SMUDGE_BITS).expect("default smudging is above the floor")
    }
}

impl NoiseSpec {
    pub fn new(sigma_err: f64, sigma_secret: f64, sigma_smudge: f64) -> Result<Self, NoiseError> {
        for (name, value) in
            [("sigma_err", sigma_err), ("sigma_secret", sigma_secret), ("sigma_smudge", sigma_smudge)]
        {
            if !(value.is_finite() && value > 0.0) {
                return Err(NoiseError::NonPositive { name, value });
            }
        }
        if sigma_smudge < f64::from(1u32 << SMUDGE_FLOOR_BITS) * sigma_err {
            return Err(NoiseError::SmudgeBelowFloor { smudge: sigma_smudge, err: sigma_err });
        }
        Ok(Self { sigma_err, sigma_secret, sigma_smudge })
    }

    /// Default χ and ψ with `sigma_smudge = 2^bits * sigma_err`.
    pub fn with_smudge_bits(bits: u32) -> Result<Self, NoiseError> {
        Self::new(DEFAULT_SIGMA, DEFAULT_SIGMA, 2f64.powi(bits as i32) * DEFAULT_SIGMA)
    }

    /// Skips every check, including the smudging floor. Only for experiments
    /// that need degenerate noise (e.g. `sigma_smudge = 0`).
    pub fn new_unchecked(sigma_err: f64, sigma_secret: f64, sigma_smudge: f64) -> Self {
        Self { sigma_err, sigma_secret, sigma_smudge }
    }

    pub fn sigma_err(&self) -> f64 {
        self.sigma_err
    }

    pub fn sigma_secret(&self) -> f64 {
        self.sigma_secret
    }

    pub fn sigma_smudge(&self) -> f64 {
        self.sigma_smudge
    }
}

/// A 32-byte seed.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub [u8; 32]);

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed(")?;
        for b in &self.0[..4] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

impl Seed {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    /// Expands a short integer seed (CLI `--seed`) into a full seed.
    pub fn from_u64(value: u64) -> Self {
        Self::hash(&[b"HYBAGG-SEED", &value.to_le_bytes()])
    }

    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    /// Child seed for a labelled, indexed purpose.
    pub fn derive(&self, label: &[u8], index: u64) -> Self {
        Self::hash(&[b"HYBAGG-DERIVE", &self.0, &(label.len() as u64).to_le_bytes(), label, &index.to_le_bytes()])
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// A ChaCha20 generator keyed by this seed.
    pub fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(self.0)
    }

    fn hash(parts: &[&[u8]]) -> Self {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p);
        }
        Self(h.finalize().into())
    }
}

/// Deterministic uniform element from `(seed, domain_tag, ctx)`.
pub fn sample_uniform(ctx: &Arc<RingContext>, seed: &Seed, domain_tag: &[u8]) -> RingElement {
    let mut h = Sha256::new();
    h.update(b"HYBAGG-UNIFORM");
    h.update(seed.as_bytes());
    h.update((domain_tag.len() as u64).to_le_bytes());
    h.update(domain_tag);
    h.update((ctx.n() as u64).to_le_bytes());
    for q in ctx.moduli_values() {
        h.update(q.to_le_bytes());
    }
    let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
    uniform_from_stream(ctx, &mut rng)
}

/// Uniform element by per-residue rejection sampling from `rng`.
///
/// Each candidate takes the fewest whole bytes covering the modulus, masked
/// to its bit length; candidates `>= q` are discarded.
pub fn uniform_from_stream(ctx: &Arc<RingContext>, rng: &mut impl RngCore) -> RingElement {
    let n = ctx.n();
    let mut data = Vec::with_capacity(n * ctx.chain_len());
    let mut stream = ByteStream::new(rng);
    for m in ctx.moduli() {
        let q = m.value();
        let width = m.bits().div_ceil(8) as usize;
        let mask = if m.bits() == 64 { u64::MAX } else { (1u64 << m.bits()) - 1 };
        let mut filled = 0;
        while filled < n {
            // bytes past `width` are stale slack; the mask drops them
            let v = stream.next_word(width) & mask;
            if v < q {
                data.push(v);
                filled += 1;
            }
        }
    }
    RingElement::from_residues(ctx, data).expect("rejection sampling yields reduced residues")
}

const STREAM_BLOCK: usize = 4096;

// Keystream reader handing out little-endian words of a fixed byte width.
// The buffer carries 8 bytes of slack so every read is a single unaligned load.
struct ByteStream<'a, R: RngCore> {
    rng: &'a mut R,
    buf: Box<[u8; STREAM_BLOCK + 8]>,
    pos: usize,
}

impl<'a, R: RngCore> ByteStream<'a, R> {
    fn new(rng: &'a mut R) -> Self {
        Self { rng, buf: Box::new([0; STREAM_BLOCK + 8]), pos: STREAM_BLOCK }
    }

    #[inline(always)]
    fn next_word(&mut self, width: usize) -> u64 {
        if self.pos + width > STREAM_BLOCK {
            self.rng.fill_bytes(&mut self.buf[..STREAM_BLOCK]);
            self.pos = 0;
        }
        let bytes: [u8; 8] = self.buf[self.pos..self.pos + 8].try_into().expect("slack");
        self.pos += width;
        u64::from_le_bytes(bytes)
    }
}

/// `n` rounded-Gaussian integers with a hard cut at `TAIL_CUT * sigma`.
/// `sigma == 0` yields all zeros.
pub fn gaussian_coeffs<R: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Vec<i64> {
    assert!(sigma >= 0.0 && sigma.is_finite(), "sigma must be finite and non-negative");
    if sigma == 0.0 {
        return vec![0; n];
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let bound = TAIL_CUT * sigma;
    (0..n)
        .map(|_| loop {
            let v = normal.sample(rng).round();
            if v.abs() <= bound {
                break v as i64;
            }
        })
        .collect()
}

/// Rounded-Gaussian element, stored centered mod each prime.
pub fn sample_gaussian<R: Rng + ?Sized>(ctx: &Arc<RingContext>, sigma: f64, rng: &mut R) -> RingElement {
    let coeffs = gaussian_coeffs(ctx.n(), sigma, rng);
    RingElement::from_i64(ctx, &coeffs).expect("n coefficients")
}

/// Smudging noise `e* ← φ`.
pub fn sample_smudging<R: Rng + ?Sized>(ctx: &Arc<RingContext>, spec: &NoiseSpec, rng: &mut R) -> RingElement {
    sample_gaussian(ctx, spec.sigma_smudge, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;

    // chi-squared 0.999 quantile with 63 degrees of freedom (scipy.stats.chi2.ppf)
    const CHI2_63_999: f64 = 103.442_377;

    fn chi_squared_uniform(values: &[u64], q: u64, bins: usize) -> f64 {
        let mut counts = vec![0usize; bins];
        for &v in values {
            counts[(v as u128 * bins as u128 / q as u128) as usize] += 1;
        }
        let expected = values.len() as f64 / bins as f64;
        counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn uniform_is_deterministic_and_tag_separated() {
        let ctx = RingContext::new(64, 100).unwrap();
        let seed = Seed::from_u64(3);
        assert_eq!(sample_uniform(&ctx, &seed, b"a"), sample_uniform(&ctx, &seed, b"a"));
        assert_ne!(sample_uniform(&ctx, &seed, b"a"), sample_uniform(&ctx, &seed, b"b"));
        assert_ne!(sample_uniform(&ctx, &seed, b"a"), sample_uniform(&ctx, &Seed::from_u64(4), b"a"));
    }

    #[test]
    fn uniform_mean_within_three_standard_errors() {
        let ctx = RingContext::new(1024, 50).unwrap();
        let q = ctx.moduli()[0].value() as f64;
        let mut all = Vec::new();
        for s in 0..10 {
            let e = sample_uniform(&ctx, &Seed::from_u64(s), b"mean");
            all.extend(e.residues(0).iter().map(|&r| r as f64));
        }
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        // variance of U{0..q-1} is (q^2 - 1) / 12
        let se = (q * q / 12.0 / all.len() as f64).sqrt();
        assert!((mean - (q - 1.0) / 2.0).abs() < 3.0 * se, "mean {mean} vs {}", (q - 1.0) / 2.0);
    }

    #[test]
    fn uniform_passes_chi_squared() {
        let ctx = RingContext::new(1 << 14, 50).unwrap();
        let e = sample_uniform(&ctx, &Seed::from_u64(11), b"chi2");
        let stat = chi_squared_uniform(e.residues(0), ctx.moduli()[0].value(), 64);
        assert!(stat < CHI2_63_999, "chi2 = {stat}");
    }

    #[test]
    fn gaussian_respects_tail_cut() {
        let ctx = RingContext::new(4096, 100).unwrap();
        let mut rng = Seed::from_u64(5).rng();
        let e = sample_gaussian(&ctx, DEFAULT_SIGMA, &mut rng);
        for v in e.to_signed() {
            let v = v.to_i64().unwrap();
            assert!((-20..=20).contains(&v));
        }
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Seed::from_u64(6).rng();
        let xs: Vec<f64> = gaussian_coeffs(1 << 16, DEFAULT_SIGMA, &mut rng).into_iter().map(|v| v as f64).collect();
        let (mean, var) = mean_var(&xs);
        let sigma = DEFAULT_SIGMA;
        assert!(mean.abs() < 3.0 * sigma / 256.0, "mean {mean}");
        assert!((var - sigma * sigma).abs() < 0.1 * sigma * sigma, "var {var}");
    }

    #[test]
    fn smudging_bounded_and_wider() {
        let ctx = RingContext::new(4096, 100).unwrap();
        let spec = NoiseSpec::default();
        let mut rng = Seed::from_u64(7).rng();
        let e = sample_smudging(&ctx, &spec, &mut rng);
        let bound = TAIL_CUT * spec.sigma_smudge();
        let smudge: Vec<f64> = e.to_signed().iter().map(|v| v.to_f64().unwrap()).collect();
        assert!(smudge.iter().all(|v| v.abs() <= bound));

        let err: Vec<f64> = gaussian_coeffs(1 << 16, spec.sigma_err(), &mut rng).into_iter().map(|v| v as f64).collect();
        let smudge: Vec<f64> = gaussian_coeffs(1 << 16, spec.sigma_smudge(), &mut rng).into_iter().map(|v| v as f64).collect();
        let ratio = mean_var(&smudge).1 / mean_var(&err).1;
        let expected = (spec.sigma_smudge() / spec.sigma_err()).powi(2);
        assert!((ratio / expected - 1.0).abs() < 0.2, "ratio {ratio} vs {expected}");
    }

    #[test]
    fn noise_spec_validation() {
        assert!(matches!(NoiseSpec::new(3.2, 3.2, 100.0), Err(NoiseError::SmudgeBelowFloor { .. })));
        assert!(matches!(NoiseSpec::new(0.0, 3.2, 1e6), Err(NoiseError::NonPositive { .. })));
        assert!(NoiseSpec::with_smudge_bits(SMUDGE_FLOOR_BITS).is_ok());
        assert!(NoiseSpec::with_smudge_bits(SMUDGE_FLOOR_BITS - 1).is_err());
        let d = NoiseSpec::default();
        assert_eq!(d.sigma_smudge(), 2048.0 * 3.2);
    }
}
