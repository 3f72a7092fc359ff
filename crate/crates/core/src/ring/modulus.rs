//! Word-sized prime moduli and the scalar arithmetic the NTT is built on.

use super::RingError;

/// Hard cap on modulus size. Shoup multiplication needs `q < 2^63`; the
/// lazy butterflies additionally need `2q < 2^63`.
pub const MAX_MODULUS_BITS: u32 = 62;

/// A prime modulus `q < 2^62` with `q ≡ 1 (mod 2n)` for the ring it belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Modulus {
    value: u64,
    bits: u32,
}

impl Modulus {
    /// Checks primality and the NTT congruence for degree `n`.
    pub fn new(value: u64, n: usize) -> Result<Self, RingError> {
        if value < 3 || value >> MAX_MODULUS_BITS != 0 {
            return Err(RingError::InvalidModulus { value, reason: "outside [3, 2^62)" });
        }
        if !is_prime(value) {
            return Err(RingError::InvalidModulus { value, reason: "not prime" });
        }
        if value % (2 * n as u64) != 1 {
            return Err(RingError::InvalidModulus { value, reason: "not congruent to 1 mod 2n" });
        }
        Ok(Self { value, bits: 64 - value.leading_zeros() })
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    /// Bit length of `q`.
    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.value as u128) as u64
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base %= self.value;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse via Fermat; `a` must be nonzero.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(a % self.value != 0);
        self.pow(a, self.value - 2)
    }

    /// `floor(w * 2^64 / q)` for Shoup multiplication by the constant `w`.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// `a * w mod q` given `w_shoup = self.shoup(w)`. Requires `w < q`.
    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    /// Reduces a signed integer into `[0, q)`.
    #[inline]
    pub fn reduce_i128(&self, v: i128) -> u64 {
        v.rem_euclid(self.value as i128) as u64
    }

    /// Finds a primitive `2n`-th root of unity `psi`, so that `psi^n ≡ -1`.
    pub(crate) fn primitive_2n_root(&self, n: usize) -> Option<u64> {
        let order = 2 * n as u64;
        if (self.value - 1) % order != 0 {
            return None;
        }
        let cofactor = (self.value - 1) / order;
        (2..self.value.min(1 << 20))
            .map(|g| self.pow(g, cofactor))
            .find(|&psi| self.pow(psi, n as u64) == self.value - 1)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Up to `count` primes `p ≡ 1 (mod 2n)` with exactly `bits` bits, largest first.
pub(crate) fn ntt_primes_below(bits: u32, n: usize, count: usize) -> Vec<u64> {
    let step = 2 * n as u64;
    let upper = 1u64 << bits;
    let lower = 1u64 << (bits - 1);
    // largest candidate < 2^bits that is 1 mod 2n
    let mut candidate = ((upper - 1) / step) * step + 1;
    if candidate >= upper {
        candidate -= step;
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count && candidate > lower && candidate > step {
        if is_prime(candidate) {
            out.push(candidate);
        }
        candidate -= step;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_division(n: u64) -> bool {
        if n < 2 {
            return false;
        }
        let mut d = 2u64;
        while d * d <= n {
            if n % d == 0 {
                return false;
            }
            d += 1;
        }
        true
    }

    #[test]
    fn miller_rabin_agrees_with_trial_division() {
        for n in 0..20_000u64 {
            assert_eq!(is_prime(n), trial_division(n), "n = {n}");
        }
        // strong pseudoprimes to several small bases
        for n in [3_215_031_751u64, 2_152_302_898_747, 3_474_749_660_383, 341_550_071_728_321] {
            assert!(!is_prime(n));
        }
        assert!(is_prime((1u64 << 61) - 1));
    }

    #[test]
    fn rejects_bad_moduli() {
        assert!(Modulus::new(17, 4).is_ok());
        assert!(Modulus::new(15, 4).is_err());
        assert!(Modulus::new(13, 4).is_err()); // 13 mod 8 = 5
        assert!(Modulus::new(1 << 62, 4).is_err());
    }

    #[test]
    fn shoup_matches_plain_mul() {
        let q = Modulus::new(ntt_primes_below(60, 8, 1)[0], 8).unwrap();
        let w = q.value() - 12345;
        let ws = q.shoup(w);
        for a in [0, 1, 2, q.value() - 1, 1 << 59, 987_654_321] {
            assert_eq!(q.mul_shoup(a, w, ws), q.mul(a, w));
        }
    }

    #[test]
    fn root_has_exact_order() {
        let q = Modulus::new(17, 4).unwrap();
        let psi = q.primitive_2n_root(4).unwrap();
        assert_eq!(q.pow(psi, 4), 16);
        assert_eq!(q.pow(psi, 8), 1);
    }
}
