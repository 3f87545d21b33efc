//! Keyed bipolar decimal sequences: the binary expansion digits of `1/q`
//! for an odd prime `q`, mapped to +/-1 chips.
//!
//! Digit `i` of the expansion is `(2^(i+1) mod q) mod 2`; the stream is
//! periodic with period equal to the multiplicative order of 2 modulo `q`,
//! which always divides `q - 1`. Everything is exact integer arithmetic, so
//! the sequence for a given key is identical across runs and platforms.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DseqError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("q = 2 has no binary expansion digits; pick an odd prime")]
    QisTwo,
}

/// One keyed bipolar sequence. Stores a single period of raw binary digits
/// and extends cyclically on read, so any chip index is valid.
#[derive(Clone, Debug)]
pub struct DSequence {
    prime_q: u64,
    period: u64,
    period_bits: Vec<u8>,
}

impl DSequence {
    /// Builds the sequence for key `q`. Fails if `q` is 2 or not prime.
    pub fn new(q: u64) -> Result<Self, DseqError> {
        if q == 2 {
            return Err(DseqError::QisTwo);
        }
        if !is_prime(q) {
            return Err(DseqError::NotPrime(q));
        }
        let period = multiplicative_order_of_two(q);
        let mut period_bits = Vec::with_capacity(period as usize);
        // state = 2^(i+1) mod q, advanced by doubling
        let mut state: u64 = 2 % q;
        for _ in 0..period {
            period_bits.push((state % 2) as u8);
            state = state * 2 % q;
        }
        debug_assert_eq!(state, 2 % q);
        Ok(Self {
            prime_q: q,
            period,
            period_bits,
        })
    }

    /// Convenience wrapper: the first `length` bipolar chips for key `q`.
    pub fn generate(q: u64, length: usize) -> Result<Vec<i8>, DseqError> {
        let seq = Self::new(q)?;
        Ok((0..length as u64).map(|i| seq.chip(i)).collect())
    }

    pub fn prime(&self) -> u64 {
        self.prime_q
    }

    /// Multiplicative order of 2 mod q; divides `q - 1`.
    pub fn period(&self) -> u64 {
        self.period
    }

    /// Raw binary digit at index `i` (cyclic).
    #[inline]
    pub fn digit(&self, i: u64) -> u8 {
        self.period_bits[(i % self.period) as usize]
    }

    /// Bipolar chip at index `i`: digit 0 maps to -1, digit 1 to +1.
    #[inline]
    pub fn chip(&self, i: u64) -> i8 {
        if self.digit(i) == 1 {
            1
        } else {
            -1
        }
    }

    /// The chips consumed by block `block_linear`: a continuous stream
    /// across blocks in row-major order, `band_size` chips per block.
    /// Embedding and detection call this with identical arguments, so the
    /// segments always line up.
    pub fn segment_for_block(&self, block_linear: usize, band_size: usize) -> Vec<i8> {
        let start = block_linear as u64 * band_size as u64;
        (start..start + band_size as u64).map(|i| self.chip(i)).collect()
    }

    /// A human-readable warning when the stream period is shorter than the
    /// total chips a pipeline will consume, which makes distinct blocks
    /// reuse chips. Degenerate keys only; the usual four-digit primes have
    /// periods in the thousands.
    pub fn coverage_warning(&self, total_chips: u64) -> Option<String> {
        (self.period < total_chips).then(|| {
            format!(
                "d-sequence period {} for q={} is shorter than the {} chips consumed; \
                 blocks will reuse chips cyclically",
                self.period, self.prime_q, total_chips
            )
        })
    }
}

/// Deterministic Miller-Rabin, valid for all u64.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0u32;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    // This base set is a proven deterministic witness set for n < 2^64.
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = mod_pow(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mod_mul(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mod_mul(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn mod_pow(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mod_mul(acc, base, m);
        }
        base = mod_mul(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Multiplicative order of 2 modulo an odd prime q: the smallest k > 0 with
/// 2^k = 1 (mod q). Computed by reducing q - 1 along its prime factors.
fn multiplicative_order_of_two(q: u64) -> u64 {
    let mut order = q - 1;
    for p in prime_factors(q - 1) {
        while order % p == 0 && mod_pow(2, order / p, q) == 1 {
            order /= p;
        }
    }
    order
}

/// Distinct prime factors by trial division.
fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut factors = Vec::new();
    let mut push = |p: u64, n: &mut u64| {
        if *n % p == 0 {
            factors.push(p);
            while *n % p == 0 {
                *n /= p;
            }
        }
    };
    push(2, &mut n);
    let mut p = 3;
    while p * p <= n {
        push(p, &mut n);
        p += 2;
    }
    if n > 1 {
        factors.push(n);
    }
    factors
}
