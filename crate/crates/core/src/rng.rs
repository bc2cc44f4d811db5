//! Deterministic counter-based random streams.
//!
//! Generator: `ctrmix64` version 1.  Every stream is defined by a 64-bit
//! `key`; the i-th output (counting from 0) is
//!
//! ```text
//! out(i) = mix13(key +w (i + 1) *w GAMMA)
//! GAMMA  = 0x9E3779B97F4A7C15
//! mix13(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!           z ^= z >> 27; z *= 0x94D049BB133111EB;
//!           z ^= z >> 31; return z
//! ```
//!
//! where `+w`/`*w` are wrapping 64-bit ops and `mix13` is the SplitMix64
//! finalizer.  Outputs depend only on `(key, i)`, so any language with 64-bit
//! integers can reproduce a stream.
//!
//! Stream keys are derived from structured coordinates, never picked ad hoc:
//!
//! ```text
//! derive(master, parts...) : h = mix13(master ^ 0x6A09E667F3BCC909)
//!                            for p in parts: h = mix13(h ^ (p *w GAMMA))
//! ```
//!
//! The simulator derives one stream per `(master seed, domain, unit, step)`
//! coordinate so concurrent units and later replays cannot alias.

/// Golden-ratio increment used by the counter (SplitMix64's gamma).
pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Initial xor applied to the master seed during key derivation.
const DERIVE_SALT: u64 = 0x6A09_E667_F3BC_C909;

/// Domain tags keeping unrelated stream families apart.
pub mod domain {
    /// Environment dynamics sampling (per unit, per step).
    pub const DYNAMICS: u64 = 1;
    /// Joint action sampling by partition agents (per partition, per step).
    pub const AGENT: u64 = 2;
    /// Monte-Carlo entropy estimation.
    pub const ENTROPY: u64 = 3;
    /// Bootstrap resampling inside the entropy estimator.
    pub const BOOTSTRAP: u64 = 4;
    /// Scratch streams for tests and auxiliary tooling.
    pub const MISC: u64 = 7;
}

#[inline(always)]
fn mix13(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// Derive a stream key from a master seed and structured coordinates.
pub fn derive_key(master: u64, parts: &[u64]) -> u64 {
    let mut h = mix13(master ^ DERIVE_SALT);
    for &p in parts {
        h = mix13(h ^ p.wrapping_mul(GAMMA));
    }
    h
}

/// A single deterministic stream: `key` fixed at construction, outputs indexed
/// by an internal counter.
#[derive(Debug, Clone)]
pub struct StreamRng {
    key: u64,
    counter: u64,
}

impl StreamRng {
    /// Stream for a raw key (counter starts at 0).
    pub fn from_key(key: u64) -> Self {
        StreamRng { key, counter: 0 }
    }

    /// Stream for `(master, parts...)` via [`derive_key`].
    pub fn derived(master: u64, parts: &[u64]) -> Self {
        StreamRng::from_key(derive_key(master, parts))
    }

    /// Next 64 uniform bits.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix13(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform integer in `[0, n)`.  Unbiased via rejection.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below requires n > 0");
        if n.is_power_of_two() {
            return self.next_u64() & (n - 1);
        }
        // Accept x < 2^64 - (2^64 mod n); for non-powers-of-two the modulus
        // is (u64::MAX % n) + 1, so the threshold fits in a u64.
        let threshold = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < threshold {
                return x % n;
            }
        }
    }

    /// Uniform float in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate (Box-Muller, cosine branch).
    pub fn next_normal(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
