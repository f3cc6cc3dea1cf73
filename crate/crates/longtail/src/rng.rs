//! Deterministic counter-style random streams.
//!
//! Every random draw in this crate is addressed by a derivation path built
//! from a root seed, string labels, and integer indices, e.g.
//! `(seed, "row", j, "feat")`. Two consequences:
//!
//! * a draw depends only on its path, never on how many draws other code
//!   made before it, so generation can be parallelized in any order and
//!   still produce bit-identical output;
//! * the whole scheme is a few dozen lines of integer arithmetic that can
//!   be reimplemented exactly in another language if a dataset ever needs
//!   to be regenerated outside this crate.
//!
//! The mixing function is the splitmix64 finalizer, which is bijective on
//! `u64`; distinct derivation paths therefore map to distinct stream states
//! except for astronomically unlikely multi-step collisions.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer. Bijective on `u64`.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A point in the stream derivation tree. Cheap to copy; refining it with
/// [`StreamKey::label`] or [`StreamKey::index`] never mutates the parent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    state: u64,
}

impl StreamKey {
    pub fn from_seed(seed: u64) -> Self {
        StreamKey { state: mix(seed ^ GOLDEN) }
    }

    /// Absorb a string label (FNV-1a over the bytes, then re-mix).
    pub fn label(self, tag: &str) -> Self {
        let mut h = self.state;
        for &b in tag.as_bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3);
        }
        StreamKey { state: mix(h) }
    }

    /// Absorb an integer index. `mix` is bijective, so distinct indices
    /// yield distinct child keys under a fixed parent.
    pub fn index(self, i: u64) -> Self {
        StreamKey { state: mix(self.state ^ mix(i)) }
    }

    pub fn stream(self) -> Stream {
        Stream { state: self.state }
    }
}

/// A splitmix64 sequence rooted at a derived key.
#[derive(Clone, Debug)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in `[0, 1)` with 53 random mantissa bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; safe as a logarithm argument.
    fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller (cosine branch only, one value per
    /// call, two uniforms consumed).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `[0, bound)`, unbiased via rejection.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        loop {
            let x = self.next_u64();
            let r = x % bound;
            // Accept only draws from complete blocks of size `bound`.
            if x - r <= u64::MAX - (bound - 1) {
                return r;
            }
        }
    }
}
