//! Skew tent map generator in 64-bit fixed point.
//!
//! The state and the map parameter are fractions in `(0, 1)` stored as
//! `value / 2^64`. Every step is computed with 128-bit integer arithmetic so
//! the output stream is identical on every platform.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// XOR constant used to push the state off the absorbing values.
pub const ESCAPE_CONSTANT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Iterations discarded before the first output.
pub const WARMUP_ITERATIONS: u64 = 128;

/// `fix64(0.499)`, the map parameter used when a scenario does not set one.
pub const DEFAULT_PARAM: u64 = 0x7FBE_76C8_B439_5810;

const ONE: u128 = 1 << 64;
const OTP_MODULUS: u32 = 1_000_000;
// Largest multiple of 10^6 that fits in a u32 draw; draws at or above it are rejected.
const OTP_LIMIT: u32 = (u32::MAX / OTP_MODULUS) * OTP_MODULUS;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrngError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("duplicate nonce {0:032x}: generator stream repeated")]
    DuplicateNonce(u128),
}

/// Converts a fraction in `[0, 1)` to 64-bit fixed point, truncating.
pub fn fix64(x: f64) -> u64 {
    assert!((0.0..1.0).contains(&x), "fraction out of range: {x}");
    (x * ONE as f64) as u64
}

/// One iteration of the skew tent map.
///
/// Returns `state / a` when `state < a` and `(1 - state) / (1 - a)` otherwise,
/// truncated to the low 64 bits. A raw result of `0` or `2^64 - 1` is XOR-ed
/// with [`ESCAPE_CONSTANT`].
pub fn tent_step(state: u64, a: u64) -> Result<u64, PrngError> {
    if a == 0 || a == u64::MAX {
        return Err(PrngError::InvalidParameter("map parameter must lie strictly inside (0, 1)"));
    }
    if state == 0 || state == u64::MAX {
        return Err(PrngError::InvalidParameter("state must lie strictly inside (0, 1)"));
    }
    Ok(tent_step_unchecked(state, a))
}

#[inline]
fn tent_step_unchecked(state: u64, a: u64) -> u64 {
    let (s, a) = (state as u128, a as u128);
    let raw = if s < a {
        (s << 64) / a
    } else {
        ((ONE - s) << 64) / (ONE - a)
    };
    let out = raw as u64;
    if out == 0 || out == u64::MAX {
        out ^ ESCAPE_CONSTANT
    } else {
        out
    }
}

/// 128-bit nonce drawn from a [`TentPrng`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Nonce(pub u128);

impl fmt::Display for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

/// Six-digit one-time pin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OtpCode(u32);

impl OtpCode {
    pub fn new(value: u32) -> Option<Self> {
        (value < OTP_MODULUS).then_some(OtpCode(value))
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for OtpCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:06}", self.0)
    }
}

/// Deterministic chaos-based generator.
///
/// Single owner: clone it to fork a stream, never share it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TentPrng {
    state: u64,
    param: u64,
    discarded: u64,
    issued: BTreeSet<Nonce>,
}

impl TentPrng {
    /// Seeds the generator and runs the warm-up.
    pub fn new(seed: u64, param: u64) -> Result<Self, PrngError> {
        tent_step(seed, param)?;
        let mut prng = TentPrng {
            state: seed,
            param,
            discarded: 0,
            issued: BTreeSet::new(),
        };
        for _ in 0..WARMUP_ITERATIONS {
            prng.advance();
        }
        prng.discarded = WARMUP_ITERATIONS;
        Ok(prng)
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn param(&self) -> u64 {
        self.param
    }

    pub fn discarded(&self) -> u64 {
        self.discarded
    }

    #[inline]
    fn advance(&mut self) -> u64 {
        self.state = tent_step_unchecked(self.state, self.param);
        self.state
    }

    /// Advances one iteration and returns bits 16..47 of the new state.
    pub fn next_u32(&mut self) -> u32 {
        (self.advance() >> 16) as u32
    }

    /// Returns `n` bits packed most-significant-bit first.
    ///
    /// Consumes `ceil(n / 32)` iterations. Unused bits of the final byte are zero.
    pub fn next_bits(&mut self, n: usize) -> Vec<u8> {
        let words = n.div_ceil(32);
        let mut bytes = Vec::with_capacity(words * 4);
        for _ in 0..words {
            bytes.extend_from_slice(&self.next_u32().to_be_bytes());
        }
        bytes.truncate(n.div_ceil(8));
        if n % 8 != 0 {
            if let Some(last) = bytes.last_mut() {
                *last &= 0xFFu8 << (8 - n % 8);
            }
        }
        bytes
    }

    /// Draws a fresh 128-bit nonce and records it in the run-local set.
    pub fn generate_nonce(&mut self) -> Result<Nonce, PrngError> {
        let bits = self.next_bits(128);
        let mut raw = [0u8; 16];
        raw.copy_from_slice(&bits);
        let nonce = Nonce(u128::from_be_bytes(raw));
        if !self.issued.insert(nonce) {
            return Err(PrngError::DuplicateNonce(nonce.0));
        }
        Ok(nonce)
    }

    /// Draws a uniformly distributed six-digit code by rejection sampling.
    pub fn generate_otp(&mut self) -> OtpCode {
        loop {
            let draw = self.next_u32();
            if draw < OTP_LIMIT {
                return OtpCode(draw % OTP_MODULUS);
            }
        }
    }

    pub fn issued_nonces(&self) -> usize {
        self.issued.len()
    }
}

/// A family of generators sharing one seed, one stream per subject.
///
/// Draws made for one subject leave every other subject's stream untouched,
/// so what a subject receives does not depend on the order in which subjects
/// are served. Nonces stay unique across the whole family.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KeyedPrng {
    seed: u64,
    param: u64,
    streams: BTreeMap<String, TentPrng>,
    issued: BTreeSet<Nonce>,
}

impl KeyedPrng {
    pub fn new(seed: u64, param: u64) -> Result<Self, PrngError> {
        tent_step(seed, param)?;
        Ok(KeyedPrng { seed, param, streams: BTreeMap::new(), issued: BTreeSet::new() })
    }

    /// The generator for `subject`, created and warmed up on first use.
    pub fn stream(&mut self, subject: &str) -> &mut TentPrng {
        let (seed, param) = (self.seed, self.param);
        self.streams.entry(subject.to_string()).or_insert_with(|| {
            TentPrng::new(derive_seed(seed, subject_stream(subject)), param).expect("parameter checked in new")
        })
    }

    pub fn generate_nonce(&mut self, subject: &str) -> Result<Nonce, PrngError> {
        let nonce = self.stream(subject).generate_nonce()?;
        if !self.issued.insert(nonce) {
            return Err(PrngError::DuplicateNonce(nonce.0));
        }
        Ok(nonce)
    }

    pub fn generate_otp(&mut self, subject: &str) -> OtpCode {
        self.stream(subject).generate_otp()
    }

    pub fn issued_nonces(&self) -> usize {
        self.issued.len()
    }
}

fn subject_stream(subject: &str) -> u64 {
    let digest = Sha256::digest(subject.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Derives an independent, valid generator seed from a scenario seed and a stream label.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    match z {
        0 => ESCAPE_CONSTANT,
        u64::MAX => !ESCAPE_CONSTANT,
        other => other,
    }
}

/// Parses a hexadecimal 64-bit value, with or without a `0x` prefix.
pub fn parse_hex_u64(text: &str) -> Result<u64, PrngError> {
    let digits = text.trim().trim_start_matches("0x").trim_start_matches("0X");
    if digits.is_empty() || digits.len() > 16 {
        return Err(PrngError::InvalidParameter("expected 1 to 16 hexadecimal digits"));
    }
    u64::from_str_radix(digits, 16).map_err(|_| PrngError::InvalidParameter("not a hexadecimal number"))
}
