//! 256-bit machine words, addresses, and Keccak-256.
//!
//! [`Word256`] carries EVM wraparound semantics: every arithmetic result is
//! reduced modulo 2^256, division and remainder by zero yield zero, and
//! comparisons return plain `bool` at this API layer (the interpreter turns
//! them into 0/1 words explicitly).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WordParseError {
    #[error("empty literal")]
    Empty,
    #[error("invalid digit in `{0}`")]
    InvalidDigit(String),
    #[error("literal `{0}` does not fit in {1} bytes")]
    Overflow(String, usize),
}

/// Unsigned 256-bit word. Limbs are little-endian (`limbs[0]` is least significant).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Word256 {
    limbs: [u64; 4],
}

impl Word256 {
    pub const ZERO: Word256 = Word256 { limbs: [0; 4] };
    pub const ONE: Word256 = Word256 { limbs: [1, 0, 0, 0] };
    pub const MAX: Word256 = Word256 { limbs: [u64::MAX; 4] };

    pub const fn from_u64(v: u64) -> Self {
        Word256 { limbs: [v, 0, 0, 0] }
    }

    pub fn from_u128(v: u128) -> Self {
        Word256 { limbs: [v as u64, (v >> 64) as u64, 0, 0] }
    }

    /// 2^k for k < 256.
    pub fn pow2(k: u32) -> Self {
        assert!(k < 256, "2^{k} does not fit in a word");
        let mut w = Word256::ZERO;
        w.limbs[(k / 64) as usize] = 1u64 << (k % 64);
        w
    }

    pub fn from_be_bytes(bytes: [u8; 32]) -> Self {
        let mut limbs = [0u64; 4];
        for (i, limb) in limbs.iter_mut().enumerate() {
            let start = 32 - 8 * (i + 1);
            let mut chunk = [0u8; 8];
            chunk.copy_from_slice(&bytes[start..start + 8]);
            *limb = u64::from_be_bytes(chunk);
        }
        Word256 { limbs }
    }

    /// Big-endian bytes, left-padded with zeros. Panics if longer than 32 bytes.
    pub fn from_be_slice(bytes: &[u8]) -> Self {
        assert!(bytes.len() <= 32, "slice longer than a word");
        let mut buf = [0u8; 32];
        buf[32 - bytes.len()..].copy_from_slice(bytes);
        Self::from_be_bytes(buf)
    }

    pub fn to_be_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, limb) in self.limbs.iter().enumerate() {
            let start = 32 - 8 * (i + 1);
            out[start..start + 8].copy_from_slice(&limb.to_be_bytes());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.limbs == [0; 4]
    }

    pub fn bit(&self, i: u32) -> bool {
        (self.limbs[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    /// Number of significant bits.
    pub fn bits(&self) -> u32 {
        for i in (0..4).rev() {
            if self.limbs[i] != 0 {
                return 64 * i as u32 + (64 - self.limbs[i].leading_zeros());
            }
        }
        0
    }

    /// Value as `u64` if it fits.
    pub fn to_u64(&self) -> Option<u64> {
        if self.limbs[1..] == [0, 0, 0] {
            Some(self.limbs[0])
        } else {
            None
        }
    }

    pub fn to_usize(&self) -> Option<usize> {
        self.to_u64().and_then(|v| usize::try_from(v).ok())
    }

    pub fn overflowing_add(self, rhs: Word256) -> (Word256, bool) {
        let mut out = [0u64; 4];
        let mut carry = false;
        for (i, o) in out.iter_mut().enumerate() {
            let (s1, c1) = self.limbs[i].overflowing_add(rhs.limbs[i]);
            let (s2, c2) = s1.overflowing_add(carry as u64);
            *o = s2;
            carry = c1 || c2;
        }
        (Word256 { limbs: out }, carry)
    }

    pub fn overflowing_sub(self, rhs: Word256) -> (Word256, bool) {
        let mut out = [0u64; 4];
        let mut borrow = false;
        for (i, o) in out.iter_mut().enumerate() {
            let (d1, b1) = self.limbs[i].overflowing_sub(rhs.limbs[i]);
            let (d2, b2) = d1.overflowing_sub(borrow as u64);
            *o = d2;
            borrow = b1 || b2;
        }
        (Word256 { limbs: out }, borrow)
    }

    pub fn wrapping_add(self, rhs: Word256) -> Word256 {
        self.overflowing_add(rhs).0
    }

    pub fn wrapping_sub(self, rhs: Word256) -> Word256 {
        self.overflowing_sub(rhs).0
    }

    pub fn wrapping_mul(self, rhs: Word256) -> Word256 {
        let mut out = [0u64; 4];
        for i in 0..4 {
            let mut carry: u128 = 0;
            for j in 0..(4 - i) {
                let cur = out[i + j] as u128 + (self.limbs[i] as u128) * (rhs.limbs[j] as u128) + carry;
                out[i + j] = cur as u64;
                carry = cur >> 64;
            }
        }
        Word256 { limbs: out }
    }

    fn shl1(self) -> Word256 {
        let mut out = [0u64; 4];
        for i in 0..4 {
            out[i] = self.limbs[i] << 1;
            if i > 0 {
                out[i] |= self.limbs[i - 1] >> 63;
            }
        }
        Word256 { limbs: out }
    }

    /// Quotient and remainder; both zero when `rhs` is zero (EVM convention).
    pub fn div_rem(self, rhs: Word256) -> (Word256, Word256) {
        if rhs.is_zero() {
            return (Word256::ZERO, Word256::ZERO);
        }
        if self < rhs {
            return (Word256::ZERO, self);
        }
        let mut quotient = Word256::ZERO;
        let mut rem = Word256::ZERO;
        for i in (0..self.bits()).rev() {
            rem = rem.shl1();
            if self.bit(i) {
                rem.limbs[0] |= 1;
            }
            if rem >= rhs {
                rem = rem.wrapping_sub(rhs);
                quotient.limbs[(i / 64) as usize] |= 1u64 << (i % 64);
            }
        }
        (quotient, rem)
    }

    pub fn evm_div(self, rhs: Word256) -> Word256 {
        self.div_rem(rhs).0
    }

    pub fn evm_mod(self, rhs: Word256) -> Word256 {
        self.div_rem(rhs).1
    }

    pub fn bitand(self, rhs: Word256) -> Word256 {
        let mut out = self;
        for i in 0..4 {
            out.limbs[i] &= rhs.limbs[i];
        }
        out
    }

    pub fn bitor(self, rhs: Word256) -> Word256 {
        let mut out = self;
        for i in 0..4 {
            out.limbs[i] |= rhs.limbs[i];
        }
        out
    }

    pub fn bitnot(self) -> Word256 {
        let mut out = self;
        for l in out.limbs.iter_mut() {
            *l = !*l;
        }
        out
    }

    /// EVM truth value: 1 for true, 0 for false.
    pub fn from_bool(b: bool) -> Word256 {
        if b {
            Word256::ONE
        } else {
            Word256::ZERO
        }
    }

    pub fn to_biguint(&self) -> BigUint {
        BigUint::from_bytes_be(&self.to_be_bytes())
    }

    /// Reduces modulo 2^256.
    pub fn from_biguint_wrapping(v: &BigUint) -> Word256 {
        let bytes = v.to_bytes_be();
        let tail = if bytes.len() > 32 { &bytes[bytes.len() - 32..] } else { &bytes[..] };
        Word256::from_be_slice(tail)
    }

    pub fn from_biguint(v: &BigUint) -> Option<Word256> {
        if v.bits() > 256 {
            None
        } else {
            Some(Self::from_biguint_wrapping(v))
        }
    }

    /// Minimal `0x` hex rendering.
    pub fn to_hex(&self) -> String {
        let bytes = self.to_be_bytes();
        let s = hex::encode(bytes);
        let trimmed = s.trim_start_matches('0');
        if trimmed.is_empty() {
            "0x0".to_string()
        } else {
            format!("0x{trimmed}")
        }
    }

    pub fn to_decimal(&self) -> String {
        self.to_biguint().to_str_radix(10)
    }
}

impl PartialOrd for Word256 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Word256 {
    fn cmp(&self, other: &Self) -> Ordering {
        for i in (0..4).rev() {
            match self.limbs[i].cmp(&other.limbs[i]) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }
}

impl From<u64> for Word256 {
    fn from(v: u64) -> Self {
        Word256::from_u64(v)
    }
}

impl From<Address> for Word256 {
    fn from(a: Address) -> Self {
        a.to_word()
    }
}

impl fmt::Debug for Word256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word256({})", self.to_hex())
    }
}

impl fmt::Display for Word256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Accepts `0x`-prefixed hex, plain decimal, or `2^k`.
impl FromStr for Word256 {
    type Err = WordParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(WordParseError::Empty);
        }
        if let Some(exp) = s.strip_prefix("2^") {
            let k: u32 = exp.parse().map_err(|_| WordParseError::InvalidDigit(s.to_string()))?;
            if k >= 256 {
                return Err(WordParseError::Overflow(s.to_string(), 32));
            }
            return Ok(Word256::pow2(k));
        }
        let big = if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            if h.is_empty() {
                return Err(WordParseError::Empty);
            }
            BigUint::parse_bytes(h.as_bytes(), 16)
        } else {
            BigUint::parse_bytes(s.as_bytes(), 10)
        }
        .ok_or_else(|| WordParseError::InvalidDigit(s.to_string()))?;
        Word256::from_biguint(&big).ok_or_else(|| WordParseError::Overflow(s.to_string(), 32))
    }
}

impl Serialize for Word256 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Word256 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(n) => Ok(Word256::from_u64(n)),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// `(a + b) mod 2^256`.
pub fn evm_add(a: Word256, b: Word256) -> Word256 {
    a.wrapping_add(b)
}

/// `(a - b) mod 2^256`.
pub fn evm_sub(a: Word256, b: Word256) -> Word256 {
    a.wrapping_sub(b)
}

/// 20-byte account identifier.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0; 20]);

    /// Low 20 bytes of a word (the `Partial32B(12, 31, ..)` view).
    pub fn from_word(w: Word256) -> Address {
        let bytes = w.to_be_bytes();
        let mut a = [0u8; 20];
        a.copy_from_slice(&bytes[12..]);
        Address(a)
    }

    pub fn to_word(&self) -> Word256 {
        Word256::from_be_slice(&self.0)
    }

    /// Address whose low byte is `n`; handy for fixtures.
    pub fn from_low_u64(n: u64) -> Address {
        Address::from_word(Word256::from_u64(n))
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    /// Mask selecting the low 20 bytes of a word.
    pub fn mask() -> Word256 {
        Word256::pow2(160).wrapping_sub(Word256::ONE)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address(0x{})", hex::encode(self.0))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl FromStr for Address {
    type Err = WordParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let w: Word256 = s.parse()?;
        if w.bits() > 160 {
            return Err(WordParseError::Overflow(s.to_string(), 20));
        }
        Ok(Address::from_word(w))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// 32-byte Keccak-256 digest.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_word(&self) -> Word256 {
        Word256::from_be_bytes(self.0)
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash32(0x{})", hex::encode(self.0))
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl FromStr for Hash32 {
    type Err = WordParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let h = s.trim().strip_prefix("0x").unwrap_or(s.trim());
        if h.len() != 64 {
            return Err(WordParseError::Overflow(s.to_string(), 32));
        }
        let bytes = hex::decode(h).map_err(|_| WordParseError::InvalidDigit(s.to_string()))?;
        let mut out = [0u8; 32];
        out.copy_from_slice(&bytes);
        Ok(Hash32(out))
    }
}

impl Serialize for Hash32 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Hash32 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Big-endian, left-zero-padded 32-byte layout.
pub trait Pad32 {
    fn pad32(&self) -> [u8; 32];
}

impl Pad32 for Word256 {
    fn pad32(&self) -> [u8; 32] {
        self.to_be_bytes()
    }
}

impl Pad32 for Address {
    fn pad32(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        out[12..].copy_from_slice(&self.0);
        out
    }
}

pub fn pad32<T: Pad32 + ?Sized>(v: &T) -> [u8; 32] {
    v.pad32()
}

const ROUND_CONSTANTS: [u64; 24] = [
    0x0000000000000001,
    0x0000000000008082,
    0x800000000000808a,
    0x8000000080008000,
    0x000000000000808b,
    0x0000000080000001,
    0x8000000080008081,
    0x8000000000008009,
    0x000000000000008a,
    0x0000000000000088,
    0x0000000080008009,
    0x000000008000000a,
    0x000000008000808b,
    0x800000000000008b,
    0x8000000000008089,
    0x8000000000008003,
    0x8000000000008002,
    0x8000000000000080,
    0x000000000000800a,
    0x800000008000000a,
    0x8000000080008081,
    0x8000000000008080,
    0x0000000080000001,
    0x8000000080008008,
];

// rho offsets and pi destinations, walked along the pi permutation starting at lane 1
const RHO: [u32; 24] = [1, 3, 6, 10, 15, 21, 28, 36, 45, 55, 2, 14, 27, 41, 56, 8, 25, 43, 62, 18, 39, 61, 20, 44];
const PI: [usize; 24] = [10, 7, 11, 17, 18, 3, 5, 16, 8, 21, 24, 4, 15, 23, 19, 13, 12, 2, 20, 14, 22, 9, 6, 1];

fn keccak_f1600(a: &mut [u64; 25]) {
    for rc in ROUND_CONSTANTS {
        // theta
        let c = [
            a[0] ^ a[5] ^ a[10] ^ a[15] ^ a[20],
            a[1] ^ a[6] ^ a[11] ^ a[16] ^ a[21],
            a[2] ^ a[7] ^ a[12] ^ a[17] ^ a[22],
            a[3] ^ a[8] ^ a[13] ^ a[18] ^ a[23],
            a[4] ^ a[9] ^ a[14] ^ a[19] ^ a[24],
        ];
        let d = [
            c[4] ^ c[1].rotate_left(1),
            c[0] ^ c[2].rotate_left(1),
            c[1] ^ c[3].rotate_left(1),
            c[2] ^ c[4].rotate_left(1),
            c[3] ^ c[0].rotate_left(1),
        ];
        for row in a.chunks_exact_mut(5) {
            row[0] ^= d[0];
            row[1] ^= d[1];
            row[2] ^= d[2];
            row[3] ^= d[3];
            row[4] ^= d[4];
        }
        // rho + pi
        let mut last = a[1];
        for (&j, &r) in PI.iter().zip(RHO.iter()) {
            let tmp = a[j];
            a[j] = last.rotate_left(r);
            last = tmp;
        }
        // chi
        for row in a.chunks_exact_mut(5) {
            let [b0, b1, b2, b3, b4] = [row[0], row[1], row[2], row[3], row[4]];
            row[0] = b0 ^ (!b1 & b2);
            row[1] = b1 ^ (!b2 & b3);
            row[2] = b2 ^ (!b3 & b4);
            row[3] = b3 ^ (!b4 & b0);
            row[4] = b4 ^ (!b0 & b1);
        }
        // iota
        a[0] ^= rc;
    }
}

const KECCAK256_RATE: usize = 136;

/// Keccak-256 with the original (pre-FIPS 202) `0x01` domain padding, as used by Ethereum.
pub fn keccak256(data: &[u8]) -> Hash32 {
    let mut state = [0u64; 25];
    let mut chunks = data.chunks_exact(KECCAK256_RATE);
    for block in &mut chunks {
        absorb(&mut state, block);
        keccak_f1600(&mut state);
    }
    let rest = chunks.remainder();
    let mut last = [0u8; KECCAK256_RATE];
    last[..rest.len()].copy_from_slice(rest);
    last[rest.len()] ^= 0x01;
    last[KECCAK256_RATE - 1] ^= 0x80;
    absorb(&mut state, &last);
    keccak_f1600(&mut state);

    let mut out = [0u8; 32];
    for (i, lane) in state.iter().take(4).enumerate() {
        out[8 * i..8 * i + 8].copy_from_slice(&lane.to_le_bytes());
    }
    Hash32(out)
}

fn absorb(state: &mut [u64; 25], block: &[u8]) {
    for (i, chunk) in block.chunks_exact(8).enumerate() {
        let mut lane = [0u8; 8];
        lane.copy_from_slice(chunk);
        state[i] ^= u64::from_le_bytes(lane);
    }
}

/// First four bytes of `keccak256(signature)`.
pub fn selector_of(signature: &str) -> [u8; 4] {
    let h = keccak256(signature.as_bytes());
    [h.0[0], h.0[1], h.0[2], h.0[3]]
}

/// 4-byte function selector.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Selector(pub [u8; 4]);

impl Selector {
    pub fn of_signature(signature: &str) -> Selector {
        Selector(selector_of(signature))
    }

    /// The selector as the high 4 bytes of a word (calldata word 0 layout).
    pub fn to_u32(self) -> u32 {
        u32::from_be_bytes(self.0)
    }
}

impl fmt::Debug for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Selector({self})")
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl FromStr for Selector {
    type Err = WordParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let h = s.strip_prefix("0x").unwrap_or(s);
        if h.len() != 8 {
            return Err(WordParseError::Overflow(s.to_string(), 4));
        }
        let bytes = hex::decode(h).map_err(|_| WordParseError::InvalidDigit(s.to_string()))?;
        let mut out = [0u8; 4];
        out.copy_from_slice(&bytes);
        Ok(Selector(out))
    }
}

impl Serialize for Selector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Selector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
