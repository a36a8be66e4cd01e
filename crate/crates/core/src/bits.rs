//! MSB-first bit packing and order-0 exponential Golomb codes.
//!
//! The unsigned code for `u` is `floor(log2(u+1))` zero bits, followed by
//! `u+1` in binary, for a total of `2*floor(log2(u+1)) + 1` bits. Signed
//! values are mapped to unsigned with `v <= 0 -> -2v`, `v > 0 -> 2v - 1`
//! before coding.

use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BitError {
    /// Ran out of bits while reading a codeword or a fixed-width field.
    OutOfBits,
    /// An exp-Golomb prefix ran past the longest representable codeword.
    MalformedPrefix,
    /// A decoded value does not fit the requested integer width.
    Overflow,
}

impl fmt::Display for BitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BitError::OutOfBits => write!(f, "bitstream exhausted"),
            BitError::MalformedPrefix => write!(f, "malformed exp-Golomb prefix"),
            BitError::Overflow => write!(f, "decoded value out of range"),
        }
    }
}

impl std::error::Error for BitError {}

/// Accumulates bits MSB-first into a byte vector.
#[derive(Clone, Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    /// Number of bits already used in the trailing partial byte (0..8).
    fill: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total number of bits written so far, including alignment padding.
    pub fn bit_len(&self) -> u64 {
        if self.fill == 0 {
            self.bytes.len() as u64 * 8
        } else {
            (self.bytes.len() as u64 - 1) * 8 + u64::from(self.fill)
        }
    }

    pub fn write_bit(&mut self, bit: bool) {
        if self.fill == 0 {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.last_mut().unwrap();
            *last |= 1 << (7 - self.fill);
        }
        self.fill = (self.fill + 1) % 8;
    }

    /// Writes the low `n` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 64);
        for i in (0..n).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    /// Unsigned order-0 exp-Golomb.
    pub fn write_ue(&mut self, value: u64) {
        debug_assert!(value < u64::MAX);
        let k = value + 1;
        let nbits = 64 - k.leading_zeros();
        self.write_bits(0, nbits - 1);
        self.write_bits(k, nbits);
    }

    /// Signed exp-Golomb via the `v <= 0 -> -2v`, `v > 0 -> 2v-1` mapping.
    pub fn write_se(&mut self, value: i64) {
        self.write_ue(signed_to_unsigned(value));
    }

    /// Pads with zero bits to the next byte boundary.
    pub fn align(&mut self) {
        while self.fill != 0 {
            self.write_bit(false);
        }
    }

    pub fn into_bytes(mut self) -> Vec<u8> {
        self.align();
        self.bytes
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// Reads bits MSB-first from a byte slice.
#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn bit_pos(&self) -> u64 {
        self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool, BitError> {
        let byte = (self.pos / 8) as usize;
        if byte >= self.bytes.len() {
            return Err(BitError::OutOfBits);
        }
        let bit = (self.bytes[byte] >> (7 - (self.pos % 8))) & 1;
        self.pos += 1;
        Ok(bit == 1)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u64, BitError> {
        debug_assert!(n <= 64);
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | u64::from(self.read_bit()?);
        }
        Ok(v)
    }

    pub fn read_ue(&mut self) -> Result<u64, BitError> {
        let mut zeros = 0u32;
        while !self.read_bit()? {
            zeros += 1;
            if zeros > 63 {
                return Err(BitError::MalformedPrefix);
            }
        }
        let suffix = self.read_bits(zeros)?;
        Ok((1u64 << zeros) + suffix - 1)
    }

    pub fn read_se(&mut self) -> Result<i64, BitError> {
        Ok(unsigned_to_signed(self.read_ue()?))
    }

    /// Skips padding bits up to the next byte boundary; they must be zero.
    pub fn align(&mut self) -> Result<(), BitError> {
        while self.pos % 8 != 0 {
            if self.read_bit()? {
                return Err(BitError::MalformedPrefix);
            }
        }
        Ok(())
    }
}

fn signed_to_unsigned(v: i64) -> u64 {
    if v <= 0 {
        (-(v as i128) * 2) as u64
    } else {
        (v as u64) * 2 - 1
    }
}

fn unsigned_to_signed(u: u64) -> i64 {
    if u % 2 == 0 {
        -((u / 2) as i64)
    } else {
        ((u + 1) / 2) as i64
    }
}

/// Code length in bits of the unsigned exp-Golomb code for `value`.
pub fn ue_len(value: u64) -> u64 {
    let nbits = u64::from(64 - (value + 1).leading_zeros());
    2 * (nbits - 1) + 1
}

/// Code length in bits of the signed exp-Golomb code for `value`.
pub fn se_len(value: i64) -> u64 {
    ue_len(signed_to_unsigned(value))
}
