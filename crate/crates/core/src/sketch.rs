//! Linear-counting bitvector sketches.
//!
//! Every user id is hashed with 64-bit FNV-1a into one of `m` buckets. The
//! number of distinct users is estimated from the fraction of zero bits `z/m`
//! as `-m * ln(z/m)`. Two sketches of equal width combine by bitwise OR, which
//! yields the sketch of the union of their sets, and intersections are
//! recovered by inclusion-exclusion over three estimates.

use std::fmt;

use thiserror::Error;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Bucket of `user_id` in a sketch of width `m`.
pub fn bucket(user_id: &[u8], m: usize) -> usize {
    (fnv1a64(user_id) % m as u64) as usize
}

/// Sketch width for a population of `num_users`: the next power of two that
/// is at least `num_users / 10`, and never less than one bit.
pub fn auto_width(num_users: usize) -> usize {
    num_users.div_ceil(10).max(1).next_power_of_two()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SketchError {
    #[error("sketch width must be at least one bit")]
    ZeroWidth,
    #[error("sketch widths differ ({left} vs {right})")]
    WidthMismatch { left: usize, right: usize },
    #[error("malformed sketch encoding: {0}")]
    Malformed(String),
}

/// An estimated number of distinct elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardinalityEstimate {
    pub value: f64,
    /// Set when every bit was one and the zero count had to be clamped to 1.
    pub saturated: bool,
}

#[derive(Clone, PartialEq, Eq)]
pub struct LinearCountingSketch {
    m: usize,
    words: Vec<u64>,
    inserted_events: u64,
}

impl fmt::Debug for LinearCountingSketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearCountingSketch")
            .field("m", &self.m)
            .field("zero_count", &self.zero_count())
            .field("inserted_events", &self.inserted_events)
            .finish()
    }
}

impl LinearCountingSketch {
    pub fn new(m: usize) -> Result<Self, SketchError> {
        if m == 0 {
            return Err(SketchError::ZeroWidth);
        }
        Ok(Self {
            m,
            words: vec![0; m.div_ceil(64)],
            inserted_events: 0,
        })
    }

    /// Builds a sketch from an iterator of user ids.
    pub fn from_ids<I, T>(m: usize, ids: I) -> Result<Self, SketchError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        let mut sketch = Self::new(m)?;
        for id in ids {
            sketch.insert(id.as_ref());
        }
        Ok(sketch)
    }

    pub fn width(&self) -> usize {
        self.m
    }

    /// Number of insert calls seen, duplicates included. Diagnostic only; it
    /// does not take part in equality of bits.
    pub fn inserted_events(&self) -> u64 {
        self.inserted_events
    }

    pub fn insert(&mut self, user_id: &[u8]) {
        self.set_bit(bucket(user_id, self.m));
        self.inserted_events += 1;
    }

    pub fn bit(&self, index: usize) -> bool {
        assert!(index < self.m, "bit index {index} out of range for width {}", self.m);
        self.words[index / 64] >> (index % 64) & 1 == 1
    }

    fn set_bit(&mut self, index: usize) {
        self.words[index / 64] |= 1 << (index % 64);
    }

    pub fn ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn zero_count(&self) -> usize {
        self.m - self.ones()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// True when both sketches have the same width and the same bits,
    /// regardless of how many events were inserted.
    pub fn same_bits(&self, other: &Self) -> bool {
        self.m == other.m && self.words == other.words
    }

    pub fn estimate(&self) -> CardinalityEstimate {
        estimate_from_zeros(self.m, self.zero_count())
    }

    fn check_width(&self, other: &Self) -> Result<(), SketchError> {
        if self.m != other.m {
            return Err(SketchError::WidthMismatch {
                left: self.m,
                right: other.m,
            });
        }
        Ok(())
    }

    /// Sketch of the union: bitwise OR. The event counter is the sum of both.
    pub fn union(&self, other: &Self) -> Result<Self, SketchError> {
        self.check_width(other)?;
        Ok(Self {
            m: self.m,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a | b)
                .collect(),
            inserted_events: self.inserted_events + other.inserted_events,
        })
    }

    pub fn union_in_place(&mut self, other: &Self) -> Result<(), SketchError> {
        self.check_width(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        self.inserted_events += other.inserted_events;
        Ok(())
    }

    /// Zero bits of `self OR other` without materializing the union.
    pub fn union_zero_count(&self, other: &Self) -> Result<usize, SketchError> {
        self.check_width(other)?;
        let ones: usize = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum();
        Ok(self.m - ones)
    }

    pub fn estimate_intersection(&self, other: &Self) -> Result<f64, SketchError> {
        let union_zeros = self.union_zero_count(other)?;
        Ok(intersection_from_estimates(
            self.estimate().value,
            other.estimate().value,
            estimate_from_zeros(self.m, union_zeros).value,
        ))
    }

    pub fn estimate_jaccard(&self, other: &Self) -> Result<f64, SketchError> {
        let union_zeros = self.union_zero_count(other)?;
        Ok(jaccard_from_estimates(
            self.estimate().value,
            other.estimate().value,
            estimate_from_zeros(self.m, union_zeros).value,
        ))
    }

    /// Bits as lowercase hex, most significant bit first within each byte;
    /// bit 0 is the top bit of the first byte. Trailing pad bits are zero.
    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(self.m.div_ceil(8) * 2);
        for byte_index in 0..self.m.div_ceil(8) {
            let mut byte = 0u8;
            for offset in 0..8 {
                let i = byte_index * 8 + offset;
                if i < self.m && self.bit(i) {
                    byte |= 0x80 >> offset;
                }
            }
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Inverse of [`to_hex`](Self::to_hex). The event counter is not part of
    /// the encoding and is restored as the number of set bits.
    pub fn from_hex(m: usize, hex: &str) -> Result<Self, SketchError> {
        let mut sketch = Self::new(m)?;
        let expected = m.div_ceil(8) * 2;
        if hex.len() != expected {
            return Err(SketchError::Malformed(format!(
                "expected {expected} hex digits for width {m}, found {}",
                hex.len()
            )));
        }
        if !hex.bytes().all(|c| matches!(c, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(SketchError::Malformed(
                "bits must be lowercase hex".to_string(),
            ));
        }
        for byte_index in 0..m.div_ceil(8) {
            let byte = u8::from_str_radix(&hex[byte_index * 2..byte_index * 2 + 2], 16)
                .map_err(|e| SketchError::Malformed(e.to_string()))?;
            for offset in 0..8 {
                if byte & (0x80 >> offset) == 0 {
                    continue;
                }
                let i = byte_index * 8 + offset;
                if i >= m {
                    return Err(SketchError::Malformed(format!(
                        "padding bit {i} set beyond width {m}"
                    )));
                }
                sketch.set_bit(i);
            }
        }
        sketch.inserted_events = sketch.ones() as u64;
        Ok(sketch)
    }
}

/// `-m * ln(z/m)`, clamping `z = 0` to 1 and flagging saturation.
pub fn estimate_from_zeros(m: usize, zeros: usize) -> CardinalityEstimate {
    debug_assert!(zeros <= m);
    let saturated = zeros == 0;
    let z = zeros.max(1) as f64;
    let m = m as f64;
    // -0.0 for the empty sketch would print as "-0"
    let value = (-m * (z / m).ln()).max(0.0);
    CardinalityEstimate { value, saturated }
}

/// `max(0, |A| + |B| - |A ∪ B|)`.
pub fn intersection_from_estimates(a: f64, b: f64, union: f64) -> f64 {
    (a + b - union).max(0.0)
}

/// Intersection over union, clamped to `[0, 1]`; zero when the union is empty.
pub fn jaccard_from_estimates(a: f64, b: f64, union: f64) -> f64 {
    if union <= 0.0 {
        return 0.0;
    }
    (intersection_from_estimates(a, b, union) / union).clamp(0.0, 1.0)
}
