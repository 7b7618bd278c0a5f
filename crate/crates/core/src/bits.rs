//! Fixed-length bit vectors used for split columns and sample supports.

use std::fmt;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut b = Bits {
            words: vec![!0; len.div_ceil(64)],
            len,
        };
        b.clear_tail();
        b
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut b = Bits::zeros(len);
        for i in 0..len {
            if f(i) {
                b.set(i, true);
            }
        }
        b
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    #[inline]
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn none(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn all(&self) -> bool {
        self.count_ones() == self.len
    }

    pub fn and(&self, other: &Bits) -> Bits {
        debug_assert_eq!(self.len, other.len);
        Bits {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
            len: self.len,
        }
    }

    /// `self & !other`
    pub fn and_not(&self, other: &Bits) -> Bits {
        debug_assert_eq!(self.len, other.len);
        Bits {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & !b).collect(),
            len: self.len,
        }
    }

    #[inline]
    pub fn and_count(&self, other: &Bits) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    #[inline]
    pub fn and_not_count(&self, other: &Bits) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & !b).count_ones() as usize)
            .sum()
    }

    pub fn not(&self) -> Bits {
        let mut b = Bits {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        b.clear_tail();
        b
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let tz = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + tz)
                }
            })
        })
    }

    /// Concatenation with every part starting on a word boundary; the padding
    /// bits between parts are zero.
    pub fn concat_aligned(parts: &[&Bits]) -> Bits {
        let words: Vec<u64> = parts.iter().flat_map(|b| b.words.iter().copied()).collect();
        let len = words.len() * 64;
        Bits { words, len }
    }

    /// The first `len` bits, assuming the bits from `len` to the next word
    /// boundary are zero (as in [`Bits::concat_aligned`]).
    pub fn prefix_aligned(&self, len: usize) -> Bits {
        Bits {
            words: self.words[..len.div_ceil(64)].to_vec(),
            len,
        }
    }

    #[inline]
    pub fn and_count_words(&self, other: &Bits, words: std::ops::Range<usize>) -> usize {
        self.words[words.clone()]
            .iter()
            .zip(&other.words[words])
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    #[inline]
    pub fn count_ones_words(&self, words: std::ops::Range<usize>) -> usize {
        self.words[words].iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Packs the bits at the set positions of `mask` into `out`, lowest
    /// position first. `out` is cleared and sized to `mask.count_ones()` bits.
    pub fn compress_into(&self, mask: &Bits, out: &mut Vec<u64>) {
        out.clear();
        out.resize(mask.count_ones().div_ceil(64).max(1), 0);
        let mut offset = 0usize;
        for (&w, &m) in self.words.iter().zip(&mask.words) {
            if m == 0 {
                continue;
            }
            let v = pext(w, m);
            let (i, sh) = (offset / 64, offset % 64);
            out[i] |= v << sh;
            if sh != 0 && i + 1 < out.len() {
                out[i + 1] |= v >> (64 - sh);
            }
            offset += m.count_ones() as usize;
        }
    }

    /// Gathers bits by index: `out[i] = self[indices[i]]`.
    pub fn gather(&self, indices: &[usize]) -> Bits {
        Bits::from_fn(indices.len(), |i| self.get(indices[i]))
    }
}

/// Parallel bit extract: the bits of `w` under `mask`, packed to the bottom.
#[inline]
fn pext(w: u64, mask: u64) -> u64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("bmi2") {
            // SAFETY: the CPU supports BMI2, checked just above.
            return unsafe { pext_bmi2(w, mask) };
        }
    }
    let (mut out, mut m, mut bit) = (0u64, mask, 0);
    while m != 0 {
        let low = m & m.wrapping_neg();
        if w & low != 0 {
            out |= 1 << bit;
        }
        bit += 1;
        m ^= low;
    }
    out
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "bmi2")]
fn pext_bmi2(w: u64, mask: u64) -> u64 {
    std::arch::x86_64::_pext_u64(w, mask)
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect();
        write!(f, "Bits({s})")
    }
}
