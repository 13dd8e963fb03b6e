//! Fixed-width bit vectors used for truth sets, valuation masks and sign
//! vectors. Kept small: two inline 64-bit blocks cover every desk-scale case
//! without heap traffic.

use smallvec::SmallVec;
use std::cmp::Ordering;
use std::fmt;

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Bits {
    width: u32,
    blocks: SmallVec<[u64; 2]>,
}

impl Bits {
    pub fn zeros(width: usize) -> Self {
        let nblocks = width.div_ceil(64);
        Bits {
            width: width as u32,
            blocks: smallvec::smallvec![0; nblocks],
        }
    }

    pub fn ones(width: usize) -> Self {
        let mut b = Bits::zeros(width);
        for i in 0..width {
            b.set(i, true);
        }
        b
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.width as usize);
        self.blocks[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.width as usize);
        let mask = 1u64 << (i % 64);
        if v {
            self.blocks[i / 64] |= mask;
        } else {
            self.blocks[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.blocks.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn all(&self) -> bool {
        self.count_ones() == self.width as usize
    }

    pub fn any(&self) -> bool {
        self.blocks.iter().any(|&b| b != 0)
    }

    pub fn union_with(&mut self, other: &Bits) {
        debug_assert_eq!(self.width, other.width);
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &Bits) {
        debug_assert_eq!(self.width, other.width);
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            *a &= b;
        }
    }

    pub fn negate(&mut self) {
        for b in self.blocks.iter_mut() {
            *b = !*b;
        }
        self.mask_tail();
    }

    fn mask_tail(&mut self) {
        let used = self.width as usize % 64;
        if used != 0 {
            if let Some(last) = self.blocks.last_mut() {
                *last &= (1u64 << used) - 1;
            }
        }
    }

    /// Numeric increment (bit 0 is the least significant); returns false on
    /// wrap-around. Drives exhaustive assignment sweeps.
    pub fn increment(&mut self) -> bool {
        for i in 0..self.width as usize {
            if !self.get(i) {
                self.set(i, true);
                return true;
            }
            self.set(i, false);
        }
        false
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width as usize).filter(|&i| self.get(i))
    }
}

impl PartialOrd for Bits {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bits {
    /// Lexicographic on the bit sequence (bit 0 first). Reversing each block
    /// makes bit 0 the most significant bit, so block-wise numeric comparison
    /// matches bit-wise lexicographic order.
    fn cmp(&self, other: &Self) -> Ordering {
        debug_assert_eq!(self.width, other.width);
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            match a.reverse_bits().cmp(&b.reverse_bits()) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.width as usize {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}
