//! Bit-packed matrices over `F_2`.
//!
//! Rows are stored as little-endian `u64` words (column `c` lives in bit `c % 64` of word
//! `c / 64`), so row operations are word-parallel XORs. Every routine here has a generic
//! counterpart in [`FqMatrix`]; the two are cross-checked in tests.

use super::{FieldSpec, FqMatrix};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = cols.div_ceil(64);
        Self { rows, cols, stride, data: vec![0; rows * stride] }
    }

    pub fn from_fq(m: &FqMatrix) -> Self {
        debug_assert!(m.field().is_binary());
        let mut out = Self::zeros(m.rows(), m.cols());
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0 {
                    out.set(r, c, true);
                }
            }
        }
        out
    }

    pub fn to_fq(&self) -> FqMatrix {
        let mut data = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                data.push(self.get(r, c) as u32);
            }
        }
        FqMatrix::from_raw(FieldSpec::binary(), self.rows, self.cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        (self.data[r * self.stride + c / 64] >> (c % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, bit: bool) {
        let w = &mut self.data[r * self.stride + c / 64];
        if bit {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for w in 0..self.stride {
            self.data.swap(a * self.stride + w, b * self.stride + w);
        }
    }

    /// `row[dst] ^= row[src]`
    fn xor_rows(&mut self, dst: usize, src: usize) {
        debug_assert_ne!(dst, src);
        let s = self.stride;
        let (lo, hi) = self.data.split_at_mut(dst.max(src) * s);
        let (d, s_) = if dst < src {
            (&mut lo[dst * s..(dst + 1) * s], &hi[..s])
        } else {
            (&mut hi[..s], &lo[src * s..(src + 1) * s])
        };
        for (a, b) in d.iter_mut().zip(s_) {
            *a ^= *b;
        }
    }

    /// Product `self · other`: output row `i` is the XOR of the rows of `other` selected by
    /// the set bits of row `i` of `self`.
    pub fn mul(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = BitMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = i * out.stride;
            for (w, &word) in self.row(i).iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let j = w * 64 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    for (k, &v) in other.row(j).iter().enumerate() {
                        out.data[dst + k] ^= v;
                    }
                }
            }
        }
        out
    }

    /// Reduced row echelon form restricted to the first `limit` columns. Pivots are chosen
    /// leftmost column first, taking the first row at or below the current position with a
    /// set bit. Returns the pivot columns in order.
    pub fn rref_limited(&mut self, limit: usize) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut next = 0;
        for c in 0..limit.min(self.cols) {
            if next == self.rows {
                break;
            }
            let Some(p) = (next..self.rows).find(|&r| self.get(r, c)) else {
                continue;
            };
            self.swap_rows(p, next);
            for r in 0..self.rows {
                if r != next && self.get(r, c) {
                    self.xor_rows(r, next);
                }
            }
            pivots.push(c);
            next += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        m.rref_limited(self.cols).len()
    }
}

/// Packs each column of `m` (at most 64 rows) into a `u64`, bit `r` holding row `r`.
pub fn pack_columns(m: &FqMatrix) -> Vec<u64> {
    assert!(m.rows() <= 64, "column packing supports at most 64 rows");
    (0..m.cols())
        .map(|c| {
            (0..m.rows()).fold(0u64, |acc, r| acc | (((m.get(r, c) & 1) as u64) << r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_and_rank_match_generic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f2 = FieldSpec::binary();
        for i in 0..300 {
            let rows = i % 9;
            let cols = (i / 9) % 70;
            let m = FqMatrix::random(f2, rows, cols, &mut rng);
            let b = BitMatrix::from_fq(&m);
            assert_eq!(b.to_fq(), m);
            assert_eq!(b.rank(), m.rank_generic());
        }
    }

    #[test]
    fn product_matches_generic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f2 = FieldSpec::binary();
        for i in 0..100 {
            let (r, k, c) = (1 + i % 5, i % 7, 1 + i % 80);
            let a = FqMatrix::random(f2, r, k, &mut rng);
            let b = FqMatrix::random(f2, k, c, &mut rng);
            let packed = BitMatrix::from_fq(&a).mul(&BitMatrix::from_fq(&b)).to_fq();
            assert_eq!(packed, a.mul_generic(&b));
        }
    }

    #[test]
    fn packs_columns() {
        let f2 = FieldSpec::binary();
        let m = FqMatrix::from_rows(f2, &[vec![1, 0], vec![1, 1], vec![0, 1]]).unwrap();
        assert_eq!(pack_columns(&m), vec![0b011, 0b110]);
    }
}
