use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::gf2::BitMatrix;
use super::{FieldSpec, LinalgError, SolveFailure};

/// Dense row-major matrix over a prime field.
///
/// Matrices with zero rows or zero columns are valid; they have rank 0 and multiply by
/// dimension rules like any other matrix.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FqMatrix {
    field: FieldSpec,
    rows: usize,
    cols: usize,
    data: Vec<u32>,
}

impl FqMatrix {
    pub fn new(field: FieldSpec, rows: usize, cols: usize, data: Vec<u32>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DataLength { rows, cols, len: data.len() });
        }
        if let Some(&bad) = data.iter().find(|&&v| !field.contains(v)) {
            return Err(LinalgError::EntryOutOfRange { value: bad, q: field.q() });
        }
        Ok(Self { field, rows, cols, data })
    }

    /// Caller guarantees the entries are canonical.
    pub(crate) fn from_raw(field: FieldSpec, rows: usize, cols: usize, data: Vec<u32>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(data.iter().all(|&v| field.contains(v)));
        Self { field, rows, cols, data }
    }

    pub fn zeros(field: FieldSpec, rows: usize, cols: usize) -> Self {
        Self { field, rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(field: FieldSpec, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Builds a matrix from equal-length rows. An empty slice gives a 0×0 matrix.
    pub fn from_rows(field: FieldSpec, rows: &[Vec<u32>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(LinalgError::DataLength { rows: rows.len(), cols, len: bad.len() });
        }
        Self::new(field, rows.len(), cols, rows.concat())
    }

    /// Entries drawn independently and uniformly from the field.
    pub fn random<R: Rng + ?Sized>(field: FieldSpec, rows: usize, cols: usize, rng: &mut R) -> Self {
        let q = field.q();
        let data = (0..rows * cols).map(|_| rng.random_range(0..q)).collect();
        Self { field, rows, cols, data }
    }

    #[inline]
    pub fn field(&self) -> FieldSpec {
        self.field
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn entries(&self) -> &[u32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        assert!(r < self.rows && c < self.cols, "index ({r}, {c}) out of bounds");
        self.data[r * self.cols + c]
    }

    /// Panics if the indices are out of bounds or `v` is not a field element.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        assert!(r < self.rows && c < self.cols, "index ({r}, {c}) out of bounds");
        assert!(self.field.contains(v), "{v} is not an element of {}", self.field);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<u32> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn transpose(&self) -> FqMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.data[r * self.cols + c]);
            }
        }
        Self::from_raw(self.field, self.cols, self.rows, data)
    }

    pub fn neg(&self) -> FqMatrix {
        let f = self.field;
        let data = self.data.iter().map(|&v| f.neg(v)).collect();
        Self::from_raw(f, self.rows, self.cols, data)
    }

    fn check_same_field(&self, other: &FqMatrix) -> Result<(), LinalgError> {
        if self.field != other.field {
            return Err(LinalgError::FieldMismatch { left: self.field.q(), right: other.field.q() });
        }
        Ok(())
    }

    fn zip_with(&self, other: &FqMatrix, op: &'static str, f: impl Fn(u32, u32) -> u32) -> Result<FqMatrix, LinalgError> {
        self.check_same_field(other)?;
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch { op, left: self.shape(), right: other.shape() });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_raw(self.field, self.rows, self.cols, data))
    }

    pub fn add(&self, other: &FqMatrix) -> Result<FqMatrix, LinalgError> {
        let f = self.field;
        self.zip_with(other, "add", |a, b| f.add(a, b))
    }

    pub fn sub(&self, other: &FqMatrix) -> Result<FqMatrix, LinalgError> {
        let f = self.field;
        self.zip_with(other, "sub", |a, b| f.sub(a, b))
    }

    /// Exact product over `F_q`.
    pub fn mul(&self, other: &FqMatrix) -> Result<FqMatrix, LinalgError> {
        self.check_same_field(other)?;
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch { op: "mul", left: self.shape(), right: other.shape() });
        }
        if self.field.is_binary() {
            return Ok(BitMatrix::from_fq(self).mul(&BitMatrix::from_fq(other)).to_fq());
        }
        Ok(self.mul_generic(other))
    }

    pub(crate) fn mul_generic(&self, other: &FqMatrix) -> FqMatrix {
        let q = self.field.q() as u64;
        let mut acc = vec![0u64; self.rows * other.cols];
        for i in 0..self.rows {
            let out = &mut acc[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0 {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(other.row(k)) {
                    *o = (*o + a as u64 * b as u64) % q;
                }
            }
        }
        Self::from_raw(self.field, self.rows, other.cols, acc.into_iter().map(|v| v as u32).collect())
    }

    /// Submatrix keeping the listed rows in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<FqMatrix, LinalgError> {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            if r >= self.rows {
                return Err(LinalgError::IndexOutOfRange { index: r, bound: self.rows });
            }
            data.extend_from_slice(self.row(r));
        }
        Ok(Self::from_raw(self.field, idx.len(), self.cols, data))
    }

    /// Submatrix keeping the listed columns in the given order.
    pub fn select_cols(&self, idx: &[usize]) -> Result<FqMatrix, LinalgError> {
        if let Some(&c) = idx.iter().find(|&&c| c >= self.cols) {
            return Err(LinalgError::IndexOutOfRange { index: c, bound: self.cols });
        }
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(idx.iter().map(|&c| row[c]));
        }
        Ok(Self::from_raw(self.field, self.rows, idx.len(), data))
    }

    /// `[self; other]`
    pub fn vstack(&self, other: &FqMatrix) -> Result<FqMatrix, LinalgError> {
        self.check_same_field(other)?;
        if self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch { op: "vstack", left: self.shape(), right: other.shape() });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self::from_raw(self.field, self.rows + other.rows, self.cols, data))
    }

    /// `[self | other]`
    pub fn hstack(&self, other: &FqMatrix) -> Result<FqMatrix, LinalgError> {
        self.check_same_field(other)?;
        if self.rows != other.rows {
            return Err(LinalgError::DimensionMismatch { op: "hstack", left: self.shape(), right: other.shape() });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Self::from_raw(self.field, self.rows, self.cols + other.cols, data))
    }

    pub fn rank(&self) -> usize {
        if self.field.is_binary() {
            BitMatrix::from_fq(self).rank()
        } else {
            self.rank_generic()
        }
    }

    pub(crate) fn rank_generic(&self) -> usize {
        let mut m = self.clone();
        m.rref_limited(self.cols).len()
    }

    /// In-place reduced row echelon form over the first `limit` columns; later columns are
    /// carried along (augmented part). Pivot rule: leftmost column first, first row at or
    /// below the current position with a nonzero entry.
    fn rref_limited(&mut self, limit: usize) -> Vec<usize> {
        let f = self.field;
        let cols = self.cols;
        let mut pivots = Vec::new();
        let mut next = 0;
        for c in 0..limit.min(cols) {
            if next == self.rows {
                break;
            }
            let Some(p) = (next..self.rows).find(|&r| self.data[r * cols + c] != 0) else {
                continue;
            };
            if p != next {
                for k in 0..cols {
                    self.data.swap(p * cols + k, next * cols + k);
                }
            }
            let inv = f.inv(self.data[next * cols + c]).expect("pivot is nonzero");
            for k in c..cols {
                let v = &mut self.data[next * cols + k];
                *v = f.mul(*v, inv);
            }
            for r in 0..self.rows {
                if r == next {
                    continue;
                }
                let factor = self.data[r * cols + c];
                if factor == 0 {
                    continue;
                }
                for k in c..cols {
                    let pv = self.data[next * cols + k];
                    let v = &mut self.data[r * cols + k];
                    *v = f.sub(*v, f.mul(factor, pv));
                }
            }
            pivots.push(c);
            next += 1;
        }
        pivots
    }

    /// Solves `self · X = rhs` when the solution is unique (`rank(self) == self.cols()`).
    pub fn solve_unique(&self, rhs: &FqMatrix) -> Result<FqMatrix, LinalgError> {
        self.check_same_field(rhs)?;
        if self.rows != rhs.rows {
            return Err(LinalgError::DimensionMismatch { op: "solve", left: self.shape(), right: rhs.shape() });
        }
        let n = self.cols;
        let aug = self.hstack(rhs)?;
        let rhs_cols = rhs.cols;

        if self.field.is_binary() {
            let mut b = BitMatrix::from_fq(&aug);
            let pivots = b.rref_limited(n);
            let r = pivots.len();
            let inconsistent = (r..b.rows()).any(|row| (n..n + rhs_cols).any(|c| b.get(row, c)));
            if inconsistent {
                return Err(LinalgError::NoUniqueSolution(SolveFailure::Inconsistent));
            }
            if r < n {
                return Err(LinalgError::NoUniqueSolution(SolveFailure::Underdetermined));
            }
            let mut out = FqMatrix::zeros(self.field, n, rhs_cols);
            for (row, &c) in pivots.iter().enumerate() {
                for k in 0..rhs_cols {
                    out.data[c * rhs_cols + k] = b.get(row, n + k) as u32;
                }
            }
            return Ok(out);
        }

        let mut m = aug;
        let pivots = m.rref_limited(n);
        let r = pivots.len();
        let inconsistent = (r..m.rows).any(|row| m.row(row)[n..].iter().any(|&v| v != 0));
        if inconsistent {
            return Err(LinalgError::NoUniqueSolution(SolveFailure::Inconsistent));
        }
        if r < n {
            return Err(LinalgError::NoUniqueSolution(SolveFailure::Underdetermined));
        }
        let mut out = FqMatrix::zeros(self.field, n, rhs_cols);
        for (row, &c) in pivots.iter().enumerate() {
            out.data[c * rhs_cols..(c + 1) * rhs_cols].copy_from_slice(&m.row(row)[n..]);
        }
        Ok(out)
    }

    /// Serializes to the matrix text format: a `q rows cols` header, then one line of
    /// space-separated decimal entries per row.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn from_text(s: &str) -> Result<FqMatrix, LinalgError> {
        s.parse()
    }
}

impl fmt::Display for FqMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {} {}", self.field.q(), self.rows, self.cols)?;
        for r in 0..self.rows {
            let mut first = true;
            for v in self.row(r) {
                if !first {
                    f.write_str(" ")?;
                }
                write!(f, "{v}")?;
                first = false;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for FqMatrix {
    type Err = LinalgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = |line: usize, msg: String| LinalgError::Parse { line, msg };
        let mut lines = s.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing header line".into()))?;
        let nums: Vec<&str> = header.split_whitespace().collect();
        if nums.len() != 3 {
            return Err(parse_err(1, format!("expected `q rows cols`, found {header:?}")));
        }
        let parse_num = |tok: &str, what: &str| {
            tok.parse::<usize>().map_err(|_| parse_err(1, format!("invalid {what}: {tok:?}")))
        };
        let q = parse_num(nums[0], "modulus")?;
        let rows = parse_num(nums[1], "row count")?;
        let cols = parse_num(nums[2], "column count")?;
        let q = u32::try_from(q).map_err(|_| parse_err(1, format!("modulus {q} too large")))?;
        let field = FieldSpec::new(q).map_err(|e| parse_err(1, e.to_string()))?;

        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let line_no = r + 2;
            let line = lines.next().ok_or_else(|| parse_err(line_no, format!("expected {rows} rows, found {r}")))?;
            let mut count = 0;
            for tok in line.split_whitespace() {
                let v: u32 = tok.parse().map_err(|_| parse_err(line_no, format!("invalid entry {tok:?}")))?;
                if !field.contains(v) {
                    return Err(parse_err(line_no, format!("entry {v} not in {field}")));
                }
                data.push(v);
                count += 1;
            }
            if count != cols {
                return Err(parse_err(line_no, format!("expected {cols} entries, found {count}")));
            }
        }
        for (i, extra) in lines.enumerate() {
            if !extra.trim().is_empty() {
                return Err(parse_err(rows + 2 + i, "unexpected trailing content".into()));
            }
        }
        Ok(Self::from_raw(field, rows, cols, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn f(q: u32) -> FieldSpec {
        FieldSpec::new(q).unwrap()
    }

    /// Independent schoolbook product used as the oracle for `mul`.
    fn triple_loop(a: &FqMatrix, b: &FqMatrix) -> Vec<Vec<u32>> {
        let q = a.field().q();
        (0..a.rows())
            .map(|i| {
                (0..b.cols())
                    .map(|j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum::<u32>() % q)
                    .collect()
            })
            .collect()
    }

    /// The 4×4 binary matrix whose first, second and fourth columns sum to zero.
    pub(crate) fn example_a() -> FqMatrix {
        FqMatrix::from_rows(
            FieldSpec::binary(),
            &[vec![1, 1, 1, 0], vec![1, 0, 1, 1], vec![0, 0, 1, 0], vec![0, 0, 0, 0]],
        )
        .unwrap()
    }

    #[test]
    fn identity_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for q in [2, 3, 5] {
            let u = FqMatrix::random(f(q), 4, 9, &mut rng);
            assert_eq!(FqMatrix::identity(f(q), 4).mul(&u).unwrap(), u);
        }
    }

    #[test]
    fn product_against_schoolbook() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for q in [2, 3, 5, 7] {
            for _ in 0..20 {
                let a = FqMatrix::random(f(q), 3, 2, &mut rng);
                let b = FqMatrix::random(f(q), 2, 4, &mut rng);
                let got = a.mul(&b).unwrap();
                let want = triple_loop(&a, &b);
                assert_eq!(got, FqMatrix::from_rows(f(q), &want).unwrap());
            }
        }
    }

    #[test]
    fn product_errors() {
        let a = FqMatrix::zeros(f(2), 2, 3);
        let b = FqMatrix::zeros(f(2), 2, 3);
        assert!(matches!(a.mul(&b), Err(LinalgError::DimensionMismatch { .. })));
        let c = FqMatrix::zeros(f(3), 3, 1);
        assert!(matches!(a.mul(&c), Err(LinalgError::FieldMismatch { .. })));
    }

    #[test]
    fn empty_matrices() {
        let a = FqMatrix::zeros(f(2), 0, 5);
        assert_eq!(a.rank(), 0);
        let b = FqMatrix::zeros(f(2), 5, 0);
        assert_eq!(b.rank(), 0);
        let p = a.mul(&FqMatrix::zeros(f(2), 5, 3)).unwrap();
        assert_eq!(p.shape(), (0, 3));
        let p = b.mul(&FqMatrix::zeros(f(2), 0, 4)).unwrap();
        assert_eq!(p.shape(), (5, 4));
        assert!(p.is_zero());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(FqMatrix::identity(f(2), 3).rank(), 3);
        // rows 1-3 of the example are independent, row 4 is zero
        assert_eq!(example_a().rank(), 3);
        assert_eq!(example_a().rank_generic(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m = FqMatrix::random(f(3), 5, 8, &mut rng);
            assert!(m.rank() < 8);
        }
    }

    #[test]
    fn solve_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = FqMatrix::random(f(5), 4, 6, &mut rng);
        assert_eq!(FqMatrix::identity(f(5), 4).solve_unique(&u).unwrap(), u);

        let a = FqMatrix::from_rows(f(2), &[vec![1, 1], vec![1, 1]]).unwrap();
        let rhs = FqMatrix::from_rows(f(2), &[vec![1], vec![1]]).unwrap();
        assert_eq!(a.solve_unique(&rhs), Err(LinalgError::NoUniqueSolution(SolveFailure::Underdetermined)));
        let rhs = FqMatrix::from_rows(f(2), &[vec![1], vec![0]]).unwrap();
        assert_eq!(a.solve_unique(&rhs), Err(LinalgError::NoUniqueSolution(SolveFailure::Inconsistent)));

        let a = FqMatrix::from_rows(f(3), &[vec![1, 2], vec![2, 1]]).unwrap();
        // row 2 is twice row 1 over F_3
        let rhs = FqMatrix::from_rows(f(3), &[vec![1], vec![2]]).unwrap();
        assert_eq!(a.solve_unique(&rhs), Err(LinalgError::NoUniqueSolution(SolveFailure::Underdetermined)));
    }

    #[test]
    fn solve_round_trip_random_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut solved = 0;
        for q in [2, 3, 5] {
            while solved < 100 {
                let k = rng.random_range(1..7);
                let a = FqMatrix::random(f(q), k + rng.random_range(0..4), k, &mut rng);
                if a.rank() < k {
                    continue;
                }
                let u = FqMatrix::random(f(q), k, 5, &mut rng);
                let y = a.mul(&u).unwrap();
                assert_eq!(a.solve_unique(&y).unwrap(), u);
                solved += 1;
            }
            solved = 0;
        }
    }

    #[test]
    fn text_format() {
        let a = example_a();
        let text = a.to_text();
        assert_eq!(text, "2 4 4\n1 1 1 0\n1 0 1 1\n0 0 1 0\n0 0 0 0\n");
        assert_eq!(FqMatrix::from_text(&text).unwrap(), a);

        let empty = FqMatrix::zeros(f(3), 2, 0);
        assert_eq!(FqMatrix::from_text(&empty.to_text()).unwrap(), empty);

        for (bad, line) in [
            ("", 1),
            ("2 2\n", 1),
            ("4 1 1\n0\n", 1),
            ("2 2 2\n1 0\n", 3),
            ("2 2 2\n1 0\n1 2\n", 3),
            ("2 1 2\n1 x\n", 2),
            ("2 1 2\n1 0 1\n", 2),
            ("2 1 1\n1\n1\n", 3),
        ] {
            match FqMatrix::from_text(bad) {
                Err(LinalgError::Parse { line: l, .. }) => assert_eq!(l, line, "{bad:?}"),
                other => panic!("{bad:?} parsed as {other:?}"),
            }
        }
    }

    fn arb_matrix(q: u32, max: usize) -> impl Strategy<Value = FqMatrix> {
        (0..=max, 0..=max).prop_flat_map(move |(r, c)| {
            proptest::collection::vec(0..q, r * c)
                .prop_map(move |data| FqMatrix::new(FieldSpec::new(q).unwrap(), r, c, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn rank_is_transpose_invariant(q in prop::sample::select(vec![2u32, 3, 5]), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = rng.random_range(0..8);
            let c = rng.random_range(0..8);
            let m = FqMatrix::random(f(q), r, c, &mut rng);
            prop_assert_eq!(m.rank(), m.transpose().rank());
            prop_assert_eq!(m.rank(), m.rank_generic());
        }

        #[test]
        fn product_is_associative(q in prop::sample::select(vec![2u32, 3, 5]), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c, d) = (rng.random_range(0..6), rng.random_range(0..6), rng.random_range(0..6), rng.random_range(0..6));
            let x = FqMatrix::random(f(q), a, b, &mut rng);
            let y = FqMatrix::random(f(q), b, c, &mut rng);
            let z = FqMatrix::random(f(q), c, d, &mut rng);
            prop_assert_eq!(x.mul(&y).unwrap().mul(&z).unwrap(), x.mul(&y.mul(&z).unwrap()).unwrap());
        }

        #[test]
        fn text_round_trip(m in prop_oneof![arb_matrix(2, 6), arb_matrix(5, 6), arb_matrix(251, 4)]) {
            prop_assert_eq!(FqMatrix::from_text(&m.to_text()).unwrap(), m);
        }
    }
}
