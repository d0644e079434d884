//! Systematic codes, spark computation and element-proportion statistics.
//!
//! A systematic code over `F_q` is fixed by its `(N-K)×K` redundancy block `P`:
//! the generator is `G = [I_K; P]` (N×K) and the parity-check matrix is
//! `H = [-P | I_{N-K}]^T` (N×(N-K)), so that `H^T G = 0`.
//!
//! The spark of a matrix is the size of its smallest linearly dependent column subset.
//! Two independent algorithms compute it: [`spark_subset_search`] enumerates column
//! subsets and tests rank, while [`spark_via_codewords`] takes the minimum Hamming weight
//! over the column space of `G` (the null space of `H^T`).

use num_rational::Ratio;
use rand::Rng;
use thiserror::Error;

use crate::fqlinalg::{gf2, FieldSpec, FqMatrix, LinalgError};

/// Largest `q^K` that [`spark_via_codewords`] will enumerate.
pub const CODEWORD_ENUMERATION_LIMIT: u64 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodeError {
    #[error("redundancy block must have at least one row and one column, got {rows}x{cols}")]
    InvalidShape { rows: usize, cols: usize },
    #[error("q^K = {q}^{k} exceeds the codeword enumeration limit")]
    EnumerationTooLarge { q: u32, k: usize },
    #[error("proportion of elements is undefined for an empty matrix")]
    EmptyMatrix,
    #[error("proportion of elements is undefined for an empty set")]
    EmptySet,
    #[error("matrix {index} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { index: usize, expected: (usize, usize), found: (usize, usize) },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SystematicCode {
    p: FqMatrix,
}

impl SystematicCode {
    /// `K` is the column count of `p`, `N - K` its row count.
    pub fn new(p: FqMatrix) -> Result<Self, CodeError> {
        if p.rows() == 0 || p.cols() == 0 {
            return Err(CodeError::InvalidShape { rows: p.rows(), cols: p.cols() });
        }
        Ok(Self { p })
    }

    /// A code with `P` drawn uniformly at random, as in plain systematic RLC.
    pub fn random<R: Rng + ?Sized>(field: FieldSpec, k: usize, n: usize, rng: &mut R) -> Result<Self, CodeError> {
        if n <= k {
            return Err(CodeError::InvalidShape { rows: n.saturating_sub(k), cols: k });
        }
        Self::new(FqMatrix::random(field, n - k, k, rng))
    }

    pub fn field(&self) -> FieldSpec {
        self.p.field()
    }

    pub fn k(&self) -> usize {
        self.p.cols()
    }

    pub fn n(&self) -> usize {
        self.p.cols() + self.p.rows()
    }

    /// `N - K`
    pub fn redundancy(&self) -> usize {
        self.p.rows()
    }

    pub fn p(&self) -> &FqMatrix {
        &self.p
    }

    /// `G = [I_K; P]`, shape N×K.
    pub fn generator(&self) -> FqMatrix {
        FqMatrix::identity(self.field(), self.k())
            .vstack(&self.p)
            .expect("identity and P share the column count")
    }

    /// `H^T = [-P | I_{N-K}]`, shape (N-K)×N.
    pub fn parity_check_t(&self) -> FqMatrix {
        self.p
            .neg()
            .hstack(&FqMatrix::identity(self.field(), self.redundancy()))
            .expect("P and the identity share the row count")
    }

    /// `H`, shape N×(N-K).
    pub fn parity_check(&self) -> FqMatrix {
        self.parity_check_t().transpose()
    }
}

/// Spark of a matrix: the smallest number of linearly dependent columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SparkValue {
    Finite(usize),
    /// All columns are linearly independent.
    Unbounded,
}

impl SparkValue {
    pub fn finite(self) -> Option<usize> {
        match self {
            SparkValue::Finite(s) => Some(s),
            SparkValue::Unbounded => None,
        }
    }

    /// `spark > t`
    pub fn exceeds(self, t: usize) -> bool {
        match self {
            SparkValue::Finite(s) => s > t,
            SparkValue::Unbounded => true,
        }
    }
}

impl std::fmt::Display for SparkValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SparkValue::Finite(s) => write!(f, "{s}"),
            SparkValue::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// Outcome of a (possibly capped) column-subset search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SparkSearch {
    /// `witness` is the lexicographically first dependent subset of minimal size (0-based).
    Found { spark: usize, witness: Vec<usize> },
    Unbounded,
    /// No dependent subset of size `<= cap`; the spark is larger than `cap`.
    ExceedsCap(usize),
}

impl SparkSearch {
    /// The exact spark, unless the search stopped at its cap.
    pub fn value(&self) -> Option<SparkValue> {
        match self {
            SparkSearch::Found { spark, .. } => Some(SparkValue::Finite(*spark)),
            SparkSearch::Unbounded => Some(SparkValue::Unbounded),
            SparkSearch::ExceedsCap(_) => None,
        }
    }

    /// `spark > t`. Only meaningful for `t <= cap` when the search was capped.
    pub fn exceeds(&self, t: usize) -> bool {
        match self {
            SparkSearch::Found { spark, .. } => *spark > t,
            SparkSearch::Unbounded => true,
            SparkSearch::ExceedsCap(cap) => {
                debug_assert!(t <= *cap, "query {t} beyond search cap {cap}");
                true
            }
        }
    }
}

/// Advances `idx` to the next `idx.len()`-subset of `0..n` in lexicographic order.
pub(crate) fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Spark by exhaustive subset search.
///
/// Subset sizes are tried in increasing order and subsets of each size in lexicographic
/// order; a subset of size `s` is dependent when its rank is below `s`. With `cap`, sizes
/// above `cap` are not searched and [`SparkSearch::ExceedsCap`] is returned instead.
pub fn spark_subset_search(a: &FqMatrix, cap: Option<usize>) -> SparkSearch {
    let limit = a.cols().min(a.rows() + 1);
    let bound = cap.map_or(limit, |c| c.min(limit));
    let packed = (a.field().is_binary() && a.rows() <= 64).then(|| gf2::pack_columns(a));

    for s in 1..=bound {
        let mut idx: Vec<usize> = (0..s).collect();
        loop {
            let dependent = match &packed {
                // Every smaller subset is independent, so a dependent s-subset is a circuit
                // and over F_2 its columns sum to zero.
                Some(cols) => idx.iter().fold(0u64, |acc, &c| acc ^ cols[c]) == 0,
                None => a.select_cols(&idx).expect("indices in range").rank() < s,
            };
            if dependent {
                return SparkSearch::Found { spark: s, witness: idx };
            }
            if !next_combination(&mut idx, a.cols()) {
                break;
            }
        }
    }
    match cap {
        Some(c) if c < limit => SparkSearch::ExceedsCap(c),
        _ => SparkSearch::Unbounded,
    }
}

/// Minimum weight of `[u | Pu]` over nonzero `u`, for binary `P` given as packed columns
/// (bit `r` of `cols[k]` is `P[r][k]`). Returns early with any weight below `stop_below`
/// once one is found, so the result is exact only when it is `>= stop_below`.
pub fn binary_min_weight(cols: &[u64], stop_below: usize) -> usize {
    let k = cols.len();
    assert!(k < 32, "binary codeword enumeration supports K < 32");
    let mut best = usize::MAX;
    let mut parity = 0u64;
    // Gray-code walk over all nonzero u.
    for i in 1u32..(1 << k) {
        let bit = i.trailing_zeros() as usize;
        parity ^= cols[bit];
        let gray = i ^ (i >> 1);
        let w = gray.count_ones() as usize + parity.count_ones() as usize;
        if w < best {
            best = w;
            if best < stop_below || best == 1 {
                break;
            }
        }
    }
    best
}

/// Spark of `H^T` via minimum Hamming weight over the `q^K - 1` nonzero codewords `G u`.
pub fn spark_via_codewords(code: &SystematicCode) -> Result<SparkValue, CodeError> {
    let q = code.field().q();
    let k = code.k();
    let too_large = (q as u64).checked_pow(k as u32).is_none_or(|n| n > CODEWORD_ENUMERATION_LIMIT);
    if too_large {
        return Err(CodeError::EnumerationTooLarge { q, k });
    }
    let p = code.p();
    if code.field().is_binary() && p.rows() <= 64 {
        let cols = gf2::pack_columns(p);
        return Ok(SparkValue::Finite(binary_min_weight(&cols, 0)));
    }

    let f = code.field();
    let eps = p.rows();
    let cols: Vec<Vec<u32>> = (0..k).map(|c| p.column(c)).collect();
    let mut u = vec![0u32; k];
    let mut pu = vec![0u32; eps];
    let mut u_weight = 0usize;
    let mut best = usize::MAX;
    // Odometer over F_q^K; each digit step adds its column once to P·u.
    'outer: loop {
        let mut d = 0;
        loop {
            if d == k {
                break 'outer;
            }
            let old = u[d];
            u[d] = if old + 1 == q { 0 } else { old + 1 };
            for (acc, &c) in pu.iter_mut().zip(&cols[d]) {
                *acc = f.add(*acc, c);
            }
            match (old, u[d]) {
                (0, _) => u_weight += 1,
                (_, 0) => u_weight -= 1,
                _ => {}
            }
            if u[d] != 0 {
                break;
            }
            d += 1;
        }
        let w = u_weight + pu.iter().filter(|&&v| v != 0).count();
        best = best.min(w);
    }
    Ok(SparkValue::Finite(best))
}

/// Proportion of entries of `p` equal to `delta`.
pub fn poe_matrix(p: &FqMatrix, delta: u32) -> Result<Ratio<u64>, CodeError> {
    p.field().check(delta)?;
    let total = p.entries().len() as u64;
    if total == 0 {
        return Err(CodeError::EmptyMatrix);
    }
    let hits = p.entries().iter().filter(|&&v| v == delta).count() as u64;
    Ok(Ratio::new(hits, total))
}

/// Mean of [`poe_matrix`] over a set of equally shaped matrices.
pub fn poe_set(set: &[FqMatrix], delta: u32) -> Result<Ratio<u64>, CodeError> {
    let first = set.first().ok_or(CodeError::EmptySet)?;
    let mut sum = Ratio::from_integer(0);
    for (index, m) in set.iter().enumerate() {
        if m.shape() != first.shape() {
            return Err(CodeError::ShapeMismatch { index, expected: first.shape(), found: m.shape() });
        }
        if m.field() != first.field() {
            return Err(LinalgError::FieldMismatch { left: first.field().q(), right: m.field().q() }.into());
        }
        sum += poe_matrix(m, delta)?;
    }
    Ok(sum / Ratio::from_integer(set.len() as u64))
}

/// `Σ_δ (PoE(P, δ) − 1/q)²`, the balance objective used to choose among equal-spark matrices.
pub fn poe_deviation(p: &FqMatrix) -> Result<Ratio<u64>, CodeError> {
    let q = p.field().q() as u64;
    let target = Ratio::new(1, q);
    let mut acc = Ratio::from_integer(0u64);
    for delta in p.field().elements() {
        let x = poe_matrix(p, delta)?;
        let d = if x > target { x - target } else { target - x };
        acc += d * d;
    }
    Ok(acc)
}

/// Per-element entry counts of `p`, indexed by field element.
pub fn element_counts(p: &FqMatrix) -> Vec<usize> {
    let mut counts = vec![0; p.field().q() as usize];
    for &v in p.entries() {
        counts[v as usize] += 1;
    }
    counts
}
