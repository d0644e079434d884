//! Spark-maximizing redundancy blocks and the MS-LC / OS-PRLC catalogs built from them.
//!
//! [`search_max_spark`] enumerates every `P` when the space has at most `2^20` members and
//! otherwise hill-climbs with restarts. [`select_mslc`] picks the maximizer whose element
//! proportions are closest to uniform, and [`build_osprlc_set`] pairs it with a partner
//! whose element counts make the set exactly balanced.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::{
    element_counts, poe_deviation, poe_matrix, poe_set, spark_subset_search, spark_via_codewords,
    CodeError, SparkSearch, SparkValue, SystematicCode,
};
use crate::fqlinalg::{FieldSpec, FqMatrix, LinalgError};

/// Shapes with `εK·log2(q)` at most this many bits are searched exhaustively.
pub const EXHAUSTIVE_BITS: f64 = 20.0;
/// Evaluations per hill-climbing restart.
pub const RESTART_EVALS: u64 = 20_000;
/// Largest number of equal-spark matrices kept by the randomized search.
pub const POOL_SIZE: usize = 256;
/// Default OS-PRLC set size.
pub const OSPRLC_SET_SIZE: usize = 2;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("search budget must be at least 1")]
    ZeroBudget,
    #[error("K and epsilon must be at least 1")]
    EmptyShape,
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("candidates do not share the maximal spark")]
    MixedSpark,
    #[error("no exactly balanced partner exists: {0}")]
    NoBalancedPartner(String),
    #[error("catalog has no {scheme} entry for epsilon {epsilon}")]
    MissingEntry { scheme: Scheme, epsilon: usize },
    #[error("catalog entry {scheme} epsilon {epsilon}: {reason}")]
    Verification { scheme: Scheme, epsilon: usize, reason: String },
    #[error("catalog parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "MSLC")]
    Mslc,
    #[serde(rename = "OSPRLC")]
    Osprlc,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Mslc => "MSLC",
            Scheme::Osprlc => "OSPRLC",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "").as_str() {
            "MSLC" => Ok(Scheme::Mslc),
            "OSPRLC" => Ok(Scheme::Osprlc),
            _ => Err(format!("unknown scheme {s:?}")),
        }
    }
}

/// Spark evaluation for a fixed `ε×K` shape, on row-major entries.
struct Evaluator {
    field: FieldSpec,
    k: usize,
    eps: usize,
    binary: bool,
}

impl Evaluator {
    fn new(field: FieldSpec, k: usize, eps: usize) -> Self {
        Self { field, k, eps, binary: field.is_binary() && eps <= 64 && k < 32 }
    }

    fn pack(&self, entries: &[u32]) -> Vec<u64> {
        let mut cols = vec![0u64; self.k];
        for r in 0..self.eps {
            for (c, col) in cols.iter_mut().enumerate() {
                *col |= (entries[r * self.k + c] as u64) << r;
            }
        }
        cols
    }

    /// `(spark, number of minimum-weight codewords)`. Only the spark is exact when it falls
    /// below `stop_below`; the count is zero off the binary path.
    fn profile(&self, entries: &[u32], packed: Option<&[u64]>, stop_below: usize) -> (usize, u64) {
        if self.binary {
            let owned;
            let cols = match packed {
                Some(c) => c,
                None => {
                    owned = self.pack(entries);
                    &owned
                }
            };
            return binary_weight_profile(cols, stop_below);
        }
        let p = FqMatrix::new(self.field, self.eps, self.k, entries.to_vec()).expect("entries in field");
        let code = SystematicCode::new(p).expect("nonempty shape");
        let spark = match spark_via_codewords(&code) {
            Ok(SparkValue::Finite(s)) => s,
            _ => match spark_subset_search(&code.parity_check_t(), None) {
                SparkSearch::Found { spark, .. } => spark,
                _ => unreachable!("H^T has more columns than rows"),
            },
        };
        (spark, 0)
    }

    fn spark(&self, entries: &[u32], packed: Option<&[u64]>, stop_below: usize) -> usize {
        self.profile(entries, packed, stop_below).0
    }

    /// Orders like `Σ_δ (PoE(P, δ) − 1/q)²`, scaled to an integer.
    fn deviation_key(&self, counts: &[usize]) -> u64 {
        let total = (self.eps * self.k) as i64;
        let q = self.field.q() as i64;
        counts.iter().map(|&c| (q * c as i64 - total).pow(2) as u64).sum()
    }

    fn to_matrix(&self, entries: Vec<u32>) -> FqMatrix {
        FqMatrix::new(self.field, self.eps, self.k, entries).expect("entries in field")
    }
}

fn counts_of(entries: &[u32], q: u32) -> Vec<usize> {
    let mut counts = vec![0; q as usize];
    for &v in entries {
        counts[v as usize] += 1;
    }
    counts
}

/// Minimum weight of `[u | Pu]` over nonzero `u` and how many `u` attain it. Stops as soon
/// as a weight below `stop_below` appears.
fn binary_weight_profile(cols: &[u64], stop_below: usize) -> (usize, u64) {
    let k = cols.len();
    let mut best = usize::MAX;
    let mut count = 0;
    let mut parity = 0u64;
    for i in 1u32..(1 << k) {
        parity ^= cols[i.trailing_zeros() as usize];
        let w = (i ^ (i >> 1)).count_ones() as usize + parity.count_ones() as usize;
        if w < best {
            best = w;
            count = 0;
            if best < stop_below {
                break;
            }
        }
        if w == best {
            count += 1;
        }
    }
    (best, count)
}

/// Equal-spark matrices ordered by `(deviation, entries)`, capped at [`POOL_SIZE`].
#[derive(Default)]
struct Pool {
    spark: usize,
    items: BTreeSet<(u64, Vec<u32>)>,
}

impl Pool {
    fn offer(&mut self, spark: usize, dev: u64, entries: &[u32]) {
        if spark < self.spark {
            return;
        }
        if spark > self.spark {
            self.spark = spark;
            self.items.clear();
        }
        if self.items.len() >= POOL_SIZE {
            let worst = self.items.last().expect("pool is full");
            if (dev, entries) >= (worst.0, worst.1.as_slice()) {
                return;
            }
        }
        if self.items.insert((dev, entries.to_vec())) && self.items.len() > POOL_SIZE {
            self.items.pop_last();
        }
    }

    fn merge(pools: Vec<Pool>) -> Pool {
        let mut out = Pool::default();
        for p in pools {
            for (dev, e) in p.items {
                out.offer(p.spark, dev, &e);
            }
        }
        out
    }
}

fn restart_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Splits `budget` evaluations into fixed-length restarts.
fn restart_lengths(budget: u64) -> Vec<u64> {
    let full = budget / RESTART_EVALS;
    let mut v = vec![RESTART_EVALS; full as usize];
    if !budget.is_multiple_of(RESTART_EVALS) {
        v.push(budget % RESTART_EVALS);
    }
    v
}

fn random_other(rng: &mut ChaCha8Rng, q: u32, current: u32) -> u32 {
    let r = rng.random_range(0..q - 1);
    if r >= current {
        r + 1
    } else {
        r
    }
}

fn hill_climb(ev: &Evaluator, seed: u64, restart: u64, evals: u64) -> Pool {
    let q = ev.field.q();
    let n = ev.eps * ev.k;
    let mut rng = restart_rng(seed, restart);
    let mut entries: Vec<u32> = (0..n).map(|_| rng.random_range(0..q)).collect();
    let mut packed = ev.binary.then(|| ev.pack(&entries));
    let mut counts = counts_of(&entries, q);
    let (mut spark, mut mult) = ev.profile(&entries, packed.as_deref(), 0);
    let mut pool = Pool::default();
    pool.offer(spark, ev.deviation_key(&counts), &entries);

    for _ in 1..evals {
        let pos = rng.random_range(0..n);
        let old = entries[pos];
        let new = random_other(&mut rng, q, old);
        let (r, c) = (pos / ev.k, pos % ev.k);
        entries[pos] = new;
        if let Some(p) = packed.as_mut() {
            p[c] ^= 1 << r;
        }
        let (s, m) = ev.profile(&entries, packed.as_deref(), spark);
        if s > spark || (s == spark && m <= mult) {
            (spark, mult) = (s, m);
            counts[old as usize] -= 1;
            counts[new as usize] += 1;
            pool.offer(spark, ev.deviation_key(&counts), &entries);
        } else {
            entries[pos] = old;
            if let Some(p) = packed.as_mut() {
                p[c] ^= 1 << r;
            }
        }
    }
    pool
}

fn exhaustive(ev: &Evaluator) -> (usize, Vec<Vec<u32>>) {
    let q = ev.field.q();
    let n = ev.eps * ev.k;
    let mut entries = vec![0u32; n];
    let mut best = 0;
    let mut found = Vec::new();
    loop {
        let s = ev.spark(&entries, None, best);
        if s > best {
            best = s;
            found.clear();
        }
        if s == best {
            found.push(entries.clone());
        }
        // odometer, last entry fastest so that `found` stays in lexicographic order
        let mut d = n;
        loop {
            if d == 0 {
                return (best, found);
            }
            d -= 1;
            entries[d] += 1;
            if entries[d] < q {
                break;
            }
            entries[d] = 0;
        }
    }
}

fn search_space_bits(field: FieldSpec, k: usize, eps: usize) -> f64 {
    (eps * k) as f64 * (field.q() as f64).log2()
}

/// Best-spark `ε×K` redundancy blocks, sorted lexicographically by row-major entries.
///
/// Exhaustive when `εK·log2(q) <= 20`; otherwise single-entry hill climbing (a mutation is
/// kept when the spark does not decrease and, at equal spark, the number of
/// minimum-weight codewords does not grow) over restarts of [`RESTART_EVALS`] evaluations
/// each, seeded per restart so the result does not depend on the thread count.
pub fn search_max_spark(
    field: FieldSpec,
    k: usize,
    epsilon: usize,
    budget: u64,
    seed: u64,
) -> Result<Vec<(FqMatrix, SparkValue)>, DesignError> {
    if budget == 0 {
        return Err(DesignError::ZeroBudget);
    }
    if k == 0 || epsilon == 0 {
        return Err(DesignError::EmptyShape);
    }
    let ev = Evaluator::new(field, k, epsilon);
    if search_space_bits(field, k, epsilon) <= EXHAUSTIVE_BITS {
        let (spark, found) = exhaustive(&ev);
        return Ok(found.into_iter().map(|e| (ev.to_matrix(e), SparkValue::Finite(spark))).collect());
    }
    Ok(randomized(&ev, budget, seed))
}

fn randomized(ev: &Evaluator, budget: u64, seed: u64) -> Vec<(FqMatrix, SparkValue)> {
    let pools: Vec<Pool> = restart_lengths(budget)
        .into_par_iter()
        .enumerate()
        .map(|(i, len)| hill_climb(ev, seed, i as u64, len))
        .collect();
    let pool = Pool::merge(pools);
    let spark = pool.spark;
    let mut entries: Vec<Vec<u32>> = pool.items.into_iter().map(|(_, e)| e).collect();
    entries.sort();
    entries.into_iter().map(|e| (ev.to_matrix(e), SparkValue::Finite(spark))).collect()
}

/// The candidate minimizing `Σ_δ (PoE(P, δ) − 1/q)²`, ties broken by row-major entries.
pub fn select_mslc(candidates: &[(FqMatrix, SparkValue)]) -> Result<FqMatrix, DesignError> {
    let best_spark = candidates.iter().map(|(_, s)| *s).max().ok_or(DesignError::NoCandidates)?;
    if candidates.iter().any(|(_, s)| *s != best_spark) {
        return Err(DesignError::MixedSpark);
    }
    let mut best: Option<(Ratio<u64>, &FqMatrix)> = None;
    for (p, _) in candidates {
        let dev = poe_deviation(p)?;
        let better = match &best {
            None => true,
            Some((d, m)) => (dev, p.entries()) < (*d, m.entries()),
        };
        if better {
            best = Some((dev, p));
        }
    }
    Ok(best.expect("nonempty").1.clone())
}

/// Per-element counts a partner of `first` needs for an exactly balanced pair.
fn partner_counts(first: &FqMatrix) -> Result<Vec<usize>, DesignError> {
    let q = first.field().q() as usize;
    let total = first.rows() * first.cols();
    if !(2 * total).is_multiple_of(q) {
        return Err(DesignError::NoBalancedPartner(format!(
            "2·εK = {} entries cannot be split evenly over {q} elements",
            2 * total
        )));
    }
    let share = 2 * total / q;
    let counts = element_counts(first);
    let mut need = Vec::with_capacity(q);
    for (delta, &c) in counts.iter().enumerate() {
        if c > share {
            return Err(DesignError::NoBalancedPartner(format!(
                "element {delta} appears {c} times, {} more than the pair allows",
                c - share
            )));
        }
        need.push(share - c);
    }
    Ok(need)
}

/// Best-spark matrix with the given element counts, by count-preserving swaps.
fn search_partner(ev: &Evaluator, need: &[usize], budget: u64, seed: u64) -> (usize, Vec<u32>) {
    let n = ev.eps * ev.k;
    let results: Vec<(usize, Vec<u32>)> = restart_lengths(budget)
        .into_par_iter()
        .enumerate()
        .map(|(i, len)| {
            let mut rng = restart_rng(seed, i as u64);
            let mut entries: Vec<u32> =
                need.iter().enumerate().flat_map(|(d, &c)| std::iter::repeat_n(d as u32, c)).collect();
            entries.shuffle(&mut rng);
            let mut packed = ev.binary.then(|| ev.pack(&entries));
            let (mut spark, mut mult) = ev.profile(&entries, packed.as_deref(), 0);
            let mut best = (spark, entries.clone());
            let uniform = need.iter().filter(|&&c| c > 0).count() < 2;
            for _ in 1..len {
                if uniform {
                    break;
                }
                let (a, b) = loop {
                    let a = rng.random_range(0..n);
                    let b = rng.random_range(0..n);
                    if entries[a] != entries[b] {
                        break (a, b);
                    }
                };
                let flip = |p: &mut Vec<u64>, e: &[u32]| {
                    for &i in &[a, b] {
                        let (r, c) = (i / ev.k, i % ev.k);
                        p[c] = (p[c] & !(1 << r)) | ((e[i] as u64) << r);
                    }
                };
                entries.swap(a, b);
                if let Some(p) = packed.as_mut() {
                    flip(p, &entries);
                }
                let (s, m) = ev.profile(&entries, packed.as_deref(), spark);
                if s > spark || (s == spark && m <= mult) {
                    (spark, mult) = (s, m);
                    if (s, std::cmp::Reverse(&entries)) > (best.0, std::cmp::Reverse(&best.1)) {
                        best = (s, entries.clone());
                    }
                } else {
                    entries.swap(a, b);
                    if let Some(p) = packed.as_mut() {
                        flip(p, &entries);
                    }
                }
            }
            best
        })
        .collect();
    results
        .into_iter()
        .min_by(|x, y| y.0.cmp(&x.0).then_with(|| x.1.cmp(&y.1)))
        .expect("budget >= 1")
}

/// Completes `first` into an OS-PRLC pair whose mean element proportions are exactly `1/q`.
pub fn osprlc_partner(first: &FqMatrix, budget: u64, seed: u64) -> Result<(FqMatrix, SparkValue), DesignError> {
    if budget == 0 {
        return Err(DesignError::ZeroBudget);
    }
    let field = first.field();
    let ev = Evaluator::new(field, first.cols(), first.rows());
    let need = partner_counts(first)?;
    let (mut spark, mut entries) = search_partner(&ev, &need, budget, seed);
    if field.is_binary() {
        let complement: Vec<u32> = first.entries().iter().map(|&v| 1 - v).collect();
        let s = ev.spark(&complement, None, 0);
        if (s, std::cmp::Reverse(&complement)) > (spark, std::cmp::Reverse(&entries)) {
            (spark, entries) = (s, complement);
        }
    }
    Ok((ev.to_matrix(entries), SparkValue::Finite(spark)))
}

/// `[MS-LC matrix, balanced partner]`; the partner's spark may fall below the maximum.
pub fn build_osprlc_set(field: FieldSpec, k: usize, epsilon: usize, budget: u64, seed: u64) -> Result<Vec<FqMatrix>, DesignError> {
    let first = select_mslc(&search_max_spark(field, k, epsilon, budget, seed)?)?;
    let (partner, _) = osprlc_partner(&first, budget, partner_seed(seed))?;
    Ok(vec![first, partner])
}

fn partner_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatalogMatrix {
    pub p: FqMatrix,
    pub spark: SparkValue,
    /// `PoE(P, δ)` indexed by `δ`.
    pub poe: Vec<Ratio<u64>>,
}

impl CatalogMatrix {
    pub fn new(p: FqMatrix, spark: SparkValue) -> Result<Self, DesignError> {
        let poe = p.field().elements().map(|d| poe_matrix(&p, d)).collect::<Result<_, _>>()?;
        Ok(Self { p, spark, poe })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatalogEntry {
    pub scheme: Scheme,
    pub epsilon: usize,
    pub seed: u64,
    pub budget: u64,
    pub matrices: Vec<CatalogMatrix>,
}

impl CatalogEntry {
    pub fn lowest_spark(&self) -> SparkValue {
        self.matrices.iter().map(|m| m.spark).min().expect("entries are nonempty")
    }

    pub fn highest_spark(&self) -> SparkValue {
        self.matrices.iter().map(|m| m.spark).max().expect("entries are nonempty")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Catalog {
    pub field: FieldSpec,
    pub k: usize,
    entries: BTreeMap<(Scheme, usize), CatalogEntry>,
}

impl Catalog {
    pub fn new(field: FieldSpec, k: usize) -> Self {
        Self { field, k, entries: BTreeMap::new() }
    }

    /// Searches every `ε` in `1..=eps_max` and records both schemes.
    pub fn build(field: FieldSpec, k: usize, eps_max: usize, budget: u64, seed: u64) -> Result<Self, DesignError> {
        let mut cat = Self::new(field, k);
        for eps in 1..=eps_max {
            for entry in design_entries(field, k, eps, budget, seed, &[Scheme::Mslc, Scheme::Osprlc])? {
                cat.insert(entry)?;
            }
        }
        Ok(cat)
    }

    pub fn insert(&mut self, entry: CatalogEntry) -> Result<(), DesignError> {
        verify_entry(self.field, self.k, &entry)?;
        self.entries.insert((entry.scheme, entry.epsilon), entry);
        Ok(())
    }

    pub fn get(&self, scheme: Scheme, epsilon: usize) -> Option<&CatalogEntry> {
        self.entries.get(&(scheme, epsilon))
    }

    pub fn entries(&self) -> impl Iterator<Item = &CatalogEntry> {
        self.entries.values()
    }

    /// Every scheme present covers `1..=ε_max` without gaps.
    pub fn is_contiguous(&self) -> bool {
        [Scheme::Mslc, Scheme::Osprlc].iter().all(|&s| {
            let eps: Vec<usize> = self.entries.keys().filter(|(sc, _)| *sc == s).map(|(_, e)| *e).collect();
            eps.iter().enumerate().all(|(i, &e)| e == i + 1)
        })
    }
}

/// Entries for one redundancy and the requested schemes, sharing a single unconstrained
/// search.
pub fn design_entries(
    field: FieldSpec,
    k: usize,
    epsilon: usize,
    budget: u64,
    seed: u64,
    schemes: &[Scheme],
) -> Result<Vec<CatalogEntry>, DesignError> {
    let candidates = search_max_spark(field, k, epsilon, budget, seed)?;
    let spark = candidates[0].1;
    let first = select_mslc(&candidates)?;
    let mut out = Vec::new();
    for &scheme in schemes {
        let matrices = match scheme {
            Scheme::Mslc => vec![CatalogMatrix::new(first.clone(), spark)?],
            Scheme::Osprlc => {
                let (partner, partner_spark) = osprlc_partner(&first, budget, partner_seed(seed))?;
                vec![CatalogMatrix::new(first.clone(), spark)?, CatalogMatrix::new(partner, partner_spark)?]
            }
        };
        out.push(CatalogEntry { scheme, epsilon, seed, budget, matrices });
    }
    Ok(out)
}

fn verify_entry(field: FieldSpec, k: usize, entry: &CatalogEntry) -> Result<(), DesignError> {
    let fail = |reason: String| DesignError::Verification { scheme: entry.scheme, epsilon: entry.epsilon, reason };
    if entry.matrices.is_empty() {
        return Err(fail("no matrices".into()));
    }
    if entry.scheme == Scheme::Mslc && entry.matrices.len() != 1 {
        return Err(fail(format!("MSLC entry holds {} matrices", entry.matrices.len())));
    }
    for (i, m) in entry.matrices.iter().enumerate() {
        if m.p.field() != field || m.p.shape() != (entry.epsilon, k) {
            return Err(fail(format!("matrix {i} has shape {:?} over F_{}", m.p.shape(), m.p.field().q())));
        }
        let SparkValue::Finite(s) = m.spark else {
            return Err(fail(format!("matrix {i} stores an unbounded spark")));
        };
        let ht = SystematicCode::new(m.p.clone())?.parity_check_t();
        match spark_subset_search(&ht, Some(s)) {
            SparkSearch::Found { spark, .. } if spark == s => {}
            other => return Err(fail(format!("matrix {i} stores spark {s}, verification gives {:?}", other.value()))),
        }
        for (d, stored) in m.poe.iter().enumerate() {
            if *stored != poe_matrix(&m.p, d as u32)? {
                return Err(fail(format!("matrix {i} stores a wrong proportion for element {d}")));
            }
        }
        if m.poe.len() != field.q() as usize {
            return Err(fail(format!("matrix {i} stores {} proportions", m.poe.len())));
        }
    }
    if entry.scheme == Scheme::Osprlc {
        let set: Vec<FqMatrix> = entry.matrices.iter().map(|m| m.p.clone()).collect();
        let target = Ratio::new(1, field.q() as u64);
        for d in field.elements() {
            let got = poe_set(&set, d)?;
            if got != target {
                return Err(fail(format!("set proportion of element {d} is {got}, not {target}")));
            }
        }
    }
    Ok(())
}

/// MS-LC returns its single matrix without touching `rng`; OS-PRLC draws uniformly.
pub fn sample_design<'a, R: Rng + ?Sized>(
    catalog: &'a Catalog,
    scheme: Scheme,
    epsilon: usize,
    rng: &mut R,
) -> Result<&'a FqMatrix, DesignError> {
    let entry = catalog.get(scheme, epsilon).ok_or(DesignError::MissingEntry { scheme, epsilon })?;
    Ok(match scheme {
        Scheme::Mslc => &entry.matrices[0].p,
        Scheme::Osprlc => &entry.matrices[rng.random_range(0..entry.matrices.len())].p,
    })
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: Vec<String>,
    spark: usize,
    poe: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryJson {
    q: u32,
    #[serde(rename = "K")]
    k: usize,
    scheme: Scheme,
    epsilon: usize,
    seed: u64,
    budget: u64,
    matrices: Vec<MatrixJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogJson {
    q: u32,
    #[serde(rename = "K")]
    k: usize,
    entries: Vec<EntryJson>,
}

impl Catalog {
    pub fn to_json(&self) -> String {
        let q = self.field.q();
        let entries = self
            .entries()
            .map(|e| EntryJson {
                q,
                k: self.k,
                scheme: e.scheme,
                epsilon: e.epsilon,
                seed: e.seed,
                budget: e.budget,
                matrices: e
                    .matrices
                    .iter()
                    .map(|m| MatrixJson {
                        rows: (0..m.p.rows())
                            .map(|r| m.p.row(r).iter().map(u32::to_string).collect::<Vec<_>>().join(" "))
                            .collect(),
                        spark: m.spark.finite().expect("catalog sparks are finite"),
                        poe: m.poe.iter().enumerate().map(|(d, r)| (d.to_string(), format!("{}/{}", r.numer(), r.denom()))).collect(),
                    })
                    .collect(),
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&CatalogJson { q, k: self.k, entries }).expect("serializable");
        s.push('\n');
        s
    }

    /// Parses and re-verifies every entry.
    pub fn from_json(text: &str) -> Result<Self, DesignError> {
        let raw: CatalogJson = serde_json::from_str(text).map_err(|e| DesignError::Parse(e.to_string()))?;
        let field = FieldSpec::new(raw.q)?;
        let mut cat = Catalog::new(field, raw.k);
        for e in raw.entries {
            let fail = |reason: String| DesignError::Verification { scheme: e.scheme, epsilon: e.epsilon, reason };
            if e.q != raw.q || e.k != raw.k {
                return Err(fail(format!("entry field/K ({}, {}) differs from catalog", e.q, e.k)));
            }
            let mut matrices = Vec::with_capacity(e.matrices.len());
            for (i, m) in e.matrices.iter().enumerate() {
                let rows = m
                    .rows
                    .iter()
                    .map(|r| r.split_whitespace().map(|t| t.parse::<u32>()).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|err| fail(format!("matrix {i}: {err}")))?;
                let p = FqMatrix::from_rows(field, &rows).map_err(|err| fail(format!("matrix {i}: {err}")))?;
                let mut poe = Vec::with_capacity(m.poe.len());
                for d in 0..m.poe.len() {
                    let s = m.poe.get(&d.to_string()).ok_or_else(|| fail(format!("matrix {i}: missing proportion {d}")))?;
                    poe.push(parse_ratio(s).ok_or_else(|| fail(format!("matrix {i}: bad rational {s:?}")))?);
                }
                matrices.push(CatalogMatrix { p, spark: SparkValue::Finite(m.spark), poe });
            }
            cat.insert(CatalogEntry { scheme: e.scheme, epsilon: e.epsilon, seed: e.seed, budget: e.budget, matrices })?;
        }
        Ok(cat)
    }
}

fn parse_ratio(s: &str) -> Option<Ratio<u64>> {
    let (n, d) = s.split_once('/')?;
    let d: u64 = d.trim().parse().ok()?;
    (d != 0).then_some(())?;
    Some(Ratio::new(n.trim().parse().ok()?, d))
}

pub fn save_catalog(catalog: &Catalog, path: &Path) -> Result<(), DesignError> {
    Ok(fs::write(path, catalog.to_json())?)
}

pub fn load_catalog(path: &Path) -> Result<Catalog, DesignError> {
    Catalog::from_json(&fs::read_to_string(path)?)
}
