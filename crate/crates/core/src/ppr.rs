//! Partial packet recovery in front of the linear decoder.
//!
//! When the CRC-clean rows do not determine the source packets, the syndrome
//! `S = H^T Y = (H_R̄)^T E_R̄` is computed and each of its columns is explained by the
//! sparsest error vector over the corrupted rows (exhaustive search by increasing
//! weight). Corrupted rows are corrected, re-checked against their CRC, and the rows that
//! pass join the clean set before decoding is retried.
//!
//! A column solution of weight `t` is certified unique when `spark((H_R̄)^T) > 2t`.

use std::collections::HashMap;

use thiserror::Error;

use crate::code::{next_combination, spark_subset_search, SystematicCode};
use crate::fqlinalg::{gf2, FieldSpec, FqMatrix, LinalgError};
use crate::relay::{CrcSpec, Delivery};

/// Default bound on candidate vectors examined per syndrome column.
pub const DEFAULT_WORK_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PprError {
    #[error("no error vector of weight <= {w_max} explains the syndrome column")]
    NoSolutionWithinCap { w_max: usize },
    #[error("work cap of {cap} candidates reached before a solution was found")]
    WorkCapReached { cap: u64 },
    #[error("syndrome column has length {found}, expected {expected}")]
    SyndromeLength { expected: usize, found: usize },
    #[error("weight cap {w_max} exceeds the {unknowns} unknowns")]
    WeightCapTooLarge { w_max: usize, unknowns: usize },
    #[error("invalid reception state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Packets held by the ground station together with the clean/corrupted index split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceptionState {
    code: SystematicCode,
    y: FqMatrix,
    clean: Vec<usize>,
    corrupted: Vec<usize>,
    crcs: Vec<u16>,
    crc_spec: CrcSpec,
}

impl ReceptionState {
    /// Validates that `clean` and `corrupted` partition `0..N` and that the CRC verdicts
    /// agree with the split.
    pub fn new(
        code: SystematicCode,
        y: FqMatrix,
        mut clean: Vec<usize>,
        mut corrupted: Vec<usize>,
        crcs: Vec<u16>,
        crc_spec: CrcSpec,
    ) -> Result<Self, PprError> {
        let n = code.n();
        if y.rows() != n || crcs.len() != n {
            return Err(PprError::InvalidState(format!("expected {n} rows and checksums")));
        }
        if y.field() != code.field() || crc_spec.field != code.field() {
            return Err(PprError::InvalidState("field mismatch".into()));
        }
        clean.sort_unstable();
        corrupted.sort_unstable();
        let mut seen = vec![false; n];
        for &i in clean.iter().chain(&corrupted) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(PprError::InvalidState(format!("index {i} repeated or out of range")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(PprError::InvalidState("index sets do not cover every packet".into()));
        }
        let state = Self { code, y, clean, corrupted, crcs, crc_spec };
        for &i in &state.clean {
            if !state.row_passes_crc(i, state.y.row(i)) {
                return Err(PprError::InvalidState(format!("clean row {i} fails CRC")));
            }
        }
        for &i in &state.corrupted {
            if state.row_passes_crc(i, state.y.row(i)) {
                return Err(PprError::InvalidState(format!("corrupted row {i} passes CRC")));
            }
        }
        Ok(state)
    }

    pub fn from_delivery(code: SystematicCode, delivery: Delivery, crc_spec: CrcSpec) -> Result<Self, PprError> {
        Self::new(code, delivery.y, delivery.clean, delivery.corrupted, delivery.crcs, crc_spec)
    }

    fn row_passes_crc(&self, i: usize, row: &[u32]) -> bool {
        self.crc_spec.checksum(row) == self.crcs[i]
    }

    pub fn code(&self) -> &SystematicCode {
        &self.code
    }

    pub fn y(&self) -> &FqMatrix {
        &self.y
    }

    /// `R`, increasing.
    pub fn clean(&self) -> &[usize] {
        &self.clean
    }

    /// `R̄`, increasing.
    pub fn corrupted(&self) -> &[usize] {
        &self.corrupted
    }

    pub fn crcs(&self) -> &[u16] {
        &self.crcs
    }

    pub fn crc_spec(&self) -> &CrcSpec {
        &self.crc_spec
    }

    /// `G_R`
    pub fn clean_generator(&self) -> FqMatrix {
        self.code.generator().select_rows(&self.clean).expect("indices validated")
    }

    pub fn clean_payloads(&self) -> FqMatrix {
        self.y.select_rows(&self.clean).expect("indices validated")
    }
}

/// `S = H^T Y`
pub fn compute_syndrome(code: &SystematicCode, y: &FqMatrix) -> Result<FqMatrix, PprError> {
    Ok(code.parity_check_t().mul(y)?)
}

/// `H_R̄`: the rows of `H` indexed by `rbar`, in order. Shape `|R̄| × (N-K)`.
pub fn restrict_parity(code: &SystematicCode, rbar: &[usize]) -> Result<FqMatrix, PprError> {
    Ok(code.parity_check().select_rows(rbar)?)
}

/// Sparsest solution of one syndrome column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnSolution {
    pub w: Vec<u32>,
    pub weight: usize,
    /// `spark((H_R̄)^T) > 2 · weight`
    pub certified_unique: bool,
    /// Another solution of the same weight exists.
    pub ambiguous: bool,
}

/// Solves `A w = s` for the sparsest `w`, with memoized spark certificates and a cache of
/// already solved syndromes. `A` is `(H_R̄)^T`.
pub struct ColumnSolver<'a> {
    a: &'a FqMatrix,
    field: FieldSpec,
    packed: Option<Vec<u64>>,
    columns: Vec<Vec<u32>>,
    work_cap: u64,
    certificates: HashMap<usize, bool>,
    cache: HashMap<Vec<u32>, Result<ColumnSolution, PprError>>,
}

impl<'a> ColumnSolver<'a> {
    pub fn new(a: &'a FqMatrix, work_cap: u64) -> Self {
        let field = a.field();
        let packed = (field.is_binary() && a.rows() <= 64).then(|| gf2::pack_columns(a));
        let columns = if packed.is_some() { Vec::new() } else { (0..a.cols()).map(|c| a.column(c)).collect() };
        Self { a, field, packed, columns, work_cap, certificates: HashMap::new(), cache: HashMap::new() }
    }

    /// `spark(A) > 2t`, via a capped subset search.
    pub fn certifies(&mut self, t: usize) -> bool {
        let a = self.a;
        *self.certificates.entry(t).or_insert_with(|| spark_subset_search(a, Some(2 * t)).exceeds(2 * t))
    }

    /// Searches weights `0..=w_max`; within a weight, supports in lexicographic order and
    /// nonzero values in odometer order (last position fastest). The first hit is returned;
    /// the rest of that weight is scanned to set `ambiguous`.
    pub fn solve(&mut self, s: &[u32], w_max: usize) -> Result<ColumnSolution, PprError> {
        if s.len() != self.a.rows() {
            return Err(PprError::SyndromeLength { expected: self.a.rows(), found: s.len() });
        }
        let unknowns = self.a.cols();
        if w_max > unknowns {
            return Err(PprError::WeightCapTooLarge { w_max, unknowns });
        }
        if let Some(hit) = self.cache.get(s) {
            if hit.as_ref().is_ok_and(|sol| sol.weight <= w_max) {
                return hit.clone();
            }
        }
        let result = self.search(s, w_max);
        let result = result.map(|(w, weight, ambiguous)| ColumnSolution {
            w,
            weight,
            certified_unique: self.certifies(weight),
            ambiguous,
        });
        self.cache.insert(s.to_vec(), result.clone());
        result
    }

    fn search(&self, s: &[u32], w_max: usize) -> Result<(Vec<u32>, usize, bool), PprError> {
        let n = self.a.cols();
        let mut examined = 0u64;
        if s.iter().all(|&v| v == 0) {
            return Ok((vec![0; n], 0, false));
        }
        if let Some(cols) = &self.packed {
            let target = s.iter().enumerate().fold(0u64, |acc, (r, &v)| acc | ((v as u64) << r));
            for t in 1..=w_max {
                let mut idx: Vec<usize> = (0..t).collect();
                let mut found: Option<Vec<usize>> = None;
                loop {
                    examined += 1;
                    if found.is_none() && examined > self.work_cap {
                        return Err(PprError::WorkCapReached { cap: self.work_cap });
                    }
                    if idx.iter().fold(0u64, |acc, &c| acc ^ cols[c]) == target {
                        match found {
                            None => found = Some(idx.clone()),
                            Some(support) => return Ok((indicator(n, &support), t, true)),
                        }
                    }
                    if !next_combination(&mut idx, n) || (found.is_some() && examined > self.work_cap) {
                        break;
                    }
                }
                if let Some(support) = found {
                    // a truncated ambiguity scan cannot rule out a second solution
                    let ambiguous = examined > self.work_cap;
                    return Ok((indicator(n, &support), t, ambiguous));
                }
            }
            return Err(PprError::NoSolutionWithinCap { w_max });
        }

        let f = self.field;
        let q = f.q();
        let rows = self.a.rows();
        for t in 1..=w_max {
            let mut idx: Vec<usize> = (0..t).collect();
            let mut found: Option<Vec<u32>> = None;
            'supports: loop {
                let mut vals = vec![1u32; t];
                loop {
                    examined += 1;
                    if found.is_none() && examined > self.work_cap {
                        return Err(PprError::WorkCapReached { cap: self.work_cap });
                    }
                    let mut acc = vec![0u32; rows];
                    for (&c, &v) in idx.iter().zip(&vals) {
                        for (a, &x) in acc.iter_mut().zip(&self.columns[c]) {
                            *a = f.add(*a, f.mul(v, x));
                        }
                    }
                    if acc == s {
                        let mut w = vec![0; n];
                        for (&c, &v) in idx.iter().zip(&vals) {
                            w[c] = v;
                        }
                        match found {
                            None => found = Some(w),
                            Some(first) => return Ok((first, t, true)),
                        }
                    }
                    if found.is_some() && examined > self.work_cap {
                        break 'supports;
                    }
                    // odometer over (F_q \ {0})^t
                    let mut d = t;
                    loop {
                        if d == 0 {
                            break;
                        }
                        d -= 1;
                        if vals[d] + 1 < q {
                            vals[d] += 1;
                            break;
                        }
                        vals[d] = 1;
                        if d == 0 {
                            d = usize::MAX;
                            break;
                        }
                    }
                    if d == usize::MAX || t == 0 {
                        break;
                    }
                }
                if !next_combination(&mut idx, n) {
                    break;
                }
            }
            if let Some(w) = found {
                return Ok((w, t, examined > self.work_cap));
            }
        }
        Err(PprError::NoSolutionWithinCap { w_max })
    }
}

fn indicator(n: usize, support: &[usize]) -> Vec<u32> {
    let mut w = vec![0; n];
    for &i in support {
        w[i] = 1;
    }
    w
}

/// Sparsest `w` with `h_rbar_t · w^T = s_col`, searching weights up to `w_max`.
pub fn l0_solve_column(h_rbar_t: &FqMatrix, s_col: &[u32], w_max: usize) -> Result<ColumnSolution, PprError> {
    ColumnSolver::new(h_rbar_t, DEFAULT_WORK_CAP).solve(s_col, w_max)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepairOutcome {
    /// Number of repaired packets (`ν`).
    pub nu: usize,
    /// Indices that moved from `R̄` to `R`, increasing.
    pub repaired: Vec<usize>,
    /// One entry per syndrome column; `None` when the column was left unsolved.
    pub per_column: Vec<Option<ColumnSolution>>,
    /// Columns that hit the work cap (a subset of the unsolved ones).
    pub work_cap_hits: usize,
    /// `Ê_R̄`, rows ordered as `R̄` before repair.
    pub error_estimate: FqMatrix,
    /// Repaired rows that differ from the transmitted packet. Filled in by
    /// [`RepairOutcome::audit`]; repair itself only has the CRC.
    pub false_accepts: usize,
}

impl RepairOutcome {
    /// Every solved column was certified unique.
    pub fn all_certified(&self) -> bool {
        self.per_column.iter().flatten().all(|c| c.certified_unique)
    }

    pub fn unsolved(&self) -> usize {
        self.per_column.iter().filter(|c| c.is_none()).count()
    }

    /// Counts repaired rows of `state` that differ from the transmitted matrix `x`.
    pub fn audit(&mut self, state: &ReceptionState, x: &FqMatrix) {
        self.false_accepts = self.repaired.iter().filter(|&&i| state.y().row(i) != x.row(i)).count();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepairOptions {
    /// Largest error weight searched per column; `None` means `|R̄|`.
    pub w_max: Option<usize>,
    pub work_cap: u64,
}

impl Default for RepairOptions {
    fn default() -> Self {
        Self { w_max: None, work_cap: DEFAULT_WORK_CAP }
    }
}

/// Solves every syndrome column, subtracts the estimated errors from the corrupted rows and
/// moves the rows that now pass CRC into the clean set. Unsolved columns contribute a zero
/// error estimate.
pub fn repair(state: &ReceptionState, s: &FqMatrix, opts: RepairOptions) -> Result<(ReceptionState, RepairOutcome), PprError> {
    let rbar = state.corrupted();
    let field = state.code().field();
    let l = state.y().cols();
    if s.shape() != (state.code().redundancy(), l) {
        return Err(PprError::InvalidState(format!("syndrome shape {:?}", s.shape())));
    }
    let a = restrict_parity(state.code(), rbar)?.transpose();
    let w_max = opts.w_max.unwrap_or(rbar.len()).min(rbar.len());
    let mut solver = ColumnSolver::new(&a, opts.work_cap);

    let mut per_column = Vec::with_capacity(l);
    let mut work_cap_hits = 0;
    let mut e_hat = FqMatrix::zeros(field, rbar.len(), l);
    for j in 0..l {
        match solver.solve(&s.column(j), w_max) {
            Ok(sol) => {
                for (i, &v) in sol.w.iter().enumerate() {
                    if v != 0 {
                        e_hat.set(i, j, v);
                    }
                }
                per_column.push(Some(sol));
            }
            Err(PprError::WorkCapReached { .. }) => {
                work_cap_hits += 1;
                per_column.push(None);
            }
            Err(PprError::NoSolutionWithinCap { .. }) => per_column.push(None),
            Err(e) => return Err(e),
        }
    }

    let x_hat = state.y().select_rows(rbar)?.sub(&e_hat)?;
    let mut next = state.clone();
    let mut repaired = Vec::new();
    let mut y_data = state.y().entries().to_vec();
    for (i, &n) in rbar.iter().enumerate() {
        let row = x_hat.row(i);
        if state.row_passes_crc(n, row) {
            repaired.push(n);
            y_data[n * l..(n + 1) * l].copy_from_slice(row);
        }
    }
    next.y = FqMatrix::new(field, state.y().rows(), l, y_data)?;
    next.clean.extend_from_slice(&repaired);
    next.clean.sort_unstable();
    next.corrupted.retain(|n| repaired.binary_search(n).is_err());

    let outcome = RepairOutcome {
        nu: repaired.len(),
        repaired,
        per_column,
        work_cap_hits,
        error_estimate: e_hat,
        false_accepts: 0,
    };
    Ok((next, outcome))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecodeOptions {
    /// Run syndrome decoding when the clean rows alone do not have rank `K`.
    pub syndrome_decoding: bool,
    pub repair: RepairOptions,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeReport {
    pub success: bool,
    /// Recovered source packets on success.
    pub source: Option<FqMatrix>,
    pub sd_invoked: bool,
    /// Syndrome decoding turned a failure into a success.
    pub sd_changed_outcome: bool,
    pub nu: usize,
    pub repair: Option<RepairOutcome>,
}

impl DecodeReport {
    /// Per-column uniqueness certificates; `None` entries are unsolved columns.
    pub fn column_certificates(&self) -> Vec<Option<bool>> {
        self.repair
            .as_ref()
            .map(|r| r.per_column.iter().map(|c| c.as_ref().map(|s| s.certified_unique)).collect())
            .unwrap_or_default()
    }
}

/// Solves `G_R U = Y_R` when `rank(G_R) = K`. The solve rejects inconsistent systems, so a
/// returned `U` reproduces every clean row exactly.
fn solve_clean(state: &ReceptionState) -> Option<FqMatrix> {
    let g_r = state.clean_generator();
    if g_r.rank() < state.code().k() {
        return None;
    }
    let u = g_r.solve_unique(&state.clean_payloads()).ok()?;
    debug_assert_eq!(g_r.mul(&u).ok()?, state.clean_payloads());
    Some(u)
}

/// Linear decoding of the clean rows, optionally preceded by syndrome-decoding repair when
/// the clean rows do not have full rank.
pub fn decode(state: &ReceptionState, opts: DecodeOptions) -> Result<(ReceptionState, DecodeReport), PprError> {
    let k = state.code().k();
    if state.clean_generator().rank() == k {
        let u = solve_clean(state);
        let report = DecodeReport {
            success: u.is_some(),
            source: u,
            sd_invoked: false,
            sd_changed_outcome: false,
            nu: 0,
            repair: None,
        };
        return Ok((state.clone(), report));
    }
    if !opts.syndrome_decoding || state.corrupted().is_empty() {
        let report = DecodeReport { success: false, source: None, sd_invoked: false, sd_changed_outcome: false, nu: 0, repair: None };
        return Ok((state.clone(), report));
    }
    let s = compute_syndrome(state.code(), state.y())?;
    let (next, outcome) = repair(state, &s, opts.repair)?;
    let u = solve_clean(&next);
    let report = DecodeReport {
        success: u.is_some(),
        sd_changed_outcome: u.is_some(),
        source: u,
        sd_invoked: true,
        nu: outcome.nu,
        repair: Some(outcome),
    };
    Ok((next, report))
}
