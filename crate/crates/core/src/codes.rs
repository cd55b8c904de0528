//! Walsh–Hadamard identity sequences and their shifted correlation structure.
//!
//! Every RIS reflects a BPSK image of one Hadamard row. The detector searches all
//! cyclic shifts `c` and time lags `k`, so what matters for two RISs sharing the
//! air is not the zero-shift orthogonality of their rows but the largest partial
//! correlation that survives a shift and a truncated overlap window. The functions
//! here enumerate that structure exactly with integer arithmetic.
//!
//! Shift and offset arguments follow the 1-based convention `c ∈ {1, …, M}` where
//! `c = M` is the unshifted sequence. Frame positions and lags are 0-based sample
//! counts: `v1` noise samples precede the reflected block and lag `k` means the
//! correlator window starts at sample `k`.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One RIS identity: a ±1 sequence whose length is a power of two.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarySequence {
    id: u32,
    symbols: Vec<i8>,
}

impl BinarySequence {
    pub fn new(id: u32, symbols: Vec<i8>) -> Result<Self> {
        if symbols.is_empty() || !symbols.len().is_power_of_two() {
            return Err(Error::invalid(format!(
                "sequence length {} is not a power of two",
                symbols.len()
            )));
        }
        if let Some(bad) = symbols.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::invalid(format!("symbol {bad} is not ±1")));
        }
        Ok(Self { id, symbols })
    }

    /// Builds the sequence from binary symbols `q ∈ {0, 1}` via `s = 2q − 1`.
    pub fn from_bits(id: u32, bits: &[u8]) -> Result<Self> {
        let symbols = bits
            .iter()
            .map(|&q| match q {
                0 => Ok(-1),
                1 => Ok(1),
                other => Err(Error::invalid(format!("bit {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(id, symbols)
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[i8] {
        &self.symbols
    }

    pub fn bits(&self) -> Vec<u8> {
        self.symbols.iter().map(|&s| u8::from(s > 0)).collect()
    }

    pub fn with_id(mut self, id: u32) -> Self {
        self.id = id;
        self
    }

    /// Symbol at position `m` (0-based) of the sequence rotated left by `c`.
    #[inline]
    pub fn shifted_symbol(&self, c: usize, m: usize) -> i8 {
        let len = self.symbols.len();
        self.symbols[(c % len + m) % len]
    }
}

/// Rotates `seq` left by `c`: output element `m` is input element
/// `((c + m − 1) mod M) + 1` in 1-based indexing. `c` is reduced mod `M`.
pub fn circular_shift(seq: &BinarySequence, c: usize) -> BinarySequence {
    let len = seq.len();
    let mut symbols = seq.symbols.clone();
    symbols.rotate_left(c % len);
    BinarySequence { id: seq.id, symbols }
}

/// Sylvester–Hadamard matrix of order `m`; row 0 is all ones.
pub fn hadamard_matrix(m: usize) -> Result<Vec<Vec<i8>>> {
    if m == 0 || !m.is_power_of_two() {
        return Err(Error::invalid(format!("Hadamard order {m} is not a power of two")));
    }
    let mut h = vec![vec![1i8]];
    while h.len() < m {
        let n = h.len();
        let mut next = vec![vec![0i8; 2 * n]; 2 * n];
        for (i, row) in h.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                next[i][j] = v;
                next[i][j + n] = v;
                next[i + n][j] = v;
                next[i + n][j + n] = -v;
            }
        }
        h = next;
    }
    Ok(h)
}

/// Look-up table from RIS IDs to Hadamard rows.
///
/// Entry `l` carries RIS ID `l + 1` and the symbols of Hadamard row `rows[l]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBook {
    m: usize,
    rows: Vec<usize>,
    entries: Vec<BinarySequence>,
}

impl CodeBook {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn entries(&self) -> &[BinarySequence] {
        &self.entries
    }

    pub fn get(&self, id: u32) -> Option<&BinarySequence> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Row 0 of the Hadamard matrix never appears in a codebook.
    pub fn excluded_rows(&self) -> &'static [usize] {
        &[0]
    }

    pub fn to_file(&self) -> CodeBookFile {
        CodeBookFile {
            m: self.m,
            rows: self.rows.clone(),
            symbols: self.entries.iter().map(|e| e.symbols.clone()).collect(),
        }
    }

    /// Rebuilds a codebook from its exported form, checking that each symbol
    /// array really is the Hadamard row it claims to be.
    pub fn from_file(file: &CodeBookFile) -> Result<Self> {
        let book = build_codebook(file.m, &file.rows)?;
        if file.symbols.len() != book.entries.len() {
            return Err(Error::invalid(format!(
                "{} symbol arrays for {} rows",
                file.symbols.len(),
                book.entries.len()
            )));
        }
        for (entry, symbols) in book.entries.iter().zip(&file.symbols) {
            if entry.symbols != *symbols {
                return Err(Error::invalid(format!(
                    "symbols for RIS {} do not match their Hadamard row",
                    entry.id
                )));
            }
        }
        Ok(book)
    }
}

/// Serializable codebook: `m`, the Hadamard row of every entry and its ±1 symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBookFile {
    pub m: usize,
    pub rows: Vec<usize>,
    pub symbols: Vec<Vec<i8>>,
}

pub fn build_codebook(m: usize, assigned_rows: &[usize]) -> Result<CodeBook> {
    let h = hadamard_matrix(m)?;
    let mut seen = BTreeSet::new();
    for &row in assigned_rows {
        if row == 0 {
            return Err(Error::invalid(
                "Hadamard row 0 is the constant all-ones pattern; an unmodulated \
                 reflection cannot be told apart from a static scatterer",
            ));
        }
        if row >= m {
            return Err(Error::invalid(format!("row {row} out of range for M = {m}")));
        }
        if !seen.insert(row) {
            return Err(Error::invalid(format!("row {row} assigned twice")));
        }
    }
    let entries = assigned_rows
        .iter()
        .enumerate()
        .map(|(l, &row)| BinarySequence {
            id: l as u32 + 1,
            symbols: h[row].clone(),
        })
        .collect();
    Ok(CodeBook {
        m,
        rows: assigned_rows.to_vec(),
        entries,
    })
}

/// Hadamard row `row` of order `m` as a standalone sequence with the given ID.
pub fn hadamard_row(m: usize, row: usize, id: u32) -> Result<BinarySequence> {
    let book = build_codebook(m, &[row])?;
    Ok(book.entries.into_iter().next().unwrap().with_id(id))
}

/// Signed partial correlation `A` between the detector's copy of `code_l`
/// rotated by `c` and the received copy of `code_d` rotated by `c_d`, for a
/// correlator window at lag `k` when the reflected block starts after `v1`
/// noise samples.
///
/// Only the part of the window that overlaps the reflected block contributes,
/// so the sum runs over `M − |k − v1|` terms and is zero once the window no
/// longer overlaps.
pub fn partial_cross_corr(
    code_l: &BinarySequence,
    code_d: &BinarySequence,
    c: usize,
    c_d: usize,
    k: usize,
    v1: usize,
) -> i64 {
    let m = code_l.len();
    debug_assert_eq!(m, code_d.len());
    let (start, end) = overlap(m, k, v1);
    (start..end)
        .map(|pos| {
            let u = pos + k - v1;
            i64::from(code_l.shifted_symbol(c, pos)) * i64::from(code_d.shifted_symbol(c_d, u))
        })
        .sum()
}

/// Range of window positions `m` whose sample `m + k` falls inside the reflected
/// block `[v1, v1 + M)`.
fn overlap(m: usize, k: usize, v1: usize) -> (usize, usize) {
    let start = v1.saturating_sub(k).min(m);
    let end = (m + v1).saturating_sub(k).min(m);
    (start, end.max(start))
}

/// Law of the number of leading noise samples `v1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct V1Law {
    weights: Vec<(usize, f64)>,
}

impl V1Law {
    /// `v1` uniform on `{1, …, v_total}`.
    pub fn uniform(v_total: usize) -> Self {
        let p = 1.0 / v_total as f64;
        Self {
            weights: (1..=v_total).map(|v| (v, p)).collect(),
        }
    }

    pub fn fixed(v1: usize) -> Self {
        Self {
            weights: vec![(v1, 1.0)],
        }
    }

    pub fn weights(&self) -> &[(usize, f64)] {
        &self.weights
    }
}

/// Which lags the detector searches while enumerating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagSearch {
    /// Every `k ∈ {0, …, v_total}`.
    Full,
    /// Only the aligned lag `k = v1`.
    AlignedOnly,
}

/// The enumeration space behind [`cross_corr_pmf`].
#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub v_total: usize,
    pub v1_law: V1Law,
    /// Interfering RIS offsets `c_d`, each equally likely.
    pub interferer_offsets: Vec<usize>,
    /// Detector shifts `c` searched by the argmax.
    pub detector_shifts: Vec<usize>,
    pub lags: LagSearch,
}

impl Enumeration {
    /// Full detector search, uniform interferer offset and uniform `v1`.
    pub fn uniform(m: usize, v_total: usize) -> Self {
        Self {
            v_total,
            v1_law: V1Law::uniform(v_total),
            interferer_offsets: (1..=m).collect(),
            detector_shifts: (1..=m).collect(),
            lags: LagSearch::Full,
        }
    }

    /// Unshifted, aligned correlation only.
    pub fn zero_shift_only(m: usize, v1: usize) -> Self {
        Self {
            v_total: v1,
            v1_law: V1Law::fixed(v1),
            interferer_offsets: vec![m],
            detector_shifts: vec![m],
            lags: LagSearch::AlignedOnly,
        }
    }
}

/// Exact law of `|A|²` at the detector's argmax over `(c, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrPmf {
    pub support: Vec<u64>,
    pub probs: Vec<f64>,
    /// Largest `|A|` over the whole enumeration.
    pub a_tilde: u64,
}

impl CrossCorrPmf {
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(a, p)| a as f64 * p).sum()
    }
}

/// Largest `|A|` the detector of `code_l` finds for one interferer realisation.
fn max_abs_corr(
    code_l: &BinarySequence,
    code_d: &BinarySequence,
    c_d: usize,
    v1: usize,
    space: &Enumeration,
) -> u64 {
    let lags: Vec<usize> = match space.lags {
        LagSearch::Full => (0..=space.v_total).collect(),
        LagSearch::AlignedOnly => vec![v1],
    };
    let mut best = 0u64;
    for &k in &lags {
        for &c in &space.detector_shifts {
            best = best.max(partial_cross_corr(code_l, code_d, c, c_d, k, v1).unsigned_abs());
        }
    }
    best
}

/// Exhaustive pmf of `|A^{(d)}_{ĉ,k̂}|²` over the interferer's offset and `v1`.
pub fn cross_corr_pmf(
    code_l: &BinarySequence,
    code_d: &BinarySequence,
    space: &Enumeration,
) -> Result<CrossCorrPmf> {
    if code_l.len() != code_d.len() {
        return Err(Error::invalid("codes have different lengths"));
    }
    if space.interferer_offsets.is_empty() || space.detector_shifts.is_empty() {
        return Err(Error::invalid("empty enumeration"));
    }
    let offset_weight = 1.0 / space.interferer_offsets.len() as f64;
    let mut mass: BTreeMap<u64, f64> = BTreeMap::new();
    let mut a_tilde = 0;
    for &(v1, p_v1) in space.v1_law.weights() {
        for &c_d in &space.interferer_offsets {
            let a = max_abs_corr(code_l, code_d, c_d, v1, space);
            a_tilde = a_tilde.max(a);
            *mass.entry(a * a).or_default() += p_v1 * offset_weight;
        }
    }
    let (support, probs) = mass.into_iter().unzip();
    Ok(CrossCorrPmf {
        support,
        probs,
        a_tilde,
    })
}

/// Worst-case `Ã` over all ordered pairs of `codes`; lower is better.
pub fn set_quality(codes: &[BinarySequence], v_total: usize) -> Result<u64> {
    if codes.len() < 2 {
        return Err(Error::invalid("set quality needs at least two codes"));
    }
    let m = codes[0].len();
    let space = Enumeration::uniform(m, v_total);
    let mut worst = 0;
    for (l, d) in codes.iter().tuple_combinations() {
        worst = worst
            .max(cross_corr_pmf(l, d, &space)?.a_tilde)
            .max(cross_corr_pmf(d, l, &space)?.a_tilde);
    }
    Ok(worst)
}

/// Ranking record for one candidate subset of Hadamard rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetQuality {
    pub rows: Vec<usize>,
    /// [`set_quality`] of the subset.
    pub quality: u64,
    /// Sum of `Ã` over ordered pairs; separates subsets of equal quality.
    pub total: u64,
}

/// Scores every `size`-subset of `pool` (Hadamard rows of order `m`) and
/// returns them sorted best first: by quality, then by the pairwise total,
/// then lexicographically by rows.
pub fn rank_subsets(
    m: usize,
    pool: &[usize],
    size: usize,
    v_total: usize,
) -> Result<Vec<SubsetQuality>> {
    if size < 2 || size > pool.len() {
        return Err(Error::invalid(format!(
            "cannot draw {size}-subsets from {} rows",
            pool.len()
        )));
    }
    let book = build_codebook(m, pool)?;
    let space = Enumeration::uniform(m, v_total);
    let n = pool.len();
    let mut table = vec![vec![0u64; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                table[i][j] = cross_corr_pmf(&book.entries[i], &book.entries[j], &space)?.a_tilde;
            }
        }
    }
    let mut ranked: Vec<SubsetQuality> = (0..n)
        .combinations(size)
        .map(|idx| {
            let mut quality = 0;
            let mut total = 0;
            for &i in &idx {
                for &j in &idx {
                    if i != j {
                        quality = quality.max(table[i][j]);
                        total += table[i][j];
                    }
                }
            }
            SubsetQuality {
                rows: idx.iter().map(|&i| pool[i]).collect(),
                quality,
                total,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        (a.quality, a.total)
            .cmp(&(b.quality, b.total))
            .then_with(|| a.rows.cmp(&b.rows))
    });
    Ok(ranked)
}

/// Best and worst subsets of a ranking. The worst is the highest-scoring subset,
/// lexicographically smallest among ties.
pub fn extreme_subsets(ranked: &[SubsetQuality]) -> Option<(&SubsetQuality, &SubsetQuality)> {
    let best = ranked.first()?;
    let top = ranked.last()?;
    let worst = ranked
        .iter()
        .filter(|s| (s.quality, s.total) == (top.quality, top.total))
        .min_by(|a, b| a.rows.cmp(&b.rows))?;
    Some((best, worst))
}

/// Number of distinct cyclic shifts of `seq`, counting `s` and `−s` once.
pub fn distinct_shift_count(seq: &BinarySequence) -> usize {
    let mut seen: BTreeSet<Vec<i8>> = BTreeSet::new();
    for c in 0..seq.len() {
        let mut shifted = seq.symbols.clone();
        shifted.rotate_left(c);
        if shifted[0] < 0 {
            shifted.iter_mut().for_each(|s| *s = -*s);
        }
        seen.insert(shifted);
    }
    seen.len()
}

/// Fraction `ρ` of the `(v_total + 1)·M` correlator outputs that are distinct
/// random variables. Outputs at different lags never coincide, so only the
/// shift structure of the code matters.
pub fn distinct_fraction(seq: &BinarySequence) -> f64 {
    distinct_shift_count(seq) as f64 / seq.len() as f64
}
