//! Rank machinery: the indicator map from a configuration to its chamber,
//! order statistics, gaps and enumeration of the symmetric group.
//!
//! Ranks and names are 1-based at every public boundary. Rank 1 is the
//! largest coordinate. Internally the crate works with 0-based slices through
//! the `pub(crate)` accessors.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default largest `n` for which sums over all `n!` chambers are attempted.
pub const EXACT_ENUMERATION_CAP: usize = 11;

/// A bijection between ranks and names.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    // 0-based: rank k (0-based) is held by name rank_to_name[k] (0-based).
    rank_to_name: Vec<usize>,
    name_to_rank: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        let v: Vec<usize> = (0..n).collect();
        Self {
            rank_to_name: v.clone(),
            name_to_rank: v,
        }
    }

    /// Build from a 1-based list whose entry `k` is the name holding rank `k`.
    pub fn from_rank_to_name(names: &[usize]) -> Result<Self> {
        let zero_based: Vec<usize> = names
            .iter()
            .map(|&x| {
                x.checked_sub(1)
                    .ok_or_else(|| Error::InvalidArgument("names are 1-based".into()))
            })
            .collect::<Result<_>>()?;
        Self::from_zero_based(zero_based)
    }

    pub(crate) fn from_zero_based(rank_to_name: Vec<usize>) -> Result<Self> {
        let n = rank_to_name.len();
        let mut name_to_rank = vec![usize::MAX; n];
        for (k, &i) in rank_to_name.iter().enumerate() {
            if i >= n || name_to_rank[i] != usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "not a permutation of 1..{n}: {:?}",
                    rank_to_name.iter().map(|x| x + 1).collect::<Vec<_>>()
                )));
            }
            name_to_rank[i] = k;
        }
        Ok(Self {
            rank_to_name,
            name_to_rank,
        })
    }

    /// Caller guarantees `rank_to_name` is a 0-based bijection.
    pub(crate) fn from_zero_based_unchecked(rank_to_name: &[usize]) -> Self {
        let mut name_to_rank = vec![0; rank_to_name.len()];
        for (k, &i) in rank_to_name.iter().enumerate() {
            name_to_rank[i] = k;
        }
        Self {
            rank_to_name: rank_to_name.to_vec(),
            name_to_rank,
        }
    }

    pub fn n(&self) -> usize {
        self.rank_to_name.len()
    }

    /// Name (1-based) holding `rank` (1-based).
    pub fn name_at(&self, rank: usize) -> usize {
        self.rank_to_name[rank - 1] + 1
    }

    /// Rank (1-based) held by `name` (1-based).
    pub fn rank_of(&self, name: usize) -> usize {
        self.name_to_rank[name - 1] + 1
    }

    /// 1-based `rank -> name` table.
    pub fn rank_to_name(&self) -> Vec<usize> {
        self.rank_to_name.iter().map(|x| x + 1).collect()
    }

    /// 1-based `name -> rank` table.
    pub fn name_to_rank(&self) -> Vec<usize> {
        self.name_to_rank.iter().map(|x| x + 1).collect()
    }

    pub(crate) fn names0(&self) -> &[usize] {
        &self.rank_to_name
    }

    pub(crate) fn ranks0(&self) -> &[usize] {
        &self.name_to_rank
    }

    pub fn inverse(&self) -> Self {
        Self {
            rank_to_name: self.name_to_rank.clone(),
            name_to_rank: self.rank_to_name.clone(),
        }
    }

    /// Position in the lexicographic order of `rank_to_name` (Lehmer code).
    pub fn lex_index(&self) -> u64 {
        lex_index(&self.rank_to_name)
    }

    /// Inverse of [`Permutation::lex_index`].
    pub fn from_lex_index(n: usize, index: u64) -> Result<Self> {
        let total = factorial(n).ok_or(Error::Capacity { n, cap: 20 })?;
        if index >= total {
            return Err(Error::InvalidArgument(format!(
                "index {index} out of range for n = {n}"
            )));
        }
        let mut buf = vec![0; n];
        unrank_into(index, &mut buf);
        Ok(Self::from_zero_based_unchecked(&buf))
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation{:?}", self.rank_to_name())
    }
}

impl Serialize for Permutation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rank_to_name().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Permutation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<usize>::deserialize(d)?;
        Permutation::from_rank_to_name(&names).map_err(serde::de::Error::custom)
    }
}

/// `n!` if it fits in a `u64`.
pub fn factorial(n: usize) -> Option<u64> {
    (1..=n as u64).try_fold(1u64, |acc, k| acc.checked_mul(k))
}

fn check_finite<T: Real>(y: &[T]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("configuration vector"))
    }
}

/// `a` outranks `b`: larger value, ties to the lower name.
#[inline]
fn outranks<T: Real>(y: &[T], a: usize, b: usize) -> bool {
    y[a] > y[b] || (y[a] == y[b] && a < b)
}

/// Re-sort `order` (0-based rank -> name) for the configuration `y` with an
/// insertion sort. Cheap when `order` is already nearly sorted, which is the
/// case between consecutive simulation steps.
pub(crate) fn resort_ranks<T: Real>(y: &[T], order: &mut [usize]) {
    for k in 1..order.len() {
        let cur = order[k];
        let mut j = k;
        while j > 0 && outranks(y, cur, order[j - 1]) {
            order[j] = order[j - 1];
            j -= 1;
        }
        order[j] = cur;
    }
}

/// The indicator map: the chamber containing `y`.
pub fn rank_permutation<T: Real>(y: &[T]) -> Result<Permutation> {
    check_finite(y)?;
    let mut order: Vec<usize> = (0..y.len()).collect();
    // stable sort on descending value keeps equal values in name order
    order.sort_by(|&a, &b| y[b].partial_cmp(&y[a]).expect("finite"));
    Ok(Permutation::from_zero_based_unchecked(&order))
}

/// Order statistics `Z_1 >= ... >= Z_n`.
pub fn ranked_values<T: Real>(y: &[T]) -> Result<Vec<T>> {
    let p = rank_permutation(y)?;
    Ok(p.names0().iter().map(|&i| y[i]).collect())
}

/// Rank gaps `Z_k - Z_{k+1}`, `k = 1..n-1`.
pub fn gaps<T: Real>(y: &[T]) -> Result<Vec<T>> {
    let z = ranked_values(y)?;
    Ok(z.windows(2).map(|w| w[0] - w[1]).collect())
}

/// All of `Σ_n` in lexicographic order of `rank_to_name`.
pub fn enumerate_permutations(n: usize) -> Result<PermutationIter> {
    enumerate_permutations_with_cap(n, EXACT_ENUMERATION_CAP)
}

pub fn enumerate_permutations_with_cap(n: usize, cap: usize) -> Result<PermutationIter> {
    if n > cap {
        return Err(Error::Capacity { n, cap });
    }
    let total = factorial(n).ok_or(Error::Capacity { n, cap })?;
    Ok(PermutationIter::over_range(n, 0..total))
}

/// Split `0..n!` into consecutive index ranges of at most `chunk` elements.
///
/// Boundaries depend only on `n` and `chunk`, so a reduction that folds the
/// chunks in order is independent of how many workers processed them.
pub fn permutation_chunks(n: usize, chunk: u64) -> Result<Vec<Range<u64>>> {
    let total = factorial(n).ok_or(Error::Capacity { n, cap: 20 })?;
    let chunk = chunk.max(1);
    Ok((0..total.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(total))
        .collect())
}

/// Iterator over a contiguous lexicographic index range of `Σ_n`.
pub struct PermutationIter {
    cursor: LexCursor,
    remaining: u64,
}

impl PermutationIter {
    pub fn over_range(n: usize, range: Range<u64>) -> Self {
        Self {
            cursor: LexCursor::at(n, range.start),
            remaining: range.end.saturating_sub(range.start),
        }
    }
}

impl Iterator for PermutationIter {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        if self.remaining == 0 {
            return None;
        }
        let p = Permutation::from_zero_based_unchecked(self.cursor.current());
        self.remaining -= 1;
        if self.remaining > 0 {
            self.cursor.advance();
        }
        Some(p)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (r, Some(r))
    }
}

/// Allocation-free walk through permutations in lexicographic order.
pub(crate) struct LexCursor {
    buf: Vec<usize>,
}

impl LexCursor {
    pub(crate) fn at(n: usize, index: u64) -> Self {
        let mut buf = vec![0; n];
        unrank_into(index, &mut buf);
        Self { buf }
    }

    #[inline]
    pub(crate) fn current(&self) -> &[usize] {
        &self.buf
    }

    /// Step to the next permutation; returns the first position that changed,
    /// or `None` after the last permutation.
    #[inline]
    pub(crate) fn advance(&mut self) -> Option<usize> {
        let v = &mut self.buf;
        let n = v.len();
        if n < 2 {
            return None;
        }
        let mut i = n - 1;
        while i > 0 && v[i - 1] >= v[i] {
            i -= 1;
        }
        if i == 0 {
            return None;
        }
        let mut j = n - 1;
        while v[j] <= v[i - 1] {
            j -= 1;
        }
        v.swap(i - 1, j);
        v[i..].reverse();
        Some(i - 1)
    }
}

/// Factorial-number-system unranking into a 0-based buffer.
fn unrank_into(mut index: u64, out: &mut [usize]) {
    let n = out.len();
    let mut pool: Vec<usize> = (0..n).collect();
    for (pos, slot) in out.iter_mut().enumerate() {
        let f = factorial(n - 1 - pos).expect("n <= 20");
        let digit = (index / f) as usize;
        index %= f;
        *slot = pool.remove(digit);
    }
}

fn lex_index(v: &[usize]) -> u64 {
    let n = v.len();
    let mut idx = 0u64;
    for i in 0..n {
        let smaller = v[i + 1..].iter().filter(|&&x| x < v[i]).count() as u64;
        idx += smaller * factorial(n - 1 - i).expect("n <= 20");
    }
    idx
}
