//! Shared data model: block partitions, complex signals and support sets.

use std::ops::{Deref, DerefMut, Range};

use num_complex::Complex64;

use crate::error::{check_len, Error, Result};

pub type C64 = Complex64;

/// Partition of `0..n` into contiguous blocks, each with a sparsity budget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockStructure {
    lengths: Vec<usize>,
    sparsities: Vec<usize>,
    offsets: Vec<usize>,
    total_len: usize,
}

impl BlockStructure {
    pub fn new(lengths: Vec<usize>, sparsities: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::BlockStructure("at least one block is required".into()));
        }
        if lengths.len() != sparsities.len() {
            return Err(Error::BlockStructure(format!(
                "{} block lengths but {} sparsities",
                lengths.len(),
                sparsities.len()
            )));
        }
        for (i, (&d, &s)) in lengths.iter().zip(&sparsities).enumerate() {
            if s == 0 || s > d {
                return Err(Error::BlockStructure(format!(
                    "block {i}: sparsity {s} must lie in 1..={d}"
                )));
            }
        }
        let mut offsets = Vec::with_capacity(lengths.len());
        let mut acc = 0;
        for &d in &lengths {
            offsets.push(acc);
            acc += d;
        }
        Ok(Self {
            lengths,
            sparsities,
            offsets,
            total_len: acc,
        })
    }

    /// `blocks` blocks of equal length `len`, each allowed `sparsity` nonzeros.
    pub fn uniform(blocks: usize, len: usize, sparsity: usize) -> Result<Self> {
        Self::new(vec![len; blocks], vec![sparsity; blocks])
    }

    pub fn num_blocks(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn sparsities(&self) -> &[usize] {
        &self.sparsities
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn total_len(&self) -> usize {
        self.total_len
    }

    /// Σ s_i, the size of every support produced by block-wise selection.
    pub fn total_sparsity(&self) -> usize {
        self.sparsities.iter().sum()
    }

    pub fn range(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block] + self.lengths[block]
    }

    /// Block containing global index `j`.
    pub fn block_of(&self, j: usize) -> usize {
        debug_assert!(j < self.total_len);
        self.offsets.partition_point(|&o| o <= j) - 1
    }
}

/// A vector in ℂⁿ. Used for signals, observations, gradients and directions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComplexSignal(Vec<C64>);

impl ComplexSignal {
    pub fn zeros(n: usize) -> Self {
        Self(vec![C64::new(0.0, 0.0); n])
    }

    pub fn into_inner(self) -> Vec<C64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Number of entries that are not exactly zero.
    pub fn count_nonzero(&self) -> usize {
        self.0.iter().filter(|z| **z != C64::new(0.0, 0.0)).count()
    }

    pub fn scaled(&self, c: C64) -> Self {
        self.0.iter().map(|z| z * c).collect()
    }
}

impl Deref for ComplexSignal {
    type Target = Vec<C64>;
    fn deref(&self) -> &Vec<C64> {
        &self.0
    }
}

impl DerefMut for ComplexSignal {
    fn deref_mut(&mut self) -> &mut Vec<C64> {
        &mut self.0
    }
}

impl From<Vec<C64>> for ComplexSignal {
    fn from(v: Vec<C64>) -> Self {
        Self(v)
    }
}

impl FromIterator<C64> for ComplexSignal {
    fn from_iter<I: IntoIterator<Item = C64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Strictly increasing set of indices into `0..n`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SupportSet {
    indices: Vec<usize>,
}

impl SupportSet {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Support(format!(
                "indices must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::Support(format!("index {last} out of range for length {n}")));
            }
        }
        Ok(Self { indices })
    }

    /// Sorts and deduplicates before validating.
    pub fn from_unsorted(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices, n)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// T_C: every index of `0..n` not in the set, ascending.
    pub fn complement(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n.saturating_sub(self.len()));
        let mut it = self.indices.iter().peekable();
        for j in 0..n {
            if it.peek() == Some(&&j) {
                it.next();
            } else {
                out.push(j);
            }
        }
        out
    }

    /// Membership mask of length `n`.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &j in &self.indices {
            mask[j] = true;
        }
        mask
    }

    /// Γ_[i]: the indices falling inside each block.
    pub fn per_block(&self, bs: &BlockStructure) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); bs.num_blocks()];
        for &j in &self.indices {
            out[bs.block_of(j)].push(j);
        }
        out
    }
}

/// x_[i], the i-th block of `x`.
pub fn block_slice(x: &[C64], bs: &BlockStructure, block: usize) -> Result<ComplexSignal> {
    check_len("block_slice signal", bs.total_len(), x.len())?;
    if block >= bs.num_blocks() {
        return Err(Error::BlockIndex {
            index: block,
            blocks: bs.num_blocks(),
        });
    }
    Ok(x[bs.range(block)].to_vec().into())
}

/// x_T, the entries of `x` at the support indices in ascending order.
pub fn gather(x: &[C64], support: &SupportSet) -> Result<ComplexSignal> {
    if let Some(&last) = support.indices().last() {
        if last >= x.len() {
            return Err(Error::Support(format!(
                "index {last} out of range for length {}",
                x.len()
            )));
        }
    }
    Ok(support.indices().iter().map(|&j| x[j]).collect())
}

/// Places `vals` on the support positions of a length-`n` zero vector.
pub fn scatter(vals: &[C64], support: &SupportSet, n: usize) -> Result<ComplexSignal> {
    check_len("scatter values", support.len(), vals.len())?;
    if let Some(&last) = support.indices().last() {
        if last >= n {
            return Err(Error::Support(format!("index {last} out of range for length {n}")));
        }
    }
    let mut out = ComplexSignal::zeros(n);
    for (&j, &v) in support.indices().iter().zip(vals) {
        out[j] = v;
    }
    Ok(out)
}
