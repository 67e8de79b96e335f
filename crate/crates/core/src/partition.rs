//! Set partitions and ranked (ordered) partitions, exact EPPF evaluation,
//! and the exhaustive enumeration oracle used by normalization tests.
//!
//! The ordered EPPF is the primitive: for ranked block sizes
//! (m_1, ..., m_k) with cumulative counts r_j = m_1 + ... + m_j,
//!
//! ```text
//! pi(m, p) = prod_j kappa(m_j, r_{j-1}) / prod_j phi(r_j).
//! ```
//!
//! The unordered EPPF sums pi(m, p) over all k! rankings of the blocks;
//! blocks of equal size give equal terms, so the sum runs over distinct
//! permutations of the size multiset weighted by the product of the
//! per-size multiplicities' factorials. Everything is accumulated in log
//! space.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{JumpLawFamily, LevyFunctionals};
use crate::special::{ln_factorial, ln_gamma, log_sum_exp};

/// Hard ceiling for exhaustive set-partition enumeration;
/// Bell(12) = 4,213,597 keeps oracle runtimes sane.
pub const ENUMERATION_LIMIT: usize = 12;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// An unordered partition of {0, ..., n-1} into disjoint nonempty blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetPartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for block in &blocks {
            if block.is_empty() {
                return Err(Error::input("empty block in set partition"));
            }
            for &i in block {
                if i >= n || seen[i] {
                    return Err(Error::input(format!(
                        "index {i} out of range or repeated in set partition of size {n}"
                    )));
                }
                seen[i] = true;
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::input("set partition does not cover all indices"));
        }
        Ok(Self { n, blocks })
    }

    /// Build from a cluster-label vector (labels[i] = block of item i).
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut index: HashMap<usize, usize> = HashMap::new();
        for (i, &lab) in labels.iter().enumerate() {
            let next = blocks.len();
            let b = *index.entry(lab).or_insert(next);
            if b == blocks.len() {
                blocks.push(Vec::new());
            }
            blocks[b].push(i);
        }
        Self { n: labels.len(), blocks }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    /// Restricted-growth string: rgs[i] is the block of item i, blocks
    /// numbered by first appearance. A canonical key for counting.
    pub fn rgs(&self) -> Vec<usize> {
        let mut assignment = vec![0usize; self.n];
        for (b, block) in self.blocks.iter().enumerate() {
            for &i in block {
                assignment[i] = b;
            }
        }
        let mut relabel: HashMap<usize, usize> = HashMap::new();
        assignment
            .iter()
            .map(|&b| {
                let next = relabel.len();
                *relabel.entry(b).or_insert(next)
            })
            .collect()
    }
}

/// A ranked partition: block sizes m_1, ..., m_k with rank 1 attached to
/// the largest associated time, plus an optional per-item rank assignment
/// (1-based) for labeled draws.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedPartition {
    m: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    assignment: Option<Vec<usize>>,
}

impl OrderedPartition {
    pub fn from_block_sizes(m: Vec<usize>) -> Result<Self> {
        if m.is_empty() || m.iter().any(|&s| s == 0) {
            return Err(Error::input("ranked block sizes must be nonempty and positive"));
        }
        Ok(Self { m, assignment: None })
    }

    /// Block sizes plus per-item ranks; `assignment[i]` in 1..=k is the rank
    /// of item i and must be consistent with the sizes.
    pub fn with_assignment(m: Vec<usize>, assignment: Vec<usize>) -> Result<Self> {
        let op = Self::from_block_sizes(m)?;
        let n = op.n();
        if assignment.len() != n {
            return Err(Error::input("assignment length must equal n"));
        }
        let mut counts = vec![0usize; op.num_blocks()];
        for &rank in &assignment {
            if rank == 0 || rank > op.num_blocks() {
                return Err(Error::input(format!("rank {rank} out of range")));
            }
            counts[rank - 1] += 1;
        }
        if counts != op.m {
            return Err(Error::input("assignment does not match block sizes"));
        }
        Ok(Self { assignment: Some(assignment), ..op })
    }

    pub fn n(&self) -> usize {
        self.m.iter().sum()
    }

    pub fn num_blocks(&self) -> usize {
        self.m.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.m
    }

    pub fn assignment(&self) -> Option<&[usize]> {
        self.assignment.as_deref()
    }

    /// Cumulative counts r_1, ..., r_k (r_j = number of observations tied
    /// to the j largest unique times; r_k = n).
    pub fn cumulative(&self) -> Vec<usize> {
        self.m
            .iter()
            .scan(0usize, |acc, &s| {
                *acc += s;
                Some(*acc)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Enumeration oracle
// ---------------------------------------------------------------------------

/// Stream of all set partitions of {0, ..., n-1}, each exactly once, via
/// restricted-growth strings in lexicographic order. Refuses n beyond
/// [`ENUMERATION_LIMIT`].
pub fn enumerate_set_partitions(n: usize) -> Result<SetPartitionIter> {
    if n == 0 || n > ENUMERATION_LIMIT {
        return Err(Error::input(format!(
            "set-partition enumeration supports 1 <= n <= {ENUMERATION_LIMIT}, got {n}"
        )));
    }
    Ok(SetPartitionIter { rgs: vec![0; n], max: vec![0; n], fresh: true })
}

pub struct SetPartitionIter {
    rgs: Vec<usize>,
    max: Vec<usize>,
    fresh: bool,
}

impl SetPartitionIter {
    fn current(&self) -> SetPartition {
        SetPartition::from_labels(&self.rgs)
    }

    fn advance(&mut self) -> bool {
        let n = self.rgs.len();
        // Rightmost position that can still grow: rgs[i] may rise to at most
        // max(rgs[0..i]) + 1.
        for i in (1..n).rev() {
            if self.rgs[i] <= self.max[i - 1] {
                self.rgs[i] += 1;
                self.max[i] = self.max[i - 1].max(self.rgs[i]);
                for j in i + 1..n {
                    self.rgs[j] = 0;
                    self.max[j] = self.max[j - 1];
                }
                return true;
            }
        }
        false
    }
}

impl Iterator for SetPartitionIter {
    type Item = SetPartition;

    fn next(&mut self) -> Option<SetPartition> {
        if self.fresh {
            self.fresh = false;
            return Some(self.current());
        }
        if self.advance() {
            Some(self.current())
        } else {
            None
        }
    }
}

/// All compositions (ordered tuples of positive parts) of n, in
/// lexicographic order; there are 2^{n-1} of them.
pub fn compositions(n: usize) -> Vec<Vec<usize>> {
    fn rec(remaining: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if remaining == 0 {
            out.push(prefix.clone());
            return;
        }
        for part in 1..=remaining {
            prefix.push(part);
            rec(remaining - part, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, &mut Vec::new(), &mut out);
    out
}

// ---------------------------------------------------------------------------
// EPPF evaluation
// ---------------------------------------------------------------------------

/// log pi(m, p) for ranked block sizes `m`.
pub fn ln_ordered_eppf<F: LevyFunctionals + ?Sized>(fns: &F, m: &[usize]) -> Result<f64> {
    if m.is_empty() || m.contains(&0) {
        return Err(Error::input("ranked block sizes must be nonempty and positive"));
    }
    let mut ln = 0.0;
    let mut r_prev = 0usize;
    for &mj in m {
        ln += fns.log_kappa(mj, r_prev)?;
        r_prev += mj;
        ln -= fns.log_phi(r_prev)?;
    }
    Ok(ln)
}

/// The ordered EPPF pi(m, p): probability that the sample shows ranked tie
/// pattern `m` (rank 1 = largest time).
pub fn ordered_eppf(family: &JumpLawFamily, partition: &OrderedPartition) -> Result<f64> {
    Ok(ln_ordered_eppf(family, partition.block_sizes())?.exp())
}

/// log of the unordered EPPF as a function of the block-size multiset.
pub fn ln_eppf<F: LevyFunctionals + ?Sized>(fns: &F, sizes: &[usize]) -> Result<f64> {
    if sizes.is_empty() {
        return Err(Error::domain("EPPF of an empty partition".to_string()));
    }
    if sizes.contains(&0) {
        return Err(Error::input("block sizes must be positive"));
    }
    let mut perm = sizes.to_vec();
    perm.sort_unstable();
    // Multiplicity weight: permuting equal-sized blocks gives the same size
    // vector but distinct orderings of the partition's blocks.
    let mut ln_weight = 0.0;
    let mut run = 1usize;
    for i in 1..perm.len() {
        if perm[i] == perm[i - 1] {
            run += 1;
        } else {
            ln_weight += ln_factorial(run as u64);
            run = 1;
        }
    }
    ln_weight += ln_factorial(run as u64);

    let mut terms = Vec::new();
    loop {
        terms.push(ln_ordered_eppf(fns, &perm)?);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(log_sum_exp(&terms) + ln_weight)
}

/// The EPPF pi(p) induced by i.i.d. sampling from the random distribution:
/// symmetric in the block sizes.
pub fn eppf(family: &JumpLawFamily, sizes: &[usize]) -> Result<f64> {
    Ok(ln_eppf(family, sizes)?.exp())
}

/// Probability of observing the composition `m` as the ranked multiplicity
/// vector of a sample of size n, counting labeled assignments:
/// `n! / prod(m_j!) * pi(m, p)`.
pub fn composition_probability(family: &JumpLawFamily, m: &[usize]) -> Result<f64> {
    ln_composition_probability(family, m).map(f64::exp)
}

pub fn ln_composition_probability<F: LevyFunctionals + ?Sized>(fns: &F, m: &[usize]) -> Result<f64> {
    let n: usize = m.iter().sum();
    let mut ln = ln_ordered_eppf(fns, m)? + ln_factorial(n as u64);
    for &mj in m {
        ln -= ln_factorial(mj as u64);
    }
    Ok(ln)
}

/// The Ewens sampling formula: reference oracle for the Dirichlet checks.
pub fn ewens_eppf(theta: f64, sizes: &[usize]) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::domain(format!("Ewens formula requires theta > 0, got {theta}")));
    }
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::input("block sizes must be nonempty and positive"));
    }
    let n: usize = sizes.iter().sum();
    let mut ln = sizes.len() as f64 * theta.ln() + ln_gamma(theta) - ln_gamma(theta + n as f64);
    for &e in sizes {
        ln += ln_gamma(e as f64);
    }
    Ok(ln.exp())
}

/// Lexicographic next permutation; yields each distinct arrangement of a
/// multiset exactly once when started from the sorted order.
pub(crate) fn next_permutation(arr: &mut [usize]) -> bool {
    if arr.len() < 2 {
        return false;
    }
    let mut i = arr.len() - 1;
    while i > 0 && arr[i - 1] >= arr[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = arr.len() - 1;
    while arr[j] <= arr[i - 1] {
        j -= 1;
    }
    arr.swap(i - 1, j);
    arr[i..].reverse();
    true
}
