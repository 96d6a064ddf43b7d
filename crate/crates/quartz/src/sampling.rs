//! Sampling schemes over subsets of the example indices `[n]`.
//!
//! Four variants are supported: serial (one index per draw, arbitrary
//! positive probabilities), tau-nice (uniform over size-tau subsets),
//! product (one index per cell of a feature-disjoint partition), and
//! distributed (independent tau-nice draws inside each of `c` equal cells).
//! Schemes are validated at construction and immutable afterwards.

use crate::matrix::DataMatrix;
use crate::util::kahan_sum;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("block count n must be positive")]
    EmptyIndexSet,
    #[error("probability p[{index}] = {value} must be positive (proper sampling)")]
    ImproperProbability { index: usize, value: f64 },
    #[error("serial probabilities sum to {sum}, expected 1 within 1e-12")]
    ProbabilitySum { sum: f64 },
    #[error("tau = {tau} out of range for n = {n}")]
    TauOutOfRange { tau: usize, n: usize },
    #[error("invalid partition: {0}")]
    BadPartition(String),
    #[error("node count {c} must divide n = {n} with equal cells")]
    NotDivisible { c: usize, n: usize },
    #[error("distribution support has {size} sets, enumeration limit is {limit}")]
    SupportTooLarge { size: u128, limit: u128 },
}

/// Largest support size [`SamplingScheme::enumerate_distribution`] will expand.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Kind {
    Serial {
        probs: Vec<f64>,
    },
    TauNice {
        n: usize,
        tau: usize,
    },
    Product {
        groups: Vec<Vec<usize>>,
        group_of: Vec<u32>,
    },
    Distributed {
        cells: Vec<Vec<usize>>,
        cell_of: Vec<u32>,
        tau: usize,
    },
}

/// A validated distribution over subsets of `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingScheme {
    n: usize,
    pub(crate) kind: Kind,
}

/// Compact serializable description of a scheme, echoed into run summaries.
#[derive(Debug, Clone, Serialize)]
pub struct SchemeDescriptor {
    pub variant: &'static str,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_sizes: Option<Vec<usize>>,
}

fn validate_partition(n: usize, parts: &[Vec<usize>], what: &str) -> Result<Vec<u32>, SamplingError> {
    let mut owner = vec![u32::MAX; n];
    for (l, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(SamplingError::BadPartition(format!("{what} {l} is empty")));
        }
        for &i in part {
            if i >= n {
                return Err(SamplingError::BadPartition(format!(
                    "index {i} out of range in {what} {l} (n = {n})"
                )));
            }
            if owner[i] != u32::MAX {
                return Err(SamplingError::BadPartition(format!(
                    "index {i} appears in {what}s {} and {l}",
                    owner[i]
                )));
            }
            owner[i] = l as u32;
        }
    }
    if let Some(i) = owner.iter().position(|&o| o == u32::MAX) {
        return Err(SamplingError::BadPartition(format!(
            "index {i} is not covered by any {what}"
        )));
    }
    Ok(owner)
}

impl SamplingScheme {
    /// Serial sampling drawing index `i` with probability `probs[i]`.
    pub fn serial(probs: Vec<f64>) -> Result<Self, SamplingError> {
        if probs.is_empty() {
            return Err(SamplingError::EmptyIndexSet);
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SamplingError::ImproperProbability { index, value });
            }
        }
        let sum = kahan_sum(probs.iter().copied());
        if (sum - 1.0).abs() > 1e-12 {
            return Err(SamplingError::ProbabilitySum { sum });
        }
        Ok(SamplingScheme {
            n: probs.len(),
            kind: Kind::Serial { probs },
        })
    }

    pub fn serial_uniform(n: usize) -> Result<Self, SamplingError> {
        if n == 0 {
            return Err(SamplingError::EmptyIndexSet);
        }
        Self::serial(vec![1.0 / n as f64; n])
    }

    /// Uniform distribution over all size-`tau` subsets of `[n]`.
    pub fn tau_nice(n: usize, tau: usize) -> Result<Self, SamplingError> {
        if n == 0 {
            return Err(SamplingError::EmptyIndexSet);
        }
        if tau == 0 || tau > n {
            return Err(SamplingError::TauOutOfRange { tau, n });
        }
        Ok(SamplingScheme {
            n,
            kind: Kind::TauNice { n, tau },
        })
    }

    /// Product sampling: one index drawn uniformly from each group of a
    /// partition of `[n]`. Group separability against a particular matrix is
    /// checked where the overapproximation parameters are computed, not here.
    pub fn product(n: usize, groups: Vec<Vec<usize>>) -> Result<Self, SamplingError> {
        if n == 0 {
            return Err(SamplingError::EmptyIndexSet);
        }
        if groups.is_empty() {
            return Err(SamplingError::BadPartition("no groups given".into()));
        }
        let group_of = validate_partition(n, &groups, "group")?;
        Ok(SamplingScheme {
            n,
            kind: Kind::Product { groups, group_of },
        })
    }

    /// Distributed sampling: `[n]` is split into `c` equal cells and each
    /// cell independently draws a tau-nice subset of itself. With
    /// `cells = None` the cells are contiguous slices of `[n]`.
    pub fn distributed(
        n: usize,
        c: usize,
        tau: usize,
        cells: Option<Vec<Vec<usize>>>,
    ) -> Result<Self, SamplingError> {
        if n == 0 {
            return Err(SamplingError::EmptyIndexSet);
        }
        if c == 0 || !n.is_multiple_of(c) {
            return Err(SamplingError::NotDivisible { c, n });
        }
        let cell_size = n / c;
        if tau == 0 || tau > cell_size {
            return Err(SamplingError::TauOutOfRange { tau, n: cell_size });
        }
        let cells = cells.unwrap_or_else(|| {
            (0..c)
                .map(|l| (l * cell_size..(l + 1) * cell_size).collect())
                .collect()
        });
        if cells.len() != c {
            return Err(SamplingError::BadPartition(format!(
                "expected {c} cells, got {}",
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|cell| cell.len() != cell_size) {
            return Err(SamplingError::BadPartition(format!(
                "cells must all have size {cell_size}, found one of size {}",
                bad.len()
            )));
        }
        let cell_of = validate_partition(n, &cells, "cell")?;
        Ok(SamplingScheme {
            n,
            kind: Kind::Distributed { cells, cell_of, tau },
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Per-index inclusion probabilities `p_i = P(i in S)`.
    pub fn inclusion_probs(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Serial { probs } => probs.clone(),
            Kind::TauNice { n, tau } => vec![*tau as f64 / *n as f64; *n],
            Kind::Product { groups, group_of } => group_of
                .iter()
                .map(|&l| 1.0 / groups[l as usize].len() as f64)
                .collect(),
            Kind::Distributed { cells, tau, .. } => {
                let p = (cells.len() * tau) as f64 / self.n as f64;
                vec![p; self.n]
            }
        }
    }

    /// Expected number of indices per draw.
    pub fn expected_batch(&self) -> f64 {
        match &self.kind {
            Kind::Serial { .. } => 1.0,
            Kind::TauNice { tau, .. } => *tau as f64,
            Kind::Product { groups, .. } => groups.len() as f64,
            Kind::Distributed { cells, tau, .. } => (cells.len() * tau) as f64,
        }
    }

    /// Joint inclusion probability `P(i in S, k in S)` in closed form.
    pub fn pair_prob(&self, i: usize, k: usize) -> f64 {
        let n = self.n as f64;
        match &self.kind {
            Kind::Serial { probs } => {
                if i == k {
                    probs[i]
                } else {
                    0.0
                }
            }
            Kind::TauNice { tau, .. } => {
                let t = *tau as f64;
                if i == k {
                    t / n
                } else {
                    t * (t - 1.0) / (n * (n - 1.0))
                }
            }
            Kind::Product { groups, group_of } => {
                let pi = 1.0 / groups[group_of[i] as usize].len() as f64;
                if i == k {
                    pi
                } else if group_of[i] == group_of[k] {
                    0.0
                } else {
                    pi / groups[group_of[k] as usize].len() as f64
                }
            }
            Kind::Distributed { cells, cell_of, tau } => {
                let t = *tau as f64;
                let cell_size = (self.n / cells.len()) as f64;
                let p = cells.len() as f64 * t / n;
                if i == k {
                    p
                } else if cell_of[i] == cell_of[k] {
                    // tau-nice pair probability within one cell
                    t * (t - 1.0) / (cell_size * (cell_size - 1.0))
                } else {
                    p * p
                }
            }
        }
    }

    /// Number of sets in the support, if it fits in a u128.
    fn support_size(&self) -> Option<u128> {
        fn binomial(n: usize, k: usize) -> Option<u128> {
            let k = k.min(n - k);
            let mut acc: u128 = 1;
            for j in 0..k {
                acc = acc.checked_mul((n - j) as u128)?;
                acc /= (j + 1) as u128;
            }
            Some(acc)
        }
        match &self.kind {
            Kind::Serial { probs } => Some(probs.len() as u128),
            Kind::TauNice { n, tau } => binomial(*n, *tau),
            Kind::Product { groups, .. } => {
                let mut acc: u128 = 1;
                for g in groups {
                    acc = acc.checked_mul(g.len() as u128)?;
                }
                Some(acc)
            }
            Kind::Distributed { cells, tau, .. } => {
                let per_cell = binomial(self.n / cells.len(), *tau)?;
                let mut acc: u128 = 1;
                for _ in cells {
                    acc = acc.checked_mul(per_cell)?;
                }
                Some(acc)
            }
        }
    }

    /// Expands the full support as `(sorted index set, probability)` pairs.
    /// Intended as an exact oracle for small `n`; errors out when the
    /// support exceeds [`ENUMERATION_LIMIT`].
    pub fn enumerate_distribution(&self) -> Result<Vec<(Vec<usize>, f64)>, SamplingError> {
        let size = self
            .support_size()
            .ok_or(SamplingError::SupportTooLarge {
                size: u128::MAX,
                limit: ENUMERATION_LIMIT,
            })?;
        if size > ENUMERATION_LIMIT {
            return Err(SamplingError::SupportTooLarge {
                size,
                limit: ENUMERATION_LIMIT,
            });
        }
        let mut out = Vec::with_capacity(size as usize);
        match &self.kind {
            Kind::Serial { probs } => {
                for (i, &p) in probs.iter().enumerate() {
                    out.push((vec![i], p));
                }
            }
            Kind::TauNice { n, tau } => {
                let p = 1.0 / size as f64;
                for set in combinations(*n, *tau) {
                    out.push((set, p));
                }
            }
            Kind::Product { groups, .. } => {
                let p = 1.0 / size as f64;
                let mut picks = vec![0usize; groups.len()];
                loop {
                    let mut set: Vec<usize> =
                        picks.iter().enumerate().map(|(l, &j)| groups[l][j]).collect();
                    set.sort_unstable();
                    out.push((set, p));
                    // odometer increment over group positions
                    let mut l = 0;
                    loop {
                        if l == groups.len() {
                            return Ok(out);
                        }
                        picks[l] += 1;
                        if picks[l] < groups[l].len() {
                            break;
                        }
                        picks[l] = 0;
                        l += 1;
                    }
                }
            }
            Kind::Distributed { cells, tau, .. } => {
                let cell_size = self.n / cells.len();
                let per_cell: Vec<Vec<Vec<usize>>> = cells
                    .iter()
                    .map(|cell| {
                        combinations(cell_size, *tau)
                            .into_iter()
                            .map(|ix| ix.into_iter().map(|j| cell[j]).collect())
                            .collect()
                    })
                    .collect();
                let p = 1.0 / size as f64;
                let mut picks = vec![0usize; cells.len()];
                loop {
                    let mut set = Vec::with_capacity(cells.len() * tau);
                    for (l, &j) in picks.iter().enumerate() {
                        set.extend_from_slice(&per_cell[l][j]);
                    }
                    set.sort_unstable();
                    out.push((set, p));
                    let mut l = 0;
                    loop {
                        if l == cells.len() {
                            return Ok(out);
                        }
                        picks[l] += 1;
                        if picks[l] < per_cell[l].len() {
                            break;
                        }
                        picks[l] = 0;
                        l += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn descriptor(&self) -> SchemeDescriptor {
        match &self.kind {
            Kind::Serial { .. } => SchemeDescriptor {
                variant: "serial",
                n: self.n,
                tau: None,
                nodes: None,
                group_sizes: None,
            },
            Kind::TauNice { tau, .. } => SchemeDescriptor {
                variant: "tau-nice",
                n: self.n,
                tau: Some(*tau),
                nodes: None,
                group_sizes: None,
            },
            Kind::Product { groups, .. } => SchemeDescriptor {
                variant: "product",
                n: self.n,
                tau: None,
                nodes: None,
                group_sizes: Some(groups.iter().map(Vec::len).collect()),
            },
            Kind::Distributed { cells, tau, .. } => SchemeDescriptor {
                variant: "distributed",
                n: self.n,
                tau: Some(*tau),
                nodes: Some(cells.len()),
                group_sizes: None,
            },
        }
    }

    /// Convenience single draw; allocates. Hot loops should use [`Sampler`].
    pub fn draw_with<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let mut sampler = Sampler::new(self);
        sampler.draw(rng).to_vec()
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic k-combination of {0..n-1}
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Reusable draw state for a scheme: index buffers for partial Fisher-Yates
/// subset draws and the cumulative table for weighted serial draws. Draws are
/// O(batch) after setup and allocation-free in steady state.
pub struct Sampler<'a> {
    scheme: &'a SamplingScheme,
    weighted: Option<WeightedIndex<f64>>,
    buf: Vec<usize>,
    cell_bufs: Vec<Vec<usize>>,
    out: Vec<usize>,
}

impl<'a> Sampler<'a> {
    pub fn new(scheme: &'a SamplingScheme) -> Self {
        let weighted = match &scheme.kind {
            Kind::Serial { probs } => {
                Some(WeightedIndex::new(probs).expect("validated probabilities"))
            }
            _ => None,
        };
        let buf = match &scheme.kind {
            Kind::TauNice { n, .. } => (0..*n).collect(),
            _ => Vec::new(),
        };
        let cell_bufs = match &scheme.kind {
            Kind::Distributed { cells, .. } => cells.clone(),
            _ => Vec::new(),
        };
        Sampler {
            scheme,
            weighted,
            buf,
            cell_bufs,
            out: Vec::new(),
        }
    }

    /// Draws one index set; deterministic given the rng stream. The returned
    /// slice is sorted ascending and valid until the next draw.
    pub fn draw<R: Rng>(&mut self, rng: &mut R) -> &[usize] {
        self.out.clear();
        match &self.scheme.kind {
            Kind::Serial { .. } => {
                let wi = self.weighted.as_ref().expect("serial sampler state");
                self.out.push(wi.sample(rng));
            }
            Kind::TauNice { n, tau } => {
                partial_fisher_yates(&mut self.buf, *tau, rng);
                self.out.extend_from_slice(&self.buf[..*tau]);
                debug_assert_eq!(self.buf.len(), *n);
            }
            Kind::Product { groups, .. } => {
                for group in groups {
                    self.out.push(group[rng.random_range(0..group.len())]);
                }
            }
            Kind::Distributed { tau, .. } => {
                for cell in &mut self.cell_bufs {
                    partial_fisher_yates(cell, *tau, rng);
                    self.out.extend_from_slice(&cell[..*tau]);
                }
            }
        }
        self.out.sort_unstable();
        &self.out
    }
}

/// Shuffles the first `k` positions of `buf` as in a Fisher-Yates pass, so
/// `buf[..k]` is a uniformly random k-subset of the buffer contents.
fn partial_fisher_yates<R: Rng>(buf: &mut [usize], k: usize, rng: &mut R) {
    let n = buf.len();
    for pos in 0..k {
        let j = rng.random_range(pos..n);
        buf.swap(pos, j);
    }
}

/// Finds the finest partition of the examples such that no feature row has
/// nonzeros in two different parts (connected components of the
/// example-feature incidence graph). Returns `None` when everything is one
/// component.
pub fn detect_product_partition(matrix: &DataMatrix) -> Option<Vec<Vec<usize>>> {
    let n = matrix.n();
    let mut uf = UnionFind::new(n);
    let mut first_in_row: Vec<Option<u32>> = vec![None; matrix.d()];
    for i in 0..n {
        for &(row, _) in matrix.column(i) {
            match first_in_row[row as usize] {
                Some(first) => uf.union(first as usize, i),
                None => first_in_row[row as usize] = Some(i as u32),
            }
        }
    }
    let mut groups_by_root: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = uf.find(i);
        if root_slot[root] == usize::MAX {
            root_slot[root] = groups_by_root.len();
            groups_by_root.push(Vec::new());
        }
        groups_by_root[root_slot[root]].push(i);
    }
    if groups_by_root.len() < 2 {
        return None;
    }
    Some(groups_by_root)
}

/// Greedily merges partition groups into `k` bins balanced by size (largest
/// group first into the currently smallest bin). Merging groups preserves
/// feature-disjointness. With `k >= groups.len()` the input is returned
/// unchanged.
pub fn balance_partition(groups: Vec<Vec<usize>>, k: usize) -> Vec<Vec<usize>> {
    if k == 0 || k >= groups.len() {
        return groups;
    }
    let mut order: Vec<Vec<usize>> = groups;
    order.sort_by_key(|g| (std::cmp::Reverse(g.len()), g[0]));
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); k];
    for group in order {
        let target = (0..k).min_by_key(|&b| (bins[b].len(), b)).unwrap();
        bins[target].extend(group);
    }
    for bin in &mut bins {
        bin.sort_unstable();
    }
    bins.sort_by_key(|b| b[0]);
    bins
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb) as u32;
        }
    }
}
