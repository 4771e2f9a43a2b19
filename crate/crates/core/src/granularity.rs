//! Pruning blocks described as the set of tensor axes a block spans.
//!
//! Conv weights are laid out `[I, O, Kx, Ky]` and dense weights `[I, O]`. A
//! block fixes every *indexed* axis and runs over every *spanned* axis, so a
//! spec with no spanned axes is single-weight pruning and one spanning every
//! axis is the whole layer.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{strides, Tensor};

const CONV_ALIASES: &[(&str, &[usize])] = &[
    ("weight", &[]),
    ("row", &[3]),
    ("kernel", &[2, 3]),
    ("filter", &[1, 2, 3]),
    ("shared_weight", &[0]),
    ("channel", &[1]),
    ("horizontal_slice", &[1, 3]),
    ("shared_kernel", &[0, 2, 3]),
];

const DENSE_ALIASES: &[(&str, &[usize])] = &[("weight", &[]), ("column", &[0]), ("row", &[1])];

fn aliases_for(rank: usize) -> &'static [(&'static str, &'static [usize])] {
    match rank {
        4 => CONV_ALIASES,
        2 => DENSE_ALIASES,
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GranularitySpec {
    rank: usize,
    spanned: Vec<usize>,
    alias: Option<&'static str>,
}

impl GranularitySpec {
    /// Builds a spec from an explicit axis subset. The alias is filled in
    /// when the subset matches a named granularity for this rank.
    pub fn from_axes(rank: usize, axes: &[usize]) -> Result<Self> {
        if rank != 2 && rank != 4 {
            return Err(Error::invalid(format!(
                "granularities are defined for rank 2 or 4 weights, got rank {rank}"
            )));
        }
        let mut spanned = axes.to_vec();
        spanned.sort_unstable();
        spanned.dedup();
        if let Some(&bad) = spanned.iter().find(|&&a| a >= rank) {
            return Err(Error::invalid(format!("axis {bad} out of range for rank {rank}")));
        }
        let alias = aliases_for(rank)
            .iter()
            .find(|(_, ax)| *ax == spanned.as_slice())
            .map(|(name, _)| *name);
        Ok(Self { rank, spanned, alias })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn spanned_axes(&self) -> &[usize] {
        &self.spanned
    }

    pub fn alias(&self) -> Option<&'static str> {
        self.alias
    }

    pub fn indexed_axes(&self) -> Vec<usize> {
        (0..self.rank).filter(|a| !self.spanned.contains(a)).collect()
    }

    /// All `2^rank` specs for a rank, ordered by the bitmask of spanned axes.
    pub fn all(rank: usize) -> Result<Vec<Self>> {
        (0..1usize << rank)
            .map(|bits| {
                let axes: Vec<usize> = (0..rank).filter(|a| bits & (1 << a) != 0).collect();
                Self::from_axes(rank, &axes)
            })
            .collect()
    }
}

impl fmt::Display for GranularitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.alias {
            Some(name) => f.write_str(name),
            None => write!(f, "{:?}", self.spanned),
        }
    }
}

/// Resolves an alias (`"filter"`) or an explicit axis list (`"[1,2,3]"`,
/// `"[]"`) against a weight rank.
pub fn parse_granularity(name: &str, rank: usize) -> Result<GranularitySpec> {
    let trimmed = name.trim();
    if let Some(inner) = trimmed.strip_prefix('[').and_then(|rest| rest.strip_suffix(']')) {
        let axes = inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad axis '{s}' in granularity '{name}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        return GranularitySpec::from_axes(rank, &axes);
    }
    if rank != 2 && rank != 4 {
        return Err(Error::invalid(format!(
            "granularities are defined for rank 2 or 4 weights, got rank {rank}"
        )));
    }
    match aliases_for(rank).iter().find(|(alias, _)| *alias == trimmed) {
        Some((_, axes)) => GranularitySpec::from_axes(rank, axes),
        None => {
            let other = if rank == 4 { 2 } else { 4 };
            if aliases_for(other).iter().any(|(alias, _)| *alias == trimmed) {
                Err(Error::invalid(format!(
                    "granularity '{trimmed}' is not defined for rank {rank} weights"
                )))
            } else {
                Err(Error::invalid(format!("unknown granularity '{trimmed}'")))
            }
        }
    }
}

/// Every name the vocabulary knows, across ranks.
pub fn known_aliases() -> Vec<&'static str> {
    let mut names: Vec<&str> = CONV_ALIASES
        .iter()
        .chain(DENSE_ALIASES)
        .map(|(n, _)| *n)
        .collect();
    names.sort_unstable();
    names.dedup();
    names
}

/// Partition of a tensor's flat indices into pruning blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    spec: GranularitySpec,
    shape: Vec<usize>,
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl BlockPartition {
    pub fn spec(&self) -> &GranularitySpec {
        &self.spec
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_size(&self) -> usize {
        self.blocks.first().map_or(0, Vec::len)
    }

    /// Block id owning a flat index.
    pub fn block_of(&self, flat: usize) -> usize {
        self.block_of[flat]
    }

    pub fn total_elements(&self) -> usize {
        self.block_of.len()
    }
}

/// Odometer over a multi-index restricted to `axes`, last axis fastest.
fn for_each_multi_index(shape: &[usize], axes: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; shape.len()];
    loop {
        f(&idx);
        let mut k = axes.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            let axis = axes[k];
            idx[axis] += 1;
            if idx[axis] < shape[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Splits `shape` into blocks. Block order is lexicographic over the indexed
/// axes; members within a block are lexicographic over the spanned axes.
pub fn enumerate_blocks(spec: &GranularitySpec, shape: &[usize]) -> Result<BlockPartition> {
    if spec.rank != shape.len() {
        return Err(Error::invalid(format!(
            "granularity '{spec}' has rank {} but weight shape {shape:?} has rank {}",
            spec.rank,
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::invalid(format!("zero-sized axis in shape {shape:?}")));
    }
    let st = strides(shape);
    let indexed = spec.indexed_axes();
    let total: usize = shape.iter().product();
    let mut blocks = Vec::new();
    let mut block_of = vec![0usize; total];
    for_each_multi_index(shape, &indexed, |base| {
        let id = blocks.len();
        let mut members = Vec::new();
        for_each_multi_index(shape, &spec.spanned, |span| {
            // `span` carries zeros on indexed axes and `base` zeros on spanned ones.
            let flat: usize = base
                .iter()
                .zip(span)
                .zip(&st)
                .map(|((b, s), stride)| (b + s) * stride)
                .sum();
            block_of[flat] = id;
            members.push(flat);
        });
        blocks.push(members);
    });
    Ok(BlockPartition {
        spec: spec.clone(),
        shape: shape.to_vec(),
        blocks,
        block_of,
    })
}

/// Mean of the member scores of each block, in block order.
pub fn aggregate_scores(scores: &Tensor, partition: &BlockPartition) -> Result<Vec<f64>> {
    scores.ensure_same_shape(&partition.shape)?;
    let data = scores.data();
    Ok(partition
        .blocks
        .iter()
        .map(|members| members.iter().map(|&i| data[i]).sum::<f64>() / members.len() as f64)
        .collect())
}

/// Serialized form of a granularity choice; resolved per layer rank at use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GranularityName(pub String);

impl GranularityName {
    pub fn resolve(&self, rank: usize) -> Result<GranularitySpec> {
        parse_granularity(&self.0, rank)
    }
}

impl From<&str> for GranularityName {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}
