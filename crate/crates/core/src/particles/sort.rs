use std::fmt;
use std::str::FromStr;

use super::Species;
use crate::grid::VoxelId;

/// Order produced by a particle sort.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum SortOrder {
    /// All particles of a voxel are contiguous, voxels ascending.
    #[default]
    Blocked,
    /// Round-robin over occupied voxels: first particle of every voxel,
    /// then the second of every voxel that has one, and so on.
    Interleaved,
}

impl SortOrder {
    pub const ALL: [SortOrder; 2] = [SortOrder::Blocked, SortOrder::Interleaved];

    pub fn name(self) -> &'static str {
        match self {
            SortOrder::Blocked => "Blocked",
            SortOrder::Interleaved => "Interleaved",
        }
    }
}

impl fmt::Display for SortOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SortOrder {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "Blocked" => Ok(SortOrder::Blocked),
            "Interleaved" => Ok(SortOrder::Interleaved),
            other => Err(format!("unknown sort order `{other}` (expected Blocked or Interleaved)")),
        }
    }
}

/// Stable counting sort by voxel id. Returns the gather order: new slot
/// `i` takes old particle `order[i]`.
pub fn blocked_order(voxels: &[VoxelId], num_voxels: usize) -> Vec<usize> {
    let mut start = vec![0usize; num_voxels + 1];
    for v in voxels {
        start[v.index() + 1] += 1;
    }
    for i in 0..num_voxels {
        start[i + 1] += start[i];
    }
    let mut order = vec![0; voxels.len()];
    for (i, v) in voxels.iter().enumerate() {
        let slot = &mut start[v.index()];
        order[*slot] = i;
        *slot += 1;
    }
    order
}

/// Interleaved gather order. A particle of rank `k` within its voxel goes
/// to round `k`; inside a round voxels appear in ascending id order and
/// rounds skip voxels that have run out.
pub fn interleaved_order(voxels: &[VoxelId], num_voxels: usize) -> Vec<usize> {
    let blocked = blocked_order(voxels, num_voxels);
    let mut count = vec![0usize; num_voxels];
    for v in voxels {
        count[v.index()] += 1;
    }
    // bucket by rank; blocked order already visits voxels ascending and
    // each voxel's particles in original order
    let max_rank = count.iter().copied().max().unwrap_or(0);
    let mut per_round = vec![0usize; max_rank + 1];
    for &c in &count {
        for r in 0..c {
            per_round[r + 1] += 1;
        }
    }
    for r in 0..max_rank {
        per_round[r + 1] += per_round[r];
    }
    let mut order = vec![0; voxels.len()];
    let mut at = 0;
    while at < blocked.len() {
        let v = voxels[blocked[at]].index();
        for r in 0..count[v] {
            order[per_round[r]] = blocked[at + r];
            per_round[r] += 1;
        }
        at += count[v];
    }
    order
}

/// Reorders the species in place by the requested order.
pub fn sort_particles(sp: &mut Species, num_voxels: usize, order: SortOrder) {
    let perm = match order {
        SortOrder::Blocked => blocked_order(sp.store.voxels(), num_voxels),
        SortOrder::Interleaved => interleaved_order(sp.store.voxels(), num_voxels),
    };
    sp.store.permute(&perm);
}
