//! Yee-lattice geometry: voxel indexing over a one-deep ghost shell,
//! periodic wrapping, the explicit stability limit, and ghost-plane
//! synchronization.

use crate::fields::{FieldArray, CBX, CBZ, EX, EZ};
use crate::{Error, Real, Result};

/// Linear index of a voxel in the ghost-padded lattice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelId(pub u32);

impl VoxelId {
    #[inline(always)]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Largest stable timestep of the Yee scheme, `1 / sqrt(Σ 1/h²)` with c = 1.
pub fn cfl_limit(h: [Real; 3]) -> Real {
    1.0 / h.iter().map(|x| 1.0 / (x * x)).sum::<Real>().sqrt()
}

/// Fraction of the CFL limit that an explicit `dt` may not exceed.
pub const MAX_CFL_FRACTION: Real = 0.99;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridDescriptor {
    /// Interior voxel counts.
    pub n: [usize; 3],
    /// Cell spacings.
    pub h: [Real; 3],
    pub dt: Real,
}

impl GridDescriptor {
    pub fn new(n: [usize; 3], h: [Real; 3], dt: Real) -> Result<Self> {
        if n.iter().any(|&x| x < 2) {
            return Err(Error::usage(format!("every axis needs at least 2 voxels, got {n:?}")));
        }
        if h.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::usage(format!("cell spacings must be positive, got {h:?}")));
        }
        let limit = MAX_CFL_FRACTION * cfl_limit(h);
        if !(dt > 0.0) || dt > limit {
            return Err(Error::usage(format!(
                "dt = {dt} outside (0, {limit}] (0.99 x CFL limit)"
            )));
        }
        let padded = (n[0] + 2) * (n[1] + 2) * (n[2] + 2);
        if padded > u32::MAX as usize {
            return Err(Error::usage("grid too large for 32-bit voxel ids"));
        }
        Ok(GridDescriptor { n, h, dt })
    }

    /// Grid whose timestep is `fraction` of the CFL limit.
    pub fn with_cfl_fraction(n: [usize; 3], h: [Real; 3], fraction: Real) -> Result<Self> {
        Self::new(n, h, fraction * cfl_limit(h))
    }

    pub fn cfl_limit(&self) -> Real {
        cfl_limit(self.h)
    }

    /// Padded extents `n + 2`.
    #[inline(always)]
    pub fn padded(&self) -> [usize; 3] {
        [self.n[0] + 2, self.n[1] + 2, self.n[2] + 2]
    }

    pub fn num_voxels(&self) -> usize {
        let p = self.padded();
        p[0] * p[1] * p[2]
    }

    pub fn num_interior(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn cell_volume(&self) -> Real {
        self.h[0] * self.h[1] * self.h[2]
    }

    /// Physical box lengths.
    pub fn extent(&self) -> [Real; 3] {
        [
            self.n[0] as Real * self.h[0],
            self.n[1] as Real * self.h[1],
            self.n[2] as Real * self.h[2],
        ]
    }

    /// Linear-index strides of the padded lattice.
    #[inline(always)]
    pub fn strides(&self) -> [usize; 3] {
        let p = self.padded();
        [1, p[0], p[0] * p[1]]
    }

    pub fn voxel_of(&self, ix: usize, iy: usize, iz: usize) -> Result<VoxelId> {
        let p = self.padded();
        if ix >= p[0] || iy >= p[1] || iz >= p[2] {
            return Err(Error::usage(format!(
                "voxel ({ix}, {iy}, {iz}) outside padded lattice {p:?}"
            )));
        }
        Ok(self.voxel_unchecked(ix, iy, iz))
    }

    #[inline(always)]
    pub fn voxel_unchecked(&self, ix: usize, iy: usize, iz: usize) -> VoxelId {
        let p = self.padded();
        VoxelId((ix + p[0] * (iy + p[1] * iz)) as u32)
    }

    #[inline(always)]
    pub fn coords_of(&self, v: VoxelId) -> [usize; 3] {
        let p = self.padded();
        let i = v.index();
        [i % p[0], (i / p[0]) % p[1], i / (p[0] * p[1])]
    }

    pub fn is_interior(&self, c: [usize; 3]) -> bool {
        (0..3).all(|a| c[a] >= 1 && c[a] <= self.n[a])
    }

    /// Maps coordinates that are at most one cell outside the interior
    /// back into `[1, n]` on every axis.
    pub fn wrap_periodic(&self, c: [isize; 3]) -> Result<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let n = self.n[a] as isize;
            out[a] = if c[a] >= 1 && c[a] <= n {
                c[a] as usize
            } else if c[a] == 0 {
                n as usize
            } else if c[a] == n + 1 {
                1
            } else {
                return Err(Error::Cfl(format!(
                    "coordinate {} on axis {a} is more than one cell outside [1, {n}]",
                    c[a]
                )));
            };
        }
        Ok(out)
    }

    /// Periodic image of a padded coordinate (ghost 0 → n, ghost n+1 → 1).
    #[inline(always)]
    pub fn image(&self, axis: usize, c: usize) -> usize {
        if c == 0 {
            self.n[axis]
        } else if c == self.n[axis] + 1 {
            1
        } else {
            c
        }
    }

    /// Interior voxel ids in ascending order.
    pub fn interior_voxels(&self) -> impl Iterator<Item = VoxelId> + '_ {
        let n = self.n;
        (1..=n[2]).flat_map(move |k| {
            (1..=n[1]).flat_map(move |j| (1..=n[0]).map(move |i| self.voxel_unchecked(i, j, k)))
        })
    }
}

/// Copies each interior boundary plane of E and B into the opposing ghost
/// plane, axis by axis so edges and corners pick up their periodic images.
pub fn ghost_sync_fields(fa: &mut FieldArray, g: &GridDescriptor) {
    let p = g.padded();
    let s = g.strides();
    let fields: Vec<usize> = (EX..=EZ).chain(CBX..=CBZ).collect();
    let buf = fa.buffer_mut();
    for axis in 0..3 {
        let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
        let n = g.n[axis];
        for c2 in 0..p[a2] {
            for c1 in 0..p[a1] {
                let base = c1 * s[a1] + c2 * s[a2];
                let lo_ghost = base;
                let hi_ghost = base + (n + 1) * s[axis];
                let lo_int = base + s[axis];
                let hi_int = base + n * s[axis];
                for &f in &fields {
                    let v_hi = buf.get(hi_int, f);
                    let v_lo = buf.get(lo_int, f);
                    buf.set(lo_ghost, f, v_hi);
                    buf.set(hi_ghost, f, v_lo);
                }
            }
        }
    }
}

/// Adds every ghost voxel's lanes of `dense` (a `num_voxels × num_lanes`
/// array) into its periodic interior image and zeroes the ghost entry.
pub fn ghost_fold_currents(dense: &mut [Real], num_lanes: usize, g: &GridDescriptor) {
    assert_eq!(dense.len(), g.num_voxels() * num_lanes);
    let p = g.padded();
    for k in 0..p[2] {
        for j in 0..p[1] {
            for i in 0..p[0] {
                if g.is_interior([i, j, k]) {
                    continue;
                }
                let src = g.voxel_unchecked(i, j, k).index() * num_lanes;
                let dst = g.voxel_unchecked(g.image(0, i), g.image(1, j), g.image(2, k)).index() * num_lanes;
                for l in 0..num_lanes {
                    let v = dense[src + l];
                    if v != 0.0 {
                        dense[dst + l] += v;
                        dense[src + l] = 0.0;
                    }
                }
            }
        }
    }
}
