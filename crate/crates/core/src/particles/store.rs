use crate::grid::VoxelId;
use crate::layout::{FieldedBuffer, LayoutPolicy, SpaceTag};
use crate::Real;

pub const DX: usize = 0;
pub const DY: usize = 1;
pub const DZ: usize = 2;
pub const UX: usize = 3;
pub const UY: usize = 4;
pub const UZ: usize = 5;
pub const W: usize = 6;
pub const PARTICLE_FIELDS: usize = 7;

/// A particle gathered from the split storage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    /// Voxel-relative offsets in [-1, 1]; -1 is the voxel's low face.
    pub offset: [Real; 3],
    /// Normalized momentum γv.
    pub u: [Real; 3],
    pub w: Real,
    pub voxel: VoxelId,
}

/// Particle storage: the seven real lanes live in a layout-polymorphic
/// buffer, voxel ids in a separate record-ordered array.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleStore {
    data: FieldedBuffer,
    voxels: Vec<VoxelId>,
}

impl ParticleStore {
    pub fn new(policy: LayoutPolicy) -> Self {
        ParticleStore {
            data: FieldedBuffer::new(0, PARTICLE_FIELDS, policy, SpaceTag::DEVICE),
            voxels: Vec::new(),
        }
    }

    pub fn from_particles(particles: &[Particle], policy: LayoutPolicy) -> Self {
        let records: Vec<[Real; PARTICLE_FIELDS]> = particles
            .iter()
            .map(|p| [p.offset[0], p.offset[1], p.offset[2], p.u[0], p.u[1], p.u[2], p.w])
            .collect();
        ParticleStore {
            data: FieldedBuffer::from_records(&records, policy, SpaceTag::DEVICE),
            voxels: particles.iter().map(|p| p.voxel).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn policy(&self) -> LayoutPolicy {
        self.data.policy()
    }

    pub fn get(&self, i: usize) -> Particle {
        let d = &self.data;
        Particle {
            offset: [d.get(i, DX), d.get(i, DY), d.get(i, DZ)],
            u: [d.get(i, UX), d.get(i, UY), d.get(i, UZ)],
            w: d.get(i, W),
            voxel: self.voxels[i],
        }
    }

    pub fn set(&mut self, i: usize, p: &Particle) {
        let vals = [p.offset[0], p.offset[1], p.offset[2], p.u[0], p.u[1], p.u[2], p.w];
        for (f, v) in vals.into_iter().enumerate() {
            self.data.set(i, f, v);
        }
        self.voxels[i] = p.voxel;
    }

    pub fn iter(&self) -> impl Iterator<Item = Particle> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn buffer(&self) -> &FieldedBuffer {
        &self.data
    }

    pub fn buffer_mut(&mut self) -> &mut FieldedBuffer {
        &mut self.data
    }

    pub fn voxels(&self) -> &[VoxelId] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [VoxelId] {
        &mut self.voxels
    }

    /// Mutable access to both views at once.
    pub fn parts_mut(&mut self) -> (&mut FieldedBuffer, &mut [VoxelId]) {
        (&mut self.data, &mut self.voxels)
    }

    /// New particle `i` is old particle `order[i]`.
    pub fn permute(&mut self, order: &[usize]) {
        self.data.permute_records(order);
        self.voxels = order.iter().map(|&i| self.voxels[i]).collect();
    }
}
