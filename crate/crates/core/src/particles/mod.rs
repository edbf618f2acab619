//! Quasiparticle storage and everything that touches particles: shapes,
//! field interpolation, the Boris push with charge-conserving deposition,
//! charge density deposition and cell-index sorting.

mod interp;
mod push;
mod shape;
mod sort;
mod store;

pub use interp::{eval_eb, load_interpolators, InterpolatorArray, NUM_INTERP_COEFFS};
pub use push::{
    advance_particles, boris_kick, centered_kinetic_energy, deposit_segment, deposit_segment_checked, PushOptions,
};
pub use shape::bspline;
pub use sort::{blocked_order, interleaved_order, sort_particles, SortOrder};
pub use store::{Particle, ParticleStore, DX, DY, DZ, PARTICLE_FIELDS, UX, UY, UZ, W};

use rayon::prelude::*;

use crate::fields::{FieldArray, RHOF};
use crate::grid::GridDescriptor;
use crate::Real;

/// One particle species.
#[derive(Clone, Debug)]
pub struct Species {
    pub name: String,
    pub q: Real,
    pub m: Real,
    pub store: ParticleStore,
    /// Steps between sorts; 0 disables sorting.
    pub sort_interval: u64,
    pub sort_order: SortOrder,
}

impl Species {
    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }
}

/// Lorentz factor of normalized momentum `u = γv`.
#[inline(always)]
pub fn gamma(u: [Real; 3]) -> Real {
    (1.0 + u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt()
}

/// Σ w·m·(γ − 1) over the species, summed in fixed-size blocks so the
/// result does not depend on the thread count.
pub fn kinetic_energy(sp: &Species) -> Real {
    let st = &sp.store;
    let idx: Vec<usize> = (0..st.len()).collect();
    let partial: Vec<Real> = idx
        .par_chunks(4096)
        .map(|ids| {
            ids.iter()
                .map(|&i| {
                    let p = st.get(i);
                    p.w * (gamma(p.u) - 1.0)
                })
                .sum::<Real>()
        })
        .collect();
    sp.m * partial.iter().sum::<Real>()
}

/// Adds every particle's charge to the eight surrounding nodes with
/// trilinear weights `q·w·⅛(1±dx)(1±dy)(1±dz)/V`. Nodes on the high
/// ghost plane are folded into their periodic image.
pub fn deposit_rho(sp: &Species, fa: &mut FieldArray, g: &GridDescriptor) {
    let inv_v = 1.0 / g.cell_volume();
    let st = &sp.store;
    for i in 0..st.len() {
        let p = st.get(i);
        let [ix, iy, iz] = g.coords_of(p.voxel);
        let qw = sp.q * p.w * inv_v * 0.125;
        let wx = [1.0 - p.offset[0], 1.0 + p.offset[0]];
        let wy = [1.0 - p.offset[1], 1.0 + p.offset[1]];
        let wz = [1.0 - p.offset[2], 1.0 + p.offset[2]];
        for (c, wzc) in wz.iter().enumerate() {
            for (b, wyb) in wy.iter().enumerate() {
                for (a, wxa) in wx.iter().enumerate() {
                    let node = g.voxel_unchecked(g.image(0, ix + a), g.image(1, iy + b), g.image(2, iz + c));
                    fa.buffer_mut().add(node.index(), RHOF, qw * wxa * wyb * wzc);
                }
            }
        }
    }
}
