//! Plasma loading.
//!
//! Positions: a ChaCha8 stream seeded with the run seed and restarted for
//! every species, so species with equal `ppc` are loaded at identical
//! positions and a ±q pair starts exactly neutral. For each interior voxel
//! in ascending id order, `ppc` particles each draw x, y, z offsets
//! uniformly from [-1, 1).
//!
//! Momenta: a separate ChaCha8 stream per species (same seed, stream
//! `1 + species index`) draws three standard normals per particle in the
//! same order; `u = drift + u_th·n + pert_amp·sin(2π Σ mode_a x_a / L_a)`,
//! with `x` the particle's position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::deck::SpeciesSpec;
use crate::grid::GridDescriptor;
use crate::layout::LayoutPolicy;
use crate::particles::{Particle, ParticleStore, Species};
use crate::Real;

pub fn populate_species(
    spec: &SpeciesSpec,
    index: usize,
    g: &GridDescriptor,
    seed: u64,
    policy: LayoutPolicy,
) -> Species {
    let mut pos_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mom_rng = ChaCha8Rng::seed_from_u64(seed);
    mom_rng.set_stream(1 + index as u64);

    let w = match spec.density {
        Some(n0) => n0 * g.cell_volume() / spec.ppc as Real,
        None => 1.0,
    };
    let extent = g.extent();
    let perturbed = spec.pert_amp.iter().any(|&a| a != 0.0);
    let two_pi = 2.0 * std::f64::consts::PI;

    let mut particles = Vec::with_capacity(g.num_interior() * spec.ppc);
    for voxel in g.interior_voxels() {
        let c = g.coords_of(voxel);
        for _ in 0..spec.ppc {
            let offset: [Real; 3] = std::array::from_fn(|_| pos_rng.random_range(-1.0f64..1.0) as Real);
            let n: [f64; 3] = std::array::from_fn(|_| mom_rng.sample(StandardNormal));
            let mut u: [Real; 3] = std::array::from_fn(|a| spec.drift[a] + spec.u_th * n[a] as Real);
            if perturbed {
                let phase: f64 = (0..3)
                    .map(|a| {
                        let x = (c[a] as f64 - 1.0 + 0.5 * (offset[a] as f64 + 1.0)) * g.h[a] as f64;
                        spec.pert_mode[a] as f64 * x / extent[a] as f64
                    })
                    .sum::<f64>()
                    * two_pi;
                let s = phase.sin() as Real;
                for a in 0..3 {
                    u[a] += spec.pert_amp[a] * s;
                }
            }
            particles.push(Particle { offset, u, w, voxel });
        }
    }
    Species {
        name: spec.name.clone(),
        q: spec.q,
        m: spec.m,
        store: ParticleStore::from_particles(&particles, policy),
        sort_interval: spec.sort_interval,
        sort_order: spec.sort_order,
    }
}

/// `count` particles of one species spread uniformly over the interior:
/// each draws a voxel uniformly, then offsets in [-1, 1) and a thermal
/// momentum `u_th·n`.
#[allow(clippy::too_many_arguments)]
pub fn uniform_species(
    name: &str,
    q: Real,
    m: Real,
    count: usize,
    u_th: Real,
    g: &GridDescriptor,
    seed: u64,
    policy: LayoutPolicy,
) -> Species {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let particles: Vec<Particle> = (0..count)
        .map(|_| {
            let c: [usize; 3] = std::array::from_fn(|a| rng.random_range(1..=g.n[a]));
            let offset: [Real; 3] = std::array::from_fn(|_| rng.random_range(-1.0f64..1.0) as Real);
            let n: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
            Particle {
                offset,
                u: n.map(|x| u_th * x as Real),
                w: 1.0,
                voxel: g.voxel_unchecked(c[0], c[1], c[2]),
            }
        })
        .collect();
    Species {
        name: name.to_string(),
        q,
        m,
        store: ParticleStore::from_particles(&particles, policy),
        sort_interval: 0,
        sort_order: Default::default(),
    }
}
