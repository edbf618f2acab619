//! Boris push, segment mover and charge-conserving current deposition.
//!
//! Stored particle state is the position at integer step `n` and the
//! momentum at `n - ½`. One push evaluates the fields at the particle
//! (fields and positions share a time level), kicks the momentum to
//! `n + ½`, moves the particle the full step with the new velocity and
//! deposits the current of the straight-line displacement. Splitting that
//! displacement at voxel faces keeps every piece inside one voxel, where
//! the linear-weighting deposit satisfies discrete continuity with the
//! trilinear charge density exactly.

use rayon::prelude::*;

use super::interp::{eval_eb, InterpolatorArray};
use super::store::{DX, DY, DZ, UX, UY, UZ, W};
use super::{gamma, Species};
use crate::grid::{GridDescriptor, VoxelId};
use crate::layout::{RecordsMut, ScatterBackend, ScatterBuffer, ScatterHandle};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PushOptions {
    /// Particles per work item.
    pub chunk_size: usize,
    /// Rescale the Boris rotation so the gyration angle per step is exact.
    pub exact_gyration: bool,
}

impl Default for PushOptions {
    fn default() -> Self {
        PushOptions {
            chunk_size: 4096,
            exact_gyration: false,
        }
    }
}

#[inline(always)]
fn cross(a: [Real; 3], b: [Real; 3]) -> [Real; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Relativistic Boris update of normalized momentum `u` over `dt`:
/// half electric kick, magnetic rotation, half electric kick.
#[inline(always)]
pub fn boris_kick(
    u: [Real; 3],
    e: [Real; 3],
    b: [Real; 3],
    q: Real,
    m: Real,
    dt: Real,
    exact_gyration: bool,
) -> [Real; 3] {
    let qdt_2m = q * dt / (2.0 * m);
    let eps = [qdt_2m * e[0], qdt_2m * e[1], qdt_2m * e[2]];
    let um = [u[0] + eps[0], u[1] + eps[1], u[2] + eps[2]];
    let g_minus = gamma(um);
    let k = qdt_2m / g_minus;
    let mut t = [k * b[0], k * b[1], k * b[2]];
    let mut t2 = t[0] * t[0] + t[1] * t[1] + t[2] * t[2];
    if exact_gyration && t2 > 0.0 {
        // |t| is half the gyration angle; use tan(θ/2) so that the rotation
        // by 2·atan(|t|) is exactly θ
        let half = t2.sqrt();
        let s = half.tan() / half;
        t = [t[0] * s, t[1] * s, t[2] * s];
        t2 *= s * s;
    }
    let up = cross(um, t);
    let uprime = [um[0] + up[0], um[1] + up[1], um[2] + up[2]];
    let f = 2.0 / (1.0 + t2);
    let s = [f * t[0], f * t[1], f * t[2]];
    let rot = cross(uprime, s);
    [um[0] + rot[0] + eps[0], um[1] + rot[1] + eps[1], um[2] + rot[2] + eps[2]]
}

/// Accumulates the current of a straight segment that lies inside one
/// voxel. `mid` is the segment midpoint and `disp` its displacement, both
/// in voxel offset units; `qw` is charge × weight.
///
/// For direction x and transverse signs (σy, σz) the lane gains
/// `qw·Δx·¼[(1 + σy·ȳ)(1 + σz·z̄) + σy·σz·Δy·Δz/12]`, cyclically for y and z.
/// The last term is the mean of the transverse weight product along the
/// segment; with half displacements it reads `Δy·Δz/3`.
#[inline(always)]
pub fn deposit_segment(
    voxel: VoxelId,
    mid: [Real; 3],
    disp: [Real; 3],
    qw: Real,
    sb: &mut ScatterHandle<'_>,
) {
    const TWELFTH: Real = 1.0 / 12.0;
    let cross_term = qw * disp[0] * disp[1] * disp[2] * TWELFTH;
    let mut lanes = [0.0; 12];
    for dir in 0..3 {
        let (a, b) = ((dir + 1) % 3, (dir + 2) % 3);
        let v = 0.25 * qw * disp[dir];
        let c = 0.25 * cross_term;
        let (lo_a, hi_a) = (1.0 - mid[a], 1.0 + mid[a]);
        let (lo_b, hi_b) = (1.0 - mid[b], 1.0 + mid[b]);
        lanes[4 * dir] = v * lo_a * lo_b + c;
        lanes[4 * dir + 1] = v * hi_a * lo_b - c;
        lanes[4 * dir + 2] = v * lo_a * hi_b - c;
        lanes[4 * dir + 3] = v * hi_a * hi_b + c;
    }
    sb.contribute_lanes(voxel.index(), 0, &lanes);
}

/// [`deposit_segment`] with its precondition checked: the segment may not
/// leave the voxel on any axis.
pub fn deposit_segment_checked(
    voxel: VoxelId,
    mid: [Real; 3],
    disp: [Real; 3],
    qw: Real,
    sb: &mut ScatterHandle<'_>,
) -> Result<()> {
    let slack = 16.0 * Real::EPSILON;
    for a in 0..3 {
        if mid[a].abs() + 0.5 * disp[a].abs() > 1.0 + slack {
            return Err(Error::usage(format!(
                "segment crosses a face on axis {a} (midpoint {}, displacement {}); split it first",
                mid[a], disp[a]
            )));
        }
    }
    if voxel.index() >= sb.num_slots() {
        return Err(Error::usage("voxel out of range for scatter buffer"));
    }
    deposit_segment(voxel, mid, disp, qw, sb);
    Ok(())
}

/// Moves a particle by `disp` (offset units) starting at `pos` in padded
/// voxel `coords`, depositing one segment per voxel visited. On return
/// `pos`/`coords` hold the end point; `coords` may lie on a ghost layer.
#[inline(always)]
fn move_and_deposit(
    pos: &mut [Real; 3],
    coords: &mut [usize; 3],
    disp: [Real; 3],
    qw: Real,
    g: &GridDescriptor,
    sb: &mut ScatterHandle<'_>,
) -> Result<()> {
    let mut rem = disp;
    let mut crossed = [false; 3];
    // at most one face per axis, plus the final piece
    for _ in 0..4 {
        let mut t_min = Real::INFINITY;
        let mut axis = 3;
        for a in 0..3 {
            let end = pos[a] + rem[a];
            let face = if end > 1.0 {
                1.0
            } else if end < -1.0 {
                -1.0
            } else {
                continue;
            };
            let t = ((face - pos[a]) / rem[a]).max(0.0);
            if t < t_min {
                t_min = t;
                axis = a;
            }
        }
        let voxel = g.voxel_unchecked(coords[0], coords[1], coords[2]);
        if axis == 3 {
            let mid = [pos[0] + 0.5 * rem[0], pos[1] + 0.5 * rem[1], pos[2] + 0.5 * rem[2]];
            deposit_segment(voxel, mid, rem, qw, sb);
            for a in 0..3 {
                pos[a] += rem[a];
            }
            return Ok(());
        }
        if crossed[axis] {
            break;
        }
        crossed[axis] = true;
        let seg = [rem[0] * t_min, rem[1] * t_min, rem[2] * t_min];
        let mid = [pos[0] + 0.5 * seg[0], pos[1] + 0.5 * seg[1], pos[2] + 0.5 * seg[2]];
        deposit_segment(voxel, mid, seg, qw, sb);
        for a in 0..3 {
            pos[a] += seg[a];
            rem[a] -= seg[a];
        }
        let up = rem[axis] > 0.0;
        coords[axis] = if up { coords[axis] + 1 } else { coords[axis] - 1 };
        pos[axis] = if up { -1.0 } else { 1.0 };
    }
    Err(Error::Cfl("particle crossed more than one face per axis in one step".into()))
}

struct PushContext<'a> {
    interp: &'a InterpolatorArray,
    g: &'a GridDescriptor,
    q: Real,
    m: Real,
    exact_gyration: bool,
}

fn push_chunk(
    ctx: &PushContext<'_>,
    recs: &mut RecordsMut<'_>,
    voxels: &mut [VoxelId],
    sb: &mut ScatterHandle<'_>,
) -> Result<()> {
    let g = ctx.g;
    let dt = g.dt;
    let to_offset = [2.0 * dt / g.h[0], 2.0 * dt / g.h[1], 2.0 * dt / g.h[2]];
    for (i, vox) in voxels.iter_mut().enumerate() {
        let mut pos = [recs.get(i, DX), recs.get(i, DY), recs.get(i, DZ)];
        let u = [recs.get(i, UX), recs.get(i, UY), recs.get(i, UZ)];
        let qw = ctx.q * recs.get(i, W);

        let coeffs = ctx.interp.coeffs(vox.index());
        let (e, b) = eval_eb(&coeffs, pos);
        let un = boris_kick(u, e, b, ctx.q, ctx.m, dt, ctx.exact_gyration);
        let inv_g = 1.0 / gamma(un);
        let disp = [
            un[0] * inv_g * to_offset[0],
            un[1] * inv_g * to_offset[1],
            un[2] * inv_g * to_offset[2],
        ];
        if disp.iter().any(|d| !(d.abs() < 2.0)) {
            return Err(Error::Cfl(format!(
                "particle displacement {disp:?} (offset units) exceeds one cell"
            )));
        }
        let mut coords = g.coords_of(*vox);
        move_and_deposit(&mut pos, &mut coords, disp, qw, g, sb)?;
        let wrapped = g.wrap_periodic([coords[0] as isize, coords[1] as isize, coords[2] as isize])?;
        *vox = g.voxel_unchecked(wrapped[0], wrapped[1], wrapped[2]);

        recs.set(i, DX, pos[0]);
        recs.set(i, DY, pos[1]);
        recs.set(i, DZ, pos[2]);
        recs.set(i, UX, un[0]);
        recs.set(i, UY, un[1]);
        recs.set(i, UZ, un[2]);
    }
    Ok(())
}

/// Cut points splitting `n` particles into `parts` contiguous ranges, each
/// subdivided into chunks of at most `chunk` particles. Returns the cuts
/// and, per range, how many chunks it holds.
fn partition(n: usize, parts: usize, chunk: usize) -> (Vec<usize>, Vec<usize>) {
    let mut cuts = vec![0];
    let mut per_part = Vec::with_capacity(parts);
    for p in 0..parts {
        let (lo, hi) = (n * p / parts, n * (p + 1) / parts);
        let mut count = 0;
        let mut at = lo;
        while at < hi {
            at = (at + chunk).min(hi);
            cuts.push(at);
            count += 1;
        }
        per_part.push(count);
    }
    (cuts, per_part)
}

fn split_voxels<'a>(mut voxels: &'a mut [VoxelId], cuts: &[usize]) -> Vec<&'a mut [VoxelId]> {
    let mut out = Vec::with_capacity(cuts.len().saturating_sub(1));
    for w in cuts.windows(2) {
        let (head, tail) = voxels.split_at_mut(w[1] - w[0]);
        out.push(head);
        voxels = tail;
    }
    out
}

/// Pushes every particle of `sp` one step, depositing current into `sb`.
///
/// With private-copy backends the particles are split into one contiguous
/// range per scatter worker and each range is processed in order, chunk by
/// chunk, so the result is independent of `chunk_size` and of the thread
/// count. With [`ScatterBackend::SharedUpdate`] chunks are scheduled
/// dynamically.
pub fn advance_particles(
    sp: &mut Species,
    interp: &InterpolatorArray,
    sb: &mut ScatterBuffer,
    g: &GridDescriptor,
    opts: &PushOptions,
) -> Result<()> {
    if opts.chunk_size == 0 {
        return Err(Error::usage("chunk_size must be positive"));
    }
    let ctx = PushContext {
        interp,
        g,
        q: sp.q,
        m: sp.m,
        exact_gyration: opts.exact_gyration,
    };
    let n = sp.store.len();
    let backend = sb.backend();
    let parts = if backend == ScatterBackend::SharedUpdate {
        1
    } else {
        sb.worker_count()
    };
    let (cuts, per_part) = partition(n, parts, opts.chunk_size);
    let (data, voxels) = sp.store.parts_mut();
    let chunks: Vec<(RecordsMut<'_>, &mut [VoxelId])> = data
        .split_records_mut(&cuts)
        .into_iter()
        .zip(split_voxels(voxels, &cuts))
        .collect();

    if backend == ScatterBackend::SharedUpdate {
        let sb: &ScatterBuffer = sb;
        return chunks.into_par_iter().try_for_each(|(mut recs, vox)| {
            let mut h = sb.shared_handle().expect("shared backend");
            push_chunk(&ctx, &mut recs, vox, &mut h)
        });
    }
    let handles = sb.handles();

    let mut groups: Vec<Vec<(RecordsMut<'_>, &mut [VoxelId])>> = Vec::with_capacity(parts);
    let mut it = chunks.into_iter();
    for &count in &per_part {
        groups.push(it.by_ref().take(count).collect());
    }
    groups
        .into_par_iter()
        .zip(handles.into_par_iter())
        .try_for_each(|(group, mut h)| {
            for (mut recs, vox) in group {
                push_chunk(&ctx, &mut recs, vox, &mut h)?;
            }
            Ok(())
        })
}

/// Time-centered kinetic energy Σ w·m·(½(γ⁻ + γ⁺) − 1), where γ⁻ uses
/// the stored momentum and γ⁺ the momentum after a trial kick in the
/// current fields. Nothing is modified.
pub fn centered_kinetic_energy(
    sp: &Species,
    interp: &InterpolatorArray,
    g: &GridDescriptor,
    exact_gyration: bool,
) -> Real {
    let st = &sp.store;
    let idx: Vec<usize> = (0..st.len()).collect();
    let partial: Vec<Real> = idx
        .par_chunks(4096)
        .map(|ids| {
            ids.iter()
                .map(|&i| {
                    let p = st.get(i);
                    let (e, b) = eval_eb(&interp.coeffs(p.voxel.index()), p.offset);
                    let un = boris_kick(p.u, e, b, sp.q, sp.m, g.dt, exact_gyration);
                    p.w * (0.5 * (gamma(p.u) + gamma(un)) - 1.0)
                })
                .sum::<Real>()
        })
        .collect();
    sp.m * partial.iter().sum::<Real>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldArray;
    use crate::layout::LayoutPolicy;
    use crate::particles::{load_interpolators, Particle, ParticleStore, SortOrder};
    use crate::MACHINE_EPSILON;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn norm(u: [Real; 3]) -> Real {
        (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt()
    }

    #[test]
    fn pure_acceleration() {
        let u = boris_kick([0.0; 3], [1.0, 0.0, 0.0], [0.0; 3], 1.0, 1.0, 0.2, false);
        assert_eq!(u, [0.2, 0.0, 0.0]);
    }

    #[test]
    fn rotation_preserves_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let u: [Real; 3] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
            let b: [Real; 3] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
            for exact in [false, true] {
                let un = boris_kick(u, [0.0; 3], b, -1.0, 1.0, 0.1, exact);
                let rel = (norm(un) - norm(u)).abs() / norm(u);
                assert!(rel <= 4.0 * MACHINE_EPSILON, "{rel}");
            }
        }
    }

    #[test]
    fn rotation_angle_closed_form() {
        let (dt, u0) = (0.1 as Real, 0.1 as Real);
        let g0 = (1.0 + u0 * u0).sqrt();
        let un = boris_kick([u0, 0.0, 0.0], [0.0; 3], [0.0, 0.0, 1.0], 1.0, 1.0, dt, false);
        let phi = 2.0 * (dt / (2.0 * g0)).atan();
        let want = [u0 * phi.cos(), -u0 * phi.sin(), 0.0];
        let tol = if crate::is_single_precision() { 1e-7 } else { 1e-12 };
        for a in 0..3 {
            assert!((un[a] - want[a]).abs() <= tol, "{:?} vs {:?}", un, want);
        }
        // exact gyration rotates by q|B|dt/(mγ)
        let un = boris_kick([u0, 0.0, 0.0], [0.0; 3], [0.0, 0.0, 1.0], 1.0, 1.0, dt, true);
        let theta = dt / g0;
        let want = [u0 * theta.cos(), -u0 * theta.sin(), 0.0];
        for a in 0..3 {
            assert!((un[a] - want[a]).abs() <= tol);
        }
    }

    fn grid4() -> GridDescriptor {
        GridDescriptor::with_cfl_fraction([4, 4, 4], [1.0; 3], 0.9).unwrap()
    }

    #[test]
    fn zero_displacement_deposits_nothing() {
        let g = grid4();
        let mut sb = ScatterBuffer::new(g.num_voxels(), 12, ScatterBackend::Sequential, 1).unwrap();
        let v = g.voxel_unchecked(2, 2, 2);
        deposit_segment_checked(v, [0.3, -0.2, 0.9], [0.0; 3], 1.0, &mut sb.handles()[0]).unwrap();
        assert!(sb.reduce().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn centered_x_segment() {
        let g = grid4();
        let mut sb = ScatterBuffer::new(g.num_voxels(), 12, ScatterBackend::Sequential, 1).unwrap();
        let v = g.voxel_unchecked(2, 2, 2);
        deposit_segment_checked(v, [0.0; 3], [0.2, 0.0, 0.0], 1.0, &mut sb.handles()[0]).unwrap();
        let r = sb.reduce();
        let lanes = &r[v.index() * 12..v.index() * 12 + 12];
        for l in 0..4 {
            approx::assert_relative_eq!(lanes[l], 0.05, max_relative = 4.0 * MACHINE_EPSILON);
        }
        assert!(lanes[4..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn segment_crossing_face_is_rejected() {
        let g = grid4();
        let mut sb = ScatterBuffer::new(g.num_voxels(), 12, ScatterBackend::Sequential, 1).unwrap();
        let v = g.voxel_unchecked(2, 2, 2);
        let err = deposit_segment_checked(v, [0.9, 0.0, 0.0], [0.4, 0.0, 0.0], 1.0, &mut sb.handles()[0]);
        assert!(matches!(err, Err(Error::Usage(_))));
    }

    #[test]
    fn lane_weights_sum_to_displacement() {
        let g = grid4();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let mut sb = ScatterBuffer::new(g.num_voxels(), 12, ScatterBackend::Sequential, 1).unwrap();
            let disp: [Real; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let mid: [Real; 3] = std::array::from_fn(|a| {
                let room = 1.0 - 0.5 * disp[a].abs();
                rng.random_range(-room..room)
            });
            let qw = rng.random_range(0.1..2.0);
            let v = g.voxel_unchecked(1, 3, 2);
            deposit_segment_checked(v, mid, disp, qw, &mut sb.handles()[0]).unwrap();
            let r = sb.reduce();
            for dir in 0..3 {
                let s: Real = r[v.index() * 12 + 4 * dir..v.index() * 12 + 4 * dir + 4].iter().sum();
                assert!((s - qw * disp[dir]).abs() <= 16.0 * MACHINE_EPSILON * qw, "{s} vs {}", qw * disp[dir]);
            }
        }
    }

    #[test]
    fn lanes_match_path_average_of_weights() {
        // Gauss-Legendre is exact for the quadratic weight product
        let nodes = [-(0.6 as Real).sqrt() / 2.0, 0.0, (0.6 as Real).sqrt() / 2.0];
        let wts = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        let g = grid4();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..200 {
            let mut sb = ScatterBuffer::new(g.num_voxels(), 12, ScatterBackend::Sequential, 1).unwrap();
            let disp: [Real; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let mid: [Real; 3] = std::array::from_fn(|a| {
                let room = 1.0 - 0.5 * disp[a].abs();
                rng.random_range(-room..room)
            });
            let v = g.voxel_unchecked(2, 2, 2);
            deposit_segment_checked(v, mid, disp, 1.0, &mut sb.handles()[0]).unwrap();
            let r = sb.reduce();
            let lanes = &r[v.index() * 12..v.index() * 12 + 12];
            for dir in 0..3 {
                let (a, b) = ((dir + 1) % 3, (dir + 2) % 3);
                for (l, (sig_a, sig_b)) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)].into_iter().enumerate() {
                    let avg: Real = nodes
                        .iter()
                        .zip(wts)
                        .map(|(s, w)| {
                            let pa = mid[a] + s * disp[a];
                            let pb = mid[b] + s * disp[b];
                            w * 0.25 * (1.0 + sig_a * pa) * (1.0 + sig_b * pb)
                        })
                        .sum();
                    let want = disp[dir] * avg;
                    assert!((lanes[4 * dir + l] - want).abs() <= 64.0 * MACHINE_EPSILON, "dir {dir} lane {l}");
                }
            }
        }
    }

    fn single(p: Particle, q: Real) -> Species {
        Species {
            name: "p".into(),
            q,
            m: 1.0,
            store: ParticleStore::from_particles(&[p], LayoutPolicy::FieldMajor),
            sort_interval: 0,
            sort_order: SortOrder::Blocked,
        }
    }

    #[test]
    fn zero_fields_at_rest() {
        let g = grid4();
        let fa = FieldArray::new(&g, LayoutPolicy::FieldMajor);
        let ia = load_interpolators(&fa, &g);
        let p = Particle { offset: [0.1, -0.3, 0.5], u: [0.0; 3], w: 1.0, voxel: g.voxel_unchecked(2, 3, 1) };
        let mut sp = single(p, 1.0);
        let mut sb = ScatterBuffer::new(g.num_voxels(), 12, ScatterBackend::Replicated, 1).unwrap();
        advance_particles(&mut sp, &ia, &mut sb, &g, &PushOptions::default()).unwrap();
        assert_eq!(sp.store.get(0), p);
        assert!(sb.reduce().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn free_streaming_quarter_cell() {
        // v·dt = 0.25·hx moves the offset by +0.5
        let g = GridDescriptor::new([4, 4, 4], [1.0; 3], 0.5).unwrap();
        let fa = FieldArray::new(&g, LayoutPolicy::FieldMajor);
        let ia = load_interpolators(&fa, &g);
        let v: Real = 0.5;
        let ux = v / (1.0 - v * v).sqrt();
        let p = Particle { offset: [0.0; 3], u: [ux, 0.0, 0.0], w: 1.0, voxel: g.voxel_unchecked(2, 2, 2) };
        let mut sp = single(p, 1.0);
        let mut sb = ScatterBuffer::new(g.num_voxels(), 12, ScatterBackend::Replicated, 1).unwrap();
        advance_particles(&mut sp, &ia, &mut sb, &g, &PushOptions::default()).unwrap();
        let out = sp.store.get(0);
        approx::assert_relative_eq!(out.offset[0], 0.5, max_relative = 8.0 * MACHINE_EPSILON);
        assert_eq!(out.voxel, p.voxel);
        let r = sb.reduce();
        let vi = p.voxel.index();
        let x_sum: Real = r[vi * 12..vi * 12 + 4].iter().sum();
        approx::assert_relative_eq!(x_sum, 0.5, max_relative = 8.0 * MACHINE_EPSILON);
    }

    #[test]
    fn crossing_splits_into_two_voxels_and_wraps() {
        let g = GridDescriptor::new([4, 4, 4], [1.0; 3], 0.5).unwrap();
        let fa = FieldArray::new(&g, LayoutPolicy::FieldMajor);
        let ia = load_interpolators(&fa, &g);
        let v: Real = 0.5;
        let ux = v / (1.0 - v * v).sqrt();
        let p = Particle { offset: [0.9, 0.0, 0.0], u: [ux, 0.0, 0.0], w: 1.0, voxel: g.voxel_unchecked(4, 2, 2) };
        let mut sp = single(p, 1.0);
        let mut sb = ScatterBuffer::new(g.num_voxels(), 12, ScatterBackend::Replicated, 1).unwrap();
        advance_particles(&mut sp, &ia, &mut sb, &g, &PushOptions::default()).unwrap();
        let out = sp.store.get(0);
        assert_eq!(out.voxel, g.voxel_unchecked(1, 2, 2));
        approx::assert_relative_eq!(out.offset[0], -0.6, max_relative = 16.0 * MACHINE_EPSILON);
        let r = sb.reduce();
        let sum = |v: VoxelId| -> Real { r[v.index() * 12..v.index() * 12 + 4].iter().sum() };
        approx::assert_relative_eq!(sum(g.voxel_unchecked(4, 2, 2)), 0.1, max_relative = 64.0 * MACHINE_EPSILON);
        // second piece lands in the ghost voxel past the high face
        approx::assert_relative_eq!(sum(g.voxel_unchecked(5, 2, 2)), 0.4, max_relative = 64.0 * MACHINE_EPSILON);
    }

    #[test]
    fn chunking_does_not_change_results() {
        let g = GridDescriptor::with_cfl_fraction([5, 4, 3], [1.0, 0.7, 1.3], 0.9).unwrap();
        let mut fa = FieldArray::new(&g, LayoutPolicy::FieldMajor);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for v in 0..g.num_voxels() {
            for f in 0..7 {
                if f != 3 {
                    fa.set(v, f, rng.random_range(-0.5..0.5));
                }
            }
        }
        crate::grid::ghost_sync_fields(&mut fa, &g);
        let ia = load_interpolators(&fa, &g);
        let ps: Vec<Particle> = (0..3000)
            .map(|_| Particle {
                offset: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
                u: std::array::from_fn(|_| rng.random_range(-3.0..3.0)),
                w: 1.0,
                voxel: g.voxel_unchecked(rng.random_range(1..=5), rng.random_range(1..=4), rng.random_range(1..=3)),
            })
            .collect();
        let run = |chunk: usize, policy: LayoutPolicy| {
            let mut sp = single(ps[0], -1.0);
            sp.store = ParticleStore::from_particles(&ps, policy);
            let mut sb = ScatterBuffer::new(g.num_voxels(), 12, ScatterBackend::Replicated, 3).unwrap();
            let opts = PushOptions { chunk_size: chunk, exact_gyration: false };
            advance_particles(&mut sp, &ia, &mut sb, &g, &opts).unwrap();
            (sp.store.iter().collect::<Vec<_>>(), sb.reduce())
        };
        let base = run(4096, LayoutPolicy::FieldMajor);
        for chunk in [1, 7, 64] {
            for policy in LayoutPolicy::ALL {
                let other = run(chunk, policy);
                assert_eq!(other.0, base.0);
                assert!(other.1.iter().zip(&base.1).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }

    #[test]
    fn partition_covers_all() {
        let (cuts, per) = partition(10, 3, 2);
        assert_eq!(cuts, vec![0, 2, 3, 5, 6, 8, 10]);
        assert_eq!(per, vec![2, 2, 2]);
        let (cuts, per) = partition(0, 2, 4);
        assert_eq!(cuts, vec![0]);
        assert_eq!(per, vec![0, 0]);
    }
}
