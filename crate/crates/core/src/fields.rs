//! Yee-staggered field storage and the FDTD update.
//!
//! Staggering within voxel `(i, j, k)`, with the voxel's low corner at node
//! `(i, j, k)`:
//!
//! | entry           | location                  |
//! |-----------------|---------------------------|
//! | `ex`, `jfx`     | x-edge `(i+½, j, k)`      |
//! | `ey`, `jfy`     | y-edge `(i, j+½, k)`      |
//! | `ez`, `jfz`     | z-edge `(i, j, k+½)`      |
//! | `cbx`           | x-face `(i, j+½, k+½)`    |
//! | `cby`           | y-face `(i+½, j, k+½)`    |
//! | `cbz`           | z-face `(i+½, j+½, k)`    |
//! | `rhof`, `div_e_err` | node `(i, j, k)`      |
//! | `div_b_err`     | cell center               |

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::grid::GridDescriptor;
use crate::layout::{FieldedBuffer, LayoutPolicy, SpaceTag};
use crate::{Error, Real, Result, PRECISION};

pub const EX: usize = 0;
pub const EY: usize = 1;
pub const EZ: usize = 2;
pub const DIV_E_ERR: usize = 3;
pub const CBX: usize = 4;
pub const CBY: usize = 5;
pub const CBZ: usize = 6;
pub const DIV_B_ERR: usize = 7;
pub const JFX: usize = 8;
pub const JFY: usize = 9;
pub const JFZ: usize = 10;
pub const RHOF: usize = 11;
pub const TCAX: usize = 12;
pub const TCAY: usize = 13;
pub const TCAZ: usize = 14;
pub const RHOB: usize = 15;

pub const NUM_FIELD_ENTRIES: usize = 16;
pub const NUM_MATERIAL_IDS: usize = 8;

/// Current lanes per voxel: 4 x-edges, 4 y-edges, 4 z-edges.
pub const ACCUMULATOR_LANES: usize = 12;

pub const FIELD_NAMES: [&str; NUM_FIELD_ENTRIES] = [
    "ex", "ey", "ez", "div_e_err", "cbx", "cby", "cbz", "div_b_err", "jfx", "jfy", "jfz", "rhof", "tcax",
    "tcay", "tcaz", "rhob",
];

/// Per-voxel field records plus the (inert) material identifiers.
#[derive(Clone, Debug)]
pub struct FieldArray {
    buf: FieldedBuffer,
    materials: Vec<[u16; NUM_MATERIAL_IDS]>,
    interior: Vec<u32>,
}

impl FieldArray {
    pub fn new(g: &GridDescriptor, policy: LayoutPolicy) -> Self {
        let nv = g.num_voxels();
        FieldArray {
            buf: FieldedBuffer::new(nv, NUM_FIELD_ENTRIES, policy, SpaceTag::DEVICE),
            materials: vec![[0; NUM_MATERIAL_IDS]; nv],
            interior: g.interior_voxels().map(|v| v.0).collect(),
        }
    }

    pub fn buffer(&self) -> &FieldedBuffer {
        &self.buf
    }

    pub fn buffer_mut(&mut self) -> &mut FieldedBuffer {
        &mut self.buf
    }

    pub fn materials(&self) -> &[[u16; NUM_MATERIAL_IDS]] {
        &self.materials
    }

    pub fn num_voxels(&self) -> usize {
        self.buf.num_records()
    }

    #[inline(always)]
    pub fn get(&self, voxel: usize, entry: usize) -> Real {
        self.buf.get(voxel, entry)
    }

    #[inline(always)]
    pub fn set(&mut self, voxel: usize, entry: usize, v: Real) {
        self.buf.set(voxel, entry, v)
    }

    /// Interior voxel ids in ascending order.
    pub fn interior(&self) -> &[u32] {
        &self.interior
    }

    /// Largest `|entry|` over interior voxels.
    pub fn max_abs(&self, entry: usize) -> Real {
        self.interior
            .iter()
            .map(|&v| self.buf.get(v as usize, entry).abs())
            .fold(0.0, Real::max)
    }

    /// True when the reserved entries and material ids are all zero.
    pub fn reserved_are_zero(&self) -> bool {
        (0..self.num_voxels()).all(|v| (TCAX..=RHOB).all(|f| self.buf.get(v, f) == 0.0))
            && self.materials.iter().all(|m| m.iter().all(|&x| x == 0))
    }
}

/// Applies `update(voxel, values)` to every interior voxel, where `values`
/// was computed in parallel by `compute`.
fn stencil_update<C, U>(fa: &mut FieldArray, compute: C, mut update: U)
where
    C: Fn(&FieldedBuffer, usize) -> [Real; 3] + Sync,
    U: FnMut(&mut FieldedBuffer, usize, [Real; 3]),
{
    let buf = &fa.buf;
    let values: Vec<[Real; 3]> = fa.interior.par_iter().map(|&v| compute(buf, v as usize)).collect();
    for (&v, val) in fa.interior.iter().zip(values) {
        update(&mut fa.buf, v as usize, val);
    }
}

/// `B ← B − frac·dt·curl E` on every interior face. E ghosts must be synced.
pub fn advance_b(fa: &mut FieldArray, g: &GridDescriptor, frac: Real) {
    let [sx, sy, sz] = g.strides();
    let [rx, ry, rz] = g.h.map(|h| 1.0 / h);
    let c = frac * g.dt;
    stencil_update(
        fa,
        |b, v| {
            let ex = b.get(v, EX);
            let ey = b.get(v, EY);
            let ez = b.get(v, EZ);
            [
                ry * (b.get(v + sy, EZ) - ez) - rz * (b.get(v + sz, EY) - ey),
                rz * (b.get(v + sz, EX) - ex) - rx * (b.get(v + sx, EZ) - ez),
                rx * (b.get(v + sx, EY) - ey) - ry * (b.get(v + sy, EX) - ex),
            ]
        },
        |b, v, curl| {
            b.add(v, CBX, -c * curl[0]);
            b.add(v, CBY, -c * curl[1]);
            b.add(v, CBZ, -c * curl[2]);
        },
    );
}

/// `E ← E + dt·(curl B − J)` on every interior edge. B ghosts must be synced.
pub fn advance_e(fa: &mut FieldArray, g: &GridDescriptor) {
    let [sx, sy, sz] = g.strides();
    let [rx, ry, rz] = g.h.map(|h| 1.0 / h);
    let dt = g.dt;
    stencil_update(
        fa,
        |b, v| {
            let bx = b.get(v, CBX);
            let by = b.get(v, CBY);
            let bz = b.get(v, CBZ);
            [
                ry * (bz - b.get(v - sy, CBZ)) - rz * (by - b.get(v - sz, CBY)) - b.get(v, JFX),
                rz * (bx - b.get(v - sz, CBX)) - rx * (bz - b.get(v - sx, CBZ)) - b.get(v, JFY),
                rx * (by - b.get(v - sx, CBY)) - ry * (bx - b.get(v - sy, CBX)) - b.get(v, JFZ),
            ]
        },
        |b, v, rate| {
            b.add(v, EX, dt * rate[0]);
            b.add(v, EY, dt * rate[1]);
            b.add(v, EZ, dt * rate[2]);
        },
    );
}

pub fn clear_currents(fa: &mut FieldArray) {
    for f in [JFX, JFY, JFZ] {
        fa.buf.fill_field(f, 0.0);
    }
}

pub fn clear_rho(fa: &mut FieldArray) {
    fa.buf.fill_field(RHOF, 0.0);
}

/// Padded-coordinate offsets of the four edges behind each lane group, in
/// lane order (low,low), (high,low), (low,high), (high,high) over the two
/// transverse axes in cyclic order.
const LANE_EDGES: [[[usize; 3]; 4]; 3] = [
    // x-edges, transverse (y, z)
    [[0, 0, 0], [0, 1, 0], [0, 0, 1], [0, 1, 1]],
    // y-edges, transverse (z, x)
    [[0, 0, 0], [0, 0, 1], [1, 0, 0], [1, 0, 1]],
    // z-edges, transverse (x, y)
    [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]],
];

/// Adds the reduced accumulator lanes onto the free-current edges.
///
/// `reduced` holds `num_lanes` entries per padded voxel, already folded so
/// that ghost voxels are empty. Lane values are charge × normalized
/// displacement; direction `a` is scaled by `h_a / (2·dt·V)`. Edges on the
/// high ghost plane are written to their periodic interior image.
pub fn unload_currents(reduced: &[Real], num_lanes: usize, fa: &mut FieldArray, g: &GridDescriptor) -> Result<()> {
    if num_lanes != ACCUMULATOR_LANES {
        return Err(Error::usage(format!(
            "accumulator has {num_lanes} lanes, expected {ACCUMULATOR_LANES}"
        )));
    }
    if reduced.len() != g.num_voxels() * ACCUMULATOR_LANES {
        return Err(Error::usage("accumulator length does not match the grid"));
    }
    let volume = g.cell_volume();
    let scale = g.h.map(|h| h / (2.0 * g.dt * volume));
    for &v in &fa.interior {
        let lanes = &reduced[v as usize * ACCUMULATOR_LANES..(v as usize + 1) * ACCUMULATOR_LANES];
        if lanes.iter().all(|&x| x == 0.0) {
            continue;
        }
        let [i, j, k] = g.coords_of(crate::grid::VoxelId(v));
        for dir in 0..3 {
            for (e, off) in LANE_EDGES[dir].iter().enumerate() {
                let val = lanes[dir * 4 + e];
                if val == 0.0 {
                    continue;
                }
                let edge = g.voxel_unchecked(
                    g.image(0, i + off[0]),
                    g.image(1, j + off[1]),
                    g.image(2, k + off[2]),
                );
                fa.buf.add(edge.index(), JFX + dir, scale[dir] * val);
            }
        }
    }
    Ok(())
}

/// Fills `div_e_err` (node divergence of E minus `rhof`) and `div_b_err`
/// (cell-centered divergence of B). Ghosts must be synced.
pub fn compute_div_errors(fa: &mut FieldArray, g: &GridDescriptor) {
    let [sx, sy, sz] = g.strides();
    let [rx, ry, rz] = g.h.map(|h| 1.0 / h);
    stencil_update(
        fa,
        |b, v| {
            let div_e = rx * (b.get(v, EX) - b.get(v - sx, EX))
                + ry * (b.get(v, EY) - b.get(v - sy, EY))
                + rz * (b.get(v, EZ) - b.get(v - sz, EZ));
            let div_b = rx * (b.get(v + sx, CBX) - b.get(v, CBX))
                + ry * (b.get(v + sy, CBY) - b.get(v, CBY))
                + rz * (b.get(v + sz, CBZ) - b.get(v, CBZ));
            [div_e - b.get(v, RHOF), div_b, 0.0]
        },
        |b, v, d| {
            b.set(v, DIV_E_ERR, d[0]);
            b.set(v, DIV_B_ERR, d[1]);
        },
    );
}

/// `(½ Σ E²·V, ½ Σ B²·V)` over interior entries.
pub fn field_energy(fa: &FieldArray, g: &GridDescriptor) -> (Real, Real) {
    let b = &fa.buf;
    let partial: Vec<(Real, Real)> = fa
        .interior
        .par_chunks(4096)
        .map(|ids| {
            let mut e = 0.0;
            let mut m = 0.0;
            for &v in ids {
                let v = v as usize;
                e += b.get(v, EX).powi(2) + b.get(v, EY).powi(2) + b.get(v, EZ).powi(2);
                m += b.get(v, CBX).powi(2) + b.get(v, CBY).powi(2) + b.get(v, CBZ).powi(2);
            }
            (e, m)
        })
        .collect();
    let (e, m) = partial.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let half_v = 0.5 * g.cell_volume();
    (half_v * e, half_v * m)
}

/// Writes interior records in voxel order as little-endian reals after a
/// text header line `nx ny nz precision`.
pub fn write_snapshot<W: Write>(fa: &FieldArray, g: &GridDescriptor, mut w: W) -> Result<()> {
    writeln!(w, "{} {} {} {}", g.n[0], g.n[1], g.n[2], PRECISION)?;
    let mut bytes = Vec::with_capacity(fa.interior.len() * NUM_FIELD_ENTRIES * std::mem::size_of::<Real>());
    for &v in &fa.interior {
        for f in 0..NUM_FIELD_ENTRIES {
            bytes.extend_from_slice(&fa.buf.get(v as usize, f).to_le_bytes());
        }
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Parsed field snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub n: [usize; 3],
    pub precision: String,
    pub records: Vec<[f64; NUM_FIELD_ENTRIES]>,
}

pub fn read_snapshot<R: BufRead>(mut r: R) -> Result<Snapshot> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let bad = || Error::usage(format!("malformed snapshot header `{}`", header.trim()));
    if parts.len() != 4 {
        return Err(bad());
    }
    let mut n = [0usize; 3];
    for a in 0..3 {
        n[a] = parts[a].parse().map_err(|_| bad())?;
    }
    let precision = parts[3].to_string();
    let width = match precision.as_str() {
        "f64" => 8,
        "f32" => 4,
        _ => return Err(bad()),
    };
    let count = n[0] * n[1] * n[2];
    let mut raw = vec![0u8; count * NUM_FIELD_ENTRIES * width];
    r.read_exact(&mut raw)?;
    let records = raw
        .chunks_exact(NUM_FIELD_ENTRIES * width)
        .map(|rec| {
            let mut out = [0.0f64; NUM_FIELD_ENTRIES];
            for (f, b) in rec.chunks_exact(width).enumerate() {
                out[f] = if width == 8 {
                    f64::from_le_bytes(b.try_into().unwrap())
                } else {
                    f32::from_le_bytes(b.try_into().unwrap()) as f64
                };
            }
            out
        })
        .collect();
    Ok(Snapshot { n, precision, records })
}
