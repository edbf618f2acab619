use rayon::prelude::*;

use crate::fields::{FieldArray, CBX, CBY, CBZ, EX, EY, EZ};
use crate::grid::GridDescriptor;
use crate::layout::{FieldedBuffer, LayoutPolicy, SpaceTag};
use crate::Real;

pub const NUM_INTERP_COEFFS: usize = 18;

// Coefficient order within a voxel.
const EX0: usize = 0;
const DEXDY: usize = 1;
const DEXDZ: usize = 2;
const D2EXDYDZ: usize = 3;
const EY0: usize = 4;
const DEYDZ: usize = 5;
const DEYDX: usize = 6;
const D2EYDZDX: usize = 7;
const EZ0: usize = 8;
const DEZDX: usize = 9;
const DEZDY: usize = 10;
const D2EZDXDY: usize = 11;
const CBX0: usize = 12;
const DCBXDX: usize = 13;
const CBY0: usize = 14;
const DCBYDY: usize = 15;
const CBZ0: usize = 16;
const DCBZDZ: usize = 17;

/// Per-voxel interpolation coefficients: for each E component its value,
/// two transverse gradients and the transverse cross term over the four
/// surrounding edges; for each B component its value and longitudinal
/// gradient over the two bounding faces.
#[derive(Clone, Debug)]
pub struct InterpolatorArray {
    buf: FieldedBuffer,
}

impl InterpolatorArray {
    pub fn new(g: &GridDescriptor, policy: LayoutPolicy) -> Self {
        InterpolatorArray {
            buf: FieldedBuffer::new(g.num_voxels(), NUM_INTERP_COEFFS, policy, SpaceTag::DEVICE),
        }
    }

    pub fn buffer(&self) -> &FieldedBuffer {
        &self.buf
    }

    #[inline(always)]
    pub fn coeffs(&self, voxel: usize) -> [Real; NUM_INTERP_COEFFS] {
        let mut c = [0.0; NUM_INTERP_COEFFS];
        for (f, x) in c.iter_mut().enumerate() {
            *x = self.buf.get(voxel, f);
        }
        c
    }

    /// Rebuilds every interior voxel's coefficients from `fa`, whose
    /// ghosts must be synced.
    pub fn load(&mut self, fa: &FieldArray, g: &GridDescriptor) {
        let [sx, sy, sz] = g.strides();
        let b = fa.buffer();
        let coeffs: Vec<[Real; NUM_INTERP_COEFFS]> = fa
            .interior()
            .par_iter()
            .map(|&v| {
                let v = v as usize;
                let mut c = [0.0; NUM_INTERP_COEFFS];
                // (σ1, σ2) = (-,-), (+,-), (-,+), (+,+) over the transverse pair
                let quad = |f: usize, s1: usize, s2: usize| {
                    [b.get(v, f), b.get(v + s1, f), b.get(v + s2, f), b.get(v + s1 + s2, f)]
                };
                let edge = |e: [Real; 4]| {
                    [
                        0.25 * ((e[0] + e[1]) + (e[2] + e[3])),
                        0.25 * ((e[1] + e[3]) - (e[0] + e[2])),
                        0.25 * ((e[2] + e[3]) - (e[0] + e[1])),
                        0.25 * ((e[0] + e[3]) - (e[1] + e[2])),
                    ]
                };
                c[EX0..=D2EXDYDZ].copy_from_slice(&edge(quad(EX, sy, sz)));
                c[EY0..=D2EYDZDX].copy_from_slice(&edge(quad(EY, sz, sx)));
                c[EZ0..=D2EZDXDY].copy_from_slice(&edge(quad(EZ, sx, sy)));
                for (f, s, at) in [(CBX, sx, CBX0), (CBY, sy, CBY0), (CBZ, sz, CBZ0)] {
                    let lo = b.get(v, f);
                    let hi = b.get(v + s, f);
                    c[at] = 0.5 * (hi + lo);
                    c[at + 1] = 0.5 * (hi - lo);
                }
                c
            })
            .collect();
        for (&v, c) in fa.interior().iter().zip(coeffs) {
            for (f, x) in c.into_iter().enumerate() {
                self.buf.set(v as usize, f, x);
            }
        }
    }
}

/// Allocates and fills an interpolator array for the current fields.
pub fn load_interpolators(fa: &FieldArray, g: &GridDescriptor) -> InterpolatorArray {
    let mut ia = InterpolatorArray::new(g, fa.buffer().policy());
    ia.load(fa, g);
    ia
}

/// Evaluates E and B at voxel offsets `d` from that voxel's coefficients.
#[inline(always)]
pub fn eval_eb(c: &[Real; NUM_INTERP_COEFFS], d: [Real; 3]) -> ([Real; 3], [Real; 3]) {
    let [dx, dy, dz] = d;
    let e = [
        c[EX0] + dy * c[DEXDY] + dz * (c[DEXDZ] + dy * c[D2EXDYDZ]),
        c[EY0] + dz * c[DEYDZ] + dx * (c[DEYDX] + dz * c[D2EYDZDX]),
        c[EZ0] + dx * c[DEZDX] + dy * (c[DEZDY] + dx * c[D2EZDXDY]),
    ];
    let b = [
        c[CBX0] + dx * c[DCBXDX],
        c[CBY0] + dy * c[DCBYDY],
        c[CBZ0] + dz * c[DCBZDZ],
    ];
    (e, b)
}
