//! The layout × sort × scatter-backend matrix.
//!
//! Every cell runs the same deck; their final total energies must agree
//! within a relative tolerance, otherwise the suite fails.

use anyhow::{bail, ensure, Result};
use minipic::layout::{LayoutPolicy, ScatterBackend};
use minipic::particles::{sort_particles, SortOrder, Species};
use minipic::sim::deck::DEFAULT_SORT_INTERVAL;
use minipic::sim::{Deck, Simulation};
use minipic::Real;

use crate::bench::{timed, BenchResult, Timing};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Sorting variant of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SortChoice {
    Off,
    On(SortOrder),
}

impl SortChoice {
    pub const ALL: [SortChoice; 3] =
        [SortChoice::Off, SortChoice::On(SortOrder::Blocked), SortChoice::On(SortOrder::Interleaved)];

    pub fn name(self) -> &'static str {
        match self {
            SortChoice::Off => "none",
            SortChoice::On(o) => o.name(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub layout: LayoutPolicy,
    pub sort: SortChoice,
    pub backend: ScatterBackend,
    pub deck: Deck,
}

impl Cell {
    pub fn config(&self) -> String {
        format!("layout={} sort={} backend={}", self.layout, self.sort.name(), self.backend)
    }
}

/// The twelve cells in a fixed order; the first is the baseline.
pub fn cells(base: &Deck) -> Vec<Cell> {
    let mut out = Vec::new();
    for layout in LayoutPolicy::ALL {
        for sort in SortChoice::ALL {
            for backend in [ScatterBackend::Replicated, ScatterBackend::SharedUpdate] {
                let mut deck = base.clone();
                deck.run.layout = layout;
                deck.run.scatter_backend = backend;
                deck.run.deterministic = false;
                deck.run.field_dump_interval = 0;
                for sp in &mut deck.species {
                    match sort {
                        SortChoice::Off => sp.sort_interval = 0,
                        SortChoice::On(order) => {
                            sp.sort_order = order;
                            if sp.sort_interval == 0 {
                                sp.sort_interval = DEFAULT_SORT_INTERVAL;
                            }
                        }
                    }
                }
                out.push(Cell { layout, sort, backend, deck });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub wall_seconds: f64,
    pub final_total_energy: Real,
    pub particles: u64,
    pub workers: usize,
}

/// Executes one matrix cell.
pub trait CellRunner {
    fn run_cell(&self, cell: &Cell) -> Result<CellOutcome>;
}

/// Runs cells with the real simulation, timing only the step loop.
#[derive(Clone, Debug, Default)]
pub struct SimRunner {
    pub timing: Timing,
}

fn multiset(sp: &Species) -> Vec<[u64; 8]> {
    let mut v: Vec<[u64; 8]> = sp
        .store
        .iter()
        .map(|p| {
            [
                p.offset[0].to_bits() as u64,
                p.offset[1].to_bits() as u64,
                p.offset[2].to_bits() as u64,
                p.u[0].to_bits() as u64,
                p.u[1].to_bits() as u64,
                p.u[2].to_bits() as u64,
                p.w.to_bits() as u64,
                p.voxel.0 as u64,
            ]
        })
        .collect();
    v.sort_unstable();
    v
}

/// Sorts every species that has sorting enabled and checks that the
/// particle multiset is unchanged.
pub fn presort_and_check(sim: &mut Simulation) -> Result<()> {
    let nv = sim.grid().num_voxels();
    for sp in sim.species_mut() {
        if sp.sort_interval == 0 {
            continue;
        }
        let before = multiset(sp);
        let order = sp.sort_order;
        sort_particles(sp, nv, order);
        ensure!(multiset(sp) == before, "sorting species `{}` changed its particles", sp.name);
    }
    Ok(())
}

impl CellRunner for SimRunner {
    fn run_cell(&self, cell: &Cell) -> Result<CellOutcome> {
        let (wall, (energy, particles, workers)) = self.timing.measure(|| {
            let mut sim = Simulation::new(cell.deck.clone())?;
            presort_and_check(&mut sim)?;
            let (t, res) = timed(|| sim.run());
            res?;
            let energy = sim.history().last().map(|r| r.total_energy).unwrap_or(0.0);
            Ok((t, (energy, sim.total_particles(), sim.workers())))
        })?;
        Ok(CellOutcome { wall_seconds: wall, final_total_energy: energy, particles, workers })
    }
}

#[derive(Debug)]
pub struct MatrixOutcome {
    pub result: BenchResult,
    pub final_energy: Vec<Real>,
    /// Largest |E_cell − E_baseline| / |E_baseline|.
    pub max_deviation: f64,
}

impl MatrixOutcome {
    /// Fails when any cell's final energy strays from the baseline's by
    /// more than `tolerance` (relative).
    pub fn check(&self, tolerance: f64) -> Result<()> {
        let base = self.final_energy[0] as f64;
        let mut bad = Vec::new();
        for (row, &e) in self.result.rows.iter().zip(&self.final_energy) {
            let dev = relative_deviation(e as f64, base);
            if !(dev <= tolerance) {
                bad.push(format!("{} (final energy {e:e}, deviation {dev:.3e})", row.config));
            }
        }
        if !bad.is_empty() {
            bail!(
                "{} matrix cell(s) disagree with the baseline beyond {tolerance:e}: {}",
                bad.len(),
                bad.join("; ")
            );
        }
        Ok(())
    }
}

fn relative_deviation(e: f64, base: f64) -> f64 {
    if base == 0.0 {
        e.abs()
    } else {
        ((e - base) / base).abs()
    }
}

/// Runs every cell. Call [`MatrixOutcome::check`] to enforce agreement.
pub fn bench_matrix(base: &Deck, runner: &dyn CellRunner) -> Result<MatrixOutcome> {
    let mut result = BenchResult::new("matrix");
    let mut final_energy = Vec::new();
    let points = base.grid.n.iter().product::<usize>() as u64;
    for cell in cells(base) {
        let out = runner.run_cell(&cell)?;
        log::info!("{}: {:.4} s, final energy {:e}", cell.config(), out.wall_seconds, out.final_total_energy);
        result.push(cell.config(), points, out.particles, out.workers, base.grid.steps, out.wall_seconds);
        final_energy.push(out.final_total_energy);
    }
    result.normalize(0);
    let base_e = final_energy[0] as f64;
    let max_deviation = final_energy
        .iter()
        .map(|&e| relative_deviation(e as f64, base_e))
        .fold(0.0, f64::max);
    Ok(MatrixOutcome { result, final_energy, max_deviation })
}
