//! Push throughput as a function of grid size at a fixed particle count.
//!
//! Only the particle phases are timed: interpolator loading, the push with
//! its current deposition, and the scatter reduction. Sorting is off and
//! the fields are frozen.

use anyhow::Result;
use minipic::fields::{CBX, CBY, CBZ, EX, EY, EZ};
use minipic::grid::ghost_sync_fields;
use minipic::layout::{LayoutPolicy, ScatterBackend};
use minipic::sim::{uniform_species, Deck, GridSpec, RunSpec, Simulation, SpeciesSpec};
use minipic::Real;

use crate::bench::{timed, BenchResult, Timing};

#[derive(Clone, Debug)]
pub struct PushRateConfig {
    /// Cubic edge lengths in cells.
    pub grids: Vec<usize>,
    pub particles: usize,
    pub steps: u64,
    pub workers: usize,
    pub layout: LayoutPolicy,
    pub backend: ScatterBackend,
    pub chunk_size: usize,
    pub seed: u64,
    pub timing: Timing,
}

impl Default for PushRateConfig {
    fn default() -> Self {
        PushRateConfig {
            grids: vec![8, 16, 24, 32],
            particles: 100_000,
            steps: 10,
            workers: 0,
            layout: LayoutPolicy::FieldMajor,
            backend: ScatterBackend::Replicated,
            chunk_size: 4096,
            seed: 1,
            timing: Timing::default(),
        }
    }
}

fn bench_deck(n: usize, cfg: &PushRateConfig) -> Deck {
    Deck {
        grid: GridSpec { n: [n; 3], l: [n as Real; 3], dt: None, cfl_fraction: 0.95, steps: cfg.steps },
        species: vec![SpeciesSpec {
            name: "electron".into(),
            q: -1.0,
            m: 1.0,
            ppc: 0,
            u_th: 0.0,
            drift: [0.0; 3],
            sort_interval: 0,
            sort_order: Default::default(),
            density: None,
            pert_amp: [0.0; 3],
            pert_mode: [0; 3],
        }],
        run: RunSpec {
            seed: cfg.seed,
            layout: cfg.layout,
            scatter_backend: cfg.backend,
            workers: cfg.workers,
            chunk_size: cfg.chunk_size,
            ..RunSpec::default()
        },
    }
}

/// A simulation with `particles` electrons spread uniformly and weak
/// smooth fields, so the push does real work.
pub fn setup(n: usize, cfg: &PushRateConfig) -> Result<Simulation> {
    let mut sim = Simulation::new(bench_deck(n, cfg))?;
    let g = *sim.grid();
    let sp = uniform_species("electron", -1.0, 1.0, cfg.particles, 0.1, &g, cfg.seed, cfg.layout);
    sim.species_mut()[0] = sp;
    let fa = sim.fields_mut();
    let k = 2.0 * std::f64::consts::PI / n as f64;
    for v in g.interior_voxels() {
        let [i, j, l] = g.coords_of(v).map(|c| c as f64 * k);
        let vals = [(i + j).sin(), (j + l).cos(), (l - i).sin(), (i * 2.0).cos(), (j - l).sin(), (i + l).cos()];
        for (f, x) in [EX, EY, EZ, CBX, CBY, CBZ].into_iter().zip(vals) {
            fa.set(v.index(), f, (0.01 * x) as Real);
        }
    }
    ghost_sync_fields(fa, &g);
    Ok(sim)
}

/// Seconds spent in `steps` particle-only steps.
pub fn time_particle_steps(sim: &mut Simulation, steps: u64) -> Result<f64> {
    let (t, res) = timed(|| -> Result<()> {
        for _ in 0..steps {
            sim.clear_accumulators();
            sim.load_interpolators();
            sim.push_particles()?;
            sim.reduce_currents();
        }
        Ok(())
    });
    res?;
    Ok(t)
}

pub fn bench_pushrate(cfg: &PushRateConfig) -> Result<BenchResult> {
    anyhow::ensure!(!cfg.grids.is_empty(), "pushrate needs at least one grid size");
    let mut result = BenchResult::new("pushrate");
    for &n in &cfg.grids {
        anyhow::ensure!(n >= 2, "grid edge {n} is too small");
        let mut sim = setup(n, cfg)?;
        let (wall, ()) = cfg.timing.measure(|| Ok((time_particle_steps(&mut sim, cfg.steps)?, ())))?;
        let points = (n * n * n) as u64;
        result.push(format!("grid={n}^3"), points, cfg.particles as u64, sim.workers(), cfg.steps, wall);
        log::info!("pushrate grid {n}^3: {wall:.4} s");
    }
    result.normalize(0);
    Ok(result)
}

/// Ratio of the wall time for `2·steps` to that for `steps` on one grid;
/// about 2 on an idle machine.
pub fn steps_linearity(n: usize, cfg: &PushRateConfig) -> Result<f64> {
    let mut sim = setup(n, cfg)?;
    let (single, ()) = cfg.timing.measure(|| Ok((time_particle_steps(&mut sim, cfg.steps)?, ())))?;
    let (double, ()) = cfg.timing.measure(|| Ok((time_particle_steps(&mut sim, 2 * cfg.steps)?, ())))?;
    Ok(double / single)
}
