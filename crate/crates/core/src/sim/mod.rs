//! Simulation driver: decks, initialization, the step loop, hooks and
//! diagnostics.
//!
//! One [`Simulation::step`] runs these phases in order, each parallel
//! inside the simulation's worker pool:
//!
//! 1. clear the scatter buffer and the free current,
//! 2. load interpolators from the current fields,
//! 3. push every species, depositing current,
//! 4. reduce the scatter buffer, fold ghost contributions and unload them
//!    onto the current edges,
//! 5. advance B half a step, E a full step, B the other half,
//! 6. refresh ghosts,
//! 7. bump the step counter; then, on their cadences, sort species,
//!    recompute ρ and the divergence errors, run hooks, emit a
//!    diagnostics row and dump fields.

pub mod deck;
mod diag;
mod hooks;
mod init;

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

pub use deck::{Deck, GridSpec, RawDeck, RunSpec, SpeciesSpec};
pub use diag::{DiagnosticsRecord, DiagnosticsWriter};
pub use hooks::{HookAction, HookContext, HookError, HookFlags, HookRegistration, SpeciesAccess};
pub use init::{populate_species, uniform_species};

use crate::fields::{self, FieldArray, ACCUMULATOR_LANES, DIV_B_ERR, DIV_E_ERR};
use crate::grid::{ghost_fold_currents, ghost_sync_fields, GridDescriptor};
use crate::layout::{CopyCounter, ScatterBackend, ScatterBuffer};
use crate::particles::{
    advance_particles, centered_kinetic_energy, deposit_rho, sort_particles, InterpolatorArray, PushOptions,
    Species,
};
use crate::{Error, Real, Result};
use hooks::Hook;

/// Number of private scatter copies in deterministic mode, independent of
/// the thread count.
pub const DETERMINISTIC_REPLICAS: usize = 8;

type Sink = DiagnosticsWriter<Box<dyn Write + Send>>;

pub struct Simulation {
    deck: Deck,
    grid: GridDescriptor,
    fields: FieldArray,
    interp: InterpolatorArray,
    species: Vec<Species>,
    scatter: ScatterBuffer,
    reduced: Vec<Real>,
    step: u64,
    pool: Arc<rayon::ThreadPool>,
    workers: usize,
    hooks: Vec<Hook>,
    copies: CopyCounter,
    warnings: Vec<String>,
    push_opts: PushOptions,
    history: Vec<DiagnosticsRecord>,
    sink: Option<Sink>,
    last_row_at: Instant,
    pushes_since_row: u64,
    div_fresh: bool,
}

/// Worker count for a deck: the configured value, or every available core.
pub fn resolve_workers(run: &RunSpec) -> usize {
    if run.workers > 0 {
        run.workers
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
}

impl Simulation {
    /// Builds the initial state: zero fields, loaded particles, zeroed
    /// copy counter.
    pub fn new(deck: Deck) -> Result<Self> {
        let grid = deck.grid_descriptor()?;
        let workers = resolve_workers(&deck.run);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::usage(format!("cannot start {workers} worker threads: {e}")))?;
        let replicas = match (deck.run.scatter_backend, deck.run.deterministic) {
            (ScatterBackend::Sequential, _) => 1,
            (_, true) => DETERMINISTIC_REPLICAS,
            _ => workers,
        };
        let policy = deck.run.layout;
        let scatter = ScatterBuffer::new(grid.num_voxels(), ACCUMULATOR_LANES, deck.run.scatter_backend, replicas)?;
        let species = pool.install(|| {
            deck.species
                .iter()
                .enumerate()
                .map(|(i, spec)| populate_species(spec, i, &grid, deck.run.seed, policy))
                .collect::<Vec<_>>()
        });

        let mut warnings = Vec::new();
        let (net, gross) = deck.species.iter().zip(&species).fold((0.0, 0.0), |(n, g), (spec, sp)| {
            let w = if sp.is_empty() { 0.0 } else { sp.store.get(0).w };
            let q = spec.q * w * sp.len() as Real;
            (n + q, g + q.abs())
        });
        if net.abs() > 1e-12 * gross {
            let msg = format!(
                "deck is not charge neutral (net charge {net:e}); fields start at zero, so the Gauss \
                 residual is nonzero but constant"
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }

        Ok(Simulation {
            fields: FieldArray::new(&grid, policy),
            interp: InterpolatorArray::new(&grid, policy),
            reduced: vec![0.0; grid.num_voxels() * ACCUMULATOR_LANES],
            push_opts: PushOptions {
                chunk_size: deck.run.chunk_size,
                exact_gyration: deck.run.exact_gyration,
            },
            deck,
            grid,
            species,
            scatter,
            step: 0,
            pool: Arc::new(pool),
            workers,
            hooks: Vec::new(),
            copies: CopyCounter::new(),
            warnings,
            history: Vec::new(),
            sink: None,
            last_row_at: Instant::now(),
            pushes_since_row: 0,
            div_fresh: false,
        })
    }

    pub fn deck(&self) -> &Deck {
        &self.deck
    }

    pub fn grid(&self) -> &GridDescriptor {
        &self.grid
    }

    pub fn fields(&self) -> &FieldArray {
        &self.fields
    }

    pub fn fields_mut(&mut self) -> &mut FieldArray {
        self.div_fresh = false;
        &mut self.fields
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn species_mut(&mut self) -> &mut [Species] {
        self.div_fresh = false;
        &mut self.species
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn copies(&self) -> &CopyCounter {
        &self.copies
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Every diagnostics row emitted so far.
    pub fn history(&self) -> &[DiagnosticsRecord] {
        &self.history
    }

    pub fn total_particles(&self) -> u64 {
        self.species.iter().map(|s| s.len() as u64).sum()
    }

    /// Streams diagnostics rows as CSV to `sink`.
    pub fn set_diagnostics_sink(&mut self, sink: Box<dyn Write + Send>) {
        let names: Vec<&str> = self.deck.species.iter().map(|s| s.name.as_str()).collect();
        self.sink = Some(DiagnosticsWriter::new(sink, &names));
    }

    pub fn register_hook(&mut self, reg: HookRegistration) -> Result<()> {
        self.hooks.push(Hook::new(reg)?);
        Ok(())
    }

    fn install<T: Send>(&mut self, f: impl FnOnce(&mut Self) -> T + Send) -> T {
        let pool = Arc::clone(&self.pool);
        pool.install(|| f(self))
    }

    /// Phase 1.
    pub fn clear_accumulators(&mut self) {
        self.install(|s| {
            s.scatter.clear();
            fields::clear_currents(&mut s.fields);
        });
    }

    /// Phase 2.
    pub fn load_interpolators(&mut self) {
        self.install(|s| s.interp.load(&s.fields, &s.grid));
    }

    /// Phase 3.
    pub fn push_particles(&mut self) -> Result<()> {
        self.div_fresh = false;
        self.install(|s| {
            for sp in &mut s.species {
                advance_particles(sp, &s.interp, &mut s.scatter, &s.grid, &s.push_opts)?;
            }
            Ok(())
        })
    }

    /// Phase 4, first half: merged accumulator lanes with ghost voxels
    /// folded into their images.
    pub fn reduce_currents(&mut self) {
        self.install(|s| {
            s.scatter.reduce_into(&mut s.reduced);
            ghost_fold_currents(&mut s.reduced, ACCUMULATOR_LANES, &s.grid);
        });
    }

    /// The reduced accumulator, `num_voxels × 12` lanes.
    pub fn reduced_currents_mut(&mut self) -> &mut [Real] {
        &mut self.reduced
    }

    /// Phase 4, second half.
    pub fn unload_currents(&mut self) -> Result<()> {
        fields::unload_currents(&self.reduced, ACCUMULATOR_LANES, &mut self.fields, &self.grid)
    }

    /// Phases 5 and 6.
    pub fn advance_fields(&mut self) {
        self.div_fresh = false;
        self.install(|s| {
            let (fa, g) = (&mut s.fields, &s.grid);
            fields::advance_b(fa, g, 0.5);
            ghost_sync_fields(fa, g);
            fields::advance_e(fa, g);
            ghost_sync_fields(fa, g);
            fields::advance_b(fa, g, 0.5);
            ghost_sync_fields(fa, g);
        });
    }

    /// Phase 7: counter, sorting, ρ and divergence errors, hooks,
    /// diagnostics and field dumps on their cadences.
    pub fn finish_step(&mut self) -> Result<()> {
        self.step += 1;
        self.pushes_since_row += self.total_particles();
        let step = self.step;
        let nv = self.grid.num_voxels();
        self.install(|s| {
            for sp in &mut s.species {
                if sp.sort_interval > 0 && step.is_multiple_of(sp.sort_interval) {
                    sort_particles(sp, nv, sp.sort_order);
                }
            }
        });
        let diag_due = step.is_multiple_of(self.deck.run.diag_interval);
        if diag_due {
            self.refresh_div_errors();
        }
        if self.hooks.iter().any(|h| h.due(step)) {
            let mut hooks = std::mem::take(&mut self.hooks);
            let result = hooks.iter_mut().filter(|h| h.due(step)).try_for_each(|h| {
                h.run(step, &self.grid, &mut self.species, &mut self.fields, &self.copies)
            });
            self.hooks = hooks;
            self.div_fresh = false;
            result?;
            if diag_due {
                self.refresh_div_errors();
            }
        }
        if diag_due {
            self.emit_diagnostics()?;
        }
        let dump = self.deck.run.field_dump_interval;
        if dump > 0 && step.is_multiple_of(dump) {
            self.dump_fields()?;
        }
        Ok(())
    }

    /// Advances the simulation by one step.
    pub fn step(&mut self) -> Result<()> {
        self.clear_accumulators();
        self.load_interpolators();
        self.push_particles()?;
        self.reduce_currents();
        self.unload_currents()?;
        self.advance_fields();
        self.finish_step()
    }

    /// Emits the step-0 row if nothing was emitted yet, then steps until
    /// the deck's step count is reached.
    pub fn run(&mut self) -> Result<()> {
        if self.history.is_empty() && self.step == 0 {
            self.emit_diagnostics()?;
        }
        while self.step < self.deck.grid.steps {
            self.step()?;
        }
        Ok(())
    }

    /// Deposits ρ from all species and recomputes both divergence errors.
    pub fn refresh_div_errors(&mut self) {
        self.install(|s| {
            fields::clear_rho(&mut s.fields);
            for sp in &s.species {
                deposit_rho(sp, &mut s.fields, &s.grid);
            }
            fields::compute_div_errors(&mut s.fields, &s.grid);
        });
        self.div_fresh = true;
    }

    /// Measures the current state, appends it to the history and writes
    /// it to the sink if one is set.
    pub fn emit_diagnostics(&mut self) -> Result<DiagnosticsRecord> {
        if !self.div_fresh {
            self.refresh_div_errors();
        }
        let exact = self.push_opts.exact_gyration;
        let (e_energy, b_energy, kinetic) = self.install(|s| {
            s.interp.load(&s.fields, &s.grid);
            let (e, b) = fields::field_energy(&s.fields, &s.grid);
            let k: Vec<Real> = s
                .species
                .iter()
                .map(|sp| centered_kinetic_energy(sp, &s.interp, &s.grid, exact))
                .collect();
            (e, b, k)
        });
        let (wall_seconds, push_rate) = if self.deck.run.deterministic {
            (0.0, 0.0)
        } else {
            let wall = self.last_row_at.elapsed().as_secs_f64();
            let rate = if wall > 0.0 { self.pushes_since_row as f64 / wall } else { 0.0 };
            (wall, rate)
        };
        let rec = DiagnosticsRecord {
            step: self.step,
            time: self.step as Real * self.grid.dt,
            e_energy,
            b_energy,
            total_energy: e_energy + b_energy + kinetic.iter().sum::<Real>(),
            kinetic,
            max_div_e_err: self.fields.max_abs(DIV_E_ERR),
            max_div_b_err: self.fields.max_abs(DIV_B_ERR),
            particle_count: self.total_particles(),
            wall_seconds,
            push_rate,
        };
        if let Some(sink) = &mut self.sink {
            sink.write(&rec)?;
        }
        self.history.push(rec.clone());
        self.pushes_since_row = 0;
        self.last_row_at = Instant::now();
        Ok(rec)
    }

    /// Path of the field dump for `step`.
    pub fn dump_path(&self, step: u64) -> PathBuf {
        self.deck.run.out_dir.join(format!("fields_{step:06}.bin"))
    }

    pub fn dump_fields(&self) -> Result<()> {
        std::fs::create_dir_all(&self.deck.run.out_dir)?;
        let file = std::fs::File::create(self.dump_path(self.step))?;
        fields::write_snapshot(&self.fields, &self.grid, std::io::BufWriter::new(file))
    }
}
