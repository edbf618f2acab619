//! Weak and strong scaling over worker counts.
//!
//! Every run uses deterministic mode with the Replicated backend, so the
//! physics of a strong-scaling series must be bitwise identical whatever
//! the worker count; the suite fails if it is not.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, ensure, Result};
use minipic::layout::ScatterBackend;
use minipic::sim::{Deck, Simulation};
use minipic::Real;

use crate::bench::{timed, BenchResult, Timing};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalingMode {
    /// Interior voxels and particles grow with the worker count.
    Weak,
    /// One fixed problem.
    Strong,
}

impl fmt::Display for ScalingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalingMode::Weak => "weak",
            ScalingMode::Strong => "strong",
        })
    }
}

impl FromStr for ScalingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weak" => Ok(ScalingMode::Weak),
            "strong" => Ok(ScalingMode::Strong),
            other => Err(format!("unknown scaling mode `{other}` (expected weak or strong)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScalingConfig {
    pub mode: ScalingMode,
    pub workers: Vec<usize>,
    pub timing: Timing,
    /// Permit more workers than the machine has cores.
    pub allow_oversubscribe: bool,
}

#[derive(Debug)]
pub struct ScalingOutcome {
    pub result: BenchResult,
    /// Final total energy per row.
    pub final_energy: Vec<Real>,
    /// Diagnostics CSV rows per row.
    pub diagnostics: Vec<Vec<String>>,
}

/// The deck for one row: deterministic, Replicated, with the x extent
/// multiplied by the worker count in weak mode.
pub fn row_deck(base: &Deck, mode: ScalingMode, workers: usize) -> Deck {
    let mut d = base.clone();
    d.run.workers = workers;
    d.run.deterministic = true;
    d.run.scatter_backend = ScatterBackend::Replicated;
    d.run.field_dump_interval = 0;
    if mode == ScalingMode::Weak {
        d.grid.n[0] *= workers;
        d.grid.l[0] *= workers as Real;
    }
    d
}

pub fn bench_scaling(base: &Deck, cfg: &ScalingConfig) -> Result<ScalingOutcome> {
    ensure!(!cfg.workers.is_empty(), "scaling needs at least one worker count");
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    for &w in &cfg.workers {
        ensure!(w >= 1, "worker counts must be positive");
        if w > cores && !cfg.allow_oversubscribe {
            bail!("{w} workers exceeds the {cores} available cores (pass --allow-oversubscribe to run anyway)");
        }
    }
    let mut result = BenchResult::new("scaling");
    let mut final_energy = Vec::new();
    let mut diagnostics = Vec::new();
    for &w in &cfg.workers {
        let deck = row_deck(base, cfg.mode, w);
        let (wall, (particles, history)) = cfg.timing.measure(|| {
            let mut sim = Simulation::new(deck.clone())?;
            let (t, res) = timed(|| sim.run());
            res?;
            let rows: Vec<String> = sim.history().iter().map(|r| r.csv_row()).collect();
            Ok((t, (sim.total_particles(), (rows, sim.history().last().map(|r| r.total_energy)))))
        })?;
        let (rows, energy) = history;
        let points = deck.grid.n.iter().product::<usize>() as u64;
        result.push(format!("{} workers={w}", cfg.mode), points, particles, w, deck.grid.steps, wall);
        final_energy.push(energy.unwrap_or(0.0));
        diagnostics.push(rows);
    }
    let baseline = cfg
        .workers
        .iter()
        .enumerate()
        .min_by_key(|&(_, w)| *w)
        .map(|(i, _)| i)
        .unwrap_or(0);
    result.normalize(baseline);

    if cfg.mode == ScalingMode::Strong {
        for (i, rows) in diagnostics.iter().enumerate().skip(1) {
            if rows != &diagnostics[0] {
                bail!(
                    "deterministic diagnostics differ between {} and {} workers",
                    cfg.workers[0],
                    cfg.workers[i]
                );
            }
        }
    }
    Ok(ScalingOutcome { result, final_energy, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DEFAULT_BENCH_DECK;

    #[test]
    fn weak_rows_grow_along_x() {
        let base = Deck::parse(DEFAULT_BENCH_DECK).unwrap();
        let d = row_deck(&base, ScalingMode::Weak, 3);
        assert_eq!(d.grid.n, [48, 16, 16]);
        assert_eq!(d.grid.l, [48.0, 16.0, 16.0]);
        assert!(d.run.deterministic);
        assert_eq!(d.run.scatter_backend, ScatterBackend::Replicated);
        assert_eq!(d.cell_size(), base.cell_size());
        let s = row_deck(&base, ScalingMode::Strong, 3);
        assert_eq!(s.grid, base.grid);
        assert_eq!(s.run.workers, 3);
    }

    #[test]
    fn modes_parse() {
        assert_eq!("weak".parse::<ScalingMode>(), Ok(ScalingMode::Weak));
        assert_eq!(ScalingMode::Strong.to_string().parse::<ScalingMode>(), Ok(ScalingMode::Strong));
        assert!("both".parse::<ScalingMode>().is_err());
    }

    #[test]
    fn strong_scaling_is_bitwise_reproducible() {
        let mut base = Deck::parse(DEFAULT_BENCH_DECK).unwrap();
        base.grid.n = [6; 3];
        base.grid.l = [6.0; 3];
        base.grid.steps = 6;
        let cfg = ScalingConfig {
            mode: ScalingMode::Strong,
            workers: vec![2, 1, 3],
            timing: Timing { warmup: 0, reps: 1 },
            allow_oversubscribe: true,
        };
        let out = bench_scaling(&base, &cfg).unwrap();
        assert_eq!(out.result.rows.len(), 3);
        // normalized to the smallest worker count
        assert_eq!(out.result.rows[1].normalized_runtime, 1.0);
        assert!(out.diagnostics.windows(2).all(|w| w[0] == w[1]));
        assert!(out.diagnostics[0].iter().all(|row| row.ends_with(",0.0,0.0")));
    }
}
