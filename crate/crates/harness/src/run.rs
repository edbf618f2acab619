use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use minipic::sim::{Deck, Simulation};

/// Reads and validates a deck file with dotted `key=value` overrides.
pub fn load_deck(path: &Path, overrides: &[String]) -> Result<Deck> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading deck {}", path.display()))?;
    Deck::parse_with_overrides(&text, overrides).with_context(|| format!("in deck {}", path.display()))
}

#[derive(Debug)]
pub struct RunSummary {
    pub diagnostics: PathBuf,
    pub rows: usize,
    pub warnings: Vec<String>,
}

/// Runs a deck to completion, writing `diagnostics.csv` (and any field
/// dumps) into the deck's `out_dir`.
pub fn cmd_run(deck_path: &Path, overrides: &[String]) -> Result<RunSummary> {
    let deck = load_deck(deck_path, overrides)?;
    let out_dir = deck.run.out_dir.clone();
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let diagnostics = out_dir.join("diagnostics.csv");
    let file = File::create(&diagnostics).with_context(|| format!("creating {}", diagnostics.display()))?;

    let mut sim = Simulation::new(deck)?;
    for w in sim.warnings() {
        log::warn!("{w}");
    }
    sim.set_diagnostics_sink(Box::new(BufWriter::new(file)));
    sim.run()?;
    Ok(RunSummary {
        diagnostics,
        rows: sim.history().len(),
        warnings: sim.warnings().to_vec(),
    })
}
