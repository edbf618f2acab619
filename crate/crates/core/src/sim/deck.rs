//! Input decks: a flat `key = value` format with `[grid]`, `[species.NAME]`
//! and `[run]` sections and `#` comments.
//!
//! ```text
//! [grid]
//! nx = 16
//! ny = 16
//! nz = 16
//! lx = 16.0
//! ly = 16.0
//! lz = 16.0
//! steps = 200
//!
//! [species.electron]
//! q = -1
//! m = 1
//! ppc = 8
//! u_th = 0.05
//!
//! [run]
//! seed = 7
//! diag_interval = 10
//! ```
//!
//! Vectors are written `[a, b, c]`. Every key may also be given on the
//! command line in dotted form (`run.layout=RecordMajor`), which replaces
//! or adds to the file's value before validation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::grid::GridDescriptor;
use crate::layout::{LayoutPolicy, ScatterBackend};
use crate::particles::SortOrder;
use crate::{Error, Real, Result};

/// Line number used for values that came from overrides.
pub const OVERRIDE_LINE: usize = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub n: [usize; 3],
    pub l: [Real; 3],
    /// Explicit time step; takes precedence over `cfl_fraction`.
    pub dt: Option<Real>,
    pub cfl_fraction: Real,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesSpec {
    pub name: String,
    pub q: Real,
    pub m: Real,
    pub ppc: usize,
    pub u_th: Real,
    pub drift: [Real; 3],
    pub sort_interval: u64,
    pub sort_order: SortOrder,
    /// Physical number density; sets the weight to `density·V/ppc`.
    pub density: Option<Real>,
    /// Amplitude of a sinusoidal momentum perturbation per component.
    pub pert_amp: [Real; 3],
    /// Mode numbers of the perturbation along x, y, z.
    pub pert_mode: [i64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub seed: u64,
    pub layout: LayoutPolicy,
    pub scatter_backend: ScatterBackend,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
    pub chunk_size: usize,
    pub deterministic: bool,
    pub diag_interval: u64,
    /// Steps between field dumps; 0 disables them.
    pub field_dump_interval: u64,
    pub out_dir: PathBuf,
    pub exact_gyration: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            seed: 1,
            layout: LayoutPolicy::FieldMajor,
            scatter_backend: ScatterBackend::Replicated,
            workers: 0,
            chunk_size: 4096,
            deterministic: false,
            diag_interval: 10,
            field_dump_interval: 0,
            out_dir: PathBuf::from("out"),
            exact_gyration: false,
        }
    }
}

/// A validated simulation description.
#[derive(Clone, Debug, PartialEq)]
pub struct Deck {
    pub grid: GridSpec,
    pub species: Vec<SpeciesSpec>,
    pub run: RunSpec,
}

pub const DEFAULT_SORT_INTERVAL: u64 = 20;
pub const DEFAULT_CFL_FRACTION: Real = 0.95;

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    line: usize,
}

/// Key/value pairs grouped by section, before any typing.
#[derive(Clone, Debug, Default)]
pub struct RawDeck {
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
    species_order: Vec<String>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl RawDeck {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawDeck::default();
        let mut current: Option<String> = None;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = strip_comment(line).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::deck(line, lineno, "unterminated section header"))?
                    .trim();
                raw.open_section(name, lineno)?;
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::deck(line, lineno, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let section = current
                .as_ref()
                .ok_or_else(|| Error::deck(key, lineno, "key outside of any section"))?;
            let full = format!("{section}.{key}");
            if !valid_name(key) {
                return Err(Error::deck(full, lineno, "malformed key"));
            }
            let entries = &mut raw.sections.get_mut(section).expect("section opened").1;
            if entries.contains_key(key) {
                return Err(Error::deck(full, lineno, "duplicate key"));
            }
            entries.insert(key.to_string(), Entry { value: value.to_string(), line: lineno });
        }
        Ok(raw)
    }

    fn open_section(&mut self, name: &str, line: usize) -> Result<()> {
        match name {
            "grid" | "run" => {}
            _ => match name.strip_prefix("species.") {
                Some(sp) if valid_name(sp) => {
                    if !self.sections.contains_key(name) {
                        self.species_order.push(sp.to_string());
                    }
                }
                _ => return Err(Error::deck(name, line, "unknown section")),
            },
        }
        if self.sections.contains_key(name) && line != OVERRIDE_LINE {
            return Err(Error::deck(name, line, "duplicate section"));
        }
        self.sections
            .entry(name.to_string())
            .or_insert_with(|| (line, BTreeMap::new()));
        Ok(())
    }

    /// Applies a dotted `section.key=value` override, e.g.
    /// `species.ion.ppc=4` or `run.layout=RecordMajor`.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::deck(assignment, OVERRIDE_LINE, "override must be `key=value`"))?;
        let path = path.trim();
        let (section, key) = path
            .rsplit_once('.')
            .ok_or_else(|| Error::deck(path, OVERRIDE_LINE, "override key must be dotted, e.g. run.seed"))?;
        if !valid_name(key) {
            return Err(Error::deck(path, OVERRIDE_LINE, "malformed key"));
        }
        self.open_section(section, OVERRIDE_LINE)?;
        let entries = &mut self.sections.get_mut(section).expect("section opened").1;
        entries.insert(
            key.to_string(),
            Entry { value: value.trim().to_string(), line: OVERRIDE_LINE },
        );
        Ok(())
    }

    pub fn into_deck(self) -> Result<Deck> {
        let mut grid_sec = Section::take(&self, "grid")?;
        let grid = GridSpec {
            n: [grid_sec.required("nx")?, grid_sec.required("ny")?, grid_sec.required("nz")?],
            l: [grid_sec.required("lx")?, grid_sec.required("ly")?, grid_sec.required("lz")?],
            dt: grid_sec.optional("dt")?,
            cfl_fraction: grid_sec.optional("cfl_fraction")?.unwrap_or(DEFAULT_CFL_FRACTION),
            steps: grid_sec.required("steps")?,
        };
        grid_sec.finish()?;
        for a in 0..3 {
            let axis = ["x", "y", "z"][a];
            if grid.n[a] < 2 {
                return Err(grid_sec.violation(&format!("n{axis}"), "must be at least 2"));
            }
            if !(grid.l[a] > 0.0) || !grid.l[a].is_finite() {
                return Err(grid_sec.violation(&format!("l{axis}"), "must be positive"));
            }
        }
        if grid.steps == 0 {
            return Err(grid_sec.violation("steps", "must be positive"));
        }
        if !(grid.cfl_fraction > 0.0 && grid.cfl_fraction <= crate::grid::MAX_CFL_FRACTION) {
            return Err(grid_sec.violation(
                "cfl_fraction",
                &format!("must lie in (0, {}]", crate::grid::MAX_CFL_FRACTION),
            ));
        }

        let mut species = Vec::with_capacity(self.species_order.len());
        for name in &self.species_order {
            let mut s = Section::take(&self, &format!("species.{name}"))?;
            let spec = SpeciesSpec {
                name: name.clone(),
                q: s.required("q")?,
                m: s.required("m")?,
                ppc: s.required("ppc")?,
                u_th: s.optional("u_th")?.unwrap_or(0.0),
                drift: s.optional_vec("drift")?.unwrap_or([0.0; 3]),
                sort_interval: s.optional("sort_interval")?.unwrap_or(DEFAULT_SORT_INTERVAL),
                sort_order: s.optional("sort_order")?.unwrap_or_default(),
                density: s.optional("density")?,
                pert_amp: s.optional_vec("pert_amp")?.unwrap_or([0.0; 3]),
                pert_mode: s.optional_vec("pert_mode")?.unwrap_or([0; 3]),
            };
            s.finish()?;
            if !(spec.m > 0.0) || !spec.m.is_finite() {
                return Err(s.violation("m", "mass must be positive"));
            }
            if !spec.q.is_finite() {
                return Err(s.violation("q", "charge must be finite"));
            }
            if !(spec.u_th >= 0.0) {
                return Err(s.violation("u_th", "must be non-negative"));
            }
            if let Some(d) = spec.density {
                if !(d > 0.0) || spec.ppc == 0 {
                    return Err(s.violation("density", "needs a positive value and ppc > 0"));
                }
            }
            species.push(spec);
        }

        let mut r = Section::take(&self, "run")?;
        let def = RunSpec::default();
        let run = RunSpec {
            seed: r.optional("seed")?.unwrap_or(def.seed),
            layout: r.optional("layout")?.unwrap_or(def.layout),
            scatter_backend: r.optional("scatter_backend")?.unwrap_or(def.scatter_backend),
            workers: r.optional("workers")?.unwrap_or(def.workers),
            chunk_size: r.optional("chunk_size")?.unwrap_or(def.chunk_size),
            deterministic: r.optional("deterministic")?.unwrap_or(def.deterministic),
            diag_interval: r.optional("diag_interval")?.unwrap_or(def.diag_interval),
            field_dump_interval: r.optional("field_dump_interval")?.unwrap_or(def.field_dump_interval),
            out_dir: r.optional::<String>("out_dir")?.map(PathBuf::from).unwrap_or(def.out_dir),
            exact_gyration: r.optional("exact_gyration")?.unwrap_or(def.exact_gyration),
        };
        r.finish()?;
        if run.chunk_size == 0 {
            return Err(r.violation("chunk_size", "must be positive"));
        }
        if run.diag_interval == 0 {
            return Err(r.violation("diag_interval", "must be positive"));
        }
        if run.scatter_backend == ScatterBackend::Sequential && run.workers > 1 {
            return Err(r.violation("workers", "the Sequential backend runs on one worker"));
        }
        if run.deterministic && run.scatter_backend == ScatterBackend::SharedUpdate {
            return Err(r.violation(
                "scatter_backend",
                "deterministic mode needs a private-copy backend (Replicated or Sequential)",
            ));
        }

        let deck = Deck { grid, species, run };
        if let Err(e) = deck.grid_descriptor() {
            let key = if deck.grid.dt.is_some() { "dt" } else { "cfl_fraction" };
            return Err(grid_sec.violation(key, &e.to_string()));
        }
        Ok(deck)
    }
}

/// Typed access to one section with line tracking.
struct Section {
    name: String,
    header_line: usize,
    entries: BTreeMap<String, Entry>,
    lines: BTreeMap<String, usize>,
}

impl Section {
    fn take(raw: &RawDeck, name: &str) -> Result<Self> {
        let (header_line, entries) = raw.sections.get(name).cloned().unwrap_or_default();
        Ok(Section {
            name: name.to_string(),
            header_line,
            entries,
            lines: BTreeMap::new(),
        })
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.name)
    }

    fn violation(&self, k: &str, msg: &str) -> Error {
        let line = self.lines.get(k).copied().unwrap_or(self.header_line);
        Error::deck(self.key(k), line, msg)
    }

    fn optional<T: FromStr>(&mut self, k: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(k) {
            None => Ok(None),
            Some(e) => {
                self.lines.insert(k.to_string(), e.line);
                let v = e.value.trim_matches('"');
                v.parse::<T>()
                    .map(Some)
                    .map_err(|err| Error::deck(self.key(k), e.line, format!("invalid value `{}`: {err}", e.value)))
            }
        }
    }

    fn required<T: FromStr>(&mut self, k: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.optional(k)?
            .ok_or_else(|| Error::deck(self.key(k), self.header_line, "missing required key"))
    }

    fn optional_vec<T: FromStr + Copy + Default>(&mut self, k: &str) -> Result<Option<[T; 3]>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.entries.remove(k) else {
            return Ok(None);
        };
        self.lines.insert(k.to_string(), e.line);
        let bad = |msg: String| Error::deck(self.key(k), e.line, msg);
        let inner = e
            .value
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| bad(format!("expected `[a, b, c]`, got `{}`", e.value)))?;
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad(format!("expected 3 components, got {}", parts.len())));
        }
        let mut out = [T::default(); 3];
        for (o, p) in out.iter_mut().zip(parts) {
            *o = p.parse().map_err(|err| bad(format!("invalid component `{p}`: {err}")))?;
        }
        Ok(Some(out))
    }

    fn finish(&self) -> Result<()> {
        match self.entries.iter().next() {
            Some((k, e)) => Err(Error::deck(self.key(k), e.line, "unknown key")),
            None => Ok(()),
        }
    }
}

impl Deck {
    pub fn parse(text: &str) -> Result<Deck> {
        RawDeck::parse(text)?.into_deck()
    }

    /// Parses `text` and applies dotted `key=value` overrides before
    /// validation.
    pub fn parse_with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Deck> {
        let mut raw = RawDeck::parse(text)?;
        for o in overrides {
            raw.set(o.as_ref())?;
        }
        raw.into_deck()
    }

    pub fn cell_size(&self) -> [Real; 3] {
        std::array::from_fn(|a| self.grid.l[a] / self.grid.n[a] as Real)
    }

    /// The grid with its time step resolved.
    pub fn grid_descriptor(&self) -> Result<GridDescriptor> {
        let h = self.cell_size();
        match self.grid.dt {
            Some(dt) => GridDescriptor::new(self.grid.n, h, dt),
            None => GridDescriptor::with_cfl_fraction(self.grid.n, h, self.grid.cfl_fraction),
        }
    }

    /// Deck text that parses back to an equal deck.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let _ = writeln!(s, "[grid]");
        for (k, v) in ["nx", "ny", "nz"].iter().zip(g.n) {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (k, v) in ["lx", "ly", "lz"].iter().zip(g.l) {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        if let Some(dt) = g.dt {
            let _ = writeln!(s, "dt = {dt:?}");
        }
        let _ = writeln!(s, "cfl_fraction = {:?}", g.cfl_fraction);
        let _ = writeln!(s, "steps = {}", g.steps);
        let vec3 = |v: [Real; 3]| format!("[{:?}, {:?}, {:?}]", v[0], v[1], v[2]);
        for sp in &self.species {
            let _ = writeln!(s, "\n[species.{}]", sp.name);
            let _ = writeln!(s, "q = {:?}", sp.q);
            let _ = writeln!(s, "m = {:?}", sp.m);
            let _ = writeln!(s, "ppc = {}", sp.ppc);
            let _ = writeln!(s, "u_th = {:?}", sp.u_th);
            let _ = writeln!(s, "drift = {}", vec3(sp.drift));
            let _ = writeln!(s, "sort_interval = {}", sp.sort_interval);
            let _ = writeln!(s, "sort_order = {}", sp.sort_order);
            if let Some(d) = sp.density {
                let _ = writeln!(s, "density = {d:?}");
            }
            let _ = writeln!(s, "pert_amp = {}", vec3(sp.pert_amp));
            let m = sp.pert_mode;
            let _ = writeln!(s, "pert_mode = [{}, {}, {}]", m[0], m[1], m[2]);
        }
        let r = &self.run;
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "seed = {}", r.seed);
        let _ = writeln!(s, "layout = {}", r.layout);
        let _ = writeln!(s, "scatter_backend = {}", r.scatter_backend);
        let _ = writeln!(s, "workers = {}", r.workers);
        let _ = writeln!(s, "chunk_size = {}", r.chunk_size);
        let _ = writeln!(s, "deterministic = {}", r.deterministic);
        let _ = writeln!(s, "diag_interval = {}", r.diag_interval);
        let _ = writeln!(s, "field_dump_interval = {}", r.field_dump_interval);
        let _ = writeln!(s, "out_dir = \"{}\"", r.out_dir.display());
        let _ = writeln!(s, "exact_gyration = {}", r.exact_gyration);
        s
    }
}
