use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};

pub const CSV_HEADER: &str =
    "suite,config,grid_points,particles,workers,steps,wall_seconds,push_rate,normalized_runtime";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub config: String,
    pub grid_points: u64,
    pub particles: u64,
    pub workers: usize,
    pub steps: u64,
    pub wall_seconds: f64,
    pub push_rate: f64,
    pub normalized_runtime: f64,
}

/// Rows of one suite. `normalized_runtime` of every row is its wall time
/// over the baseline row's.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub suite: String,
    pub rows: Vec<BenchRow>,
}

impl BenchResult {
    pub fn new(suite: impl Into<String>) -> Self {
        BenchResult { suite: suite.into(), rows: Vec::new() }
    }

    /// Adds a row with `push_rate = particles·steps / wall_seconds`.
    pub fn push(&mut self, config: String, grid_points: u64, particles: u64, workers: usize, steps: u64, wall: f64) {
        let push_rate = if wall > 0.0 { (particles * steps) as f64 / wall } else { 0.0 };
        self.rows.push(BenchRow {
            config,
            grid_points,
            particles,
            workers,
            steps,
            wall_seconds: wall,
            push_rate,
            normalized_runtime: f64::NAN,
        });
    }

    /// Fills `normalized_runtime` relative to row `baseline`.
    pub fn normalize(&mut self, baseline: usize) {
        let base = self.rows[baseline].wall_seconds;
        for r in &mut self.rows {
            r.normalized_runtime = if base > 0.0 { r.wall_seconds / base } else { f64::NAN };
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:?},{:?},{:?}",
                self.suite,
                r.config,
                r.grid_points,
                r.particles,
                r.workers,
                r.steps,
                r.wall_seconds,
                r.push_rate,
                r.normalized_runtime
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            Some(h) => bail!("unexpected CSV header `{h}`"),
            None => bail!("empty CSV"),
        }
        let mut suite = None;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                bail!("row {} has {} columns, expected 9", i + 2, f.len());
            }
            let ctx = || format!("row {}", i + 2);
            suite.get_or_insert_with(|| f[0].to_string());
            rows.push(BenchRow {
                config: f[1].to_string(),
                grid_points: f[2].parse().with_context(ctx)?,
                particles: f[3].parse().with_context(ctx)?,
                workers: f[4].parse().with_context(ctx)?,
                steps: f[5].parse().with_context(ctx)?,
                wall_seconds: f[6].parse().with_context(ctx)?,
                push_rate: f[7].parse().with_context(ctx)?,
                normalized_runtime: f[8].parse().with_context(ctx)?,
            });
        }
        Ok(BenchResult { suite: suite.unwrap_or_default(), rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(path, self.to_csv()).with_context(|| format!("writing {}", path.display()))
    }
}

/// Warm-up runs followed by timed repetitions whose median is reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Timing {
    pub warmup: usize,
    pub reps: usize,
}

impl Default for Timing {
    fn default() -> Self {
        Timing { warmup: 1, reps: 3 }
    }
}

impl Timing {
    /// Runs `f` `warmup + reps` times. `f` returns the seconds it wants
    /// counted, so it can leave setup out; the median of the timed runs is
    /// returned along with the last run's output.
    pub fn measure<T>(&self, mut f: impl FnMut() -> Result<(f64, T)>) -> Result<(f64, T)> {
        for _ in 0..self.warmup {
            f()?;
        }
        let reps = self.reps.max(1);
        let mut times = Vec::with_capacity(reps);
        let mut last = None;
        for _ in 0..reps {
            let (t, out) = f()?;
            times.push(t);
            last = Some(out);
        }
        Ok((median(&mut times), last.expect("at least one repetition")))
    }
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Seconds spent in `f`.
pub fn timed<T>(f: impl FnOnce() -> T) -> (f64, T) {
    let t = Instant::now();
    let out = f();
    (t.elapsed().as_secs_f64(), out)
}
