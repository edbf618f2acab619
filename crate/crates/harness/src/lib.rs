//! Benchmark suites and command implementations behind the `minipic`
//! binary.
//!
//! Every suite returns a [`BenchResult`] whose CSV form has a fixed header
//! (see [`bench::CSV_HEADER`]), and [`plot::emit_plotscript`] turns a result
//! into a gnuplot script.

pub mod bench;
pub mod matrix;
pub mod plot;
pub mod pushrate;
pub mod run;
pub mod scaling;

pub use bench::{BenchResult, BenchRow, Timing};

/// A small two-species deck used when a suite is given no deck file.
pub const DEFAULT_BENCH_DECK: &str = "\
[grid]
nx = 16
ny = 16
nz = 16
lx = 16.0
ly = 16.0
lz = 16.0
steps = 50

[species.electron]
q = -1
m = 1
ppc = 4
u_th = 0.05

[species.ion]
q = 1
m = 100
ppc = 4
u_th = 0.005

[run]
seed = 1
diag_interval = 50
";
