use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::bench::BenchResult;

/// Gnuplot script rendering `result`, read back from `csv`, as one chart.
pub fn plotscript(result: &BenchResult, csv: &Path) -> Result<String> {
    if result.rows.is_empty() {
        bail!("usage: cannot plot an empty {} result", result.suite);
    }
    let csv = csv.display().to_string().replace('\'', "''");
    let png = format!("{}.png", result.suite);
    let mut s = String::new();
    let _ = writeln!(s, "# {} benchmark", result.suite);
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{png}'");
    let _ = writeln!(s, "set grid");
    match result.suite.as_str() {
        "pushrate" => {
            let _ = writeln!(s, "set title 'Push rate vs grid size'");
            let _ = writeln!(s, "set logscale x");
            let _ = writeln!(s, "set xlabel 'grid points'");
            let _ = writeln!(s, "set ylabel 'particle pushes per second'");
            let _ = writeln!(s, "plot '{csv}' every ::1 using 3:8 with linespoints title 'push rate'");
        }
        "scaling" => {
            let _ = writeln!(s, "set title 'Runtime vs workers'");
            let _ = writeln!(s, "set xlabel 'workers'");
            let _ = writeln!(s, "set ylabel 'normalized runtime'");
            let _ = writeln!(s, "plot '{csv}' every ::1 using 5:9 with linespoints title 'normalized runtime'");
        }
        _ => {
            let _ = writeln!(s, "set title '{} wall time per configuration'", result.suite);
            let _ = writeln!(s, "set style data histogram");
            let _ = writeln!(s, "set style fill solid 0.8");
            let _ = writeln!(s, "set xtics rotate by -45");
            let _ = writeln!(s, "set ylabel 'wall seconds'");
            let _ = writeln!(s, "plot '{csv}' every ::1 using 7:xtic(2) title 'wall seconds'");
        }
    }
    Ok(s)
}

pub fn emit_plotscript(result: &BenchResult, csv: &Path, out: &Path) -> Result<()> {
    let script = plotscript(result, csv)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(out, script).with_context(|| format!("writing {}", out.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(suite: &str) -> BenchResult {
        let mut r = BenchResult::new(suite);
        r.push("a".into(), 512, 100, 1, 10, 1.0);
        r.normalize(0);
        r
    }

    #[test]
    fn pushrate_uses_log_x() {
        let s = plotscript(&result("pushrate"), Path::new("out/pushrate.csv")).unwrap();
        assert!(s.contains("set logscale x"));
        assert!(s.contains("using 3:8"));
        assert!(s.contains("'out/pushrate.csv'"));
    }

    #[test]
    fn scaling_plots_normalized_runtime() {
        let s = plotscript(&result("scaling"), Path::new("s.csv")).unwrap();
        assert!(s.contains("using 5:9"));
        assert!(!s.contains("logscale"));
    }

    #[test]
    fn empty_result_is_a_usage_error() {
        let err = plotscript(&BenchResult::new("matrix"), Path::new("m.csv")).unwrap_err();
        assert!(err.to_string().contains("usage"));
    }
}
