use std::io::Write;

use crate::{Real, Result};

/// One diagnostics row.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: u64,
    pub time: Real,
    pub e_energy: Real,
    pub b_energy: Real,
    /// Kinetic energy per species, in deck order.
    pub kinetic: Vec<Real>,
    pub total_energy: Real,
    pub max_div_e_err: Real,
    pub max_div_b_err: Real,
    pub particle_count: u64,
    pub wall_seconds: f64,
    /// Particle pushes per second since the previous row.
    pub push_rate: f64,
}

impl DiagnosticsRecord {
    pub fn header(species: &[impl AsRef<str>]) -> String {
        let mut cols = vec!["step", "time", "e_energy", "b_energy"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        cols.extend(species.iter().map(|s| format!("kinetic_{}", s.as_ref())));
        cols.extend(
            [
                "total_energy",
                "max_div_e_err",
                "max_div_b_err",
                "particle_count",
                "wall_seconds_this_interval",
                "push_rate",
            ]
            .map(String::from),
        );
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut s = format!("{},{:?},{:?},{:?}", self.step, self.time, self.e_energy, self.b_energy);
        for k in &self.kinetic {
            s.push_str(&format!(",{k:?}"));
        }
        s.push_str(&format!(
            ",{:?},{:?},{:?},{},{:?},{:?}",
            self.total_energy,
            self.max_div_e_err,
            self.max_div_b_err,
            self.particle_count,
            self.wall_seconds,
            self.push_rate
        ));
        s
    }
}

/// Writes the header before the first row and flushes after every row.
pub struct DiagnosticsWriter<W: Write> {
    sink: W,
    header: String,
    wrote_header: bool,
}

impl<W: Write> DiagnosticsWriter<W> {
    pub fn new(sink: W, species: &[impl AsRef<str>]) -> Self {
        DiagnosticsWriter {
            sink,
            header: DiagnosticsRecord::header(species),
            wrote_header: false,
        }
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        if !self.wrote_header {
            writeln!(self.sink, "{}", self.header)?;
            self.wrote_header = true;
        }
        writeln!(self.sink, "{}", rec.csv_row())?;
        self.sink.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.sink
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(step: u64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            step,
            time: 0.5,
            e_energy: 1.0,
            b_energy: 2.0,
            kinetic: vec![3.0, 4.0],
            total_energy: 10.0,
            max_div_e_err: 1e-15,
            max_div_b_err: 0.0,
            particle_count: 64,
            wall_seconds: 0.25,
            push_rate: 256.0,
        }
    }

    #[test]
    fn header_once_then_rows() {
        let mut w = DiagnosticsWriter::new(Vec::new(), &["e", "i"]);
        w.write(&record(0)).unwrap();
        w.write(&record(5)).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "step,time,e_energy,b_energy,kinetic_e,kinetic_i,total_energy,max_div_e_err,max_div_b_err,\
             particle_count,wall_seconds_this_interval,push_rate"
        );
        assert_eq!(lines[1], "0,0.5,1.0,2.0,3.0,4.0,10.0,1e-15,0.0,64,0.25,256.0");
        assert!(lines[2].starts_with("5,"));
        assert_eq!(lines[0].split(',').count(), lines[2].split(',').count());
    }

    #[test]
    fn rows_round_trip_reals() {
        let mut r = record(1);
        r.e_energy = 0.1 + 0.2;
        let row = r.csv_row();
        let v: Real = row.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(v.to_bits(), r.e_energy.to_bits());
    }
}
