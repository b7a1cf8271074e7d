//! CSV and JSON files.

use std::io::{Read, Write};
use std::path::Path;

use msgate_motion::sideband::{RabiDataset, RabiPoint};
use serde::Serialize;

use crate::Failure;

pub const RABI_HEADER: [&str; 3] = ["time_us", "excited", "shots"];

/// Numeric rows behind a fixed header, written with shortest round-trip formatting.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row.to_vec());
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn write_to(&self, out: impl Write) -> Result<(), Failure> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header).map_err(io_failure)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|x| format!("{x}"))).map_err(io_failure)?;
        }
        w.flush().map_err(|e| Failure::Data(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        let file = create(path)?;
        self.write_to(file)
    }
}

fn io_failure(e: csv::Error) -> Failure {
    Failure::Data(e.to_string())
}

pub fn create(path: &Path) -> Result<std::fs::File, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::File::create(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| Failure::Data(e.to_string()))?;
    writeln!(file).map_err(|e| Failure::Data(e.to_string()))
}

/// Parses a Rabi-flopping CSV (`time_us,excited,shots`, `#` comments).
pub fn read_rabi(label: &str, input: impl Read) -> Result<RabiDataset, Failure> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| Failure::Data(format!("{label}: {e}")))?.clone();
    if header.iter().collect::<Vec<_>>() != RABI_HEADER {
        return Err(Failure::Data(format!(
            "{label}: expected header `{}`, found `{}`",
            RABI_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Failure::Data(format!("{label}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| Failure::Data(format!("{label}: line {line}: {what}"));
        let time_us: f64 = record[0].parse().map_err(|_| bad(&format!("invalid time_us `{}`", &record[0])))?;
        let excited: u64 = record[1].parse().map_err(|_| bad(&format!("invalid excited `{}`", &record[1])))?;
        let shots: u64 = record[2].parse().map_err(|_| bad(&format!("invalid shots `{}`", &record[2])))?;
        if !(time_us.is_finite() && time_us >= 0.0) {
            return Err(bad(&format!("time_us must be >= 0, got {time_us}")));
        }
        if shots == 0 {
            return Err(bad("shots must be >= 1"));
        }
        if excited > shots {
            return Err(bad(&format!("excited count {excited} exceeds shots {shots}")));
        }
        points.push(RabiPoint { time: time_us * 1e-6, excited, shots });
    }
    RabiDataset::new(label, points).map_err(|e| Failure::Data(e.to_string()))
}

pub fn read_rabi_file(path: &Path) -> Result<RabiDataset, Failure> {
    let label = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    let file = std::fs::File::open(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    read_rabi(&label, file)
}

pub fn write_rabi(dataset: &RabiDataset, out: impl Write) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RABI_HEADER).map_err(io_failure)?;
    for p in dataset.points() {
        w.write_record([format!("{}", p.time * 1e6), p.excited.to_string(), p.shots.to_string()])
            .map_err(io_failure)?;
    }
    w.flush().map_err(|e| Failure::Data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments() {
        let text = "# run 1\ntime_us,excited,shots\n5,12,500\n# mid comment\n10.5,40,500\n";
        let d = read_rabi("a", text.as_bytes()).unwrap();
        assert_eq!(d.points().len(), 2);
        assert!((d.points()[1].time - 10.5e-6).abs() < 1e-18);
    }

    #[test]
    fn excess_count_reports_line() {
        let text = "time_us,excited,shots\n5,12,500\n10,501,500\n";
        match read_rabi("a", text.as_bytes()) {
            Err(Failure::Data(m)) => assert!(m.contains("line 3"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_and_wrong_header() {
        assert!(matches!(read_rabi("a", "t,e,s\n1,2,3\n".as_bytes()), Err(Failure::Data(_))));
        match read_rabi("a", "time_us,excited,shots\n1,x,3\n".as_bytes()) {
            Err(Failure::Data(m)) => assert!(m.contains("line 2") && m.contains("excited")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rabi_round_trip() {
        let text = "time_us,excited,shots\n5,12,500\n7.25,0,500\n";
        let d = read_rabi("a", text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_rabi(&d, &mut buf).unwrap();
        let again = read_rabi("a", buf.as_slice()).unwrap();
        assert_eq!(again.points(), d.points());
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(&["a", "b"]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n");
    }
}
