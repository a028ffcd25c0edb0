//! CSV tables and JSON helpers shared by every export.
//!
//! Every table starts with a `# key=value, ...` provenance comment, then a
//! header row, then rows whose floats carry 17 significant digits.

use std::io::{self, Write};
use std::path::Path;

use serde::Serializer;

use crate::numeric::fmt17;

/// Serialize an extended real: finite values as numbers, `±∞` as `"inf"` /
/// `"-inf"`, NaN as `null`.
pub fn ser_extended<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_nan() {
        s.serialize_none()
    } else if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

pub fn ser_extended_vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&Extended(*x))?;
    }
    seq.end()
}

/// Newtype giving [`ser_extended`] semantics inside containers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extended(pub f64);

impl serde::Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ser_extended(&self.0, s)
    }
}

/// One table cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

/// A table ready for CSV output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub provenance: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            provenance: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_provenance(mut self, key: &str, value: impl ToString) -> Self {
        self.provenance.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        if !self.provenance.is_empty() {
            let parts: Vec<String> = self.provenance.iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(w, "# {}", parts.join(", "))?;
        }
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Float(v) => fmt17(*v),
                    Cell::Int(n) => n.to_string(),
                })
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn write_file(&self, path: &Path) -> io::Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["t", "alive"]).with_provenance("seed", 7);
        t.push(vec![0.5.into(), 10u64.into()]);
        assert_eq!(t.to_csv_string(), "# seed=7\nt,alive\n5.0000000000000000e-1,10\n");
    }

    #[test]
    fn extended_json() {
        let v = serde_json::to_string(&[Extended(1.5), Extended(f64::INFINITY), Extended(f64::NAN)]).unwrap();
        assert_eq!(v, "[1.5,\"inf\",null]");
    }
}
