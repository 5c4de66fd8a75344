//! CSV tables with fixed column schemas.
//!
//! Reals are written in the shortest decimal form that parses back to the
//! same `f64` (plain notation for magnitudes in `[1e-4, 1e15)`, exponent
//! notation otherwise). Empty cells are missing values.
//!
//! | schema       | columns |
//! |--------------|---------|
//! | `scatter`    | checkpoint_id, step, n, mean, std, skewness, mode, ltp, ltp_defined, cvar, mean_ci_lo, mean_ci_hi |
//! | `samples`    | draw, return |
//! | `grid`       | alpha, beta, return |
//! | `profile`    | alpha, return, std, collapse |
//! | `btp`        | env, condition, pair_a, pair_b, btp |
//! | `race`       | t, successful, failing |
//! | `rewards`    | t, successful, failing |
//! | `state_ltp`  | buffer_index, ltp, ltp_defined |
//! | `trace`      | proposal, accepted, cvar_before, cvar_after |
//! | `rank`       | rank, env, checkpoint_id, cvar |
//! | `training`   | checkpoint_id, run, step, return |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Real,
    Text,
    Bool,
}

#[derive(Debug, PartialEq, Eq)]
pub struct Schema {
    pub name: &'static str,
    pub columns: &'static [(&'static str, Kind)],
}

macro_rules! schema {
    ($id:ident, $name:literal, [$(($col:literal, $kind:ident)),* $(,)?]) => {
        pub const $id: Schema = Schema { name: $name, columns: &[$(($col, Kind::$kind)),*] };
    };
}

schema!(SCATTER, "scatter", [
    ("checkpoint_id", Text), ("step", Int), ("n", Int), ("mean", Real), ("std", Real),
    ("skewness", Real), ("mode", Real), ("ltp", Real), ("ltp_defined", Bool), ("cvar", Real),
    ("mean_ci_lo", Real), ("mean_ci_hi", Real),
]);
schema!(SAMPLES, "samples", [("draw", Int), ("return", Real)]);
schema!(GRID, "grid", [("alpha", Real), ("beta", Real), ("return", Real)]);
schema!(PROFILE, "profile", [("alpha", Real), ("return", Real), ("std", Real), ("collapse", Bool)]);
schema!(BTP, "btp", [("env", Text), ("condition", Text), ("pair_a", Text), ("pair_b", Text), ("btp", Real)]);
schema!(RACE, "race", [("t", Int), ("successful", Real), ("failing", Real)]);
schema!(REWARDS, "rewards", [("t", Int), ("successful", Real), ("failing", Real)]);
schema!(STATE_LTP, "state_ltp", [("buffer_index", Int), ("ltp", Real), ("ltp_defined", Bool)]);
schema!(TRACE, "trace", [("proposal", Int), ("accepted", Bool), ("cvar_before", Real), ("cvar_after", Real)]);
schema!(RANK, "rank", [("rank", Int), ("env", Text), ("checkpoint_id", Text), ("cvar", Real)]);
schema!(TRAINING, "training", [("checkpoint_id", Text), ("run", Int), ("step", Int), ("return", Real)]);

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
    Bool(bool),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Real)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

macro_rules! int_cell {
    ($($t:ty),*) => {$(
        impl From<$t> for Cell {
            fn from(v: $t) -> Self {
                Cell::Int(v as i64)
            }
        }
    )*};
}
int_cell!(usize, u64, u32, i64, i32);

/// Shortest round-trip decimal form of `v`; negative zero prints as `0`.
pub fn format_real(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => format_real(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn parse(s: &str, kind: Kind) -> Result<Cell> {
        if s.is_empty() {
            return Ok(Cell::Missing);
        }
        let bad = || Error::ConfigParse(format!("cannot read {s:?} as {kind:?}"));
        Ok(match kind {
            Kind::Int => Cell::Int(s.parse().map_err(|_| bad())?),
            Kind::Real => Cell::Real(s.parse().map_err(|_| bad())?),
            Kind::Text => Cell::Text(s.to_string()),
            Kind::Bool => Cell::Bool(s.parse().map_err(|_| bad())?),
        })
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Cell::Real(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: &'static Schema,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(schema: &'static Schema) -> Self {
        Self { schema, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.schema.columns.len() {
            return Err(Error::Contract(format!(
                "{} table expects {} columns, got {}",
                self.schema.name,
                self.schema.columns.len(),
                row.len()
            )));
        }
        for (cell, (col, kind)) in row.iter().zip(self.schema.columns) {
            let ok = matches!(
                (cell, kind),
                (Cell::Missing, _)
                    | (Cell::Int(_), Kind::Int)
                    | (Cell::Real(_), Kind::Real)
                    | (Cell::Text(_), Kind::Text)
                    | (Cell::Bool(_), Kind::Bool)
            );
            if !ok {
                return Err(Error::Contract(format!("column {col} of {} expects {kind:?}", self.schema.name)));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(self.schema.columns.iter().map(|c| c.0)).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 cells")
    }

    pub fn parse(schema: &'static Schema, text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| Error::ConfigParse(e.to_string()))?.clone();
        let expected: Vec<&str> = schema.columns.iter().map(|c| c.0).collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(Error::ConfigParse(format!("header does not match the {} schema", schema.name)));
        }
        let mut table = Table::new(schema);
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::ConfigParse(e.to_string()))?;
            let row = rec.iter().zip(schema.columns).map(|(s, (_, k))| Cell::parse(s, *k)).collect::<Result<_>>()?;
            table.push(row)?;
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for v in [0.0, 1.0, 0.1, 1.0 / 3.0, 1e-7, -2.5e300, 123456.789, f64::MIN_POSITIVE, 5e-324] {
            let s = format_real(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(format_real(-0.0), "0");
        assert_eq!(format_real(1.0), "1");
        assert_eq!(format_real(1e-7), "1e-7");
    }

    #[test]
    fn table_round_trip() {
        let mut t = Table::new(&PROFILE);
        t.push(vec![0.0.into(), 10.5.into(), Cell::Missing, false.into()]).unwrap();
        t.push(vec![(1.0 / 3.0).into(), (-1e-9).into(), 0.25.into(), true.into()]).unwrap();
        let text = t.to_csv();
        assert!(text.starts_with("alpha,return,std,collapse\n"));
        assert_eq!(Table::parse(&PROFILE, &text).unwrap(), t);
        assert!(Table::parse(&GRID, &text).is_err());
    }

    #[test]
    fn wrong_kinds_rejected() {
        let mut t = Table::new(&SAMPLES);
        assert!(t.push(vec![1.5.into(), 2.0.into()]).is_err());
        assert!(t.push(vec![1usize.into()]).is_err());
    }
}
