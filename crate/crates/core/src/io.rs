//! CSV schemas (version 1). Floats are written in the shortest form that
//! parses back to the same `f64`, so every emitted field reloads bit for bit.
//!
//! ```text
//! field     index,x[,y],value
//! grid      index,x[,y],is_interior
//! capacity  set_id,capacity,mass,max_offsupport_mu,sandwich_lo,sandwich_hi
//! sweep     epsilon,error_linf,energy_gap,gap_bound,iterations,rate
//! ```
//!
//! Grid rows list interior nodes first, then exterior nodes, in global
//! index order. Sandwich columns are empty for kernels without gamma bounds.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;

pub const SCHEMA_VERSION: u32 = 1;

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Contract(format!("malformed CSV: {other:?}")),
    }
}

fn coord_header(grid: &Grid, last: &str) -> Vec<String> {
    let mut h = vec!["index".to_string(), "x".to_string()];
    if grid.dim() == 2 {
        h.push("y".into());
    }
    h.push(last.into());
    h
}

fn coord_record(grid: &Grid, global: usize) -> Vec<String> {
    let p = grid.node(global);
    let mut r = vec![global.to_string(), p[0].to_string()];
    if grid.dim() == 2 {
        r.push(p[1].to_string());
    }
    r
}

pub fn write_field<W: Write>(grid: &Grid, u: &Field, out: W) -> Result<()> {
    u.check_grid(grid)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(coord_header(grid, "value")).map_err(csv_err)?;
    for i in 0..u.len() {
        let mut r = coord_record(grid, i);
        r.push(u[i].to_string());
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by [`write_field`] for the same grid. Rows may
/// come in any order but must cover every interior node exactly once.
pub fn read_field<R: Read>(grid: &Grid, input: R) -> Result<Field> {
    let mut rd = csv::Reader::from_reader(input);
    let expected = coord_header(grid, "value");
    let headers = rd.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Contract(format!(
            "field CSV header {:?} does not match {:?}",
            headers.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    let n = grid.n_interior();
    let mut values = vec![None; n];
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let idx: usize = parse(&rec[0], "index")?;
        if idx >= n {
            return Err(Error::Contract(format!("field CSV index {idx} is not an interior node")));
        }
        if values[idx].is_some() {
            return Err(Error::Contract(format!("field CSV repeats index {idx}")));
        }
        values[idx] = Some(parse::<f64>(&rec[rec.len() - 1], "value")?);
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::Contract(format!("field CSV misses index {i}"))))
        .collect::<Result<Vec<_>>>()?;
    Field::new(grid, values)
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Contract(format!("cannot parse {what} from {s:?}")))
}

pub fn write_grid<W: Write>(grid: &Grid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(coord_header(grid, "is_interior")).map_err(csv_err)?;
    let n = grid.n_interior();
    for g in 0..n + grid.n_exterior() {
        let mut r = coord_record(grid, g);
        r.push(if g < n { "1" } else { "0" }.into());
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the capacity table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CapacityRow {
    pub set_id: String,
    pub capacity: f64,
    pub mass: f64,
    pub max_offsupport_mu: f64,
    pub sandwich_lo: Option<f64>,
    pub sandwich_hi: Option<f64>,
}

/// One row of a penalization sweep; `rate` is filled on the last row only.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub error_linf: f64,
    pub energy_gap: f64,
    pub gap_bound: f64,
    pub iterations: usize,
    pub rate: Option<f64>,
}

/// Writes serializable rows with a header taken from the field names.
pub fn write_rows<W: Write, T: serde::Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_field_file(grid: &Grid, u: &Field, path: &Path) -> Result<()> {
    write_field(grid, u, std::fs::File::create(path)?)
}

pub fn read_field_file(grid: &Grid, path: &Path) -> Result<Field> {
    read_field(grid, std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain};

    #[test]
    fn field_round_trip_is_bit_exact() {
        let g = build_grid(Domain::ball([0.0, 0.0], 0.5, 2, 0.125, 0.5)).unwrap();
        let u = g.sample_field("sin(3*x) + exp(y)/3 - 1e-17").unwrap();
        let mut buf = Vec::new();
        write_field(&g, &u, &mut buf).unwrap();
        let back = read_field(&g, buf.as_slice()).unwrap();
        for i in 0..u.len() {
            assert_eq!(u[i].to_bits(), back[i].to_bits());
        }
    }

    #[test]
    fn wrong_header_and_missing_rows_are_rejected() {
        let g = build_grid(Domain::interval(0.0, 1.0, 0.25, 0.5)).unwrap();
        assert!(read_field(&g, "index,x,y,value\n".as_bytes()).is_err());
        assert!(read_field(&g, "index,x,value\n0,0.25,1\n".as_bytes()).is_err());
    }

    #[test]
    fn grid_csv_marks_interior_nodes() {
        let g = build_grid(Domain::interval(0.0, 1.0, 0.25, 0.5)).unwrap();
        let mut buf = Vec::new();
        write_grid(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "index,x,is_interior");
        assert_eq!(lines.len(), 1 + g.n_interior() + g.n_exterior());
        assert_eq!(text.matches(",1\n").count(), 3);
    }
}
