//! Dataset files: a CSV with columns `id, L, R, x1..xp, z_0..z_{G-1}` and a
//! JSON sidecar `{"grid": [...]}` holding the shared functional grid.
//!
//! Numbers are canonicalized to 12 significant digits when read, so that
//! interval endpoints that agree to that precision tie exactly. Values are
//! written in shortest round-trip form, which makes read-after-write exact.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fcox::data::round_significant;
use fcox::{FunctionalCurve, Observation};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SIGNIFICANT_DIGITS: i32 = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub grid: Arc<[f64]>,
}

impl Dataset {
    pub fn p(&self) -> usize {
        self.observations.first().map_or(0, |o| o.x.len())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    grid: Vec<f64>,
}

/// `data.csv` → `data.grid.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("grid.json")
}

fn canon(x: f64) -> f64 {
    round_significant(x, SIGNIFICANT_DIGITS)
}

fn schema(file: &str, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Schema { file: file.to_string(), line, msg: msg.into() }
}

pub fn parse_grid(text: &str, file: &str) -> Result<Arc<[f64]>> {
    let g: GridFile = serde_json::from_str(text).map_err(|e| schema(file, e.line(), e.to_string()))?;
    let grid: Vec<f64> = g.grid.into_iter().map(canon).collect();
    // Validated the same way as any curve grid.
    let grid: Arc<[f64]> = grid.into();
    FunctionalCurve::new(grid.clone(), vec![0.0; grid.len()]).map_err(|e| schema(file, 1, e.to_string()))?;
    Ok(grid)
}

pub fn read_grid(path: &Path) -> Result<Arc<[f64]>> {
    let mut text = String::new();
    File::open(path).and_then(|mut f| f.read_to_string(&mut text)).map_err(|e| CliError::io(path, e))?;
    parse_grid(&text, &path.display().to_string())
}

fn expected_header(p: usize, g: usize) -> Vec<String> {
    let mut h = vec!["id".to_string(), "L".to_string(), "R".to_string()];
    h.extend((1..=p).map(|j| format!("x{j}")));
    h.extend((0..g).map(|j| format!("z_{j}")));
    h
}

/// Parses the CSV body against a known grid. `file` labels error messages.
pub fn parse_dataset<R: Read>(reader: R, grid: Arc<[f64]>, file: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| schema(file, 1, e.to_string()))?.clone();
    let g = grid.len();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() < 3 + g + 1 {
        return Err(schema(file, 1, format!("expected id, L, R, at least one x column and {g} z columns; found {} columns", cols.len())));
    }
    let p = cols.len() - 3 - g;
    let want = expected_header(p, g);
    if let Some(j) = (0..want.len()).find(|&j| cols[j] != want[j]) {
        return Err(schema(file, 1, format!("column {} is `{}`, expected `{}`", j + 1, cols[j], want[j])));
    }
    let mut seen = HashSet::new();
    let mut observations = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| schema(file, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != want.len() {
            return Err(schema(file, line, format!("expected {} fields, found {}", want.len(), rec.len())));
        }
        let num = |j: usize| -> Result<f64> {
            let s = rec[j].trim();
            let v: f64 = s.parse().map_err(|_| schema(file, line, format!("column `{}`: `{s}` is not a number", want[j])))?;
            if !v.is_finite() {
                return Err(schema(file, line, format!("column `{}` must be finite", want[j])));
            }
            Ok(canon(v))
        };
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(schema(file, line, "empty subject id"));
        }
        if !seen.insert(id.clone()) {
            return Err(schema(file, line, format!("duplicate subject id `{id}`")));
        }
        let left = num(1)?;
        let right = if rec[2].trim().is_empty() { f64::INFINITY } else { num(2)? };
        if left == 0.0 && right == f64::INFINITY {
            return Err(schema(file, line, format!("subject `{id}` has L = 0 and R = ∞ and carries no information")));
        }
        let x = (3..3 + p).map(num).collect::<Result<Vec<_>>>()?;
        let z = (3 + p..3 + p + g).map(num).collect::<Result<Vec<_>>>()?;
        let z = FunctionalCurve::new(grid.clone(), z).map_err(|e| schema(file, line, e.to_string()))?;
        let obs = Observation::new(id, left, right, x, z).map_err(|e| schema(file, line, e.to_string()))?;
        observations.push(obs);
    }
    if observations.is_empty() {
        return Err(schema(file, 2, "no subjects"));
    }
    Ok(Dataset { observations, grid })
}

/// Reads `csv_path` with the grid from `grid_path`, or from the sidecar next
/// to the CSV when `grid_path` is `None`.
pub fn read_dataset(csv_path: &Path, grid_path: Option<&Path>) -> Result<Dataset> {
    let side = grid_path.map_or_else(|| sidecar_path(csv_path), Path::to_path_buf);
    let grid = read_grid(&side)?;
    let f = File::open(csv_path).map_err(|e| CliError::io(csv_path, e))?;
    parse_dataset(BufReader::new(f), grid, &csv_path.display().to_string())
}

pub fn write_dataset_to<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header = expected_header(ds.p(), ds.grid.len());
    let to_io = |e: csv::Error| CliError::io("<csv>", std::io::Error::other(e));
    w.write_record(&header).map_err(to_io)?;
    for o in &ds.observations {
        let mut rec = vec![o.id.clone(), o.left.to_string(), if o.right.is_finite() { o.right.to_string() } else { String::new() }];
        rec.extend(o.x.iter().map(f64::to_string));
        rec.extend(o.z.values().iter().map(f64::to_string));
        w.write_record(&rec).map_err(to_io)?;
    }
    w.flush().map_err(|e| CliError::io("<csv>", e))?;
    Ok(())
}

pub fn grid_json(grid: &[f64]) -> String {
    serde_json::to_string(&GridFile { grid: grid.to_vec() }).expect("plain numbers serialize")
}

/// Writes the CSV and its grid sidecar.
pub fn write_dataset(ds: &Dataset, csv_path: &Path, grid_path: Option<&Path>) -> Result<()> {
    let side = grid_path.map_or_else(|| sidecar_path(csv_path), Path::to_path_buf);
    let f = File::create(csv_path).map_err(|e| CliError::io(csv_path, e))?;
    write_dataset_to(ds, BufWriter::new(f)).map_err(|e| match e {
        CliError::Io { source, .. } => CliError::io(csv_path, source),
        other => other,
    })?;
    std::fs::write(&side, grid_json(&ds.grid) + "\n").map_err(|e| CliError::io(side, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fcox::kernel::uniform_grid;
    use proptest::prelude::*;

    const GRID: &str = r#"{"grid": [0, 0.5, 1]}"#;

    fn grid() -> Arc<[f64]> {
        parse_grid(GRID, "g").unwrap()
    }

    fn parse(text: &str) -> Result<Dataset> {
        parse_dataset(text.as_bytes(), grid(), "d.csv")
    }

    fn schema_line(r: Result<Dataset>) -> (usize, String) {
        match r {
            Err(CliError::Schema { line, msg, .. }) => (line, msg),
            other => panic!("expected a schema error, got {other:?}"),
        }
    }

    #[test]
    fn reads_a_small_file() {
        let ds = parse("id,L,R,x1,x2,z_0,z_1,z_2\na,0,1.5,1,0.2,0,1,2\nb,0.5,,0,0.7,1,1,1\n").unwrap();
        assert_eq!(ds.observations.len(), 2);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.observations[1].right, f64::INFINITY);
        assert_eq!(ds.observations[0].z.values(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn duplicate_id_names_the_id() {
        let (line, msg) = schema_line(parse("id,L,R,x1,z_0,z_1,z_2\na,0,1,1,0,0,0\na,1,2,1,0,0,0\n"));
        assert_eq!(line, 3);
        assert!(msg.contains("`a`"), "{msg}");
    }

    #[test]
    fn header_and_field_errors_carry_lines() {
        assert_eq!(schema_line(parse("id,L,R,x1,z_0,z_1,zz\na,0,1,1,0,0,0\n")).0, 1);
        assert_eq!(schema_line(parse("id,L,R,x1,z_0,z_1,z_2\na,0,1,1,0,0,0\nb,0,1,1,0,0\n")).0, 3);
        assert_eq!(schema_line(parse("id,L,R,x1,z_0,z_1,z_2\na,0,1,1,0,0,0\nb,0,x,1,0,0,0\n")).0, 3);
        assert_eq!(schema_line(parse("id,L,R,x1,z_0,z_1,z_2\na,2,1,1,0,0,0\n")).0, 2);
        assert_eq!(schema_line(parse("id,L,R,x1,z_0,z_1,z_2\na,0,,1,0,0,0\n")).0, 2);
        assert_eq!(schema_line(parse("id,L,R,x1,z_0,z_1,z_2\n")).0, 2);
        assert_eq!(schema_line(parse("id,L,R,z_0,z_1,z_2\na,0,1,0,0,0\n")).0, 1);
    }

    #[test]
    fn bad_grids_are_rejected() {
        assert!(parse_grid(r#"{"grid": [0, 0.6, 0.5, 1]}"#, "g").is_err());
        assert!(parse_grid(r#"{"grid": [0.1, 1]}"#, "g").is_err());
        assert!(parse_grid(r#"{"points": [0, 1]}"#, "g").is_err());
    }

    #[test]
    fn endpoints_are_canonicalized() {
        let ds = parse("id,L,R,x1,z_0,z_1,z_2\na,0.1000000000001,0.30000000000000004,1,0,0,0\n").unwrap();
        assert_eq!(ds.observations[0].left, 0.1);
        assert_eq!(ds.observations[0].right, 0.3);
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        let row = (1e-6f64..10.0, prop::option::of(0.01f64..5.0), prop::collection::vec(-1e3f64..1e3, 2), prop::collection::vec(-50f64..50.0, 5));
        prop::collection::vec(row, 1..8).prop_map(|rows| {
            let grid: Arc<[f64]> = uniform_grid(5).iter().map(|&s| canon(s)).collect::<Vec<_>>().into();
            let observations = rows
                .into_iter()
                .enumerate()
                .map(|(i, (l, w, x, z))| {
                    let left = canon(l);
                    let right = w.map_or(f64::INFINITY, |w| canon(left + w));
                    let right = if right > left { right } else { f64::INFINITY };
                    let z = FunctionalCurve::new(grid.clone(), z.into_iter().map(canon).collect()).unwrap();
                    Observation::new(format!("s{i}"), left, right, x.into_iter().map(canon).collect(), z).unwrap()
                })
                .collect();
            Dataset { observations, grid }
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(ds in arb_dataset()) {
            let mut buf = Vec::new();
            write_dataset_to(&ds, &mut buf).unwrap();
            let grid = parse_grid(&grid_json(&ds.grid), "g").unwrap();
            let back = parse_dataset(buf.as_slice(), grid, "d.csv").unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
