//! Expression matrices as CSV: a `cell_id,<gene1>,<gene2>,…` header, then one
//! row per cell. Floats are written with Rust's shortest round-trip
//! formatting, so `read(write(m)) == m` bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use scdiff_core::ExpressionMatrix;

use crate::error::{CliError, Result};

pub const ID_COLUMN: &str = "cell_id";

/// Names may only use `[A-Za-z0-9_.-]`, so no quoting is ever needed.
pub fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-'))
}

fn parse_err(path: &Path, line: u64, column: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Parses a matrix; `path` only labels errors.
pub fn parse_matrix<R: Read>(reader: R, path: &Path) -> Result<ExpressionMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_err(path, e))?,
        None => return Err(parse_err(path, 1, 1, "missing header row")),
    };
    if header.get(0) != Some(ID_COLUMN) {
        return Err(parse_err(path, 1, 1, format!("first column must be `{ID_COLUMN}`")));
    }
    let mut genes = Vec::with_capacity(header.len() - 1);
    for (i, name) in header.iter().enumerate().skip(1) {
        if !valid_name(name) {
            return Err(parse_err(path, 1, i + 1, format!("invalid gene name `{name}`")));
        }
        genes.push(name.to_string());
    }
    if genes.is_empty() {
        return Err(parse_err(path, 1, 1, "no gene columns"));
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = &rec[0];
        if !valid_name(id) {
            return Err(parse_err(path, line, 1, format!("invalid cell id `{id}`")));
        }
        ids.push(id.to_string());
        for (i, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, i + 1, format!("not a number: `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, i + 1, format!("non-finite value `{field}`")));
            }
            values.push(v);
        }
    }
    if ids.is_empty() {
        return Err(parse_err(path, 2, 1, "no cell rows"));
    }
    Ok(ExpressionMatrix::new(ids.len(), values, genes, Some(ids))?)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => parse_err(
            path,
            line,
            (*len as usize).min(*expected_len as usize) + 1,
            format!("expected {expected_len} fields, found {len}"),
        ),
        _ => parse_err(path, line, 0, e.to_string()),
    }
}

pub fn read_matrix(path: &Path) -> Result<ExpressionMatrix> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_matrix(std::io::BufReader::new(f), path)
}

/// Reads a matrix that must hold no negative values.
pub fn read_raw_matrix(path: &Path) -> Result<ExpressionMatrix> {
    let m = read_matrix(path)?;
    if let Some(bad) = m.values().iter().position(|v| *v < 0.0) {
        let (row, col) = (bad / m.n_genes(), bad % m.n_genes());
        return Err(scdiff_core::Error::NegativeValue {
            row,
            col,
            value: m.values()[bad],
        }
        .into());
    }
    Ok(m)
}

/// Writes `m`; cells without ids are labelled `cell_<row>`.
pub fn write_matrix_to<W: Write>(m: &ExpressionMatrix, mut w: W) -> std::io::Result<()> {
    write!(w, "{ID_COLUMN}")?;
    for g in m.gene_names() {
        write!(w, ",{g}")?;
    }
    writeln!(w)?;
    for i in 0..m.n_cells() {
        match m.cell_ids() {
            Some(ids) => write!(w, "{}", ids[i])?,
            None => write!(w, "cell_{i}")?,
        }
        for v in m.row(i) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn write_matrix(path: &Path, m: &ExpressionMatrix) -> Result<()> {
    if let Some(bad) = m.gene_names().iter().find(|g| !valid_name(g)) {
        return Err(CliError::Usage(format!("gene name `{bad}` cannot be written")));
    }
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_matrix_to(m, BufWriter::new(f)).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ExpressionMatrix> {
        parse_matrix(s.as_bytes(), Path::new("t.csv"))
    }

    #[test]
    fn two_by_three() {
        let m = parse("cell_id,a,b,c\nx,1,0,2.5\ny,0,3e-2,4\n").unwrap();
        assert_eq!((m.n_cells(), m.n_genes()), (2, 3));
        assert_eq!(m.gene_names(), ["a", "b", "c"]);
        assert_eq!(m.row(1), [0.0, 0.03, 4.0]);
        assert_eq!(m.cell_ids().unwrap(), ["x", "y"]);
    }

    #[test]
    fn duplicate_gene() {
        let e = parse("cell_id,a,a\nx,1,2\n").unwrap_err();
        assert!(matches!(e, CliError::Core(scdiff_core::Error::DuplicateGene(ref g)) if g == "a"));
    }

    #[test]
    fn error_locations() {
        match parse("cell_id,a,b\nx,1,2\ny,1,zz\n").unwrap_err() {
            CliError::Parse { line, column, .. } => assert_eq!((line, column), (3, 3)),
            e => panic!("{e}"),
        }
        assert!(matches!(parse("cell_id,a\nx,1,2\n"), Err(CliError::Parse { line: 2, .. })));
        assert!(parse("gene,a\nx,1\n").is_err());
        assert!(parse("cell_id,a b\nx,1\n").is_err());
        assert!(parse("cell_id,a\n").is_err());
        assert!(parse("").is_err());
        assert!(parse("cell_id,a\nx,NaN\n").is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let vals = vec![0.1 + 0.2, 1e-300, -3.5, 123456789.123456789, 5e-324, 0.0];
        let names = vec!["g.1".to_string(), "g-2".to_string(), "G_3".to_string()];
        let m = ExpressionMatrix::new(2, vals, names, None).unwrap();
        let mut buf = Vec::new();
        write_matrix_to(&m, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.values(), m.values());
        assert_eq!(back.gene_names(), m.gene_names());
    }
}
