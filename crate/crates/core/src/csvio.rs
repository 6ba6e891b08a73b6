//! Shared CSV helpers. Number formatting is fixed so reruns are byte-identical.

use std::io::Write;
use std::path::Path;

use crate::Result;

/// Shortest representation that round-trips to the same f64.
pub fn fmt(x: f64) -> String {
    format!("{x:?}")
}

/// Writes `header` then `rows`; an optional comment line goes first.
pub fn write_table<W: Write>(
    w: W,
    comment: Option<&str>,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = w;
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(row.iter().map(|&x| fmt(x)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_table_file(
    path: &Path,
    comment: Option<&str>,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_table(f, comment, header, rows)
}

/// Reads a numeric CSV (comment lines starting with `#` are skipped) and
/// returns the header and rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| [l, "\n"])
        .collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| crate::Error::invalid(format!("bad number {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
