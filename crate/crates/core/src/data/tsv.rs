use std::io::Write;
use std::path::Path;

use super::{Example, Label};
use crate::error::{Error, Result};

/// Reads `premise \t hypothesis \t label` lines; no header, no quoting.
pub fn read_tsv(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let text = crate::error::read_text(path)?;
    parse_tsv(&text, path)
}

pub fn parse_tsv(text: &str, origin: &Path) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(out);
    }
    for (i, line) in body.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let label: Label = cols[2].parse().map_err(|m: String| Error::parse(origin, i + 1, m))?;
        if cols[0].trim().is_empty() || cols[1].trim().is_empty() {
            return Err(Error::parse(origin, i + 1, "empty premise or hypothesis"));
        }
        out.push(Example {
            id: i as u64,
            premise: cols[0].to_string(),
            hypothesis: cols[1].to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn write_tsv(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in examples {
        writeln!(f, "{}\t{}\t{}", e.premise, e.hypothesis, e.label.as_str())?;
    }
    f.flush()?;
    Ok(())
}
