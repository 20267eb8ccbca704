//! JSONL logit files.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id":"q1","k":4,"plm_logits":[...],"polm_logits":[...],"label":2,"split":"test"}
//! ```
//!
//! `label` and `split` are optional. Blank lines and lines starting with `#`
//! are skipped. Unknown keys are ignored. Numbers are written in their
//! shortest round-trip form, so write → read → write is byte-stable.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{CalibError, Result};
use crate::prob::{Dataset, LogitRecord};

pub fn read_logits_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_logits_jsonl(BufReader::new(file), &path.display().to_string())
}

/// Parses JSONL from any reader. `source` names the input in errors.
/// Any malformed line rejects the whole input.
pub fn parse_logits_jsonl(reader: impl BufRead, source: &str) -> Result<Dataset> {
    let err = |line: usize, msg: String| CalibError::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    let mut k = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec: LogitRecord =
            serde_json::from_str(trimmed).map_err(|e| err(lineno, e.to_string()))?;
        rec.validate().map_err(|e| err(lineno, e.to_string()))?;
        match k {
            None => k = Some(rec.k),
            Some(k) if k != rec.k => {
                return Err(err(
                    lineno,
                    format!("k = {} differs from earlier k = {k}", rec.k),
                ));
            }
            Some(_) => {}
        }
        if !ids.insert(rec.id.clone()) {
            return Err(err(lineno, format!("duplicate id `{}`", rec.id)));
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(CalibError::EmptyDataset);
    }
    Dataset::new(records)
}

pub fn write_logits_jsonl(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_records(&mut out, ds)?;
    out.flush()?;
    Ok(())
}

pub fn write_records(out: &mut impl Write, ds: &Dataset) -> Result<()> {
    for rec in ds {
        serde_json::to_writer(&mut *out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
