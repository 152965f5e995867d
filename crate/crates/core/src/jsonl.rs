//! Line-delimited JSON helpers shared by every file-backed record type.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parses records from a reader, skipping blank lines. Errors carry the
/// 1-based line number.
pub fn read_from<T: DeserializeOwned>(reader: impl BufRead, context: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(context, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{context}:{}", idx + 1), e))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_path<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(BufReader::new(file), &path.display().to_string())
}

pub fn write_to<T: Serialize>(mut writer: impl Write, records: &[T]) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_path<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_to(BufWriter::new(file), records).map_err(|e| Error::io(path, e))
}

pub fn to_string<T: Serialize>(records: &[T]) -> String {
    let mut buf = Vec::new();
    write_to(&mut buf, records).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
