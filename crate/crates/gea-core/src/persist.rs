//! Newline-delimited record files: one header object, then one record per line.
//!
//! Writes go through a temp file and a rename so partially written outputs
//! never shadow a good one.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{GeaError, Result};

pub fn write_jsonl<H, T, I>(path: &Path, header: &H, records: I) -> Result<()>
where
    H: Serialize,
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let mut buf = String::new();
    buf.push_str(&serde_json::to_string(header).map_err(io_invalid)?);
    buf.push('\n');
    for record in records {
        buf.push_str(&serde_json::to_string(&record).map_err(io_invalid)?);
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())
}

/// Write bytes via a sibling temp file plus rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> std::path::PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Read a header line plus record lines; parse failures carry the 1-based
/// line number.
pub fn read_jsonl<H, T>(path: &Path) -> Result<(H, Vec<T>)>
where
    H: DeserializeOwned,
    T: DeserializeOwned,
{
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let header_line = match lines.next() {
        Some(line) => line?,
        None => {
            return Err(GeaError::Parse {
                line: 1,
                message: "missing header line".to_string(),
            })
        }
    };
    let header: H = serde_json::from_str(&header_line).map_err(|e| GeaError::Parse {
        line: 1,
        message: e.to_string(),
    })?;

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| GeaError::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok((header, records))
}

fn io_invalid(e: serde_json::Error) -> GeaError {
    GeaError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
