//! Line-delimited JSON persistence for question cases.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use xcheck_core::QuestionCase;

use crate::error::{IoError, Result};

const REQUIRED_FIELDS: [&str; 2] = ["id", "question"];

/// Parses one record; `line` is 1-based and only used in errors.
pub fn parse_case(text: &str, line: usize) -> Result<QuestionCase> {
    let value: Value = serde_json::from_str(text).map_err(|e| IoError::Parse {
        line,
        message: e.to_string(),
    })?;
    let Value::Object(map) = &value else {
        return Err(IoError::Parse {
            line,
            message: "record is not a JSON object".to_string(),
        });
    };
    if let Some(field) = REQUIRED_FIELDS.iter().find(|f| !map.contains_key(**f)) {
        return Err(IoError::MissingField {
            line,
            field: field.to_string(),
        });
    }
    let case: QuestionCase = serde_json::from_value(value).map_err(|e| IoError::Parse {
        line,
        message: e.to_string(),
    })?;
    case.validate().map_err(|e| IoError::Parse {
        line,
        message: e.to_string(),
    })?;
    Ok(case)
}

/// Reads cases from any reader. Blank lines are skipped.
pub fn read_cases(reader: impl BufRead) -> Result<Vec<QuestionCase>> {
    let mut cases = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let text = line.map_err(|e| IoError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        cases.push(parse_case(&text, i + 1)?);
    }
    Ok(cases)
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<QuestionCase>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| IoError::file(path, e))?;
    read_cases(BufReader::new(file))
}

/// One compact JSON document per item, newline-terminated.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| IoError::Config(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_cases(cases: &[QuestionCase], mut writer: impl Write) -> Result<()> {
    let bytes = to_jsonl(cases)?;
    writer
        .write_all(&bytes)
        .map_err(|e| IoError::file("<writer>", e))
}

pub fn store_cases(cases: &[QuestionCase], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &to_jsonl(cases)?)
}

pub fn store_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &to_jsonl(items)?)
}

/// Writes to a temporary file in the target directory, then renames it
/// over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::file(dir, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::file(tmp.path().to_path_buf(), e))?;
    tmp.as_file().sync_all().map_err(|e| IoError::file(path, e))?;
    tmp.persist(path).map_err(|e| IoError::file(path, e.error))?;
    Ok(())
}
