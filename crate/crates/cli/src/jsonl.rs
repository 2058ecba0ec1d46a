//! Line-delimited JSON datasets: one `{"text", "symptoms", "figurative"}`
//! record per line.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use cotask_core::data::{Example, LabelSchema, METAPHOR, SARCASM};
use cotask_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub text: String,
    #[serde(default)]
    pub symptoms: Vec<String>,
    #[serde(default)]
    pub figurative: Vec<String>,
}

impl Record {
    /// Figurative names exclude `others`, which is implied by an empty list.
    pub fn from_example(ex: &Example, schema: &LabelSchema) -> Self {
        let figurative = [METAPHOR, SARCASM]
            .into_iter()
            .filter(|&i| ex.aux_labels[i])
            .map(|i| schema.aux_names[i].clone())
            .collect();
        Self {
            text: ex.text.clone(),
            symptoms: schema.primary_label_names(&ex.primary_labels),
            figurative,
        }
    }
}

/// Parses a dataset. Blank lines are skipped; line numbers are 1-based.
pub fn parse_jsonl(path: &Path, reader: impl BufRead, schema: &LabelSchema) -> CliResult<Vec<Example>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let (primary, aux) = schema.encode_labels(&rec.symptoms, &rec.figurative).map_err(|e| match e {
            CoreError::Schema(name) => CliError::UnknownLabel {
                path: path.to_path_buf(),
                line: line_no,
                name,
            },
            other => CliError::Core(other),
        })?;
        out.push(Example::new(rec.text, primary, aux));
    }
    Ok(out)
}

pub fn load_jsonl(path: &Path, schema: &LabelSchema) -> CliResult<Vec<Example>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_jsonl(path, BufReader::new(file), schema)
}

pub fn write_jsonl(mut w: impl Write, examples: &[Example], schema: &LabelSchema) -> std::io::Result<()> {
    for ex in examples {
        let line = serde_json::to_string(&Record::from_example(ex, schema)).map_err(std::io::Error::other)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_jsonl(path: &Path, examples: &[Example], schema: &LabelSchema) -> CliResult<()> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, examples, schema).map_err(|e| CliError::io(path, e))?;
    fs::write(path, buf).map_err(|e| CliError::io(path, e))
}
