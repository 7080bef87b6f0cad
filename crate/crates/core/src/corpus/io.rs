use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::graph::DocumentGraph;
use super::schema::Schema;
use crate::error::{Error, Result};

/// Parses a line-delimited corpus: one JSON document object per line. Blank
/// lines are skipped.
pub fn parse_corpus<R: BufRead>(reader: R, schema: &Schema) -> Result<Vec<DocumentGraph>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: DocumentGraph = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        doc.validate(schema)?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_corpus(path: impl AsRef<Path>, schema: &Schema) -> Result<Vec<DocumentGraph>> {
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path, e))?;
    parse_corpus(BufReader::new(file), schema)
}

/// Canonical serialization: one compact JSON object per line, fields in
/// declaration order, trailing newline after every document.
pub fn write_corpus<W: Write>(mut out: W, corpus: &[DocumentGraph]) -> std::io::Result<()> {
    for doc in corpus {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn corpus_to_string(corpus: &[DocumentGraph]) -> String {
    let mut buf = Vec::new();
    write_corpus(&mut buf, corpus).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn save_corpus(path: impl AsRef<Path>, corpus: &[DocumentGraph]) -> Result<()> {
    let file = File::create(path.as_ref()).map_err(|e| Error::io(&path, e))?;
    write_corpus(BufWriter::new(file), corpus).map_err(|e| Error::io(&path, e))
}
