use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::corpus::{AnnotatedDocument, Truncation};
use crate::error::{Error, Result};

/// Streams validated, truncated documents from a line-delimited JSON file.
pub struct CorpusReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    truncation: Truncation,
}

pub fn load_corpus(path: impl AsRef<Path>, truncation: Truncation) -> Result<CorpusReader> {
    let path = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    Ok(CorpusReader {
        path,
        lines: BufReader::new(file).lines(),
        line_no: 0,
        truncation,
    })
}

/// Reads a whole corpus into memory.
pub fn read_corpus(path: impl AsRef<Path>, truncation: Truncation) -> Result<Vec<AnnotatedDocument>> {
    load_corpus(path, truncation)?.collect()
}

impl Iterator for CorpusReader {
    type Item = Result<AnnotatedDocument>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<AnnotatedDocument>(&line).map_err(|e| Error::Parse {
                path: self.path.display().to_string(),
                line: self.line_no,
                msg: e.to_string(),
            });
            return Some(parsed.and_then(|mut doc| {
                doc.validate()?;
                doc.truncate(self.truncation);
                Ok(doc)
            }));
        }
    }
}

pub fn write_corpus<'a>(
    path: impl AsRef<Path>,
    docs: impl IntoIterator<Item = &'a AnnotatedDocument>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for doc in docs {
        let line = serde_json::to_string(doc).map_err(|e| Error::Invalid(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let f = write_tmp("");
        assert_eq!(load_corpus(f.path(), Truncation::default()).unwrap().count(), 0);
    }

    #[test]
    fn malformed_record_reports_line() {
        let good = r#"{"id":"a","sentences":[["x"]],"entities":[],"summary":[["x"]]}"#;
        let f = write_tmp(&format!("{good}\n\n{{not json\n"));
        let results: Vec<_> = load_corpus(f.path(), Truncation::default()).unwrap().collect();
        assert!(results[0].is_ok());
        match &results[1] {
            Err(Error::Parse { line, .. }) => assert_eq!(*line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn span_violation_is_validation_error() {
        let rec = r#"{"id":"a","sentences":[["x","y"]],"entities":[{"name":"E","kg_id":null,"mentions":[{"sent":0,"start":1,"end":0,"text":"y"}]}],"summary":[["x"]]}"#;
        let f = write_tmp(rec);
        let r: Vec<_> = load_corpus(f.path(), Truncation::default()).unwrap().collect();
        assert!(matches!(r[0], Err(Error::Validation { .. })));
    }

    #[test]
    fn write_then_read_round_trips() {
        let rec = r#"{"id":"a","sentences":[["x","y"]],"entities":[{"name":"E","kg_id":"Q1","mentions":[{"sent":0,"start":1,"end":2,"text":"y"}]}],"summary":[["y"]],"split":"dev"}"#;
        let f = write_tmp(rec);
        let docs = read_corpus(f.path(), Truncation::default()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_corpus(out.path(), &docs).unwrap();
        let again = read_corpus(out.path(), Truncation::default()).unwrap();
        assert_eq!(docs, again);
        assert_eq!(std::fs::read_to_string(out.path()).unwrap().trim(), rec);
    }
}
