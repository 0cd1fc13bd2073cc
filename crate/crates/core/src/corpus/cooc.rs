use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Knowledge-base co-occurrence counts keyed by unordered KG id pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CooccurrenceTable {
    counts: HashMap<(String, String), u64>,
}

fn key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl CooccurrenceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: &str, b: &str, count: u64) {
        self.counts.insert(key(a, b), count);
    }

    pub fn get(&self, a: &str, b: &str) -> u64 {
        self.counts.get(&key(a, b)).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Reads `a<TAB>b<TAB>count` lines; a repeated pair keeps the last count.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = Self::new();
        for (k, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse {
                path: path.display().to_string(),
                line: k + 1,
                msg,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [a, b, c] = fields.as_slice() else {
                return Err(perr(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            let count = c
                .trim()
                .parse::<u64>()
                .map_err(|e| perr(format!("bad count {c:?}: {e}")))?;
            table.insert(a, b, count);
        }
        Ok(table)
    }

    /// Writes pairs in sorted order.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut entries: Vec<_> = self.counts.iter().collect();
        entries.sort();
        for ((a, b), c) in entries {
            writeln!(w, "{a}\t{b}\t{c}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
