use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::autodiff::Tensor;
use crate::corpus::{EntityVocab, Vocab};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Contents of a text embedding file: a `<count> <dim>` header, then
/// `<key> <v1> ... <vdim>` per line.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    keys: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl EmbeddingFile {
    /// Duplicate keys keep the last vector and log a warning.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.display().to_string(),
            line,
            msg,
        };
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| perr(1, "missing `<count> <dim>` header".into()))?
            .map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (count, dim) = match fields.as_slice() {
            [c, d] => (
                c.parse::<usize>().map_err(|e| perr(1, format!("bad count: {e}")))?,
                d.parse::<usize>().map_err(|e| perr(1, format!("bad dim: {e}")))?,
            ),
            _ => return Err(perr(1, format!("expected `<count> <dim>`, got {header:?}"))),
        };
        let mut out = EmbeddingFile {
            dim,
            keys: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        };
        for (k, line) in lines.enumerate() {
            let line_no = k + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap().to_string();
            let values = parts
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| perr(line_no, format!("bad value: {e}")))?;
            if values.len() != dim {
                return Err(perr(
                    line_no,
                    format!("expected {dim} values for {key}, found {}", values.len()),
                ));
            }
            if let Some(&i) = out.index.get(&key) {
                log::warn!("{}:{line_no}: duplicate key {key}, keeping the last vector", path.display());
                out.vectors[i] = values;
            } else {
                out.index.insert(key.clone(), out.keys.len());
                out.keys.push(key);
                out.vectors.push(values);
            }
        }
        if out.keys.len() != count {
            log::warn!(
                "{}: header announces {count} entries, found {}",
                path.display(),
                out.keys.len()
            );
        }
        Ok(out)
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.index.get(key).map(|&i| self.vectors[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }
}

pub fn write_embedding_file(path: impl AsRef<Path>, dim: usize, rows: &[(String, Vec<f64>)]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {}", rows.len(), dim).map_err(io)?;
    for (key, v) in rows {
        write!(w, "{key}").map_err(io)?;
        for x in v {
            write!(w, " {x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub(crate) fn uniform_matrix<S: Scalar>(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Tensor<S> {
    Tensor::from_fn(rows, cols, |_, _| S::from_f64_lossy(rng.gen_range(-bound..bound)))
}

/// Entity-level embedding table for the linked ids of a corpus.
///
/// The vocabulary keeps only ids present in the file, so every unlinked or
/// missing entity resolves to the UNK row. The UNK row is read from a
/// `<unk>` key when the file has one, otherwise drawn uniformly from
/// [-0.1, 0.1].
pub fn load_entity_embeddings<'a, S: Scalar>(
    path: impl AsRef<Path>,
    corpus_ids: impl IntoIterator<Item = &'a str>,
    rng: &mut impl Rng,
) -> Result<(EntityVocab, Tensor<S>)> {
    let file = EmbeddingFile::read(path)?;
    let vocab = EntityVocab::from_ids(
        corpus_ids
            .into_iter()
            .filter(|id| file.get(id).is_some())
            .map(str::to_string),
    );
    let mut table = uniform_matrix::<S>(rng, vocab.len(), file.dim, 0.1);
    if let Some(unk) = file.get("<unk>") {
        fill_row(&mut table, 0, unk);
    }
    for (i, id) in vocab.kg_ids().iter().enumerate() {
        fill_row(&mut table, i + 1, file.get(id).expect("filtered above"));
    }
    Ok((vocab, table))
}

/// Word embedding rows for `vocab`; tokens missing from the file keep a
/// uniform [-0.1, 0.1] initialization.
pub fn load_word_embeddings<S: Scalar>(
    path: impl AsRef<Path>,
    vocab: &Vocab,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<Tensor<S>> {
    let file = EmbeddingFile::read(path)?;
    if file.dim != dim {
        return Err(Error::Config(format!(
            "word embedding file has dim {}, model expects {dim}",
            file.dim
        )));
    }
    let mut table = uniform_matrix::<S>(rng, vocab.len(), dim, 0.1);
    let mut found = 0;
    for id in 0..vocab.len() {
        if let Some(v) = file.get(vocab.token(id)) {
            fill_row(&mut table, id, v);
            found += 1;
        }
    }
    log::info!("word embeddings: {found}/{} vocabulary rows from file", vocab.len());
    Ok(table)
}

fn fill_row<S: Scalar>(t: &mut Tensor<S>, row: usize, v: &[f64]) {
    for (c, &x) in v.iter().enumerate() {
        t.set(row, c, S::from_f64_lossy(x));
    }
}
