//! Binary checkpoint container.
//!
//! Layout (all integers little-endian, strings as `u32` length + UTF-8):
//!
//! ```text
//! magic "RHGSCKPT" | version u32 | dtype width u8 | phase string
//! | step u64 | completed-phase bitmask u8 | config hash string | config text
//! | vocab: u32 count + words | entity vocab: u32 count + KG ids
//! | params: u32 count + (name, rows u32, cols u32, values)
//! | optimizer: u8 flag [+ step u64 + moments m then v, one tensor per param]
//! | rng: seed [u8; 32], stream u64, word position u128
//! | SHA-256 of everything above
//! ```
//!
//! Encoding is a pure function of the value, so a save→load→save cycle
//! reproduces the file byte for byte.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::{Adam, Tensor};
use crate::corpus::{EntityVocab, Vocab};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::training::config::TrainConfig;
use crate::training::model::{Model, Phase};

const MAGIC: &[u8; 8] = b"RHGSCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub step: u64,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub phase: Phase,
    pub step: u64,
    pub completed: u8,
    pub config: TrainConfig,
    pub vocab: Vec<String>,
    pub entity_ids: Vec<String>,
    pub params: Vec<(String, Tensor<S>)>,
    pub optimizer: Option<OptimizerState<S>>,
    pub rng: RngState,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("checkpoint section too large"));
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn tensor<S: Scalar>(&mut self, t: &Tensor<S>) {
        self.len(t.rows());
        self.len(t.cols());
        for &x in t.data() {
            x.write_le(&mut self.buf);
        }
    }
}

struct Reader<'b> {
    buf: &'b [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt(format!("truncated checkpoint at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| corrupt(format!("invalid UTF-8: {e}")))
    }
    fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.len()?;
        (0..n).map(|_| self.str()).collect()
    }
    fn tensor<S: Scalar>(&mut self) -> Result<Tensor<S>> {
        let (r, c) = (self.len()?, self.len()?);
        let w = S::WIDTH as usize;
        let bytes = self.take(r.checked_mul(c).and_then(|n| n.checked_mul(w)).ok_or_else(|| corrupt("tensor too large"))?)?;
        let data = bytes.chunks_exact(w).map(S::read_le).collect();
        Tensor::matrix(r, c, data)
    }
}

/// Scalar width recorded in a checkpoint file, without decoding the rest.
pub fn checkpoint_dtype(path: impl AsRef<Path>) -> Result<u8> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 13 || &bytes[..8] != MAGIC {
        return Err(corrupt(format!("{} is not a checkpoint", path.display())));
    }
    Ok(bytes[12])
}

impl<S: Scalar> Checkpoint<S> {
    pub fn capture(model: &Model<S>, phase: Phase, step: u64, adam: Option<&Adam<S>>, rng: &ChaCha8Rng) -> Self {
        Checkpoint {
            phase,
            step,
            completed: model.completed,
            config: model.config.clone(),
            vocab: model.vocab.words().to_vec(),
            entity_ids: model.entity_vocab.kg_ids().to_vec(),
            params: model
                .store
                .iter()
                .map(|(_, n, t)| (n.to_string(), t.clone()))
                .collect(),
            optimizer: adam.map(|a| {
                let (m, v) = a.moments();
                OptimizerState {
                    step: a.step_count(),
                    m: m.to_vec(),
                    v: v.to_vec(),
                }
            }),
            rng: RngState::capture(rng),
        }
    }

    /// Rebuilds the model from the stored config and vocabularies, then
    /// overwrites every parameter. Names and shapes must match exactly.
    pub fn restore(&self) -> Result<(Model<S>, Option<Adam<S>>, ChaCha8Rng)> {
        let vocab = Vocab::from_tokens(self.vocab.iter().cloned());
        let entities = EntityVocab::from_ids(self.entity_ids.iter().cloned());
        let mut model = Model::new(self.config.clone(), vocab, entities, None, None)?;
        if model.store.len() != self.params.len() {
            return Err(corrupt(format!(
                "checkpoint has {} parameters, model expects {}",
                self.params.len(),
                model.store.len()
            )));
        }
        let ids: Vec<_> = model.store.ids().collect();
        for (id, (name, value)) in ids.into_iter().zip(&self.params) {
            if model.store.name(id) != name {
                return Err(corrupt(format!("parameter {name} found where {} expected", model.store.name(id))));
            }
            let p = model.store.get_mut(id);
            if !p.same_shape(value) {
                return Err(corrupt(format!(
                    "parameter {name} has shape {:?}, model expects {:?}",
                    value.shape(),
                    p.shape()
                )));
            }
            *p = value.clone();
        }
        model.completed = self.completed;
        let adam = self.optimizer.as_ref().map(|o| {
            Adam::from_parts(self.config.adam(), o.step, o.m.clone(), o.v.clone())
        });
        Ok((model, adam, self.rng.restore()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u8(S::WIDTH);
        w.str(self.phase.as_str());
        w.u64(self.step);
        w.u8(self.completed);
        w.str(&self.config.hash());
        w.str(&self.config.to_text());
        for list in [&self.vocab, &self.entity_ids] {
            w.len(list.len());
            for s in list.iter() {
                w.str(s);
            }
        }
        w.len(self.params.len());
        for (name, t) in &self.params {
            w.str(name);
            w.tensor(t);
        }
        match &self.optimizer {
            None => w.u8(0),
            Some(o) => {
                w.u8(1);
                w.u64(o.step);
                w.len(o.m.len());
                for t in o.m.iter().chain(&o.v) {
                    w.tensor(t);
                }
            }
        }
        w.buf.extend_from_slice(&self.rng.seed);
        w.u64(self.rng.stream);
        w.buf.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        let digest = Sha256::digest(&w.buf);
        w.buf.extend_from_slice(&digest);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("missing checkpoint magic"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {version}")));
        }
        let width = r.u8()?;
        if width != S::WIDTH {
            return Err(corrupt(format!("checkpoint stores {width}-byte scalars, expected {}", S::WIDTH)));
        }
        let phase: Phase = r.str()?.parse()?;
        let step = r.u64()?;
        let completed = r.u8()?;
        let hash = r.str()?;
        let config = TrainConfig::parse(&r.str()?)?;
        if config.hash() != hash {
            return Err(corrupt("config hash does not match stored config"));
        }
        let vocab = r.strings()?;
        let entity_ids = r.strings()?;
        let n = r.len()?;
        let params = (0..n)
            .map(|_| Ok((r.str()?, r.tensor()?)))
            .collect::<Result<Vec<_>>>()?;
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let k = r.len()?;
                let m = (0..k).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
                let v = (0..k).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
                Some(OptimizerState { step, m, v })
            }
            f => return Err(corrupt(format!("bad optimizer flag {f}"))),
        };
        let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let rng = RngState {
            seed,
            stream: r.u64()?,
            word_pos: r.u128()?,
        };
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes after checkpoint body"));
        }
        Ok(Checkpoint {
            phase,
            step,
            completed,
            config,
            vocab,
            entity_ids,
            params,
            optimizer,
            rng,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

