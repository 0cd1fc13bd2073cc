use rand::Rng;

use crate::autodiff::{Axis, ParamId, ParamStore, Tape, Tensor, Var};
use crate::corpus::{uniform_matrix, PAD};
use crate::encoder::{glorot, BiRnn, GruCell, Linear};
use crate::error::{Error, Result};
use crate::generator::GeneratorInput;
use crate::scalar::Scalar;

/// Added inside the log of the target probability so a saturated `p_gen`
/// cannot produce `log 0`.
const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorDims {
    pub word_emb: usize,
    /// Input BiRNN hidden size per direction.
    pub enc_hidden: usize,
    /// Mention BiRNN hidden size per direction.
    pub mention_hidden: usize,
    pub dec_hidden: usize,
    pub attn_dim: usize,
    pub max_source: usize,
    pub max_steps: usize,
}

impl Default for GeneratorDims {
    fn default() -> Self {
        GeneratorDims {
            word_emb: 128,
            enc_hidden: 256,
            mention_hidden: 192,
            dec_hidden: 512,
            attn_dim: 512,
            max_source: 150,
            max_steps: 100,
        }
    }
}

/// Entity-conditioned attention with a coverage feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attention {
    pub w_dec: Linear,
    pub w_tok: Linear,
    pub w_ent: Linear,
    /// `1×A`, scales the coverage of each source position.
    pub w_cov: ParamId,
    /// `1×A`.
    pub bias: ParamId,
    /// `A×1`.
    pub v: ParamId,
}

/// Scalar gate choosing between generating and copying.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgenGate {
    pub w_dec: Linear,
    pub w_ctx: Linear,
    pub w_ent: Linear,
    pub w_x: Linear,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorModel {
    pub dims: GeneratorDims,
    pub vocab_size: usize,
    pub word_emb: ParamId,
    pub input_rnn: BiRnn,
    pub mention_rnn: BiRnn,
    pub init: Linear,
    pub decoder: GruCell,
    pub attention: Attention,
    pub pgen: PgenGate,
    pub out: Linear,
}

/// Encoder-side quantities reused by every decoding step.
#[derive(Debug, Clone)]
pub struct EncodedInput {
    /// `h_i^T = [←h_i, →h_i]`, T×2H.
    pub tokens: Var,
    /// `d_rep = [→h_m, ←h_1]`, 1×2H.
    pub d_rep: Var,
    /// Mean word-level encoding of the salient entities.
    pub h_e: Var,
    /// Initial decoder state.
    pub h0: Var,
    tok_feat: Var,
    ent_feat: Var,
    pgen_ent: Var,
    pub source_ext: Vec<usize>,
    pub extended_size: usize,
}

impl EncodedInput {
    pub fn source_len(&self) -> usize {
        self.source_ext.len()
    }
}

/// Result of one decoding step.
#[derive(Debug, Clone, Copy)]
pub struct DecoderStep {
    pub h: Var,
    /// a_t, 1×T.
    pub attention: Var,
    pub context: Var,
    /// p_gen, 1×1.
    pub p_gen: Var,
    /// p_vocab over the fixed vocabulary, 1×V.
    pub p_vocab: Var,
    /// Final distribution over the extended vocabulary.
    pub dist: Var,
    /// Σ_i min(a_{t,i}, coverage_i).
    pub cov_loss: Var,
    /// Coverage after this step.
    pub coverage: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorLoss {
    pub total: Var,
    pub nll: Var,
    pub coverage: Var,
}

impl GeneratorModel {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        dims: GeneratorDims,
        vocab_size: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let d = dims;
        if [d.word_emb, d.enc_hidden, d.mention_hidden, d.dec_hidden, d.attn_dim, d.max_source, d.max_steps]
            .contains(&0)
        {
            return Err(Error::Config(format!("generator dims must be positive: {d:?}")));
        }
        let p = |s: &str| format!("{prefix}.{s}");
        let enc2 = 2 * d.enc_hidden;
        let men2 = 2 * d.mention_hidden;
        let word_emb = store.add(p("word_emb"), uniform_matrix(rng, vocab_size, d.word_emb, 0.1))?;
        let input_rnn = BiRnn::new(store, &p("input_rnn"), d.word_emb, d.enc_hidden, rng)?;
        let mention_rnn = BiRnn::new(store, &p("mention_rnn"), d.word_emb, d.mention_hidden, rng)?;
        let init = Linear::new(store, &p("init"), enc2, d.dec_hidden, true, rng)?;
        let decoder = GruCell::new(store, &p("decoder"), d.word_emb, d.dec_hidden, rng)?;
        let attention = Attention {
            w_dec: Linear::new(store, &p("attn.dec"), d.dec_hidden, d.attn_dim, false, rng)?,
            w_tok: Linear::new(store, &p("attn.tok"), enc2, d.attn_dim, false, rng)?,
            w_ent: Linear::new(store, &p("attn.ent"), men2, d.attn_dim, false, rng)?,
            w_cov: store.add(p("attn.cov"), glorot(rng, 1, d.attn_dim))?,
            bias: store.add(p("attn.b"), Tensor::zeros(1, d.attn_dim))?,
            v: store.add(p("attn.v"), glorot(rng, d.attn_dim, 1))?,
        };
        let pgen = PgenGate {
            w_dec: Linear::new(store, &p("pgen.dec"), d.dec_hidden, 1, true, rng)?,
            w_ctx: Linear::new(store, &p("pgen.ctx"), enc2, 1, false, rng)?,
            w_ent: Linear::new(store, &p("pgen.ent"), men2, 1, false, rng)?,
            w_x: Linear::new(store, &p("pgen.x"), d.word_emb, 1, false, rng)?,
        };
        let out = Linear::new(store, &p("out"), d.dec_hidden + enc2, vocab_size, true, rng)?;
        Ok(GeneratorModel {
            dims,
            vocab_size,
            word_emb,
            input_rnn,
            mention_rnn,
            init,
            decoder,
            attention,
            pgen,
            out,
        })
    }

    /// `h^E`: mean of the salient entities' word-level encodings; a zero
    /// row (with a warning) when no entity is selected.
    pub fn encode_entity_set<S: Scalar>(&self, tape: &mut Tape<'_, S>, mentions: &[Vec<usize>]) -> Result<Var> {
        if mentions.is_empty() {
            log::warn!("no salient entities; entity encoding is zero");
            return Ok(tape.constant(Tensor::zeros(1, 2 * self.dims.mention_hidden)));
        }
        let table = tape.param(self.word_emb);
        let fin = self.mention_rnn.run_batch(tape, table, mentions, PAD)?;
        let e_w = tape.concat_cols(&[fin.fwd_last, fin.bwd_first])?;
        Ok(tape.mean_rows(e_w))
    }

    pub fn encode_input<S: Scalar>(&self, tape: &mut Tape<'_, S>, input: &GeneratorInput) -> Result<EncodedInput> {
        if input.source_ids.is_empty() {
            return Err(Error::Invalid("generator input is empty".into()));
        }
        if input.vocab_size != self.vocab_size {
            return Err(Error::Config(format!(
                "input built for vocabulary of {} words, model has {}",
                input.vocab_size, self.vocab_size
            )));
        }
        let table = tape.param(self.word_emb);
        let x = tape.gather_rows(table, &input.source_ids)?;
        let st = self.input_rnn.run_sequence(tape, x)?;
        let t_len = input.source_ids.len();
        let tokens = tape.concat_cols(&[st.bwd, st.fwd])?;
        let fwd_last = tape.slice_rows(st.fwd, t_len - 1, 1)?;
        let bwd_first = tape.slice_rows(st.bwd, 0, 1)?;
        let d_rep = tape.concat_cols(&[fwd_last, bwd_first])?;
        let h0 = self.init.forward(tape, d_rep)?;
        let h_e = self.encode_entity_set(tape, &input.entity_mentions)?;

        let tok_feat = self.attention.w_tok.forward(tape, tokens)?;
        let ent = self.attention.w_ent.forward(tape, h_e)?;
        let bias = tape.param(self.attention.bias);
        let ent_feat = tape.add(ent, bias)?;
        let pgen_ent = self.pgen.w_ent.forward(tape, h_e)?;
        Ok(EncodedInput {
            tokens,
            d_rep,
            h_e,
            h0,
            tok_feat,
            ent_feat,
            pgen_ent,
            source_ext: input.source_ext.clone(),
            extended_size: input.extended_size(),
        })
    }

    /// Zero coverage row for a fresh decode.
    pub fn initial_coverage<S: Scalar>(&self, tape: &mut Tape<'_, S>, enc: &EncodedInput) -> Var {
        tape.constant(Tensor::zeros(1, enc.source_len()))
    }

    /// One step: feeds `input_token` (fixed-vocabulary id) into the decoder,
    /// attends over the source and mixes generation and copying. A given
    /// `p_gen_override` replaces the learned gate.
    pub fn decode_step<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        enc: &EncodedInput,
        h_prev: Var,
        input_token: usize,
        coverage: Var,
        p_gen_override: Option<f64>,
    ) -> Result<DecoderStep> {
        let table = tape.param(self.word_emb);
        let x = tape.gather_rows(table, &[input_token])?;
        let gx = self.decoder.project_input(tape, x)?;
        let h = self.decoder.step(tape, gx, h_prev)?;

        // α_{t,i} = vᵀ tanh(W_d h_t + W_T h_i + W_E h^E + w_cov c_i + b)
        let dec = self.attention.w_dec.forward(tape, h)?;
        let query = tape.add(dec, enc.ent_feat)?;
        let feat = tape.add_row(enc.tok_feat, query)?;
        let cov_col = tape.transpose(coverage);
        let w_cov = tape.param(self.attention.w_cov);
        let cov_feat = tape.matmul(cov_col, w_cov)?;
        let feat = tape.add(feat, cov_feat)?;
        let act = tape.tanh(feat);
        let v = tape.param(self.attention.v);
        let scores = tape.matmul(act, v)?;
        let scores = tape.transpose(scores);
        let attention = tape.softmax(scores, Axis::Row)?;
        let context = tape.matmul(attention, enc.tokens)?;

        let hc = tape.concat_cols(&[h, context])?;
        let logits = self.out.forward(tape, hc)?;
        let p_vocab = tape.softmax(logits, Axis::Row)?;

        let p_gen = match p_gen_override {
            Some(p) => tape.constant(Tensor::scalar(S::from_f64_lossy(p))),
            None => {
                let a = self.pgen.w_dec.forward(tape, h)?;
                let b = self.pgen.w_ctx.forward(tape, context)?;
                let c = self.pgen.w_x.forward(tape, x)?;
                let ab = tape.add(a, b)?;
                let abc = tape.add(ab, c)?;
                let pre = tape.add(abc, enc.pgen_ent)?;
                tape.sigmoid(pre)
            }
        };

        let extra = enc.extended_size - self.vocab_size;
        let vocab_ext = if extra > 0 {
            let pad = tape.constant(Tensor::zeros(1, extra));
            tape.concat_cols(&[p_vocab, pad])?
        } else {
            p_vocab
        };
        let copy = tape.scatter_cols(attention, &enc.source_ext, enc.extended_size)?;
        let gen_part = tape.mul_scalar(vocab_ext, p_gen)?;
        let keep = tape.one_minus(p_gen);
        let copy_part = tape.mul_scalar(copy, keep)?;
        let dist = tape.add(gen_part, copy_part)?;

        let overlap = tape.minimum(attention, coverage)?;
        let cov_loss = tape.sum(overlap);
        let coverage_next = tape.add(coverage, attention)?;
        Ok(DecoderStep {
            h,
            attention,
            context,
            p_gen,
            p_vocab,
            dist,
            cov_loss,
            coverage: coverage_next,
        })
    }

    /// Teacher-forced loss: mean over steps of `−log p(w*_t) + λ_cov cov_t`.
    /// `targets` are extended ids ending with STOP.
    pub fn loss<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        input: &GeneratorInput,
        targets: &[usize],
        lambda_cov: f64,
    ) -> Result<GeneratorLoss> {
        if targets.is_empty() {
            return Err(Error::Invalid("generator loss needs at least one target".into()));
        }
        let enc = self.encode_input(tape, input)?;
        let mut h = enc.h0;
        let mut coverage = self.initial_coverage(tape, &enc);
        let mut prev = crate::corpus::START;
        let mut nll_terms = Vec::with_capacity(targets.len());
        let mut cov_terms = Vec::with_capacity(targets.len());
        for &target in targets {
            let step = self.decode_step(tape, &enc, h, prev, coverage, None)?;
            let p = tape.pick(step.dist, 0, target)?;
            let p = tape.affine(p, S::one(), S::from_f64_lossy(LOG_EPS));
            let lp = tape.log(p)?;
            nll_terms.push(lp);
            cov_terms.push(step.cov_loss);
            h = step.h;
            coverage = step.coverage;
            prev = input.input_id(target);
        }
        let steps = S::from_usize(targets.len()).unwrap();
        let nll_row = tape.concat_cols(&nll_terms)?;
        let nll_sum = tape.sum(nll_row);
        let nll = tape.scale(nll_sum, -S::one() / steps);
        let cov_row = tape.concat_cols(&cov_terms)?;
        let cov_sum = tape.sum(cov_row);
        let coverage = tape.scale(cov_sum, S::one() / steps);
        let weighted = tape.scale(coverage, S::from_f64_lossy(lambda_cov));
        let total = tape.add(nll, weighted)?;
        Ok(GeneratorLoss { total, nll, coverage })
    }
}
