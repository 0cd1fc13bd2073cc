use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// Glorot-uniform `rows×cols` matrix.
pub fn glorot<S: Scalar>(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor<S> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| S::from_f64_lossy(rng.gen_range(-bound..bound)))
}

/// `y = x W + b`, with `W: in×out` and `b: 1×out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = store.add(format!("{name}.w"), glorot(rng, input, output))?;
        let b = if bias {
            Some(store.add(format!("{name}.b"), Tensor::zeros(1, output))?)
        } else {
            None
        };
        Ok(Linear { w, b, input, output })
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<'_, S>, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let y = tape.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = tape.param(b);
                tape.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Single-layer GRU cell with fused gate matrices, gate order `[z, r, n]`:
///
/// ```text
/// z = σ(x Wz + h Uz + bz)     r = σ(x Wr + h Ur + br)
/// n = tanh(x Wn + bn + r ⊙ (h Un))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let wx = store.add(format!("{name}.wx"), glorot(rng, input, 3 * hidden))?;
        let wh = store.add(format!("{name}.wh"), glorot(rng, hidden, 3 * hidden))?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(1, 3 * hidden))?;
        Ok(GruCell {
            wx,
            wh,
            b,
            input,
            hidden,
        })
    }

    /// Input half of every gate, `x Wx + b`, for any number of rows.
    pub fn project_input<S: Scalar>(&self, tape: &mut Tape<'_, S>, x: Var) -> Result<Var> {
        let wx = tape.param(self.wx);
        let b = tape.param(self.b);
        let gx = tape.matmul(x, wx)?;
        tape.add_row(gx, b)
    }

    /// One step from a projected input `gx` (B×3H) and state `h` (B×H).
    pub fn step<S: Scalar>(&self, tape: &mut Tape<'_, S>, gx: Var, h: Var) -> Result<Var> {
        let hd = self.hidden;
        let wh = tape.param(self.wh);
        let gh = tape.matmul(h, wh)?;
        let gx_zr = tape.slice_cols(gx, 0, 2 * hd)?;
        let gh_zr = tape.slice_cols(gh, 0, 2 * hd)?;
        let pre = tape.add(gx_zr, gh_zr)?;
        let zr = tape.sigmoid(pre);
        let z = tape.slice_cols(zr, 0, hd)?;
        let r = tape.slice_cols(zr, hd, hd)?;
        let gx_n = tape.slice_cols(gx, 2 * hd, hd)?;
        let gh_n = tape.slice_cols(gh, 2 * hd, hd)?;
        let rg = tape.mul(r, gh_n)?;
        let n_pre = tape.add(gx_n, rg)?;
        let n = tape.tanh(n_pre);
        let diff = tape.sub(h, n)?;
        let zd = tape.mul(z, diff)?;
        tape.add(n, zd)
    }

    /// Runs over the rows of `inputs` (T×in) from a zero state; returns the
    /// state after each step stacked as T×H.
    pub fn run<S: Scalar>(&self, tape: &mut Tape<'_, S>, inputs: Var) -> Result<Var> {
        let t_len = tape.shape(inputs).0;
        let gx = self.project_input(tape, inputs)?;
        let mut h = tape.constant(Tensor::zeros(1, self.hidden));
        let mut states = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let g = tape.slice_rows(gx, t, 1)?;
            h = self.step(tape, g, h)?;
            states.push(h);
        }
        tape.concat_rows(&states)
    }
}

/// Forward and backward GRUs over the same input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiRnn {
    pub fwd: GruCell,
    pub bwd: GruCell,
}

/// Per-position states of a bidirectional pass over one sequence.
#[derive(Debug, Clone, Copy)]
pub struct BiStates {
    /// `→h_1..→h_T`, T×H.
    pub fwd: Var,
    /// `←h_1..←h_T`, T×H, row `i` aligned with input position `i`.
    pub bwd: Var,
}

/// Boundary states of a batched bidirectional pass.
#[derive(Debug, Clone, Copy)]
pub struct BiFinal {
    /// `→h` at each sequence's last token, B×H.
    pub fwd_last: Var,
    /// `←h` at each sequence's first token, B×H.
    pub bwd_first: Var,
}

impl BiRnn {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(BiRnn {
            fwd: GruCell::new(store, &format!("{name}.fwd"), input, hidden, rng)?,
            bwd: GruCell::new(store, &format!("{name}.bwd"), input, hidden, rng)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    /// All states of one sequence given as the rows of `inputs`.
    pub fn run_sequence<S: Scalar>(&self, tape: &mut Tape<'_, S>, inputs: Var) -> Result<BiStates> {
        let t_len = tape.shape(inputs).0;
        let fwd = self.fwd.run(tape, inputs)?;
        let rev: Vec<usize> = (0..t_len).rev().collect();
        let reversed = tape.gather_rows(inputs, &rev)?;
        let bwd_rev = self.bwd.run(tape, reversed)?;
        let bwd = tape.gather_rows(bwd_rev, &rev)?;
        Ok(BiStates { fwd, bwd })
    }

    /// Boundary states for a batch of index sequences into the rows of
    /// `table`. Empty sequences must be replaced by the caller.
    pub fn run_batch<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        table: Var,
        seqs: &[Vec<usize>],
        pad: usize,
    ) -> Result<BiFinal> {
        let fwd_last = run_masked(&self.fwd, tape, table, seqs, pad, false)?;
        let bwd_first = run_masked(&self.bwd, tape, table, seqs, pad, true)?;
        Ok(BiFinal { fwd_last, bwd_first })
    }
}

/// Batched GRU over padded sequences; rows whose sequence has ended keep
/// their last state.
fn run_masked<S: Scalar>(
    cell: &GruCell,
    tape: &mut Tape<'_, S>,
    table: Var,
    seqs: &[Vec<usize>],
    pad: usize,
    reverse: bool,
) -> Result<Var> {
    let batch = seqs.len();
    let t_len = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let hd = cell.hidden;
    let mut h = tape.constant(Tensor::zeros(batch, hd));
    if t_len == 0 {
        return Ok(h);
    }
    // Time-major rows: step t occupies rows t*B..(t+1)*B.
    let mut idx = Vec::with_capacity(t_len * batch);
    for t in 0..t_len {
        for s in seqs {
            let tok = if t < s.len() {
                if reverse {
                    s[s.len() - 1 - t]
                } else {
                    s[t]
                }
            } else {
                pad
            };
            idx.push(tok);
        }
    }
    let x = tape.gather_rows(table, &idx)?;
    let gx = cell.project_input(tape, x)?;
    for t in 0..t_len {
        let g = tape.slice_rows(gx, t * batch, batch)?;
        let next = cell.step(tape, g, h)?;
        if seqs.iter().all(|s| t < s.len()) {
            h = next;
        } else {
            let mask = Tensor::from_fn(batch, hd, |b, _| {
                if t < seqs[b].len() {
                    S::one()
                } else {
                    S::zero()
                }
            });
            let m = tape.constant(mask);
            let delta = tape.sub(next, h)?;
            let kept = tape.mul(m, delta)?;
            h = tape.add(h, kept)?;
        }
    }
    Ok(h)
}
