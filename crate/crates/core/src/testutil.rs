//! Finite-difference oracle over a parameter store.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::Result;

/// Relative error ‖a − n‖ / (‖a‖ + ‖n‖) between the analytic gradient and
/// central differences (h = 1e-5), over at most `per_param` coordinates of
/// every parameter.
pub fn fd_param_rel_err(
    store: &ParamStore<f64>,
    per_param: usize,
    seed: u64,
    f: impl Fn(&mut Tape<'_, f64>) -> Result<Var>,
) -> f64 {
    let mut tape = Tape::with_params(store);
    let loss = f(&mut tape).unwrap();
    let grads = tape.backward(loss).unwrap().param_grads(store.len()).unwrap();
    drop(tape);

    let eval = |s: &ParamStore<f64>| {
        let mut t = Tape::with_params(s);
        let l = f(&mut t).unwrap();
        t.item(l)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = store.clone();
    let h = 1e-5;
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for id in store.ids().collect::<Vec<_>>() {
        let len = store.get(id).len();
        let coords = sample(&mut rng, len, per_param.min(len));
        for j in coords.iter() {
            let orig = work.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + h;
            let up = eval(&work);
            work.get_mut(id).data_mut()[j] = orig - h;
            let down = eval(&work);
            work.get_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[j]);
            diff += (analytic - numeric).powi(2);
            na += analytic * analytic;
            nn += numeric * numeric;
        }
    }
    let denom = na.sqrt() + nn.sqrt();
    if denom == 0.0 {
        0.0
    } else {
        diff.sqrt() / denom
    }
}
