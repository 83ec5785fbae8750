use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{truncate_to_f16, Model};
use crate::error::{Error, Result};

/// Returns a copy of `model` in which a seeded, uniformly random `ratio` of all
/// parameters (weights and biases, flattened in layer order) has been
/// round-tripped through binary16.
///
/// The number of truncated scalars is `round(ratio * param_count)`.
pub fn quantize_model(model: &Model, ratio: f64, rng_seed: u64) -> Result<Model> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!("quantization ratio {ratio} outside [0, 1]")));
    }
    let total = model.param_count();
    let count = ((ratio * total as f64).round() as usize).min(total);

    let mut selected = vec![false; total];
    if count == total {
        selected.fill(true);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for i in rand::seq::index::sample(&mut rng, total, count) {
            selected[i] = true;
        }
    }

    let mut out = model.clone();
    let mut flags = selected.into_iter();
    for layer in &mut out.layers {
        let Some((w, b)) = layer.params_mut() else {
            continue;
        };
        for v in w.iter_mut().chain(b.iter_mut()) {
            if flags.next() == Some(true) {
                *v = truncate_to_f16(*v);
            }
        }
    }
    Ok(out)
}
