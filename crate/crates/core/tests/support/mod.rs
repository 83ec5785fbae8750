//! Test-only helpers: fixture paths, random small models and a brute-force
//! coverage oracle written directly from the criterion definitions.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use neurofuzz_core::coverage::NeuronStats;
use neurofuzz_core::model::{Conv2d, Dense, Padding, Pool2d};
use neurofuzz_core::{CriterionConfig, CriterionKind, Image, Layer, Model, NeuronProfile};
use rand::Rng;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn random_image<R: Rng>(shape: [usize; 3], rng: &mut R) -> Image {
    let [h, w, c] = shape;
    Image::new(h, w, c, (0..h * w * c).map(|_| rng.random()).collect()).expect("shape")
}

fn weights<R: Rng>(n: usize, rng: &mut R) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// A conv or dense stack on a tiny input, with at least two neuron layers.
pub fn random_model<R: Rng>(rng: &mut R) -> Model {
    let side = rng.random_range(4..=6);
    let cin = rng.random_range(1..=2);
    let mut layers = Vec::new();
    let mut features = side * side * cin;
    if rng.random_bool(0.5) {
        let cout = rng.random_range(1..=4);
        layers.push(Layer::Conv2d(Conv2d {
            kernel_h: 3,
            kernel_w: 3,
            in_channels: cin,
            out_channels: cout,
            weights: weights(9 * cin * cout, rng),
            bias: weights(cout, rng),
            stride: 1,
            padding: if rng.random_bool(0.5) { Padding::Same } else { Padding::Valid },
        }));
        layers.push(Layer::Relu);
        layers.push(Layer::MaxPool2d(Pool2d {
            window: 2,
            stride: 2,
            padding: Padding::Valid,
        }));
        let probe = Model::new([side, side, cin], layers.clone()).expect("valid conv stack");
        features = probe.output_shape(layers.len() - 1).iter().product();
        layers.push(Layer::Flatten);
    }
    let hidden = rng.random_range(2..=6);
    layers.push(Layer::Dense(Dense {
        inputs: features,
        outputs: hidden,
        weights: weights(features * hidden, rng),
        bias: weights(hidden, rng),
    }));
    layers.push(Layer::Relu);
    let classes = rng.random_range(2..=4);
    layers.push(Layer::Dense(Dense {
        inputs: hidden,
        outputs: classes,
        weights: weights(hidden * classes, rng),
        bias: weights(classes, rng),
    }));
    if rng.random_bool(0.5) {
        layers.push(Layer::Softmax);
    }
    Model::new([side, side, cin], layers).expect("valid model")
}

/// Neuron values of every input, one forward pass per input.
pub fn neuron_log(model: &Model, images: &[Image]) -> Vec<Vec<f32>> {
    images
        .iter()
        .map(|img| {
            model.trace_images(std::slice::from_ref(img)).expect("shape-valid")[0]
                .neurons
                .clone()
        })
        .collect()
}

/// Profile from first principles: min, max, f64 mean and population std.
pub fn brute_profile(log: &[Vec<f32>]) -> NeuronProfile {
    let n = log[0].len();
    let count = log.len() as f64;
    let stats = (0..n)
        .map(|i| {
            let col: Vec<f32> = log.iter().map(|row| row[i]).collect();
            let mut low = col[0];
            let mut high = col[0];
            for &v in &col {
                if v < low {
                    low = v;
                }
                if v > high {
                    high = v;
                }
            }
            let mut sum = 0f64;
            for &v in &col {
                sum += f64::from(v);
            }
            let mean = sum / count;
            let mut sq = 0f64;
            for &v in &col {
                sq += (f64::from(v) - mean) * (f64::from(v) - mean);
            }
            NeuronStats {
                low,
                high,
                mean: mean as f32,
                std: (sq / count).sqrt() as f32,
            }
        })
        .collect();
    NeuronProfile::new(stats).expect("consistent stats")
}

/// Covered `(neuron, bucket)` pairs over the whole log.
pub fn brute_items(
    cfg: &CriterionConfig,
    layers: &[std::ops::Range<usize>],
    profile: Option<&NeuronProfile>,
    log: &[Vec<f32>],
) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for v in log {
        for layer in layers {
            for i in layer.clone() {
                if let Some(b) = bucket_of(cfg, layer, profile, v, i) {
                    for b in b {
                        out.insert((i, b));
                    }
                }
            }
        }
    }
    out
}

fn bucket_of(
    cfg: &CriterionConfig,
    layer: &std::ops::Range<usize>,
    profile: Option<&NeuronProfile>,
    v: &[f32],
    i: usize,
) -> Option<Vec<usize>> {
    let x = f64::from(v[i]);
    let m = cfg.overflow_buckets;
    match cfg.kind {
        CriterionKind::Nc => {
            let vals = &v[layer.clone()];
            let lo = vals.iter().map(|&a| f64::from(a)).fold(f64::INFINITY, f64::min);
            let hi = vals.iter().map(|&a| f64::from(a)).fold(f64::NEG_INFINITY, f64::max);
            (hi > lo && (x - lo) / (hi - lo) > cfg.t).then(|| vec![0])
        }
        CriterionKind::Kmnc => {
            let s = profile?.get(i);
            let (low, high) = (f64::from(s.low), f64::from(s.high));
            let k = cfg.k_sections;
            if low < high {
                if x < low || x > high {
                    return None;
                }
                let q = (x - low) / (high - low) * k as f64;
                // the last section is closed on the right
                (0..k).find(|&j| (j as f64) <= q && (q < (j + 1) as f64 || j == k - 1)).map(|j| vec![j])
            } else {
                (x == low).then(|| vec![0])
            }
        }
        CriterionKind::Nbc | CriterionKind::Snac => {
            let s = profile?.get(i);
            let step = f64::from(s.std).max(1e-6) / m as f64;
            let bucket = |d: f64| ((d / step).floor() as usize).min(m - 1);
            let upper_base = if cfg.kind == CriterionKind::Nbc { m } else { 0 };
            if x > f64::from(s.high) {
                Some(vec![upper_base + bucket(x - f64::from(s.high))])
            } else if cfg.kind == CriterionKind::Nbc && x < f64::from(s.low) {
                Some(vec![bucket(f64::from(s.low) - x)])
            } else {
                None
            }
        }
        CriterionKind::Tknc | CriterionKind::Bknc => {
            let top = cfg.kind == CriterionKind::Tknc;
            // rank = neurons of the layer that beat `i`
            let rank = layer
                .clone()
                .filter(|&j| {
                    let (a, b) = (v[j], v[i]);
                    let better = if top { a > b } else { a < b };
                    better || (a == b && j < i)
                })
                .count();
            (rank < cfg.top_k).then(|| vec![0])
        }
    }
}

/// Coverage ratio from a covered set, counting NBC per neuron side.
pub fn brute_ratio(cfg: &CriterionConfig, neurons: usize, items: &BTreeSet<(usize, usize)>) -> f64 {
    let m = cfg.overflow_buckets;
    match cfg.kind {
        CriterionKind::Nc | CriterionKind::Tknc | CriterionKind::Bknc => items.len() as f64 / neurons as f64,
        CriterionKind::Kmnc => items.len() as f64 / (neurons * cfg.k_sections) as f64,
        CriterionKind::Nbc => {
            let sides: BTreeSet<(usize, bool)> = items.iter().map(|&(n, b)| (n, b >= m)).collect();
            sides.len() as f64 / (2 * neurons) as f64
        }
        CriterionKind::Snac => {
            let hit: BTreeSet<usize> = items.iter().map(|&(n, _)| n).collect();
            hit.len() as f64 / neurons as f64
        }
    }
}

/// One randomized equivalence check: incremental `CoverageState` over 20
/// inputs folded in random batches (forward and reversed) against
/// [`brute_items`] over the full log. Returns the number of covered items.
pub fn oracle_instance(kind: CriterionKind, seed: u64) -> Result<usize, String> {
    use neurofuzz_core::coverage::Criterion;
    use neurofuzz_core::rng;

    let mut r = rng::stream(seed, &[kind as u64]);
    let model = random_model(&mut r);
    let shape = model.input_shape();
    let inputs: Vec<Image> = (0..20).map(|_| random_image(shape, &mut r)).collect();
    let profiling: Vec<Image> = (0..8).map(|_| random_image(shape, &mut r)).collect();
    let profile = brute_profile(&neuron_log(&model, &profiling));

    let cfg = CriterionConfig {
        kind,
        t: r.random_range(0.05..0.95),
        k_sections: r.random_range(1..=20),
        top_k: r.random_range(1..=3),
        overflow_buckets: r.random_range(1..=5),
    };
    let criterion = Criterion::new(cfg, &model, kind.needs_profile().then(|| profile.clone()))
        .map_err(|e| e.to_string())?;

    let fold = |order: &[usize], r: &mut rng::Rng| {
        let mut state = criterion.empty_state();
        let mut rest = order;
        while !rest.is_empty() {
            let take = r.random_range(1..=rest.len().min(6));
            let batch: Vec<Image> = rest[..take].iter().map(|&i| inputs[i].clone()).collect();
            let traces = model.trace_images(&batch).expect("shape-valid");
            state.update(&criterion.batch_items(&traces));
            rest = &rest[take..];
        }
        state
    };
    let forward: Vec<usize> = (0..inputs.len()).collect();
    let reversed: Vec<usize> = forward.iter().rev().copied().collect();
    let state = fold(&forward, &mut r);
    let again = fold(&reversed, &mut r);

    let layers: Vec<_> = model.neuron_layers().iter().map(|l| l.range()).collect();
    let expected = brute_items(&cfg, &layers, Some(&profile), &neuron_log(&model, &inputs));
    let got: BTreeSet<(usize, usize)> = state.items().map(|i| (i.neuron as usize, i.bucket as usize)).collect();
    if got != expected {
        return Err(format!("{kind} seed {seed}: incremental {got:?} != brute force {expected:?}"));
    }
    if state != again {
        return Err(format!("{kind} seed {seed}: fold order changed the state"));
    }
    let ratio = brute_ratio(&cfg, model.neuron_count(), &expected);
    if state.ratio() != ratio {
        return Err(format!("{kind} seed {seed}: ratio {} != {ratio}", state.ratio()));
    }
    Ok(expected.len())
}
