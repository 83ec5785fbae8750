//! Regenerates the files under `fixtures/`.
//!
//! ```text
//! cargo run -p neurofuzz-core --example make_fixtures -- fixtures
//! ```
//!
//! Output is a pure function of the constants below.

use std::fs;
use std::path::{Path, PathBuf};

use neurofuzz_core::corpus::{write_dir, Sample};
use neurofuzz_core::model::{truncate_to_f16, Conv2d, Dense, Padding, Pool2d};
use neurofuzz_core::{rng, Image, Layer, Model};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

const SIDE: usize = 14;
const CLASSES: usize = 10;
const CORPUS_SIZE: usize = 50;
const PROFILE_SIZE: usize = 300;
const CENTROID_SAMPLES: usize = 200;
const RIDGE: f64 = 0.05;
/// Keeps logits small enough for 1e-5 agreement with an f64 reference.
const HEAD_SCALE: f64 = 0.1;

// Seven-segment layout: top, upper-left, upper-right, middle, lower-left,
// lower-right, bottom.
const DIGITS: [[bool; 7]; CLASSES] = [
    [true, true, true, false, true, true, true],
    [false, false, true, false, false, true, false],
    [true, false, true, true, true, false, true],
    [true, false, true, true, false, true, true],
    [false, true, true, true, false, true, false],
    [true, true, false, true, false, true, true],
    [true, true, false, true, true, true, true],
    [true, false, true, false, false, true, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

fn glyph<R: Rng>(digit: usize, rng: &mut R) -> Image {
    let dx = rng.random_range(-1i32..=1);
    let dy = rng.random_range(-1i32..=1);
    let thick = rng.random_range(1..=2);
    let ink = rng.random_range(150u8..=255);
    let mut data: Vec<u8> = (0..SIDE * SIDE).map(|_| rng.random_range(0u8..=25)).collect();
    let mut stroke = |y0: i32, y1: i32, x0: i32, x1: i32| {
        for y in y0..y1 {
            for x in x0..x1 {
                let (y, x) = (y + dy, x + dx);
                if (0..SIDE as i32).contains(&y) && (0..SIDE as i32).contains(&x) {
                    data[y as usize * SIDE + x as usize] = ink;
                }
            }
        }
    };
    let (l, r, t, m, b) = (3, 10, 2, 7, 12);
    let s = DIGITS[digit];
    if s[0] {
        stroke(t, t + thick, l, r + 1);
    }
    if s[1] {
        stroke(t, m + 1, l, l + thick);
    }
    if s[2] {
        stroke(t, m + 1, r + 1 - thick, r + 1);
    }
    if s[3] {
        stroke(m, m + thick, l, r + 1);
    }
    if s[4] {
        stroke(m, b + 1, l, l + thick);
    }
    if s[5] {
        stroke(m, b + 1, r + 1 - thick, r + 1);
    }
    if s[6] {
        stroke(b + 1 - thick, b + 1, l, r + 1);
    }
    Image::new(SIDE, SIDE, 1, data).expect("fixed shape")
}

fn conv<R: Rng>(k: usize, cin: usize, cout: usize, std: f32, rng: &mut R) -> Conv2d {
    let normal = Normal::new(0.0f32, std).expect("positive std");
    Conv2d {
        kernel_h: k,
        kernel_w: k,
        in_channels: cin,
        out_channels: cout,
        weights: (0..k * k * cin * cout).map(|_| normal.sample(rng)).collect(),
        bias: (0..cout).map(|_| rng.random_range(-0.05f32..0.1)).collect(),
        stride: 1,
        padding: Padding::Valid,
    }
}

fn pool() -> Layer {
    Layer::MaxPool2d(Pool2d {
        window: 2,
        stride: 2,
        padding: Padding::Valid,
    })
}

/// Solves `a x = b` for symmetric positive definite `a` (Gauss-Jordan).
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).expect("non-empty");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let d = a[col][col];
        let pivot_row = a[col].clone();
        for row in 0..n {
            if row != col {
                let f = a[row][col] / d;
                for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
                b[row] -= f * b[col];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Conv feature extractor (32 features) with a linear discriminant head:
/// `w_c = S^-1 mu_c`, `b_c = -mu_c . w_c / 2` for pooled covariance `S`, both
/// scaled by `HEAD_SCALE`.
fn lenet_toy() -> Model {
    let mut r = rng::stream(0x1e7e7, &[0]);
    let features = vec![
        Layer::Conv2d(conv(3, 1, 4, 0.5, &mut r)),
        Layer::Relu,
        pool(),
        Layer::Conv2d(conv(3, 4, 8, 0.35, &mut r)),
        Layer::Relu,
        pool(),
        Layer::Flatten,
    ];
    let extractor = Model::new([SIDE, SIDE, 1], features.clone()).expect("valid extractor");
    let width = extractor.output_shape(features.len() - 1).iter().product::<usize>();

    let mut glyphs = rng::stream(0x1e7e7, &[1]);
    let mut means = vec![vec![0f64; width]; CLASSES];
    let mut cov = vec![vec![0f64; width]; width];
    for (c, mu) in means.iter_mut().enumerate() {
        let images: Vec<Image> = (0..CENTROID_SAMPLES).map(|_| glyph(c, &mut glyphs)).collect();
        let feats: Vec<Vec<f64>> = extractor
            .trace_images(&images)
            .expect("shape-valid glyphs")
            .into_iter()
            .map(|t| t.output.iter().map(|&v| f64::from(v)).collect())
            .collect();
        for f in &feats {
            for (m, v) in mu.iter_mut().zip(f) {
                *m += v / CENTROID_SAMPLES as f64;
            }
        }
        for f in &feats {
            for i in 0..width {
                for j in 0..width {
                    cov[i][j] += (f[i] - mu[i]) * (f[j] - mu[j]);
                }
            }
        }
    }
    let samples = (CLASSES * CENTROID_SAMPLES) as f64;
    let trace: f64 = (0..width).map(|i| cov[i][i]).sum::<f64>() / samples;
    for (i, row) in cov.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v /= samples;
        }
        row[i] += RIDGE * trace / width as f64;
    }

    let mut weights = vec![0f32; width * CLASSES];
    let mut bias = vec![0f32; CLASSES];
    for (c, mu) in means.iter().enumerate() {
        let w = solve(cov.clone(), mu.clone());
        for (i, &v) in w.iter().enumerate() {
            weights[i * CLASSES + c] = (HEAD_SCALE * v) as f32;
        }
        bias[c] = (-HEAD_SCALE * mu.iter().zip(&w).map(|(m, v)| m * v).sum::<f64>() / 2.0) as f32;
    }

    let mut layers = features;
    layers.push(Layer::Dense(Dense {
        inputs: width,
        outputs: CLASSES,
        weights,
        bias,
    }));
    layers.push(Layer::Softmax);
    Model::new([SIDE, SIDE, 1], layers).expect("valid model")
}

/// Glyphs the model classifies correctly, cycling through the classes.
fn labelled_set(model: &Model, count: usize, prefix: &str, key: u64) -> Vec<Sample> {
    let mut r = rng::stream(0x5eed, &[key]);
    let mut out = Vec::with_capacity(count);
    let mut digit = 0;
    while out.len() < count {
        let image = glyph(digit, &mut r);
        if model.predict_images(std::slice::from_ref(&image)).expect("valid")[0] == digit {
            out.push(Sample {
                name: format!("{prefix}{:03}.pgm", out.len()),
                image,
                label: digit,
            });
            digit = (digit + 1) % CLASSES;
        }
    }
    out
}

fn accuracy(model: &Model, key: u64) -> f64 {
    let mut r = rng::stream(0xacc, &[key]);
    let n = 1000;
    let hits = (0..n)
        .filter(|i| {
            let d = i % CLASSES;
            model.predict_images(&[glyph(d, &mut r)]).expect("valid")[0] == d
        })
        .count();
    hits as f64 / n as f64
}

/// Smallest `b > a` (stepping one f32 ulp at a time) whose binary16 rounding
/// does not exceed that of `a`.
fn boundary_partner(a: f32) -> f32 {
    let mut b = a;
    loop {
        b = f32::from_bits(b.to_bits() + 1);
        if truncate_to_f16(b) <= truncate_to_f16(a) {
            return b;
        }
    }
}

/// Dense 4 -> 2 model where every one-hot input sits on a class boundary
/// that binary16 truncation erases.
fn quant_boundary() -> (Model, Vec<Sample>) {
    let mut r = rng::stream(0xb0da, &[0]);
    let inputs = 4;
    let mut weights = Vec::with_capacity(inputs * 2);
    for _ in 0..inputs {
        let a: f32 = r.random_range(0.05..0.9);
        weights.push(a);
        weights.push(boundary_partner(a));
    }
    let model = Model::new(
        [1, inputs, 1],
        vec![Layer::Dense(Dense {
            inputs,
            outputs: 2,
            weights,
            bias: vec![0.0, 0.0],
        })],
    )
    .expect("valid model");

    let mut images: Vec<Image> = (0..inputs)
        .map(|i| {
            let mut img = Image::filled(1, inputs, 1, 0);
            img.data_mut()[i] = 255;
            img
        })
        .collect();
    images.extend((0..4).map(|_| Image::new(1, inputs, 1, (0..inputs).map(|_| r.random()).collect()).expect("shape")));
    let labels = model.predict_images(&images).expect("valid");
    let samples = images
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (image, label))| Sample {
            name: format!("q{i:02}.pgm"),
            image,
            label,
        })
        .collect();
    (model, samples)
}

fn write_json(path: &Path, value: &serde_json::Value) {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
}

fn main() {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));

    let model = lenet_toy();
    println!("lenet_toy: {} neurons, accuracy {:.3}", model.neuron_count(), accuracy(&model, 0));
    model.save(&root.join("lenet_toy"), Some("lenet_toy")).expect("write model");

    let corpus = labelled_set(&model, CORPUS_SIZE, "seed", 0);
    write_dir(&root.join("corpus"), &corpus).expect("write corpus");
    let profile = labelled_set(&model, PROFILE_SIZE, "prof", 1);
    write_dir(&root.join("profile_data"), &profile).expect("write profile data");

    let mut golden_inputs = vec![("zero".to_string(), Image::filled(SIDE, SIDE, 1, 0))];
    golden_inputs.extend(corpus.iter().map(|s| (s.name.clone(), s.image.clone())));
    let images: Vec<Image> = golden_inputs.iter().map(|(_, i)| i.clone()).collect();
    let traces = model.trace_images(&images).expect("valid");
    let logit_layer = *model.neuron_layers().last().expect("dense head");
    let records: Vec<_> = golden_inputs
        .iter()
        .zip(&traces)
        .map(|((name, _), t)| {
            json!({
                "input": name,
                "logits": &t.neurons[logit_layer.range()],
                "output": t.output,
                "label": t.label,
            })
        })
        .collect();
    write_json(&root.join("lenet_toy").join("golden.json"), &json!({ "tolerance": 1e-5, "records": records }));

    // Corpus listing order, chunked by the default batch size.
    let batches: Vec<Vec<&str>> = corpus.chunks(32).map(|c| c.iter().map(|s| s.name.as_str()).collect()).collect();
    write_json(&root.join("corpus_batches.json"), &json!({ "batch_size": 32, "batches": batches }));

    let (qmodel, qsamples) = quant_boundary();
    qmodel.save(&root.join("quant_boundary"), Some("quant_boundary")).expect("write model");
    write_dir(&root.join("quant_boundary").join("tests"), &qsamples).expect("write tests");
}
