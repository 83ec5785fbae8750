use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::Model;

const MAGIC: &[u8; 4] = b"NFPF";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 12;

/// Range and moments of one neuron over a profiling dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronStats {
    pub low: f32,
    pub high: f32,
    pub mean: f32,
    pub std: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronProfile {
    neurons: Vec<NeuronStats>,
}

impl NeuronProfile {
    pub fn new(neurons: Vec<NeuronStats>) -> Result<Self> {
        for (i, n) in neurons.iter().enumerate() {
            let finite = [n.low, n.high, n.mean, n.std].iter().all(|v| v.is_finite());
            if !finite || n.low > n.mean || n.mean > n.high || n.std < 0.0 {
                return Err(Error::Profile(format!("neuron {i}: inconsistent stats {n:?}")));
            }
        }
        Ok(Self { neurons })
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn stats(&self) -> &[NeuronStats] {
        &self.neurons
    }

    pub fn get(&self, neuron: usize) -> &NeuronStats {
        &self.neurons[neuron]
    }

    /// Binary encoding: magic, version, neuron count, then per-neuron
    /// little-endian `f32` quadruples `(low, high, mean, std)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 16 * self.neurons.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.neurons.len() as u32).to_le_bytes());
        for n in &self.neurons {
            for v in [n.low, n.high, n.mean, n.std] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Profile("not a profile file".into()));
        }
        let word = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
        let version = word(4);
        if version != VERSION {
            return Err(Error::Profile(format!("unsupported version {version}")));
        }
        let count = word(8) as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() != count * 16 {
            return Err(Error::Profile(format!(
                "expected {} bytes of stats for {count} neurons, found {}",
                count * 16,
                body.len()
            )));
        }
        let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        let neurons = body
            .chunks_exact(16)
            .map(|q| NeuronStats {
                low: f(&q[0..4]),
                high: f(&q[4..8]),
                mean: f(&q[8..12]),
                std: f(&q[12..16]),
            })
            .collect();
        Self::new(neurons)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

const CHUNK: usize = 256;

/// Per-neuron min, max, mean and population standard deviation over `data`.
///
/// Moments are accumulated in `f64` in input order and rounded to `f32` once.
pub fn profile_dataset(model: &Model, data: &[Image]) -> Result<NeuronProfile> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = model.neuron_count();
    // values[neuron * len + input]
    let mut values = vec![0f32; n * data.len()];
    for (c, chunk) in data.chunks(CHUNK).enumerate() {
        for (j, trace) in model.trace_images(chunk)?.iter().enumerate() {
            let input = c * CHUNK + j;
            for (neuron, &v) in trace.neurons.iter().enumerate() {
                values[neuron * data.len() + input] = v;
            }
        }
    }

    let stats = values
        .chunks_exact(data.len())
        .map(|vs| {
            let count = vs.len() as f64;
            let mean = vs.iter().map(|&v| f64::from(v)).sum::<f64>() / count;
            let var = vs.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / count;
            NeuronStats {
                low: vs.iter().copied().fold(f32::INFINITY, f32::min),
                high: vs.iter().copied().fold(f32::NEG_INFINITY, f32::max),
                mean: mean as f32,
                std: var.sqrt() as f32,
            }
        })
        .collect();
    NeuronProfile::new(stats)
}
