use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::Result;

const INIT_STD: f64 = 0.02;

/// Counter-based generator so weight tensors are a pure function of
/// (seed, draw index) and the pinned checksums below cannot drift.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform draw in (0, 1] from (seed, counter).
fn unit(seed: u64, counter: u64) -> f64 {
    let bits = mix64(mix64(seed).wrapping_add(counter));
    ((bits >> 11) + 1) as f64 / (1u64 << 53) as f64
}

struct GaussianCounter {
    seed: u64,
    counter: u64,
}

impl GaussianCounter {
    fn new(seed: u64) -> Self {
        GaussianCounter { seed, counter: 0 }
    }

    /// Box-Muller, one normal per pair of uniform draws.
    fn next(&mut self) -> f32 {
        let u1 = unit(self.seed, self.counter);
        let u2 = unit(self.seed, self.counter + 1);
        self.counter += 2;
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        (z * INIT_STD) as f32
    }

    fn tensor(&mut self, len: usize) -> Vec<f32> {
        (0..len).map(|_| self.next()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LayerWeights {
    /// Query/key/value/output projections, each (d_model, d_model) row-major.
    pub wq: Vec<f32>,
    pub wk: Vec<f32>,
    pub wv: Vec<f32>,
    pub wo: Vec<f32>,
    /// MLP up projection (d_ff, d_model) and down projection (d_model, d_ff).
    pub w_up: Vec<f32>,
    pub w_down: Vec<f32>,
    /// RMSNorm gains, initialized to one.
    pub attn_norm: Vec<f32>,
    pub mlp_norm: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct Weights {
    /// Token embedding table (vocab_size, d_model).
    pub embedding: Vec<f32>,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Vec<f32>,
    /// Unembedding matrix (vocab_size, d_model).
    pub unembed: Vec<f32>,
}

impl Weights {
    /// Deterministic zero-mean Gaussian init (std 0.02) for all projection and
    /// embedding matrices; norm gains start at one. Byte-for-byte reproducible
    /// from (config, seed).
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut g = GaussianCounter::new(seed);
        let embedding = g.tensor(config.vocab_size * d);
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(LayerWeights {
                wq: g.tensor(d * d),
                wk: g.tensor(d * d),
                wv: g.tensor(d * d),
                wo: g.tensor(d * d),
                w_up: g.tensor(config.d_ff * d),
                w_down: g.tensor(d * config.d_ff),
                attn_norm: vec![1.0; d],
                mlp_norm: vec![1.0; d],
            });
        }
        let final_norm = vec![1.0; d];
        let unembed = g.tensor(config.vocab_size * d);
        Ok(Weights {
            embedding,
            layers,
            final_norm,
            unembed,
        })
    }

    /// SHA-256 over every tensor in declaration order, little-endian floats.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        let mut eat = |t: &[f32]| {
            for x in t {
                h.update(x.to_le_bytes());
            }
        };
        eat(&self.embedding);
        for l in &self.layers {
            eat(&l.wq);
            eat(&l.wk);
            eat(&l.wv);
            eat(&l.wo);
            eat(&l.w_up);
            eat(&l.w_down);
            eat(&l.attn_norm);
            eat(&l.mlp_norm);
        }
        eat(&self.final_norm);
        eat(&self.unembed);
        format!("{:x}", h.finalize())
    }
}
