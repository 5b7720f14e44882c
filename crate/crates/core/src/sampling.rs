//! Token selection from a logit vector: deterministic argmax, or nucleus
//! sampling (temperature then smallest top-p prefix of the sorted softmax).

use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_TEMPERATURE: f32 = 0.6;
pub const DEFAULT_TOP_P: f32 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleMode {
    /// Highest logit wins, lowest token id on exact ties. Consumes no
    /// randomness.
    Argmax,
    Nucleus { temperature: f32, top_p: f32 },
}

impl SampleMode {
    pub fn nucleus(temperature: f32, top_p: f32) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidSampling(format!(
                "temperature must be positive (use Argmax for the zero limit), got {}",
                temperature
            )));
        }
        if !(top_p.is_finite() && top_p > 0.0 && top_p <= 1.0) {
            return Err(Error::InvalidSampling(format!(
                "top_p must be in (0, 1], got {}",
                top_p
            )));
        }
        Ok(SampleMode::Nucleus { temperature, top_p })
    }

    pub fn default_nucleus() -> Self {
        SampleMode::Nucleus {
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
        }
    }
}

/// Numerically stable softmax of logits / temperature.
pub fn softmax_probs(logits: &[f32], temperature: f32) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let t = temperature as f64;
    let exps: Vec<f64> = logits.iter().map(|&l| ((l as f64 - max) / t).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn argmax(logits: &[f32]) -> u32 {
    let mut best = 0usize;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    best as u32
}

pub fn sample(logits: &[f32], mode: &SampleMode, rng: &mut impl Rng) -> Result<u32> {
    if logits.is_empty() {
        return Err(Error::InvalidSampling("empty logit vector".into()));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidSampling("non-finite logit".into()));
    }
    match *mode {
        SampleMode::Argmax => Ok(argmax(logits)),
        SampleMode::Nucleus { temperature, top_p } => {
            // re-validate so a hand-built mode cannot smuggle bad values in
            SampleMode::nucleus(temperature, top_p)?;
            let probs = softmax_probs(logits, temperature);
            let mut order: Vec<usize> = (0..probs.len()).collect();
            order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));

            // smallest prefix whose mass reaches top_p; fall back to the whole
            // vocabulary if rounding keeps the cumulative sum short of it
            let mut cut = probs.len();
            let mut mass = 0.0f64;
            for (rank, &tok) in order.iter().enumerate() {
                mass += probs[tok];
                if mass >= top_p as f64 {
                    cut = rank + 1;
                    break;
                }
            }
            let nucleus = &order[..cut];
            let total: f64 = nucleus.iter().map(|&t| probs[t]).sum();
            let draw: f64 = rng.gen::<f64>() * total;
            let mut acc = 0.0f64;
            for &tok in nucleus {
                acc += probs[tok];
                if draw < acc {
                    return Ok(tok as u32);
                }
            }
            Ok(*nucleus.last().unwrap() as u32)
        }
    }
}
