//! Decoder-only transformer, two independent forward paths: the incremental
//! per-token path that drives and reads the dual cache, and a full-sequence
//! path that recomputes everything from token ids for cross-checking.
//!
//! Pre-norm blocks: x += attn(rmsnorm(x)); x += mlp(rmsnorm(x)); logits from
//! the rms-normed final state. All activations are f32.

use crate::cache::{rotate_heads, DualKvCache};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rope;
use crate::weights::Weights;

pub type Logits = Vec<f32>;

pub struct Model {
    pub config: ModelConfig,
    pub weights: Weights,
}

fn rmsnorm(x: &[f32], gain: &[f32]) -> Vec<f32> {
    let ss: f32 = x.iter().map(|v| v * v).sum::<f32>() / x.len() as f32;
    let scale = 1.0 / (ss + 1e-5).sqrt();
    x.iter().zip(gain).map(|(v, g)| v * scale * g).collect()
}

/// w is (out_dim, in_dim) row-major.
fn matvec(w: &[f32], x: &[f32], out_dim: usize) -> Vec<f32> {
    let in_dim = x.len();
    debug_assert_eq!(w.len(), out_dim * in_dim);
    (0..out_dim)
        .map(|r| {
            let row = &w[r * in_dim..(r + 1) * in_dim];
            row.iter().zip(x).map(|(a, b)| a * b).sum()
        })
        .collect()
}

fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

pub fn softmax_in_place(xs: &mut [f32]) {
    let max = xs.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// One query row against every cached row. `keys` and `values` are row-major
/// (rows * d_model) with heads side by side inside each row; the result is
/// the concatenated per-head context.
pub fn attention_step(
    query: &[f32],
    keys: &[f32],
    values: &[f32],
    n_heads: usize,
    d_head: usize,
) -> Result<Vec<f32>> {
    let d_model = n_heads * d_head;
    if query.len() != d_model {
        return Err(Error::LengthMismatch(format!(
            "query has {} entries, heads want {}",
            query.len(),
            d_model
        )));
    }
    if keys.len() != values.len() || keys.len() % d_model != 0 {
        return Err(Error::LengthMismatch(format!(
            "keys/values misshapen: {} vs {}",
            keys.len(),
            values.len()
        )));
    }
    let rows = keys.len() / d_model;
    if rows == 0 {
        return Err(Error::EmptyCache);
    }
    let scale = 1.0 / (d_head as f32).sqrt();
    let mut out = vec![0.0f32; d_model];
    for h in 0..n_heads {
        let q = &query[h * d_head..(h + 1) * d_head];
        let mut scores: Vec<f32> = (0..rows)
            .map(|r| {
                let k = &keys[r * d_model + h * d_head..][..d_head];
                q.iter().zip(k).map(|(a, b)| a * b).sum::<f32>() * scale
            })
            .collect();
        softmax_in_place(&mut scores);
        let o = &mut out[h * d_head..(h + 1) * d_head];
        for r in 0..rows {
            let v = &values[r * d_model + h * d_head..][..d_head];
            for (oi, vi) in o.iter_mut().zip(v) {
                *oi += scores[r] * vi;
            }
        }
    }
    Ok(out)
}

impl Model {
    pub fn new(config: ModelConfig, weights: Weights) -> Result<Self> {
        config.validate()?;
        Ok(Model { config, weights })
    }

    pub fn from_seed(config: ModelConfig, seed: u64) -> Result<Self> {
        let weights = Weights::init(&config, seed)?;
        Ok(Model { config, weights })
    }

    fn embed(&self, token_id: u32) -> Result<Vec<f32>> {
        let d = self.config.d_model;
        let t = token_id as usize;
        if t >= self.config.vocab_size {
            return Err(Error::InvalidConfig(format!(
                "token id {} outside vocab of size {}",
                t, self.config.vocab_size
            )));
        }
        Ok(self.weights.embedding[t * d..(t + 1) * d].to_vec())
    }

    /// Append one token to the cache and return next-token logits. The query
    /// and the new key rotate at the current materialized length.
    pub fn forward_step(&self, token_id: u32, cache: &mut DualKvCache) -> Result<Logits> {
        let c = &self.config;
        let d = c.d_model;
        let position = cache.register_row(token_id)?;
        let mut x = self.embed(token_id)?;
        for (li, lw) in self.weights.layers.iter().enumerate() {
            let xn = rmsnorm(&x, &lw.attn_norm);
            let mut q = matvec(&lw.wq, &xn, d);
            let k_no_pos = matvec(&lw.wk, &xn, d);
            let v = matvec(&lw.wv, &xn, d);
            for h in 0..c.n_heads {
                rope::apply_rope_in_place(
                    &mut q[h * c.d_head..(h + 1) * c.d_head],
                    position,
                    c.rope_theta,
                )?;
            }
            let k_rot = rotate_heads(&k_no_pos, position, c.rope_theta, c.n_heads)?;
            let (keys, values) = cache.update(li, &k_rot, &k_no_pos, &v)?;
            let ctx = attention_step(&q, keys, values, c.n_heads, c.d_head)?;
            let attn_out = matvec(&lw.wo, &ctx, d);
            for (xi, ai) in x.iter_mut().zip(&attn_out) {
                *xi += ai;
            }
            let xn2 = rmsnorm(&x, &lw.mlp_norm);
            let up: Vec<f32> = matvec(&lw.w_up, &xn2, c.d_ff).into_iter().map(silu).collect();
            let down = matvec(&lw.w_down, &up, d);
            for (xi, di) in x.iter_mut().zip(&down) {
                *xi += di;
            }
        }
        let xf = rmsnorm(&x, &self.weights.final_norm);
        Ok(matvec(&self.weights.unembed, &xf, c.vocab_size))
    }

    /// Whole-sequence forward from scratch: no cache, every key and value
    /// recomputed, causal attention at the given (strictly increasing)
    /// positions. Returns logits for every position.
    pub fn forward_full(&self, token_ids: &[u32], position_ids: &[usize]) -> Result<Vec<Logits>> {
        let c = &self.config;
        let d = c.d_model;
        if token_ids.len() != position_ids.len() {
            return Err(Error::LengthMismatch(format!(
                "{} tokens vs {} positions",
                token_ids.len(),
                position_ids.len()
            )));
        }
        if token_ids.is_empty() {
            return Err(Error::LengthMismatch("empty sequence".into()));
        }
        for w in position_ids.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::NonIncreasingPositions);
            }
        }
        let last = *position_ids.last().unwrap();
        if last >= c.max_context_length {
            return Err(Error::PositionOverflow {
                position: last,
                max_context: c.max_context_length,
            });
        }
        let n = token_ids.len();
        let mut xs: Vec<Vec<f32>> = Vec::with_capacity(n);
        for &t in token_ids {
            xs.push(self.embed(t)?);
        }
        let scale = 1.0 / (c.d_head as f32).sqrt();
        for lw in &self.weights.layers {
            let mut qs = Vec::with_capacity(n);
            let mut ks = Vec::with_capacity(n);
            let mut vs = Vec::with_capacity(n);
            for (t, x) in xs.iter().enumerate() {
                let xn = rmsnorm(x, &lw.attn_norm);
                let mut q = matvec(&lw.wq, &xn, d);
                let mut k = matvec(&lw.wk, &xn, d);
                let v = matvec(&lw.wv, &xn, d);
                for h in 0..c.n_heads {
                    let span = h * c.d_head..(h + 1) * c.d_head;
                    rope::apply_rope_in_place(&mut q[span.clone()], position_ids[t], c.rope_theta)?;
                    rope::apply_rope_in_place(&mut k[span], position_ids[t], c.rope_theta)?;
                }
                qs.push(q);
                ks.push(k);
                vs.push(v);
            }
            for t in 0..n {
                let mut ctx = vec![0.0f32; d];
                for h in 0..c.n_heads {
                    let span = h * c.d_head..(h + 1) * c.d_head;
                    let q = &qs[t][span.clone()];
                    let mut scores: Vec<f32> = (0..=t)
                        .map(|s| {
                            let k = &ks[s][span.clone()];
                            q.iter().zip(k).map(|(a, b)| a * b).sum::<f32>() * scale
                        })
                        .collect();
                    softmax_in_place(&mut scores);
                    let o = &mut ctx[span.clone()];
                    for s in 0..=t {
                        let v = &vs[s][span.clone()];
                        for (oi, vi) in o.iter_mut().zip(v) {
                            *oi += scores[s] * vi;
                        }
                    }
                }
                let attn_out = matvec(&lw.wo, &ctx, d);
                for (xi, ai) in xs[t].iter_mut().zip(&attn_out) {
                    *xi += ai;
                }
                let xn2 = rmsnorm(&xs[t], &lw.mlp_norm);
                let up: Vec<f32> = matvec(&lw.w_up, &xn2, c.d_ff).into_iter().map(silu).collect();
                let down = matvec(&lw.w_down, &up, d);
                for (xi, di) in xs[t].iter_mut().zip(&down) {
                    *xi += di;
                }
            }
        }
        let mut out = Vec::with_capacity(n);
        for x in &xs {
            let xf = rmsnorm(x, &self.weights.final_norm);
            out.push(matvec(&self.weights.unembed, &xf, c.vocab_size));
        }
        Ok(out)
    }
}

/// Largest |a-b| / max(|a|, |b|) across two logit vectors, ignoring entries
/// whose absolute difference is under the floor.
pub fn max_relative_deviation(a: &[f32], b: &[f32], absolute_floor: f32) -> f32 {
    assert_eq!(a.len(), b.len(), "comparing logit vectors of different sizes");
    let mut worst = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        let diff = (x - y).abs();
        if diff <= absolute_floor {
            continue;
        }
        let denom = x.abs().max(y.abs());
        if denom > 0.0 {
            worst = worst.max(diff / denom);
        }
    }
    worst
}
