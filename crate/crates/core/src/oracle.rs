//! Independent validation paths for the incremental engine.
//!
//! Two oracles with different blind spots cross-check a run's boundary
//! snapshots. The replay engine rebuilds the cache state in f64 from the
//! append/evict history, re-rotating every stored key from scratch at its
//! contiguous position on every step; it never trusts the production cache's
//! position bookkeeping, so it holds at every boundary. The from-scratch
//! recompute (forward_full over the surviving token ids) is stricter but only
//! meaningful while no mid-cache eviction has happened: rows that survive a
//! replacement were computed attending to rows that are now gone, and a fresh
//! forward pass legitimately disagrees with them.

use crate::controller::{HistoryOp, RunOutcome};
use crate::error::{Error, Result};
use crate::model::{max_relative_deviation, Model};
use crate::weights::LayerWeights;

/// Relative tolerance for logit agreement between engines.
pub const REL_TOL: f32 = 1e-4;
/// Denominator floor so near-zero logits do not explode the relative error.
pub const ABS_FLOOR: f32 = 1e-6;

fn rmsnorm64(x: &[f64], gain: &[f32]) -> Vec<f64> {
    let ss: f64 = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let scale = 1.0 / (ss + 1e-5).sqrt();
    x.iter().zip(gain).map(|(v, g)| v * scale * *g as f64).collect()
}

fn matvec64(w: &[f32], x: &[f64], out_dim: usize) -> Vec<f64> {
    let in_dim = x.len();
    debug_assert_eq!(w.len(), out_dim * in_dim);
    (0..out_dim)
        .map(|r| {
            w[r * in_dim..(r + 1) * in_dim]
                .iter()
                .zip(x)
                .map(|(a, b)| *a as f64 * b)
                .sum()
        })
        .collect()
}

fn rope64(vec: &mut [f64], position: usize, theta: f64) {
    let d = vec.len();
    debug_assert_eq!(d % 2, 0, "rotary dimension must be even");
    let pos = position as f64;
    for i in 0..d / 2 {
        let freq = theta.powf(-2.0 * i as f64 / d as f64);
        let (sin, cos) = (pos * freq).sin_cos();
        let x0 = vec[2 * i];
        let x1 = vec[2 * i + 1];
        vec[2 * i] = x0 * cos - x1 * sin;
        vec[2 * i + 1] = x0 * sin + x1 * cos;
    }
}

fn softmax64(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// Naive double-precision twin of the incremental engine. Keys are stored
/// without position and every attention pass rotates all of them fresh at
/// 0..rows-1, so evictions renumber survivors by construction.
pub struct ReplayEngine<'m> {
    model: &'m Model,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    token_ids: Vec<u32>,
    last_logits: Vec<f64>,
}

impl<'m> ReplayEngine<'m> {
    pub fn new(model: &'m Model) -> Self {
        let n = model.config.n_layers;
        ReplayEngine {
            model,
            keys: vec![Vec::new(); n],
            values: vec![Vec::new(); n],
            token_ids: Vec::new(),
            last_logits: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.token_ids.len()
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.token_ids
    }

    pub fn last_logits(&self) -> &[f64] {
        &self.last_logits
    }

    pub fn last_logits_f32(&self) -> Vec<f32> {
        self.last_logits.iter().map(|&v| v as f32).collect()
    }

    fn attention64(&self, layer: usize, q: &[f64]) -> Vec<f64> {
        let c = &self.model.config;
        let d = c.d_model;
        let rows = self.rows();
        let theta = c.rope_theta as f64;
        let scale = 1.0 / (c.d_head as f64).sqrt();
        let mut out = vec![0.0f64; d];
        for h in 0..c.n_heads {
            let qh = &q[h * c.d_head..(h + 1) * c.d_head];
            let mut scores = Vec::with_capacity(rows);
            for r in 0..rows {
                let mut kh =
                    self.keys[layer][r * d + h * c.d_head..r * d + (h + 1) * c.d_head].to_vec();
                rope64(&mut kh, r, theta);
                let s: f64 = qh.iter().zip(&kh).map(|(a, b)| a * b).sum();
                scores.push(s * scale);
            }
            softmax64(&mut scores);
            let oh = &mut out[h * c.d_head..(h + 1) * c.d_head];
            for r in 0..rows {
                let vh = &self.values[layer][r * d + h * c.d_head..r * d + (h + 1) * c.d_head];
                for (o, v) in oh.iter_mut().zip(vh) {
                    *o += scores[r] * v;
                }
            }
        }
        out
    }

    fn layer_pass(&mut self, layer: usize, lw: &LayerWeights, x: &mut [f64], position: usize) {
        let c = &self.model.config;
        let d = c.d_model;
        let xn = rmsnorm64(x, &lw.attn_norm);
        let mut q = matvec64(&lw.wq, &xn, d);
        let k = matvec64(&lw.wk, &xn, d);
        let v = matvec64(&lw.wv, &xn, d);
        self.keys[layer].extend_from_slice(&k);
        self.values[layer].extend_from_slice(&v);
        for h in 0..c.n_heads {
            rope64(&mut q[h * c.d_head..(h + 1) * c.d_head], position, c.rope_theta as f64);
        }
        let ctx = self.attention64(layer, &q);
        let attn_out = matvec64(&lw.wo, &ctx, d);
        for (xi, ai) in x.iter_mut().zip(&attn_out) {
            *xi += ai;
        }
        let xn2 = rmsnorm64(x, &lw.mlp_norm);
        let up: Vec<f64> = matvec64(&lw.w_up, &xn2, c.d_ff)
            .into_iter()
            .map(|u| u / (1.0 + (-u).exp()))
            .collect();
        let down = matvec64(&lw.w_down, &up, d);
        for (xi, di) in x.iter_mut().zip(&down) {
            *xi += di;
        }
    }

    pub fn append(&mut self, token_id: u32) -> Result<()> {
        let model = self.model;
        let d = model.config.d_model;
        let t = token_id as usize;
        if t >= model.config.vocab_size {
            return Err(Error::Generation(format!("token id {} outside the vocabulary", t)));
        }
        let position = self.rows();
        self.token_ids.push(token_id);
        let mut x: Vec<f64> =
            model.weights.embedding[t * d..(t + 1) * d].iter().map(|&v| v as f64).collect();
        for (li, lw) in model.weights.layers.iter().enumerate() {
            self.layer_pass(li, lw, &mut x, position);
        }
        let xf = rmsnorm64(&x, &model.weights.final_norm);
        self.last_logits = matvec64(&model.weights.unembed, &xf, model.config.vocab_size);
        Ok(())
    }

    pub fn evict(&mut self, offset: usize, rows: usize) -> Result<()> {
        let d = self.model.config.d_model;
        if offset + rows > self.rows() {
            return Err(Error::CacheInconsistency(format!(
                "evict of rows {}..{} outside the {} stored",
                offset,
                offset + rows,
                self.rows()
            )));
        }
        self.token_ids.drain(offset..offset + rows);
        for l in 0..self.keys.len() {
            self.keys[l].drain(offset * d..(offset + rows) * d);
            self.values[l].drain(offset * d..(offset + rows) * d);
        }
        Ok(())
    }
}

/// One boundary's verdicts. `recompute_deviation` is only present where the
/// run's history was still contiguous, the only place that oracle is valid.
#[derive(Debug, Clone)]
pub struct BoundaryReport {
    pub boundary: usize,
    pub transcript_index: usize,
    pub rows: usize,
    pub clean_history: bool,
    pub replay_deviation: f32,
    pub recompute_deviation: Option<f32>,
}

impl BoundaryReport {
    pub fn within_tolerance(&self) -> bool {
        self.replay_deviation <= REL_TOL
            && self.recompute_deviation.is_none_or(|d| d <= REL_TOL)
    }
}

/// Drive the replay engine through a finished run's history and check every
/// recorded boundary snapshot against both oracles.
pub fn verify_boundaries(model: &Model, outcome: &RunOutcome) -> Result<Vec<BoundaryReport>> {
    let mut engine = ReplayEngine::new(model);
    let mut reports = Vec::new();
    for op in &outcome.history {
        match *op {
            HistoryOp::Append { token_id } => engine.append(token_id)?,
            HistoryOp::Evict { offset, rows } => engine.evict(offset, rows)?,
            HistoryOp::Boundary { index } => {
                let rec = outcome.boundaries.get(index).ok_or_else(|| {
                    Error::CacheInconsistency(format!("history names boundary {} but only {} were recorded", index, outcome.boundaries.len()))
                })?;
                if engine.token_ids() != rec.cache_token_ids.as_slice() {
                    return Err(Error::CacheInconsistency(format!(
                        "replayed token ids diverge at boundary {}: {} rows vs {} recorded",
                        index,
                        engine.rows(),
                        rec.rows
                    )));
                }
                let replay_deviation =
                    max_relative_deviation(&rec.logits, &engine.last_logits_f32(), ABS_FLOOR);
                let recompute_deviation = if rec.clean_history {
                    let positions: Vec<usize> = (0..rec.cache_token_ids.len()).collect();
                    let full = model.forward_full(&rec.cache_token_ids, &positions)?;
                    let last = full.last().expect("forward_full rejects empty input");
                    Some(max_relative_deviation(&rec.logits, last, ABS_FLOOR))
                } else {
                    None
                };
                reports.push(BoundaryReport {
                    boundary: index,
                    transcript_index: rec.transcript_index,
                    rows: rec.rows,
                    clean_history: rec.clean_history,
                    replay_deviation,
                    recompute_deviation,
                });
            }
        }
    }
    Ok(reports)
}

/// From-scratch logits for the last of the given ids at contiguous positions.
pub fn recompute_last_logits(model: &Model, token_ids: &[u32]) -> Result<Vec<f32>> {
    let positions: Vec<usize> = (0..token_ids.len()).collect();
    let mut full = model.forward_full(token_ids, &positions)?;
    Ok(full.pop().expect("forward_full rejects empty input"))
}

/// Least-squares fits of y against x for degree 1 and 2, with coefficients
/// of determination, so cost curves can be classified as linear or worse.
#[derive(Debug, Clone)]
pub struct ComplexityFit {
    pub linear_slope: f64,
    pub linear_intercept: f64,
    pub linear_r2: f64,
    /// c0 + c1 x + c2 x^2.
    pub quadratic: [f64; 3],
    pub quadratic_r2: f64,
}

fn solve_normal(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::NotEnoughData("degenerate normal equations".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

fn poly_fit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    let terms = degree + 1;
    let mut a = vec![vec![0.0; terms]; terms];
    let mut b = vec![0.0; terms];
    for (&x, &y) in xs.iter().zip(ys) {
        let mut powers = vec![1.0; 2 * degree + 1];
        for p in 1..powers.len() {
            powers[p] = powers[p - 1] * x;
        }
        for i in 0..terms {
            for j in 0..terms {
                a[i][j] += powers[i + j];
            }
            b[i] += powers[i] * y;
        }
    }
    solve_normal(a, b)
}

fn r_squared(xs: &[f64], ys: &[f64], coeffs: &[f64]) -> f64 {
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let mut ssr = 0.0;
    let mut sst = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let mut pred = 0.0;
        let mut p = 1.0;
        for &c in coeffs {
            pred += c * p;
            p *= x;
        }
        ssr += (y - pred) * (y - pred);
        sst += (y - mean) * (y - mean);
    }
    if sst == 0.0 {
        return if ssr == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ssr / sst
}

pub fn fit_complexity(xs: &[f64], ys: &[f64]) -> Result<ComplexityFit> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(format!(
            "{} x values against {} y values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 20 {
        return Err(Error::NotEnoughData(format!(
            "complexity fits want at least 20 points, got {}",
            xs.len()
        )));
    }
    let linear = poly_fit(xs, ys, 1)?;
    let quadratic = poly_fit(xs, ys, 2)?;
    Ok(ComplexityFit {
        linear_slope: linear[1],
        linear_intercept: linear[0],
        linear_r2: r_squared(xs, ys, &linear),
        quadratic: [quadratic[0], quadratic[1], quadratic[2]],
        quadratic_r2: r_squared(xs, ys, &quadratic),
    })
}

/// A measurement expressed against a baseline: ratio 1.069 reads as +6.9%.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedMetric {
    pub ratio: f64,
    pub percent_change: f64,
}

pub fn normalize(value: f64, baseline: f64) -> Result<NormalizedMetric> {
    if !baseline.is_finite() || baseline <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "baseline must be finite and positive, got {}",
            baseline
        )));
    }
    if !value.is_finite() {
        return Err(Error::InvalidConfig(format!("value must be finite, got {}", value)));
    }
    let ratio = value / baseline;
    Ok(NormalizedMetric { ratio, percent_change: (ratio - 1.0) * 100.0 })
}
