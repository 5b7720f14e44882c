//! Rotary position encoding. Consecutive pairs (x[2i], x[2i+1]) rotate by
//! angle position_id * theta^(-2i/d). Angles and trig run in f64, the data
//! stays f32; position 0 is a bitwise identity.

use crate::error::{Error, Result};

pub fn apply_rope(vec: &[f32], position_id: usize, theta: f32) -> Result<Vec<f32>> {
    let mut out = vec.to_vec();
    apply_rope_in_place(&mut out, position_id, theta)?;
    Ok(out)
}

pub fn apply_rope_in_place(vec: &mut [f32], position_id: usize, theta: f32) -> Result<()> {
    let d = vec.len();
    if d % 2 != 0 {
        return Err(Error::OddRotaryDim(d));
    }
    let theta = theta as f64;
    let pos = position_id as f64;
    for i in 0..d / 2 {
        let freq = theta.powf(-2.0 * i as f64 / d as f64);
        let (sin, cos) = (pos * freq).sin_cos();
        let (sin, cos) = (sin as f32, cos as f32);
        let x0 = vec[2 * i];
        let x1 = vec[2 * i + 1];
        vec[2 * i] = x0 * cos - x1 * sin;
        vec[2 * i + 1] = x0 * sin + x1 * cos;
    }
    Ok(())
}
