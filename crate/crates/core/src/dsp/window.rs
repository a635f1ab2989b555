use crate::error::{Error, Result};

/// Start offsets (in samples) and window length for `count` windows of
/// `window_s` seconds every `stride_s` seconds.
pub fn window_offsets(
    total_len: usize,
    fs: f64,
    window_s: f64,
    stride_s: f64,
    count: usize,
) -> Result<(Vec<usize>, usize)> {
    if !(fs > 0.0 && window_s > 0.0 && stride_s >= 0.0) || count == 0 {
        return Err(Error::Parameter(format!(
            "invalid window plan: fs {fs}, window {window_s} s, stride {stride_s} s, count {count}"
        )));
    }
    let len = (window_s * fs).round() as usize;
    let stride = (stride_s * fs).round() as usize;
    let required = len + (count - 1) * stride;
    if total_len < required {
        return Err(Error::Length {
            context: "sliding windows".into(),
            required,
            actual: total_len,
        });
    }
    Ok(((0..count).map(|i| i * stride).collect(), len))
}

/// Cut `count` windows out of a channels × time signal. Each window is an
/// exact copy of the corresponding input slice.
pub fn sliding_windows<T: Copy>(
    signal: &[Vec<T>],
    fs: f64,
    window_s: f64,
    stride_s: f64,
    count: usize,
) -> Result<Vec<Vec<Vec<T>>>> {
    let total = signal.first().map_or(0, Vec::len);
    if signal.iter().any(|ch| ch.len() != total) {
        return Err(Error::shape("sliding windows", "channels differ in length"));
    }
    let (offsets, len) = window_offsets(total, fs, window_s, stride_s, count)?;
    Ok(offsets
        .iter()
        .map(|&o| signal.iter().map(|ch| ch[o..o + len].to_vec()).collect())
        .collect())
}
