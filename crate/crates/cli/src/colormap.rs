//! Fixed five-stop colormap for disparity visualisation.

use disparity_core::Tensor;

/// Anchors at 0, 1/4, 1/2, 3/4 and 1 (dark violet → blue → teal → amber → dark red).
pub const STOPS: [[f32; 3]; 5] = [
    [48.0, 18.0, 59.0],
    [70.0, 134.0, 251.0],
    [27.0, 229.0, 181.0],
    [250.0, 186.0, 57.0],
    [122.0, 4.0, 3.0],
];

/// RGB in `[0, 255]` for `t` clamped to `[0, 1]`.
pub fn color(t: f32) -> [f32; 3] {
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f32;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f32;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * f)
}

/// Maps a `1×1×H×W` disparity map to a `1×3×H×W` image in `[0, 1]`.
/// Values are scaled by `max` (the map's finite maximum when `None`);
/// non-finite values render black.
pub fn render(disp: &Tensor<f32>, max: Option<f32>) -> Tensor<f32> {
    let s = disp.shape();
    let max = max.unwrap_or_else(|| disp.data().iter().copied().filter(|v| v.is_finite()).fold(0.0, f32::max));
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let rgb: Vec<[f32; 3]> = disp
        .data()
        .iter()
        .map(|&d| if d.is_finite() { color(d * scale) } else { [0.0; 3] })
        .collect();
    Tensor::from_fn([1, 3, s.h, s.w], |_, c, y, x| rgb[y * s.w + x][c] / 255.0)
}
