/// Samples of the viridis colormap at `t = 0, 1/8, ..., 1`.
const VIRIDIS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

/// Viridis color for `t` in `[0, 1]`; values outside are clamped, NaN maps to 0.
pub fn viridis(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    [0, 1, 2].map(|c| (a[c] + f * (b[c] - a[c])).round() as u8)
}

/// Colors scores on a fixed `[floor, ceiling]` range.
pub fn colorize(scores: &[f64], floor: f64, ceiling: f64) -> Vec<[u8; 3]> {
    let span = ceiling - floor;
    scores
        .iter()
        .map(|&s| viridis(if span > 0.0 { (s - floor) / span } else { 0.0 }))
        .collect()
}
