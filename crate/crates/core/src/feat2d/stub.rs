use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::backend::{ChannelNorm, FeatureBackend, FeatureBlock, IMAGENET_NORM};

/// A CHW activation tensor.
struct Act {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Act {
    fn at_clamped(&self, c: usize, y: isize, x: isize) -> f32 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.data[(c * self.h + y) * self.w + x]
    }
}

/// Dense `k x k` convolution with edge-replicating padding, so a spatially
/// constant input yields a spatially constant output.
struct Conv {
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl Conv {
    fn random(rng: &mut ChaCha8Rng, cin: usize, cout: usize, k: usize, stride: usize) -> Self {
        let bound = (3.0 / (cin * k * k) as f32).sqrt();
        Self {
            cin,
            cout,
            k,
            stride,
            weights: (0..cout * cin * k * k).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: (0..cout).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        }
    }

    fn forward(&self, x: &Act) -> Act {
        debug_assert_eq!(x.c, self.cin);
        let (h, w) = (x.h.div_ceil(self.stride), x.w.div_ceil(self.stride));
        let mut data = vec![0f32; self.cout * h * w];
        if self.k == 1 && self.stride == 1 {
            let n = h * w;
            data.par_chunks_mut(n).enumerate().for_each(|(o, plane)| {
                plane.fill(self.bias[o]);
                for i in 0..self.cin {
                    let wt = self.weights[o * self.cin + i];
                    for (p, v) in plane.iter_mut().zip(&x.data[i * n..(i + 1) * n]) {
                        *p += wt * v;
                    }
                }
                plane.iter_mut().for_each(|v| *v = v.tanh());
            });
            return Act { c: self.cout, h, w, data };
        }
        let half = self.k / 2;
        let padded = pad_replicate(x, half);
        let (ph, pw) = (x.h + 2 * half, x.w + 2 * half);
        data.par_chunks_mut(h * w).enumerate().for_each(|(o, plane)| {
            for (idx, out) in plane.iter_mut().enumerate() {
                let (oy, ox) = (idx / w * self.stride, idx % w * self.stride);
                let mut acc = self.bias[o];
                for i in 0..self.cin {
                    let wbase = (o * self.cin + i) * self.k * self.k;
                    let src = &padded[i * ph * pw..];
                    for ky in 0..self.k {
                        let row = &src[(oy + ky) * pw + ox..];
                        let taps = &self.weights[wbase + ky * self.k..][..self.k];
                        for (wt, x) in taps.iter().zip(row) {
                            acc += wt * x;
                        }
                    }
                }
                *out = acc.tanh();
            }
        });
        Act { c: self.cout, h, w, data }
    }
}

/// Copies `x` into a buffer with `pad` replicated border pixels on every side.
fn pad_replicate(x: &Act, pad: usize) -> Vec<f32> {
    let (ph, pw) = (x.h + 2 * pad, x.w + 2 * pad);
    let mut out = vec![0f32; x.c * ph * pw];
    for c in 0..x.c {
        for y in 0..ph {
            for xx in 0..pw {
                out[(c * ph + y) * pw + xx] =
                    x.at_clamped(c, y as isize - pad as isize, xx as isize - pad as isize);
            }
        }
    }
    out
}

fn avg_pool2(x: &Act) -> Act {
    let (h, w) = ((x.h / 2).max(1), (x.w / 2).max(1));
    let mut data = vec![0f32; x.c * h * w];
    for c in 0..x.c {
        for y in 0..h {
            for xx in 0..w {
                let mut s = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        s += x.at_clamped(c, (2 * y + dy) as isize, (2 * xx + dx) as isize);
                    }
                }
                data[(c * h + y) * w + xx] = 0.25 * s;
            }
        }
    }
    Act { c: x.c, h, w, data }
}

/// Deterministic stand-in backbone with the default 64/128/256 block layout.
///
/// Weights come from a fixed seed; every layer is a small convolution with a
/// `tanh` nonlinearity. Blocks are emitted at 1/4, 1/8 and 1/16 of the input
/// resolution, the strides of the first three stages of a ResNet.
pub struct StubBackend {
    height: usize,
    width: usize,
    stem: Conv,
    stage1: Conv,
    stage2: Conv,
    stage3: Conv,
}

impl StubBackend {
    pub fn new(seed: u64, height: usize, width: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            height,
            width,
            stem: Conv::random(&mut rng, 3, 16, 3, 2),
            stage1: Conv::random(&mut rng, 16, 64, 1, 1),
            stage2: Conv::random(&mut rng, 64, 128, 1, 1),
            stage3: Conv::random(&mut rng, 128, 256, 1, 1),
        }
    }
}

impl Default for StubBackend {
    fn default() -> Self {
        Self::new(0, 224, 224)
    }
}

impl FeatureBackend for StubBackend {
    fn dim(&self) -> usize {
        64 + 128 + 256
    }

    fn input_size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn normalization(&self) -> ChannelNorm {
        IMAGENET_NORM
    }

    fn infer(&self, input: &[f32]) -> Result<Vec<FeatureBlock>, String> {
        if input.len() != 3 * self.height * self.width {
            return Err(format!(
                "stub expects 3x{}x{} input, got {} values",
                self.height,
                self.width,
                input.len()
            ));
        }
        let x = Act { c: 3, h: self.height, w: self.width, data: input.to_vec() };
        let s = self.stem.forward(&x);
        let b1 = self.stage1.forward(&avg_pool2(&s));
        let b2 = self.stage2.forward(&avg_pool2(&b1));
        let b3 = self.stage3.forward(&avg_pool2(&b2));
        Ok([b1, b2, b3]
            .into_iter()
            .map(|a| FeatureBlock { channels: a.c, height: a.h, width: a.w, data: a.data })
            .collect())
    }
}
