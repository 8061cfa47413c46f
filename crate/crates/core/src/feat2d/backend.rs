use crate::error::{Error, Result};
use crate::render::Image;

/// Per-channel `(x - mean) / std` applied before inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelNorm {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

pub const IMAGENET_NORM: ChannelNorm = ChannelNorm {
    mean: [0.485, 0.456, 0.406],
    std: [0.229, 0.224, 0.225],
};

/// One backbone output in CHW layout at its native resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl FeatureBlock {
    fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// An image backbone: a normalized `3 x H x W` input to one or more feature blocks.
///
/// Implementations must be deterministic. They may be called from several
/// threads at once.
pub trait FeatureBackend: Send + Sync {
    /// Total channel count across all blocks.
    fn dim(&self) -> usize;
    /// Expected `(height, width)` of input images.
    fn input_size(&self) -> (usize, usize);
    fn normalization(&self) -> ChannelNorm;
    /// Runs the network on a normalized CHW image.
    fn infer(&self, input: &[f32]) -> std::result::Result<Vec<FeatureBlock>, String>;
}

/// Channel-concatenated feature blocks, bilinearly upsampled (half-pixel
/// centers) to the image resolution on access.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    dim: usize,
    blocks: Vec<FeatureBlock>,
}

#[derive(Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    t: f32,
}

fn tap(dst: usize, dst_len: usize, src_len: usize) -> Tap {
    let scale = src_len as f64 / dst_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let i0 = src.floor() as usize;
    Tap {
        i0,
        i1: (i0 + 1).min(src_len - 1),
        t: (src - i0 as f64) as f32,
    }
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, blocks: Vec<FeatureBlock>) -> Result<Self> {
        for b in &blocks {
            if b.height == 0 || b.width == 0 || b.data.len() != b.channels * b.height * b.width {
                return Err(Error::InvalidArgument(format!(
                    "feature block {}x{}x{} holds {} values",
                    b.channels,
                    b.height,
                    b.width,
                    b.data.len()
                )));
            }
        }
        Ok(Self {
            height,
            width,
            dim: blocks.iter().map(|b| b.channels).sum(),
            blocks,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Feature vector at an integer pixel, written into `out` (length `dim`).
    pub fn pixel_into(&self, row: usize, col: usize, out: &mut [f64]) {
        let mut off = 0;
        for b in &self.blocks {
            let ty = tap(row, self.height, b.height);
            let tx = tap(col, self.width, b.width);
            for c in 0..b.channels {
                let top = b.at(c, ty.i0, tx.i0) * (1.0 - tx.t) + b.at(c, ty.i0, tx.i1) * tx.t;
                let bot = b.at(c, ty.i1, tx.i0) * (1.0 - tx.t) + b.at(c, ty.i1, tx.i1) * tx.t;
                out[off + c] = (top * (1.0 - ty.t) + bot * ty.t) as f64;
            }
            off += b.channels;
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.pixel_into(row, col, &mut v);
        v
    }

    /// Bilinear read at a sub-pixel `(x, y)` position, clamped to the image.
    pub fn sample_into(&self, x: f64, y: f64, out: &mut [f64]) {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (tx, ty) = (x - x0 as f64, y - y0 as f64);
        let corners = [
            (y0, x0, (1.0 - tx) * (1.0 - ty)),
            (y0, x1, tx * (1.0 - ty)),
            (y1, x0, (1.0 - tx) * ty),
            (y1, x1, tx * ty),
        ];
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut buf = vec![0.0; self.dim];
        for (r, c, w) in corners {
            if w == 0.0 {
                continue;
            }
            self.pixel_into(r, c, &mut buf);
            for (o, v) in out.iter_mut().zip(&buf) {
                *o += w * v;
            }
        }
    }

    /// Materializes the upsampled map as a single full-resolution block.
    pub fn to_dense(&self) -> FeatureMap {
        let (h, w, d) = (self.height, self.width, self.dim);
        let mut data = vec![0f32; d * h * w];
        let mut buf = vec![0.0; d];
        for r in 0..h {
            for c in 0..w {
                self.pixel_into(r, c, &mut buf);
                for (ch, v) in buf.iter().enumerate() {
                    data[(ch * h + r) * w + c] = *v as f32;
                }
            }
        }
        FeatureMap {
            height: h,
            width: w,
            dim: d,
            blocks: vec![FeatureBlock {
                channels: d,
                height: h,
                width: w,
                data,
            }],
        }
    }

    /// Adds `delta` to every channel of one pixel of a dense map.
    pub fn perturb_pixel(&mut self, row: usize, col: usize, delta: f32) {
        assert!(
            self.blocks.len() == 1 && self.blocks[0].height == self.height && self.blocks[0].width == self.width,
            "perturb_pixel needs a dense map"
        );
        let b = &mut self.blocks[0];
        for c in 0..b.channels {
            b.data[(c * b.height + row) * b.width + col] += delta;
        }
    }
}

/// Normalizes `image`, runs `backend`, and returns its blocks as one map at
/// the image resolution.
pub fn extract_feature_map(backend: &dyn FeatureBackend, image: &Image) -> Result<FeatureMap> {
    let (h, w) = backend.input_size();
    if (image.height, image.width) != (h, w) {
        return Err(Error::InvalidArgument(format!(
            "backend expects {h}x{w} images, got {}x{}",
            image.height, image.width
        )));
    }
    let norm = backend.normalization();
    let plane = h * w;
    let mut input = vec![0f32; 3 * plane];
    for (px, rgb) in image.data.chunks_exact(3).enumerate() {
        for ch in 0..3 {
            input[ch * plane + px] = (rgb[ch] - norm.mean[ch]) / norm.std[ch];
        }
    }
    let blocks = backend
        .infer(&input)
        .map_err(|message| Error::Backend { view: 0, message })?;
    let map = FeatureMap::new(h, w, blocks)?;
    if map.dim() != backend.dim() {
        return Err(Error::Backend {
            view: 0,
            message: format!("backend declared {} channels but produced {}", backend.dim(), map.dim()),
        });
    }
    Ok(map)
}
