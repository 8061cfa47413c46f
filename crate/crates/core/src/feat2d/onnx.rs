use std::path::Path;

use tract_onnx::prelude::*;

use super::backend::{ChannelNorm, FeatureBackend, FeatureBlock, IMAGENET_NORM};
use crate::error::{Error, Result};

type Plan = TypedRunnableModel<TypedModel>;

/// A backbone loaded from an ONNX file with one `1 x 3 x H x W` float input
/// and one or more `1 x C x h x w` feature-map outputs.
pub struct OnnxBackend {
    plan: Plan,
    height: usize,
    width: usize,
    dim: usize,
    norm: ChannelNorm,
}

impl OnnxBackend {
    /// Loads and optimizes the model, checking that its outputs add up to
    /// `declared_dim` channels.
    pub fn load(path: impl AsRef<Path>, declared_dim: usize, height: usize, width: usize) -> Result<Self> {
        let path = path.as_ref();
        let bad = |e: TractError| Error::Format(format!("{}: {e:#}", path.display()));
        let model = tract_onnx::onnx()
            .model_for_path(path)
            .map_err(bad)?
            .with_input_fact(0, f32::fact([1, 3, height, width]).into())
            .map_err(bad)?
            .into_optimized()
            .map_err(bad)?;
        let mut dim = 0;
        for o in 0..model.outputs.len() {
            let fact = model.output_fact(o).map_err(bad)?;
            let shape = fact.shape.as_concrete().ok_or_else(|| {
                Error::Format(format!("{}: output {o} has a symbolic shape", path.display()))
            })?;
            if shape.len() != 4 || shape[0] != 1 {
                return Err(Error::Format(format!(
                    "{}: output {o} has shape {shape:?}, expected 1xCxhxw",
                    path.display()
                )));
            }
            dim += shape[1];
        }
        if dim != declared_dim {
            return Err(Error::DimensionMismatch {
                expected: declared_dim,
                found: dim,
            });
        }
        let plan = model.into_runnable().map_err(bad)?;
        Ok(Self {
            plan,
            height,
            width,
            dim,
            norm: IMAGENET_NORM,
        })
    }

    pub fn with_normalization(mut self, norm: ChannelNorm) -> Self {
        self.norm = norm;
        self
    }
}

impl FeatureBackend for OnnxBackend {
    fn dim(&self) -> usize {
        self.dim
    }

    fn input_size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn normalization(&self) -> ChannelNorm {
        self.norm
    }

    fn infer(&self, input: &[f32]) -> std::result::Result<Vec<FeatureBlock>, String> {
        let tensor = Tensor::from_shape(&[1, 3, self.height, self.width], input).map_err(|e| e.to_string())?;
        let outputs = self.plan.run(tvec!(tensor.into())).map_err(|e| format!("{e:#}"))?;
        outputs
            .iter()
            .map(|t| {
                let view = t.to_array_view::<f32>().map_err(|e| e.to_string())?;
                let shape = view.shape();
                if shape.len() != 4 {
                    return Err(format!("output has rank {}, expected 4", shape.len()));
                }
                Ok(FeatureBlock {
                    channels: shape[1],
                    height: shape[2],
                    width: shape[3],
                    data: view.iter().copied().collect(),
                })
            })
            .collect()
    }
}
