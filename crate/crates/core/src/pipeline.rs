//! Per-scan feature extraction: foreground, downsampling, both modalities, fusion.

use log::debug;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::feat2d::{extract_2d_modality, FeatureBackend, StubBackend};
use crate::feat3d::{estimate_normals, fpfh};
use crate::features::{propagate_to_full, FeatureMatrix};
use crate::fusion::combine;
use crate::pcd::{voxel_downsample, OrganizedCloud, PointCloud, Vec3};
use crate::preprocess::{median_spacing, segment_foreground};
use crate::render::{fit_camera, make_schedule, ViewSchedule};

/// Features of one scan, one row per foreground point.
#[derive(Debug, Clone)]
pub struct ScanFeatures {
    /// Full-resolution foreground with grid provenance.
    pub foreground: PointCloud,
    /// Downsampled cloud with normals; features are computed here.
    pub downsampled: PointCloud,
    pub up_map: Vec<usize>,
    pub features: FeatureMatrix,
    pub zero_rows_2d: usize,
    pub zero_rows_3d: usize,
    pub degenerate_normals: usize,
    pub isolated_points: usize,
}

/// A downsampled cloud with normals and the map back to full resolution.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cloud: PointCloud,
    pub up_map: Vec<usize>,
    pub degenerate_normals: usize,
    pub voxel_size: f64,
}

/// Holds the backbone and view schedule shared by every scan.
pub struct Extractor {
    cfg: PipelineConfig,
    backend: Option<Box<dyn FeatureBackend>>,
    schedule: ViewSchedule,
}

impl Extractor {
    /// Builds the backbone named in the config (only when the feature mode needs it).
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        let backend: Option<Box<dyn FeatureBackend>> = if !cfg.feature_mode.uses_2d() {
            None
        } else if cfg.backbone.model == "stub" {
            let s = cfg.render.image_size;
            Some(Box::new(StubBackend::new(cfg.seed, s, s)))
        } else {
            Some(load_onnx(cfg)?)
        };
        Self::with_backend(cfg, backend)
    }

    pub fn with_backend(cfg: &PipelineConfig, backend: Option<Box<dyn FeatureBackend>>) -> Result<Self> {
        cfg.validate()?;
        if cfg.feature_mode.uses_2d() {
            let b = backend
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("feature mode {} needs a backbone", cfg.feature_mode)))?;
            if b.dim() != cfg.backbone.dim {
                return Err(Error::DimensionMismatch {
                    expected: cfg.backbone.dim,
                    found: b.dim(),
                });
            }
            let size = (cfg.render.image_size, cfg.render.image_size);
            if b.input_size() != size {
                return Err(Error::InvalidArgument(format!(
                    "backbone expects {:?} images, render.image_size is {}",
                    b.input_size(),
                    cfg.render.image_size
                )));
            }
        }
        Ok(Self {
            cfg: cfg.clone(),
            backend,
            schedule: make_schedule(cfg.n_views)?,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &ViewSchedule {
        &self.schedule
    }

    pub fn feature_dim(&self) -> usize {
        self.cfg.feature_dim()
    }

    /// Foreground points of a scan, or all valid points when preprocessing is off.
    pub fn foreground(&self, oc: &OrganizedCloud) -> Result<PointCloud> {
        if self.cfg.preprocess.enabled {
            segment_foreground(oc, &self.cfg.background_params())
        } else {
            oc.to_point_cloud()
        }
    }

    pub fn voxel_size(&self, pc: &PointCloud) -> f64 {
        match self.cfg.geometry.voxel_size {
            Some(v) => v,
            None => pc
                .bounds()
                .map_or(0.0, |(lo, hi)| (hi - lo).norm() * self.cfg.geometry.voxel_fraction),
        }
    }

    pub fn extract(&self, oc: &OrganizedCloud) -> Result<ScanFeatures> {
        let foreground = self.foreground(oc)?;
        self.extract_cloud(foreground)
    }

    /// Downsamples `foreground` and estimates normals on the result.
    pub fn prepare(&self, foreground: &PointCloud) -> Result<Prepared> {
        let voxel = self.voxel_size(foreground);
        let (ds, up_map) = if voxel > 0.0 {
            let d = voxel_downsample(foreground, voxel)?;
            (d.cloud, d.up_map)
        } else {
            (PointCloud::from_positions(foreground.positions.clone()), (0..foreground.len()).collect())
        };
        // Scans are taken from a sensor at the origin.
        let normals = estimate_normals(&ds, self.cfg.geometry.normals_k.min(ds.len()), Vec3::zeros())?;
        Ok(Prepared {
            cloud: normals.cloud,
            up_map,
            degenerate_normals: normals.degenerate.len(),
            voxel_size: voxel,
        })
    }

    /// Runs the feature stack on an already segmented cloud.
    pub fn extract_cloud(&self, foreground: PointCloud) -> Result<ScanFeatures> {
        let g = &self.cfg.geometry;
        let Prepared {
            cloud: ds,
            up_map,
            degenerate_normals,
            voxel_size: voxel,
        } = self.prepare(&foreground)?;

        let f3d = if self.cfg.feature_mode.uses_3d() {
            let spacing = median_spacing(&ds).ok_or(Error::InsufficientPoints {
                needed: 2,
                got: ds.len(),
            })?;
            let f = fpfh(&ds, g.fpfh_radius_factor * spacing, g.fpfh_weighting)?;
            Some((f.features, f.isolated.len()))
        } else {
            None
        };
        let f2d = match &self.backend {
            Some(b) if self.cfg.feature_mode.uses_2d() => {
                let cam = fit_camera(&ds, &self.cfg.camera_params())?;
                Some(extract_2d_modality(&ds, &self.schedule, &cam, b.as_ref(), &self.cfg.render_options())?)
            }
            _ => None,
        };
        let fused = combine(self.cfg.feature_mode, f2d.as_ref(), f3d.as_ref().map(|f| &f.0))?;
        let features = propagate_to_full(&fused.features, &up_map)?;
        debug!(
            "extracted {} points ({} after downsampling, voxel {voxel:.3e})",
            foreground.len(),
            ds.len()
        );
        Ok(ScanFeatures {
            foreground,
            downsampled: ds,
            up_map,
            features,
            zero_rows_2d: fused.zero_rows_2d,
            zero_rows_3d: fused.zero_rows_3d,
            degenerate_normals,
            isolated_points: f3d.map_or(0, |f| f.1),
        })
    }
}

#[cfg(feature = "onnx")]
fn load_onnx(cfg: &PipelineConfig) -> Result<Box<dyn FeatureBackend>> {
    let s = cfg.render.image_size;
    Ok(Box::new(crate::feat2d::OnnxBackend::load(&cfg.backbone.model, cfg.backbone.dim, s, s)?))
}

#[cfg(not(feature = "onnx"))]
fn load_onnx(cfg: &PipelineConfig) -> Result<Box<dyn FeatureBackend>> {
    Err(Error::Config(format!(
        "backbone {} requires the onnx feature",
        cfg.backbone.model
    )))
}
