//! Pipeline configuration: TOML file, `CPMF_` environment overrides, defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::ImageScore;
use crate::error::{Error, Result};
use crate::feat2d::{PixelLookup, RenderOptions, DEFAULT_DIM_2D};
use crate::feat3d::FpfhWeighting;
use crate::fusion::FeatureMode;
use crate::preprocess::{BackgroundParams, ClusterRetention};
use crate::render::{CameraParams, MAX_VIEWS};

pub const ENV_PREFIX: &str = "CPMF_";

/// Everything that shapes features and scores. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_views: usize,
    pub feature_mode: FeatureMode,
    pub seed: u64,
    /// Fraction of bank rows kept by k-center selection; 1.0 keeps all.
    pub coreset_ratio: f64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub image_score: ImageScore,
    pub backbone: BackboneConfig,
    pub geometry: GeometryConfig,
    pub render: RenderConfig,
    pub preprocess: PreprocessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    /// `"stub"` or a path to an ONNX file.
    pub model: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Voxel edge; when absent, `voxel_fraction` of the bounding-box diagonal.
    pub voxel_size: Option<f64>,
    pub voxel_fraction: f64,
    pub normals_k: usize,
    /// FPFH radius in multiples of the median point spacing after downsampling.
    pub fpfh_radius_factor: f64,
    pub fpfh_weighting: FpfhWeighting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub fov_deg: f64,
    pub margin: f64,
    pub image_size: usize,
    pub splat_px: usize,
    pub lookup: PixelLookup,
    pub mask_occluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub enabled: bool,
    pub strip_width: usize,
    pub ransac_threshold: f64,
    pub ransac_iterations: usize,
    pub db_eps: Option<f64>,
    pub db_min_pts: usize,
    pub retention: ClusterRetention,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_views: MAX_VIEWS,
            feature_mode: FeatureMode::Cpmf,
            seed: 0,
            coreset_ratio: 1.0,
            jobs: 0,
            image_score: ImageScore::Max,
            backbone: BackboneConfig::default(),
            geometry: GeometryConfig::default(),
            render: RenderConfig::default(),
            preprocess: PreprocessConfig::default(),
        }
    }
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            model: "stub".into(),
            dim: DEFAULT_DIM_2D,
        }
    }
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            voxel_size: None,
            voxel_fraction: 0.005,
            normals_k: 30,
            fpfh_radius_factor: 5.0,
            fpfh_weighting: FpfhWeighting::InverseDistance,
        }
    }
}

impl Default for RenderConfig {
    fn default() -> Self {
        let cam = CameraParams::default();
        let opts = RenderOptions::default();
        Self {
            fov_deg: cam.fov_deg,
            margin: cam.margin,
            image_size: cam.width,
            splat_px: opts.splat_px,
            lookup: opts.lookup,
            mask_occluded: opts.mask_occluded,
        }
    }
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        let p = BackgroundParams::default();
        Self {
            enabled: true,
            strip_width: p.strip_width,
            ransac_threshold: p.ransac_threshold,
            ransac_iterations: p.ransac_iterations,
            db_eps: p.db_eps,
            db_min_pts: p.db_min_pts,
            retention: p.retention,
        }
    }
}

/// Dotted keys that may be absent from a serialized config.
const OPTIONAL_KEYS: &[&str] = &["geometry.voxel_size", "preprocess.db_eps"];

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Reads `path` (or starts from defaults), then applies `CPMF_*` variables from `env`.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))?
            }
            None => toml::Table::new(),
        };
        apply_env(&mut table, env)?;
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_views == 0 || self.n_views > MAX_VIEWS {
            return bad(format!("n_views must be in 1..={MAX_VIEWS}, got {}", self.n_views));
        }
        if !(self.coreset_ratio > 0.0 && self.coreset_ratio <= 1.0) {
            return bad(format!("coreset_ratio must be in (0, 1], got {}", self.coreset_ratio));
        }
        if let ImageScore::TopMean { q } = self.image_score {
            if !(q > 0.0 && q <= 1.0) {
                return bad(format!("image_score.q must be in (0, 1], got {q}"));
            }
        }
        if self.backbone.dim == 0 {
            return bad("backbone.dim must be positive".into());
        }
        if self.backbone.model == "stub" && self.backbone.dim != DEFAULT_DIM_2D {
            return bad(format!("the stub backbone has dim {DEFAULT_DIM_2D}, config says {}", self.backbone.dim));
        }
        let g = &self.geometry;
        if let Some(v) = g.voxel_size {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("geometry.voxel_size must be >= 0, got {v}"));
            }
        }
        if !(g.voxel_fraction.is_finite() && g.voxel_fraction >= 0.0) {
            return bad(format!("geometry.voxel_fraction must be >= 0, got {}", g.voxel_fraction));
        }
        if g.normals_k < 3 {
            return bad(format!("geometry.normals_k must be >= 3, got {}", g.normals_k));
        }
        if !(g.fpfh_radius_factor.is_finite() && g.fpfh_radius_factor > 0.0) {
            return bad(format!("geometry.fpfh_radius_factor must be > 0, got {}", g.fpfh_radius_factor));
        }
        let r = &self.render;
        if !(r.fov_deg > 0.0 && r.fov_deg < 180.0) {
            return bad(format!("render.fov_deg must be in (0, 180), got {}", r.fov_deg));
        }
        if !(r.margin.is_finite() && r.margin >= 1.0) {
            return bad(format!("render.margin must be >= 1, got {}", r.margin));
        }
        if r.image_size < 16 {
            return bad(format!("render.image_size must be >= 16, got {}", r.image_size));
        }
        let p = &self.preprocess;
        if p.strip_width == 0 || p.ransac_iterations == 0 || p.db_min_pts == 0 {
            return bad("preprocess.strip_width, ransac_iterations and db_min_pts must be positive".into());
        }
        if !(p.ransac_threshold.is_finite() && p.ransac_threshold > 0.0) {
            return bad(format!("preprocess.ransac_threshold must be > 0, got {}", p.ransac_threshold));
        }
        if let Some(e) = p.db_eps {
            if !(e.is_finite() && e > 0.0) {
                return bad(format!("preprocess.db_eps must be > 0, got {e}"));
            }
        }
        Ok(())
    }

    pub fn camera_params(&self) -> CameraParams {
        CameraParams {
            fov_deg: self.render.fov_deg,
            margin: self.render.margin,
            width: self.render.image_size,
            height: self.render.image_size,
        }
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            splat_px: self.render.splat_px,
            lookup: self.render.lookup,
            mask_occluded: self.render.mask_occluded,
        }
    }

    pub fn background_params(&self) -> BackgroundParams {
        let p = &self.preprocess;
        BackgroundParams {
            strip_width: p.strip_width,
            ransac_threshold: p.ransac_threshold,
            ransac_iterations: p.ransac_iterations,
            db_eps: p.db_eps,
            db_min_pts: p.db_min_pts,
            retention: p.retention,
            seed: self.seed,
        }
    }

    /// Width of the fused feature rows for this configuration.
    pub fn feature_dim(&self) -> usize {
        let mut d = 0;
        if self.feature_mode.uses_2d() {
            d += self.backbone.dim;
        }
        if self.feature_mode.uses_3d() {
            d += crate::feat3d::FPFH_DIM;
        }
        d
    }
}

/// Every dotted key path a config can carry, e.g. `render.fov_deg`.
fn known_keys() -> Vec<String> {
    fn walk(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
        match v {
            toml::Value::Table(t) => {
                for (k, child) in t {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    // Tagged enums serialize as tables but are set as a whole.
                    if child.is_table() && key != "image_score" {
                        walk(&key, child, out);
                    } else {
                        out.push(key);
                    }
                }
            }
            _ => out.push(prefix.to_string()),
        }
    }
    let mut out = Vec::new();
    walk("", &toml::Value::try_from(PipelineConfig::default()).expect("serializes"), &mut out);
    out.extend(OPTIONAL_KEYS.iter().map(|s| s.to_string()));
    out
}

/// Parses an override as a TOML value, falling back to a bare string.
fn parse_env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// `CPMF_RENDER_FOV_DEG=45` sets `render.fov_deg`. Unknown `CPMF_` names are errors.
fn apply_env(table: &mut toml::Table, env: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    let keys = known_keys();
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k != "CPMF_LOG")
        .collect();
    vars.sort();
    for (name, raw) in vars {
        let flat = name[ENV_PREFIX.len()..].to_ascii_lowercase();
        let key = keys
            .iter()
            .find(|k| k.replace('.', "_") == flat)
            .ok_or_else(|| Error::Config(format!("environment variable {name} does not name a config key")))?;
        set_path(table, key, parse_env_value(&raw))?;
    }
    Ok(())
}

pub(crate) fn set_path(table: &mut toml::Table, dotted: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = dotted.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = PipelineConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.n_views, 27);
        assert_eq!(cfg.feature_dim(), 481);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let text = "n_views = 9\nfeature_mode = \"3d\"\n[geometry]\nvoxel_size = 0.002\n[image_score]\nkind = \"top_mean\"\nq = 0.01\n";
        let a = PipelineConfig::from_toml_str(text).unwrap();
        let b = PipelineConfig::from_toml_str(&a.to_toml_string()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_toml_string(), b.to_toml_string());
        assert_eq!(a.geometry.voxel_size, Some(0.002));
    }

    #[test]
    fn full_listing_equals_defaults() {
        let text = r#"
            n_views = 27
            feature_mode = "cpmf"
            seed = 0
            coreset_ratio = 1.0
            jobs = 0
            image_score = { kind = "max" }
            [backbone]
            model = "stub"
            dim = 448
            [geometry]
            voxel_fraction = 0.005
            normals_k = 30
            fpfh_radius_factor = 5.0
            fpfh_weighting = "inverse_distance"
            [render]
            fov_deg = 60.0
            margin = 1.1
            image_size = 224
            splat_px = 2
            lookup = "nearest"
            mask_occluded = false
            [preprocess]
            enabled = true
            strip_width = 10
            ransac_threshold = 0.005
            ransac_iterations = 500
            db_min_pts = 10
            retention = "largest"
        "#;
        assert_eq!(PipelineConfig::from_toml_str(text).unwrap(), PipelineConfig::default());
        let top = PipelineConfig::from_toml_str("image_score = { kind = \"top_mean\", q = 0.01 }").unwrap();
        assert_eq!(top.image_score, ImageScore::TopMean { q: 0.01 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(PipelineConfig::from_toml_str("n_view = 3"), Err(Error::Config(_))));
        assert!(matches!(
            PipelineConfig::from_toml_str("[render]\nfov = 3.0"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        assert!(PipelineConfig::from_toml_str("n_views = 28").is_err());
        assert!(PipelineConfig::from_toml_str("coreset_ratio = 0.0").is_err());
        assert!(PipelineConfig::from_toml_str("[backbone]\ndim = 512").is_err());
    }

    #[test]
    fn env_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "n_views = 3\n[render]\nfov_deg = 50.0\n").unwrap();
        let cfg = PipelineConfig::load(
            Some(&p),
            env(&[
                ("CPMF_N_VIEWS", "5"),
                ("CPMF_FEATURE_MODE", "2d"),
                ("CPMF_GEOMETRY_VOXEL_SIZE", "0.01"),
                ("HOME", "/root"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.n_views, 5);
        assert_eq!(cfg.render.fov_deg, 50.0);
        assert_eq!(cfg.feature_mode, FeatureMode::TwoD);
        assert_eq!(cfg.geometry.voxel_size, Some(0.01));
    }

    #[test]
    fn unknown_env_key_is_an_error() {
        assert!(matches!(
            PipelineConfig::load(None, env(&[("CPMF_BOGUS", "1")])),
            Err(Error::Config(_))
        ));
    }
}
