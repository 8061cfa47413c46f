use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{find_test_scans, find_train_scans, mask_candidates, stem};
use crate::atomic::write_atomic;
use crate::config::PipelineConfig;
use crate::detect::{load_bank, save_bank, score, AnomalyResult, MemoryBank};
use crate::error::{Error, Result};
use crate::eval::{auroc, load_mask_png, p_pro, scores_to_grid, GroundTruth, Mask};
use crate::heatmap::colorize;
use crate::pcd::ply::to_ascii;
use crate::pcd::tiff::load_organized_tiff;
use crate::pipeline::Extractor;
use crate::render::{fit_camera, render_view};

/// Per-scan output of `score`, one JSON file per test cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub class: String,
    pub defect: String,
    pub stem: String,
    pub height: usize,
    pub width: usize,
    pub image_score: f64,
    /// Color ramp range shared by every heatmap of the run.
    pub score_floor: f64,
    pub score_ceiling: f64,
    pub point_scores: Vec<f64>,
    /// `(row, col)` of each point in the scan grid.
    pub origin_pixels: Vec<[u32; 2]>,
}

impl ScoreRecord {
    pub fn result(&self) -> AnomalyResult {
        AnomalyResult {
            point_scores: self.point_scores.clone(),
            image_score: self.image_score,
            origin_index: Some(self.origin_pixels.iter().map(|p| (p[0], p[1])).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub points_per_cloud: Vec<(String, usize)>,
    pub rows: usize,
    pub dim: usize,
}

/// Extracts features from every training scan and writes the memory bank.
pub fn cmd_fit(cfg: &PipelineConfig, train_dir: &Path, bank_out: &Path) -> Result<FitReport> {
    let scans = find_train_scans(train_dir)?;
    let extractor = Extractor::new(cfg)?;
    let features = scans
        .par_iter()
        .map(|p| extractor.extract(&load_organized_tiff(p)?).map(|f| f.features))
        .collect::<Result<Vec<_>>>()?;
    let points_per_cloud: Vec<(String, usize)> = scans.iter().map(|p| stem(p)).zip(features.iter().map(|f| f.rows())).collect();
    for (s, n) in &points_per_cloud {
        info!("{s}: {n} points");
    }
    let bank = MemoryBank::fit(&features, cfg.coreset_ratio, cfg.seed)?;
    info!("memory bank: {} rows x {} dims", bank.len(), bank.dim());
    if let Some(parent) = bank_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_bank(&bank, bank_out)?;
    Ok(FitReport {
        points_per_cloud,
        rows: bank.len(),
        dim: bank.dim(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Scores every test scan and writes `<out>/<defect>/<stem>.{json,ply}`.
pub fn cmd_score(cfg: &PipelineConfig, bank_in: &Path, test_dir: &Path, out_dir: &Path) -> Result<Vec<ScoreRecord>> {
    let scans = find_test_scans(test_dir)?;
    let dim = cfg.feature_dim();
    let bank = load_bank(bank_in, Some(dim)).map_err(|e| match e {
        Error::DimensionMismatch { expected, found } => Error::InvalidArgument(format!(
            "bank has {found} feature dims but the config produces {expected}"
        )),
        other => other,
    })?;
    let extractor = Extractor::new(cfg)?;
    let scored = scans
        .par_iter()
        .map(|s| {
            let oc = load_organized_tiff(&s.path)?;
            let f = extractor.extract(&oc)?;
            let r = score(&bank, &f.features, f.foreground.origin_index.clone(), cfg.image_score)?;
            Ok((oc.height(), oc.width(), f.foreground, r))
        })
        .collect::<Result<Vec<_>>>()?;

    let all = scored.iter().flat_map(|s| s.3.point_scores.iter().copied());
    let floor = all.clone().fold(f64::INFINITY, f64::min);
    let ceiling = all.fold(f64::NEG_INFINITY, f64::max);

    let mut records = Vec::with_capacity(scans.len());
    for (scan, (height, width, cloud, r)) in scans.iter().zip(scored) {
        let record = ScoreRecord {
            class: scan.class.clone(),
            defect: scan.defect.clone(),
            stem: scan.stem.clone(),
            height,
            width,
            image_score: r.image_score,
            score_floor: floor,
            score_ceiling: ceiling,
            point_scores: r.point_scores,
            origin_pixels: r.origin_index.unwrap_or_default().into_iter().map(|(a, b)| [a, b]).collect(),
        };
        let dir = out_dir.join(&scan.defect);
        create_dir(&dir)?;
        write_json(&dir.join(format!("{}.json", scan.stem)), &record)?;
        let colors = colorize(&record.point_scores, floor, ceiling);
        let ply = to_ascii(&cloud, Some(&colors))?;
        write_atomic(&dir.join(format!("{}.ply", scan.stem)), ply.as_bytes())?;
        info!("{}/{}: image score {:.6e}", scan.defect, scan.stem, record.image_score);
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub clouds: usize,
    /// `None` when the class lacks good or defective clouds.
    pub i_roc: Option<f64>,
    /// `None` when the class has no defect region.
    pub p_pro: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassMetrics>,
    pub mean_i_roc: Option<f64>,
    pub mean_p_pro: Option<f64>,
    /// Scored clouds whose mask was not found.
    pub skipped: Vec<String>,
}

/// Reads every `<defect>/<stem>.json` below `scores_dir`, sorted by path.
pub fn read_score_records(scores_dir: &Path) -> Result<Vec<ScoreRecord>> {
    if !scores_dir.is_dir() {
        return Err(Error::InvalidArgument(format!("scores_dir not found: {}", scores_dir.display())));
    }
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in std::fs::read_dir(scores_dir).map_err(|e| Error::io(scores_dir, e))? {
        let sub = entry.map_err(|e| Error::io(scores_dir, e))?.path();
        if !sub.is_dir() {
            continue;
        }
        for f in std::fs::read_dir(&sub).map_err(|e| Error::io(&sub, e))? {
            let p = f.map_err(|e| Error::io(&sub, e))?.path();
            if p.extension().is_some_and(|e| e == "json") {
                paths.push(p);
            }
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

type Scored = (f64, Vec<f64>, GroundTruth);

/// Per-class image AUROC and pixel PRO over the score grids.
pub fn evaluate_records(records: &[ScoreRecord], gt_dir: &Path, fpr_max: f64) -> Result<EvalReport> {
    let mut by_class: BTreeMap<&str, Vec<Scored>> = BTreeMap::new();
    let mut skipped = Vec::new();
    for r in records {
        let grid = scores_to_grid(&r.result(), r.height, r.width)?;
        let mask = if r.defect == "good" {
            Mask::empty(r.height, r.width)
        } else {
            match mask_candidates(gt_dir, &r.class, &r.defect, &r.stem).iter().find(|p| p.is_file()) {
                Some(p) => load_mask_png(p)?,
                None => {
                    let id = format!("{}/{}/{}", r.class, r.defect, r.stem);
                    warn!("no mask for {id}; skipped");
                    skipped.push(id);
                    continue;
                }
            }
        };
        if (mask.height, mask.width) != (r.height, r.width) {
            return Err(Error::InvalidArgument(format!(
                "mask of {}/{} is {}x{}, scan is {}x{}",
                r.defect, r.stem, mask.height, mask.width, r.height, r.width
            )));
        }
        by_class
            .entry(&r.class)
            .or_default()
            .push((r.image_score, grid.data, GroundTruth::from_grid_mask(&mask)));
    }
    if by_class.is_empty() {
        return Err(Error::InvalidArgument("every scored cloud was skipped".into()));
    }
    let classes: Vec<ClassMetrics> = by_class
        .into_iter()
        .map(|(class, items)| {
            let scores: Vec<f64> = items.iter().map(|i| i.0).collect();
            let labels: Vec<bool> = items.iter().map(|i| i.2.is_anomalous()).collect();
            let grids: Vec<Vec<f64>> = items.iter().map(|i| i.1.clone()).collect();
            let gts: Vec<GroundTruth> = items.into_iter().map(|i| i.2).collect();
            let undefined = |r: Result<f64>| match r {
                Ok(v) => Ok(Some(v)),
                Err(Error::UndefinedMetric(_)) => Ok(None),
                Err(e) => Err(e),
            };
            Ok(ClassMetrics {
                class: class.to_string(),
                clouds: scores.len(),
                i_roc: undefined(auroc(&scores, &labels))?,
                p_pro: undefined(p_pro(&grids, &gts, fpr_max))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        mean_i_roc: mean(classes.iter().filter_map(|c| c.i_roc)),
        mean_p_pro: mean(classes.iter().filter_map(|c| c.p_pro)),
        classes,
        skipped,
    })
}

/// Evaluates a scores directory and writes `metrics.json` into it.
pub fn cmd_eval(scores_dir: &Path, gt_dir: &Path, fpr_max: f64) -> Result<EvalReport> {
    let records = read_score_records(scores_dir)?;
    if records.is_empty() {
        return Err(Error::InvalidArgument(format!("no score files in {}", scores_dir.display())));
    }
    if !gt_dir.is_dir() {
        return Err(Error::InvalidArgument(format!("gt_dir not found: {}", gt_dir.display())));
    }
    let report = evaluate_records(&records, gt_dir, fpr_max)?;
    write_json(&scores_dir.join("metrics.json"), &report)?;
    Ok(report)
}

/// Writes every scheduled view of one scan as `view_NN.png`, plus the
/// segmented foreground as `foreground.ply`. Returns the number of views.
pub fn cmd_render_debug(cfg: &PipelineConfig, scan: &Path, out_dir: &Path) -> Result<usize> {
    if !scan.is_file() {
        return Err(Error::InvalidArgument(format!("scan not found: {}", scan.display())));
    }
    let oc = load_organized_tiff(scan)?;
    let mut light = cfg.clone();
    // Rendering needs geometry only.
    light.feature_mode = crate::fusion::FeatureMode::ThreeD;
    let extractor = Extractor::new(&light)?;
    let fg = extractor.foreground(&oc)?;
    let prepared = extractor.prepare(&fg)?;
    let cam = fit_camera(&prepared.cloud, &cfg.camera_params())?;
    create_dir(out_dir)?;
    write_atomic(&out_dir.join("foreground.ply"), to_ascii(&fg, None)?.as_bytes())?;
    let schedule = extractor.schedule();
    for (k, r) in schedule.rotations.iter().enumerate() {
        let view = render_view(&prepared.cloud, &cam, r, k, cfg.render.splat_px)?;
        view.image.save_png(out_dir.join(format!("view_{k:02}.png")))?;
    }
    info!(
        "rendered {} views of {} points ({} after downsampling)",
        schedule.len(),
        fg.len(),
        prepared.cloud.len()
    );
    Ok(schedule.len())
}
