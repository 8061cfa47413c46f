//! Fit, score and evaluate the synthetic plate set in all three feature modes.
//!
//!     cargo run --example end_to_end -- [n_views]

use cpmf::config::PipelineConfig;
use cpmf::detect::{score, MemoryBank};
use cpmf::eval::{auroc, p_pro, scores_to_grid, GroundTruth};
use cpmf::fusion::FeatureMode;
use cpmf::pipeline::Extractor;
use cpmf::synthetic::{plate_dataset, PlateSpec};

fn main() -> cpmf::Result<()> {
    let views = std::env::args().nth(1).map_or(27, |v| v.parse().expect("n_views must be an integer"));
    let spec = PlateSpec::default();
    let ds = plate_dataset(&spec, 0);

    for mode in [FeatureMode::ThreeD, FeatureMode::TwoD, FeatureMode::Cpmf] {
        let cfg = PipelineConfig {
            feature_mode: mode,
            n_views: views,
            ..PipelineConfig::default()
        };
        let started = std::time::Instant::now();
        let extractor = Extractor::new(&cfg)?;
        let train = ds
            .train
            .iter()
            .map(|s| extractor.extract(&s.cloud).map(|f| f.features))
            .collect::<cpmf::Result<Vec<_>>>()?;
        let bank = MemoryBank::fit(&train, cfg.coreset_ratio, cfg.seed)?;

        let (mut image_scores, mut labels, mut grids, mut gts) = (vec![], vec![], vec![], vec![]);
        for s in &ds.test {
            let f = extractor.extract(&s.cloud)?;
            let r = score(&bank, &f.features, f.foreground.origin_index.clone(), cfg.image_score)?;
            image_scores.push(r.image_score);
            labels.push(s.defect.is_some());
            grids.push(scores_to_grid(&r, spec.height, spec.width)?.data);
            gts.push(GroundTruth::from_grid_mask(&s.mask));
        }
        println!(
            "{mode:>4}: bank {} x {}, I-AUROC {:.3}, P-PRO {:.3}  ({:.1?})",
            bank.len(),
            bank.dim(),
            auroc(&image_scores, &labels)?,
            p_pro(&grids, &gts, 0.3)?,
            started.elapsed()
        );
    }
    Ok(())
}
