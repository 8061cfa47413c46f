//! Image-level AUROC and region-overlap PRO on a hand-made score set.

use cpmf::eval::{auroc, p_pro, pro_curve, GroundTruth, Mask};

fn main() -> cpmf::Result<()> {
    let image_scores = [0.91, 0.12, 0.40, 0.85, 0.33, 0.40];
    let labels = [true, false, false, true, false, true];
    println!("I-AUROC = {:.4}", auroc(&image_scores, &labels)?);

    // A 4x6 scan with two defect blobs; one is scored high, one barely.
    let mask = Mask::new(
        4,
        6,
        "##....##..............##".chars().map(|c| c == '#').collect(),
    )?;
    let gt = GroundTruth::from_grid_mask(&mask);
    println!("regions: {:?}", gt.regions());
    let scores: Vec<f64> = mask
        .data
        .iter()
        .enumerate()
        .map(|(i, &m)| match (m, i % 6 < 3) {
            (true, true) => 0.9,
            (true, false) => 0.3,
            (false, _) => (i % 5) as f64 / 10.0,
        })
        .collect();
    let good = GroundTruth::from_grid_mask(&Mask::empty(4, 6));
    let good_scores: Vec<f64> = (0..24).map(|i| (i % 7) as f64 / 20.0).collect();

    let all = [scores, good_scores];
    let gts = [gt, good];
    for point in pro_curve(&all, &gts)?.iter().take(6) {
        println!("  threshold {:>6.3}  fpr {:.3}  pro {:.3}", point.threshold, point.fpr, point.pro);
    }
    println!("P-PRO (fpr <= 0.3) = {:.4}", p_pro(&all, &gts, 0.3)?);
    Ok(())
}
