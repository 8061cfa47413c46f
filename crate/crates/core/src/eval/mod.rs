//! Image-level AUROC, region-overlap (PRO) area, and the bridge from point
//! scores to mask pixels.

mod ground_truth;

pub use ground_truth::{load_mask_png, scores_to_grid, GroundTruth, Mask, ScoreGrid};

use crate::error::{Error, Result};

/// Default upper false-positive-rate limit for the PRO integral.
pub const DEFAULT_FPR_MAX: f64 = 0.3;

fn check_finite(scores: &[f64]) -> Result<()> {
    match scores.iter().position(|s| !s.is_finite()) {
        Some(i) => Err(Error::InvalidArgument(format!("score {i} is not finite"))),
        None => Ok(()),
    }
}

/// Area under the ROC curve as the Mann-Whitney statistic with tied scores
/// sharing their average rank.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    check_finite(scores)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUROC needs both classes, got {pos} positive and {neg} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let rank = (i + j + 2) as f64 / 2.0;
        let hits = order[i..=j].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += rank * hits as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// One vertex of the PRO curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub pro: f64,
}

/// PRO curve over every distinct pooled score, from the strictest threshold
/// down. The first vertex is `(0, 0)` at `+inf`.
pub fn pro_curve(scores: &[Vec<f64>], gts: &[GroundTruth]) -> Result<Vec<ProPoint>> {
    if scores.len() != gts.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: gts.len(),
        });
    }
    // region_of[cloud][point] = global region id, or usize::MAX for normal points.
    let mut region_size = Vec::new();
    let mut pooled = Vec::new();
    let mut normals = 0usize;
    for (c, (s, gt)) in scores.iter().zip(gts).enumerate() {
        if s.len() != gt.len() {
            return Err(Error::DimensionMismatch {
                expected: gt.len(),
                found: s.len(),
            });
        }
        check_finite(s)?;
        let mut region_of = vec![usize::MAX; s.len()];
        for r in gt.regions() {
            for &p in r {
                region_of[p] = region_size.len();
            }
            region_size.push(r.len());
        }
        for (p, &v) in s.iter().enumerate() {
            if !gt.labels()[p] {
                normals += 1;
            }
            pooled.push((v, c, p, region_of[p], gt.labels()[p]));
        }
    }
    if region_size.is_empty() {
        return Err(Error::UndefinedMetric("PRO needs at least one defect region".into()));
    }
    if normals == 0 {
        return Err(Error::UndefinedMetric("PRO needs at least one normal point".into()));
    }
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let n_regions = region_size.len() as f64;
    let mut hit = vec![0usize; region_size.len()];
    let mut overlap_sum = 0.0;
    let mut false_pos = 0usize;
    let mut curve = vec![ProPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        pro: 0.0,
    }];
    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == t {
            let (_, _, _, region, anomalous) = pooled[i];
            if region != usize::MAX {
                let before = hit[region] as f64 / region_size[region] as f64;
                hit[region] += 1;
                overlap_sum += hit[region] as f64 / region_size[region] as f64 - before;
            } else if !anomalous {
                false_pos += 1;
            }
            i += 1;
        }
        curve.push(ProPoint {
            threshold: t,
            fpr: false_pos as f64 / normals as f64,
            pro: overlap_sum / n_regions,
        });
    }
    Ok(curve)
}

/// Trapezoidal area under `(fpr, pro)` on `[0, fpr_max]`, divided by `fpr_max`.
pub fn integrate_pro(curve: &[ProPoint], fpr_max: f64) -> f64 {
    let mut area = 0.0;
    for w in curve.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.fpr >= fpr_max {
            break;
        }
        if b.fpr <= fpr_max {
            area += (b.fpr - a.fpr) * (a.pro + b.pro) / 2.0;
        } else {
            let t = (fpr_max - a.fpr) / (b.fpr - a.fpr);
            let pro_at = a.pro + t * (b.pro - a.pro);
            area += (fpr_max - a.fpr) * (a.pro + pro_at) / 2.0;
            break;
        }
    }
    area / fpr_max
}

/// Normalized area under the per-region-overlap curve up to `fpr_max`.
pub fn p_pro(scores: &[Vec<f64>], gts: &[GroundTruth], fpr_max: f64) -> Result<f64> {
    if !(fpr_max > 0.0 && fpr_max <= 1.0) {
        return Err(Error::InvalidArgument(format!("fpr_max {fpr_max} is outside (0, 1]")));
    }
    Ok(integrate_pro(&pro_curve(scores, gts)?, fpr_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair_count(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    if si > sj {
                        wins += 1.0;
                    } else if si == sj {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    /// Recomputes FPR and mean overlap from scratch at every distinct threshold.
    fn exhaustive_pro(scores: &[Vec<f64>], gts: &[GroundTruth], fpr_max: f64) -> f64 {
        let mut thresholds: Vec<f64> = scores.concat();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let normals: usize = gts.iter().map(|g| g.labels().iter().filter(|&&l| !l).count()).sum();
        let regions: usize = gts.iter().map(|g| g.regions().len()).sum();
        let mut pts = vec![(0.0f64, 0.0f64)];
        for &t in &thresholds {
            let mut fp = 0;
            let mut overlap = 0.0;
            for (s, g) in scores.iter().zip(gts) {
                fp += (0..s.len()).filter(|&p| !g.labels()[p] && s[p] >= t).count();
                for r in g.regions() {
                    overlap += r.iter().filter(|&&p| s[p] >= t).count() as f64 / r.len() as f64;
                }
            }
            pts.push((fp as f64 / normals as f64, overlap / regions as f64));
        }
        // Clip each segment against [0, fpr_max] and sum trapezoids.
        let mut area = 0.0;
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            let lo = x0.min(fpr_max);
            let hi = x1.min(fpr_max);
            if hi <= lo {
                continue;
            }
            let y = |x: f64| y0 + (y1 - y0) * (x - x0) / (x1 - x0);
            area += (hi - lo) * (y(lo) + y(hi)) / 2.0;
        }
        area / fpr_max
    }

    #[test]
    fn perfect_and_inverted_ranking() {
        assert_eq!(auroc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auroc(&[1.0, 2.0], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn perfect_separation_gives_full_pro() {
        let gt = GroundTruth::from_regions(5, vec![vec![3, 4]]).unwrap();
        let s = vec![vec![0.1, 0.2, 0.0, 0.9, 0.8]];
        assert!((p_pro(&s, &[gt], 0.3).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_of_regions_found_at_zero_fpr() {
        let gt = GroundTruth::from_regions(6, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let s = vec![vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]];
        let curve = pro_curve(&s, std::slice::from_ref(&gt)).unwrap();
        assert_eq!(curve[1].fpr, 0.0);
        assert_eq!(curve[1].pro, 0.5);
        let want = exhaustive_pro(&s, std::slice::from_ref(&gt), 0.3);
        assert!((p_pro(&s, &[gt], 0.3).unwrap() - want).abs() < 1e-12);
        // The missed region only enters at fpr = 1, so the capped curve sits at 0.5.
        assert!((want - (0.5 + 0.5 * 0.15)).abs() < 1e-12);
    }

    #[test]
    fn constant_scores_match_oracle() {
        let gt = GroundTruth::from_regions(4, vec![vec![0]]).unwrap();
        let s = vec![vec![0.7; 4]];
        let got = p_pro(&s, std::slice::from_ref(&gt), 0.3).unwrap();
        assert!((got - exhaustive_pro(&s, &[gt], 0.3)).abs() < 1e-12);
        assert!((got - 0.15).abs() < 1e-12);
    }

    #[test]
    fn no_regions_is_undefined() {
        let s = vec![vec![0.1, 0.2]];
        assert!(matches!(
            p_pro(&s, &[GroundTruth::normal(2)], 0.3),
            Err(Error::UndefinedMetric(_))
        ));
    }

    fn labelled(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        prop::collection::vec((0u8..12, any::<bool>()), n)
            .prop_map(|v| (v.iter().map(|p| p.0 as f64 / 4.0).collect(), v.iter().map(|p| p.1).collect()))
    }

    fn pro_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<GroundTruth>)> {
        prop::collection::vec(
            (4usize..40).prop_flat_map(|n| {
                (
                    prop::collection::vec(0u8..20, n),
                    prop::collection::vec(0u8..4, n),
                )
            }),
            1..4,
        )
        .prop_map(|clouds| {
            let mut scores = Vec::new();
            let mut gts = Vec::new();
            for (s, tag) in clouds {
                // tag 0 and 1 pick one of two regions; everything else is normal.
                let regions: Vec<Vec<usize>> = (0..2)
                    .map(|r| (0..tag.len()).filter(|&i| tag[i] == r as u8).collect::<Vec<_>>())
                    .filter(|r| !r.is_empty())
                    .collect();
                scores.push(s.iter().map(|&v| v as f64 / 7.0).collect());
                gts.push(GroundTruth::from_regions(tag.len(), regions).unwrap());
            }
            (scores, gts)
        })
    }

    proptest! {
        #[test]
        fn auroc_matches_pair_count((s, l) in labelled(2..50)) {
            prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
            prop_assert!((auroc(&s, &l).unwrap() - pair_count(&s, &l)).abs() < 1e-12);
        }

        #[test]
        fn auroc_is_rank_invariant((s, l) in labelled(2..50)) {
            prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(auroc(&s, &l).unwrap(), auroc(&t, &l).unwrap());
        }

        #[test]
        fn p_pro_matches_exhaustive_oracle((s, g) in pro_instance(), cap in 0.05f64..1.0) {
            prop_assume!(g.iter().any(|x| !x.regions().is_empty()));
            prop_assume!(g.iter().any(|x| x.labels().iter().any(|&l| !l)));
            let got = p_pro(&s, &g, cap).unwrap();
            prop_assert!((got - exhaustive_pro(&s, &g, cap)).abs() < 1e-9);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&got));
        }

        #[test]
        fn p_pro_is_rank_invariant((s, g) in pro_instance()) {
            prop_assume!(g.iter().any(|x| !x.regions().is_empty()));
            prop_assume!(g.iter().any(|x| x.labels().iter().any(|&l| !l)));
            let t: Vec<Vec<f64>> = s.iter().map(|c| c.iter().map(|v| v.powi(3) + 2.0).collect()).collect();
            prop_assert!((p_pro(&s, &g, 0.3).unwrap() - p_pro(&t, &g, 0.3).unwrap()).abs() < 1e-12);
        }
    }
}
