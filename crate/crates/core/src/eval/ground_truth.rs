use std::path::Path;

use crate::detect::AnomalyResult;
use crate::error::{Error, Result};

/// Binary H x W defect mask in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                found: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    /// Connected components under 8-connectivity, labelled `1..` in raster
    /// order of their first pixel; background is 0.
    pub fn components(&self) -> (Vec<u32>, usize) {
        let (h, w) = (self.height, self.width);
        let mut label = vec![0u32; h * w];
        let mut count = 0u32;
        let mut stack = Vec::new();
        for start in 0..h * w {
            if !self.data[start] || label[start] != 0 {
                continue;
            }
            count += 1;
            label[start] = count;
            stack.push(start);
            while let Some(p) = stack.pop() {
                let (r, c) = (p / w, p % w);
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                            continue;
                        }
                        let q = nr as usize * w + nc as usize;
                        if self.data[q] && label[q] == 0 {
                            label[q] = count;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        (label, count as usize)
    }
}

/// Reads a single-channel PNG; any nonzero pixel is anomalous.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        image::DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v != 0).collect(),
        image::DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v != 0).collect(),
        other => {
            return Err(Error::Format(format!(
                "{}: mask must be single-channel, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    Mask::new(h, w, data)
}

/// Point labels and the defect regions they fall in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    labels: Vec<bool>,
    regions: Vec<Vec<usize>>,
}

impl GroundTruth {
    /// A cloud of `n` normal points.
    pub fn normal(n: usize) -> Self {
        Self {
            labels: vec![false; n],
            regions: Vec::new(),
        }
    }

    /// Builds labels and regions from explicit disjoint index sets.
    pub fn from_regions(n: usize, regions: Vec<Vec<usize>>) -> Result<Self> {
        let mut labels = vec![false; n];
        for r in &regions {
            if r.is_empty() {
                return Err(Error::InvalidArgument("empty defect region".into()));
            }
            for &i in r {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, len: n });
                }
                if labels[i] {
                    return Err(Error::InvalidArgument(format!("point {i} is in two regions")));
                }
                labels[i] = true;
            }
        }
        Ok(Self { labels, regions })
    }

    /// Labels points by the mask pixel they came from; regions are the mask's
    /// connected components restricted to surviving points. Components with no
    /// surviving point are dropped.
    pub fn from_mask(mask: &Mask, origin_index: &[(u32, u32)]) -> Result<Self> {
        let (comp, count) = mask.components();
        let mut regions = vec![Vec::new(); count];
        for (i, &(r, c)) in origin_index.iter().enumerate() {
            let (r, c) = (r as usize, c as usize);
            if r >= mask.height || c >= mask.width {
                return Err(Error::IndexOutOfRange {
                    index: r * mask.width + c,
                    len: mask.height * mask.width,
                });
            }
            let l = comp[r * mask.width + c];
            if l > 0 {
                regions[l as usize - 1].push(i);
            }
        }
        regions.retain(|r| !r.is_empty());
        Self::from_regions(origin_index.len(), regions)
    }

    /// Every pixel of the mask is a point, in row-major order.
    pub fn from_grid_mask(mask: &Mask) -> Self {
        let (comp, count) = mask.components();
        let mut regions = vec![Vec::new(); count];
        for (i, &l) in comp.iter().enumerate() {
            if l > 0 {
                regions[l as usize - 1].push(i);
            }
        }
        Self {
            labels: mask.data.clone(),
            regions,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn regions(&self) -> &[Vec<usize>] {
        &self.regions
    }

    /// Image-level label.
    pub fn is_anomalous(&self) -> bool {
        self.labels.iter().any(|&l| l)
    }
}

/// Row-major H x W image of scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Scatters point scores to their origin pixels; pixels without a point score 0.
pub fn scores_to_grid(result: &AnomalyResult, height: usize, width: usize) -> Result<ScoreGrid> {
    let origin = result
        .origin_index
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("anomaly result has no origin pixels".into()))?;
    if origin.len() != result.point_scores.len() {
        return Err(Error::DimensionMismatch {
            expected: result.point_scores.len(),
            found: origin.len(),
        });
    }
    let mut data = vec![0.0f64; height * width];
    for (&(r, c), &s) in origin.iter().zip(&result.point_scores) {
        let (r, c) = (r as usize, c as usize);
        if r >= height || c >= width {
            return Err(Error::IndexOutOfRange {
                index: r * width + c,
                len: height * width,
            });
        }
        let cell = &mut data[r * width + c];
        *cell = cell.max(s);
    }
    Ok(ScoreGrid { height, width, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> Mask {
        let h = rows.len();
        let w = rows[0].len();
        Mask::new(h, w, rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect()).unwrap()
    }

    #[test]
    fn diagonal_pixels_join_one_component() {
        let m = mask(&["#..", ".#.", "..#"]);
        assert_eq!(m.components().1, 1);
    }

    #[test]
    fn separated_blobs_are_distinct_regions() {
        let m = mask(&["##..#", "##..#", ".....", "#...."]);
        let gt = GroundTruth::from_grid_mask(&m);
        assert_eq!(gt.regions().len(), 3);
        assert_eq!(gt.regions()[0], vec![0, 1, 5, 6]);
        assert_eq!(gt.regions()[1], vec![4, 9]);
        assert_eq!(gt.regions()[2], vec![15]);
    }

    #[test]
    fn regions_partition_anomalous_points() {
        let m = mask(&["#.#", "...", "##."]);
        let origin: Vec<(u32, u32)> = vec![(0, 0), (0, 1), (2, 1), (2, 0), (1, 1)];
        let gt = GroundTruth::from_mask(&m, &origin).unwrap();
        let mut covered: Vec<usize> = gt.regions().concat();
        covered.sort_unstable();
        let anomalous: Vec<usize> = (0..origin.len()).filter(|&i| gt.labels()[i]).collect();
        assert_eq!(covered, anomalous);
        // (0, 2) has no point, so its component vanishes.
        assert_eq!(gt.regions().len(), 2);
        assert!(gt.is_anomalous());
    }

    #[test]
    fn overlapping_regions_are_rejected() {
        assert!(GroundTruth::from_regions(3, vec![vec![0, 1], vec![1]]).is_err());
        assert!(GroundTruth::from_regions(3, vec![vec![3]]).is_err());
    }

    #[test]
    fn grid_fills_missing_pixels_with_zero_and_conserves_sum() {
        let r = AnomalyResult {
            point_scores: vec![0.5, 2.0, 1.25],
            image_score: 2.0,
            origin_index: Some(vec![(0, 1), (1, 0), (1, 2)]),
        };
        let g = scores_to_grid(&r, 2, 3).unwrap();
        assert_eq!(g.data, vec![0.0, 0.5, 0.0, 2.0, 0.0, 1.25]);
        assert_eq!(g.data.iter().sum::<f64>(), 3.75);
    }

    #[test]
    fn png_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let img = image::GrayImage::from_raw(3, 2, vec![0, 255, 0, 0, 0, 1]).unwrap();
        img.save(&p).unwrap();
        let m = load_mask_png(&p).unwrap();
        assert_eq!((m.height, m.width), (2, 3));
        assert_eq!(m.data, vec![false, true, false, false, false, true]);
    }

    #[test]
    fn rgb_mask_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        image::RgbImage::new(2, 2).save(&p).unwrap();
        assert!(matches!(load_mask_png(&p), Err(Error::Format(_))));
    }
}
