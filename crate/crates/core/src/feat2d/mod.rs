//! Image-feature modality: backbone contract, feature-map lookup at projected
//! pixels, and multi-view averaging.

mod backend;
#[cfg(feature = "onnx")]
mod onnx;
mod stub;

use rayon::prelude::*;

pub use backend::{extract_feature_map, ChannelNorm, FeatureBackend, FeatureBlock, FeatureMap, IMAGENET_NORM};
#[cfg(feature = "onnx")]
pub use onnx::OnnxBackend;
pub use stub::StubBackend;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Modality};
use crate::pcd::PointCloud;
use crate::render::{in_bounds, render_view, CameraModel, RenderedView, ViewSchedule};

/// Default backbone feature width: 64 + 128 + 256 channels.
pub const DEFAULT_DIM_2D: usize = 448;

/// How a projected sub-pixel position reads the feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelLookup {
    #[default]
    Nearest,
    Bilinear,
}

/// Point-wise features read from one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFeatures {
    pub features: FeatureMatrix,
    pub visible: Vec<bool>,
    pub rotation_id: usize,
}

fn lookup_into(map: &FeatureMap, pix: &[f64; 2], lookup: PixelLookup, out: &mut [f64]) -> bool {
    if pix[0].is_nan() || pix[1].is_nan() {
        return false;
    }
    match lookup {
        PixelLookup::Nearest => {
            let col = pix[0].round().clamp(0.0, (map.width() - 1) as f64) as usize;
            let row = pix[1].round().clamp(0.0, (map.height() - 1) as f64) as usize;
            map.pixel_into(row, col, out);
        }
        PixelLookup::Bilinear => map.sample_into(pix[0], pix[1], out),
    }
    true
}

/// Reads the map at each point's projected pixel (clamped to the image).
/// Points without a projection get a zero row and are marked not visible.
pub fn align_to_points(map: &FeatureMap, view: &RenderedView, lookup: PixelLookup) -> Result<ViewFeatures> {
    if map.width() != view.image.width || map.height() != view.image.height {
        return Err(Error::InvalidArgument(format!(
            "feature map is {}x{}, view is {}x{}",
            map.height(),
            map.width(),
            view.image.height,
            view.image.width
        )));
    }
    let d = map.dim();
    let n = view.pix.len();
    let mut data = vec![0.0; n * d];
    let mut visible = view.visible.clone();
    data.par_chunks_mut(d.max(1))
        .zip(visible.par_iter_mut())
        .enumerate()
        .for_each(|(i, (row, vis))| {
            if !lookup_into(map, &view.pix[i], lookup, row) {
                *vis = false;
            }
        });
    Ok(ViewFeatures {
        features: FeatureMatrix::new(n, d, data, Modality::TwoD)?,
        visible,
        rotation_id: view.rotation_id,
    })
}

/// Per-point mean over views, summed in ascending `rotation_id`.
///
/// With `mask_occluded`, a point averages only the views that see it, falling
/// back to all views when none does.
pub fn aggregate_views(views: &[ViewFeatures], mask_occluded: bool) -> Result<FeatureMatrix> {
    let Some(first) = views.first() else {
        return Err(Error::InvalidArgument("no views to aggregate".into()));
    };
    let (n, d) = (first.features.rows(), first.features.dim());
    for v in views {
        if v.features.rows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: v.features.rows() });
        }
        if v.features.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: v.features.dim() });
        }
    }
    let mut ordered: Vec<&ViewFeatures> = views.iter().collect();
    ordered.sort_by_key(|v| v.rotation_id);
    let mut out = FeatureMatrix::zeros(n, d, Modality::TwoD);
    for i in 0..n {
        let use_mask = mask_occluded && ordered.iter().any(|v| v.visible[i]);
        let row = out.row_mut(i);
        let mut count = 0usize;
        for v in &ordered {
            if use_mask && !v.visible[i] {
                continue;
            }
            count += 1;
            for (o, x) in row.iter_mut().zip(v.features.row(i)) {
                *o += x;
            }
        }
        let k = count as f64;
        row.iter_mut().for_each(|o| *o /= k);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub splat_px: usize,
    pub lookup: PixelLookup,
    pub mask_occluded: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            splat_px: 2,
            lookup: PixelLookup::Nearest,
            mask_occluded: false,
        }
    }
}

/// Renders every scheduled view, runs the backbone on it, reads features
/// back at the projected points and averages them.
///
/// Views are rendered and featurized in parallel; accumulation then walks
/// the views in schedule order, so the result does not depend on scheduling.
pub fn extract_2d_modality(
    pc: &PointCloud,
    schedule: &ViewSchedule,
    cam: &CameraModel,
    backend: &dyn FeatureBackend,
    opts: &RenderOptions,
) -> Result<FeatureMatrix> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty view schedule".into()));
    }
    let per_view: Vec<(RenderedView, FeatureMap)> = schedule
        .rotations
        .par_iter()
        .enumerate()
        .map(|(k, r)| {
            let view = render_view(pc, cam, r, k, opts.splat_px).map_err(|e| Error::Backend {
                view: k,
                message: e.to_string(),
            })?;
            let map = extract_feature_map(backend, &view.image).map_err(|e| match e {
                Error::Backend { message, .. } => Error::Backend { view: k, message },
                other => Error::Backend { view: k, message: other.to_string() },
            })?;
            Ok((view, map))
        })
        .collect::<Result<_>>()?;

    let d = backend.dim();
    let n = pc.len();
    let mut data = vec![0.0; n * d];
    data.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
        let mut scratch = vec![0.0; d];
        let visible = |(v, _): &&(RenderedView, FeatureMap)| {
            v.visible[i] && in_bounds(&v.pix[i], v.image.width, v.image.height)
        };
        let use_mask = opts.mask_occluded && per_view.iter().any(|x| visible(&x));
        let mut count = 0usize;
        for entry in &per_view {
            if use_mask && !visible(&entry) {
                continue;
            }
            count += 1;
            if lookup_into(&entry.1, &entry.0.pix[i], opts.lookup, &mut scratch) {
                for (o, x) in row.iter_mut().zip(&scratch) {
                    *o += x;
                }
            }
        }
        let k = count as f64;
        row.iter_mut().for_each(|o| *o /= k);
    });
    FeatureMatrix::new(n, d, data, Modality::TwoD)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::pcd::{Rotation, Vec3};
    use crate::render::{fit_camera, make_schedule, CameraParams, Image};

    fn constant_map(h: usize, w: usize, values: &[f32]) -> FeatureMap {
        let blocks = vec![FeatureBlock {
            channels: values.len(),
            height: 1,
            width: 1,
            data: values.to_vec(),
        }];
        FeatureMap::new(h, w, blocks).unwrap()
    }

    fn view_with_pix(pix: Vec<[f64; 2]>, h: usize, w: usize) -> RenderedView {
        let n = pix.len();
        RenderedView {
            image: Image::filled(w, h, 1.0),
            visible: pix.iter().map(|p| !p[0].is_nan()).collect(),
            depth: vec![1.0; n],
            pix,
            zbuffer: vec![f64::INFINITY; w * h],
            rotation_id: 0,
        }
    }

    #[test]
    fn constant_map_gives_constant_features() {
        let map = constant_map(8, 8, &[0.5, -2.0]);
        let view = view_with_pix(vec![[0.0, 0.0], [7.0, 3.2], [40.0, -5.0]], 8, 8);
        let vf = align_to_points(&map, &view, PixelLookup::Nearest).unwrap();
        assert!(vf.features.iter_rows().all(|r| r == [0.5, -2.0]));
    }

    #[test]
    fn lookup_uses_row_y_col_x() {
        let (h, w) = (10, 6);
        let data: Vec<f32> = (0..h * w).map(|i| i as f32).collect();
        let map = FeatureMap::new(h, w, vec![FeatureBlock { channels: 1, height: h, width: w, data }]).unwrap();
        let view = view_with_pix(vec![[3.0, 7.0], [2.6, 0.4]], h, w);
        let vf = align_to_points(&map, &view, PixelLookup::Nearest).unwrap();
        assert_eq!(vf.features.row(0), [(7 * w + 3) as f64]);
        assert_eq!(vf.features.row(1), [3.0]);
    }

    #[test]
    fn behind_camera_point_gets_zero_row() {
        let map = constant_map(4, 4, &[1.0, 1.0]);
        let mut view = view_with_pix(vec![[f64::NAN, f64::NAN], [1.0, 1.0]], 4, 4);
        view.visible = vec![true, true];
        let vf = align_to_points(&map, &view, PixelLookup::Nearest).unwrap();
        assert_eq!(vf.features.row(0), [0.0, 0.0]);
        assert_eq!(vf.visible, vec![false, true]);
    }

    #[test]
    fn map_size_mismatch_rejected() {
        let map = constant_map(4, 4, &[1.0]);
        assert!(align_to_points(&map, &view_with_pix(vec![], 5, 4), PixelLookup::Nearest).is_err());
    }

    fn vf(rows: &[Vec<f64>], id: usize) -> ViewFeatures {
        ViewFeatures {
            features: FeatureMatrix::from_rows(rows, Modality::TwoD).unwrap(),
            visible: vec![true; rows.len()],
            rotation_id: id,
        }
    }

    #[test]
    fn two_views_average() {
        let a = vf(&[vec![1.0, 2.0], vec![0.0, 4.0]], 0);
        let b = vf(&[vec![3.0, 0.0], vec![2.0, 2.0]], 1);
        let m = aggregate_views(&[a, b], false).unwrap();
        assert_eq!(m.row(0), [2.0, 1.0]);
        assert_eq!(m.row(1), [1.0, 3.0]);
    }

    #[test]
    fn single_view_passes_through() {
        let a = vf(&[vec![0.1, 0.7]], 0);
        assert_eq!(aggregate_views(std::slice::from_ref(&a), false).unwrap(), a.features);
    }

    #[test]
    fn empty_view_list_rejected() {
        assert!(aggregate_views(&[], false).is_err());
    }

    #[test]
    fn masking_skips_occluded_views() {
        let a = vf(&[vec![1.0], vec![1.0]], 0);
        let mut b = vf(&[vec![5.0], vec![5.0]], 1);
        b.visible = vec![false, true];
        let mut c = vf(&[vec![9.0], vec![9.0]], 2);
        c.visible = vec![false, false];
        let mut a2 = a.clone();
        a2.visible = vec![false, true];
        let m = aggregate_views(&[a.clone(), b.clone(), c.clone()], true).unwrap();
        assert_eq!(m.row(0), [1.0]);
        assert_eq!(m.row(1), [3.0]);
        // Visible nowhere: falls back to the plain mean.
        let mut c2 = c.clone();
        c2.rotation_id = 3;
        let mut b2 = b.clone();
        b2.visible = vec![false, false];
        let m = aggregate_views(&[a2.clone(), b2, c2], true).unwrap();
        assert_eq!(m.row(0), [5.0]);
    }

    proptest! {
        #[test]
        fn copies_average_to_themselves(rows in prop::collection::vec(prop::collection::vec(-1e3f32..1e3, 4), 1..20), k in 1usize..=27) {
            // Backbone outputs are single precision, which makes the sum of <= 27 copies exact.
            let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
            let views: Vec<ViewFeatures> = (0..k).map(|id| vf(&rows, id)).collect();
            let m = aggregate_views(&views, false).unwrap();
            prop_assert_eq!(m, views[0].features.clone());
        }
    }

    fn small_scene() -> (PointCloud, CameraModel) {
        let mut pts = Vec::new();
        for i in 0..12 {
            for j in 0..12 {
                let (x, y) = (i as f64 * 0.01 - 0.06, j as f64 * 0.01 - 0.06);
                pts.push(Vec3::new(x, y, 0.5 + 0.02 * (x * 40.0).sin()));
            }
        }
        let normals = pts.iter().map(|p| Vec3::new(-0.8 * (p.x * 40.0).cos(), 0.0, -1.0).normalize()).collect();
        let pc = PointCloud::from_positions(pts).with_normals(normals).unwrap();
        let cam = fit_camera(&pc, &CameraParams { width: 64, height: 64, ..Default::default() }).unwrap();
        (pc, cam)
    }

    #[test]
    fn pipeline_matches_composed_steps() {
        let (pc, cam) = small_scene();
        let backend = StubBackend::new(3, 64, 64);
        let schedule = make_schedule(4).unwrap();
        let opts = RenderOptions::default();
        let fused = extract_2d_modality(&pc, &schedule, &cam, &backend, &opts).unwrap();
        let views: Vec<ViewFeatures> = schedule
            .rotations
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let v = render_view(&pc, &cam, r, k, opts.splat_px).unwrap();
                let m = extract_feature_map(&backend, &v.image).unwrap();
                align_to_points(&m, &v, opts.lookup).unwrap()
            })
            .collect();
        assert_eq!(fused, aggregate_views(&views, false).unwrap());
        assert_eq!((fused.rows(), fused.dim()), (pc.len(), DEFAULT_DIM_2D));
    }

    #[test]
    fn single_view_constant_backend() {
        let (pc, cam) = small_scene();
        let backend = ConstBackend;
        let f = extract_2d_modality(&pc, &make_schedule(1).unwrap(), &cam, &backend, &RenderOptions::default()).unwrap();
        assert!(f.iter_rows().all(|r| r == [0.25, 4.0]));
    }

    #[test]
    fn serial_and_parallel_runs_agree() {
        let (pc, cam) = small_scene();
        let backend = StubBackend::new(1, 64, 64);
        let schedule = make_schedule(6).unwrap();
        let opts = RenderOptions { mask_occluded: true, ..Default::default() };
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = serial.install(|| extract_2d_modality(&pc, &schedule, &cam, &backend, &opts).unwrap());
        let b = extract_2d_modality(&pc, &schedule, &cam, &backend, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perturbing_unused_pixels_changes_nothing() {
        let (pc, cam) = small_scene();
        let v = render_view(&pc, &cam, &Rotation::identity(), 0, 1).unwrap();
        let map = extract_feature_map(&StubBackend::new(2, 64, 64), &v.image).unwrap().to_dense();
        let used: std::collections::HashSet<(usize, usize)> = v
            .pix
            .iter()
            .map(|p| (p[1].round() as usize, p[0].round() as usize))
            .collect();
        let mut perturbed = map.clone();
        for r in 0..64 {
            for c in 0..64 {
                if !used.contains(&(r, c)) {
                    perturbed.perturb_pixel(r, c, 7.5);
                }
            }
        }
        let a = align_to_points(&map, &v, PixelLookup::Nearest).unwrap();
        let b = align_to_points(&perturbed, &v, PixelLookup::Nearest).unwrap();
        assert_eq!(a, b);
    }

    struct ConstBackend;

    impl FeatureBackend for ConstBackend {
        fn dim(&self) -> usize {
            2
        }
        fn input_size(&self) -> (usize, usize) {
            (64, 64)
        }
        fn normalization(&self) -> ChannelNorm {
            IMAGENET_NORM
        }
        fn infer(&self, _input: &[f32]) -> std::result::Result<Vec<FeatureBlock>, String> {
            Ok(vec![FeatureBlock { channels: 2, height: 2, width: 2, data: vec![0.25, 0.25, 0.25, 0.25, 4.0, 4.0, 4.0, 4.0] }])
        }
    }
}
