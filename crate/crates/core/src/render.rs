//! Pseudo image modality: multi-view point-splat rendering with exact
//! point-to-pixel correspondences.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::pcd::{rotation_from_angles, PointCloud, Rotation, Vec3};

/// Diffuse albedo of rendered surfaces. Kept below 1 so that a surface facing
/// the camera head-on is still distinguishable from the white background.
pub const ALBEDO: f32 = 0.8;
pub const BACKGROUND: f32 = 1.0;
/// Per-axis angles of the default view list.
pub const VIEW_ANGLES: [f64; 3] = [-PI / 16.0, 0.0, PI / 16.0];
pub const MAX_VIEWS: usize = 27;

/// Row-major `height x width` RGB image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height * 3],
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_gray(&mut self, row: usize, col: usize, v: f32) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].fill(v);
    }

    /// 8-bit dump with a linear `[0, 1] -> [0, 255]` scale.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer matches dimensions");
        img.save(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Rigid world-to-camera transform `x_cam = rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsic {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Extrinsic {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }
}

/// Pinhole camera shared by every view of one cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub extrinsic: Extrinsic,
    /// Cloud centroid; views rotate the cloud about this point.
    pub center: Vec3,
    /// Bounding-sphere radius of the cloud about `center`.
    pub radius: f64,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize, extrinsic: Extrinsic) -> Result<Self> {
        let ok = fx > 0.0
            && fy > 0.0
            && (0.0..width as f64).contains(&cx)
            && (0.0..height as f64).contains(&cy);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "bad intrinsics fx={fx} fy={fy} cx={cx} cy={cy} for {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsic,
            center: Vec3::zeros(),
            radius: 1.0,
        })
    }

    /// Depth slack used when deciding whether a point survived the z-buffer.
    pub fn depth_tolerance(&self) -> f64 {
        0.01 * self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraParams {
    pub fov_deg: f64,
    pub margin: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            fov_deg: 60.0,
            margin: 1.1,
            width: 224,
            height: 224,
        }
    }
}

/// Places the camera on the -z axis of the centered cloud, looking at the
/// centroid from `margin * r / tan(fov / 2)` away.
pub fn fit_camera(pc: &PointCloud, params: &CameraParams) -> Result<CameraModel> {
    if pc.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(params.fov_deg > 0.0 && params.fov_deg < 180.0) || !(params.margin > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "fov {} / margin {} out of range",
            params.fov_deg, params.margin
        )));
    }
    let center = pc.centroid();
    let radius = pc
        .positions
        .iter()
        .map(|p| (p - center).norm())
        .fold(0.0, f64::max)
        .max(1e-3);
    let half = (params.fov_deg / 2.0).to_radians().tan();
    let distance = params.margin * radius / half;
    let focal = (params.width as f64 / 2.0) / half;
    let mut cam = CameraModel::new(
        focal,
        focal,
        (params.width as f64 - 1.0) / 2.0,
        (params.height as f64 - 1.0) / 2.0,
        params.width,
        params.height,
        Extrinsic {
            rotation: Matrix3::identity(),
            translation: Vec3::new(0.0, 0.0, distance),
        },
    )?;
    cam.center = center;
    cam.radius = radius;
    Ok(cam)
}

/// Pixel coordinates and camera-space depth of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `(x, y)` = `(column, row)`; `NaN` for points at or behind the camera plane.
    pub pix: Vec<[f64; 2]>,
    pub depth: Vec<f64>,
}

pub fn project(pc: &PointCloud, cam: &CameraModel) -> Projection {
    let mut pix = Vec::with_capacity(pc.len());
    let mut depth = Vec::with_capacity(pc.len());
    for p in &pc.positions {
        let c = cam.extrinsic.apply(p);
        depth.push(c.z);
        if c.z > 0.0 {
            pix.push([cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy]);
        } else {
            pix.push([f64::NAN, f64::NAN]);
        }
    }
    Projection { pix, depth }
}

/// The rotation list used to render one cloud from several viewpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSchedule {
    pub angles: Vec<[f64; 3]>,
    pub rotations: Vec<Rotation>,
}

impl ViewSchedule {
    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }
}

/// The first `n_views` entries of `{-pi/16, 0, pi/16}^3` in lexicographic
/// order, with the unrotated view moved to the front.
pub fn make_schedule(n_views: usize) -> Result<ViewSchedule> {
    if !(1..=MAX_VIEWS).contains(&n_views) {
        return Err(Error::InvalidArgument(format!(
            "view count must be in 1..={MAX_VIEWS}, got {n_views}"
        )));
    }
    let mut angles = vec![[0.0; 3]];
    for &x in &VIEW_ANGLES {
        for &y in &VIEW_ANGLES {
            for &z in &VIEW_ANGLES {
                if [x, y, z] != [0.0; 3] {
                    angles.push([x, y, z]);
                }
            }
        }
    }
    angles.truncate(n_views);
    let rotations = angles
        .iter()
        .map(|a| rotation_from_angles(a[0], a[1], a[2]))
        .collect::<Result<_>>()?;
    Ok(ViewSchedule { angles, rotations })
}

/// One rendered view and the per-point correspondences into it.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub image: Image,
    pub pix: Vec<[f64; 2]>,
    pub depth: Vec<f64>,
    pub visible: Vec<bool>,
    /// Nearest depth per pixel, `+inf` where nothing was drawn.
    pub zbuffer: Vec<f64>,
    pub rotation_id: usize,
}

impl RenderedView {
    pub fn covered(&self, row: usize, col: usize) -> bool {
        self.zbuffer[row * self.image.width + col].is_finite()
    }
}

/// Whether a projected position rounds to a pixel inside a `width x height` image.
pub fn in_bounds(pix: &[f64; 2], width: usize, height: usize) -> bool {
    pix[0] >= 0.0 && pix[1] >= 0.0 && pix[0] <= (width - 1) as f64 && pix[1] <= (height - 1) as f64
}

/// Rotates the centered cloud, projects it, and splats every point as a disk
/// of radius `splat_px` into a z-buffered image with headlight shading.
pub fn render_view(
    pc: &PointCloud,
    cam: &CameraModel,
    rotation: &Rotation,
    rotation_id: usize,
    splat_px: usize,
) -> Result<RenderedView> {
    if pc.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let Some(normals) = pc.normals.as_ref() else {
        return Err(Error::InvalidArgument("rendering requires normals for shading".into()));
    };
    if splat_px == 0 {
        return Err(Error::InvalidArgument("splat radius must be at least 1 pixel".into()));
    }
    let r = rotation.matrix();
    let moved = PointCloud::from_positions(pc.positions.iter().map(|p| r * (p - cam.center)).collect());
    let Projection { pix, depth } = project(&moved, cam);

    let (w, h) = (cam.width, cam.height);
    let mut image = Image::filled(w, h, BACKGROUND);
    let mut zbuffer = vec![f64::INFINITY; w * h];
    let s = splat_px as i64;
    for i in 0..pix.len() {
        if !(depth[i] > 0.0) {
            continue;
        }
        let p_cam = cam.extrinsic.apply(&moved.positions[i]);
        let n_cam = cam.extrinsic.rotation * (r * normals[i]);
        let to_camera = -p_cam / p_cam.norm();
        let shade = ALBEDO * (n_cam.dot(&to_camera).abs().clamp(0.0, 1.0) as f32);
        let (u0, v0) = (pix[i][0].round() as i64, pix[i][1].round() as i64);
        for dv in -s..=s {
            for du in -s..=s {
                if du * du + dv * dv > s * s {
                    continue;
                }
                let (u, v) = (u0 + du, v0 + dv);
                if u < 0 || v < 0 || u >= w as i64 || v >= h as i64 {
                    continue;
                }
                let k = v as usize * w + u as usize;
                if depth[i] < zbuffer[k] {
                    zbuffer[k] = depth[i];
                    image.set_gray(v as usize, u as usize, shade);
                }
            }
        }
    }

    let tol = cam.depth_tolerance();
    let visible = (0..pix.len())
        .map(|i| {
            depth[i] > 0.0 && in_bounds(&pix[i], w, h) && {
                let k = pix[i][1].round() as usize * w + pix[i][0].round() as usize;
                (zbuffer[k] - depth[i]).abs() <= tol
            }
        })
        .collect();
    Ok(RenderedView {
        image,
        pix,
        depth,
        visible,
        zbuffer,
        rotation_id,
    })
}
