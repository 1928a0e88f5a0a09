//! Pinhole projection and unprojection for a multi-camera rig.
//!
//! Camera frame: x right, y down, z forward. Ego frame: x forward, y left,
//! z up. A [`Pose`] maps camera coordinates into the ego frame,
//! `p_ego = R * p_cam + t`.

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Camera-frame depth at or below which a point counts as behind the camera.
pub const BEHIND_CAMERA_EPS: f64 = 1e-9;

/// Tolerance for the orthonormality and determinant checks on rotations.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|x| x.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidRig(format!(
                "focal lengths must be finite and positive: {self:?}"
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::InvalidRig(format!(
                "principal point outside image: {self:?}"
            )));
        }
        Ok(())
    }

    /// Half-open bounds check, `0 <= u < width` and `0 <= v < height`.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        (0.0..self.width as f64).contains(&u) && (0.0..self.height as f64).contains(&v)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Rigid transform from camera coordinates to the ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation).map_err(Error::InvalidRig)?;
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidRig("translation is not finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera looking along ego-frame heading `yaw` (radians, counter-clockwise
    /// from +x), level with the ground, mounted at `position`.
    pub fn looking_along(yaw: f64, position: Vector3<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        let right = Vector3::new(s, -c, 0.0);
        let down = Vector3::new(0.0, 0.0, -1.0);
        let forward = Vector3::new(c, s, 0.0);
        Self {
            rotation: Matrix3::from_columns(&[right, down, forward]),
            translation: position,
        }
    }

    pub fn camera_to_ego(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn ego_to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transpose() * (p.coords - self.translation))
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }
}

/// Returns an error message when `r` is not a proper rotation to [`ROTATION_TOL`].
pub fn check_rotation(r: &Matrix3<f64>) -> std::result::Result<(), String> {
    if !r.iter().all(|x| x.is_finite()) {
        return Err("rotation is not finite".into());
    }
    let gram = r.transpose() * r - Matrix3::identity();
    let off = gram.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if off > ROTATION_TOL {
        return Err(format!("rotation not orthonormal (max |RᵀR - I| = {off:e})"));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ROTATION_TOL {
        return Err(format!("rotation determinant is {det}, expected +1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub id: String,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

/// Ordered, non-empty set of calibrated cameras with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    cameras: Vec<Camera>,
}

/// Pixel coordinates in one view of a rig. `view` indexes [`CameraRig::cameras`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub view: usize,
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(view: usize, u: f64, v: f64) -> Self {
        Self { view, u, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    InFront { pixel: Pixel, depth: f64 },
    BehindCamera,
}

impl Projection {
    pub fn in_front(self) -> Option<(Pixel, f64)> {
        match self {
            Projection::InFront { pixel, depth } => Some((pixel, depth)),
            Projection::BehindCamera => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewHit {
    pub view: usize,
    pub pixel: Pixel,
    pub depth: f64,
}

impl CameraRig {
    pub fn new(cameras: Vec<Camera>) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::InvalidRig("rig has no cameras".into()));
        }
        for (i, cam) in cameras.iter().enumerate() {
            cam.intrinsics.validate()?;
            check_rotation(&cam.pose.rotation)
                .map_err(|e| Error::InvalidRig(format!("camera {}: {e}", cam.id)))?;
            if cameras[..i].iter().any(|c| c.id == cam.id) {
                return Err(Error::InvalidRig(format!("duplicate camera id {}", cam.id)));
            }
        }
        Ok(Self { cameras })
    }

    /// Seven ring cameras at 960x640: six 70° views every 60° plus a
    /// narrow 45° front view.
    pub fn default_ring() -> Self {
        let (w, h) = (960u32, 640u32);
        let focal = |hfov_deg: f64| (w as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        let mut cameras = Vec::with_capacity(7);
        let fr = focal(45.0);
        cameras.push(Camera {
            id: "ring_front_tele".into(),
            intrinsics: Intrinsics {
                fx: fr,
                fy: fr,
                cx: 480.0,
                cy: 320.0,
                width: w,
                height: h,
            },
            pose: Pose::looking_along(0.0, Vector3::new(1.5, 0.0, 1.6)),
        });
        let f = focal(70.0);
        for k in 0..6 {
            let yaw = (k as f64 * 60.0).to_radians();
            cameras.push(Camera {
                id: format!("ring_{:03}", k * 60),
                intrinsics: Intrinsics {
                    fx: f,
                    fy: f,
                    cx: 480.0,
                    cy: 320.0,
                    width: w,
                    height: h,
                },
                pose: Pose::looking_along(
                    yaw,
                    Vector3::new(yaw.cos(), yaw.sin(), 1.6),
                ),
            });
        }
        Self::new(cameras).expect("default rig is valid")
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn camera(&self, view: usize) -> Result<&Camera> {
        self.cameras
            .get(view)
            .ok_or_else(|| Error::UnknownView(view.to_string()))
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.cameras
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| Error::UnknownView(id.to_string()))
    }

    /// Ego-frame point at camera depth `depth` along the ray through `pix`.
    pub fn unproject_pixel(&self, pix: Pixel, depth: f64) -> Result<Point3<f64>> {
        let cam = self.camera(pix.view)?;
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(Error::NonPositiveDepth(depth));
        }
        let k = &cam.intrinsics;
        if !k.contains(pix.u, pix.v) {
            return Err(Error::PixelOutOfBounds {
                u: pix.u,
                v: pix.v,
                width: k.width,
                height: k.height,
            });
        }
        let p_cam = Point3::new(
            (pix.u - k.cx) / k.fx * depth,
            (pix.v - k.cy) / k.fy * depth,
            depth,
        );
        Ok(cam.pose.camera_to_ego(&p_cam))
    }

    /// Pixel and camera-frame depth of `p` in `view`; no clamping to image bounds.
    pub fn project_point(&self, p: &Point3<f64>, view: usize) -> Result<Projection> {
        let cam = self.camera(view)?;
        Ok(project_with(cam, view, p))
    }

    /// Every view that sees `p` in front of the camera and inside the image, in rig order.
    pub fn visible_views(&self, p: &Point3<f64>) -> Vec<ViewHit> {
        self.cameras
            .iter()
            .enumerate()
            .filter_map(|(view, cam)| match project_with(cam, view, p) {
                Projection::InFront { pixel, depth }
                    if cam.intrinsics.contains(pixel.u, pixel.v) =>
                {
                    Some(ViewHit { view, pixel, depth })
                }
                _ => None,
            })
            .collect()
    }
}

fn project_with(cam: &Camera, view: usize, p: &Point3<f64>) -> Projection {
    let pc = cam.pose.ego_to_camera(p);
    if pc.z <= BEHIND_CAMERA_EPS {
        return Projection::BehindCamera;
    }
    let k = &cam.intrinsics;
    Projection::InFront {
        pixel: Pixel {
            view,
            u: k.fx * pc.x / pc.z + k.cx,
            v: k.fy * pc.y / pc.z + k.cy,
        },
        depth: pc.z,
    }
}

/// On-disk rig description. Field names are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigFile {
    pub cameras: Vec<RigFileCamera>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigFileCamera {
    pub id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major camera-to-ego rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl RigFile {
    pub fn into_rig(self) -> Result<CameraRig> {
        let cameras = self
            .cameras
            .into_iter()
            .map(|c| Camera {
                intrinsics: Intrinsics {
                    fx: c.fx,
                    fy: c.fy,
                    cx: c.cx,
                    cy: c.cy,
                    width: c.width,
                    height: c.height,
                },
                pose: Pose {
                    rotation: Matrix3::from_row_slice(&c.rotation),
                    translation: Vector3::from(c.translation),
                },
                id: c.id,
            })
            .collect();
        CameraRig::new(cameras)
    }

    pub fn from_rig(rig: &CameraRig) -> Self {
        let cameras = rig
            .cameras()
            .iter()
            .map(|c| {
                let r = &c.pose.rotation;
                let mut rotation = [0.0; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        rotation[3 * i + j] = r[(i, j)];
                    }
                }
                RigFileCamera {
                    id: c.id.clone(),
                    fx: c.intrinsics.fx,
                    fy: c.intrinsics.fy,
                    cx: c.intrinsics.cx,
                    cy: c.intrinsics.cy,
                    width: c.intrinsics.width,
                    height: c.intrinsics.height,
                    rotation,
                    translation: c.pose.translation.into(),
                }
            })
            .collect();
        Self { cameras }
    }

    pub fn from_json(s: &str) -> Result<CameraRig> {
        let file: RigFile = serde_json::from_str(s)?;
        file.into_rig()
    }
}
