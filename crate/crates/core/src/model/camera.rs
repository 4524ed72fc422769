use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole camera, OpenCV axes (x right, y down, z forward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major rigid transform taking world points into camera space.
    pub world_to_camera: [[f64; 4]; 4],
    pub near: f64,
    pub far: f64,
}

pub const DEFAULT_NEAR: f64 = 0.01;
pub const DEFAULT_FAR: f64 = 1000.0;

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        world_to_camera: [[f64; 4]; 4],
    ) -> Result<Self> {
        let cam = Camera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_to_camera,
            near: DEFAULT_NEAR,
            far: DEFAULT_FAR,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn from_camera_to_world(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        camera_to_world: [[f64; 4]; 4],
    ) -> Result<Self> {
        Self::new(fx, fy, cx, cy, width, height, invert_rigid(&camera_to_world))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::invalid(format!(
                "need 0 < near < far (near={}, far={})",
                self.near, self.far
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera has zero-sized image"));
        }
        let m = &self.world_to_camera;
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite camera pose"));
        }
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > 1e-6 {
                    return Err(Error::invalid("camera rotation block is not orthonormal"));
                }
            }
        }
        Ok(())
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let m = &self.world_to_camera;
        [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ]
    }

    pub fn translation(&self) -> [f64; 3] {
        let m = &self.world_to_camera;
        [m[0][3], m[1][3], m[2][3]]
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> [f64; 3] {
        let r = self.rotation();
        let t = self.translation();
        [
            -(r[0][0] * t[0] + r[1][0] * t[1] + r[2][0] * t[2]),
            -(r[0][1] * t[0] + r[1][1] * t[1] + r[2][1] * t[2]),
            -(r[0][2] * t[0] + r[1][2] * t[1] + r[2][2] * t[2]),
        ]
    }

    /// Same pose and field of view at a different resolution.
    pub fn scaled_to(&self, width: usize, height: usize) -> Camera {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..self.clone()
        }
    }

    /// Camera at `eye` looking at `target`, with world -y as the up hint
    /// unless `up` says otherwise.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        fx: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let norm = |v: [f64; 3]| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        };
        let cross = |a: [f64; 3], b: [f64; 3]| {
            [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ]
        };
        let forward = norm([target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]]);
        // OpenCV: y points down, so "down" = -up.
        let right = norm(cross([-up[0], -up[1], -up[2]], forward));
        let down = cross(forward, right);
        let mut c2w = [[0.0; 4]; 4];
        for i in 0..3 {
            c2w[i][0] = right[i];
            c2w[i][1] = down[i];
            c2w[i][2] = forward[i];
            c2w[i][3] = eye[i];
        }
        c2w[3][3] = 1.0;
        Self::from_camera_to_world(
            fx,
            fx,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            c2w,
        )
    }

    pub fn camera_to_world(&self) -> [[f64; 4]; 4] {
        invert_rigid(&self.world_to_camera)
    }
}

/// Inverse of a rigid 4×4 transform `[R | t]`.
pub fn invert_rigid(m: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    for i in 0..3 {
        out[i][3] = -(0..3).map(|k| m[k][i] * m[k][3]).sum::<f64>();
    }
    out[3][3] = 1.0;
    out
}

pub const IDENTITY_POSE: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];
