use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Oriented 3D box. `size` is `(w, l, h)`: `l` runs along the heading
/// `(cos yaw, sin yaw, 0)`, `w` across it, `h` along ego z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: Point3<f64>,
    pub size: [f64; 3],
    pub yaw: f64,
    pub category: u32,
}

impl Box3D {
    pub fn new(center: Point3<f64>, size: [f64; 3], yaw: f64, category: u32) -> Result<Self> {
        let b = Self {
            center,
            size,
            yaw: wrap_angle(yaw),
            category,
        };
        if !size.iter().all(|s| *s > 0.0 && s.is_finite())
            || !center.iter().all(|c| c.is_finite())
        {
            return Err(Error::InvalidConfig(format!("degenerate box {b:?}")));
        }
        Ok(b)
    }

    pub fn heading(&self) -> Vector3<f64> {
        Vector3::new(self.yaw.cos(), self.yaw.sin(), 0.0)
    }

    pub fn lateral(&self) -> Vector3<f64> {
        Vector3::new(-self.yaw.sin(), self.yaw.cos(), 0.0)
    }

    /// Maps box-frame coordinates `(across, along, up)` to an ego-frame offset.
    pub fn local_to_offset(&self, local: Vector3<f64>) -> Vector3<f64> {
        self.lateral() * local.x + self.heading() * local.y + Vector3::z() * local.z
    }

    pub fn offset_to_local(&self, offset: Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            offset.dot(&self.lateral()),
            offset.dot(&self.heading()),
            offset.z,
        )
    }

    /// Strict interior test.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let local = self.offset_to_local(p - self.center);
        local
            .iter()
            .zip(self.size.iter())
            .all(|(x, s)| x.abs() < 0.5 * s)
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.size.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.size.iter().product()
    }

    /// Eight corners in ego coordinates.
    pub fn corners(&self) -> [Point3<f64>; 8] {
        let [w, l, h] = self.size;
        let mut out = [self.center; 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -0.5 } else { 0.5 };
            let sy = if i & 2 == 0 { -0.5 } else { 0.5 };
            let sz = if i & 4 == 0 { -0.5 } else { 0.5 };
            *c = self.center + self.local_to_offset(Vector3::new(sx * w, sy * l, sz * h));
        }
        out
    }

    pub fn ground_range(&self) -> f64 {
        ground_range(&self.center)
    }
}

/// Distance from the ego origin in the ground plane.
pub fn ground_range(p: &Point3<f64>) -> f64 {
    p.x.hypot(p.y)
}

/// Wraps to `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// IoU of two boxes after moving them onto a common center and heading.
pub fn aligned_iou(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let inter: f64 = a.iter().zip(b).map(|(x, y)| x.min(*y)).product();
    let va: f64 = a.iter().product();
    let vb: f64 = b.iter().product();
    inter / (va + vb - inter)
}

/// Axis-aligned ego-frame region where queries and objects live.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for RangeBox {
    /// 152.4 m square around the ego, 8 m tall.
    fn default() -> Self {
        Self {
            min: [-76.2, -76.2, -3.0],
            max: [76.2, 76.2, 5.0],
        }
    }
}

impl RangeBox {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.min[i] < self.max[i]) || !self.min[i].is_finite() || !self.max[i].is_finite()
            {
                return Err(Error::InvalidConfig(format!("range box axis {i} not ordered")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }

    pub fn normalize(&self, p: &Point3<f64>) -> [f64; 3] {
        [0, 1, 2].map(|i| (p[i] - self.min[i]) / (self.max[i] - self.min[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn aligned_iou_of_nested_cubes() {
        assert_eq!(aligned_iou(&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0]), 0.125);
        assert_eq!(aligned_iou(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
    }

    #[test]
    fn containment_respects_yaw() {
        let b = Box3D::new(Point3::new(10.0, 0.0, 1.0), [2.0, 4.0, 2.0], PI / 2.0, 0).unwrap();
        // length now runs along +y
        assert!(b.contains(&Point3::new(10.0, 1.9, 1.0)));
        assert!(!b.contains(&Point3::new(11.9, 0.0, 1.0)));
        assert!(b.contains(&Point3::new(10.9, 0.0, 1.0)));
        for c in b.corners() {
            assert!(!b.contains(&c));
            assert!(((c - b.center).norm() - b.half_diagonal()).abs() < 1e-12);
        }
    }
}
