use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `(height, width, channels)` feature map, row-major, whose cells
/// cover `stride x stride` full-image pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    channels: usize,
    stride: f64,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(height: usize, width: usize, channels: usize, stride: f64, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidConfig("feature grid has an empty dimension".into()));
        }
        if !(stride > 0.0) || !stride.is_finite() {
            return Err(Error::InvalidConfig(format!("invalid stride {stride}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch {
                expected: height * width * channels,
                got: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            stride,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize, stride: f64) -> Result<Self> {
        Self::new(height, width, channels, stride, vec![0.0; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        stride: f64,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for row in 0..height {
            for col in 0..width {
                for ch in 0..channels {
                    data.push(f(row, col, ch));
                }
            }
        }
        Self::new(height, width, channels, stride, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let i = (row * self.width + col) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Full-image pixel position of the center of cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        ((col as f64 + 0.5) * self.stride, (row as f64 + 0.5) * self.stride)
    }

    /// Grid coordinates of a full-image pixel; cell centers sit on integers.
    pub fn to_grid(&self, u: f64, v: f64) -> (f64, f64) {
        (u / self.stride - 0.5, v / self.stride - 0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub value: Vec<f64>,
    pub valid: bool,
}

struct Stencil {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    fx: f64,
    fy: f64,
}

/// Lower neighbor and fractional offset along one axis, or `None` when any
/// neighbor carrying weight would fall outside `0..n`.
fn locate(g: f64, n: usize) -> Option<(usize, usize, f64)> {
    if !(g >= 0.0 && g <= (n - 1) as f64) {
        return None;
    }
    if n == 1 {
        return Some((0, 0, 0.0));
    }
    let i0 = (g.floor() as usize).min(n - 2);
    Some((i0, i0 + 1, g - i0 as f64))
}

fn stencil(level: &FeatureGrid, u: f64, v: f64) -> Option<Stencil> {
    let (gx, gy) = level.to_grid(u, v);
    let (x0, x1, fx) = locate(gx, level.width)?;
    let (y0, y1, fy) = locate(gy, level.height)?;
    Some(Stencil {
        x0,
        y0,
        x1,
        y1,
        fx,
        fy,
    })
}

/// Bilinear interpolation at full-image pixel `(u, v)`. Locations needing a
/// neighbor outside the grid return zeros with `valid == false`.
pub fn bilinear_sample(level: &FeatureGrid, u: f64, v: f64) -> Sample {
    let c = level.channels;
    let Some(s) = stencil(level, u, v) else {
        return Sample {
            value: vec![0.0; c],
            valid: false,
        };
    };
    let (a, b) = (level.cell(s.y0, s.x0), level.cell(s.y0, s.x1));
    let (cc, d) = (level.cell(s.y1, s.x0), level.cell(s.y1, s.x1));
    // nested lerps reproduce constant cells exactly
    let lerp = |x: f64, y: f64, t: f64| x + t * (y - x);
    let value = (0..c)
        .map(|k| lerp(lerp(a[k], b[k], s.fx), lerp(cc[k], d[k], s.fx), s.fy))
        .collect();
    Sample { value, valid: true }
}

/// Analytic `(∂/∂u, ∂/∂v)` of [`bilinear_sample`] in full-image pixels.
pub fn bilinear_sample_grad(level: &FeatureGrid, u: f64, v: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = stencil(level, u, v).ok_or(Error::InvalidSample { u, v })?;
    let (a, b) = (level.cell(s.y0, s.x0), level.cell(s.y0, s.x1));
    let (c, d) = (level.cell(s.y1, s.x0), level.cell(s.y1, s.x1));
    let inv = 1.0 / level.stride;
    // a degenerate axis (single cell) has no gradient
    let gx_on = if level.width > 1 { 1.0 } else { 0.0 };
    let gy_on = if level.height > 1 { 1.0 } else { 0.0 };
    let mut du = Vec::with_capacity(level.channels);
    let mut dv = Vec::with_capacity(level.channels);
    for k in 0..level.channels {
        du.push(gx_on * inv * ((1.0 - s.fy) * (b[k] - a[k]) + s.fy * (d[k] - c[k])));
        dv.push(gy_on * inv * ((1.0 - s.fx) * (c[k] - a[k]) + s.fx * (d[k] - b[k])));
    }
    Ok((du, dv))
}
