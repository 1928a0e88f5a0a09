//! Depth-bin classification: metric depth <-> bin index, and soft decoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of a distribution's total mass from 1.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinSpacing {
    Uniform,
    LogUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthBinConfig {
    pub d_min: f64,
    pub d_max: f64,
    pub n_bins: usize,
    pub spacing: BinSpacing,
}

impl Default for DepthBinConfig {
    fn default() -> Self {
        Self {
            d_min: 1.0,
            d_max: 153.0,
            n_bins: 64,
            spacing: BinSpacing::LogUniform,
        }
    }
}

impl DepthBinConfig {
    pub fn new(d_min: f64, d_max: f64, n_bins: usize, spacing: BinSpacing) -> Result<Self> {
        let cfg = Self {
            d_min,
            d_max,
            n_bins,
            spacing,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_min > 0.0 && self.d_max > self.d_min && self.d_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "depth bins need 0 < d_min < d_max, got [{}, {}]",
                self.d_min, self.d_max
            )));
        }
        if self.n_bins < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 depth bins, got {}",
                self.n_bins
            )));
        }
        Ok(())
    }

    /// Position of `d` along the bin axis, in units of bins: 0 at `d_min`, `n_bins` at `d_max`.
    fn axis(&self, d: f64) -> f64 {
        let n = self.n_bins as f64;
        match self.spacing {
            BinSpacing::Uniform => (d - self.d_min) / (self.d_max - self.d_min) * n,
            BinSpacing::LogUniform => (d / self.d_min).ln() / (self.d_max / self.d_min).ln() * n,
        }
    }

    /// Lower edge of bin `i`; `edge(n_bins)` is `d_max`.
    pub fn edge(&self, i: usize) -> f64 {
        if i >= self.n_bins {
            return self.d_max;
        }
        let t = i as f64 / self.n_bins as f64;
        match self.spacing {
            BinSpacing::Uniform => self.d_min + t * (self.d_max - self.d_min),
            BinSpacing::LogUniform => self.d_min * (self.d_max / self.d_min).powf(t),
        }
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_bins).map(|i| self.edge(i)).collect()
    }

    /// Bin containing `d`. Bins are `(e_i, e_{i+1}]`, except the first which
    /// also holds `d_min`; a value on an interior edge goes to the lower bin.
    pub fn depth_to_bin(&self, d: f64) -> Result<usize> {
        if !(self.d_min..=self.d_max).contains(&d) {
            return Err(Error::DepthOutOfRange {
                depth: d,
                min: self.d_min,
                max: self.d_max,
            });
        }
        let t = self.axis(d);
        let b = t.ceil() as i64 - 1;
        Ok(b.clamp(0, self.n_bins as i64 - 1) as usize)
    }

    /// Arithmetic (uniform) or geometric (log-uniform) center of bin `b`.
    pub fn bin_to_depth(&self, b: usize) -> Result<f64> {
        if b >= self.n_bins {
            return Err(Error::BinOutOfRange {
                index: b,
                bins: self.n_bins,
            });
        }
        let (lo, hi) = (self.edge(b), self.edge(b + 1));
        Ok(match self.spacing {
            BinSpacing::Uniform => 0.5 * (lo + hi),
            BinSpacing::LogUniform => (lo * hi).sqrt(),
        })
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins)
            .map(|b| self.bin_to_depth(b).expect("index in range"))
            .collect()
    }

    /// Width of the bin containing `d` in the continuum limit: constant for
    /// uniform spacing, proportional to `d` for log-uniform spacing.
    pub fn local_bin_width(&self, d: f64) -> f64 {
        let n = self.n_bins as f64;
        match self.spacing {
            BinSpacing::Uniform => (self.d_max - self.d_min) / n,
            BinSpacing::LogUniform => d * (self.d_max / self.d_min).ln() / n,
        }
    }

    /// Width of the bin along the axis where bins are equal: meters for
    /// uniform spacing, natural-log units for log-uniform spacing.
    pub fn axis_bin_width(&self) -> f64 {
        let n = self.n_bins as f64;
        match self.spacing {
            BinSpacing::Uniform => (self.d_max - self.d_min) / n,
            BinSpacing::LogUniform => (self.d_max / self.d_min).ln() / n,
        }
    }

    /// Distribution whose expectation reproduces `d` exactly (within the span
    /// of bin centers): the mass of the bin holding `d` is shared with the
    /// neighbor on the side `d` lies.
    pub fn soft_label(&self, d: f64) -> Result<DepthDistribution> {
        let d = d.clamp(self.d_min, self.d_max);
        let centers = self.centers();
        let n = self.n_bins;
        let mut probs = vec![0.0; n];
        if d <= centers[0] {
            probs[0] = 1.0;
        } else if d >= centers[n - 1] {
            probs[n - 1] = 1.0;
        } else {
            let hi = centers.partition_point(|&c| c < d);
            let lo = hi - 1;
            let w_hi = (d - centers[lo]) / (centers[hi] - centers[lo]);
            probs[lo] = 1.0 - w_hi;
            probs[hi] = w_hi;
        }
        DepthDistribution::new(probs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthDistribution {
    probs: Vec<f64>,
}

impl DepthDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn one_hot(n_bins: usize, b: usize) -> Result<Self> {
        if b >= n_bins {
            return Err(Error::BinOutOfRange {
                index: b,
                bins: n_bins,
            });
        }
        let mut probs = vec![0.0; n_bins];
        probs[b] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn argmax(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            })
            .0
    }
}

/// Probability-weighted mean of the bin centers.
pub fn expected_depth(dist: &DepthDistribution, cfg: &DepthBinConfig) -> Result<f64> {
    if dist.probs.len() != cfg.n_bins {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_bins,
            got: dist.probs.len(),
        });
    }
    let mut acc = 0.0;
    for (b, p) in dist.probs.iter().enumerate() {
        acc += p * cfg.bin_to_depth(b)?;
    }
    Ok(acc.clamp(cfg.d_min, cfg.d_max))
}
