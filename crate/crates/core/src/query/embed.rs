//! Positional and semantic query embeddings: sinusoidal features plus small MLPs.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Point3};
use rand::Rng;

use crate::boxes::RangeBox;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Two affine layers with a ReLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl Mlp {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: DMatrix::zeros(hidden, input),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(output, hidden),
            b2: DVector::zeros(output),
        }
    }

    /// Uniform fan-in scaled initialization.
    pub fn random<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let s1 = (1.0 / input as f64).sqrt();
        let s2 = (1.0 / hidden as f64).sqrt();
        Self {
            w1: DMatrix::from_fn(hidden, input, |_, _| rng.random_range(-s1..s1)),
            b1: DVector::from_fn(hidden, |_, _| rng.random_range(-s1..s1)),
            w2: DMatrix::from_fn(output, hidden, |_, _| rng.random_range(-s2..s2)),
            b2: DVector::from_fn(output, |_, _| rng.random_range(-s2..s2)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    fn check(&self) -> Result<()> {
        let h = self.w1.nrows();
        if self.b1.len() != h || self.w2.ncols() != h {
            return Err(Error::DimensionMismatch {
                expected: h,
                got: self.w2.ncols(),
            });
        }
        if self.b2.len() != self.w2.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.w2.nrows(),
                got: self.b2.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let hidden = (&self.w1 * x + &self.b1).map(|v| v.max(0.0));
        Ok(&self.w2 * hidden + &self.b2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedParams {
    /// Embedding dimension D.
    pub dim: usize,
    /// Sinusoid frequencies per coordinate.
    pub frequencies: usize,
    /// Context feature dimension C.
    pub context_dim: usize,
    pub pos_mlp: Mlp,
    pub sem_mlp: Mlp,
    /// Coordinates are normalized to [0, 1] over this box before encoding.
    pub bounds: RangeBox,
}

impl EmbedParams {
    pub fn new(
        dim: usize,
        frequencies: usize,
        context_dim: usize,
        pos_mlp: Mlp,
        sem_mlp: Mlp,
        bounds: RangeBox,
    ) -> Result<Self> {
        let p = Self {
            dim,
            frequencies,
            context_dim,
            pos_mlp,
            sem_mlp,
            bounds,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn random(
        dim: usize,
        frequencies: usize,
        context_dim: usize,
        hidden: usize,
        bounds: RangeBox,
        seed: u64,
    ) -> Self {
        let mut rng = seeded(seed);
        let pos_mlp = Mlp::random(6 * frequencies, hidden, dim, &mut rng);
        let sem_mlp = Mlp::random(context_dim + 1, hidden, dim, &mut rng);
        Self {
            dim,
            frequencies,
            context_dim,
            pos_mlp,
            sem_mlp,
            bounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.pos_mlp.check()?;
        self.sem_mlp.check()?;
        let checks = [
            (self.pos_mlp.input_dim(), 6 * self.frequencies),
            (self.sem_mlp.input_dim(), self.context_dim + 1),
            (self.pos_mlp.output_dim(), self.dim),
            (self.sem_mlp.output_dim(), self.dim),
        ];
        for (got, expected) in checks {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        Ok(())
    }
}

/// `[sin(2^k π x), cos(2^k π x)]` for k in 0..F, per normalized coordinate.
pub fn sinusoidal_features(p: &Point3<f64>, params: &EmbedParams) -> DVector<f64> {
    let norm = params.bounds.normalize(p);
    let f = params.frequencies;
    let mut out = DVector::zeros(6 * f);
    for (axis, x) in norm.iter().enumerate() {
        for k in 0..f {
            let arg = (1u64 << k) as f64 * PI * x;
            out[axis * 2 * f + 2 * k] = arg.sin();
            out[axis * 2 * f + 2 * k + 1] = arg.cos();
        }
    }
    out
}

pub fn pos_embed(p: &Point3<f64>, params: &EmbedParams) -> DVector<f64> {
    params
        .pos_mlp
        .forward(&sinusoidal_features(p, params))
        .expect("validated params")
}

/// Context features concatenated with the detection score, through the semantic MLP.
pub fn sem_embed(context: &[f64], score: f64, params: &EmbedParams) -> Result<DVector<f64>> {
    if context.len() != params.context_dim {
        return Err(Error::DimensionMismatch {
            expected: params.context_dim,
            got: context.len(),
        });
    }
    let x = DVector::from_iterator(
        context.len() + 1,
        context.iter().copied().chain(std::iter::once(score)),
    );
    params.sem_mlp.forward(&x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EmbedParams {
        EmbedParams::random(16, 4, 5, 24, RangeBox::default(), 7)
    }

    /// Straight-line recomputation of the affine chain with plain loops.
    fn mlp_oracle(m: &Mlp, x: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = (0..m.w1.nrows())
            .map(|i| {
                let mut s = m.b1[i];
                for (j, xj) in x.iter().enumerate() {
                    s += m.w1[(i, j)] * xj;
                }
                s.max(0.0)
            })
            .collect();
        (0..m.w2.nrows())
            .map(|i| {
                let mut s = m.b2[i];
                for (j, hj) in h.iter().enumerate() {
                    s += m.w2[(i, j)] * hj;
                }
                s
            })
            .collect()
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let mut p = params();
        p.pos_mlp = Mlp::zeros(24, 8, 16);
        p.sem_mlp = Mlp::zeros(6, 8, 16);
        assert!(pos_embed(&Point3::new(3.0, -2.0, 1.0), &p).iter().all(|x| *x == 0.0));
        assert!(sem_embed(&[1.0; 5], 0.4, &p).unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn sinusoids_at_lower_corner() {
        let p = params();
        let corner = Point3::from(p.bounds.min);
        let f = sinusoidal_features(&corner, &p);
        for pair in f.as_slice().chunks(2) {
            assert_eq!(pair, &[0.0, 1.0]);
        }
    }

    #[test]
    fn embeddings_match_loop_oracle() {
        let p = params();
        let pt = Point3::new(12.5, -40.0, 0.7);
        let feats = sinusoidal_features(&pt, &p);
        let expect = mlp_oracle(&p.pos_mlp, feats.as_slice());
        let got = pos_embed(&pt, &p);
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let ctx = [0.3, -1.2, 0.0, 2.0, 0.5];
        let mut x = ctx.to_vec();
        x.push(0.8);
        let expect = mlp_oracle(&p.sem_mlp, &x);
        let got = sem_embed(&ctx, 0.8, &p).unwrap();
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pass_through_semantic_mlp_is_relu() {
        let mut p = params();
        // C + 1 == D
        p.context_dim = 15;
        p.sem_mlp = Mlp {
            w1: DMatrix::identity(16, 16),
            b1: DVector::zeros(16),
            w2: DMatrix::identity(16, 16),
            b2: DVector::zeros(16),
        };
        let ctx: Vec<f64> = (0..15).map(|i| i as f64 - 7.0).collect();
        let out = sem_embed(&ctx, -0.25, &p).unwrap();
        for (i, x) in ctx.iter().chain([-0.25].iter()).enumerate() {
            assert_eq!(out[i], x.max(0.0));
        }
    }

    #[test]
    fn final_layer_scaling_is_linear() {
        let p = params();
        let mut scaled = p.clone();
        scaled.pos_mlp.w2 *= 2.5;
        scaled.pos_mlp.b2 *= 2.5;
        let pt = Point3::new(-5.0, 30.0, 1.0);
        let a = pos_embed(&pt, &p);
        let b = pos_embed(&pt, &scaled);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((2.5 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn context_dimension_is_checked() {
        assert!(matches!(
            sem_embed(&[0.0; 3], 0.5, &params()),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut p = params();
        p.dim = 8;
        assert!(p.validate().is_err());
    }
}
