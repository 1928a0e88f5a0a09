//! Query memory carried between frames with ego-motion compensation.

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::check_rotation;
use crate::query::{pos_embed, EmbedParams, Query, QueryKind};

/// Propagated queries kept per frame.
pub const DEFAULT_MEMORY_CAPACITY: usize = 128;

/// Rigid transform from the previous ego frame to the current one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoMotion {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl EgoMotion {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation).map_err(Error::InvalidConfig)?;
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

    /// Motion that maps points of the previous frame into the current one
    /// when the ego advances `forward` meters and turns `yaw` radians.
    pub fn from_ego_step(forward: f64, lateral: f64, yaw: f64) -> Self {
        // ego pose change T = [R(yaw) | (forward, lateral, 0)]; points map by T⁻¹
        let (s, c) = yaw.sin_cos();
        let r = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        let rt = r.transpose();
        Self {
            rotation: rt,
            translation: -(rt * Vector3::new(forward, lateral, 0.0)),
        }
    }
}

/// Top-`k` non-denoise queries by score, ties to the lower index, returned
/// in rank order and relabeled as propagated.
pub fn select_propagated(queries: &[Query], scores: &[f64], k: usize) -> Result<Vec<Query>> {
    if queries.len() != scores.len() {
        return Err(Error::Misaligned(format!(
            "{} queries but {} scores",
            queries.len(),
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..queries.len())
        .filter(|&i| !queries[i].kind.is_denoise())
        .collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(idx
        .into_iter()
        .take(k)
        .map(|i| Query {
            kind: QueryKind::Propagated,
            score: scores[i],
            ..queries[i].clone()
        })
        .collect())
}

/// Moves the reference point into the current frame and re-encodes the
/// positional part of the embedding there.
pub fn ego_compensate(q: &Query, motion: &EgoMotion, params: &EmbedParams) -> Query {
    let moved = Point3::from(motion.rotation * q.ref_point.coords + motion.translation);
    reposition(q, moved, params)
}

/// Moves `q` to `p`, swapping the positional term of its embedding.
pub fn reposition(q: &Query, p: Point3<f64>, params: &EmbedParams) -> Query {
    let old = pos_embed(&q.ref_point, params);
    let new = pos_embed(&p, params);
    let embedding = q
        .embedding
        .iter()
        .zip(old.iter().zip(new.iter()))
        .map(|(e, (o, n))| e - o + n)
        .collect();
    Query {
        ref_point: p,
        embedding,
        ..q.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryMemory {
    capacity: usize,
    stored: Vec<Query>,
}

impl QueryMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            stored: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn stored(&self) -> &[Query] {
        &self.stored
    }
}

/// Emits the compensated contents of `mem` for the current frame, then
/// refills the memory with this frame's top-`k`.
pub fn step_memory(
    mem: &QueryMemory,
    frame_queries: &[Query],
    frame_scores: &[f64],
    motion: &EgoMotion,
    params: &EmbedParams,
) -> Result<(QueryMemory, Vec<Query>)> {
    let propagated = mem
        .stored
        .iter()
        .map(|q| ego_compensate(q, motion, params))
        .collect();
    let stored = select_propagated(frame_queries, frame_scores, mem.capacity)?;
    Ok((
        QueryMemory {
            capacity: mem.capacity,
            stored,
        },
        propagated,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::RangeBox;
    use crate::query::make_global_queries;
    use nalgebra::Rotation3;

    fn params() -> EmbedParams {
        EmbedParams::random(8, 3, 0, 10, RangeBox::default(), 2)
    }

    fn queries(n: usize) -> Vec<Query> {
        make_global_queries(n, 17, &params(), &RangeBox::default())
    }

    #[test]
    fn top_k_with_index_ties() {
        let qs = queries(3);
        assert!(select_propagated(&qs, &[0.9, 0.1, 0.9], 0).unwrap().is_empty());
        let sel = select_propagated(&qs, &[0.9, 0.1, 0.9], 2).unwrap();
        assert_eq!(sel[0].ref_point, qs[0].ref_point);
        assert_eq!(sel[1].ref_point, qs[2].ref_point);
        assert!(sel.iter().all(|q| q.kind == QueryKind::Propagated));
        assert!(select_propagated(&qs, &[0.9], 1).is_err());
    }

    #[test]
    fn denoise_queries_never_propagate() {
        let mut qs = queries(4);
        qs[0].kind = QueryKind::DenoisePositive;
        qs[1].kind = QueryKind::DenoiseNegative;
        let sel = select_propagated(&qs, &[1.0, 1.0, 0.2, 0.1], 4).unwrap();
        assert_eq!(sel.len(), 2);
        assert_eq!(sel[0].ref_point, qs[2].ref_point);
    }

    #[test]
    fn matches_full_sort_oracle() {
        let qs = queries(500);
        let scores: Vec<f64> = (0..500).map(|i| ((i * 7919) % 113) as f64 / 113.0).collect();
        let sel = select_propagated(&qs, &scores, 128).unwrap();
        let mut order: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
        // stable sort by descending score keeps index order within ties
        order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for (q, (_, i)) in sel.iter().zip(&order[..128]) {
            assert_eq!(q.ref_point, qs[*i].ref_point);
        }
    }

    #[test]
    fn identity_and_translation() {
        let p = params();
        let q = &queries(1)[0];
        let same = ego_compensate(q, &EgoMotion::identity(), &p);
        assert_eq!(same.ref_point, q.ref_point);
        for (a, b) in same.embedding.iter().zip(&q.embedding) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut q2 = q.clone();
        q2.ref_point = Point3::new(1.0, 2.0, 3.0);
        let m = EgoMotion::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!(ego_compensate(&q2, &m, &p).ref_point, Point3::new(1.0, 2.0, 8.0));
    }

    #[test]
    fn random_motion_matches_homogeneous_oracle() {
        let p = params();
        let r = Rotation3::from_euler_angles(0.02, -0.01, 0.7).into_inner();
        let t = Vector3::new(3.0, -1.0, 0.2);
        let m = EgoMotion::new(r, t).unwrap();
        let mut h = nalgebra::Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        for q in queries(20) {
            let expect = h * q.ref_point.to_homogeneous();
            let got = ego_compensate(&q, &m, &p).ref_point;
            for i in 0..3 {
                assert!((got[i] - expect[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ego_step_keeps_static_points_consistent() {
        // a static world point seen before and after the ego moves
        let step = EgoMotion::from_ego_step(2.0, 0.5, 0.1);
        let world_prev = Point3::new(30.0, -4.0, 0.8);
        let (s, c) = 0.1f64.sin_cos();
        // same point expressed in the new ego frame, built by hand
        let d = world_prev.coords - Vector3::new(2.0, 0.5, 0.0);
        let expect = Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z);
        let got = step.rotation * world_prev.coords + step.translation;
        assert!((got - expect).norm() < 1e-12);
    }

    #[test]
    fn memory_steps() {
        let p = params();
        let qs = queries(10);
        let scores: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let mem = QueryMemory::new(4);
        let (mem1, first) = step_memory(&mem, &qs, &scores, &EgoMotion::identity(), &p).unwrap();
        assert!(first.is_empty());
        assert_eq!(mem1.stored().len(), 4);
        let (mem2, second) = step_memory(&mem1, &qs, &scores, &EgoMotion::identity(), &p).unwrap();
        let top = select_propagated(&qs, &scores, 4).unwrap();
        assert_eq!(second.len(), 4);
        for (a, b) in second.iter().zip(&top) {
            assert_eq!(a.ref_point, b.ref_point);
        }
        assert_eq!(mem2, mem1);
        assert!(mem2.stored().len() <= mem2.capacity());
    }
}
