//! Few-shot pool loading and cluster-based selection.

use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{validate_trace, AgentError, StepKind, Tool, TraceStep};
use crate::dsl::ERROR_PREFIX;
use crate::retrieval::tokenize;

pub const DEFAULT_FEW_SHOTS_JSONL: &str = include_str!("../../data/few_shots.jsonl");
pub const EMBED_DIM: usize = 256;
const MAX_ITERATIONS: usize = 100;
const MOVEMENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FewShotExample {
    pub query: String,
    pub trajectory: Vec<TraceStep>,
}

/// Trajectory steps as written in the pool file; `seq` and `ok` are derived.
#[derive(Deserialize)]
struct RawStep {
    kind: StepKind,
    #[serde(default)]
    tool: Option<Tool>,
    content: String,
}

#[derive(Deserialize)]
struct RawExample {
    query: String,
    trajectory: Vec<RawStep>,
}

pub fn read_pool<R: BufRead>(r: R) -> Result<Vec<FewShotExample>, AgentError> {
    let mut pool = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawExample = serde_json::from_str(&line).map_err(|source| AgentError::Json { line: i + 1, source })?;
        let trajectory: Vec<TraceStep> = raw
            .trajectory
            .into_iter()
            .enumerate()
            .map(|(seq, s)| TraceStep {
                seq: seq as u32,
                ok: !(s.kind == StepKind::Observe && s.content.starts_with(ERROR_PREFIX)),
                kind: s.kind,
                tool: s.tool,
                content: s.content,
            })
            .collect();
        validate_trace(&trajectory).map_err(|e| AgentError::InvalidTrace(format!("pool line {}: {e}", i + 1)))?;
        if trajectory.last().map(|s| s.kind) != Some(StepKind::Finish) {
            return Err(AgentError::InvalidTrace(format!("pool line {}: does not finish", i + 1)));
        }
        pool.push(FewShotExample {
            query: raw.query,
            trajectory,
        });
    }
    Ok(pool)
}

pub fn default_pool() -> Vec<FewShotExample> {
    read_pool(DEFAULT_FEW_SHOTS_JSONL.as_bytes()).expect("shipped few-shot pool is valid")
}

/// Maps text to a fixed-dimension vector of unit length (or zero for text
/// without tokens).
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Token counts hashed into [`EMBED_DIM`] buckets with FNV-1a, then
/// L2-normalised.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; EMBED_DIM];
        for t in tokenize(text) {
            v[(fnv1a(&t) % EMBED_DIM as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest candidate; the lowest index wins ties.
fn nearest<'a>(p: &[f64], candidates: impl Iterator<Item = (usize, &'a [f64])>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates {
        let d = dist2(p, c);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.random_range(0..points.len())];
    while chosen.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                nearest(p, chosen.iter().map(|&c| (c, points[c].as_slice())))
                    .map_or(0.0, |(_, d)| d)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if u < w {
                        break;
                    }
                    u -= w;
                }
            }
            pick.expect("a positive weight exists")
        } else {
            // every point coincides with a centre: take the first unused one
            (0..points.len()).find(|i| !chosen.contains(i)).expect("k <= number of points")
        };
        chosen.push(pick);
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Lloyd's algorithm from a k-means++ start, stopping after
/// 100 iterations or once no centroid moves more than 1e-6.
/// Requires `1 <= k <= points.len()`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> KMeans {
    assert!(k >= 1 && k <= points.len(), "k must be in 1..=points");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let dim = points[0].len();
    let mut assignment = vec![0; points.len()];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for (p, a) in points.iter().zip(assignment.iter_mut()) {
            *a = nearest(p, centroids.iter().map(Vec::as_slice).enumerate()).expect("k >= 1").0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        let mut moved = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let next: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            moved = moved.max(dist2(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if moved < MOVEMENT_TOLERANCE {
            break;
        }
    }
    for (p, a) in points.iter().zip(assignment.iter_mut()) {
        *a = nearest(p, centroids.iter().map(Vec::as_slice).enumerate()).expect("k >= 1").0;
    }
    KMeans {
        centroids,
        assignment,
        iterations,
    }
}

/// Cluster `points` into `k` groups and return, per cluster, the member
/// closest to its centroid, sorted by index. A cluster left without members
/// is represented by the closest point not already picked.
pub fn select_indices(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>, AgentError> {
    if points.len() < k {
        return Err(AgentError::InsufficientPool { pool: points.len(), k });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let km = kmeans(points, k, seed);
    let mut picked: Vec<Option<usize>> = (0..k)
        .map(|c| {
            nearest(
                &km.centroids[c],
                points
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| km.assignment[i] == c)
                    .map(|(i, p)| (i, p.as_slice())),
            )
            .map(|(i, _)| i)
        })
        .collect();
    for c in 0..k {
        if picked[c].is_none() {
            let taken: Vec<usize> = picked.iter().flatten().copied().collect();
            picked[c] = nearest(
                &km.centroids[c],
                points
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken.contains(i))
                    .map(|(i, p)| (i, p.as_slice())),
            )
            .map(|(i, _)| i);
        }
    }
    let mut out: Vec<usize> = picked.into_iter().map(|p| p.expect("pool >= k")).collect();
    out.sort_unstable();
    Ok(out)
}

/// Embed every pool query, cluster into `k` groups and keep the example
/// nearest each centroid, in pool order.
pub fn select_few_shots(
    pool: &[FewShotExample],
    k: usize,
    embedder: &dyn Embedder,
    seed: u64,
) -> Result<Vec<FewShotExample>, AgentError> {
    let points: Vec<Vec<f64>> = pool.iter().map(|e| embedder.embed(&e.query)).collect();
    Ok(select_indices(&points, k, seed)?.into_iter().map(|i| pool[i].clone()).collect())
}
