//! Timing harness comparing the simplified zenith/azimuth gradient against
//! the plane-fit normal baseline over identical neighborhoods.
//!
//! Both methods consume the same `NeighborhoodIndex`; neighborhood search
//! and input allocation stay outside the timed regions. The harness pins
//! itself to one thread so the comparison is not skewed by scheduling.

use std::hint::black_box;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GamError, Result};
use crate::geometry::{edge_geometry, pca_normals};
use crate::sampling::{ball_query, farthest_point_sample};
use crate::types::{GamConfig, PointCloud};

pub const ZENITH_AZIMUTH: &str = "zenith-azimuth";
pub const PCA_NORMAL: &str = "pca-normal";

#[derive(Debug, Clone, Serialize)]
pub struct BenchEnv {
    pub threads: usize,
    pub n_points: usize,
    pub n_centers: usize,
    pub k_neighbors: usize,
}

/// Wall-clock timings of one method.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub method: String,
    pub reps: usize,
    pub times_ms: Vec<f64>,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub stddev_ms: f64,
    /// `baseline_mean / method_mean`; absent on the baseline itself.
    pub speedup_vs_baseline: Option<f64>,
    pub env: BenchEnv,
}

impl BenchReport {
    fn from_times(method: &str, times_ms: Vec<f64>, env: BenchEnv) -> Self {
        let reps = times_ms.len();
        let mean = times_ms.iter().sum::<f64>() / reps as f64;
        let mut sorted = times_ms.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if reps % 2 == 1 {
            sorted[reps / 2]
        } else {
            0.5 * (sorted[reps / 2 - 1] + sorted[reps / 2])
        };
        let stddev = if reps > 1 {
            (times_ms
                .iter()
                .map(|t| (t - mean) * (t - mean))
                .sum::<f64>()
                / (reps - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        Self {
            method: method.to_string(),
            reps,
            times_ms,
            mean_ms: mean,
            median_ms: median,
            stddev_ms: stddev,
            speedup_vs_baseline: None,
            env,
        }
    }
}

/// Both reports plus the speedup of the simplified method over the baseline.
#[derive(Debug, Clone, Serialize)]
pub struct BenchPair {
    pub baseline: BenchReport,
    pub simplified: BenchReport,
    pub speedup_mean: f64,
    pub speedup_median: f64,
}

const WARMUP_RUNS: usize = 3;

/// Times `edge_geometry` (the zenith/azimuth gradient path) and
/// `pca_normals` (the plane-fit baseline) over one shared neighborhood
/// structure, single-threaded, with warm-up runs excluded.
pub fn bench_gradient_methods(
    cloud: &PointCloud,
    config: &GamConfig,
    reps: usize,
) -> Result<BenchPair> {
    if reps < 10 {
        return Err(GamError::InvalidInput(
            "benchmark needs at least 10 reps".into(),
        ));
    }
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| GamError::InvalidInput(format!("thread pool: {e}")))?;

    pool.install(|| {
        let centers = farthest_point_sample(cloud, config.n_centers, config.seed)?;
        let nbrs = ball_query(cloud, &centers, config.radius, config.k_neighbors)?;
        let env = BenchEnv {
            threads: 1,
            n_points: cloud.n_points(),
            n_centers: nbrs.n_centers(),
            k_neighbors: nbrs.k(),
        };

        for _ in 0..WARMUP_RUNS {
            black_box(edge_geometry(black_box(cloud), black_box(&nbrs), config.epsilon)?);
        }
        let mut zenith_times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t0 = Instant::now();
            let edges = edge_geometry(black_box(cloud), black_box(&nbrs), config.epsilon)?;
            black_box(&edges);
            zenith_times.push(t0.elapsed().as_secs_f64() * 1e3);
        }

        for _ in 0..WARMUP_RUNS {
            black_box(pca_normals(black_box(cloud), black_box(&nbrs)));
        }
        let mut normal_times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t0 = Instant::now();
            let normals = pca_normals(black_box(cloud), black_box(&nbrs));
            black_box(&normals);
            normal_times.push(t0.elapsed().as_secs_f64() * 1e3);
        }

        let baseline = BenchReport::from_times(PCA_NORMAL, normal_times, env.clone());
        let mut simplified = BenchReport::from_times(ZENITH_AZIMUTH, zenith_times, env);
        let speedup_mean = baseline.mean_ms / simplified.mean_ms;
        let speedup_median = baseline.median_ms / simplified.median_ms;
        simplified.speedup_vs_baseline = Some(speedup_mean);
        Ok(BenchPair {
            baseline,
            simplified,
            speedup_mean,
            speedup_median,
        })
    })
}

/// Uniform cloud in `[-1, 1]^3`, the benchmark input.
pub fn synthetic_bench_cloud(n_points: usize, seed: u64) -> Result<PointCloud> {
    if n_points == 0 {
        return Err(GamError::EmptyCloud);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = Array2::from_shape_fn((n_points, 3), |_| rng.random_range(-1.0..1.0));
    PointCloud::new(coords, None)
}
