//! Domain types and the numeric conventions shared by the whole crate.
//!
//! All internal arithmetic is `f64`; constructors reject non-finite values so
//! downstream modules can assume finiteness. Every type here is immutable
//! after construction.

use ndarray::{Array1, Array2, Array3, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GamError, Result};

/// A point cloud: `N x 3` coordinates plus an optional `N x C` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Array2<f64>,
    features: Option<Array2<f64>>,
}

impl PointCloud {
    /// Validates and constructs a cloud. Rejects empty clouds, non-finite
    /// values and feature matrices whose row count differs from `N`.
    pub fn new(coords: Array2<f64>, features: Option<Array2<f64>>) -> Result<Self> {
        if coords.nrows() == 0 {
            return Err(GamError::EmptyCloud);
        }
        if coords.ncols() != 3 {
            return Err(GamError::ShapeMismatch(format!(
                "coordinates must have 3 columns, got {}",
                coords.ncols()
            )));
        }
        if !coords.iter().all(|v| v.is_finite()) {
            return Err(GamError::NonFinite {
                context: "point coordinates",
            });
        }
        if let Some(f) = &features {
            if f.nrows() != coords.nrows() {
                return Err(GamError::ShapeMismatch(format!(
                    "feature rows ({}) do not match point count ({})",
                    f.nrows(),
                    coords.nrows()
                )));
            }
            if !f.iter().all(|v| v.is_finite()) {
                return Err(GamError::NonFinite {
                    context: "point features",
                });
            }
        }
        Ok(Self { coords, features })
    }

    /// Convenience constructor from a flat `[x, y, z, ...]` coordinate slice.
    pub fn from_coords(flat: &[f64]) -> Result<Self> {
        if flat.len() % 3 != 0 {
            return Err(GamError::ShapeMismatch(format!(
                "coordinate slice length {} is not a multiple of 3",
                flat.len()
            )));
        }
        let coords = Array2::from_shape_vec((flat.len() / 3, 3), flat.to_vec())
            .expect("shape checked above");
        Self::new(coords, None)
    }

    pub fn n_points(&self) -> usize {
        self.coords.nrows()
    }

    /// Feature channel count; 0 when the cloud carries no features.
    pub fn channels(&self) -> usize {
        self.features.as_ref().map_or(0, |f| f.ncols())
    }

    pub fn coords(&self) -> ArrayView2<'_, f64> {
        self.coords.view()
    }

    pub fn features(&self) -> Option<ArrayView2<'_, f64>> {
        self.features.as_ref().map(|f| f.view())
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        [self.coords[[i, 0]], self.coords[[i, 1]], self.coords[[i, 2]]]
    }
}

/// Centers and their fixed-size neighborhoods, as indices into a source cloud.
///
/// Rows may contain repeated indices: ball query pads short neighborhoods by
/// repeating the first found neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodIndex {
    center_ids: Vec<usize>,
    neighbor_ids: Array2<usize>,
}

impl NeighborhoodIndex {
    /// `n_points` is the size of the source cloud; all indices must be below it.
    pub fn new(
        center_ids: Vec<usize>,
        neighbor_ids: Array2<usize>,
        n_points: usize,
    ) -> Result<Self> {
        if center_ids.is_empty() {
            return Err(GamError::InvalidInput("no centers".into()));
        }
        if neighbor_ids.ncols() == 0 {
            return Err(GamError::InvalidInput("k must be at least 1".into()));
        }
        if neighbor_ids.nrows() != center_ids.len() {
            return Err(GamError::ShapeMismatch(format!(
                "{} centers but {} neighbor rows",
                center_ids.len(),
                neighbor_ids.nrows()
            )));
        }
        if let Some(&bad) = center_ids.iter().find(|&&i| i >= n_points) {
            return Err(GamError::InvalidInput(format!(
                "center index {bad} out of range for {n_points} points"
            )));
        }
        if let Some(&bad) = neighbor_ids.iter().find(|&&i| i >= n_points) {
            return Err(GamError::InvalidInput(format!(
                "neighbor index {bad} out of range for {n_points} points"
            )));
        }
        Ok(Self {
            center_ids,
            neighbor_ids,
        })
    }

    pub fn n_centers(&self) -> usize {
        self.center_ids.len()
    }

    pub fn k(&self) -> usize {
        self.neighbor_ids.ncols()
    }

    pub fn center_ids(&self) -> &[usize] {
        &self.center_ids
    }

    pub fn neighbor_ids(&self) -> &Array2<usize> {
        &self.neighbor_ids
    }
}

/// Per-edge geometry: relative vectors, Euclidean lengths and the scalar
/// gradient fed to the attention MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGeometry {
    rel: Array3<f64>,
    dist: Array2<f64>,
    grad: Array2<f64>,
}

impl EdgeGeometry {
    /// Validating constructor: `dist` must equal `‖rel‖₂` to within 1e-6
    /// relative, and every entry must be finite.
    pub fn new(rel: Array3<f64>, dist: Array2<f64>, grad: Array2<f64>) -> Result<Self> {
        let (ns, k, three) = rel.dim();
        if three != 3 {
            return Err(GamError::ShapeMismatch(format!(
                "relative vectors must have 3 components, got {three}"
            )));
        }
        if dist.dim() != (ns, k) || grad.dim() != (ns, k) {
            return Err(GamError::ShapeMismatch(
                "dist/grad shape does not match rel".into(),
            ));
        }
        if !rel.iter().all(|v| v.is_finite())
            || !dist.iter().all(|v| v.is_finite())
            || !grad.iter().all(|v| v.is_finite())
        {
            return Err(GamError::NonFinite {
                context: "edge geometry",
            });
        }
        for s in 0..ns {
            for j in 0..k {
                let d = dist[[s, j]];
                if d < 0.0 {
                    return Err(GamError::InvalidInput(format!(
                        "negative distance at edge ({s},{j})"
                    )));
                }
                let norm = (rel[[s, j, 0]].powi(2)
                    + rel[[s, j, 1]].powi(2)
                    + rel[[s, j, 2]].powi(2))
                .sqrt();
                if (d - norm).abs() > 1e-6 * norm.max(1.0) {
                    return Err(GamError::InvalidInput(format!(
                        "dist[{s},{j}] = {d} does not match ‖rel‖ = {norm}"
                    )));
                }
            }
        }
        Ok(Self { rel, dist, grad })
    }

    /// Skips the O(edges) validation pass; callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(
        rel: Array3<f64>,
        dist: Array2<f64>,
        grad: Array2<f64>,
    ) -> Self {
        debug_assert_eq!(rel.dim().0, dist.dim().0);
        debug_assert_eq!(rel.dim().1, dist.dim().1);
        debug_assert_eq!(dist.dim(), grad.dim());
        Self { rel, dist, grad }
    }

    pub fn n_centers(&self) -> usize {
        self.rel.dim().0
    }

    pub fn k(&self) -> usize {
        self.rel.dim().1
    }

    pub fn rel(&self) -> &Array3<f64> {
        &self.rel
    }

    pub fn dist(&self) -> &Array2<f64> {
        &self.dist
    }

    pub fn grad(&self) -> &Array2<f64> {
        &self.grad
    }
}

/// Hyper-parameters of the attention pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GamConfig {
    /// Balance weight between attention-weighted and plain features.
    pub lambda: f64,
    /// Ball-query radius, in cloud units.
    pub radius: f64,
    /// Number of sampled centers.
    pub n_centers: usize,
    /// Neighborhood size.
    pub k_neighbors: usize,
    /// Guard for the azimuth singularity and degenerate edges.
    pub epsilon: f64,
    /// Feed the edge distance into the attention MLP.
    pub use_distance: bool,
    /// Feed the scalar gradient into the attention MLP.
    pub use_gradient: bool,
    /// Hidden width of the attention MLP.
    pub mlp_hidden: usize,
    /// Seed for center sampling and parameter initialization.
    pub seed: u64,
    /// Divide distances by `radius` before they enter the attention MLP.
    pub normalize_distance: bool,
}

impl Default for GamConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            radius: 0.5,
            n_centers: 64,
            k_neighbors: 16,
            epsilon: 1e-8,
            use_distance: true,
            use_gradient: true,
            mlp_hidden: 16,
            seed: 0,
            normalize_distance: false,
        }
    }
}

impl GamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(GamError::InvalidInput("lambda must be >= 0".into()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(GamError::InvalidInput("radius must be > 0".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(GamError::InvalidInput("epsilon must be > 0".into()));
        }
        if self.n_centers == 0 || self.k_neighbors == 0 || self.mlp_hidden == 0 {
            return Err(GamError::InvalidInput(
                "n_centers, k_neighbors and mlp_hidden must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Input width of the attention MLP under the current ablation flags.
    /// With both signals disabled attention is bypassed; the width stays 1 so
    /// parameter shapes remain well defined.
    pub fn attention_input_dim(&self) -> usize {
        (usize::from(self.use_gradient) + usize::from(self.use_distance)).max(1)
    }

    /// True when at least one attention signal is enabled.
    pub fn attention_enabled(&self) -> bool {
        self.use_gradient || self.use_distance
    }
}

/// Trainable weights: attention MLP, default extractor and output MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct GamParams {
    /// First attention layer, `H x D_in`.
    pub attn_w1: Array2<f64>,
    pub attn_b1: Array1<f64>,
    /// Second attention layer, `1 x H`.
    pub attn_w2: Array2<f64>,
    pub attn_b2: f64,
    /// Default extractor weights, `C_out x phi_in`. The default extractor
    /// consumes `[f_nbr ; f_nbr - f_center]`, so `phi_in = 2C` there.
    pub phi_w: Array2<f64>,
    pub phi_b: Array1<f64>,
    /// Output MLP, `C_out x C_out`.
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

impl GamParams {
    pub fn c_out(&self) -> usize {
        self.phi_w.nrows()
    }

    pub fn phi_in(&self) -> usize {
        self.phi_w.ncols()
    }

    pub fn validate(&self, config: &GamConfig) -> Result<()> {
        let h = config.mlp_hidden;
        let d_in = config.attention_input_dim();
        if self.attn_w1.dim() != (h, d_in) {
            return Err(GamError::ShapeMismatch(format!(
                "attn_w1 is {:?}, expected ({h}, {d_in})",
                self.attn_w1.dim()
            )));
        }
        if self.attn_b1.len() != h || self.attn_w2.dim() != (1, h) {
            return Err(GamError::ShapeMismatch(
                "attention layer shapes are inconsistent".into(),
            ));
        }
        let c_out = self.c_out();
        if self.phi_b.len() != c_out
            || self.out_w.dim() != (c_out, c_out)
            || self.out_b.len() != c_out
        {
            return Err(GamError::ShapeMismatch(
                "phi/output layer shapes are inconsistent".into(),
            ));
        }
        let all_finite = self.attn_w1.iter().all(|v| v.is_finite())
            && self.attn_b1.iter().all(|v| v.is_finite())
            && self.attn_w2.iter().all(|v| v.is_finite())
            && self.attn_b2.is_finite()
            && self.phi_w.iter().all(|v| v.is_finite())
            && self.phi_b.iter().all(|v| v.is_finite())
            && self.out_w.iter().all(|v| v.is_finite())
            && self.out_b.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(GamError::NonFinite {
                context: "parameters",
            });
        }
        Ok(())
    }
}

/// Draws a weight matrix uniform in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`,
/// row-major draw order.
pub(crate) fn uniform_weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound))
}

/// Deterministic parameter initialization: weights uniform in
/// `±1/sqrt(fan_in)`, biases zero. `phi_in` is the input width of the
/// extractor (`2C` for the default extractor), `c_out` its output width.
pub fn init_params(config: &GamConfig, phi_in: usize, c_out: usize, seed: u64) -> GamParams {
    assert!(phi_in >= 1 && c_out >= 1, "channel counts must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = config.mlp_hidden;
    let d_in = config.attention_input_dim();
    let attn_w1 = uniform_weights(&mut rng, h, d_in);
    let attn_w2 = uniform_weights(&mut rng, 1, h);
    let phi_w = uniform_weights(&mut rng, c_out, phi_in);
    let out_w = uniform_weights(&mut rng, c_out, c_out);
    GamParams {
        attn_w1,
        attn_b1: Array1::zeros(h),
        attn_w2,
        attn_b2: 0.0,
        phi_w,
        phi_b: Array1::zeros(c_out),
        out_w,
        out_b: Array1::zeros(c_out),
    }
}
