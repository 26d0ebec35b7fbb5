//! The gradient attention module: sigmoid-MLP attention over per-edge
//! gradient and distance signals, a default local feature extractor, and the
//! balanced aggregation that blends attention-weighted features with plain
//! ones.
//!
//! Aggregation computes `OutMLP(phi * (lambda * a + 1) / (1 + lambda))`,
//! which is the per-edge-scalar factoring of
//! `OutMLP((lambda * (phi ⊙ a) + phi) / (1 + lambda))`. The factored form
//! makes the two balance identities exact in floating point: `lambda = 0`
//! and `a ≡ 1` both turn the factor into exactly 1.0.

use ndarray::{Array1, Array2, Array3, Axis};

use crate::error::{GamError, Result};
use crate::geometry::edge_geometry;
use crate::sampling::{ball_query, farthest_point_sample};
use crate::types::{EdgeGeometry, GamConfig, GamParams, NeighborhoodIndex, PointCloud};

/// Per-edge attention weights in the open interval (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    a: Array2<f64>,
}

impl AttentionMatrix {
    /// Validates the sigmoid range invariant.
    pub fn new(a: Array2<f64>) -> Result<Self> {
        if !a.iter().all(|&v| v.is_finite() && v > 0.0 && v < 1.0) {
            return Err(GamError::InvalidInput(
                "attention weights must lie strictly in (0, 1)".into(),
            ));
        }
        Ok(Self { a })
    }

    /// Forced `a ≡ 1`, used to bypass attention. Exempt from the open
    /// interval invariant: multiplying by exactly 1.0 reproduces the plain
    /// pipeline bit for bit.
    pub fn ones(n_centers: usize, k: usize) -> Self {
        Self {
            a: Array2::ones((n_centers, k)),
        }
    }

    /// Forced constant attention, for ablation and algebra tests.
    pub fn constant(n_centers: usize, k: usize, value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0 && value <= 1.0) {
            return Err(GamError::InvalidInput(
                "forced attention must lie in (0, 1]".into(),
            ));
        }
        Ok(Self {
            a: Array2::from_elem((n_centers, k), value),
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.a
    }
}

/// Gathered features of the neighborhood points, one `C`-vector per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborFeatures {
    f: Array3<f64>,
}

impl NeighborFeatures {
    pub fn gather(cloud: &PointCloud, nbrs: &NeighborhoodIndex) -> Result<Self> {
        let feats = cloud
            .features()
            .ok_or_else(|| GamError::InvalidInput("cloud has no features".into()))?;
        let (ns, k) = (nbrs.n_centers(), nbrs.k());
        let c = feats.ncols();
        let ids = nbrs.neighbor_ids();
        let mut f = Array3::zeros((ns, k, c));
        for s in 0..ns {
            for j in 0..k {
                let p = ids[[s, j]];
                for ch in 0..c {
                    f[[s, j, ch]] = feats[[p, ch]];
                }
            }
        }
        Ok(Self { f })
    }

    pub fn from_array(f: Array3<f64>) -> Self {
        Self { f }
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.f
    }

    pub fn channels(&self) -> usize {
        self.f.dim().2
    }
}

/// Pre-pooling per-edge output features plus the channelwise max over each
/// neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFeatures {
    f_out: Array3<f64>,
    pooled: Array2<f64>,
}

impl OutputFeatures {
    pub fn f_out(&self) -> &Array3<f64> {
        &self.f_out
    }

    pub fn pooled(&self) -> &Array2<f64> {
        &self.pooled
    }
}

#[inline]
fn relu_inplace(x: &mut Array3<f64>) {
    x.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
}

/// Shared affine map over the last axis: `y[s,j,:] = W x[s,j,:] + b`.
/// Fixed-order scalar kernel, so results are identical on every platform.
pub(crate) fn affine_per_edge(
    x: &Array3<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
) -> Result<Array3<f64>> {
    let (ns, k, d) = x.dim();
    if w.ncols() != d || w.nrows() != b.len() {
        return Err(GamError::ShapeMismatch(format!(
            "affine expects weight ?x{d} with matching bias, got {:?} and {}",
            w.dim(),
            b.len()
        )));
    }
    let o = w.nrows();
    let x_std = x.as_standard_layout();
    let w_std = w.as_standard_layout();
    let y = crate::linalg::affine_xwt(
        x_std.as_slice().expect("standard layout"),
        ns * k,
        d,
        w_std.as_slice().expect("standard layout"),
        o,
        b.as_slice().expect("bias is contiguous"),
    );
    Ok(Array3::from_shape_vec((ns, k, o), y).expect("matching element count"))
}

/// Attention MLP input: the enabled signals per edge, gradient first.
pub fn attention_inputs(edges: &EdgeGeometry, config: &GamConfig) -> Result<Array3<f64>> {
    if !config.attention_enabled() {
        return Err(GamError::InvalidInput(
            "both attention signals are disabled".into(),
        ));
    }
    let (ns, k) = edges.grad().dim();
    let d_in = config.attention_input_dim();
    let mut v = Array3::zeros((ns, k, d_in));
    let mut ch = 0;
    if config.use_gradient {
        v.index_axis_mut(Axis(2), ch).assign(edges.grad());
        ch += 1;
    }
    if config.use_distance {
        if config.normalize_distance {
            v.index_axis_mut(Axis(2), ch)
                .assign(&(edges.dist() / config.radius));
        } else {
            v.index_axis_mut(Axis(2), ch).assign(edges.dist());
        }
    }
    Ok(v)
}

// Sigmoid saturates to exactly 0.0 or 1.0 for |x| above ~37; clamp back into
// the open interval so the range invariant survives extreme logits.
#[inline]
pub(crate) fn open_sigmoid(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Attention weights per edge: `sigmoid(W2 relu(W1 [g; d] + b1) + b2)`.
pub fn attention_weights(
    edges: &EdgeGeometry,
    params: &GamParams,
    config: &GamConfig,
) -> Result<AttentionMatrix> {
    params.validate(config)?;
    let v = attention_inputs(edges, config)?;
    let mut hidden = affine_per_edge(&v, &params.attn_w1, &params.attn_b1)?;
    relu_inplace(&mut hidden);
    let b2 = Array1::from_elem(1, params.attn_b2);
    let logits = affine_per_edge(&hidden, &params.attn_w2, &b2)?;
    let a = logits.index_axis(Axis(2), 0).mapv(open_sigmoid);
    Ok(AttentionMatrix { a })
}

/// The concatenated `[f_nbr ; f_nbr - f_center]` extractor input.
pub fn phi_inputs(
    features: &NeighborFeatures,
    center_features: &Array2<f64>,
) -> Result<Array3<f64>> {
    let (ns, k, c) = features.values().dim();
    if center_features.dim() != (ns, c) {
        return Err(GamError::ShapeMismatch(format!(
            "center features are {:?}, expected ({ns}, {c})",
            center_features.dim()
        )));
    }
    let mut input = Array3::zeros((ns, k, 2 * c));
    let f = features.values();
    for s in 0..ns {
        for j in 0..k {
            for ch in 0..c {
                let fv = f[[s, j, ch]];
                input[[s, j, ch]] = fv;
                input[[s, j, c + ch]] = fv - center_features[[s, ch]];
            }
        }
    }
    Ok(input)
}

/// Default local feature extractor: shared affine map over
/// `[f_nbr ; f_nbr - f_center]` per edge, then `max(0, ·)`. Any function with
/// this signature can replace it in [`gam_forward_with_extractor`].
pub fn default_phi(
    features: &NeighborFeatures,
    center_features: &Array2<f64>,
    params: &GamParams,
) -> Result<Array3<f64>> {
    let input = phi_inputs(features, center_features)?;
    let mut out = affine_per_edge(&input, &params.phi_w, &params.phi_b)?;
    relu_inplace(&mut out);
    Ok(out)
}

/// Balanced aggregation: multiplies extractor outputs by the per-edge factor
/// `(lambda * a + 1) / (1 + lambda)`, applies the output MLP, and max-pools
/// over the neighborhood.
pub fn aggregate(
    phi_out: &Array3<f64>,
    attn: &AttentionMatrix,
    params: &GamParams,
    lambda: f64,
) -> Result<OutputFeatures> {
    let (ns, k, c_out) = phi_out.dim();
    if attn.values().dim() != (ns, k) {
        return Err(GamError::ShapeMismatch(format!(
            "attention is {:?}, expected ({ns}, {k})",
            attn.values().dim()
        )));
    }
    if params.out_w.ncols() != c_out {
        return Err(GamError::ShapeMismatch(format!(
            "output MLP expects {} channels, extractor produced {c_out}",
            params.out_w.ncols()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(GamError::InvalidInput("lambda must be >= 0".into()));
    }
    let factor = attn.values().mapv(|a| (lambda * a + 1.0) / (1.0 + lambda));
    let f_pre = phi_out * &factor.insert_axis(Axis(2));
    let mut f_out = affine_per_edge(&f_pre, &params.out_w, &params.out_b)?;
    relu_inplace(&mut f_out);
    let pooled = f_out.fold_axis(Axis(1), f64::NEG_INFINITY, |acc, &v| acc.max(v));
    Ok(OutputFeatures { f_out, pooled })
}

/// Geometry and gathered features for one forward pass. Everything here is
/// independent of the trainable parameters, so callers that run many passes
/// over the same cloud (training loops) compute it once.
#[derive(Debug, Clone)]
pub struct GamContext {
    pub centers: Vec<usize>,
    pub nbrs: NeighborhoodIndex,
    pub edges: EdgeGeometry,
    pub neighbor_features: NeighborFeatures,
    pub center_features: Array2<f64>,
}

/// Sampling, neighborhood search, edge geometry and feature gathering.
pub fn prepare(cloud: &PointCloud, config: &GamConfig) -> Result<GamContext> {
    config.validate()?;
    let centers = farthest_point_sample(cloud, config.n_centers, config.seed)?;
    let nbrs = ball_query(cloud, &centers, config.radius, config.k_neighbors)?;
    let edges = edge_geometry(cloud, &nbrs, config.epsilon)?;
    let neighbor_features = NeighborFeatures::gather(cloud, &nbrs)?;
    let feats = cloud.features().expect("gather checked features");
    let c = feats.ncols();
    let mut center_features = Array2::zeros((centers.len(), c));
    for (s, &idx) in centers.iter().enumerate() {
        for ch in 0..c {
            center_features[[s, ch]] = feats[[idx, ch]];
        }
    }
    Ok(GamContext {
        centers,
        nbrs,
        edges,
        neighbor_features,
        center_features,
    })
}

/// Attention, extraction and aggregation over a prepared context.
pub fn forward_prepared<F>(
    ctx: &GamContext,
    config: &GamConfig,
    params: &GamParams,
    extractor: F,
) -> Result<OutputFeatures>
where
    F: Fn(&NeighborFeatures, &Array2<f64>, &GamParams) -> Result<Array3<f64>>,
{
    let attn = if config.attention_enabled() {
        attention_weights(&ctx.edges, params, config)?
    } else {
        AttentionMatrix::ones(ctx.nbrs.n_centers(), ctx.nbrs.k())
    };
    let phi_out = extractor(&ctx.neighbor_features, &ctx.center_features, params)?;
    aggregate(&phi_out, &attn, params, config.lambda)
}

/// The full pipeline: sample centers, search neighborhoods, build edge
/// geometry, score attention, extract and aggregate.
pub fn gam_forward(
    cloud: &PointCloud,
    config: &GamConfig,
    params: &GamParams,
) -> Result<OutputFeatures> {
    gam_forward_with_extractor(cloud, config, params, default_phi)
}

/// Same pipeline with a caller-supplied local feature extractor.
pub fn gam_forward_with_extractor<F>(
    cloud: &PointCloud,
    config: &GamConfig,
    params: &GamParams,
    extractor: F,
) -> Result<OutputFeatures>
where
    F: Fn(&NeighborFeatures, &Array2<f64>, &GamParams) -> Result<Array3<f64>>,
{
    let ctx = prepare(cloud, config)?;
    forward_prepared(&ctx, config, params, extractor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::init_params;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_edges(offsets: &[[f64; 3]]) -> EdgeGeometry {
        let mut flat = vec![0.0, 0.0, 0.0];
        for o in offsets {
            flat.extend_from_slice(o);
        }
        let cloud = PointCloud::from_coords(&flat).unwrap();
        let ids = ndarray::Array2::from_shape_vec(
            (1, offsets.len()),
            (1..=offsets.len()).collect::<Vec<_>>(),
        )
        .unwrap();
        let nbrs = NeighborhoodIndex::new(vec![0], ids, cloud.n_points()).unwrap();
        edge_geometry(&cloud, &nbrs, 1e-8).unwrap()
    }

    fn zero_params(config: &GamConfig, phi_in: usize, c_out: usize) -> GamParams {
        GamParams {
            attn_w1: Array2::zeros((config.mlp_hidden, config.attention_input_dim())),
            attn_b1: Array1::zeros(config.mlp_hidden),
            attn_w2: Array2::zeros((1, config.mlp_hidden)),
            attn_b2: 0.0,
            phi_w: Array2::zeros((c_out, phi_in)),
            phi_b: Array1::zeros(c_out),
            out_w: Array2::zeros((c_out, c_out)),
            out_b: Array1::zeros(c_out),
        }
    }

    #[test]
    fn zero_network_gives_half_attention() {
        let config = GamConfig::default();
        let edges = toy_edges(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.5], [0.2, 0.3, -0.1]]);
        let params = zero_params(&config, 2, 4);
        let attn = attention_weights(&edges, &params, &config).unwrap();
        assert!(attn.values().iter().all(|&a| a == 0.5));
    }

    #[test]
    fn distance_ablation_ignores_distance() {
        let config = GamConfig {
            use_distance: false,
            ..GamConfig::default()
        };
        let params = init_params(&config, 2, 4, 3);
        let offsets = [[1.0, 0.4, 0.3], [0.0, 1.0, 0.5], [-0.4, 0.3, -0.1]];
        // scaling all offsets changes only distances, not gradients
        let scaled: Vec<[f64; 3]> = offsets
            .iter()
            .map(|o| [5.0 * o[0], 5.0 * o[1], 5.0 * o[2]])
            .collect();
        let a1 = attention_weights(&toy_edges(&offsets), &params, &config).unwrap();
        let a2 = attention_weights(&toy_edges(&scaled), &params, &config).unwrap();
        for (x, y) in a1.values().iter().zip(a2.values().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_ablation_ignores_gradient() {
        let config = GamConfig {
            use_gradient: false,
            ..GamConfig::default()
        };
        let params = init_params(&config, 2, 4, 3);
        // same distance, different gradient
        let a1 = attention_weights(&toy_edges(&[[1.0, 0.0, 0.0]]), &params, &config).unwrap();
        let a2 =
            attention_weights(&toy_edges(&[[0.5, 0.5, 0.5f64.sqrt()]]), &params, &config).unwrap();
        assert!((a1.values()[[0, 0]] - a2.values()[[0, 0]]).abs() < 1e-12);
    }

    /// Standalone scalar re-implementation of the two-layer attention MLP.
    fn attention_oracle(g: f64, d: f64, params: &GamParams) -> f64 {
        let h = params.attn_w1.nrows();
        let mut logit = params.attn_b2;
        for i in 0..h {
            let pre = params.attn_w1[[i, 0]] * g + params.attn_w1[[i, 1]] * d + params.attn_b1[i];
            let act = if pre > 0.0 { pre } else { 0.0 };
            logit += params.attn_w2[[0, i]] * act;
        }
        1.0 / (1.0 + (-logit).exp())
    }

    #[test]
    fn attention_matches_scalar_oracle() {
        let config = GamConfig::default();
        let params = init_params(&config, 2, 4, 7);
        // edge with gradient 1 and distance 2
        let edges = toy_edges(&[[1.0, 1.0, 2.0f64.sqrt()]]);
        assert!((edges.grad()[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((edges.dist()[[0, 0]] - 2.0).abs() < 1e-12);
        let attn = attention_weights(&edges, &params, &config).unwrap();
        let expect = attention_oracle(edges.grad()[[0, 0]], edges.dist()[[0, 0]], &params);
        assert!((attn.values()[[0, 0]] - expect).abs() < 1e-12);
    }

    #[test]
    fn attention_stays_in_open_interval() {
        let config = GamConfig::default();
        let mut params = init_params(&config, 2, 4, 0);
        // enormous logit saturates the sigmoid; the clamp keeps it below 1
        params.attn_b2 = 1.0e4;
        let edges = toy_edges(&[[1.0, 1.0, 2.0f64.sqrt()]]);
        let attn = attention_weights(&edges, &params, &config).unwrap();
        let a = attn.values()[[0, 0]];
        assert!(a > 0.0 && a < 1.0);
        AttentionMatrix::new(attn.values().clone()).unwrap();
    }

    #[test]
    fn normalize_distance_divides_by_radius() {
        let config = GamConfig {
            use_gradient: false,
            normalize_distance: true,
            radius: 2.0,
            ..GamConfig::default()
        };
        let edges = toy_edges(&[[1.0, 0.0, 0.0]]);
        let v = attention_inputs(&edges, &config).unwrap();
        assert_eq!(v[[0, 0, 0]], 0.5);
    }

    #[test]
    fn phi_selector_weights_pass_neighbor_features() {
        let c = 3;
        let config = GamConfig::default();
        let mut params = zero_params(&config, 2 * c, c);
        for i in 0..c {
            params.phi_w[[i, i]] = 1.0;
        }
        let f = Array3::from_shape_fn((2, 2, c), |(s, j, ch)| {
            (s as f64) - (j as f64) * 0.5 + ch as f64
        });
        let nbr = NeighborFeatures::from_array(f.clone());
        let centers = Array2::from_elem((2, c), 0.3);
        let out = default_phi(&nbr, &centers, &params).unwrap();
        for (&v, &orig) in out.iter().zip(f.iter()) {
            assert_eq!(v, orig.max(0.0));
        }
    }

    #[test]
    fn phi_difference_block_vanishes_when_features_match() {
        let c = 2;
        let config = GamConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = zero_params(&config, 2 * c, 3);
        params.phi_w.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        params.phi_b.mapv_inplace(|_| rng.random_range(-0.2..0.2));

        let centers = array![[0.5, -0.25]];
        let f = Array3::from_shape_fn((1, 3, c), |(_, _, ch)| centers[[0, ch]]);
        let nbr = NeighborFeatures::from_array(f);
        let out = default_phi(&nbr, &centers, &params).unwrap();

        // difference block is zero, so only the first-block weights act
        for j in 0..3 {
            for o in 0..3 {
                let mut expect = params.phi_b[o];
                for ch in 0..c {
                    expect += params.phi_w[[o, ch]] * centers[[0, ch]];
                }
                assert!((out[[0, j, o]] - expect.max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phi_matches_hand_matrix_multiply() {
        let c = 2;
        let config = GamConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = zero_params(&config, 2 * c, 2);
        params.phi_w.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        params.phi_b.mapv_inplace(|_| rng.random_range(-0.5..0.5));

        let nbr = NeighborFeatures::from_array(
            Array3::from_shape_vec((1, 2, c), vec![0.2, -0.9, 1.4, 0.3]).unwrap(),
        );
        let centers = array![[0.1, 0.4]];
        let out = default_phi(&nbr, &centers, &params).unwrap();
        for j in 0..2 {
            let x = [
                nbr.values()[[0, j, 0]],
                nbr.values()[[0, j, 1]],
                nbr.values()[[0, j, 0]] - centers[[0, 0]],
                nbr.values()[[0, j, 1]] - centers[[0, 1]],
            ];
            for o in 0..2 {
                let mut expect = params.phi_b[o];
                for (i, xi) in x.iter().enumerate() {
                    expect += params.phi_w[[o, i]] * xi;
                }
                assert!((out[[0, j, o]] - expect.max(0.0)).abs() < 1e-12);
            }
        }
    }

    fn random_phi(ns: usize, k: usize, c: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn((ns, k, c), |_| rng.random_range(0.05..1.0))
    }

    fn identity_out_params(c_out: usize) -> GamParams {
        let config = GamConfig::default();
        let mut p = zero_params(&config, 2, c_out);
        for i in 0..c_out {
            p.out_w[[i, i]] = 1.0;
        }
        p
    }

    #[test]
    fn lambda_zero_reproduces_out_mlp_bitwise() {
        let params = init_params(&GamConfig::default(), 4, 5, 2);
        let phi = random_phi(3, 4, 5, 11);
        let attn = AttentionMatrix::constant(3, 4, 0.37).unwrap();
        let with_attention = aggregate(&phi, &attn, &params, 0.0).unwrap();
        let plain = {
            let mut f = affine_per_edge(&phi, &params.out_w, &params.out_b).unwrap();
            relu_inplace(&mut f);
            f
        };
        assert_eq!(with_attention.f_out(), &plain);
    }

    #[test]
    fn forced_unit_attention_is_lambda_independent_bitwise() {
        let params = init_params(&GamConfig::default(), 4, 5, 2);
        let phi = random_phi(3, 4, 5, 12);
        let ones = AttentionMatrix::ones(3, 4);
        let base = aggregate(&phi, &ones, &params, 0.0).unwrap();
        for lambda in [0.25, 1.0, 3.5, 100.0] {
            let out = aggregate(&phi, &ones, &params, lambda).unwrap();
            assert_eq!(out.f_out(), base.f_out());
            assert_eq!(out.pooled(), base.pooled());
        }
    }

    #[test]
    fn half_attention_unit_lambda_scales_by_three_quarters() {
        let c_out = 4;
        let params = identity_out_params(c_out);
        let phi = random_phi(2, 3, c_out, 13);
        let attn = AttentionMatrix::constant(2, 3, 0.5).unwrap();
        let out = aggregate(&phi, &attn, &params, 1.0).unwrap();
        for (o, p) in out.f_out().iter().zip(phi.iter()) {
            assert!((o - 0.75 * p).abs() < 1e-15);
        }
    }

    #[test]
    fn pooled_is_max_over_neighborhood() {
        let params = identity_out_params(2);
        let phi = random_phi(2, 5, 2, 14);
        let attn = AttentionMatrix::ones(2, 5);
        let out = aggregate(&phi, &attn, &params, 1.0).unwrap();
        for s in 0..2 {
            for c in 0..2 {
                let m = (0..5)
                    .map(|j| out.f_out()[[s, j, c]])
                    .fold(f64::MIN, f64::max);
                assert_eq!(out.pooled()[[s, c]], m);
            }
        }
    }

    #[test]
    fn raising_attention_does_not_decrease_output() {
        let c_out = 3;
        let params = identity_out_params(c_out);
        let phi = random_phi(1, 2, c_out, 15);
        let low = AttentionMatrix::constant(1, 2, 0.3).unwrap();
        let high = AttentionMatrix::constant(1, 2, 0.8).unwrap();
        let out_low = aggregate(&phi, &low, &params, 2.0).unwrap();
        let out_high = aggregate(&phi, &high, &params, 2.0).unwrap();
        for (lo, hi) in out_low.f_out().iter().zip(out_high.f_out().iter()) {
            assert!(hi >= lo);
        }
    }

    fn random_feature_cloud(n: usize, c: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let feats = Array2::from_shape_fn((n, c), |_| rng.random_range(-1.0..1.0));
        PointCloud::new(coords, Some(feats)).unwrap()
    }

    fn toy_config() -> GamConfig {
        GamConfig {
            n_centers: 4,
            k_neighbors: 3,
            radius: 1.2,
            ..GamConfig::default()
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cloud = random_feature_cloud(16, 3, 20);
        let config = toy_config();
        let params = init_params(&config, 6, 8, config.seed);
        let a = gam_forward(&cloud, &config, &params).unwrap();
        let b = gam_forward(&cloud, &config, &params).unwrap();
        assert_eq!(a.f_out(), b.f_out());
        assert_eq!(a.pooled(), b.pooled());
    }

    #[test]
    fn attention_bypass_equals_plain_pipeline() {
        let cloud = random_feature_cloud(16, 3, 21);
        let config = GamConfig {
            use_distance: false,
            use_gradient: false,
            ..toy_config()
        };
        let params = init_params(&toy_config(), 6, 8, 5);
        let bypass = gam_forward(&cloud, &config, &params).unwrap();

        // plain pipeline: extractor then output MLP, no attention term
        let ctx = prepare(&cloud, &config).unwrap();
        let phi = default_phi(&ctx.neighbor_features, &ctx.center_features, &params).unwrap();
        let mut plain = affine_per_edge(&phi, &params.out_w, &params.out_b).unwrap();
        relu_inplace(&mut plain);
        assert_eq!(bypass.f_out(), &plain);
    }

    #[test]
    fn translation_leaves_outputs_unchanged() {
        let cloud = random_feature_cloud(16, 3, 22);
        let config = toy_config();
        let params = init_params(&config, 6, 8, 1);
        let moved = {
            let mut coords = cloud.coords().to_owned();
            coords.rows_mut().into_iter().for_each(|mut r| {
                r[0] += 3.0;
                r[1] -= 2.0;
                r[2] += 0.5;
            });
            PointCloud::new(coords, Some(cloud.features().unwrap().to_owned())).unwrap()
        };
        let a = gam_forward(&cloud, &config, &params).unwrap();
        let b = gam_forward(&moved, &config, &params).unwrap();
        for (x, y) in a.f_out().iter().zip(b.f_out().iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn scaling_without_distance_signal_leaves_outputs_unchanged() {
        let cloud = random_feature_cloud(16, 3, 23);
        let config = GamConfig {
            use_distance: false,
            ..toy_config()
        };
        let params = init_params(&config, 6, 8, 2);
        let c = 2.5;
        let scaled_cloud = PointCloud::new(
            cloud.coords().to_owned() * c,
            Some(cloud.features().unwrap().to_owned()),
        )
        .unwrap();
        let scaled_config = GamConfig {
            radius: config.radius * c,
            ..config.clone()
        };
        let a = gam_forward(&cloud, &config, &params).unwrap();
        let b = gam_forward(&scaled_cloud, &scaled_config, &params).unwrap();
        for (x, y) in a.f_out().iter().zip(b.f_out().iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    /// Step-by-step scalar implementation of the whole pipeline, written
    /// against the printed aggregation formula rather than the factored one.
    fn pipeline_oracle(
        cloud: &PointCloud,
        config: &GamConfig,
        params: &GamParams,
    ) -> Vec<Vec<Vec<f64>>> {
        let centers =
            crate::sampling::oracle::fps_reference(cloud, config.n_centers, config.seed);
        let rows = crate::sampling::oracle::ball_reference(
            cloud,
            &centers,
            config.radius,
            config.k_neighbors,
        );
        let coords = cloud.coords();
        let feats = cloud.features().unwrap();
        let c = feats.ncols();
        let c_out = params.c_out();
        let mut result = Vec::new();
        for (s, &ci) in centers.iter().enumerate() {
            let mut per_center = Vec::new();
            for &qi in &rows[s] {
                let x = coords[[qi, 0]] - coords[[ci, 0]];
                let y = coords[[qi, 1]] - coords[[ci, 1]];
                let z = coords[[qi, 2]] - coords[[ci, 2]];
                let d = (x * x + y * y + z * z).sqrt();
                let rho = (x * x + y * y).sqrt();
                let g = if rho <= config.epsilon || d <= config.epsilon {
                    0.0
                } else {
                    (z / d) * ((x + y) / rho)
                };
                let a = attention_oracle(g, d, params);
                // extractor on [f_nbr ; f_nbr - f_center]
                let mut input = Vec::with_capacity(2 * c);
                for ch in 0..c {
                    input.push(feats[[qi, ch]]);
                }
                for ch in 0..c {
                    input.push(feats[[qi, ch]] - feats[[ci, ch]]);
                }
                let mut phi = vec![0.0; c_out];
                for o in 0..c_out {
                    let mut v = params.phi_b[o];
                    for (i, xi) in input.iter().enumerate() {
                        v += params.phi_w[[o, i]] * xi;
                    }
                    phi[o] = v.max(0.0);
                }
                // printed form of the balanced blend
                let lambda = config.lambda;
                let blended: Vec<f64> = phi
                    .iter()
                    .map(|&p| (lambda * (p * a) + p) / (1.0 + lambda))
                    .collect();
                let mut out = vec![0.0; c_out];
                for o in 0..c_out {
                    let mut v = params.out_b[o];
                    for (i, bi) in blended.iter().enumerate() {
                        v += params.out_w[[o, i]] * bi;
                    }
                    out[o] = v.max(0.0);
                }
                per_center.push(out);
            }
            result.push(per_center);
        }
        result
    }

    #[test]
    fn forward_matches_end_to_end_scalar_oracle() {
        let cloud = random_feature_cloud(8, 2, 30);
        let config = GamConfig {
            n_centers: 2,
            k_neighbors: 3,
            radius: 1.5,
            ..GamConfig::default()
        };
        let params = init_params(&config, 4, 5, 17);
        let out = gam_forward(&cloud, &config, &params).unwrap();
        let oracle = pipeline_oracle(&cloud, &config, &params);
        for s in 0..2 {
            for j in 0..3 {
                for o in 0..5 {
                    assert!(
                        (out.f_out()[[s, j, o]] - oracle[s][j][o]).abs() < 1e-12,
                        "mismatch at ({s},{j},{o}): {} vs {}",
                        out.f_out()[[s, j, o]],
                        oracle[s][j][o]
                    );
                }
            }
        }
    }

    #[test]
    fn attention_range_on_random_clouds() {
        for seed in 0..5 {
            let cloud = random_feature_cloud(24, 3, 40 + seed);
            let config = toy_config();
            let params = init_params(&config, 6, 8, seed);
            let ctx = prepare(&cloud, &config).unwrap();
            let attn = attention_weights(&ctx.edges, &params, &config).unwrap();
            assert!(attn.values().iter().all(|&a| a > 0.0 && a < 1.0));
        }
    }
}
